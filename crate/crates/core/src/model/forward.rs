use super::{layer_name, ModelConfig, LM_HEAD, RMS_EPS, VALUE_HEAD_B, VALUE_HEAD_W};
use crate::error::Result;
use crate::params::BoundParams;
use crate::tensor::{Tape, Var};

/// Final normalized hidden states, one row per position (`len × d_model`).
pub fn forward_hidden(
    tape: &mut Tape,
    p: &BoundParams<'_>,
    cfg: &ModelConfig,
    ids: &[usize],
) -> Result<Var> {
    cfg.check_ids(ids)?;
    let n = ids.len();
    let positions: Vec<usize> = (0..n).collect();
    let tok = tape.embedding(p.var("tok_emb")?, ids)?;
    let pos = tape.embedding(p.var("pos_emb")?, &positions)?;
    let mut x = tape.add(tok, pos)?;
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.n_layers {
        let h = tape.rms_norm(x, p.var(&layer_name(l, "attn_norm"))?, RMS_EPS)?;
        let q = tape.matmul(h, p.var(&layer_name(l, "wq"))?)?;
        let k = tape.matmul(h, p.var(&layer_name(l, "wk"))?)?;
        let v = tape.matmul(h, p.var(&layer_name(l, "wv"))?)?;
        let mut heads = Vec::with_capacity(cfg.n_heads);
        for hd in 0..cfg.n_heads {
            let qh = tape.slice_cols(q, hd * dh, dh)?;
            let kh = tape.slice_cols(k, hd * dh, dh)?;
            let vh = tape.slice_cols(v, hd * dh, dh)?;
            let s = tape.matmul_nt(qh, kh)?;
            let s = tape.scale(s, scale);
            let a = tape.causal_softmax(s)?;
            heads.push(tape.matmul(a, vh)?);
        }
        let o = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let o = tape.matmul(o, p.var(&layer_name(l, "wo"))?)?;
        x = tape.add(x, o)?;

        let h = tape.rms_norm(x, p.var(&layer_name(l, "mlp_norm"))?, RMS_EPS)?;
        let f = tape.matmul(h, p.var(&layer_name(l, "w_in"))?)?;
        let f = tape.add_bias(f, p.var(&layer_name(l, "b_in"))?)?;
        let f = tape.silu(f);
        let f = tape.matmul(f, p.var(&layer_name(l, "w_out"))?)?;
        let f = tape.add_bias(f, p.var(&layer_name(l, "b_out"))?)?;
        x = tape.add(x, f)?;
    }
    Ok(tape.rms_norm(x, p.var("final_norm")?, RMS_EPS)?)
}

pub fn logits_from_hidden(tape: &mut Tape, p: &BoundParams<'_>, hidden: Var) -> Result<Var> {
    Ok(tape.matmul(hidden, p.var(LM_HEAD)?)?)
}

/// `len × 1` column of per-position scalar outputs.
pub fn values_from_hidden(tape: &mut Tape, p: &BoundParams<'_>, hidden: Var) -> Result<Var> {
    let v = tape.matmul(hidden, p.var(VALUE_HEAD_W)?)?;
    Ok(tape.add_bias(v, p.var(VALUE_HEAD_B)?)?)
}

/// Next-token logits at every position (`len × vocab_size`).
pub fn forward_logits(
    tape: &mut Tape,
    p: &BoundParams<'_>,
    cfg: &ModelConfig,
    ids: &[usize],
) -> Result<Var> {
    let h = forward_hidden(tape, p, cfg, ids)?;
    logits_from_hidden(tape, p, h)
}

/// Scalar head output at every position (`len × 1`).
pub fn forward_value(
    tape: &mut Tape,
    p: &BoundParams<'_>,
    cfg: &ModelConfig,
    ids: &[usize],
) -> Result<Var> {
    let h = forward_hidden(tape, p, cfg, ids)?;
    values_from_hidden(tape, p, h)
}
