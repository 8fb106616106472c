//! Tape-free incremental inference with a key/value cache.
//!
//! Uses the same kernels and summation order as the taped forward pass, so
//! hidden states agree with it bit for bit.

use super::{layer_name, ModelConfig, LM_HEAD, RMS_EPS, VALUE_HEAD_B, VALUE_HEAD_W};
use crate::error::{Error, Result};
use crate::params::ParameterSet;
use crate::tensor::{dot, gemm_nn};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Lm,
    Value,
}

struct LayerRefs<'p> {
    attn_norm: &'p [f64],
    wq: &'p [f64],
    wk: &'p [f64],
    wv: &'p [f64],
    wo: &'p [f64],
    mlp_norm: &'p [f64],
    w_in: &'p [f64],
    b_in: &'p [f64],
    w_out: &'p [f64],
    b_out: &'p [f64],
}

pub struct Decoder<'p> {
    cfg: &'p ModelConfig,
    tok_emb: &'p [f64],
    pos_emb: &'p [f64],
    layers: Vec<LayerRefs<'p>>,
    final_norm: &'p [f64],
    lm_head: Option<&'p [f64]>,
    value_head: Option<(&'p [f64], f64)>,
    keys: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    len: usize,
}

fn rms_norm_row(x: &[f64], g: &[f64], out: &mut [f64]) {
    let n = x.len();
    let ms = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let r = 1.0 / (ms + RMS_EPS).sqrt();
    for j in 0..n {
        out[j] = x[j] * r * g[j];
    }
}

fn silu(v: f64) -> f64 {
    v * crate::tensor::sigmoid(v)
}

impl<'p> Decoder<'p> {
    pub fn new(params: &'p ParameterSet, cfg: &'p ModelConfig) -> Result<Self> {
        let get = |name: &str| -> Result<&'p [f64]> {
            params
                .get(name)
                .map(|t| t.data())
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
        };
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            layers.push(LayerRefs {
                attn_norm: get(&layer_name(l, "attn_norm"))?,
                wq: get(&layer_name(l, "wq"))?,
                wk: get(&layer_name(l, "wk"))?,
                wv: get(&layer_name(l, "wv"))?,
                wo: get(&layer_name(l, "wo"))?,
                mlp_norm: get(&layer_name(l, "mlp_norm"))?,
                w_in: get(&layer_name(l, "w_in"))?,
                b_in: get(&layer_name(l, "b_in"))?,
                w_out: get(&layer_name(l, "w_out"))?,
                b_out: get(&layer_name(l, "b_out"))?,
            });
        }
        let value_head = match (params.get(VALUE_HEAD_W), params.get(VALUE_HEAD_B)) {
            (Some(w), Some(b)) => Some((w.data(), b.item())),
            _ => None,
        };
        Ok(Self {
            cfg,
            tok_emb: get("tok_emb")?,
            pos_emb: get("pos_emb")?,
            layers,
            final_norm: get("final_norm")?,
            lm_head: params.get(LM_HEAD).map(|t| t.data()),
            value_head,
            keys: vec![Vec::new(); cfg.n_layers],
            values: vec![Vec::new(); cfg.n_layers],
            len: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn reset(&mut self) {
        for k in self.keys.iter_mut().chain(self.values.iter_mut()) {
            k.clear();
        }
        self.len = 0;
    }

    /// Feeds one token and returns the final normalized hidden state at its position.
    pub fn step(&mut self, token: usize) -> Result<Vec<f64>> {
        let cfg = self.cfg;
        if self.len >= cfg.max_context {
            return Err(Error::Data(format!(
                "sequence exceeds max_context {}",
                cfg.max_context
            )));
        }
        if token >= cfg.vocab_size {
            return Err(Error::Data(format!(
                "token id {token} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let pos = self.len;
        let mut x: Vec<f64> = self.tok_emb[token * d..(token + 1) * d]
            .iter()
            .zip(&self.pos_emb[pos * d..(pos + 1) * d])
            .map(|(a, b)| a + b)
            .collect();
        let mut h = vec![0.0; d];
        let mut q = vec![0.0; d];
        let mut k = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut att = vec![0.0; d];
        let mut o = vec![0.0; d];
        let mut f = vec![0.0; cfg.d_ff];
        let n = pos + 1;
        let mut w = vec![0.0; n];
        for (l, lr) in self.layers.iter().enumerate() {
            rms_norm_row(&x, lr.attn_norm, &mut h);
            gemm_nn(&h, lr.wq, &mut q, 1, d, d, false);
            gemm_nn(&h, lr.wk, &mut k, 1, d, d, false);
            gemm_nn(&h, lr.wv, &mut v, 1, d, d, false);
            self.keys[l].extend_from_slice(&k);
            self.values[l].extend_from_slice(&v);
            let keys = &self.keys[l];
            let vals = &self.values[l];
            for hd in 0..cfg.n_heads {
                let qh = &q[hd * dh..(hd + 1) * dh];
                for j in 0..n {
                    w[j] = dot(qh, &keys[j * d + hd * dh..j * d + (hd + 1) * dh]) * scale;
                }
                let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for wj in w.iter_mut() {
                    *wj = (*wj - max).exp();
                    s += *wj;
                }
                let out = &mut att[hd * dh..(hd + 1) * dh];
                out.fill(0.0);
                for (j, wj) in w.iter_mut().enumerate() {
                    *wj /= s;
                    if *wj != 0.0 {
                        let vj = &vals[j * d + hd * dh..j * d + (hd + 1) * dh];
                        for (oc, vc) in out.iter_mut().zip(vj) {
                            *oc += *wj * vc;
                        }
                    }
                }
            }
            gemm_nn(&att, lr.wo, &mut o, 1, d, d, false);
            for (xi, oi) in x.iter_mut().zip(&o) {
                *xi += oi;
            }
            rms_norm_row(&x, lr.mlp_norm, &mut h);
            gemm_nn(&h, lr.w_in, &mut f, 1, d, cfg.d_ff, false);
            for (fi, bi) in f.iter_mut().zip(lr.b_in) {
                *fi = silu(*fi + bi);
            }
            gemm_nn(&f, lr.w_out, &mut o, 1, cfg.d_ff, d, false);
            for ((xi, oi), bi) in x.iter_mut().zip(&o).zip(lr.b_out) {
                *xi += oi + bi;
            }
        }
        let mut out = vec![0.0; d];
        rms_norm_row(&x, self.final_norm, &mut out);
        self.len += 1;
        Ok(out)
    }

    pub fn logits(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        let head = self
            .lm_head
            .ok_or_else(|| Error::Config("parameters have no language-model head".into()))?;
        let mut out = vec![0.0; self.cfg.vocab_size];
        gemm_nn(
            hidden,
            head,
            &mut out,
            1,
            self.cfg.d_model,
            self.cfg.vocab_size,
            false,
        );
        Ok(out)
    }

    pub fn value(&self, hidden: &[f64]) -> Result<f64> {
        let (w, b) = self
            .value_head
            .ok_or_else(|| Error::Config("parameters have no value head".into()))?;
        let mut out = [0.0];
        gemm_nn(hidden, w, &mut out, 1, self.cfg.d_model, 1, false);
        Ok(out[0] + b)
    }

    /// Runs a whole sequence, returning the hidden state at every position.
    pub fn run(&mut self, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
        ids.iter().map(|&t| self.step(t)).collect()
    }

    pub fn head(&self, kind: HeadKind, hidden: &[f64]) -> Result<Vec<f64>> {
        match kind {
            HeadKind::Lm => self.logits(hidden),
            HeadKind::Value => Ok(vec![self.value(hidden)?]),
        }
    }
}
