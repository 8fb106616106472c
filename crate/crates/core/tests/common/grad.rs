//! Loss closures for the finite-difference checks.

use c2f_core::model::{
    forward_logits, forward_value, init_params, init_value_params, ModelConfig, LM_HEAD,
};
use c2f_core::params::{BoundParams, Gradients, ParameterSet};
use c2f_core::tensor::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
pub const IDS: [usize; 6] = [2, 17, 40, 9, 33, 21];
const VALUE_TARGETS: [f64; 6] = [0.3, -1.2, 0.8, 2.0, -0.4, 1.1];
const ADVANTAGES: [f64; 5] = [1.0, -0.7, 1.3, -2.0, 0.5];

/// Ratios `e^{-s}`: 1.05 (A>0, inside), 0.6 (A<0, clipped), 1.5 (A>0, clipped),
/// 0.9 (A<0, inside), 1.6 (A>0, clipped).
pub fn ratio_shift() -> [f64; 5] {
    [
        -(1.05f64.ln()),
        -(0.6f64.ln()),
        -(1.5f64.ln()),
        -(0.9f64.ln()),
        -(1.6f64.ln()),
    ]
}

/// LM head plus value head on one backbone, pushed away from the tiny init
/// so every path carries a gradient well above finite-difference noise.
pub fn spread_params(cfg: &ModelConfig, seed: u64) -> ParameterSet {
    let mut p = init_value_params(cfg, seed).unwrap();
    let lm = init_params(cfg, seed).unwrap();
    p.push(LM_HEAD, lm.get(LM_HEAD).unwrap().clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfd);
    let names: Vec<String> = p.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let norm = name.ends_with("norm");
        for v in p.get_mut(&name).unwrap().data_mut() {
            let u: f64 = rng.random_range(-1.0..1.0);
            *v = if norm { 1.0 + 0.3 * u } else { 0.25 * u };
        }
    }
    p
}

fn finish(mut t: Tape, b: BoundParams<'_>, loss: Var, grad: bool) -> (f64, Option<Gradients>) {
    let value = t.value(loss).item();
    if !grad {
        return (value, None);
    }
    t.backward(loss).unwrap();
    (value, Some(b.grads(&t)))
}

pub fn lm_loss(p: &ParameterSet, cfg: &ModelConfig, grad: bool) -> (f64, Option<Gradients>) {
    let mut t = Tape::new();
    let b = p.bind(&mut t);
    let logits = forward_logits(&mut t, &b, cfg, &IDS[..IDS.len() - 1]).unwrap();
    let loss = t.softmax_cross_entropy(logits, &IDS[1..]).unwrap();
    finish(t, b, loss, grad)
}

pub fn value_loss(p: &ParameterSet, cfg: &ModelConfig, grad: bool) -> (f64, Option<Gradients>) {
    let mut t = Tape::new();
    let b = p.bind(&mut t);
    let v = forward_value(&mut t, &b, cfg, &IDS).unwrap();
    let loss = t.half_mse(v, &VALUE_TARGETS).unwrap();
    finish(t, b, loss, grad)
}

/// Current log-probs of the response tokens, EOS excluded from the normaliser.
pub fn response_logp(p: &ParameterSet, cfg: &ModelConfig) -> Vec<f64> {
    let mut t = Tape::new();
    let b = p.bind(&mut t);
    let logits = forward_logits(&mut t, &b, cfg, &IDS[..IDS.len() - 1]).unwrap();
    let lp = t
        .token_log_probs(logits, &IDS[1..], Some(cfg.eos_token_id))
        .unwrap();
    t.value(lp).data().to_vec()
}

/// Clipped surrogate against fixed `old` log-probs.
pub fn ppo_loss(
    p: &ParameterSet,
    cfg: &ModelConfig,
    old: &[f64],
    grad: bool,
) -> (f64, Option<Gradients>) {
    let mut t = Tape::new();
    let b = p.bind(&mut t);
    let logits = forward_logits(&mut t, &b, cfg, &IDS[..IDS.len() - 1]).unwrap();
    let lp = t
        .token_log_probs(logits, &IDS[1..], Some(cfg.eos_token_id))
        .unwrap();
    let loss = t.clipped_surrogate(lp, old, &ADVANTAGES, 0.2).unwrap();
    finish(t, b, loss, grad)
}

/// Old log-probs placing the ratios of [`ratio_shift`] at `p`.
pub fn shifted_old(p: &ParameterSet, cfg: &ModelConfig) -> Vec<f64> {
    response_logp(p, cfg)
        .iter()
        .zip(ratio_shift())
        .map(|(l, s)| l + s)
        .collect()
}
