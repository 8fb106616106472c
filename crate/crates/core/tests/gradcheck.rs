//! Central finite differences against the tape over every parameter of a
//! reduced model. The acceptance target repeats this on the default model.

mod common;

use c2f_core::model::ModelConfig;
use common::finite_difference_check;
use common::grad::{lm_loss, ppo_loss, shifted_old, spread_params, value_loss, H, TOL};

fn cfg() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        d_ff: 24,
        n_heads: 2,
        max_context: 8,
        ..ModelConfig::desk()
    }
}

#[test]
fn lm_loss_gradient() {
    let cfg = cfg();
    let mut p = spread_params(&cfg, 11);
    let g = lm_loss(&p, &cfg, true).1.unwrap();
    let r = finite_difference_check(&mut p, &g, H, |q| lm_loss(q, &cfg, false).0);
    assert!(
        r.max_rel < TOL,
        "max relative error {:.3e} at {:?}",
        r.max_rel,
        r.worst
    );
}

#[test]
fn value_loss_gradient() {
    let cfg = cfg();
    let mut p = spread_params(&cfg, 12);
    let g = value_loss(&p, &cfg, true).1.unwrap();
    let r = finite_difference_check(&mut p, &g, H, |q| value_loss(q, &cfg, false).0);
    assert!(
        r.max_rel < TOL,
        "max relative error {:.3e} at {:?}",
        r.max_rel,
        r.worst
    );
}

#[test]
fn clipped_ppo_loss_gradient() {
    let cfg = cfg();
    let mut p = spread_params(&cfg, 13);
    let old = shifted_old(&p, &cfg);
    let g = ppo_loss(&p, &cfg, &old, true).1.unwrap();
    let r = finite_difference_check(&mut p, &g, H, |q| ppo_loss(q, &cfg, &old, false).0);
    assert!(
        r.max_rel < TOL,
        "max relative error {:.3e} at {:?}",
        r.max_rel,
        r.worst
    );
}
