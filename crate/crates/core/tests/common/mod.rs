//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

pub mod grad;

use c2f_core::params::{Gradients, ParameterSet};

/// Relative error with an absolute floor so that exactly-zero gradients
/// compare cleanly against finite-difference noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub struct FdReport {
    pub checked: usize,
    pub max_rel: f64,
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Central finite differences at step `h` for every parameter element,
/// compared against `analytic`.
pub fn finite_difference_check(
    params: &mut ParameterSet,
    analytic: &Gradients,
    h: f64,
    mut loss: impl FnMut(&ParameterSet) -> f64,
) -> FdReport {
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    let mut report = FdReport {
        checked: 0,
        max_rel: 0.0,
        worst: None,
    };
    for (k, name) in names.iter().enumerate() {
        let n = params.get(name).unwrap().numel();
        for i in 0..n {
            let orig = params.get(name).unwrap().data()[i];
            params.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let up = loss(params);
            params.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let down = loss(params);
            params.get_mut(name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.0[k][i];
            let r = rel_err(a, numeric);
            report.checked += 1;
            if r > report.max_rel {
                report.max_rel = r;
                report.worst = Some((name.clone(), i, a, numeric));
            }
        }
    }
    report
}

/// GAE by direct summation of discounted TD residuals:
/// `A_t = Σ_{l≥0} (γλ)^l δ_{t+l}`.
pub fn gae_by_definition(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let t_max = rewards.len();
    let v = |t: usize| if t < t_max { values[t] } else { 0.0 };
    (0..t_max)
        .map(|t| {
            (t..t_max)
                .map(|k| {
                    let delta = rewards[k] + gamma * v(k + 1) - v(k);
                    (gamma * lambda).powi((k - t) as i32) * delta
                })
                .sum()
        })
        .collect()
}

/// Limit after step `t` (1-based) when every full window counts as stable.
pub fn staircase(t: usize, l_init: usize, delta: usize, window: usize, l_max: usize) -> usize {
    let rises = (t + 1).saturating_sub(window);
    (l_init + rises * delta).min(l_max)
}

/// Overrides that shrink every stage of the pipeline to a few seconds.
pub const TINY_RUN: &[(&str, &str)] = &[
    ("model.d_model", "16"),
    ("model.d_ff", "32"),
    ("model.n_layers", "1"),
    (
        "data",
        r#"{"corpus_docs":40,"sft_docs":20,"pref_train":40,"pref_heldout":16,"heldout_docs":8}"#,
    ),
    ("pretrain.epochs", "1"),
    ("sft.epochs", "1"),
    ("reward.epochs", "1"),
    ("rlhf.rollout_batch", "4"),
    ("rlhf.minibatch_size", "2"),
    ("rlhf.ppo_epochs", "1"),
    ("coarse.steps", "4"),
    (
        "coarse.cm",
        r#"{"l_init":8,"l_max":40,"delta_l":8,"window":2,"reward_std_threshold":1e9,"critic_fluct_threshold":1e9}"#,
    ),
    ("sweep_grid", "[0.3,0.7]"),
    ("eval.n_prompts", "8"),
    ("eval.max_new_tokens", "12"),
];

pub fn tiny_run(dir: &std::path::Path, seed: u64) -> c2f_core::pipeline::RunConfig {
    let mut ovr: Vec<(String, String)> = TINY_RUN
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    ovr.push(("seed".into(), seed.to_string()));
    ovr.push(("output_dir".into(), dir.display().to_string()));
    c2f_core::pipeline::RunConfig::default()
        .with_overrides(&ovr)
        .unwrap()
}
