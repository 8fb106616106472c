//! Linear parameter interpolation between the coarse actor and the SFT
//! model, and the γ sweep.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_diff, Checkpoint};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, tally, EvalSuite};
use crate::model::ModelConfig;
use crate::params::ParameterSet;
use crate::ppo::RewardSource;

pub const DEFAULT_GAMMA: f64 = 0.7;

/// The nine-point grid `0.1, 0.2, ..., 0.9`.
pub fn default_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MismatchReport {
    pub config_fields: Vec<String>,
    pub tensors: Vec<String>,
}

impl MismatchReport {
    pub fn is_empty(&self) -> bool {
        self.config_fields.is_empty() && self.tensors.is_empty()
    }
}

impl std::fmt::Display for MismatchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if !self.config_fields.is_empty() {
            write!(f, "config differs in {}", self.config_fields.join(", "))?;
        }
        if !self.tensors.is_empty() {
            if !self.config_fields.is_empty() {
                write!(f, "; ")?;
            }
            write!(f, "tensors differ: {}", self.tensors.join(", "))?;
        }
        Ok(())
    }
}

/// Compares configs and manifests (names, shapes, order) entry by entry.
pub fn check_compatibility(
    a: &Checkpoint,
    b: &Checkpoint,
) -> std::result::Result<(), MismatchReport> {
    let mut report = MismatchReport {
        config_fields: config_diff(&a.config, &b.config),
        tensors: Vec::new(),
    };
    let (ma, mb) = (a.params.manifest(), b.params.manifest());
    for i in 0..ma.len().max(mb.len()) {
        match (ma.get(i), mb.get(i)) {
            (Some(x), Some(y)) if x == y => {}
            (Some(x), Some(y)) if x.name == y.name => report
                .tensors
                .push(format!("{} (shape {:?} vs {:?})", x.name, x.shape, y.shape)),
            (Some(x), Some(y)) => report
                .tensors
                .push(format!("#{i} ({} vs {})", x.name, y.name)),
            (Some(x), None) => report.tensors.push(format!("{} (only in first)", x.name)),
            (None, Some(y)) => report.tensors.push(format!("{} (only in second)", y.name)),
            (None, None) => unreachable!(),
        }
    }
    if report.is_empty() {
        Ok(())
    } else {
        Err(report)
    }
}

/// One merged element: `γ·a + (1-γ)·b`, clamped into `[min(a,b), max(a,b)]`
/// so rounding can never leave the segment.
#[inline]
pub fn lerp(gamma: f64, a: f64, b: f64) -> f64 {
    let v = gamma * a + (1.0 - gamma) * b;
    v.clamp(a.min(b), a.max(b))
}

/// `θ = γ·coarse + (1-γ)·sft` over the flat views.
pub fn merge_params(coarse: &ParameterSet, sft: &ParameterSet, gamma: f64) -> Result<ParameterSet> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma {gamma} is outside [0, 1]")));
    }
    if !coarse.same_manifest(sft) {
        return Err(Error::Config("parameter manifests differ".into()));
    }
    let (a, b) = (coarse.flatten(), sft.flatten());
    let merged: Vec<f64> = a.iter().zip(&b).map(|(&x, &y)| lerp(gamma, x, y)).collect();
    if let Some(i) = merged.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("merged element {i} is not finite")));
    }
    ParameterSet::unflatten(&coarse.manifest(), &merged)
}

pub fn merge(coarse: &Checkpoint, sft: &Checkpoint, gamma: f64) -> Result<Checkpoint> {
    check_compatibility(coarse, sft)
        .map_err(|r| Error::Config(format!("checkpoints are incompatible: {r}")))?;
    Ok(Checkpoint::new(
        coarse.config.clone(),
        merge_params(&coarse.params, &sft.params, gamma)?,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub redundancy_4gram: f64,
    pub mean_len: f64,
    pub mean_reward: f64,
    pub winrate_vs_sft: f64,
    pub heldout_ppl: f64,
}

/// Inputs every sweep row is evaluated against.
pub struct SweepInputs<'a> {
    pub cfg: &'a ModelConfig,
    pub rm: &'a dyn RewardSource,
    pub prompts: &'a [Vec<usize>],
    pub heldout_docs: &'a [Vec<usize>],
    pub suite: &'a EvalSuite,
}

/// Merges and evaluates at every γ of `grid`; rows come back sorted by γ.
/// Each row is computed from scratch.
pub fn sweep_gamma(
    coarse: &ParameterSet,
    sft: &ParameterSet,
    grid: &[f64],
    inp: &SweepInputs<'_>,
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("gamma grid is empty".into()));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let base = evaluate_model(
        "sft",
        sft,
        inp.cfg,
        inp.rm,
        inp.prompts,
        inp.heldout_docs,
        inp.suite,
    )?;
    grid.iter()
        .map(|&g| {
            let merged = merge_params(coarse, sft, g)?;
            let run = evaluate_model(
                &format!("fine-{g}"),
                &merged,
                inp.cfg,
                inp.rm,
                inp.prompts,
                inp.heldout_docs,
                inp.suite,
            )?;
            Ok(SweepRow {
                gamma: g,
                redundancy_4gram: run.report.redundancy_4gram,
                mean_len: run.report.mean_response_len,
                mean_reward: run.report.mean_reward,
                winrate_vs_sft: tally(&run.rewards, &base.rewards).a_wins,
                heldout_ppl: run.report.heldout_ppl,
            })
        })
        .collect()
}

/// γ of the row with the highest mean reward (first one on ties).
pub fn best_reward_gamma(rows: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .fold(None::<&SweepRow>, |best, r| match best {
            Some(b) if b.mean_reward >= r.mean_reward => Some(b),
            _ => Some(r),
        })
        .map(|r| r.gamma)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::tensor::Tensor;

    fn pair(a: Vec<f64>, b: Vec<f64>) -> (ParameterSet, ParameterSet) {
        let mut x = ParameterSet::new();
        x.push("w", Tensor::vector(a).unwrap()).unwrap();
        let mut y = ParameterSet::new();
        y.push("w", Tensor::vector(b).unwrap()).unwrap();
        (x, y)
    }

    #[test]
    fn endpoints_and_reference_point() {
        let (c, s) = pair(vec![1.0, 2.0], vec![3.0, 4.0]);
        assert_eq!(merge_params(&c, &s, 0.0).unwrap(), s);
        assert_eq!(merge_params(&c, &s, 1.0).unwrap(), c);
        let m = merge_params(&c, &s, 0.7).unwrap();
        let d = m.get("w").unwrap().data();
        assert!((d[0] - 1.6).abs() < 1e-15 && (d[1] - 2.6).abs() < 1e-15);
        assert!(merge_params(&c, &s, 1.5).is_err());
    }

    #[test]
    fn compatibility_reports_name_the_difference() {
        let cfg = ModelConfig::desk();
        let a = Checkpoint::new(cfg.clone(), init_params(&cfg, 1).unwrap());
        assert!(check_compatibility(&a, &a).is_ok());

        let wide = ModelConfig {
            d_model: 32,
            ..cfg.clone()
        };
        let b = Checkpoint::new(wide.clone(), init_params(&wide, 1).unwrap());
        let r = check_compatibility(&a, &b).unwrap_err();
        assert!(
            r.config_fields.iter().any(|f| f.starts_with("d_model")),
            "{r}"
        );

        let mut renamed = ParameterSet::new();
        for (n, t) in a.params.iter() {
            let n = if n == "final_norm" { "final_norm_x" } else { n };
            renamed.push(n, t.clone()).unwrap();
        }
        let c = Checkpoint::new(cfg, renamed);
        let r = check_compatibility(&a, &c).unwrap_err();
        assert!(r.config_fields.is_empty());
        assert_eq!(r.tensors.len(), 1);
        assert!(r.tensors[0].contains("final_norm_x"), "{r}");
        assert!(merge(&a, &c, 0.5).is_err());
    }

    #[test]
    fn best_gamma_picks_highest_reward() {
        let row = |g, r| SweepRow {
            gamma: g,
            redundancy_4gram: 0.0,
            mean_len: 0.0,
            mean_reward: r,
            winrate_vs_sft: 0.0,
            heldout_ppl: 1.0,
        };
        assert_eq!(
            best_reward_gamma(&[row(0.1, 1.0), row(0.5, 3.0), row(0.9, 2.0)]),
            Some(0.5)
        );
        assert_eq!(best_reward_gamma(&[]), None);
    }
}
