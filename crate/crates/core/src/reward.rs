//! Scalar reward model: a transformer backbone with a linear head read at the
//! last non-PAD position, trained on pairwise preferences.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{strip_stop_tokens, PreferencePair};
use crate::error::{Error, Result};
use crate::model::{
    forward_hidden, values_from_hidden, with_value_head, Decoder, ModelConfig, VALUE_HEAD_W,
};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::ParameterSet;
use crate::ppo::RewardSource;
use crate::tensor::{Tape, Var};

#[derive(Clone, Debug)]
pub struct RewardModel {
    pub cfg: ModelConfig,
    pub params: ParameterSet,
}

/// `-ln σ(margin)`, the per-pair preference loss.
pub fn pairwise_loss(margin: f64) -> f64 {
    let x = -margin;
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl RewardModel {
    /// Attaches a zero head to the backbone of `source` when it has none.
    pub fn from_params(cfg: &ModelConfig, source: &ParameterSet) -> Result<Self> {
        let params = if source.get(VALUE_HEAD_W).is_some() {
            source.clone()
        } else {
            with_value_head(cfg, source)?
        };
        Ok(Self {
            cfg: cfg.clone(),
            params,
        })
    }

    /// `prompt SEP response` with trailing PAD removed.
    pub fn encode(&self, prompt: &[usize], response: &[usize]) -> Result<Vec<usize>> {
        let mut ids = prompt.to_vec();
        ids.push(self.cfg.sep_token_id);
        ids.extend_from_slice(response);
        while ids.last() == Some(&self.cfg.pad_token_id) {
            ids.pop();
        }
        if ids.len() > self.cfg.max_context {
            return Err(Error::Data(format!(
                "reward input of {} tokens exceeds max_context {}",
                ids.len(),
                self.cfg.max_context
            )));
        }
        self.cfg.check_ids(&ids)?;
        Ok(ids)
    }

    pub fn score(&self, prompt: &[usize], response: &[usize]) -> Result<f64> {
        let ids = self.encode(prompt, response)?;
        let mut dec = Decoder::new(&self.params, &self.cfg)?;
        let mut h = Vec::new();
        for &t in &ids {
            h = dec.step(t)?;
        }
        dec.value(&h)
    }
}

impl RewardSource for RewardModel {
    fn score(&self, prompt: &[usize], response: &[usize]) -> Result<f64> {
        RewardModel::score(self, prompt, response)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of pairs held out for accuracy.
    pub heldout_frac: f64,
    /// Also train on copies with EOS removed so the score ignores EOS.
    pub include_stripped: bool,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 8,
            epochs: 3,
            heldout_frac: 0.1,
            include_stripped: true,
            max_grad_norm: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardReport {
    pub epoch_losses: Vec<f64>,
    pub heldout_accuracy: f64,
    /// Mean of `score(chosen) - score(rejected)` over held-out pairs.
    pub heldout_margin: f64,
    pub heldout_pairs: usize,
}

fn taped_score(
    tape: &mut Tape,
    bound: &crate::params::BoundParams<'_>,
    cfg: &ModelConfig,
    ids: &[usize],
) -> Result<Var> {
    let h = forward_hidden(tape, bound, cfg, ids)?;
    let last = tape.select_rows(h, &[ids.len() - 1])?;
    values_from_hidden(tape, bound, last)
}

/// Held-out accuracy counts a pair as correct when the chosen score is
/// strictly higher.
pub fn pairwise_accuracy(rm: &RewardModel, pairs: &[PreferencePair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut correct = 0;
    let mut margin = 0.0;
    for p in pairs {
        let m = rm.score(&p.prompt, &p.chosen)? - rm.score(&p.prompt, &p.rejected)?;
        if m > 0.0 {
            correct += 1;
        }
        margin += m;
    }
    Ok((
        correct as f64 / pairs.len() as f64,
        margin / pairs.len() as f64,
    ))
}

/// Trains on `-ln σ(score(chosen) - score(rejected))`.
pub fn train_reward(
    init: &ParameterSet,
    cfg: &ModelConfig,
    pairs: &[PreferencePair],
    rc: &RewardConfig,
) -> Result<(RewardModel, RewardReport)> {
    if pairs.is_empty() {
        return Err(Error::Data("no preference pairs".into()));
    }
    if !(rc.lr > 0.0) || rc.batch_size == 0 || !(0.0..1.0).contains(&rc.heldout_frac) {
        return Err(Error::Config(
            "reward config needs lr > 0, batch_size > 0, heldout_frac in [0, 1)".into(),
        ));
    }
    let mut rm = RewardModel::from_params(cfg, init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rc.seed);
    let mut idx: Vec<usize> = (0..pairs.len()).collect();
    idx.shuffle(&mut rng);
    let n_held = ((pairs.len() as f64) * rc.heldout_frac).round() as usize;
    let held: Vec<PreferencePair> = idx[..n_held].iter().map(|&i| pairs[i].clone()).collect();
    let mut train: Vec<PreferencePair> = idx[n_held..].iter().map(|&i| pairs[i].clone()).collect();
    if rc.include_stripped {
        let stripped = strip_stop_tokens(&train, cfg.eos_token_id);
        train.extend(stripped);
    }
    let encoded: Vec<(Vec<usize>, Vec<usize>)> = train
        .iter()
        .map(|p| {
            Ok((
                rm.encode(&p.prompt, &p.chosen)?,
                rm.encode(&p.prompt, &p.rejected)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = RewardReport::default();
    let mut opt = AdamW::new(AdamWConfig::with_lr(rc.lr), &rm.params);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..rc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, chunk) in order.chunks(rc.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = rm.params.bind(&mut tape);
            let mut margins = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (c, r) = &encoded[i];
                let sc = taped_score(&mut tape, &bound, cfg, c)?;
                let sr = taped_score(&mut tape, &bound, cfg, r)?;
                margins.push(tape.sub(sc, sr)?);
            }
            let m = tape.concat(&margins)?;
            let neg = tape.neg(m);
            let l = tape.softplus(neg);
            let loss = tape.mean(l);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "reward loss is {value} at epoch {epoch}, step {step}"
                )));
            }
            tape.backward(loss)?;
            let mut grads = bound.grads(&tape);
            drop(bound);
            if rc.max_grad_norm > 0.0 {
                grads.clip_norm(rc.max_grad_norm);
            }
            opt.step(&mut rm.params, &grads)?;
            total += value * chunk.len() as f64;
        }
        report.epoch_losses.push(total / encoded.len() as f64);
    }
    let (acc, margin) = pairwise_accuracy(&rm, &held)?;
    report.heldout_accuracy = acc;
    report.heldout_margin = margin;
    report.heldout_pairs = held.len();
    Ok((rm, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn loss_reference_values() {
        assert!((pairwise_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((pairwise_loss(1.0) - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((pairwise_loss(1.0) - 0.3133).abs() < 1e-4);
        assert!(pairwise_loss(800.0) < 1e-300);
    }

    #[test]
    fn zero_head_scores_zero_and_ignores_trailing_pad() {
        let cfg = ModelConfig::desk();
        let rm = RewardModel::from_params(&cfg, &init_params(&cfg, 2).unwrap()).unwrap();
        assert_eq!(rm.score(&[7, 8], &[30, 31, 1]).unwrap(), 0.0);
        let mut p = rm.params.clone();
        p.get_mut(VALUE_HEAD_W)
            .unwrap()
            .data_mut()
            .iter_mut()
            .enumerate()
            .for_each(|(i, w)| *w = (i as f64 * 0.3).sin());
        let rm = RewardModel {
            cfg: cfg.clone(),
            params: p,
        };
        let a = rm.score(&[7, 8], &[30, 31]).unwrap();
        let b = rm
            .score(&[7, 8], &[30, 31, cfg.pad_token_id, cfg.pad_token_id])
            .unwrap();
        assert_ne!(a, 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn over_length_input_is_rejected() {
        let cfg = ModelConfig::desk();
        let rm = RewardModel::from_params(&cfg, &init_params(&cfg, 2).unwrap()).unwrap();
        let long = vec![30; cfg.max_context];
        assert!(matches!(rm.score(&[7], &long), Err(Error::Data(_))));
    }
}
