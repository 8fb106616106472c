//! Next-token training: plain language modelling over whole documents and
//! supervised fine-tuning with the loss masked to response tokens.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::split_document;
use crate::error::{Error, Result};
use crate::model::{forward_hidden, logits_from_hidden, ModelConfig};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::ParameterSet;
use crate::tensor::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SFTConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_response_len: usize,
    pub max_grad_norm: f64,
    pub seed: u64,
}

impl Default for SFTConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch_size: 8,
            epochs: 4,
            max_response_len: 32,
            max_grad_norm: 1.0,
            seed: 0,
        }
    }
}

impl SFTConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if self.batch_size == 0 || self.max_response_len == 0 {
            return Err(Error::Config(
                "batch_size and max_response_len must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One training sequence: `target` is predicted after reading `context`.
/// Only target positions contribute to the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmExample {
    pub context: Vec<usize>,
    pub target: Vec<usize>,
}

impl LmExample {
    /// Every token after the first is a target.
    pub fn whole(doc: &[usize]) -> Result<Self> {
        if doc.len() < 2 {
            return Err(Error::Data("documents need at least two tokens".into()));
        }
        Ok(Self {
            context: doc[..1].to_vec(),
            target: doc[1..].to_vec(),
        })
    }

    /// `prompt SEP response`: the context runs through SEP, the response is the target.
    pub fn response_only(doc: &[usize], cfg: &ModelConfig) -> Result<Self> {
        let (prompt, response) = split_document(doc, cfg.sep_token_id)
            .ok_or_else(|| Error::Data("SFT example has no separator".into()))?;
        if response.is_empty() {
            return Err(Error::Data("SFT example has an empty response".into()));
        }
        let mut context = prompt.to_vec();
        context.push(cfg.sep_token_id);
        Ok(Self {
            context,
            target: response.to_vec(),
        })
    }

    fn len(&self) -> usize {
        self.context.len() + self.target.len() - 1
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParameterSet,
    /// Mean per-token loss of each epoch, measured during training.
    pub epoch_losses: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Summed negative log-likelihood of the targets and the number of target tokens.
fn batch_nll(
    tape: &mut Tape,
    bound: &crate::params::BoundParams<'_>,
    cfg: &ModelConfig,
    batch: &[&LmExample],
) -> Result<(crate::tensor::Var, usize)> {
    let mut parts = Vec::with_capacity(batch.len());
    let mut count = 0;
    for ex in batch {
        let mut ids = ex.context.clone();
        ids.extend_from_slice(&ex.target[..ex.target.len() - 1]);
        let h = forward_hidden(tape, bound, cfg, &ids)?;
        let start = ex.context.len() - 1;
        let rows: Vec<usize> = (start..start + ex.target.len()).collect();
        let h = tape.select_rows(h, &rows)?;
        let logits = logits_from_hidden(tape, bound, h)?;
        parts.push(tape.token_log_probs(logits, &ex.target, None)?);
        count += ex.target.len();
    }
    let all = tape.concat(&parts)?;
    let s = tape.sum(all);
    Ok((tape.neg(s), count))
}

/// Mean per-token loss over `examples` without updating anything.
pub fn evaluate_loss(
    params: &ParameterSet,
    cfg: &ModelConfig,
    examples: &[LmExample],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for ex in examples {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let (nll, n) = batch_nll(&mut tape, &bound, cfg, &[ex])?;
        total += tape.value(nll).item();
        count += n;
    }
    Ok(if count > 0 { total / count as f64 } else { 0.0 })
}

/// Minibatch AdamW on the mean per-token negative log-likelihood.
/// Epoch losses that rise by more than 5% over the previous epoch produce a
/// warning; a non-finite loss aborts.
pub fn train_lm(
    init: &ParameterSet,
    cfg: &ModelConfig,
    examples: &[LmExample],
    tc: &SFTConfig,
) -> Result<TrainOutcome> {
    tc.validate()?;
    let mut params = init.clone();
    let mut outcome = TrainOutcome {
        params: init.clone(),
        epoch_losses: Vec::new(),
        warnings: Vec::new(),
    };
    if tc.epochs == 0 {
        return Ok(outcome);
    }
    if examples.is_empty() {
        return Err(Error::Data("no training examples".into()));
    }
    for ex in examples {
        if ex.context.is_empty() || ex.target.is_empty() {
            return Err(Error::Data(
                "training example with empty context or target".into(),
            ));
        }
        if ex.len() > cfg.max_context {
            return Err(Error::Data(format!(
                "training example of {} tokens exceeds max_context {}",
                ex.len(),
                cfg.max_context
            )));
        }
    }
    let mut opt = AdamW::new(AdamWConfig::with_lr(tc.lr), &params);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for (step, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<&LmExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let (nll, n) = batch_nll(&mut tape, &bound, cfg, &batch)?;
            let loss = tape.scale(nll, 1.0 / n as f64);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is {value} at epoch {epoch}, step {step}"
                )));
            }
            tape.backward(loss)?;
            let mut grads = bound.grads(&tape);
            drop(bound);
            if tc.max_grad_norm > 0.0 {
                grads.clip_norm(tc.max_grad_norm);
            }
            opt.step(&mut params, &grads)?;
            sum += value * n as f64;
            count += n;
        }
        let mean = sum / count as f64;
        if let Some(&prev) = outcome.epoch_losses.last() {
            if mean > prev * 1.05 {
                outcome.warnings.push(format!(
                    "epoch {epoch} loss {mean:.4} rose above previous {prev:.4}"
                ));
            }
        }
        outcome.epoch_losses.push(mean);
    }
    outcome.params = params;
    Ok(outcome)
}

/// Fine-tunes on `prompt SEP response EOS` documents, training only on the
/// response. Responses must end with EOS and fit in `max_response_len`.
pub fn train_sft(
    init: &ParameterSet,
    cfg: &ModelConfig,
    docs: &[Vec<usize>],
    tc: &SFTConfig,
) -> Result<TrainOutcome> {
    let mut examples = Vec::with_capacity(docs.len());
    for doc in docs {
        let ex = LmExample::response_only(doc, cfg)?;
        if ex.target.last() != Some(&cfg.eos_token_id) {
            return Err(Error::Data("SFT response does not end with EOS".into()));
        }
        if ex.target.len() > tc.max_response_len {
            return Err(Error::Data(format!(
                "SFT response of {} tokens exceeds max_response_len {}",
                ex.target.len(),
                tc.max_response_len
            )));
        }
        examples.push(ex);
    }
    train_lm(init, cfg, &examples, tc)
}

/// Language-model pretraining over whole documents.
pub fn pretrain(
    init: &ParameterSet,
    cfg: &ModelConfig,
    docs: &[Vec<usize>],
    tc: &SFTConfig,
) -> Result<TrainOutcome> {
    let examples = docs
        .iter()
        .map(|d| LmExample::whole(d))
        .collect::<Result<Vec<_>>>()?;
    train_lm(init, cfg, &examples, tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = ModelConfig::desk();
        let p = init_params(&cfg, 3).unwrap();
        let tc = SFTConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train_sft(&p, &cfg, &[vec![7, 2, 30, 1]], &tc).unwrap();
        assert_eq!(out.params, p);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn rejects_responses_without_eos_or_separator() {
        let cfg = ModelConfig::desk();
        let p = init_params(&cfg, 3).unwrap();
        let tc = SFTConfig::default();
        assert!(matches!(
            train_sft(&p, &cfg, &[vec![7, 2, 30]], &tc),
            Err(Error::Data(_))
        ));
        assert!(matches!(
            train_sft(&p, &cfg, &[vec![7, 30, 1]], &tc),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn response_only_example_layout() {
        let cfg = ModelConfig::desk();
        let ex = LmExample::response_only(&[7, 8, 2, 30, 31, 1], &cfg).unwrap();
        assert_eq!(ex.context, vec![7, 8, 2]);
        assert_eq!(ex.target, vec![30, 31, 1]);
    }
}
