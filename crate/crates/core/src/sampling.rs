//! Autoregressive decoding with optional end-of-sequence suppression.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Decoder, ModelConfig};
use crate::params::ParameterSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerOpts {
    /// `0` selects greedy decoding.
    pub temperature: f64,
    /// Forces the EOS logit to `-∞`, so generation always runs to `max_new_tokens`.
    pub suppress_eos: bool,
    pub max_new_tokens: usize,
}

impl SamplerOpts {
    pub fn greedy(max_new_tokens: usize) -> Self {
        Self {
            temperature: 0.0,
            suppress_eos: false,
            max_new_tokens,
        }
    }
}

/// Next-token distribution after temperature scaling. A banned token gets
/// logit `-∞` and therefore probability exactly zero; the rest renormalize.
pub fn next_token_probs(logits: &[f64], temperature: f64, banned: Option<usize>) -> Vec<f64> {
    let t = if temperature > 0.0 { temperature } else { 1.0 };
    let scaled: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            if Some(j) == banned {
                f64::NEG_INFINITY
            } else {
                l / t
            }
        })
        .collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Argmax over allowed tokens; ties go to the lowest id.
pub fn greedy_token(logits: &[f64], banned: Option<usize>) -> usize {
    let mut best = None;
    for (j, &l) in logits.iter().enumerate() {
        if Some(j) == banned {
            continue;
        }
        match best {
            Some((_, b)) if l <= b => {}
            _ => best = Some((j, l)),
        }
    }
    best.expect("vocabulary has an allowed token").0
}

pub fn pick_token<R: Rng + ?Sized>(
    logits: &[f64],
    temperature: f64,
    banned: Option<usize>,
    rng: &mut R,
) -> usize {
    if temperature <= 0.0 {
        return greedy_token(logits, banned);
    }
    let probs = next_token_probs(logits, temperature, banned);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (j, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(j);
            if u < acc {
                return j;
            }
        }
    }
    last.expect("distribution has support")
}

/// Samples a response to `prompt`. Without suppression generation stops
/// after emitting EOS (which is kept as the final token).
pub fn generate<R: Rng + ?Sized>(
    params: &ParameterSet,
    cfg: &ModelConfig,
    prompt: &[usize],
    opts: &SamplerOpts,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if prompt.is_empty() {
        return Err(Error::Data("cannot generate from an empty prompt".into()));
    }
    if prompt.len() + opts.max_new_tokens > cfg.max_context {
        return Err(Error::Data(format!(
            "prompt of {} plus {} new tokens exceeds max_context {}",
            prompt.len(),
            opts.max_new_tokens,
            cfg.max_context
        )));
    }
    let banned = opts.suppress_eos.then_some(cfg.eos_token_id);
    let mut dec = Decoder::new(params, cfg)?;
    let mut hidden = Vec::new();
    for &t in prompt {
        hidden = dec.step(t)?;
    }
    let mut out = Vec::with_capacity(opts.max_new_tokens);
    for i in 0..opts.max_new_tokens {
        let logits = dec.logits(&hidden)?;
        let tok = pick_token(&logits, opts.temperature, banned, rng);
        out.push(tok);
        if tok == cfg.eos_token_id {
            break;
        }
        if i + 1 < opts.max_new_tokens {
            hidden = dec.step(tok)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn suppression_moves_greedy_choice_off_eos() {
        let logits = [0.1, 5.0, 2.0, 3.0];
        assert_eq!(greedy_token(&logits, None), 1);
        assert_eq!(greedy_token(&logits, Some(1)), 3);
    }

    #[test]
    fn banned_probability_is_exactly_zero_and_rest_sums_to_one() {
        let logits = [0.3, 9.0, -1.0, 2.5, 0.0];
        let p = next_token_probs(&logits, 0.7, Some(1));
        assert_eq!(p[1], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert_ne!(pick_token(&logits, 1.0, Some(1), &mut rng), 1);
        }
    }

    #[test]
    fn greedy_ties_break_low() {
        assert_eq!(greedy_token(&[1.0, 1.0, 0.0], None), 0);
    }
}
