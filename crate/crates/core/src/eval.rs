//! Redundancy, length, reward, win rate and held-out perplexity.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_context, PromptMode};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::ParameterSet;
use crate::ppo::RewardSource;
use crate::sampling::{generate, SamplerOpts};
use crate::sft::{evaluate_loss, LmExample};

pub const JUDGE_NOTE: &str = "judge: learned reward model standing in for an external LLM judge";

/// `1 - distinct/total` over the n-grams of `seq`.
pub fn redundancy_ngram(seq: &[usize], n: usize) -> Result<f64> {
    if n == 0 || seq.len() < n {
        return Err(Error::Data(format!(
            "sequence of {} tokens has no {n}-grams",
            seq.len()
        )));
    }
    let grams: Vec<&[usize]> = seq.windows(n).collect();
    let distinct: HashSet<&[usize]> = grams.iter().copied().collect();
    Ok(1.0 - distinct.len() as f64 / grams.len() as f64)
}

/// Mean per-response redundancy; responses shorter than `n` count as 0.
pub fn mean_redundancy(responses: &[Vec<usize>], n: usize) -> f64 {
    if responses.is_empty() {
        return 0.0;
    }
    let total: f64 = responses
        .iter()
        .map(|r| redundancy_ngram(r, n).unwrap_or(0.0))
        .sum();
    total / responses.len() as f64
}

/// Drops a trailing EOS.
pub fn content(response: &[usize], eos: usize) -> &[usize] {
    match response.last() {
        Some(&t) if t == eos => &response[..response.len() - 1],
        _ => response,
    }
}

/// Decoding and scoring settings shared by every model in a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSuite {
    pub n_prompts: usize,
    pub max_new_tokens: usize,
    /// `0` is greedy. The default samples at the rollout temperature.
    pub temperature: f64,
    pub seed: u64,
    pub suppress_eos: bool,
    /// Prepend the system prompt (coarse-actor evaluation).
    pub system_prompt: Option<PromptMode>,
    pub ngram: usize,
}

impl Default for EvalSuite {
    fn default() -> Self {
        Self {
            n_prompts: 200,
            max_new_tokens: 64,
            temperature: 1.0,
            seed: 0,
            suppress_eos: false,
            system_prompt: None,
            ngram: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub judge: String,
    pub model_id: String,
    pub redundancy_4gram: f64,
    pub mean_response_len: f64,
    pub mean_reward: f64,
    pub heldout_ppl: f64,
    pub n_prompts: usize,
    pub seed: u64,
    pub suppress_eos: bool,
    /// Fraction of responses that ended with EOS.
    pub eos_rate: f64,
}

impl EvalReport {
    pub fn is_finite(&self) -> bool {
        [
            self.redundancy_4gram,
            self.mean_response_len,
            self.mean_reward,
            self.heldout_ppl,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

fn prompt_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(i as u64)
}

/// One response per prompt. Prompt `i` always uses the same sampling seed,
/// so two models see paired randomness.
pub fn generate_responses(
    params: &ParameterSet,
    cfg: &ModelConfig,
    prompts: &[Vec<usize>],
    suite: &EvalSuite,
) -> Result<Vec<Vec<usize>>> {
    let opts = SamplerOpts {
        temperature: suite.temperature,
        suppress_eos: suite.suppress_eos,
        max_new_tokens: suite.max_new_tokens,
    };
    prompts
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let ctx = match suite.system_prompt {
                Some(mode) => coarse_context(raw, cfg, mode, suite.max_new_tokens)?,
                None => {
                    let mut c = raw.clone();
                    c.push(cfg.sep_token_id);
                    c
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(prompt_seed(suite.seed, i));
            generate(params, cfg, &ctx, &opts, &mut rng)
        })
        .collect()
}

/// `exp` of the mean next-token negative log-likelihood over whole documents.
pub fn heldout_perplexity(
    params: &ParameterSet,
    cfg: &ModelConfig,
    docs: &[Vec<usize>],
) -> Result<f64> {
    if docs.is_empty() {
        return Err(Error::Data("held-out corpus is empty".into()));
    }
    let examples = docs
        .iter()
        .map(|d| LmExample::whole(d))
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate_loss(params, cfg, &examples)?.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub a_wins: f64,
    pub b_wins: f64,
    pub ties: f64,
}

fn scores(
    rm: &dyn RewardSource,
    prompts: &[Vec<usize>],
    responses: &[Vec<usize>],
    eos: usize,
) -> Result<Vec<f64>> {
    prompts
        .iter()
        .zip(responses)
        .map(|(p, r)| rm.score(p, content(r, eos)))
        .collect()
}

/// Paired comparison: per prompt the higher reward wins, equal rewards tie.
pub fn win_rate(
    a: &ParameterSet,
    b: &ParameterSet,
    cfg: &ModelConfig,
    rm: &dyn RewardSource,
    prompts: &[Vec<usize>],
    suite: &EvalSuite,
) -> Result<WinRate> {
    let ra = generate_responses(a, cfg, prompts, suite)?;
    let rb = generate_responses(b, cfg, prompts, suite)?;
    let sa = scores(rm, prompts, &ra, cfg.eos_token_id)?;
    let sb = scores(rm, prompts, &rb, cfg.eos_token_id)?;
    Ok(tally(&sa, &sb))
}

/// Win/loss/tie fractions from paired scores.
pub fn tally(sa: &[f64], sb: &[f64]) -> WinRate {
    if sa.is_empty() {
        return WinRate {
            a_wins: 0.0,
            b_wins: 0.0,
            ties: 1.0,
        };
    }
    let (mut aw, mut bw) = (0usize, 0usize);
    for (x, y) in sa.iter().zip(sb) {
        if x > y {
            aw += 1;
        } else if y > x {
            bw += 1;
        }
    }
    let n = sa.len() as f64;
    let a_wins = aw as f64 / n;
    let b_wins = bw as f64 / n;
    // Taking ties as the remainder makes the three fractions sum to exactly 1.
    let ties = 1.0 - (a_wins + b_wins);
    WinRate {
        a_wins,
        b_wins,
        ties,
    }
}

/// Everything the report needs from one decoding pass.
#[derive(Debug)]
pub struct EvalRun {
    pub report: EvalReport,
    pub responses: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
}

pub fn evaluate_model(
    model_id: &str,
    params: &ParameterSet,
    cfg: &ModelConfig,
    rm: &dyn RewardSource,
    prompts: &[Vec<usize>],
    heldout_docs: &[Vec<usize>],
    suite: &EvalSuite,
) -> Result<EvalRun> {
    if prompts.is_empty() {
        return Err(Error::Data("no evaluation prompts".into()));
    }
    let prompts = &prompts[..prompts.len().min(suite.n_prompts.max(1))];
    let responses = generate_responses(params, cfg, prompts, suite)?;
    let eos = cfg.eos_token_id;
    let bodies: Vec<Vec<usize>> = responses.iter().map(|r| content(r, eos).to_vec()).collect();
    let rewards = scores(rm, prompts, &responses, eos)?;
    let n = prompts.len() as f64;
    let report = EvalReport {
        judge: JUDGE_NOTE.to_string(),
        model_id: model_id.to_string(),
        redundancy_4gram: mean_redundancy(&bodies, suite.ngram),
        mean_response_len: bodies.iter().map(|b| b.len() as f64).sum::<f64>() / n,
        mean_reward: rewards.iter().sum::<f64>() / n,
        heldout_ppl: heldout_perplexity(params, cfg, heldout_docs)?,
        n_prompts: prompts.len(),
        seed: suite.seed,
        suppress_eos: suite.suppress_eos,
        eos_rate: responses.iter().filter(|r| r.last() == Some(&eos)).count() as f64 / n,
    };
    if !report.is_finite() {
        return Err(Error::Numeric(format!(
            "evaluation of {model_id} produced a non-finite metric"
        )));
    }
    Ok(EvalRun {
        report,
        responses,
        rewards,
    })
}

/// Report only.
pub fn full_report(
    model_id: &str,
    params: &ParameterSet,
    cfg: &ModelConfig,
    rm: &dyn RewardSource,
    prompts: &[Vec<usize>],
    heldout_docs: &[Vec<usize>],
    suite: &EvalSuite,
) -> Result<EvalReport> {
    Ok(evaluate_model(model_id, params, cfg, rm, prompts, heldout_docs, suite)?.report)
}
