//! The coarse actor: PPO from the base model with EOS suppressed, a system
//! prompt on every rollout, and an output-length limit that grows only while
//! reward and critic loss are stable.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode_bytes, PreferencePair};
use crate::error::{Error, Result};
use crate::model::{with_value_head, ModelConfig};
use crate::params::ParameterSet;
use crate::ppo::{PpoStats, PpoTrainer, RLHFConfig, RewardSource, RolloutPrompt};
use crate::sampling::{generate, SamplerOpts};
use crate::tensor::sigmoid;

/// Prepended (byte-tokenized) to every prompt in text mode.
pub const SYSTEM_PROMPT: &str = "Below is an instruction that describes a task. Write a detailed analytical and reasoning response that appropriately completes the request, and don't generate any end of sentence tokens.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// Uses `ModelConfig::system_prefix_ids`.
    Synthetic,
    /// Uses the byte encoding of [`SYSTEM_PROMPT`].
    Text,
}

pub fn system_prefix(cfg: &ModelConfig, mode: PromptMode) -> Vec<usize> {
    match mode {
        PromptMode::Synthetic => cfg.system_prefix_ids.clone(),
        PromptMode::Text => encode_bytes(SYSTEM_PROMPT),
    }
}

/// Prefixes `prompt` with the system prompt. Fails if the prefix is already
/// there or if fewer than `reserve` positions would remain for the response.
pub fn apply_system_prompt(
    prompt: &[usize],
    cfg: &ModelConfig,
    mode: PromptMode,
    reserve: usize,
) -> Result<Vec<usize>> {
    let prefix = system_prefix(cfg, mode);
    if !prefix.is_empty() && prompt.starts_with(&prefix) {
        return Err(Error::Data("system prompt is already applied".into()));
    }
    let mut out = prefix;
    out.extend_from_slice(prompt);
    if out.len() + reserve > cfg.max_context {
        return Err(Error::Data(format!(
            "prompt with system prefix is {} tokens; {} more do not fit in max_context {}",
            out.len(),
            reserve,
            cfg.max_context
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Hard,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CMConfig {
    pub l_init: usize,
    pub l_max: usize,
    pub delta_l: usize,
    pub window: usize,
    pub reward_std_threshold: f64,
    pub critic_fluct_threshold: f64,
    pub gate_mode: GateMode,
    pub logistic_slope: f64,
}

impl Default for CMConfig {
    fn default() -> Self {
        Self {
            l_init: 16,
            l_max: 64,
            delta_l: 16,
            window: 5,
            reward_std_threshold: 0.5,
            critic_fluct_threshold: 0.5,
            gate_mode: GateMode::Hard,
            logistic_slope: 10.0,
        }
    }
}

impl CMConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_init == 0 || self.l_init > self.l_max {
            return Err(Error::Config("need 0 < l_init <= l_max".into()));
        }
        if self.delta_l == 0 || self.window < 2 {
            return Err(Error::Config("need delta_l > 0 and window >= 2".into()));
        }
        // Zero and infinity are allowed: they pin the gate shut or open.
        if self.reward_std_threshold.is_nan()
            || self.critic_fluct_threshold.is_nan()
            || self.reward_std_threshold < 0.0
            || self.critic_fluct_threshold < 0.0
        {
            return Err(Error::Config(
                "stability thresholds must be non-negative".into(),
            ));
        }
        if !(self.logistic_slope > 0.0) {
            return Err(Error::Config("logistic_slope must be positive".into()));
        }
        Ok(())
    }
}

/// Population standard deviation.
pub fn window_std(xs: &VecDeque<f64>) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMState {
    pub limit: usize,
    pub rewards: VecDeque<f64>,
    pub critic_losses: VecDeque<f64>,
    pub t: usize,
    /// Updates dropped because a metric was not finite.
    pub discarded: usize,
}

impl CMState {
    pub fn new(cfg: &CMConfig) -> Self {
        Self {
            limit: cfg.l_init,
            rewards: VecDeque::with_capacity(cfg.window),
            critic_losses: VecDeque::with_capacity(cfg.window),
            t: 0,
            discarded: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMTraceRow {
    pub t: usize,
    /// Limit after this step's update.
    pub limit: usize,
    pub reward_mean: f64,
    pub reward_std_w: f64,
    pub critic_loss: f64,
    pub critic_std_w: f64,
    pub stable: bool,
    /// Limit the batch was sampled under.
    pub limit_used: usize,
    pub mean_len: f64,
}

/// Pushes one batch's metrics and raises the limit by `delta_l` (capped at
/// `l_max`) when both windows are full and stable. The limit never falls.
/// Stability is `std < τ`, so a zero threshold keeps the gate shut.
pub fn cm_step(
    state: &mut CMState,
    reward_mean: f64,
    critic_loss: f64,
    cfg: &CMConfig,
) -> CMTraceRow {
    state.t += 1;
    let limit_used = state.limit;
    let mut row = CMTraceRow {
        t: state.t,
        limit: state.limit,
        reward_mean,
        reward_std_w: f64::NAN,
        critic_loss,
        critic_std_w: f64::NAN,
        stable: false,
        limit_used,
        mean_len: f64::NAN,
    };
    if !reward_mean.is_finite() || !critic_loss.is_finite() {
        state.discarded += 1;
        return row;
    }
    for (buf, x) in [
        (&mut state.rewards, reward_mean),
        (&mut state.critic_losses, critic_loss),
    ] {
        if buf.len() == cfg.window {
            buf.pop_front();
        }
        buf.push_back(x);
    }
    if state.rewards.len() < cfg.window || state.critic_losses.len() < cfg.window {
        return row;
    }
    let sr = window_std(&state.rewards);
    let sv = window_std(&state.critic_losses);
    row.reward_std_w = sr;
    row.critic_std_w = sv;
    row.stable = match cfg.gate_mode {
        GateMode::Hard => sr < cfg.reward_std_threshold && sv < cfg.critic_fluct_threshold,
        GateMode::Logistic => {
            let k = cfg.logistic_slope;
            sigmoid(k * (cfg.reward_std_threshold - sr))
                * sigmoid(k * (cfg.critic_fluct_threshold - sv))
                > 0.5
        }
    };
    if row.stable {
        state.limit = (state.limit + cfg.delta_l).min(cfg.l_max);
    }
    row.limit = state.limit;
    row
}

/// Samples exactly `length_limit` tokens with EOS banned.
pub fn suppressed_sample(
    policy: &ParameterSet,
    cfg: &ModelConfig,
    prompt: &[usize],
    length_limit: usize,
    temperature: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    if length_limit == 0 {
        return Err(Error::Config("length_limit must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = SamplerOpts {
        temperature,
        suppress_eos: true,
        max_new_tokens: length_limit,
    };
    generate(policy, cfg, prompt, &opts, &mut rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoarseConfig {
    /// Rollout/update iterations.
    pub steps: usize,
    pub prompt_mode: PromptMode,
    pub cm: CMConfig,
}

impl Default for CoarseConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            prompt_mode: PromptMode::Synthetic,
            cm: CMConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct CoarseOutcome {
    pub params: ParameterSet,
    pub trace: Vec<CMTraceRow>,
    pub stats: Vec<PpoStats>,
}

/// Policy context for a raw prompt: system prefix, prompt, SEP.
pub fn coarse_context(
    raw: &[usize],
    cfg: &ModelConfig,
    mode: PromptMode,
    reserve: usize,
) -> Result<Vec<usize>> {
    let mut ctx = apply_system_prompt(raw, cfg, mode, reserve + 1)?;
    ctx.push(cfg.sep_token_id);
    Ok(ctx)
}

/// PPO from `base` where batch `t` is sampled under the limit `l(t-1)` and
/// the scheduler then sees that batch's reward mean and critic loss.
pub fn train_coarse(
    base: &ParameterSet,
    cfg: &ModelConfig,
    rm: &dyn RewardSource,
    pairs_stripped: &[PreferencePair],
    rlhf: &RLHFConfig,
    cc: &CoarseConfig,
) -> Result<CoarseOutcome> {
    cc.cm.validate()?;
    if pairs_stripped.is_empty() {
        return Err(Error::Data("no prompts for coarse training".into()));
    }
    let eos = cfg.eos_token_id;
    if pairs_stripped
        .iter()
        .any(|p| p.prompt.contains(&eos) || p.chosen.contains(&eos) || p.rejected.contains(&eos))
    {
        return Err(Error::Data(
            "coarse training pairs must have EOS stripped".into(),
        ));
    }
    let prompts: Vec<RolloutPrompt> = pairs_stripped
        .iter()
        .map(|p| {
            Ok(RolloutPrompt {
                context: coarse_context(&p.prompt, cfg, cc.prompt_mode, cc.cm.l_max)?,
                raw: p.prompt.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let critic = with_value_head(cfg, base)?;
    let mut trainer = PpoTrainer::new(cfg.clone(), rlhf.clone(), base.clone(), critic, true)?;
    let mut pick = ChaCha8Rng::seed_from_u64(rlhf.seed ^ 0x5eed_c0a5);
    let mut state = CMState::new(&cc.cm);
    let mut trace = Vec::with_capacity(cc.steps);
    let mut stats = Vec::with_capacity(cc.steps);
    for _ in 0..cc.steps {
        let batch: Vec<RolloutPrompt> = (0..rlhf.rollout_batch)
            .map(|_| prompts[pick.random_range(0..prompts.len())].clone())
            .collect();
        let s = trainer.step(rm, &batch, state.limit)?;
        let mut row = cm_step(&mut state, s.reward_mean, s.critic_loss, &cc.cm);
        row.mean_len = s.mean_len;
        trace.push(row);
        stats.push(s);
    }
    Ok(CoarseOutcome {
        params: trainer.policy,
        trace,
        stats,
    })
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Columns: `t, limit, reward_mean, reward_std_W, critic_loss, critic_std_W, stable, limit_used, mean_len`.
pub fn write_trace_csv(trace: &[CMTraceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "t",
        "limit",
        "reward_mean",
        "reward_std_W",
        "critic_loss",
        "critic_std_W",
        "stable",
        "limit_used",
        "mean_len",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in trace {
        w.write_record([
            r.t.to_string(),
            r.limit.to_string(),
            r.reward_mean.to_string(),
            r.reward_std_w.to_string(),
            r.critic_loss.to_string(),
            r.critic_std_w.to_string(),
            u8::from(r.stable).to_string(),
            r.limit_used.to_string(),
            r.mean_len.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
