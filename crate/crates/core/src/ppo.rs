//! PPO actor-critic: rollouts with KL-to-reference shaping, GAE, the clipped
//! surrogate for the actor and squared error for the critic.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{forward_hidden, logits_from_hidden, values_from_hidden, Decoder, ModelConfig};
use crate::optim::{AdamW, AdamWConfig};
use crate::params::{Gradients, ParameterSet};
use crate::sampling::{generate, SamplerOpts};
use crate::tensor::{Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RLHFConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub clip_epsilon: f64,
    pub discount_factor: f64,
    pub gae_lambda: f64,
    pub kl_coef: f64,
    pub rollout_batch: usize,
    pub ppo_epochs: usize,
    pub minibatch_size: usize,
    pub normalize_advantages: bool,
    pub max_grad_norm: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for RLHFConfig {
    fn default() -> Self {
        Self {
            lr_actor: 1e-4,
            lr_critic: 1e-5,
            clip_epsilon: 0.2,
            discount_factor: 0.95,
            gae_lambda: 0.95,
            kl_coef: 0.05,
            rollout_batch: 16,
            ppo_epochs: 2,
            minibatch_size: 8,
            normalize_advantages: true,
            max_grad_norm: 1.0,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl RLHFConfig {
    /// Learning rates used for 7B-scale training; too small to move the desk model.
    pub fn large_model_preset() -> Self {
        Self {
            lr_actor: 5e-6,
            lr_critic: 5e-7,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad("clip_epsilon must lie in (0, 1)");
        }
        if !(self.discount_factor > 0.0 && self.discount_factor <= 1.0) {
            return bad("discount_factor must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.kl_coef < 0.0 || self.rollout_batch == 0 || self.minibatch_size == 0 {
            return bad("kl_coef must be non-negative and batch sizes positive");
        }
        Ok(())
    }
}

/// Scores a finished response. Implemented by the reward model and by
/// hand-written rewards in tests.
pub trait RewardSource {
    fn score(&self, prompt: &[usize], response: &[usize]) -> Result<f64>;
}

impl<F: Fn(&[usize], &[usize]) -> f64> RewardSource for F {
    fn score(&self, prompt: &[usize], response: &[usize]) -> Result<f64> {
        Ok(self(prompt, response))
    }
}

/// A prompt as the policy sees it (`context`, usually ending in SEP) and as
/// the reward source sees it (`raw`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RolloutPrompt {
    pub context: Vec<usize>,
    pub raw: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub context: Vec<usize>,
    pub raw_prompt: Vec<usize>,
    pub response: Vec<usize>,
    /// Behaviour-policy log-probs, frozen at rollout time.
    pub old_log_probs: Vec<f64>,
    pub ref_log_probs: Vec<f64>,
    /// `V(s_t)` for the state preceding each response token.
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub rm_score: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Per-token `log π - log π_ref`.
    pub fn kl(&self) -> Vec<f64> {
        self.old_log_probs
            .iter()
            .zip(&self.ref_log_probs)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Reward-model score minus the summed KL penalty.
    pub fn shaped_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn input_ids(&self) -> Vec<usize> {
        let mut ids = self.context.clone();
        ids.extend_from_slice(&self.response[..self.response.len() - 1]);
        ids
    }

    /// Rows of the forward pass whose outputs score the response tokens.
    fn response_rows(&self) -> Vec<usize> {
        let start = self.context.len() - 1;
        (start..start + self.response.len()).collect()
    }
}

/// Per-token rewards: `-β·kl_t` everywhere plus the score on the final token.
pub fn shape_rewards(score: f64, kl: &[f64], kl_coef: f64) -> Vec<f64> {
    let mut r: Vec<f64> = kl.iter().map(|k| -kl_coef * k).collect();
    if let Some(last) = r.last_mut() {
        *last += score;
    }
    r
}

/// Generalized advantage estimation with `V(s_{T+1}) = 0`.
/// Returns `(advantages, returns)` where `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    discount_factor: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::Config(format!(
            "{} rewards but {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = 0.0;
    let mut running = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + discount_factor * next_value - values[t];
        running = delta + discount_factor * gae_lambda * running;
        adv[t] = running;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Per-token `min(r·A, clip(r, 1-ε, 1+ε)·A)`.
pub fn clipped_surrogate_terms(ratios: &[f64], advantages: &[f64], eps: f64) -> Vec<f64> {
    ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| (r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a))
        .collect()
}

/// Negated mean clipped surrogate, ready for minimization.
pub fn clipped_policy_loss(
    new_logp: &[f64],
    old_logp: &[f64],
    advantages: &[f64],
    eps: f64,
) -> f64 {
    let ratios: Vec<f64> = new_logp
        .iter()
        .zip(old_logp)
        .map(|(n, o)| (n - o).exp())
        .collect();
    let terms = clipped_surrogate_terms(&ratios, advantages, eps);
    -terms.iter().sum::<f64>() / terms.len() as f64
}

/// `½·mean((R - V)²)`
pub fn value_loss(values_pred: &[f64], returns: &[f64]) -> f64 {
    let n = values_pred.len() as f64;
    values_pred
        .iter()
        .zip(returns)
        .map(|(v, r)| (r - v) * (r - v))
        .sum::<f64>()
        * 0.5
        / n
}

/// Log-probs of `response` following `context`, normalised without `banned`.
pub fn response_log_probs(
    params: &ParameterSet,
    cfg: &ModelConfig,
    context: &[usize],
    response: &[usize],
    banned: Option<usize>,
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let lp = taped_log_probs(&mut tape, &bound, cfg, context, response, banned)?;
    Ok(tape.value(lp).data().to_vec())
}

fn taped_log_probs(
    tape: &mut Tape,
    bound: &crate::params::BoundParams<'_>,
    cfg: &ModelConfig,
    context: &[usize],
    response: &[usize],
    banned: Option<usize>,
) -> Result<Var> {
    if context.is_empty() || response.is_empty() {
        return Err(Error::Data("context and response must be non-empty".into()));
    }
    let mut ids = context.to_vec();
    ids.extend_from_slice(&response[..response.len() - 1]);
    let h = forward_hidden(tape, bound, cfg, &ids)?;
    let start = context.len() - 1;
    let rows: Vec<usize> = (start..start + response.len()).collect();
    let h = tape.select_rows(h, &rows)?;
    let logits = logits_from_hidden(tape, bound, h)?;
    Ok(tape.token_log_probs(logits, response, banned)?)
}

/// Per-position values from the decoder for the states preceding each
/// response token.
fn critic_values(
    critic: &ParameterSet,
    cfg: &ModelConfig,
    context: &[usize],
    response: &[usize],
) -> Result<Vec<f64>> {
    let mut dec = Decoder::new(critic, cfg)?;
    let mut values = Vec::with_capacity(response.len());
    for (i, &t) in context
        .iter()
        .chain(&response[..response.len() - 1])
        .enumerate()
    {
        let h = dec.step(t)?;
        if i + 1 >= context.len() {
            values.push(dec.value(&h)?);
        }
    }
    Ok(values)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Statistics of one rollout + update cycle.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub step: usize,
    pub reward_mean: f64,
    pub critic_loss: f64,
    pub kl: f64,
    pub clip_frac: f64,
    pub mean_len: f64,
    pub policy_loss: f64,
    pub mean_ratio: f64,
    /// Clip fraction of the first minibatch, before any optimizer step.
    pub first_pass_clip_frac: f64,
    /// Largest `|r - 1|` in the first minibatch, before any optimizer step.
    pub first_pass_max_ratio_dev: f64,
}

/// PPO state: actor, critic, frozen reference and both optimizers.
pub struct PpoTrainer {
    pub model_cfg: ModelConfig,
    pub cfg: RLHFConfig,
    pub policy: ParameterSet,
    pub critic: ParameterSet,
    pub reference: ParameterSet,
    actor_opt: AdamW,
    critic_opt: AdamW,
    /// EOS is excluded from the policy distribution when set.
    pub suppress_eos: bool,
    rng: ChaCha8Rng,
    steps: usize,
}

impl PpoTrainer {
    pub fn new(
        model_cfg: ModelConfig,
        cfg: RLHFConfig,
        policy: ParameterSet,
        critic: ParameterSet,
        suppress_eos: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        let actor_opt = AdamW::new(AdamWConfig::with_lr(cfg.lr_actor), &policy);
        let critic_opt = AdamW::new(AdamWConfig::with_lr(cfg.lr_critic), &critic);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self {
            model_cfg,
            cfg,
            reference: policy.clone(),
            policy,
            critic,
            actor_opt,
            critic_opt,
            suppress_eos,
            rng,
            steps: 0,
        })
    }

    fn banned(&self) -> Option<usize> {
        self.suppress_eos.then_some(self.model_cfg.eos_token_id)
    }

    /// Samples one response per prompt from the current policy and fills in
    /// log-probs, values, shaped rewards and advantages.
    pub fn rollout(
        &mut self,
        judge: &dyn RewardSource,
        prompts: &[RolloutPrompt],
        max_new_tokens: usize,
    ) -> Result<Vec<Trajectory>> {
        let opts = SamplerOpts {
            temperature: self.cfg.temperature,
            suppress_eos: self.suppress_eos,
            max_new_tokens,
        };
        let mut out = Vec::with_capacity(prompts.len());
        for p in prompts {
            let response = generate(
                &self.policy,
                &self.model_cfg,
                &p.context,
                &opts,
                &mut self.rng,
            )?;
            out.push(self.score_trajectory(judge, p, response)?);
        }
        if self.cfg.normalize_advantages {
            normalize_advantages(&mut out);
        }
        Ok(out)
    }

    fn score_trajectory(
        &self,
        judge: &dyn RewardSource,
        p: &RolloutPrompt,
        response: Vec<usize>,
    ) -> Result<Trajectory> {
        let banned = self.banned();
        let old = response_log_probs(&self.policy, &self.model_cfg, &p.context, &response, banned)?;
        let reference = response_log_probs(
            &self.reference,
            &self.model_cfg,
            &p.context,
            &response,
            banned,
        )?;
        let values = critic_values(&self.critic, &self.model_cfg, &p.context, &response)?;
        let score = judge.score(&p.raw, &response)?;
        if !score.is_finite() {
            return Err(Error::Numeric(format!("reward source returned {score}")));
        }
        let kl: Vec<f64> = old.iter().zip(&reference).map(|(a, b)| a - b).collect();
        let rewards = shape_rewards(score, &kl, self.cfg.kl_coef);
        let (advantages, returns) = compute_gae(
            &rewards,
            &values,
            self.cfg.discount_factor,
            self.cfg.gae_lambda,
        )?;
        Ok(Trajectory {
            context: p.context.clone(),
            raw_prompt: p.raw.clone(),
            response,
            old_log_probs: old,
            ref_log_probs: reference,
            values,
            rewards,
            advantages,
            returns,
            rm_score: score,
        })
    }

    /// `ppo_epochs` passes of shuffled minibatch AdamW on the clipped policy
    /// loss (actor) and the value loss (critic). On a non-finite loss or
    /// gradient both networks are restored to their pre-epoch state.
    pub fn update(&mut self, trajectories: &[Trajectory]) -> Result<PpoStats> {
        if trajectories.is_empty() {
            return Err(Error::Data("no trajectories to learn from".into()));
        }
        let eps = self.cfg.clip_epsilon;
        let banned = self.banned();
        let mut ratio_sum = 0.0;
        let mut clipped = 0usize;
        let mut tokens = 0usize;
        let mut policy_losses = Vec::new();
        let mut critic_losses = Vec::new();
        let mut first_pass: Option<(f64, f64)> = None;
        let mut order: Vec<usize> = (0..trajectories.len()).collect();
        for _ in 0..self.cfg.ppo_epochs {
            let snapshot = (self.policy.clone(), self.critic.clone());
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.cfg.minibatch_size) {
                let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &trajectories[i]).collect();
                let result = self
                    .actor_step(&batch, banned, eps)
                    .and_then(|a| self.critic_step(&batch).map(|c| (a, c)));
                let (actor, closs) = match result {
                    Ok(v) => v,
                    Err(e) => {
                        self.policy = snapshot.0;
                        self.critic = snapshot.1;
                        return Err(e);
                    }
                };
                if first_pass.is_none() {
                    let dev = actor
                        .ratios
                        .iter()
                        .map(|r| (r - 1.0).abs())
                        .fold(0.0, f64::max);
                    let frac = actor
                        .ratios
                        .iter()
                        .filter(|r| (**r - 1.0).abs() > eps)
                        .count() as f64
                        / actor.ratios.len() as f64;
                    first_pass = Some((frac, dev));
                }
                ratio_sum += actor.ratios.iter().sum::<f64>();
                clipped += actor
                    .ratios
                    .iter()
                    .filter(|r| (**r - 1.0).abs() > eps)
                    .count();
                tokens += actor.ratios.len();
                policy_losses.push(actor.loss);
                critic_losses.push(closs);
            }
        }
        self.steps += 1;
        let scores: Vec<f64> = trajectories.iter().map(|t| t.rm_score).collect();
        let kls: Vec<f64> = trajectories.iter().map(|t| t.kl().iter().sum()).collect();
        let lens: Vec<f64> = trajectories.iter().map(|t| t.len() as f64).collect();
        let (fp_frac, fp_dev) = first_pass.unwrap_or((0.0, 0.0));
        Ok(PpoStats {
            step: self.steps,
            reward_mean: mean(&scores),
            critic_loss: mean(&critic_losses),
            kl: mean(&kls),
            clip_frac: if tokens > 0 {
                clipped as f64 / tokens as f64
            } else {
                0.0
            },
            mean_len: mean(&lens),
            policy_loss: mean(&policy_losses),
            mean_ratio: if tokens > 0 {
                ratio_sum / tokens as f64
            } else {
                1.0
            },
            first_pass_clip_frac: fp_frac,
            first_pass_max_ratio_dev: fp_dev,
        })
    }

    /// Rollout followed by update.
    pub fn step(
        &mut self,
        judge: &dyn RewardSource,
        prompts: &[RolloutPrompt],
        max_new_tokens: usize,
    ) -> Result<PpoStats> {
        let trajs = self.rollout(judge, prompts, max_new_tokens)?;
        self.update(&trajs)
    }

    fn actor_step(
        &mut self,
        batch: &[&Trajectory],
        banned: Option<usize>,
        eps: f64,
    ) -> Result<ActorOutcome> {
        let mut tape = Tape::new();
        let bound = self.policy.bind(&mut tape);
        let mut parts = Vec::with_capacity(batch.len());
        let mut old = Vec::new();
        let mut adv = Vec::new();
        for t in batch {
            parts.push(taped_log_probs(
                &mut tape,
                &bound,
                &self.model_cfg,
                &t.context,
                &t.response,
                banned,
            )?);
            old.extend_from_slice(&t.old_log_probs);
            adv.extend_from_slice(&t.advantages);
        }
        let lp = tape.concat(&parts)?;
        let ratios: Vec<f64> = tape
            .value(lp)
            .data()
            .iter()
            .zip(&old)
            .map(|(n, o)| (n - o).exp())
            .collect();
        let loss = tape.clipped_surrogate(lp, &old, &adv, eps)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("policy loss is {loss_value}")));
        }
        tape.backward(loss)?;
        let mut grads = bound.grads(&tape);
        drop(bound);
        self.apply(true, &mut grads)?;
        Ok(ActorOutcome {
            loss: loss_value,
            ratios,
        })
    }

    fn critic_step(&mut self, batch: &[&Trajectory]) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.critic.bind(&mut tape);
        let mut parts = Vec::with_capacity(batch.len());
        let mut targets = Vec::new();
        for t in batch {
            let h = forward_hidden(&mut tape, &bound, &self.model_cfg, &t.input_ids())?;
            let h = tape.select_rows(h, &t.response_rows())?;
            parts.push(values_from_hidden(&mut tape, &bound, h)?);
            targets.extend_from_slice(&t.returns);
        }
        let v = tape.concat(&parts)?;
        let loss = tape.half_mse(v, &targets)?;
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Numeric(format!("critic loss is {loss_value}")));
        }
        tape.backward(loss)?;
        let mut grads = bound.grads(&tape);
        drop(bound);
        self.apply(false, &mut grads)?;
        Ok(loss_value)
    }

    fn apply(&mut self, actor: bool, grads: &mut Gradients) -> Result<()> {
        if self.cfg.max_grad_norm > 0.0 {
            grads.clip_norm(self.cfg.max_grad_norm);
        }
        if actor {
            self.actor_opt.step(&mut self.policy, grads)
        } else {
            self.critic_opt.step(&mut self.critic, grads)
        }
    }
}

struct ActorOutcome {
    loss: f64,
    ratios: Vec<f64>,
}

/// Shifts and scales advantages over every token in the batch to mean 0,
/// std 1. A zero-variance batch is only centred.
pub fn normalize_advantages(trajs: &mut [Trajectory]) {
    let all: Vec<f64> = trajs
        .iter()
        .flat_map(|t| t.advantages.iter().copied())
        .collect();
    if all.is_empty() {
        return;
    }
    let m = mean(&all);
    let var = all.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / all.len() as f64;
    let sd = var.sqrt();
    for t in trajs.iter_mut() {
        for a in t.advantages.iter_mut() {
            *a = if sd > 1e-8 { (*a - m) / sd } else { *a - m };
        }
    }
}

/// Appends PPO stats rows (`step, reward_mean, critic_loss, kl, clip_frac, mean_len`).
pub fn write_stats_csv(stats: &[PpoStats], path: &Path) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_record([
        "step",
        "reward_mean",
        "critic_loss",
        "kl",
        "clip_frac",
        "mean_len",
    ])
    .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for s in stats {
        w.write_record([
            s.step.to_string(),
            s.reward_mean.to_string(),
            s.critic_loss.to_string(),
            s.kl.to_string(),
            s.clip_frac.to_string(),
            s.mean_len.to_string(),
        ])
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_single_step_and_zero_case() {
        for lambda in [0.0, 0.5, 1.0] {
            let (a, r) = compute_gae(&[1.0], &[0.0], 0.95, lambda).unwrap();
            assert_eq!(a, vec![1.0]);
            assert_eq!(r, vec![1.0]);
        }
        let (a, _) = compute_gae(&[0.0; 5], &[0.0; 5], 0.95, 0.95).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));
        assert!(compute_gae(&[0.0; 2], &[0.0; 3], 0.9, 0.9).is_err());
    }

    #[test]
    fn gae_three_steps_by_hand() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, -0.3];
        let (g, l) = (0.9, 0.8);
        let d2 = 2.0 - (-0.3);
        let d1 = -1.0 + g * -0.3 - 0.2;
        let d0 = 0.5 + g * 0.2 - 0.1;
        let a2 = d2;
        let a1 = d1 + g * l * a2;
        let a0 = d0 + g * l * a1;
        let (a, ret) = compute_gae(&r, &v, g, l).unwrap();
        for (x, y) in a.iter().zip([a0, a1, a2]) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((ret[0] - (a0 + 0.1)).abs() < 1e-14);
    }

    #[test]
    fn clipped_terms_at_reference_points() {
        let t = clipped_surrogate_terms(&[1.0, 1.5, 0.5], &[1.0, 1.0, -2.0], 0.2);
        assert_eq!(t[0], 1.0);
        assert_eq!(t[1], 1.2);
        assert_eq!(t[2], -1.6);
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(value_loss(&[0.0], &[1.0]), 0.5);
        let p = [0.3, -1.2, 0.0, 2.2, 0.7];
        let r = [1.0, -1.0, 0.5, 2.0, -0.1];
        let direct = p
            .iter()
            .zip(&r)
            .map(|(a, b): (&f64, &f64)| 0.5 * (b - a).powi(2))
            .sum::<f64>()
            / 5.0;
        assert!((value_loss(&p, &r) - direct).abs() < 1e-15);
    }

    #[test]
    fn shaping_puts_score_on_last_token() {
        let r = shape_rewards(2.0, &[0.1, -0.2, 0.3], 0.5);
        assert_eq!(r, vec![-0.05, 0.1, -0.15 + 2.0]);
        assert_eq!(shape_rewards(2.0, &[0.4, 0.4], 0.0), vec![0.0, 2.0]);
    }

    #[test]
    fn config_validation() {
        assert!(RLHFConfig::default().validate().is_ok());
        assert!(RLHFConfig {
            clip_epsilon: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RLHFConfig {
            discount_factor: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(RLHFConfig {
            gae_lambda: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        let p = RLHFConfig::large_model_preset();
        assert_eq!(
            (p.lr_actor, p.lr_critic, p.clip_epsilon, p.discount_factor),
            (5e-6, 5e-7, 0.2, 0.95)
        );
    }
}
