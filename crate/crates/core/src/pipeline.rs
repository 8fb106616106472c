//! End-to-end run: data, base pretraining, SFT, reward model, coarse actor,
//! merge, sweep and evaluation, with every artifact written to one directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::save_checkpoint;
use crate::coarse::{train_coarse, write_trace_csv, CoarseConfig, PromptMode};
use crate::data::{
    gen_corpus, gen_preference_pairs, gen_sft_examples, strip_stop_tokens, write_docs,
    write_token_pairs, PreferencePair, SyntheticTaskSpec, TokenSequence,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, tally, EvalReport, EvalSuite, WinRate};
use crate::merge::{
    best_reward_gamma, default_grid, merge_params, sweep_gamma, write_sweep_csv, SweepInputs,
    SweepRow, DEFAULT_GAMMA,
};
use crate::model::{init_params, ModelConfig};
use crate::params::ParameterSet;
use crate::ppo::{write_stats_csv, PpoTrainer, RLHFConfig, RewardSource, RolloutPrompt};
use crate::reward::{train_reward, RewardConfig, RewardModel, RewardReport};
use crate::sft::{pretrain, train_sft, SFTConfig};

/// Stage seed: the first eight bytes of `sha256(global_seed_le ‖ stage)`.
pub fn derive_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSizes {
    pub corpus_docs: usize,
    pub sft_docs: usize,
    pub pref_train: usize,
    pub pref_heldout: usize,
    pub heldout_docs: usize,
}

impl Default for DataSizes {
    fn default() -> Self {
        Self {
            corpus_docs: 2000,
            sft_docs: 500,
            pref_train: 2000,
            pref_heldout: 500,
            heldout_docs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub task: SyntheticTaskSpec,
    pub data: DataSizes,
    pub pretrain: SFTConfig,
    pub sft: SFTConfig,
    pub reward: RewardConfig,
    pub rlhf: RLHFConfig,
    pub coarse: CoarseConfig,
    pub gamma: f64,
    pub sweep_grid: Vec<f64>,
    /// Decoding for SFT, merged and sweep evaluation (EOS allowed).
    pub eval: EvalSuite,
    /// Also train a PPO model on top of SFT and merge it with SFT as a control.
    pub control_fine: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            model: ModelConfig::desk(),
            task: SyntheticTaskSpec::default(),
            data: DataSizes::default(),
            pretrain: SFTConfig {
                lr: 1e-3,
                epochs: 3,
                batch_size: 16,
                ..SFTConfig::default()
            },
            sft: SFTConfig {
                lr: 3e-4,
                epochs: 3,
                ..SFTConfig::default()
            },
            reward: RewardConfig {
                heldout_frac: 0.0,
                epochs: 2,
                ..RewardConfig::default()
            },
            // At desk scale the default rates barely move the policy in 60 steps.
            rlhf: RLHFConfig {
                lr_actor: 1e-3,
                lr_critic: 1e-4,
                ..RLHFConfig::default()
            },
            coarse: CoarseConfig {
                steps: 60,
                ..CoarseConfig::default()
            },
            gamma: DEFAULT_GAMMA,
            sweep_grid: default_grid(),
            eval: EvalSuite::default(),
            control_fine: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.sft.validate()?;
        self.rlhf.validate()?;
        self.coarse.cm.validate()?;
        if !(0.0..=1.0).contains(&self.gamma)
            || self.sweep_grid.iter().any(|g| !(0.0..=1.0).contains(g))
        {
            return Err(Error::Config(
                "merge coefficients must lie in [0, 1]".into(),
            ));
        }
        if self.sft.max_response_len >= self.coarse.cm.l_max {
            return Err(Error::Config(
                "sft.max_response_len must be below the coarse l_max".into(),
            ));
        }
        if self.eval.n_prompts == 0 || self.eval.n_prompts > self.data.pref_heldout {
            return Err(Error::Config(
                "eval.n_prompts must be in 1..=data.pref_heldout".into(),
            ));
        }
        if self.data.pref_train == 0
            || self.data.corpus_docs == 0
            || self.data.sft_docs == 0
            || self.data.heldout_docs == 0
        {
            return Err(Error::Config(
                "every data split needs at least one item".into(),
            ));
        }
        Ok(())
    }

    /// Applies `key=value` overrides where `key` is a dotted path into the
    /// config and `value` is JSON (bare strings are accepted).
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for (key, raw) in overrides {
            let value: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            let mut cur = &mut v;
            for part in key.split('.') {
                cur = cur
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
            }
            *cur = value;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("invalid override: {e}")))
    }
}

/// Files written by [`run_pipeline`], relative to the output directory.
pub const ARTIFACTS: &[&str] = &[
    "run_config.json",
    "data/corpus.jsonl",
    "data/sft.jsonl",
    "data/preferences_train.jsonl",
    "data/preferences_heldout.jsonl",
    "data/heldout_corpus.jsonl",
    "base.ckpt",
    "sft.ckpt",
    "reward.ckpt",
    "coarse.ckpt",
    "fine.ckpt",
    "cm_trace.csv",
    "ppo_stats.csv",
    "sweep.csv",
    "eval_sft.json",
    "eval_coarse.json",
    "eval_fine.json",
    "summary.json",
];

/// Extra files when `control_fine` is on.
pub const CONTROL_ARTIFACTS: &[&str] =
    &["plus.ckpt", "control_fine.ckpt", "eval_control_fine.json"];

pub fn declared_artifacts(cfg: &RunConfig) -> Vec<&'static str> {
    let mut v = ARTIFACTS.to_vec();
    if cfg.control_fine {
        v.extend_from_slice(CONTROL_ARTIFACTS);
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub reward: RewardReport,
    pub final_limit: usize,
    pub limit_increases: usize,
    pub gamma: f64,
    pub winrate_fine_vs_sft: WinRate,
    pub winrate_fine_vs_control: Option<WinRate>,
    pub best_reward_gamma: Option<f64>,
    pub sft: EvalReport,
    pub coarse: EvalReport,
    pub fine: EvalReport,
    pub sweep: Vec<SweepRow>,
}

/// The synthetic datasets of one run.
pub struct Datasets {
    pub corpus: Vec<TokenSequence>,
    pub sft: Vec<TokenSequence>,
    pub pref_train: Vec<PreferencePair>,
    pub pref_heldout: Vec<PreferencePair>,
    pub heldout_corpus: Vec<TokenSequence>,
}

pub fn make_datasets(cfg: &RunConfig) -> Result<Datasets> {
    let (m, t, d, s) = (&cfg.model, &cfg.task, &cfg.data, cfg.seed);
    Ok(Datasets {
        corpus: gen_corpus(m, t, d.corpus_docs, derive_seed(s, "datagen.corpus"))?,
        sft: gen_sft_examples(m, t, d.sft_docs, derive_seed(s, "datagen.sft"))?,
        pref_train: gen_preference_pairs(m, t, d.pref_train, derive_seed(s, "datagen.pref_train"))?,
        pref_heldout: gen_preference_pairs(
            m,
            t,
            d.pref_heldout,
            derive_seed(s, "datagen.pref_heldout"),
        )?,
        heldout_corpus: gen_corpus(
            m,
            t,
            d.heldout_docs,
            derive_seed(s, "datagen.heldout_corpus"),
        )?,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn log(msg: &str) {
    eprintln!("[c2f] {msg}");
}

/// Decoding suite for the coarse actor: EOS banned, system prompt on, and
/// exactly `limit` tokens.
pub fn coarse_suite(base: &EvalSuite, limit: usize) -> EvalSuite {
    EvalSuite {
        suppress_eos: true,
        system_prompt: Some(PromptMode::Synthetic),
        max_new_tokens: limit,
        ..base.clone()
    }
}

/// PPO on top of the SFT model with ordinary decoding: no EOS suppression,
/// no system prompt, fixed length budget.
pub fn train_plus(
    sft: &ParameterSet,
    cfg: &ModelConfig,
    rm: &dyn RewardSource,
    prompts: &[PreferencePair],
    rlhf: &RLHFConfig,
    steps: usize,
    max_new_tokens: usize,
) -> Result<ParameterSet> {
    let critic = crate::model::with_value_head(cfg, sft)?;
    let mut trainer = PpoTrainer::new(cfg.clone(), rlhf.clone(), sft.clone(), critic, false)?;
    let all: Vec<RolloutPrompt> = prompts
        .iter()
        .map(|p| {
            let mut context = p.prompt.clone();
            context.push(cfg.sep_token_id);
            RolloutPrompt {
                context,
                raw: p.prompt.clone(),
            }
        })
        .collect();
    for step in 0..steps {
        let start = (step * rlhf.rollout_batch) % all.len();
        let batch: Vec<RolloutPrompt> = (0..rlhf.rollout_batch)
            .map(|i| all[(start + i) % all.len()].clone())
            .collect();
        trainer.step(rm, &batch, max_new_tokens)?;
    }
    Ok(trainer.policy)
}

/// Runs every stage and writes [`declared_artifacts`] into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Summary> {
    stage("config", cfg.validate())?;
    let out = &cfg.output_dir;
    let data_dir = out.join("data");
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;
    write_json(cfg, &out.join("run_config.json"))?;
    let m = &cfg.model;

    log("datagen");
    let ds = stage("datagen", make_datasets(cfg))?;
    write_docs(&ds.corpus, &data_dir.join("corpus.jsonl"))?;
    write_docs(&ds.sft, &data_dir.join("sft.jsonl"))?;
    write_token_pairs(&ds.pref_train, &data_dir.join("preferences_train.jsonl"))?;
    write_token_pairs(
        &ds.pref_heldout,
        &data_dir.join("preferences_heldout.jsonl"),
    )?;
    write_docs(&ds.heldout_corpus, &data_dir.join("heldout_corpus.jsonl"))?;

    log("pretrain base");
    let init = stage("pretrain", init_params(m, derive_seed(cfg.seed, "init")))?;
    let pre_cfg = SFTConfig {
        seed: derive_seed(cfg.seed, "pretrain"),
        ..cfg.pretrain.clone()
    };
    let base = stage("pretrain", pretrain(&init, m, &ds.corpus, &pre_cfg))?;
    base.warnings.iter().for_each(|w| log(w));
    let base = base.params;
    save_checkpoint(&base, m, &out.join("base.ckpt"))?;

    log("sft");
    let sft_cfg = SFTConfig {
        seed: derive_seed(cfg.seed, "sft"),
        ..cfg.sft.clone()
    };
    let sft = stage("sft", train_sft(&base, m, &ds.sft, &sft_cfg))?;
    sft.warnings.iter().for_each(|w| log(w));
    let sft = sft.params;
    save_checkpoint(&sft, m, &out.join("sft.ckpt"))?;

    log("reward model");
    let rw_cfg = RewardConfig {
        seed: derive_seed(cfg.seed, "reward"),
        ..cfg.reward.clone()
    };
    let (rm, mut rm_report) = stage("reward", train_reward(&base, m, &ds.pref_train, &rw_cfg))?;
    let (acc, margin) = stage(
        "reward",
        crate::reward::pairwise_accuracy(&rm, &ds.pref_heldout),
    )?;
    rm_report.heldout_accuracy = acc;
    rm_report.heldout_margin = margin;
    rm_report.heldout_pairs = ds.pref_heldout.len();
    log(&format!("reward held-out accuracy {acc:.3}"));
    save_checkpoint(&rm.params, m, &out.join("reward.ckpt"))?;

    log("coarse actor");
    let stripped = strip_stop_tokens(&ds.pref_train, m.eos_token_id);
    let rl_cfg = RLHFConfig {
        seed: derive_seed(cfg.seed, "coarse"),
        ..cfg.rlhf.clone()
    };
    let coarse = stage(
        "coarse",
        train_coarse(&base, m, &rm, &stripped, &rl_cfg, &cfg.coarse),
    )?;
    write_trace_csv(&coarse.trace, &out.join("cm_trace.csv"))?;
    write_stats_csv(&coarse.stats, &out.join("ppo_stats.csv"))?;
    save_checkpoint(&coarse.params, m, &out.join("coarse.ckpt"))?;
    let final_limit = coarse
        .trace
        .last()
        .map_or(cfg.coarse.cm.l_init, |r| r.limit);
    let limit_increases = coarse
        .trace
        .iter()
        .filter(|r| r.limit > r.limit_used)
        .count();

    log("merge");
    let fine = stage("merge", merge_params(&coarse.params, &sft, cfg.gamma))?;
    save_checkpoint(&fine, m, &out.join("fine.ckpt"))?;

    log("evaluate");
    let prompts: Vec<Vec<usize>> = ds
        .pref_heldout
        .iter()
        .take(cfg.eval.n_prompts)
        .map(|p| p.prompt.clone())
        .collect();
    let suite = EvalSuite {
        seed: derive_seed(cfg.seed, "eval"),
        ..cfg.eval.clone()
    };
    let ev = |id: &str, p: &ParameterSet, s: &EvalSuite| {
        stage(
            "evaluate",
            evaluate_model(id, p, m, &rm, &prompts, &ds.heldout_corpus, s),
        )
    };
    let sft_run = ev("sft", &sft, &suite)?;
    let coarse_run = ev("coarse", &coarse.params, &coarse_suite(&suite, final_limit))?;
    let fine_run = ev(&format!("fine-{}", cfg.gamma), &fine, &suite)?;
    write_json(&sft_run.report, &out.join("eval_sft.json"))?;
    write_json(&coarse_run.report, &out.join("eval_coarse.json"))?;
    write_json(&fine_run.report, &out.join("eval_fine.json"))?;
    let winrate_fine_vs_sft = tally(&fine_run.rewards, &sft_run.rewards);

    log("gamma sweep");
    let inputs = SweepInputs {
        cfg: m,
        rm: &rm,
        prompts: &prompts,
        heldout_docs: &ds.heldout_corpus,
        suite: &suite,
    };
    let sweep = stage(
        "sweep",
        sweep_gamma(&coarse.params, &sft, &cfg.sweep_grid, &inputs),
    )?;
    write_sweep_csv(&sweep, &out.join("sweep.csv"))?;

    let mut winrate_fine_vs_control = None;
    if cfg.control_fine {
        log("control: PPO on SFT, merged with SFT");
        let plus_cfg = RLHFConfig {
            seed: derive_seed(cfg.seed, "plus"),
            ..cfg.rlhf.clone()
        };
        let plus = stage(
            "control",
            train_plus(
                &sft,
                m,
                &rm,
                &stripped,
                &plus_cfg,
                cfg.coarse.steps,
                cfg.coarse.cm.l_max,
            ),
        )?;
        save_checkpoint(&plus, m, &out.join("plus.ckpt"))?;
        let control = stage("control", merge_params(&plus, &sft, cfg.gamma))?;
        save_checkpoint(&control, m, &out.join("control_fine.ckpt"))?;
        let control_run = ev("control-fine", &control, &suite)?;
        write_json(&control_run.report, &out.join("eval_control_fine.json"))?;
        winrate_fine_vs_control = Some(tally(&fine_run.rewards, &control_run.rewards));
    }

    let summary = Summary {
        seed: cfg.seed,
        reward: rm_report,
        final_limit,
        limit_increases,
        gamma: cfg.gamma,
        winrate_fine_vs_sft,
        winrate_fine_vs_control,
        best_reward_gamma: best_reward_gamma(&sweep),
        sft: sft_run.report,
        coarse: coarse_run.report,
        fine: fine_run.report,
        sweep,
    };
    write_json(&summary, &out.join("summary.json"))?;
    Ok(summary)
}

/// Loads a reward model checkpoint as a scorer.
pub fn reward_model_from(ck: crate::checkpoint::Checkpoint) -> Result<RewardModel> {
    RewardModel::from_params(&ck.config, &ck.params)
}
