use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use c2f_core::checkpoint::{load_checkpoint, load_checkpoint_with, save_checkpoint, Checkpoint};
use c2f_core::coarse::{self, train_coarse, write_trace_csv, PromptMode, SYSTEM_PROMPT};
use c2f_core::data::{
    decode_bytes, encode_bytes, ingest_jsonl, read_docs, read_token_pairs, strip_stop_tokens,
    write_docs, write_token_pairs,
};
use c2f_core::eval::{evaluate_model, EvalSuite};
use c2f_core::merge::{check_compatibility, merge, sweep_gamma, write_sweep_csv, SweepInputs};
use c2f_core::model::init_params;
use c2f_core::pipeline::{
    coarse_suite, derive_seed, make_datasets, reward_model_from, run_pipeline, RunConfig,
};
use c2f_core::ppo::{write_stats_csv, RLHFConfig};
use c2f_core::reward::{pairwise_accuracy, train_reward, RewardConfig};
use c2f_core::sampling::{generate, SamplerOpts};
use c2f_core::sft::{pretrain, train_sft, SFTConfig};
use c2f_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

#[derive(Parser)]
#[command(name = "c2f", version, about = "Coarse-to-fine RLHF at desk scale")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set rlhf.clip_epsilon=0.1`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic datasets, or convert a text preference file.
    Datagen(DatagenArgs),
    /// Language-model pretraining of the base model on the corpus.
    Pretrain(PretrainArgs),
    /// Supervised fine-tuning toward short EOS-terminated responses.
    TrainSft(TrainSftArgs),
    /// Train the reward model on preference pairs.
    TrainReward(TrainRewardArgs),
    /// PPO from the base model with EOS suppression and length scheduling.
    TrainCoarse(TrainCoarseArgs),
    /// Interpolate coarse and SFT checkpoints.
    Merge(MergeArgs),
    /// Merge and evaluate over a grid of coefficients.
    SweepGamma(SweepArgs),
    /// Write an evaluation report for one checkpoint.
    Evaluate(EvaluateArgs),
    /// Decode from a checkpoint.
    Generate(GenerateArgs),
    /// Run every stage end to end.
    RunPipeline(PipelineArgs),
}

#[derive(Args)]
struct DatagenArgs {
    /// Output directory (the synthetic files go in `<out>/data`).
    #[arg(long)]
    out: PathBuf,
    /// Convert a `{"prompt","chosen","rejected"}` text JSONL file instead of generating.
    #[arg(long)]
    text_input: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct TrainSftArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_response_len: Option<usize>,
}

#[derive(Args)]
struct TrainRewardArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    /// Pairs for held-out accuracy; otherwise `reward.heldout_frac` of `--pairs` is held out.
    #[arg(long)]
    heldout: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct TrainCoarseArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    reward: PathBuf,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    l_init: Option<usize>,
    #[arg(long)]
    l_max: Option<usize>,
}

#[derive(Args)]
struct MergeArgs {
    #[arg(long)]
    coarse: PathBuf,
    #[arg(long)]
    sft: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalInputs {
    #[arg(long)]
    reward: PathBuf,
    /// Preference pairs whose prompts are used (token JSONL).
    #[arg(long)]
    prompts: PathBuf,
    #[arg(long)]
    heldout_corpus: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    coarse: PathBuf,
    #[arg(long)]
    sft: PathBuf,
    #[command(flatten)]
    inputs: EvalInputs,
    /// Comma-separated coefficients (default 0.1,...,0.9).
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    inputs: EvalInputs,
    /// Decode as the coarse actor: EOS banned, system prompt, `--limit` tokens.
    #[arg(long)]
    coarse_mode: bool,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    /// Print the system prompt and exit.
    #[arg(long)]
    show_system_prompt: bool,
    #[arg(long, required_unless_present = "show_system_prompt")]
    model: Option<PathBuf>,
    /// Space-separated token ids.
    #[arg(long, conflicts_with = "text")]
    tokens: Option<String>,
    /// Text prompt, byte-tokenized (for byte-level models).
    #[arg(long)]
    text: Option<String>,
    #[arg(long, default_value_t = 32)]
    max_new_tokens: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long)]
    suppress_eos: bool,
    /// Prepend the system prompt (synthetic prefix for token prompts, text for `--text`).
    #[arg(long)]
    system_prompt: bool,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load_config(cli: &Cli, extra: &[(String, String)]) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let mut overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_err(format!("`--set {kv}` is not KEY=VALUE")))?;
        overrides.push((k.to_string(), v.to_string()));
    }
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), s.to_string()));
    }
    overrides.extend_from_slice(extra);
    let cfg = base.with_overrides(&overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn opt<T: ToString>(key: &str, v: &Option<T>) -> Option<(String, String)> {
    v.as_ref().map(|x| (key.to_string(), x.to_string()))
}

fn write_json<T: serde::Serialize>(v: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn eval_prompts(path: &Path, n: usize) -> Result<Vec<Vec<usize>>> {
    Ok(read_token_pairs(path)?
        .into_iter()
        .take(n)
        .map(|p| p.prompt)
        .collect())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Datagen(a) => {
            let cfg = load_config(&cli, &[])?;
            let data = a.out.join("data");
            fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;
            if let Some(input) = &a.text_input {
                let report = ingest_jsonl(input)?;
                for (line, why) in &report.warnings {
                    eprintln!("warning: {}:{line}: {why}", input.display());
                }
                write_token_pairs(&report.pairs, &data.join("preferences_text.jsonl"))?;
                println!(
                    "{} pairs, {} skipped",
                    report.pairs.len(),
                    report.warnings.len()
                );
                return Ok(());
            }
            let ds = make_datasets(&cfg)?;
            write_docs(&ds.corpus, &data.join("corpus.jsonl"))?;
            write_docs(&ds.sft, &data.join("sft.jsonl"))?;
            write_token_pairs(&ds.pref_train, &data.join("preferences_train.jsonl"))?;
            write_token_pairs(&ds.pref_heldout, &data.join("preferences_heldout.jsonl"))?;
            write_docs(&ds.heldout_corpus, &data.join("heldout_corpus.jsonl"))?;
            println!("wrote synthetic data to {}", data.display());
        }
        Cmd::Pretrain(a) => {
            let cfg = load_config(
                &cli,
                &[opt("pretrain.epochs", &a.epochs), opt("pretrain.lr", &a.lr)]
                    .into_iter()
                    .flatten()
                    .collect::<Vec<_>>(),
            )?;
            let docs = read_docs(&a.corpus)?;
            let init = init_params(&cfg.model, derive_seed(cfg.seed, "init"))?;
            let tc = SFTConfig {
                seed: derive_seed(cfg.seed, "pretrain"),
                ..cfg.pretrain.clone()
            };
            let out = pretrain(&init, &cfg.model, &docs, &tc)?;
            out.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            ensure_parent(&a.out)?;
            save_checkpoint(&out.params, &cfg.model, &a.out)?;
            println!("epoch losses {:?}", out.epoch_losses);
        }
        Cmd::TrainSft(a) => {
            let extra: Vec<_> = [
                opt("sft.epochs", &a.epochs),
                opt("sft.lr", &a.lr),
                opt("sft.max_response_len", &a.max_response_len),
            ]
            .into_iter()
            .flatten()
            .collect();
            let cfg = load_config(&cli, &extra)?;
            let base = load_checkpoint_with(&a.base, &cfg.model)?;
            let docs = read_docs(&a.data)?;
            let tc = SFTConfig {
                seed: derive_seed(cfg.seed, "sft"),
                ..cfg.sft.clone()
            };
            let out = train_sft(&base.params, &cfg.model, &docs, &tc)?;
            out.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            ensure_parent(&a.out)?;
            save_checkpoint(&out.params, &cfg.model, &a.out)?;
            println!("epoch losses {:?}", out.epoch_losses);
        }
        Cmd::TrainReward(a) => {
            let cfg = load_config(
                &cli,
                &opt("reward.epochs", &a.epochs)
                    .into_iter()
                    .collect::<Vec<_>>(),
            )?;
            let base = load_checkpoint_with(&a.base, &cfg.model)?;
            let pairs = read_token_pairs(&a.pairs)?;
            let rc = RewardConfig {
                seed: derive_seed(cfg.seed, "reward"),
                heldout_frac: if a.heldout.is_some() {
                    0.0
                } else {
                    cfg.reward.heldout_frac
                },
                ..cfg.reward.clone()
            };
            let (rm, mut report) = train_reward(&base.params, &cfg.model, &pairs, &rc)?;
            if let Some(h) = &a.heldout {
                let held = read_token_pairs(h)?;
                let (acc, margin) = pairwise_accuracy(&rm, &held)?;
                report.heldout_accuracy = acc;
                report.heldout_margin = margin;
                report.heldout_pairs = held.len();
            }
            ensure_parent(&a.out)?;
            save_checkpoint(&rm.params, &cfg.model, &a.out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
        }
        Cmd::TrainCoarse(a) => {
            let extra: Vec<_> = [
                opt("coarse.steps", &a.steps),
                opt("coarse.cm.l_init", &a.l_init),
                opt("coarse.cm.l_max", &a.l_max),
            ]
            .into_iter()
            .flatten()
            .collect();
            let cfg = load_config(&cli, &extra)?;
            let base = load_checkpoint_with(&a.base, &cfg.model)?;
            let rm = reward_model_from(load_checkpoint_with(&a.reward, &cfg.model)?)?;
            let pairs = strip_stop_tokens(&read_token_pairs(&a.pairs)?, cfg.model.eos_token_id);
            let rl = RLHFConfig {
                seed: derive_seed(cfg.seed, "coarse"),
                ..cfg.rlhf.clone()
            };
            let out = train_coarse(&base.params, &cfg.model, &rm, &pairs, &rl, &cfg.coarse)?;
            ensure_parent(&a.out)?;
            save_checkpoint(&out.params, &cfg.model, &a.out)?;
            if let Some(p) = &a.trace {
                write_trace_csv(&out.trace, p)?;
            }
            if let Some(p) = &a.stats {
                write_stats_csv(&out.stats, p)?;
            }
            let last = out.trace.last().map_or(cfg.coarse.cm.l_init, |r| r.limit);
            println!("final length limit {last}");
        }
        Cmd::Merge(a) => {
            let cfg = load_config(
                &cli,
                &opt("gamma", &a.gamma).into_iter().collect::<Vec<_>>(),
            )?;
            let c = load_checkpoint(&a.coarse)?;
            let s = load_checkpoint(&a.sft)?;
            if let Err(report) = check_compatibility(&c, &s) {
                return Err(config_err(format!(
                    "checkpoints are incompatible: {report}"
                )));
            }
            let fine = merge(&c, &s, cfg.gamma)?;
            ensure_parent(&a.out)?;
            fs::write(&a.out, fine.to_bytes()).map_err(|e| Error::io(&a.out, e))?;
            println!("merged with gamma {}", cfg.gamma);
        }
        Cmd::SweepGamma(a) => {
            let cfg = load_config(&cli, &[])?;
            let c = load_checkpoint_with(&a.coarse, &cfg.model)?;
            let s = load_checkpoint_with(&a.sft, &cfg.model)?;
            let rm = reward_model_from(load_checkpoint_with(&a.inputs.reward, &cfg.model)?)?;
            let prompts = eval_prompts(&a.inputs.prompts, cfg.eval.n_prompts)?;
            let docs = read_docs(&a.inputs.heldout_corpus)?;
            let suite = EvalSuite {
                seed: derive_seed(cfg.seed, "eval"),
                ..cfg.eval.clone()
            };
            let grid = a.grid.clone().unwrap_or_else(|| cfg.sweep_grid.clone());
            let inputs = SweepInputs {
                cfg: &cfg.model,
                rm: &rm,
                prompts: &prompts,
                heldout_docs: &docs,
                suite: &suite,
            };
            let rows = sweep_gamma(&c.params, &s.params, &grid, &inputs)?;
            ensure_parent(&a.out)?;
            write_sweep_csv(&rows, &a.out)?;
            for r in &rows {
                println!(
                    "{:.2}  reward {:.4}  redundancy {:.4}  len {:.2}",
                    r.gamma, r.mean_reward, r.redundancy_4gram, r.mean_len
                );
            }
        }
        Cmd::Evaluate(a) => {
            let cfg = load_config(&cli, &[])?;
            let model = load_checkpoint_with(&a.model, &cfg.model)?;
            let rm = reward_model_from(load_checkpoint_with(&a.inputs.reward, &cfg.model)?)?;
            let prompts = eval_prompts(&a.inputs.prompts, cfg.eval.n_prompts)?;
            let docs = read_docs(&a.inputs.heldout_corpus)?;
            let mut suite = EvalSuite {
                seed: derive_seed(cfg.seed, "eval"),
                ..cfg.eval.clone()
            };
            if a.coarse_mode {
                suite = coarse_suite(&suite, a.limit.unwrap_or(cfg.coarse.cm.l_max));
            }
            let id =
                a.id.clone()
                    .unwrap_or_else(|| a.model.display().to_string());
            let run = evaluate_model(&id, &model.params, &cfg.model, &rm, &prompts, &docs, &suite)?;
            ensure_parent(&a.out)?;
            write_json(&run.report, &a.out)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&run.report).expect("serializable")
            );
        }
        Cmd::Generate(a) => {
            if a.show_system_prompt {
                println!("{SYSTEM_PROMPT}");
                return Ok(());
            }
            let path = a.model.as_ref().expect("clap enforces --model");
            let Checkpoint { config, params } = load_checkpoint(path)?;
            let (mut ids, text_mode) = match (&a.tokens, &a.text) {
                (Some(t), _) => (
                    t.split_whitespace()
                        .map(|x| {
                            x.parse::<usize>()
                                .map_err(|_| config_err(format!("bad token id `{x}`")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                    false,
                ),
                (None, Some(s)) => (encode_bytes(s), true),
                (None, None) => return Err(config_err("give --tokens or --text")),
            };
            if a.system_prompt {
                let mode = if text_mode {
                    PromptMode::Text
                } else {
                    PromptMode::Synthetic
                };
                ids = coarse::apply_system_prompt(&ids, &config, mode, a.max_new_tokens + 1)?;
            }
            ids.push(config.sep_token_id);
            config.check_ids(&ids)?;
            let cfg = load_config(&cli, &[])?;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "generate"));
            let opts = SamplerOpts {
                temperature: a.temperature,
                suppress_eos: a.suppress_eos,
                max_new_tokens: a.max_new_tokens,
            };
            let out = generate(&params, &config, &ids, &opts, &mut rng)?;
            if text_mode {
                let body: Vec<usize> = out
                    .iter()
                    .copied()
                    .filter(|&t| t >= c2f_core::data::TEXT_BYTE_OFFSET)
                    .collect();
                println!("{}", decode_bytes(&body)?);
            } else {
                println!(
                    "{}",
                    out.iter()
                        .map(|t| t.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                );
            }
        }
        Cmd::RunPipeline(a) => {
            let extra: Vec<_> = a
                .out
                .as_ref()
                .map(|p| {
                    (
                        "output_dir".to_string(),
                        serde_json::to_string(p).expect("path serializes"),
                    )
                })
                .into_iter()
                .collect();
            let cfg = load_config(&cli, &extra)?;
            let s = run_pipeline(&cfg)?;
            println!(
                "reward acc {:.3}  final limit {}  fine-vs-sft win {:.3}  best gamma {:?}",
                s.reward.heldout_accuracy,
                s.final_limit,
                s.winrate_fine_vs_sft.a_wins,
                s.best_reward_gamma
            );
            println!("artifacts in {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
