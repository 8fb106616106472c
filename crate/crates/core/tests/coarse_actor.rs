mod common;

use c2f_core::coarse::{
    apply_system_prompt, cm_step, coarse_context, suppressed_sample, train_coarse, CMConfig,
    CMState, CoarseConfig, GateMode, PromptMode, SYSTEM_PROMPT,
};
use c2f_core::data::{encode_bytes, PreferencePair};
use c2f_core::model::{init_params, ModelConfig};
use c2f_core::ppo::RLHFConfig;
use common::staircase;
use proptest::prelude::*;

fn small_cfg() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        d_ff: 32,
        n_layers: 1,
        max_context: 48,
        ..ModelConfig::desk()
    }
}

fn cm(tau: f64) -> CMConfig {
    CMConfig {
        l_init: 4,
        l_max: 12,
        delta_l: 2,
        window: 3,
        reward_std_threshold: tau,
        critic_fluct_threshold: tau,
        ..CMConfig::default()
    }
}

fn pairs() -> Vec<PreferencePair> {
    (0..6)
        .map(|i| PreferencePair {
            prompt: vec![10 + i, 20 + i],
            chosen: vec![30, 31],
            rejected: vec![40, 41],
        })
        .collect()
}

fn coarse_run(tau: f64, steps: usize) -> Vec<usize> {
    let cfg = small_cfg();
    let base = init_params(&cfg, 2).unwrap();
    let rl = RLHFConfig {
        rollout_batch: 4,
        minibatch_size: 2,
        ppo_epochs: 1,
        seed: 1,
        ..RLHFConfig::default()
    };
    let judge = |_: &[usize], r: &[usize]| r.iter().filter(|&&t| t == 30).count() as f64;
    let cc = CoarseConfig {
        steps,
        cm: cm(tau),
        ..CoarseConfig::default()
    };
    let out = train_coarse(&base, &cfg, &judge, &pairs(), &rl, &cc).unwrap();
    for row in &out.trace {
        assert_eq!(
            row.mean_len, row.limit_used as f64,
            "suppressed rollouts fill the limit"
        );
    }
    out.trace.iter().map(|r| r.limit).collect()
}

#[test]
fn zero_threshold_keeps_the_initial_limit() {
    assert_eq!(coarse_run(0.0, 10), vec![4; 10]);
}

#[test]
fn infinite_threshold_climbs_the_staircase() {
    let got = coarse_run(f64::INFINITY, 10);
    let want: Vec<usize> = (1..=10).map(|t| staircase(t, 4, 2, 3, 12)).collect();
    assert_eq!(got, want);
    assert_eq!(want, vec![4, 4, 6, 8, 10, 12, 12, 12, 12, 12]);
}

#[test]
fn coarse_training_rejects_pairs_with_eos() {
    let cfg = small_cfg();
    let mut p = pairs();
    p[2].chosen.push(cfg.eos_token_id);
    let judge = |_: &[usize], _: &[usize]| 0.0;
    let cc = CoarseConfig {
        steps: 1,
        cm: cm(0.5),
        ..CoarseConfig::default()
    };
    let err = train_coarse(
        &init_params(&cfg, 2).unwrap(),
        &cfg,
        &judge,
        &p,
        &RLHFConfig::default(),
        &cc,
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn system_prompt_is_exact_and_applied_once() {
    let cfg = ModelConfig::text();
    let prompt = encode_bytes("Name a prime.");
    let with = apply_system_prompt(&prompt, &cfg, PromptMode::Text, 8).unwrap();
    assert_eq!(
        &with[..SYSTEM_PROMPT.len()],
        encode_bytes(SYSTEM_PROMPT).as_slice()
    );
    assert_eq!(&with[SYSTEM_PROMPT.len()..], prompt.as_slice());
    assert!(apply_system_prompt(&with, &cfg, PromptMode::Text, 8).is_err());

    let desk = ModelConfig::desk();
    let ctx = coarse_context(&[9, 10], &desk, PromptMode::Synthetic, 16).unwrap();
    assert_eq!(ctx, vec![3, 4, 5, 6, 9, 10, desk.sep_token_id]);
    let long = vec![9; 100];
    assert!(coarse_context(&long, &desk, PromptMode::Synthetic, 64).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn limit_never_falls_and_stays_in_range(
        metrics in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..60),
        tau in 0.0f64..2.0,
        logistic in any::<bool>(),
        nan_at in prop::option::of(0usize..60),
    ) {
        let cfg = CMConfig {
            gate_mode: if logistic { GateMode::Logistic } else { GateMode::Hard },
            ..cm(tau)
        };
        let mut st = CMState::new(&cfg);
        let mut prev = cfg.l_init;
        for (i, &(r, c)) in metrics.iter().enumerate() {
            let r = if nan_at == Some(i) { f64::NAN } else { r };
            let row = cm_step(&mut st, r, c, &cfg);
            prop_assert_eq!(row.limit_used, prev);
            prop_assert!(row.limit >= prev && row.limit <= cfg.l_max);
            prop_assert!(row.limit == prev || row.limit == (prev + cfg.delta_l).min(cfg.l_max));
            prev = row.limit;
        }
    }

    #[test]
    fn degenerate_thresholds_give_exact_traces(
        metrics in prop::collection::vec((-5.0f64..5.0, 0.0f64..3.0), 1..40),
        logistic in any::<bool>(),
    ) {
        let mode = if logistic { GateMode::Logistic } else { GateMode::Hard };
        let shut = CMConfig { gate_mode: mode, ..cm(0.0) };
        let open = CMConfig { gate_mode: mode, ..cm(f64::INFINITY) };
        let (mut a, mut b) = (CMState::new(&shut), CMState::new(&open));
        for (i, &(r, c)) in metrics.iter().enumerate() {
            prop_assert_eq!(cm_step(&mut a, r, c, &shut).limit, 4);
            prop_assert_eq!(cm_step(&mut b, r, c, &open).limit, staircase(i + 1, 4, 2, 3, 12));
        }
    }

    #[test]
    fn suppressed_samples_have_no_eos_and_exact_length(
        limit in 1usize..24,
        temperature in prop_oneof![Just(0.0), 0.3f64..3.0],
        seed in any::<u64>(),
    ) {
        let cfg = small_cfg();
        let policy = init_params(&cfg, 6).unwrap();
        let r = suppressed_sample(&policy, &cfg, &[3, 4, 5, 6, 9, cfg.sep_token_id], limit, temperature, seed).unwrap();
        prop_assert_eq!(r.len(), limit);
        prop_assert!(!r.contains(&cfg.eos_token_id));
    }
}
