use c2f_core::eval::{
    evaluate_model, heldout_perplexity, mean_redundancy, redundancy_ngram, tally, EvalSuite,
};
use c2f_core::merge::{sweep_gamma, SweepInputs};
use c2f_core::model::{init_params, ModelConfig, LM_HEAD};
use proptest::prelude::*;

/// Counts distinct n-grams by pairwise comparison instead of hashing.
fn redundancy_brute(seq: &[usize], n: usize) -> f64 {
    let total = seq.len() + 1 - n;
    let mut distinct = 0;
    for i in 0..total {
        if (0..i).all(|j| seq[j..j + n] != seq[i..i + n]) {
            distinct += 1;
        }
    }
    1.0 - distinct as f64 / total as f64
}

fn small_cfg() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        d_ff: 32,
        n_layers: 1,
        ..ModelConfig::desk()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn redundancy_matches_brute_force(seq in prop::collection::vec(0usize..6, 4..=64), n in 1usize..=4) {
        let got = redundancy_ngram(&seq, n).unwrap();
        prop_assert_eq!(got, redundancy_brute(&seq, n));
        prop_assert!((0.0..1.0).contains(&got));
    }

    #[test]
    fn win_rate_is_antisymmetric(pairs in prop::collection::vec((-3i32..3, -3i32..3), 1..300)) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let ab = tally(&a, &b);
        let ba = tally(&b, &a);
        prop_assert_eq!(ab.a_wins, ba.b_wins);
        prop_assert_eq!(ab.b_wins, ba.a_wins);
        prop_assert_eq!(ab.ties, ba.ties);
        prop_assert_eq!(ab.a_wins + ab.b_wins + ab.ties, 1.0);
    }
}

#[test]
fn redundancy_of_a_constant_and_of_distinct_tokens() {
    assert_eq!(
        redundancy_ngram(&(0..64).collect::<Vec<_>>(), 4).unwrap(),
        0.0
    );
    let flat = redundancy_ngram(&[9; 64], 4).unwrap();
    assert!((flat - 60.0 / 61.0).abs() < 1e-15);
    assert_eq!(
        mean_redundancy(&[vec![1, 2], vec![5; 8]], 4),
        0.5 * (1.0 - 1.0 / 5.0)
    );
}

#[test]
fn zero_head_gives_perplexity_equal_to_vocab_size() {
    let cfg = small_cfg();
    let mut p = init_params(&cfg, 1).unwrap();
    p.get_mut(LM_HEAD).unwrap().data_mut().fill(0.0);
    let docs = vec![vec![5, 9, 20, 33, 2, 7], vec![11, 12, 13]];
    let ppl = heldout_perplexity(&p, &cfg, &docs).unwrap();
    assert!((ppl - cfg.vocab_size as f64).abs() < 1e-9, "{ppl}");
}

#[test]
fn identical_models_tie_on_every_prompt() {
    let cfg = small_cfg();
    let p = init_params(&cfg, 2).unwrap();
    let judge = |_: &[usize], r: &[usize]| r.len() as f64;
    let prompts: Vec<Vec<usize>> = (0..20).map(|i| vec![10 + i % 7, 30]).collect();
    let docs = vec![vec![5, 9, 20]];
    let suite = EvalSuite {
        max_new_tokens: 12,
        temperature: 1.0,
        seed: 4,
        ..EvalSuite::default()
    };
    let a = evaluate_model("a", &p, &cfg, &judge, &prompts, &docs, &suite).unwrap();
    let b = evaluate_model("b", &p, &cfg, &judge, &prompts, &docs, &suite).unwrap();
    assert_eq!(a.responses, b.responses);
    let w = tally(&a.rewards, &b.rewards);
    assert_eq!((w.a_wins, w.b_wins, w.ties), (0.0, 0.0, 1.0));
    assert!(a.report.is_finite());
    assert!(a.report.judge.contains("reward model"));
}

#[test]
fn empty_prompt_set_is_a_data_error() {
    let cfg = small_cfg();
    let p = init_params(&cfg, 2).unwrap();
    let judge = |_: &[usize], _: &[usize]| 0.0;
    let err = evaluate_model(
        "a",
        &p,
        &cfg,
        &judge,
        &[],
        &[vec![1, 2]],
        &EvalSuite::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn sweep_endpoints_reproduce_the_standalone_reports() {
    let cfg = small_cfg();
    let (coarse, sft) = (init_params(&cfg, 3).unwrap(), init_params(&cfg, 4).unwrap());
    let judge = |_: &[usize], r: &[usize]| r.iter().filter(|&&t| t % 3 == 0).count() as f64;
    let prompts: Vec<Vec<usize>> = (0..12).map(|i| vec![10 + i, 40]).collect();
    let docs = vec![vec![5, 9, 20, 21], vec![7, 8, 9]];
    let suite = EvalSuite {
        max_new_tokens: 10,
        temperature: 1.0,
        seed: 9,
        ..EvalSuite::default()
    };
    let inputs = SweepInputs {
        cfg: &cfg,
        rm: &judge,
        prompts: &prompts,
        heldout_docs: &docs,
        suite: &suite,
    };
    let rows = sweep_gamma(&coarse, &sft, &[1.0, 0.0], &inputs).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.gamma).collect::<Vec<_>>(),
        vec![0.0, 1.0]
    );
    for (row, params) in rows.iter().zip([&sft, &coarse]) {
        let r = evaluate_model("x", params, &cfg, &judge, &prompts, &docs, &suite)
            .unwrap()
            .report;
        assert_eq!(row.redundancy_4gram, r.redundancy_4gram);
        assert_eq!(row.mean_len, r.mean_response_len);
        assert_eq!(row.mean_reward, r.mean_reward);
        assert_eq!(row.heldout_ppl, r.heldout_ppl);
    }
    assert_eq!(rows[0].winrate_vs_sft, 0.0, "SFT against itself only ties");
}
