use c2f_core::data::{gen_preference_pairs, gen_sft_examples, split_document, SyntheticTaskSpec};
use c2f_core::model::{init_params, ModelConfig, VALUE_HEAD_B};
use c2f_core::reward::{pairwise_accuracy, pairwise_loss, train_reward, RewardConfig, RewardModel};
use c2f_core::sampling::{generate, SamplerOpts};
use c2f_core::sft::{evaluate_loss, train_lm, train_sft, LmExample, SFTConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn single_sequence_is_memorized() {
    let cfg = ModelConfig::desk();
    let init = init_params(&cfg, 3).unwrap();
    let doc = vec![7, 12, 40, 41, 9, 22, 30, 18, 50, 1];
    let ex = vec![LmExample::whole(&doc).unwrap()];
    let tc = SFTConfig {
        lr: 1e-3,
        batch_size: 1,
        epochs: 200,
        ..SFTConfig::default()
    };
    let out = train_lm(&init, &cfg, &ex, &tc).unwrap();
    let loss = evaluate_loss(&out.params, &cfg, &ex).unwrap();
    assert!(loss < 0.1, "loss after 200 steps: {loss}");
}

#[test]
fn sft_model_ends_training_responses_with_eos() {
    let cfg = ModelConfig::desk();
    let docs = gen_sft_examples(&cfg, &SyntheticTaskSpec::default(), 40, 9).unwrap();
    let tc = SFTConfig {
        lr: 2e-3,
        epochs: 25,
        ..SFTConfig::default()
    };
    let out = train_sft(&init_params(&cfg, 4).unwrap(), &cfg, &docs, &tc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ended = docs
        .iter()
        .filter(|d| {
            let (prompt, _) = split_document(d, cfg.sep_token_id).unwrap();
            let mut ctx = prompt.to_vec();
            ctx.push(cfg.sep_token_id);
            let r = generate(&out.params, &cfg, &ctx, &SamplerOpts::greedy(40), &mut rng).unwrap();
            r.last() == Some(&cfg.eos_token_id)
        })
        .count();
    assert!(
        ended as f64 >= 0.9 * docs.len() as f64,
        "{ended}/{} ended with EOS",
        docs.len()
    );
}

#[test]
fn sft_rejects_responses_without_eos() {
    let cfg = ModelConfig::desk();
    let docs = vec![vec![7, 8, cfg.sep_token_id, 20, 21]];
    let err = train_sft(
        &init_params(&cfg, 1).unwrap(),
        &cfg,
        &docs,
        &SFTConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn preference_loss_ignores_a_shared_score_offset() {
    let cfg = ModelConfig::desk();
    let pairs = gen_preference_pairs(&cfg, &SyntheticTaskSpec::default(), 20, 2).unwrap();
    let rm = RewardModel::from_params(&cfg, &init_params(&cfg, 8).unwrap()).unwrap();
    let mut shifted = rm.clone();
    shifted.params.get_mut(VALUE_HEAD_B).unwrap().data_mut()[0] += 3.25;
    for p in &pairs {
        let m = rm.score(&p.prompt, &p.chosen).unwrap() - rm.score(&p.prompt, &p.rejected).unwrap();
        let s = shifted.score(&p.prompt, &p.chosen).unwrap()
            - shifted.score(&p.prompt, &p.rejected).unwrap();
        assert!((pairwise_loss(m) - pairwise_loss(s)).abs() < 1e-12);
        let c =
            shifted.score(&p.prompt, &p.chosen).unwrap() - rm.score(&p.prompt, &p.chosen).unwrap();
        assert!((c - 3.25).abs() < 1e-12);
    }
}

#[test]
fn pairwise_loss_reference_values() {
    assert!((pairwise_loss(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((pairwise_loss(2.0) - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-15);
    assert!((pairwise_loss(-800.0) - 800.0).abs() < 1e-9);
    assert!(pairwise_loss(800.0) >= 0.0 && pairwise_loss(800.0) < 1e-300);
}

#[test]
fn reward_model_learns_the_planted_rule_on_a_small_set() {
    let cfg = ModelConfig {
        d_model: 32,
        d_ff: 64,
        ..ModelConfig::desk()
    };
    let spec = SyntheticTaskSpec::default();
    let train = gen_preference_pairs(&cfg, &spec, 300, 1).unwrap();
    let held = gen_preference_pairs(&cfg, &spec, 100, 2).unwrap();
    let rc = RewardConfig {
        epochs: 3,
        heldout_frac: 0.0,
        ..RewardConfig::default()
    };
    let (rm, report) = train_reward(&init_params(&cfg, 5).unwrap(), &cfg, &train, &rc).unwrap();
    assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
    let (acc, margin) = pairwise_accuracy(&rm, &held).unwrap();
    assert!(
        acc >= 0.8 && margin > 0.0,
        "accuracy {acc}, margin {margin}"
    );
}
