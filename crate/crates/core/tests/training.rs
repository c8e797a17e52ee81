//! Trainer behaviour: update fidelity, determinism, lottery statistics and
//! diagnostics at initialization.

use std::sync::Arc;

use featlab::augment::AugmentConfig;
use featlab::network::{init_model, loss_and_grad, Batch, SmoothedRelu};
use featlab::seeding::{fork_seed, rng_from_seed, stream_rng, streams};
use featlab::synthdata::{sample_dataset, Dataset, FeatureDictionary};
use featlab::trainer::{
    augment_dataset, compute_lottery_set, correlation_extremes, induction_diagnostics, train, train_from, Resample,
    TrainMode, TrainSpec,
};
use featlab::ExperimentConfig;

fn small() -> (ExperimentConfig, Dataset) {
    let cfg = ExperimentConfig {
        classes: 4,
        kernels_per_class: 3,
        dim: 24,
        patches: 14,
        train_size: 80,
        single_view_prob: 0.2,
        init_scale: 0.1,
        learning_rate: 0.5,
        max_iters: 30,
        ..Default::default()
    };
    let mut rng = rng_from_seed(5);
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
    let data = sample_dataset(&dict, &cfg, &mut rng).unwrap();
    (cfg, data)
}

fn defaults_data(seed: u64, n: usize) -> (ExperimentConfig, Dataset) {
    let cfg = ExperimentConfig {
        train_size: n,
        ..Default::default()
    };
    let mut rng = stream_rng(seed, streams::DATA);
    let dict = Arc::new(FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap());
    let data = sample_dataset(&dict, &cfg, &mut rng).unwrap();
    (cfg, data)
}

#[test]
fn one_step_matches_hand_rolled_update() {
    let (cfg, data) = small();
    let act = SmoothedRelu::from_config(&cfg);
    let init = init_model(&cfg, &mut rng_from_seed(9));
    let aug = AugmentConfig {
        pi1: 1.0,
        ..Default::default()
    };
    let aug_seed = 77;
    for mode in [TrainMode::Vanilla, TrainMode::A1] {
        let spec = TrainSpec {
            mode,
            resample: Resample::Fixed,
            max_iters: Some(1),
            ..Default::default()
        };
        let out = train_from(init.clone(), &cfg, &aug, &spec, &data, aug_seed).unwrap();
        let samples = match mode {
            TrainMode::Vanilla => data.samples.clone(),
            _ => augment_dataset(&data, &aug, mode, fork_seed(&mut stream_rng(aug_seed, 0))).unwrap(),
        };
        let g = loss_and_grad(&init, &Batch::from_samples(&samples, &data.dictionary), act).unwrap();
        let mut expected = init.weights().clone();
        expected.scaled_add(-cfg.learning_rate, &g.grad);
        assert_eq!(out.model.weights(), &expected, "{mode:?}");
        assert_eq!(out.log.rows[0].loss, g.loss);
    }
}

#[test]
fn fixed_mode_loss_decreases_for_small_steps() {
    let (mut cfg, data) = small();
    cfg.learning_rate = 0.05;
    let spec = TrainSpec {
        mode: TrainMode::A2,
        resample: Resample::Fixed,
        log_every: 1,
        ..Default::default()
    };
    let out = train(&cfg, &AugmentConfig::default(), &spec, &data, &mut rng_from_seed(1)).unwrap();
    let losses: Vec<f64> = out.log.rows.iter().map(|r| r.loss).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
}

#[test]
fn training_is_deterministic() {
    let (cfg, data) = small();
    for mode in [TrainMode::A2, TrainMode::A3, TrainMode::MixupExact] {
        let spec = TrainSpec {
            mode,
            log_every: 7,
            ..Default::default()
        };
        let run = || {
            train(&cfg, &AugmentConfig::default(), &spec, &data, &mut rng_from_seed(2))
                .unwrap()
                .log
                .to_csv_string()
                .unwrap()
        };
        assert_eq!(run(), run(), "{mode:?}");
    }
}

#[test]
fn phi_is_nonnegative_and_log_is_increasing() {
    let (cfg, data) = small();
    let spec = TrainSpec {
        mode: TrainMode::A3,
        log_every: 3,
        ..Default::default()
    };
    let out = train(&cfg, &AugmentConfig::default(), &spec, &data, &mut rng_from_seed(3)).unwrap();
    assert!(out.log.rows.windows(2).all(|w| w[0].iter < w[1].iter));
    for r in &out.log.rows {
        assert!(r.phi.iter().all(|v| *v >= 0.0));
        assert!(r.lambda.iter().zip(&r.phi).all(|(l, p)| l <= p));
    }
}

#[test]
fn phi_grows_early_at_defaults() {
    let (cfg, data) = defaults_data(0, 1000);
    let spec = TrainSpec {
        max_iters: Some(100),
        ..Default::default()
    };
    let out = train(&cfg, &AugmentConfig::default(), &spec, &data, &mut stream_rng(0, streams::TRAIN)).unwrap();
    let max_phi = |iter: usize| {
        let row = out.log.rows.iter().find(|r| r.iter == iter).unwrap();
        row.phi.iter().copied().fold(0.0, f64::max)
    };
    assert!(max_phi(2 * spec.log_every) > max_phi(0));
}

#[test]
fn most_classes_have_a_lottery_winner_at_initialization() {
    // Desk-scale analogue of the with-high-probability statement; the
    // fraction is about 0.75 at m = 8.
    const MIN_FRACTION: f64 = 0.70;
    let (cfg, data) = defaults_data(0, 1000);
    let (mut with_member, mut total) = (0, 0);
    for seed in 0..100 {
        let init = init_model(&cfg, &mut stream_rng(seed, streams::TRAIN));
        let set = compute_lottery_set(&init, &data, &cfg);
        assert!(set.excluded_classes.is_empty());
        for i in 0..cfg.classes {
            total += 1;
            with_member += usize::from(!set.of_class(i).is_empty());
        }
    }
    let fraction = with_member as f64 / total as f64;
    assert!(fraction >= MIN_FRACTION, "fraction {fraction}");
}

#[test]
fn initial_diagonal_correlations_are_gaussian_sized() {
    let cfg = ExperimentConfig::default();
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng_from_seed(0)).unwrap();
    let bound = -5.0 * cfg.init_scale * (2.0 * ((2 * cfg.kernels_per_class * cfg.classes) as f64).ln()).sqrt();
    for seed in 0..100 {
        let model = init_model(&cfg, &mut rng_from_seed(seed));
        let (_, diag_min) = correlation_extremes(&model, &dict);
        assert!(diag_min >= bound, "seed {seed}: {diag_min} < {bound}");
    }
}

#[test]
fn noise_free_feature_residual_vanishes() {
    let cfg = ExperimentConfig {
        classes: 4,
        dim: 20,
        patches: 16,
        train_size: 30,
        feature_noise: 0.0,
        patch_noise: 0.0,
        ..Default::default()
    };
    let mut rng = rng_from_seed(4);
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
    let data = sample_dataset(&dict, &cfg, &mut rng).unwrap();
    let model = init_model(&ExperimentConfig { init_scale: 0.5, ..cfg.clone() }, &mut rng);
    let report = induction_diagnostics(&model, &data, &cfg);
    assert!(report.feature_residual_max <= 1e-12, "{}", report.feature_residual_max);
    assert!(report.cross_feature_max > 0.0);
    assert_eq!(report.ratios().len(), 5);
}
