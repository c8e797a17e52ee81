//! Prediction, margin and accuracy against hand-built models.

use featlab::eval::{
    draw_test_set, evaluate_samples, function_approx_residual, margin, predict, test_accuracy_with,
    EvalDistribution, TieBreak,
};
use featlab::network::{smoothed_relu, ModelParams};
use featlab::seeding::rng_from_seed;
use featlab::synthdata::{FeatureDictionary, FeatureId, Sample};
use featlab::ExperimentConfig;

fn noiseless(patches_per_feature: usize, varrho: f64) -> ExperimentConfig {
    ExperimentConfig {
        classes: 5,
        dim: 24,
        patches: 16,
        patches_per_feature,
        feature_noise: 0.0,
        patch_noise: 0.0,
        pure_noise: 0.0,
        varrho,
        ..Default::default()
    }
}

/// Kernel `l` of class `i` is `scale * v_{i,l}`; the rest are zero.
fn oracle(dict: &FeatureDictionary, cfg: &ExperimentConfig, scale: f64) -> ModelParams {
    let mut model = ModelParams::zeros(cfg.classes, cfg.kernels_per_class, cfg.dim);
    for i in 0..cfg.classes {
        for l in 0..2 {
            let v = dict.vector(FeatureId::new(i, l)).to_owned();
            model.kernel_mut(i, l).assign(&(&v * scale));
        }
    }
    model
}

/// Scores of the oracle computed from the sample's coefficients alone.
fn oracle_scores(sample: &Sample, cfg: &ExperimentConfig, scale: f64) -> Vec<f64> {
    let mut scores = vec![0.0; cfg.classes];
    for f in &sample.features {
        scores[f.feature.class] += f
            .coefficients
            .iter()
            .map(|z| smoothed_relu(scale * z, cfg.q, cfg.varrho))
            .sum::<f64>();
    }
    scores
}

#[test]
fn oracle_model_is_perfect_and_margins_match_hand_computation() {
    let cfg = noiseless(2, 0.8);
    let mut rng = rng_from_seed(1);
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
    let model = oracle(&dict, &cfg, 4.0);
    for dist in [EvalDistribution::MultiView, EvalDistribution::SingleView] {
        let samples = draw_test_set(&dict, &cfg, dist, 300, &mut rng).unwrap();
        let report = evaluate_samples(&model, &dict, &cfg, &samples, dist, TieBreak::Lowest, &mut rng).unwrap();
        assert_eq!(report.accuracy, 1.0, "{dist:?}");
        for s in samples.iter().take(50) {
            let want = oracle_scores(s, &cfg, 4.0);
            let other = (0..cfg.classes).filter(|&j| j != s.label).map(|j| want[j]).fold(f64::MIN, f64::max);
            let got = margin(&model, s, &dict, &cfg).unwrap();
            assert!((got - (want[s.label] - other)).abs() <= 1e-10, "{got} vs {}", want[s.label] - other);
            assert_eq!(predict(&model, s, &dict, &cfg).unwrap(), s.label);
        }
    }
}

#[test]
fn zero_model_with_random_ties_is_at_chance() {
    let cfg = ExperimentConfig::default();
    let mut rng = rng_from_seed(2);
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
    let model = ModelParams::zeros(cfg.classes, cfg.kernels_per_class, cfg.dim);
    let n = 2000;
    let r = test_accuracy_with(&model, &dict, &cfg, EvalDistribution::MultiView, n, TieBreak::Random, &mut rng).unwrap();
    let p = 1.0 / cfg.classes as f64;
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((r.accuracy - p).abs() <= 3.0 * sd, "{}", r.accuracy);
    assert_eq!(r.mean_margin, 0.0);
}

#[test]
fn accuracy_is_the_mean_of_correct_predictions() {
    let cfg = ExperimentConfig {
        init_scale: 0.5,
        ..noiseless(2, 0.8)
    };
    let mut rng = rng_from_seed(3);
    let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
    let model = featlab::network::init_model(&cfg, &mut rng);
    let samples = draw_test_set(&dict, &cfg, EvalDistribution::MultiView, 200, &mut rng).unwrap();
    let report = evaluate_samples(
        &model,
        &dict,
        &cfg,
        &samples,
        EvalDistribution::MultiView,
        TieBreak::Lowest,
        &mut rng,
    )
    .unwrap();
    let hits = samples
        .iter()
        .filter(|s| predict(&model, s, &dict, &cfg).unwrap() == s.label)
        .count();
    assert_eq!(report.accuracy, hits as f64 / samples.len() as f64);
    for s in &samples {
        let correct = predict(&model, s, &dict, &cfg).unwrap() == s.label;
        // A positive margin means a strict win; a correct prediction means a
        // nonnegative one (ties go to the lowest index).
        let m = margin(&model, s, &dict, &cfg).unwrap();
        if m > 0.0 {
            assert!(correct);
        }
        if correct {
            assert!(m >= 0.0);
        }
    }
    let again = evaluate_samples(
        &model,
        &dict,
        &cfg,
        &samples,
        EvalDistribution::MultiView,
        TieBreak::Lowest,
        &mut rng_from_seed(99),
    )
    .unwrap();
    assert_eq!(again, report);
}

#[test]
fn residual_is_the_linear_branch_offset_per_present_feature() {
    let scale = 2.0;
    for varrho in [0.04, 0.01, 0.0025] {
        let cfg = noiseless(1, varrho);
        let mut rng = rng_from_seed(4);
        let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
        let model = oracle(&dict, &cfg, scale);
        let offset = (1.0 - 1.0 / cfg.q as f64) * varrho;
        for dist in [EvalDistribution::MultiView, EvalDistribution::SingleView] {
            for s in draw_test_set(&dict, &cfg, dist, 40, &mut rng).unwrap() {
                let residual = function_approx_residual(&model, &s, &dict, &cfg).unwrap();
                for i in 0..cfg.classes {
                    let present = (0..2).filter(|&l| s.occurrence(FeatureId::new(i, l)).is_some()).count();
                    assert!((residual[i] - offset * present as f64).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn residual_shrinks_with_varrho() {
    let mut last = f64::INFINITY;
    for varrho in [0.5, 0.1, 0.02] {
        let cfg = noiseless(2, varrho);
        let mut rng = rng_from_seed(5);
        let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng).unwrap();
        let model = oracle(&dict, &cfg, 3.0);
        let samples = draw_test_set(&dict, &cfg, EvalDistribution::MultiView, 100, &mut rng).unwrap();
        let worst = samples
            .iter()
            .map(|s| function_approx_residual(&model, s, &dict, &cfg).unwrap().fold(0.0f64, |a, b| a.max(*b)))
            .fold(0.0, f64::max);
        assert!(worst < last, "varrho {varrho}: {worst} >= {last}");
        last = worst;
    }
}
