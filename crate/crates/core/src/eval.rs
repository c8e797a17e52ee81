//! Predictions, margins and test accuracy on fresh draws from the data model.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::network::{batch_scores, forward_sample, Batch, ModelParams, SmoothedRelu};
use crate::seeding::{fork_seed, stream_rng};
use crate::synthdata::{
    sample_multiview, sample_noisy_test, sample_singleview, FeatureDictionary, FeatureId, Sample,
};
use crate::trainer::compute_phi;

/// Samples scored per matrix product during evaluation.
const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest class index among the maxima.
    #[default]
    Lowest,
    /// Uniform among the maxima.
    Random,
}

pub fn argmax(scores: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn predict_from_scores<R: Rng + ?Sized>(scores: ArrayView1<'_, f64>, tie: TieBreak, rng: &mut R) -> usize {
    match tie {
        TieBreak::Lowest => argmax(scores),
        TieBreak::Random => {
            let best = scores[argmax(scores)];
            let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
            ties[rng.random_range(0..ties.len())]
        }
    }
}

/// `argmax_i F_i(X)` with lowest-index tie-break.
pub fn predict(model: &ModelParams, sample: &Sample, dict: &FeatureDictionary, cfg: &ExperimentConfig) -> Result<usize> {
    Ok(argmax(forward_sample(model, sample, dict, cfg)?.scores.view()))
}

/// `F_y - max_{j != y} F_j`.
pub fn margin_from_scores(scores: ArrayView1<'_, f64>, label: usize) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::config("k >= 2", format!("margin needs two classes, k = {}", scores.len())));
    }
    let other = scores
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label)
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(scores[label] - other)
}

pub fn margin(model: &ModelParams, sample: &Sample, dict: &FeatureDictionary, cfg: &ExperimentConfig) -> Result<f64> {
    margin_from_scores(forward_sample(model, sample, dict, cfg)?.scores.view(), sample.label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalDistribution {
    MultiView,
    SingleView,
    /// Clean mixture with purely-noise patches at `noisy_test_noise`.
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub distribution: EvalDistribution,
    /// `noisy_test_noise` used for [`EvalDistribution::Noisy`].
    pub noise_level: Option<f64>,
    pub n_samples: usize,
    pub accuracy: f64,
    pub mean_margin: f64,
    /// `(level, value)` pairs at levels 0.1, 0.25, 0.5, 0.75, 0.9.
    pub margin_quantiles: Vec<(f64, f64)>,
    /// `None` for classes absent from the draw.
    pub per_class_accuracy: Vec<Option<f64>>,
}

pub const QUANTILE_LEVELS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Scores `samples` and summarizes predictions against their labels.
pub fn evaluate_samples<R: Rng + ?Sized>(
    model: &ModelParams,
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    samples: &[Sample],
    distribution: EvalDistribution,
    tie: TieBreak,
    rng: &mut R,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Shape("evaluation needs at least one sample".into()));
    }
    let act = SmoothedRelu::from_config(cfg);
    let k = model.classes();
    let (mut correct, mut margins) = (Vec::with_capacity(samples.len()), Vec::with_capacity(samples.len()));
    for chunk in samples.chunks(EVAL_CHUNK) {
        let scores = batch_scores(model, &Batch::from_samples(chunk, dict), act)?;
        for (row, s) in scores.outer_iter().zip(chunk) {
            correct.push(predict_from_scores(row, tie, rng) == s.label);
            margins.push(margin_from_scores(row, s.label)?);
        }
    }
    let n = samples.len();
    let mut hits = vec![0usize; k];
    let mut counts = vec![0usize; k];
    for (s, &ok) in samples.iter().zip(&correct) {
        counts[s.label] += 1;
        hits[s.label] += ok as usize;
    }
    let mut sorted = margins.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(EvalReport {
        distribution,
        noise_level: (distribution == EvalDistribution::Noisy).then_some(cfg.noisy_test_noise),
        n_samples: n,
        accuracy: correct.iter().filter(|c| **c).count() as f64 / n as f64,
        mean_margin: margins.iter().sum::<f64>() / n as f64,
        margin_quantiles: QUANTILE_LEVELS.iter().map(|&q| (q, quantile(&sorted, q))).collect(),
        per_class_accuracy: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
    })
}

/// Draws `n` labelled samples from `distribution`, labels uniform over `[k]`.
pub fn draw_test_set<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    distribution: EvalDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Sample>> {
    let base = fork_seed(rng);
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(base, i as u64);
            let y = r.random_range(0..cfg.classes);
            match distribution {
                EvalDistribution::MultiView => sample_multiview(dict, cfg, y, &mut r),
                EvalDistribution::SingleView => sample_singleview(dict, cfg, y, &mut r),
                EvalDistribution::Noisy => sample_noisy_test(dict, cfg, y, &mut r),
            }
        })
        .collect()
}

pub fn test_accuracy<R: Rng + ?Sized>(
    model: &ModelParams,
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    distribution: EvalDistribution,
    n: usize,
    rng: &mut R,
) -> Result<EvalReport> {
    test_accuracy_with(model, dict, cfg, distribution, n, TieBreak::Lowest, rng)
}

pub fn test_accuracy_with<R: Rng + ?Sized>(
    model: &ModelParams,
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    distribution: EvalDistribution,
    n: usize,
    tie: TieBreak,
    rng: &mut R,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::config("n >= 1", "n = 0"));
    }
    let samples = draw_test_set(dict, cfg, distribution, n, rng)?;
    evaluate_samples(model, dict, cfg, &samples, distribution, tie, rng)
}

/// `|F_i(X) - sum_l Phi_{i,l} Z_{i,l}(X)|` for every class.
pub fn function_approx_residual(
    model: &ModelParams,
    sample: &Sample,
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
) -> Result<Array1<f64>> {
    let scores = forward_sample(model, sample, dict, cfg)?.scores;
    let phi = compute_phi(model, dict);
    Ok(Array1::from_shape_fn(model.classes(), |i| {
        let approx: f64 = (0..2)
            .map(|l| phi[[i, l]] * sample.feature_sum(FeatureId::new(i, l)))
            .sum();
        (scores[i] - approx).abs()
    }))
}
