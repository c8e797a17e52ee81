//! Full-batch gradient descent with per-iteration feature-learning metrics.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_a1, apply_a2, apply_a3, cutmix, pixel_mixup, AugmentConfig, Effect, LambdaDist};
use crate::config::{first_failure, ConstraintCheck, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::argmax;
use crate::network::{init_model, loss_and_grad, Batch, ModelParams, SmoothedRelu};
use crate::seeding::{fork_seed, stream_rng, LabRng};
use crate::synthdata::{Dataset, FeatureDictionary, FeatureId, Sample, ViewKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Vanilla,
    A1,
    A2,
    A3,
    /// Hard-label Mixup with `lambda ~ Beta(alpha + 1, alpha)`.
    MixupExact,
    /// Hard-label CutMix with the same `lambda` law.
    CutMix,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Vanilla => "vanilla",
            TrainMode::A1 => "a1",
            TrainMode::A2 => "a2",
            TrainMode::A3 => "a3",
            TrainMode::MixupExact => "mixup",
            TrainMode::CutMix => "cutmix",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "vanilla" => TrainMode::Vanilla,
            "a1" => TrainMode::A1,
            "a2" => TrainMode::A2,
            "a3" => TrainMode::A3,
            "mixup" => TrainMode::MixupExact,
            "cutmix" => TrainMode::CutMix,
            _ => return None,
        })
    }

    /// Augmentation constraints this mode depends on.
    pub fn effect(self) -> Option<Effect> {
        match self {
            TrainMode::Vanilla => None,
            TrainMode::A1 => Some(Effect::Removal),
            TrainMode::A2 => Some(Effect::Mixing),
            TrainMode::A3 => Some(Effect::Combined),
            TrainMode::MixupExact | TrainMode::CutMix => Some(Effect::Interpolation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// Fresh augmentation every iteration.
    #[default]
    PerIteration,
    /// One augmented copy of the data, drawn before training.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default)]
    pub mode: TrainMode,
    #[serde(default)]
    pub resample: Resample,
    /// Stop once the training loss is at most this.
    pub eps_stop: f64,
    /// Iteration budget; falls back to the experiment's `max_iters` when absent.
    #[serde(default)]
    pub max_iters: Option<usize>,
    pub log_every: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            mode: TrainMode::Vanilla,
            resample: Resample::PerIteration,
            eps_stop: 1e-3,
            max_iters: None,
            log_every: 50,
        }
    }
}

impl TrainSpec {
    pub fn checks(&self) -> Vec<ConstraintCheck> {
        vec![
            ConstraintCheck::new("eps_stop > 0", self.eps_stop > 0.0, format!("eps_stop = {}", self.eps_stop)),
            ConstraintCheck::new("log_every >= 1", self.log_every >= 1, format!("log_every = {}", self.log_every)),
            ConstraintCheck::new(
                "T_max >= 1",
                self.max_iters != Some(0),
                format!("max_iters = {:?}", self.max_iters),
            ),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        first_failure(&self.checks())
    }
}

/// `Phi_{i,l} = sum_r [<w_{i,r}, v_{i,l}>]^+`, shape `k x 2`.
pub fn compute_phi(model: &ModelParams, dict: &FeatureDictionary) -> Array2<f64> {
    own_correlations(model, dict, |col| col.iter().map(|c| c.max(0.0)).sum())
}

/// `Lambda_{i,l} = max_r [<w_{i,r}, v_{i,l}>]^+`, shape `k x 2`.
pub fn compute_lambda(model: &ModelParams, dict: &FeatureDictionary) -> Array2<f64> {
    own_correlations(model, dict, |col| col.iter().fold(0.0, |a: f64, c| a.max(*c)))
}

fn own_correlations(model: &ModelParams, dict: &FeatureDictionary, reduce: impl Fn(&[f64]) -> f64) -> Array2<f64> {
    let corr = model.feature_correlations(dict);
    let (k, m) = (model.classes(), model.kernels_per_class());
    Array2::from_shape_fn((k, 2), |(i, l)| {
        let col: Vec<f64> = (0..m).map(|r| corr[[i * m + r, 2 * i + l]]).collect();
        reduce(&col)
    })
}

/// `max_{i,r, j != i, l} |<w_{i,r}, v_{j,l}>|` and `min_{i,r,l} <w_{i,r}, v_{i,l}>`.
pub fn correlation_extremes(model: &ModelParams, dict: &FeatureDictionary) -> (f64, f64) {
    let corr = model.feature_correlations(dict);
    let m = model.kernels_per_class();
    let (mut off, mut diag) = (0.0f64, f64::INFINITY);
    for ((row, col), &c) in corr.indexed_iter() {
        if row / m == col / 2 {
            diag = diag.min(c);
        } else {
            off = off.max(c.abs());
        }
    }
    (off, diag)
}

/// `S_{i,l} = E_{Z_m}[1{y = i} sum_{p in P_{v_{i,l}}} z_p^q]`, shape `k x 2`.
pub fn s_statistics(data: &Dataset, q: u32) -> Array2<f64> {
    let k = data.dictionary.classes();
    let mut s = Array2::zeros((k, 2));
    if data.multi_view.is_empty() {
        return s;
    }
    for &idx in &data.multi_view {
        let sample = &data.samples[idx];
        for l in 0..2 {
            if let Some(f) = sample.occurrence(FeatureId::new(sample.label, l)) {
                s[[sample.label, l]] += f.coefficients.iter().map(|z| z.powi(q as i32)).sum::<f64>();
            }
        }
    }
    s / data.multi_view.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotterySet {
    pub members: Vec<FeatureId>,
    /// Classes with `S_{i,l} = 0` for some view (absent from `Z_m`).
    pub excluded_classes: Vec<usize>,
}

impl LotterySet {
    pub fn contains(&self, id: FeatureId) -> bool {
        self.members.contains(&id)
    }

    /// Members of class `i`.
    pub fn of_class(&self, i: usize) -> Vec<FeatureId> {
        self.members.iter().copied().filter(|f| f.class == i).collect()
    }
}

/// Membership test of the lottery set from `Lambda`, `S`, `q` and `m`.
pub fn lottery_members(lambda: &Array2<f64>, s: &Array2<f64>, q: u32, m: usize) -> LotterySet {
    let factor = 1.0 + 1.0 / (m as f64).ln().powi(2);
    let (mut members, mut excluded_classes) = (Vec::new(), Vec::new());
    for i in 0..lambda.nrows() {
        if s[[i, 0]] <= 0.0 || s[[i, 1]] <= 0.0 {
            excluded_classes.push(i);
            continue;
        }
        for l in 0..2 {
            let other = 1 - l;
            let bound = lambda[[i, other]] * (s[[i, other]] / s[[i, l]]).powf(1.0 / (q as f64 - 2.0)) * factor;
            if lambda[[i, l]] >= bound {
                members.push(FeatureId::new(i, l));
            }
        }
    }
    LotterySet {
        members,
        excluded_classes,
    }
}

/// Lottery set of an initial model with `S` estimated on the multi-view part of `data`.
pub fn compute_lottery_set(model_init: &ModelParams, data: &Dataset, cfg: &ExperimentConfig) -> LotterySet {
    lottery_members(
        &compute_lambda(model_init, &data.dictionary),
        &s_statistics(data, cfg.q),
        cfg.q,
        model_init.kernels_per_class(),
    )
}

/// Magnitudes that the induction argument keeps at the initialization scale,
/// each also reported relative to `sigma_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    /// `max |<w_{i,r}, x_p> - <w_{i,r}, v_{i,l}> z_p|` over patches of `v_{i,l}`.
    pub feature_residual_max: f64,
    /// `max |<w_{i,r}, x_p>|` over patches of features of other classes.
    pub cross_feature_max: f64,
    /// `max |<w_{i,r}, x_p>|` over purely-noise patches.
    pub pure_noise_max: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `min_{i,r,l} <w_{i,r}, v_{i,l}>`.
    pub diag_min: f64,
    /// `max_{i,r, j != i, l} |<w_{i,r}, v_{j,l}>|`.
    pub off_diag_max: f64,
    pub init_scale: f64,
}

impl DiagnosticsReport {
    /// `(name, value / sigma_0)` for every magnitude.
    pub fn ratios(&self) -> Vec<(&'static str, f64)> {
        let s = self.init_scale;
        vec![
            ("feature_residual_max", self.feature_residual_max / s),
            ("cross_feature_max", self.cross_feature_max / s),
            ("pure_noise_max", self.pure_noise_max / s),
            ("diag_min", self.diag_min / s),
            ("off_diag_max", self.off_diag_max / s),
        ]
    }
}

/// Per-sample pre-activations are `P x mk` blocks of `preacts`.
fn diagnostics_from_preacts(
    model: &ModelParams,
    data: &[Sample],
    preacts: ArrayView2<'_, f64>,
    dict: &FeatureDictionary,
    init_scale: f64,
) -> DiagnosticsReport {
    let corr = model.feature_correlations(dict);
    let m = model.kernels_per_class();
    let mk = preacts.ncols();
    let (mut a, mut b, mut c) = (0.0f64, 0.0f64, 0.0f64);
    let mut offset = 0;
    for s in data {
        let p_count = s.num_patches();
        let block = preacts.slice(ndarray::s![offset..offset + p_count, ..]);
        offset += p_count;
        let mut owner: Vec<Option<(FeatureId, f64)>> = vec![None; p_count];
        for f in &s.features {
            for (&p, &z) in f.patches.iter().zip(&f.coefficients) {
                owner[p] = Some((f.feature, z));
            }
        }
        for (p, own) in owner.iter().enumerate() {
            let row = block.row(p);
            match own {
                None => c = c.max(row.iter().fold(0.0f64, |x, y| x.max(y.abs()))),
                Some((id, z)) => {
                    for col in 0..mk {
                        let class = col / m;
                        if class == id.class {
                            a = a.max((row[col] - corr[[col, id.row()]] * z).abs());
                        } else {
                            b = b.max(row[col].abs());
                        }
                    }
                }
            }
        }
    }
    let phi = compute_phi(model, dict);
    let (off_diag_max, diag_min) = correlation_extremes(model, dict);
    DiagnosticsReport {
        feature_residual_max: a,
        cross_feature_max: b,
        pure_noise_max: c,
        phi_min: phi.fold(f64::INFINITY, |x, y| x.min(*y)),
        phi_max: phi.fold(0.0, |x, y| x.max(*y)),
        diag_min,
        off_diag_max,
        init_scale,
    }
}

pub fn induction_diagnostics(model: &ModelParams, data: &Dataset, cfg: &ExperimentConfig) -> DiagnosticsReport {
    let batch = Batch::from_samples(&data.samples, &data.dictionary);
    let preacts = batch.x.dot(&model.weights().t());
    diagnostics_from_preacts(model, &data.samples, preacts.view(), &data.dictionary, cfg.init_scale)
}

/// One logged iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    /// Loss of the batch the step was taken on.
    pub loss: f64,
    /// Row-major `k x 2`.
    pub phi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub off_diag_max: f64,
    pub diag_min: f64,
    /// `max |<w, x_p>|` over purely-noise patches of the clean training set.
    pub noise_corr_max: f64,
    /// Training accuracy on the multi-view part (`NaN` when empty).
    pub acc_multi: f64,
    pub acc_single: f64,
}

pub const METRICS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub classes: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn header(classes: usize) -> Vec<String> {
        let mut h = vec!["iter".to_string(), "loss".to_string()];
        for prefix in ["phi", "lambda"] {
            for i in 0..classes {
                for l in 0..2 {
                    h.push(format!("{prefix}_{i}_{l}"));
                }
            }
        }
        h.extend(
            ["off_diag_max", "diag_min", "noise_corr_max", "acc_multi", "acc_single"]
                .iter()
                .map(|s| s.to_string()),
        );
        h
    }

    /// CSV with a `# schema=1` comment line, then the header and one row per
    /// logged iteration.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# schema={METRICS_SCHEMA}")?;
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(Self::header(self.classes))?;
        for r in &self.rows {
            let mut rec = vec![r.iter.to_string(), r.loss.to_string()];
            rec.extend(r.phi.iter().chain(&r.lambda).map(f64::to_string));
            rec.extend(
                [r.off_diag_max, r.diag_min, r.noise_corr_max, r.acc_multi, r.acc_single]
                    .iter()
                    .map(f64::to_string),
            );
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Loss fell to `eps_stop`.
    Converged,
    /// Iteration budget exhausted.
    Budget,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelParams,
    pub init: ModelParams,
    pub log: MetricsLog,
    /// Gradient steps taken.
    pub iterations: usize,
    pub final_loss: f64,
    pub stop: StopReason,
}

/// Builds one augmented copy of the data; sample `i` uses stream `i` of `seed`.
pub fn augment_dataset(
    data: &Dataset,
    aug: &AugmentConfig,
    mode: TrainMode,
    seed: u64,
) -> Result<Vec<Sample>> {
    let n = data.len();
    let dict = &data.dictionary;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(seed, i as u64);
            let s = &data.samples[i];
            let out = match mode {
                TrainMode::Vanilla => s.clone(),
                TrainMode::A1 => apply_a1(s, dict, aug, &mut r),
                TrainMode::A2 => {
                    let partner = &data.samples[r.random_range(0..n)];
                    apply_a2(s, partner, aug, &mut r)
                }
                TrainMode::A3 => {
                    let partner = &data.samples[r.random_range(0..n)];
                    apply_a3(s, partner, dict, aug, &mut r)
                }
                TrainMode::MixupExact => {
                    let partner = &data.samples[r.random_range(0..n)];
                    let lambda = LambdaDist::Reformulated(aug.alpha).draw(&mut r)?;
                    pixel_mixup(s, partner, lambda)?
                }
                TrainMode::CutMix => {
                    let partner = &data.samples[r.random_range(0..n)];
                    let lambda = LambdaDist::Reformulated(aug.alpha).draw(&mut r)?;
                    cutmix(s, partner, lambda, &mut r)?
                }
            };
            Ok(out)
        })
        .collect()
}

/// `w <- w - eta * grad`.
pub fn gd_step(model: &mut ModelParams, grad: &Array2<f64>, eta: f64) {
    model.weights_mut().scaled_add(-eta, grad);
}

struct CleanView {
    batch: Batch,
    multi: Vec<bool>,
}

fn log_row(
    iter: usize,
    loss: f64,
    model: &ModelParams,
    data: &Dataset,
    clean: &CleanView,
    act: SmoothedRelu,
) -> MetricsRow {
    let dict = &data.dictionary;
    let preacts = clean.batch.x.dot(&model.weights().t());
    let (k, m, p) = (model.classes(), model.kernels_per_class(), clean.batch.patches);
    let (mut hit_m, mut n_m, mut hit_s, mut n_s) = (0usize, 0usize, 0usize, 0usize);
    let mut noise_max = 0.0f64;
    for (idx, s) in data.samples.iter().enumerate() {
        let block = preacts.slice(ndarray::s![idx * p..(idx + 1) * p, ..]);
        let mut scores = ndarray::Array1::<f64>::zeros(k);
        for row in block.outer_iter() {
            for (j, &z) in row.iter().enumerate() {
                scores[j / m] += act.value(z);
            }
        }
        let ok = argmax(scores.view()) == s.label;
        if clean.multi[idx] {
            n_m += 1;
            hit_m += ok as usize;
        } else {
            n_s += 1;
            hit_s += ok as usize;
        }
        for q in s.free_patches() {
            noise_max = block.row(q).iter().fold(noise_max, |a, b| a.max(b.abs()));
        }
    }
    let ratio = |h: usize, n: usize| if n == 0 { f64::NAN } else { h as f64 / n as f64 };
    let (off_diag_max, diag_min) = correlation_extremes(model, dict);
    MetricsRow {
        iter,
        loss,
        phi: compute_phi(model, dict).iter().copied().collect(),
        lambda: compute_lambda(model, dict).iter().copied().collect(),
        off_diag_max,
        diag_min,
        noise_corr_max: noise_max,
        acc_multi: ratio(hit_m, n_m),
        acc_single: ratio(hit_s, n_s),
    }
}

/// Runs gradient descent from a fresh initialization drawn from `rng`.
///
/// The initialization is the first thing drawn from `rng`, so runs of
/// different modes with equal RNG state start from the same model.
pub fn train(
    cfg: &ExperimentConfig,
    aug: &AugmentConfig,
    spec: &TrainSpec,
    data: &Dataset,
    rng: &mut LabRng,
) -> Result<TrainOutcome> {
    let init = init_model(cfg, rng);
    let aug_seed = fork_seed(rng);
    train_from(init, cfg, aug, spec, data, aug_seed)
}

/// Gradient descent from a given initialization; augmentation draws for
/// iteration `t` come from stream `t` of `aug_seed`.
pub fn train_from(
    init: ModelParams,
    cfg: &ExperimentConfig,
    aug: &AugmentConfig,
    spec: &TrainSpec,
    data: &Dataset,
    aug_seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if let Some(effect) = spec.mode.effect() {
        aug.validate(Some(effect))?;
    }
    if data.is_empty() {
        return Err(Error::Shape("empty training set".into()));
    }
    let act = SmoothedRelu::from_config(cfg);
    let dict = &data.dictionary;
    let max_iters = spec.max_iters.unwrap_or(cfg.max_iters);
    let clean = CleanView {
        batch: Batch::from_samples(&data.samples, dict),
        multi: data.samples.iter().map(|s| s.kind == ViewKind::MultiView).collect(),
    };
    let augmented = spec.mode != TrainMode::Vanilla;
    let iteration_seed = |t: u64| fork_seed(&mut stream_rng(aug_seed, t));
    let mut batch = if augmented {
        Batch::from_samples(&augment_dataset(data, aug, spec.mode, iteration_seed(0))?, dict)
    } else {
        clean.batch.clone()
    };

    let mut model = init.clone();
    let mut log = MetricsLog {
        classes: cfg.classes,
        rows: Vec::new(),
    };
    let mut t = 0;
    loop {
        if augmented && spec.resample == Resample::PerIteration && t > 0 {
            batch.refill(&augment_dataset(data, aug, spec.mode, iteration_seed(t as u64))?, dict);
        }
        let g = loss_and_grad(&model, &batch, act)?;
        if !g.loss.is_finite() || g.grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: t,
                what: format!("loss = {}", g.loss),
                last_finite: Box::new(model),
            });
        }
        let done = g.loss <= spec.eps_stop || t >= max_iters;
        if t % spec.log_every == 0 || done {
            log.rows.push(log_row(t, g.loss, &model, data, &clean, act));
        }
        if done {
            let stop = if g.loss <= spec.eps_stop {
                StopReason::Converged
            } else {
                StopReason::Budget
            };
            return Ok(TrainOutcome {
                model,
                init,
                log,
                iterations: t,
                final_loss: g.loss,
                stop,
            });
        }
        let before = model.clone();
        gd_step(&mut model, &g.grad, cfg.learning_rate);
        if !model.is_finite() {
            return Err(Error::NonFinite {
                iteration: t + 1,
                what: "weights".into(),
                last_finite: Box::new(before),
            });
        }
        t += 1;
    }
}
