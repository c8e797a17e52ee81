//! Patch network `F_i(X) = sum_r sum_p act(<w_{i,r}, x_p>)` with softmax
//! cross-entropy and closed-form gradients.
//!
//! Batched evaluation works on a stacked `(n * P) x d` patch matrix so both
//! the forward pass and the gradient are one matrix product each.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::synthdata::{stack_patches, FeatureDictionary, Sample};

/// Smoothed ReLU: zero below 0, `z^q / (q varrho^(q-1))` on `[0, varrho]`,
/// `z - (1 - 1/q) varrho` above.
pub fn smoothed_relu(z: f64, q: u32, varrho: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z < varrho {
        z.powi(q as i32) / (q as f64 * varrho.powi(q as i32 - 1))
    } else {
        z - (1.0 - 1.0 / q as f64) * varrho
    }
}

/// Derivative of [`smoothed_relu`]; 0 at `z = 0` and 1 at `z = varrho`.
pub fn smoothed_relu_deriv(z: f64, q: u32, varrho: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else if z < varrho {
        (z / varrho).powi(q as i32 - 1)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothedRelu {
    pub q: u32,
    pub varrho: f64,
}

impl SmoothedRelu {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            q: cfg.q,
            varrho: cfg.varrho,
        }
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        smoothed_relu(z, self.q, self.varrho)
    }

    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        smoothed_relu_deriv(z, self.q, self.varrho)
    }

    /// Value and derivative in one branch evaluation.
    #[inline]
    pub fn value_deriv(&self, z: f64) -> (f64, f64) {
        if z <= 0.0 {
            (0.0, 0.0)
        } else if z < self.varrho {
            let t = (z / self.varrho).powi(self.q as i32 - 1);
            (t * z / self.q as f64, t)
        } else {
            (z - (1.0 - 1.0 / self.q as f64) * self.varrho, 1.0)
        }
    }
}

/// The `m k` kernels; row `i * m + r` is `w_{i,r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    classes: usize,
    kernels_per_class: usize,
    kernels: Array2<f64>,
}

pub const CHECKPOINT_FORMAT: &str = "featlab-model";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: shape header plus row-major weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub classes: usize,
    pub kernels_per_class: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(classes: usize, kernels_per_class: usize, dim: usize) -> Self {
        Self {
            classes,
            kernels_per_class,
            kernels: Array2::zeros((classes * kernels_per_class, dim)),
        }
    }

    pub fn from_weights(classes: usize, kernels_per_class: usize, kernels: Array2<f64>) -> Result<Self> {
        if kernels.nrows() != classes * kernels_per_class {
            return Err(Error::Shape(format!(
                "{} kernel rows for k = {classes}, m = {kernels_per_class}",
                kernels.nrows()
            )));
        }
        Ok(Self {
            classes,
            kernels_per_class,
            kernels,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn kernels_per_class(&self) -> usize {
        self.kernels_per_class
    }

    pub fn dim(&self) -> usize {
        self.kernels.ncols()
    }

    pub fn kernel(&self, class: usize, r: usize) -> ArrayView1<'_, f64> {
        self.kernels.row(class * self.kernels_per_class + r)
    }

    pub fn kernel_mut(&mut self, class: usize, r: usize) -> ArrayViewMut1<'_, f64> {
        self.kernels.row_mut(class * self.kernels_per_class + r)
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.kernels
    }

    pub fn weights_mut(&mut self) -> &mut Array2<f64> {
        &mut self.kernels
    }

    pub fn is_finite(&self) -> bool {
        self.kernels.iter().all(|w| w.is_finite())
    }

    /// `<w_{i,r}, v_{j,l}>` for all kernels and features: `mk x 2k`.
    pub fn feature_correlations(&self, dict: &FeatureDictionary) -> Array2<f64> {
        self.kernels.dot(&dict.matrix().t())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            classes: self.classes,
            kernels_per_class: self.kernels_per_class,
            dim: self.dim(),
            weights: self.kernels.iter().copied().collect(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        let rows = c.classes * c.kernels_per_class;
        let kernels = Array2::from_shape_vec((rows, c.dim), c.weights)
            .map_err(|e| Error::Shape(format!("checkpoint weights: {e}")))?;
        Self::from_weights(c.classes, c.kernels_per_class, kernels)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// Every coordinate i.i.d. `N(0, sigma_0^2)`, drawn in row-major order.
pub fn init_model<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> ModelParams {
    let mut model = ModelParams::zeros(cfg.classes, cfg.kernels_per_class, cfg.dim);
    let s0 = cfg.init_scale;
    model
        .kernels
        .mapv_inplace(|_| s0 * rng.sample::<f64, _>(StandardNormal));
    model
}

/// Max-subtracted softmax.
pub fn softmax(scores: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = scores.mapv(|s| (s - max).exp());
    let total = e.sum();
    e / total
}

/// `log sum_j exp(s_j)`, stable.
pub fn log_sum_exp(scores: ArrayView1<'_, f64>) -> f64 {
    let max = scores.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Soft-label cross entropy `-sum_c y_c log p_c` computed from scores.
pub fn soft_label_loss(scores: ArrayView1<'_, f64>, target: ArrayView1<'_, f64>) -> f64 {
    let lse = log_sum_exp(scores);
    scores
        .iter()
        .zip(target.iter())
        .map(|(s, y)| if *y == 0.0 { 0.0 } else { -y * (s - lse) })
        .sum()
}

/// Hard-label cross entropy `-log p_y`.
pub fn cross_entropy(scores: ArrayView1<'_, f64>, label: usize) -> f64 {
    log_sum_exp(scores) - scores[label]
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub scores: Array1<f64>,
    pub probs: Array1<f64>,
    /// `<w_{i,r}, x_p>`, shape `P x mk`.
    pub preacts: Array2<f64>,
}

fn check_dim(model: &ModelParams, d: usize) -> Result<()> {
    if model.dim() != d {
        return Err(Error::Shape(format!(
            "model dimension {} but patches have dimension {d}",
            model.dim()
        )));
    }
    Ok(())
}

/// Sums `act(a)` over patches and kernels of each class; `a` is `P x mk`.
fn class_scores(a: ArrayView2<'_, f64>, k: usize, m: usize, act: SmoothedRelu) -> Array1<f64> {
    let mut scores = Array1::zeros(k);
    for row in a.outer_iter() {
        for (i, s) in scores.iter_mut().enumerate() {
            *s += row
                .slice(ndarray::s![i * m..(i + 1) * m])
                .iter()
                .map(|&z| act.value(z))
                .sum::<f64>();
        }
    }
    scores
}

/// Forward pass on one `P x d` patch matrix.
pub fn forward(model: &ModelParams, patches: ArrayView2<'_, f64>, act: SmoothedRelu) -> Result<ForwardOutput> {
    check_dim(model, patches.ncols())?;
    let preacts = patches.dot(&model.kernels.t());
    let scores = class_scores(preacts.view(), model.classes, model.kernels_per_class, act);
    let probs = softmax(scores.view());
    Ok(ForwardOutput {
        scores,
        probs,
        preacts,
    })
}

pub fn forward_sample(
    model: &ModelParams,
    sample: &Sample,
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
) -> Result<ForwardOutput> {
    forward(model, sample.patches(dict).view(), SmoothedRelu::from_config(cfg))
}

/// Stacked patches of `n` samples with hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `(n * P) x d`; rows `s * P .. (s + 1) * P` belong to sample `s`.
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub patches: usize,
}

impl Batch {
    pub fn from_samples(samples: &[Sample], dict: &FeatureDictionary) -> Self {
        let mut x = Array2::zeros((0, dict.dim()));
        stack_patches(samples, dict, &mut x);
        Self {
            x,
            labels: samples.iter().map(|s| s.label).collect(),
            patches: samples.first().map_or(0, Sample::num_patches),
        }
    }

    /// Re-renders in place, reusing the allocation when shapes agree.
    pub fn refill(&mut self, samples: &[Sample], dict: &FeatureDictionary) {
        stack_patches(samples, dict, &mut self.x);
        self.labels.clear();
        self.labels.extend(samples.iter().map(|s| s.label));
        self.patches = samples.first().map_or(0, Sample::num_patches);
    }

    pub fn from_parts(x: Array2<f64>, labels: Vec<usize>, patches: usize) -> Result<Self> {
        if patches == 0 || x.nrows() != labels.len() * patches {
            return Err(Error::Shape(format!(
                "{} rows for {} samples of {patches} patches",
                x.nrows(),
                labels.len()
            )));
        }
        Ok(Self { x, labels, patches })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_patches(&self, s: usize) -> ArrayView2<'_, f64> {
        self.x.slice(ndarray::s![s * self.patches..(s + 1) * self.patches, ..])
    }
}

/// Scores `F(X)` for every sample of a batch: `n x k`.
pub fn batch_scores(model: &ModelParams, batch: &Batch, act: SmoothedRelu) -> Result<Array2<f64>> {
    check_dim(model, batch.x.ncols())?;
    let a = batch.x.dot(&model.kernels.t());
    Ok(scores_from_preacts(&a, batch, model, act))
}

fn scores_from_preacts(a: &Array2<f64>, batch: &Batch, model: &ModelParams, act: SmoothedRelu) -> Array2<f64> {
    let (k, m, p) = (model.classes, model.kernels_per_class, batch.patches);
    let mut scores = Array2::zeros((batch.len(), k));
    for (s, mut out) in scores.axis_iter_mut(Axis(0)).enumerate() {
        out.assign(&class_scores(
            a.slice(ndarray::s![s * p..(s + 1) * p, ..]),
            k,
            m,
            act,
        ));
    }
    scores
}

/// Mean cross-entropy over a batch.
pub fn loss(model: &ModelParams, batch: &Batch, act: SmoothedRelu) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let scores = batch_scores(model, batch, act)?;
    Ok(mean_cross_entropy(&scores, &batch.labels))
}

pub fn mean_cross_entropy(scores: &Array2<f64>, labels: &[usize]) -> f64 {
    scores
        .outer_iter()
        .zip(labels)
        .map(|(s, &y)| cross_entropy(s, y))
        .sum::<f64>()
        / labels.len() as f64
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    /// Same layout as [`ModelParams::weights`].
    pub grad: Array2<f64>,
    /// `n x k` scores of the batch.
    pub scores: Array2<f64>,
}

/// Mean loss and its exact gradient.
///
/// With `c_{s,p,(i,r)} = (p_i(X_s) - 1[i = y_s]) act'(<w_{i,r}, x_{s,p}>) / n`
/// the gradient is `C^T X`.
pub fn loss_and_grad(model: &ModelParams, batch: &Batch, act: SmoothedRelu) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    check_dim(model, batch.x.ncols())?;
    let (k, m, p) = (model.classes, model.kernels_per_class, batch.patches);
    let n = batch.len();
    let mut c = batch.x.dot(&model.kernels.t());
    let mut scores = Array2::<f64>::zeros((n, k));
    // First pass: scores; the derivative overwrites the preactivation.
    for (s, mut sc) in scores.axis_iter_mut(Axis(0)).enumerate() {
        for mut row in c.slice_mut(ndarray::s![s * p..(s + 1) * p, ..]).outer_iter_mut() {
            for (j, z) in row.iter_mut().enumerate() {
                let (v, dv) = act.value_deriv(*z);
                sc[j / m] += v;
                *z = dv;
            }
        }
    }
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (s, sc) in scores.outer_iter().enumerate() {
        let y = batch.labels[s];
        total += cross_entropy(sc, y);
        let mut coef = softmax(sc);
        coef[y] -= 1.0;
        coef *= inv_n;
        for mut row in c.slice_mut(ndarray::s![s * p..(s + 1) * p, ..]).outer_iter_mut() {
            for (j, z) in row.iter_mut().enumerate() {
                *z *= coef[j / m];
            }
        }
    }
    let grad = c.t().dot(&batch.x);
    Ok(LossGrad {
        loss: total * inv_n,
        grad,
        scores,
    })
}

/// Central finite-difference gradient of the mean loss; `O(mkd)` loss calls.
pub fn finite_difference_grad(model: &ModelParams, batch: &Batch, act: SmoothedRelu, h: f64) -> Result<Array2<f64>> {
    let mut probe = model.clone();
    let mut out = Array2::zeros(model.kernels.raw_dim());
    for idx in 0..model.kernels.len() {
        let (r, c) = (idx / model.dim(), idx % model.dim());
        let w = model.kernels[[r, c]];
        probe.kernels[[r, c]] = w + h;
        let up = loss(&probe, batch, act)?;
        probe.kernels[[r, c]] = w - h;
        let down = loss(&probe, batch, act)?;
        probe.kernels[[r, c]] = w;
        out[[r, c]] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Largest coordinatewise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
