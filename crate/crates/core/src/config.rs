//! Scalar parameters of the data model, network and optimizer.
//!
//! Every asymptotic quantity in the data model ("O(1)", "1/polylog(k)", ...)
//! is pinned to an explicit field here so runs are reproducible at desk scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.0 - tol && x <= self.1 + tol
    }
}

/// Outcome of checking one named constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl ConstraintCheck {
    pub(crate) fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Turns the first failing check into an [`Error::Config`].
pub fn first_failure(checks: &[ConstraintCheck]) -> Result<()> {
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(Error::config(&c.name, &c.detail)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Number of classes `k`.
    pub classes: usize,
    /// Convolution kernels per class `m`.
    pub kernels_per_class: usize,
    /// Patches per input `P`.
    pub patches: usize,
    /// Patch dimension `d`; must be at least `2k`.
    pub dim: usize,
    /// Patches occupied by each present feature, `C_p`.
    pub patches_per_feature: usize,
    /// Off-class features are included with probability `sparsity / k`.
    pub sparsity: f64,
    /// Probability `mu` that a sample is single-view.
    pub single_view_prob: f64,
    /// Lower end `rho` of the minor-view coefficient sum in single-view data.
    pub minor_scale: f64,
    /// Upper end of the minor-view sum is `minor_scale * minor_scale_hi_mult`.
    pub minor_scale_hi_mult: f64,
    /// Coefficient sum `Gamma` of off-class features in single-view data.
    pub off_class_scale: f64,
    /// Feature-noise cap `gamma`: every patch carries `alpha * v'` for all
    /// dictionary rows with `alpha ~ U[0, gamma]`.
    pub feature_noise: f64,
    /// Gaussian noise std `sigma_p` on feature patches.
    pub patch_noise: f64,
    /// Gaussian noise std on purely-noise patches of clean data.
    pub pure_noise: f64,
    /// Gaussian noise std `sigma_n` on purely-noise patches of the noisy test
    /// distribution.
    pub noisy_test_noise: f64,
    /// Smoothed-ReLU exponent.
    pub q: u32,
    /// Smoothed-ReLU threshold.
    pub varrho: f64,
    /// Initialization std `sigma_0`.
    pub init_scale: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
    /// Training-set size `N`.
    pub train_size: usize,
    /// Range of the per-feature coefficient sum for main semantic features.
    pub semantic_range: Interval,
    /// Range of the per-feature coefficient sum for off-class features in
    /// multi-view data.
    pub noisy_range: Interval,
    /// Require `init_scale^(q-2) = 1/k`.
    #[serde(default)]
    pub paper_regime: bool,
    pub seed: u64,
}

/// Desk-scale defaults. `mu = 1/k^2`, a small `sigma_0` and a large step
/// keep the single-view fraction from pulling the losing view of each class
/// back up within the iteration budget.
impl Default for ExperimentConfig {
    fn default() -> Self {
        let dim = 256usize;
        let sqrt_d = (dim as f64).sqrt();
        Self {
            classes: 10,
            kernels_per_class: 8,
            patches: 30,
            dim,
            patches_per_feature: 2,
            sparsity: 2.0,
            single_view_prob: 0.01,
            minor_scale: 0.05,
            minor_scale_hi_mult: 1.5,
            off_class_scale: 0.25,
            feature_noise: 1e-3,
            patch_noise: 1.0 / (4.0 * sqrt_d),
            pure_noise: 1e-3 * 10.0 / sqrt_d,
            noisy_test_noise: 0.5 / sqrt_d,
            q: 3,
            varrho: 0.8,
            init_scale: 0.01,
            learning_rate: 3.0,
            max_iters: 800,
            train_size: 1000,
            semantic_range: Interval(1.0, 1.5),
            noisy_range: Interval(0.2, 0.4),
            paper_regime: false,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Initialization scale satisfying `sigma_0^(q-2) = 1/k`.
    pub fn paper_init_scale(&self) -> f64 {
        (self.classes as f64).powf(-1.0 / (self.q as f64 - 2.0))
    }

    /// Inclusion probability `s/k` of each off-class feature.
    pub fn inclusion_prob(&self) -> f64 {
        (self.sparsity / self.classes as f64).clamp(0.0, 1.0)
    }

    pub fn minor_range(&self) -> Interval {
        Interval(self.minor_scale, self.minor_scale * self.minor_scale_hi_mult)
    }

    pub fn checks(&self) -> Vec<ConstraintCheck> {
        let mut out = Vec::new();
        let mut push = |name: &str, ok: bool, detail: String| {
            out.push(ConstraintCheck::new(name, ok, detail));
        };
        push("k >= 2", self.classes >= 2, format!("k = {}", self.classes));
        push(
            "m >= 1",
            self.kernels_per_class >= 1,
            format!("m = {}", self.kernels_per_class),
        );
        push(
            "d >= 2k",
            self.dim >= 2 * self.classes,
            format!("d = {}, 2k = {}", self.dim, 2 * self.classes),
        );
        push(
            "C_p >= 1",
            self.patches_per_feature >= 1,
            format!("C_p = {}", self.patches_per_feature),
        );
        push(
            "2*C_p <= P",
            2 * self.patches_per_feature <= self.patches,
            format!("C_p = {}, P = {}", self.patches_per_feature, self.patches),
        );
        push("q >= 3", self.q >= 3, format!("q = {}", self.q));
        push(
            "0 < varrho < 1",
            self.varrho > 0.0 && self.varrho < 1.0,
            format!("varrho = {}", self.varrho),
        );
        push(
            "0 <= mu <= 1",
            (0.0..=1.0).contains(&self.single_view_prob),
            format!("mu = {}", self.single_view_prob),
        );
        push("s >= 0", self.sparsity >= 0.0, format!("s = {}", self.sparsity));
        push(
            "rho > 0",
            self.minor_scale > 0.0 && self.minor_scale_hi_mult >= 1.0,
            format!(
                "rho = {}, hi multiplier = {}",
                self.minor_scale, self.minor_scale_hi_mult
            ),
        );
        push(
            "Gamma > 0",
            self.off_class_scale > 0.0,
            format!("Gamma = {}", self.off_class_scale),
        );
        let noise_ok = [
            self.feature_noise,
            self.patch_noise,
            self.pure_noise,
            self.noisy_test_noise,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        push(
            "noise scales >= 0",
            noise_ok,
            format!(
                "gamma = {}, sigma_p = {}, pure = {}, sigma_n = {}",
                self.feature_noise, self.patch_noise, self.pure_noise, self.noisy_test_noise
            ),
        );
        push(
            "semantic_range lo <= hi",
            self.semantic_range.lo() > 0.0 && self.semantic_range.lo() <= self.semantic_range.hi(),
            format!("{:?}", self.semantic_range),
        );
        push(
            "noisy_range lo <= hi",
            self.noisy_range.lo() >= 0.0 && self.noisy_range.lo() <= self.noisy_range.hi(),
            format!("{:?}", self.noisy_range),
        );
        push(
            "noisy_range hi <= 0.4",
            self.noisy_range.hi() <= 0.4,
            format!("hi = {}", self.noisy_range.hi()),
        );
        push(
            "sigma_0 >= 0",
            self.init_scale >= 0.0 && self.init_scale.is_finite(),
            format!("sigma_0 = {}", self.init_scale),
        );
        push(
            "eta >= 0",
            self.learning_rate >= 0.0 && self.learning_rate.is_finite(),
            format!("eta = {}", self.learning_rate),
        );
        push(
            "T_max >= 1",
            self.max_iters >= 1,
            format!("T_max = {}", self.max_iters),
        );
        push("N >= 1", self.train_size >= 1, format!("N = {}", self.train_size));
        if self.paper_regime && self.q >= 3 {
            let target = self.paper_init_scale();
            push(
                "sigma_0^(q-2) = 1/k",
                (self.init_scale - target).abs() <= 1e-12 * target.max(1.0),
                format!("sigma_0 = {}, required {}", self.init_scale, target),
            );
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        first_failure(&self.checks())
    }
}
