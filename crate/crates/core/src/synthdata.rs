//! Multi-view / single-view synthetic data.
//!
//! A sample is a set of `P` patches in `R^d`. Each present feature `v` occupies
//! `C_p` disjoint patches `x_p = z_p v + sum_{v'} alpha_{p,v'} v' + xi_p`; the
//! remaining patches carry only the feature-noise and Gaussian terms. The
//! per-sample "background" `alpha V + xi` is stored once so augmentations can
//! rewrite coefficients and re-render patches without touching the noise.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::seeding::{fork_seed, stream_rng};

/// Attempts at drawing a feature set that fits into `P` patches.
pub const MAX_GENERATION_ATTEMPTS: usize = 10;

/// Semantic feature `v_{class, view}` with `view` in `{0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureId {
    pub class: usize,
    pub view: usize,
}

impl FeatureId {
    pub fn new(class: usize, view: usize) -> Self {
        debug_assert!(view < 2);
        Self { class, view }
    }

    /// Row of this feature in the dictionary.
    pub fn row(self) -> usize {
        2 * self.class + self.view
    }

    /// The other view of the same class.
    pub fn sibling(self) -> Self {
        Self::new(self.class, 1 - self.view)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v[{},{}]", self.class, self.view)
    }
}

/// `2k` orthonormal feature directions in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDictionary {
    classes: usize,
    vectors: Array2<f64>,
}

impl FeatureDictionary {
    /// First `2k` rows of a Haar-random rotation of `R^d`.
    ///
    /// Gaussian rows are orthonormalized with two passes of modified
    /// Gram-Schmidt, which keeps the Gram matrix at identity to rounding.
    pub fn build<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if dim < 2 * classes {
            return Err(Error::config(
                "d >= 2k",
                format!("d = {dim}, 2k = {}", 2 * classes),
            ));
        }
        let rows = 2 * classes;
        let mut v = Array2::<f64>::zeros((rows, dim));
        v.mapv_inplace(|_| rng.sample(StandardNormal));
        for _pass in 0..2 {
            for i in 0..rows {
                for j in 0..i {
                    let proj = v.row(i).dot(&v.row(j));
                    let vj = v.row(j).to_owned();
                    v.row_mut(i).scaled_add(-proj, &vj);
                }
                let norm = v.row(i).dot(&v.row(i)).sqrt();
                v.row_mut(i).mapv_inplace(|x| x / norm);
            }
        }
        Ok(Self { classes, vectors: v })
    }

    /// Wraps explicit rows; used by tests that need hand-built features.
    pub fn from_rows(vectors: Array2<f64>) -> Result<Self> {
        if !vectors.nrows().is_multiple_of(2) || vectors.nrows() == 0 {
            return Err(Error::Shape(format!(
                "dictionary needs an even, non-zero number of rows, got {}",
                vectors.nrows()
            )));
        }
        Ok(Self {
            classes: vectors.nrows() / 2,
            vectors,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vector(&self, id: FeatureId) -> ArrayView1<'_, f64> {
        self.vectors.row(id.row())
    }

    /// All rows, `2k x d`, ordered by [`FeatureId::row`].
    pub fn matrix(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn gram(&self) -> Array2<f64> {
        self.vectors.dot(&self.vectors.t())
    }
}

/// Coefficients of one feature in one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePatches {
    pub feature: FeatureId,
    pub patches: Vec<usize>,
    pub coefficients: Vec<f64>,
}

impl FeaturePatches {
    pub fn sum(&self) -> f64 {
        self.coefficients.iter().sum()
    }

    /// Scales the coefficients so they sum to `target`.
    pub fn rescale_to(&mut self, target: f64) {
        let current = self.sum();
        if current > 0.0 {
            let f = target / current;
            self.coefficients.iter_mut().for_each(|z| *z *= f);
        } else if !self.coefficients.is_empty() {
            let each = target / self.coefficients.len() as f64;
            self.coefficients.iter_mut().for_each(|z| *z = each);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.coefficients.iter_mut().for_each(|z| *z *= factor);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViewKind {
    MultiView,
    /// Only `main_view` is present at full scale; the sibling view is at the
    /// minor scale `rho`.
    SingleView { main_view: usize },
}

/// Which augmentation effect produced a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum AugTrace {
    #[default]
    None,
    Removal {
        view: usize,
    },
    Mixing {
        partner_label: usize,
        injected: Vec<FeatureId>,
        skipped: Vec<FeatureId>,
    },
    Combined {
        view: usize,
        partner_label: usize,
        injected: Vec<FeatureId>,
        skipped: Vec<FeatureId>,
    },
    PixelMixup {
        lambda: f64,
        partner_label: usize,
    },
    CutMix {
        lambda: f64,
        partner_label: usize,
        replaced: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: usize,
    pub kind: ViewKind,
    /// Drawn from the noisy test distribution (larger purely-noise patches).
    pub noisy_test: bool,
    pub features: Vec<FeaturePatches>,
    /// `alpha_{p, v'}`, shape `P x 2k`.
    pub feature_noise: Arc<Array2<f64>>,
    /// `xi_p`, shape `P x d`.
    pub gaussian: Arc<Array2<f64>>,
    /// `alpha V + xi`, shape `P x d`.
    background: Arc<Array2<f64>>,
    pub aug: AugTrace,
}

impl Sample {
    /// Assembles a sample from its parts; the background is derived.
    pub fn from_parts(
        label: usize,
        kind: ViewKind,
        features: Vec<FeaturePatches>,
        feature_noise: Array2<f64>,
        gaussian: Array2<f64>,
        dict: &FeatureDictionary,
    ) -> Result<Self> {
        if feature_noise.nrows() != gaussian.nrows()
            || feature_noise.ncols() != dict.matrix().nrows()
            || gaussian.ncols() != dict.dim()
        {
            return Err(Error::Shape(format!(
                "feature noise {:?}, gaussian {:?}, dictionary {:?}",
                feature_noise.dim(),
                gaussian.dim(),
                dict.matrix().dim()
            )));
        }
        let background = feature_noise.dot(dict.matrix()) + &gaussian;
        Ok(Self {
            label,
            kind,
            noisy_test: false,
            features,
            feature_noise: Arc::new(feature_noise),
            gaussian: Arc::new(gaussian),
            background: Arc::new(background),
            aug: AugTrace::None,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.background.nrows()
    }

    pub fn dim(&self) -> usize {
        self.background.ncols()
    }

    pub fn background(&self) -> &Array2<f64> {
        &self.background
    }

    /// Renders `x_p = background_p + sum_v z_p v` for every patch.
    pub fn patches(&self, dict: &FeatureDictionary) -> Array2<f64> {
        let mut out = Array2::zeros(self.background.raw_dim());
        self.write_patches(dict, out.view_mut());
        out
    }

    pub fn write_patches(&self, dict: &FeatureDictionary, mut out: ArrayViewMut2<'_, f64>) {
        out.assign(&self.background);
        for fp in &self.features {
            let v = dict.vector(fp.feature);
            for (&p, &z) in fp.patches.iter().zip(&fp.coefficients) {
                out.row_mut(p).scaled_add(z, &v);
            }
        }
    }

    pub fn occurrence(&self, id: FeatureId) -> Option<&FeaturePatches> {
        self.features.iter().find(|f| f.feature == id)
    }

    pub fn occurrence_mut(&mut self, id: FeatureId) -> Option<&mut FeaturePatches> {
        self.features.iter_mut().find(|f| f.feature == id)
    }

    /// `Z_{i,l}(X)`: coefficient sum of `id`, zero when absent.
    pub fn feature_sum(&self, id: FeatureId) -> f64 {
        self.features
            .iter()
            .filter(|f| f.feature == id)
            .map(FeaturePatches::sum)
            .sum()
    }

    pub fn is_semantic(&self, id: FeatureId) -> bool {
        id.class == self.label
    }

    /// Marks patches used by some feature.
    pub fn occupied(&self) -> Vec<bool> {
        let mut used = vec![false; self.num_patches()];
        for f in &self.features {
            for &p in &f.patches {
                used[p] = true;
            }
        }
        used
    }

    /// Indices of purely-noise patches, ascending.
    pub fn free_patches(&self) -> Vec<usize> {
        self.occupied()
            .iter()
            .enumerate()
            .filter(|(_, u)| !**u)
            .map(|(p, _)| p)
            .collect()
    }

    /// Scales the feature-noise and Gaussian terms of the given patches.
    pub fn scale_noise_rows(&mut self, dict: &FeatureDictionary, rows: &[usize], factor: f64) {
        let alpha = Arc::make_mut(&mut self.feature_noise);
        let xi = Arc::make_mut(&mut self.gaussian);
        let bg = Arc::make_mut(&mut self.background);
        for &p in rows {
            alpha.row_mut(p).mapv_inplace(|a| a * factor);
            xi.row_mut(p).mapv_inplace(|a| a * factor);
            let row = alpha.row(p).dot(dict.matrix()) + xi.row(p);
            bg.row_mut(p).assign(&row);
        }
    }

    /// Convex combination of two samples' noise terms, `lambda * a + (1 - lambda) * b`.
    pub(crate) fn blend_noise(a: &Sample, b: &Sample, lambda: f64) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let mix = |x: &Array2<f64>, y: &Array2<f64>| x * lambda + &(y * (1.0 - lambda));
        (
            mix(&a.feature_noise, &b.feature_noise),
            mix(&a.gaussian, &b.gaussian),
            mix(&a.background, &b.background),
        )
    }

    /// Replaces the given noise rows of `self` by the rows of `other`.
    pub(crate) fn splice_noise_rows(&mut self, other: &Sample, rows: &[usize]) {
        let alpha = Arc::make_mut(&mut self.feature_noise);
        let xi = Arc::make_mut(&mut self.gaussian);
        let bg = Arc::make_mut(&mut self.background);
        for &p in rows {
            alpha.row_mut(p).assign(&other.feature_noise.row(p));
            xi.row_mut(p).assign(&other.gaussian.row(p));
            bg.row_mut(p).assign(&other.background.row(p));
        }
    }

    pub(crate) fn with_noise(
        mut self,
        feature_noise: Array2<f64>,
        gaussian: Array2<f64>,
        background: Array2<f64>,
    ) -> Self {
        self.feature_noise = Arc::new(feature_noise);
        self.gaussian = Arc::new(gaussian);
        self.background = Arc::new(background);
        self
    }

    /// `<x_p, v>` for every feature occurrence and its patches.
    pub fn project_coefficients(&self, dict: &FeatureDictionary) -> Vec<FeaturePatches> {
        let x = self.patches(dict);
        self.features
            .iter()
            .map(|f| FeaturePatches {
                feature: f.feature,
                patches: f.patches.clone(),
                coefficients: f
                    .patches
                    .iter()
                    .map(|&p| x.row(p).dot(&dict.vector(f.feature)))
                    .collect(),
            })
            .collect()
    }

    /// Checks the structural and coefficient-range invariants of a sample
    /// drawn from the clean or noisy distribution (no augmentation).
    pub fn check_generated(&self, cfg: &ExperimentConfig) -> std::result::Result<(), String> {
        const TOL: f64 = 1e-12;
        let mut seen = vec![false; self.num_patches()];
        for f in &self.features {
            if f.patches.len() != cfg.patches_per_feature || f.coefficients.len() != f.patches.len() {
                return Err(format!("{} has {} patches", f.feature, f.patches.len()));
            }
            for &p in &f.patches {
                if p >= seen.len() {
                    return Err(format!("{} uses patch {p} out of range", f.feature));
                }
                if seen[p] {
                    return Err(format!("patch {p} assigned twice"));
                }
                seen[p] = true;
            }
            if f.coefficients.iter().any(|z| *z < 0.0) {
                return Err(format!("{} has a negative coefficient", f.feature));
            }
            let sum = f.sum();
            let range = match (self.kind, self.is_semantic(f.feature)) {
                (ViewKind::MultiView, true) => cfg.semantic_range,
                (ViewKind::MultiView, false) => cfg.noisy_range,
                (ViewKind::SingleView { main_view }, true) if f.feature.view == main_view => {
                    cfg.semantic_range
                }
                (ViewKind::SingleView { .. }, true) => cfg.minor_range(),
                (ViewKind::SingleView { .. }, false) => {
                    crate::config::Interval(cfg.off_class_scale, cfg.off_class_scale)
                }
            };
            if !range.contains(sum, TOL) {
                return Err(format!("{} sum {sum} outside {:?}", f.feature, range));
            }
        }
        for view in 0..2 {
            if self.occurrence(FeatureId::new(self.label, view)).is_none() {
                return Err(format!("semantic view {view} missing"));
            }
        }
        Ok(())
    }

    fn hash_into(&self, h: &mut Sha256) {
        h.update((self.label as u64).to_le_bytes());
        match self.kind {
            ViewKind::MultiView => h.update([0u8]),
            ViewKind::SingleView { main_view } => h.update([1u8, main_view as u8]),
        }
        for f in &self.features {
            h.update((f.feature.row() as u64).to_le_bytes());
            for (&p, &z) in f.patches.iter().zip(&f.coefficients) {
                h.update((p as u64).to_le_bytes());
                h.update(z.to_bits().to_le_bytes());
            }
        }
        for x in self.background.iter() {
            h.update(x.to_bits().to_le_bytes());
        }
    }
}

/// Uniform draw in `[lo, hi]`.
fn uniform_in<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Splits `total` into `parts` nonnegative pieces by uniform stick-breaking.
pub fn stick_break<R: Rng + ?Sized>(rng: &mut R, total: f64, parts: usize) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..parts.saturating_sub(1)).map(|_| rng.random()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0.0;
    for c in cuts.into_iter().chain(std::iter::once(1.0)) {
        out.push((c - prev) * total);
        prev = c;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ViewChoice {
    Multi,
    Single,
}

fn generate<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    label: usize,
    choice: ViewChoice,
    pure_std: f64,
    rng: &mut R,
) -> Result<Sample> {
    let k = cfg.classes;
    let num_patches = cfg.patches;
    let cp = cfg.patches_per_feature;
    if label >= k {
        return Err(Error::Generation(format!("label {label} out of range for k = {k}")));
    }
    if dict.classes() != k || dict.dim() != cfg.dim {
        return Err(Error::Shape(format!(
            "dictionary is {}x{}, config wants k = {k}, d = {}",
            2 * dict.classes(),
            dict.dim(),
            cfg.dim
        )));
    }
    let incl = cfg.inclusion_prob();

    let mut attempts = 0;
    let off_class = loop {
        let mut chosen = Vec::new();
        for class in (0..k).filter(|&j| j != label) {
            for view in 0..2 {
                if rng.random::<f64>() < incl {
                    chosen.push(FeatureId::new(class, view));
                }
            }
        }
        if cp * (2 + chosen.len()) <= num_patches {
            break chosen;
        }
        attempts += 1;
        if attempts >= MAX_GENERATION_ATTEMPTS {
            return Err(Error::Generation(format!(
                "{} features need {} patches but P = {num_patches} after {attempts} attempts",
                2 + chosen.len(),
                cp * (2 + chosen.len())
            )));
        }
    };

    let kind = match choice {
        ViewChoice::Multi => ViewKind::MultiView,
        ViewChoice::Single => ViewKind::SingleView {
            main_view: rng.random_range(0..2),
        },
    };

    let mut order: Vec<usize> = (0..num_patches).collect();
    let needed = cp * (2 + off_class.len());
    for i in 0..needed {
        let j = rng.random_range(i..num_patches);
        order.swap(i, j);
    }

    let sem = cfg.semantic_range;
    let minor = cfg.minor_range();
    let all_features = [FeatureId::new(label, 0), FeatureId::new(label, 1)]
        .into_iter()
        .chain(off_class);
    let mut features = Vec::with_capacity(needed / cp);
    for (slot, feature) in all_features.enumerate() {
        let total = match (kind, feature.class == label) {
            (ViewKind::MultiView, true) => uniform_in(rng, sem.lo(), sem.hi()),
            (ViewKind::MultiView, false) => uniform_in(rng, cfg.noisy_range.lo(), cfg.noisy_range.hi()),
            (ViewKind::SingleView { main_view }, true) if feature.view == main_view => {
                uniform_in(rng, sem.lo(), sem.hi())
            }
            (ViewKind::SingleView { .. }, true) => uniform_in(rng, minor.lo(), minor.hi()),
            (ViewKind::SingleView { .. }, false) => cfg.off_class_scale,
        };
        let mut patches = order[slot * cp..(slot + 1) * cp].to_vec();
        patches.sort_unstable();
        features.push(FeaturePatches {
            feature,
            patches,
            coefficients: stick_break(rng, total, cp),
        });
    }

    let mut feature_patch = vec![false; num_patches];
    for &p in &order[..needed] {
        feature_patch[p] = true;
    }
    let mut alpha = Array2::<f64>::zeros((num_patches, 2 * k));
    alpha.mapv_inplace(|_| cfg.feature_noise * rng.random::<f64>());
    let mut xi = Array2::<f64>::zeros((num_patches, cfg.dim));
    for (p, mut row) in xi.axis_iter_mut(Axis(0)).enumerate() {
        let std = if feature_patch[p] { cfg.patch_noise } else { pure_std };
        row.mapv_inplace(|_| std * rng.sample::<f64, _>(StandardNormal));
    }
    Sample::from_parts(label, kind, features, alpha, xi, dict)
}

/// One multi-view sample of class `label`.
pub fn sample_multiview<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    label: usize,
    rng: &mut R,
) -> Result<Sample> {
    generate(dict, cfg, label, ViewChoice::Multi, cfg.pure_noise, rng)
}

/// One single-view sample of class `label`; the main view is uniform in `{0, 1}`.
pub fn sample_singleview<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    label: usize,
    rng: &mut R,
) -> Result<Sample> {
    generate(dict, cfg, label, ViewChoice::Single, cfg.pure_noise, rng)
}

fn mixture_choice<R: Rng + ?Sized>(cfg: &ExperimentConfig, rng: &mut R) -> ViewChoice {
    if rng.random::<f64>() < cfg.single_view_prob {
        ViewChoice::Single
    } else {
        ViewChoice::Multi
    }
}

/// One sample from the clean mixture: single-view with probability `mu`.
pub fn sample_clean<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    label: usize,
    rng: &mut R,
) -> Result<Sample> {
    let choice = mixture_choice(cfg, rng);
    generate(dict, cfg, label, choice, cfg.pure_noise, rng)
}

/// One sample from the noisy test distribution: identical feature patches,
/// purely-noise patches with std `noisy_test_noise`.
pub fn sample_noisy_test<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    label: usize,
    rng: &mut R,
) -> Result<Sample> {
    let choice = mixture_choice(cfg, rng);
    let mut s = generate(dict, cfg, label, choice, cfg.noisy_test_noise, rng)?;
    s.noisy_test = true;
    Ok(s)
}

/// Training set `Z = Z_m ∪ Z_s`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dictionary: Arc<FeatureDictionary>,
    pub samples: Vec<Sample>,
    /// Indices of multi-view samples (`Z_m`).
    pub multi_view: Vec<usize>,
    /// Indices of single-view samples (`Z_s`).
    pub single_view: Vec<usize>,
}

impl Dataset {
    pub fn from_samples(dictionary: Arc<FeatureDictionary>, samples: Vec<Sample>) -> Self {
        let (mut multi_view, mut single_view) = (Vec::new(), Vec::new());
        for (i, s) in samples.iter().enumerate() {
            match s.kind {
                ViewKind::MultiView => multi_view.push(i),
                ViewKind::SingleView { .. } => single_view.push(i),
            }
        }
        Self {
            dictionary,
            samples,
            multi_view,
            single_view,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// SHA-256 over labels, view kinds, coefficients and noise of every sample.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for x in self.dictionary.matrix().iter() {
            h.update(x.to_bits().to_le_bytes());
        }
        for s in &self.samples {
            s.hash_into(&mut h);
        }
        hex::encode(h.finalize())
    }

    pub fn to_record(&self) -> DatasetRecord {
        let dict = &self.dictionary;
        DatasetRecord {
            schema: 1,
            classes: dict.classes(),
            dim: dict.dim(),
            patches: self.samples.first().map_or(0, Sample::num_patches),
            dictionary: rows_of(dict.matrix()),
            samples: self.samples.iter().map(|s| SampleRecord::new(s, dict)).collect(),
        }
    }
}

/// Draws `N` labeled samples; labels uniform, single-view with probability `mu`.
///
/// Sample `i` uses its own RNG stream so generation is parallel and the
/// result depends only on `(cfg, rng state)`.
pub fn sample_dataset<R: Rng + ?Sized>(
    dict: &FeatureDictionary,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<Dataset> {
    let base = fork_seed(rng);
    let samples = (0..cfg.train_size)
        .into_par_iter()
        .map(|i| {
            let mut r = stream_rng(base, i as u64);
            let label = r.random_range(0..cfg.classes);
            sample_clean(dict, cfg, label, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::from_samples(Arc::new(dict.clone()), samples))
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// JSON layout of one sample: rendered patches plus generation metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub label: usize,
    pub view_kind: ViewKind,
    pub noisy_test: bool,
    pub features: Vec<FeaturePatches>,
    pub aug: AugTrace,
    /// `P` rows of length `d`.
    pub patches: Vec<Vec<f64>>,
}

impl SampleRecord {
    pub fn new(s: &Sample, dict: &FeatureDictionary) -> Self {
        Self {
            label: s.label,
            view_kind: s.kind,
            noisy_test: s.noisy_test,
            features: s.features.clone(),
            aug: s.aug.clone(),
            patches: rows_of(&s.patches(dict)),
        }
    }
}

/// JSON layout of a dataset (`schema = 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub schema: u32,
    pub classes: usize,
    pub dim: usize,
    pub patches: usize,
    /// `2k` rows; row `2i + l` is `v_{i,l}`.
    pub dictionary: Vec<Vec<f64>>,
    pub samples: Vec<SampleRecord>,
}

/// Writes the rendered patches of `samples` into one `(n * P) x d` matrix.
pub fn stack_patches(samples: &[Sample], dict: &FeatureDictionary, out: &mut Array2<f64>) {
    let p = samples.first().map_or(0, Sample::num_patches);
    let rows = samples.len() * p;
    if out.nrows() != rows || out.ncols() != dict.dim() {
        *out = Array2::zeros((rows, dict.dim()));
    }
    for (i, s) in samples.iter().enumerate() {
        s.write_patches(dict, out.slice_mut(s![i * p..(i + 1) * p, ..]));
    }
}
