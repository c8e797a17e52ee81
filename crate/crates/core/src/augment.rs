//! Augmentation-effect operators on [`Sample`]s and the Mixup/CutMix machinery.
//!
//! The effect operators act on stored coefficients; patches are re-rendered
//! from coefficients plus the untouched per-sample noise.

use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{first_failure, ConstraintCheck};
use crate::error::{Error, Result};
use crate::network::{cross_entropy, soft_label_loss, Batch, ModelParams, SmoothedRelu};
use crate::seeding::{fork_seed, stream_rng};
use crate::synthdata::{
    stick_break, AugTrace, Dataset, FeatureDictionary, FeatureId, FeaturePatches, Sample, ViewKind,
};

/// How A1 sets the reduced semantic sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RemovalMode {
    /// Exactly `C1`.
    #[default]
    Exact,
    /// Uniform on `[C1, 1.5 C1]`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub pi1: f64,
    pub pi2: f64,
    pub pi3: f64,
    /// Reduced semantic scale of A1.
    pub c1: f64,
    /// Semantic scale-down of mixing.
    pub c2: f64,
    /// Noisy scale-up of mixing.
    pub c3: f64,
    /// `C1` of the combined effect.
    pub c1_combined: f64,
    /// Beta parameter for Mixup / CutMix.
    pub alpha: f64,
    #[serde(default)]
    pub removal_mode: RemovalMode,
    /// Also scale the noise of the reduced feature's patches by the same factor.
    #[serde(default)]
    pub attenuate_noise: bool,
    /// Smallest coefficient sum of an injected noisy feature.
    pub inject_min: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            pi1: 0.5,
            pi2: 0.5,
            pi3: 0.5,
            c1: 0.2,
            c2: 0.1,
            c3: 0.1,
            c1_combined: 0.3,
            alpha: 1.0,
            removal_mode: RemovalMode::Exact,
            attenuate_noise: false,
            inject_min: 0.1,
        }
    }
}

/// Which family of constraints applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Removal,
    Mixing,
    Combined,
    Interpolation,
}

impl AugmentConfig {
    /// Named checks for the given effects; `None` checks every family.
    pub fn checks(&self, effect: Option<Effect>) -> Vec<ConstraintCheck> {
        let wants = |e: Effect| effect.is_none() || effect == Some(e);
        let mut out = Vec::new();
        let mut push = |name: &str, ok: bool, detail: String| out.push(ConstraintCheck::new(name, ok, detail));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let (c1, c2, c3, cc) = (self.c1, self.c2, self.c3, self.c1_combined);
        if wants(Effect::Removal) {
            push("0 <= pi1 <= 1", prob(self.pi1), format!("pi1 = {}", self.pi1));
            push("C1 in (0, 0.4)", c1 > 0.0 && c1 < 0.4, format!("C1 = {c1}"));
        }
        if wants(Effect::Mixing) || wants(Effect::Combined) {
            push("C2 > 0", c2 > 0.0 && c2 < 1.0, format!("C2 = {c2}"));
            push("C3 > 0", c3 > 0.0, format!("C3 = {c3}"));
            push("C2+C3 < 0.6", c2 + c3 < 0.6, format!("C2 + C3 = {}", c2 + c3));
            push(
                "inject_min <= C3",
                self.inject_min > 0.0 && self.inject_min <= c3,
                format!("inject_min = {}, C3 = {c3}", self.inject_min),
            );
        }
        if wants(Effect::Mixing) {
            push("0 <= pi2 <= 1", prob(self.pi2), format!("pi2 = {}", self.pi2));
        }
        if wants(Effect::Combined) {
            push("0 <= pi3 <= 1", prob(self.pi3), format!("pi3 = {}", self.pi3));
            push(
                "C1 > C2+C3",
                cc > c2 + c3,
                format!("C1 = {cc}, C2 + C3 = {}", c2 + c3),
            );
            push(
                "C2+C3 < 0.1 + C1/2",
                c2 + c3 < 0.1 + cc / 2.0,
                format!("C2 + C3 = {}, 0.1 + C1/2 = {}", c2 + c3, 0.1 + cc / 2.0),
            );
            push(
                "C1 < 0.4 + C2 + C3",
                cc < 0.4 + c2 + c3,
                format!("C1 = {cc}, 0.4 + C2 + C3 = {}", 0.4 + c2 + c3),
            );
        }
        if wants(Effect::Interpolation) {
            push("alpha > 0", self.alpha > 0.0, format!("alpha = {}", self.alpha));
        }
        out
    }

    pub fn validate(&self, effect: Option<Effect>) -> Result<()> {
        first_failure(&self.checks(effect))
    }

    /// Cap on an off-class feature's sum after mixing.
    pub fn noisy_cap(&self, kind: ViewKind) -> f64 {
        match kind {
            ViewKind::MultiView => 0.4 + self.c3,
            ViewKind::SingleView { .. } => self.c3,
        }
    }

    fn removal_target<R: Rng + ?Sized>(&self, base: f64, rng: &mut R) -> f64 {
        match self.removal_mode {
            RemovalMode::Exact => base,
            RemovalMode::Uniform => base * (1.0 + 0.5 * rng.random::<f64>()),
        }
    }
}

/// The view an effect reduces: random for multi-view, the present one for
/// single-view data.
fn removed_view<R: Rng + ?Sized>(sample: &Sample, rng: &mut R) -> usize {
    match sample.kind {
        ViewKind::MultiView => rng.random_range(0..2),
        ViewKind::SingleView { main_view } => main_view,
    }
}

fn reduce_feature(out: &mut Sample, id: FeatureId, target: f64, aug: &AugmentConfig, dict: &FeatureDictionary) {
    let Some(f) = out.occurrence_mut(id) else { return };
    let before = f.sum();
    f.rescale_to(target);
    if aug.attenuate_noise && before > 0.0 {
        let rows = f.patches.clone();
        out.scale_noise_rows(dict, &rows, (target / before).min(1.0));
    }
}

/// Partial semantic feature removal.
///
/// With probability `pi1` one semantic feature's sum is set to `C1` (or a
/// draw from `[C1, 1.5 C1]`); the other semantic feature and all noise are
/// left as they are unless noise attenuation is enabled.
pub fn apply_a1<R: Rng + ?Sized>(
    sample: &Sample,
    dict: &FeatureDictionary,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Sample {
    let mut out = sample.clone();
    if rng.random::<f64>() >= aug.pi1 {
        return out;
    }
    let view = removed_view(sample, rng);
    let target = aug.removal_target(aug.c1, rng);
    reduce_feature(&mut out, FeatureId::new(sample.label, view), target, aug, dict);
    out.aug = AugTrace::Removal { view };
    out
}

/// Shared mixing step: scales own semantic features (except `skip_view`),
/// folds or injects the partner's semantic features and clamps off-class sums.
fn mix_in<R: Rng + ?Sized>(
    out: &mut Sample,
    partner: &Sample,
    aug: &AugmentConfig,
    skip_view: Option<usize>,
    rng: &mut R,
) -> (Vec<FeatureId>, Vec<FeatureId>) {
    let y = out.label;
    let cap = aug.noisy_cap(out.kind);
    let cp = out.features.first().map_or(1, |f| f.patches.len());
    for view in 0..2 {
        if Some(view) == skip_view {
            continue;
        }
        if let Some(f) = out.occurrence_mut(FeatureId::new(y, view)) {
            f.scale(1.0 - aug.c2);
        }
    }
    let (mut injected, mut skipped) = (Vec::new(), Vec::new());
    for view in 0..2 {
        let id = FeatureId::new(partner.label, view);
        let partner_sum = partner.feature_sum(id);
        if partner.label == y {
            // Same class: the partner's share adds to the class feature.
            if let Some(f) = out.occurrence_mut(id) {
                let s = f.sum();
                f.rescale_to(s + aug.c2 * partner_sum);
            }
            continue;
        }
        let amount = aug.inject_min + (cap - aug.inject_min) * rng.random::<f64>();
        if let Some(f) = out.occurrence_mut(id) {
            let s = f.sum();
            f.rescale_to((s + amount).min(cap));
            injected.push(id);
            continue;
        }
        let free = out.free_patches();
        if free.len() < cp {
            skipped.push(id);
            continue;
        }
        let mut patches: Vec<usize> = sample_indices(rng, free.len(), cp).into_iter().map(|i| free[i]).collect();
        patches.sort_unstable();
        out.features.push(FeaturePatches {
            feature: id,
            patches,
            coefficients: stick_break(rng, amount, cp),
        });
        injected.push(id);
    }
    for f in out.features.iter_mut().filter(|f| f.feature.class != y) {
        if f.sum() > cap {
            f.rescale_to(cap);
        }
    }
    (injected, skipped)
}

/// Feature mixing with a partner drawn by the caller.
pub fn apply_a2<R: Rng + ?Sized>(sample: &Sample, partner: &Sample, aug: &AugmentConfig, rng: &mut R) -> Sample {
    let mut out = sample.clone();
    if rng.random::<f64>() >= aug.pi2 {
        return out;
    }
    let (injected, skipped) = mix_in(&mut out, partner, aug, None, rng);
    out.aug = AugTrace::Mixing {
        partner_label: partner.label,
        injected,
        skipped,
    };
    out
}

/// Removal and mixing together: the reduced feature ends at `C1 - C2`, the
/// kept one is scaled by `1 - C2`, and the partner is injected as in A2.
pub fn apply_a3<R: Rng + ?Sized>(
    sample: &Sample,
    partner: &Sample,
    dict: &FeatureDictionary,
    aug: &AugmentConfig,
    rng: &mut R,
) -> Sample {
    let mut out = sample.clone();
    if rng.random::<f64>() >= aug.pi3 {
        return out;
    }
    let view = removed_view(sample, rng);
    let target = aug.removal_target(aug.c1_combined, rng) - aug.c2;
    reduce_feature(&mut out, FeatureId::new(sample.label, view), target, aug, dict);
    let (injected, skipped) = mix_in(&mut out, partner, aug, Some(view), rng);
    out.aug = AugTrace::Combined {
        view,
        partner_label: partner.label,
        injected,
        skipped,
    };
    out
}

/// One draw from `Beta(alpha + 1, alpha)`.
pub fn mixup_lambda_reformulated<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    LambdaDist::Reformulated(alpha).draw(rng)
}

/// Mixing-coefficient law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaDist {
    /// `Beta(alpha, alpha)`.
    Symmetric(f64),
    /// `Beta(alpha + 1, alpha)`.
    Reformulated(f64),
    /// Always the given value; a degenerate hook for identity checks.
    Fixed(f64),
}

impl LambdaDist {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let (a, b) = match *self {
            LambdaDist::Fixed(l) => return Ok(l),
            LambdaDist::Symmetric(a) => (a, a),
            LambdaDist::Reformulated(a) => (a + 1.0, a),
        };
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::config("alpha > 0", format!("alpha = {b}")));
        }
        let beta = Beta::new(a, b).map_err(|e| Error::config("alpha > 0", e.to_string()))?;
        Ok(beta.sample(rng))
    }
}

fn check_same_shape(a: &Sample, b: &Sample) -> Result<()> {
    if a.num_patches() != b.num_patches() || a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "cannot mix {}x{} with {}x{}",
            a.num_patches(),
            a.dim(),
            b.num_patches(),
            b.dim()
        )));
    }
    Ok(())
}

/// `lambda a + (1 - lambda) b`, labelled `a.label`.
///
/// Coefficients of every feature occurrence and both noise terms mix
/// linearly, so the rendered patches equal the pixel-space interpolation.
pub fn pixel_mixup(a: &Sample, b: &Sample, lambda: f64) -> Result<Sample> {
    check_same_shape(a, b)?;
    let mut merged: Vec<FeaturePatches> = Vec::new();
    for (src, w) in [(a, lambda), (b, 1.0 - lambda)] {
        for f in &src.features {
            let slot = match merged.iter().position(|m| m.feature == f.feature) {
                Some(i) => i,
                None => {
                    merged.push(FeaturePatches {
                        feature: f.feature,
                        patches: Vec::new(),
                        coefficients: Vec::new(),
                    });
                    merged.len() - 1
                }
            };
            let m = &mut merged[slot];
            for (&p, &z) in f.patches.iter().zip(&f.coefficients) {
                match m.patches.iter().position(|&q| q == p) {
                    Some(j) => m.coefficients[j] += w * z,
                    None => {
                        m.patches.push(p);
                        m.coefficients.push(w * z);
                    }
                }
            }
        }
    }
    let (alpha, xi, bg) = Sample::blend_noise(a, b, lambda);
    let mut out = a.clone().with_noise(alpha, xi, bg);
    out.features = merged;
    out.aug = AugTrace::PixelMixup {
        lambda,
        partner_label: b.label,
    };
    Ok(out)
}

/// Contiguous run of `round((1 - lambda) P)` patch indices with a uniform
/// start clamped so the run fits.
pub fn cutmix_patchmask<R: Rng + ?Sized>(num_patches: usize, lambda: f64, rng: &mut R) -> Vec<usize> {
    let len = (((1.0 - lambda) * num_patches as f64).round() as usize).min(num_patches);
    let start = rng.random_range(0..=num_patches - len);
    (start..start + len).collect()
}

/// Replaces the masked patches of `a` by those of `b`; labelled `a.label`.
pub fn cutmix<R: Rng + ?Sized>(a: &Sample, b: &Sample, lambda: f64, rng: &mut R) -> Result<Sample> {
    check_same_shape(a, b)?;
    let mask = cutmix_patchmask(a.num_patches(), lambda, rng);
    let mut inside = vec![false; a.num_patches()];
    mask.iter().for_each(|&p| inside[p] = true);
    let mut features = Vec::new();
    for (src, keep_inside) in [(a, false), (b, true)] {
        for f in &src.features {
            let (patches, coefficients): (Vec<usize>, Vec<f64>) = f
                .patches
                .iter()
                .zip(&f.coefficients)
                .filter(|(p, _)| inside[**p] == keep_inside)
                .map(|(p, z)| (*p, *z))
                .unzip();
            if !patches.is_empty() {
                features.push(FeaturePatches {
                    feature: f.feature,
                    patches,
                    coefficients,
                });
            }
        }
    }
    let mut out = a.clone();
    out.splice_noise_rows(b, &mask);
    out.features = features;
    out.aug = AugTrace::CutMix {
        lambda,
        partner_label: b.label,
        replaced: mask,
    };
    Ok(out)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Pre-activations of every training sample, `N` blocks of `P x mk`.
///
/// Pre-activations are linear in the input, so the pre-activations of any
/// interpolation `lambda X_i + (1 - lambda) X_j` are the same interpolation
/// of these blocks.
struct PreactTable {
    a: Array2<f64>,
    labels: Vec<usize>,
    patches: usize,
    classes: usize,
    kernels: usize,
    act: SmoothedRelu,
}

impl PreactTable {
    fn new(model: &ModelParams, data: &Dataset, act: SmoothedRelu) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Shape("empty dataset".into()));
        }
        let batch = Batch::from_samples(&data.samples, &data.dictionary);
        if model.dim() != batch.x.ncols() {
            return Err(Error::Shape(format!(
                "model dimension {} but data dimension {}",
                model.dim(),
                batch.x.ncols()
            )));
        }
        Ok(Self {
            a: batch.x.dot(&model.weights().t()),
            labels: batch.labels,
            patches: batch.patches,
            classes: model.classes(),
            kernels: model.kernels_per_class(),
            act,
        })
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn mixed_scores(&self, i: usize, j: usize, lambda: f64) -> Array1<f64> {
        let p = self.patches;
        let mut scores = Array1::zeros(self.classes);
        for row in 0..p {
            let ai = self.a.row(i * p + row);
            let aj = self.a.row(j * p + row);
            for (c, (x, y)) in ai.iter().zip(aj.iter()).enumerate() {
                scores[c / self.kernels] += self.act.value(lambda * x + (1.0 - lambda) * y);
            }
        }
        scores
    }
}

/// One Mixup draw: indices, coefficient and the resulting scores.
struct Draw {
    i: usize,
    j: usize,
    lambda: f64,
    scores: Array1<f64>,
}

fn draws<R: Rng + ?Sized>(table: &PreactTable, lambda: LambdaDist, n_draws: usize, rng: &mut R) -> Result<Vec<Draw>> {
    if n_draws == 0 {
        return Err(Error::config("n_draws >= 1", "n_draws = 0"));
    }
    lambda.draw(rng)?;
    let base = fork_seed(rng);
    let n = table.len();
    (0..n_draws)
        .into_par_iter()
        .map(|t| {
            let mut r = stream_rng(base, t as u64);
            let i = r.random_range(0..n);
            let j = r.random_range(0..n);
            let l = lambda.draw(&mut r)?;
            Ok(Draw {
                i,
                j,
                lambda: l,
                scores: table.mixed_scores(i, j, l),
            })
        })
        .collect()
}

/// Soft-label Mixup loss `E_{i,j,lambda} [-sum_c y~_c log p_c]` by Monte Carlo,
/// pairs uniform over all `N^2` ordered index pairs.
pub fn mixup_loss_direct<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    act: SmoothedRelu,
    lambda: LambdaDist,
    n_draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let table = PreactTable::new(model, data, act)?;
    let values: Vec<f64> = draws(&table, lambda, n_draws, rng)?
        .iter()
        .map(|d| soft_loss(&d.scores, table.labels[d.i], table.labels[d.j], d.lambda))
        .collect();
    Ok(McEstimate::from_values(&values))
}

/// Hard-label form `E_{(X,y), X', lambda} [L(lambda X + (1 - lambda) X', y)]`.
/// Pass [`LambdaDist::Reformulated`] for the equivalence with the soft-label loss.
pub fn mixup_loss_reformulated<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    act: SmoothedRelu,
    lambda: LambdaDist,
    n_draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let table = PreactTable::new(model, data, act)?;
    let values: Vec<f64> = draws(&table, lambda, n_draws, rng)?
        .iter()
        .map(|d| cross_entropy(d.scores.view(), table.labels[d.i]))
        .collect();
    Ok(McEstimate::from_values(&values))
}

fn soft_loss(scores: &Array1<f64>, yi: usize, yj: usize, lambda: f64) -> f64 {
    let mut target = Array1::<f64>::zeros(scores.len());
    target[yi] += lambda;
    target[yj] += 1.0 - lambda;
    soft_label_loss(scores.view(), target.view())
}

/// Largest per-draw gap between the soft-label loss and
/// `lambda L(y_i) + (1 - lambda) L(y_j)`.
pub fn soft_label_decomposition_gap<R: Rng + ?Sized>(
    model: &ModelParams,
    data: &Dataset,
    act: SmoothedRelu,
    alpha: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let table = PreactTable::new(model, data, act)?;
    Ok(draws(&table, LambdaDist::Symmetric(alpha), n_draws, rng)?
        .iter()
        .map(|d| {
            let (yi, yj) = (table.labels[d.i], table.labels[d.j]);
            let soft = soft_loss(&d.scores, yi, yj, d.lambda);
            let split = d.lambda * cross_entropy(d.scores.view(), yi)
                + (1.0 - d.lambda) * cross_entropy(d.scores.view(), yj);
            (soft - split).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::seeding::rng_from_seed;
    use crate::synthdata::{sample_multiview, sample_singleview};

    fn setup() -> (ExperimentConfig, FeatureDictionary) {
        let cfg = ExperimentConfig {
            classes: 4,
            dim: 16,
            patches: 16,
            ..Default::default()
        };
        let dict = FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng_from_seed(1)).unwrap();
        (cfg, dict)
    }

    #[test]
    fn default_config_passes_every_family() {
        let aug = AugmentConfig::default();
        assert!(aug.checks(None).iter().all(|c| c.passed), "{:?}", aug.checks(None));
    }

    #[test]
    fn named_failures() {
        let name = |aug: AugmentConfig, e| match aug.validate(e) {
            Err(Error::Config { constraint, .. }) => constraint,
            other => panic!("unexpected {other:?}"),
        };
        let bad_mix = AugmentConfig {
            c2: 0.4,
            c3: 0.3,
            ..Default::default()
        };
        assert_eq!(name(bad_mix, None), "C2+C3 < 0.6");
        let bad_combined = AugmentConfig {
            c1_combined: 0.15,
            ..Default::default()
        };
        assert_eq!(name(bad_combined, Some(Effect::Combined)), "C1 > C2+C3");
        let bad_removal = AugmentConfig {
            c1: 0.4,
            ..Default::default()
        };
        assert_eq!(name(bad_removal, Some(Effect::Removal)), "C1 in (0, 0.4)");
    }

    #[test]
    fn mixing_constants_only_checked_where_relevant() {
        // Valid for mixing alone but not for the combined effect.
        let aug = AugmentConfig {
            c2: 0.2,
            c3: 0.2,
            ..Default::default()
        };
        assert!(aug.validate(Some(Effect::Mixing)).is_ok());
        assert!(aug.validate(Some(Effect::Combined)).is_err());
    }

    #[test]
    fn a1_rescales_one_view() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi1: 1.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(2);
        for _ in 0..20 {
            let s = sample_multiview(&dict, &cfg, 1, &mut rng).unwrap();
            let out = apply_a1(&s, &dict, &aug, &mut rng);
            let AugTrace::Removal { view } = out.aug else { panic!() };
            let removed = FeatureId::new(1, view);
            assert!((out.feature_sum(removed) - 0.2).abs() < 1e-12);
            assert_eq!(out.occurrence(removed.sibling()), s.occurrence(removed.sibling()));
            assert_eq!(out.background(), s.background());
        }
    }

    #[test]
    fn a1_single_view_targets_main_view() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi1: 1.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(3);
        let s = sample_singleview(&dict, &cfg, 2, &mut rng).unwrap();
        let ViewKind::SingleView { main_view } = s.kind else { panic!() };
        let out = apply_a1(&s, &dict, &aug, &mut rng);
        assert_eq!(out.aug, AugTrace::Removal { view: main_view });
    }

    #[test]
    fn a1_attenuation_scales_noise_rows() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi1: 1.0,
            attenuate_noise: true,
            ..Default::default()
        };
        let mut rng = rng_from_seed(4);
        let s = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let out = apply_a1(&s, &dict, &aug, &mut rng);
        let AugTrace::Removal { view } = out.aug else { panic!() };
        let f = s.occurrence(FeatureId::new(0, view)).unwrap();
        let factor = 0.2 / f.sum();
        for &p in &f.patches {
            for (a, b) in out.gaussian.row(p).iter().zip(s.gaussian.row(p)) {
                assert!((a - factor * b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn a2_scales_semantics_and_caps_noise() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi2: 1.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(5);
        let s = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let partner = sample_multiview(&dict, &cfg, 3, &mut rng).unwrap();
        let out = apply_a2(&s, &partner, &aug, &mut rng);
        for view in 0..2 {
            let id = FeatureId::new(0, view);
            assert!((out.feature_sum(id) - 0.9 * s.feature_sum(id)).abs() < 1e-12);
        }
        for f in out.features.iter().filter(|f| f.feature.class != 0) {
            assert!(f.sum() <= 0.5 + 1e-12);
        }
        assert!(out.feature_sum(FeatureId::new(3, 0)) >= aug.inject_min - 1e-12);
        let mut seen = vec![false; cfg.patches];
        for f in &out.features {
            for &p in &f.patches {
                assert!(!seen[p]);
                seen[p] = true;
            }
        }
    }

    #[test]
    fn a2_same_class_partner_folds_in() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi2: 1.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(6);
        let s = sample_multiview(&dict, &cfg, 2, &mut rng).unwrap();
        let partner = sample_multiview(&dict, &cfg, 2, &mut rng).unwrap();
        let out = apply_a2(&s, &partner, &aug, &mut rng);
        for view in 0..2 {
            let id = FeatureId::new(2, view);
            let expect = 0.9 * s.feature_sum(id) + 0.1 * partner.feature_sum(id);
            assert!((out.feature_sum(id) - expect).abs() < 1e-12);
        }
        assert_eq!(out.features.len(), s.features.len());
    }

    #[test]
    fn a2_without_room_records_skips() {
        let cfg = ExperimentConfig {
            classes: 4,
            dim: 16,
            patches: 4,
            sparsity: 0.0,
            ..Default::default()
        };
        let dict = FeatureDictionary::build(4, 16, &mut rng_from_seed(1)).unwrap();
        let aug = AugmentConfig {
            pi2: 1.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(7);
        let s = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let partner = sample_multiview(&dict, &cfg, 1, &mut rng).unwrap();
        let out = apply_a2(&s, &partner, &aug, &mut rng);
        let AugTrace::Mixing { skipped, .. } = &out.aug else { panic!() };
        assert_eq!(skipped.len(), 2);
    }

    #[test]
    fn a3_composes_scalings() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi3: 1.0,
            c1_combined: 0.3,
            c2: 0.1,
            c3: 0.1,
            ..Default::default()
        };
        let mut rng = rng_from_seed(8);
        let s = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let partner = sample_multiview(&dict, &cfg, 1, &mut rng).unwrap();
        let out = apply_a3(&s, &partner, &dict, &aug, &mut rng);
        let AugTrace::Combined { view, .. } = out.aug else { panic!() };
        let removed = FeatureId::new(0, view);
        assert!((out.feature_sum(removed) - 0.2).abs() < 1e-12);
        let kept = removed.sibling();
        assert!((out.feature_sum(kept) - 0.9 * s.feature_sum(kept)).abs() < 1e-12);
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let (cfg, dict) = setup();
        let aug = AugmentConfig {
            pi1: 0.0,
            pi2: 0.0,
            pi3: 0.0,
            ..Default::default()
        };
        let mut rng = rng_from_seed(9);
        let s = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let p = sample_multiview(&dict, &cfg, 1, &mut rng).unwrap();
        assert_eq!(apply_a1(&s, &dict, &aug, &mut rng), s);
        assert_eq!(apply_a2(&s, &p, &aug, &mut rng), s);
        assert_eq!(apply_a3(&s, &p, &dict, &aug, &mut rng), s);
    }

    #[test]
    fn pixel_mixup_renders_interpolation() {
        let (cfg, dict) = setup();
        let mut rng = rng_from_seed(10);
        let a = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let b = sample_singleview(&dict, &cfg, 3, &mut rng).unwrap();
        let m = pixel_mixup(&a, &b, 0.3).unwrap();
        let expect = a.patches(&dict) * 0.3 + b.patches(&dict) * 0.7;
        let err = (&m.patches(&dict) - &expect).mapv(f64::abs).fold(0.0f64, |x, y| x.max(*y));
        assert!(err < 1e-14);
        assert_eq!(m.label, 0);
        assert_eq!(pixel_mixup(&a, &b, 1.0).unwrap().patches(&dict), a.patches(&dict));
    }

    #[test]
    fn cutmix_mask_and_splice() {
        let mut rng = rng_from_seed(11);
        let mask = cutmix_patchmask(30, 0.8, &mut rng);
        assert_eq!(mask.len(), 6);
        assert!(mask.windows(2).all(|w| w[1] == w[0] + 1));
        assert!(cutmix_patchmask(30, 1.0, &mut rng).is_empty());
        assert_eq!(cutmix_patchmask(30, 0.0, &mut rng), (0..30).collect::<Vec<_>>());

        let (cfg, dict) = setup();
        let a = sample_multiview(&dict, &cfg, 0, &mut rng).unwrap();
        let b = sample_multiview(&dict, &cfg, 1, &mut rng).unwrap();
        let c = cutmix(&a, &b, 0.5, &mut rng).unwrap();
        let AugTrace::CutMix { replaced, .. } = &c.aug else { panic!() };
        let (xa, xb, xc) = (a.patches(&dict), b.patches(&dict), c.patches(&dict));
        for p in 0..cfg.patches {
            let src = if replaced.contains(&p) { &xb } else { &xa };
            let err = (&xc.row(p) - &src.row(p)).mapv(f64::abs).sum();
            assert!(err < 1e-14, "patch {p}");
        }
    }

    #[test]
    fn lambda_rejects_bad_alpha() {
        let mut rng = rng_from_seed(12);
        assert!(mixup_lambda_reformulated(0.0, &mut rng).is_err());
        assert!(mixup_lambda_reformulated(-1.0, &mut rng).is_err());
    }

    #[test]
    fn mc_estimate_of_constant() {
        let e = McEstimate::from_values(&[2.0; 10]);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.std_error, 0.0);
    }
}
