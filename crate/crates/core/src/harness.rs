//! Seeded experiment runs: config files, presets, per-seed artifacts,
//! cross-seed summaries and the run manifest.
//!
//! Output layout under the run directory:
//!
//! ```text
//! <mode>/seed_<s>/metrics.csv   MetricsLog, `# schema=1`
//! <mode>/seed_<s>/eval.json     RunRecord
//! <mode>/seed_<s>/model.json    final weights
//! summary.csv                   one row per mode, mean and standard error over seeds
//! manifest.json                 RunManifest with sha256 of every file above
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    mixup_loss_direct, mixup_loss_reformulated, soft_label_decomposition_gap, AugmentConfig, LambdaDist, McEstimate,
};
use crate::config::{first_failure, ConstraintCheck, ExperimentConfig};
use crate::error::{Error, Result};
use crate::eval::{draw_test_set, evaluate_samples, EvalDistribution, EvalReport, TieBreak};
use crate::network::{finite_difference_grad, init_model, loss_and_grad, max_relative_error, Batch, ModelParams, SmoothedRelu};
use crate::seeding::{fork_seed, stream_rng, streams};
use crate::synthdata::{sample_dataset, Dataset, FeatureDictionary, Sample};
use crate::trainer::{
    compute_lottery_set, compute_phi, induction_diagnostics, train, DiagnosticsReport, LotterySet, StopReason,
    TrainMode, TrainOutcome, TrainSpec,
};

pub const SCHEMA: u32 = 1;

/// Name of the built-in preset.
pub const PAPER_DESK: &str = "paper-desk";

const PAPER_DESK_JSON: &str = include_str!("../presets/paper-desk.json");

/// Φ ratio below which a class counts as having learned a single view.
pub const LOTTERY_RATIO: f64 = 0.2;
/// Φ ratio at or above which a class counts as having learned both views.
pub const DIVERSE_RATIO: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Test samples per distribution.
    pub n_test: usize,
    /// Noise std of purely-noise patches in the noisy test distribution, in
    /// units of `1/sqrt(d)`.
    pub noise_grid: Vec<f64>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_test: 2000,
            noise_grid: vec![0.5, 4.0, 8.0],
            tie_break: TieBreak::Lowest,
        }
    }
}

impl EvalSettings {
    pub fn checks(&self) -> Vec<ConstraintCheck> {
        vec![
            ConstraintCheck::new("n_test >= 1", self.n_test >= 1, format!("n_test = {}", self.n_test)),
            ConstraintCheck::new(
                "noise_grid non-empty, entries >= 0",
                !self.noise_grid.is_empty() && self.noise_grid.iter().all(|g| g.is_finite() && *g >= 0.0),
                format!("noise_grid = {:?}", self.noise_grid),
            ),
        ]
    }
}

/// Everything one run needs, as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub augment: AugmentConfig,
    pub train: TrainSpec,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Every named constraint, including all augmentation families.
    pub fn checks(&self) -> Vec<ConstraintCheck> {
        let mut out = self.experiment.checks();
        out.extend(self.augment.checks(None));
        out.extend(self.train.checks());
        out.extend(self.eval.checks());
        out
    }

    /// Constraints that matter for running `modes` only.
    pub fn checks_for(&self, modes: &[TrainMode]) -> Vec<ConstraintCheck> {
        let mut out = self.experiment.checks();
        for mode in modes {
            if let Some(e) = mode.effect() {
                for c in self.augment.checks(Some(e)) {
                    if !out.iter().any(|o| o.name == c.name) {
                        out.push(c);
                    }
                }
            }
        }
        out.extend(self.train.checks());
        out.extend(self.eval.checks());
        out
    }

    /// Iteration budget after the `train.max_iters` override.
    pub fn max_iters(&self) -> usize {
        self.train.max_iters.unwrap_or(self.experiment.max_iters)
    }
}

pub fn preset(name: &str) -> Option<RunConfig> {
    (name == PAPER_DESK).then(|| RunConfig::from_json(PAPER_DESK_JSON).expect("embedded preset parses"))
}

pub fn preset_names() -> &'static [&'static str] {
    &[PAPER_DESK]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ConstraintCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&ConstraintCheck> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Reads and checks a config file; errors only if it cannot be read or parsed.
pub fn validate_config(path: &Path) -> Result<ValidationReport> {
    Ok(ValidationReport {
        checks: RunConfig::load(path)?.checks(),
    })
}

/// `"compare"` or a comma-separated list of mode names.
pub fn parse_modes(s: &str) -> Option<Vec<TrainMode>> {
    if s == "compare" {
        return Some(vec![TrainMode::Vanilla, TrainMode::A1, TrainMode::A2, TrainMode::A3]);
    }
    let modes: Option<Vec<_>> = s.split(',').map(|m| TrainMode::parse(m.trim())).collect();
    modes.filter(|m| !m.is_empty())
}

/// `"3"`, `"0,4,7"` or a half-open range `"0..5"`.
pub fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
        return (a < b).then(|| (a..b).collect());
    }
    let seeds: Option<Vec<u64>> = s.split(',').map(|x| x.trim().parse().ok()).collect();
    seeds.filter(|v| !v.is_empty())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Training data and test sets of one seed, shared by every mode.
pub struct SeedContext {
    pub seed: u64,
    pub data: Dataset,
    pub multi_view: Vec<Sample>,
    pub single_view: Vec<Sample>,
    /// One test set per entry of the noise grid.
    pub noisy: Vec<(f64, Vec<Sample>)>,
}

impl SeedContext {
    pub fn dictionary(&self) -> &FeatureDictionary {
        &self.data.dictionary
    }
}

/// The experiment config with the noisy-test std set to `level / sqrt(d)`.
pub fn noisy_config(cfg: &ExperimentConfig, level: f64) -> ExperimentConfig {
    ExperimentConfig {
        noisy_test_noise: level / (cfg.dim as f64).sqrt(),
        ..cfg.clone()
    }
}

/// Draws the dictionary, training set and test sets of `seed`.
pub fn prepare_seed(cfg: &RunConfig, seed: u64) -> Result<SeedContext> {
    let exp = &cfg.experiment;
    let mut data_rng = stream_rng(seed, streams::DATA);
    let dict = Arc::new(FeatureDictionary::build(exp.classes, exp.dim, &mut data_rng)?);
    let data = sample_dataset(&dict, exp, &mut data_rng)?;
    let mut eval_rng = stream_rng(seed, streams::EVAL);
    let n = cfg.eval.n_test;
    let multi_view = draw_test_set(&dict, exp, EvalDistribution::MultiView, n, &mut eval_rng)?;
    let single_view = draw_test_set(&dict, exp, EvalDistribution::SingleView, n, &mut eval_rng)?;
    let noisy = cfg
        .eval
        .noise_grid
        .iter()
        .map(|&g| Ok((g, draw_test_set(&dict, &noisy_config(exp, g), EvalDistribution::Noisy, n, &mut eval_rng)?)))
        .collect::<Result<_>>()?;
    Ok(SeedContext {
        seed,
        data,
        multi_view,
        single_view,
        noisy,
    })
}

/// Contents of `eval.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: u32,
    pub mode: TrainMode,
    pub seed: u64,
    pub iterations: usize,
    pub final_loss: f64,
    pub stop: StopReason,
    pub dataset_checksum: String,
    /// Final `Phi`, one `[Phi_{i,1}, Phi_{i,2}]` pair per class.
    pub phi: Vec<[f64; 2]>,
    /// Lottery set of the initialization.
    pub lottery_init: LotterySet,
    /// Diagnostics of the final model on the training set.
    pub diagnostics: DiagnosticsReport,
    pub multi_view: EvalReport,
    pub single_view: EvalReport,
    /// One report per noise-grid level, in grid order.
    pub noisy: Vec<EvalReport>,
}

impl RunRecord {
    /// `min_l Phi_{i,l} / max_l Phi_{i,l}`; 1 when both are zero.
    pub fn phi_ratio(&self, class: usize) -> f64 {
        let [a, b] = self.phi[class];
        let hi = a.max(b);
        if hi == 0.0 {
            1.0
        } else {
            a.min(b) / hi
        }
    }

    pub fn phi_ratios(&self) -> Vec<f64> {
        (0..self.phi.len()).map(|i| self.phi_ratio(i)).collect()
    }

    /// Fraction of classes with a Φ ratio below [`LOTTERY_RATIO`].
    pub fn lottery_fraction(&self) -> f64 {
        fraction(&self.phi_ratios(), |r| r < LOTTERY_RATIO)
    }

    /// Fraction of classes with a Φ ratio of at least [`DIVERSE_RATIO`].
    pub fn diverse_fraction(&self) -> f64 {
        fraction(&self.phi_ratios(), |r| r >= DIVERSE_RATIO)
    }

    /// `mean_i Phi_i` with `Phi_i = Phi_{i,1} + Phi_{i,2}`.
    pub fn mean_phi(&self) -> f64 {
        self.phi.iter().map(|p| p[0] + p[1]).sum::<f64>() / self.phi.len() as f64
    }

    /// `argmax_l Phi_{i,l}`, lower view on ties.
    pub fn dominant_view(&self, class: usize) -> usize {
        let [a, b] = self.phi[class];
        usize::from(b > a)
    }
}

fn fraction(values: &[f64], pred: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|v| pred(**v)).count() as f64 / values.len() as f64
}

/// One trained mode of one seed.
pub struct ModeRun {
    pub record: RunRecord,
    pub outcome: TrainOutcome,
    pub seconds: f64,
}

/// Trains `mode` on the seed's data and evaluates it on the seed's test sets.
///
/// The initialization comes from the seed's training stream, so every mode of
/// a seed starts from the same weights.
pub fn run_mode(cfg: &RunConfig, ctx: &SeedContext, mode: TrainMode) -> Result<ModeRun> {
    let start = Instant::now();
    let exp = &cfg.experiment;
    let spec = TrainSpec { mode, ..cfg.train.clone() };
    let mut train_rng = stream_rng(ctx.seed, streams::TRAIN);
    let outcome = train(exp, &cfg.augment, &spec, &ctx.data, &mut train_rng)?;
    let dict = ctx.dictionary();
    // Only the randomized tie-break consumes this stream.
    let mut tie_rng = stream_rng(ctx.seed, streams::EVAL + 1);
    let tie = cfg.eval.tie_break;
    let model = &outcome.model;
    let multi_view = evaluate_samples(model, dict, exp, &ctx.multi_view, EvalDistribution::MultiView, tie, &mut tie_rng)?;
    let single_view =
        evaluate_samples(model, dict, exp, &ctx.single_view, EvalDistribution::SingleView, tie, &mut tie_rng)?;
    let noisy = ctx
        .noisy
        .iter()
        .map(|(g, samples)| {
            evaluate_samples(model, dict, &noisy_config(exp, *g), samples, EvalDistribution::Noisy, tie, &mut tie_rng)
        })
        .collect::<Result<_>>()?;
    let phi = compute_phi(model, dict);
    let record = RunRecord {
        schema: SCHEMA,
        mode,
        seed: ctx.seed,
        iterations: outcome.iterations,
        final_loss: outcome.final_loss,
        stop: outcome.stop,
        dataset_checksum: ctx.data.checksum(),
        phi: phi.outer_iter().map(|r| [r[0], r[1]]).collect(),
        lottery_init: compute_lottery_set(&outcome.init, &ctx.data, exp),
        diagnostics: induction_diagnostics(model, &ctx.data, exp),
        multi_view,
        single_view,
        noisy,
    };
    Ok(ModeRun {
        record,
        outcome,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub mode: TrainMode,
    pub seed: u64,
    pub metrics: String,
    pub eval: String,
    pub model: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub config: RunConfig,
    pub modes: Vec<TrainMode>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub runs: Vec<RunEntry>,
    pub summary: String,
    pub files: Vec<FileEntry>,
    pub total_seconds: f64,
}

impl RunManifest {
    /// Recomputes every checksum; returns the paths that do not match.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for f in &self.files {
            let bytes = fs::read(self.out_dir.join(&f.path))?;
            if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
                bad.push(f.path.clone());
            }
        }
        Ok(bad)
    }
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8]) -> Result<FileEntry> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::File::create(&path)?.write_all(bytes)?;
    Ok(FileEntry {
        path: rel.to_string(),
        sha256: sha256_hex(bytes),
        bytes: bytes.len() as u64,
    })
}

fn run_dir(mode: TrainMode, seed: u64) -> String {
    format!("{}/seed_{seed}", mode.name())
}

/// Runs every mode on every seed, writes all artifacts and returns the manifest.
///
/// Seeds run in parallel; a non-finite abort writes the last finite model to
/// `<mode>/seed_<s>/last_finite.json` and returns [`Error::Aborted`].
pub fn run_experiment(cfg: &RunConfig, modes: &[TrainMode], seeds: &[u64], out_dir: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    first_failure(&cfg.checks_for(modes))?;
    if modes.is_empty() || seeds.is_empty() {
        return Err(Error::Shape("at least one mode and one seed are required".into()));
    }
    fs::create_dir_all(out_dir)?;
    let per_seed: Vec<Vec<(RunRecord, RunEntry, Vec<FileEntry>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let ctx = prepare_seed(cfg, seed)?;
            modes
                .iter()
                .map(|&mode| {
                    let dir = run_dir(mode, seed);
                    let run = match run_mode(cfg, &ctx, mode) {
                        Err(Error::NonFinite {
                            iteration,
                            what,
                            last_finite,
                        }) => {
                            let rel = format!("{dir}/last_finite.json");
                            write_file(out_dir, &rel, serde_json::to_string(&last_finite.to_checkpoint())?.as_bytes())?;
                            return Err(Error::Aborted {
                                iteration,
                                what,
                                dump: out_dir.join(rel),
                            });
                        }
                        other => other?,
                    };
                    let files = vec![
                        write_file(
                            out_dir,
                            &format!("{dir}/metrics.csv"),
                            run.outcome.log.to_csv_string()?.as_bytes(),
                        )?,
                        write_file(
                            out_dir,
                            &format!("{dir}/eval.json"),
                            serde_json::to_string_pretty(&run.record)?.as_bytes(),
                        )?,
                        write_file(
                            out_dir,
                            &format!("{dir}/model.json"),
                            serde_json::to_string(&run.outcome.model.to_checkpoint())?.as_bytes(),
                        )?,
                    ];
                    let entry = RunEntry {
                        mode,
                        seed,
                        metrics: files[0].path.clone(),
                        eval: files[1].path.clone(),
                        model: files[2].path.clone(),
                        seconds: run.seconds,
                    };
                    Ok((run.record, entry, files))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::new();
    let mut files = Vec::new();
    let mut records = Vec::new();
    for (record, entry, f) in per_seed.into_iter().flatten() {
        records.push(record);
        runs.push(entry);
        files.extend(f);
    }
    let summary = summary_csv(modes, seeds, &cfg.eval.noise_grid, &records)?;
    files.push(write_file(out_dir, "summary.csv", summary.as_bytes())?);
    let manifest = RunManifest {
        schema: SCHEMA,
        config: cfg.clone(),
        modes: modes.to_vec(),
        seeds: seeds.to_vec(),
        out_dir: out_dir.to_path_buf(),
        runs,
        summary: "summary.csv".into(),
        files,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Mean and standard error (`sd / sqrt(n)`, sample sd); the error is `NaN` for
/// a single value.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Checksum shared by every mode of a seed list: the seed's own checksum for
/// one seed, otherwise the sha256 of the comma-joined per-seed checksums.
pub fn combined_checksum(per_seed: &[String]) -> String {
    match per_seed {
        [one] => one.clone(),
        many => sha256_hex(many.join(",").as_bytes()),
    }
}

/// One row per mode, in `modes` order.
pub fn summary_csv(modes: &[TrainMode], seeds: &[u64], grid: &[f64], records: &[RunRecord]) -> Result<String> {
    let mut buf = Vec::new();
    writeln!(buf, "# schema={SCHEMA}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
    let mut header = vec!["mode".to_string(), "n_seeds".into(), "dataset_checksum".into()];
    let mut stats = vec!["iterations", "final_loss", "acc_multi", "acc_single"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    stats.extend(grid.iter().map(|g| format!("acc_noisy_{g}")));
    stats.extend(["phi_mean", "lottery_frac", "diverse_frac"].map(String::from));
    for s in &stats {
        header.push(format!("{s}_mean"));
        header.push(format!("{s}_se"));
    }
    w.write_record(&header)?;
    for &mode in modes {
        let mut rows: Vec<&RunRecord> = records.iter().filter(|r| r.mode == mode).collect();
        rows.sort_by_key(|r| seeds.iter().position(|s| *s == r.seed));
        let checksums: Vec<String> = rows.iter().map(|r| r.dataset_checksum.clone()).collect();
        let mut columns: Vec<Vec<f64>> = vec![
            rows.iter().map(|r| r.iterations as f64).collect(),
            rows.iter().map(|r| r.final_loss).collect(),
            rows.iter().map(|r| r.multi_view.accuracy).collect(),
            rows.iter().map(|r| r.single_view.accuracy).collect(),
        ];
        for level in 0..grid.len() {
            columns.push(rows.iter().map(|r| r.noisy[level].accuracy).collect());
        }
        columns.push(rows.iter().map(|r| r.mean_phi()).collect());
        columns.push(rows.iter().map(|r| r.lottery_fraction()).collect());
        columns.push(rows.iter().map(|r| r.diverse_fraction()).collect());
        let mut rec = vec![mode.name().to_string(), rows.len().to_string(), combined_checksum(&checksums)];
        for c in &columns {
            let (m, se) = mean_se(c);
            rec.push(m.to_string());
            rec.push(se.to_string());
        }
        w.write_record(&rec)?;
    }
    let buf = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub loss: f64,
}

/// Analytic gradient against central finite differences (`h = 1e-5`) on a
/// `k = 2, m = 2, d = 8, P = 4` instance drawn from the data model.
///
/// The relative error of a coordinate is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn gradcheck(seed: u64) -> Result<GradCheckReport> {
    let cfg = ExperimentConfig {
        classes: 2,
        kernels_per_class: 2,
        dim: 8,
        patches: 4,
        patches_per_feature: 1,
        train_size: 6,
        single_view_prob: 0.5,
        ..Default::default()
    };
    let mut rng = stream_rng(seed, streams::DATA);
    let dict = Arc::new(FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng)?);
    let data = sample_dataset(&dict, &cfg, &mut rng)?;
    let batch = Batch::from_samples(&data.samples, &dict);
    let act = SmoothedRelu::from_config(&cfg);
    // Large weights so pre-activations fall on both sides of varrho.
    let mut model = ModelParams::zeros(cfg.classes, cfg.kernels_per_class, cfg.dim);
    model
        .weights_mut()
        .mapv_inplace(|_| 2.0 * rng.sample::<f64, _>(StandardNormal));
    let g = loss_and_grad(&model, &batch, act)?;
    let fd = finite_difference_grad(&model, &batch, act, 1e-5)?;
    Ok(GradCheckReport {
        max_relative_error: max_relative_error(&g.grad, &fd, 1e-8),
        coordinates: fd.len(),
        loss: g.loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub direct: McEstimate,
    pub reformulated: McEstimate,
    pub difference: f64,
    /// `3 (SE_direct + SE_reformulated)`.
    pub tolerance: f64,
    /// Largest per-draw gap of the soft-label decomposition.
    pub decomposition_gap: f64,
}

impl Lemma1Report {
    pub fn passed(&self) -> bool {
        self.difference <= self.tolerance
    }
}

/// Compares the soft-label Mixup loss with its hard-label reformulation on a
/// fixed random model over the default data model (`N = 200`).
pub fn lemma1_check(seed: u64, n_draws: usize, alpha: f64, decomposition_draws: usize) -> Result<Lemma1Report> {
    let cfg = ExperimentConfig {
        train_size: 200,
        ..Default::default()
    };
    let mut rng = stream_rng(seed, streams::DATA);
    let dict = Arc::new(FeatureDictionary::build(cfg.classes, cfg.dim, &mut rng)?);
    let data = sample_dataset(&dict, &cfg, &mut rng)?;
    let act = SmoothedRelu::from_config(&cfg);
    // A model whose scores spread over several units, so the losses differ
    // noticeably between draws.
    let model = init_model(&ExperimentConfig { init_scale: 1.0, ..cfg.clone() }, &mut rng);
    let mut r1 = stream_rng(fork_seed(&mut rng), 0);
    let mut r2 = stream_rng(fork_seed(&mut rng), 0);
    let mut r3 = stream_rng(fork_seed(&mut rng), 0);
    let direct = mixup_loss_direct(&model, &data, act, LambdaDist::Symmetric(alpha), n_draws, &mut r1)?;
    let reformulated = mixup_loss_reformulated(&model, &data, act, LambdaDist::Reformulated(alpha), n_draws, &mut r2)?;
    let decomposition_gap = soft_label_decomposition_gap(&model, &data, act, alpha, decomposition_draws, &mut r3)?;
    Ok(Lemma1Report {
        difference: (direct.mean - reformulated.mean).abs(),
        tolerance: 3.0 * (direct.std_error + reformulated.std_error),
        direct,
        reformulated,
        decomposition_gap,
    })
}
