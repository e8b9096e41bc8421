//! Profiling, reduction, fitting and evaluation strung together, with the
//! artifacts each step leaves on disk.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{sample_config, Param};
use crate::dataset::Dataset;
use crate::regression::{design_matrix, evaluate, fit, EvaluationReport, LinearModel};
use crate::sim::{ExperimentResult, PerformanceBound, SimError, Simulator, WorldConfig};
use crate::stats::{analyze, reduce, CorrelationReport, ReductionResult};
use crate::Error;

/// Simulations per progress log line.
pub const BATCH: usize = 100;
pub const DEFAULT_TRAIN_RUNS: u64 = 800;
pub const DEFAULT_HOLDOUT_RUNS: u64 = 200;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Seeds averaged per sweep point.
pub const SWEEP_SEEDS: u64 = 30;

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Error> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    b.build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

/// One simulation per seed, each on a freshly sampled config. Rows come back
/// sorted by seed whatever the worker count.
pub fn profile(sim: &Simulator, seeds: Range<u64>, jobs: Option<usize>) -> Result<Dataset, Error> {
    if seeds.is_empty() {
        return Err(Error::Usage("profiling needs at least one run".into()));
    }
    let results = run_batched(sim, seeds, jobs, |s| sample_config(sim.space(), s))?;
    Ok(Dataset::from_results(&results))
}

fn run_batched(
    sim: &Simulator,
    seeds: Range<u64>,
    jobs: Option<usize>,
    config_for: impl Fn(u64) -> crate::catalog::ExperimentConfig + Sync,
) -> Result<Vec<ExperimentResult>, Error> {
    let seeds: Vec<u64> = seeds.collect();
    let pool = pool(jobs)?;
    let mut results = Vec::with_capacity(seeds.len());
    for (i, batch) in seeds.chunks(BATCH).enumerate() {
        let out: Result<Vec<ExperimentResult>, SimError> =
            pool.install(|| batch.par_iter().map(|&s| sim.run(&config_for(s))).collect());
        results.extend(out?);
        log::info!(
            "batch {}: seeds {}..={} done ({}/{})",
            i + 1,
            batch[0],
            batch[batch.len() - 1],
            results.len(),
            seeds.len()
        );
    }
    Ok(results)
}

/// Fits on the named parameters and stamps the training provenance.
pub fn fit_model<S: AsRef<str>>(train: &Dataset, selected: &[S]) -> Result<LinearModel, Error> {
    let mut model = fit(&design_matrix(train, selected)?)?;
    model.training_hash = Some(train.hash());
    Ok(model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub train_runs: u64,
    pub holdout_runs: u64,
    /// First training seed; holdout seeds follow the training range.
    pub seed: u64,
    pub alpha: f64,
    pub corr_threshold: Option<f64>,
    /// Fit and screen only rows whose detection count is within the band.
    pub performance_filter: bool,
    pub jobs: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            train_runs: DEFAULT_TRAIN_RUNS,
            holdout_runs: DEFAULT_HOLDOUT_RUNS,
            seed: 0,
            alpha: DEFAULT_ALPHA,
            corr_threshold: None,
            performance_filter: false,
            jobs: None,
        }
    }
}

impl PipelineOptions {
    pub fn train_seeds(&self) -> Range<u64> {
        self.seed..self.seed + self.train_runs
    }

    pub fn holdout_seeds(&self) -> Range<u64> {
        let start = self.seed + self.train_runs;
        start..start + self.holdout_runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

impl From<Range<u64>> for SeedRange {
    fn from(r: Range<u64>) -> Self {
        SeedRange {
            start: r.start,
            end: r.end,
        }
    }
}

impl SeedRange {
    pub fn overlaps(&self, other: &SeedRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Everything needed to replay a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub space_hash: String,
    pub world: WorldConfig,
    pub train_seeds: SeedRange,
    pub holdout_seeds: SeedRange,
    pub train_rows: usize,
    pub holdout_rows: usize,
    pub alpha: f64,
    pub corr_threshold: Option<f64>,
    pub performance_filter: bool,
    pub bound: PerformanceBound,
    pub selected: Vec<String>,
    pub train_hash: String,
    pub holdout_hash: String,
}

impl RunManifest {
    /// Train and holdout seeds must not overlap and the row counts must match
    /// the ranges.
    pub fn audit(&self) -> Result<(), Error> {
        if self.train_seeds.overlaps(&self.holdout_seeds) {
            return Err(Error::Usage(format!(
                "train seeds {}..{} overlap holdout seeds {}..{}",
                self.train_seeds.start, self.train_seeds.end, self.holdout_seeds.start, self.holdout_seeds.end
            )));
        }
        let span = |r: &SeedRange| (r.end - r.start) as usize;
        if !self.performance_filter
            && (self.train_rows != span(&self.train_seeds) || self.holdout_rows != span(&self.holdout_seeds))
        {
            return Err(Error::Usage("manifest row counts do not match seed ranges".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub train: Dataset,
    pub holdout: Dataset,
    pub report: CorrelationReport,
    pub reduction: ReductionResult,
    pub model: LinearModel,
    pub evaluation: EvaluationReport,
    pub manifest: RunManifest,
}

/// profile(train) → analyze → reduce → fit → profile(holdout) → evaluate.
pub fn run_pipeline(sim: &Simulator, opts: &PipelineOptions) -> Result<PipelineOutput, Error> {
    let train_seeds = SeedRange::from(opts.train_seeds());
    let holdout_seeds = SeedRange::from(opts.holdout_seeds());
    if train_seeds.overlaps(&holdout_seeds) {
        return Err(Error::Usage("train and holdout seed ranges overlap".into()));
    }
    let mut train = profile(sim, opts.train_seeds(), opts.jobs)?;
    if opts.performance_filter {
        train = train.performance_filtered();
    }
    let report = analyze(&train)?;
    let reduction = reduce(&report, opts.alpha, opts.corr_threshold)?;
    let selected = reduction.symbols();
    let model = fit_model(&train, &selected)?;
    let mut holdout = profile(sim, opts.holdout_seeds(), opts.jobs)?;
    if opts.performance_filter {
        holdout = holdout.performance_filtered();
    }
    let evaluation = evaluate(&model, &holdout)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        space_hash: sim.space().hash(),
        world: sim.world().clone(),
        train_seeds,
        holdout_seeds,
        train_rows: train.len(),
        holdout_rows: holdout.len(),
        alpha: opts.alpha,
        corr_threshold: opts.corr_threshold,
        performance_filter: opts.performance_filter,
        bound: sim.bound(),
        selected,
        train_hash: train.hash(),
        holdout_hash: holdout.hash(),
    };
    manifest.audit()?;
    Ok(PipelineOutput {
        train,
        holdout,
        report,
        reduction,
        model,
        evaluation,
        manifest,
    })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

pub const TRAIN_CSV: &str = "train.csv";
pub const HOLDOUT_CSV: &str = "holdout.csv";
pub const CORRELATION_CSV: &str = "correlation.csv";
pub const CORRELATION_JSON: &str = "correlation.json";
pub const SELECTION_JSON: &str = "selection.json";
pub const MODEL_JSON: &str = "model.json";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const EVALUATION_JSON: &str = "evaluation.json";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Writes every pipeline artifact under `dir` and returns the paths.
pub fn write_artifacts(out: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>, Error> {
    ensure_dir(dir)?;
    let p = |name: &str| dir.join(name);
    write_file(&p(TRAIN_CSV), out.train.to_csv_string())?;
    write_file(&p(HOLDOUT_CSV), out.holdout.to_csv_string())?;
    write_file(&p(CORRELATION_CSV), out.report.to_csv_string())?;
    write_json(&p(CORRELATION_JSON), &out.report)?;
    write_json(&p(SELECTION_JSON), &out.reduction)?;
    write_json(&p(MODEL_JSON), &out.model)?;
    write_file(&p(EVALUATION_CSV), out.evaluation.to_csv_string())?;
    write_json(&p(EVALUATION_JSON), &out.evaluation)?;
    write_json(&p(MANIFEST_JSON), &out.manifest)?;
    Ok([
        TRAIN_CSV,
        HOLDOUT_CSV,
        CORRELATION_CSV,
        CORRELATION_JSON,
        SELECTION_JSON,
        MODEL_JSON,
        EVALUATION_CSV,
        EVALUATION_JSON,
        MANIFEST_JSON,
    ]
    .iter()
    .map(|n| p(n))
    .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: String,
    pub residual_energy: Vec<SweepPoint>,
    pub received_packets: Vec<SweepPoint>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Varies one parameter over `xs` with the others at their defaults. Every
/// point uses the same seeds, so differences between points come from the
/// parameter alone.
pub fn sweep(
    sim: &Simulator,
    param: Param,
    xs: &[f64],
    seeds: Range<u64>,
    jobs: Option<usize>,
) -> Result<Sweep, Error> {
    let n_seeds = seeds.end.saturating_sub(seeds.start);
    if n_seeds == 0 {
        return Err(Error::Usage("sweep needs at least one seed".into()));
    }
    let pool = pool(jobs)?;
    let jobs_list: Vec<(usize, u64)> = (0..xs.len()).flat_map(|i| seeds.clone().map(move |s| (i, s))).collect();
    let results: Result<Vec<ExperimentResult>, SimError> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(i, s)| sim.run(&sim.space().defaults(s).with(param, xs[i])))
            .collect()
    });
    let results = results?;
    let mut energy = Vec::with_capacity(xs.len());
    let mut received = Vec::with_capacity(xs.len());
    for (i, chunk) in results.chunks(n_seeds as usize).enumerate() {
        let e: Vec<f64> = chunk.iter().map(|r| r.avg_residual_energy).collect();
        let k: Vec<f64> = chunk.iter().map(|r| r.received_data_packets as f64).collect();
        let (m, s) = mean_stderr(&e);
        energy.push(SweepPoint {
            x: xs[i],
            mean: m,
            stderr: s,
        });
        let (m, s) = mean_stderr(&k);
        received.push(SweepPoint {
            x: xs[i],
            mean: m,
            stderr: s,
        });
    }
    log::info!("sweep over {}: {} runs done", param.symbol(), results.len());
    Ok(Sweep {
        parameter: param.symbol().to_string(),
        residual_energy: energy,
        received_packets: received,
    })
}

/// g_Tx = 1, 2, …, 15.
pub fn transmission_interval_grid() -> Vec<f64> {
    (1..=15).map(f64::from).collect()
}

/// h_iD = 0, 1, …, 8.
pub fn hop_grid() -> Vec<f64> {
    (0..=8).map(f64::from).collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("x,mean,stderr\n");
    for p in points {
        s.push_str(&format!("{:e},{:e},{:e}\n", p.x, p.mean, p.stderr));
    }
    s
}

/// Writes `<symbol>_residual_energy.csv` and `<symbol>_received_packets.csv`.
pub fn write_sweep(sweep: &Sweep, dir: &Path) -> Result<Vec<PathBuf>, Error> {
    ensure_dir(dir)?;
    let a = dir.join(format!("{}_residual_energy.csv", sweep.parameter));
    let b = dir.join(format!("{}_received_packets.csv", sweep.parameter));
    write_file(&a, sweep_csv(&sweep.residual_energy))?;
    write_file(&b, sweep_csv(&sweep.received_packets))?;
    Ok(vec![a, b])
}
