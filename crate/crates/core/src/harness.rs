//! Batch experiments: success-probability grids over `(n, τ)` and
//! per-iteration convergence curves, with CSV and JSON output.
//!
//! Every trial owns one tensor drawn from `master.child(cell).child(trial)`,
//! shared by all algorithms of that trial. Tasks run on the rayon pool and are
//! collected in task order, so results do not depend on the thread count.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    default_max_iter, estimate_tau_hat, flatten_method, homotopy_full, homotopy_pca,
    noise_injected_pca, power_random, AlgorithmTag, AscentOptions, HomotopySchedule,
    InjectionOptions, PowerOptions, RecoveryTrace, DEFAULT_TOL,
};
use crate::error::{Error, Result};
use crate::model::{SpikedInstance, SUCCESS_CORRELATION};
use crate::rng::RngSeed;
use crate::tensor::check_size;

/// Iteration count above which a run is a failure whatever its budget.
pub const ITERATION_CAP: usize = 100;

/// How grid `tau_values` are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauScale {
    /// `τ = value`
    Absolute,
    /// `τ = value * n^{3/4}`
    #[default]
    N34,
}

impl TauScale {
    pub fn tau(self, value: f64, n: usize) -> f64 {
        match self {
            TauScale::Absolute => value,
            TauScale::N34 => value * (n as f64).powf(0.75),
        }
    }
}

fn default_max_iter_cap() -> usize {
    ITERATION_CAP
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_sigma() -> f64 {
    1.0
}

/// Per-run settings shared by grids and convergence sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub max_iter: usize,
    pub tol: f64,
    /// Injected sequence length; `None` uses `default_max_iter(n) + 1`.
    pub injection_m: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            max_iter: ITERATION_CAP,
            tol: DEFAULT_TOL,
            injection_m: None,
        }
    }
}

impl RunSettings {
    fn check(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Seed of the algorithm-specific randomness (random starts, injected noise)
/// for one instance.
pub fn algorithm_seed(instance: RngSeed, tag: AlgorithmTag) -> RngSeed {
    let index = AlgorithmTag::ALL.iter().position(|t| *t == tag).unwrap() as u64;
    instance.child(0x100 + index)
}

/// Runs one algorithm on one instance. The full homotopy uses the planted
/// `τ` as penalty coefficient when it is positive and estimates it otherwise.
pub fn run_algorithm(
    tag: AlgorithmTag,
    inst: &SpikedInstance,
    settings: &RunSettings,
) -> Result<RecoveryTrace> {
    settings.check()?;
    let seed = algorithm_seed(inst.seed, tag);
    let t = &inst.tensor;
    let power = PowerOptions {
        max_iter: settings.max_iter,
        tol: settings.tol,
        fallback_seed: seed,
    };
    match tag {
        AlgorithmTag::Homotopy => homotopy_pca(t, power),
        AlgorithmTag::Power => power_random(t, seed, power),
        AlgorithmTag::Flatten => flatten_method(t, seed, power),
        AlgorithmTag::NoiseInject => {
            let m = settings.injection_m.unwrap_or(default_max_iter(inst.n) + 1);
            let opts = InjectionOptions {
                tol: settings.tol,
                ..InjectionOptions::default()
            };
            noise_injected_pca(t, m, seed, &opts)
        }
        AlgorithmTag::FullHomotopy => {
            let tau_hat = if inst.tau > 0.0 {
                inst.tau
            } else {
                estimate_tau_hat(t, seed)?
            };
            homotopy_full(
                t,
                &HomotopySchedule::default_for(inst.n),
                tau_hat,
                &AscentOptions::for_tau_hat(tau_hat),
            )
        }
    }
}

/// Success: final correlation at least 0.8, at most `min(max_iter, 100)`
/// iterations, and a converged run unless the algorithm has a fixed length.
pub fn is_success(trace: &RecoveryTrace, max_iter: usize) -> bool {
    let corr = trace.final_correlation().unwrap_or(f64::NEG_INFINITY);
    corr >= SUCCESS_CORRELATION
        && trace.iterations_used <= max_iter.min(ITERATION_CAP)
        && (trace.converged || trace.algorithm.is_fixed_length())
}

/// Outcome of one algorithm on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub tau: f64,
    pub algorithm: AlgorithmTag,
    pub trial: usize,
    pub correlation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub success: bool,
    /// Set when the run aborted on a degenerate step or stalled solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Correlation of every iterate (empty on failure).
    #[serde(skip)]
    pub correlations: Vec<f64>,
}

fn run_trial(
    tag: AlgorithmTag,
    inst: &SpikedInstance,
    trial: usize,
    settings: &RunSettings,
) -> Result<TrialRecord> {
    let mut rec = TrialRecord {
        n: inst.n,
        tau: inst.tau,
        algorithm: tag,
        trial,
        correlation: 0.0,
        iterations: 0,
        converged: false,
        success: false,
        failure: None,
        correlations: Vec::new(),
    };
    match run_algorithm(tag, inst, settings).and_then(|t| t.with_truth(&inst.v)) {
        Ok(trace) => {
            rec.success = is_success(&trace, settings.max_iter);
            rec.correlation = trace.final_correlation().unwrap();
            rec.iterations = trace.iterations_used;
            rec.converged = trace.converged;
            rec.correlations = trace.correlations.unwrap();
        }
        Err(e @ (Error::Degenerate(_) | Error::Stalled { .. })) => {
            log::warn!("{tag} failed on n={} trial {trial}: {e}", inst.n);
            rec.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_values: Vec<usize>,
    pub tau_values: Vec<f64>,
    #[serde(default)]
    pub tau_scale: TauScale,
    pub trials: usize,
    pub algorithms: Vec<AlgorithmTag>,
    pub master_seed: u64,
    #[serde(default = "default_max_iter_cap")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Noise level; `τ` is multiplied by it.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub injection_m: Option<usize>,
}

impl GridSpec {
    /// The desk-scale default: `n ∈ {32, 64, 96, 128}`,
    /// `τ / n^{3/4} ∈ {0.5, 1, 2, 4}`, 50 trials.
    pub fn desk_default(algorithms: Vec<AlgorithmTag>, master_seed: u64) -> Self {
        Self {
            n_values: vec![32, 64, 96, 128],
            tau_values: vec![0.5, 1.0, 2.0, 4.0],
            tau_scale: TauScale::N34,
            trials: 50,
            algorithms,
            master_seed,
            max_iter: ITERATION_CAP,
            tol: DEFAULT_TOL,
            sigma: 1.0,
            injection_m: None,
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            max_iter: self.max_iter,
            tol: self.tol,
            injection_m: self.injection_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.n_values.is_empty() || self.tau_values.is_empty() || self.algorithms.is_empty() {
            return Err(Error::invalid("grid lists must be nonempty"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if let Some(&tau) = self.tau_values.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(Error::invalid(format!("tau values must be finite and >= 0, got {tau}")));
        }
        for &n in &self.n_values {
            if n < 2 {
                return Err(Error::invalid(format!("n must be >= 2, got {n}")));
            }
            check_size(n)?;
        }
        self.settings().check()
    }

    /// `(n, τ)` pairs in cell-index order.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.n_values
            .iter()
            .flat_map(|&n| {
                self.tau_values
                    .iter()
                    .map(move |&value| (n, self.tau_scale.tau(value, n) * self.sigma))
            })
            .collect()
    }
}

/// Every trial record of a grid, in `(cell, trial, algorithm)` order.
pub fn run_trials(spec: &GridSpec) -> Result<Vec<TrialRecord>> {
    spec.validate()?;
    let master = RngSeed::new(spec.master_seed);
    let settings = spec.settings();
    let cells = spec.cells();
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.trials).map(move |k| (c, k)))
        .collect();
    let per_task: Vec<Vec<TrialRecord>> = tasks
        .par_iter()
        .map(|&(c, k)| {
            let (n, tau) = cells[c];
            let seed = master.child(c as u64).child(k as u64);
            let inst = SpikedInstance::generate(n, tau, spec.sigma, seed, None)?;
            spec.algorithms
                .iter()
                .map(|&tag| run_trial(tag, &inst, k, &settings))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_task.into_iter().flatten().collect())
}

/// Aggregate of one `(n, τ, algorithm)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n: usize,
    pub tau: f64,
    pub algorithm: AlgorithmTag,
    pub success_count: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_iterations: f64,
    pub mean_final_correlation: f64,
}

fn sort_key_cmp(a: (usize, f64, AlgorithmTag), b: (usize, f64, AlgorithmTag)) -> std::cmp::Ordering {
    a.0.cmp(&b.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.as_str().cmp(b.2.as_str()))
}

/// Groups records into cells sorted by `n`, then `τ`, then algorithm name.
pub fn aggregate(records: &[TrialRecord]) -> Vec<GridCell> {
    let mut cells: Vec<GridCell> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let pos = cells
            .iter()
            .position(|c| c.n == r.n && c.tau.to_bits() == r.tau.to_bits() && c.algorithm == r.algorithm);
        let i = pos.unwrap_or_else(|| {
            cells.push(GridCell {
                n: r.n,
                tau: r.tau,
                algorithm: r.algorithm,
                success_count: 0,
                trials: 0,
                success_rate: 0.0,
                mean_iterations: 0.0,
                mean_final_correlation: 0.0,
            });
            sums.push((0.0, 0.0));
            cells.len() - 1
        });
        cells[i].trials += 1;
        cells[i].success_count += r.success as usize;
        sums[i].0 += r.iterations as f64;
        sums[i].1 += r.correlation;
    }
    for (c, (it, corr)) in cells.iter_mut().zip(sums) {
        let k = c.trials as f64;
        c.success_rate = c.success_count as f64 / k;
        c.mean_iterations = it / k;
        c.mean_final_correlation = corr / k;
    }
    cells.sort_by(|a, b| sort_key_cmp((a.n, a.tau, a.algorithm), (b.n, b.tau, b.algorithm)));
    cells
}

pub fn run_grid(spec: &GridSpec) -> Result<Vec<GridCell>> {
    Ok(aggregate(&run_trials(spec)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpec {
    pub n: usize,
    /// `τ = α n^{3/4} σ`
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub algorithms: Vec<AlgorithmTag>,
    pub master_seed: u64,
    #[serde(default = "default_max_iter_cap")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub injection_m: Option<usize>,
}

impl ConvergenceSpec {
    fn as_grid(&self) -> GridSpec {
        GridSpec {
            n_values: vec![self.n],
            tau_values: self.alphas.clone(),
            tau_scale: TauScale::N34,
            trials: self.trials,
            algorithms: self.algorithms.clone(),
            master_seed: self.master_seed,
            max_iter: self.max_iter,
            tol: self.tol,
            sigma: self.sigma,
            injection_m: self.injection_m,
        }
    }
}

/// Per-iteration correlation statistics of one `(α, algorithm)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub n: usize,
    pub alpha: f64,
    pub algorithm: AlgorithmTag,
    /// Mean of `<x^k, v>` over trials; runs that stopped early are padded
    /// with their last value.
    pub mean_correlation: Vec<f64>,
    /// Population variance over trials, same padding.
    pub variance: Vec<f64>,
    pub trials: usize,
    /// Iterations used by each trial.
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

impl ConvergenceCurve {
    pub fn final_mean_correlation(&self) -> f64 {
        *self.mean_correlation.last().unwrap_or(&f64::NAN)
    }

    pub fn final_variance(&self) -> f64 {
        *self.variance.last().unwrap_or(&f64::NAN)
    }

    pub fn mean_iterations(&self) -> f64 {
        self.iterations.iter().sum::<usize>() as f64 / self.iterations.len() as f64
    }

    /// Lower median of the iteration counts.
    pub fn median_iterations(&self) -> usize {
        let mut it = self.iterations.clone();
        it.sort_unstable();
        it[(it.len() - 1) / 2]
    }
}

pub fn run_convergence(spec: &ConvergenceSpec) -> Result<Vec<ConvergenceCurve>> {
    let grid = spec.as_grid();
    let records = run_trials(&grid)?;
    let mut curves = Vec::new();
    for (c, &alpha) in spec.alphas.iter().enumerate() {
        for &tag in &spec.algorithms {
            let runs: Vec<&TrialRecord> = records
                .iter()
                .skip(c * spec.trials * spec.algorithms.len())
                .take(spec.trials * spec.algorithms.len())
                .filter(|r| r.algorithm == tag)
                .collect();
            let len = runs.iter().map(|r| r.correlations.len().max(1)).max().unwrap_or(1);
            let at = |r: &TrialRecord, k: usize| -> f64 {
                match r.correlations.as_slice() {
                    [] => 0.0,
                    c => c[k.min(c.len() - 1)],
                }
            };
            let k = runs.len() as f64;
            let mut mean = Vec::with_capacity(len);
            let mut variance = Vec::with_capacity(len);
            for i in 0..len {
                let mu = runs.iter().map(|r| at(r, i)).sum::<f64>() / k;
                let var = runs.iter().map(|r| (at(r, i) - mu).powi(2)).sum::<f64>() / k;
                mean.push(mu);
                variance.push(var);
            }
            curves.push(ConvergenceCurve {
                n: spec.n,
                alpha,
                algorithm: tag,
                mean_correlation: mean,
                variance,
                trials: runs.len(),
                iterations: runs.iter().map(|r| r.iterations).collect(),
                converged: runs.iter().map(|r| r.converged).collect(),
            });
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::invalid(format!("unknown format {other:?} (csv|json)"))),
        }
    }
}

/// 17 significant digits.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub const GRID_HEADER: [&str; 7] = [
    "n",
    "tau",
    "algorithm",
    "success_rate",
    "mean_iterations",
    "mean_final_correlation",
    "trials",
];

pub const CURVE_HEADER: [&str; 7] = [
    "n",
    "alpha",
    "algorithm",
    "iteration",
    "mean_correlation",
    "variance",
    "trials",
];

fn csv_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_grid_csv<W: Write>(cells: &[GridCell], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(GRID_HEADER).map_err(csv_err)?;
    for c in cells {
        out.write_record([
            c.n.to_string(),
            num(c.tau),
            c.algorithm.to_string(),
            num(c.success_rate),
            num(c.mean_iterations),
            num(c.mean_final_correlation),
            c.trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()
}

pub fn write_curves_csv<W: Write>(curves: &[ConvergenceCurve], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVE_HEADER).map_err(csv_err)?;
    for c in curves {
        for (k, (mu, var)) in c.mean_correlation.iter().zip(&c.variance).enumerate() {
            out.write_record([
                c.n.to_string(),
                num(c.alpha),
                c.algorithm.to_string(),
                k.to_string(),
                num(*mu),
                num(*var),
                c.trials.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()
}

fn emit_with(
    path: &Path,
    write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_json<W: Write, T: Serialize + ?Sized>(value: &T, mut w: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")
}

pub fn emit_grid(cells: &[GridCell], format: Format, path: impl AsRef<Path>) -> Result<()> {
    emit_with(path.as_ref(), |w| match format {
        Format::Csv => write_grid_csv(cells, w),
        Format::Json => write_json(cells, w),
    })
}

pub fn emit_curves(curves: &[ConvergenceCurve], format: Format, path: impl AsRef<Path>) -> Result<()> {
    emit_with(path.as_ref(), |w| match format {
        Format::Csv => write_curves_csv(curves, w),
        Format::Json => write_json(curves, w),
    })
}
