use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tpca_core::algorithms::{
    default_max_iter, estimate_tau_hat, flatten_method, homotopy_full, homotopy_pca,
    noise_injected_pca, power_random, AlgorithmTag, AscentOptions, HomotopySchedule,
    InjectionOptions, PowerOptions, RecoveryTrace,
};
use tpca_core::diagnostics::{
    delta_moments, goe_spectrum_check, injection_moments, trace_path, u_moments, MomentReport,
    PathOptions, PathPoint, PointClass,
};
use tpca_core::harness::{
    emit_curves, emit_grid, run_convergence, run_grid, write_curves_csv, write_grid_csv,
    ConvergenceSpec, Format, GridSpec, TauScale,
};
use tpca_core::io::{load_json, load_tensor, save_json, save_tensor, Sidecar};
use tpca_core::linalg::{axpy, dot, normalized, scaled};
use tpca_core::rng::unit_sphere;
use tpca_core::{Error, Result, RngSeed, SpikedInstance};

use crate::{
    CheckArgs, ConvergeArgs, GenArgs, GridArgs, Output, PathArgs, RecoverArgs, Suite,
};

fn write_json_to<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => save_json(path, value),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, value)
                .map_err(|e| Error::io("<stdout>", e.into()))?;
            writeln!(lock).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn gen(a: GenArgs) -> Result<bool> {
    let tau = match (a.tau, a.alpha) {
        (Some(tau), _) => tau,
        (None, Some(alpha)) => alpha * (a.n as f64).powf(0.75),
        (None, None) => return Err(Error::InvalidArgument("gen needs --tau or --alpha".into())),
    };
    let inst = SpikedInstance::generate(a.n, tau, a.sigma, RngSeed::new(a.seed), None)?;
    save_tensor(&a.out, &inst.tensor)?;
    let sidecar = a.sidecar.unwrap_or_else(|| a.out.with_extension("json"));
    save_json(&sidecar, &inst.sidecar())?;
    eprintln!(
        "wrote n={} tau={tau} sigma={} to {} and {}",
        a.n,
        a.sigma,
        a.out.display(),
        sidecar.display()
    );
    Ok(true)
}

pub fn recover(a: RecoverArgs) -> Result<bool> {
    let t = load_tensor(&a.input)?;
    let n = t.dim();
    let truth: Option<Sidecar> = a.sidecar.as_deref().map(load_json).transpose()?;
    if let Some(s) = &truth {
        if s.n != n || s.v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: s.v.len() });
        }
    }
    let seed = RngSeed::new(a.seed);
    let power = PowerOptions {
        max_iter: a.max_iter,
        tol: a.tol,
        fallback_seed: seed.with_stream(1),
    };
    let trace = match a.algo {
        AlgorithmTag::Homotopy => homotopy_pca(&t, power)?,
        AlgorithmTag::Power => power_random(&t, seed, power)?,
        AlgorithmTag::Flatten => flatten_method(&t, seed, power)?,
        AlgorithmTag::NoiseInject => {
            let m = a.m.unwrap_or(default_max_iter(n) + 1);
            let opts = InjectionOptions {
                tol: a.tol,
                ..InjectionOptions::default()
            };
            noise_injected_pca(&t, m, seed, &opts)?
        }
        AlgorithmTag::FullHomotopy => {
            let tau_hat = match (a.tau_hat, &truth) {
                (Some(x), _) => x,
                (None, Some(s)) if s.tau > 0.0 => s.tau,
                _ => estimate_tau_hat(&t, seed)?,
            };
            homotopy_full(
                &t,
                &HomotopySchedule::default_for(n),
                tau_hat,
                &AscentOptions::for_tau_hat(tau_hat),
            )?
        }
    };
    let trace: RecoveryTrace = match &truth {
        Some(s) => trace.with_truth(&s.v)?,
        None => trace,
    };
    match trace.final_correlation() {
        Some(c) => eprintln!(
            "{}: {} iterations, converged={}, correlation {c:.6}",
            trace.algorithm, trace.iterations_used, trace.converged
        ),
        None => eprintln!(
            "{}: {} iterations, converged={}",
            trace.algorithm, trace.iterations_used, trace.converged
        ),
    }
    write_json_to(&trace, a.out.as_deref())?;
    Ok(true)
}

fn emit_or_print<T: Serialize>(
    items: &[T],
    output: &Output,
    emit: impl FnOnce(&[T], Format, &Path) -> Result<()>,
    csv: impl FnOnce(&[T], std::io::StdoutLock<'_>) -> std::io::Result<()>,
) -> Result<()> {
    match (&output.out, output.format) {
        (Some(path), format) => emit(items, format, path),
        (None, Format::Json) => write_json_to(&items, None),
        (None, Format::Csv) => csv(items, std::io::stdout().lock()).map_err(|e| Error::io("<stdout>", e)),
    }
}

pub fn grid(a: GridArgs) -> Result<bool> {
    let spec = match &a.spec {
        Some(path) => load_json::<GridSpec>(path)?,
        None => GridSpec {
            n_values: a.n,
            tau_values: a.tau,
            tau_scale: if a.absolute { TauScale::Absolute } else { TauScale::N34 },
            trials: a.trials,
            algorithms: a.algos,
            master_seed: a.seed,
            max_iter: a.max_iter,
            tol: a.tol,
            sigma: a.sigma,
            injection_m: a.m,
        },
    };
    let cells = run_grid(&spec)?;
    for c in &cells {
        eprintln!(
            "n={:<4} tau={:<10.4} {:<14} {}/{}",
            c.n, c.tau, c.algorithm, c.success_count, c.trials
        );
    }
    emit_or_print(&cells, &a.output, |c, f, p| emit_grid(c, f, p), |c, w| write_grid_csv(c, w))?;
    Ok(true)
}

pub fn converge(a: ConvergeArgs) -> Result<bool> {
    let spec = match &a.spec {
        Some(path) => load_json::<ConvergenceSpec>(path)?,
        None => ConvergenceSpec {
            n: a.n,
            alphas: a.alphas,
            trials: a.trials,
            algorithms: a.algos,
            master_seed: a.seed,
            max_iter: a.max_iter,
            tol: a.tol,
            sigma: a.sigma,
            injection_m: a.m,
        },
    };
    let curves = run_convergence(&spec)?;
    for c in &curves {
        eprintln!(
            "n={} alpha={} {:<14} final mean correlation {:.4}, median iterations {}",
            c.n,
            c.alpha,
            c.algorithm,
            c.final_mean_correlation(),
            c.median_iterations()
        );
    }
    emit_or_print(&curves, &a.output, |c, f, p| emit_curves(c, f, p), |c, w| write_curves_csv(c, w))?;
    Ok(true)
}

#[derive(Serialize)]
struct PathReport {
    n: usize,
    tau: f64,
    tau_hat: f64,
    seed: u64,
    note: &'static str,
    points: Vec<PathPoint>,
}

const SIN_THETA_NOTE: &str = "sin_theta values are raw measurements; the asymptotic 1/log^2 n bound is vacuous at this n";

fn run_path(n: usize, tau: Option<f64>, tau_hat: Option<f64>, seed: u64, schedule: Option<Vec<f64>>) -> Result<PathReport> {
    let nf = n as f64;
    let tau = tau.unwrap_or(nf.powf(0.75) * nf.ln());
    let tau_hat = tau_hat.unwrap_or(tau);
    let schedule = match schedule {
        Some(t) => HomotopySchedule::new(t)?,
        None => HomotopySchedule::default_for(n),
    };
    let inst = SpikedInstance::generate(n, tau, 1.0, RngSeed::new(seed), None)?;
    let points = trace_path(&inst.tensor, &inst.v, &schedule, tau_hat, &PathOptions::for_tau_hat(tau_hat))?;
    Ok(PathReport {
        n,
        tau,
        tau_hat,
        seed,
        note: SIN_THETA_NOTE,
        points,
    })
}

pub fn path(a: PathArgs) -> Result<bool> {
    let report = run_path(a.n, a.tau, a.tau_hat, a.seed, a.schedule)?;
    for p in &report.points {
        eprintln!(
            "t={:<10.3e} |x|={:.4} corr={:+.4} lambda_max={:+.4e} sin(b,v)={:.4} at x†: {:.4} {:?}",
            p.t, p.norm, p.correlation, p.top_eig, p.sin_theta_b_v, p.dagger_sin_theta_b_v, p.class
        );
    }
    write_json_to(&report, a.out.as_deref())?;
    Ok(true)
}

#[derive(Serialize)]
struct CheckReport {
    suite: &'static str,
    n: usize,
    trials: usize,
    seed: u64,
    reports: Vec<MomentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<PathReport>,
    pass: bool,
}

/// Unit vector orthogonal to `v`.
fn orthogonal_unit(v: &[f64], seed: RngSeed) -> Vec<f64> {
    let mut w = unit_sphere(&mut seed.rng(), v.len());
    let c = dot(&w, v);
    axpy(-c, v, &mut w);
    normalized(&w, 0.0).expect("random vector is not parallel to v")
}

pub fn check(a: CheckArgs) -> Result<bool> {
    let seed = RngSeed::new(a.seed);
    let mut ratios = None;
    let mut path = None;
    let (suite, reports) = match a.suite {
        Suite::Moments => {
            let v = unit_sphere(&mut seed.with_stream(7).rng(), a.n);
            let w = orthogonal_unit(&v, seed.with_stream(8));
            let mut reports = u_moments(a.n, 1.0, a.trials, seed)?.to_vec();
            for (label, x) in [("orthogonal", w.clone()), ("signal", v.clone()), ("orthogonal_x2", scaled(2.0, &w))] {
                for mut r in delta_moments(a.n, 1.0, &x, &v, a.trials, seed.child(1))? {
                    r.statistic = format!("{}[{label}]", r.statistic);
                    reports.push(r);
                }
            }
            ("moments", reports)
        }
        Suite::Injection => ("injection", injection_moments(a.m, a.trials, seed)?.to_vec()),
        Suite::Goe => {
            let g = goe_spectrum_check(a.n, a.trials, seed)?;
            ratios = Some(g.ratios);
            ("goe", vec![g.report])
        }
        Suite::Path => {
            let report = run_path(a.n, None, None, a.seed, None)?;
            let good = report.points.last().map(|p| p.class == PointClass::Good).unwrap_or(false);
            let empirical = if good { 1.0 } else { 0.0 };
            let r = MomentReport::new(
                "final_point_good",
                empirical,
                0.0,
                1,
                1.0,
                tpca_core::diagnostics::Tolerance::Bracket { lo: 1.0, hi: 1.0 },
            );
            path = Some(report);
            ("path", vec![r])
        }
    };
    for r in &reports {
        println!(
            "{} {:<40} empirical {:<14.6} theoretical {:<14.6} deviation {:.4}",
            if r.pass { "PASS" } else { "FAIL" },
            r.statistic,
            r.empirical,
            r.theoretical,
            r.deviation
        );
    }
    let pass = reports.iter().all(|r| r.pass);
    let report = CheckReport {
        suite,
        n: a.n,
        trials: a.trials,
        seed: a.seed,
        reports,
        ratios,
        path,
        pass,
    };
    if let Some(out) = &a.out {
        save_json::<CheckReport>(out, &report)?;
    }
    Ok(pass)
}

