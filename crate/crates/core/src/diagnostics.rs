//! Empirical checks of the moment identities behind the recovery
//! guarantees, Hessian spectrum measurements and homotopy-path tracing.
//!
//! Trials run in parallel on split seeds; per-trial statistics are
//! collected in trial order and summed sequentially, so every report is
//! bit-reproducible whatever the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{
    homotopy_stages, AscentOptions, HomotopySchedule, InjectionOptions, InjectionSequence,
    StallPolicy,
};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cosine, distance, dot, norm, norm_sq, Mat};
use crate::objective::PenalizedObjective;
use crate::rng::{unit_sphere, RngSeed};
use crate::tensor::Tensor3;

/// Default relative bound for `E|u|^2`.
pub const U_NORM_BOUND: f64 = 0.05;
/// Default relative bound for `E<u,v>^2` and `E<δ(x),v>^2`.
pub const PROJECTION_BOUND: f64 = 0.10;
/// Default relative bound for the injected per-entry variance.
pub const INJECTION_VARIANCE_BOUND: f64 = 0.03;
/// Zero-mean statistics pass within this many standard errors.
pub const STD_ERRORS: f64 = 4.0;
/// Bracket for `E|δ(x)|^2 / (n m |x|^4)`.
pub const DELTA_NORM_BRACKET: (f64, f64) = (1.0, 9.0);
/// Bracket for `λ_max / sqrt(n)` of the symmetrized noise contraction.
pub const GOE_BRACKET: (f64, f64) = (0.5, 6.0);

/// Norm threshold above which a point can be good.
pub const GOOD_NORM: f64 = 0.2;
/// Correlation threshold separating good from bad points.
pub const CORRELATION_THRESHOLD: f64 = 0.2;
/// Bad points satisfy `|x| <= BAD_NORM_FACTOR * n^{-1/4}`.
pub const BAD_NORM_FACTOR: f64 = 3.0;
/// Points within this fraction of `|x†|` of `x†` are near it.
pub const NEAR_DAGGER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Tolerance {
    /// `|empirical - theoretical| <= bound * |theoretical|`
    Relative { bound: f64 },
    /// `|empirical - theoretical| <= k * standard error`
    StdErrors { k: f64 },
    /// `lo <= empirical <= hi`
    Bracket { lo: f64, hi: f64 },
}

/// An empirical mean compared against its predicted value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub statistic: String,
    pub empirical: f64,
    pub theoretical: f64,
    pub trials: usize,
    /// Relative error, standard-error count or 0 inside a bracket,
    /// according to `tolerance`.
    pub deviation: f64,
    pub std_error: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl MomentReport {
    /// Report on the mean of `samples`.
    pub fn from_samples(
        statistic: impl Into<String>,
        samples: &[f64],
        theoretical: f64,
        tolerance: Tolerance,
    ) -> Self {
        let (mean, se) = mean_and_se(samples);
        Self::new(statistic, mean, se, samples.len(), theoretical, tolerance)
    }

    pub fn new(
        statistic: impl Into<String>,
        empirical: f64,
        std_error: f64,
        trials: usize,
        theoretical: f64,
        tolerance: Tolerance,
    ) -> Self {
        let mut r = Self {
            statistic: statistic.into(),
            empirical,
            theoretical,
            trials,
            deviation: 0.0,
            std_error,
            tolerance,
            pass: false,
        };
        r.evaluate();
        r
    }

    /// The same measurement judged against another tolerance.
    pub fn with_tolerance(mut self, tolerance: Tolerance) -> Self {
        self.tolerance = tolerance;
        self.evaluate();
        self
    }

    fn evaluate(&mut self) {
        let diff = (self.empirical - self.theoretical).abs();
        let (deviation, pass) = match self.tolerance {
            Tolerance::Relative { bound } => {
                let dev = diff / self.theoretical.abs();
                (dev, diff <= bound * self.theoretical.abs())
            }
            Tolerance::StdErrors { k } => {
                let dev = if self.std_error > 0.0 { diff / self.std_error } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
                (dev, dev <= k)
            }
            Tolerance::Bracket { lo, hi } => {
                let dev = if self.empirical < lo {
                    lo - self.empirical
                } else if self.empirical > hi {
                    self.empirical - hi
                } else {
                    0.0
                };
                (dev, self.empirical >= lo && self.empirical <= hi)
            }
        };
        self.deviation = deviation;
        self.pass = pass && self.empirical.is_finite();
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let k = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / k;
    if samples.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::invalid(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}

fn check_variance(m_var: f64) -> Result<()> {
    if !(m_var > 0.0 && m_var.is_finite()) {
        return Err(Error::invalid(format!("variance must be > 0, got {m_var}")));
    }
    Ok(())
}

/// Runs `f` on every trial index in parallel and returns results in order.
fn per_trial<T: Send>(
    trials: usize,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// `E|u|^2` and `E<u,v>^2` for `u = mode_diag_sum(A)`, `A_ijk ~ N(0, m)`,
/// against `3n(n-1)m + 9nm` and `9m + 3(n-1)m`.
pub fn u_moments(n: usize, m_var: f64, trials: usize, seed: RngSeed) -> Result<[MomentReport; 2]> {
    check_trials(trials, 100)?;
    check_variance(m_var)?;
    let v = unit_sphere(&mut seed.with_stream(1).rng(), n);
    let samples = per_trial(trials, |k| {
        let a = Tensor3::sample_gaussian(n, m_var, seed.child(k))?;
        let u = a.mode_diag_sum();
        Ok((norm_sq(&u), dot(&u, &v).powi(2)))
    })?;
    let (norms, projections): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let nf = n as f64;
    Ok([
        MomentReport::from_samples(
            "u_norm_sq",
            &norms,
            3.0 * nf * (nf - 1.0) * m_var + 9.0 * nf * m_var,
            Tolerance::Relative { bound: U_NORM_BOUND },
        ),
        MomentReport::from_samples(
            "u_projection_sq",
            &projections,
            9.0 * m_var + 3.0 * (nf - 1.0) * m_var,
            Tolerance::Relative { bound: PROJECTION_BOUND },
        ),
    ])
}

/// `E|δ(x)|^2` and `E<δ(x),v>^2` for fresh noise `A_ijk ~ N(0, m)`.
///
/// The first report measures the constant `E|δ|^2 / (n m |x|^4)` against
/// [`DELTA_NORM_BRACKET`] (its exact value is `3 + 6/n`). The second compares
/// against `m(3|x|^4 + 6|x|^2 <v,x>^2)` for unit `v`.
pub fn delta_moments(
    n: usize,
    m_var: f64,
    x: &[f64],
    v: &[f64],
    trials: usize,
    seed: RngSeed,
) -> Result<[MomentReport; 2]> {
    check_dim(n, x.len())?;
    check_dim(n, v.len())?;
    check_variance(m_var)?;
    check_trials(trials, 2)?;
    let r2 = norm_sq(x);
    if r2 == 0.0 {
        return Err(Error::invalid("delta moments need a nonzero x"));
    }
    let v = crate::linalg::normalized(v, 0.0).ok_or_else(|| Error::invalid("zero signal"))?;
    let samples = per_trial(trials, |k| {
        let a = Tensor3::sample_gaussian(n, m_var, seed.child(k))?;
        let d = a.sym_contract_vec(x)?;
        Ok((norm_sq(&d), dot(&d, &v).powi(2)))
    })?;
    let (norms, projections): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let nf = n as f64;
    let scale = nf * m_var * r2 * r2;
    let constants: Vec<f64> = norms.iter().map(|s| s / scale).collect();
    let (lo, hi) = DELTA_NORM_BRACKET;
    let vx = dot(&v, x);
    Ok([
        MomentReport::from_samples(
            "delta_norm_sq_constant",
            &constants,
            3.0 + 6.0 / nf,
            Tolerance::Bracket { lo, hi },
        ),
        MomentReport::from_samples(
            "delta_projection_sq",
            &projections,
            m_var * (3.0 * r2 * r2 + 6.0 * r2 * vx * vx),
            Tolerance::Relative { bound: PROJECTION_BOUND },
        ),
    ])
}

/// Dimension of the tensors drawn by [`injection_moments`].
pub const INJECTION_DIM: usize = 2;

/// First and second moments of the injected sequence `T^p = T - B̄ + B^p`
/// with `T = A` fresh standard noise each draw.
///
/// Reports the per-entry variance (against `m`), the covariance of one entry
/// across distinct `p != q` and the covariance between two distinct entries
/// over all `(p, q)` pairs (both against 0).
pub fn injection_moments(m: usize, trials: usize, seed: RngSeed) -> Result<[MomentReport; 3]> {
    if m < 2 {
        return Err(Error::invalid(format!("injection needs m >= 2, got {m}")));
    }
    check_trials(trials, 2)?;
    let opts = InjectionOptions {
        streaming: false,
        ..InjectionOptions::default()
    };
    // entry (0,0,0) and entry (1,0,1)
    let (e, f) = (0usize, 5usize);
    let samples = per_trial(trials, |k| {
        let draw = seed.child(k);
        let a = Tensor3::sample_gaussian(INJECTION_DIM, 1.0, draw)?;
        let seq = InjectionSequence::new(&a, m, draw.with_stream(1), &opts)?;
        let mut xe = Vec::with_capacity(m);
        let mut xf = Vec::with_capacity(m);
        for p in 0..m {
            let tp = seq.tensor(p)?;
            xe.push(tp.entries()[e]);
            xf.push(tp.entries()[f]);
        }
        let var = xe.iter().map(|x| x * x).sum::<f64>() / m as f64;
        let mut same = 0.0;
        for p in 0..m {
            for q in 0..m {
                if p != q {
                    same += xe[p] * xe[q];
                }
            }
        }
        same /= (m * (m - 1)) as f64;
        let cross = xe.iter().map(|a| xf.iter().map(|b| a * b).sum::<f64>()).sum::<f64>()
            / (m * m) as f64;
        Ok([var, same, cross])
    })?;
    let column = |c: usize| samples.iter().map(|s| s[c]).collect::<Vec<f64>>();
    let k = Tolerance::StdErrors { k: STD_ERRORS };
    Ok([
        MomentReport::from_samples(
            "injected_variance",
            &column(0),
            m as f64,
            Tolerance::Relative {
                bound: INJECTION_VARIANCE_BOUND,
            },
        ),
        MomentReport::from_samples("injected_cross_p_covariance", &column(1), 0.0, k),
        MomentReport::from_samples("injected_cross_entry_covariance", &column(2), 0.0, k),
    ])
}

/// Algebraically largest eigenpair of a symmetric matrix by power iteration
/// on `H + |H|_inf I`.
///
/// Stops once `|Hb - λb| <= tol`; fails with [`Error::NoConvergence`] after
/// `iters` steps.
pub fn hessian_top_eig(h: &Mat, iters: usize, tol: f64) -> Result<(f64, Vec<f64>)> {
    if !h.is_symmetric() {
        return Err(Error::invalid("matrix is not symmetric"));
    }
    let n = h.dim();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    let shift = h.inf_norm();
    // fixed start so results do not depend on caller RNG state
    let mut b = unit_sphere(&mut RngSeed::new(0x7e11).rng(), n);
    let mut residual = f64::INFINITY;
    for _ in 0..=iters {
        let hb = h.matvec(&b);
        let lambda = dot(&b, &hb);
        residual = hb
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - lambda * q).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol {
            return Ok((lambda, b));
        }
        let mut next: Vec<f64> = hb.iter().zip(&b).map(|(p, q)| p + shift * q).collect();
        let len = norm(&next);
        if len == 0.0 {
            // H = -shift I on the span of b; b is already an eigenvector
            return Ok((lambda, b));
        }
        next.iter_mut().for_each(|x| *x /= len);
        b = next;
    }
    Err(Error::NoConvergence {
        iterations: iters,
        residual,
    })
}

/// GOE-scale check for the symmetrized noise contraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoeCheck {
    pub n: usize,
    /// `λ_max(sym_contract_matrix(A, x)) / sqrt(n)` per trial.
    pub ratios: Vec<f64>,
    /// Mean ratio against the semicircle edge `sqrt(6)`; passes when every
    /// ratio lies in the bracket.
    pub report: MomentReport,
}

/// Samples standard noise `A` and a random unit `x` per trial and measures
/// `λ_max(P_sym[A(x,:,:) + A(:,x,:) + A(:,:,x)]) / sqrt(n)`.
pub fn goe_spectrum_check(n: usize, trials: usize, seed: RngSeed) -> Result<GoeCheck> {
    check_trials(trials, 30)?;
    let sqrt_n = (n as f64).sqrt();
    let ratios = per_trial(trials, |k| {
        let draw = seed.child(k);
        let a = Tensor3::sample_gaussian(n, 1.0, draw)?;
        let x = unit_sphere(&mut draw.with_stream(1).rng(), n);
        let h = a.sym_contract_matrix(&x)?;
        let tol = 1e-9 * h.inf_norm().max(1.0);
        let (lambda, _) = hessian_top_eig(&h, 200_000, tol)?;
        Ok(lambda / sqrt_n)
    })?;
    let (lo, hi) = GOE_BRACKET;
    let mut report = MomentReport::from_samples(
        "goe_lambda_max_ratio",
        &ratios,
        6f64.sqrt(),
        Tolerance::Bracket { lo, hi },
    );
    report.pass = ratios.iter().all(|r| (lo..=hi).contains(r));
    Ok(GoeCheck { n, ratios, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    NearDagger,
    Good,
    Bad,
    SaddleLike,
    Unclassified,
}

/// Good: `|x| >= 0.2` and `corr(x, v) >= 0.2`. Bad: `|x| <= 3 n^{-1/4}` and
/// `|corr(x, v)| <= 0.2`.
pub fn classify_point(x: &[f64], v: &[f64], n: usize) -> PointClass {
    let r = norm(x);
    let corr = cosine(x, v).unwrap_or(0.0);
    if r >= GOOD_NORM && corr >= CORRELATION_THRESHOLD {
        PointClass::Good
    } else if r <= BAD_NORM_FACTOR * (n as f64).powf(-0.25) && corr.abs() <= CORRELATION_THRESHOLD {
        PointClass::Bad
    } else {
        PointClass::Unclassified
    }
}

/// `sin` of the angle between two lines.
pub fn sin_theta(b: &[f64], v: &[f64]) -> f64 {
    let c = cosine(b, v).unwrap_or(0.0);
    (1.0 - c * c).max(0.0).sqrt().min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub ascent: AscentOptions,
    pub eig_iters: usize,
    /// Eigen-residual tolerance relative to `max(1, |H|_inf)`.
    pub eig_tol: f64,
}

impl PathOptions {
    pub fn for_tau_hat(tau_hat: f64) -> Self {
        Self {
            ascent: AscentOptions::for_tau_hat(tau_hat),
            eig_iters: 200_000,
            eig_tol: 1e-9,
        }
    }
}

/// One sample of the homotopy path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub stage: usize,
    pub t: f64,
    /// Stage-converged local maximizer of `g_r(·, t)`.
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    /// Inner-solver values never decreased during this stage.
    pub monotone: bool,
    pub norm: f64,
    pub correlation: f64,
    /// Top Hessian eigenpair at `x`.
    pub top_eig: f64,
    pub top_vec: Vec<f64>,
    pub sin_theta_b_v: f64,
    /// `|x - x†| / |x†|`.
    pub dagger_distance: f64,
    /// Top Hessian eigenpair at `x†`.
    pub dagger_top_eig: f64,
    pub dagger_sin_theta_b_v: f64,
    /// `|δ(x)| / |x|^2` with `δ(x) = sym_contract_vec(T, x) - 3 τ̂ <v,x>^2 v`.
    pub delta_norm_ratio: f64,
    /// `|<δ(x), v>| / |x|^2`.
    pub delta_signal_ratio: f64,
    pub class: PointClass,
}

/// Follows [`homotopy_stages`] and measures every stage's point. Stalled
/// stages are recorded and the path continues from their best point.
///
/// The noise part of the contraction is isolated assuming `τ̂` equals the
/// planted `τ`.
pub fn trace_path(
    t: &Tensor3,
    v: &[f64],
    schedule: &HomotopySchedule,
    tau_hat: f64,
    opts: &PathOptions,
) -> Result<Vec<PathPoint>> {
    let n = t.dim();
    check_dim(n, v.len())?;
    let obj = PenalizedObjective::new(t, tau_hat)?;
    let stages = homotopy_stages(&obj, schedule, &opts.ascent, StallPolicy::Continue)?;
    let dagger = obj.x_dagger();
    let dagger_norm = norm(&dagger);
    let top = |x: &[f64], radius: f64| -> Result<(f64, Vec<f64>)> {
        let h = obj.hessian(x, radius)?;
        let tol = opts.eig_tol * h.inf_norm().max(1.0);
        hessian_top_eig(&h, opts.eig_iters, tol)
    };
    stages
        .into_iter()
        .map(|s| {
            let (lambda, b) = top(&s.x, s.t)?;
            let (dagger_lambda, dagger_b) = top(&dagger, s.t)?;
            let r2 = norm_sq(&s.x);
            let vx = dot(v, &s.x);
            let mut delta = t.sym_contract_vec(&s.x)?;
            crate::linalg::axpy(-3.0 * tau_hat * vx * vx, v, &mut delta);
            let (delta_norm_ratio, delta_signal_ratio) = if r2 > 0.0 {
                (norm(&delta) / r2, dot(&delta, v).abs() / r2)
            } else {
                (f64::NAN, f64::NAN)
            };
            let dagger_distance = distance(&s.x, &dagger) / dagger_norm;
            let class = if lambda > opts.eig_tol * lambda.abs().max(1.0) {
                PointClass::SaddleLike
            } else if dagger_distance <= NEAR_DAGGER {
                PointClass::NearDagger
            } else {
                classify_point(&s.x, v, n)
            };
            Ok(PathPoint {
                stage: s.stage,
                t: s.t,
                value: s.value,
                grad_norm: s.grad_norm,
                iterations: s.iterations,
                converged: s.converged,
                stalled: s.stalled,
                monotone: s.values.windows(2).all(|w| w[1] >= w[0]),
                norm: r2.sqrt(),
                correlation: cosine(&s.x, v).unwrap_or(0.0),
                top_eig: lambda,
                sin_theta_b_v: sin_theta(&b, v),
                top_vec: b,
                dagger_distance,
                dagger_top_eig: dagger_lambda,
                dagger_sin_theta_b_v: sin_theta(&dagger_b, v),
                delta_norm_ratio,
                delta_signal_ratio,
                class,
                x: s.x,
            })
        })
        .collect()
}
