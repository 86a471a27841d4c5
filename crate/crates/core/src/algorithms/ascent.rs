//! Gradient ascent on `g_r(·, t)` with Barzilai–Borwein trial steps and
//! Armijo backtracking. Accepted steps strictly increase `g_r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::objective::PenalizedObjective;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-increase constant of the Armijo test.
    pub armijo: f64,
    /// Halvings tried before an iteration counts as a failed line search.
    pub max_backtracks: usize,
    /// Consecutive failed line searches before giving up.
    pub max_failures: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 5000,
            armijo: 1e-4,
            max_backtracks: 60,
            max_failures: 20,
        }
    }
}

impl AscentOptions {
    /// Gradient tolerance scaled with the penalty coefficient, so the
    /// stopping test stays above the rounding floor of `g_r`.
    pub fn for_tau_hat(tau_hat: f64) -> Self {
        Self {
            grad_tol: 1e-6 * tau_hat.max(1.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `g_r` after every accepted step, starting with the value at `x0`.
    pub values: Vec<f64>,
}

/// Local maximizer of `g_r(·, t)` reached from `x0`.
///
/// Returns [`Error::Stalled`] (carrying the best point) after
/// `max_failures` consecutive line searches without progress.
pub fn local_maximize_gr(
    obj: &PenalizedObjective<'_>,
    x0: &[f64],
    t: f64,
    opts: &AscentOptions,
) -> Result<AscentOutcome> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ascent start must be finite"));
    }
    let offset = obj.constant_term(t);
    let mut x = x0.to_vec();
    let mut f = obj.varying_value(&x, t)?;
    let mut g = obj.gradient(&x, t)?;
    let mut values = vec![f + offset];
    let mut gn = norm(&g);
    let mut alpha = if gn > 0.0 { 1.0 / gn.max(1.0) } else { 1.0 };
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut failures = 0usize;
    let mut iterations = 0usize;
    let mut converged = gn <= opts.grad_tol;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        if let Some((xp, gp)) = prev.take() {
            let s: Vec<f64> = x.iter().zip(&xp).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(&gp).map(|(a, b)| a - b).collect();
            let curvature = -dot(&s, &y);
            if curvature > 0.0 {
                alpha = norm_sq(&s) / curvature;
            } else {
                alpha *= 2.0;
            }
        }
        alpha = alpha.clamp(1e-16, 1e16);

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut trial = x.clone();
            axpy(alpha, &g, &mut trial);
            let ft = obj.varying_value(&trial, t)?;
            if ft >= f + opts.armijo * alpha * gn * gn && ft > f {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }

        match accepted {
            Some((trial, ft)) => {
                failures = 0;
                let gt = obj.gradient(&trial, t)?;
                prev = Some((std::mem::replace(&mut x, trial), std::mem::replace(&mut g, gt)));
                f = ft;
                gn = norm(&g);
                values.push(f + offset);
                converged = gn <= opts.grad_tol;
            }
            None => {
                failures += 1;
                if failures >= opts.max_failures {
                    return Err(Error::Stalled {
                        stage: None,
                        iterations,
                        grad_norm: gn,
                        best: x,
                    });
                }
            }
        }
    }

    Ok(AscentOutcome {
        x,
        value: f + offset,
        grad_norm: gn,
        iterations,
        converged,
        values,
    })
}
