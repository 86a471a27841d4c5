//! The cubic objective `f(x) = T(x, x, x)`, its Gaussian smoothing `g`, and
//! the penalized objective
//!
//! ```text
//! f_r(x)    = T(x, x, x) - (3 τ̂ / 4) |x|^4
//! g_r(x, t) = E_{y ~ N(0, I)} f_r(x + t y)
//!           = T(x, x, x) + t^2 <z, x>
//!             - (3 τ̂ / 4) (|x|^4 + 2 t^2 (n + 2) |x|^2 + t^4 (n^2 + 2n))
//! ```
//!
//! where `z_j = Σ_i (T_iij + T_iji + T_jii)`. Everything is computed from
//! the observed tensor alone.
//!
//! The Hessian of `T(x, x, x)` is `2 P_sym[T(x,:,:) + T(:,x,:) + T(:,:,x)]`.
//! Written without the factor 2 the noise part of the Hessian would be off by
//! a factor of two against finite differences; the tests pin the factor.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dot, norm_sq, normalized, scaled, Mat};
use crate::tensor::Tensor3;

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("smoothing radius must be >= 0, got {t}")))
    }
}

fn check_tau_hat(tau_hat: f64) -> Result<()> {
    if tau_hat > 0.0 && tau_hat.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("penalty coefficient must be > 0, got {tau_hat}")))
    }
}

/// Value, gradient and (optionally) Hessian of `g_r` at one point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothedEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<Mat>,
    pub t: f64,
    pub tau_hat: f64,
}

/// `g_r(·, t)` bound to a tensor, with `z` precomputed.
#[derive(Debug, Clone)]
pub struct PenalizedObjective<'a> {
    tensor: &'a Tensor3,
    z: Vec<f64>,
    tau_hat: f64,
}

impl<'a> PenalizedObjective<'a> {
    pub fn new(tensor: &'a Tensor3, tau_hat: f64) -> Result<Self> {
        check_tau_hat(tau_hat)?;
        Ok(Self {
            tensor,
            z: tensor.mode_diag_sum(),
            tau_hat,
        })
    }

    pub fn tensor(&self) -> &Tensor3 {
        self.tensor
    }

    pub fn tau_hat(&self) -> f64 {
        self.tau_hat
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    fn n(&self) -> f64 {
        self.tensor.dim() as f64
    }

    /// The `x`-independent term `-(3τ̂/4) t^4 (n^2 + 2n)`.
    pub fn constant_term(&self, t: f64) -> f64 {
        let n = self.n();
        -0.75 * self.tau_hat * t.powi(4) * (n * n + 2.0 * n)
    }

    /// `g_r(x, t)` without [`constant_term`](Self::constant_term).
    pub fn varying_value(&self, x: &[f64], t: f64) -> Result<f64> {
        check_t(t)?;
        let n = self.n();
        let r2 = norm_sq(x);
        let cubic = self.tensor.trilinear(x, x, x)?;
        let linear = t * t * dot(&self.z, x);
        let penalty = 0.75 * self.tau_hat * (r2 * r2 + 2.0 * t * t * (n + 2.0) * r2);
        Ok(cubic + linear - penalty)
    }

    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        Ok(self.varying_value(x, t)? + self.constant_term(t))
    }

    pub fn gradient(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_t(t)?;
        let n = self.n();
        let mut g = self.tensor.sym_contract_vec(x)?;
        axpy(t * t, &self.z, &mut g);
        let shrink = 3.0 * self.tau_hat * (norm_sq(x) + t * t * (n + 2.0));
        axpy(-shrink, x, &mut g);
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64], t: f64) -> Result<Mat> {
        check_t(t)?;
        let n = self.n();
        let mut h = self.tensor.sym_contract_matrix(x)?;
        h.scale(2.0);
        let diag = 3.0 * self.tau_hat * (norm_sq(x) + t * t * (n + 2.0));
        for i in 0..x.len() {
            h[(i, i)] -= diag;
        }
        h.add_scaled(-6.0 * self.tau_hat, &Mat::outer(x, 1.0));
        Ok(h)
    }

    pub fn eval(&self, x: &[f64], t: f64, with_hessian: bool) -> Result<SmoothedEval> {
        Ok(SmoothedEval {
            value: self.value(x, t)?,
            gradient: self.gradient(x, t)?,
            hessian: if with_hessian {
                Some(self.hessian(x, t)?)
            } else {
                None
            },
            t,
            tau_hat: self.tau_hat,
        })
    }

    /// The maximizer of the `t^2` part of `g_r`, `z / (3 τ̂ (n + 2))`.
    pub fn x_dagger(&self) -> Vec<f64> {
        scaled(1.0 / (3.0 * self.tau_hat * (self.n() + 2.0)), &self.z)
    }
}

/// `f(x) = T(x, x, x)`
pub fn f_eval(t: &Tensor3, x: &[f64]) -> Result<f64> {
    t.trilinear(x, x, x)
}

/// Gaussian-smoothed cubic `g(x, t) = f(x) + t^2 <z, x>`.
pub fn g_eval(tensor: &Tensor3, x: &[f64], t: f64) -> Result<f64> {
    check_t(t)?;
    check_dim(tensor.dim(), x.len())?;
    Ok(f_eval(tensor, x)? + t * t * dot(&tensor.mode_diag_sum(), x))
}

pub fn g_r_eval(tensor: &Tensor3, x: &[f64], t: f64, tau_hat: f64) -> Result<f64> {
    PenalizedObjective::new(tensor, tau_hat)?.value(x, t)
}

pub fn g_r_grad(tensor: &Tensor3, x: &[f64], t: f64, tau_hat: f64) -> Result<Vec<f64>> {
    PenalizedObjective::new(tensor, tau_hat)?.gradient(x, t)
}

pub fn g_r_hess(tensor: &Tensor3, x: &[f64], t: f64, tau_hat: f64) -> Result<Mat> {
    PenalizedObjective::new(tensor, tau_hat)?.hessian(x, t)
}

/// Unit-norm maximizer of the infinitely smoothed cubic, `z / |z|`.
pub fn x_dagger_unit(tensor: &Tensor3) -> Result<Vec<f64>> {
    normalized(&tensor.mode_diag_sum(), 0.0)
        .ok_or_else(|| Error::Degenerate("diagonal-sum vector z is zero".into()))
}

/// `z / (3 τ̂ (n + 2))`
pub fn x_dagger_scaled(tensor: &Tensor3, tau_hat: f64) -> Result<Vec<f64>> {
    Ok(PenalizedObjective::new(tensor, tau_hat)?.x_dagger())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{unit_sphere, RngSeed};

    fn unit(n: usize, seed: u64) -> Vec<f64> {
        unit_sphere(&mut RngSeed::new(seed).rng(), n)
    }

    #[test]
    fn zero_smoothing_is_raw_objective() {
        let t = Tensor3::sample_gaussian(5, 1.0, RngSeed::new(1)).unwrap();
        let x = unit(5, 2);
        assert_eq!(g_eval(&t, &x, 0.0).unwrap(), f_eval(&t, &x).unwrap());
        assert_eq!(f_eval(&t, &[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_closed_forms() {
        let n = 6;
        let v = unit(n, 3);
        let tau = 2.0;
        let t = Tensor3::rank_one(&v, tau).unwrap();
        let x = scaled(0.7, &unit(n, 4));
        let vx = dot(&v, &x);
        let s = 0.4;
        assert!((f_eval(&t, &x).unwrap() - tau * vx.powi(3)).abs() < 1e-12);
        let g = g_eval(&t, &x, s).unwrap();
        assert!((g - (tau * vx.powi(3) + 3.0 * tau * s * s * vx)).abs() < 1e-12);

        let obj = PenalizedObjective::new(&t, tau).unwrap();
        let grad = obj.gradient(&x, s).unwrap();
        let r2 = norm_sq(&x);
        let nf = n as f64;
        for i in 0..n {
            let e = 3.0 * tau * vx * vx * v[i] + 3.0 * tau * s * s * v[i]
                - 3.0 * tau * (r2 + s * s * (nf + 2.0)) * x[i];
            assert!((grad[i] - e).abs() < 1e-12);
        }
        let h = obj.hessian(&x, s).unwrap();
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                let e = 6.0 * tau * vx * v[i] * v[j]
                    - 3.0 * tau * ((r2 + s * s * (nf + 2.0)) * id + 2.0 * x[i] * x[j]);
                assert!((h[(i, j)] - e).abs() < 1e-12);
            }
        }
        assert!(h.is_symmetric());
    }

    #[test]
    fn penalty_only_on_zero_tensor() {
        let n = 4;
        let zero = Tensor3::zeros(n).unwrap();
        let x = [0.3, -0.2, 0.5, 0.1];
        let (s, th) = (0.6, 1.7);
        let nf = n as f64;
        let r2 = norm_sq(&x);
        let expect =
            -0.75 * th * (r2 * r2 + 2.0 * s * s * (nf + 2.0) * r2 + s.powi(4) * (nf * nf + 2.0 * nf));
        assert!((g_r_eval(&zero, &x, s, th).unwrap() - expect).abs() < 1e-14);
        let h = g_r_hess(&zero, &x, s, th).unwrap();
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                let e = -3.0 * th * ((r2 + s * s * (nf + 2.0)) * id + 2.0 * x[i] * x[j]);
                assert!((h[(i, j)] - e).abs() < 1e-14);
            }
        }
        assert_eq!(g_r_eval(&zero, &[0.0; 4], 0.0, th).unwrap(), 0.0);
        let t = Tensor3::sample_gaussian(4, 1.0, RngSeed::new(8)).unwrap();
        assert!(g_r_grad(&t, &[0.0; 4], 0.0, th).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn argument_validation() {
        let t = Tensor3::zeros(3).unwrap();
        let x = [0.1; 3];
        assert!(g_eval(&t, &x, -0.1).is_err());
        assert!(g_r_eval(&t, &x, 0.1, 0.0).is_err());
        assert!(g_r_grad(&t, &x, 0.1, -1.0).is_err());
        assert!(g_r_hess(&t, &x, -1.0, 1.0).is_err());
        assert!(g_eval(&t, &[0.1; 2], 0.1).is_err());
        assert!(x_dagger_scaled(&t, 0.0).is_err());
        assert!(matches!(x_dagger_unit(&t), Err(Error::Degenerate(_))));
        assert!(x_dagger_scaled(&t, 1.0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dagger_points_for_rank_one() {
        let n = 7;
        let v = unit(n, 10);
        let t = Tensor3::rank_one(&v, 3.0).unwrap();
        let xd = x_dagger_unit(&t).unwrap();
        for (a, b) in xd.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(xd, x_dagger_unit(&t).unwrap());
        let xs = x_dagger_scaled(&t, 3.0).unwrap();
        for (a, b) in xs.iter().zip(&v) {
            assert!((a - b / (n as f64 + 2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn dagger_kills_quadratic_part_of_gradient() {
        let n = 16;
        let t = Tensor3::sample_gaussian(n, 1.0, RngSeed::new(21)).unwrap();
        let th = 1.3;
        let obj = PenalizedObjective::new(&t, th).unwrap();
        let xd = obj.x_dagger();
        let s = 1e3;
        let g_t = obj.gradient(&xd, s).unwrap();
        let g_0 = obj.gradient(&xd, 0.0).unwrap();
        let quad: Vec<f64> = g_t.iter().zip(&g_0).map(|(a, b)| (a - b) / (s * s)).collect();
        let rel = crate::linalg::norm(&quad) / crate::linalg::norm(obj.z());
        assert!(rel < 1e-8, "relative quadratic gradient {rel}");
        // and the full gradient is dominated by t^2 scale terms only through rounding
        let full_rel = crate::linalg::norm(&g_t) / (s * s * crate::linalg::norm(obj.z()));
        assert!(full_rel < 1e-6);
    }

    #[test]
    fn smoothing_is_linear_in_the_tensor() {
        let n = 5;
        let a = Tensor3::sample_gaussian(n, 1.0, RngSeed::new(31)).unwrap();
        let b = Tensor3::sample_gaussian(n, 2.0, RngSeed::new(32)).unwrap();
        let x = unit(n, 33);
        let (ca, cb, s) = (1.5, -0.25, 0.8);
        let mixed = a.combine(&b, ca, cb).unwrap();
        let lhs = g_eval(&mixed, &x, s).unwrap();
        let rhs = ca * g_eval(&a, &x, s).unwrap() + cb * g_eval(&b, &x, s).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn eval_bundle_matches_parts() {
        let t = Tensor3::sample_gaussian(4, 1.0, RngSeed::new(40)).unwrap();
        let obj = PenalizedObjective::new(&t, 2.0).unwrap();
        let x = unit(4, 41);
        let e = obj.eval(&x, 0.3, true).unwrap();
        assert_eq!(e.value, obj.value(&x, 0.3).unwrap());
        assert_eq!(e.gradient, obj.gradient(&x, 0.3).unwrap());
        assert!(e.hessian.unwrap().is_symmetric());
        assert!(obj.eval(&x, 0.3, false).unwrap().hessian.is_none());
    }
}
