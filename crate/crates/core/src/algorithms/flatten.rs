//! Top left singular vector of the n×n² unfolding, by power iteration on
//! `M M^T`.

use std::time::Instant;

use super::{iterate_until_stable, AlgorithmTag, PowerOptions, RecoveryTrace, DEGENERATE_NORM};
use crate::error::{Error, Result};
use crate::linalg::normalized;
use crate::objective::f_eval;
use crate::rng::{unit_sphere, RngSeed};
use crate::tensor::Tensor3;

/// The singular vector is only defined up to sign; the returned trace is
/// oriented so that `T(w, w, w) >= 0` at the final iterate.
pub fn flatten_method(t: &Tensor3, seed: RngSeed, opts: PowerOptions) -> Result<RecoveryTrace> {
    if opts.max_iter == 0 {
        return Err(Error::invalid("flatten method needs max_iter >= 1"));
    }
    let start = Instant::now();
    let w0 = unit_sphere(&mut seed.rng(), t.dim());
    let mut run = iterate_until_stable(w0, opts.max_iter, opts.tol, |w| {
        let y = t.flatten_gram_matvec(w)?;
        normalized(&y, DEGENERATE_NORM)
            .ok_or_else(|| Error::Degenerate("flattened Gram matvec vanished".into()))
    })?;
    if f_eval(t, run.iterates.last().unwrap())? < 0.0 {
        for w in &mut run.iterates {
            w.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(RecoveryTrace {
        algorithm: AlgorithmTag::Flatten,
        iterates: run.iterates,
        correlations: None,
        converged: run.converged,
        iterations_used: run.iterations_used,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;

    #[test]
    fn noiseless_sign_is_fixed_to_signal() {
        let v = unit_sphere(&mut RngSeed::new(1).rng(), 7);
        let t = Tensor3::rank_one(&v, 3.0).unwrap();
        for s in 0..10 {
            let trace = flatten_method(&t, RngSeed::new(s), PowerOptions::new(50, 1e-10)).unwrap();
            assert!(dot(trace.last(), &v) > 1.0 - 1e-9, "seed {s}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let t = Tensor3::sample_gaussian(5, 1.0, RngSeed::new(2)).unwrap();
        let opts = PowerOptions::new(30, 1e-8);
        let a = flatten_method(&t, RngSeed::new(3), opts).unwrap();
        let b = flatten_method(&t, RngSeed::new(3), opts).unwrap();
        assert_eq!(a.iterates, b.iterates);
        assert!(flatten_method(&t, RngSeed::new(3), PowerOptions::new(0, 1e-8)).is_err());
    }
}
