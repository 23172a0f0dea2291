//! Central-difference gradient checking against the tape.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Compares tape gradients of `f` with central differences at `params`.
///
/// Returns the maximum over all coordinates of
/// `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`. `f` must be deterministic.
pub fn grad_check<F>(mut f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&h) {
        return Err(Error::Config(format!("finite-difference step {h} outside [1e-6, 1e-4]")));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic = grads.collect(&vars);

    let mut eval = |ps: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ps.iter().map(|p| t.param(p.clone())).collect();
        let o = f(&mut t, &vs)?;
        let v = t.value(o).item();
        if !v.is_finite() {
            return Err(Error::Numeric(format!("grad_check objective = {v}")));
        }
        Ok(v)
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..work[pi].len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[k] = orig;

            let fd = (plus - minus) / (2.0 * h);
            let ad = grad.data()[k];
            let denom = 1.0f64.max(libm::fabs(ad)).max(libm::fabs(fd));
            worst = worst.max(libm::fabs(ad - fd) / denom);
        }
    }
    Ok(worst)
}
