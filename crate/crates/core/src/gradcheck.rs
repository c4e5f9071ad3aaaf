//! Central finite-difference gradient checking.
//!
//! Deliberately knows nothing about the losses it checks: it only
//! perturbs a parameter vector and evaluates a closure, so it stays an
//! independent oracle for every analytic gradient in this crate.

/// Numeric gradient of `f` at `params` by central differences with step `h`.
pub fn central_difference<F>(params: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let fp = f(&work);
        work[i] = orig - h;
        let fm = f(&work);
        work[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Worst relative disagreement between two gradients.
///
/// Coordinates where both entries are below `1e-7` in magnitude are
/// compared absolutely to avoid amplifying finite-difference noise
/// around zero.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let scale = a.abs().max(n.abs());
        let err = if scale < 1e-7 {
            (a - n).abs()
        } else {
            (a - n).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}
