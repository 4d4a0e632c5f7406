//! Central finite-difference utilities. These back the gradient oracles in
//! the test suites and stay independent of the analytic gradient paths.

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let fp = f(&xs);
        xs[i] = orig - h;
        let fm = f(&xs);
        xs[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Infinity-norm relative error of `analytic` against `reference`.
pub fn max_rel_error(analytic: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(analytic.len(), reference.len());
    let scale = reference
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-12);
    analytic
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, r)| m.max((a - r).abs()))
        / scale
}
