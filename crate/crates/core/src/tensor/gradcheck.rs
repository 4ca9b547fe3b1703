//! Finite-difference gradient verification.
//!
//! [`central_diff`] estimates the gradient of a scalar function by central
//! differences, touching only the forward evaluation. It exists so analytic
//! gradients can be checked against a path that shares no code with the
//! tape's backward pass.

/// Central-difference gradient of `f` at `x` with step `h`:
/// `g[i] = (f(x + h e_i) - f(x - h e_i)) / (2 h)`.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let fp = f(&xp);
        xp[i] = orig - h;
        let fm = f(&xp);
        xp[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Largest relative disagreement between two gradient vectors. Components
/// where both magnitudes fall under `floor` compare absolutely against the
/// floor, so near-zero gradients do not blow up the ratio.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Step size for f64 central differences used throughout the test suite.
pub const FD_STEP: f64 = 1e-6;

/// Magnitude floor below which gradient components compare absolutely.
pub const FD_FLOOR: f64 = 1e-6;
