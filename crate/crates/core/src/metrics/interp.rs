//! Dense pre-interpolation baselines from sparse observations: nearest
//! neighbor and Gaussian radial basis function collocation. The nearest
//! neighbor fill doubles as the persistence reference forecaster.

use crate::error::{Error, Result};
use crate::masks::Mask;

/// Each pixel takes the value of the Euclidean-nearest observed pixel.
/// Distance ties resolve to the lowest linear index, so the output is
/// fully deterministic.
pub fn preinterp_nn(x_c: &[f32], m_i: &Mask) -> Result<Vec<f32>> {
    let n = m_i.n();
    if x_c.len() != n * n {
        return Err(Error::config("field does not match the mask grid"));
    }
    let sensors = m_i.indices();
    if sensors.is_empty() {
        return Err(Error::config("no observed pixels to interpolate from"));
    }
    let coords: Vec<(i64, i64)> = sensors
        .iter()
        .map(|&p| ((p / n) as i64, (p % n) as i64))
        .collect();
    let mut out = vec![0.0f32; n * n];
    for r in 0..n as i64 {
        for c in 0..n as i64 {
            let mut best = (i64::MAX, usize::MAX);
            for (j, &(sr, sc)) in coords.iter().enumerate() {
                let d2 = (r - sr) * (r - sr) + (c - sc) * (c - sc);
                // integer squared distances make the tie rule exact
                if (d2, sensors[j]) < best {
                    best = (d2, sensors[j]);
                }
            }
            out[(r as usize) * n + c as usize] = x_c[best.1];
        }
    }
    Ok(out)
}

/// Reference forecaster: copy the conditioning values and fill the voids
/// with their nearest observation.
pub fn persistence_baseline(x_c: &[f32], m_i: &Mask) -> Result<Vec<f32>> {
    preinterp_nn(x_c, m_i)
}

/// Median nearest-neighbor sensor spacing, the default kernel length
/// scale when none is given. Using the typical spacing rather than the
/// typical pairwise distance keeps the collocation system well
/// conditioned as sensor counts grow.
fn median_nn_distance(coords: &[(f64, f64)]) -> f64 {
    let mut d = Vec::with_capacity(coords.len());
    for i in 0..coords.len() {
        let mut best = f64::INFINITY;
        for j in 0..coords.len() {
            if i == j {
                continue;
            }
            let dr = coords[i].0 - coords[j].0;
            let dc = coords[i].1 - coords[j].1;
            best = best.min((dr * dr + dc * dc).sqrt());
        }
        d.push(best);
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

/// In-place Cholesky factorization; `a` is row-major symmetric positive
/// definite. Returns false when a pivot is not positive.
fn cholesky(a: &mut [f64], m: usize) -> bool {
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return false;
                }
                a[i * m + i] = s.sqrt();
            } else {
                a[i * m + j] = s / a[j * m + j];
            }
        }
    }
    true
}

/// Solve L L^T x = b given the factor from `cholesky`.
fn cholesky_solve(l: &[f64], m: usize, b: &mut [f64]) {
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * m + k] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= l[k * m + i] * b[k];
        }
        b[i] = s / l[i * m + i];
    }
}

/// Gaussian RBF interpolation: solve the exact collocation system on the
/// observed points, then evaluate densely. The kernel is
/// exp(-d^2 / (2 l^2)) with length scale `length_scale`, defaulting to
/// the median nearest-neighbor sensor spacing. A singular system is
/// retried once with ridge jitter 1e-8 on the diagonal.
pub fn preinterp_rbf(x_c: &[f32], m_i: &Mask, length_scale: Option<f64>) -> Result<Vec<f32>> {
    let n = m_i.n();
    if x_c.len() != n * n {
        return Err(Error::config("field does not match the mask grid"));
    }
    let sensors = m_i.indices();
    let m = sensors.len();
    if m == 0 {
        return Err(Error::config("no observed pixels to interpolate from"));
    }
    let coords: Vec<(f64, f64)> = sensors
        .iter()
        .map(|&p| ((p / n) as f64, (p % n) as f64))
        .collect();
    if m == 1 {
        // one sensor: the interpolant is a single bump through it
        let ell = length_scale.unwrap_or(1.0);
        return Ok(eval_rbf(n, &coords, &[x_c[sensors[0]] as f64], ell));
    }
    let ell = match length_scale {
        Some(l) if l > 0.0 => l,
        Some(_) => return Err(Error::config("length scale must be positive")),
        None => median_nn_distance(&coords).max(1.0),
    };

    let gram = |jitter: f64| -> Vec<f64> {
        let mut a = vec![0.0f64; m * m];
        for i in 0..m {
            for j in 0..m {
                let dr = coords[i].0 - coords[j].0;
                let dc = coords[i].1 - coords[j].1;
                a[i * m + j] = (-(dr * dr + dc * dc) / (2.0 * ell * ell)).exp();
            }
            a[i * m + i] += jitter;
        }
        a
    };

    let rhs: Vec<f64> = sensors.iter().map(|&p| x_c[p] as f64).collect();
    let mut weights = rhs.clone();
    let mut a = gram(0.0);
    if cholesky(&mut a, m) {
        cholesky_solve(&a, m, &mut weights);
    } else {
        let mut a = gram(1e-8);
        if !cholesky(&mut a, m) {
            return Err(Error::numerical(
                "collocation system singular even with ridge jitter",
            ));
        }
        weights = rhs;
        cholesky_solve(&a, m, &mut weights);
    }
    Ok(eval_rbf(n, &coords, &weights, ell))
}

fn eval_rbf(n: usize, coords: &[(f64, f64)], weights: &[f64], ell: f64) -> Vec<f32> {
    let inv = 1.0 / (2.0 * ell * ell);
    let mut out = vec![0.0f32; n * n];
    for r in 0..n {
        for c in 0..n {
            let mut s = 0.0f64;
            for (w, &(sr, sc)) in weights.iter().zip(coords) {
                let dr = r as f64 - sr;
                let dc = c as f64 - sc;
                s += w * (-(dr * dr + dc * dc) * inv).exp();
            }
            out[r * n + c] = s as f32;
        }
    }
    out
}
