//! Uncertainty calibration: correlation between predicted spread and
//! realized error, and the spread-vs-distance-to-sensor profile.
//!
//! Degenerate inputs (constant spread, too few points) make a
//! correlation undefined; it is reported as absent rather than zero.

use crate::error::{Error, Result};
use crate::masks::Mask;

/// Pearson correlation, or None when either input is constant or too
/// short.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks with ties averaged, the standard midrank convention.
fn midranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j share the average 1-based rank
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation via Pearson on midranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&midranks(x), &midranks(y))
}

/// Per-pixel Euclidean distance to the nearest observed pixel.
pub fn distance_to_nearest_sensor(m_i: &Mask) -> Result<Vec<f64>> {
    let n = m_i.n();
    let sensors = m_i.indices();
    if sensors.is_empty() {
        return Err(Error::config("no observed pixels"));
    }
    let coords: Vec<(i64, i64)> = sensors
        .iter()
        .map(|&p| ((p / n) as i64, (p % n) as i64))
        .collect();
    let mut out = vec![0.0f64; n * n];
    for r in 0..n as i64 {
        for c in 0..n as i64 {
            let mut best = i64::MAX;
            for &(sr, sc) in &coords {
                let d2 = (r - sr) * (r - sr) + (c - sc) * (c - sc);
                best = best.min(d2);
            }
            out[(r as usize) * n + c as usize] = (best as f64).sqrt();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct DistanceBin {
    pub mean_distance: f64,
    pub mean_sigma: f64,
    pub count: usize,
}

/// Equal-count bins of (distance, sigma) pairs ordered by distance.
pub fn distance_profile(
    distances: &[f64],
    sigmas: &[f64],
    n_bins: usize,
) -> Result<Vec<DistanceBin>> {
    assert_eq!(distances.len(), sigmas.len());
    if n_bins == 0 || distances.len() < n_bins {
        return Err(Error::config("not enough points for the requested bins"));
    }
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| {
        distances[a]
            .total_cmp(&distances[b])
            .then(a.cmp(&b))
    });
    let n = order.len();
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let lo = b * n / n_bins;
        let hi = (b + 1) * n / n_bins;
        let chunk = &order[lo..hi];
        let md = chunk.iter().map(|&i| distances[i]).sum::<f64>() / chunk.len() as f64;
        let ms = chunk.iter().map(|&i| sigmas[i]).sum::<f64>() / chunk.len() as f64;
        bins.push(DistanceBin { mean_distance: md, mean_sigma: ms, count: chunk.len() });
    }
    Ok(bins)
}

/// One evaluated instance, in physical units.
#[derive(Debug, Clone)]
pub struct InstanceCalibration {
    /// Per-pixel ensemble standard deviation.
    pub sigma: Vec<f32>,
    /// Per-pixel absolute error of the ensemble mean.
    pub abs_err: Vec<f32>,
    pub m_i: Mask,
    pub m_o: Mask,
    /// The instance's ensemble CRPS on its target mask.
    pub crps: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CalibrationReport {
    /// Correlations of sigma vs absolute error pooled over target pixels.
    pub per_pixel_pearson: Option<f64>,
    pub per_pixel_spearman: Option<f64>,
    /// Correlations of instance-mean sigma vs instance CRPS.
    pub per_instance_pearson: Option<f64>,
    pub per_instance_spearman: Option<f64>,
    /// Mean sigma per distance-to-sensor bin, pooled over all pixels.
    pub distance_bins: Vec<DistanceBin>,
}

pub fn calibration_report(
    instances: &[InstanceCalibration],
    n_bins: usize,
) -> Result<CalibrationReport> {
    if instances.is_empty() {
        return Err(Error::config("no instances to calibrate"));
    }
    let mut px_sigma = Vec::new();
    let mut px_err = Vec::new();
    let mut inst_sigma = Vec::new();
    let mut inst_crps = Vec::new();
    let mut all_dist = Vec::new();
    let mut all_sigma = Vec::new();
    for inst in instances {
        let len = inst.sigma.len();
        if inst.abs_err.len() != len || inst.m_o.bits().len() != len {
            return Err(Error::config("instance field shapes disagree"));
        }
        let mut acc = 0.0f64;
        let mut cnt = 0usize;
        for p in 0..len {
            if inst.m_o.contains(p) {
                px_sigma.push(inst.sigma[p] as f64);
                px_err.push(inst.abs_err[p] as f64);
                acc += inst.sigma[p] as f64;
                cnt += 1;
            }
        }
        if cnt == 0 {
            return Err(Error::config("instance with empty target mask"));
        }
        inst_sigma.push(acc / cnt as f64);
        inst_crps.push(inst.crps);
        let dist = distance_to_nearest_sensor(&inst.m_i)?;
        all_dist.extend_from_slice(&dist);
        all_sigma.extend(inst.sigma.iter().map(|&v| v as f64));
    }
    Ok(CalibrationReport {
        per_pixel_pearson: pearson(&px_sigma, &px_err),
        per_pixel_spearman: spearman(&px_sigma, &px_err),
        per_instance_pearson: pearson(&inst_sigma, &inst_crps),
        per_instance_spearman: spearman(&inst_sigma, &inst_crps),
        distance_bins: distance_profile(&all_dist, &all_sigma, n_bins)?,
    })
}
