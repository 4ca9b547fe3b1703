//! Ensemble CRPS and masked deterministic errors.
//!
//! The continuous ranked probability score of an ensemble {u_1..u_K}
//! against a scalar target u is estimated fairly (unbiased in K) as
//!
//! ```text
//! crps = (1/K) sum_k |u_k - u|
//!      - (1/(K(K-1))) sum_{k<l} |u_k - u_l|
//! ```
//!
//! averaged over the evaluation mask. At K = 1 the dispersion term is
//! empty and the score reduces to the masked MAE exactly.

use crate::error::{Error, Result};
use crate::masks::Mask;

/// Fair ensemble CRPS averaged over `region` pixels.
pub fn crps_region(members: &[Vec<f32>], target: &[f32], region: &Mask) -> Result<f64> {
    let k = members.len();
    if k == 0 {
        return Err(Error::config("need at least one ensemble member"));
    }
    if region.count() == 0 {
        return Err(Error::config("evaluation mask is empty"));
    }
    let len = target.len();
    if len != region.bits().len() || members.iter().any(|m| m.len() != len) {
        return Err(Error::config("member and target shapes must match the mask"));
    }
    let mut total = 0.0f64;
    for p in 0..len {
        if !region.contains(p) {
            continue;
        }
        let t = target[p] as f64;
        let mut mae = 0.0f64;
        for m in members {
            mae += (m[p] as f64 - t).abs();
        }
        mae /= k as f64;
        let mut disp = 0.0f64;
        if k > 1 {
            for a in 0..k {
                let va = members[a][p] as f64;
                for b in (a + 1)..k {
                    disp += (va - members[b][p] as f64).abs();
                }
            }
            disp /= (k * (k - 1)) as f64;
        }
        total += mae - disp;
    }
    Ok(total / region.count() as f64)
}

/// CRPS on the target mask, the standard evaluation region.
pub fn crps_mc(members: &[Vec<f32>], target: &[f32], m_o: &Mask) -> Result<f64> {
    crps_region(members, target, m_o)
}

/// CRPS split over the regions of one instance. The full-grid value
/// requires dense truth, so it is computed only when requested.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CrpsBreakdown {
    /// Conditioned (input-mask) pixels.
    pub input_region: Option<f64>,
    /// Target pixels not visible in the input.
    pub target_only: Option<f64>,
    /// Every pixel; only meaningful against simulation truth.
    pub full_grid: Option<f64>,
}

pub fn crps_breakdown(
    members: &[Vec<f32>],
    target: &[f32],
    m_i: &Mask,
    m_o: &Mask,
    dense_truth: bool,
) -> Result<CrpsBreakdown> {
    let region_or_none = |region: &Mask| -> Result<Option<f64>> {
        if region.count() == 0 {
            Ok(None)
        } else {
            crps_region(members, target, region).map(Some)
        }
    };
    let input_region = region_or_none(m_i)?;
    let target_only = region_or_none(&m_o.difference(m_i))?;
    let full_grid = if dense_truth {
        Some(crps_region(members, target, &Mask::full(m_o.n()))?)
    } else {
        None
    };
    Ok(CrpsBreakdown { input_region, target_only, full_grid })
}

pub fn masked_mse(pred: &[f32], target: &[f32], m_o: &Mask) -> Result<f64> {
    masked_moment(pred, target, m_o, |d| d * d)
}

pub fn masked_mae(pred: &[f32], target: &[f32], m_o: &Mask) -> Result<f64> {
    masked_moment(pred, target, m_o, f64::abs)
}

fn masked_moment(
    pred: &[f32],
    target: &[f32],
    m_o: &Mask,
    f: impl Fn(f64) -> f64,
) -> Result<f64> {
    if m_o.count() == 0 {
        return Err(Error::config("evaluation mask is empty"));
    }
    if pred.len() != target.len() || pred.len() != m_o.bits().len() {
        return Err(Error::config("field shapes must match the mask"));
    }
    let mut total = 0.0f64;
    for p in 0..pred.len() {
        if m_o.contains(p) {
            total += f(pred[p] as f64 - target[p] as f64);
        }
    }
    Ok(total / m_o.count() as f64)
}
