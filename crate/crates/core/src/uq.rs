//! Conditional ensembles, per-pixel uncertainty maps, and autoregressive
//! rollouts with reconditioning.
//!
//! All sampling here happens in normalized (z-scored) units; callers
//! de-normalize members before computing physical-unit statistics. Each
//! ensemble member has its own deterministic noise stream keyed by
//! (instance, member), so results never depend on evaluation order.

use crate::denoiser::{stack_input, Denoiser};
use crate::diffusion::{ddim_sample, draw_noise, NoiseSchedule};
use crate::error::{Error, Result};
use crate::masks::{apply_mask, Mask};
use crate::rng::{ensemble_index, stream_rng, Domain};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Per-pixel ensemble mean and unbiased (K-1 denominator) standard
/// deviation.
#[derive(Debug, Clone)]
pub struct UncertaintyMap {
    pub mean: Vec<f32>,
    pub sigma: Vec<f32>,
}

/// Which previous field a rollout restricts for the next conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recondition {
    /// Each member feeds back its own prediction (members independent).
    SelfMember,
    /// All members feed back the ensemble mean (members coupled).
    EnsembleMean,
}

fn check_sampler_inputs(
    model: &Denoiser<f32>,
    x_c: &[f32],
    m_i: &Mask,
    schedule: &NoiseSchedule,
    plan: &[usize],
) -> Result<usize> {
    let n = m_i.n();
    if x_c.len() != n * n {
        return Err(Error::config("conditioning field does not match the mask grid"));
    }
    let div = model.config().spatial_divisor();
    if n % div != 0 {
        return Err(Error::config(format!("grid {n} not divisible by {div}")));
    }
    if plan.is_empty() || plan.iter().any(|&t| t == 0 || t > schedule.t_total()) {
        return Err(Error::config("sampling plan steps must be in 1..=T"));
    }
    Ok(n)
}

/// One conditional DDIM sample. `rng` supplies only the initial noise
/// draw; the reverse recursion itself is deterministic. The conditioning
/// channels are re-injected at every plan step.
pub fn sample_conditional(
    model: &Denoiser<f32>,
    x_c: &[f32],
    m_i: &Mask,
    schedule: &NoiseSchedule,
    plan: &[usize],
    clamp: Option<f64>,
    rng: &mut impl Rng,
) -> Result<Vec<f32>> {
    let n = check_sampler_inputs(model, x_c, m_i, schedule, plan)?;
    let m_plane: Vec<f32> = m_i.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let x_init = draw_noise::<f32>(n * n, rng);
    let out = ddim_sample(schedule, plan, &x_init, clamp, |x_tau, tau| {
        let input = stack_input(x_tau, x_c, &m_plane, n);
        // inputs were validated above, so the forward pass cannot fail
        model.predict(&input, tau).expect("validated sampler input").data
    });
    Ok(out)
}

fn member_rng(master_seed: u64, instance_id: u64, member: u64) -> ChaCha12Rng {
    stream_rng(master_seed, Domain::Ensemble, ensemble_index(instance_id, member))
}

/// K independent conditional samples under fixed (x_c, m_i).
pub fn sample_ensemble(
    model: &Denoiser<f32>,
    x_c: &[f32],
    m_i: &Mask,
    schedule: &NoiseSchedule,
    plan: &[usize],
    k: usize,
    master_seed: u64,
    instance_id: u64,
    clamp: Option<f64>,
) -> Result<Vec<Vec<f32>>> {
    if k == 0 {
        return Err(Error::config("ensemble size must be positive"));
    }
    let mut members = Vec::with_capacity(k);
    for member in 0..k {
        let mut rng = member_rng(master_seed, instance_id, member as u64);
        let s = sample_conditional(model, x_c, m_i, schedule, plan, clamp, &mut rng)
            .map_err(|e| Error::data(format!("member {member}: {e}")))?;
        members.push(s);
    }
    Ok(members)
}

/// Unbiased per-pixel mean and standard deviation over members.
pub fn uncertainty_map(members: &[Vec<f32>]) -> Result<UncertaintyMap> {
    let k = members.len();
    if k < 2 {
        return Err(Error::config("dispersion needs at least 2 members"));
    }
    let len = members[0].len();
    if members.iter().any(|m| m.len() != len) {
        return Err(Error::config("members must share a shape"));
    }
    let mut mean = vec![0.0f64; len];
    for m in members {
        for (a, &v) in mean.iter_mut().zip(m) {
            *a += v as f64;
        }
    }
    for a in mean.iter_mut() {
        *a /= k as f64;
    }
    let mut var = vec![0.0f64; len];
    for m in members {
        for (p, &v) in m.iter().enumerate() {
            let d = v as f64 - mean[p];
            var[p] += d * d;
        }
    }
    let sigma = var
        .iter()
        .map(|&v| ((v / (k - 1) as f64).sqrt()) as f32)
        .collect();
    Ok(UncertaintyMap {
        mean: mean.into_iter().map(|v| v as f32).collect(),
        sigma,
    })
}

/// K autoregressive rollouts of `horizon` steps. Step h conditions on
/// the restriction of the step h-1 prediction to the SAME mask `m_i`;
/// the first step conditions on `x_c0`. Returns samples indexed
/// `[horizon][member][pixel]`, all in normalized units.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    model: &Denoiser<f32>,
    x_c0: &[f32],
    m_i: &Mask,
    schedule: &NoiseSchedule,
    plan: &[usize],
    horizon: usize,
    k: usize,
    master_seed: u64,
    instance_id: u64,
    recondition: Recondition,
    clamp: Option<f64>,
) -> Result<Vec<Vec<Vec<f32>>>> {
    if horizon == 0 {
        return Err(Error::config("rollout horizon must be at least 1"));
    }
    if k == 0 {
        return Err(Error::config("ensemble size must be positive"));
    }
    check_sampler_inputs(model, x_c0, m_i, schedule, plan)?;
    // one generator per member so reordering members cannot change draws
    let mut rngs: Vec<ChaCha12Rng> =
        (0..k).map(|m| member_rng(master_seed, instance_id, m as u64)).collect();
    let mut conditioning: Vec<Vec<f32>> = vec![x_c0.to_vec(); k];
    let mut per_horizon: Vec<Vec<Vec<f32>>> = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let mut members = Vec::with_capacity(k);
        for (member, rng) in rngs.iter_mut().enumerate() {
            let s = sample_conditional(model, &conditioning[member], m_i, schedule, plan, clamp, rng)
                .map_err(|e| Error::data(format!("member {member} horizon {h}: {e}")))?;
            members.push(s);
        }
        match recondition {
            Recondition::SelfMember => {
                for (member, s) in members.iter().enumerate() {
                    conditioning[member] = apply_mask(s, m_i);
                }
            }
            Recondition::EnsembleMean => {
                let mean = uncertainty_map(&members)
                    .map(|u| u.mean)
                    .unwrap_or_else(|_| members[0].clone());
                let shared = apply_mask(&mean, m_i);
                for c in conditioning.iter_mut() {
                    *c = shared.clone();
                }
            }
        }
        per_horizon.push(members);
    }
    Ok(per_horizon)
}
