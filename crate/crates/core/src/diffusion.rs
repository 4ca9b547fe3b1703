//! Denoising diffusion machinery: the variance schedule, the forward
//! noising process, and the deterministic DDIM sampler.
//!
//! The forward process at step tau in {1..T} is
//!
//! ```text
//! x_tau = sqrt(abar_tau) x_0 + sqrt(1 - abar_tau) eps,   eps ~ N(0, I)
//! ```
//!
//! with abar_tau the cumulative product of (1 - beta). DDIM runs the
//! deterministic (eta = 0) reverse recursion through a decreasing plan of
//! steps, reconstructing the noise-free estimate at each step:
//!
//! ```text
//! x0_hat = (x_tau - sqrt(1 - abar_tau) eps_hat) / sqrt(abar_tau)
//! x_next = sqrt(abar_next) x0_hat + sqrt(1 - abar_next) eps_hat
//! ```

use crate::error::{Error, Result};
use crate::tensor::Scalar;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    /// betas[i] is the variance increment of step tau = i + 1.
    betas: Vec<f64>,
    /// alpha_bars[t] = prod_{i < t} (1 - betas[i]); alpha_bars[0] = 1.
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear beta ramp over `t_total` steps.
    pub fn linear(t_total: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_total < 2 {
            return Err(Error::config("schedule needs at least 2 steps"));
        }
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::config(format!(
                "invalid beta range [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = (0..t_total)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (t_total - 1) as f64)
            .collect();
        let mut alpha_bars = Vec::with_capacity(t_total + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        Ok(NoiseSchedule { betas, alpha_bars })
    }

    pub fn t_total(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, tau: usize) -> f64 {
        assert!((1..=self.t_total()).contains(&tau));
        self.betas[tau - 1]
    }

    /// Cumulative signal fraction at step tau, tau in 0..=T (0 is clean).
    pub fn alpha_bar(&self, tau: usize) -> f64 {
        self.alpha_bars[tau]
    }
}

/// Standard normal noise of the given length.
pub fn draw_noise<S: Scalar>(len: usize, rng: &mut impl Rng) -> Vec<S> {
    (0..len)
        .map(|_| S::from_f64(rng.sample(StandardNormal)))
        .collect()
}

/// Noised field at signal fraction `abar` given clean field and noise.
pub fn forward_noise<S: Scalar>(x0: &[S], eps: &[S], abar: f64) -> Vec<S> {
    assert_eq!(x0.len(), eps.len());
    let sa = S::from_f64(abar.sqrt());
    let sn = S::from_f64((1.0 - abar).sqrt());
    x0.iter()
        .zip(eps)
        .map(|(&x, &e)| sa * x + sn * e)
        .collect()
}

/// Decreasing step plan tau_j = j * T / n_steps, j = n_steps..1. The
/// sampler implicitly finishes at tau = 0 (abar = 1).
pub fn ddim_plan(t_total: usize, n_steps: usize) -> Result<Vec<usize>> {
    if n_steps == 0 || n_steps > t_total {
        return Err(Error::config(format!(
            "ddim steps {n_steps} must be in 1..={t_total}"
        )));
    }
    Ok((1..=n_steps)
        .rev()
        .map(|j| j * t_total / n_steps)
        .collect())
}

/// One deterministic reverse step from signal fraction `abar_now` to
/// `abar_next`. Returns the new state; `clamp` optionally bounds the
/// intermediate x0_hat to +-clamp.
pub fn ddim_step<S: Scalar>(
    x_tau: &[S],
    eps_hat: &[S],
    abar_now: f64,
    abar_next: f64,
    clamp: Option<f64>,
) -> Vec<S> {
    assert_eq!(x_tau.len(), eps_hat.len());
    let sa = abar_now.sqrt();
    let sn = (1.0 - abar_now).sqrt();
    let sa_next = S::from_f64(abar_next.sqrt());
    let sn_next = S::from_f64((1.0 - abar_next).sqrt());
    let inv_sa = S::from_f64(1.0 / sa);
    let sn_s = S::from_f64(sn);
    let bound = clamp.map(S::from_f64);
    x_tau
        .iter()
        .zip(eps_hat)
        .map(|(&x, &e)| {
            let mut x0 = (x - sn_s * e) * inv_sa;
            if let Some(c) = bound {
                if x0 > c {
                    x0 = c;
                }
                if x0 < -c {
                    x0 = -c;
                }
            }
            sa_next * x0 + sn_next * e
        })
        .collect()
}

/// Run the full DDIM recursion from `x_init` (a draw at the deepest plan
/// step) down to a clean sample. `denoise(x_tau, tau)` predicts the noise.
pub fn ddim_sample<S: Scalar>(
    schedule: &NoiseSchedule,
    plan: &[usize],
    x_init: &[S],
    clamp: Option<f64>,
    mut denoise: impl FnMut(&[S], usize) -> Vec<S>,
) -> Vec<S> {
    assert!(!plan.is_empty());
    let mut x = x_init.to_vec();
    for (i, &tau) in plan.iter().enumerate() {
        let eps_hat = denoise(&x, tau);
        let abar_now = schedule.alpha_bar(tau);
        let abar_next = schedule.alpha_bar(if i + 1 < plan.len() { plan[i + 1] } else { 0 });
        x = ddim_step(&x, &eps_hat, abar_now, abar_next, clamp);
    }
    x
}
