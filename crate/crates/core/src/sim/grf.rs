//! Gaussian random fields with power-law spectra.
//!
//! A sample is white noise shaped in Fourier space by the filter
//! `(|k|^2 + tau_corr^2)^(-alpha/2)`, mean-removed (the k = 0 amplitude is
//! zeroed), and scaled so the expected per-pixel variance is exactly one.
//! The scale is computed from the filter, not the sample, so it is
//! deterministic given the parameters.

use super::fft::{wavenumbers, Fft2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GrfParams {
    /// Spectral decay exponent; the power spectrum falls off as
    /// |k|^(-2 alpha) for |k| >> tau_corr.
    pub alpha: f64,
    /// Inverse correlation length; flattens the spectrum below this
    /// scale. Named to keep it apart from the diffusion step index tau.
    pub tau_corr: f64,
}

impl Default for GrfParams {
    fn default() -> Self {
        GrfParams {
            alpha: 2.5,
            tau_corr: 3.0,
        }
    }
}

/// Filter amplitude per mode, k = 0 removed.
fn filter(n: usize, p: GrfParams) -> Vec<f64> {
    let k = wavenumbers(n);
    let mut amp = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == 0 && j == 0 {
                continue;
            }
            let ksq = k[i] * k[i] + k[j] * k[j];
            amp[i * n + j] = (ksq + p.tau_corr * p.tau_corr).powf(-p.alpha / 2.0);
        }
    }
    amp
}

/// One unit-variance sample on an n x n grid.
pub fn sample_grf(n: usize, p: GrfParams, fft: &Fft2, rng: &mut impl Rng) -> Vec<f64> {
    assert_eq!(fft.n(), n);
    let amp = filter(n, p);
    // E[pixel variance] of the filtered field is sum(amp^2) / n^2; rescale
    // the filter so that expectation is one.
    let var: f64 = amp.iter().map(|a| a * a).sum::<f64>() / (n * n) as f64;
    let scale = 1.0 / var.sqrt();

    let noise: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut spec = fft.fft2_real(&noise);
    for (s, a) in spec.iter_mut().zip(&amp) {
        *s *= a * scale;
    }
    fft.ifft2_real(&spec)
}
