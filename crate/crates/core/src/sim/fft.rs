//! Two-dimensional FFT on square grids, backed by rustfft.
//!
//! Transforms are unnormalized going forward; the inverse divides by n^2,
//! so `ifft2(fft2(x)) == x` up to rounding.

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub type C64 = Complex<f64>;

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transpose(&self, data: &mut [C64]) {
        let n = self.n;
        for i in 0..n {
            for j in i + 1..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn pass(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.n * self.n);
        // process() transforms each contiguous length-n chunk: all rows at
        // once; the transpose turns columns into rows for the second pass.
        plan.process(data);
        self.transpose(data);
        plan.process(data);
        self.transpose(data);
    }

    pub fn fft2(&self, data: &mut [C64]) {
        self.pass(data, &self.fwd.clone());
    }

    pub fn ifft2(&self, data: &mut [C64]) {
        self.pass(data, &self.inv.clone());
        let scale = 1.0 / (self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Forward transform of a real field.
    pub fn fft2_real(&self, field: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = field.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.fft2(&mut buf);
        buf
    }

    /// Real part of the inverse transform.
    pub fn ifft2_real(&self, spectrum: &[C64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.ifft2(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }
}

/// Integer wavenumbers in FFT storage order: 0, 1, ..., n/2, -(n/2 - 1),
/// ..., -1 (the Nyquist mode for even n is stored as +n/2).
pub fn wavenumbers(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            if j <= n / 2 {
                j as f64
            } else {
                j as f64 - n as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain};
    use rand::Rng;

    #[test]
    fn roundtrip_recovers_field() {
        let n = 32;
        let fft = Fft2::new(n);
        let mut rng = stream_rng(3, Domain::Test, 10);
        let field: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() - 0.5).collect();
        let spec = fft.fft2_real(&field);
        let back = fft.ifft2_real(&spec);
        for (a, b) in field.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_lands_on_expected_bin() {
        // cos(3 x2) has energy only at k = (0, +-3), amplitude n^2 / 2.
        let n = 16;
        let fft = Fft2::new(n);
        let field: Vec<f64> = (0..n * n)
            .map(|idx| {
                let j = idx % n;
                (3.0 * 2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()
            })
            .collect();
        let spec = fft.fft2_real(&field);
        let expect = (n * n) as f64 / 2.0;
        assert!((spec[3].re - expect).abs() < 1e-9);
        assert!((spec[n - 3].re - expect).abs() < 1e-9);
        let total: f64 = spec.iter().map(|c| c.norm()).sum();
        assert!((total - 2.0 * expect).abs() < 1e-8, "no energy elsewhere");
    }

    #[test]
    fn wavenumber_layout() {
        assert_eq!(wavenumbers(8), vec![0.0, 1.0, 2.0, 3.0, 4.0, -3.0, -2.0, -1.0]);
        assert_eq!(wavenumbers(4), vec![0.0, 1.0, 2.0, -1.0]);
    }

    #[test]
    fn parseval_holds() {
        let n = 24;
        let fft = Fft2::new(n);
        let mut rng = stream_rng(3, Domain::Test, 11);
        let field: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>() - 0.5).collect();
        let spec = fft.fft2_real(&field);
        let phys: f64 = field.iter().map(|x| x * x).sum();
        let spect: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / (n * n) as f64;
        assert!((phys - spect).abs() < 1e-9 * phys.max(1.0));
    }
}
