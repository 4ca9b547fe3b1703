//! Data generation: pseudo-spectral Navier-Stokes on the periodic square
//! and Gaussian random field initial conditions.
//!
//! The domain is [0, 2*pi)^2 discretized on an n x n collocation grid.
//! Fields are stored row-major as `field[i * n + j]` with x1 = 2*pi*i/n
//! along rows and x2 = 2*pi*j/n along columns.

pub mod dataset;
pub mod fft;
pub mod grf;
pub mod navier;

pub use dataset::{generate_dataset, split_frames, Dataset};
pub use fft::Fft2;
pub use grf::{sample_grf, GrfParams};
pub use navier::{NsConfig, NsSolver};
