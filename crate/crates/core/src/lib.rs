//! Sparse field diffusion: reconstruction and forecasting of 2D turbulent
//! fields from sparse point observations with a mask-conditioned denoising
//! diffusion model.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`sim`]: pseudo-spectral 2D Navier-Stokes vorticity solver and dataset
//!   generation from Gaussian random field initial conditions.
//! * [`masks`]: sensor mask sampling (random scatter and block patterns)
//!   with disjoint conditioning/observation pairs.
//! * [`tensor`]: dense tensors and a replayable reverse-mode autodiff tape.
//! * [`denoiser`]: the mask-conditioned UNet noise predictor.
//! * [`diffusion`]: noise schedule, forward noising, and DDIM sampling.
//! * [`train`]: normalization, dual-masked loss, AdamW, the training loop.
//! * [`uq`]: ensembles, per-pixel uncertainty maps, autoregressive rollout.
//! * [`metrics`]: CRPS, masked errors, interpolation baselines, calibration.
//! * [`container`]: binary trajectory/mask container and checkpoint codecs.
//! * [`config`]: run configuration, presets, validation.
//!
//! All randomness flows through [`rng`], which splits a single master seed
//! into independent per-purpose streams; every artifact of a run is
//! reproducible from its seed and configuration alone.

pub mod config;
pub mod container;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod masks;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod train;
pub mod uq;

pub use error::{Error, Result};
