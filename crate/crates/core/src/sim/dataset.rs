//! Trajectory dataset generation and the train/test frame split.

use super::grf::{sample_grf, GrfParams};
use super::navier::{NsConfig, NsSolver};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};

/// Dense trajectory store, row-major `[traj, frame, row, col]` in f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_traj: usize,
    pub n_frames: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Dataset {
    pub fn new(n_traj: usize, n_frames: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n_traj * n_frames * h * w {
            return Err(Error::data(format!(
                "dataset payload has {} values, expected {}",
                data.len(),
                n_traj * n_frames * h * w
            )));
        }
        Ok(Dataset {
            n_traj,
            n_frames,
            h,
            w,
            data,
        })
    }

    pub fn frame(&self, traj: usize, frame: usize) -> &[f32] {
        assert!(traj < self.n_traj && frame < self.n_frames);
        let sz = self.h * self.w;
        let off = (traj * self.n_frames + frame) * sz;
        &self.data[off..off + sz]
    }
}

/// Frame indices for the temporal split: even-indexed frames are the
/// training working set, odd-indexed frames are held out.
pub fn split_frames(n_frames: usize) -> (Vec<usize>, Vec<usize>) {
    let train = (0..n_frames).step_by(2).collect();
    let held_out = (1..n_frames).step_by(2).collect();
    (train, held_out)
}

/// Generate `n_traj` trajectories of `n_frames` snapshots each, every
/// `snapshot_stride` solver steps. Trajectory `t` draws its initial
/// condition from the simulation stream with index `t`, so any subset of
/// trajectories is reproducible independently of the others.
pub fn generate_dataset(
    ns: NsConfig,
    grf: GrfParams,
    n_traj: usize,
    n_frames: usize,
    snapshot_stride: usize,
    master_seed: u64,
) -> Result<Dataset> {
    let solver = NsSolver::new(ns)?;
    let n = ns.n;
    let mut data = Vec::with_capacity(n_traj * n_frames * n * n);
    for t in 0..n_traj {
        let mut rng = stream_rng(master_seed, Domain::Sim, t as u64);
        let omega0 = sample_grf(n, grf, solver.fft(), &mut rng);
        let frames = solver
            .run(&omega0, n_frames * snapshot_stride, snapshot_stride)
            .map_err(|e| match e {
                Error::Numerical(msg) => Error::numerical(format!("trajectory {t}: {msg}")),
                other => other,
            })?;
        for f in frames {
            data.extend(f.iter().map(|&v| v as f32));
        }
    }
    Dataset::new(n_traj, n_frames, n, n, data)
}
