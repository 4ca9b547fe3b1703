//! Held-out evaluation: conditional ensembles scored against dense
//! truth, the persistence baseline, and calibration inputs.
//!
//! Instances live on the trailing `held_out_traj` trajectories, which
//! training never reads. Tasks alternate reconstruction (condition and
//! score on the same frame) and forecast (score on the next kept frame).
//! All selection is deterministic in (seed, instance_id).

use crate::config::RunConfig;
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::masks::{sample_pair_for_instance, MaskPair};
use crate::metrics::{
    calibration_report, crps_breakdown, crps_mc, masked_mae, masked_mse, preinterp_nn,
    CalibrationReport, InstanceCalibration,
};
use crate::rng::{stream_rng, Domain};
use crate::sim::{split_frames, Dataset};
use crate::train::{conditioning_channels, un_z_score, z_score, NormStats, Task};
use crate::uq::{rollout, sample_ensemble, uncertainty_map};
use rand::Rng;

/// Distance-profile bins in calibration reports.
pub const DISTANCE_BINS: usize = 8;

/// Ensemble-stream offset for rollout cases, keeping their noise draws
/// disjoint from single-frame evaluation ensembles.
const ROLLOUT_ID_OFFSET: u64 = 1 << 32;

/// One evaluation case: where it reads the dataset and under which masks.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub instance_id: u64,
    pub task: Task,
    pub traj: usize,
    pub cond_frame: usize,
    pub target_frame: usize,
    pub pair: MaskPair,
}

/// Deterministic held-out instance list for a run configuration.
pub fn build_instances(cfg: &RunConfig) -> Result<Vec<EvalInstance>> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let (kept, _) = split_frames(s.n_frames);
    if kept.len() < 2 {
        return Err(Error::config("need at least 2 kept frames to forecast"));
    }
    let held_start = s.n_traj - cfg.eval.held_out_traj;
    let mut out = Vec::with_capacity(cfg.eval.instances);
    for id in 0..cfg.eval.instances as u64 {
        let mut rng = stream_rng(cfg.seed, Domain::Test, id);
        let traj = held_start + rng.random_range(0..cfg.eval.held_out_traj);
        let task = if id % 2 == 0 {
            Task::Reconstruction
        } else {
            Task::Forecast
        };
        let (cond_frame, target_frame) = match task {
            Task::Reconstruction => {
                let f = kept[rng.random_range(0..kept.len())];
                (f, f)
            }
            Task::Forecast => {
                let i = rng.random_range(0..kept.len() - 1);
                (kept[i], kept[i + 1])
            }
        };
        let pair = sample_pair_for_instance(s.protocol, s.regime, s.grid_n, cfg.seed, id)?;
        out.push(EvalInstance {
            instance_id: id,
            task,
            traj,
            cond_frame,
            target_frame,
            pair,
        });
    }
    Ok(out)
}

/// Scores for one instance, in physical units.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InstanceReport {
    pub instance_id: u64,
    pub task: Task,
    pub traj: usize,
    pub cond_frame: usize,
    pub target_frame: usize,
    /// Ensemble CRPS on the target mask.
    pub crps: f64,
    /// CRPS restricted to conditioned pixels, when any exist.
    pub crps_input_region: Option<f64>,
    /// CRPS on target pixels that were not conditioned on.
    pub crps_target_only: Option<f64>,
    /// CRPS over the whole grid against dense truth.
    pub crps_full: Option<f64>,
    /// Single-member CRPS of the nearest-neighbor persistence baseline.
    pub persistence_crps: f64,
    /// Ensemble-mean errors on the target mask.
    pub mse: f64,
    pub mae: f64,
    /// Grid-average predicted spread.
    pub mean_sigma: f64,
}

/// Aggregate over all instances plus calibration diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EvalReport {
    pub mean_crps: f64,
    pub mean_persistence_crps: f64,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub members: usize,
    pub calibration: CalibrationReport,
    pub instances: Vec<InstanceReport>,
}

/// Rejects datasets whose shape disagrees with the configuration.
pub fn check_dataset(cfg: &RunConfig, ds: &Dataset) -> Result<()> {
    let s = &cfg.scenario;
    if ds.h != s.grid_n || ds.w != s.grid_n || ds.n_traj != s.n_traj || ds.n_frames != s.n_frames
    {
        return Err(Error::data(format!(
            "dataset is {}x{}x{}x{} but the config declares {}x{}x{}x{}",
            ds.n_traj, ds.n_frames, ds.h, ds.w, s.n_traj, s.n_frames, s.grid_n, s.grid_n
        )));
    }
    Ok(())
}

/// Evaluates a model on every held-out instance of the configuration.
pub fn evaluate_model(
    model: &Denoiser<f32>,
    ds: &Dataset,
    stats: &NormStats,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    check_dataset(cfg, ds)?;
    let instances = build_instances(cfg)?;
    let schedule = cfg.diffusion.schedule()?;
    let plan = cfg.diffusion.plan()?;
    let k = cfg.eval.members;

    let mut reports = Vec::with_capacity(instances.len());
    let mut calib = Vec::with_capacity(instances.len());
    for inst in &instances {
        let cond = ds.frame(inst.traj, inst.cond_frame);
        let truth = ds.frame(inst.traj, inst.target_frame);
        let cond_z = z_score::<f32>(cond, stats);
        let (x_c, _) = conditioning_channels(&cond_z, &inst.pair.input);
        let members_z = sample_ensemble(
            model,
            &x_c,
            &inst.pair.input,
            &schedule,
            &plan,
            k,
            cfg.seed,
            inst.instance_id,
            cfg.diffusion.clamp,
        )?;
        let members: Vec<Vec<f32>> = members_z
            .iter()
            .map(|m| un_z_score::<f32>(m, stats))
            .collect();

        let crps = crps_mc(&members, truth, &inst.pair.target)?;
        let breakdown = crps_breakdown(&members, truth, &inst.pair.input, &inst.pair.target, true)?;
        let map = uncertainty_map(&members)?;
        let mse = masked_mse(&map.mean, truth, &inst.pair.target)?;
        let mae = masked_mae(&map.mean, truth, &inst.pair.target)?;

        // carry the conditioning values forward, voids filled by
        // nearest neighbor
        let nn = preinterp_nn(cond, &inst.pair.input)?;
        let persistence_crps = crps_mc(std::slice::from_ref(&nn), truth, &inst.pair.target)?;

        let abs_err: Vec<f32> = map
            .mean
            .iter()
            .zip(truth)
            .map(|(&m, &t)| (m - t).abs())
            .collect();
        let mean_sigma =
            map.sigma.iter().map(|&v| v as f64).sum::<f64>() / map.sigma.len() as f64;
        calib.push(InstanceCalibration {
            sigma: map.sigma,
            abs_err,
            m_i: inst.pair.input.clone(),
            m_o: inst.pair.target.clone(),
            crps,
        });
        reports.push(InstanceReport {
            instance_id: inst.instance_id,
            task: inst.task,
            traj: inst.traj,
            cond_frame: inst.cond_frame,
            target_frame: inst.target_frame,
            crps,
            crps_input_region: breakdown.input_region,
            crps_target_only: breakdown.target_only,
            crps_full: breakdown.full_grid,
            persistence_crps,
            mse,
            mae,
            mean_sigma,
        });
    }

    let n = reports.len() as f64;
    Ok(EvalReport {
        mean_crps: reports.iter().map(|r| r.crps).sum::<f64>() / n,
        mean_persistence_crps: reports.iter().map(|r| r.persistence_crps).sum::<f64>() / n,
        mean_mse: reports.iter().map(|r| r.mse).sum::<f64>() / n,
        mean_mae: reports.iter().map(|r| r.mae).sum::<f64>() / n,
        members: k,
        calibration: calibration_report(&calib, DISTANCE_BINS)?,
        instances: reports,
    })
}

/// Grid-average spread per rollout horizon for one case.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RolloutDiagnostic {
    pub instance_id: u64,
    pub traj: usize,
    pub start_frame: usize,
    /// Physical-unit mean sigma at horizons 1..=H.
    pub mean_sigma: Vec<f64>,
}

/// Starting point of one rollout case on the held-out tail.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutCase {
    pub instance_id: u64,
    pub traj: usize,
    pub start_frame: usize,
    pub pair: MaskPair,
}

/// Deterministic rollout case selection, disjoint in its noise streams
/// from the single-frame evaluation instances.
pub fn rollout_case(cfg: &RunConfig, id: u64) -> Result<RolloutCase> {
    cfg.validate()?;
    let s = &cfg.scenario;
    let (kept, _) = split_frames(s.n_frames);
    let held_start = s.n_traj - cfg.eval.held_out_traj;
    let mut rng = stream_rng(cfg.seed, Domain::Test, ROLLOUT_ID_OFFSET + id);
    let traj = held_start + rng.random_range(0..cfg.eval.held_out_traj);
    let start_frame = kept[rng.random_range(0..kept.len())];
    let pair = sample_pair_for_instance(s.protocol, s.regime, s.grid_n, cfg.seed, id)?;
    Ok(RolloutCase {
        instance_id: id,
        traj,
        start_frame,
        pair,
    })
}

/// Autoregressive ensemble for one case, de-normalized to physical
/// units, indexed `[horizon][member][pixel]`.
pub fn rollout_members(
    model: &Denoiser<f32>,
    ds: &Dataset,
    stats: &NormStats,
    cfg: &RunConfig,
    case: &RolloutCase,
    k: usize,
) -> Result<Vec<Vec<Vec<f32>>>> {
    check_dataset(cfg, ds)?;
    let schedule = cfg.diffusion.schedule()?;
    let plan = cfg.diffusion.plan()?;
    let cond_z = z_score::<f32>(ds.frame(case.traj, case.start_frame), stats);
    let (x_c, _) = conditioning_channels(&cond_z, &case.pair.input);
    let horizons = rollout(
        model,
        &x_c,
        &case.pair.input,
        &schedule,
        &plan,
        cfg.eval.horizon,
        k,
        cfg.seed,
        ROLLOUT_ID_OFFSET + case.instance_id,
        cfg.eval.recondition,
        cfg.diffusion.clamp,
    )?;
    Ok(horizons
        .iter()
        .map(|members_z| {
            members_z
                .iter()
                .map(|m| un_z_score::<f32>(m, stats))
                .collect()
        })
        .collect())
}

/// Runs autoregressive rollouts on held-out cases and reports how the
/// ensemble spread evolves with horizon.
pub fn rollout_spread(
    model: &Denoiser<f32>,
    ds: &Dataset,
    stats: &NormStats,
    cfg: &RunConfig,
    n_cases: usize,
    k: usize,
) -> Result<Vec<RolloutDiagnostic>> {
    check_dataset(cfg, ds)?;
    if n_cases == 0 || k < 2 {
        return Err(Error::config("rollouts need cases and at least 2 members"));
    }
    let mut out = Vec::with_capacity(n_cases);
    for id in 0..n_cases as u64 {
        let case = rollout_case(cfg, id)?;
        let horizons = rollout_members(model, ds, stats, cfg, &case, k)?;
        let mut mean_sigma = Vec::with_capacity(horizons.len());
        for members in &horizons {
            let map = uncertainty_map(members)?;
            mean_sigma
                .push(map.sigma.iter().map(|&v| v as f64).sum::<f64>() / map.sigma.len() as f64);
        }
        out.push(RolloutDiagnostic {
            instance_id: case.instance_id,
            traj: case.traj,
            start_frame: case.start_frame,
            mean_sigma,
        });
    }
    Ok(out)
}
