//! Run configuration: one nested JSON document drives every command.
//!
//! Sections cover the data scenario, the noise schedule and sampler, the
//! denoiser architecture, the optimizer, and the evaluation protocol.
//! Unknown keys are rejected everywhere; omitted keys take the defaults
//! documented on each field. Two presets share the code path: `toy`
//! (16x16, minutes on one core) and `ns64` (64x64 reference scale).

use crate::denoiser::DenoiserConfig;
use crate::diffusion::{ddim_plan, NoiseSchedule};
use crate::error::{Error, Result};
use crate::masks::{pixel_budget, MaskProtocol, MaskRegime};
use crate::sim::{GrfParams, NsConfig};
use crate::train::{Fill, LossConfig, OptimConfig};
use crate::uq::Recondition;
use serde::{Deserialize, Serialize};

/// Data generation and sparsity scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Grid resolution per side.
    pub grid_n: usize,
    pub n_traj: usize,
    /// Saved frames per trajectory (even indices train, odd held out).
    pub n_frames: usize,
    /// Solver steps between saved frames.
    pub snapshot_stride: usize,
    /// Kinematic viscosity.
    pub nu: f64,
    /// Solver time step.
    pub dt: f64,
    /// Forcing f(x1, x2) = amplitude * cos(wavenumber * x2).
    pub forcing_amplitude: f64,
    pub forcing_wavenumber: u32,
    /// Initial-condition spectrum decay exponent.
    pub grf_alpha: f64,
    /// Initial-condition inverse correlation length.
    pub grf_tau_corr: f64,
    /// How sensor/target masks are laid out.
    pub protocol: MaskProtocol,
    /// One shared mask draw versus a fixed draw per instance.
    pub regime: MaskRegime,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            grid_n: 64,
            n_traj: 1000,
            n_frames: 50,
            snapshot_stride: 40,
            nu: 0.01,
            dt: 1e-3,
            forcing_amplitude: -4.0,
            forcing_wavenumber: 4,
            grf_alpha: 2.5,
            grf_tau_corr: 3.0,
            protocol: MaskProtocol::Random {
                density: 0.10,
                overlap_fraction: 0.0,
            },
            regime: MaskRegime::Instance,
        }
    }
}

impl ScenarioConfig {
    pub fn ns_config(&self) -> NsConfig {
        NsConfig {
            n: self.grid_n,
            nu: self.nu,
            dt: self.dt,
            forcing_amplitude: self.forcing_amplitude,
            forcing_wavenumber: self.forcing_wavenumber,
        }
    }

    pub fn grf_params(&self) -> GrfParams {
        GrfParams {
            alpha: self.grf_alpha,
            tau_corr: self.grf_tau_corr,
        }
    }
}

/// Noise schedule and reverse sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    /// Forward-process steps.
    pub t_total: usize,
    /// Linear beta schedule endpoints.
    pub beta_start: f64,
    pub beta_end: f64,
    /// Reverse steps the deterministic sampler actually takes.
    pub ddim_steps: usize,
    /// Optional symmetric bound on the predicted clean field, in
    /// normalized units; None disables clamping.
    pub clamp: Option<f64>,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        DiffusionSection {
            t_total: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            ddim_steps: 50,
            clamp: None,
        }
    }
}

impl DiffusionSection {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_total, self.beta_start, self.beta_end)
    }

    pub fn plan(&self) -> Result<Vec<usize>> {
        ddim_plan(self.t_total, self.ddim_steps)
    }
}

/// Optimizer and training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    /// Peak learning rate; annealed to `lr_floor` by a cosine schedule.
    pub lr: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    /// Maximum global gradient norm before the update.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    /// Extra loss weight on pixels that are both sensed and supervised.
    pub lambda: f64,
    /// Value placed at unsupervised pixels of the training target.
    pub fill: Fill,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimConfig::default();
        OptimizerSection {
            lr: o.lr,
            lr_floor: o.lr_floor,
            weight_decay: o.weight_decay,
            grad_clip: o.grad_clip,
            batch_size: o.batch_size,
            total_steps: o.total_steps,
            lambda: LossConfig::default().lambda,
            fill: Fill::Zero,
        }
    }
}

impl OptimizerSection {
    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            lr: self.lr,
            lr_floor: self.lr_floor,
            weight_decay: self.weight_decay,
            grad_clip: self.grad_clip,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
        }
    }
}

/// Held-out evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Trailing trajectories excluded from training.
    pub held_out_traj: usize,
    /// Evaluation instances drawn from the held-out trajectories.
    pub instances: usize,
    /// Ensemble members per instance.
    pub members: usize,
    /// Autoregressive forecast horizon.
    pub horizon: usize,
    /// How rollouts build the next step's conditioning.
    pub recondition: Recondition,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            held_out_traj: 100,
            instances: 50,
            members: 20,
            horizon: 3,
            recondition: Recondition::SelfMember,
        }
    }
}

/// The complete run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub diffusion: DiffusionSection,
    pub net: DenoiserConfig,
    pub optimizer: OptimizerSection,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Desk-scale preset: finishes the full pipeline in minutes to tens
    /// of minutes on one core.
    pub fn toy() -> Self {
        let mut cfg = RunConfig::default();
        cfg.scenario.grid_n = 16;
        cfg.scenario.n_traj = 200;
        cfg.net.base_dim = 32;
        cfg.optimizer.batch_size = 32;
        cfg.optimizer.total_steps = 5_000;
        cfg.eval.held_out_traj = 40;
        cfg
    }

    /// Reference-scale preset: 64x64 grid, full defaults.
    pub fn ns64() -> Self {
        RunConfig::default()
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(RunConfig::toy()),
            "ns64" => Ok(RunConfig::ns64()),
            other => Err(Error::config(format!(
                "unknown preset {other:?} (expected toy or ns64)"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if s.grid_n < 4 || s.grid_n % 2 != 0 {
            return Err(Error::config("grid_n must be even and at least 4"));
        }
        if s.n_traj == 0 || s.snapshot_stride == 0 {
            return Err(Error::config("n_traj and snapshot_stride must be positive"));
        }
        if s.n_frames < 3 {
            return Err(Error::config(
                "n_frames must be at least 3 so forecasting has a next kept frame",
            ));
        }
        if !(s.nu > 0.0) || !(s.dt > 0.0) {
            return Err(Error::config("nu and dt must be positive"));
        }
        if !(s.grf_alpha > 1.0) || !(s.grf_tau_corr > 0.0) {
            return Err(Error::config(
                "grf_alpha must exceed 1 and grf_tau_corr must be positive",
            ));
        }
        match s.protocol {
            MaskProtocol::Random {
                density,
                overlap_fraction,
            } => {
                if !(density > 0.0 && density <= 1.0) {
                    return Err(Error::config("density must lie in (0, 1]"));
                }
                if !(0.0..=1.0).contains(&overlap_fraction) {
                    return Err(Error::config("overlap_fraction must lie in [0, 1]"));
                }
                if pixel_budget(density, s.grid_n) < 2 {
                    return Err(Error::config(
                        "density budget leaves fewer than 2 sensors",
                    ));
                }
            }
            MaskProtocol::Blocks { n_blocks } => {
                if n_blocks < 2 || n_blocks * 64 > s.grid_n * s.grid_n {
                    return Err(Error::config(
                        "n_blocks must be at least 2 and fit the grid",
                    ));
                }
            }
        }
        self.net.validate()?;
        if s.grid_n % self.net.spatial_divisor() != 0 {
            return Err(Error::config(format!(
                "grid_n {} is not divisible by the net's downsampling factor {}",
                s.grid_n,
                self.net.spatial_divisor()
            )));
        }
        self.diffusion.schedule()?;
        self.diffusion.plan()?;
        if let Some(c) = self.diffusion.clamp {
            if !(c > 0.0) {
                return Err(Error::config("clamp must be positive when set"));
            }
        }
        if self.optimizer.lambda < 0.0 {
            return Err(Error::config("lambda must be non-negative"));
        }
        self.optimizer.optim().validate()?;
        let e = &self.eval;
        if e.held_out_traj == 0 || e.held_out_traj >= s.n_traj {
            return Err(Error::config(
                "held_out_traj must leave at least one training trajectory",
            ));
        }
        if e.instances == 0 || e.horizon == 0 {
            return Err(Error::config("instances and horizon must be positive"));
        }
        if e.members < 2 {
            return Err(Error::config(
                "members must be at least 2 for spread statistics",
            ));
        }
        Ok(())
    }
}
