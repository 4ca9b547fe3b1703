//! Training: observed-pixel normalization, the dual-masked denoising
//! objective with overlap reweighting, and the optimization loop.
//!
//! The loss supervises only target-mask pixels,
//!
//! ```text
//! L = sum_p Mt_p (eps_p - eps_hat_p)^2 / sum_p Mt_p,
//! Mt = M_o + lambda (M_i . M_o)
//! ```
//!
//! so unobserved entries are never touched and pixels observed in both
//! masks (anchors shared by conditioning and target) carry gradient
//! scaled by exactly 1 + lambda.
//!
//! Only a sparse subset of the target frame is known, but the forward
//! noising process needs a dense field. Unobserved target pixels are
//! filled by a configurable rule before noising; the loss mask guarantees
//! the fills are never supervised, so they reach the network only through
//! the noised channel.

use crate::denoiser::Denoiser;
use crate::diffusion::{draw_noise, forward_noise, NoiseSchedule};
use crate::error::{Error, Result};
use crate::masks::{sample_pair, sample_pair_for_instance, Mask, MaskPair, MaskProtocol, MaskRegime};
use crate::rng::{stream_rng, Domain};
use crate::sim::Dataset;
use crate::tensor::{Scalar, Tape, Tensor};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

/// Mean and standard deviation over observed pixels of the training data.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// One deterministic mask pair per trajectory for the normalization
/// pass, keyed by trajectory id so every consumer derives the same
/// statistics from the same dataset and seed.
pub fn normalization_pairs(
    protocol: MaskProtocol,
    regime: MaskRegime,
    n: usize,
    master_seed: u64,
    trajs: &[usize],
) -> Result<Vec<MaskPair>> {
    trajs
        .iter()
        .map(|&t| sample_pair_for_instance(protocol, regime, n, master_seed, t as u64))
        .collect()
}

/// Statistics over the union (m_i or m_o) of each trajectory's mask pair,
/// accumulated across the given frames. `pairs` aligns with `trajs`.
/// Unobserved pixels never enter the estimate.
pub fn normalize_stats(
    data: &Dataset,
    trajs: &[usize],
    frames: &[usize],
    pairs: &[MaskPair],
) -> Result<NormStats> {
    if trajs.len() != pairs.len() {
        return Err(Error::config("one mask pair per trajectory required"));
    }
    if trajs.is_empty() || frames.is_empty() {
        return Err(Error::config("empty training split"));
    }
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut count = 0u64;
    for (&t, pair) in trajs.iter().zip(pairs) {
        let union: Vec<bool> = pair
            .input
            .bits()
            .iter()
            .zip(pair.target.bits())
            .map(|(&a, &b)| a || b)
            .collect();
        for &f in frames {
            let frame = data.frame(t, f);
            for (&v, &seen) in frame.iter().zip(&union) {
                if seen {
                    let v = v as f64;
                    sum += v;
                    sumsq += v * v;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::data("no observed pixels in the training split"));
    }
    let mean = sum / count as f64;
    let var = (sumsq / count as f64 - mean * mean).max(0.0);
    let std = var.sqrt();
    if std < 1e-8 * (mean.abs() + 1.0) {
        return Err(Error::data(format!(
            "degenerate observed data: std {std:e} at mean {mean}"
        )));
    }
    Ok(NormStats { mean, std })
}

pub fn z_score<S: Scalar>(field: &[f32], s: &NormStats) -> Vec<S> {
    field
        .iter()
        .map(|&v| S::from_f64((v as f64 - s.mean) / s.std))
        .collect()
}

pub fn un_z_score<S: Scalar>(field: &[S], s: &NormStats) -> Vec<S> {
    field
        .iter()
        .map(|&v| S::from_f64(v.to_f64() * s.std + s.mean))
        .collect()
}

/// How unobserved target pixels are completed before noising.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// Zero, the post-normalization mean: minimum-information completion.
    Zero,
    /// Copy the masked conditioning field (zero outside m_i).
    Conditioning,
    /// Independent standard normal draws.
    Noise,
}

/// The two conditioning channels: the input field restricted to m_i
/// (zeros elsewhere) and the binary mask plane itself.
pub fn conditioning_channels<S: Scalar>(input_z: &[S], m_i: &Mask) -> (Vec<S>, Vec<S>) {
    assert_eq!(input_z.len(), m_i.bits().len());
    let x_c = input_z
        .iter()
        .zip(m_i.bits())
        .map(|(&v, &b)| if b { v } else { S::ZERO })
        .collect();
    let plane = m_i
        .bits()
        .iter()
        .map(|&b| if b { S::ONE } else { S::ZERO })
        .collect();
    (x_c, plane)
}

/// Dense diffusion target: observed pixels keep their values, the rest
/// follow the fill rule. Target values outside m_o are discarded, which
/// is what makes the loss independent of them. `Noise` draws once per
/// unobserved pixel in ascending pixel order.
pub fn fill_target<S: Scalar>(
    target_z: &[S],
    m_o: &Mask,
    fill: Fill,
    x_c: &[S],
    rng: &mut impl Rng,
) -> Vec<S> {
    assert_eq!(target_z.len(), m_o.bits().len());
    target_z
        .iter()
        .zip(m_o.bits())
        .enumerate()
        .map(|(p, (&v, &seen))| {
            if seen {
                v
            } else {
                match fill {
                    Fill::Zero => S::ZERO,
                    Fill::Conditioning => x_c[p],
                    Fill::Noise => S::from_f64(rng.sample(StandardNormal)),
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Extra weight on pixels observed in both masks.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.05 }
    }
}

/// Per-pixel supervision weights Mt / sum(Mt) as a (1, n, n) plane, so
/// the tape loss is just sum(weights * (eps - eps_hat)^2).
pub fn loss_weights<S: Scalar>(m_i: &Mask, m_o: &Mask, lambda: f64) -> Result<Tensor<S>> {
    if lambda < 0.0 {
        return Err(Error::config("overlap weight must be nonnegative"));
    }
    if m_o.count() == 0 {
        return Err(Error::config("target mask is empty"));
    }
    let n = m_o.n();
    let mut total = 0.0f64;
    let mut w = vec![0.0f64; n * n];
    for (p, (&io, &ii)) in m_o.bits().iter().zip(m_i.bits()).enumerate() {
        if io {
            w[p] = if ii { 1.0 + lambda } else { 1.0 };
            total += w[p];
        }
    }
    Ok(Tensor::new(
        vec![1, n, n],
        w.into_iter().map(|v| S::from_f64(v / total)).collect(),
    ))
}

/// The objective as a plain number, for evaluation and tests.
pub fn dual_masked_loss<S: Scalar>(
    eps: &[S],
    eps_hat: &[S],
    m_i: &Mask,
    m_o: &Mask,
    lambda: f64,
) -> Result<f64> {
    assert_eq!(eps.len(), eps_hat.len());
    if lambda < 0.0 {
        return Err(Error::config("overlap weight must be nonnegative"));
    }
    if m_o.count() == 0 {
        return Err(Error::config("target mask is empty"));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (p, (&io, &ii)) in m_o.bits().iter().zip(m_i.bits()).enumerate() {
        if io {
            let w = if ii { 1.0 + lambda } else { 1.0 };
            let d = (eps[p] - eps_hat[p]).to_f64();
            num += w * (d * d);
            den += w;
        }
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    /// Peak learning rate; annealed to `lr_floor` by a cosine schedule.
    pub lr: f64,
    pub lr_floor: f64,
    pub weight_decay: f64,
    /// Maximum global gradient norm before the update.
    pub grad_clip: f64,
    pub batch_size: usize,
    pub total_steps: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 2e-4,
            lr_floor: 1e-6,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            batch_size: 64,
            total_steps: 600_000,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr_floor > 0.0 && self.lr_floor <= self.lr) {
            return Err(Error::config("need 0 < lr_floor <= lr"));
        }
        if self.weight_decay < 0.0 || self.grad_clip <= 0.0 {
            return Err(Error::config("weight_decay >= 0 and grad_clip > 0 required"));
        }
        // example streams pack the batch slot into the low 8 seed bits
        if self.batch_size == 0 || self.batch_size > 256 {
            return Err(Error::config("batch_size must be in 1..=256"));
        }
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        Ok(())
    }
}

/// Cosine annealing from `lr` at step 0 to `lr_floor` at `total_steps`.
pub fn cosine_lr(cfg: &OptimConfig, step: u64) -> f64 {
    if step >= cfg.total_steps {
        return cfg.lr_floor;
    }
    let t = step as f64 / cfg.total_steps as f64;
    cfg.lr_floor + 0.5 * (cfg.lr - cfg.lr_floor) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Scale gradients so the global L2 norm is at most `max_norm`. Returns
/// the pre-clip norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam with decoupled weight decay. Moment state is kept in f64
/// regardless of the parameter scalar type.
#[derive(Debug, Clone)]
pub struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n_params: usize) -> Self {
        AdamW { m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step<S: Scalar>(&mut self, params: &mut [S], grad: &[f64], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            let p = params[i].to_f64();
            // decay applies to the parameter directly, not through the
            // adaptive term
            let p = p - lr * weight_decay * p - lr * mhat / (vhat.sqrt() + ADAM_EPS);
            params[i] = S::from_f64(p);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Reconstruction,
    Forecast,
}

/// Everything a training step needs besides the model and optimizer.
pub struct TrainSetup<'a> {
    pub data: &'a Dataset,
    /// Training trajectory ids.
    pub trajs: &'a [usize],
    /// Training frame indices within each trajectory, ascending. Forecast
    /// examples target the next entry of this list.
    pub frames: &'a [usize],
    pub stats: NormStats,
    pub protocol: MaskProtocol,
    pub regime: MaskRegime,
    pub fill: Fill,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub schedule: &'a NoiseSchedule,
    pub seed: u64,
}

impl TrainSetup<'_> {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.loss.lambda < 0.0 {
            return Err(Error::config("overlap weight must be nonnegative"));
        }
        if self.data.h != self.data.w {
            return Err(Error::config("training grids must be square"));
        }
        if self.trajs.is_empty() || self.trajs.iter().any(|&t| t >= self.data.n_traj) {
            return Err(Error::config("training trajectory ids out of range"));
        }
        if self.frames.len() < 2 {
            return Err(Error::config("need at least two frames for forecasting"));
        }
        if self.frames.windows(2).any(|w| w[0] >= w[1])
            || self.frames.iter().any(|&f| f >= self.data.n_frames)
        {
            return Err(Error::config("frame indices must be ascending and in range"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// One optimization step over a freshly drawn batch.
///
/// Each example slot has its own deterministic stream keyed by
/// (step, slot), consumed in a fixed order: trajectory, frame, masks,
/// fill draws, diffusion step, noise, dropout. Even slots train
/// reconstruction, odd slots single-step forecasting, so the mix is
/// exactly half and half.
pub fn train_step(
    setup: &TrainSetup,
    model: &mut Denoiser<f32>,
    opt: &mut AdamW,
    step: u64,
) -> Result<StepMetrics> {
    setup.validate()?;
    assert!(step < 1 << 48, "step counter exceeds the seed packing range");
    let n = setup.data.h;
    let plane = n * n;
    let t_total = setup.schedule.t_total();

    let mut grad_acc = vec![0.0f64; model.n_params()];
    let mut loss_sum = 0.0f64;
    for slot in 0..setup.optim.batch_size {
        let mut rng = stream_rng(setup.seed, Domain::Train, (step << 8) | slot as u64);
        let task = if slot % 2 == 0 { Task::Reconstruction } else { Task::Forecast };
        let traj = setup.trajs[rng.random_range(0..setup.trajs.len())];
        let (t_in, t_out) = match task {
            Task::Reconstruction => {
                let f = setup.frames[rng.random_range(0..setup.frames.len())];
                (f, f)
            }
            Task::Forecast => {
                let i = rng.random_range(0..setup.frames.len() - 1);
                (setup.frames[i], setup.frames[i + 1])
            }
        };
        let pair = match setup.regime {
            MaskRegime::Instance => sample_pair(setup.protocol, n, &mut rng)?,
            MaskRegime::Global => {
                sample_pair_for_instance(setup.protocol, MaskRegime::Global, n, setup.seed, 0)?
            }
        };

        let input_z = z_score::<f32>(setup.data.frame(traj, t_in), &setup.stats);
        let (x_c, m_plane) = conditioning_channels(&input_z, &pair.input);
        let target_z = z_score::<f32>(setup.data.frame(traj, t_out), &setup.stats);
        let x0 = fill_target(&target_z, &pair.target, setup.fill, &x_c, &mut rng);

        let tau = rng.random_range(1..=t_total);
        let eps = draw_noise::<f32>(plane, &mut rng);
        let x_tau = forward_noise(&x0, &eps, setup.schedule.alpha_bar(tau));
        let input = crate::denoiser::stack_input(&x_tau, &x_c, &m_plane, n);

        let mut tape = Tape::new();
        let fwd = model.forward(&mut tape, &input, tau, Some(&mut rng as &mut dyn RngCore))?;
        let eps_leaf = tape.leaf(Tensor::new(vec![1, n, n], eps));
        let w_leaf = tape.leaf(loss_weights::<f32>(&pair.input, &pair.target, setup.loss.lambda)?);
        let diff = tape.sub(eps_leaf, fwd.out);
        let sq = tape.mul(diff, diff);
        let weighted = tape.mul(sq, w_leaf);
        let loss_var = tape.sum(weighted);

        let loss_val = tape.value(loss_var).item().to_f64();
        if !loss_val.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite loss at step {step} slot {slot} (seed {}, traj {traj}, frames {t_in}->{t_out}, tau {tau})",
                setup.seed
            )));
        }
        loss_sum += loss_val;

        let mut grads = tape.backward(loss_var);
        let flat = model.flat_grad(&mut grads, &fwd.param_vars);
        for (a, g) in grad_acc.iter_mut().zip(&flat) {
            *a += *g as f64;
        }
    }

    let inv_b = 1.0 / setup.optim.batch_size as f64;
    for g in grad_acc.iter_mut() {
        *g *= inv_b;
    }
    let grad_norm = clip_global_norm(&mut grad_acc, setup.optim.grad_clip);
    let lr = cosine_lr(&setup.optim, step);
    opt.step(model.params_mut(), &grad_acc, lr, setup.optim.weight_decay);

    Ok(StepMetrics { step, loss: loss_sum * inv_b, lr, grad_norm })
}

/// Run steps `start..total_steps`, reporting metrics after each.
pub fn run_training(
    setup: &TrainSetup,
    model: &mut Denoiser<f32>,
    opt: &mut AdamW,
    start_step: u64,
    mut on_step: impl FnMut(&StepMetrics),
) -> Result<()> {
    setup.validate()?;
    for step in start_step..setup.optim.total_steps {
        let metrics = train_step(setup, model, opt, step)?;
        on_step(&metrics);
    }
    Ok(())
}
