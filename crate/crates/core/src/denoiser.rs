//! Conditional noise predictor: a compact UNet over the 3-channel input
//! `[x_tau, x_c, m_i]` with a sinusoidal time embedding.
//!
//! The encoder runs one stage per entry of `dim_mults`, downsampling
//! between stages (average pool then 3x3 conv); the decoder mirrors it
//! with nearest-neighbor upsampling and skip concatenation. Each residual
//! block receives the time embedding additively through a per-block
//! linear projection. The final 3x3 conv is zero-initialized so an
//! untrained model predicts zero noise.
//!
//! Parameters live in one flat vector with named per-layer views, which
//! keeps the optimizer, checkpointing, and finite-difference checks over
//! the whole network straightforward.

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Domain};
use crate::tensor::{Grads, Scalar, Tape, Tensor, Var};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub const IN_CHANNELS: usize = 3;
pub const OUT_CHANNELS: usize = 1;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Channel count after the input conv; stages use base_dim * mult.
    pub base_dim: usize,
    /// Channel multiplier per stage; the last stage is the bottleneck.
    pub dim_mults: Vec<usize>,
    pub res_blocks_per_stage: usize,
    /// Dropout probability inside residual blocks (training only).
    pub dropout: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            base_dim: 64,
            dim_mults: vec![1, 2, 2, 2],
            res_blocks_per_stage: 2,
            dropout: 0.1,
        }
    }
}

impl DenoiserConfig {
    pub fn time_embed_dim(&self) -> usize {
        4 * self.base_dim
    }

    /// Spatial sizes must be divisible by this (one halving per
    /// downsample between stages).
    pub fn spatial_divisor(&self) -> usize {
        1 << (self.dim_mults.len() - 1)
    }

    /// Channel count entering stage s; index 0 is the input conv output.
    fn stage_dims(&self) -> Vec<usize> {
        let mut d = vec![self.base_dim];
        d.extend(self.dim_mults.iter().map(|m| self.base_dim * m));
        d
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_dim < 4 || self.base_dim % 2 != 0 {
            return Err(Error::config("base_dim must be even and at least 4"));
        }
        if self.dim_mults.is_empty() || self.dim_mults.iter().any(|&m| m == 0) {
            return Err(Error::config("dim_mults must be nonempty and positive"));
        }
        if self.res_blocks_per_stage == 0 {
            return Err(Error::config("need at least one residual block per stage"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Stack the three conditioning channels into the model input layout.
pub fn stack_input<S: Scalar>(x_tau: &[S], x_c: &[S], m_plane: &[S], n: usize) -> Tensor<S> {
    assert!(x_tau.len() == n * n && x_c.len() == n * n && m_plane.len() == n * n);
    let mut data = Vec::with_capacity(3 * n * n);
    data.extend_from_slice(x_tau);
    data.extend_from_slice(x_c);
    data.extend_from_slice(m_plane);
    Tensor::new(vec![IN_CHANNELS, n, n], data)
}

/// Largest power-of-two divisor of `c`, capped at 8. Keeps group sizes
/// sensible for both wide production channels and tiny test channels.
fn gn_groups(c: usize) -> usize {
    let mut g = 1;
    while g < 8 && c % (g * 2) == 0 {
        g *= 2;
    }
    g
}

/// Raw sinusoidal features of the diffusion step, before the MLP. Half
/// sine, half cosine, log-spaced frequencies from 1 down to 1e-4.
pub fn time_features<S: Scalar>(tau: usize, dim: usize) -> Vec<S> {
    assert!(dim >= 2 && dim % 2 == 0, "feature dim must be even");
    let half = dim / 2;
    let mut v = vec![S::ZERO; dim];
    for i in 0..half {
        let freq = if half > 1 {
            (-(i as f64) * (1e4f64).ln() / (half - 1) as f64).exp()
        } else {
            1.0
        };
        let a = tau as f64 * freq;
        v[i] = S::from_f64(a.sin());
        v[half + i] = S::from_f64(a.cos());
    }
    v
}

#[derive(Debug, Clone)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

impl ParamEntry {
    fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

struct Registry {
    entries: Vec<ParamEntry>,
    len: usize,
}

impl Registry {
    fn add(&mut self, name: String, shape: Vec<usize>) {
        let offset = self.len;
        self.len += shape.iter().product::<usize>();
        self.entries.push(ParamEntry { name, shape, offset });
    }

    fn res_block(&mut self, prefix: &str, c_in: usize, c_out: usize, temb_dim: usize) {
        self.add(format!("{prefix}.gn1.g"), vec![c_in]);
        self.add(format!("{prefix}.gn1.b"), vec![c_in]);
        self.add(format!("{prefix}.conv1.w"), vec![c_out, c_in, 3, 3]);
        self.add(format!("{prefix}.conv1.b"), vec![c_out]);
        self.add(format!("{prefix}.temb.w"), vec![c_out, temb_dim]);
        self.add(format!("{prefix}.temb.b"), vec![c_out]);
        self.add(format!("{prefix}.gn2.g"), vec![c_out]);
        self.add(format!("{prefix}.gn2.b"), vec![c_out]);
        self.add(format!("{prefix}.conv2.w"), vec![c_out, c_out, 3, 3]);
        self.add(format!("{prefix}.conv2.b"), vec![c_out]);
        if c_in != c_out {
            self.add(format!("{prefix}.skip.w"), vec![c_out, c_in, 1, 1]);
            self.add(format!("{prefix}.skip.b"), vec![c_out]);
        }
    }
}

/// Walk the architecture and name every parameter tensor in the exact
/// order the forward pass consumes them.
fn register(cfg: &DenoiserConfig) -> Registry {
    let mut reg = Registry { entries: Vec::new(), len: 0 };
    let dims = cfg.stage_dims();
    let n_stages = cfg.dim_mults.len();
    let te = cfg.time_embed_dim();

    reg.add("init.w".into(), vec![dims[0], IN_CHANNELS, 3, 3]);
    reg.add("init.b".into(), vec![dims[0]]);
    reg.add("time.l1.w".into(), vec![te, cfg.base_dim]);
    reg.add("time.l1.b".into(), vec![te]);
    reg.add("time.l2.w".into(), vec![te, te]);
    reg.add("time.l2.b".into(), vec![te]);

    for s in 1..=n_stages {
        for r in 0..cfg.res_blocks_per_stage {
            let c_in = if r == 0 { dims[s - 1] } else { dims[s] };
            reg.res_block(&format!("down{s}.block{r}"), c_in, dims[s], te);
        }
        if s < n_stages {
            reg.add(format!("down{s}.down.w"), vec![dims[s], dims[s], 3, 3]);
            reg.add(format!("down{s}.down.b"), vec![dims[s]]);
        }
    }

    let mut cur = dims[n_stages];
    for s in (1..n_stages).rev() {
        reg.add(format!("up{s}.up.w"), vec![cur, cur, 3, 3]);
        reg.add(format!("up{s}.up.b"), vec![cur]);
        for r in 0..cfg.res_blocks_per_stage {
            let c_in = if r == 0 { cur + dims[s] } else { dims[s] };
            reg.res_block(&format!("up{s}.block{r}"), c_in, dims[s], te);
        }
        cur = dims[s];
    }

    reg.add("final.gn.g".into(), vec![dims[1]]);
    reg.add("final.gn.b".into(), vec![dims[1]]);
    reg.add("final.w".into(), vec![OUT_CHANNELS, dims[1], 3, 3]);
    reg.add("final.b".into(), vec![OUT_CHANNELS]);
    reg
}

#[derive(Debug, Clone)]
pub struct Denoiser<S: Scalar> {
    cfg: DenoiserConfig,
    entries: Vec<ParamEntry>,
    data: Vec<S>,
}

/// Handles produced by one forward pass: the prediction, the input leaf,
/// and the parameter leaves in flat-vector order.
pub struct ForwardOut {
    pub out: Var,
    pub input: Var,
    pub param_vars: Vec<Var>,
}

impl<S: Scalar> Denoiser<S> {
    /// Production initialization: He-scaled weights, zero biases, unit
    /// norm scales, and a zeroed final conv so the untrained model
    /// predicts zero noise.
    pub fn init(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        Self::init_impl(cfg, seed, true)
    }

    /// Same as `init` but the final conv is randomly initialized too.
    /// Gradient checks need this: with a zeroed final layer every
    /// upstream gradient is exactly zero and the check is vacuous.
    pub fn init_random_final(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        Self::init_impl(cfg, seed, false)
    }

    fn init_impl(cfg: DenoiserConfig, seed: u64, zero_final: bool) -> Result<Self> {
        cfg.validate()?;
        let reg = register(&cfg);
        let mut data = vec![S::ZERO; reg.len];
        let mut rng = stream_rng(seed, Domain::Init, 0);
        for e in &reg.entries {
            let slot = &mut data[e.offset..e.offset + e.len()];
            let kind = e.name.rsplit('.').next().unwrap();
            match kind {
                // He scaling over fan-in for weight matrices and kernels.
                "w" => {
                    let fan_in: usize = e.shape[1..].iter().product();
                    let std = (2.0 / fan_in as f64).sqrt();
                    for v in slot.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *v = S::from_f64(z * std);
                    }
                    if zero_final && e.name == "final.w" {
                        slot.fill(S::ZERO);
                    }
                }
                "g" => slot.fill(S::ONE),
                "b" => {} // biases start at zero
                other => unreachable!("unknown parameter kind {other}"),
            }
        }
        Ok(Denoiser { cfg, entries: reg.entries, data })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn params(&self) -> &[S] {
        &self.data
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn set_params(&mut self, flat: &[S]) {
        assert_eq!(flat.len(), self.data.len());
        self.data.copy_from_slice(flat);
    }

    /// Build the forward computation on `tape`. `input` is the stacked
    /// `(3, H, W)` conditioning tensor; `drop_rng` enables dropout
    /// (training mode) when present.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        input: &Tensor<S>,
        tau: usize,
        mut drop_rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardOut> {
        let (c, h, w) = input.chw();
        if c != IN_CHANNELS {
            return Err(Error::config(format!("expected {IN_CHANNELS} input channels, got {c}")));
        }
        let div = self.cfg.spatial_divisor();
        if h % div != 0 || w % div != 0 {
            return Err(Error::config(format!(
                "spatial size {h}x{w} must be divisible by {div}"
            )));
        }
        if tau == 0 {
            return Err(Error::config("diffusion step must be at least 1"));
        }

        let dims = self.cfg.stage_dims();
        let n_stages = self.cfg.dim_mults.len();
        let p_drop = self.cfg.dropout;
        let mut cx = Cursor {
            entries: &self.entries,
            data: &self.data,
            tape,
            next: 0,
            vars: Vec::with_capacity(self.entries.len()),
        };

        let input_var = cx.tape.leaf(input.clone());
        let w0 = cx.leaf("init.w");
        let b0 = cx.leaf("init.b");
        let mut x = cx.tape.conv2d(input_var, w0);
        x = cx.tape.bias_add(x, b0);

        let feats = Tensor::new(
            vec![self.cfg.base_dim],
            time_features::<S>(tau, self.cfg.base_dim),
        );
        let fv = cx.tape.leaf(feats);
        let (l1w, l1b) = (cx.leaf("time.l1.w"), cx.leaf("time.l1.b"));
        let (l2w, l2b) = (cx.leaf("time.l2.w"), cx.leaf("time.l2.b"));
        let mut temb = cx.tape.linear(fv, l1w, l1b);
        temb = cx.tape.silu(temb);
        temb = cx.tape.linear(temb, l2w, l2b);

        let mut skips: Vec<Var> = Vec::new();
        for s in 1..=n_stages {
            for r in 0..self.cfg.res_blocks_per_stage {
                let c_in = if r == 0 { dims[s - 1] } else { dims[s] };
                x = res_block(
                    &mut cx,
                    x,
                    temb,
                    &format!("down{s}.block{r}"),
                    c_in,
                    dims[s],
                    p_drop,
                    &mut drop_rng,
                );
            }
            if s < n_stages {
                skips.push(x);
                let dw = cx.leaf(&format!("down{s}.down.w"));
                let db = cx.leaf(&format!("down{s}.down.b"));
                x = cx.tape.downsample2x(x);
                x = cx.tape.conv2d(x, dw);
                x = cx.tape.bias_add(x, db);
            }
        }

        let mut cur = dims[n_stages];
        for s in (1..n_stages).rev() {
            let uw = cx.leaf(&format!("up{s}.up.w"));
            let ub = cx.leaf(&format!("up{s}.up.b"));
            x = cx.tape.upsample2x(x);
            x = cx.tape.conv2d(x, uw);
            x = cx.tape.bias_add(x, ub);
            let skip = skips.pop().expect("one skip per decoder stage");
            x = cx.tape.concat_channels(x, skip);
            for r in 0..self.cfg.res_blocks_per_stage {
                let c_in = if r == 0 { cur + dims[s] } else { dims[s] };
                x = res_block(
                    &mut cx,
                    x,
                    temb,
                    &format!("up{s}.block{r}"),
                    c_in,
                    dims[s],
                    p_drop,
                    &mut drop_rng,
                );
            }
            cur = dims[s];
        }

        let (gg, gb) = (cx.leaf("final.gn.g"), cx.leaf("final.gn.b"));
        x = cx.tape.group_norm(x, gn_groups(dims[1]));
        x = cx.tape.channel_scale(x, gg);
        x = cx.tape.bias_add(x, gb);
        x = cx.tape.silu(x);
        let (fw, fb) = (cx.leaf("final.w"), cx.leaf("final.b"));
        x = cx.tape.conv2d(x, fw);
        x = cx.tape.bias_add(x, fb);

        assert_eq!(cx.next, self.entries.len(), "forward must consume every parameter");
        Ok(ForwardOut { out: x, input: input_var, param_vars: cx.vars })
    }

    /// Evaluation-mode prediction (no dropout, fresh tape).
    pub fn predict(&self, input: &Tensor<S>, tau: usize) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, input, tau, None)?;
        Ok(tape.value(fwd.out).clone())
    }

    /// Collect parameter gradients into flat-vector order. Every
    /// parameter participates in the forward pass, so a missing gradient
    /// is a wiring bug.
    pub fn flat_grad(&self, grads: &mut Grads<S>, param_vars: &[Var]) -> Vec<S> {
        assert_eq!(param_vars.len(), self.entries.len());
        let mut flat = vec![S::ZERO; self.data.len()];
        for (e, &v) in self.entries.iter().zip(param_vars) {
            let g = grads
                .take(v)
                .unwrap_or_else(|| panic!("no gradient for parameter {}", e.name));
            flat[e.offset..e.offset + e.len()].copy_from_slice(&g.data);
        }
        flat
    }
}

struct Cursor<'a, S: Scalar> {
    entries: &'a [ParamEntry],
    data: &'a [S],
    tape: &'a mut Tape<S>,
    next: usize,
    vars: Vec<Var>,
}

impl<S: Scalar> Cursor<'_, S> {
    fn leaf(&mut self, name: &str) -> Var {
        let e = &self.entries[self.next];
        assert_eq!(e.name, name, "parameter order mismatch");
        let t = Tensor::new(e.shape.clone(), self.data[e.offset..e.offset + e.len()].to_vec());
        let v = self.tape.leaf(t);
        self.vars.push(v);
        self.next += 1;
        v
    }
}

/// GroupNorm, SiLU, 3x3 conv, additive time injection, GroupNorm, SiLU,
/// dropout, 3x3 conv, plus a (possibly projected) residual connection.
#[allow(clippy::too_many_arguments)]
fn res_block<S: Scalar>(
    cx: &mut Cursor<'_, S>,
    x: Var,
    temb: Var,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    p_drop: f64,
    drop_rng: &mut Option<&mut dyn RngCore>,
) -> Var {
    let (g1, b1) = (cx.leaf(&format!("{prefix}.gn1.g")), cx.leaf(&format!("{prefix}.gn1.b")));
    let (c1w, c1b) = (cx.leaf(&format!("{prefix}.conv1.w")), cx.leaf(&format!("{prefix}.conv1.b")));
    let (tw, tb) = (cx.leaf(&format!("{prefix}.temb.w")), cx.leaf(&format!("{prefix}.temb.b")));
    let (g2, b2) = (cx.leaf(&format!("{prefix}.gn2.g")), cx.leaf(&format!("{prefix}.gn2.b")));
    let (c2w, c2b) = (cx.leaf(&format!("{prefix}.conv2.w")), cx.leaf(&format!("{prefix}.conv2.b")));
    let proj = if c_in != c_out {
        Some((cx.leaf(&format!("{prefix}.skip.w")), cx.leaf(&format!("{prefix}.skip.b"))))
    } else {
        None
    };

    let mut h = cx.tape.group_norm(x, gn_groups(c_in));
    h = cx.tape.channel_scale(h, g1);
    h = cx.tape.bias_add(h, b1);
    h = cx.tape.silu(h);
    h = cx.tape.conv2d(h, c1w);
    h = cx.tape.bias_add(h, c1b);

    let ts = cx.tape.silu(temb);
    let tproj = cx.tape.linear(ts, tw, tb);
    h = cx.tape.bias_add(h, tproj);

    h = cx.tape.group_norm(h, gn_groups(c_out));
    h = cx.tape.channel_scale(h, g2);
    h = cx.tape.bias_add(h, b2);
    h = cx.tape.silu(h);
    if p_drop > 0.0 {
        if let Some(r) = drop_rng {
            h = cx.tape.dropout(h, p_drop, || r.random::<f64>());
        }
    }
    h = cx.tape.conv2d(h, c2w);
    h = cx.tape.bias_add(h, c2b);

    let s = match proj {
        Some((sw, sb)) => {
            let p = cx.tape.conv2d(x, sw);
            cx.tape.bias_add(p, sb)
        }
        None => x,
    };
    cx.tape.add(h, s)
}
