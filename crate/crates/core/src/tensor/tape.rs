//! Recorded computation graph with eager forward execution.
//!
//! Each call on [`Tape`] runs its kernel immediately, stores the result, and
//! records the op. [`Tape::backward`] walks the record in reverse to produce
//! gradients for every node. [`Tape::replay`] re-executes the recorded ops
//! from the leaf values; because every kernel has a fixed accumulation order
//! and stochastic ops (dropout) store their drawn masks, a replay reproduces
//! all node values bitwise.

use super::ops;
use super::{Scalar, Tensor};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
pub enum Op<S> {
    /// Input or parameter; its value is not derived from other nodes.
    Leaf,
    /// Same-size conv, odd square kernel `[co, ci, k, k]`, zero padding k/2.
    Conv2d { x: Var, w: Var },
    /// Add a `[c]` vector to every pixel of the matching channel.
    BiasAdd { x: Var, b: Var },
    /// Scale every pixel of channel c by `s[c]` (affine part of group norm).
    ChannelScale { x: Var, s: Var },
    /// w `[out, in]` times x `[in]` plus b `[out]`.
    Linear { x: Var, w: Var, b: Var },
    /// Normalize each of `groups` contiguous channel blocks to zero mean,
    /// unit variance. Stats from the forward pass are saved for backward.
    GroupNorm {
        x: Var,
        groups: usize,
        saved: Vec<(f64, f64)>,
    },
    Silu { x: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    ScalarMul { x: Var, c: S },
    /// Nearest-neighbor 2x upsampling of a `[c, h, w]` map.
    Upsample2x { x: Var },
    /// 2x2 average pooling of a `[c, h, w]` map; h and w must be even.
    Downsample2x { x: Var },
    /// Stack two `[_, h, w]` maps along the channel axis.
    ConcatChannels { a: Var, b: Var },
    /// Inverted dropout; the keep mask drawn at record time is stored so
    /// replay and backward see the same mask. `scale = 1 / (1 - p)`.
    Dropout { x: Var, keep: Vec<bool>, scale: S },
    /// Full reduction to a scalar.
    Sum { x: Var },
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op<S> {
        &self.nodes[v.0].op
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn conv2d(&mut self, x: Var, w: Var) -> Var {
        let value = eval_conv2d(self.value(x), self.value(w));
        self.push(Op::Conv2d { x, w }, value)
    }

    pub fn bias_add(&mut self, x: Var, b: Var) -> Var {
        let value = eval_bias_add(self.value(x), self.value(b));
        self.push(Op::BiasAdd { x, b }, value)
    }

    pub fn channel_scale(&mut self, x: Var, s: Var) -> Var {
        let value = eval_channel_scale(self.value(x), self.value(s));
        self.push(Op::ChannelScale { x, s }, value)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let value = eval_linear(self.value(x), self.value(w), self.value(b));
        self.push(Op::Linear { x, w, b }, value)
    }

    pub fn group_norm(&mut self, x: Var, groups: usize) -> Var {
        let (value, saved) = eval_group_norm(self.value(x), groups);
        self.push(Op::GroupNorm { x, groups, saved }, value)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * ops::sigmoid(v));
        self.push(Op::Silu { x }, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = eval_zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add { a, b }, value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = eval_zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub { a, b }, value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = eval_zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul { a, b }, value)
    }

    pub fn scalar_mul(&mut self, x: Var, c: S) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.push(Op::ScalarMul { x, c }, value)
    }

    pub fn upsample2x(&mut self, x: Var) -> Var {
        let value = eval_upsample2x(self.value(x));
        self.push(Op::Upsample2x { x }, value)
    }

    pub fn downsample2x(&mut self, x: Var) -> Var {
        let value = eval_downsample2x(self.value(x));
        self.push(Op::Downsample2x { x }, value)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let value = eval_concat(self.value(a), self.value(b));
        self.push(Op::ConcatChannels { a, b }, value)
    }

    /// Dropout with probability `p`, drawing the keep mask from `draw`.
    /// `draw` is called once per element in order.
    pub fn dropout(&mut self, x: Var, p: f64, mut draw: impl FnMut() -> f64) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0, 1)");
        let keep: Vec<bool> = (0..self.value(x).numel()).map(|_| draw() >= p).collect();
        let scale = S::from_f64(1.0 / (1.0 - p));
        let value = eval_dropout(self.value(x), &keep, scale);
        self.push(Op::Dropout { x, keep, scale }, value)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = S::ZERO;
        for &v in &self.value(x).data {
            acc += v;
        }
        self.push(Op::Sum { x }, Tensor::scalar(acc))
    }

    /// Gradients of scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Grads<S> {
        assert_eq!(
            self.value(loss).numel(),
            1,
            "backward requires a scalar loss node"
        );
        let mut g: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss.0] = Some(Tensor::scalar(S::ONE));

        // Each node's gradient is taken out of its slot when processed, so
        // intermediate gradients are freed as the sweep moves down the tape.
        // Leaf gradients are put back: they are the result.
        for i in (0..=loss.0).rev() {
            let Some(gout) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {
                    g[i] = Some(gout);
                    continue;
                }
                Op::Conv2d { x, w } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (ci, h, wd) = xv.chw();
                    let (co, k) = (wv.shape[0], wv.shape[2]);
                    let gx = acc_slot(&mut g, *x, &xv.shape);
                    ops::conv2d_bwd_input(&gout.data, (ci, h, wd), &wv.data, (co, k), &mut gx.data);
                    let gw = acc_slot(&mut g, *w, &wv.shape);
                    ops::conv2d_bwd_weight(&xv.data, (ci, h, wd), &gout.data, (co, k), &mut gw.data);
                }
                Op::BiasAdd { x, b } => {
                    let (c, h, w) = self.value(*x).chw();
                    let gx = acc_slot(&mut g, *x, &[c, h, w]);
                    for (d, s) in gx.data.iter_mut().zip(&gout.data) {
                        *d += *s;
                    }
                    let gb = acc_slot(&mut g, *b, &[c]);
                    for ch in 0..c {
                        let mut acc = S::ZERO;
                        for &v in &gout.data[ch * h * w..(ch + 1) * h * w] {
                            acc += v;
                        }
                        gb.data[ch] += acc;
                    }
                }
                Op::ChannelScale { x, s } => {
                    let xv = self.value(*x).clone();
                    let sv = self.value(*s).clone();
                    let (c, h, w) = xv.chw();
                    let gx = acc_slot(&mut g, *x, &xv.shape);
                    for ch in 0..c {
                        let sc = sv.data[ch];
                        for (d, gv) in gx.data[ch * h * w..(ch + 1) * h * w]
                            .iter_mut()
                            .zip(&gout.data[ch * h * w..(ch + 1) * h * w])
                        {
                            *d = sc.mul_add(*gv, *d);
                        }
                    }
                    let gs = acc_slot(&mut g, *s, &[c]);
                    for ch in 0..c {
                        let mut acc = S::ZERO;
                        for (gv, xvv) in gout.data[ch * h * w..(ch + 1) * h * w]
                            .iter()
                            .zip(&xv.data[ch * h * w..(ch + 1) * h * w])
                        {
                            acc = gv.mul_add(*xvv, acc);
                        }
                        gs.data[ch] += acc;
                    }
                }
                Op::Linear { x, w, b } => {
                    let xv = self.value(*x).clone();
                    let wv = self.value(*w).clone();
                    let (on, inn) = (wv.shape[0], wv.shape[1]);
                    let gx = acc_slot(&mut g, *x, &xv.shape);
                    for o in 0..on {
                        let go = gout.data[o];
                        let row = &wv.data[o * inn..(o + 1) * inn];
                        for (d, wv) in gx.data.iter_mut().zip(row) {
                            *d = go.mul_add(*wv, *d);
                        }
                    }
                    let gw = acc_slot(&mut g, *w, &wv.shape);
                    for o in 0..on {
                        let go = gout.data[o];
                        for (d, xvv) in gw.data[o * inn..(o + 1) * inn].iter_mut().zip(&xv.data) {
                            *d = go.mul_add(*xvv, *d);
                        }
                    }
                    let gb = acc_slot(&mut g, *b, &[on]);
                    for (d, s) in gb.data.iter_mut().zip(&gout.data) {
                        *d += *s;
                    }
                }
                Op::GroupNorm { x, groups, saved } => {
                    let xv = self.value(*x).clone();
                    let m = xv.numel() / groups;
                    let gx = acc_slot(&mut g, *x, &xv.shape);
                    for gi in 0..*groups {
                        let (mean, inv_std) = saved[gi];
                        let rng = gi * m..(gi + 1) * m;
                        let xs = &xv.data[rng.clone()];
                        let gs = &gout.data[rng.clone()];
                        // d/dx of (x - mean) * inv_std with mean, var functions
                        // of x: inv_std * (g - mean(g) - xhat * mean(g * xhat))
                        let mut sum_g = 0.0f64;
                        let mut sum_gx = 0.0f64;
                        for (gv, xvv) in gs.iter().zip(xs) {
                            let xh = (xvv.to_f64() - mean) * inv_std;
                            sum_g += gv.to_f64();
                            sum_gx += gv.to_f64() * xh;
                        }
                        let mg = sum_g / m as f64;
                        let mgx = sum_gx / m as f64;
                        for ((d, gv), xvv) in gx.data[rng].iter_mut().zip(gs).zip(xs) {
                            let xh = (xvv.to_f64() - mean) * inv_std;
                            let val = inv_std * (gv.to_f64() - mg - xh * mgx);
                            *d += S::from_f64(val);
                        }
                    }
                }
                Op::Silu { x } => {
                    let xv = self.value(*x).clone();
                    let gx = acc_slot(&mut g, *x, &xv.shape);
                    for ((d, gv), xvv) in gx.data.iter_mut().zip(&gout.data).zip(&xv.data) {
                        let s = ops::sigmoid(*xvv);
                        let dsilu = s * (S::ONE + *xvv * (S::ONE - s));
                        *d = gv.mul_add(dsilu, *d);
                    }
                }
                Op::Add { a, b } => {
                    for v in [a, b] {
                        let shape = self.value(*v).shape.clone();
                        let gv = acc_slot(&mut g, *v, &shape);
                        for (d, s) in gv.data.iter_mut().zip(&gout.data) {
                            *d += *s;
                        }
                    }
                }
                Op::Sub { a, b } => {
                    let sa = self.value(*a).shape.clone();
                    let ga = acc_slot(&mut g, *a, &sa);
                    for (d, s) in ga.data.iter_mut().zip(&gout.data) {
                        *d += *s;
                    }
                    let sb = self.value(*b).shape.clone();
                    let gb = acc_slot(&mut g, *b, &sb);
                    for (d, s) in gb.data.iter_mut().zip(&gout.data) {
                        *d += -*s;
                    }
                }
                Op::Mul { a, b } => {
                    let av = self.value(*a).clone();
                    let bv = self.value(*b).clone();
                    let ga = acc_slot(&mut g, *a, &av.shape);
                    for ((d, gv), bvv) in ga.data.iter_mut().zip(&gout.data).zip(&bv.data) {
                        *d = gv.mul_add(*bvv, *d);
                    }
                    let gb = acc_slot(&mut g, *b, &bv.shape);
                    for ((d, gv), avv) in gb.data.iter_mut().zip(&gout.data).zip(&av.data) {
                        *d = gv.mul_add(*avv, *d);
                    }
                }
                Op::ScalarMul { x, c } => {
                    let shape = self.value(*x).shape.clone();
                    let c = *c;
                    let gx = acc_slot(&mut g, *x, &shape);
                    for (d, s) in gx.data.iter_mut().zip(&gout.data) {
                        *d = c.mul_add(*s, *d);
                    }
                }
                Op::Upsample2x { x } => {
                    let (c, h, w) = self.value(*x).chw();
                    let gx = acc_slot(&mut g, *x, &[c, h, w]);
                    let (h2, w2) = (2 * h, 2 * w);
                    for ch in 0..c {
                        for y in 0..h {
                            for xx in 0..w {
                                let mut acc = S::ZERO;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        acc += gout.data
                                            [ch * h2 * w2 + (2 * y + dy) * w2 + 2 * xx + dx];
                                    }
                                }
                                gx.data[ch * h * w + y * w + xx] += acc;
                            }
                        }
                    }
                }
                Op::Downsample2x { x } => {
                    let (c, h, w) = self.value(*x).chw();
                    let quarter = S::from_f64(0.25);
                    let gx = acc_slot(&mut g, *x, &[c, h, w]);
                    let (ho, wo) = (h / 2, w / 2);
                    for ch in 0..c {
                        for y in 0..ho {
                            for xx in 0..wo {
                                let gv = gout.data[ch * ho * wo + y * wo + xx] * quarter;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        gx.data[ch * h * w + (2 * y + dy) * w + 2 * xx + dx] += gv;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::ConcatChannels { a, b } => {
                    let na = self.value(*a).numel();
                    let sa = self.value(*a).shape.clone();
                    let ga = acc_slot(&mut g, *a, &sa);
                    for (d, s) in ga.data.iter_mut().zip(&gout.data[..na]) {
                        *d += *s;
                    }
                    let sb = self.value(*b).shape.clone();
                    let gb = acc_slot(&mut g, *b, &sb);
                    for (d, s) in gb.data.iter_mut().zip(&gout.data[na..]) {
                        *d += *s;
                    }
                }
                Op::Dropout { x, keep, scale } => {
                    let shape = self.value(*x).shape.clone();
                    let scale = *scale;
                    let gx = acc_slot(&mut g, *x, &shape);
                    for ((d, s), kept) in gx.data.iter_mut().zip(&gout.data).zip(keep) {
                        if *kept {
                            *d = scale.mul_add(*s, *d);
                        }
                    }
                }
                Op::Sum { x } => {
                    let shape = self.value(*x).shape.clone();
                    let go = gout.item();
                    let gx = acc_slot(&mut g, *x, &shape);
                    for d in gx.data.iter_mut() {
                        *d += go;
                    }
                }
            }
        }
        Grads { g }
    }

    /// Re-execute every recorded op from the leaf values and return the
    /// recomputed node values. Stochastic state (dropout masks, group norm
    /// stats) is taken from the record, so values match the originals
    /// bitwise.
    pub fn replay(&self) -> Vec<Tensor<S>> {
        let mut vals: Vec<Tensor<S>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::Conv2d { x, w } => eval_conv2d(&vals[x.0], &vals[w.0]),
                Op::BiasAdd { x, b } => eval_bias_add(&vals[x.0], &vals[b.0]),
                Op::ChannelScale { x, s } => eval_channel_scale(&vals[x.0], &vals[s.0]),
                Op::Linear { x, w, b } => eval_linear(&vals[x.0], &vals[w.0], &vals[b.0]),
                Op::GroupNorm { x, groups, .. } => eval_group_norm(&vals[x.0], *groups).0,
                Op::Silu { x } => vals[x.0].map(|v| v * ops::sigmoid(v)),
                Op::Add { a, b } => eval_zip(&vals[a.0], &vals[b.0], |x, y| x + y),
                Op::Sub { a, b } => eval_zip(&vals[a.0], &vals[b.0], |x, y| x - y),
                Op::Mul { a, b } => eval_zip(&vals[a.0], &vals[b.0], |x, y| x * y),
                Op::ScalarMul { x, c } => vals[x.0].map(|v| v * *c),
                Op::Upsample2x { x } => eval_upsample2x(&vals[x.0]),
                Op::Downsample2x { x } => eval_downsample2x(&vals[x.0]),
                Op::ConcatChannels { a, b } => eval_concat(&vals[a.0], &vals[b.0]),
                Op::Dropout { x, keep, scale } => eval_dropout(&vals[x.0], keep, *scale),
                Op::Sum { x } => {
                    let mut acc = S::ZERO;
                    for &v in &vals[x.0].data {
                        acc += v;
                    }
                    Tensor::scalar(acc)
                }
            };
            vals.push(v);
        }
        vals
    }
}

/// Gradients indexed by the [`Var`] they belong to. Nodes the loss does not
/// depend on have no entry.
pub struct Grads<S> {
    g: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Grads<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.g.get(v.0).and_then(|o| o.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.g.get_mut(v.0).and_then(|o| o.take())
    }
}

fn acc_slot<'a, S: Scalar>(
    g: &'a mut [Option<Tensor<S>>],
    v: Var,
    shape: &[usize],
) -> &'a mut Tensor<S> {
    if g[v.0].is_none() {
        g[v.0] = Some(Tensor::zeros(shape.to_vec()));
    }
    g[v.0].as_mut().unwrap()
}

fn eval_conv2d<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>) -> Tensor<S> {
    let (ci, h, wd) = x.chw();
    assert_eq!(w.shape.len(), 4, "conv kernel must be [co, ci, k, k]");
    let (co, wci, k, k2) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    assert_eq!(wci, ci, "conv kernel channel mismatch");
    assert_eq!(k, k2, "conv kernel must be square");
    assert_eq!(k % 2, 1, "conv kernel size must be odd");
    let mut out = Tensor::zeros(vec![co, h, wd]);
    ops::conv2d_fwd(&x.data, (ci, h, wd), &w.data, (co, k), &mut out.data);
    out
}

fn eval_bias_add<S: Scalar>(x: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (c, h, w) = x.chw();
    assert_eq!(b.shape[..], [c], "bias length must match channels");
    let mut out = x.clone();
    for ch in 0..c {
        let bv = b.data[ch];
        for v in &mut out.data[ch * h * w..(ch + 1) * h * w] {
            *v += bv;
        }
    }
    out
}

fn eval_channel_scale<S: Scalar>(x: &Tensor<S>, s: &Tensor<S>) -> Tensor<S> {
    let (c, h, w) = x.chw();
    assert_eq!(s.shape[..], [c], "scale length must match channels");
    let mut out = x.clone();
    for ch in 0..c {
        let sv = s.data[ch];
        for v in &mut out.data[ch * h * w..(ch + 1) * h * w] {
            *v = *v * sv;
        }
    }
    out
}

fn eval_linear<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    assert_eq!(w.shape.len(), 2, "linear weight must be [out, in]");
    let (on, inn) = (w.shape[0], w.shape[1]);
    assert_eq!(x.numel(), inn, "linear input length mismatch");
    assert_eq!(b.numel(), on, "linear bias length mismatch");
    let mut out = Tensor::zeros(vec![on]);
    for o in 0..on {
        out.data[o] = b.data[o] + ops::dot(&w.data[o * inn..(o + 1) * inn], &x.data);
    }
    out
}

fn eval_group_norm<S: Scalar>(x: &Tensor<S>, groups: usize) -> (Tensor<S>, Vec<(f64, f64)>) {
    let (c, ..) = x.chw();
    assert!(groups > 0 && c % groups == 0, "groups must divide channels");
    let saved = ops::group_stats(&x.data, groups, GROUP_NORM_EPS);
    let m = x.numel() / groups;
    let mut out = Tensor::zeros(x.shape.clone());
    for g in 0..groups {
        let (mean, inv_std) = saved[g];
        for (o, v) in out.data[g * m..(g + 1) * m]
            .iter_mut()
            .zip(&x.data[g * m..(g + 1) * m])
        {
            *o = S::from_f64((v.to_f64() - mean) * inv_std);
        }
    }
    (out, saved)
}

pub const GROUP_NORM_EPS: f64 = 1e-5;

fn eval_zip<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    assert_eq!(a.shape, b.shape, "elementwise op shape mismatch");
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn eval_upsample2x<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (c, h, w) = x.chw();
    let mut out = Tensor::zeros(vec![c, 2 * h, 2 * w]);
    let (h2, w2) = (2 * h, 2 * w);
    for ch in 0..c {
        for y in 0..h {
            for xx in 0..w {
                let v = x.data[ch * h * w + y * w + xx];
                for dy in 0..2 {
                    for dx in 0..2 {
                        out.data[ch * h2 * w2 + (2 * y + dy) * w2 + 2 * xx + dx] = v;
                    }
                }
            }
        }
    }
    out
}

fn eval_downsample2x<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let (c, h, w) = x.chw();
    assert!(h % 2 == 0 && w % 2 == 0, "downsample needs even h, w");
    let (ho, wo) = (h / 2, w / 2);
    let quarter = S::from_f64(0.25);
    let mut out = Tensor::zeros(vec![c, ho, wo]);
    for ch in 0..c {
        for y in 0..ho {
            for xx in 0..wo {
                let mut acc = S::ZERO;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += x.data[ch * h * w + (2 * y + dy) * w + 2 * xx + dx];
                    }
                }
                out.data[ch * ho * wo + y * wo + xx] = acc * quarter;
            }
        }
    }
    out
}

fn eval_concat<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (ca, ha, wa) = a.chw();
    let (cb, hb, wb) = b.chw();
    assert_eq!((ha, wa), (hb, wb), "concat spatial shape mismatch");
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::new(vec![ca + cb, ha, wa], data)
}

fn eval_dropout<S: Scalar>(x: &Tensor<S>, keep: &[bool], scale: S) -> Tensor<S> {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v * scale } else { S::ZERO })
            .collect(),
    }
}
