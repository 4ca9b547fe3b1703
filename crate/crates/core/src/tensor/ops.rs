//! Raw compute kernels behind the tape ops.
//!
//! The conv kernels copy each input plane into a zero-padded scratch plane
//! and then run fixed-width row loops; common (width, kernel) pairs are
//! dispatched to const-generic instantiations so the row loops compile to
//! straight-line vector code. Reductions accumulate into a fixed array of
//! lanes that is summed at the end, which keeps them vectorizable and the
//! summation order deterministic. The accumulation order is fixed for every
//! path, which the tape's bitwise replay guarantee relies on.

use super::Scalar;

/// Zero-pad `src` (h rows of width `W`) by `p` on every side into `dst`.
fn pad_plane<S: Scalar, const W: usize>(src: &[S], h: usize, p: usize, dst: &mut [S]) {
    let wp = W + 2 * p;
    for v in dst.iter_mut() {
        *v = S::ZERO;
    }
    for y in 0..h {
        dst[(y + p) * wp + p..(y + p) * wp + p + W].copy_from_slice(&src[y * W..(y + 1) * W]);
    }
}

fn fwd_impl<S: Scalar, const W: usize, const K: usize>(
    x: &[S],
    ci_n: usize,
    h: usize,
    wgt: &[S],
    co_n: usize,
    out: &mut [S],
) {
    let p = K / 2;
    let wp = W + 2 * p;
    let plane = h * W;
    let pplane = (h + 2 * p) * wp;
    let mut scratch = vec![S::ZERO; ci_n * pplane];
    for ci in 0..ci_n {
        pad_plane::<S, W>(
            &x[ci * plane..(ci + 1) * plane],
            h,
            p,
            &mut scratch[ci * pplane..(ci + 1) * pplane],
        );
    }
    for co in 0..co_n {
        let out_plane = &mut out[co * plane..(co + 1) * plane];
        for ci in 0..ci_n {
            let xp = &scratch[ci * pplane..(ci + 1) * pplane];
            let wk = &wgt[(co * ci_n + ci) * K * K..(co * ci_n + ci + 1) * K * K];
            for y in 0..h {
                let dst = &mut out_plane[y * W..(y + 1) * W];
                let mut acc = [S::ZERO; W];
                acc.copy_from_slice(dst);
                for ky in 0..K {
                    let srow = &xp[(y + ky) * wp..(y + ky) * wp + W + 2 * p];
                    for kx in 0..K {
                        let wv = wk[ky * K + kx];
                        let src = &srow[kx..kx + W];
                        for i in 0..W {
                            acc[i] = wv.mul_add(src[i], acc[i]);
                        }
                    }
                }
                dst.copy_from_slice(&acc);
            }
        }
    }
}

/// Input gradient: forward structure over padded `gout` planes with the
/// kernel spatially flipped and its channel indices transposed.
fn bwd_input_impl<S: Scalar, const W: usize, const K: usize>(
    gout: &[S],
    ci_n: usize,
    h: usize,
    wgt: &[S],
    co_n: usize,
    gx: &mut [S],
) {
    let p = K / 2;
    let wp = W + 2 * p;
    let plane = h * W;
    let pplane = (h + 2 * p) * wp;
    let mut scratch = vec![S::ZERO; co_n * pplane];
    for co in 0..co_n {
        pad_plane::<S, W>(
            &gout[co * plane..(co + 1) * plane],
            h,
            p,
            &mut scratch[co * pplane..(co + 1) * pplane],
        );
    }
    for ci in 0..ci_n {
        let gx_plane = &mut gx[ci * plane..(ci + 1) * plane];
        for co in 0..co_n {
            let gp = &scratch[co * pplane..(co + 1) * pplane];
            let wk = &wgt[(co * ci_n + ci) * K * K..(co * ci_n + ci + 1) * K * K];
            for y in 0..h {
                let dst = &mut gx_plane[y * W..(y + 1) * W];
                let mut acc = [S::ZERO; W];
                acc.copy_from_slice(dst);
                for ky in 0..K {
                    let srow = &gp[(y + ky) * wp..(y + ky) * wp + W + 2 * p];
                    for kx in 0..K {
                        let wv = wk[(K - 1 - ky) * K + (K - 1 - kx)];
                        let src = &srow[kx..kx + W];
                        for i in 0..W {
                            acc[i] = wv.mul_add(src[i], acc[i]);
                        }
                    }
                }
                dst.copy_from_slice(&acc);
            }
        }
    }
}

/// Weight gradient: per-tap correlation of `gout` with the padded input,
/// accumulated in W lanes per row so the row loop vectorizes.
fn bwd_weight_impl<S: Scalar, const W: usize, const K: usize>(
    x: &[S],
    ci_n: usize,
    h: usize,
    gout: &[S],
    co_n: usize,
    gw: &mut [S],
) {
    let p = K / 2;
    let wp = W + 2 * p;
    let plane = h * W;
    let pplane = (h + 2 * p) * wp;
    let mut scratch = vec![S::ZERO; ci_n * pplane];
    for ci in 0..ci_n {
        pad_plane::<S, W>(
            &x[ci * plane..(ci + 1) * plane],
            h,
            p,
            &mut scratch[ci * pplane..(ci + 1) * pplane],
        );
    }
    for co in 0..co_n {
        let g_plane = &gout[co * plane..(co + 1) * plane];
        for ci in 0..ci_n {
            let xp = &scratch[ci * pplane..(ci + 1) * pplane];
            let gwk = &mut gw[(co * ci_n + ci) * K * K..(co * ci_n + ci + 1) * K * K];
            for ky in 0..K {
                for kx in 0..K {
                    let mut lanes = [S::ZERO; W];
                    for y in 0..h {
                        let gr = &g_plane[y * W..(y + 1) * W];
                        let xr = &xp[(y + ky) * wp + kx..(y + ky) * wp + kx + W];
                        for i in 0..W {
                            lanes[i] = gr[i].mul_add(xr[i], lanes[i]);
                        }
                    }
                    let mut acc = S::ZERO;
                    for l in lanes {
                        acc += l;
                    }
                    gwk[ky * K + kx] += acc;
                }
            }
        }
    }
}

macro_rules! dispatch_conv {
    ($w:expr, $k:expr, $f:ident, $fdyn:ident, ($($a:expr),*)) => {
        match ($w, $k) {
            (2, 3) => $f::<S, 2, 3>($($a),*),
            (4, 3) => $f::<S, 4, 3>($($a),*),
            (8, 3) => $f::<S, 8, 3>($($a),*),
            (16, 3) => $f::<S, 16, 3>($($a),*),
            (32, 3) => $f::<S, 32, 3>($($a),*),
            (64, 3) => $f::<S, 64, 3>($($a),*),
            (2, 1) => $f::<S, 2, 1>($($a),*),
            (4, 1) => $f::<S, 4, 1>($($a),*),
            (8, 1) => $f::<S, 8, 1>($($a),*),
            (16, 1) => $f::<S, 16, 1>($($a),*),
            (32, 1) => $f::<S, 32, 1>($($a),*),
            (64, 1) => $f::<S, 64, 1>($($a),*),
            _ => $fdyn($($a,)* $w, $k),
        }
    };
}

/// out[co] += sum_ci conv(x[ci], w[co, ci]) with zero padding `p = k / 2`
/// (same-size output, odd k only).
pub fn conv2d_fwd<S: Scalar>(
    x: &[S],
    (ci_n, h, w): (usize, usize, usize),
    wgt: &[S],
    (co_n, k): (usize, usize),
    out: &mut [S],
) {
    debug_assert_eq!(k % 2, 1);
    debug_assert_eq!(x.len(), ci_n * h * w);
    debug_assert_eq!(wgt.len(), co_n * ci_n * k * k);
    debug_assert_eq!(out.len(), co_n * h * w);
    dispatch_conv!(w, k, fwd_impl, fwd_dyn, (x, ci_n, h, wgt, co_n, out));
}

/// Gradient of `conv2d_fwd` with respect to the input.
pub fn conv2d_bwd_input<S: Scalar>(
    gout: &[S],
    (ci_n, h, w): (usize, usize, usize),
    wgt: &[S],
    (co_n, k): (usize, usize),
    gx: &mut [S],
) {
    dispatch_conv!(
        w,
        k,
        bwd_input_impl,
        bwd_input_dyn,
        (gout, ci_n, h, wgt, co_n, gx)
    );
}

/// Gradient of `conv2d_fwd` with respect to the kernel.
pub fn conv2d_bwd_weight<S: Scalar>(
    x: &[S],
    (ci_n, h, w): (usize, usize, usize),
    gout: &[S],
    (co_n, k): (usize, usize),
    gw: &mut [S],
) {
    dispatch_conv!(
        w,
        k,
        bwd_weight_impl,
        bwd_weight_dyn,
        (x, ci_n, h, gout, co_n, gw)
    );
}

fn fwd_dyn<S: Scalar>(
    x: &[S],
    ci_n: usize,
    h: usize,
    wgt: &[S],
    co_n: usize,
    out: &mut [S],
    w: usize,
    k: usize,
) {
    let p = k / 2;
    for co in 0..co_n {
        let out_plane = &mut out[co * h * w..(co + 1) * h * w];
        for ci in 0..ci_n {
            let x_plane = &x[ci * h * w..(ci + 1) * h * w];
            let wk = &wgt[(co * ci_n + ci) * k * k..(co * ci_n + ci + 1) * k * k];
            for ky in 0..k {
                // y + ky - p must lie in [0, h)
                let y0 = p.saturating_sub(ky);
                let y1 = (h + p - ky).min(h);
                for kx in 0..k {
                    let wv = wk[ky * k + kx];
                    let x0 = p.saturating_sub(kx);
                    let x1 = (w + p - kx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let src = &x_plane[(y + ky - p) * w + x0 + kx - p..];
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = wv.mul_add(*s, *d);
                        }
                    }
                }
            }
        }
    }
}

fn bwd_input_dyn<S: Scalar>(
    gout: &[S],
    ci_n: usize,
    h: usize,
    wgt: &[S],
    co_n: usize,
    gx: &mut [S],
    w: usize,
    k: usize,
) {
    let p = k / 2;
    // gx[ci, y, x] += w[co, ci, ky, kx] * gout[co, y - ky + p, x - kx + p]:
    // the forward structure with the kernel offset negated.
    for co in 0..co_n {
        let g_plane = &gout[co * h * w..(co + 1) * h * w];
        for ci in 0..ci_n {
            let gx_plane = &mut gx[ci * h * w..(ci + 1) * h * w];
            let wk = &wgt[(co * ci_n + ci) * k * k..(co * ci_n + ci + 1) * k * k];
            for ky in 0..k {
                // y - ky + p in [0, h)  =>  y in [ky - p, h + ky - p)
                let y0 = ky.saturating_sub(p);
                let y1 = (h + ky).min(h + p) - p;
                for kx in 0..k {
                    let wv = wk[ky * k + kx];
                    let x0 = kx.saturating_sub(p);
                    let x1 = (w + kx).min(w + p) - p;
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let src = &g_plane[(y + p - ky) * w + x0 + p - kx..];
                        let dst = &mut gx_plane[y * w + x0..y * w + x1];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = wv.mul_add(*s, *d);
                        }
                    }
                }
            }
        }
    }
}

fn bwd_weight_dyn<S: Scalar>(
    x: &[S],
    ci_n: usize,
    h: usize,
    gout: &[S],
    co_n: usize,
    gw: &mut [S],
    w: usize,
    k: usize,
) {
    let p = k / 2;
    for co in 0..co_n {
        let g_plane = &gout[co * h * w..(co + 1) * h * w];
        for ci in 0..ci_n {
            let x_plane = &x[ci * h * w..(ci + 1) * h * w];
            let gwk = &mut gw[(co * ci_n + ci) * k * k..(co * ci_n + ci + 1) * k * k];
            for ky in 0..k {
                let y0 = p.saturating_sub(ky);
                let y1 = (h + p - ky).min(h);
                for kx in 0..k {
                    let x0 = p.saturating_sub(kx);
                    let x1 = (w + p - kx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = S::ZERO;
                    for y in y0..y1 {
                        let xs = &x_plane[(y + ky - p) * w + x0 + kx - p..];
                        let gs = &g_plane[y * w + x0..y * w + x1];
                        for (g, xv) in gs.iter().zip(xs) {
                            acc = g.mul_add(*xv, acc);
                        }
                    }
                    gwk[ky * k + kx] += acc;
                }
            }
        }
    }
}

/// Dot product with 8 accumulator lanes; vectorizable, fixed order.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [S::ZERO; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for i in 0..8 {
            lanes[i] = xa[i].mul_add(xb[i], lanes[i]);
        }
    }
    let mut acc = S::ZERO;
    for l in lanes {
        acc += l;
    }
    for (x, y) in ra.iter().zip(rb) {
        acc = x.mul_add(*y, acc);
    }
    acc
}

/// Per-group mean and 1/sqrt(var + eps) over (c/groups, h, w) blocks.
/// Accumulates in f64 regardless of S so replay and f32/f64 agreement hold.
pub fn group_stats<S: Scalar>(x: &[S], groups: usize, eps: f64) -> Vec<(f64, f64)> {
    let m = x.len() / groups;
    (0..groups)
        .map(|g| {
            let blk = &x[g * m..(g + 1) * m];
            let mean = blk.iter().map(|v| v.to_f64()).sum::<f64>() / m as f64;
            let var = blk
                .iter()
                .map(|v| {
                    let d = v.to_f64() - mean;
                    d * d
                })
                .sum::<f64>()
                / m as f64;
            (mean, 1.0 / (var + eps).sqrt())
        })
        .collect()
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    S::ONE / (S::ONE + (-x).exp())
}
