//! Acceptance gate: ten end-to-end checks over the whole system, printed as
//! one `criterion N: PASS/FAIL` line each. Tolerances are pinned as constants
//! next to the check that uses them.
//!
//! Criteria 1..7 and 10 are property checks against independent oracles
//! (finite differences, brute-force double loops, closed-form decay) and run
//! in seconds to minutes. Criteria 8 and 9 train the small preset model from
//! scratch and dominate the runtime: expect roughly an hour on one core. Run
//!
//! ```text
//! cargo test -p sfd-cli --test acceptance -- --nocapture
//! ```
//!
//! to watch the per-criterion report as it happens. Criterion 9 is a
//! diagnostic by contract: a rate below its threshold is reported but does
//! not fail the gate.

use rand::Rng;
use sfd_core::config::RunConfig;
use sfd_core::denoiser::{Denoiser, DenoiserConfig};
use sfd_core::diffusion::{ddim_plan, draw_noise, forward_noise, NoiseSchedule};
use sfd_core::eval::{evaluate_model, rollout_spread, EvalReport};
use sfd_core::masks::{
    pixel_budget, sample_block_pair, sample_pair, sample_pair_for_instance, Mask, MaskPair,
    MaskProtocol, MaskRegime, SCENARIOS,
};
use sfd_core::metrics::{crps_mc, masked_mae, spearman};
use sfd_core::rng::{stream_rng, Domain};
use sfd_core::sim::fft::{wavenumbers, C64};
use sfd_core::sim::{generate_dataset, split_frames, Dataset, NsConfig, NsSolver};
use sfd_core::tensor::gradcheck::{central_diff, max_rel_err, FD_FLOOR, FD_STEP};
use sfd_core::tensor::{Tape, Tensor, Var};
use sfd_core::train::{
    conditioning_channels, loss_weights, normalization_pairs, normalize_stats, run_training,
    AdamW, LossConfig, NormStats, TrainSetup,
};
use sfd_core::uq::sample_ensemble;
use std::cell::Cell;
use std::collections::HashSet;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Seed for every random stream drawn inside this gate.
const GATE_SEED: u64 = 2026;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Collects one report line per criterion; the final report prints in
/// numeric order even though the cheap checks run first.
#[derive(Default)]
struct Gate {
    lines: Vec<(usize, String)>,
    failed: Vec<usize>,
}

impl Gate {
    fn run(&mut self, n: usize, name: &str, blocking: bool, f: impl FnOnce() -> Check) {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f));
        let dt = started.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(Ok(detail)) => format!("criterion {n:2}: PASS  {name}: {detail} [{dt:.1}s]"),
            Ok(Err(msg)) => {
                let tag = if blocking { "FAIL" } else { "FAIL (non-blocking diagnostic)" };
                if blocking {
                    self.failed.push(n);
                }
                format!("criterion {n:2}: {tag}  {name}: {msg} [{dt:.1}s]")
            }
            Err(_) => {
                self.failed.push(n);
                format!("criterion {n:2}: FAIL  {name}: panicked [{dt:.1}s]")
            }
        };
        eprintln!("[acceptance] {line}");
        self.lines.push((n, line));
    }

    fn finish(mut self) {
        self.lines.sort_by_key(|(n, _)| *n);
        for (_, line) in &self.lines {
            println!("{line}");
        }
        assert!(self.failed.is_empty(), "criteria failed: {:?}", self.failed);
    }
}

#[test]
fn acceptance_gate() {
    let mut gate = Gate::default();

    gate.run(1, "gradient fidelity", true, criterion_gradients);
    gate.run(2, "masked supervision", true, criterion_masked_supervision);
    gate.run(3, "crps estimator", true, criterion_crps);
    gate.run(4, "forward process moments", true, criterion_forward_moments);
    gate.run(5, "flow solver", true, criterion_solver);
    gate.run(6, "mask protocols", true, criterion_mask_protocols);
    gate.run(7, "sampler determinism", true, criterion_sampler);
    gate.run(10, "provenance closure", true, criterion_provenance);

    // criteria 8 and 9 share one trained model; a failure during training
    // fails both
    match panic::catch_unwind(build_toy_fixture) {
        Ok(Ok(fx)) => {
            gate.run(8, "end-to-end learning", true, || criterion_learning(&fx));
            gate.run(9, "rollout spread growth", false, || criterion_rollout(&fx));
        }
        Ok(Err(msg)) => {
            gate.run(8, "end-to-end learning", true, || Err(msg.clone()));
            gate.run(9, "rollout spread growth", false, || Err(msg));
        }
        Err(_) => {
            gate.run(8, "end-to-end learning", true, || Err("toy fixture panicked".into()));
            gate.run(9, "rollout spread growth", false, || {
                Err("toy fixture panicked".into())
            });
        }
    }

    gate.finish();
}

// ---------------------------------------------------------------------------
// criterion 1: every differentiable primitive and a complete small network
// agree with 64-bit central finite differences

const PRIMITIVE_GRAD_TOL: f64 = 1e-5;
const FULL_NET_GRAD_TOL: f64 = 1e-4;
/// Central differences see only roundoff along directions the network
/// normalizes away (a bias shift feeding a group norm); the floor keeps
/// those flat directions from reporting noise as error.
const FULL_NET_FD_FLOOR: f64 = 1e-4;
const GRADIENT_TIME_LIMIT_S: f64 = 120.0;

/// Max relative error between tape gradients and central differences for
/// one op graph, checked independently for every input tensor.
fn fd_probe_err(
    shapes: &[&[usize]],
    floor: f64,
    build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> f64 {
    let mut rng = stream_rng(GATE_SEED, Domain::Test, 100);
    let inputs: Vec<Tensor<f64>> = shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            Tensor::new(
                s.to_vec(),
                (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            )
        })
        .collect();

    // pseudo-random output weighting makes the scalar probe sensitive to
    // every output element
    let loss_of = |tape: &mut Tape<f64>, vars: &[Var]| -> Var {
        let out = build(tape, vars);
        let (shape, numel) = {
            let t = tape.value(out);
            (t.shape.clone(), t.numel())
        };
        let w = Tensor::new(
            shape,
            (0..numel).map(|i| (0.31 + 0.73 * i as f64).sin()).collect(),
        );
        let wv = tape.leaf(w);
        let m = tape.mul(out, wv);
        tape.sum(m)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = loss_of(&mut tape, &vars);
    let mut grads = tape.backward(loss);

    let mut worst = 0.0f64;
    for (i, inp) in inputs.iter().enumerate() {
        let analytic = grads.take(vars[i]).expect("leaf gradient").data;
        let mut f = |x: &[f64]| -> f64 {
            let mut t2 = Tape::new();
            let vars2: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    if j == i {
                        t2.leaf(Tensor::new(t.shape.clone(), x.to_vec()))
                    } else {
                        t2.leaf(t.clone())
                    }
                })
                .collect();
            let l = loss_of(&mut t2, &vars2);
            t2.value(l).item()
        };
        let numeric = central_diff(&mut f, &inp.data, FD_STEP);
        worst = worst.max(max_rel_err(&analytic, &numeric, floor));
    }
    worst
}

fn criterion_gradients() -> Check {
    let started = Instant::now();

    let mut urng = stream_rng(GATE_SEED, Domain::Test, 101);
    let uniforms: Vec<f64> = (0..256).map(|_| urng.random()).collect();

    type OpBuild = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;
    let ops: Vec<(&str, Vec<&[usize]>, OpBuild)> = vec![
        (
            "conv2d",
            vec![&[2, 5, 5], &[3, 2, 3, 3]],
            Box::new(|t, v| t.conv2d(v[0], v[1])),
        ),
        (
            "bias_add",
            vec![&[3, 4, 4], &[3]],
            Box::new(|t, v| t.bias_add(v[0], v[1])),
        ),
        (
            "channel_scale",
            vec![&[3, 4, 4], &[3]],
            Box::new(|t, v| t.channel_scale(v[0], v[1])),
        ),
        (
            "linear",
            vec![&[6], &[4, 6], &[4]],
            Box::new(|t, v| t.linear(v[0], v[1], v[2])),
        ),
        (
            "group_norm",
            vec![&[4, 3, 3]],
            Box::new(|t, v| t.group_norm(v[0], 2)),
        ),
        ("silu", vec![&[2, 4, 4]], Box::new(|t, v| t.silu(v[0]))),
        (
            "add",
            vec![&[2, 3, 3], &[2, 3, 3]],
            Box::new(|t, v| t.add(v[0], v[1])),
        ),
        (
            "sub",
            vec![&[2, 3, 3], &[2, 3, 3]],
            Box::new(|t, v| t.sub(v[0], v[1])),
        ),
        (
            "mul",
            vec![&[2, 3, 3], &[2, 3, 3]],
            Box::new(|t, v| t.mul(v[0], v[1])),
        ),
        (
            "scalar_mul",
            vec![&[2, 3, 3]],
            Box::new(|t, v| t.scalar_mul(v[0], 0.73)),
        ),
        (
            "upsample2x",
            vec![&[2, 3, 3]],
            Box::new(|t, v| t.upsample2x(v[0])),
        ),
        (
            "downsample2x",
            vec![&[2, 4, 4]],
            Box::new(|t, v| t.downsample2x(v[0])),
        ),
        (
            "concat_channels",
            vec![&[2, 3, 3], &[3, 3, 3]],
            Box::new(|t, v| t.concat_channels(v[0], v[1])),
        ),
        (
            "dropout",
            vec![&[2, 4, 4]],
            Box::new(move |t, v| {
                // replayed uniform draws keep the mask identical across
                // the analytic and every finite-difference evaluation
                let ctr = Cell::new(0usize);
                let us = uniforms.clone();
                t.dropout(v[0], 0.3, move || {
                    let i = ctr.get();
                    ctr.set(i + 1);
                    us[i % us.len()]
                })
            }),
        ),
        ("sum", vec![&[2, 3, 3]], Box::new(|t, v| t.sum(v[0]))),
    ];

    let mut worst_primitive = 0.0f64;
    let mut worst_name = "";
    for (name, shapes, build) in &ops {
        let err = fd_probe_err(shapes, FD_FLOOR, build);
        if err > worst_primitive {
            worst_primitive = err;
            worst_name = name;
        }
        ensure!(
            err < PRIMITIVE_GRAD_TOL,
            "{name} gradient: max rel err {err:.3e} >= {PRIMITIVE_GRAD_TOL:.0e}"
        );
    }

    // complete network: every layer type composed, all parameters checked
    let cfg = DenoiserConfig {
        base_dim: 4,
        dim_mults: vec![1, 2],
        res_blocks_per_stage: 1,
        dropout: 0.0,
    };
    let d0 = Denoiser::<f64>::init_random_final(cfg, GATE_SEED).map_err(|e| e.to_string())?;
    let n_params = d0.n_params();
    let mut xrng = stream_rng(GATE_SEED, Domain::Test, 102);
    let x = Tensor::new(vec![3, 8, 8], draw_noise::<f64>(3 * 64, &mut xrng));
    let probe = draw_noise::<f64>(64, &mut xrng);

    let mut tape = Tape::new();
    let fwd = d0.forward(&mut tape, &x, 250, None).map_err(|e| e.to_string())?;
    let pv = tape.leaf(Tensor::new(vec![1, 8, 8], probe.clone()));
    let weighted = tape.mul(fwd.out, pv);
    let loss = tape.sum(weighted);
    let mut grads = tape.backward(loss);
    let analytic = d0.flat_grad(&mut grads, &fwd.param_vars);

    let mut f = |p: &[f64]| -> f64 {
        let mut d = d0.clone();
        d.set_params(p);
        let out = d.predict(&x, 250).expect("validated input");
        out.data.iter().zip(&probe).map(|(o, w)| o * w).sum()
    };
    let numeric = central_diff(&mut f, d0.params(), 1e-5);
    let net_err = max_rel_err(&analytic, &numeric, FULL_NET_FD_FLOOR);
    ensure!(
        net_err < FULL_NET_GRAD_TOL,
        "full network: max rel err {net_err:.3e} >= {FULL_NET_GRAD_TOL:.0e}"
    );

    let dt = started.elapsed().as_secs_f64();
    ensure!(
        dt < GRADIENT_TIME_LIMIT_S,
        "took {dt:.1}s, limit {GRADIENT_TIME_LIMIT_S}s"
    );
    Ok(format!(
        "{} primitives worst {worst_primitive:.2e} ({worst_name}), full net ({n_params} params) {net_err:.2e}",
        ops.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 2: supervision never touches pixels outside the target mask,
// and overlap pixels carry exactly the configured extra weight

const OVERLAP_RATIO_REL_TOL_F64: f64 = 1e-14;
const OVERLAP_RATIO_REL_TOL_F32: f64 = 1e-6;

/// Gradient of the training objective with respect to the prediction,
/// through the same tape graph the optimizer uses.
fn loss_grad_wrt_prediction<S: sfd_core::tensor::Scalar>(
    n: usize,
    eps: &[S],
    eps_hat: &[S],
    m_i: &Mask,
    m_o: &Mask,
    lambda: f64,
) -> Result<Vec<S>, String> {
    let mut tape = Tape::new();
    let eps_leaf = tape.leaf(Tensor::new(vec![1, n, n], eps.to_vec()));
    let pred_leaf = tape.leaf(Tensor::new(vec![1, n, n], eps_hat.to_vec()));
    let w_leaf = tape.leaf(loss_weights::<S>(m_i, m_o, lambda).map_err(|e| e.to_string())?);
    let diff = tape.sub(eps_leaf, pred_leaf);
    let sq = tape.mul(diff, diff);
    let weighted = tape.mul(sq, w_leaf);
    let loss = tape.sum(weighted);
    let mut grads = tape.backward(loss);
    Ok(grads.take(pred_leaf).expect("prediction gradient").data)
}

fn criterion_masked_supervision() -> Check {
    let n = 4;
    let lambda = LossConfig::default().lambda;
    // pixel 1: target only, pixel 2: overlap, pixel 3: input only, the
    // rest unobserved
    let m_o = Mask::from_indices(n, &[1, 2]);
    let m_i = Mask::from_indices(n, &[2, 3]);

    let mut eps = vec![0.0f64; n * n];
    let mut eps_hat = vec![0.0f64; n * n];
    // equal residuals at the overlap and target-only pixels so the
    // gradient ratio isolates the weighting
    eps_hat[1] = 0.8;
    eps_hat[2] = 0.8;
    eps_hat[3] = 0.5;
    eps[0] = -0.3;

    let g64 = loss_grad_wrt_prediction(n, &eps, &eps_hat, &m_i, &m_o, lambda)?;
    for p in 0..n * n {
        if !m_o.contains(p) {
            ensure!(
                g64[p] == 0.0,
                "f64 gradient at unsupervised pixel {p} is {:.3e}, not exactly zero",
                g64[p]
            );
        }
    }
    let ratio64 = g64[2] / g64[1];
    let rel64 = (ratio64 / (1.0 + lambda) - 1.0).abs();
    ensure!(
        rel64 < OVERLAP_RATIO_REL_TOL_F64,
        "f64 overlap/target gradient ratio {ratio64:.17} deviates from {} by {rel64:.2e}",
        1.0 + lambda
    );

    let eps32: Vec<f32> = eps.iter().map(|&v| v as f32).collect();
    let eps_hat32: Vec<f32> = eps_hat.iter().map(|&v| v as f32).collect();
    let g32 = loss_grad_wrt_prediction(n, &eps32, &eps_hat32, &m_i, &m_o, lambda)?;
    for p in 0..n * n {
        if !m_o.contains(p) {
            ensure!(
                g32[p] == 0.0,
                "f32 gradient at unsupervised pixel {p} is {:.3e}, not exactly zero",
                g32[p]
            );
        }
    }
    let ratio32 = (g32[2] / g32[1]) as f64;
    let rel32 = (ratio32 / (1.0 + lambda) - 1.0).abs();
    ensure!(
        rel32 < OVERLAP_RATIO_REL_TOL_F32,
        "f32 overlap/target gradient ratio {ratio32:.9} deviates from {} by {rel32:.2e}",
        1.0 + lambda
    );

    Ok(format!(
        "off-target gradients identically zero; overlap ratio {ratio64:.15} vs {} (f64 dev {rel64:.1e}, f32 dev {rel32:.1e})",
        1.0 + lambda
    ))
}

// ---------------------------------------------------------------------------
// criterion 3: the ensemble score matches a brute-force oracle, collapses
// to the masked MAE at one member, and nails the hand-checked case

const CRPS_ORACLE_TOL: f64 = 1e-12;
const CRPS_INSTANCES: usize = 1000;
const CRPS_TIME_LIMIT_S: f64 = 30.0;

/// Brute-force score: full K x K pair enumeration with the double-counting
/// factor, the opposite loop structure from the library's distinct-pair sum.
fn crps_oracle(members: &[Vec<f32>], target: &[f32], region: &Mask) -> f64 {
    let k = members.len();
    let mut total = 0.0f64;
    for p in region.indices() {
        let t = target[p] as f64;
        let mut acc = 0.0f64;
        for m in members {
            acc += (m[p] as f64 - t).abs();
        }
        acc /= k as f64;
        if k > 1 {
            let mut disp = 0.0f64;
            for a in members {
                for b in members {
                    disp += (a[p] as f64 - b[p] as f64).abs();
                }
            }
            acc -= disp / (2.0 * (k * (k - 1)) as f64);
        }
        total += acc;
    }
    total / region.count() as f64
}

fn criterion_crps() -> Check {
    let started = Instant::now();
    let mut rng = stream_rng(GATE_SEED, Domain::Test, 110);
    let mut max_dev = 0.0f64;
    let mut singles = 0usize;

    for i in 0..CRPS_INSTANCES {
        let n = rng.random_range(2..=5usize);
        let k = rng.random_range(1..=6usize);
        let target: Vec<f32> = (0..n * n).map(|_| rng.random::<f32>() * 4.0 - 2.0).collect();
        let members: Vec<Vec<f32>> = (0..k)
            .map(|_| (0..n * n).map(|_| rng.random::<f32>() * 4.0 - 2.0).collect())
            .collect();
        let mut idx: Vec<usize> = (0..n * n).filter(|_| rng.random_bool(0.6)).collect();
        if idx.is_empty() {
            idx.push(rng.random_range(0..n * n));
        }
        let region = Mask::from_indices(n, &idx);

        let got = crps_mc(&members, &target, &region).map_err(|e| e.to_string())?;
        let want = crps_oracle(&members, &target, &region);
        let dev = (got - want).abs();
        max_dev = max_dev.max(dev);
        ensure!(
            dev <= CRPS_ORACLE_TOL,
            "instance {i} (n {n}, k {k}): estimator {got:.15e} vs oracle {want:.15e}, dev {dev:.3e}"
        );

        if k == 1 {
            singles += 1;
            let mae = masked_mae(&members[0], &target, &region).map_err(|e| e.to_string())?;
            ensure!(
                got.to_bits() == mae.to_bits(),
                "instance {i}: single-member score {got:.17} is not bitwise the masked MAE {mae:.17}"
            );
        }
    }

    // members {0, 2} against target 1: spread exactly cancels the error
    let members = vec![vec![0.0f32; 4], vec![2.0f32; 4]];
    let target = vec![1.0f32; 4];
    let region = Mask::from_indices(2, &[0]);
    let hand = crps_mc(&members, &target, &region).map_err(|e| e.to_string())?;
    ensure!(hand == 0.0, "hand case {{0,2}} vs 1 scored {hand:.3e}, want exactly 0");

    let dt = started.elapsed().as_secs_f64();
    ensure!(dt < CRPS_TIME_LIMIT_S, "took {dt:.1}s, limit {CRPS_TIME_LIMIT_S}s");
    Ok(format!(
        "{CRPS_INSTANCES} random instances within {CRPS_ORACLE_TOL:.0e} (max dev {max_dev:.2e}); {singles} single-member cases bitwise MAE; hand case exact"
    ))
}

// ---------------------------------------------------------------------------
// criterion 4: corrupted fields have the predicted per-pixel mean and
// variance at shallow, middle, and terminal noise levels

const MOMENT_DRAWS: usize = 10_000;
const MOMENT_Z_LIMIT: f64 = 5.0;
const MOMENT_TAUS: [usize; 3] = [10, 500, 1000];

fn criterion_forward_moments() -> Check {
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(GATE_SEED, Domain::Test, 120);
    let px = 64usize;
    let x0: Vec<f64> = draw_noise::<f64>(px, &mut rng).iter().map(|v| 1.3 * v).collect();

    let mut detail = Vec::new();
    for tau in MOMENT_TAUS {
        let abar = schedule.alpha_bar(tau);
        let mut sum = vec![0.0f64; px];
        let mut sumsq = vec![0.0f64; px];
        for _ in 0..MOMENT_DRAWS {
            let eps = draw_noise::<f64>(px, &mut rng);
            let x = forward_noise(&x0, &eps, abar);
            for p in 0..px {
                sum[p] += x[p];
                sumsq[p] += x[p] * x[p];
            }
        }
        let nf = MOMENT_DRAWS as f64;
        let var_true = 1.0 - abar;
        // standard errors of the sample mean and (Gaussian) sample variance
        let se_mean = var_true.sqrt() / nf.sqrt();
        let se_var = var_true * (2.0 / (nf - 1.0)).sqrt();
        let mut worst_mean_z = 0.0f64;
        let mut worst_var_z = 0.0f64;
        for p in 0..px {
            let mean = sum[p] / nf;
            let var = (sumsq[p] - nf * mean * mean) / (nf - 1.0);
            let mean_z = (mean - abar.sqrt() * x0[p]).abs() / se_mean;
            let var_z = (var - var_true).abs() / se_var;
            worst_mean_z = worst_mean_z.max(mean_z);
            worst_var_z = worst_var_z.max(var_z);
        }
        ensure!(
            worst_mean_z < MOMENT_Z_LIMIT,
            "tau {tau}: worst mean z {worst_mean_z:.2} >= {MOMENT_Z_LIMIT}"
        );
        ensure!(
            worst_var_z < MOMENT_Z_LIMIT,
            "tau {tau}: worst variance z {worst_var_z:.2} >= {MOMENT_Z_LIMIT}"
        );
        detail.push(format!("tau {tau} z({worst_mean_z:.1},{worst_var_z:.1})"));
    }
    Ok(format!(
        "{MOMENT_DRAWS} draws, worst mean/var z-scores under {MOMENT_Z_LIMIT}: {}",
        detail.join(", ")
    ))
}

// ---------------------------------------------------------------------------
// criterion 5: the flow solver decays a single vorticity mode at the exact
// viscous rate, keeps velocity divergence at machine level, and converges
// under time-step refinement

const DECAY_REL_TOL: f64 = 1e-4;
const DIVERGENCE_LIMIT: f64 = 1e-12;
const REFINEMENT_MIN_FACTOR: f64 = 2.0;
const SOLVER_TIME_LIMIT_S: f64 = 60.0;

fn criterion_solver() -> Check {
    let started = Instant::now();
    let n = 32usize;
    let nu = 0.01;
    let dt = 1e-3;
    let tau = 2.0 * std::f64::consts::PI;
    let x1 = |idx: usize| tau * (idx / n) as f64 / n as f64;

    // omega = sin(x1) is a single spectral mode with |k|^2 = 1: the
    // advection term vanishes identically and omega(t) = sin(x1) e^(-nu t)
    let solver = NsSolver::new(NsConfig {
        n,
        nu,
        dt,
        forcing_amplitude: 0.0,
        forcing_wavenumber: 1,
    })
    .map_err(|e| e.to_string())?;
    let omega0: Vec<f64> = (0..n * n).map(|i| x1(i).sin()).collect();
    let steps = (1.0 / dt).round() as usize;
    let frames = solver.run(&omega0, steps, steps).map_err(|e| e.to_string())?;
    let evolved = &frames[0];
    let decay = (-nu * 1.0).exp();
    let mut max_err = 0.0f64;
    for (idx, w) in evolved.iter().enumerate() {
        max_err = max_err.max((w - x1(idx).sin() * decay).abs());
    }
    let rel = max_err / decay;
    ensure!(
        rel < DECAY_REL_TOL,
        "viscous decay relative error {rel:.3e} >= {DECAY_REL_TOL:.0e} at t=1"
    );

    // velocity divergence of the evolved state, evaluated in physical
    // space so the bound is independent of transform scaling
    let omega_hat = solver.fft().fft2_real(evolved);
    let (u1h, u2h) = solver.velocity_hat(&omega_hat);
    let k = wavenumbers(n);
    let mut div_hat = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let idx = i * n + j;
            div_hat[idx] = C64::new(0.0, k[i]) * u1h[idx] + C64::new(0.0, k[j]) * u2h[idx];
        }
    }
    let div = solver.fft().ifft2_real(&div_hat);
    let max_div = div.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    ensure!(
        max_div < DIVERGENCE_LIMIT,
        "max velocity divergence {max_div:.3e} >= {DIVERGENCE_LIMIT:.0e}"
    );

    // halving dt on the forced nonlinear problem must cut the error against
    // a small-dt reference by the refinement factor (second-order stepping
    // gives about 4x)
    let fft = sfd_core::sim::Fft2::new(n);
    let mut grng = stream_rng(GATE_SEED, Domain::Test, 130);
    let grf0 = sfd_core::sim::sample_grf(n, sfd_core::sim::GrfParams::default(), &fft, &mut grng);
    let t_end = 0.2;
    let run_with = |dt: f64| -> Result<Vec<f64>, String> {
        let s = NsSolver::new(NsConfig {
            n,
            nu,
            dt,
            ..NsConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let steps = (t_end / dt).round() as usize;
        Ok(s.run(&grf0, steps, steps).map_err(|e| e.to_string())?.remove(0))
    };
    let reference = run_with(2.5e-4)?;
    let max_abs_err = |sol: &[f64]| -> f64 {
        sol.iter()
            .zip(&reference)
            .fold(0.0f64, |a, (s, r)| a.max((s - r).abs()))
    };
    let coarse = max_abs_err(&run_with(1e-3)?);
    let fine = max_abs_err(&run_with(5e-4)?);
    let factor = coarse / fine;
    ensure!(
        factor >= REFINEMENT_MIN_FACTOR,
        "halving dt improved the error only {factor:.2}x (coarse {coarse:.3e}, fine {fine:.3e})"
    );

    let dt_s = started.elapsed().as_secs_f64();
    ensure!(dt_s < SOLVER_TIME_LIMIT_S, "took {dt_s:.1}s, limit {SOLVER_TIME_LIMIT_S}s");
    Ok(format!(
        "decay rel err {rel:.2e}, max divergence {max_div:.2e}, dt refinement {factor:.1}x"
    ))
}

// ---------------------------------------------------------------------------
// criterion 6: sensor budgets are exact on the reference grid and the
// sharing regimes behave as declared

const REGIME_DRAWS: usize = 100;
const RANDOM_BUDGETS_64: [usize; 3] = [163, 409, 1638];
const BLOCK_PIXELS_64: [usize; 3] = [128, 384, 1664];
const BLOCK_TARGET_COUNTS: [usize; 3] = [1, 3, 13];

fn criterion_mask_protocols() -> Check {
    let n = 64usize;
    let mut rng = stream_rng(GATE_SEED, Domain::Test, 140);

    for (scenario, want) in SCENARIOS.iter().zip(RANDOM_BUDGETS_64) {
        let budget = pixel_budget(scenario.density, n);
        ensure!(
            budget == want,
            "{}: density {} budget {budget}, want {want}",
            scenario.name,
            scenario.density
        );
        // no overlap: the two masks partition the drawn sensors
        let pair = sample_pair(
            MaskProtocol::Random {
                density: scenario.density,
                overlap_fraction: 0.0,
            },
            n,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let total = pair.input.count() + pair.target.count();
        ensure!(
            total == want && pair.input.overlap_count(&pair.target) == 0,
            "{}: disjoint split covers {total} pixels, want {want}",
            scenario.name
        );
        // half shared: the union still spends exactly the budget
        let pair = sample_pair(
            MaskProtocol::Random {
                density: scenario.density,
                overlap_fraction: 0.5,
            },
            n,
            &mut rng,
        )
        .map_err(|e| e.to_string())?;
        let union = pair.input.union(&pair.target).count();
        ensure!(
            union == want,
            "{}: shared-draw union {union}, want {want}",
            scenario.name
        );
    }

    for ((scenario, want_px), want_blocks) in
        SCENARIOS.iter().zip(BLOCK_PIXELS_64).zip(BLOCK_TARGET_COUNTS)
    {
        let pair =
            sample_block_pair(n, scenario.n_blocks, &mut rng).map_err(|e| e.to_string())?;
        let total = pair.input.count() + pair.target.count();
        ensure!(
            pair.input.overlap_count(&pair.target) == 0,
            "{}: blocks overlap",
            scenario.name
        );
        ensure!(
            total == want_px,
            "{}: {} blocks cover {total} pixels, want {want_px}",
            scenario.name,
            scenario.n_blocks
        );
        let target_blocks = pair.target.count() / 64;
        ensure!(
            target_blocks == want_blocks && pair.target.count() % 64 == 0,
            "{}: target holds {target_blocks} blocks, want {want_blocks}",
            scenario.name
        );
    }

    // shared regime: every instance sees the identical pair
    let protocol = MaskProtocol::Random {
        density: 0.10,
        overlap_fraction: 0.0,
    };
    let key = |p: &MaskPair| (p.input.bits().to_vec(), p.target.bits().to_vec());
    let first = sample_pair_for_instance(protocol, MaskRegime::Global, n, GATE_SEED, 0)
        .map_err(|e| e.to_string())?;
    for id in 1..REGIME_DRAWS as u64 {
        let p = sample_pair_for_instance(protocol, MaskRegime::Global, n, GATE_SEED, id)
            .map_err(|e| e.to_string())?;
        ensure!(key(&p) == key(&first), "shared regime diverged at instance {id}");
    }
    // per-instance regime: all draws distinct
    let mut seen = HashSet::new();
    for id in 0..REGIME_DRAWS as u64 {
        let p = sample_pair_for_instance(protocol, MaskRegime::Instance, n, GATE_SEED, id)
            .map_err(|e| e.to_string())?;
        ensure!(
            seen.insert(key(&p)),
            "per-instance regime repeated a pair at instance {id}"
        );
    }

    Ok(format!(
        "budgets {RANDOM_BUDGETS_64:?}, block pixels {BLOCK_PIXELS_64:?} with {BLOCK_TARGET_COUNTS:?} target blocks, regimes checked over {REGIME_DRAWS} draws"
    ))
}

// ---------------------------------------------------------------------------
// criterion 7: the deterministic sampler is bitwise-reproducible and, with
// an exact noise oracle, recovers the clean field

const ORACLE_RMS_AT_50: f64 = 1e-3;
const ORACLE_RMS_AT_1000: f64 = 1e-6;

fn criterion_sampler() -> Check {
    let schedule = NoiseSchedule::linear(1000, 1e-4, 0.02).map_err(|e| e.to_string())?;
    let plan50 = ddim_plan(1000, 50).map_err(|e| e.to_string())?;

    // bitwise reproducibility through the full conditional path in the
    // production dtype
    let n = 16usize;
    let model = Denoiser::<f32>::init_random_final(
        DenoiserConfig {
            base_dim: 8,
            dim_mults: vec![1, 2],
            res_blocks_per_stage: 1,
            dropout: 0.1,
        },
        GATE_SEED,
    )
    .map_err(|e| e.to_string())?;
    let mut mrng = stream_rng(GATE_SEED, Domain::Test, 160);
    let pair = sample_pair(
        MaskProtocol::Random {
            density: 0.2,
            overlap_fraction: 0.3,
        },
        n,
        &mut mrng,
    )
    .map_err(|e| e.to_string())?;
    let field: Vec<f32> = draw_noise::<f32>(n * n, &mut mrng);
    let (x_c, _) = conditioning_channels::<f32>(&field, &pair.input);
    let draw = || {
        sample_ensemble(&model, &x_c, &pair.input, &schedule, &plan50, 2, 77, 3, None)
            .map_err(|e| e.to_string())
    };
    let a = draw()?;
    let b = draw()?;
    for (ma, mb) in a.iter().zip(&b) {
        let bits = |m: &[f32]| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        ensure!(bits(ma) == bits(mb), "repeated sampling with a fixed seed changed bits");
    }

    // noise oracle: feeding back the exact noise consistent with a known
    // clean field must reproduce that field from pure noise
    let px = 24 * 24;
    let mut orng = stream_rng(GATE_SEED, Domain::Test, 161);
    let x0 = draw_noise::<f64>(px, &mut orng);
    let eps = draw_noise::<f64>(px, &mut orng);
    let x_init = forward_noise(&x0, &eps, schedule.alpha_bar(1000));
    let rms_at = |steps: usize| -> Result<f64, String> {
        let plan = ddim_plan(1000, steps).map_err(|e| e.to_string())?;
        let out = sfd_core::diffusion::ddim_sample(&schedule, &plan, &x_init, None, |x_tau, t| {
            let ab = schedule.alpha_bar(t);
            let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
            x_tau
                .iter()
                .zip(&x0)
                .map(|(&x, &c)| (x - sa * c) / sn)
                .collect()
        });
        let sq: f64 = out.iter().zip(&x0).map(|(o, c)| (o - c) * (o - c)).sum();
        Ok((sq / px as f64).sqrt())
    };
    let rms50 = rms_at(50)?;
    let rms1000 = rms_at(1000)?;
    ensure!(
        rms50 < ORACLE_RMS_AT_50,
        "oracle recovery RMS {rms50:.3e} >= {ORACLE_RMS_AT_50:.0e} at 50 steps"
    );
    ensure!(
        rms1000 < ORACLE_RMS_AT_1000,
        "oracle recovery RMS {rms1000:.3e} >= {ORACLE_RMS_AT_1000:.0e} at 1000 steps"
    );

    Ok(format!(
        "ensemble redraw bitwise identical; oracle RMS {rms50:.2e} at 50, {rms1000:.2e} at 1000 steps"
    ))
}

// ---------------------------------------------------------------------------
// trained fixture shared by criteria 8 and 9

struct ToyFixture {
    cfg: RunConfig,
    ds: Dataset,
    stats: NormStats,
    trained: Denoiser<f32>,
    trained_report: EvalReport,
    untrained_report: EvalReport,
    train_minutes: f64,
}

/// Simulates the small preset dataset, trains its model from scratch, and
/// scores both the trained and the untrained network on the held-out
/// instances. This is the expensive part of the gate.
fn build_toy_fixture() -> Result<ToyFixture, String> {
    let lib = |e: sfd_core::Error| e.to_string();
    let cfg = RunConfig::toy();
    let s = &cfg.scenario;

    eprintln!("[acceptance] simulating {} trajectories on {}x{}", s.n_traj, s.grid_n, s.grid_n);
    let ds = generate_dataset(
        s.ns_config(),
        s.grf_params(),
        s.n_traj,
        s.n_frames,
        s.snapshot_stride,
        cfg.seed,
    )
    .map_err(lib)?;

    let held_start = s.n_traj - cfg.eval.held_out_traj;
    let trajs: Vec<usize> = (0..held_start).collect();
    let (kept, _) = split_frames(s.n_frames);
    let pairs = normalization_pairs(s.protocol, s.regime, s.grid_n, cfg.seed, &trajs).map_err(lib)?;
    let stats = normalize_stats(&ds, &trajs, &kept, &pairs).map_err(lib)?;
    let schedule = cfg.diffusion.schedule().map_err(lib)?;

    let mut model = Denoiser::init(cfg.net.clone(), cfg.seed).map_err(lib)?;
    let mut opt = AdamW::new(model.n_params());
    let setup = TrainSetup {
        data: &ds,
        trajs: &trajs,
        frames: &kept,
        stats,
        protocol: s.protocol,
        regime: s.regime,
        fill: cfg.optimizer.fill,
        loss: cfg.optimizer.loss(),
        optim: cfg.optimizer.optim(),
        schedule: &schedule,
        seed: cfg.seed,
    };
    let total = cfg.optimizer.total_steps;
    eprintln!(
        "[acceptance] training {} parameters for {total} steps (batch {})",
        model.n_params(),
        cfg.optimizer.batch_size
    );
    let train_started = Instant::now();
    run_training(&setup, &mut model, &mut opt, 0, |m| {
        if (m.step + 1) % 500 == 0 {
            eprintln!(
                "[acceptance] step {}/{total} loss {:.4} [{:.0}s]",
                m.step + 1,
                m.loss,
                train_started.elapsed().as_secs_f64()
            );
        }
    })
    .map_err(lib)?;
    let train_minutes = train_started.elapsed().as_secs_f64() / 60.0;

    eprintln!("[acceptance] scoring the trained model on {} instances", cfg.eval.instances);
    let trained_report = evaluate_model(&model, &ds, &stats, &cfg).map_err(lib)?;
    eprintln!("[acceptance] scoring the untrained reference");
    let untrained = Denoiser::init(cfg.net.clone(), cfg.seed).map_err(lib)?;
    let untrained_report = evaluate_model(&untrained, &ds, &stats, &cfg).map_err(lib)?;

    Ok(ToyFixture {
        cfg,
        ds,
        stats,
        trained: model,
        trained_report,
        untrained_report,
        train_minutes,
    })
}

// criterion 8: training helps, and predicted uncertainty tracks both
// realized error and distance from the sensors

const INSTANCE_SPEARMAN_MIN: f64 = 0.3;

fn criterion_learning(fx: &ToyFixture) -> Check {
    let trained = fx.trained_report.mean_crps;
    let untrained = fx.untrained_report.mean_crps;
    let persistence = fx.trained_report.mean_persistence_crps;
    let n_inst = fx.trained_report.instances.len();
    ensure!(
        n_inst == fx.cfg.eval.instances && fx.trained_report.members == fx.cfg.eval.members,
        "scored {n_inst} instances with {} members, configured {} and {}",
        fx.trained_report.members,
        fx.cfg.eval.instances,
        fx.cfg.eval.members
    );
    ensure!(
        trained < untrained,
        "trained CRPS {trained:.4} not below untrained {untrained:.4}"
    );
    ensure!(
        trained < persistence,
        "trained CRPS {trained:.4} not below persistence {persistence:.4}"
    );

    let rho = fx
        .trained_report
        .calibration
        .per_instance_spearman
        .ok_or("per-instance spread/score correlation undefined")?;
    ensure!(
        rho > INSTANCE_SPEARMAN_MIN,
        "per-instance spread vs score Spearman {rho:.3} <= {INSTANCE_SPEARMAN_MIN}"
    );

    let bins = &fx.trained_report.calibration.distance_bins;
    ensure!(bins.len() >= 3, "only {} distance bins", bins.len());
    let d: Vec<f64> = bins.iter().map(|b| b.mean_distance).collect();
    let sg: Vec<f64> = bins.iter().map(|b| b.mean_sigma).collect();
    let trend = spearman(&d, &sg).ok_or("distance/spread trend undefined")?;
    ensure!(
        trend > 0.0,
        "binned spread is not increasing with sensor distance (Spearman {trend:.3})"
    );

    Ok(format!(
        "CRPS {trained:.4} < persistence {persistence:.4} and untrained {untrained:.3}; instance Spearman {rho:.3}; distance trend {trend:.3} over {} bins ({} instances, K={}, trained in {:.0} min)",
        bins.len(),
        n_inst,
        fx.trained_report.members,
        fx.train_minutes
    ))
}

// criterion 9 (diagnostic): ensemble spread grows along the forecast
// rollout in most held-out cases

const ROLLOUT_CASES: usize = 25;
const ROLLOUT_MEMBERS: usize = 8;
const ROLLOUT_PASS_RATE: f64 = 0.8;

fn criterion_rollout(fx: &ToyFixture) -> Check {
    let horizon = fx.cfg.eval.horizon;
    ensure!(horizon >= 3, "configured horizon {horizon} is too short to compare");
    let diags = rollout_spread(
        &fx.trained,
        &fx.ds,
        &fx.stats,
        &fx.cfg,
        ROLLOUT_CASES,
        ROLLOUT_MEMBERS,
    )
    .map_err(|e| e.to_string())?;
    let grew = diags
        .iter()
        .filter(|d| d.mean_sigma.len() >= 3 && d.mean_sigma[2] > d.mean_sigma[0])
        .count();
    let rate = grew as f64 / diags.len() as f64;
    ensure!(
        rate >= ROLLOUT_PASS_RATE,
        "spread at horizon 3 exceeded horizon 1 in {grew}/{} cases (rate {rate:.2}, want >= {ROLLOUT_PASS_RATE})",
        diags.len()
    );
    Ok(format!(
        "spread grew by horizon 3 in {grew}/{} cases (rate {rate:.2}, K={ROLLOUT_MEMBERS})",
        diags.len()
    ))
}

// ---------------------------------------------------------------------------
// criterion 10: every container-writing command, re-run from the
// configuration recorded in its JSON sidecar, reproduces its container
// bit for bit

fn micro_config() -> RunConfig {
    let mut cfg = RunConfig::toy();
    cfg.seed = 11;
    cfg.scenario.n_traj = 6;
    cfg.scenario.n_frames = 8;
    cfg.scenario.protocol = MaskProtocol::Random {
        density: 0.15,
        overlap_fraction: 0.2,
    };
    cfg.net = DenoiserConfig {
        base_dim: 8,
        dim_mults: vec![1, 2],
        res_blocks_per_stage: 1,
        dropout: 0.1,
    };
    cfg.diffusion.ddim_steps = 10;
    cfg.optimizer.batch_size = 4;
    cfg.optimizer.total_steps = 8;
    cfg.eval.held_out_traj = 2;
    cfg.eval.instances = 4;
    cfg.eval.members = 3;
    cfg.eval.horizon = 2;
    cfg
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_sfd"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning sfd: {e}"))?;
    if !out.status.success() {
        let err = String::from_utf8_lossy(&out.stderr);
        let last = err.lines().last().unwrap_or("no stderr");
        return Err(format!("sfd {} exited {:?}: {last}", args.join(" "), out.status.code()));
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn criterion_provenance() -> Check {
    let base = std::env::temp_dir().join(format!("sfd-acceptance-{}", std::process::id()));
    let result = provenance_round_trips(&base);
    let _ = std::fs::remove_dir_all(&base);
    result
}

fn provenance_round_trips(base: &PathBuf) -> Check {
    std::fs::create_dir_all(base).map_err(|e| e.to_string())?;
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    let cfg_path = base.join("config.json");
    std::fs::write(&cfg_path, micro_config().to_json()).map_err(|e| e.to_string())?;
    let p = |d: &PathBuf, f: &str| d.join(f).to_string_lossy().into_owned();

    // one full pipeline pass into dir a
    let cfg_s = cfg_path.to_string_lossy().into_owned();
    let out_a = dir_a.to_string_lossy().into_owned();
    run_cli(&["simulate", "--config", &cfg_s, "--out", &out_a])?;
    run_cli(&["masks", "--config", &cfg_s, "--out", &out_a])?;
    run_cli(&["train", "--config", &cfg_s, "--out", &out_a, "--log-every", "1000"])?;
    run_cli(&["sample", "--config", &cfg_s, "--out", &out_a, "--instance", "1"])?;
    run_cli(&["rollout", "--config", &cfg_s, "--out", &out_a])?;

    // each sidecar is replayed into dir b: same subcommand and arguments,
    // configuration taken from the sidecar itself
    let artifacts: [(&str, &str); 5] = [
        ("dataset.json", "dataset.sfd"),
        ("masks.json", "masks.sfd"),
        ("model.json", "model.sfck"),
        ("sample_1.json", "sample_1.sfd"),
        ("rollout_members.json", "rollout_members.sfd"),
    ];
    let out_b = dir_b.to_string_lossy().into_owned();
    for (i, (sidecar_name, container_name)) in artifacts.iter().enumerate() {
        let sidecar = read_json(&dir_a.join(sidecar_name))?;
        let command = sidecar["command"]
            .as_str()
            .ok_or_else(|| format!("{sidecar_name}: no command field"))?;
        let recorded = sidecar["checksum"]
            .as_u64()
            .ok_or_else(|| format!("{sidecar_name}: no checksum field"))?;
        let redo_cfg = base.join(format!("redo_{i}.json"));
        std::fs::write(&redo_cfg, serde_json::to_string_pretty(&sidecar["config"]).unwrap())
            .map_err(|e| e.to_string())?;
        let redo_cfg_s = redo_cfg.to_string_lossy().into_owned();

        let mut args: Vec<String> =
            command.split_whitespace().map(|s| s.to_string()).collect();
        args.extend(["--config".into(), redo_cfg_s, "--out".into(), out_b.clone()]);
        let needs_data = matches!(args[0].as_str(), "train" | "sample" | "rollout");
        if needs_data {
            args.extend(["--data".into(), p(&dir_a, "dataset.sfd")]);
        }
        if matches!(args[0].as_str(), "sample" | "rollout") {
            args.extend(["--model".into(), p(&dir_a, "model.sfck")]);
        }
        let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
        run_cli(&arg_refs)?;

        let original = std::fs::read(dir_a.join(container_name)).map_err(|e| e.to_string())?;
        let replayed = std::fs::read(dir_b.join(container_name)).map_err(|e| e.to_string())?;
        ensure!(
            original == replayed,
            "{container_name}: replayed bytes differ from the original ({} vs {} bytes)",
            replayed.len(),
            original.len()
        );
        let replay_side = read_json(&dir_b.join(sidecar_name))?;
        ensure!(
            replay_side["checksum"].as_u64() == Some(recorded),
            "{sidecar_name}: replayed checksum differs from recorded {recorded}"
        );
    }

    Ok(format!(
        "{} commands replayed from their sidecars, all containers bitwise identical",
        artifacts.len()
    ))
}
