//! Command implementations. Each returns the JSON status object printed
//! to stdout on success; every binary artifact gets a JSON sidecar with
//! the exact configuration and seed that produced it.

use crate::artifacts::{
    atomic_write, opt_cell, read_bytes, read_text, write_bars_png, write_csv, write_field_png,
    write_json,
};
use crate::{Command, CommonArgs, DataArgs, MasksArgs, ModelDataArgs, RolloutArgs, SampleArgs, TrainArgs};
use serde_json::json;
use sfd_core::config::RunConfig;
use sfd_core::container::{
    container_checksum, decode_checkpoint, decode_dataset, encode_checkpoint, encode_dataset,
    fnv1a64, Checkpoint, MaskRecord, Sidecar,
};
use sfd_core::denoiser::Denoiser;
use sfd_core::eval::{
    build_instances, check_dataset, evaluate_model, rollout_case, rollout_members, rollout_spread,
    EvalInstance,
};
use sfd_core::masks::{MaskProtocol, MaskRegime};
use sfd_core::metrics::{crps_mc, masked_mae, masked_mse, preinterp_nn, preinterp_rbf};
use sfd_core::sim::{generate_dataset, split_frames, Dataset};
use sfd_core::train::{
    conditioning_channels, normalization_pairs, normalize_stats, run_training, un_z_score, z_score,
    AdamW, NormStats, TrainSetup,
};
use sfd_core::uq::{sample_ensemble, uncertainty_map, UncertaintyMap};
use sfd_core::{Error, Result};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn dispatch(cmd: Command) -> Result<serde_json::Value> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Masks(a) => masks(a),
        Command::Train(a) => train(a),
        Command::Sample(a) => sample(a),
        Command::Rollout(a) => rollout(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Baseline(a) => baseline(a),
    }
}

fn load_config(c: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_json(&read_text(path)?)?,
        None => RunConfig::preset(&c.preset)?,
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_path(explicit: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join(name))
}

fn load_dataset(path: &Path) -> Result<(Dataset, u64)> {
    let bytes = read_bytes(path)?;
    let checksum = container_checksum(&bytes)?;
    let (ds, _) = decode_dataset(&bytes)?;
    Ok((ds, checksum))
}

/// Restores a model plus its training-time normalization; the stored
/// architecture is authoritative for the weights.
fn load_model(path: &Path) -> Result<(Denoiser<f32>, NormStats, RunConfig, u64)> {
    let bytes = read_bytes(path)?;
    let checksum = fnv1a64(&bytes);
    let ckpt = decode_checkpoint(&bytes)?;
    let meta = |key: &str| {
        ckpt.meta
            .get(key)
            .cloned()
            .ok_or_else(|| Error::data(format!("checkpoint meta lacks {key:?}")))
    };
    let cfg: RunConfig = serde_json::from_value(meta("config")?)
        .map_err(|e| Error::data(format!("checkpoint config: {e}")))?;
    let norm: NormStats = serde_json::from_value(meta("norm")?)
        .map_err(|e| Error::data(format!("checkpoint norm stats: {e}")))?;
    let mut model = Denoiser::init(cfg.net.clone(), cfg.seed)?;
    if ckpt.params.len() != model.n_params() {
        return Err(Error::data(format!(
            "checkpoint has {} parameters, the architecture needs {}",
            ckpt.params.len(),
            model.n_params()
        )));
    }
    model.set_params(&ckpt.params);
    Ok((model, norm, cfg, checksum))
}

fn status(command: &str, artifacts: &[&Path], extra: serde_json::Value) -> serde_json::Value {
    let mut obj = json!({
        "status": "ok",
        "command": command,
        "artifacts": artifacts.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    if let (Some(dst), Some(src)) = (obj.as_object_mut(), extra.as_object()) {
        for (k, v) in src {
            dst.insert(k.clone(), v.clone());
        }
    }
    obj
}

/// Consumed-artifact digests for report provenance blocks.
fn inputs_map(entries: &[(&Path, u64)]) -> serde_json::Value {
    let mut map = serde_json::Map::new();
    for (path, checksum) in entries {
        map.insert(
            path.display().to_string(),
            json!(format!("{checksum:#018x}")),
        );
    }
    serde_json::Value::Object(map)
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn simulate(common: CommonArgs) -> Result<serde_json::Value> {
    let cfg = load_config(&common)?;
    let s = &cfg.scenario;
    eprintln!(
        "simulating {} trajectories of {} frames on a {}x{} grid",
        s.n_traj, s.n_frames, s.grid_n, s.grid_n
    );
    let started = Instant::now();
    let ds = generate_dataset(
        s.ns_config(),
        s.grf_params(),
        s.n_traj,
        s.n_frames,
        s.snapshot_stride,
        cfg.seed,
    )?;
    eprintln!("simulation done in {:.1}s", started.elapsed().as_secs_f64());
    let bytes = encode_dataset(&ds, &[])?;
    let checksum = container_checksum(&bytes)?;
    let data_path = common.out.join("dataset.sfd");
    atomic_write(&data_path, &bytes)?;
    let side_path = common.out.join("dataset.json");
    write_json(
        &side_path,
        &Sidecar {
            command: "simulate".into(),
            config: config_value(&cfg),
            seed: cfg.seed,
            checksum,
            norm: None,
            deviations: vec![],
        },
    )?;
    Ok(status(
        "simulate",
        &[&data_path, &side_path],
        json!({"checksum": format!("{checksum:#018x}")}),
    ))
}

fn masks(args: MasksArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(&args.common)?;
    let mut protocol = cfg.scenario.protocol;
    if let Some(p) = args.pattern.as_deref() {
        protocol = match p {
            "random" => MaskProtocol::Random {
                density: 0.10,
                overlap_fraction: 0.0,
            },
            "blocks" => MaskProtocol::Blocks { n_blocks: 6 },
            other => return Err(Error::config(format!("unknown pattern {other:?}"))),
        };
    }
    if let Some(d) = args.density {
        match &mut protocol {
            MaskProtocol::Random { density, .. } => *density = d,
            _ => return Err(Error::config("--density applies to the random pattern")),
        }
    }
    if let Some(o) = args.overlap {
        match &mut protocol {
            MaskProtocol::Random {
                overlap_fraction, ..
            } => *overlap_fraction = o,
            _ => return Err(Error::config("--overlap applies to the random pattern")),
        }
    }
    if let Some(b) = args.blocks {
        match &mut protocol {
            MaskProtocol::Blocks { n_blocks } => *n_blocks = b,
            _ => return Err(Error::config("--blocks applies to the blocks pattern")),
        }
    }
    cfg.scenario.protocol = protocol;
    if let Some(r) = args.regime.as_deref() {
        cfg.scenario.regime = match r {
            "global" => MaskRegime::Global,
            "instance" => MaskRegime::Instance,
            other => return Err(Error::config(format!("unknown regime {other:?}"))),
        };
    }
    if let Some(c) = args.count {
        cfg.eval.instances = c;
    }
    cfg.validate()?;

    let n = cfg.scenario.grid_n;
    let records: Vec<MaskRecord> = (0..cfg.eval.instances)
        .map(|id| {
            sfd_core::masks::sample_pair_for_instance(
                cfg.scenario.protocol,
                cfg.scenario.regime,
                n,
                cfg.seed,
                id as u64,
            )
            .map(|pair| MaskRecord {
                instance_id: id as u32,
                pair,
            })
        })
        .collect::<Result<_>>()?;
    let holder = Dataset::new(0, 0, n, n, Vec::new())?;
    let bytes = encode_dataset(&holder, &records)?;
    let checksum = container_checksum(&bytes)?;
    let mask_path = args.common.out.join("masks.sfd");
    atomic_write(&mask_path, &bytes)?;
    let side_path = args.common.out.join("masks.json");
    write_json(
        &side_path,
        &Sidecar {
            command: "masks".into(),
            config: config_value(&cfg),
            seed: cfg.seed,
            checksum,
            norm: None,
            deviations: vec![],
        },
    )?;
    let first = &records[0].pair;
    Ok(status(
        "masks",
        &[&mask_path, &side_path],
        json!({
            "pairs": records.len(),
            "input_pixels": first.input.count(),
            "target_pixels": first.target.count(),
            "overlap_pixels": first.input.overlap_count(&first.target),
            "checksum": format!("{checksum:#018x}"),
        }),
    ))
}

fn train(args: TrainArgs) -> Result<serde_json::Value> {
    let cfg = load_config(&args.common)?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, data_checksum) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    let held_start = cfg.scenario.n_traj - cfg.eval.held_out_traj;
    let trajs: Vec<usize> = (0..held_start).collect();
    let (kept, _) = split_frames(cfg.scenario.n_frames);
    let pairs = normalization_pairs(
        cfg.scenario.protocol,
        cfg.scenario.regime,
        cfg.scenario.grid_n,
        cfg.seed,
        &trajs,
    )?;
    let stats = normalize_stats(&ds, &trajs, &kept, &pairs)?;
    let schedule = cfg.diffusion.schedule()?;

    let (mut model, start_step) = match &args.resume {
        Some(path) => {
            let (model, _, ckpt_cfg, _) = load_model(path)?;
            if ckpt_cfg.net != cfg.net {
                return Err(Error::config(
                    "checkpoint architecture differs from the configured net",
                ));
            }
            let ckpt = decode_checkpoint(&read_bytes(path)?)?;
            (model, ckpt.step)
        }
        None => (Denoiser::init(cfg.net.clone(), cfg.seed)?, 0),
    };
    if start_step > cfg.optimizer.total_steps {
        return Err(Error::config(format!(
            "checkpoint is at step {start_step}, beyond total_steps {}",
            cfg.optimizer.total_steps
        )));
    }
    let mut opt = AdamW::new(model.n_params());
    let setup = TrainSetup {
        data: &ds,
        trajs: &trajs,
        frames: &kept,
        stats,
        protocol: cfg.scenario.protocol,
        regime: cfg.scenario.regime,
        fill: cfg.optimizer.fill,
        loss: cfg.optimizer.loss(),
        optim: cfg.optimizer.optim(),
        schedule: &schedule,
        seed: cfg.seed,
    };

    let log_path = args.common.out.join("train_log.jsonl");
    if let Some(dir) = log_path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::data(format!("{}: {e}", dir.display())))?;
    }
    let log_file = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(args.resume.is_some())
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::data(format!("{}: {e}", log_path.display())))?;
    let mut log = std::io::BufWriter::new(log_file);

    let total = cfg.optimizer.total_steps;
    eprintln!(
        "training {} parameters for steps {start_step}..{total} (batch {})",
        model.n_params(),
        cfg.optimizer.batch_size
    );
    let started = Instant::now();
    let mut last_loss = f64::NAN;
    run_training(&setup, &mut model, &mut opt, start_step, |m| {
        if serde_json::to_writer(&mut log, m).is_ok() {
            let _ = log.write_all(b"\n");
        }
        last_loss = m.loss;
        if (m.step + 1) % args.log_every == 0 || m.step + 1 == total {
            eprintln!(
                "step {}/{} loss {:.5} lr {:.3e} grad {:.3} [{:.0}s]",
                m.step + 1,
                total,
                m.loss,
                m.lr,
                m.grad_norm,
                started.elapsed().as_secs_f64()
            );
        }
    })?;
    log.flush()
        .map_err(|e| Error::data(format!("{}: {e}", log_path.display())))?;

    let ckpt = Checkpoint {
        step: total,
        meta: json!({"config": cfg, "norm": stats, "dataset_checksum": data_checksum}),
        params: model.params().to_vec(),
    };
    let bytes = encode_checkpoint(&ckpt)?;
    let checksum = fnv1a64(&bytes);
    let model_path = args.common.out.join("model.sfck");
    atomic_write(&model_path, &bytes)?;
    let side_path = args.common.out.join("model.json");
    write_json(
        &side_path,
        &Sidecar {
            command: "train".into(),
            config: config_value(&cfg),
            seed: cfg.seed,
            checksum,
            norm: Some(stats),
            deviations: vec!["denoiser has no attention layers".into()],
        },
    )?;
    Ok(status(
        "train",
        &[&model_path, &side_path, &log_path],
        json!({
            "steps": total,
            "final_loss": last_loss,
            "normalization": {"mean": stats.mean, "std": stats.std},
            "checksum": format!("{checksum:#018x}"),
        }),
    ))
}

/// Ensemble, spread map, and error map for one evaluation instance,
/// reusing the exact noise streams the scoring path uses.
fn instance_maps(
    model: &Denoiser<f32>,
    ds: &Dataset,
    stats: &NormStats,
    cfg: &RunConfig,
    inst: &EvalInstance,
) -> Result<(Vec<Vec<f32>>, UncertaintyMap, Vec<f32>)> {
    let schedule = cfg.diffusion.schedule()?;
    let plan = cfg.diffusion.plan()?;
    let cond_z = z_score::<f32>(ds.frame(inst.traj, inst.cond_frame), stats);
    let (x_c, _) = conditioning_channels(&cond_z, &inst.pair.input);
    let members_z = sample_ensemble(
        model,
        &x_c,
        &inst.pair.input,
        &schedule,
        &plan,
        cfg.eval.members,
        cfg.seed,
        inst.instance_id,
        cfg.diffusion.clamp,
    )?;
    let members: Vec<Vec<f32>> = members_z
        .iter()
        .map(|m| un_z_score::<f32>(m, stats))
        .collect();
    let map = uncertainty_map(&members)?;
    let truth = ds.frame(inst.traj, inst.target_frame);
    let abs_err = map
        .mean
        .iter()
        .zip(truth)
        .map(|(&m, &t)| (m - t).abs())
        .collect();
    Ok((members, map, abs_err))
}

fn sample(args: SampleArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(&args.common)?;
    let model_path = default_path(&args.model, &args.common.out, "model.sfck");
    let (model, stats, ckpt_cfg, _) = load_model(&model_path)?;
    cfg.net = ckpt_cfg.net;
    if let Some(k) = args.members {
        cfg.eval.members = k;
    }
    cfg.validate()?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, _) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    let instances = build_instances(&cfg)?;
    let inst = instances
        .iter()
        .find(|i| i.instance_id == args.instance)
        .ok_or_else(|| {
            Error::config(format!(
                "instance {} not in 0..{}",
                args.instance,
                instances.len()
            ))
        })?;
    let (members, map, _) = instance_maps(&model, &ds, &stats, &cfg, inst)?;

    let n = cfg.scenario.grid_n;
    let flat: Vec<f32> = members.iter().flatten().copied().collect();
    let holder = Dataset::new(members.len(), 1, n, n, flat)?;
    let record = MaskRecord {
        instance_id: inst.instance_id as u32,
        pair: inst.pair.clone(),
    };
    let bytes = encode_dataset(&holder, &[record])?;
    let checksum = container_checksum(&bytes)?;
    let base = format!("sample_{}", inst.instance_id);
    let ens_path = args.common.out.join(format!("{base}.sfd"));
    atomic_write(&ens_path, &bytes)?;
    let side_path = args.common.out.join(format!("{base}.json"));
    write_json(
        &side_path,
        &Sidecar {
            command: format!("sample --instance {}", inst.instance_id),
            config: config_value(&cfg),
            seed: cfg.seed,
            checksum,
            norm: Some(stats),
            deviations: vec![],
        },
    )?;
    let mean_path = args.common.out.join(format!("{base}_mean.png"));
    write_field_png(&mean_path, &map.mean, n, n)?;
    let sigma_path = args.common.out.join(format!("{base}_sigma.png"));
    write_field_png(&sigma_path, &map.sigma, n, n)?;
    Ok(status(
        "sample",
        &[&ens_path, &side_path, &mean_path, &sigma_path],
        json!({
            "instance": inst.instance_id,
            "task": inst.task,
            "members": members.len(),
            "checksum": format!("{checksum:#018x}"),
        }),
    ))
}

fn rollout(args: RolloutArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(&args.common)?;
    let model_path = default_path(&args.model, &args.common.out, "model.sfck");
    let (model, stats, ckpt_cfg, model_checksum) = load_model(&model_path)?;
    cfg.net = ckpt_cfg.net;
    if let Some(k) = args.members {
        cfg.eval.members = k;
    }
    cfg.validate()?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, data_checksum) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    let k = cfg.eval.members;
    eprintln!(
        "rolling out {} cases, {} members, horizon {}",
        args.cases, k, cfg.eval.horizon
    );
    let diags = rollout_spread(&model, &ds, &stats, &cfg, args.cases, k)?;
    let grew = diags
        .iter()
        .filter(|d| {
            d.mean_sigma
                .last()
                .zip(d.mean_sigma.first())
                .is_some_and(|(last, first)| last > first)
        })
        .count();

    let report_path = args.common.out.join("rollout.json");
    write_json(
        &report_path,
        &json!({
            "command": "rollout",
            "seed": cfg.seed,
            "config": cfg,
            "inputs": inputs_map(&[
                (&data_path, data_checksum),
                (&model_path, model_checksum),
            ]),
            "spread_grew": grew,
            "cases": diags.len(),
            "report": diags,
        }),
    )?;
    let mut header: Vec<String> = ["instance_id", "traj", "start_frame"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for h in 1..=cfg.eval.horizon {
        header.push(format!("sigma_h{h}"));
    }
    let rows: Vec<Vec<String>> = diags
        .iter()
        .map(|d| {
            let mut row = vec![
                d.instance_id.to_string(),
                d.traj.to_string(),
                d.start_frame.to_string(),
            ];
            row.extend(d.mean_sigma.iter().map(|s| s.to_string()));
            row
        })
        .collect();
    let csv_path = args.common.out.join("rollout.csv");
    write_csv(
        &csv_path,
        &header.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        &rows,
    )?;

    // deep dive on case 0: member fields per horizon plus spread maps
    let case = rollout_case(&cfg, 0)?;
    let horizons = rollout_members(&model, &ds, &stats, &cfg, &case, k)?;
    let n = cfg.scenario.grid_n;
    let mut flat = Vec::with_capacity(k * horizons.len() * n * n);
    for member in 0..k {
        for members_at_h in &horizons {
            flat.extend_from_slice(&members_at_h[member]);
        }
    }
    let holder = Dataset::new(k, horizons.len(), n, n, flat)?;
    let record = MaskRecord {
        instance_id: case.instance_id as u32,
        pair: case.pair.clone(),
    };
    let bytes = encode_dataset(&holder, &[record])?;
    let checksum = container_checksum(&bytes)?;
    let members_path = args.common.out.join("rollout_members.sfd");
    atomic_write(&members_path, &bytes)?;
    let members_side = args.common.out.join("rollout_members.json");
    write_json(
        &members_side,
        &Sidecar {
            command: "rollout".into(),
            config: config_value(&cfg),
            seed: cfg.seed,
            checksum,
            norm: Some(stats),
            deviations: vec![],
        },
    )?;
    let mut artifacts = vec![report_path.clone(), csv_path, members_path, members_side];
    for (i, members_at_h) in horizons.iter().enumerate() {
        let map = uncertainty_map(members_at_h)?;
        let p = args.common.out.join(format!("rollout_sigma_h{}.png", i + 1));
        write_field_png(&p, &map.sigma, n, n)?;
        artifacts.push(p);
    }
    let refs: Vec<&Path> = artifacts.iter().map(|p| p.as_path()).collect();
    Ok(status(
        "rollout",
        &refs,
        json!({
            "cases": diags.len(),
            "spread_grew": grew,
            "horizon": cfg.eval.horizon,
        }),
    ))
}

fn evaluate(args: ModelDataArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(&args.common)?;
    let model_path = default_path(&args.model, &args.common.out, "model.sfck");
    let (model, stats, ckpt_cfg, model_checksum) = load_model(&model_path)?;
    cfg.net = ckpt_cfg.net;
    cfg.validate()?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, data_checksum) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    eprintln!(
        "evaluating {} instances with {} members each",
        cfg.eval.instances, cfg.eval.members
    );
    let started = Instant::now();
    let report = evaluate_model(&model, &ds, &stats, &cfg)?;
    eprintln!("evaluation done in {:.1}s", started.elapsed().as_secs_f64());

    let report_path = args.common.out.join("evaluation.json");
    write_json(
        &report_path,
        &json!({
            "command": "evaluate",
            "seed": cfg.seed,
            "config": cfg,
            "inputs": inputs_map(&[
                (&data_path, data_checksum),
                (&model_path, model_checksum),
            ]),
            "report": report,
        }),
    )?;

    let header = [
        "instance_id",
        "task",
        "traj",
        "cond_frame",
        "target_frame",
        "crps",
        "crps_input_region",
        "crps_target_only",
        "crps_full",
        "persistence_crps",
        "mse",
        "mae",
        "mean_sigma",
    ];
    let rows: Vec<Vec<String>> = report
        .instances
        .iter()
        .map(|r| {
            vec![
                r.instance_id.to_string(),
                format!("{:?}", r.task).to_lowercase(),
                r.traj.to_string(),
                r.cond_frame.to_string(),
                r.target_frame.to_string(),
                r.crps.to_string(),
                opt_cell(r.crps_input_region),
                opt_cell(r.crps_target_only),
                opt_cell(r.crps_full),
                r.persistence_crps.to_string(),
                r.mse.to_string(),
                r.mae.to_string(),
                r.mean_sigma.to_string(),
            ]
        })
        .collect();
    let csv_path = args.common.out.join("evaluation.csv");
    write_csv(&csv_path, &header, &rows)?;

    let instances = build_instances(&cfg)?;
    let (_, map, abs_err) = instance_maps(&model, &ds, &stats, &cfg, &instances[0])?;
    let n = cfg.scenario.grid_n;
    let mean_path = args.common.out.join("evaluation_mean.png");
    write_field_png(&mean_path, &map.mean, n, n)?;
    let sigma_path = args.common.out.join("evaluation_sigma.png");
    write_field_png(&sigma_path, &map.sigma, n, n)?;
    let err_path = args.common.out.join("evaluation_error.png");
    write_field_png(&err_path, &abs_err, n, n)?;
    let profile_path = args.common.out.join("distance_profile.png");
    let profile: Vec<f64> = report
        .calibration
        .distance_bins
        .iter()
        .map(|b| b.mean_sigma)
        .collect();
    write_bars_png(&profile_path, &profile)?;

    Ok(status(
        "evaluate",
        &[
            &report_path,
            &csv_path,
            &mean_path,
            &sigma_path,
            &err_path,
            &profile_path,
        ],
        json!({
            "mean_crps": report.mean_crps,
            "mean_persistence_crps": report.mean_persistence_crps,
            "per_instance_spearman": report.calibration.per_instance_spearman,
            "instances": report.instances.len(),
        }),
    ))
}

fn calibrate(args: ModelDataArgs) -> Result<serde_json::Value> {
    let mut cfg = load_config(&args.common)?;
    let model_path = default_path(&args.model, &args.common.out, "model.sfck");
    let (model, stats, ckpt_cfg, model_checksum) = load_model(&model_path)?;
    cfg.net = ckpt_cfg.net;
    cfg.validate()?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, data_checksum) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    eprintln!(
        "calibrating over {} instances with {} members each",
        cfg.eval.instances, cfg.eval.members
    );
    let report = evaluate_model(&model, &ds, &stats, &cfg)?;
    let cal = &report.calibration;

    let report_path = args.common.out.join("calibration.json");
    write_json(
        &report_path,
        &json!({
            "command": "calibrate",
            "seed": cfg.seed,
            "config": cfg,
            "inputs": inputs_map(&[
                (&data_path, data_checksum),
                (&model_path, model_checksum),
            ]),
            "report": cal,
        }),
    )?;
    let rows: Vec<Vec<String>> = cal
        .distance_bins
        .iter()
        .enumerate()
        .map(|(i, b)| {
            vec![
                i.to_string(),
                b.mean_distance.to_string(),
                b.mean_sigma.to_string(),
                b.count.to_string(),
            ]
        })
        .collect();
    let csv_path = args.common.out.join("calibration.csv");
    write_csv(&csv_path, &["bin", "mean_distance", "mean_sigma", "count"], &rows)?;
    let profile_path = args.common.out.join("distance_profile.png");
    let profile: Vec<f64> = cal.distance_bins.iter().map(|b| b.mean_sigma).collect();
    write_bars_png(&profile_path, &profile)?;

    Ok(status(
        "calibrate",
        &[&report_path, &csv_path, &profile_path],
        json!({
            "per_pixel_pearson": cal.per_pixel_pearson,
            "per_pixel_spearman": cal.per_pixel_spearman,
            "per_instance_pearson": cal.per_instance_pearson,
            "per_instance_spearman": cal.per_instance_spearman,
        }),
    ))
}

fn baseline(args: DataArgs) -> Result<serde_json::Value> {
    let cfg = load_config(&args.common)?;
    let data_path = default_path(&args.data, &args.common.out, "dataset.sfd");
    let (ds, data_checksum) = load_dataset(&data_path)?;
    check_dataset(&cfg, &ds)?;

    let instances = build_instances(&cfg)?;
    let mut rows = Vec::with_capacity(instances.len());
    let mut sums = [0.0f64; 2];
    let mut detail = Vec::with_capacity(instances.len());
    for inst in &instances {
        let cond = ds.frame(inst.traj, inst.cond_frame);
        let truth = ds.frame(inst.traj, inst.target_frame);
        let nn = preinterp_nn(cond, &inst.pair.input)?;
        let rbf = preinterp_rbf(cond, &inst.pair.input, None)?;
        let nn_crps = crps_mc(std::slice::from_ref(&nn), truth, &inst.pair.target)?;
        let rbf_crps = crps_mc(std::slice::from_ref(&rbf), truth, &inst.pair.target)?;
        let nn_mse = masked_mse(&nn, truth, &inst.pair.target)?;
        let rbf_mse = masked_mse(&rbf, truth, &inst.pair.target)?;
        let nn_mae = masked_mae(&nn, truth, &inst.pair.target)?;
        let rbf_mae = masked_mae(&rbf, truth, &inst.pair.target)?;
        sums[0] += nn_crps;
        sums[1] += rbf_crps;
        rows.push(vec![
            inst.instance_id.to_string(),
            format!("{:?}", inst.task).to_lowercase(),
            nn_crps.to_string(),
            nn_mse.to_string(),
            nn_mae.to_string(),
            rbf_crps.to_string(),
            rbf_mse.to_string(),
            rbf_mae.to_string(),
        ]);
        detail.push(json!({
            "instance_id": inst.instance_id,
            "task": inst.task,
            "nn_crps": nn_crps,
            "nn_mse": nn_mse,
            "nn_mae": nn_mae,
            "rbf_crps": rbf_crps,
            "rbf_mse": rbf_mse,
            "rbf_mae": rbf_mae,
        }));
    }
    let n = instances.len() as f64;
    let report_path = args.common.out.join("baseline.json");
    write_json(
        &report_path,
        &json!({
            "command": "baseline",
            "seed": cfg.seed,
            "config": cfg,
            "inputs": inputs_map(&[(&data_path, data_checksum)]),
            "mean_nn_crps": sums[0] / n,
            "mean_rbf_crps": sums[1] / n,
            "report": detail,
        }),
    )?;
    let csv_path = args.common.out.join("baseline.csv");
    write_csv(
        &csv_path,
        &[
            "instance_id",
            "task",
            "nn_crps",
            "nn_mse",
            "nn_mae",
            "rbf_crps",
            "rbf_mse",
            "rbf_mae",
        ],
        &rows,
    )?;
    Ok(status(
        "baseline",
        &[&report_path, &csv_path],
        json!({
            "mean_nn_crps": sums[0] / n,
            "mean_rbf_crps": sums[1] / n,
            "instances": instances.len(),
        }),
    ))
}
