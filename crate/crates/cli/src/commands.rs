use std::path::PathBuf;

use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use bdk_core::boundary::{
    assemble_latent_dataset, evaluate_boundary, fit_boundary, invert_to, sample_size_sweep, signed_distance, Boundary,
    Space, SvmConfig,
};
use bdk_core::editor::{
    edit_from_latents, strength_sweep, EditMode, EditSpec, EditTarget, HInjection, PipelineConfig, Zeta,
};
use bdk_core::geometry::{self, estimate_radius};
use bdk_core::mixing::{cross_validate_mixing, find_mixing_step, CrossValidation, DetectionRule};
use bdk_core::model::{NoisePredictor, TrainConfig};
use bdk_core::schedule::{Direction, NoiseSchedule, StepPlan};
use bdk_core::synth::{
    attribute_oracle, attribute_statistic, generate_sprite_dataset, Attribute, SpriteConfig, SpriteDataset, Verdict,
};
use bdk_core::toy::{eval_config, train_on};
use bdk_core::trajectory::{denoise_batch, invert_batch, sample_starts, sample_streams, stack_rows, Mode, RunOptions};
use bdk_core::verify;

use crate::args::*;
use crate::manifest::{RunManifest, GIT_DESCRIBE};
use crate::output::{ppm_rows, trajectory_csv};
use crate::{CliError, CliResult, Context};

/// Images shown per preview grid.
const PREVIEW: usize = 16;

pub fn dispatch(command: &Command, ctx: &mut Context) -> CliResult<()> {
    match command {
        Command::GenData(a) => gen_data(a, ctx),
        Command::Train(a) => train(a, ctx),
        Command::RadiusScan(a) => radius_scan(a, ctx),
        Command::FindMixing(a) => find_mixing(a, ctx),
        Command::Invert(a) => invert(a, ctx),
        Command::Reconstruct(a) => reconstruct(a, ctx),
        Command::FitBoundary(a) => fit(a, ctx),
        Command::EvalBoundary(a) => eval(a, ctx),
        Command::Edit(a) => edit(a, ctx),
        Command::Sample(a) => sample(a, ctx),
        Command::Sweep(a) => sweep(a, ctx),
        Command::VerifyGeometry(a) => verify_table(ctx, "verify-geometry", verify::verify_geometry(a.seed)?),
        Command::VerifyMixing(a) => verify_table(ctx, "verify-mixing", verify::verify_mixing(a.seed)?),
        Command::Report(a) => report(a, ctx),
    }
}

fn check_tm(schedule: &NoiseSchedule, tm: usize) -> CliResult<()> {
    if tm == 0 || tm > schedule.steps() {
        return Err(CliError::Validation(format!("--tm must lie in 1..={}, got {tm}", schedule.steps())));
    }
    Ok(())
}

fn check_n(n: usize) -> CliResult<()> {
    if n == 0 {
        return Err(CliError::Validation("--n must be at least 1".into()));
    }
    Ok(())
}

fn first_rows(ds: &SpriteDataset, n: usize) -> CliResult<Array2<f64>> {
    Ok(stack_rows(&ds.images[..n])?)
}

fn preview(ctx: &mut Context, name: &str, images: &Array2<f64>, geometry: &SpriteConfig) -> CliResult<()> {
    let k = images.nrows().min(PREVIEW);
    let bytes = ppm_rows(images.slice(ndarray::s![..k, ..]), geometry.geometry(), 8);
    ctx.write(name, &bytes)?;
    Ok(())
}

#[derive(Serialize, Default, Clone, Copy)]
struct Tally {
    positive: usize,
    negative: usize,
    undecided: usize,
}

fn tally(images: &Array2<f64>, config: &SpriteConfig, attribute: Attribute) -> CliResult<Tally> {
    let mut t = Tally::default();
    for row in images.rows() {
        match attribute_oracle(row.as_slice().expect("contiguous"), config.geometry(), attribute)? {
            Verdict::Positive => t.positive += 1,
            Verdict::Negative => t.negative += 1,
            Verdict::Undecided => t.undecided += 1,
        }
    }
    Ok(t)
}

fn gen_data(a: &GenData, ctx: &mut Context) -> CliResult<()> {
    ctx.seed("data", a.seed);
    let cfg = SpriteConfig {
        side: a.side,
        channels: a.channels,
        pixel_noise: a.pixel_noise,
        seed: a.seed,
        ..SpriteConfig::default()
    };
    let ds = generate_sprite_dataset(&cfg, a.n)?;
    ds.save(&ctx.path("data.bdds"))?;
    ctx.record("data.bdds");
    preview(ctx, "data-preview.ppm", &first_rows(&ds, a.n.min(PREVIEW))?, &cfg)?;
    let rates: Vec<_> = cfg
        .attributes
        .iter()
        .zip(&ds.labels)
        .map(|(attr, l)| (attr.name(), l.iter().filter(|&&v| v).count() as f64 / l.len() as f64))
        .collect();
    ctx.write_json("gen-data.json", &json!({ "n": a.n, "dim": cfg.dim(), "positive_rates": rates }))?;
    println!("{} sprites ({}×{}×{}) -> {}", a.n, a.side, a.side, a.channels, ctx.path("data.bdds").display());
    Ok(())
}

fn train(a: &Train, ctx: &mut Context) -> CliResult<()> {
    let images = match &a.data {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::NotFound(format!("dataset {}", p.display())));
            }
            SpriteDataset::load(p)?.images
        }
        None => {
            let cfg = SpriteConfig::default();
            ctx.seed("data", cfg.seed);
            generate_sprite_dataset(&cfg, a.n)?.images
        }
    };
    ctx.seed("train", a.seed);
    ctx.seed("init", 0);
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        seed: a.seed,
        optimizer: a.optimizer.into(),
    };
    let (model, schedule, curve) = train_on(&images, a.eta, 0, &cfg)?;
    let bytes = bdk_core::checkpoint::checkpoint_to_bytes(&model, &schedule);
    ctx.write("checkpoint.bdkt", &bytes)?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        loss += &format!("{i},{l}\n");
    }
    ctx.write("loss.csv", loss.as_bytes())?;
    let sum = bdk_core::checkpoint::stored_checksum(&bytes).unwrap_or_default();
    println!(
        "trained {} parameters for {} epochs, final loss {:.5}, checksum {sum:016x}",
        model.param_count(),
        a.epochs,
        curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn options_for(mode: WalkMode, tm: Option<usize>, schedule: &NoiseSchedule, plan: &StepPlan) -> CliResult<RunOptions> {
    match mode {
        WalkMode::Mixed => {
            let tm = tm.ok_or_else(|| CliError::Validation("--mode mixed needs --tm".into()))?;
            check_tm(schedule, tm)?;
            if !plan.contains(tm) {
                return Err(CliError::Validation(format!("--tm {tm} is not a step of the denoising plan")));
            }
            Ok(RunOptions::mixed(tm))
        }
        m => Ok(RunOptions::new(m.into())),
    }
}

fn scan_rule(threshold: f64) -> DetectionRule {
    DetectionRule { threshold, ..DetectionRule::default() }
}

fn radius_scan(a: &RadiusScan, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let t = s.steps();
    ctx.seed("noise", a.seed);
    let starts = match a.source {
        SourceArg::Sampled => sample_starts(a.seed, a.n, m.data_dim()),
        SourceArg::Inverted => {
            let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
            invert_to(&m, &s, &first_rows(&ds, a.n)?, t, a.steps_inv.unwrap_or(t))?
        }
    };
    let plan = StepPlan::even(&s, a.steps_gen.unwrap_or(t), t, Direction::Denoise)?;
    let options = options_for(a.mode, a.tm, &s, &plan)?.recording(a.stride);
    let mut rngs = sample_streams(a.seed, a.n);
    let run = denoise_batch(&m, &s, &starts, &plan, &options, &mut rngs, None, None)?;
    let scan = geometry::RadiusScan::from_run(&run, a.stride)?;
    let report = find_mixing_step(&scan, &scan_rule(a.threshold))?;
    ctx.write("radius-scan.csv", scan.to_csv().as_bytes())?;
    ctx.write_json("radius-scan.json", &report)?;
    if a.dump {
        let file = std::fs::File::create(ctx.path("trajectories.csv"))?;
        let views: Vec<_> = run.states.iter().map(|x| x.view()).collect();
        trajectory_csv(std::io::BufWriter::new(file), &run.steps, &views)?;
        ctx.record("trajectories.csv");
    }
    println!("{:>5}  {:>9}  {:>8}  {:>9}", "step", "r", "Δr", "std_err");
    for p in &scan.points {
        let dr = p.delta_r.map(|v| format!("{v:8.3}")).unwrap_or_else(|| "       -".into());
        println!("{:>5}  {:>9.3}  {dr}  {:>9.4}", p.step, p.r, p.std_error);
    }
    match report.t_m {
        Some(tm) => println!("t_m = {tm}"),
        None => println!("no shift crossed the threshold"),
    }
    Ok(())
}

fn find_mixing(a: &FindMixing, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    ctx.seed("noise", a.seed);
    let rule = if a.raw { DetectionRule::raw(a.threshold) } else { scan_rule(a.threshold) };
    let cfg = CrossValidation {
        n_samples: a.n,
        stride: a.stride,
        rule,
        steps: a.steps_gen.unwrap_or(s.steps()),
        seed: a.seed,
    };
    let report = cross_validate_mixing(&m, &s, &ds.images, &cfg)?;
    ctx.write_json("find-mixing.json", &report)?;
    let mut csv = String::from("source,mode,step,r,delta_r,std_error\n");
    for c in &report.combos {
        for p in &c.scan.points {
            let dr = p.delta_r.map(|v| v.to_string()).unwrap_or_default();
            csv += &format!("{},{},{},{},{dr},{}\n", name(&c.source), name(&c.mode), p.step, p.r, p.std_error);
        }
    }
    ctx.write("find-mixing.csv", csv.as_bytes())?;
    println!("{:<9} {:<13} {:>6} {:>8}", "source", "mode", "r(T)", "t_m");
    for c in &report.combos {
        let tm = c.detection.t_m().map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        println!("{:<9} {:<13} {:>6.2} {:>8}", name(&c.source), name(&c.mode), c.scan.points[0].r, tm);
    }
    println!(
        "spread {} (stride {}), combos agree: {}",
        report.combo_spread().map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
        report.stride,
        report.combos_agree()
    );
    match report.t_m {
        Some(tm) => {
            println!("t_m = {tm}");
            Ok(())
        }
        None => Err(CliError::Numeric("no radius shift crossed the threshold".into())),
    }
}

fn name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn latents_in(m: &NoisePredictor, x_tm: &Array2<f64>, tm: usize, space: Space) -> CliResult<Array2<f64>> {
    Ok(match space {
        Space::Epsilon => x_tm.clone(),
        Space::H => m.predict_batch(x_tm.view(), &vec![tm as f64; x_tm.nrows()])?.h,
    })
}

fn invert(a: &Invert, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    check_tm(&s, a.tm)?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    let x_tm = invert_to(&m, &s, &first_rows(&ds, a.n)?, a.tm, a.steps_inv.unwrap_or(a.tm))?;
    let mut summary = Vec::new();
    for space in a.space.spaces() {
        let rows = latents_in(&m, &x_tm, a.tm, space)?;
        let file = format!("latents-{space}.csv");
        let f = std::fs::File::create(ctx.path(&file))?;
        trajectory_csv(std::io::BufWriter::new(f), &[a.tm], &[rows.view()])?;
        ctx.record(&file);
        let est = estimate_radius(rows.view())?;
        println!(
            "{space}: {} latents of dim {} at t = {}, radius {:.3} ± {:.3}",
            a.n,
            rows.ncols(),
            a.tm,
            est.r,
            est.std_error
        );
        summary.push(json!({ "space": space, "file": file, "radius": est }));
    }
    ctx.write_json("invert.json", &json!({ "t_m": a.tm, "spaces": summary }))?;
    Ok(())
}

fn reconstruct(a: &Reconstruct, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    let x0 = first_rows(&ds, a.n)?;
    let t = s.steps();
    let plan = StepPlan::even(&s, a.steps_inv.unwrap_or(t), t, Direction::Invert)?;
    let inv = invert_batch(&m, &s, &x0, &plan, usize::MAX)?;
    let x_t = inv.final_state();
    let mut rngs = sample_streams(a.seed, a.n);
    let rec = denoise_batch(
        &m,
        &s,
        x_t,
        &plan.with_direction(Direction::Denoise),
        &RunOptions::new(Mode::Deterministic),
        &mut rngs,
        None,
        None,
    )?;
    let diff = rec.final_state() - &x0;
    let rmse = diff.mapv(|v| v * v).mean().unwrap_or(f64::NAN).sqrt();
    let max_abs = diff.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let radius = estimate_radius(x_t.view())?;
    let k = a.n.min(8);
    let mut pair = x0.slice(ndarray::s![..k, ..]).to_owned();
    pair.append(ndarray::Axis(0), rec.final_state().slice(ndarray::s![..k, ..])).expect("same width");
    ctx.write("reconstruct.ppm", &ppm_rows(pair.view(), ds.config.geometry(), k))?;
    ctx.write_json(
        "reconstruct.json",
        &json!({ "n": a.n, "rmse": rmse, "max_abs_error": max_abs, "inverted_radius": radius, "sqrt_d": (m.data_dim() as f64).sqrt() }),
    )?;
    println!("round trip over {} steps: rmse {rmse:.5}, max |err| {max_abs:.4}", plan.transitions().len());
    println!("inverted radius {:.3} ± {:.3} (√d = {:.3})", radius.r, radius.std_error, (m.data_dim() as f64).sqrt());
    Ok(())
}

fn fit(a: &FitBoundary, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    check_tm(&s, a.tm)?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    let attr: Attribute = a.attribute.into();
    let labels = ds.labels_for(attr)?;
    ctx.seed("svm", a.seed);
    let cfg = SvmConfig {
        epochs: a.svm_epochs,
        lambda: a.lambda,
        seed: a.seed,
        use_bias: !a.no_bias,
        ..SvmConfig::default()
    };
    let mut rows = Vec::new();
    for space in a.space.spaces() {
        let data = assemble_latent_dataset(
            &m,
            &s,
            &ds.images[..a.n],
            &labels[..a.n],
            a.tm,
            space,
            a.steps_inv.unwrap_or(a.tm),
        )?;
        let b = fit_boundary(&data, attr.name(), &cfg)?;
        let file = format!("boundary-{attr}-{space}.txt");
        b.save(&ctx.path(&file))?;
        ctx.record(&file);
        println!(
            "{attr} / {space} at t_m = {}: train {:.3} ({}), test {:.3} ({}), checksum {:016x}",
            a.tm,
            b.train_accuracy,
            b.n_train,
            b.test_accuracy,
            b.n_test,
            b.checksum()
        );
        let sweep = if a.sweep_sizes.is_empty() { Vec::new() } else { sample_size_sweep(&data, &a.sweep_sizes, &cfg)? };
        if !sweep.is_empty() {
            let cells: Vec<String> = sweep.iter().map(|(n, acc)| format!("{n}: {acc:.3}")).collect();
            println!("  held-out accuracy by training size: {}", cells.join(", "));
        }
        rows.push(json!({
            "file": file, "space": space, "train_accuracy": b.train_accuracy, "test_accuracy": b.test_accuracy,
            "n_train": b.n_train, "n_test": b.n_test, "distance_spread": b.distance_spread,
            "checksum": format!("{:016x}", b.checksum()),
            "sample_size_sweep": sweep.iter().map(|(n, acc)| json!({ "n": n, "test_accuracy": acc })).collect::<Vec<_>>(),
        }));
    }
    ctx.write_json("fit-boundary.json", &json!({ "attribute": attr.name(), "t_m": a.tm, "boundaries": rows }))?;
    Ok(())
}

fn eval(a: &EvalBoundary, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    let mut rows = Vec::new();
    for path in &a.boundary {
        let b = ctx.load_boundary(path)?;
        let attr: Attribute = b.attribute.parse()?;
        let labels = ds.labels_for(attr)?;
        let data = assemble_latent_dataset(
            &m,
            &s,
            &ds.images[..a.n],
            &labels[..a.n],
            b.t_m,
            b.space,
            a.steps_inv.unwrap_or(b.t_m),
        )?;
        let acc = evaluate_boundary(&b, &data)?;
        println!(
            "{}: {} / {} at t_m = {}: held-out accuracy {acc:.3} on {}",
            path.display(),
            b.attribute,
            b.space,
            b.t_m,
            a.n
        );
        rows.push(json!({ "boundary": path, "attribute": b.attribute, "space": b.space, "t_m": b.t_m, "accuracy": acc, "n": a.n }));
    }
    ctx.write_json("eval-boundary.json", &rows)?;
    Ok(())
}

/// Signed distances of the unedited latents at `t_m` to `b`.
fn distances(m: &NoisePredictor, x_tm: &Array2<f64>, tm: usize, b: &Boundary) -> CliResult<Vec<f64>> {
    let rows = latents_in(m, x_tm, tm, b.space)?;
    rows.rows()
        .into_iter()
        .map(|r| signed_distance(b, r.as_slice().expect("contiguous")).map_err(CliError::from))
        .collect()
}

fn load_boundaries(ctx: &mut Context, paths: &[PathBuf], tm: Option<usize>) -> CliResult<(Vec<Boundary>, usize)> {
    let mut bs = Vec::new();
    for p in paths {
        bs.push(ctx.load_boundary(p)?);
    }
    let tm = tm.unwrap_or(bs[0].t_m);
    for (b, p) in bs.iter().zip(paths) {
        if b.t_m != tm {
            return Err(CliError::Validation(format!(
                "boundary {} was fitted at t_m = {}, but the edit runs at t_m = {tm}",
                p.display(),
                b.t_m
            )));
        }
    }
    Ok((bs, tm))
}

fn edit(a: &Edit, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let (bs, tm) = load_boundaries(ctx, &a.boundary, a.tm)?;
    check_tm(&s, tm)?;
    if a.zeta.len() != 1 && a.zeta.len() != bs.len() {
        return Err(CliError::Validation(format!("{} --zeta values for {} boundaries", a.zeta.len(), bs.len())));
    }
    if a.h_steps == 0 {
        return Err(CliError::Validation("--h-steps must be at least 1".into()));
    }
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    ctx.seed("noise", a.seed);
    let x0 = first_rows(&ds, a.n)?;
    let cfg = PipelineConfig::new(tm, a.steps_inv.unwrap_or(tm), a.steps_gen.unwrap_or(tm), a.seed);
    let x_tm = invert_to(&m, &s, &x0, tm, cfg.steps_inv)?;

    let mut targets = Vec::new();
    let mut identity = Vec::new();
    for (k, b) in bs.iter().enumerate() {
        let z = a.zeta[k.min(a.zeta.len() - 1)];
        let zeta = if a.flip {
            let d = distances(&m, &x_tm, tm, b)?;
            Zeta::PerSample(d.iter().map(|v| if *v >= 0.0 { -z.abs() } else { z.abs() }).collect())
        } else {
            Zeta::Uniform(z)
        };
        targets.push(EditTarget { boundary: b.clone(), zeta });
        identity.push(EditTarget { boundary: b.clone(), zeta: Zeta::Uniform(0.0) });
    }
    let injection = if a.h_steps > 1 { HInjection::Iterative(a.h_steps) } else { HInjection::SingleStep };
    let spec = EditSpec { targets, mode: a.mode.into(), h_injection: injection };
    let out = edit_from_latents(&m, &s, &x_tm, &spec, &cfg)?;
    let plain_spec = EditSpec { targets: identity, mode: EditMode::Additive, h_injection: injection };
    let plain = edit_from_latents(&m, &s, &x_tm, &plain_spec, &cfg)?;

    preview(ctx, "inputs.ppm", &x0, &ds.config)?;
    preview(ctx, "unedited.ppm", &plain.images, &ds.config)?;
    preview(ctx, "edited.ppm", &out.images, &ds.config)?;
    let mut oracle = Vec::new();
    for b in &bs {
        let Ok(attr) = b.attribute.parse::<Attribute>() else { continue };
        let (mut flips, mut decided) = (0usize, 0usize);
        for (e, p) in out.images.rows().into_iter().zip(plain.images.rows()) {
            let ve = attribute_oracle(e.as_slice().expect("contiguous"), ds.config.geometry(), attr)?;
            let vp = attribute_oracle(p.as_slice().expect("contiguous"), ds.config.geometry(), attr)?;
            if let Some(before) = vp.as_bool() {
                decided += 1;
                if ve.as_bool() == Some(!before) {
                    flips += 1;
                }
            }
        }
        let rate = if decided > 0 { flips as f64 / decided as f64 } else { f64::NAN };
        println!("{attr}: {flips}/{decided} decided outputs flipped against the unedited walk ({:.1}%)", 100.0 * rate);
        oracle.push(json!({
            "attribute": attr.name(),
            "inputs": tally(&x0, &ds.config, attr)?,
            "unedited": tally(&plain.images, &ds.config, attr)?,
            "edited": tally(&out.images, &ds.config, attr)?,
            "flips": flips, "decided": decided, "flip_rate": rate,
        }));
    }
    println!("ε mutations at {:?}, h injections at {:?}", out.trace.eps_mutations, out.trace.h_injections);
    ctx.write_json(
        "edit.json",
        &json!({
            "t_m": tm, "n": a.n, "boundaries": a.boundary, "zeta": a.zeta, "flip": a.flip,
            "distance_before": out.before, "distance_after": out.after, "trace": out.trace, "oracle": oracle,
        }),
    )?;
    Ok(())
}

fn sample(a: &Sample, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.checkpoint.as_deref())?;
    let t = s.steps();
    ctx.seed("noise", a.seed);
    let plan = StepPlan::even(&s, a.steps_gen.unwrap_or(t), t, Direction::Denoise)?;
    let options = options_for(a.mode, a.tm, &s, &plan)?.recording(if a.dump { 1 } else { usize::MAX });
    let starts = sample_starts(a.seed, a.n, m.data_dim());
    let mut rngs = sample_streams(a.seed, a.n);
    let run = denoise_batch(&m, &s, &starts, &plan, &options, &mut rngs, None, None)?;
    let out = run.final_state();
    let cfg = eval_config(None);
    if cfg.dim() != m.data_dim() {
        return Err(CliError::Validation(format!(
            "checkpoint dimension {} is not a {}-pixel sprite",
            m.data_dim(),
            cfg.dim()
        )));
    }
    preview(ctx, "samples.ppm", out, &cfg)?;
    let mut tallies = Vec::new();
    for &attr in &cfg.attributes {
        let t = tally(out, &cfg, attr)?;
        println!("{attr}: {} positive, {} negative, {} undecided", t.positive, t.negative, t.undecided);
        tallies.push(json!({ "attribute": attr.name(), "tally": t }));
    }
    if a.dump {
        let f = std::fs::File::create(ctx.path("trajectories.csv"))?;
        let views: Vec<_> = run.states.iter().map(|x| x.view()).collect();
        trajectory_csv(std::io::BufWriter::new(f), &run.steps, &views)?;
        ctx.record("trajectories.csv");
    }
    ctx.write_json(
        "sample.json",
        &json!({ "n": a.n, "mode": a.mode, "oracle": tallies, "radius": estimate_radius(out.view())? }),
    )?;
    Ok(())
}

fn sweep(a: &Sweep, ctx: &mut Context) -> CliResult<()> {
    check_n(a.n)?;
    let (m, s) = ctx.load_checkpoint(a.inputs.checkpoint.as_deref())?;
    let (bs, tm) = load_boundaries(ctx, std::slice::from_ref(&a.boundary), a.tm)?;
    let b = &bs[0];
    let attr: Attribute = b.attribute.parse()?;
    let ds = ctx.images(a.inputs.data.as_deref(), a.n, a.seed)?;
    let reference_seed = a.seed.wrapping_add(1);
    ctx.seed("reference", reference_seed);
    ctx.seed("noise", a.seed);
    let reference = generate_sprite_dataset(&eval_config(Some(reference_seed)), 500)?.images;
    let cfg = PipelineConfig::new(tm, a.steps_inv.unwrap_or(tm), a.steps_gen.unwrap_or(tm), a.seed);
    let geometry = ds.config.geometry();
    let scorer = |x: &[f64]| attribute_statistic(x, geometry, attr);
    let res = strength_sweep(
        &m,
        &s,
        &first_rows(&ds, a.n)?,
        b,
        &a.zeta,
        a.mode.into(),
        &cfg,
        &scorer,
        &reference,
        a.degradation,
    )?;
    let mut csv = String::from("zeta,score,nn_score,degraded\n");
    println!("{:>7} {:>8} {:>8}  degraded", "ζ", "score", "nn");
    for p in &res.points {
        csv += &format!("{},{},{},{}\n", p.zeta, p.score, p.nn_score, p.degraded);
        println!("{:>7.2} {:>8.4} {:>8.4}  {}", p.zeta, p.score, p.nn_score, p.degraded);
    }
    println!("baseline nn {:.4}, monotone: {}", res.baseline_nn_score, res.scores_monotone());
    ctx.write("sweep.csv", csv.as_bytes())?;
    let k = a.n.min(8);
    let rows: Vec<Vec<f64>> = res
        .images
        .iter()
        .flat_map(|im| im.rows().into_iter().take(k).map(|r| r.to_vec()).collect::<Vec<_>>())
        .collect();
    ctx.write("sweep.ppm", &ppm_rows(stack_rows(&rows)?.view(), geometry, k))?;
    ctx.write_json(
        "sweep.json",
        &json!({ "t_m": tm, "attribute": attr.name(), "points": res.points, "baseline_nn_score": res.baseline_nn_score, "monotone": res.scores_monotone() }),
    )?;
    Ok(())
}

fn verify_table(ctx: &mut Context, name: &str, checks: Vec<verify::Check>) -> CliResult<()> {
    print!("{}", verify::render_table(&checks));
    ctx.write_json(&format!("{name}.json"), &checks)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}

fn report(a: &Report, ctx: &mut Context) -> CliResult<()> {
    let dir = a.dir.clone().unwrap_or_else(|| ctx.out.clone());
    if !dir.is_dir() {
        return Err(CliError::NotFound(format!("directory {}", dir.display())));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("manifest-") && n.ends_with(".json") && n != "manifest-report.json")
        })
        .collect();
    entries.sort();
    let mut md = format!("# bdk report\n\nbuild `{GIT_DESCRIBE}`, {} runs in `{}`\n\n", entries.len(), dir.display());
    md += "| command | exit | wall (s) | checkpoint | outputs |\n|---|---|---|---|---|\n";
    let mut runs = Vec::new();
    for p in &entries {
        let man = RunManifest::load(p)?;
        let ck = man.checkpoint.as_ref().map(|(_, c)| c.as_str()).unwrap_or("-");
        md += &format!(
            "| {} | {} | {:.2} | {} | {} |\n",
            man.command,
            man.exit_code,
            man.wall_time_s,
            ck,
            man.outputs.join(", ")
        );
        runs.push(man);
    }
    let mut highlights = serde_json::Map::new();
    let read = |name: &str| -> Option<serde_json::Value> {
        serde_json::from_str(&std::fs::read_to_string(dir.join(name)).ok()?).ok()
    };
    if let Some(v) = read("find-mixing.json") {
        highlights.insert("t_m".into(), v["t_m"].clone());
    }
    if let Some(v) = read("reconstruct.json") {
        highlights.insert("reconstruction_rmse".into(), v["rmse"].clone());
    }
    if let Some(v) = read("fit-boundary.json") {
        highlights.insert("boundaries".into(), v["boundaries"].clone());
    }
    if let Some(v) = read("edit.json") {
        highlights.insert("edit_oracle".into(), v["oracle"].clone());
    }
    if let Some(v) = read("sweep.json") {
        highlights.insert("sweep_monotone".into(), v["monotone"].clone());
    }
    if !highlights.is_empty() {
        md += "\n## Results\n\n```json\n";
        md += &serde_json::to_string_pretty(&highlights)?;
        md += "\n```\n";
    }
    ctx.write("report.md", md.as_bytes())?;
    ctx.write_json("report.json", &json!({ "runs": runs, "results": highlights }))?;
    print!("{md}");
    Ok(())
}
