//! One function per CLI verb. Each reads from the input directory and
//! writes only into its own run directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dpu_core::features::{
    band_energy, channel_attrs, feature_images, feature_vectors, BandSpec, FeatureImage,
    FeatureVector, StftConfig,
};
use dpu_core::fixtures::EegFixture;
use dpu_core::forest::{fit_forest, rank_channels, Forest, ForestParams};
use dpu_core::freespace::{AberrationProfile, FreespaceGeometry, FreespaceModel};
use dpu_core::integrated::{IntegratedGeometry, IntegratedModel, PhaseMode};
use dpu_core::seed;
use dpu_core::signal::{
    parse_chb_summary, parse_edf, split_with, window, write_edf, Label, Recording, Segment,
    SplitMode, SummaryEntry,
};
use dpu_core::tensor::Tensor;
use dpu_core::train::{
    adaptive_retrain, calibrate_region_scale, freespace_stats, integrated_stats, metrics, train,
    trace_tsv, AdamConfig, ConfusionStats, LossConfig, LossKind, Metrics, OpsReport, TrainConfig,
};

use crate::config::Config;
use crate::run::{field, verify_manifest, RunDir};
use crate::store::Store;

pub const EEG_CHANNELS: usize = 23;

/// Paths shared by every verb.
#[derive(Debug, Clone)]
pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub input: PathBuf,
}

/// What a verb reports back to `main`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub manifest_hash: String,
    /// Inputs that could not be processed; a nonzero count fails the exit code.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Eeg,
    Ieeg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Freespace,
    Integrated,
    Forest,
}

fn modality(cfg: &Config) -> Result<Modality> {
    match cfg.raw("modality") {
        "eeg" => Ok(Modality::Eeg),
        "ieeg" => Ok(Modality::Ieeg),
        other => bail!("modality must be eeg or ieeg, got {other:?}"),
    }
}

fn model_kind(cfg: &Config) -> Result<ModelKind> {
    match cfg.raw("model") {
        "freespace" => Ok(ModelKind::Freespace),
        "integrated" => Ok(ModelKind::Integrated),
        "forest" => Ok(ModelKind::Forest),
        other => bail!("model must be freespace, integrated or forest, got {other:?}"),
    }
}

fn flag(cfg: &Config, key: &str) -> Result<bool> {
    match cfg.raw(key) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("{key} must be true or false, got {other:?}"),
    }
}

fn finish(run: RunDir, failures: Vec<String>) -> Result<Outcome> {
    Ok(Outcome {
        manifest_hash: run.finish()?,
        failures,
    })
}

pub fn fixture(cfg: &Config) -> Result<EegFixture> {
    Ok(EegFixture {
        seed: seed::derive(cfg.seed, "synth"),
        n_channels: cfg.get("synth.channels")?,
        active_channel: cfg.get("synth.active_channel")?,
        duration_s: cfg.get("synth.duration_s")?,
        n_events: cfg.get("synth.events")?,
        event_s: cfg.get("synth.event_s")?,
        burst_ratio: cfg.get("synth.burst_ratio")?,
        sample_rate: cfg.get("synth.sample_rate")?,
    })
}

fn synth_recording(cfg: &Config) -> Result<Recording> {
    let fx = fixture(cfg)?;
    if fx.active_channel >= fx.n_channels {
        bail!(
            "synth.active_channel {} is outside {} channels",
            fx.active_channel,
            fx.n_channels
        );
    }
    let mut rec = fx.recording()?;
    rec.id = "synth".into();
    Ok(rec)
}

/// CHB-MIT style summary block for one file.
pub fn summary_text(file_name: &str, intervals: &[(f64, f64)]) -> String {
    let mut s = format!(
        "File Name: {file_name}\nNumber of Seizures in File: {}\n",
        intervals.len()
    );
    for (i, (a, b)) in intervals.iter().enumerate() {
        s.push_str(&format!(
            "Seizure {n} Start Time: {a} seconds\nSeizure {n} End Time: {b} seconds\n",
            n = i + 1
        ));
    }
    s
}

pub fn cmd_synth(ctx: &Ctx) -> Result<Outcome> {
    let mut run = RunDir::open(&ctx.out, "synth", &ctx.cfg)?;
    let rec = run.time("synthesize", || synth_recording(&ctx.cfg))?;
    let edf = write_edf(&rec)?;
    run.write("synth.edf", &edf)?;
    run.write_text("synth-summary.txt", &summary_text("synth.edf", &rec.seizure_intervals))?;
    finish(run, Vec::new())
}

fn window_params(cfg: &Config, m: Modality) -> Result<(f64, f64)> {
    let (w, h) = match m {
        Modality::Eeg => (1.0, 1.0),
        Modality::Ieeg => (5.0, 1.0),
    };
    Ok((
        cfg.opt("ingest.window_s")?.unwrap_or(w),
        cfg.opt("ingest.hop_s")?.unwrap_or(h),
    ))
}

/// Expands directories to the `.edf` files they contain, sorted by name.
pub fn edf_paths(list: &[String]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in list {
        let p = PathBuf::from(item);
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(&p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension()
                        .is_some_and(|e| e.eq_ignore_ascii_case("edf"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn load_edf(path: &Path, summary: Option<&[SummaryEntry]>) -> Result<Recording> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rec = parse_edf(&bytes)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| anyhow!("unusable file name {}", path.display()))?;
    rec.id = name.to_string();
    if let Some(entries) = summary {
        let entry = entries
            .iter()
            .find(|e| e.file_name == name)
            .ok_or_else(|| anyhow!("{name} is not listed in the summary"))?;
        rec.seizure_intervals = entry.seizures.clone();
        rec.validate()?;
    }
    Ok(rec)
}

pub fn cmd_ingest(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let m = modality(cfg)?;
    let (win, hop) = window_params(cfg, m)?;
    let mode = match cfg.raw("split.mode") {
        "window" => SplitMode::Window,
        "event" => SplitMode::Event,
        other => bail!("split.mode must be window or event, got {other:?}"),
    };
    let mut run = RunDir::open(&ctx.out, "ingest", cfg)?;
    let paths = edf_paths(&cfg.list("ingest.edf"))?;
    let summary = match cfg.opt::<String>("ingest.summary")? {
        Some(p) => {
            let text = fs::read_to_string(&p).with_context(|| format!("reading summary {p}"))?;
            Some(parse_chb_summary(&text)?)
        }
        None => None,
    };

    let mut failures = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut report = String::from("recording\twindows\tseizure_windows\n");
    let mut shape = None;
    let mut accept = |rec: Recording, failures: &mut Vec<String>| -> Result<()> {
        let segs = match window(&rec, win, hop) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{}: {e}", rec.id));
                return Ok(());
            }
        };
        let dim = segs[0].data.dim();
        if *shape.get_or_insert(dim) != dim {
            failures.push(format!(
                "{}: windows are {:?}, earlier files gave {:?}",
                rec.id,
                dim,
                shape.unwrap()
            ));
            return Ok(());
        }
        let pos = segs.iter().filter(|s| s.label.is_seizure()).count();
        report.push_str(&format!("{}\t{}\t{pos}\n", rec.id, segs.len()));
        segments.extend(segs);
        Ok(())
    };
    if paths.is_empty() {
        accept(synth_recording(cfg)?, &mut failures)?;
    } else {
        for p in &paths {
            match load_edf(p, summary.as_deref()) {
                Ok(rec) => accept(rec, &mut failures)?,
                Err(e) => failures.push(format!("{}: {e:#}", p.display())),
            }
        }
    }
    if segments.is_empty() {
        bail!("no usable recordings: {}", failures.join("; "));
    }
    let split = run.time("split", || split_with(segments, seed::derive(cfg.seed, "split"), mode))?;
    let n_train = split.train.len();
    let store = Store {
        train: (0..n_train + split.test.len()).map(|i| i < n_train).collect(),
        segments: split.train.into_iter().chain(split.test).collect(),
    };
    store.write(&mut run)?;
    for f in &failures {
        report.push_str(&format!("# error: {f}\n"));
    }
    run.write_text("ingest.tsv", &report)?;
    finish(run, failures)
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=EEG_CHANNELS).contains(&k) {
        bail!("select.k must be in 1..={EEG_CHANNELS}, got {k}");
    }
    Ok(())
}

pub fn cmd_select(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let k: usize = cfg.get("select.k")?;
    check_k(k)?;
    let store = Store::read(&ctx.input)?;
    if store.n_channels() != EEG_CHANNELS {
        bail!(
            "channel selection needs a {EEG_CHANNELS}-channel store, found {}",
            store.n_channels()
        );
    }
    let mut run = RunDir::open(&ctx.out, "select", cfg)?;
    let segs = store.part(true);
    let x = segs.iter().map(channel_attrs).collect::<Result<Vec<_>, _>>()?;
    let y: Vec<usize> = segs.iter().map(|s| s.label.index()).collect();
    let params = ForestParams {
        n_trees: cfg.get("select.trees")?,
        ..ForestParams::default()
    };
    let forest = run.time("forest", || fit_forest(&x, &y, &params, seed::derive(cfg.seed, "select")))?;
    let ranking = rank_channels(&forest)?;
    let tsv = ranking.to_tsv();
    print!("{tsv}");
    run.write_text("ranking.tsv", &tsv)?;
    let chosen: String = ranking.top(k).iter().map(|c| format!("{c}\n")).collect();
    run.write_text("channels.txt", &chosen)?;
    finish(run, Vec::new())
}

/// Channels from `channels.txt` in the input directory, else the first `select.k`.
pub fn channels(ctx: &Ctx, n_channels: usize) -> Result<Vec<usize>> {
    let path = ctx.input.join("channels.txt");
    let chosen: Vec<usize> = if path.exists() {
        fs::read_to_string(&path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| l.parse().with_context(|| format!("{}: {l:?}", path.display())))
            .collect::<Result<_>>()?
    } else {
        let k: usize = ctx.cfg.get("select.k")?;
        (0..k.min(n_channels)).collect()
    };
    if chosen.is_empty() {
        bail!("no channels chosen");
    }
    if let Some(&c) = chosen.iter().find(|&&c| c >= n_channels) {
        bail!("channel {c} is outside the {n_channels}-channel store");
    }
    Ok(chosen)
}

fn stft_config(m: Modality, sample_rate: f64) -> StftConfig {
    match m {
        Modality::Eeg => StftConfig::eeg(sample_rate),
        Modality::Ieeg => StftConfig::ieeg(sample_rate),
    }
}

fn parts(cfg: &Config, m: Modality) -> Result<usize> {
    Ok(cfg.opt("features.parts")?.unwrap_or(match m {
        Modality::Eeg => 4,
        Modality::Ieeg => 5,
    }))
}

fn images(cfg: &Config, segs: &[Segment], chans: &[usize]) -> Result<Vec<FeatureImage>> {
    let m = modality(cfg)?;
    let sr = segs.first().map_or(256.0, |s| s.sample_rate);
    Ok(feature_images(segs, chans, &stft_config(m, sr), cfg.get("features.size")?)?)
}

fn vectors(cfg: &Config, segs: &[Segment], chans: &[usize]) -> Result<Vec<FeatureVector>> {
    let m = modality(cfg)?;
    Ok(feature_vectors(segs, chans[0], parts(cfg, m)?, &BandSpec::integrated())?)
}

/// Rhythm-band powers of the chosen channels, channel-major.
fn forest_rows(segs: &[Segment], chans: &[usize]) -> Result<Vec<Vec<f64>>> {
    segs.iter()
        .map(|s| {
            let spec = BandSpec::eeg_rhythms(s.sample_rate);
            let mut row = Vec::new();
            for &c in chans {
                row.extend(band_energy(&s.channel(c), &spec, s.sample_rate)?);
            }
            Ok(row)
        })
        .collect()
}

fn freespace_geometry(cfg: &Config) -> Result<FreespaceGeometry> {
    let mut g = FreespaceGeometry::scaled(cfg.get("features.size")?);
    g.pitch = cfg.get("freespace.pitch")?;
    g.wavelength = cfg.get("freespace.wavelength")?;
    if let Some(d) = cfg.opt("freespace.distance")? {
        g.distance = d;
    }
    g.pad_factor = cfg.get("freespace.pad")?;
    Ok(g)
}

fn integrated_model(cfg: &Config, n_inputs: usize) -> Result<IntegratedModel> {
    let geometry = IntegratedGeometry {
        n_inputs,
        waist: cfg.get("integrated.waist")?,
        n_eff: cfg.get("integrated.n_eff")?,
        ..IntegratedGeometry::default()
    };
    let mut m = IntegratedModel::new(geometry)?;
    m.use_bias = flag(cfg, "integrated.bias")?;
    m.temperature = cfg.get("integrated.temperature")?;
    m.mode = match cfg.raw("integrated.mode") {
        "hard" => PhaseMode::Hard,
        "relaxed" => PhaseMode::Relaxed,
        other => bail!("integrated.mode must be hard or relaxed, got {other:?}"),
    };
    Ok(m)
}

pub fn train_config(cfg: &Config, kind: ModelKind) -> Result<TrainConfig> {
    let integrated = kind == ModelKind::Integrated;
    let loss_kind = match cfg.opt::<String>("train.loss")? {
        Some(s) => s.parse::<LossKind>()?,
        None if integrated => LossKind::CrossEntropy,
        None => LossKind::Mse,
    };
    let score_scale = cfg.opt("train.score_scale")?.unwrap_or(if integrated {
        LossConfig::integrated().score_scale
    } else {
        1.0
    });
    Ok(TrainConfig {
        epochs: cfg.get("train.epochs")?,
        batch_size: cfg.get("train.batch")?,
        loss: LossConfig {
            kind: loss_kind,
            score_scale,
        },
        adam: AdamConfig {
            learning_rate: cfg.get("train.lr")?,
            ..AdamConfig::default()
        },
        seed: seed::derive(cfg.seed, "train"),
    })
}

fn forest_params(cfg: &Config) -> Result<ForestParams> {
    Ok(ForestParams {
        n_trees: cfg.get("forest.trees")?,
        max_depth: cfg.opt("forest.max_depth")?,
        bootstrap: flag(cfg, "forest.bootstrap")?,
        ..ForestParams::default()
    })
}

/// Region scale fitted on the training images.
fn calibrate(model: &FreespaceModel, imgs: &[FeatureImage], beta: f64) -> Result<f64> {
    let pairs = imgs
        .iter()
        .map(|im| {
            let (y, _) = model.forward(&im.pixels)?;
            Ok((model.raw_pair(&y, None)?, im.label))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(calibrate_region_scale(&pairs, beta)?)
}

pub const FREESPACE_CKPT: &str = "model.dpum";
pub const INTEGRATED_CKPT: &str = "model.dpui";
pub const FOREST_CKPT: &str = "forest.txt";

pub fn cmd_train(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let kind = model_kind(cfg)?;
    let store = Store::read(&ctx.input)?;
    let chans = channels(ctx, store.n_channels())?;
    let segs = store.part(true);
    let beta: f64 = cfg.get("train.beta")?;
    let mut run = RunDir::open(&ctx.out, "train", cfg)?;
    let mut summary = format!("model = {}\nchannels = {chans:?}\ntrain_windows = {}\n", cfg.raw("model"), segs.len());
    match kind {
        ModelKind::Freespace => {
            let imgs = run.time("features", || images(cfg, &segs, &chans))?;
            let tcfg = train_config(cfg, kind)?;
            let mut model = FreespaceModel::new(freespace_geometry(cfg)?, cfg.get("freespace.layers")?)?;
            model.randomize(seed::derive(cfg.seed, "init"));
            let out = run.time("train", || train(model, &imgs, &tcfg))?;
            let mut model = out.model;
            if flag(cfg, "train.calibrate")? {
                model.region_scale = calibrate(&model, &imgs, beta)?;
            }
            let acc = metrics(freespace_stats(&model, &imgs, None)?, beta)?.accuracy;
            summary.push_str(&format!(
                "best_epoch = {}\nregion_scale = {}\ntrain_accuracy = {acc:.6}\n",
                out.best_epoch, model.region_scale
            ));
            run.write(FREESPACE_CKPT, &model.to_bytes())?;
            run.write_text("trace.tsv", &trace_tsv(&out.trace))?;
        }
        ModelKind::Integrated => {
            let vecs = run.time("features", || vectors(cfg, &segs, &chans))?;
            let n_inputs = vecs.first().map_or(0, |v| v.attrs.len());
            let tcfg = train_config(cfg, kind)?;
            let mut model = integrated_model(cfg, n_inputs)?;
            model.randomize(seed::derive(cfg.seed, "init"));
            let out = run.time("train", || train(model, &vecs, &tcfg))?;
            let acc = metrics(integrated_stats(&out.model, &vecs)?, beta)?.accuracy;
            summary.push_str(&format!(
                "best_epoch = {}\nbias = {:?}\ntrain_accuracy = {acc:.6}\n",
                out.best_epoch,
                out.model.bias()
            ));
            run.write(INTEGRATED_CKPT, &out.model.to_bytes(true))?;
            run.write_text("trace.tsv", &trace_tsv(&out.trace))?;
        }
        ModelKind::Forest => {
            let x = run.time("features", || forest_rows(&segs, &chans))?;
            let y: Vec<usize> = segs.iter().map(|s| s.label.index()).collect();
            let params = forest_params(cfg)?;
            let forest = run.time("train", || fit_forest(&x, &y, &params, seed::derive(cfg.seed, "forest")))?;
            let stats = forest_stats(&forest, &x, &segs)?;
            summary.push_str(&format!("train_accuracy = {:.6}\n", metrics(stats, beta)?.accuracy));
            run.write_text(FOREST_CKPT, &forest.to_text())?;
        }
    }
    print!("{summary}");
    run.write_text("train.txt", &summary)?;
    finish(run, Vec::new())
}

fn forest_stats(forest: &Forest, x: &[Vec<f64>], segs: &[Segment]) -> Result<ConfusionStats> {
    let preds = x
        .iter()
        .map(|r| forest.predict(r).map(|p| p.0))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<Label> = segs.iter().map(|s| s.label).collect();
    Ok(ConfusionStats::from_predictions(&preds, &truth)?)
}

fn read_input(ctx: &Ctx, name: &str) -> Result<Vec<u8>> {
    let p = ctx.input.join(name);
    fs::read(&p).with_context(|| format!("reading {} (run `dpu train` first)", p.display()))
}

/// Comment-free text of a text artifact.
fn strip_comments(bytes: &[u8]) -> Result<String> {
    Ok(String::from_utf8(bytes.to_vec())?
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect())
}

fn eval_segments(ctx: &Ctx, store: &Store) -> Result<Vec<Segment>> {
    Ok(match ctx.cfg.raw("eval.set") {
        "test" => store.part(false),
        "train" => store.part(true),
        "all" => store.segments.clone(),
        other => bail!("eval.set must be test, train or all, got {other:?}"),
    })
}

/// Predictions and the two class scores (seizure first) per window.
fn predict_all(ctx: &Ctx, segs: &[Segment], chans: &[usize]) -> Result<(Vec<Label>, Vec<Vec<f64>>)> {
    let cfg = &ctx.cfg;
    let rows: Vec<(Label, Vec<f64>)> = match model_kind(cfg)? {
        ModelKind::Freespace => {
            let model = FreespaceModel::from_bytes(&read_input(ctx, FREESPACE_CKPT)?)?;
            let imgs = images(cfg, segs, chans)?;
            check_dim(model.dim(), imgs.first().map(|i| i.pixels.dim()))?;
            imgs.iter()
                .map(|im| {
                    let (_, r) = model.forward(&im.pixels)?;
                    Ok((r.label, vec![r.i1, r.i2]))
                })
                .collect::<Result<_>>()?
        }
        ModelKind::Integrated => {
            let model = IntegratedModel::from_bytes(&read_input(ctx, INTEGRATED_CKPT)?)?;
            let vecs = vectors(cfg, segs, chans)?;
            vecs.iter()
                .map(|v| {
                    let o = model.forward_fast(&v.attrs)?;
                    Ok((o.label, vec![o.s1, o.s2]))
                })
                .collect::<Result<_>>()?
        }
        ModelKind::Forest => {
            let forest = Forest::from_text(&strip_comments(&read_input(ctx, FOREST_CKPT)?)?)?;
            forest_rows(segs, chans)?
                .iter()
                .map(|r| {
                    let (l, p) = forest.predict(r)?;
                    Ok((l, vec![p, 1.0 - p]))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(rows.into_iter().unzip())
}

fn check_dim(model: (usize, usize), data: Option<(usize, usize)>) -> Result<()> {
    match data {
        Some(d) if d != model => bail!("checkpoint is {model:?} but the features are {d:?}"),
        _ => Ok(()),
    }
}

pub fn cmd_eval(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    let store = Store::read(&ctx.input)?;
    let chans = channels(ctx, store.n_channels())?;
    let segs = eval_segments(ctx, &store)?;
    let mut run = RunDir::open(&ctx.out, "eval", cfg)?;
    let (preds, scores) = run.time("predict", || predict_all(ctx, &segs, &chans))?;
    let truth: Vec<Label> = segs.iter().map(|s| s.label).collect();
    let m = metrics(ConfusionStats::from_predictions(&preds, &truth)?, cfg.get("train.beta")?)?;
    let report = format!(
        "model = {}\nset = {}\nwindows = {}\n{}",
        cfg.raw("model"),
        cfg.raw("eval.set"),
        segs.len(),
        m.to_report()
    );
    print!("{report}");
    run.write_text("eval.txt", &report)?;
    let labels = truth.iter().map(|l| l.as_byte()).collect();
    run.write("outputs.dput", &Tensor::stack(&scores, &[2], labels)?.to_bytes())?;
    finish(run, Vec::new())
}

fn profile(cfg: &Config, dim: (usize, usize)) -> Result<AberrationProfile> {
    let s = seed::derive(cfg.seed, "aberration");
    Ok(match cfg.raw("adapt.profile") {
        "identity" => AberrationProfile::identity(dim),
        "gaussian" => AberrationProfile::gaussian(dim, cfg.get("adapt.phase_sigma")?, s)?,
        "stress" => AberrationProfile::stress(dim, s)?,
        other => bail!("adapt.profile must be identity, gaussian or stress, got {other:?}"),
    })
}

fn triple_lines(prefix: &str, entries: [(&str, &Metrics); 3]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
    entries
        .iter()
        .map(|(stage, m)| {
            format!(
                "{prefix}.{stage}.accuracy = {:.6}\n{prefix}.{stage}.f{} = {}\n",
                m.accuracy,
                m.beta,
                opt(m.f_beta)
            )
        })
        .collect()
}

pub fn cmd_adapt(ctx: &Ctx) -> Result<Outcome> {
    let cfg = &ctx.cfg;
    if model_kind(cfg)? != ModelKind::Freespace {
        bail!("adaptation applies to free-space models only");
    }
    let model = FreespaceModel::from_bytes(&read_input(ctx, FREESPACE_CKPT)?)?;
    if model.n_layers() != 2 {
        bail!("adaptation needs a 2-layer checkpoint, got {} layers", model.n_layers());
    }
    let store = Store::read(&ctx.input)?;
    let chans = channels(ctx, store.n_channels())?;
    let beta: f64 = cfg.get("train.beta")?;
    let mut run = RunDir::open(&ctx.out, "adapt", cfg)?;
    let train_imgs = run.time("features", || images(cfg, &store.part(true), &chans))?;
    let test_imgs = images(cfg, &store.part(false), &chans)?;
    check_dim(model.dim(), train_imgs.first().map(|i| i.pixels.dim()))?;
    let p = profile(cfg, model.dim())?;
    let mut tcfg = train_config(cfg, ModelKind::Freespace)?;
    if let Some(e) = cfg.opt("adapt.epochs")? {
        tcfg.epochs = e;
    }
    tcfg.seed = seed::derive(cfg.seed, "adapt");
    let out = run.time("retrain", || adaptive_retrain(&model, &p, &train_imgs, &tcfg, beta))?;
    if out.model.layers[0] != model.layers[0] {
        bail!("first layer changed during adaptation");
    }
    let mut report = format!("profile = {}\n", cfg.raw("adapt.profile"));
    for (name, imgs) in [("test", &test_imgs), ("train", &train_imgs)] {
        let pre = metrics(freespace_stats(&model, imgs, None)?, beta)?;
        let post = metrics(freespace_stats(&model, imgs, Some(&p))?, beta)?;
        let adapted = metrics(freespace_stats(&out.model, imgs, Some(&p))?, beta)?;
        report.push_str(&triple_lines(name, [("pre", &pre), ("post", &post), ("adapted", &adapted)]));
    }
    print!("{report}");
    run.write_text("adapt.txt", &report)?;
    run.write("adapted.dpum", &out.model.to_bytes())?;
    run.write_text("adapt-trace.tsv", &trace_tsv(&out.trace))?;
    finish(run, Vec::new())
}

pub fn ops_report(cfg: &Config) -> Result<OpsReport> {
    let rate: f64 = cfg.get("ops.rate")?;
    let mut r = match cfg.raw("ops.kind") {
        "freespace" => OpsReport::freespace(cfg.get("ops.rows")?, cfg.get("ops.cols")?, rate)?,
        "integrated" => OpsReport::integrated(cfg.get("ops.inputs")?, cfg.get("ops.outputs")?, rate)?,
        other => bail!("ops.kind must be freespace or integrated, got {other:?}"),
    };
    if let Some(a) = cfg.opt("ops.area_mm2")? {
        r = r.with_area(a)?;
    }
    if let Some(w) = cfg.opt("ops.power_w")? {
        r = r.with_power(w)?;
    }
    Ok(r)
}

pub fn cmd_ops(ctx: &Ctx) -> Result<Outcome> {
    let text = ops_report(&ctx.cfg)?.to_text();
    let mut run = RunDir::open(&ctx.out, "ops", &ctx.cfg)?;
    print!("{text}");
    run.write_text("ops.txt", &text)?;
    finish(run, Vec::new())
}

const REPORT_SOURCES: &[&str] = &["ingest.tsv", "ranking.tsv", "train.txt", "eval.txt", "adapt.txt", "ops.txt"];
const VERBS: &[&str] = &["synth", "ingest", "select", "train", "eval", "adapt", "ops"];

/// Collects the text outputs and manifest checks found in the input directory.
pub fn cmd_report(ctx: &Ctx) -> Result<Outcome> {
    let mut body = String::new();
    let mut failures = Vec::new();
    for verb in VERBS {
        let name = format!("manifest-{verb}.txt");
        if !ctx.input.join(&name).exists() {
            continue;
        }
        match verify_manifest(&ctx.input, &name) {
            Ok(arts) => {
                let text = fs::read_to_string(ctx.input.join(&name))?;
                body.push_str(&format!(
                    "[{verb}]\nmanifest_hash = {}\nartifacts = {}\nverified = true\n",
                    field(&text, "manifest_hash").unwrap_or("NA"),
                    arts.len()
                ));
            }
            Err(e) => {
                body.push_str(&format!("[{verb}]\nverified = false\n"));
                failures.push(format!("{name}: {e:#}"));
            }
        }
    }
    for src in REPORT_SOURCES {
        let p = ctx.input.join(src);
        if let Ok(bytes) = fs::read(&p) {
            body.push_str(&format!("[{src}]\n{}", strip_comments(&bytes)?));
        }
    }
    if body.is_empty() {
        bail!("nothing to report in {}", ctx.input.display());
    }
    let mut run = RunDir::open(&ctx.out, "report", &ctx.cfg)?;
    print!("{body}");
    run.write_text("report.txt", &body)?;
    finish(run, failures)
}
