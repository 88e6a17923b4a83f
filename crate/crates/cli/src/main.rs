use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use dforce_cli::checkpoint;
use dforce_cli::config::ExperimentConfig;
use dforce_cli::experiment::{self, Artifacts, Metric, RunReport};
use dforce_cli::frames::{self, FrameFormat};
use dforce_cli::io::{csv_bytes, write_atomic, write_json};
use dforce_core::curation::{
    accept_crop, assign_bucket, fps_normalize, max_interior_rectangle, parse_fps, BinaryMask,
    BoxMaskProvider, BucketGrid, MaskProvider, Rect,
};
use dforce_core::flow::Denoiser;
use dforce_core::forcing::{drift_metric, rollout, segment_bounds, RolloutConfig};
use dforce_core::preference::{manual_score, ManualCategory, PreferenceLabel};
use dforce_core::rng::seeded;
use dforce_core::schedule::{ad_schedule, count_nondecreasing, count_unconstrained, FoppSampler};
use num_bigint::BigUint;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "dforce", version, about = "Diffusion-forcing toolkit at desk scale")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, or output file for single-table commands.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Validate inputs and print the resolved config without computing.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Count, sample or plan per-frame timestep schedules.
    #[command(subcommand)]
    Schedule(ScheduleCmd),
    /// Train a denoiser from a config.
    Train,
    /// Sample clips from a checkpoint.
    Sample(SampleArgs),
    /// Sliding-window long rollout from a checkpoint.
    Rollout(RolloutArgs),
    /// Train the pairwise reward model from a config.
    RewardTrain(RewardArgs),
    /// Staged preference optimization from a config.
    Dpo(DpoArgs),
    /// Largest clean crop of a detection mask.
    Crop(CropArgs),
    /// Assign target frame rates and buckets to a clip manifest.
    Bucket(BucketArgs),
    /// Run the whole configured pipeline and write a report.
    Report,
    /// Score manual annotations, e.g. `physics-violation=2`.
    ScoreManual {
        #[arg(required = true)]
        marks: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ScheduleCmd {
    /// Exact counts of non-decreasing and unconstrained schedules.
    Count {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        timesteps: usize,
    },
    /// Uniform non-decreasing schedules as JSON lines.
    Sample {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        timesteps: usize,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Pin frame `F` (1-based) to level `T`, as `F:T`.
        #[arg(long)]
        anchor: Option<String>,
    },
    /// Adaptive-difference inference plan as a CSV matrix.
    Ad {
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        timesteps: usize,
        #[arg(long, default_value_t = 0)]
        diff: usize,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Frames per clip; defaults to the checkpoint's window.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Discrete levels `T`; defaults to the config's, else 50.
    #[arg(long)]
    timesteps: Option<usize>,
    /// AD difference `s`.
    #[arg(long)]
    diff: Option<usize>,
    /// Prompt id for every clip; by default clips cycle through the prompts.
    #[arg(long)]
    prompt: Option<usize>,
    #[arg(long, value_enum, default_value_t = FrameFormat::Csv)]
    format: FrameFormat,
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    f_prev: Option<usize>,
    #[arg(long)]
    f_new: Option<usize>,
    #[arg(long)]
    total: Option<usize>,
    #[arg(long)]
    history_noise: Option<f64>,
    /// AD difference `s` for new frames.
    #[arg(long)]
    diff: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    prompt: usize,
    /// Also write every frame side by side as one PGM image.
    #[arg(long)]
    strip: bool,
}

#[derive(Args)]
struct RewardArgs {
    /// Write the held-out pairs as sequence CSVs plus a JSON-lines index.
    #[arg(long)]
    export_pairs: bool,
}

#[derive(Args)]
struct DpoArgs {
    /// Start from this checkpoint instead of training a base model.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct CropArgs {
    /// Mask as a PBM image; black pixels mark usable cells.
    #[arg(long, conflicts_with = "boxes")]
    mask: Option<PathBuf>,
    /// JSON `{"width": W, "height": H, "boxes": [{top, left, bottom, right}]}`.
    #[arg(long)]
    boxes: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    area_threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    ar_tolerance: f64,
}

#[derive(Args)]
struct BucketArgs {
    /// CSV with columns path, duration, width, height, fps.
    #[arg(long)]
    manifest: PathBuf,
    /// Bucket grid as JSON; a default 4x3 grid is used when absent.
    #[arg(long)]
    grid: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = configure_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DFORCE_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("DFORCE_THREADS={v:?} is not a count"))?;
        ensure!(n > 0, "DFORCE_THREADS must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Schedule(cmd) => schedule(g, cmd),
        Command::Train => train(g),
        Command::Sample(a) => sample(g, a),
        Command::Rollout(a) => rollout_cmd(g, a),
        Command::RewardTrain(a) => reward_train(g, a),
        Command::Dpo(a) => dpo(g, a),
        Command::Crop(a) => crop(g, a),
        Command::Bucket(a) => bucket(g, a),
        Command::Report => report(g),
        Command::ScoreManual { marks } => score_manual(&marks),
    }
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let path = g.config.as_ref().context("this command needs --config")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn optional_config(g: &Global) -> Result<Option<ExperimentConfig>> {
    g.config.as_ref().map(|_| load_config(g)).transpose()
}

fn out_dir(g: &Global, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
    g.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out.clone()))
        .context("no output directory: pass --out or set `out` in the config")
}

/// Writes to `--out` when given, else prints.
fn emit(g: &Global, text: &str) -> Result<()> {
    match &g.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dry_run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<()> {
    println!("# config hash {}", experiment::config_hash(cfg)?);
    if let Some(o) = out {
        println!("# output directory {}", o.display());
    }
    print!("{}", cfg.to_toml()?);
    Ok(())
}

fn schedule(g: &Global, cmd: ScheduleCmd) -> Result<()> {
    match cmd {
        ScheduleCmd::Count { frames, timesteps } => {
            let nd = count_nondecreasing(frames, timesteps)?;
            let un = count_unconstrained(frames, timesteps)?;
            let ratio = Ratio::new(un.clone(), nd.clone());
            let digits = |n: &BigUint| n.to_string().len();
            let mut text = format!("nondecreasing {nd}\nunconstrained {un}\n");
            text += &format!("nondecreasing_digits {}\nunconstrained_digits {}\n", digits(&nd), digits(&un));
            text += &format!("ratio {}/{}\n", ratio.numer(), ratio.denom());
            text += &format!("ratio_integer_part {}\n", ratio.to_integer());
            emit(g, &text)
        }
        ScheduleCmd::Sample { frames, timesteps, samples, anchor } => {
            let sampler = FoppSampler::new(frames, timesteps)?;
            let anchor = anchor.map(|a| parse_anchor(&a, frames, timesteps)).transpose()?;
            let mut rng = seeded(g.seed.unwrap_or(0));
            let mut text = String::new();
            for _ in 0..samples {
                let v = match anchor {
                    Some((f, t)) => sampler.sample_anchored(f, t, &mut rng),
                    None => sampler.sample(&mut rng),
                };
                text += &serde_json::to_string(&v.timesteps)?;
                text.push('\n');
            }
            emit(g, &text)
        }
        ScheduleCmd::Ad { frames, timesteps, diff } => {
            let plan = ad_schedule(frames, timesteps, diff)?;
            let mut text = String::from("step");
            for f in 0..frames {
                text += &format!(",f{f}");
            }
            text.push('\n');
            for (k, row) in plan.matrix().iter().enumerate() {
                text += &k.to_string();
                for t in row {
                    text += &format!(",{t}");
                }
                text.push('\n');
            }
            emit(g, &text)
        }
    }
}

fn parse_anchor(text: &str, frames: usize, timesteps: usize) -> Result<(usize, usize)> {
    let (f, t) = text.split_once(':').context("anchor must look like FRAME:LEVEL")?;
    let (f, t): (usize, usize) = (f.trim().parse()?, t.trim().parse()?);
    ensure!((1..=frames).contains(&f), "anchor frame {f} outside 1..={frames}");
    ensure!((1..=timesteps).contains(&t), "anchor level {t} outside 1..={timesteps}");
    Ok((f, t))
}

fn print_metrics(report: &RunReport) {
    for Metric { operation, metric, step, value } in &report.metrics {
        if step.is_none() {
            println!("{operation:>14} {metric:<36} {value:.6}");
        }
    }
}

fn finish(g: &Global, cfg: &ExperimentConfig, report: &RunReport, art: &Artifacts) -> Result<()> {
    let dir = out_dir(g, Some(cfg))?;
    experiment::write_run(&dir, cfg, report, art)?;
    print_metrics(report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn train(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    if g.dry_run {
        return dry_run(&cfg, g.out.as_deref().or(cfg.out.as_deref()));
    }
    let dir = out_dir(g, Some(&cfg))?;
    let (report, art) = experiment::run_train(&cfg)?;
    experiment::write_run(&dir, &cfg, &report, &art)?;
    print_metrics(&report);
    println!("wrote {}", dir.display());
    Ok(())
}

fn report(g: &Global) -> Result<()> {
    let cfg = load_config(g)?;
    if g.dry_run {
        return dry_run(&cfg, g.out.as_deref().or(cfg.out.as_deref()));
    }
    out_dir(g, Some(&cfg))?;
    let (report, art) = experiment::run_experiment(&cfg)?;
    finish(g, &cfg, &report, &art)
}

fn sample(g: &Global, a: SampleArgs) -> Result<()> {
    let cfg = optional_config(g)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let c = *model.config();
    let frames = a.frames.unwrap_or(c.max_positions);
    ensure!(frames >= 1 && frames <= c.max_positions, "--frames must lie in 1..={}", c.max_positions);
    let t = a.timesteps.or(cfg.as_ref().map(|c| c.train.max_timestep)).unwrap_or(50);
    let diff = a.diff.or(cfg.as_ref().map(|c| c.sample.diff)).unwrap_or(0);
    ensure!(t >= 1 && diff <= t, "need 1 <= timesteps and diff <= timesteps");
    if let Some(p) = a.prompt {
        ensure!(p < c.num_prompts, "prompt {p} out of range (checkpoint has {})", c.num_prompts);
    }
    if a.format == FrameFormat::Pgm {
        ensure!(is_square(c.dim), "latent dimension {} is not a perfect square; use CSV output", c.dim);
    }
    let dir = out_dir(g, cfg.as_ref())?;
    if g.dry_run {
        println!("would write {} clips of {frames} frames (T={t}, s={diff}) to {}", a.count, dir.display());
        return Ok(());
    }
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let samples = sample_clips(&model, frames, t, diff, a.count, a.prompt, seed)?;
    let files = experiment::write_samples(&dir, &samples, a.format)?;
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn is_square(d: usize) -> bool {
    let s = (d as f64).sqrt().round() as usize;
    s * s == d
}

fn sample_clips(model: &Denoiser, frames: usize, t: usize, diff: usize, count: usize, prompt: Option<usize>, seed: u64) -> Result<Vec<dforce_core::flow::LatentSequence>> {
    use rayon::prelude::*;
    let prompts = model.config().num_prompts;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let p = prompt.unwrap_or(i % prompts);
            let mut rng = dforce_core::rng::split(seed, i as u64);
            Ok(experiment::generate(model, frames, t, diff, p, &mut rng)?)
        })
        .collect()
}

#[derive(Serialize)]
struct SegmentEntry {
    segment: usize,
    start: usize,
    end: usize,
    drift: Option<f64>,
}

#[derive(Serialize)]
struct RolloutReport {
    code_version: &'static str,
    seed: u64,
    prompt: usize,
    rollout: RolloutConfig,
    finite: bool,
    drift: Option<f64>,
    segments: Vec<SegmentEntry>,
}

fn rollout_cmd(g: &Global, a: RolloutArgs) -> Result<()> {
    let cfg = optional_config(g)?;
    let model = checkpoint::load(&a.checkpoint)?;
    let base = cfg.as_ref().and_then(|c| c.rollout);
    let window = model.config().max_positions;
    let f_prev = a.f_prev.or(base.map(|b| b.f_prev)).context("--f-prev is required without a [rollout] section")?;
    let f_new = a.f_new.unwrap_or(base.map_or(window.saturating_sub(f_prev), |b| b.f_new));
    let total = a.total.or(base.map(|b| b.total_frames)).context("--total is required without a [rollout] section")?;
    let mut rc = RolloutConfig::new(f_prev, f_new, total);
    if let Some(b) = base {
        rc.history_noise = b.history_noise;
        rc.diff = b.diff;
        rc.max_timestep = b.max_timestep;
    }
    rc.history_noise = a.history_noise.unwrap_or(rc.history_noise);
    rc.diff = a.diff.unwrap_or(rc.diff);
    rc.max_timestep = a.timesteps.unwrap_or(rc.max_timestep);
    rc.validate()?;
    ensure!(rc.window() <= window, "window {} exceeds the checkpoint's {window} positions", rc.window());
    ensure!(a.prompt < model.config().num_prompts, "prompt {} out of range", a.prompt);
    if a.strip {
        ensure!(is_square(model.config().dim), "--strip needs a perfect-square latent dimension");
    }
    let dir = out_dir(g, cfg.as_ref())?;
    if g.dry_run {
        println!("{}", serde_json::to_string_pretty(&rc)?);
        return Ok(());
    }
    let seed = g.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let x = rollout(&model, &rc, a.prompt, &mut seeded(seed))?;
    let spec = cfg.as_ref().map(|c| c.spec());
    let seg = spec.as_ref().map(|s| experiment::segment_drift(&x, s, a.prompt, &rc));
    let segments = segment_bounds(&rc)
        .into_iter()
        .enumerate()
        .map(|(k, (start, end))| SegmentEntry { segment: k, start, end, drift: seg.as_ref().map(|s| s[k]) })
        .collect();
    let report = RolloutReport {
        code_version: experiment::CODE_VERSION,
        seed,
        prompt: a.prompt,
        rollout: rc,
        finite: x.is_finite(),
        drift: spec.as_ref().map(|s| drift_metric(&x, s, a.prompt, rc.window())),
        segments,
    };
    write_atomic(&dir.join("rollout.csv"), frames::csv_text(&x).as_bytes())?;
    if a.strip {
        write_atomic(&dir.join("rollout.pgm"), &frames::strip_bytes(&x)?)?;
    }
    write_json(&dir.join("rollout.json"), &report)?;
    if let Some(d) = report.drift {
        println!("drift {d:.6}");
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct PairLine {
    a: PathBuf,
    b: PathBuf,
    label: PreferenceLabel,
}

fn reward_train(g: &Global, a: RewardArgs) -> Result<()> {
    let cfg = load_config(g)?;
    ensure!(cfg.reward.is_some(), "config has no [reward] section");
    if g.dry_run {
        return dry_run(&cfg, g.out.as_deref().or(cfg.out.as_deref()));
    }
    let dir = out_dir(g, Some(&cfg))?;
    let (report, out) = experiment::run_reward_only(&cfg)?;
    if a.export_pairs {
        let pair_dir = dir.join("pairs");
        let mut index = String::new();
        for (i, p) in out.test_pairs.iter().enumerate() {
            let (pa, pb) = (pair_dir.join(format!("{i:05}_a.csv")), pair_dir.join(format!("{i:05}_b.csv")));
            write_atomic(&pa, frames::csv_text(&p.a).as_bytes())?;
            write_atomic(&pb, frames::csv_text(&p.b).as_bytes())?;
            index += &serde_json::to_string(&PairLine { a: pa, b: pb, label: p.label })?;
            index.push('\n');
        }
        write_atomic(&dir.join("pairs.jsonl"), index.as_bytes())?;
    }
    let art = Artifacts { reward: Some(out.model), ..Artifacts::default() };
    finish(g, &cfg, &report, &art)
}

fn dpo(g: &Global, a: DpoArgs) -> Result<()> {
    let cfg = load_config(g)?;
    ensure!(cfg.dpo.is_some(), "config has no [dpo] section");
    let base = a.checkpoint.as_deref().map(checkpoint::load).transpose()?;
    if let Some(m) = &base {
        ensure!(
            *m.config() == cfg.denoiser(),
            "checkpoint shape {:?} does not match the config's model {:?}",
            m.config(),
            cfg.denoiser()
        );
    }
    if g.dry_run {
        return dry_run(&cfg, g.out.as_deref().or(cfg.out.as_deref()));
    }
    out_dir(g, Some(&cfg))?;
    let (report, art) = experiment::run_dpo_only(&cfg, base)?;
    finish(g, &cfg, &report, &art)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxesFile {
    width: usize,
    height: usize,
    boxes: Vec<Rect>,
}

#[derive(Serialize)]
struct CropOutput {
    width: usize,
    height: usize,
    rect: Option<Rect>,
    area: usize,
    verdict: dforce_core::curation::CropVerdict,
}

fn read_pbm(path: &Path) -> Result<BinaryMask> {
    let img = image::ImageReader::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .with_guessed_format()?
        .decode()
        .with_context(|| format!("decoding {}", path.display()))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    // Bitmaps decode to black = 0, white = 255.
    let cells = img.as_raw().iter().map(|&p| u8::from(p == 0)).collect();
    Ok(BinaryMask::new(h, w, cells)?)
}

fn crop(g: &Global, a: CropArgs) -> Result<()> {
    let mask = match (&a.mask, &a.boxes) {
        (Some(p), None) => read_pbm(p)?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let f: BoxesFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            BoxMaskProvider { boxes: f.boxes }.mask(f.width, f.height)?
        }
        _ => bail!("pass exactly one of --mask or --boxes"),
    };
    let (w, h) = (mask.cols(), mask.rows());
    let best = max_interior_rectangle(&mask);
    let rect = (!best.degenerate).then_some(best.rect);
    let verdict = match &rect {
        Some(r) => accept_crop(r, w, h, a.area_threshold, a.ar_tolerance),
        None => dforce_core::curation::CropVerdict {
            accepted: false,
            area_fraction: 0.0,
            aspect_deviation: f64::INFINITY,
            reasons: vec!["mask has no usable cell".into()],
        },
    };
    let out = CropOutput { width: w, height: h, rect, area: best.area, verdict };
    let mut text = serde_json::to_string_pretty(&out)?;
    text.push('\n');
    emit(g, &text)
}

#[derive(Deserialize)]
struct ManifestRow {
    path: String,
    duration: f64,
    width: usize,
    height: usize,
    fps: String,
}

#[derive(Serialize)]
struct BucketRow {
    path: String,
    duration: f64,
    width: usize,
    height: usize,
    fps: String,
    target_fps: u32,
    bucket_id: usize,
    duration_index: usize,
    aspect_index: usize,
}

fn default_grid() -> BucketGrid {
    BucketGrid {
        duration_centers: vec![2.0, 4.0, 8.0, 16.0],
        aspect_centers: vec![9.0 / 16.0, 1.0, 16.0 / 9.0],
        capacities: vec![vec![16; 3], vec![8; 3], vec![4; 3], vec![2; 3]],
    }
}

fn bucket(g: &Global, a: BucketArgs) -> Result<()> {
    let grid = match &a.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => default_grid(),
    };
    grid.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.manifest)
        .with_context(|| format!("reading {}", a.manifest.display()))?;
    let mut rows = Vec::new();
    for (i, r) in reader.deserialize::<ManifestRow>().enumerate() {
        let r = r.with_context(|| format!("manifest row {}", i + 1))?;
        ensure!(r.height > 0, "manifest row {}: height must be positive", i + 1);
        let b = assign_bucket(r.duration, r.width as f64 / r.height as f64, &grid)
            .with_context(|| format!("manifest row {}", i + 1))?;
        let target = fps_normalize(parse_fps(&r.fps)?).with_context(|| format!("manifest row {}", i + 1))?;
        rows.push(BucketRow {
            path: r.path,
            duration: r.duration,
            width: r.width,
            height: r.height,
            fps: r.fps,
            target_fps: target,
            bucket_id: b.id,
            duration_index: b.duration_index,
            aspect_index: b.aspect_index,
        });
    }
    if g.dry_run {
        println!("{} rows validated", rows.len());
        return Ok(());
    }
    emit(g, std::str::from_utf8(&csv_bytes(&rows)?)?)
}

fn score_manual(marks: &[String]) -> Result<()> {
    let mut parsed = Vec::new();
    for m in marks {
        let (name, n) = m.split_once('=').unwrap_or((m.as_str(), "1"));
        let cat: ManualCategory = name.trim().parse().map_err(|e| anyhow::anyhow!("{e}"))?;
        let n: u32 = n.trim().parse().with_context(|| format!("bad count in {m:?}"))?;
        parsed.push((cat, n));
    }
    println!("{}", manual_score(&parsed));
    Ok(())
}
