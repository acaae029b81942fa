//! The `sxf` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use super::{
    compare_blending, corpus_samples, evaluate, midpoint_sweep, read_corpus, run_suite, thread_budget, write_atomic,
    write_png, BlendMode, RenderRequest, Renderer, Suite,
};
use crate::decoder::{train_blender, BlenderConfig, BlenderTrainConfig};
use crate::scenegen::{generate, read_bundle, Preset, PresetOptions, SceneBundle, Side};
use crate::training::{optimize_time, optimize_view, Ablation, OptimConfig, SavedModel, TimeMode, Training, ViewVariant};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sxf", version, about = "Stereo video view and time interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    View,
    Time,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Blend {
    Learned,
    Consistency,
}

impl From<Blend> for BlendMode {
    fn from(b: Blend) -> Self {
        match b {
            Blend::Learned => BlendMode::Learned,
            Blend::Consistency => BlendMode::Consistency,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic scene bundle (or a corpus of them).
    Generate {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        frames: Option<usize>,
        /// Frame size as HxW.
        #[arg(long, value_parser = parse_size)]
        size: Option<(usize, usize)>,
        #[arg(long, default_value_t = 0.0)]
        gain_jitter: f32,
        /// Scene count of the blender corpus.
        #[arg(long)]
        corpus_size: Option<usize>,
    },
    /// Fit a view network, or one view's time network, to a scene.
    Optimize {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        planes: Option<usize>,
        #[arg(long)]
        ablate: Option<String>,
        /// View whose time network is optimized.
        #[arg(long, default_value = "left")]
        side: String,
        /// Continue from a checkpoint that holds optimizer state.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        capacity: Option<usize>,
        #[arg(long)]
        log_every: Option<usize>,
    },
    /// Render one view-time coordinate to a PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        view: PathBuf,
        #[arg(long = "timeL")]
        time_l: PathBuf,
        #[arg(long = "timeR")]
        time_r: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        u: f32,
        #[arg(long)]
        t: f32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "consistency")]
        blend: Blend,
        #[arg(long)]
        blender: Option<PathBuf>,
    },
    /// Score the middle view at every time midpoint against ground truth.
    Eval {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        view: PathBuf,
        #[arg(long = "timeL")]
        time_l: PathBuf,
        #[arg(long = "timeR")]
        time_r: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "consistency")]
        blend: Blend,
        #[arg(long)]
        blender: Option<PathBuf>,
    },
    /// Train the blending network on a synthetic corpus.
    TrainBlender {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenes held out from training for the comparison report.
        #[arg(long, default_value_t = 1)]
        holdout: usize,
    },
    /// Run an ablation suite and write report.json.
    Ablate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(h)?, p(w)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn print_json(value: &impl serde::Serialize) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn optimize(bundle: &SceneBundle, args: OptimizeArgs) -> Result<()> {
    let OptimizeArgs { kind, out, iters, seed, planes, ablate, side, resume, capacity, log_every } = args;
    let d = OptimConfig::default();
    let cfg = OptimConfig {
        iterations: iters.unwrap_or(d.iterations),
        seed,
        capacity: capacity.unwrap_or(d.capacity),
        log_every: log_every.unwrap_or(d.log_every),
        ..d
    };
    let ablate: Option<Ablation> = ablate.as_deref().map(str::parse).transpose()?;
    let resume = resume.map(|p| -> Result<_> {
        let ck = crate::decoder::Checkpoint::read(&p)?;
        let adam = SavedModel::adam_of(&ck)?.ok_or_else(|| Error::Config(format!("{} has no optimizer state", p.display())))?;
        Ok((SavedModel::from_checkpoint(&ck)?, adam))
    });
    let resume = resume.transpose()?;
    let mut log = |r: &crate::training::LossReport| print_json(r);
    let started = Instant::now();
    match kind {
        Kind::View => {
            let mut variant = ViewVariant::default();
            if let Some(a) = ablate {
                a.apply_view(&mut variant)?;
            }
            if let Some(k) = planes {
                variant.planes = k;
            }
            let resume = resume.map(|(m, a)| m.into_view().map(|m| (m, a))).transpose()?;
            let t = optimize_view(bundle, variant, &cfg, resume, &mut log)?;
            SavedModel::View(t.model).save(&out, Some(&t.adam), Some(Training::Optim(&cfg)))?;
        }
        Kind::Time => {
            let side: Side = side.parse()?;
            let mode = ablate.map(Ablation::time_mode).transpose()?.unwrap_or(TimeMode::NonUniform);
            let resume = resume.map(|(m, a)| m.into_time().map(|m| (m, a))).transpose()?;
            let t = optimize_time(bundle, side, mode, &cfg, resume, &mut log)?;
            SavedModel::Time(t.model).save(&out, Some(&t.adam), Some(Training::Optim(&cfg)))?;
        }
    }
    eprintln!("optimized in {:.1}s, wrote {}", started.elapsed().as_secs_f64(), out.display());
    Ok(())
}

struct OptimizeArgs {
    kind: Kind,
    out: PathBuf,
    iters: Option<usize>,
    seed: u64,
    planes: Option<usize>,
    ablate: Option<String>,
    side: String,
    resume: Option<PathBuf>,
    capacity: Option<usize>,
    log_every: Option<usize>,
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { preset, out, seed, frames, size, gain_jitter, corpus_size } => {
            let which: Preset = preset.parse()?;
            let scenes = generate(which, &PresetOptions { seed, frames, size, gain_jitter, corpus_size }, &out)?;
            eprintln!("wrote {} scene(s) to {}", scenes.len(), out.display());
        }
        Command::Optimize { scene, kind, out, iters, seed, planes, ablate, side, resume, capacity, log_every } => {
            let bundle = read_bundle(&scene)?;
            optimize(&bundle, OptimizeArgs { kind, out, iters, seed, planes, ablate, side, resume, capacity, log_every })?;
        }
        Command::Render { scene, view, time_l, time_r, u, t, out, blend, blender } => {
            let req = RenderRequest::new(u, t, blend.into())?;
            let bundle = read_bundle(&scene)?;
            let renderer = Renderer::load(&view, &time_l, &time_r, blender.as_deref())?;
            let started = Instant::now();
            let img = renderer.render(&bundle.frames, &req)?;
            eprintln!("rendered (u={u}, t={t}) in {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
            write_png(&out, &img)?;
        }
        Command::Eval { scene, view, time_l, time_r, out, blend, blender } => {
            let bundle = read_bundle(&scene)?;
            let renderer = Renderer::load(&view, &time_l, &time_r, blender.as_deref())?;
            let coords = midpoint_sweep(bundle.scene.frames);
            let report = evaluate(&bundle, &renderer, &coords, blend.into(), thread_budget())?;
            write_json(&out, &report)?;
            print_json(&report.aggregate);
        }
        Command::TrainBlender { corpus, out, iters, seed, holdout } => {
            let bundles = read_corpus(&corpus)?;
            let holdout = holdout.min(bundles.len() - 1);
            let (train, held) = bundles.split_at(bundles.len() - holdout);
            let mut samples = Vec::new();
            for b in train {
                samples.extend(corpus_samples(b)?);
            }
            let triplets: Vec<_> = samples.into_iter().map(|s| s.triplet).collect();
            let d = BlenderTrainConfig::default();
            let cfg = BlenderTrainConfig { iterations: iters.unwrap_or(d.iterations), seed, ..d };
            let (net, adam, losses) = train_blender(BlenderConfig::default(), &cfg, &triplets)?;
            SavedModel::Blender(net.clone()).save(&out, Some(&adam), Some(Training::Blender(&cfg)))?;
            let mut held_samples = Vec::new();
            for b in held {
                held_samples.extend(corpus_samples(b)?);
            }
            if !held_samples.is_empty() {
                print_json(&compare_blending(&net, &held_samples)?);
            }
            if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
                eprintln!("blender loss {first:.4} -> {last:.4}");
            }
        }
        Command::Ablate { scene, suite, out } => {
            let bundle = read_bundle(&scene)?;
            let suite = Suite::read(&suite)?;
            let report = run_suite(&bundle, &suite, &mut |r| {
                eprintln!("{}: {:.2} dB", r.name, r.aggregate.psnr_mean);
            })?;
            write_json(&out, &report)?;
            print_json(&report.ordering);
        }
    }
    Ok(())
}

/// Runs the tool on `args` (program name first) and returns the exit code.
/// Failures print one `error: <category>: <message>` line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {}", e.category(), e.to_string().replace('\n', " "));
            1
        }
    }
}
