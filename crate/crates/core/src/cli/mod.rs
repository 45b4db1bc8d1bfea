//! Command-line front end. One subcommand per pipeline stage plus a
//! one-shot `pipeline` command and a `timeit` wrapper.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error. Outputs are
//! written atomically (temp file + rename) and every command that produces
//! files leaves a `run.json` provenance record (see [`provenance`]).

mod fvdir;
pub mod provenance;

pub use fvdir::{read_fv_dir, write_fv_dir};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;

use crate::classic::{all_in_focus, fm_curve, wta_depth, DepthUnit};
use crate::convolve::BorderPolicy;
use crate::error::{Error, Result};
use crate::focusvol::{aggregation_map, cumulative_variant, ddl_focus_volume, multiscale_volumes, FocusVolume};
use crate::kernels::{ddl_kernel, standard_laplacian, Orientation};
use crate::metrics::evaluate;
use crate::noise::{apply_noise, NoiseKind, NoiseSpec};
use crate::refiner::{context_encode, refine, RefinerWeights, DEFAULT_ITERATIONS};
use crate::stackio::{
    depth_format_for, load_image, load_stack_from_manifest, mean_image, read_depth, read_pfm,
    write_atomic, write_depth, write_image_png16, write_image_png8, ColorMode, FocalStack,
    StackManifest,
};
use crate::synth::{generate, DepthPattern, SynthSpec, Texture};
use provenance::{write_run_record, RunRecord, RunTarget, TimingRecord};

#[derive(Debug, Parser)]
#[command(name = "sff", version, about = "Shape-from-focus toolkit", max_term_width = 100)]
pub struct Cli {
    /// Worker threads for internally parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for stochastic commands (noise, synth, refine).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Progress chatter on stderr.
    #[arg(long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect focus kernels.
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
    /// Compute a focus volume and write one PFM per slice plus an index.
    Fv(FvArgs),
    /// Winner-takes-all depth from a focus volume or a manifest.
    Depth(DepthArgs),
    /// Compose an all-in-focus image from a stack and a depth map.
    Aif(AifArgs),
    /// Export one pixel's focus-measure curve as CSV.
    Fmcurve(FmcurveArgs),
    /// Corrupt a stack with seeded noise and write a new stack + manifest.
    Noise(NoiseArgs),
    /// Evaluate a predicted depth map against ground truth.
    Eval(EvalArgs),
    /// Recurrent multi-scale depth refinement with seeded weights.
    Refine(RefineArgs),
    /// Generate a synthetic focal stack with exact ground truth.
    Synth(SynthArgs),
    /// Manifest -> focus volume -> depth -> all-in-focus [-> metrics].
    Pipeline(PipelineArgs),
    /// Run another subcommand N times and record mean/stddev wall time.
    Timeit(TimeitArgs),
}

#[derive(Debug, Subcommand)]
pub enum KernelsAction {
    /// Print a kernel as a text matrix.
    Dump {
        /// Dilation rate (ignored for --theta iso).
        #[arg(long, default_value_t = 1)]
        r: u32,
        /// Orientation in degrees (0, 45, 90, 135) or "iso" for the
        /// standard 3x3 Laplacian.
        #[arg(long)]
        theta: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum UnitArg {
    Index,
    Dist,
}

impl From<UnitArg> for DepthUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Index => DepthUnit::Index,
            UnitArg::Dist => DepthUnit::FocalDistance,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BorderArg {
    Replicate,
    Reflect,
    Zero,
}

impl From<BorderArg> for BorderPolicy {
    fn from(b: BorderArg) -> Self {
        match b {
            BorderArg::Replicate => BorderPolicy::Replicate,
            BorderArg::Reflect => BorderPolicy::Reflect,
            BorderArg::Zero => BorderPolicy::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Gaussian,
    #[value(name = "salt_pepper", alias = "salt-pepper", alias = "sp")]
    SaltPepper,
    Speckle,
}

impl From<KindArg> for NoiseKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Gaussian => NoiseKind::Gaussian,
            KindArg::SaltPepper => NoiseKind::SaltPepper,
            KindArg::Speckle => NoiseKind::Speckle,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PatternArg {
    Staircase,
    Slant,
    Checker,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TextureArg {
    Checker,
    #[value(name = "noise-texture", alias = "noise")]
    NoiseTexture,
}

#[derive(Debug, Args)]
pub struct FvArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Dilation rate; with --cumulative, the largest rate included.
    #[arg(long, default_value_t = 4)]
    pub r: u32,
    /// Average the volumes for rates 1..=r instead of rate r alone.
    #[arg(long)]
    pub cumulative: bool,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DepthArgs {
    /// Directory written by `fv`.
    #[arg(long, conflicts_with = "manifest")]
    pub fv: Option<PathBuf>,
    /// Compute the volume on the fly from this manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub r: u32,
    #[arg(long)]
    pub cumulative: bool,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    #[arg(long, value_enum, default_value_t = UnitArg::Index)]
    pub unit: UnitArg,
    /// Output depth map (.pfm or .png).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AifArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Depth map in index units (.pfm or .png with sidecar).
    #[arg(long)]
    pub depth: PathBuf,
    /// Output PNG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FmcurveArgs {
    /// Directory written by `fv`.
    #[arg(long)]
    pub fv: PathBuf,
    /// Pixel as X,Y.
    #[arg(long)]
    pub px: String,
    /// Optional ground-truth depth map (index units) to annotate.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Variance (gaussian/speckle) or density (salt & pepper).
    #[arg(long)]
    pub param: f64,
    /// Output directory for the corrupted stack.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Optional validity mask (nonzero pixels are valid).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// BadPix threshold in depth units. A common convention when nothing
    /// else is agreed is 7% of the ground-truth range.
    #[arg(long = "badpix-t")]
    pub badpix_t: f64,
    /// Unit both maps are expressed in.
    #[arg(long, value_enum, default_value_t = UnitArg::Index)]
    pub unit: UnitArg,
    /// Output report JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Refinement iterations.
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iters: usize,
    /// Number of dilation rates feeding the aggregation map.
    #[arg(long, default_value_t = 4)]
    pub rates: u32,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    /// Output depth map (.pfm).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every iteration's full-resolution depth here.
    #[arg(long)]
    pub dump_intermediates: Option<PathBuf>,
    /// Serialize the (seeded or loaded) weights to this container.
    #[arg(long)]
    pub save_weights: Option<PathBuf>,
    /// Load weights from a container instead of seeding them.
    #[arg(long)]
    pub load_weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "h")]
    pub height: usize,
    #[arg(long = "w")]
    pub width: usize,
    /// Slice count.
    #[arg(long = "s")]
    pub slices: usize,
    #[arg(long, value_enum, default_value_t = PatternArg::Staircase)]
    pub pattern: PatternArg,
    #[arg(long, value_enum, default_value_t = TextureArg::NoiseTexture)]
    pub texture: TextureArg,
    /// Pixels of Gaussian sigma per unit focus error.
    #[arg(long, default_value_t = 1.0)]
    pub blur_scale: f64,
    /// Output directory (stack images + manifest.json + gt.pfm).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub r: u32,
    #[arg(long)]
    pub cumulative: bool,
    #[arg(long, value_enum, default_value_t = BorderArg::Replicate)]
    pub border: BorderArg,
    #[arg(long, value_enum, default_value_t = UnitArg::Index)]
    pub unit: UnitArg,
    /// Ground-truth depth map; when given, a report.json is produced.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// BadPix threshold; defaults to 7% of the ground-truth range.
    #[arg(long = "badpix-t")]
    pub badpix_t: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TimeitArgs {
    /// Repetitions to time.
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// The subcommand to run, with its flags.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, required = true)]
    pub inner: Vec<String>,
}

/// Entry point used by the `sff` binary: parses argv, installs the worker
/// pool, runs the command, writes provenance, and maps errors to exit
/// codes.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw: Vec<String> = argv
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(raw.iter()) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("sff: cannot build thread pool: {e}");
            return 1;
        }
    };
    let args_for_record: Vec<String> = raw.iter().skip(1).cloned().collect();
    match pool.install(|| execute(&cli, &args_for_record)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("sff: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Kernels { .. } => "kernels",
        Command::Fv(_) => "fv",
        Command::Depth(_) => "depth",
        Command::Aif(_) => "aif",
        Command::Fmcurve(_) => "fmcurve",
        Command::Noise(_) => "noise",
        Command::Eval(_) => "eval",
        Command::Refine(_) => "refine",
        Command::Synth(_) => "synth",
        Command::Pipeline(_) => "pipeline",
        Command::Timeit(_) => "timeit",
    }
}

fn execute(cli: &Cli, argv: &[String]) -> Result<()> {
    if let Command::Timeit(args) = &cli.command {
        return run_timeit(cli, args);
    }
    let start = Instant::now();
    let target = dispatch(cli)?;
    finish_run(cli, argv, &target, start.elapsed().as_secs_f64(), None)
}

fn finish_run(
    cli: &Cli,
    argv: &[String],
    target: &RunTarget,
    wall: f64,
    timing: Option<TimingRecord>,
) -> Result<()> {
    let record = RunRecord {
        command: command_name(&cli.command).to_string(),
        argv: argv.to_vec(),
        seed: cli.seed,
        threads: cli.threads,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: wall,
        outputs: target.outputs.clone(),
        timing,
    };
    write_run_record(target, &record)
}

fn dispatch(cli: &Cli) -> Result<RunTarget> {
    match &cli.command {
        Command::Kernels { action } => run_kernels(action),
        Command::Fv(args) => run_fv(cli, args),
        Command::Depth(args) => run_depth(cli, args),
        Command::Aif(args) => run_aif(args),
        Command::Fmcurve(args) => run_fmcurve(args),
        Command::Noise(args) => run_noise(cli, args),
        Command::Eval(args) => run_eval(args),
        Command::Refine(args) => run_refine(cli, args),
        Command::Synth(args) => run_synth(cli, args),
        Command::Pipeline(args) => run_pipeline(cli, args),
        Command::Timeit(_) => unreachable!("handled by execute"),
    }
}

fn run_timeit(cli: &Cli, args: &TimeitArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::InvalidInput("timeit needs at least one repetition".into()));
    }
    let mut inner_argv = vec!["sff".to_string()];
    inner_argv.extend(args.inner.iter().cloned());
    let inner = Cli::try_parse_from(inner_argv.iter())
        .map_err(|e| Error::InvalidInput(format!("timeit inner command: {e}")))?;
    if matches!(inner.command, Command::Timeit(_)) {
        return Err(Error::InvalidInput("timeit cannot time itself".into()));
    }
    // Global flags apply to the outer invocation; carry them over.
    let inner = Cli { threads: cli.threads, seed: cli.seed, verbose: cli.verbose, ..inner };
    let mut samples = Vec::with_capacity(args.reps);
    let mut last_target = RunTarget::none();
    for _ in 0..args.reps {
        let start = Instant::now();
        last_target = dispatch(&inner)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    let timing = TimingRecord::from_samples(&samples);
    println!(
        "{}: {:.6} s ± {:.6} s over {} run(s)",
        command_name(&inner.command),
        timing.mean_seconds,
        timing.stddev_seconds,
        timing.repetitions
    );
    finish_run(
        &inner,
        &args.inner,
        &last_target,
        *samples.last().expect("at least one rep"),
        Some(timing),
    )
}

fn run_kernels(action: &KernelsAction) -> Result<RunTarget> {
    let KernelsAction::Dump { r, theta } = action;
    let kernel = match theta.as_str() {
        "iso" | "laplacian" => standard_laplacian(),
        other => {
            let degrees: u32 = other
                .trim_end_matches('°')
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad orientation {other:?}")))?;
            ddl_kernel(*r, Orientation::from_degrees(degrees)?)?
        }
    };
    for row in kernel.taps().rows() {
        let line: Vec<String> = row.iter().map(|t| format!("{t:3}")).collect();
        println!("{}", line.join(" "));
    }
    Ok(RunTarget::none())
}

fn compute_volume(
    manifest_path: &Path,
    r: u32,
    cumulative: bool,
    border: BorderPolicy,
) -> Result<(FocusVolume, Vec<f64>)> {
    let stack = load_stack_from_manifest(manifest_path)?;
    let distances = stack.focal_distances().to_vec();
    let fv = if cumulative {
        let volumes = multiscale_volumes(&stack, r, border)?;
        cumulative_variant(&volumes, r as usize)?
    } else {
        ddl_focus_volume(&stack, r, border)?
    };
    Ok((fv, distances))
}

fn run_fv(cli: &Cli, args: &FvArgs) -> Result<RunTarget> {
    if cli.verbose {
        eprintln!("computing focus volume (r={}, cumulative={})", args.r, args.cumulative);
    }
    let (fv, distances) = compute_volume(&args.manifest, args.r, args.cumulative, args.border.into())?;
    let names = write_fv_dir(&fv, Some(&distances), &args.out)?;
    Ok(RunTarget::for_dir(&args.out, names))
}

fn run_depth(cli: &Cli, args: &DepthArgs) -> Result<RunTarget> {
    let (fv, distances) = match (&args.fv, &args.manifest) {
        (Some(dir), None) => read_fv_dir(dir)?,
        (None, Some(manifest)) => {
            let (fv, d) = compute_volume(manifest, args.r, args.cumulative, args.border.into())?;
            (fv, Some(d))
        }
        _ => {
            return Err(Error::InvalidInput(
                "depth needs exactly one of --fv or --manifest".into(),
            ))
        }
    };
    let unit: DepthUnit = args.unit.into();
    if cli.verbose {
        eprintln!("extracting winner-takes-all depth over {} slices", fv.slices());
    }
    let depth = match unit {
        DepthUnit::Index => wta_depth(&fv, unit, None)?,
        DepthUnit::FocalDistance => {
            let d = distances.ok_or_else(|| {
                Error::InvalidInput("focus volume carries no focal distances".into())
            })?;
            wta_depth(&fv, unit, Some(&d))?
        }
    };
    write_depth(&depth, &args.out, depth_format_for(&args.out)?)?;
    Ok(RunTarget::for_file(&args.out))
}

fn run_aif(args: &AifArgs) -> Result<RunTarget> {
    let stack = load_stack_from_manifest(&args.manifest)?;
    let depth = read_depth(&args.depth, depth_format_for(&args.depth)?, DepthUnit::Index)?;
    let image = all_in_focus(&stack, &depth)?;
    write_image_png8(&image, &args.out)?;
    Ok(RunTarget::for_file(&args.out))
}

fn run_fmcurve(args: &FmcurveArgs) -> Result<RunTarget> {
    let (fv, _) = read_fv_dir(&args.fv)?;
    let (x, y) = parse_pixel(&args.px)?;
    let gt = match &args.gt {
        Some(path) => Some(read_depth(path, depth_format_for(path)?, DepthUnit::Index)?),
        None => None,
    };
    let curve = fm_curve(&fv, (x, y), gt.as_ref())?;
    let mut csv = String::from("slice_index,focus_value\n");
    for (i, v) in curve.values.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
    }
    write_atomic(&args.out, csv.as_bytes())?;
    match curve.gt_index {
        Some(g) => println!("pixel ({x},{y}): argmax {} gt {}", curve.argmax_index, g),
        None => println!("pixel ({x},{y}): argmax {}", curve.argmax_index),
    }
    Ok(RunTarget::for_file(&args.out))
}

fn parse_pixel(text: &str) -> Result<(usize, usize)> {
    let mut parts = text.split(',');
    let parse = |p: Option<&str>| -> Result<usize> {
        p.and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::InvalidInput(format!("bad pixel {text:?}, expected X,Y")))
    };
    let x = parse(parts.next())?;
    let y = parse(parts.next())?;
    if parts.next().is_some() {
        return Err(Error::InvalidInput(format!("bad pixel {text:?}, expected X,Y")));
    }
    Ok((x, y))
}

fn write_stack_dir(stack: &FocalStack, color_mode: ColorMode, dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = Vec::with_capacity(stack.len() + 1);
    for (s, img) in stack.slices().iter().enumerate() {
        let name = format!("slice_{s:03}.png");
        write_image_png16(img, &dir.join(&name))?;
        names.push(name);
    }
    let manifest = StackManifest {
        images: names.iter().map(PathBuf::from).collect(),
        focal_distances: stack.focal_distances().to_vec(),
        color_mode,
    };
    manifest.save(&dir.join("manifest.json"))?;
    names.push("manifest.json".into());
    Ok(names)
}

fn run_noise(cli: &Cli, args: &NoiseArgs) -> Result<RunTarget> {
    let manifest = StackManifest::from_file(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or_else(|| Path::new("."));
    let stack = crate::stackio::load_stack(&manifest, base)?;
    let spec = NoiseSpec::new(args.kind.into(), args.param, cli.seed)?;
    if cli.verbose {
        eprintln!("applying {} noise, param {}, seed {}", spec.kind.name(), spec.param, spec.seed);
    }
    let noisy = apply_noise(&stack, &spec)?;
    let names = write_stack_dir(&noisy, manifest.color_mode, &args.out)?;
    Ok(RunTarget::for_dir(&args.out, names))
}

fn load_mask(path: &Path) -> Result<Array2<bool>> {
    let plane = match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") | Some("PFM") => read_pfm(path)?,
        _ => load_image(path, ColorMode::Gray)?.plane(0).to_owned(),
    };
    Ok(plane.mapv(|v| v > 0.5))
}

fn run_eval(args: &EvalArgs) -> Result<RunTarget> {
    let unit: DepthUnit = args.unit.into();
    let pred = read_depth(&args.pred, depth_format_for(&args.pred)?, unit)?;
    let gt = read_depth(&args.gt, depth_format_for(&args.gt)?, unit)?;
    let mask = match &args.mask {
        Some(path) => Some(load_mask(path)?),
        None => None,
    };
    let report = evaluate(&pred, &gt, mask.as_ref(), args.badpix_t)?;
    if report.corr.is_nan() {
        eprintln!("sff: warning: zero-variance input, correlation undefined (reported as null)");
    }
    write_atomic(
        &args.out,
        &serde_json::to_vec_pretty(&report).expect("report serializes"),
    )?;
    Ok(RunTarget::for_file(&args.out))
}

fn run_refine(cli: &Cli, args: &RefineArgs) -> Result<RunTarget> {
    let stack = load_stack_from_manifest(&args.manifest)?;
    let volumes = multiscale_volumes(&stack, args.rates, args.border.into())?;
    let u = aggregation_map(&volumes)?;
    let weights = match &args.load_weights {
        Some(path) => {
            let w = RefinerWeights::load(path)?;
            if w.aggregation_depth != u.depth() || w.image_channels != stack.channels() {
                return Err(Error::ShapeMismatch(format!(
                    "weights expect {} channels / depth {}, stack provides {} / {}",
                    w.image_channels,
                    w.aggregation_depth,
                    stack.channels(),
                    u.depth()
                )));
            }
            w
        }
        None => RefinerWeights::from_seed(cli.seed, stack.channels(), u.depth())?,
    };
    if let Some(path) = &args.save_weights {
        weights.save(path)?;
    }
    if cli.verbose {
        eprintln!(
            "refining {} iterations with {} parameters",
            args.iters,
            weights.parameter_count()
        );
    }
    let biases = context_encode(&mean_image(&stack), &weights)?;
    let output = refine(&u, &biases, &weights, args.iters)?;
    write_depth(&output.depth, &args.out, depth_format_for(&args.out)?)?;
    let mut target = RunTarget::for_file(&args.out);
    if let Some(dir) = &args.dump_intermediates {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.as_path(), e))?;
        for (t, intermediate) in output.intermediates.iter().enumerate() {
            let name = format!("iter_{:03}.pfm", t + 1);
            write_depth(intermediate, &dir.join(&name), crate::stackio::DepthFormat::Pfm)?;
            target.outputs.push(dir.join(name).display().to_string());
        }
    }
    if let Some(path) = &args.save_weights {
        target.outputs.push(path.display().to_string());
    }
    Ok(target)
}

fn run_synth(cli: &Cli, args: &SynthArgs) -> Result<RunTarget> {
    let spec = SynthSpec {
        height: args.height,
        width: args.width,
        slices: args.slices,
        depth_pattern: match args.pattern {
            PatternArg::Staircase => DepthPattern::Staircase,
            PatternArg::Slant => DepthPattern::Slant,
            PatternArg::Checker => DepthPattern::Checker,
        },
        texture: match args.texture {
            TextureArg::Checker => Texture::Checker,
            TextureArg::NoiseTexture => Texture::NoiseTexture,
        },
        blur_scale: args.blur_scale,
        seed: cli.seed,
    };
    let (stack, gt) = generate(&spec)?;
    let mut names = write_stack_dir(&stack, ColorMode::Gray, &args.out)?;
    write_depth(&gt, &args.out.join("gt.pfm"), crate::stackio::DepthFormat::Pfm)?;
    names.push("gt.pfm".into());
    Ok(RunTarget::for_dir(&args.out, names))
}

fn run_pipeline(cli: &Cli, args: &PipelineArgs) -> Result<RunTarget> {
    let stack = load_stack_from_manifest(&args.manifest)?;
    let border: BorderPolicy = args.border.into();
    let fv = if args.cumulative {
        let volumes = multiscale_volumes(&stack, args.r, border)?;
        cumulative_variant(&volumes, args.r as usize)?
    } else {
        ddl_focus_volume(&stack, args.r, border)?
    };
    let index_depth = wta_depth(&fv, DepthUnit::Index, None)?;
    let unit: DepthUnit = args.unit.into();
    let depth = match unit {
        DepthUnit::Index => index_depth.clone(),
        DepthUnit::FocalDistance => wta_depth(&fv, unit, Some(stack.focal_distances()))?,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.as_path(), e))?;
    let mut outputs = Vec::new();
    write_depth(&depth, &args.out.join("depth.pfm"), crate::stackio::DepthFormat::Pfm)?;
    outputs.push("depth.pfm".to_string());
    let aif = all_in_focus(&stack, &index_depth)?;
    write_image_png8(&aif, &args.out.join("aif.png"))?;
    outputs.push("aif.png".to_string());
    if let Some(gt_path) = &args.eval {
        let gt = read_depth(gt_path, depth_format_for(gt_path)?, unit)?;
        let threshold = args.badpix_t.unwrap_or_else(|| {
            let lo = gt.values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = gt.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            0.07 * (hi - lo)
        });
        let report = evaluate(&depth, &gt, None, threshold)?;
        if report.corr.is_nan() {
            eprintln!("sff: warning: zero-variance input, correlation undefined (reported as null)");
        }
        write_atomic(
            &args.out.join("report.json"),
            &serde_json::to_vec_pretty(&report).expect("report serializes"),
        )?;
        outputs.push("report.json".to_string());
        if cli.verbose {
            eprintln!("rms vs ground truth: {:.4}", report.rms);
        }
    }
    Ok(RunTarget::for_dir(&args.out, outputs))
}
