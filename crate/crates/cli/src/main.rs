use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use mattekit::bench::{benchmark_modes, BenchConfig, TimingStats};
use mattekit::data::{
    load_alpha_png, load_dataset, load_rgb_png, read_manifest, save_alpha_png, save_rgb_png, split,
    synth_dataset, write_manifest, DatasetManifest, Sample, SynthConfig, SynthMode,
};
use mattekit::guided::GuidedFilterConfig;
use mattekit::metrics::{composite, evaluate, gradient_error, mse};
use mattekit::model::FORMAT_VERSION;
use mattekit::ops::bilinear_resize;
use mattekit::parallel::with_threads;
use mattekit::segnet::{ldn_forward, DOWNSAMPLE};
use mattekit::training::{train_from, TrainConfig};
use mattekit::{ModelParams, Refiner, Tensor};

#[derive(Parser, Debug)]
#[command(name = "mattekit", about = "Portrait matting: train, run and evaluate")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice (overrides config files).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    Synth(SynthArgs),
    /// Run the three-stage training schedule.
    Train(TrainArgs),
    /// Predict an alpha matte for one image.
    Infer(InferArgs),
    /// Score every refiner on the held-out split of a manifest.
    Eval(EvalArgs),
    /// Paste the foreground of an image onto a new background.
    Composite(CompositeArgs),
    /// Time the forward pass.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Image size, `S` or `HxW`.
    #[arg(long, default_value = "128")]
    size: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    #[arg(long, default_value_t = 0.9)]
    split_ratio: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Full,
    Head,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// key=value training configuration; overrides `--preset`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Hyperparameter preset used when no config file is given.
    #[arg(long, value_enum, default_value_t = PresetArg::Default)]
    preset: PresetArg,
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV (default: next to `--out` with a .csv extension).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    /// Full schedule and learning rates, iteration counts scaled.
    Default,
    /// Settings that converge on a small synthetic corpus.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum RefinerArg {
    /// Feathering block.
    Fb,
    /// Guided filter of the binary mask.
    Gf,
    /// Raw foreground score.
    None,
    /// Binary mask.
    Mask,
}

#[derive(Args, Debug)]
struct GfArgs {
    #[arg(long, default_value_t = 4)]
    gf_radius: usize,
    #[arg(long, default_value_t = 1e-4)]
    gf_eps: f64,
}

impl GfArgs {
    fn config(&self) -> GuidedFilterConfig {
        GuidedFilterConfig {
            radius: self.gf_radius,
            eps: self.gf_eps,
        }
    }
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = RefinerArg::Fb)]
    refiner: RefinerArg,
    #[command(flatten)]
    gf: GfArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Score every manifest entry instead of the held-out split.
    #[arg(long)]
    all: bool,
    /// Also score precomputed mattes stored under this directory, named
    /// like the ground-truth alpha files.
    #[arg(long)]
    matte_dir: Option<PathBuf>,
    /// Timed iterations per method (0 skips timing).
    #[arg(long, default_value_t = 10)]
    bench_iters: usize,
    #[command(flatten)]
    gf: GfArgs,
}

#[derive(Args, Debug)]
struct CompositeArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    alpha: PathBuf,
    #[arg(long)]
    background: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Parameters to time (default: a fresh initialisation).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Input size, `S` or `HxW`.
    #[arg(long, default_value = "128")]
    size: String,
    #[arg(long, default_value_t = 50)]
    iters: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, value_enum, default_value_t = RefinerArg::Fb)]
    refiner: RefinerArg,
    #[command(flatten)]
    gf: GfArgs,
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let parse = |v: &str| v.trim().parse::<usize>().with_context(|| format!("bad size {s:?}"));
    let (h, w) = match s.split_once(['x', 'X', ',']) {
        Some((h, w)) => (parse(h)?, parse(w)?),
        None => (parse(s)?, parse(s)?),
    };
    if h == 0 || w == 0 {
        bail!("size must be positive, got {s:?}");
    }
    Ok((h, w))
}

fn refiner(arg: RefinerArg, gf: &GfArgs) -> Refiner {
    match arg {
        RefinerArg::Fb => Refiner::Feathering,
        RefinerArg::Gf => Refiner::GuidedFilter(gf.config()),
        RefinerArg::None => Refiner::Scores,
        RefinerArg::Mask => Refiner::Mask,
    }
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let (height, width) = parse_size(&args.size)?;
    let cfg = SynthConfig {
        height,
        width,
        mode: match args.mode {
            ModeArg::Full => SynthMode::Full,
            ModeArg::Head => SynthMode::Head,
        },
        ..SynthConfig::default()
    };
    let samples = synth_dataset(args.n, seed, &cfg)?;
    let (img_dir, alpha_dir) = (args.out.join("images"), args.out.join("alphas"));
    for d in [&img_dir, &alpha_dir] {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let mut manifest = DatasetManifest {
        split_ratio: args.split_ratio,
        seed,
        ..DatasetManifest::default()
    };
    for (i, s) in samples.iter().enumerate() {
        let name = format!("{i:05}.png");
        let (ip, ap) = (img_dir.join(&name), alpha_dir.join(&name));
        save_rgb_png(&ip, &s.sample.image)?;
        save_alpha_png(&ap, &s.sample.alpha)?;
        manifest.entries.push((ip, ap));
    }
    let path = args.out.join("manifest.tsv");
    write_manifest(&path, &manifest)?;
    eprintln!("wrote {} samples and {}", args.n, path.display());
    Ok(())
}

/// Manifest entries divided into `(train, held-out)` by the manifest's own
/// ratio and seed.
fn split_manifest(manifest: &DatasetManifest) -> Result<(DatasetManifest, DatasetManifest)> {
    let (tr, te) = split(&manifest.entries, manifest.split_ratio, manifest.seed)?;
    let part = |entries| DatasetManifest {
        entries,
        ..manifest.clone()
    };
    Ok((part(tr), part(te)))
}

fn load_part(m: &DatasetManifest) -> Result<Vec<Sample>> {
    if m.entries.is_empty() {
        return Ok(Vec::new());
    }
    Ok(load_dataset(m, None)?)
}

fn train(args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => TrainConfig::load(p)?,
        None => match args.preset {
            PresetArg::Default => TrainConfig::default(),
            PresetArg::Desk => TrainConfig::desk(),
        },
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let manifest = read_manifest(&args.manifest)?;
    let (tr, te) = split_manifest(&manifest)?;
    let (train, val) = (load_part(&tr)?, load_part(&te)?);
    if train.is_empty() {
        bail!("{}: training split is empty", args.manifest.display());
    }
    eprintln!(
        "training on {} samples ({} held out), {} iterations",
        train.len(),
        val.len(),
        cfg.total_iters()
    );
    let init = cfg.init_params()?;
    let quiet = args.quiet;
    let (params, history) = train_from(init, &train, &val, &cfg, &mut |r| {
        if !quiet {
            eprintln!("iter {:>6} stage {} loss {:.6}", r.iteration, r.stage, r.loss);
        }
    })?;
    params.save(&args.out)?;
    let csv = args.loss_csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    history.write_csv(&csv)?;
    eprintln!("wrote {} and {}", args.out.display(), csv.display());
    Ok(())
}

/// Runs `refiner` at a size the network accepts and returns the matte at
/// the image's own size.
fn predict_any_size(image: &Tensor, params: &ModelParams, refiner: Refiner) -> Result<Tensor> {
    let s = image.shape();
    let up = |v: usize| v.div_ceil(DOWNSAMPLE) * DOWNSAMPLE;
    let (h, w) = (up(s.h), up(s.w));
    if (h, w) == (s.h, s.w) {
        return Ok(mattekit::predict(image, params, refiner)?);
    }
    let resized = bilinear_resize(image, h, w)?;
    let matte = mattekit::predict(&resized, params, refiner)?;
    Ok(bilinear_resize(&matte, s.h, s.w)?.map(|v| v.clamp(0.0, 1.0)))
}

fn infer(args: &InferArgs) -> Result<()> {
    let params = ModelParams::load(&args.params)?;
    let image = load_rgb_png(&args.image)?;
    let matte = predict_any_size(&image, &params, refiner(args.refiner, &args.gf))?;
    save_alpha_png(&args.out, &matte)?;
    Ok(())
}

fn timing(params: &ModelParams, refiner: Refiner, size: (usize, usize), iters: usize, threads: Option<usize>) -> Result<(String, String)> {
    if iters == 0 {
        return Ok((String::new(), String::new()));
    }
    let cfg = BenchConfig {
        height: size.0,
        width: size.1,
        iterations: iters,
        warmup: iters.div_ceil(5),
        refiner,
        seed: 0,
    };
    let r = benchmark_modes(params, &cfg, threads)?;
    Ok((format!("{:.3}", r.single.mean), format!("{:.3}", r.multi.mean)))
}

fn eval(args: &EvalArgs, threads: Option<usize>) -> Result<()> {
    let params = ModelParams::load(&args.params)?;
    let manifest = read_manifest(&args.manifest)?;
    let part = if args.all { manifest.clone() } else { split_manifest(&manifest)?.1 };
    let samples = load_part(&part)?;
    if samples.is_empty() {
        bail!("{}: nothing to evaluate", args.manifest.display());
    }
    let refiners = [Refiner::Mask, Refiner::GuidedFilter(args.gf.config()), Refiner::Feathering];
    let scores = evaluate(&params, &samples, &refiners)?;
    let size = samples[0].size();
    let mut report = String::from("method,grad_error_e3,mse_e3,ms_cpu_1t,ms_cpu_mt\n");
    for (r, s) in refiners.iter().zip(&scores) {
        let (t1, tm) = timing(&params, *r, size, args.bench_iters, threads)?;
        report.push_str(&format!("{},{:.4},{:.4},{t1},{tm}\n", r.label(), s.grad_error * 1e3, s.mse * 1e3));
    }
    if let Some(dir) = &args.matte_dir {
        let (mut ge, mut me) = (0.0, 0.0);
        for ((_, alpha_path), s) in part.entries.iter().zip(&samples) {
            let name = alpha_path.file_name().context("alpha path has no file name")?;
            let m = load_alpha_png(&dir.join(name))?;
            ge += gradient_error(&m, &s.alpha)?;
            me += mse(&m, &s.alpha)?;
        }
        let k = samples.len() as f64;
        report.push_str(&format!("external,{:.4},{:.4},,\n", ge / k * 1e3, me / k * 1e3));
    }
    fs::write(&args.report, &report).with_context(|| format!("writing {}", args.report.display()))?;
    print!("{report}");
    Ok(())
}

fn composite_cmd(args: &CompositeArgs) -> Result<()> {
    let image = load_rgb_png(&args.image)?;
    let alpha = load_alpha_png(&args.alpha)?;
    let bg = load_rgb_png(&args.background)?;
    let s = image.shape();
    let bg = if bg.shape() == s { bg } else { bilinear_resize(&bg, s.h, s.w)? };
    let out = composite(&image, &alpha, &bg).with_context(|| {
        format!("{} and {} differ in size", args.image.display(), args.alpha.display())
    })?;
    save_rgb_png(&args.out, &out)?;
    Ok(())
}

fn print_stats(label: &str, s: &TimingStats) {
    println!(
        "{label:<8} mean {:8.3} ms  p50 {:8.3}  p95 {:8.3}  min {:8.3}  max {:8.3}  (n={})",
        s.mean,
        s.p50,
        s.p95,
        s.min,
        s.max,
        s.samples.len()
    );
}

fn bench(args: &BenchArgs, seed: u64, threads: Option<usize>) -> Result<()> {
    let params = match &args.params {
        Some(p) => ModelParams::load(p)?,
        None => ModelParams::default_init(seed)?,
    };
    let (height, width) = parse_size(&args.size)?;
    let cfg = BenchConfig {
        height,
        width,
        iterations: args.iters,
        warmup: args.warmup,
        refiner: refiner(args.refiner, &args.gf),
        seed,
    };
    // fail early on sizes the network rejects
    ldn_forward(&Tensor::zeros(mattekit::Shape::new(1, 3, height, width)), &params.ldn)?;
    let r = benchmark_modes(&params, &cfg, threads)?;
    println!("{} at 1x3x{height}x{width}", cfg.refiner.label());
    print_stats("1 thread", &r.single);
    print_stats(&format!("{} thr", r.multi_threads), &r.multi);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => synth(a, seed.unwrap_or(0)),
        Command::Train(a) => train(a, seed),
        Command::Infer(a) => infer(a),
        Command::Eval(a) => eval(a, cli.threads),
        Command::Composite(a) => composite_cmd(a),
        Command::Bench(a) => bench(a, seed.unwrap_or(0), cli.threads),
    }
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(
        format!("{} (parameter format {FORMAT_VERSION})", env!("CARGO_PKG_VERSION")).into_boxed_str(),
    );
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let threads = cli.threads;
    match with_threads(threads, || run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
