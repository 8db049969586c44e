//! `lcmflow` command-line harness: flow estimation, evaluation, degradation,
//! synthetic benchmark generation and frame interpolation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lcmflow::bench::{degrade_frame, synth_sequence, DegradeKind};
use lcmflow::error::{Error, Result};
use lcmflow::flo::{read_flo, write_flo};
use lcmflow::image::{to_grayscale, Image, Raster};
use lcmflow::metrics::flow_error_report;
use lcmflow::solver::{compute_flow, LinearSolverKind, SolverParams};
use lcmflow::warp::{flow_to_color, interpolate_middle_frame, RgbRaster};

#[derive(Parser)]
#[command(
    name = "lcmflow",
    about = "Dense variational optical flow with a mesh-Laplacian smoothness term",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate optical flow between two frames; writes flow.flo and flow.png
    Flow {
        img1: PathBuf,
        img2: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare a flow field against ground truth; writes report.txt and report.json
    Evaluate {
        flow: PathBuf,
        gt_flow: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Apply a seeded degradation to an image sequence
    Degrade {
        /// Frames of the sequence, in order
        #[arg(required = true)]
        frames: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: DegradeArg,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic warped sequence with exact ground-truth flow
    Synth {
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        /// Peak displacement magnitude in pixels
        #[arg(long, default_value_t = 6.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Synthesize an intermediate frame at time t; writes interpolated.png
    Interpolate {
        img1: PathBuf,
        img2: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cg,
    Sor,
}

#[derive(Clone, Copy, ValueEnum)]
enum DegradeArg {
    Occlusion,
    Gaussian,
    Saltpepper,
}

/// Flags shared by every subcommand; each one mirrors a key in the
/// line-oriented key=value config file, and flags override the file.
#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    mesh_density: Option<usize>,
    #[arg(long)]
    pyramid_factor: Option<f64>,
    #[arg(long)]
    min_dim: Option<usize>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    cg_iters: Option<usize>,
    /// RNG seed for degradations and texture generation
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread cap; 1 guarantees bitwise reproducibility
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// key=value config file mirroring the flags above
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Fully resolved run configuration: solver parameters plus harness knobs.
struct RunConfig {
    params: SolverParams,
    seed: u64,
    threads: usize,
    out: PathBuf,
}

fn parse_config_file(path: &Path, params: &mut SolverParams, seed: &mut u64, threads: &mut usize) -> Result<()> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("{}:{}: expected key=value, got {line:?}", path.display(), lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::Config(format!(
                "{}:{}: invalid {what} value {value:?}",
                path.display(),
                lineno + 1
            ))
        };
        macro_rules! num {
            ($what:literal) => {
                value.parse().map_err(|_| bad($what))?
            };
        }
        match key {
            "lambda" => params.lambda = num!("lambda"),
            "xi" => params.xi = num!("xi"),
            "theta" => params.theta = num!("theta"),
            "epsilon" => params.epsilon = num!("epsilon"),
            "mesh-density" => params.mesh_density = num!("mesh-density"),
            "pyramid-factor" => params.pyramid_factor = num!("pyramid-factor"),
            "min-dim" => params.min_dim = num!("min-dim"),
            "outer-iters" => params.outer_iters = num!("outer-iters"),
            "inner-iters" => params.inner_iters = num!("inner-iters"),
            "cg-iters" => params.cg_iters = num!("cg-iters"),
            "seed" => *seed = num!("seed"),
            "threads" => *threads = num!("threads"),
            "solver" => {
                params.linear_solver = match value {
                    "cg" => LinearSolverKind::Cg,
                    "sor" => LinearSolverKind::Sor,
                    _ => return Err(bad("solver")),
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "{}:{}: unknown config key {other:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    Ok(())
}

impl CommonArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut params = SolverParams::default();
        let mut seed = 42u64;
        let mut threads = 1usize;
        if let Some(path) = &self.config {
            parse_config_file(path, &mut params, &mut seed, &mut threads)?;
        }
        if let Some(v) = self.lambda {
            params.lambda = v;
        }
        if let Some(v) = self.xi {
            params.xi = v;
        }
        if let Some(v) = self.theta {
            params.theta = v;
        }
        if let Some(v) = self.epsilon {
            params.epsilon = v;
        }
        if let Some(v) = self.mesh_density {
            params.mesh_density = v;
        }
        if let Some(v) = self.pyramid_factor {
            params.pyramid_factor = v;
        }
        if let Some(v) = self.min_dim {
            params.min_dim = v;
        }
        if let Some(v) = self.outer_iters {
            params.outer_iters = v;
        }
        if let Some(v) = self.inner_iters {
            params.inner_iters = v;
        }
        if let Some(v) = self.solver {
            params.linear_solver = match v {
                SolverArg::Cg => LinearSolverKind::Cg,
                SolverArg::Sor => LinearSolverKind::Sor,
            };
        }
        if let Some(v) = self.cg_iters {
            params.cg_iters = v;
        }
        if let Some(v) = self.seed {
            seed = v;
        }
        if let Some(v) = self.threads {
            if v < 1 {
                return Err(Error::Config("threads must be >= 1".into()));
            }
            threads = v;
        }
        params.validate()?;
        Ok(RunConfig { params, seed, threads, out: self.out.clone() })
    }
}

impl RunConfig {
    /// Every effective parameter in config-file form; re-running with this
    /// file as `--config` reproduces the run.
    fn to_config_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let _ = writeln!(s, "lambda={}", p.lambda);
        let _ = writeln!(s, "xi={}", p.xi);
        let _ = writeln!(s, "theta={}", p.theta);
        let _ = writeln!(s, "epsilon={}", p.epsilon);
        let _ = writeln!(s, "mesh-density={}", p.mesh_density);
        let _ = writeln!(s, "pyramid-factor={}", p.pyramid_factor);
        let _ = writeln!(s, "min-dim={}", p.min_dim);
        let _ = writeln!(s, "outer-iters={}", p.outer_iters);
        let _ = writeln!(s, "inner-iters={}", p.inner_iters);
        let _ = writeln!(
            s,
            "solver={}",
            match p.linear_solver {
                LinearSolverKind::Cg => "cg",
                LinearSolverKind::Sor => "sor",
            }
        );
        let _ = writeln!(s, "cg-iters={}", p.cg_iters);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "threads={}", self.threads);
        s
    }

    fn write_run_log(&self) -> Result<()> {
        write_text(&self.out.join("run_config.txt"), &self.to_config_text())
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_image(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
    let rgb = dynimg.to_rgb32f();
    let raster = Raster {
        width: rgb.width() as usize,
        height: rgb.height() as usize,
        channels: 3,
        data: rgb.as_raw().iter().map(|v| *v as f64).collect(),
    };
    to_grayscale(&raster)
}

fn write_gray_png(img: &Image, path: &Path) -> Result<()> {
    let buf: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let out = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .expect("buffer sized from image dimensions");
    out.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

fn write_rgb_png(img: &RgbRaster, path: &Path) -> Result<()> {
    let out = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.data.clone())
        .expect("buffer sized from raster dimensions");
    out.save(path).map_err(|e| Error::Image { path: path.into(), source: e })
}

/// Inputs must exist before any work starts; a missing path is a usage error
/// naming the file.
fn check_inputs_exist(command: &Command) -> Result<()> {
    let mut paths: Vec<&PathBuf> = Vec::new();
    let common = match command {
        Command::Flow { img1, img2, common } => {
            paths.push(img1);
            paths.push(img2);
            common
        }
        Command::Evaluate { flow, gt_flow, common } => {
            paths.push(flow);
            paths.push(gt_flow);
            common
        }
        Command::Degrade { frames, common, .. } => {
            paths.extend(frames.iter());
            common
        }
        Command::Synth { common, .. } => common,
        Command::Interpolate { img1, img2, common, .. } => {
            paths.push(img1);
            paths.push(img2);
            common
        }
    };
    if let Some(cfg) = &common.config {
        paths.push(cfg);
    }
    for p in paths {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
    }
    Ok(())
}

fn cmd_flow(img1: &Path, img2: &Path, cfg: &RunConfig) -> Result<()> {
    let i1 = read_image(img1)?;
    let i2 = read_image(img2)?;
    let w = compute_flow(&i1, &i2, &cfg.params)?;
    ensure_out_dir(&cfg.out)?;
    write_flo(&w, cfg.out.join("flow.flo"))?;
    write_rgb_png(&flow_to_color(&w, None), &cfg.out.join("flow.png"))?;
    cfg.write_run_log()?;
    println!(
        "flow {}x{} max |w| = {:.4} -> {}",
        w.width(),
        w.height(),
        w.max_magnitude(),
        cfg.out.join("flow.flo").display()
    );
    Ok(())
}

fn cmd_evaluate(flow: &Path, gt_flow: &Path, cfg: &RunConfig) -> Result<()> {
    let (w, _) = read_flo(flow)?;
    let (gt, gt_mask) = read_flo(gt_flow)?;
    let mask = if gt_mask.iter().all(|m| *m) { None } else { Some(gt_mask.as_slice()) };
    let report = flow_error_report(&w, &gt, mask)?;
    ensure_out_dir(&cfg.out)?;
    write_text(&cfg.out.join("report.txt"), &report.to_text())?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    write_text(&cfg.out.join("report.json"), &json)?;
    cfg.write_run_log()?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_degrade(frames: &[PathBuf], kind: DegradeArg, cfg: &RunConfig) -> Result<()> {
    let kind = match kind {
        DegradeArg::Occlusion => DegradeKind::Occlusion,
        DegradeArg::Gaussian => DegradeKind::Gaussian,
        DegradeArg::Saltpepper => DegradeKind::SaltPepper,
    };
    ensure_out_dir(&cfg.out)?;
    for (idx, path) in frames.iter().enumerate() {
        let img = read_image(path)?;
        let degraded = degrade_frame(&img, kind, cfg.seed, idx, frames.len());
        let name = format!("degraded_{idx:03}.png");
        write_gray_png(&degraded, &cfg.out.join(name))?;
    }
    cfg.write_run_log()?;
    println!("degraded {} frame(s) -> {}", frames.len(), cfg.out.display());
    Ok(())
}

fn cmd_synth(width: usize, height: usize, amplitude: f64, frames: usize, cfg: &RunConfig) -> Result<()> {
    let seq = synth_sequence(width, height, amplitude, frames, cfg.seed)?;
    ensure_out_dir(&cfg.out)?;
    for (idx, frame) in seq.frames.iter().enumerate() {
        write_gray_png(frame, &cfg.out.join(format!("frame_{idx:03}.png")))?;
        write_flo(&seq.gt_flows[idx], cfg.out.join(format!("gt_{idx:03}.flo")))?;
    }
    cfg.write_run_log()?;
    println!(
        "synthesized {frames} frame(s) {width}x{height}, peak displacement {:.3} px -> {}",
        seq.gt_flows[0].max_magnitude(),
        cfg.out.display()
    );
    Ok(())
}

fn cmd_interpolate(img1: &Path, img2: &Path, t: f64, cfg: &RunConfig) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("t = {t} must lie in [0, 1]")));
    }
    let i1 = read_image(img1)?;
    let i2 = read_image(img2)?;
    let w = compute_flow(&i1, &i2, &cfg.params)?;
    let mid = interpolate_middle_frame(&i1, &i2, &w, t)?;
    ensure_out_dir(&cfg.out)?;
    write_gray_png(&mid, &cfg.out.join("interpolated.png"))?;
    write_flo(&w, cfg.out.join("flow.flo"))?;
    cfg.write_run_log()?;
    println!("interpolated frame at t = {t} -> {}", cfg.out.join("interpolated.png").display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    check_inputs_exist(&cli.command)?;
    match &cli.command {
        Command::Flow { img1, img2, common } => cmd_flow(img1, img2, &common.resolve()?),
        Command::Evaluate { flow, gt_flow, common } => cmd_evaluate(flow, gt_flow, &common.resolve()?),
        Command::Degrade { frames, kind, common } => cmd_degrade(frames, *kind, &common.resolve()?),
        Command::Synth { width, height, amplitude, frames, common } => {
            cmd_synth(*width, *height, *amplitude, *frames, &common.resolve()?)
        }
        Command::Interpolate { img1, img2, t, common } => {
            cmd_interpolate(img1, img2, *t, &common.resolve()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
