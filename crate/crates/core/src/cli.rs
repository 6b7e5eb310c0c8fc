//! The `varprox` command line: `degrade`, `restore`, `check` and `bench`.
//!
//! Exit codes: 0 success, 1 I/O, 2 usage or validation, 3 divergence,
//! 4 failed condition check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::denoise::{DenoiseError, DenoiserKind};
use crate::fsutil::build_dir_atomic;
use crate::linop::{estimate_norm_sq, load_oleary_dir, save_oleary_dir, LinearOperator, LinopError, OLearyOperator};
use crate::pipeline::{
    run_benchmark, summary_table, synthesize_degradation, threads_from_env, BenchConfig, DegradationSpec, ParamGrid,
    PipelineError, Tuning,
};
use crate::raster::{psnr, read_raster, ssim, write_png, write_vprx, RasterError};
use crate::solvers::{
    run_pnp_admm_cg, run_pnp_ista, run_pnp_ladmm, run_richardson_lucy, CgSettings, ConditionReport, Coupling, Method,
    RestorationResult, RunOptions, SolverError, SolverParams, CONDITION_POWER_ITERS, DEFAULT_MAX_ITERS,
    DEFAULT_TOL_RESIDUAL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CONDITIONS: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "varprox", version, about = "Plug-and-play linearized ADMM image restoration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur and add noise to a clean image following a degradation spec
    Degrade(DegradeArgs),
    /// Restore a degraded image with one of the four methods
    Restore(RestoreArgs),
    /// Check the convergence conditions for an operator and parameters
    Check(CheckArgs),
    /// Degrade, tune, restore and score every image of a directory
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ladmm,
    AdmmCg,
    Ista,
    Rl,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Ladmm => Method::Ladmm,
            MethodArg::AdmmCg => Method::AdmmCg,
            MethodArg::Ista => Method::Ista,
            MethodArg::Rl => Method::Rl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DenoiserArg {
    Tikhonov,
    Tv,
    Gaussian,
    Bridge,
}

impl From<DenoiserArg> for DenoiserKind {
    fn from(d: DenoiserArg) -> Self {
        match d {
            DenoiserArg::Tikhonov => DenoiserKind::Tikhonov,
            DenoiserArg::Tv => DenoiserKind::Tv,
            DenoiserArg::Gaussian => DenoiserKind::Gaussian,
            DenoiserArg::Bridge => DenoiserKind::Bridge,
        }
    }
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Clean input image (.png or .vprx)
    #[arg(long)]
    pub input: PathBuf,
    /// Degradation spec (JSON)
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory; receives y.png, y.vprx, truth.png and operator/
    #[arg(long)]
    pub output: PathBuf,
    /// Override the degradation seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the degradation noise level, on the [0, 1] intensity scale
    #[arg(long)]
    pub sigma: Option<f64>,
}

/// The coupled parameters `λ, β, L_x, σ_d` with `σ_d² = λ / L_x`. Give any
/// three, or fewer and let the rest default (`β = 1/σ²`, `L_x = β‖H‖²`).
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Regularization weight λ
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Augmented-Lagrangian penalty β (default 1/σ²)
    #[arg(long)]
    pub beta: Option<f64>,
    /// Linearization constant L_x
    #[arg(long = "lx")]
    pub l_x: Option<f64>,
    /// Denoiser level σ_d
    #[arg(long = "sigma-d")]
    pub sigma_d: Option<f64>,
    /// Noise standard deviation σ of the observation, on the [0, 1] scale
    #[arg(long)]
    pub sigma: f64,
}

impl ParamArgs {
    fn coupling(&self) -> Coupling {
        Coupling { lambda: self.lambda, beta: self.beta, l_x: self.l_x, sigma_d: self.sigma_d }
    }
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    /// Degraded observation y (.png or .vprx)
    #[arg(long)]
    pub input: PathBuf,
    /// O'Leary operator directory (as written by `degrade`)
    #[arg(long)]
    pub operator: PathBuf,
    /// Output directory; receives x_hat.png, x_hat.vprx and trace.csv
    #[arg(long)]
    pub output: PathBuf,
    /// Restoration algorithm
    #[arg(long, value_enum, default_value = "ladmm")]
    pub method: MethodArg,
    /// Denoiser used as the prior's proximal step (ignored by rl)
    #[arg(long, value_enum, default_value = "tv")]
    pub denoiser: DenoiserArg,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Maximum outer iterations
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub iters: usize,
    /// Stop when every residual divided by √N is at most this (0 runs all iterations)
    #[arg(long, default_value_t = DEFAULT_TOL_RESIDUAL)]
    pub tol: f64,
    /// Seed of the power iteration estimating ‖H‖²
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shell command starting the denoiser bridge server (with --denoiser bridge)
    #[arg(long = "bridge-cmd")]
    pub bridge_cmd: Option<String>,
    /// Ground truth; adds PSNR to the trace and prints PSNR/SSIM
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// ISTA step size (default σ²/‖H‖²)
    #[arg(long)]
    pub step: Option<f64>,
    /// Conjugate-gradient iterations per ADMM+CG step
    #[arg(long = "cg-iters", default_value_t = CgSettings::default().iters)]
    pub cg_iters: usize,
    /// Relative residual tolerance of the inner conjugate gradient
    #[arg(long = "cg-tol", default_value_t = CgSettings::default().tol)]
    pub cg_tol: f64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// O'Leary operator directory
    #[arg(long)]
    pub operator: PathBuf,
    /// Image whose channel count sizes the operator (default one channel)
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Seed of the power iteration estimating ‖H‖²
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of ground-truth .png (or .vprx) images
    #[arg(long)]
    pub input: PathBuf,
    /// Degradation spec template (JSON); its noise level is replaced per run
    #[arg(long)]
    pub spec: PathBuf,
    /// Artifact directory (summary.csv, rows.csv, timing.csv, runs/)
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Methods to compare
    #[arg(long, value_enum, value_delimiter = ',', default_values = ["ladmm", "admm-cg", "ista", "rl"])]
    pub methods: Vec<MethodArg>,
    /// Noise levels on the 0-255 scale (images are normalized to [0, 1])
    #[arg(long, value_delimiter = ',', default_values = ["1", "10", "20", "40"])]
    pub sigmas: Vec<f64>,
    /// Denoiser used as the prior's proximal step (ignored by rl)
    #[arg(long, value_enum, default_value = "tv")]
    pub denoiser: DenoiserArg,
    /// Outer iterations of the final run of each cell
    #[arg(long, default_value_t = 200)]
    pub iters: usize,
    /// Use this λ everywhere instead of a grid search
    #[arg(long)]
    pub lambda: Option<f64>,
    /// With --lambda, β as a multiple of L_h = 1/σ²
    #[arg(long = "beta-factor", default_value_t = 1.0)]
    pub beta_factor: f64,
    /// λ values of the grid search
    #[arg(long, value_delimiter = ',', default_values = ["5", "10", "20", "40"])]
    pub lambdas: Vec<f64>,
    /// β values of the grid search, as multiples of L_h
    #[arg(long = "beta-factors", value_delimiter = ',', default_values = ["0.25", "0.5", "1", "2"])]
    pub beta_factors: Vec<f64>,
    /// Override the degradation seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shell command starting the denoiser bridge server (with --denoiser bridge)
    #[arg(long = "bridge-cmd")]
    pub bridge_cmd: Option<String>,
}

/// A failed command: message for standard error and its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

fn raster_code(e: &RasterError) -> i32 {
    match e {
        RasterError::Io(_) | RasterError::Image(_) | RasterError::Format(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn linop_code(e: &LinopError) -> i32 {
    match e {
        LinopError::Io(_) | LinopError::Manifest(_) => EXIT_IO,
        LinopError::Raster(r) => raster_code(r),
        _ => EXIT_USAGE,
    }
}

fn solver_code(e: &SolverError) -> i32 {
    match e {
        SolverError::Diverged { .. } | SolverError::CgBreakdown { .. } => EXIT_DIVERGED,
        SolverError::Denoise(DenoiseError::NonFinite) => EXIT_DIVERGED,
        SolverError::Denoise(DenoiseError::Bridge(_)) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::Io(_) | PipelineError::NoImages(_) => EXIT_IO,
        PipelineError::Raster(r) => raster_code(r),
        PipelineError::Linop(l) => linop_code(l),
        PipelineError::Solver(s) => solver_code(s),
        _ => EXIT_USAGE,
    }
}

macro_rules! failure_from {
    ($ty:ty, $code:expr) => {
        impl From<$ty> for Failure {
            fn from(e: $ty) -> Self {
                Failure { code: $code(&e), message: e.to_string() }
            }
        }
    };
}

failure_from!(RasterError, raster_code);
failure_from!(LinopError, linop_code);
failure_from!(SolverError, solver_code);
failure_from!(PipelineError, pipeline_code);

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: e.to_string() }
    }
}

impl From<DenoiseError> for Failure {
    fn from(e: DenoiseError) -> Self {
        SolverError::from(e).into()
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let mut out = std::io::stdout().lock();
    let result = match cli.command {
        Command::Degrade(a) => cmd_degrade(&a, &mut out),
        Command::Restore(a) => cmd_restore(&a, &mut out),
        Command::Check(a) => cmd_check(&a, &mut out),
        Command::Bench(a) => cmd_bench(&a, &mut out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn cmd_degrade(args: &DegradeArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let mut spec = DegradationSpec::from_json_file(&args.spec)?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    if let Some(sigma) = args.sigma {
        spec = spec.with_noise(sigma);
    }
    spec.validate()?;
    let truth = read_raster(&args.input)?;
    let d = synthesize_degradation(&truth, &spec)?;
    build_dir_atomic(&args.output, |dir| -> Result<(), Failure> {
        write_png(&d.y, dir.join("y.png"))?;
        write_vprx(&d.y, dir.join("y.vprx"))?;
        write_png(&truth, dir.join("truth.png"))?;
        save_oleary_dir(&d.blur, d.boundary, &dir.join("operator"))?;
        Ok(())
    })?;
    writeln!(out, "noise sigma: {} ({} / 255)", spec.noise_sigma, spec.noise_sigma * 255.0)?;
    writeln!(out, "regions: {}", spec.regions)?;
    writeln!(out, "psnr(y, truth): {:.4} dB", psnr(&d.y, &truth, 1.0)?)?;
    writeln!(out, "wrote {}", args.output.display())?;
    Ok(EXIT_OK)
}

fn load_operator(dir: &Path, channels: usize) -> Result<OLearyOperator, Failure> {
    let (blur, boundary) = load_oleary_dir(dir)?;
    Ok(OLearyOperator::new(blur, boundary, channels)?)
}

fn print_conditions(out: &mut impl Write, params: &SolverParams, report: &ConditionReport) -> std::io::Result<()> {
    writeln!(out, "lambda = {}  beta = {}  L_x = {}  sigma_d = {}", params.lambda, params.beta, params.l_x, params.sigma_d)?;
    writeln!(out, "L_h = {}", report.l_h)?;
    writeln!(out, "norm_sq_estimate = {}", report.norm_sq_used)?;
    writeln!(out, "beta >= L_h: {}", report.beta_ok)?;
    writeln!(out, "L_x >= beta * norm_sq: {}", report.l_x_ok)
}

fn warn_conditions(params: &SolverParams, report: &ConditionReport) {
    if !report.beta_ok {
        eprintln!("WARNING: beta = {} is below L_h = {}; convergence is not guaranteed", params.beta, report.l_h);
    }
    if !report.l_x_ok {
        eprintln!(
            "WARNING: L_x = {} is below beta * norm_sq = {}; convergence is not guaranteed",
            params.l_x,
            params.beta * report.norm_sq_used
        );
    }
}

pub fn cmd_restore(args: &RestoreArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let method = Method::from(args.method);
    let kind = DenoiserKind::from(args.denoiser);
    if kind == DenoiserKind::Bridge && args.bridge_cmd.is_none() {
        return Err(Failure::usage("--denoiser bridge requires --bridge-cmd"));
    }
    if args.iters == 0 {
        return Err(Failure::usage("--iters must be at least 1"));
    }
    if !(args.tol.is_finite() && args.tol >= 0.0) {
        return Err(Failure::usage("--tol must be finite and nonnegative"));
    }
    let y = read_raster(&args.input)?;
    let truth = args.truth.as_deref().map(read_raster).transpose()?;
    if let Some(t) = &truth {
        t.ensure_same_dims(&y)?;
    }
    let h = load_operator(&args.operator, y.channels())?;
    if h.shape().input != y.dims() {
        return Err(Failure::usage(format!("operator expects {} but the input is {}", h.shape().input, y.dims())));
    }
    let norm_sq = estimate_norm_sq(&h, CONDITION_POWER_ITERS, args.seed);
    let mut coupling = args.params.coupling();
    // Richardson-Lucy has no prior term
    if method == Method::Rl && coupling.lambda.is_none() && coupling.sigma_d.is_none() {
        coupling.lambda = Some(0.0);
    }
    let params = coupling.resolve(args.params.sigma, Some(norm_sq))?;
    let params = params.with_max_iters(args.iters).with_tol(args.tol);
    params.validate()?;
    let report = ConditionReport::from_norm_sq(&params, norm_sq);
    print_conditions(out, &params, &report)?;
    if method == Method::Ladmm {
        warn_conditions(&params, &report);
    }
    let denoiser = kind.build(args.bridge_cmd.as_deref())?;
    let opts = RunOptions { truth: truth.as_ref(), ..Default::default() };
    let cg = CgSettings { iters: args.cg_iters, tol: args.cg_tol };
    let result: Result<RestorationResult, SolverError> = match method {
        Method::Ladmm => run_pnp_ladmm(&y, &h, &*denoiser, &params, &opts),
        Method::AdmmCg => run_pnp_admm_cg(&y, &h, &*denoiser, &params, cg, &opts),
        Method::Ista => run_pnp_ista(&y, &h, &*denoiser, &params, args.step, &opts),
        Method::Rl => run_richardson_lucy(&y, &h, &params, &opts),
    };
    let result = match result {
        Ok(r) => r,
        Err(SolverError::Diverged { iteration }) => {
            return Err(Failure { code: EXIT_DIVERGED, message: format!("solver diverged at iteration {iteration}") })
        }
        Err(e) => return Err(e.into()),
    };

    std::fs::create_dir_all(&args.output)?;
    write_png(&result.x_hat, args.output.join("x_hat.png"))?;
    write_vprx(&result.x_hat, args.output.join("x_hat.vprx"))?;
    result.trace.write_csv(&args.output.join("trace.csv"))?;

    writeln!(out, "method: {method}  denoiser: {kind}")?;
    writeln!(out, "iterations: {}  converged: {}", result.iterations_run, result.converged)?;
    if let Some(last) = result.trace.last() {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:e}"));
        writeln!(out, "res_x = {:e}  res_z = {}  res_w = {}", last.res_x, show(last.res_z), show(last.res_w))?;
    }
    if let Some(gap) = result.trace.dual_gradient_gap {
        writeln!(out, "max dual-gradient gap = {gap:e}")?;
    }
    if let Some(t) = &truth {
        writeln!(out, "psnr: {:.4} dB  ssim: {:.4}", psnr(&result.x_hat, t, 1.0)?, ssim(&result.x_hat, t)?)?;
    }
    writeln!(out, "wrote {}", args.output.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_check(args: &CheckArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let channels = match &args.input {
        Some(p) => read_raster(p)?.channels(),
        None => 1,
    };
    let h = load_operator(&args.operator, channels)?;
    let norm_sq = estimate_norm_sq(&h, CONDITION_POWER_ITERS, args.seed);
    let p = &args.params;
    let params = if p.lambda.is_none() && p.sigma_d.is_none() {
        // only the conditions are needed here, so λ may be left out
        let Some(l_x) = p.l_x else {
            return Err(Failure::usage("give --lx, or --lambda or --sigma-d to derive it"));
        };
        Coupling { lambda: Some(0.0), beta: p.beta, l_x: Some(l_x), sigma_d: None }.resolve(p.sigma, None)?
    } else {
        p.coupling().resolve(p.sigma, Some(norm_sq))?
    };
    let report = ConditionReport::from_norm_sq(&params, norm_sq);
    print_conditions(out, &params, &report)?;
    Ok(if report.ok() { EXIT_OK } else { EXIT_CONDITIONS })
}

pub fn cmd_bench(args: &BenchArgs, out: &mut impl Write) -> Result<i32, Failure> {
    let mut spec = DegradationSpec::from_json_file(&args.spec)?;
    if let Some(seed) = args.seed {
        spec = spec.with_seed(seed);
    }
    if let Some(bad) = args.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Failure::usage(format!("--sigmas must be positive, got {bad}")));
    }
    let kind = DenoiserKind::from(args.denoiser);
    if kind == DenoiserKind::Bridge && args.bridge_cmd.is_none() {
        return Err(Failure::usage("--denoiser bridge requires --bridge-cmd"));
    }
    let threads = threads_from_env().map_err(Failure::usage)?;
    let tuning = match args.lambda {
        Some(lambda) => Tuning::Fixed { lambda, beta_factor: args.beta_factor },
        None => Tuning::Grid(ParamGrid { lambdas: args.lambdas.clone(), beta_factors: args.beta_factors.clone() }),
    };
    let config = BenchConfig {
        sigmas: args.sigmas.iter().map(|s| s / 255.0).collect(),
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        denoiser: kind,
        bridge_cmd: args.bridge_cmd.clone(),
        tuning,
        max_iters: args.iters,
        threads,
        out_dir: args.output.clone(),
        ..BenchConfig::new(&args.input, spec)
    };
    let report = run_benchmark(&config)?;
    for (name, why) in &report.skipped {
        eprintln!("WARNING: skipped {name}: {why}");
    }
    writeln!(out, "images: {}  skipped: {}", report.images_processed, report.skipped.len())?;
    write!(out, "{}", summary_table(&report.summary))?;
    if let Some(dir) = &args.output {
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(EXIT_OK)
}
