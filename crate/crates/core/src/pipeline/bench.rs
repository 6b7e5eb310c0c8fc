use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::{grid_search, synthesize_degradation, Degradation, DegradationSpec, ParamGrid, PipelineError, TUNING_BUDGET};
use crate::denoise::DenoiserKind;
use crate::fsutil::{build_dir_atomic, write_atomic};
use crate::linop::{estimate_norm_sq, save_oleary_dir};
use crate::raster::{read_raster, write_png, MetricReport, Raster};
use crate::solvers::{run_method, IterateTrace, Method, RunOptions, SolverParams};

/// Noise levels of the standard sweep, on the 0–255 scale.
pub const BENCH_SIGMAS_255: [f64; 4] = [1.0, 10.0, 20.0, 40.0];

/// Environment variable capping the worker threads of the benchmark.
pub const THREADS_ENV: &str = "VARPROX_THREADS";

/// How each cell picks `(λ, β)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    /// Grid search against the ground truth at [`TUNING_BUDGET`] iterations.
    Grid(ParamGrid),
    /// Fixed `λ` and `β = beta_factor · L_h` for every cell.
    Fixed { lambda: f64, beta_factor: f64 },
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Directory of `.png` (or `.vprx`) ground-truth images.
    pub dataset: PathBuf,
    /// Template degradation. Its seed is offset by the image index and its
    /// noise level replaced by each entry of `sigmas`.
    pub spec: DegradationSpec,
    /// Noise levels on the `[0, 1]` scale.
    pub sigmas: Vec<f64>,
    pub methods: Vec<Method>,
    pub denoiser: DenoiserKind,
    pub bridge_cmd: Option<String>,
    pub tuning: Tuning,
    pub max_iters: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    /// Artifact directory, replaced atomically when the run succeeds.
    pub out_dir: Option<PathBuf>,
}

impl BenchConfig {
    pub fn new(dataset: impl Into<PathBuf>, spec: DegradationSpec) -> Self {
        Self {
            dataset: dataset.into(),
            spec,
            sigmas: BENCH_SIGMAS_255.iter().map(|s| s / 255.0).collect(),
            methods: Method::ALL.to_vec(),
            denoiser: DenoiserKind::Tv,
            bridge_cmd: None,
            tuning: Tuning::Grid(ParamGrid::default()),
            max_iters: 200,
            threads: None,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub image: String,
    pub method: Method,
    /// On the `[0, 1]` scale.
    pub sigma: f64,
    pub lambda: f64,
    pub beta: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub wall_seconds: f64,
    pub iterations: usize,
}

/// Mean metrics over the images of one `(method, σ)` pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: Method,
    pub sigma: f64,
    pub images: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub iterations: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    /// Sorted by image, σ, method.
    pub rows: Vec<BenchmarkRow>,
    /// Sorted by method, σ.
    pub summary: Vec<SummaryRow>,
    pub images_processed: usize,
    /// Files that could not be read, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Reads [`THREADS_ENV`]. Unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        },
    }
}

/// Lists readable image candidates in name order.
fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "vprx")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

struct Image {
    name: String,
    truth: Raster,
}

struct Cell<'a> {
    image: &'a Image,
    sigma: f64,
    method: Method,
    degradation: &'a Degradation,
    norm_sq: f64,
}

struct CellOutput {
    row: BenchmarkRow,
    x_hat: Raster,
    trace: IterateTrace,
    params: SolverParams,
}

/// `σ` on the 0–255 scale, printed without float noise.
pub fn sigma_label(sigma: f64) -> String {
    let v = (sigma * 255.0 * 1e6).round() / 1e6;
    format!("{v}")
}

/// Runs every image × σ × method cell: degrade, tune, restore, score.
///
/// Unreadable images are skipped and listed in the report; the run fails
/// only when no image at all could be read. Rows and CSV bytes depend on the
/// inputs and seeds only, never on scheduling.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport, PipelineError> {
    match config.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PipelineError::Spec(format!("cannot build thread pool: {e}")))?
            .install(|| run_inner(config)),
        None => run_inner(config),
    }
}

fn run_inner(config: &BenchConfig) -> Result<BenchReport, PipelineError> {
    config.spec.validate()?;
    if let Some(bad) = config.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(PipelineError::Spec(format!("noise levels must be positive, got {bad}")));
    }
    if config.max_iters == 0 {
        return Err(PipelineError::Spec("max_iters must be at least 1".into()));
    }

    let mut images = Vec::new();
    let mut skipped = Vec::new();
    for path in dataset_files(&config.dataset)? {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match read_raster(&path) {
            Ok(truth) => images.push(Image { name, truth }),
            Err(e) => skipped.push((name, e.to_string())),
        }
    }
    if images.is_empty() {
        return Err(PipelineError::NoImages(config.dataset.clone()));
    }

    let pairs: Vec<(usize, f64)> =
        (0..images.len()).flat_map(|i| config.sigmas.iter().map(move |&s| (i, s))).collect();
    let degradations = pairs
        .par_iter()
        .map(|&(i, sigma)| {
            let spec = config.spec.clone().with_seed(config.spec.seed.wrapping_add(i as u64)).with_noise(sigma);
            let d = synthesize_degradation(&images[i].truth, &spec)?;
            let norm_sq = estimate_norm_sq(&d.operator, 100, 0);
            Ok((d, norm_sq))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;

    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let cells: Vec<Cell> = pairs
        .iter()
        .zip(&degradations)
        .flat_map(|(&(i, sigma), (d, norm_sq))| {
            let image = &images[i];
            methods.iter().map(move |&method| Cell { image, sigma, method, degradation: d, norm_sq: *norm_sq })
        })
        .collect();
    let outputs = cells.par_iter().map(|c| run_cell(c, config)).collect::<Result<Vec<_>, PipelineError>>()?;

    let rows: Vec<BenchmarkRow> = outputs.iter().map(|o| o.row.clone()).collect();
    let report = BenchReport { summary: summarize(&rows), rows, images_processed: images.len(), skipped };

    if let Some(out) = &config.out_dir {
        build_dir_atomic(out, |dir| write_artifacts(dir, &report, &pairs, &images, &degradations, &cells, &outputs))?;
    }
    Ok(report)
}

fn run_cell(cell: &Cell, config: &BenchConfig) -> Result<CellOutput, PipelineError> {
    let denoiser = config.denoiser.build(config.bridge_cmd.as_deref()).map_err(crate::solvers::SolverError::from)?;
    let y = &cell.degradation.y;
    let h = &cell.degradation.operator;
    let truth = &cell.image.truth;
    let params = match &config.tuning {
        Tuning::Grid(grid) => {
            grid_search(y, h, truth, cell.method, &*denoiser, grid, cell.sigma, cell.norm_sq, TUNING_BUDGET, config.max_iters)?
                .best
        }
        Tuning::Fixed { lambda, beta_factor } => cell
            .method
            .params(*lambda, beta_factor / (cell.sigma * cell.sigma), cell.sigma, cell.norm_sq)?
            .with_max_iters(config.max_iters)
            .with_tol(0.0),
    };
    // the tuning runs may have left warm state in a stateful denoiser
    let denoiser = config.denoiser.build(config.bridge_cmd.as_deref()).map_err(crate::solvers::SolverError::from)?;
    let opts = RunOptions { truth: Some(truth), ..Default::default() };
    let start = Instant::now();
    let result = run_method(cell.method, y, h, &*denoiser, &params, &opts)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let metrics = MetricReport::compute(&result.x_hat, truth)?;
    if !(metrics.psnr.is_finite() && metrics.ssim.is_finite()) {
        return Err(PipelineError::Spec(format!(
            "non-finite metrics for {} / {} / σ={}",
            cell.image.name,
            cell.method,
            sigma_label(cell.sigma)
        )));
    }
    Ok(CellOutput {
        row: BenchmarkRow {
            image: cell.image.name.clone(),
            method: cell.method,
            sigma: cell.sigma,
            lambda: params.lambda,
            beta: params.beta,
            psnr: metrics.psnr,
            ssim: metrics.ssim,
            wall_seconds,
            iterations: result.iterations_run,
        },
        x_hat: result.x_hat,
        trace: result.trace,
        params,
    })
}

/// Means per `(method, σ)`, ordered by method then σ.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, f64)> = rows.iter().map(|r| (r.method, r.sigma)).collect();
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    keys.dedup();
    keys.into_iter()
        .map(|(method, sigma)| {
            let group: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == method && r.sigma == sigma).collect();
            let n = group.len() as f64;
            let mean = |f: fn(&BenchmarkRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                method,
                sigma,
                images: group.len(),
                psnr: mean(|r| r.psnr),
                ssim: mean(|r| r.ssim),
                iterations: mean(|r| r.iterations as f64),
                wall_seconds: mean(|r| r.wall_seconds),
            }
        })
        .collect()
}

/// Summary CSV without timings, so two seeded runs give identical bytes.
pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s = String::from("method,noise_sigma_255,images,psnr_db,ssim,iterations\n");
    for r in summary {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.1}",
            r.method,
            sigma_label(r.sigma),
            r.images,
            r.psnr,
            r.ssim,
            r.iterations
        );
    }
    s
}

/// Per-cell rows without timings.
pub fn rows_csv(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from("image,noise_sigma_255,method,lambda,beta,psnr_db,ssim,iterations\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{:.6},{}",
            r.image,
            sigma_label(r.sigma),
            r.method,
            r.lambda,
            r.beta,
            r.psnr,
            r.ssim,
            r.iterations
        );
    }
    s
}

pub fn timing_csv(rows: &[BenchmarkRow]) -> String {
    let mut s = String::from("image,noise_sigma_255,method,wall_seconds\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6}", r.image, sigma_label(r.sigma), r.method, r.wall_seconds);
    }
    s
}

/// Fixed-width table for terminals. Timings are means per cell.
pub fn summary_table(summary: &[SummaryRow]) -> String {
    let mut s = String::from("noise sigma on the 0-255 scale (images normalized to [0, 1])\n");
    let _ = writeln!(s, "{:<8} {:>7} {:>6} {:>10} {:>8} {:>8} {:>10}", "method", "sigma", "images", "psnr_db", "ssim", "iters", "seconds");
    for r in summary {
        let _ = writeln!(
            s,
            "{:<8} {:>7} {:>6} {:>10.3} {:>8.4} {:>8.1} {:>10.3}",
            r.method.name(),
            sigma_label(r.sigma),
            r.images,
            r.psnr,
            r.ssim,
            r.iterations,
            r.wall_seconds
        );
    }
    s
}

fn stem(name: &str) -> &str {
    Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    dir: &Path,
    report: &BenchReport,
    pairs: &[(usize, f64)],
    images: &[Image],
    degradations: &[(Degradation, f64)],
    cells: &[Cell],
    outputs: &[CellOutput],
) -> Result<(), PipelineError> {
    write_atomic(&dir.join("summary.csv"), summary_csv(&report.summary).as_bytes())?;
    write_atomic(&dir.join("rows.csv"), rows_csv(&report.rows).as_bytes())?;
    write_atomic(&dir.join("timing.csv"), timing_csv(&report.rows).as_bytes())?;
    if !report.skipped.is_empty() {
        let text: String = report.skipped.iter().map(|(name, why)| format!("{name}: {why}\n")).collect();
        write_atomic(&dir.join("skipped.txt"), text.as_bytes())?;
    }
    for (&(i, sigma), (d, _)) in pairs.iter().zip(degradations) {
        let run = dir.join("runs").join(stem(&images[i].name)).join(format!("sigma_{}", sigma_label(sigma)));
        std::fs::create_dir_all(&run)?;
        write_png(&d.y, run.join("y.png"))?;
        save_oleary_dir(&d.blur, d.boundary, &run.join("operator"))?;
    }
    for (cell, out) in cells.iter().zip(outputs) {
        let run = dir
            .join("runs")
            .join(stem(&cell.image.name))
            .join(format!("sigma_{}", sigma_label(cell.sigma)))
            .join(cell.method.name());
        std::fs::create_dir_all(&run)?;
        write_png(&out.x_hat, run.join("x_hat.png"))?;
        out.trace.write_csv(&run.join("trace.csv"))?;
        let params = serde_json::to_string_pretty(&out.params).expect("params serialize");
        write_atomic(&run.join("params.json"), params.as_bytes())?;
    }
    Ok(())
}
