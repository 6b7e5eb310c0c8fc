//! Synthetic degradations, parameter tuning and the benchmark harness.

mod bench;
mod degrade;
mod scenes;
mod tuning;

use thiserror::Error;

pub use bench::{
    rows_csv, run_benchmark, sigma_label, summarize, summary_csv, summary_table, threads_from_env, timing_csv,
    BenchConfig, BenchReport, BenchmarkRow, SummaryRow, Tuning, BENCH_SIGMAS_255, THREADS_ENV,
};
pub use degrade::{
    strip_masks, synthesize_degradation, voronoi_masks, Degradation, DegradationSpec, KernelSpec, MaskMode,
    FEATHER_STD,
};
pub use scenes::{
    quantize_8bit, shipped_dataset, synthetic_scene, PeriodicBenchmark, ADVERSARIAL_LX_RATIO, BENCHMARK_SEED, BENCHMARK_SIGMA,
    BENCHMARK_SIZE, TIKHONOV_LAMBDA, TV_LAMBDA,
};
pub use tuning::{grid_search, GridPoint, GridResult, ParamGrid, TUNING_BUDGET};

use crate::linop::LinopError;
use crate::raster::RasterError;
use crate::solvers::SolverError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid degradation spec: {0}")]
    Spec(String),
    #[error("mask weights vanish at pixel ({x}, {y}); cannot renormalize")]
    MaskRenormalization { x: usize, y: usize },
    #[error("no readable images in {0}")]
    NoImages(std::path::PathBuf),
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
