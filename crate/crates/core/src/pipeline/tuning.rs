use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::denoise::Denoiser;
use crate::linop::LinearOperator;
use crate::raster::{psnr, Raster};
use crate::solvers::{run_method, Method, RunOptions, SolverParams};

/// Iterations per grid point while tuning.
pub const TUNING_BUDGET: usize = 100;

/// Candidate values; `β` is given as a multiple of `L_h = 1/σ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub lambdas: Vec<f64>,
    pub beta_factors: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self { lambdas: vec![5.0, 10.0, 20.0, 40.0], beta_factors: vec![0.25, 0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridPoint {
    pub lambda: f64,
    pub beta: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: SolverParams,
    pub table: Vec<GridPoint>,
}

/// Scores every `(λ, β)` pair by PSNR after `budget` iterations and returns
/// the best, breaking ties towards the smallest `(λ, β)`.
///
/// Methods that ignore `β` are evaluated at `β = L_h` only; Richardson–Lucy
/// has no tunable parameter and gets a single point. The winner carries
/// `max_iters = full_budget` and a zero residual tolerance.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    y: &Raster,
    h: &dyn LinearOperator,
    truth: &Raster,
    method: Method,
    denoiser: &dyn Denoiser,
    grid: &ParamGrid,
    sigma: f64,
    norm_sq: f64,
    budget: usize,
    full_budget: usize,
) -> Result<GridResult, PipelineError> {
    if grid.lambdas.is_empty() || grid.beta_factors.is_empty() {
        return Err(PipelineError::EmptyGrid);
    }
    let l_h = 1.0 / (sigma * sigma);
    let mut lambdas = grid.lambdas.clone();
    let mut betas: Vec<f64> = if method.uses_beta() {
        grid.beta_factors.iter().map(|f| f * l_h).collect()
    } else {
        vec![l_h]
    };
    if !method.uses_denoiser() {
        lambdas = vec![lambdas.iter().copied().fold(f64::INFINITY, f64::min)];
    }
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    betas.sort_by(f64::total_cmp);
    betas.dedup();

    let opts = RunOptions::default();
    let mut table = Vec::with_capacity(lambdas.len() * betas.len());
    let mut best: Option<(f64, SolverParams)> = None;
    for &lambda in &lambdas {
        for &beta in &betas {
            let params = method.params(lambda, beta, sigma, norm_sq)?.with_max_iters(budget).with_tol(0.0);
            // a diverging grid point simply scores as the worst
            let score = match run_method(method, y, h, denoiser, &params, &opts) {
                Ok(r) => psnr(&r.x_hat, truth, 1.0)?,
                Err(crate::solvers::SolverError::Diverged { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e.into()),
            };
            table.push(GridPoint { lambda, beta, psnr: score });
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, params));
            }
        }
    }
    let (_, best) = best.expect("grid is nonempty");
    Ok(GridResult { best: best.with_max_iters(full_budget), table })
}
