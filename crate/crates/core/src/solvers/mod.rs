//! Restoration algorithms and their convergence diagnostics.
//!
//! The data term is Gaussian, `h(z) = ‖z − y‖² / (2σ²)`, and the estimated
//! image minimizes `E(x) = h(Hx) + λ f(x)` where `f` is the prior whose
//! proximal operator the denoiser computes. PnP-LADMM splits `z = Hx` and
//! tracks the augmented Lagrangian
//! `L(x, z, w) = h(z) + λ f(x) + ⟨w, Hx − z⟩ + (β/2)‖Hx − z‖²`,
//! storing the multiplier scaled as `u = w / β`.

mod cg;
mod ladmm;
mod baselines;
mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use baselines::{run_pnp_admm_cg, run_pnp_ista, run_richardson_lucy, CgSettings, RL_DIVISION_GUARD};
pub use cg::{cg_solve, CgOutcome};
pub use ladmm::run_pnp_ladmm;
pub use trace::{IterateTrace, TraceRow, TRACE_HEADER};

use crate::denoise::{DenoiseError, Denoiser};
use crate::linop::{estimate_norm_sq, LinearOperator};
use crate::raster::{Dims, Raster};

pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL_RESIDUAL: f64 = 1e-5;
/// Power iterations used when conditions are checked against an operator.
pub const CONDITION_POWER_ITERS: usize = 100;
/// Tolerance on the coupling `σ_d² = λ / L_x` when all three are supplied.
pub const COUPLING_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("{what} has shape {got}, expected {expected}")]
    Shape { what: &'static str, got: Dims, expected: Dims },
    /// An iterate, or its distance to the previous one, overflowed.
    #[error("diverged: non-finite iterate at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("conjugate gradient breakdown at inner iteration {iteration} (curvature {curvature})")]
    CgBreakdown { iteration: usize, curvature: f64 },
    #[error("operator does not preserve nonnegativity (negative kernel taps)")]
    NotNonnegative,
    #[error("prior of the {0} denoiser cannot be evaluated")]
    PriorNotEvaluable(String),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
}

/// Parameters of one solver run. `σ_d² = λ / L_x` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub lambda: f64,
    pub sigma_d: f64,
    pub beta: f64,
    pub l_x: f64,
    /// Noise standard deviation of the data term.
    pub sigma: f64,
    pub max_iters: usize,
    pub tol_residual: f64,
}

/// Partially specified coupled parameters, resolved by [`Coupling::resolve`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Coupling {
    pub lambda: Option<f64>,
    pub sigma_d: Option<f64>,
    pub beta: Option<f64>,
    pub l_x: Option<f64>,
}

impl Coupling {
    /// Fills in the missing values.
    ///
    /// `β` defaults to `1/σ²`. Two of `{λ, σ_d, L_x}` determine the third; all
    /// three must agree within [`COUPLING_TOL`]. With only `λ` or `σ_d` known,
    /// `L_x` defaults to `β‖H‖²` when `norm_sq` is given.
    pub fn resolve(&self, sigma: f64, norm_sq: Option<f64>) -> Result<SolverParams, SolverError> {
        let bad = |m: String| Err(SolverError::InvalidParams(m));
        if !(sigma.is_finite() && sigma > 0.0) {
            return bad(format!("sigma must be positive, got {sigma}"));
        }
        for (name, v) in [("lambda", self.lambda), ("sigma_d", self.sigma_d), ("beta", self.beta), ("L_x", self.l_x)] {
            if let Some(v) = v {
                if !v.is_finite() || v < 0.0 {
                    return bad(format!("{name} must be finite and nonnegative, got {v}"));
                }
            }
        }
        let beta = self.beta.unwrap_or(1.0 / (sigma * sigma));
        let (lambda, sigma_d, l_x) = match (self.lambda, self.sigma_d, self.l_x) {
            (Some(lam), Some(sd), Some(lx)) => {
                let gap = (sd * sd - lam / lx).abs();
                if gap > COUPLING_TOL * (sd * sd).max(1.0) {
                    return bad(format!("sigma_d^2 = {} but lambda / L_x = {}", sd * sd, lam / lx));
                }
                (lam, sd, lx)
            }
            (Some(lam), Some(sd), None) => {
                if sd == 0.0 {
                    if lam != 0.0 {
                        return bad("sigma_d = 0 requires lambda = 0".into());
                    }
                    match norm_sq {
                        Some(n) => (0.0, 0.0, beta * n),
                        None => return bad("L_x is undetermined when lambda = sigma_d = 0".into()),
                    }
                } else {
                    (lam, sd, lam / (sd * sd))
                }
            }
            (Some(lam), None, Some(lx)) => (lam, (lam / lx).sqrt(), lx),
            (None, Some(sd), Some(lx)) => (sd * sd * lx, sd, lx),
            (lam, sd, None) => {
                let Some(n) = norm_sq else {
                    return bad("supply three of lambda, sigma_d, beta, L_x".into());
                };
                let lx = beta * n;
                match (lam, sd) {
                    (Some(lam), None) => (lam, (lam / lx).sqrt(), lx),
                    (None, Some(sd)) => (sd * sd * lx, sd, lx),
                    _ => return bad("one of lambda or sigma_d is required".into()),
                }
            }
            (None, None, Some(_)) => return bad("one of lambda or sigma_d is required".into()),
        };
        let params = SolverParams {
            lambda,
            sigma_d,
            beta,
            l_x,
            sigma,
            max_iters: DEFAULT_MAX_ITERS,
            tol_residual: DEFAULT_TOL_RESIDUAL,
        };
        params.validate()?;
        Ok(params)
    }
}

impl SolverParams {
    /// `β = 1/σ²` and `L_x = β‖H‖²`, the smallest values meeting both
    /// convergence conditions for the given norm estimate.
    pub fn satisfying_conditions(lambda: f64, sigma: f64, norm_sq: f64) -> Result<Self, SolverError> {
        Coupling { lambda: Some(lambda), ..Default::default() }.resolve(sigma, Some(norm_sq))
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_tol(mut self, tol_residual: f64) -> Self {
        self.tol_residual = tol_residual;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidParams(m));
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.l_x.is_finite() && self.l_x > 0.0) {
            return bad(format!("L_x must be positive, got {}", self.l_x));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if !(self.sigma_d.is_finite() && self.sigma_d >= 0.0) {
            return bad(format!("sigma_d must be nonnegative, got {}", self.sigma_d));
        }
        if !(self.tol_residual.is_finite() && self.tol_residual >= 0.0) {
            return bad(format!("tol_residual must be nonnegative, got {}", self.tol_residual));
        }
        let (s2, ratio) = (self.sigma_d * self.sigma_d, self.lambda / self.l_x);
        if (s2 - ratio).abs() > COUPLING_TOL * s2.max(1.0) {
            return bad(format!("sigma_d^2 = {s2} but lambda / L_x = {ratio}"));
        }
        Ok(())
    }

    /// Lipschitz constant of `∇h`.
    /// Stopping test on the largest residual divided by `√N`. A zero
    /// tolerance never stops, so the run lasts exactly `max_iters`.
    pub fn stops_at(&self, scaled_residual: f64) -> bool {
        self.tol_residual > 0.0 && scaled_residual <= self.tol_residual
    }

    pub fn l_h(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub l_h: f64,
    pub beta_ok: bool,
    pub l_x_ok: bool,
    pub norm_sq_used: f64,
}

impl ConditionReport {
    pub fn from_norm_sq(params: &SolverParams, norm_sq: f64) -> Self {
        let l_h = params.l_h();
        Self { l_h, beta_ok: params.beta >= l_h, l_x_ok: params.l_x >= params.beta * norm_sq, norm_sq_used: norm_sq }
    }

    pub fn ok(&self) -> bool {
        self.beta_ok && self.l_x_ok
    }
}

/// Checks `β ≥ L_h` and `L_x ≥ β‖H‖²` with the safety-scaled norm estimate.
pub fn check_conditions(h: &dyn LinearOperator, params: &SolverParams, seed: u64) -> ConditionReport {
    ConditionReport::from_norm_sq(params, estimate_norm_sq(h, CONDITION_POWER_ITERS, seed))
}

/// The four restoration algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ladmm,
    AdmmCg,
    Ista,
    Rl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ladmm, Method::AdmmCg, Method::Ista, Method::Rl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ladmm => "ladmm",
            Method::AdmmCg => "admm-cg",
            Method::Ista => "ista",
            Method::Rl => "rl",
        }
    }

    /// Whether `β` changes the iterates of this method.
    pub fn uses_beta(self) -> bool {
        matches!(self, Method::Ladmm | Method::AdmmCg)
    }

    pub fn uses_denoiser(self) -> bool {
        self != Method::Rl
    }

    /// Resolves `(λ, β)` for this method given `‖H‖²`. LADMM takes the
    /// smallest `L_x` meeting `L_x ≥ β‖H‖²`; the other methods only read
    /// `λ`, `β` and `σ` and get the same coupled values.
    pub fn params(self, lambda: f64, beta: f64, sigma: f64, norm_sq: f64) -> Result<SolverParams, SolverError> {
        Coupling { lambda: Some(lambda), beta: Some(beta), ..Default::default() }.resolve(sigma, Some(norm_sq))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected ladmm, admm-cg, ista or rl)"))
    }
}

/// Runs `method` with its default settings (ISTA step `σ²/‖H‖²`, CG 30
/// iterations at 1e-6).
pub fn run_method(
    method: Method,
    y: &Raster,
    h: &dyn LinearOperator,
    denoiser: &dyn Denoiser,
    params: &SolverParams,
    opts: &RunOptions,
) -> Result<RestorationResult, SolverError> {
    match method {
        Method::Ladmm => run_pnp_ladmm(y, h, denoiser, params, opts),
        Method::AdmmCg => run_pnp_admm_cg(y, h, denoiser, params, CgSettings::default(), opts),
        Method::Ista => run_pnp_ista(y, h, denoiser, params, None, opts),
        Method::Rl => run_richardson_lucy(y, h, params, opts),
    }
}

/// Starting points and ground truth shared by all solvers.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions<'a> {
    pub x0: Option<&'a Raster>,
    pub z0: Option<&'a Raster>,
    pub u0: Option<&'a Raster>,
    pub truth: Option<&'a Raster>,
}

#[derive(Debug, Clone)]
pub struct RestorationResult {
    pub x_hat: Raster,
    pub trace: IterateTrace,
    pub converged: bool,
    pub iterations_run: usize,
}

fn data_term(hx_or_z: &Raster, y: &Raster, sigma: f64) -> f64 {
    hx_or_z.dist_sq(y) / (2.0 * sigma * sigma)
}

fn lagrangian_from_parts(hx: &Raster, z: &Raster, w: &Raster, y: &Raster, params: &SolverParams, f_x: f64) -> f64 {
    let r = hx.sub(z);
    data_term(z, y, params.sigma) + params.lambda * f_x + w.dot(&r) + 0.5 * params.beta * r.norm_sq()
}

/// `h(z) + λ f(x) + ⟨w, Hx − z⟩ + (β/2)‖Hx − z‖²` where `f_x = f(x)`.
pub fn eval_augmented_lagrangian(
    x: &Raster,
    z: &Raster,
    w: &Raster,
    y: &Raster,
    h: &dyn LinearOperator,
    params: &SolverParams,
    f_x: Option<f64>,
) -> Result<f64, SolverError> {
    let f_x = f_x.ok_or_else(|| SolverError::PriorNotEvaluable("given".into()))?;
    let shape = h.shape();
    expect_dims("x", x, shape.input)?;
    for (what, r) in [("z", z), ("w", w), ("y", y)] {
        expect_dims(what, r, shape.output)?;
    }
    Ok(lagrangian_from_parts(&h.forward(x), z, w, y, params, f_x))
}

/// `E(x) = h(Hx) + λ f(x)`, or `None` when `f` is unknown.
pub fn energy(x: &Raster, y: &Raster, h: &dyn LinearOperator, denoiser: &dyn Denoiser, params: &SolverParams) -> Option<f64> {
    energy_from_hx(&h.forward(x), x, y, denoiser, params)
}

fn energy_from_hx(hx: &Raster, x: &Raster, y: &Raster, denoiser: &dyn Denoiser, params: &SolverParams) -> Option<f64> {
    let f = if params.lambda == 0.0 { 0.0 } else { denoiser.prior(x)? };
    Some(data_term(hx, y, params.sigma) + params.lambda * f)
}

/// `∇E(x) = Hᵀ(Hx − y)/σ² + λ∇f(x)` for a differentiable prior.
pub fn energy_gradient(
    x: &Raster,
    y: &Raster,
    h: &dyn LinearOperator,
    denoiser: &dyn Denoiser,
    params: &SolverParams,
) -> Option<Raster> {
    let mut g = h.adjoint(&h.forward(x).sub(y)).scale(1.0 / (params.sigma * params.sigma));
    if params.lambda != 0.0 {
        g.axpy(params.lambda, &denoiser.prior_gradient(x)?);
    }
    Some(g)
}

pub(crate) fn expect_dims(what: &'static str, r: &Raster, expected: Dims) -> Result<(), SolverError> {
    if r.dims() == expected {
        Ok(())
    } else {
        Err(SolverError::Shape { what, got: r.dims(), expected })
    }
}

pub(crate) fn check_finite(r: &Raster, iteration: usize) -> Result<(), SolverError> {
    if r.is_finite() {
        Ok(())
    } else {
        Err(SolverError::Diverged { iteration })
    }
}

pub(crate) fn check_residuals(residuals: &[f64], iteration: usize) -> Result<(), SolverError> {
    if residuals.iter().all(|r| r.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::Diverged { iteration })
    }
}

pub(crate) fn psnr_opt(x: &Raster, truth: Option<&Raster>) -> Option<f64> {
    truth.map(|t| crate::raster::psnr(x, t, 1.0).expect("truth shape checked at entry"))
}

pub(crate) fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Shared entry validation: `y` in the output space, truth in the input space.
pub(crate) fn check_inputs(y: &Raster, h: &dyn LinearOperator, opts: &RunOptions) -> Result<(), SolverError> {
    let shape = h.shape();
    expect_dims("y", y, shape.output)?;
    if let Some(t) = opts.truth {
        expect_dims("truth", t, shape.input)?;
    }
    if let Some(x0) = opts.x0 {
        expect_dims("x0", x0, shape.input)?;
    }
    Ok(())
}
