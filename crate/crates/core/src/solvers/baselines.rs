use std::time::Instant;

use super::{
    cg_solve, check_finite, check_inputs, check_residuals, data_term, elapsed_ms, psnr_opt, IterateTrace, RestorationResult,
    RunOptions, SolverError, SolverParams, TraceRow, CONDITION_POWER_ITERS,
};
use crate::denoise::Denoiser;
use crate::linop::{estimate_norm_sq, LinearOperator};
use crate::raster::Raster;

/// Guard added to `Hx` before dividing in Richardson–Lucy.
pub const RL_DIVISION_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgSettings {
    pub iters: usize,
    pub tol: f64,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self { iters: 30, tol: 1e-6 }
    }
}

fn prior_term(denoiser: &dyn Denoiser, x: &Raster, lambda: f64) -> Option<f64> {
    if lambda == 0.0 {
        Some(0.0)
    } else {
        denoiser.prior(x).map(|f| lambda * f)
    }
}

/// PnP-ISTA: `x ← D_{√(λ·step)}(x − step · Hᵀ(Hx − y)/σ²)`.
///
/// `step` defaults to `σ²/‖H‖²` with the safety-scaled norm estimate. Uses
/// `λ`, `σ`, `max_iters` and `tol_residual` from `params`; the coupled
/// `σ_d` there belongs to LADMM and is ignored. Each iteration costs one
/// adjoint, one forward and one denoiser call.
pub fn run_pnp_ista(
    y: &Raster,
    h: &dyn LinearOperator,
    denoiser: &dyn Denoiser,
    params: &SolverParams,
    step: Option<f64>,
    opts: &RunOptions,
) -> Result<RestorationResult, SolverError> {
    params.validate()?;
    check_inputs(y, h, opts)?;
    let s2 = params.sigma * params.sigma;
    let step = match step {
        Some(s) if s.is_finite() && s > 0.0 => s,
        Some(s) => return Err(SolverError::InvalidParams(format!("ISTA step must be positive, got {s}"))),
        None => s2 / estimate_norm_sq(h, CONDITION_POWER_ITERS, 0),
    };
    let sigma_d = (params.lambda * step).sqrt();
    let mut x = match opts.x0 {
        Some(x0) => x0.clone(),
        None => h.adjoint(y),
    };
    let mut hx = h.forward(&x);
    let sqrt_n = (x.len() as f64).sqrt();
    let mut trace = IterateTrace { rows: Vec::with_capacity(params.max_iters), dual_gradient_gap: None };
    let mut converged = false;
    let start = Instant::now();
    for k in 1..=params.max_iters {
        let mut v = h.adjoint(&hx.sub(y));
        v.scale_in_place(-step / s2);
        v.axpy(1.0, &x);
        let x_next = denoiser.denoise(&v, sigma_d)?;
        check_finite(&x_next, k)?;
        let hx_next = h.forward(&x_next);
        check_finite(&hx_next, k)?;
        let res_x = x_next.dist(&x);
        check_residuals(&[res_x], k)?;
        x = x_next;
        hx = hx_next;
        let energy = prior_term(denoiser, &x, params.lambda).map(|p| data_term(&hx, y, params.sigma) + p);
        trace.rows.push(TraceRow {
            iter: k,
            res_x,
            res_z: None,
            res_w: None,
            lagrangian: None,
            energy,
            psnr: psnr_opt(&x, opts.truth),
            wall_ms: elapsed_ms(start),
        });
        if params.stops_at(res_x / sqrt_n) {
            converged = true;
            break;
        }
    }
    let iterations_run = trace.len();
    Ok(RestorationResult { x_hat: x, trace, converged, iterations_run })
}

/// Richardson–Lucy: `x ← x ⊙ Hᵀ(y ⊘ (Hx + ε)) ⊘ Hᵀ1`.
///
/// Negative samples of `y` are clamped to zero. The default start is the
/// per-channel mean of `y`, a positive constant. Only `max_iters` and
/// `tol_residual` are read from `params`.
pub fn run_richardson_lucy(
    y: &Raster,
    h: &dyn LinearOperator,
    params: &SolverParams,
    opts: &RunOptions,
) -> Result<RestorationResult, SolverError> {
    check_inputs(y, h, opts)?;
    if !h.preserves_nonnegativity() {
        return Err(SolverError::NotNonnegative);
    }
    let y = y.clamp(0.0, f64::INFINITY);
    let in_dims = h.shape().input;
    let mut x = match opts.x0 {
        Some(x0) => x0.clamp(0.0, f64::INFINITY),
        None => {
            let means: Vec<f64> = (0..y.channels())
                .map(|c| crate::raster::compensated_sum(y.plane(c).iter().copied()) / y.plane(c).len() as f64)
                .collect();
            Raster::from_fn(in_dims, |_, _, c| means[c.min(means.len() - 1)])
        }
    };
    let norm = h.adjoint(&Raster::filled(h.shape().output, 1.0));
    let sqrt_n = (x.len() as f64).sqrt();
    let mut trace = IterateTrace { rows: Vec::with_capacity(params.max_iters), dual_gradient_gap: None };
    let mut converged = false;
    let start = Instant::now();
    for k in 1..=params.max_iters {
        let hx = h.forward(&x);
        let ratio = y.zip_map(&hx, |yv, b| yv / (b + RL_DIVISION_GUARD));
        let back = h.adjoint(&ratio);
        let mut x_next = x.zip_map(&back, |a, b| a * b);
        for (v, n) in x_next.as_mut_slice().iter_mut().zip(norm.as_slice()) {
            *v = if *n > RL_DIVISION_GUARD { *v / n } else { 0.0 };
        }
        check_finite(&x_next, k)?;
        let res_x = x_next.dist(&x);
        check_residuals(&[res_x], k)?;
        x = x_next;
        trace.rows.push(TraceRow {
            iter: k,
            res_x,
            res_z: None,
            res_w: None,
            lagrangian: None,
            energy: None,
            psnr: psnr_opt(&x, opts.truth),
            wall_ms: elapsed_ms(start),
        });
        if params.stops_at(res_x / sqrt_n) {
            converged = true;
            break;
        }
    }
    let iterations_run = trace.len();
    Ok(RestorationResult { x_hat: x, trace, converged, iterations_run })
}

/// PnP-ADMM with the splitting `x = z`.
///
/// ```text
/// x ← argmin h(Hx) + (β/2)‖x − z + u‖²   (conjugate gradient, warm start)
/// z ← D_{√(λ/β)}(x + u)
/// u ← u + x − z
/// ```
///
/// Returns `z`. The Lagrangian column is left empty since this splitting
/// has a different Lagrangian; the energy column is `E(z)`.
pub fn run_pnp_admm_cg(
    y: &Raster,
    h: &dyn LinearOperator,
    denoiser: &dyn Denoiser,
    params: &SolverParams,
    cg: CgSettings,
    opts: &RunOptions,
) -> Result<RestorationResult, SolverError> {
    params.validate()?;
    check_inputs(y, h, opts)?;
    let in_dims = h.shape().input;
    let SolverParams { beta, sigma, lambda, .. } = *params;
    let inv_s2 = 1.0 / (sigma * sigma);
    let sigma_d = (lambda / beta).sqrt();
    let hty = h.adjoint(y);
    let mut x = match opts.x0 {
        Some(x0) => x0.clone(),
        None => hty.clone(),
    };
    let mut z = match opts.z0 {
        Some(z0) => {
            super::expect_dims("z0", z0, in_dims)?;
            z0.clone()
        }
        None => x.clone(),
    };
    let mut u = match opts.u0 {
        Some(u0) => {
            super::expect_dims("u0", u0, in_dims)?;
            u0.clone()
        }
        None => Raster::zeros(in_dims),
    };
    let rhs_data = hty.scale(inv_s2);
    let apply = |v: &Raster| {
        let mut out = h.adjoint(&h.forward(v));
        out.scale_in_place(inv_s2);
        out.axpy(beta, v);
        out
    };
    let sqrt_n = (x.len() as f64).sqrt();
    let mut trace = IterateTrace { rows: Vec::with_capacity(params.max_iters), dual_gradient_gap: None };
    let mut converged = false;
    let start = Instant::now();
    for k in 1..=params.max_iters {
        let mut b = z.sub(&u);
        b.scale_in_place(beta);
        b.axpy(1.0, &rhs_data);
        let x_next = cg_solve(apply, &b, &x, cg.iters, cg.tol)?.x;
        check_finite(&x_next, k)?;
        let z_next = denoiser.denoise(&x_next.add(&u), sigma_d)?;
        check_finite(&z_next, k)?;
        let mut u_next = u.add(&x_next);
        u_next.axpy(-1.0, &z_next);

        let res_x = x_next.dist(&x);
        let res_z = z_next.dist(&z);
        let res_w = beta * u_next.dist(&u);
        check_residuals(&[res_x, res_z, res_w], k)?;
        x = x_next;
        z = z_next;
        u = u_next;
        let energy = prior_term(denoiser, &z, lambda).map(|p| data_term(&h.forward(&z), y, sigma) + p);
        trace.rows.push(TraceRow {
            iter: k,
            res_x,
            res_z: Some(res_z),
            res_w: Some(res_w),
            lagrangian: None,
            energy,
            psnr: psnr_opt(&z, opts.truth),
            wall_ms: elapsed_ms(start),
        });
        if params.stops_at(res_x.max(res_z).max(res_w) / sqrt_n) {
            converged = true;
            break;
        }
    }
    let iterations_run = trace.len();
    Ok(RestorationResult { x_hat: z, trace, converged, iterations_run })
}
