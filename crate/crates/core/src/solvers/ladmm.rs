use std::time::Instant;

use super::{
    check_finite, check_inputs, check_residuals, data_term, elapsed_ms, expect_dims, lagrangian_from_parts, psnr_opt,
    IterateTrace, RestorationResult, RunOptions, SolverError, SolverParams, TraceRow,
};
use crate::denoise::Denoiser;
use crate::linop::LinearOperator;
use crate::raster::Raster;

/// Plug & Play linearized ADMM.
///
/// ```text
/// x ← D_{σ_d}(x − (β/L_x) Hᵀ(Hx − z + u))
/// z ← (y + σ²β(Hx + u)) / (1 + βσ²)
/// u ← u + Hx − z
/// ```
///
/// Defaults: `x0 = Hᵀy`, `z0 = Hx0`, `u0 = 0`. Each iteration costs one
/// adjoint, one forward and one denoiser call. The trace row for iteration
/// `k` describes the state after it, so the Lagrangian column is `m_1, m_2, …`.
pub fn run_pnp_ladmm(
    y: &Raster,
    h: &dyn LinearOperator,
    denoiser: &dyn Denoiser,
    params: &SolverParams,
    opts: &RunOptions,
) -> Result<RestorationResult, SolverError> {
    params.validate()?;
    check_inputs(y, h, opts)?;
    let out_dims = h.shape().output;
    let mut x = match opts.x0 {
        Some(x0) => x0.clone(),
        None => h.adjoint(y),
    };
    let mut hx = h.forward(&x);
    let mut z = match opts.z0 {
        Some(z0) => {
            expect_dims("z0", z0, out_dims)?;
            z0.clone()
        }
        None => hx.clone(),
    };
    let mut u = match opts.u0 {
        Some(u0) => {
            expect_dims("u0", u0, out_dims)?;
            u0.clone()
        }
        None => Raster::zeros(out_dims),
    };

    let SolverParams { beta, l_x, sigma, sigma_d, lambda, .. } = *params;
    let s2 = sigma * sigma;
    let step = beta / l_x;
    let z_den = 1.0 / (1.0 + beta * s2);
    let sqrt_n = (x.len() as f64).sqrt();
    let evaluable = lambda == 0.0 || denoiser.prior(&x).is_some();

    let mut trace = IterateTrace { rows: Vec::with_capacity(params.max_iters), dual_gradient_gap: Some(0.0) };
    let mut converged = false;
    let mut gap_max = 0.0f64;
    let start = Instant::now();
    for k in 1..=params.max_iters {
        let mut r = hx.sub(&z);
        r.axpy(1.0, &u);
        let mut v = h.adjoint(&r);
        v.scale_in_place(-step);
        v.axpy(1.0, &x);
        let x_next = denoiser.denoise(&v, sigma_d)?;
        check_finite(&x_next, k)?;
        let hx_next = h.forward(&x_next);
        check_finite(&hx_next, k)?;

        let z_next = y.zip_map(&hx_next.add(&u), |yv, t| (yv + s2 * beta * t) * z_den);
        let mut u_next = u.add(&hx_next);
        u_next.axpy(-1.0, &z_next);
        check_finite(&u_next, k)?;

        let res_x = x_next.dist(&x);
        let res_z = z_next.dist(&z);
        let res_w = beta * u_next.dist(&u);
        check_residuals(&[res_x, res_z, res_w], k)?;

        let w_next = u_next.scale(beta);
        let grad_h = z_next.sub(y).scale(1.0 / s2);
        gap_max = gap_max.max(w_next.dist(&grad_h));

        let f_x = if !evaluable {
            None
        } else if lambda == 0.0 {
            Some(0.0)
        } else {
            denoiser.prior(&x_next)
        };
        let lagrangian = f_x.map(|f| lagrangian_from_parts(&hx_next, &z_next, &w_next, y, params, f));
        let energy = f_x.map(|f| data_term(&hx_next, y, sigma) + lambda * f);

        x = x_next;
        hx = hx_next;
        z = z_next;
        u = u_next;

        trace.rows.push(TraceRow {
            iter: k,
            res_x,
            res_z: Some(res_z),
            res_w: Some(res_w),
            lagrangian,
            energy,
            psnr: psnr_opt(&x, opts.truth),
            wall_ms: elapsed_ms(start),
        });
        if params.stops_at(res_x.max(res_z).max(res_w) / sqrt_n) {
            converged = true;
            break;
        }
    }
    trace.dual_gradient_gap = Some(gap_max);
    let iterations_run = trace.len();
    Ok(RestorationResult { x_hat: x, trace, converged, iterations_run })
}
