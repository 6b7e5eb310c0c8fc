use super::SolverError;
use crate::raster::Raster;

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Raster,
    pub iterations: usize,
    /// `‖b − Ax‖ / ‖b‖` at exit.
    pub relative_residual: f64,
}

/// Conjugate gradient for a symmetric positive definite `apply_a`.
///
/// Stops when the relative residual reaches `tol` or after `iters`
/// iterations. A non-positive or non-finite curvature `⟨p, Ap⟩` is reported
/// as a breakdown.
pub fn cg_solve(
    apply_a: impl Fn(&Raster) -> Raster,
    b: &Raster,
    x0: &Raster,
    iters: usize,
    tol: f64,
) -> Result<CgOutcome, SolverError> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(CgOutcome { x: Raster::zeros(b.dims()), iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.clone();
    let mut r = b.sub(&apply_a(&x));
    let mut rr = r.norm_sq();
    let mut p = r.clone();
    let mut done = 0;
    while done < iters && rr.sqrt() > tol * b_norm {
        let ap = apply_a(&p);
        let curvature = p.dot(&ap);
        if !(curvature.is_finite() && curvature > 0.0) {
            return Err(SolverError::CgBreakdown { iteration: done + 1, curvature });
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_next = r.norm_sq();
        p = r.add(&p.scale(rr_next / rr));
        rr = rr_next;
        done += 1;
    }
    Ok(CgOutcome { x, iterations: done, relative_residual: rr.sqrt() / b_norm })
}
