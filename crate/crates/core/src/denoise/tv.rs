//! Isotropic total-variation prox by Chambolle's dual projection.
//!
//! Solves `min_u ½‖u − g‖² + θ TV(u)` through its dual: `u = g − θ div p`
//! with `|p| ≤ 1` pointwise, iterating
//! `p ← (p + τ ∇(div p − g/θ)) / (1 + τ |∇(div p − g/θ)|)` at `τ = 1/8`.
//! Gradients are periodic forward differences, matching the default
//! convolution boundary. Each channel is handled independently.

use std::sync::Mutex;

use super::{check_sigma, DenoiseError, Denoiser};
use crate::raster::{compensated_sum, Dims, Raster};

pub const TV_DEFAULT_INNER_ITERS: usize = 50;
/// Early exit when the relative change of the dual field drops below this.
pub const TV_DEFAULT_TOL: f64 = 1e-6;
const TAU: f64 = 0.125;

/// Isotropic TV, summed over channels.
pub fn total_variation(x: &Raster) -> f64 {
    let (w, h) = (x.width(), x.height());
    let mut terms = Vec::with_capacity(x.len());
    for c in 0..x.channels() {
        let u = x.plane(c);
        for y in 0..h {
            for i in 0..w {
                let v = u[y * w + i];
                let gx = u[y * w + (i + 1) % w] - v;
                let gy = u[((y + 1) % h) * w + i] - v;
                terms.push((gx * gx + gy * gy).sqrt());
            }
        }
    }
    compensated_sum(terms.into_iter())
}

fn gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        let down = ((y + 1) % h) * w;
        for i in 0..w {
            let v = u[y * w + i];
            gx[y * w + i] = u[y * w + (i + 1) % w] - v;
            gy[y * w + i] = u[down + i] - v;
        }
    }
}

/// `div = −∇ᵀ`.
fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let up = ((y + h - 1) % h) * w;
        for i in 0..w {
            let left = y * w + (i + w - 1) % w;
            out[y * w + i] = px[y * w + i] - px[left] + py[y * w + i] - py[up + i];
        }
    }
}

struct DualField {
    px: Vec<f64>,
    py: Vec<f64>,
}

/// Runs the dual iteration on one plane, updating `field` in place. Returns
/// the per-iteration dual objective `‖g − θ div p‖²` and the iteration count.
#[allow(clippy::too_many_arguments)]
fn solve_plane(
    g: &[f64],
    w: usize,
    h: usize,
    theta: f64,
    iters: usize,
    tol: f64,
    field: &mut DualField,
    history: Option<&mut Vec<f64>>,
) -> (Vec<f64>, usize) {
    let n = w * h;
    let mut div = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut qx = vec![0.0; n];
    let mut qy = vec![0.0; n];
    let mut history = history;
    let mut done = 0;
    for _ in 0..iters {
        divergence(&field.px, &field.py, w, h, &mut div);
        for k in 0..n {
            v[k] = div[k] - g[k] / theta;
        }
        gradient(&v, w, h, &mut qx, &mut qy);
        let mut change = 0.0;
        let mut size = 0.0;
        for k in 0..n {
            let mag = (qx[k] * qx[k] + qy[k] * qy[k]).sqrt();
            let denom = 1.0 + TAU * mag;
            let nx = (field.px[k] + TAU * qx[k]) / denom;
            let ny = (field.py[k] + TAU * qy[k]) / denom;
            change += (nx - field.px[k]).powi(2) + (ny - field.py[k]).powi(2);
            size += nx * nx + ny * ny;
            field.px[k] = nx;
            field.py[k] = ny;
        }
        done += 1;
        if let Some(h_) = history.as_deref_mut() {
            divergence(&field.px, &field.py, w, h, &mut div);
            h_.push(compensated_sum((0..n).map(|k| (g[k] - theta * div[k]).powi(2))));
        }
        if size > 0.0 && (change / size).sqrt() < tol {
            break;
        }
    }
    divergence(&field.px, &field.py, w, h, &mut div);
    let u = (0..n).map(|k| g[k] - theta * div[k]).collect();
    (u, done)
}

fn prox_impl(
    x: &Raster,
    theta: f64,
    iters: usize,
    tol: f64,
    mut fields: Option<&mut Vec<DualField>>,
    mut history: Option<&mut Vec<f64>>,
) -> Raster {
    if theta == 0.0 {
        return x.clone();
    }
    let dims = x.dims();
    let (w, h) = (dims.width, dims.height);
    let mut out = Raster::zeros(dims);
    for c in 0..dims.channels {
        let mut local = DualField { px: vec![0.0; w * h], py: vec![0.0; w * h] };
        let field = match fields.as_deref_mut() {
            Some(f) => &mut f[c],
            None => &mut local,
        };
        let (u, _) = solve_plane(x.plane(c), w, h, theta, iters, tol, field, history.as_deref_mut());
        out.plane_mut(c).copy_from_slice(&u);
    }
    out
}

/// `prox_{θ TV}(x)` from a cold dual start.
pub fn tv_prox(x: &Raster, theta: f64, iters: usize, tol: f64) -> Raster {
    prox_impl(x, theta, iters, tol, None, None)
}

/// Like [`tv_prox`] but also returns the dual objective after every
/// iteration (single-channel inputs give one value per iteration).
pub fn tv_prox_with_history(x: &Raster, theta: f64, iters: usize, tol: f64) -> (Raster, Vec<f64>) {
    let mut history = Vec::new();
    let u = prox_impl(x, theta, iters, tol, None, Some(&mut history));
    (u, history)
}

type WarmState = Mutex<Option<(Dims, Vec<DualField>)>>;

/// Total-variation prior, `f = TV`, denoised by [`tv_prox`] at `θ = σ_d²`.
pub struct TvDenoiser {
    inner_iters: usize,
    tol: f64,
    warm: Option<WarmState>,
}

impl Default for TvDenoiser {
    fn default() -> Self {
        Self::new(TV_DEFAULT_INNER_ITERS)
    }
}

impl TvDenoiser {
    pub fn new(inner_iters: usize) -> Self {
        assert!(inner_iters >= 1, "TV prox needs at least one inner iteration");
        Self { inner_iters, tol: TV_DEFAULT_TOL, warm: None }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// Reuse the dual field of the previous call as the starting point.
    ///
    /// Outer solvers call the prox on slowly changing inputs, so this cuts the
    /// inner iterations needed for a given accuracy. Results then depend on
    /// call history.
    pub fn with_warm_start(mut self) -> Self {
        self.warm = Some(Mutex::new(None));
        self
    }

    pub fn inner_iters(&self) -> usize {
        self.inner_iters
    }
}

impl Denoiser for TvDenoiser {
    fn name(&self) -> &str {
        "tv"
    }

    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        check_sigma(sigma_d)?;
        let theta = sigma_d * sigma_d;
        let out = match &self.warm {
            None => tv_prox(x, theta, self.inner_iters, self.tol),
            Some(slot) => {
                let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
                let dims = x.dims();
                let reuse = matches!(&*guard, Some((d, _)) if *d == dims);
                if !reuse {
                    let n = dims.plane_len();
                    let fields = (0..dims.channels)
                        .map(|_| DualField { px: vec![0.0; n], py: vec![0.0; n] })
                        .collect();
                    *guard = Some((dims, fields));
                }
                let (_, fields) = guard.as_mut().expect("initialized above");
                prox_impl(x, theta, self.inner_iters, self.tol, Some(fields), None)
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(DenoiseError::NonFinite)
        }
    }

    fn exact_prox(&self) -> bool {
        true
    }

    fn prior(&self, x: &Raster) -> Option<f64> {
        Some(total_variation(x))
    }
}
