//! PSNR and SSIM.
//!
//! PSNR uses one MSE over every channel. SSIM is computed on BT.601 luma for
//! colour inputs, with an 11×11 Gaussian window (σ = 1.5) evaluated at every
//! position where the window fits inside the image.

use super::{compensated_sum, Dims, Raster, RasterError};

/// Reported PSNR for bit-identical inputs.
pub const PSNR_IDENTICAL_DB: f64 = 200.0;

const SSIM_WINDOW: usize = 11;
const SSIM_WINDOW_SIGMA: f64 = 1.5;
const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    /// PSNR and SSIM of `x` against `reference` at unit peak.
    pub fn compute(x: &Raster, reference: &Raster) -> Result<Self, RasterError> {
        Ok(Self { psnr: psnr(x, reference, 1.0)?, ssim: ssim(x, reference)? })
    }
}

pub fn mse(x: &Raster, reference: &Raster) -> Result<f64, RasterError> {
    x.ensure_same_dims(reference)?;
    Ok(x.dist_sq(reference) / x.len() as f64)
}

pub fn psnr(x: &Raster, reference: &Raster, peak: f64) -> Result<f64, RasterError> {
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// BT.601 luma of a 3-channel raster; single-channel input is returned as is.
pub fn to_luma(x: &Raster) -> Result<Raster, RasterError> {
    match x.channels() {
        1 => Ok(x.clone()),
        3 => {
            let dims = Dims { channels: 1, ..x.dims() };
            let (r, g, b) = (x.plane(0), x.plane(1), x.plane(2));
            let data = (0..dims.plane_len())
                .map(|i| LUMA_WEIGHTS[0] * r[i] + LUMA_WEIGHTS[1] * g[i] + LUMA_WEIGHTS[2] * b[i])
                .collect();
            Raster::from_vec(dims, data)
        }
        c => Err(RasterError::UnsupportedChannels(c)),
    }
}

pub fn ssim(x: &Raster, reference: &Raster) -> Result<f64, RasterError> {
    ssim_with_peak(x, reference, 1.0)
}

pub fn ssim_with_peak(x: &Raster, reference: &Raster, peak: f64) -> Result<f64, RasterError> {
    x.ensure_same_dims(reference)?;
    let a = to_luma(x)?;
    let b = to_luma(reference)?;
    let (w, h) = (a.width(), a.height());

    let mut size = SSIM_WINDOW.min(w).min(h);
    if size % 2 == 0 {
        size -= 1;
    }
    let taps = gaussian_taps(size, SSIM_WINDOW_SIGMA);

    let a = a.as_slice();
    let b = b.as_slice();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| p * q).collect();

    let mu_a = valid_filter(a, w, h, &taps);
    let mu_b = valid_filter(b, w, h, &taps);
    let e_aa = valid_filter(&aa, w, h, &taps);
    let e_bb = valid_filter(&bb, w, h, &taps);
    let e_ab = valid_filter(&ab, w, h, &taps);

    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let n = mu_a.len();
    let local = (0..n).map(|i| {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
    });
    Ok(compensated_sum(local) / n as f64)
}

fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let raw: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Separable filtering restricted to positions where the window fits.
fn valid_filter(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(t, &g)| g * src[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(t, &g)| g * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}
