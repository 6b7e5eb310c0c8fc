//! Planar image container and the vector arithmetic the solvers run on.
//!
//! A [`Raster`] stores `channels` planes of `width × height` samples in
//! row-major order, all in double precision. Single precision only appears at
//! the I/O boundaries (the denoiser bridge and 8-bit PNG files).

mod io;
mod metrics;

pub use io::{read_png, read_raster, read_vprx, write_png, write_raster, write_vprx, RASTER_MAGIC};
pub use metrics::{mse, psnr, ssim, ssim_with_peak, to_luma, MetricReport, PSNR_IDENTICAL_DB};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}x{channels}")]
    EmptyDims { width: usize, height: usize, channels: usize },
    #[error("sample buffer holds {got} values, expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Dims, right: Dims },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(usize),
    #[error("malformed raster container: {0}")]
    Format(String),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Width, height and channel count of a raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels }
    }

    pub const fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane_len(&self) -> usize {
        self.width * self.height
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    dims: Dims,
    data: Vec<f64>,
}

impl Raster {
    pub fn zeros(dims: Dims) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Self {
        assert!(!dims.is_empty(), "raster dimensions must be positive, got {dims}");
        Self { dims, data: vec![value; dims.len()] }
    }

    /// Wraps a planar row-major buffer, checking length and finiteness.
    pub fn from_vec(dims: Dims, data: Vec<f64>) -> Result<Self, RasterError> {
        if dims.is_empty() {
            return Err(RasterError::EmptyDims {
                width: dims.width,
                height: dims.height,
                channels: dims.channels,
            });
        }
        if data.len() != dims.len() {
            return Err(RasterError::LengthMismatch { got: data.len(), expected: dims.len() });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(Self { dims, data })
    }

    /// Builds a raster by evaluating `f(x, y, channel)` at every sample.
    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.len());
        for c in 0..dims.channels {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn channels(&self) -> usize {
        self.dims.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (c * self.dims.height + y) * self.dims.width + x
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.dims.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.dims.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_dims(&self, other: &Raster) -> Result<(), RasterError> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(RasterError::ShapeMismatch { left: self.dims, right: other.dims })
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination of two equally shaped rasters.
    ///
    /// Panics on a shape mismatch; callers validate shapes at their entry points.
    pub fn zip_map(&self, other: &Raster, f: impl Fn(f64, f64) -> f64) -> Raster {
        assert_eq!(self.dims, other.dims, "raster shape mismatch");
        Raster {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Raster) -> Raster {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Raster) -> Raster {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Raster {
        self.map(|v| v * s)
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Raster) {
        assert_eq!(self.dims, other.dims, "raster shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn dot(&self, other: &Raster) -> f64 {
        assert_eq!(self.dims, other.dims, "raster shape mismatch");
        compensated_sum(self.data.iter().zip(&other.data).map(|(a, b)| a * b))
    }

    pub fn norm_sq(&self) -> f64 {
        compensated_sum(self.data.iter().map(|a| a * a))
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Squared Euclidean distance, without allocating the difference.
    pub fn dist_sq(&self, other: &Raster) -> f64 {
        assert_eq!(self.dims, other.dims, "raster shape mismatch");
        compensated_sum(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)))
    }

    pub fn dist(&self, other: &Raster) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.data.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Raster {
        self.map(|v| v.clamp(lo, hi))
    }

    /// Replicates a single-channel raster into `channels` identical planes.
    pub fn broadcast_channels(&self, channels: usize) -> Raster {
        assert_eq!(self.dims.channels, 1, "broadcast needs a single-channel raster");
        let mut data = Vec::with_capacity(self.len() * channels);
        for _ in 0..channels {
            data.extend_from_slice(&self.data);
        }
        Raster { dims: Dims { channels, ..self.dims }, data }
    }

    /// Seeded uniform samples in `[lo, hi)`.
    pub fn random_uniform(dims: Dims, lo: f64, hi: f64, seed: u64) -> Raster {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..dims.len()).map(|_| rng.gen_range(lo..hi)).collect();
        Raster { dims, data }
    }

    /// Seeded i.i.d. standard normal samples.
    pub fn random_normal(dims: Dims, seed: u64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let data = (0..dims.len()).map(|_| normal.sample(&mut rng)).collect();
        Raster { dims, data }
    }
}

/// Returns `x + n` with `n ~ N(0, sigma²)` i.i.d., deterministic in `seed`.
///
/// The result is not clipped to `[0, 1]`.
pub fn add_gaussian_noise(x: &Raster, sigma: f64, seed: u64) -> Raster {
    assert!(sigma >= 0.0 && sigma.is_finite(), "noise sigma must be finite and nonnegative");
    if sigma == 0.0 {
        return x.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid normal");
    let data = x.as_slice().iter().map(|v| v + normal.sample(&mut rng)).collect();
    Raster { dims: x.dims, data }
}

/// Neumaier-compensated summation. Diagnostics compare consecutive Lagrangian
/// values at ~1e-8 absolute, which plain accumulation over 10⁴ terms can miss.
pub fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
