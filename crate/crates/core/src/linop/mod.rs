//! Matrix-free linear operators.
//!
//! Every degradation model the solvers see is a [`LinearOperator`]: a forward
//! map `H`, its adjoint `Hᵀ`, and fixed input/output shapes. Nothing here ever
//! materializes a matrix; dense construction only happens inside tests.

mod analysis;
mod conv;
mod kernel;
mod oleary;

pub use analysis::{adjoint_check, estimate_norm_sq, power_iteration, NORM_SAFETY_FACTOR};
pub use conv::{
    convolve_adjoint_plane, convolve_plane, ConvMethod, ConvolutionOperator, DecimatedConvolution,
    DIRECT_MAX_KERNEL,
};
pub use kernel::Kernel;
pub use oleary::{load_oleary_dir, save_oleary_dir, OLearyBlur, OLearyManifest, OLearyOperator, MASK_SUM_TOL};

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::raster::{Dims, Raster, RasterError};

#[derive(Debug, Error)]
pub enum LinopError {
    #[error("kernel must have odd positive width and height, got {width}x{height}")]
    EvenKernel { width: usize, height: usize },
    #[error("kernel holds {got} taps, expected {expected}")]
    KernelLength { got: usize, expected: usize },
    #[error("kernel has non-finite taps")]
    NonFiniteKernel,
    #[error("invalid kernel: {0}")]
    InvalidKernelSpec(String),
    #[error("operator dimensions must be positive, got {0}")]
    EmptyDims(Dims),
    #[error("dimensions {width}x{height} are not divisible by factor {factor}")]
    Indivisible { width: usize, height: usize, factor: usize },
    #[error("the FFT convolution path needs periodic boundaries")]
    FftNeedsPeriodic,
    #[error("mask value {value} at ({x}, {y}) is not 0 or 1")]
    NonBinaryMask { x: usize, y: usize, value: f64 },
    #[error("masks must be single-channel rasters")]
    MaskChannels,
    #[error("mask {index} has dims {got}, expected {expected}")]
    MaskDims { index: usize, got: Dims, expected: Dims },
    #[error("mask {index} is negative ({value}) at ({x}, {y})")]
    NegativeMask { index: usize, x: usize, y: usize, value: f64 },
    #[error("masks sum to {sum} at ({x}, {y}), expected 1")]
    MaskSum { x: usize, y: usize, sum: f64 },
    #[error("O'Leary blur needs at least one region")]
    NoRegions,
    #[error("{kernels} kernels but {masks} masks")]
    RegionCount { kernels: usize, masks: usize },
    #[error("invalid operator manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How convolutions read pixels outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    Replicate,
}

impl Boundary {
    /// Maps a possibly out-of-range coordinate onto `0..len`.
    pub fn resolve(self, p: isize, len: usize) -> usize {
        match self {
            Boundary::Periodic => p.rem_euclid(len as isize) as usize,
            Boundary::Replicate => p.clamp(0, len as isize - 1) as usize,
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" => Ok(Boundary::Periodic),
            "replicate" => Ok(Boundary::Replicate),
            other => Err(format!("unknown boundary mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorShape {
    pub input: Dims,
    pub output: Dims,
}

/// A matrix-free linear map `H` with its adjoint.
///
/// `forward` and `adjoint` panic when handed a raster of the wrong shape;
/// solvers validate shapes once at entry.
pub trait LinearOperator: Send + Sync {
    fn shape(&self) -> OperatorShape;

    fn forward(&self, x: &Raster) -> Raster;

    fn adjoint(&self, y: &Raster) -> Raster;

    /// Whether `H` maps nonnegative images to nonnegative images (all taps and
    /// weights nonnegative). Richardson–Lucy requires it.
    fn preserves_nonnegativity(&self) -> bool {
        false
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn shape(&self) -> OperatorShape {
        (**self).shape()
    }
    fn forward(&self, x: &Raster) -> Raster {
        (**self).forward(x)
    }
    fn adjoint(&self, y: &Raster) -> Raster {
        (**self).adjoint(y)
    }
    fn preserves_nonnegativity(&self) -> bool {
        (**self).preserves_nonnegativity()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Box<T> {
    fn shape(&self) -> OperatorShape {
        (**self).shape()
    }
    fn forward(&self, x: &Raster) -> Raster {
        (**self).forward(x)
    }
    fn adjoint(&self, y: &Raster) -> Raster {
        (**self).adjoint(y)
    }
    fn preserves_nonnegativity(&self) -> bool {
        (**self).preserves_nonnegativity()
    }
}

pub struct IdentityOperator {
    dims: Dims,
}

impl IdentityOperator {
    pub fn new(dims: Dims) -> Self {
        Self { dims }
    }
}

impl LinearOperator for IdentityOperator {
    fn shape(&self) -> OperatorShape {
        OperatorShape { input: self.dims, output: self.dims }
    }

    fn forward(&self, x: &Raster) -> Raster {
        assert_eq!(x.dims(), self.dims, "identity input shape mismatch");
        x.clone()
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        self.forward(y)
    }

    fn preserves_nonnegativity(&self) -> bool {
        true
    }
}

/// Pointwise multiplication by a binary mask (inpainting). Self-adjoint.
pub struct MaskOperator {
    mask: Raster,
}

impl MaskOperator {
    /// `mask` is single-channel and is applied to each of `channels` planes.
    pub fn new(mask: &Raster, channels: usize) -> Result<Self, LinopError> {
        if mask.channels() != 1 {
            return Err(LinopError::MaskChannels);
        }
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                let value = mask.get(x, y, 0);
                if value != 0.0 && value != 1.0 {
                    return Err(LinopError::NonBinaryMask { x, y, value });
                }
            }
        }
        Ok(Self { mask: mask.broadcast_channels(channels) })
    }
}

impl LinearOperator for MaskOperator {
    fn shape(&self) -> OperatorShape {
        OperatorShape { input: self.mask.dims(), output: self.mask.dims() }
    }

    fn forward(&self, x: &Raster) -> Raster {
        x.zip_map(&self.mask, |a, m| a * m)
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        self.forward(y)
    }

    fn preserves_nonnegativity(&self) -> bool {
        true
    }
}

/// Wraps an operator and counts forward and adjoint applications.
pub struct CountingOperator<T> {
    inner: T,
    forward_calls: AtomicUsize,
    adjoint_calls: AtomicUsize,
}

impl<T: LinearOperator> CountingOperator<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, forward_calls: AtomicUsize::new(0), adjoint_calls: AtomicUsize::new(0) }
    }

    pub fn forward_calls(&self) -> usize {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn adjoint_calls(&self) -> usize {
        self.adjoint_calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
        self.adjoint_calls.store(0, Ordering::Relaxed);
    }
}

impl<T: LinearOperator> LinearOperator for CountingOperator<T> {
    fn shape(&self) -> OperatorShape {
        self.inner.shape()
    }

    fn forward(&self, x: &Raster) -> Raster {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.forward(x)
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        self.adjoint_calls.fetch_add(1, Ordering::Relaxed);
        self.inner.adjoint(y)
    }

    fn preserves_nonnegativity(&self) -> bool {
        self.inner.preserves_nonnegativity()
    }
}
