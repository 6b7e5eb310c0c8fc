//! Convolution operators: plain, decimated, and the plane-level kernels they
//! share.
//!
//! The forward map is a true convolution, `out(p) = Σ_d k(d) · x(p − d)`,
//! where out-of-range source coordinates are resolved by the boundary rule.
//! The adjoint scatters each output sample back through the same index map,
//! which makes it the exact transpose for both boundary rules.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Boundary, Kernel, LinearOperator, LinopError, OperatorShape};
use crate::raster::{Dims, Raster};

/// Kernels wider or taller than this use the FFT path under periodic
/// boundaries.
pub const DIRECT_MAX_KERNEL: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMethod {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// For each kernel column/row offset, the source coordinate read by each
/// output coordinate along one axis.
fn axis_tables(len: usize, taps: usize, boundary: Boundary) -> Vec<Vec<usize>> {
    let centre = (taps / 2) as isize;
    (0..taps)
        .map(|t| {
            let d = t as isize - centre;
            (0..len as isize)
                .map(|p| boundary.resolve(p - d, len))
                .collect()
        })
        .collect()
}

/// Direct-path forward convolution of one plane.
pub fn convolve_plane(src: &[f64], width: usize, height: usize, k: &Kernel, boundary: Boundary) -> Vec<f64> {
    let cols = axis_tables(width, k.width(), boundary);
    let rows = axis_tables(height, k.height(), boundary);
    let mut out = vec![0.0; width * height];
    for (b, row_map) in rows.iter().enumerate() {
        for (a, col_map) in cols.iter().enumerate() {
            let tap = k.tap(a, b);
            if tap == 0.0 {
                continue;
            }
            for (y, &sy) in row_map.iter().enumerate() {
                let src_row = &src[sy * width..(sy + 1) * width];
                let dst_row = &mut out[y * width..(y + 1) * width];
                for (dst, &sx) in dst_row.iter_mut().zip(col_map) {
                    *dst += tap * src_row[sx];
                }
            }
        }
    }
    out
}

/// Direct-path adjoint of [`convolve_plane`]: scatter through the same index maps.
pub fn convolve_adjoint_plane(src: &[f64], width: usize, height: usize, k: &Kernel, boundary: Boundary) -> Vec<f64> {
    let cols = axis_tables(width, k.width(), boundary);
    let rows = axis_tables(height, k.height(), boundary);
    let mut out = vec![0.0; width * height];
    for (b, row_map) in rows.iter().enumerate() {
        for (a, col_map) in cols.iter().enumerate() {
            let tap = k.tap(a, b);
            if tap == 0.0 {
                continue;
            }
            for (y, &sy) in row_map.iter().enumerate() {
                let src_row = &src[y * width..(y + 1) * width];
                let dst_row = &mut out[sy * width..(sy + 1) * width];
                for (v, &sx) in src_row.iter().zip(col_map) {
                    dst_row[sx] += tap * v;
                }
            }
        }
    }
    out
}

/// Periodic convolution through the 2-D DFT; the kernel spectrum is computed
/// once for the plane size.
struct FftPath {
    width: usize,
    height: usize,
    spectrum: Vec<Complex64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl FftPath {
    fn new(k: &Kernel, width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let mut path = Self {
            width,
            height,
            spectrum: Vec::new(),
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        };
        let mut psf = vec![Complex64::new(0.0, 0.0); width * height];
        let (cx, cy) = ((k.width() / 2) as isize, (k.height() / 2) as isize);
        for b in 0..k.height() {
            for a in 0..k.width() {
                let x = (a as isize - cx).rem_euclid(width as isize) as usize;
                let y = (b as isize - cy).rem_euclid(height as isize) as usize;
                psf[y * width + x].re += k.tap(a, b);
            }
        }
        path.transform(&mut psf, false);
        path.spectrum = psf;
        path
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (w, h) = (self.width, self.height);
        let (row, col) = if inverse { (&self.row_inv, &self.col_inv) } else { (&self.row_fwd, &self.col_fwd) };
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for x in 0..w {
            for y in 0..h {
                column[y] = buf[y * w + x];
            }
            col.process(&mut column);
            for y in 0..h {
                buf[y * w + x] = column[y];
            }
        }
    }

    fn apply(&self, src: &[f64], conjugate: bool) -> Vec<f64> {
        let mut buf: Vec<Complex64> = src.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut buf, false);
        for (v, s) in buf.iter_mut().zip(&self.spectrum) {
            *v *= if conjugate { s.conj() } else { *s };
        }
        self.transform(&mut buf, true);
        let norm = 1.0 / (self.width * self.height) as f64;
        buf.into_iter().map(|v| v.re * norm).collect()
    }
}

/// Per-channel 2-D convolution with a fixed kernel and boundary rule.
pub struct ConvolutionOperator {
    kernel: Kernel,
    boundary: Boundary,
    dims: Dims,
    fft: Option<FftPath>,
}

impl ConvolutionOperator {
    pub fn new(kernel: Kernel, boundary: Boundary, dims: Dims) -> Result<Self, LinopError> {
        Self::with_method(kernel, boundary, dims, ConvMethod::Auto)
    }

    pub fn with_method(kernel: Kernel, boundary: Boundary, dims: Dims, method: ConvMethod) -> Result<Self, LinopError> {
        check_dims(dims)?;
        let use_fft = match method {
            ConvMethod::Direct => false,
            ConvMethod::Fft => {
                if boundary != Boundary::Periodic {
                    return Err(LinopError::FftNeedsPeriodic);
                }
                true
            }
            ConvMethod::Auto => {
                boundary == Boundary::Periodic
                    && (kernel.width() > DIRECT_MAX_KERNEL || kernel.height() > DIRECT_MAX_KERNEL)
            }
        };
        let fft = use_fft.then(|| FftPath::new(&kernel, dims.width, dims.height));
        Ok(Self { kernel, boundary, dims, fft })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn uses_fft(&self) -> bool {
        self.fft.is_some()
    }

    fn per_plane(&self, x: &Raster, adjoint: bool) -> Raster {
        assert_eq!(x.dims(), self.dims, "convolution input shape mismatch");
        let (w, h) = (self.dims.width, self.dims.height);
        let mut out = Raster::zeros(self.dims);
        for c in 0..self.dims.channels {
            let plane = match (&self.fft, adjoint) {
                (Some(fft), conj) => fft.apply(x.plane(c), conj),
                (None, false) => convolve_plane(x.plane(c), w, h, &self.kernel, self.boundary),
                (None, true) => convolve_adjoint_plane(x.plane(c), w, h, &self.kernel, self.boundary),
            };
            out.plane_mut(c).copy_from_slice(&plane);
        }
        out
    }
}

impl LinearOperator for ConvolutionOperator {
    fn shape(&self) -> OperatorShape {
        OperatorShape { input: self.dims, output: self.dims }
    }

    fn forward(&self, x: &Raster) -> Raster {
        self.per_plane(x, false)
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        self.per_plane(y, true)
    }

    fn preserves_nonnegativity(&self) -> bool {
        self.kernel.is_nonnegative()
    }
}

/// Convolution followed by keeping every `factor`-th pixel along both axes,
/// starting at the top-left of each block.
pub struct DecimatedConvolution {
    conv: ConvolutionOperator,
    factor: usize,
    output: Dims,
}

impl DecimatedConvolution {
    pub fn new(kernel: Kernel, factor: usize, boundary: Boundary, dims: Dims) -> Result<Self, LinopError> {
        if factor == 0 || !dims.width.is_multiple_of(factor) || !dims.height.is_multiple_of(factor) {
            return Err(LinopError::Indivisible { width: dims.width, height: dims.height, factor });
        }
        let conv = ConvolutionOperator::new(kernel, boundary, dims)?;
        let output = Dims::new(dims.width / factor, dims.height / factor, dims.channels);
        Ok(Self { conv, factor, output })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }
}

impl LinearOperator for DecimatedConvolution {
    fn shape(&self) -> OperatorShape {
        OperatorShape { input: self.conv.dims, output: self.output }
    }

    fn forward(&self, x: &Raster) -> Raster {
        let full = self.conv.forward(x);
        let f = self.factor;
        Raster::from_fn(self.output, |i, j, c| full.get(i * f, j * f, c))
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        assert_eq!(y.dims(), self.output, "decimated adjoint input shape mismatch");
        let f = self.factor;
        let mut up = Raster::zeros(self.conv.dims);
        for c in 0..self.output.channels {
            for j in 0..self.output.height {
                for i in 0..self.output.width {
                    up.set(i * f, j * f, c, y.get(i, j, c));
                }
            }
        }
        self.conv.adjoint(&up)
    }

    fn preserves_nonnegativity(&self) -> bool {
        self.conv.preserves_nonnegativity()
    }
}

pub(crate) fn check_dims(dims: Dims) -> Result<(), LinopError> {
    if dims.is_empty() {
        Err(LinopError::EmptyDims(dims))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::adjoint_check;

    fn random_kernel(size: usize, seed: u64) -> Kernel {
        let r = Raster::random_uniform(Dims::new(size, size, 1), -1.0, 1.0, seed);
        Kernel::new(size, size, r.into_vec()).unwrap()
    }

    #[test]
    fn delta_kernel_is_identity() {
        let dims = Dims::new(6, 5, 2);
        let x = Raster::random_normal(dims, 1);
        for b in [Boundary::Periodic, Boundary::Replicate] {
            let op = ConvolutionOperator::new(Kernel::delta(), b, dims).unwrap();
            assert_eq!(op.forward(&x), x);
            assert_eq!(op.adjoint(&x), x);
        }
    }

    #[test]
    fn uniform_kernel_preserves_constants() {
        let dims = Dims::new(7, 9, 1);
        let x = Raster::filled(dims, 0.37);
        for b in [Boundary::Periodic, Boundary::Replicate] {
            let op = ConvolutionOperator::new(Kernel::uniform(3).unwrap(), b, dims).unwrap();
            let y = op.forward(&x);
            assert!(y.as_slice().iter().all(|v| (v - 0.37).abs() < 1e-14));
        }
    }

    #[test]
    fn translation_by_offset_kernel() {
        // taps at column 2 of a 3x1 kernel: out(x) = in(x - 1)
        let k = Kernel::new(3, 1, vec![0.0, 0.0, 1.0]).unwrap();
        let dims = Dims::new(4, 1, 1);
        let x = Raster::from_vec(dims, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let per = ConvolutionOperator::new(k.clone(), Boundary::Periodic, dims).unwrap();
        assert_eq!(per.forward(&x).as_slice(), &[4.0, 1.0, 2.0, 3.0]);
        let rep = ConvolutionOperator::new(k, Boundary::Replicate, dims).unwrap();
        assert_eq!(rep.forward(&x).as_slice(), &[1.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let dims = Dims::new(20, 18, 2);
        let x = Raster::random_normal(dims, 4);
        for size in [3, 5, 17] {
            let k = random_kernel(size, size as u64);
            let direct = ConvolutionOperator::with_method(k.clone(), Boundary::Periodic, dims, ConvMethod::Direct).unwrap();
            let fft = ConvolutionOperator::with_method(k, Boundary::Periodic, dims, ConvMethod::Fft).unwrap();
            assert!(direct.forward(&x).dist(&fft.forward(&x)) <= 1e-9 * x.norm());
            assert!(direct.adjoint(&x).dist(&fft.adjoint(&x)) <= 1e-9 * x.norm());
        }
    }

    #[test]
    fn large_periodic_kernels_pick_fft() {
        let dims = Dims::new(32, 32, 1);
        let big = ConvolutionOperator::new(Kernel::uniform(17).unwrap(), Boundary::Periodic, dims).unwrap();
        let small = ConvolutionOperator::new(Kernel::uniform(15).unwrap(), Boundary::Periodic, dims).unwrap();
        let replicate = ConvolutionOperator::new(Kernel::uniform(17).unwrap(), Boundary::Replicate, dims).unwrap();
        assert!(big.uses_fft());
        assert!(!small.uses_fft());
        assert!(!replicate.uses_fft());
        assert!(matches!(
            ConvolutionOperator::with_method(Kernel::delta(), Boundary::Replicate, dims, ConvMethod::Fft),
            Err(LinopError::FftNeedsPeriodic)
        ));
    }

    #[test]
    fn kernel_larger_than_image_wraps() {
        let dims = Dims::new(4, 4, 1);
        let k = random_kernel(7, 3);
        let op = ConvolutionOperator::new(k, Boundary::Periodic, dims).unwrap();
        assert!(adjoint_check(&op, 20, 1) < 1e-12);
        let rep = ConvolutionOperator::new(random_kernel(7, 4), Boundary::Replicate, dims).unwrap();
        assert!(adjoint_check(&rep, 20, 1) < 1e-12);
    }

    #[test]
    fn decimation_factor_one_equals_convolution() {
        let dims = Dims::new(8, 6, 1);
        let k = random_kernel(3, 9);
        let x = Raster::random_normal(dims, 2);
        let conv = ConvolutionOperator::new(k.clone(), Boundary::Replicate, dims).unwrap();
        let dec = DecimatedConvolution::new(k, 1, Boundary::Replicate, dims).unwrap();
        assert_eq!(conv.forward(&x), dec.forward(&x));
        assert_eq!(conv.adjoint(&x), dec.adjoint(&x));
    }

    #[test]
    fn pure_decimation_picks_block_corners() {
        let dims = Dims::new(4, 4, 1);
        let x = Raster::from_fn(dims, |i, j, _| (j * 4 + i) as f64);
        let dec = DecimatedConvolution::new(Kernel::delta(), 2, Boundary::Periodic, dims).unwrap();
        assert_eq!(dec.forward(&x).as_slice(), &[0.0, 2.0, 8.0, 10.0]);
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        assert!(matches!(
            DecimatedConvolution::new(Kernel::delta(), 3, Boundary::Periodic, Dims::new(8, 9, 1)),
            Err(LinopError::Indivisible { .. })
        ));
    }
}
