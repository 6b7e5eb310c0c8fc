use super::LinopError;
use crate::raster::{Dims, Raster};

/// Odd-sized 2-D convolution taps, anchored at the centre, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    width: usize,
    height: usize,
    taps: Vec<f64>,
}

impl Kernel {
    pub fn new(width: usize, height: usize, taps: Vec<f64>) -> Result<Self, LinopError> {
        if width == 0 || height == 0 || width.is_multiple_of(2) || height.is_multiple_of(2) {
            return Err(LinopError::EvenKernel { width, height });
        }
        if taps.len() != width * height {
            return Err(LinopError::KernelLength { got: taps.len(), expected: width * height });
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(LinopError::NonFiniteKernel);
        }
        Ok(Self { width, height, taps })
    }

    pub fn delta() -> Self {
        Self { width: 1, height: 1, taps: vec![1.0] }
    }

    /// `size × size` box filter with taps `1 / size²`.
    pub fn uniform(size: usize) -> Result<Self, LinopError> {
        let n = size * size;
        Self::new(size, size, vec![1.0 / n as f64; n])
    }

    /// Sampled anisotropic Gaussian, rotated by `angle` radians, normalized.
    ///
    /// Standard deviations below 1e-6 collapse that axis to a single tap;
    /// `(0, 0)` gives the delta kernel.
    pub fn gaussian(std_x: f64, std_y: f64, angle: f64) -> Result<Self, LinopError> {
        const MIN_STD: f64 = 1e-6;
        if !(std_x >= 0.0 && std_y >= 0.0 && angle.is_finite()) {
            return Err(LinopError::InvalidKernelSpec(format!(
                "gaussian std ({std_x}, {std_y}) angle {angle}"
            )));
        }
        if std_x < MIN_STD && std_y < MIN_STD {
            return Ok(Self::delta());
        }
        let radius = (3.0 * std_x.max(std_y)).ceil() as usize;
        let size = 2 * radius + 1;
        let (sx, sy) = (std_x.max(MIN_STD), std_y.max(MIN_STD));
        let (s, c) = angle.sin_cos();
        let r = radius as f64;
        let mut taps = Vec::with_capacity(size * size);
        for j in 0..size {
            for i in 0..size {
                let (dx, dy) = (i as f64 - r, j as f64 - r);
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                taps.push((-0.5 * (u * u / (sx * sx) + v * v / (sy * sy))).exp());
            }
        }
        Self::new(size, size, taps)?.normalized()
    }

    /// Anti-aliased line segment of `length` pixels at `angle` radians with
    /// the given `thickness`, normalized. Zero length gives the delta kernel.
    pub fn motion(length: f64, angle: f64, thickness: f64) -> Result<Self, LinopError> {
        if !(length >= 0.0 && thickness > 0.0 && angle.is_finite()) {
            return Err(LinopError::InvalidKernelSpec(format!(
                "motion length {length} angle {angle} thickness {thickness}"
            )));
        }
        if length < 1e-9 {
            return Ok(Self::delta());
        }
        let half = 0.5 * length;
        let radius = (half + 0.5 * thickness + 1.0).ceil() as usize;
        let size = 2 * radius + 1;
        let (s, c) = angle.sin_cos();
        let r = radius as f64;
        let mut taps = Vec::with_capacity(size * size);
        for j in 0..size {
            for i in 0..size {
                let (dx, dy) = (i as f64 - r, j as f64 - r);
                // distance from (dx, dy) to the segment [-half, half] along (c, s)
                let along = (c * dx + s * dy).clamp(-half, half);
                let dist = ((dx - along * c).powi(2) + (dy - along * s).powi(2)).sqrt();
                taps.push((0.5 * thickness + 0.5 - dist).clamp(0.0, 1.0));
            }
        }
        Self::new(size, size, taps)?.normalized()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Tap at column `i`, row `j`.
    pub fn tap(&self, i: usize, j: usize) -> f64 {
        self.taps[j * self.width + i]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.taps.iter().all(|&t| t >= 0.0)
    }

    pub fn is_normalized(&self) -> bool {
        (self.sum() - 1.0).abs() <= 1e-12
    }

    pub fn normalized(self) -> Result<Self, LinopError> {
        let s = self.sum();
        if s.abs() < f64::MIN_POSITIVE {
            return Err(LinopError::InvalidKernelSpec("kernel sums to zero".into()));
        }
        Ok(Self { taps: self.taps.into_iter().map(|t| t / s).collect(), ..self })
    }

    /// The kernel rotated by 180°.
    pub fn flipped(&self) -> Self {
        Self { taps: self.taps.iter().rev().copied().collect(), ..self.clone() }
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_vec(Dims::new(self.width, self.height, 1), self.taps.clone())
            .expect("kernel taps are finite")
    }

    pub fn from_raster(r: &Raster) -> Result<Self, LinopError> {
        if r.channels() != 1 {
            return Err(LinopError::InvalidKernelSpec(format!(
                "kernel raster must have one channel, got {}",
                r.channels()
            )));
        }
        Self::new(r.width(), r.height(), r.as_slice().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_kernels_are_rejected() {
        assert!(matches!(Kernel::new(2, 3, vec![0.0; 6]), Err(LinopError::EvenKernel { .. })));
        assert!(matches!(Kernel::uniform(4), Err(LinopError::EvenKernel { .. })));
    }

    #[test]
    fn gaussian_and_motion_are_normalized_and_nonnegative() {
        for k in [
            Kernel::gaussian(1.2, 0.4, 0.7).unwrap(),
            Kernel::gaussian(2.0, 2.0, 0.0).unwrap(),
            Kernel::motion(7.0, 0.3, 1.0).unwrap(),
            Kernel::motion(3.0, 1.9, 2.0).unwrap(),
        ] {
            assert!(k.is_normalized(), "sum {}", k.sum());
            assert!(k.is_nonnegative());
            assert_eq!(k.width() % 2, 1);
        }
    }

    #[test]
    fn degenerate_specs_give_delta() {
        assert_eq!(Kernel::gaussian(0.0, 0.0, 0.0).unwrap(), Kernel::delta());
        assert_eq!(Kernel::motion(0.0, 1.0, 1.0).unwrap(), Kernel::delta());
    }

    #[test]
    fn gaussian_is_symmetric_under_rotation() {
        let k = Kernel::gaussian(1.5, 0.5, 0.4).unwrap();
        let f = k.flipped();
        for (a, b) in k.taps().iter().zip(f.taps()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn horizontal_motion_is_a_row() {
        let k = Kernel::motion(4.0, 0.0, 1.0).unwrap();
        let c = k.height() / 2;
        let off_row: f64 = (0..k.height())
            .filter(|&j| j != c)
            .flat_map(|j| (0..k.width()).map(move |i| (i, j)))
            .map(|(i, j)| k.tap(i, j))
            .sum();
        assert!(off_row < 1e-12);
    }
}
