use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::path::Path;

use super::PipelineError;
use crate::linop::{save_oleary_dir, Boundary, ConvolutionOperator, Kernel, LinearOperator, OLearyBlur};
use crate::raster::{add_gaussian_noise, write_png, write_vprx, Dims, Raster};
use crate::solvers::{Coupling, SolverParams};

/// Seeded piecewise-smooth test image in `[0.05, 0.95]`: a tilted gradient
/// with rectangles, disks and a faint sinusoidal texture.
pub fn synthetic_scene(dims: Dims, seed: u64) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (dims.width as f64, dims.height as f64);
    let tilt = rng.gen_range(0.0..std::f64::consts::TAU);
    let base: Vec<f64> = (0..dims.channels).map(|_| rng.gen_range(0.25..0.45)).collect();
    enum Shape {
        Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
        Disk { cx: f64, cy: f64, r: f64 },
    }
    let shapes: Vec<(Shape, Vec<f64>)> = (0..6)
        .map(|i| {
            let shape = if i % 2 == 0 {
                let (x0, y0) = (rng.gen_range(0.0..0.7) * w, rng.gen_range(0.0..0.7) * h);
                let (sw, sh) = (rng.gen_range(0.15..0.4) * w, rng.gen_range(0.15..0.4) * h);
                Shape::Rect { x0, y0, x1: x0 + sw, y1: y0 + sh }
            } else {
                Shape::Disk {
                    cx: rng.gen_range(0.15..0.85) * w,
                    cy: rng.gen_range(0.15..0.85) * h,
                    r: rng.gen_range(0.08..0.2) * w.min(h),
                }
            };
            let level = (0..dims.channels).map(|_| rng.gen_range(0.1..0.9)).collect();
            (shape, level)
        })
        .collect();
    let freq = rng.gen_range(3.0..6.0) * std::f64::consts::TAU / w.max(h);
    Raster::from_fn(dims, |x, y, c| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let along = (px * tilt.cos() + py * tilt.sin()) / (w + h);
        let mut v = base[c] + 0.3 * along;
        for (shape, level) in &shapes {
            let inside = match *shape {
                Shape::Rect { x0, y0, x1, y1 } => px >= x0 && px < x1 && py >= y0 && py < y1,
                Shape::Disk { cx, cy, r } => (px - cx).powi(2) + (py - cy).powi(2) <= r * r,
            };
            if inside {
                v = level[c];
            }
        }
        (v + 0.04 * (freq * px).sin() * (freq * py).cos()).clamp(0.05, 0.95)
    })
}

/// Rounds to the 8-bit grid so the image survives a PNG round trip.
pub fn quantize_8bit(x: &Raster) -> Raster {
    x.map(|v| (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) / 255.0)
}

/// The small benchmark dataset shipped under `data/dataset/`: named 8-bit
/// scenes, two grayscale and one colour, 32×32.
pub fn shipped_dataset() -> Vec<(String, Raster)> {
    [("scene_a.png", 1, 11u64), ("scene_b.png", 3, 12), ("scene_c.png", 1, 13)]
        .into_iter()
        .map(|(name, channels, seed)| (name.to_string(), quantize_8bit(&synthetic_scene(Dims::new(32, 32, channels), seed))))
        .collect()
}

/// A single-kernel periodic deblurring problem with known ground truth.
pub struct PeriodicBenchmark {
    pub truth: Raster,
    pub y: Raster,
    pub kernel: Kernel,
    pub operator: ConvolutionOperator,
    pub sigma: f64,
}

/// Standard instance: grayscale 64×64 scene, 5×5 uniform blur with
/// periodic boundary, noise σ = 10/255, seed 1.
pub const BENCHMARK_SIZE: usize = 64;
pub const BENCHMARK_SIGMA: f64 = 10.0 / 255.0;
pub const BENCHMARK_SEED: u64 = 1;
/// Regularization weights used with the standard instance.
pub const TIKHONOV_LAMBDA: f64 = 50.0;
pub const TV_LAMBDA: f64 = 10.0;
/// `L_x / (β‖H‖²)` in the adversarial configuration.
pub const ADVERSARIAL_LX_RATIO: f64 = 0.2;

impl PeriodicBenchmark {
    pub fn new(size: usize, kernel: Kernel, sigma: f64, seed: u64) -> Self {
        let dims = Dims::new(size, size, 1);
        let truth = quantize_8bit(&synthetic_scene(dims, seed));
        let operator = ConvolutionOperator::new(kernel.clone(), Boundary::Periodic, dims).expect("nonempty dims");
        let y = add_gaussian_noise(&operator.forward(&truth), sigma, seed.wrapping_add(1000));
        Self { truth, y, kernel, operator, sigma }
    }

    /// The standard instance used by the convergence checks.
    pub fn standard() -> Self {
        Self::new(BENCHMARK_SIZE, Kernel::uniform(5).expect("odd size"), BENCHMARK_SIGMA, BENCHMARK_SEED)
    }

    /// Tikhonov parameters meeting both convergence conditions.
    pub fn tikhonov_params(&self, norm_sq: f64) -> SolverParams {
        SolverParams::satisfying_conditions(TIKHONOV_LAMBDA, self.sigma, norm_sq).expect("valid benchmark parameters")
    }

    /// Tikhonov parameters with `β = L_h` but `L_x = 0.2 β‖H‖²`, so the
    /// linearized Lagrangian no longer majorizes the true one.
    pub fn adversarial_params(&self, norm_sq: f64) -> SolverParams {
        let beta = 1.0 / (self.sigma * self.sigma);
        Coupling {
            lambda: Some(TIKHONOV_LAMBDA),
            beta: Some(beta),
            l_x: Some(ADVERSARIAL_LX_RATIO * beta * norm_sq),
            sigma_d: None,
        }
        .resolve(self.sigma, None)
        .expect("valid benchmark parameters")
    }

    /// Writes `truth.png`, `y.vprx` and the operator directory `operator/`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir)?;
        write_png(&self.truth, dir.join("truth.png"))?;
        write_vprx(&self.y, dir.join("y.vprx"))?;
        let blur = OLearyBlur::single(self.kernel.clone(), self.truth.width(), self.truth.height());
        save_oleary_dir(&blur, Boundary::Periodic, &dir.join("operator"))?;
        Ok(())
    }
}
