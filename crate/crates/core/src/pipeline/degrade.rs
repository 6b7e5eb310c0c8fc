use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::linop::{Boundary, ConvolutionOperator, Kernel, LinearOperator, OLearyBlur, OLearyOperator};
use crate::raster::{add_gaussian_noise, read_raster, to_luma, Dims, Raster};

/// Feathering width of Voronoi region boundaries, in pixels.
pub const FEATHER_STD: f64 = 2.0;

const NOISE_STREAM: u64 = 0x6e6f697365;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian { std_x: f64, std_y: f64, #[serde(default)] angle: f64 },
    Motion { length: f64, angle: f64, #[serde(default = "unit")] thickness: f64 },
}

fn unit() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, PipelineError> {
        Ok(match *self {
            KernelSpec::Gaussian { std_x, std_y, angle } => Kernel::gaussian(std_x, std_y, angle)?,
            KernelSpec::Motion { length, angle, thickness } => Kernel::motion(length, angle, thickness)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Seeded Voronoi partition with Gaussian-feathered boundaries.
    Voronoi,
    /// `P` vertical strips of equal width with hard edges.
    Halves,
    /// External masks listed in `mask_files`, renormalized to sum to one.
    FromFiles,
}

/// JSON description of a synthetic O'Leary degradation. Noise is on the
/// `[0, 1]` intensity scale, so σ = 10/255 is written as `0.0392…`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationSpec {
    #[serde(rename = "P")]
    pub regions: usize,
    pub kernels: Vec<KernelSpec>,
    pub mask_mode: MaskMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mask_files: Vec<PathBuf>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl DegradationSpec {
    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path)?;
        let mut spec: Self = serde_json::from_slice(&bytes).map_err(|e| PipelineError::Spec(e.to_string()))?;
        // mask paths are relative to the JSON file
        if let Some(dir) = path.parent() {
            for f in &mut spec.mask_files {
                if f.is_relative() {
                    *f = dir.join(&*f);
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Spec(m));
        if self.regions == 0 {
            return bad("P must be at least 1".into());
        }
        if self.kernels.len() != self.regions {
            return bad(format!("P = {} but {} kernels given", self.regions, self.kernels.len()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma must be nonnegative, got {}", self.noise_sigma));
        }
        if self.mask_mode == MaskMode::FromFiles && self.mask_files.len() != self.regions {
            return bad(format!("P = {} but {} mask files given", self.regions, self.mask_files.len()));
        }
        Ok(())
    }

    pub fn with_noise(mut self, noise_sigma: f64) -> Self {
        self.noise_sigma = noise_sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A degraded observation with the operator that produced it.
pub struct Degradation {
    pub y: Raster,
    pub blur: OLearyBlur,
    pub boundary: Boundary,
    pub operator: OLearyOperator,
}

/// Builds masks and kernels, blurs `truth` and adds seeded noise.
pub fn synthesize_degradation(truth: &Raster, spec: &DegradationSpec) -> Result<Degradation, PipelineError> {
    spec.validate()?;
    let (w, h) = (truth.width(), truth.height());
    let masks = match spec.mask_mode {
        MaskMode::Voronoi => voronoi_masks(w, h, spec.regions, spec.seed)?,
        MaskMode::Halves => strip_masks(w, h, spec.regions),
        MaskMode::FromFiles => file_masks(&spec.mask_files, w, h)?,
    };
    let kernels = spec.kernels.iter().map(KernelSpec::build).collect::<Result<Vec<_>, _>>()?;
    let blur = OLearyBlur::new(kernels, masks)?;
    let operator = OLearyOperator::new(blur.clone(), spec.boundary, truth.channels())?;
    let y = add_gaussian_noise(&operator.forward(truth), spec.noise_sigma, spec.seed ^ NOISE_STREAM);
    Ok(Degradation { y, blur, boundary: spec.boundary, operator })
}

/// Divides each pixel's weights by their sum.
fn renormalize(masks: &mut [Raster]) -> Result<(), PipelineError> {
    let n = masks[0].len();
    for i in 0..n {
        let sum: f64 = masks.iter().map(|m| m.as_slice()[i]).sum();
        if !(sum > 0.0 && sum.is_finite()) {
            let w = masks[0].width();
            return Err(PipelineError::MaskRenormalization { x: i % w, y: i / w });
        }
        for m in masks.iter_mut() {
            m.as_mut_slice()[i] /= sum;
        }
    }
    Ok(())
}

pub fn voronoi_masks(width: usize, height: usize, regions: usize, seed: u64) -> Result<Vec<Raster>, PipelineError> {
    let dims = Dims::new(width, height, 1);
    if regions == 1 {
        return Ok(vec![Raster::filled(dims, 1.0)]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites: Vec<(f64, f64)> =
        (0..regions).map(|_| (rng.gen::<f64>() * width as f64, rng.gen::<f64>() * height as f64)).collect();
    let label = |x: usize, y: usize| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let d = |&(sx, sy): &(f64, f64)| (px - sx).powi(2) + (py - sy).powi(2);
        // ties go to the lowest index
        (0..regions).min_by(|&a, &b| d(&sites[a]).total_cmp(&d(&sites[b])).then(a.cmp(&b))).expect("regions > 0")
    };
    let labels: Vec<usize> = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| label(x, y)).collect();
    let feather = ConvolutionOperator::new(Kernel::gaussian(FEATHER_STD, FEATHER_STD, 0.0)?, Boundary::Replicate, dims)?;
    let mut masks: Vec<Raster> = (0..regions)
        .map(|r| {
            let hard = Raster::from_fn(dims, |x, y, _| if labels[y * width + x] == r { 1.0 } else { 0.0 });
            feather.forward(&hard).map(|v| v.max(0.0))
        })
        .collect();
    renormalize(&mut masks)?;
    Ok(masks)
}

pub fn strip_masks(width: usize, height: usize, regions: usize) -> Vec<Raster> {
    let dims = Dims::new(width, height, 1);
    (0..regions)
        .map(|r| Raster::from_fn(dims, |x, _, _| if x * regions / width == r { 1.0 } else { 0.0 }))
        .collect()
}

fn file_masks(files: &[PathBuf], width: usize, height: usize) -> Result<Vec<Raster>, PipelineError> {
    let mut masks = Vec::with_capacity(files.len());
    for f in files {
        let m = read_raster(f)?;
        let m = if m.channels() == 1 { m } else { to_luma(&m)? };
        if m.width() != width || m.height() != height {
            return Err(PipelineError::Spec(format!(
                "mask {} is {}x{}, image is {width}x{height}",
                f.display(),
                m.width(),
                m.height()
            )));
        }
        masks.push(m.map(|v| v.max(0.0)));
    }
    renormalize(&mut masks)?;
    Ok(masks)
}
