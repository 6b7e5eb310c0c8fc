//! Spatially-varying blur as a mask-weighted sum of convolutions,
//! `H = Σᵢ Uᵢ Kᵢ`, where the diagonal weights `Uᵢ` are nonnegative and sum to
//! one at every pixel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conv::check_dims;
use super::{Boundary, ConvolutionOperator, Kernel, LinearOperator, LinopError, OperatorShape};
use crate::fsutil::{build_dir_atomic, write_atomic};
use crate::raster::{read_vprx, write_vprx, Dims, Raster};

/// Allowed deviation of the pointwise mask sum from 1.
pub const MASK_SUM_TOL: f64 = 1e-9;

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct OLearyBlur {
    kernels: Vec<Kernel>,
    masks: Vec<Raster>,
}

impl OLearyBlur {
    pub fn new(kernels: Vec<Kernel>, masks: Vec<Raster>) -> Result<Self, LinopError> {
        if kernels.is_empty() {
            return Err(LinopError::NoRegions);
        }
        if kernels.len() != masks.len() {
            return Err(LinopError::RegionCount { kernels: kernels.len(), masks: masks.len() });
        }
        let expected = masks[0].dims();
        if expected.channels != 1 {
            return Err(LinopError::MaskChannels);
        }
        for (index, m) in masks.iter().enumerate() {
            if m.dims() != expected {
                return Err(LinopError::MaskDims { index, got: m.dims(), expected });
            }
        }
        for y in 0..expected.height {
            for x in 0..expected.width {
                let mut sum = 0.0f64;
                for (index, m) in masks.iter().enumerate() {
                    let value = m.get(x, y, 0);
                    if value < 0.0 {
                        return Err(LinopError::NegativeMask { index, x, y, value });
                    }
                    sum += value;
                }
                if (sum - 1.0).abs() > MASK_SUM_TOL {
                    return Err(LinopError::MaskSum { x, y, sum });
                }
            }
        }
        Ok(Self { kernels, masks })
    }

    /// One region covering the whole image.
    pub fn single(kernel: Kernel, width: usize, height: usize) -> Self {
        Self { kernels: vec![kernel], masks: vec![Raster::filled(Dims::new(width, height, 1), 1.0)] }
    }

    pub fn regions(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn masks(&self) -> &[Raster] {
        &self.masks
    }

    pub fn width(&self) -> usize {
        self.masks[0].width()
    }

    pub fn height(&self) -> usize {
        self.masks[0].height()
    }
}

pub struct OLearyOperator {
    blur: OLearyBlur,
    convs: Vec<ConvolutionOperator>,
    masks: Vec<Raster>,
    dims: Dims,
    boundary: Boundary,
}

impl OLearyOperator {
    pub fn new(blur: OLearyBlur, boundary: Boundary, channels: usize) -> Result<Self, LinopError> {
        let dims = Dims::new(blur.width(), blur.height(), channels);
        check_dims(dims)?;
        let convs = blur
            .kernels
            .iter()
            .map(|k| ConvolutionOperator::new(k.clone(), boundary, dims))
            .collect::<Result<Vec<_>, _>>()?;
        let masks = blur.masks.iter().map(|m| m.broadcast_channels(channels)).collect();
        Ok(Self { blur, convs, masks, dims, boundary })
    }

    pub fn blur(&self) -> &OLearyBlur {
        &self.blur
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
}

impl LinearOperator for OLearyOperator {
    fn shape(&self) -> OperatorShape {
        OperatorShape { input: self.dims, output: self.dims }
    }

    fn forward(&self, x: &Raster) -> Raster {
        let mut out = Raster::zeros(self.dims);
        for (conv, mask) in self.convs.iter().zip(&self.masks) {
            let blurred = conv.forward(x);
            for ((o, b), m) in out.as_mut_slice().iter_mut().zip(blurred.as_slice()).zip(mask.as_slice()) {
                *o += m * b;
            }
        }
        out
    }

    fn adjoint(&self, y: &Raster) -> Raster {
        let mut out = Raster::zeros(self.dims);
        for (conv, mask) in self.convs.iter().zip(&self.masks) {
            let weighted = y.zip_map(mask, |a, m| a * m);
            out.axpy(1.0, &conv.adjoint(&weighted));
        }
        out
    }

    fn preserves_nonnegativity(&self) -> bool {
        self.blur.kernels.iter().all(Kernel::is_nonnegative)
    }
}

/// On-disk description of an O'Leary blur directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OLearyManifest {
    #[serde(rename = "P")]
    pub regions: usize,
    pub boundary: Boundary,
    pub kernels: Vec<String>,
    pub masks: Vec<String>,
}

/// Writes `kernel_NNN.vprx`, `mask_NNN.vprx` and `manifest.json` into `dir`.
/// The directory appears only once every file is written.
pub fn save_oleary_dir(blur: &OLearyBlur, boundary: Boundary, dir: &Path) -> Result<(), LinopError> {
    if let Some(parent) = dir.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    build_dir_atomic(dir, |tmp| {
        let mut manifest = OLearyManifest { regions: blur.regions(), boundary, kernels: vec![], masks: vec![] };
        for (i, (k, m)) in blur.kernels.iter().zip(&blur.masks).enumerate() {
            let kname = format!("kernel_{i:03}.vprx");
            let mname = format!("mask_{i:03}.vprx");
            write_vprx(&k.to_raster(), tmp.join(&kname))?;
            write_vprx(m, tmp.join(&mname))?;
            manifest.kernels.push(kname);
            manifest.masks.push(mname);
        }
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| LinopError::Manifest(e.to_string()))?;
        write_atomic(&tmp.join(MANIFEST), &json)?;
        Ok(())
    })
}

pub fn load_oleary_dir(dir: &Path) -> Result<(OLearyBlur, Boundary), LinopError> {
    let bytes = std::fs::read(dir.join(MANIFEST))?;
    let manifest: OLearyManifest =
        serde_json::from_slice(&bytes).map_err(|e| LinopError::Manifest(e.to_string()))?;
    if manifest.kernels.len() != manifest.regions || manifest.masks.len() != manifest.regions {
        return Err(LinopError::Manifest(format!(
            "P = {} but {} kernels and {} masks listed",
            manifest.regions,
            manifest.kernels.len(),
            manifest.masks.len()
        )));
    }
    let kernels = manifest
        .kernels
        .iter()
        .map(|name| Kernel::from_raster(&read_vprx(dir.join(name))?))
        .collect::<Result<Vec<_>, _>>()?;
    let masks = manifest
        .masks
        .iter()
        .map(|name| read_vprx(dir.join(name)).map_err(LinopError::from))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((OLearyBlur::new(kernels, masks)?, manifest.boundary))
}
