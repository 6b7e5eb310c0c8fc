//! Denoisers standing in for the prior's proximal step, `D_σ = prox_{σ² f}`.
//!
//! [`TikhonovDenoiser`] and [`TvDenoiser`] are exact proximal operators of a
//! known, evaluable, lower-bounded `f`, so every convergence diagnostic can be
//! evaluated on them. [`GaussianDenoiser`] and [`BridgeDenoiser`] are not.

pub mod bridge;
mod tv;

pub use bridge::{BridgeDenoiser, BridgeError};
pub use tv::{total_variation, tv_prox, tv_prox_with_history, TvDenoiser, TV_DEFAULT_INNER_ITERS, TV_DEFAULT_TOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linop::{Boundary, ConvolutionOperator, Kernel, LinearOperator};
use crate::raster::Raster;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("denoiser level must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error("denoiser produced non-finite output")]
    NonFinite,
}

pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;

    /// Applies `D_{sigma_d}`. Output has the input's shape.
    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError>;

    /// True when `denoise` is the exact proximal operator of [`Denoiser::prior`].
    fn exact_prox(&self) -> bool;

    /// The prior `f(x)` whose prox this denoiser computes, when it is known.
    fn prior(&self, _x: &Raster) -> Option<f64> {
        None
    }

    /// Gradient of `f`, when `f` is differentiable.
    fn prior_gradient(&self, _x: &Raster) -> Option<Raster> {
        None
    }
}

impl<T: Denoiser + ?Sized> Denoiser for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        (**self).denoise(x, sigma_d)
    }
    fn exact_prox(&self) -> bool {
        (**self).exact_prox()
    }
    fn prior(&self, x: &Raster) -> Option<f64> {
        (**self).prior(x)
    }
    fn prior_gradient(&self, x: &Raster) -> Option<Raster> {
        (**self).prior_gradient(x)
    }
}

impl<T: Denoiser + ?Sized> Denoiser for Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        (**self).denoise(x, sigma_d)
    }
    fn exact_prox(&self) -> bool {
        (**self).exact_prox()
    }
    fn prior(&self, x: &Raster) -> Option<f64> {
        (**self).prior(x)
    }
    fn prior_gradient(&self, x: &Raster) -> Option<Raster> {
        (**self).prior_gradient(x)
    }
}

/// The shipped denoiser families, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserKind {
    Tikhonov,
    Tv,
    Gaussian,
    Bridge,
}

impl DenoiserKind {
    pub const ALL: [DenoiserKind; 4] =
        [DenoiserKind::Tikhonov, DenoiserKind::Tv, DenoiserKind::Gaussian, DenoiserKind::Bridge];

    pub fn name(self) -> &'static str {
        match self {
            DenoiserKind::Tikhonov => "tikhonov",
            DenoiserKind::Tv => "tv",
            DenoiserKind::Gaussian => "gaussian",
            DenoiserKind::Bridge => "bridge",
        }
    }

    /// Builds a fresh instance with default settings. `bridge_cmd` is the
    /// shell command launching the server and is required for `Bridge`.
    pub fn build(self, bridge_cmd: Option<&str>) -> Result<Box<dyn Denoiser>, DenoiseError> {
        Ok(match self {
            DenoiserKind::Tikhonov => Box::new(TikhonovDenoiser),
            DenoiserKind::Tv => Box::new(TvDenoiser::default()),
            DenoiserKind::Gaussian => Box::new(GaussianDenoiser),
            DenoiserKind::Bridge => {
                let cmd = bridge_cmd
                    .ok_or_else(|| BridgeError::Unavailable("no bridge command given".into()))?;
                Box::new(BridgeDenoiser::spawn(cmd, bridge::DEFAULT_TIMEOUT)?)
            }
        })
    }
}

impl std::fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DenoiserKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DenoiserKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown denoiser {s:?} (expected tikhonov, tv, gaussian or bridge)"))
    }
}

pub(crate) fn check_sigma(sigma_d: f64) -> Result<(), DenoiseError> {
    if sigma_d.is_finite() && sigma_d >= 0.0 {
        Ok(())
    } else {
        Err(DenoiseError::InvalidSigma(sigma_d))
    }
}

/// Exact prox of `f(x) = ½‖x‖²`: `D_σ(x) = x / (1 + σ²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TikhonovDenoiser;

impl Denoiser for TikhonovDenoiser {
    fn name(&self) -> &str {
        "tikhonov"
    }

    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        check_sigma(sigma_d)?;
        let s = 1.0 / (1.0 + sigma_d * sigma_d);
        Ok(x.scale(s))
    }

    fn exact_prox(&self) -> bool {
        true
    }

    fn prior(&self, x: &Raster) -> Option<f64> {
        Some(0.5 * x.norm_sq())
    }

    fn prior_gradient(&self, x: &Raster) -> Option<Raster> {
        Some(x.clone())
    }
}

/// Periodic Gaussian smoothing. Not a proximal operator.
///
/// The spatial standard deviation in pixels is `1.5 · (255 σ_d) / 10`, so a
/// level of 10/255 smooths with σ = 1.5 px.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianDenoiser;

impl GaussianDenoiser {
    pub fn spatial_std(sigma_d: f64) -> f64 {
        1.5 * sigma_d * 255.0 / 10.0
    }
}

impl Denoiser for GaussianDenoiser {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn denoise(&self, x: &Raster, sigma_d: f64) -> Result<Raster, DenoiseError> {
        check_sigma(sigma_d)?;
        if sigma_d == 0.0 {
            return Ok(x.clone());
        }
        let std = Self::spatial_std(sigma_d);
        let kernel = Kernel::gaussian(std, std, 0.0).expect("valid gaussian parameters");
        let op = ConvolutionOperator::new(kernel, Boundary::Periodic, x.dims()).expect("nonempty raster dims");
        Ok(op.forward(x))
    }

    fn exact_prox(&self) -> bool {
        false
    }
}
