//! Grayscale diffusion-speed indicator g built from the smoothed, power-scaled
//! image, with the lambda-dependent branch rule and the texture-mask variant.

use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Grid};

/// Spatially varying diffusion weight in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorField {
    g: Grid,
    pub meta: IndicatorMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMeta {
    pub sigma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub clamp: Option<(f64, f64)>,
    pub masked: bool,
}

impl IndicatorField {
    pub fn grid(&self) -> &Grid {
        &self.g
    }

    pub fn into_grid(self) -> Grid {
        self.g
    }

    /// Constant indicator, mainly for studies and tests.
    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        IndicatorField {
            g: Grid::constant(width, height, value),
            meta: IndicatorMeta {
                sigma: 0.0,
                beta: 0.0,
                lambda: 1.0,
                clamp: None,
                masked: false,
            },
        }
    }

    /// Wrap an arbitrary grid of weights; values must lie in [0,1].
    pub fn from_grid(g: Grid) -> Result<Self> {
        if g.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::invalid("indicator values must lie in [0,1]"));
        }
        Ok(IndicatorField {
            g,
            meta: IndicatorMeta {
                sigma: 0.0,
                beta: 0.0,
                lambda: 1.0,
                clamp: None,
                masked: false,
            },
        })
    }
}

/// Two-valued texture/background mask used by the Experiment-1 indicator.
#[derive(Debug, Clone)]
pub struct TextureMask {
    chi: Grid,
    pub sigma1: f64,
}

impl TextureMask {
    /// chi must take only the designated values 0.001 / 0.999.
    pub fn new(chi: Grid, sigma1: f64) -> Result<Self> {
        if chi.values().iter().any(|&v| v != 0.001 && v != 0.999) {
            return Err(Error::invalid("mask values must be 0.001 or 0.999"));
        }
        if !(sigma1 > 0.0) {
            return Err(Error::invalid("mask sigma1 must be positive"));
        }
        Ok(TextureMask { chi, sigma1 })
    }

    /// PGM convention: pixel >= 128 means texture (0.999), else background (0.001).
    pub fn from_pgm_grid(mask: &Grid, sigma1: f64) -> Result<Self> {
        let chi = Grid::new(
            mask.width(),
            mask.height(),
            mask.values()
                .iter()
                .map(|&v| if v >= 128.0 { 0.999 } else { 0.001 })
                .collect(),
        )?;
        Self::new(chi, sigma1)
    }

    pub fn chi(&self) -> &Grid {
        &self.chi
    }
}

/// Parameters for [`grayscale_indicator`]; clamping defaults to [1e-3, 0.999]
/// so both diffusion channels stay active.
#[derive(Debug, Clone, Copy)]
pub struct IndicatorParams {
    pub sigma: f64,
    pub beta: f64,
    pub lambda: f64,
    pub clamp: Option<(f64, f64)>,
}

impl IndicatorParams {
    pub fn new(sigma: f64, beta: f64, lambda: f64) -> Self {
        IndicatorParams {
            sigma,
            beta,
            lambda,
            clamp: Some((1e-3, 0.999)),
        }
    }

    pub fn without_clamp(mut self) -> Self {
        self.clamp = None;
        self
    }
}

/// f~ = (f_sigma / max f_sigma)^beta, optionally multiplied by the smoothed
/// texture mask, then branched on lambda (g = f~ if lambda >= 0.5 else 1 - f~)
/// and clamped.
pub fn grayscale_indicator(
    f: &Grid,
    params: &IndicatorParams,
    mask: Option<&TextureMask>,
) -> Result<IndicatorField> {
    if !(params.beta >= 0.0) {
        return Err(Error::invalid("beta must be nonnegative"));
    }
    if let Some((lo, hi)) = params.clamp {
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::invalid("clamp bounds must satisfy 0 < lo <= hi < 1"));
        }
    }
    let f_sigma = gaussian_blur(f, params.sigma)?;
    let max = f_sigma.stats().max;
    if !(max > 0.0) {
        return Err(Error::DegenerateInput(
            "max of the smoothed image is not positive".into(),
        ));
    }
    let mask_field = match mask {
        Some(m) => {
            f.check_shape(m.chi(), "texture mask")?;
            Some(gaussian_blur(m.chi(), m.sigma1)?)
        }
        None => None,
    };
    let mut g = Grid::zeros(f.width(), f.height());
    for i in 0..f.len() {
        let mut ft = (f_sigma.values()[i] / max).powf(params.beta);
        if let Some(mf) = &mask_field {
            ft *= mf.values()[i];
        }
        let mut v = if params.lambda >= 0.5 { ft } else { 1.0 - ft };
        if let Some((lo, hi)) = params.clamp {
            v = v.clamp(lo, hi);
        }
        g.values_mut()[i] = v;
    }
    Ok(IndicatorField {
        g,
        meta: IndicatorMeta {
            sigma: params.sigma,
            beta: params.beta,
            lambda: params.lambda,
            clamp: params.clamp,
            masked: mask.is_some(),
        },
    })
}
