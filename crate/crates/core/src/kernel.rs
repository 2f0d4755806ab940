//! Kernel-based nonlocal TV flux with rescaled compact kernels, and the
//! radius-ladder study of the nonlocal-to-local limit.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::indicator::IndicatorField;
use crate::solver::local_tv_flux;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProfile {
    /// Constant over the square support.
    Box,
    /// 1 - |z|/r, truncated at the unit radius.
    Triangle,
    /// Gaussian with sigma = r/2, truncated at the unit radius.
    TruncatedGaussian,
}

impl std::str::FromStr for KernelProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(KernelProfile::Box),
            "triangle" => Ok(KernelProfile::Triangle),
            "gaussian" | "truncated-gaussian" => Ok(KernelProfile::TruncatedGaussian),
            _ => Err(Error::invalid(format!("unknown kernel profile `{s}`"))),
        }
    }
}

/// Radially nonincreasing compact kernel; the support radius plays the role
/// of the rescaling parameter (one pixel = unit spacing).
#[derive(Debug, Clone, Copy)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    pub support_radius_px: usize,
}

impl KernelSpec {
    pub fn new(profile: KernelProfile, support_radius_px: usize) -> Result<Self> {
        if support_radius_px == 0 {
            return Err(Error::invalid("kernel support radius must be positive"));
        }
        Ok(KernelSpec {
            profile,
            support_radius_px,
        })
    }

    fn profile_weight(&self, rho: f64) -> f64 {
        match self.profile {
            KernelProfile::Box => 1.0,
            KernelProfile::Triangle => (1.0 - rho).max(0.0),
            KernelProfile::TruncatedGaussian => {
                if rho <= 1.0 {
                    (-rho * rho / (2.0 * 0.5 * 0.5)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Offsets and unit-mass weights of the discrete kernel over the square
    /// [-r, r]^2; rho is the Euclidean offset scaled by the radius.
    pub fn discrete(&self) -> Vec<(i32, i32, f64)> {
        let r = self.support_radius_px as i32;
        let rf = self.support_radius_px as f64;
        let mut cells = Vec::new();
        let mut total = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let rho = ((dx * dx + dy * dy) as f64).sqrt() / rf;
                let w = self.profile_weight(rho);
                if w > 0.0 {
                    cells.push((dx, dy, w));
                    total += w;
                }
            }
        }
        for c in &mut cells {
            c.2 /= total;
        }
        cells
    }
}

/// C_{J,1} = (1/2 sum J(z) |z_1|)^{-1} on the unit-scale discrete kernel
/// (pixel offsets divided by the radius).
pub fn cj1_normalizer(spec: &KernelSpec) -> Result<f64> {
    let cells = spec.discrete();
    let rf = spec.support_radius_px as f64;
    let s: f64 = cells
        .iter()
        .map(|&(dx, _, w)| w * (dx.abs() as f64) / rf)
        .sum();
    if s == 0.0 {
        return Err(Error::invalid(
            "kernel supported only at the origin: |z1| moment vanishes",
        ));
    }
    Ok(1.0 / (0.5 * s))
}

/// Rescaled kernel nonlocal TV flux. Neighbors outside the image are skipped
/// (the continuous model integrates over the domain only).
pub fn kernel_nltv_flux(u: &Grid, g: &IndicatorField, spec: &KernelSpec, eps: f64) -> Result<Grid> {
    u.check_shape(g.grid(), "kernel_nltv_flux")?;
    let r = spec.support_radius_px;
    if 2 * r > u.width().min(u.height()) {
        return Err(Error::invalid(format!(
            "kernel radius {r} too large for {}x{} grid",
            u.width(),
            u.height()
        )));
    }
    let cells = spec.discrete();
    let scale = cj1_normalizer(spec)? / r as f64;
    let (w, h) = (u.width(), u.height());
    let gv = g.grid().values();
    let uv = u.values();
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::with_capacity(w);
            for x in 0..w {
                let p = y * w + x;
                let mut acc = 0.0;
                for &(dx, dy, kw) in &cells {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let sx = x as i32 + dx;
                    let sy = y as i32 + dy;
                    if sx < 0 || sy < 0 || sx >= w as i32 || sy >= h as i32 {
                        continue;
                    }
                    let q = sy as usize * w + sx as usize;
                    let du = uv[q] - uv[p];
                    acc += 0.5 * (gv[p] + gv[q]) * kw * du / (du * du + eps).sqrt();
                }
                row.push(scale * acc);
            }
            row
        })
        .collect();
    Grid::new(w, h, rows.into_iter().flatten().collect())
}

/// One radius of the rescaling study.
#[derive(Debug, Clone, Copy)]
pub struct RescaleRow {
    pub radius: usize,
    pub iterations: usize,
    pub l1_distance: f64,
}

/// Evolve the coupled flow (local + rescaled kernel term) per radius to time T
/// and report the mean absolute distance to the pure local TV flow at time T.
pub fn rescaling_study(
    f: &Grid,
    radii: &[usize],
    time: f64,
    tau: f64,
    g: &IndicatorField,
    lambda: f64,
    eps: f64,
) -> Result<Vec<RescaleRow>> {
    if radii.is_empty() || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("radii must be strictly decreasing"));
    }
    if !(tau > 0.0) || !(time > 0.0) {
        return Err(Error::invalid("time and tau must be positive"));
    }
    let iters = (time / tau).round() as usize;
    if ((iters as f64 * tau) - time).abs() > 1e-9 * time {
        return Err(Error::invalid("T must be an integral number of tau steps"));
    }

    // Reference: pure local TV flow (indicator 0 in the local coefficient).
    let g_zero = IndicatorField::constant(f.width(), f.height(), 0.0);
    let mut u_ref = f.clone();
    for _ in 0..iters {
        let fl = local_tv_flux(&u_ref, &g_zero, eps)?;
        for (uv, &l) in u_ref.values_mut().iter_mut().zip(fl.values()) {
            *uv += tau * l;
        }
    }

    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let spec = KernelSpec::new(KernelProfile::TruncatedGaussian, r)?;
        let mut u = f.clone();
        for it in 0..iters {
            let mut total = vec![0.0; u.len()];
            if lambda < 1.0 {
                let local = local_tv_flux(&u, g, eps)?;
                for (t, &l) in total.iter_mut().zip(local.values()) {
                    *t += (1.0 - lambda) * l;
                }
            }
            if lambda > 0.0 {
                let nl = kernel_nltv_flux(&u, g, &spec, eps)?;
                for (t, &v) in total.iter_mut().zip(nl.values()) {
                    *t += lambda * v;
                }
            }
            for (uv, &t) in u.values_mut().iter_mut().zip(&total) {
                *uv += tau * t;
            }
            if u.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    iteration: it + 1,
                    message: format!("non-finite value in rescaling study, radius {r}"),
                });
            }
        }
        let mut acc = 0.0;
        for (a, b) in u.values().iter().zip(u_ref.values()) {
            acc += (a - b).abs();
        }
        rows.push(RescaleRow {
            radius: r,
            iterations: iters,
            l1_distance: acc / u.len() as f64,
        });
    }
    Ok(rows)
}
