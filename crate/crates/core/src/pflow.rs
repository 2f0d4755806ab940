//! Explicit coupled p-Laplacian flow and the nonlocal p-energy, used to
//! exhibit the p -> 1+ limit toward the TV flow numerically.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Grid, KahanSum};
use crate::indicator::IndicatorField;
use crate::kernel::{cj1_normalizer, KernelSpec};

#[derive(Debug, Clone, Copy)]
pub struct PFlowConfig {
    /// Exponent; public stepping requires p > 1.
    pub p: f64,
    pub tau: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub lambda: f64,
    pub kernel: KernelSpec,
}

/// Midpoint coefficient with power-law diffusivity (1 - g_mid) *
/// (|grad u|^2_mid + eps)^{(p-2)/2}; reduces to the TV stencil at p = 1.
fn p_midpoint_h(u: &Grid, g: &Grid, x: isize, y: isize, eps: f64, p: f64) -> f64 {
    let primal = u.at_clamped(x + 1, y) - u.at_clamped(x, y);
    let tang = (u.at_clamped(x + 1, y + 1) + u.at_clamped(x, y + 1)
        - u.at_clamped(x + 1, y - 1)
        - u.at_clamped(x, y - 1))
        / 4.0;
    let gm = (g.at_clamped(x + 1, y) + g.at_clamped(x, y)) / 2.0;
    (1.0 - gm) * (primal * primal + tang * tang + eps).powf((p - 2.0) / 2.0)
}

fn p_midpoint_v(u: &Grid, g: &Grid, x: isize, y: isize, eps: f64, p: f64) -> f64 {
    let primal = u.at_clamped(x, y + 1) - u.at_clamped(x, y);
    let tang = (u.at_clamped(x + 1, y + 1) + u.at_clamped(x + 1, y)
        - u.at_clamped(x - 1, y + 1)
        - u.at_clamped(x - 1, y))
        / 4.0;
    let gm = (g.at_clamped(x, y + 1) + g.at_clamped(x, y)) / 2.0;
    (1.0 - gm) * (primal * primal + tang * tang + eps).powf((p - 2.0) / 2.0)
}

fn p_local_flux(u: &Grid, g: &IndicatorField, eps: f64, p: f64) -> Result<Grid> {
    u.check_shape(g.grid(), "p_local_flux")?;
    let (w, h) = (u.width(), u.height());
    let gg = g.grid();
    let rows: Vec<Vec<f64>> = (0..h)
        .into_par_iter()
        .map(|yu| {
            let y = yu as isize;
            let mut row = Vec::with_capacity(w);
            for xu in 0..w {
                let x = xu as isize;
                let uc = u.get(xu, yu);
                let flux = p_midpoint_h(u, gg, x, y, eps, p) * (u.at_clamped(x + 1, y) - uc)
                    + p_midpoint_h(u, gg, x - 1, y, eps, p) * (u.at_clamped(x - 1, y) - uc)
                    + p_midpoint_v(u, gg, x, y, eps, p) * (u.at_clamped(x, y + 1) - uc)
                    + p_midpoint_v(u, gg, x, y - 1, eps, p) * (u.at_clamped(x, y - 1) - uc);
                row.push(flux);
            }
            row
        })
        .collect();
    Grid::new(w, h, rows.into_iter().flatten().collect())
}

fn p_kernel_flux(
    u: &Grid,
    g: &IndicatorField,
    spec: &KernelSpec,
    eps: f64,
    p: f64,
) -> Result<Grid> {
    u.check_shape(g.grid(), "p_kernel_flux")?;
    let r = spec.support_radius_px;
    if 2 * r > u.width().min(u.height()) {
        return Err(Error::invalid("kernel radius too large for grid"));
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
                let pix = y * w + x;
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
                    let du = uv[q] - uv[pix];
                    acc +=
                        0.5 * (gv[pix] + gv[q]) * kw * du * (du * du + eps).powf((p - 2.0) / 2.0);
                }
                row.push(scale * acc);
            }
            row
        })
        .collect();
    Grid::new(w, h, rows.into_iter().flatten().collect())
}

/// Shared explicit update; `p` may be 1 here (the TV reference of the studies).
pub(crate) fn p_step_any(u: &Grid, g: &IndicatorField, cfg: &PFlowConfig, p: f64) -> Result<Grid> {
    let mut total = vec![0.0; u.len()];
    if cfg.lambda < 1.0 {
        let local = p_local_flux(u, g, cfg.eps, p)?;
        for (t, &l) in total.iter_mut().zip(local.values()) {
            *t += (1.0 - cfg.lambda) * l;
        }
    }
    if cfg.lambda > 0.0 {
        let nl = p_kernel_flux(u, g, &cfg.kernel, cfg.eps, p)?;
        for (t, &v) in total.iter_mut().zip(nl.values()) {
            *t += cfg.lambda * v;
        }
    }
    let values = u
        .values()
        .iter()
        .zip(&total)
        .map(|(&uv, &t)| uv + cfg.tau * t)
        .collect();
    Grid::new(u.width(), u.height(), values)
}

/// One explicit step of the coupled p-Laplacian flow (p > 1).
pub fn p_step(u: &Grid, g: &IndicatorField, cfg: &PFlowConfig) -> Result<Grid> {
    if !(cfg.p > 1.0) {
        return Err(Error::invalid("p must exceed 1"));
    }
    p_step_any(u, g, cfg, cfg.p)
}

/// Nonlocal p-energy over unordered pixel pairs:
/// 1/2 sum_x sum_y g_mid J_scaled(y-x) |u_y - u_x|^p.
pub fn nonlocal_p_energy(u: &Grid, g: &IndicatorField, kernel: &KernelSpec, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p must be at least 1"));
    }
    u.check_shape(g.grid(), "nonlocal_p_energy")?;
    let cells = kernel.discrete();
    let scale = cj1_normalizer(kernel)? / kernel.support_radius_px as f64;
    let (w, h) = (u.width(), u.height());
    let uv = u.values();
    let gv = g.grid().values();
    let mut acc = KahanSum::new();
    for y in 0..h {
        for x in 0..w {
            let pix = y * w + x;
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
                let du = (uv[q] - uv[pix]).abs();
                acc.add(0.5 * (gv[pix] + gv[q]) * scale * kw * du.powf(p));
            }
        }
    }
    // Ordered pairs counted twice; halve for unordered pairs.
    Ok(0.5 * acc.value())
}

/// One exponent of the p -> 1 study.
#[derive(Debug, Clone, Copy)]
pub struct PLimitRow {
    pub p: f64,
    /// Trapezoidal time integral of the nonlocal p-energy along the flow.
    pub energy_integral: f64,
    pub abs_diff_vs_p1: f64,
}

/// For each p, evolve to time T accumulating the time-integrated nonlocal
/// p-energy; compare against the identically evolved p = 1 (TV) flow.
pub fn p_limit_study(
    f: &Grid,
    ps: &[f64],
    time: f64,
    cfg: &PFlowConfig,
    g: &IndicatorField,
) -> Result<Vec<PLimitRow>> {
    if ps.is_empty() || ps.iter().any(|&p| p <= 1.0) {
        return Err(Error::invalid("exponents must all exceed 1"));
    }
    if ps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(
            "exponents must be strictly decreasing toward 1",
        ));
    }
    let iters = (time / cfg.tau).round() as usize;
    if iters == 0 {
        return Err(Error::invalid("T must cover at least one step"));
    }

    let integral_for = |p: f64| -> Result<f64> {
        let mut u = f.clone();
        let mut acc = KahanSum::new();
        let mut prev = nonlocal_p_energy(&u, g, &cfg.kernel, p)?;
        for it in 0..iters {
            u = p_step_any(&u, g, cfg, p)?;
            if u.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    iteration: it + 1,
                    message: format!("non-finite value in p-limit study, p = {p}"),
                });
            }
            let e = nonlocal_p_energy(&u, g, &cfg.kernel, p)?;
            acc.add(cfg.tau * 0.5 * (prev + e));
            prev = e;
        }
        Ok(acc.value())
    };

    let e1 = integral_for(1.0)?;
    let mut rows = Vec::with_capacity(ps.len());
    for &p in ps {
        let ep = integral_for(p)?;
        rows.push(PLimitRow {
            p,
            energy_integral: ep,
            abs_diff_vs_p1: (ep - e1).abs(),
        });
    }
    // The p = 1 reference is reported last with zero difference.
    rows.push(PLimitRow {
        p: 1.0,
        energy_integral: e1,
        abs_diff_vs_p1: 0.0,
    });
    Ok(rows)
}
