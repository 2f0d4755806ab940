//! PSNR and SSIM image quality metrics.

use crate::error::{Error, Result};
use crate::grid::{gaussian_kernel, Grid};

/// Peak signal-to-noise ratio in dB; +inf for identical inputs.
pub fn psnr(reference: &Grid, test: &Grid, peak: f64) -> Result<f64> {
    reference.check_shape(test, "psnr")?;
    if !(peak > 0.0) {
        return Err(Error::invalid("peak must be positive"));
    }
    let n = reference.len() as f64;
    let mse: f64 = reference
        .values()
        .iter()
        .zip(test.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// SSIM parameters: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03.
#[derive(Debug, Clone, Copy)]
pub struct SsimConfig {
    pub window_size: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig {
            window_size: 11,
            window_sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 255.0,
        }
    }
}

/// Mean SSIM over all fully interior window positions (no padding).
pub fn ssim(reference: &Grid, test: &Grid, cfg: &SsimConfig) -> Result<f64> {
    reference.check_shape(test, "ssim")?;
    let n = cfg.window_size;
    if reference.width() < n || reference.height() < n {
        return Err(Error::invalid(format!(
            "ssim requires images at least {n}x{n}"
        )));
    }
    // Separable unit-sum Gaussian window truncated to the window size.
    let full = gaussian_kernel(cfg.window_sigma);
    let radius = full.len() / 2;
    let half = n / 2;
    let mut line: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as isize - half as isize;
            let idx = d + radius as isize;
            if (0..full.len() as isize).contains(&idx) {
                full[idx as usize]
            } else {
                0.0
            }
        })
        .collect();
    let s: f64 = line.iter().sum();
    for v in &mut line {
        *v /= s;
    }

    let c1 = (cfg.k1 * cfg.dynamic_range).powi(2);
    let c2 = (cfg.k2 * cfg.dynamic_range).powi(2);
    let (w, h) = (reference.width(), reference.height());
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=h - n {
        for wx in 0..=w - n {
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let wgt = line[i] * line[j];
                    let a = reference.get(wx + i, wy + j);
                    let b = test.get(wx + i, wy + j);
                    mx += wgt * a;
                    my += wgt * b;
                    xx += wgt * a * a;
                    yy += wgt * b * b;
                    xy += wgt * (a * b);
                }
            }
            let vx = xx - mx * mx;
            let vy = yy - my * my;
            let cov = xy - mx * my;
            let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += val;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let g = Grid::constant(8, 8, 12.0);
        assert_eq!(psnr(&g, &g, 255.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_full_scale_difference_is_zero_db() {
        let a = Grid::constant(8, 8, 0.0);
        let b = Grid::constant(8, 8, 255.0);
        assert!((psnr(&a, &b, 255.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_unit_difference_closed_form() {
        let a = Grid::constant(8, 8, 100.0);
        let b = Grid::constant(8, 8, 101.0);
        let expected = 20.0 * 255.0f64.log10();
        let got = psnr(&a, &b, 255.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 48.1308).abs() < 1e-3);
    }

    #[test]
    fn psnr_symmetric_and_monotone() {
        let a = Grid::constant(8, 8, 100.0);
        for d in [1.0, 2.0, 5.0] {
            let b = Grid::constant(8, 8, 100.0 + d);
            assert_eq!(psnr(&a, &b, 255.0).unwrap(), psnr(&b, &a, 255.0).unwrap());
        }
        let p1 = psnr(&a, &Grid::constant(8, 8, 101.0), 255.0).unwrap();
        let p2 = psnr(&a, &Grid::constant(8, 8, 103.0), 255.0).unwrap();
        assert!(p1 > p2);
    }

    #[test]
    fn psnr_rejects_mismatched_shapes() {
        let a = Grid::constant(8, 8, 0.0);
        let b = Grid::constant(8, 9, 0.0);
        assert!(psnr(&a, &b, 255.0).is_err());
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut g = Grid::zeros(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                g.set(x, y, ((x * 13 + y * 31) % 200) as f64);
            }
        }
        assert_eq!(ssim(&g, &g, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constants_closed_form_luminance() {
        // For constants the contrast/structure factor is c2/c2 = 1; every
        // window sees the same luminance term.
        let a = Grid::constant(16, 16, 100.0);
        let b = Grid::constant(16, 16, 150.0);
        let c1 = (0.01f64 * 255.0).powi(2);
        let expected = (2.0 * 100.0 * 150.0 + c1) / (100.0f64 * 100.0 + 150.0 * 150.0 + c1);
        let got = ssim(&a, &b, &SsimConfig::default()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetric() {
        let mut a = Grid::zeros(16, 16);
        let mut b = Grid::zeros(16, 16);
        for y in 0..16 {
            for x in 0..16 {
                a.set(x, y, ((x * 7 + y * 3) % 251) as f64);
                b.set(x, y, ((x * 11 + y * 17) % 239) as f64);
            }
        }
        let cfg = SsimConfig::default();
        assert_eq!(ssim(&a, &b, &cfg).unwrap(), ssim(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = Grid::constant(8, 8, 1.0);
        assert!(ssim(&a, &a, &SsimConfig::default()).is_err());
    }
}
