//! Deterministic synthetic test images: piecewise-constant cartoon, striped
//! texture, smooth radial bump, and the combined cartoon+texture scene with
//! its texture mask.

use crate::grid::Grid;

/// Smooth radial Gaussian bump of the given amplitude over a flat background.
pub fn radial_bump(width: usize, height: usize, background: f64, amplitude: f64) -> Grid {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let s = width.min(height) as f64 / 6.0;
    let mut g = Grid::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let v = background + amplitude * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            g.set(x, y, v);
        }
    }
    g
}

/// Piecewise-constant cartoon: background, a rectangle, and a disk.
pub fn cartoon(width: usize, height: usize) -> Grid {
    let mut g = Grid::constant(width, height, 60.0);
    let (w, h) = (width as f64, height as f64);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            if xf > 0.1 * w && xf < 0.45 * w && yf > 0.15 * h && yf < 0.55 * h {
                g.set(x, y, 180.0);
            }
            let dx = xf - 0.65 * w;
            let dy = yf - 0.7 * h;
            if (dx * dx + dy * dy).sqrt() < 0.18 * w.min(h) {
                g.set(x, y, 120.0);
            }
        }
    }
    g
}

/// Sinusoidal stripes between lo and hi with the given period in pixels.
pub fn stripes(width: usize, height: usize, period: f64, lo: f64, hi: f64) -> Grid {
    let mut g = Grid::zeros(width, height);
    let mid = (lo + hi) / 2.0;
    let amp = (hi - lo) / 2.0;
    for y in 0..height {
        for x in 0..width {
            let phase = 2.0 * std::f64::consts::PI * (x as f64 + 0.35 * y as f64) / period;
            g.set(x, y, mid + amp * phase.sin());
        }
    }
    g
}

/// Cartoon left half, striped texture right half. Returns the scene and the
/// 8-bit texture mask (255 over the textured half, 0 elsewhere).
pub fn cartoon_texture(width: usize, height: usize) -> (Grid, Grid) {
    let half = width / 2;
    let left = cartoon(half, height);
    let right = stripes(width - half, height, 8.0, 80.0, 200.0);
    let mut scene = Grid::zeros(width, height);
    let mut mask = Grid::zeros(width, height);
    for y in 0..height {
        for x in 0..width {
            if x < half {
                scene.set(x, y, left.get(x, y));
            } else {
                scene.set(x, y, right.get(x - half, y));
                mask.set(x, y, 255.0);
            }
        }
    }
    (scene, mask)
}

/// The named corpus the invariant suites run over.
pub fn corpus(size: usize) -> Vec<(&'static str, Grid)> {
    vec![
        ("cartoon", cartoon(size, size)),
        ("stripes", stripes(size, size, 8.0, 80.0, 200.0)),
        ("bump", radial_bump(size, size, 60.0, 140.0)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_images_are_finite_and_in_range() {
        for (name, g) in corpus(64) {
            g.check_finite(name).unwrap();
            let s = g.stats();
            assert!(
                s.min >= 0.0 && s.max <= 255.0,
                "{name}: [{}, {}]",
                s.min,
                s.max
            );
        }
    }

    #[test]
    fn cartoon_texture_mask_covers_right_half() {
        let (scene, mask) = cartoon_texture(128, 128);
        assert_eq!(scene.width(), 128);
        assert_eq!(mask.get(10, 10), 0.0);
        assert_eq!(mask.get(100, 10), 255.0);
    }
}
