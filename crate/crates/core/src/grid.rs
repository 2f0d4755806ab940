//! Dense 2D grid of f64 intensities plus the elementary numerics every other
//! module leans on: reflected sampling, separable Gaussian convolution and
//! compensated-summation statistics.

use crate::error::{Error, Result};

/// Row-major dense field of real intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "value buffer length {} does not match {}x{}",
                values.len(),
                width,
                height
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, c: f64) -> Self {
        Grid {
            width,
            height,
            values: vec![c; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.idx(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = self.idx(x, y);
        self.values[i] = v;
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample with ghost replication (Neumann): indices clamp to the border.
    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.values[yc * self.width + xc]
    }

    /// Sample with half-sample mirror reflection at the borders.
    #[inline]
    pub fn at_reflected(&self, x: isize, y: isize) -> f64 {
        let xr = reflect_index(x, self.width);
        let yr = reflect_index(y, self.height);
        self.values[yr * self.width + xr]
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &Grid, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::invalid(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    pub fn check_finite(&self, context: &str) -> Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{context}: non-finite value {v} at linear index {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> GridStats {
        let mut sum = KahanSum::new();
        let mut abs_sum = KahanSum::new();
        let mut sq_sum = KahanSum::new();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.values {
            sum.add(v);
            abs_sum.add(v.abs());
            sq_sum.add(v * v);
            min = min.min(v);
            max = max.max(v);
        }
        GridStats {
            mean: sum.value() / self.values.len() as f64,
            min,
            max,
            l1_norm: abs_sum.value(),
            l2_norm: sq_sum.value().sqrt(),
        }
    }
}

/// Reductions over a grid, accumulated row-major with Kahan compensation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub l1_norm: f64,
    pub l2_norm: f64,
}

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let y = v - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Half-sample symmetric reflection of `i` into `[0, n)`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Truncated separable Gaussian kernel: radius ceil(3*sigma), renormalized to
/// unit sum after truncation.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k = Vec::with_capacity(2 * radius + 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in -(radius as isize)..=(radius as isize) {
        let d = i as f64;
        k.push((-d * d * inv).exp());
    }
    let total: f64 = k.iter().sum();
    for v in &mut k {
        *v /= total;
    }
    k
}

/// G_sigma * f with mirror-reflected boundary. sigma = 0 returns the input.
pub fn gaussian_blur(f: &Grid, sigma: f64) -> Result<Grid> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!(
            "blur sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (f.width(), f.height());

    // Horizontal pass.
    let mut tmp = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in kernel.iter().enumerate() {
                let xs = x as isize + k as isize - radius;
                acc += kw * f.get(reflect_index(xs, w), y);
            }
            tmp.set(x, y, acc);
        }
    }
    // Vertical pass.
    let mut out = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kw) in kernel.iter().enumerate() {
                let ys = y as isize + k as isize - radius;
                acc += kw * tmp.get(x, reflect_index(ys, h));
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}
