//! Patch-similarity weight graph and the nonlocal TV flux evaluated on it.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{reflect_index, Grid};
use crate::indicator::IndicatorField;

/// Pixel count below which flux evaluations stay on the calling thread;
/// rayon dispatch costs more than the arithmetic on small grids.
pub const PAR_THRESHOLD: usize = 1 << 14;

/// Patch comparison and neighbor selection parameters.
#[derive(Debug, Clone, Copy)]
pub struct PatchConfig {
    /// Search window half-width; the window is (2r+1) x (2r+1).
    pub search_radius: usize,
    /// Patch is patch_edge x patch_edge pixels.
    pub patch_edge: usize,
    /// Std of the intra-patch Gaussian weighting, in pixels.
    pub patch_sigma_a: f64,
    /// Number of most-similar neighbors kept per pixel.
    pub k_neighbors: usize,
    /// Similarity scale h of the exponential weight.
    pub filter_scale_h: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            search_radius: 10,
            patch_edge: 10,
            patch_sigma_a: 2.5,
            k_neighbors: 20,
            filter_scale_h: 10.0,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.search_radius == 0 || self.patch_edge == 0 {
            return Err(Error::invalid(
                "search radius and patch edge must be positive",
            ));
        }
        if self.k_neighbors == 0 {
            return Err(Error::invalid("k_neighbors must be positive"));
        }
        let window = 2 * self.search_radius + 1;
        if self.k_neighbors > window * window - 1 {
            return Err(Error::invalid(format!(
                "k_neighbors {} exceeds window capacity {}",
                self.k_neighbors,
                window * window - 1
            )));
        }
        if !(self.patch_sigma_a > 0.0) || !(self.filter_scale_h > 0.0) {
            return Err(Error::invalid(
                "patch_sigma_a and filter_scale_h must be positive",
            ));
        }
        Ok(())
    }

    /// Patch offsets relative to the center pixel. An even edge anchors the
    /// upper-left cell at -(edge-1)/2, e.g. (-4,-4)..(5,5) for a 10x10 patch.
    fn patch_offsets(&self) -> Vec<(isize, isize)> {
        let e = self.patch_edge as isize;
        let start = -(e - 1) / 2;
        let mut out = Vec::with_capacity((e * e) as usize);
        for dy in start..start + e {
            for dx in start..start + e {
                out.push((dx, dy));
            }
        }
        out
    }

    /// Unit-sum Gaussian over the patch footprint, centered at the footprint's
    /// geometric center.
    fn patch_weights(&self) -> Vec<f64> {
        let offsets = self.patch_offsets();
        let e = self.patch_edge as isize;
        let start = -(e - 1) / 2;
        let center = start as f64 + (e as f64 - 1.0) / 2.0;
        let inv = 1.0 / (2.0 * self.patch_sigma_a * self.patch_sigma_a);
        let mut w: Vec<f64> = offsets
            .iter()
            .map(|&(dx, dy)| {
                let rx = dx as f64 - center;
                let ry = dy as f64 - center;
                (-(rx * rx + ry * ry) * inv).exp()
            })
            .collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        w
    }
}

/// Per-pixel sparse neighbor lists with normalized similarity weights,
/// stored in CSR layout.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    width: usize,
    height: usize,
    starts: Vec<usize>,  // len = npixels + 1
    neighbors: Vec<u32>, // linear pixel indices
    weights: Vec<f64>,
}

impl WeightGraph {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn neighbors_of(&self, pixel: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.starts[pixel], self.starts[pixel + 1]);
        (&self.neighbors[a..b], &self.weights[a..b])
    }

    /// Build from explicit per-pixel lists; validates weight normalization,
    /// self-exclusion and index uniqueness.
    pub fn from_lists(width: usize, height: usize, lists: Vec<Vec<(u32, f64)>>) -> Result<Self> {
        let n = width * height;
        if lists.len() != n {
            return Err(Error::invalid("neighbor list count must equal pixel count"));
        }
        let mut starts = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        starts.push(0);
        for (p, list) in lists.into_iter().enumerate() {
            let mut seen = std::collections::HashSet::new();
            let mut sum = 0.0;
            for (q, w) in &list {
                if *q as usize >= n {
                    return Err(Error::invalid("neighbor index out of range"));
                }
                if *q as usize == p {
                    return Err(Error::invalid("pixel may not neighbor itself"));
                }
                if !seen.insert(*q) {
                    return Err(Error::invalid("duplicate neighbor index"));
                }
                if *w < 0.0 {
                    return Err(Error::invalid("negative weight"));
                }
                sum += w;
            }
            if !list.is_empty() && (sum - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "weights of pixel {p} sum to {sum}, expected 1"
                )));
            }
            for (q, w) in list {
                neighbors.push(q);
                weights.push(w);
            }
            starts.push(neighbors.len());
        }
        Ok(WeightGraph {
            width,
            height,
            starts,
            neighbors,
            weights,
        })
    }

    /// Unordered edge set with averaged directional weights
    /// w~ = (w_pq + w_qp)/2, a missing direction counting as 0.
    /// Edges are sorted for a deterministic accumulation order.
    pub fn symmetrize(&self) -> SymmetricEdges {
        let mut map: HashMap<(u32, u32), f64> = HashMap::new();
        for p in 0..self.width * self.height {
            let (nbr, w) = self.neighbors_of(p);
            for (&q, &wq) in nbr.iter().zip(w) {
                let key = if (p as u32) < q {
                    (p as u32, q)
                } else {
                    (q, p as u32)
                };
                *map.entry(key).or_insert(0.0) += 0.5 * wq;
            }
        }
        let mut edges: Vec<Edge> = map
            .into_iter()
            .map(|((p, q), w)| Edge { p, q, weight: w })
            .collect();
        edges.sort_unstable_by_key(|e| (e.p, e.q));
        SymmetricEdges { edges }
    }

    /// Serialize as a flat binary table for reproducible reruns.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SFWG");
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for p in 0..self.width * self.height {
            let (nbr, w) = self.neighbors_of(p);
            out.extend_from_slice(&(p as u32).to_le_bytes());
            out.extend_from_slice(&(nbr.len() as u32).to_le_bytes());
            for &q in nbr {
                out.extend_from_slice(&q.to_le_bytes());
            }
            for &v in w {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let err = |offset: usize, msg: &str| Error::Format {
            path: path.to_path_buf(),
            offset,
            message: msg.into(),
        };
        if bytes.len() < 12 || &bytes[0..4] != b"SFWG" {
            return Err(err(0, "bad magic"));
        }
        let rd_u32 = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = rd_u32(4) as usize;
        let height = rd_u32(8) as usize;
        let n = width * height;
        let mut pos = 12;
        let mut lists = Vec::with_capacity(n);
        for p in 0..n {
            if pos + 8 > bytes.len() {
                return Err(err(pos, "truncated record"));
            }
            if rd_u32(pos) as usize != p {
                return Err(err(pos, "pixel index out of order"));
            }
            let count = rd_u32(pos + 4) as usize;
            pos += 8;
            if pos + count * 12 > bytes.len() {
                return Err(err(pos, "truncated neighbor table"));
            }
            let mut list = Vec::with_capacity(count);
            for k in 0..count {
                let q = rd_u32(pos + 4 * k);
                let wo = pos + 4 * count + 8 * k;
                let w = f64::from_le_bytes(bytes[wo..wo + 8].try_into().unwrap());
                list.push((q, w));
            }
            pos += count * 12;
            lists.push(list);
        }
        Self::from_lists(width, height, lists)
    }
}

/// One unordered pair of the symmetrized graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub p: u32,
    pub q: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEdges {
    pub edges: Vec<Edge>,
}

/// Image padded by mirror reflection, wide enough for patch sampling.
struct Padded {
    values: Vec<f64>,
    stride: usize,
    margin: usize,
}

impl Padded {
    fn new(f: &Grid, margin: usize) -> Self {
        let (w, h) = (f.width(), f.height());
        let stride = w + 2 * margin;
        let mut values = vec![0.0; stride * (h + 2 * margin)];
        for y in 0..h + 2 * margin {
            let ys = reflect_index(y as isize - margin as isize, h);
            for x in 0..w + 2 * margin {
                let xs = reflect_index(x as isize - margin as isize, w);
                values[y * stride + x] = f.get(xs, ys);
            }
        }
        Padded {
            values,
            stride,
            margin,
        }
    }

    #[inline]
    fn at(&self, x: isize, y: isize) -> f64 {
        let xi = (x + self.margin as isize) as usize;
        let yi = (y + self.margin as isize) as usize;
        self.values[yi * self.stride + xi]
    }
}

fn patch_margin(cfg: &PatchConfig) -> usize {
    let e = cfg.patch_edge as isize;
    let start = -(e - 1) / 2;
    (start + e - 1).unsigned_abs().max(start.unsigned_abs())
}

/// Gaussian-weighted squared patch difference between pixels p and q.
/// Out-of-image samples are mirror-reflected.
pub fn patch_distance(
    f: &Grid,
    p: (usize, usize),
    q: (usize, usize),
    cfg: &PatchConfig,
) -> Result<f64> {
    cfg.validate()?;
    if p.0 >= f.width() || p.1 >= f.height() || q.0 >= f.width() || q.1 >= f.height() {
        return Err(Error::invalid("patch centers must lie inside the grid"));
    }
    let padded = Padded::new(f, patch_margin(cfg));
    let offsets = cfg.patch_offsets();
    let weights = cfg.patch_weights();
    Ok(patch_distance_padded(&padded, p, q, &offsets, &weights))
}

#[inline]
fn patch_distance_padded(
    padded: &Padded,
    p: (usize, usize),
    q: (usize, usize),
    offsets: &[(isize, isize)],
    weights: &[f64],
) -> f64 {
    let (px, py) = (p.0 as isize, p.1 as isize);
    let (qx, qy) = (q.0 as isize, q.1 as isize);
    let mut acc = 0.0;
    for (&(dx, dy), &w) in offsets.iter().zip(weights) {
        let d = padded.at(px + dx, py + dy) - padded.at(qx + dx, qy + dy);
        acc += w * d * d;
    }
    acc
}

/// Build the K-nearest-neighbor similarity graph from image f.
///
/// For each pixel: all candidates in the clipped search window (excluding the
/// pixel itself) are scored with exp(-d/h^2); the K smallest distances win,
/// ties broken by ascending row-major index; kept weights renormalize to 1.
pub fn build_weight_graph(f: &Grid, cfg: &PatchConfig) -> Result<WeightGraph> {
    cfg.validate()?;
    if f.width() < cfg.patch_edge || f.height() < cfg.patch_edge {
        return Err(Error::invalid("grid must be at least patch-sized"));
    }
    let (w, h) = (f.width(), f.height());
    let padded = Padded::new(f, patch_margin(cfg));
    let offsets = cfg.patch_offsets();
    let pweights = cfg.patch_weights();
    let r = cfg.search_radius as isize;
    let k = cfg.k_neighbors;
    let inv_h2 = 1.0 / (cfg.filter_scale_h.max(1e-12) * cfg.filter_scale_h.max(1e-12));

    let lists: Vec<Vec<(u32, f64)>> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| (0..w).map(move |x| (x, y)))
        .map(|(x, y)| {
            let mut cand: Vec<(f64, u32)> =
                Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
            let y0 = (y as isize - r).max(0);
            let y1 = (y as isize + r).min(h as isize - 1);
            let x0 = (x as isize - r).max(0);
            let x1 = (x as isize + r).min(w as isize - 1);
            for sy in y0..=y1 {
                for sx in x0..=x1 {
                    if sx == x as isize && sy == y as isize {
                        continue;
                    }
                    let d = patch_distance_padded(
                        &padded,
                        (x, y),
                        (sx as usize, sy as usize),
                        &offsets,
                        &pweights,
                    );
                    cand.push((d, (sy as usize * w + sx as usize) as u32));
                }
            }
            // K smallest distances, ties by ascending linear index.
            cand.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            cand.truncate(k);
            // Stable softmax: subtract the smallest distance before
            // exponentiating; the normalized weights are unchanged.
            let dmin = cand.first().map(|c| c.0).unwrap_or(0.0);
            let mut list: Vec<(u32, f64)> = cand
                .iter()
                .map(|&(d, q)| (q, (-(d - dmin) * inv_h2).exp()))
                .collect();
            let sum: f64 = list.iter().map(|e| e.1).sum();
            for e in &mut list {
                e.1 /= sum;
            }
            list.sort_unstable_by_key(|e| e.0);
            list
        })
        .collect();

    WeightGraph::from_lists(w, h, lists)
}

/// Nonlocal TV flux N with N_p = g_p * sum_q w_pq * |inv_p + inv_q| * (u_q - u_p),
/// where inv_p = (sum_q w_pq (u_p - u_q)^2 + eps)^{-1/2}.
pub fn nonlocal_flux(u: &Grid, graph: &WeightGraph, g: &IndicatorField, eps: f64) -> Result<Grid> {
    if u.width() != graph.width() || u.height() != graph.height() {
        return Err(Error::invalid("graph dimensions do not match the grid"));
    }
    u.check_shape(g.grid(), "nonlocal_flux")?;
    let n = u.len();
    let uv = u.values();
    let par = n >= PAR_THRESHOLD;
    // Phase 1: per-pixel inverse norms.
    let inv_at = |p: usize| {
        let (nbr, w) = graph.neighbors_of(p);
        let mut s = 0.0;
        for (&q, &wq) in nbr.iter().zip(w) {
            let d = uv[p] - uv[q as usize];
            s += wq * d * d;
        }
        (s + eps).sqrt().recip()
    };
    let inv: Vec<f64> = if par {
        (0..n).into_par_iter().map(inv_at).collect()
    } else {
        (0..n).map(inv_at).collect()
    };
    // Phase 2: fluxes.
    let gv = g.grid().values();
    let flux_at = |p: usize| {
        let (nbr, w) = graph.neighbors_of(p);
        let mut acc = 0.0;
        for (&q, &wq) in nbr.iter().zip(w) {
            let alpha = wq * (inv[p] + inv[q as usize]).abs();
            acc += alpha * (uv[q as usize] - uv[p]);
        }
        gv[p] * acc
    };
    let out: Vec<f64> = if par {
        (0..n).into_par_iter().map(flux_at).collect()
    } else {
        (0..n).map(flux_at).collect()
    };
    Grid::new(u.width(), u.height(), out)
}
