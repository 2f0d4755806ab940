//! PGM (P2/P5, maxval 255) and grayscale PFM ("Pf", scale -1.0) readers and
//! writers. PGM is the 8-bit interchange format; PFM is the lossless carrier
//! for intermediate float fields.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        message: message.into(),
    }
}

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Scanner { bytes, pos: 0 }
    }

    /// Skip whitespace and `#` comments.
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<(&'a [u8], usize)> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos == start {
            None
        } else {
            Some((&self.bytes[start..self.pos], start))
        }
    }

    fn unsigned(&mut self, path: &Path, what: &str) -> Result<(usize, usize)> {
        let (tok, off) = self
            .token()
            .ok_or_else(|| format_err(path, self.pos, format!("missing {what}")))?;
        let s = std::str::from_utf8(tok)
            .map_err(|_| format_err(path, off, format!("non-ASCII {what}")))?;
        let v = s
            .parse::<usize>()
            .map_err(|_| format_err(path, off, format!("bad {what} `{s}`")))?;
        Ok((v, off))
    }
}

/// Read a binary P5 or ASCII P2 PGM with maxval 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut sc = Scanner::new(&bytes);
    let (magic, magic_off) = sc
        .token()
        .ok_or_else(|| format_err(path, 0, "empty file"))?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => return Err(format_err(path, magic_off, "expected P5 or P2 magic")),
    };
    let (w, _) = sc.unsigned(path, "width")?;
    let (h, _) = sc.unsigned(path, "height")?;
    let (maxval, maxval_off) = sc.unsigned(path, "maxval")?;
    if maxval != 255 {
        return Err(format_err(
            path,
            maxval_off,
            format!("maxval must be 255, got {maxval}"),
        ));
    }
    if w == 0 || h == 0 {
        return Err(format_err(path, magic_off, "zero image dimension"));
    }
    let n = w * h;
    let mut values = Vec::with_capacity(n);
    if binary {
        // Exactly one whitespace byte separates the header from the payload.
        if sc.pos >= bytes.len() || !bytes[sc.pos].is_ascii_whitespace() {
            return Err(format_err(
                path,
                sc.pos,
                "missing whitespace before payload",
            ));
        }
        let start = sc.pos + 1;
        if bytes.len() < start + n {
            return Err(format_err(
                path,
                bytes.len(),
                format!(
                    "truncated payload: need {} bytes, have {}",
                    n,
                    bytes.len() - start.min(bytes.len())
                ),
            ));
        }
        values.extend(bytes[start..start + n].iter().map(|&b| b as f64));
    } else {
        for _ in 0..n {
            let (v, off) = sc.unsigned(path, "pixel value")?;
            if v > 255 {
                return Err(format_err(
                    path,
                    off,
                    format!("pixel value {v} exceeds maxval"),
                ));
            }
            values.push(v as f64);
        }
    }
    Grid::new(w, h, values)
}

/// Write binary P5 with maxval 255: clamp to [0,255], round half away from zero.
pub fn write_pgm(g: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("P5\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.reserve(g.len());
    for &v in g.values() {
        let c = v.clamp(0.0, 255.0);
        out.push(c.round() as u8);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a grayscale "Pf" portable float map (scale -1.0, little-endian,
/// bottom-to-top scanlines).
pub fn read_pfm(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let mut sc = Scanner::new(&bytes);
    let (magic, magic_off) = sc
        .token()
        .ok_or_else(|| format_err(path, 0, "empty file"))?;
    match magic {
        b"Pf" => {}
        b"PF" => {
            return Err(Error::UnsupportedFormat(
                "color PF maps are not supported".into(),
            ))
        }
        _ => return Err(format_err(path, magic_off, "expected Pf magic")),
    }
    let (w, _) = sc.unsigned(path, "width")?;
    let (h, _) = sc.unsigned(path, "height")?;
    let (tok, scale_off) = sc
        .token()
        .ok_or_else(|| format_err(path, sc.pos, "missing scale"))?;
    let scale: f64 = std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| format_err(path, scale_off, "bad scale field"))?;
    if scale >= 0.0 {
        return Err(Error::UnsupportedFormat(
            "big-endian PFM (nonnegative scale) is not supported".into(),
        ));
    }
    if sc.pos >= bytes.len() || !bytes[sc.pos].is_ascii_whitespace() {
        return Err(format_err(
            path,
            sc.pos,
            "missing whitespace before payload",
        ));
    }
    let start = sc.pos + 1;
    let n = w * h;
    if bytes.len() < start + 4 * n {
        return Err(format_err(path, bytes.len(), "truncated float payload"));
    }
    let mut values = vec![0.0; n];
    for row in 0..h {
        let y = h - 1 - row; // file rows run bottom-to-top
        for x in 0..w {
            let o = start + 4 * (row * w + x);
            let raw = [bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]];
            values[y * w + x] = f32::from_le_bytes(raw) as f64;
        }
    }
    Grid::new(w, h, values)
}

/// Write a grayscale "Pf" map, scale -1.0, 32-bit little-endian floats.
pub fn write_pfm(g: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", g.width(), g.height()).into_bytes();
    out.reserve(4 * g.len());
    for row in 0..g.height() {
        let y = g.height() - 1 - row;
        for x in 0..g.width() {
            out.extend_from_slice(&(g.get(x, y) as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read either format, keyed on the file extension (.pfm -> PFM, else PGM).
pub fn read_auto(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
    {
        read_pfm(path)
    } else {
        read_pgm(path)
    }
}

/// Write either format, keyed on the file extension.
pub fn write_auto(g: &Grid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"))
    {
        write_pfm(g, path)
    } else {
        write_pgm(g, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("speckflow-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn pgm_roundtrip_bit_exact() {
        let g = Grid::new(3, 2, vec![0.0, 17.0, 255.0, 128.0, 1.0, 200.0]).unwrap();
        let p1 = tmp("rt1.pgm");
        let p2 = tmp("rt2.pgm");
        write_pgm(&g, &p1).unwrap();
        let r = read_pgm(&p1).unwrap();
        assert_eq!(r, g);
        write_pgm(&r, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn pgm_write_clamps_and_rounds() {
        let g = Grid::new(3, 1, vec![255.7, 127.5, -4.0]).unwrap();
        let p = tmp("clamp.pgm");
        write_pgm(&g, &p).unwrap();
        let r = read_pgm(&p).unwrap();
        assert_eq!(r.values(), &[255.0, 128.0, 0.0]);
    }

    #[test]
    fn pgm_ascii_p2() {
        let p = tmp("ascii.pgm");
        fs::write(&p, "P2\n# comment\n2 2\n255\n0 10\n20 255\n").unwrap();
        let r = read_pgm(&p).unwrap();
        assert_eq!(r.values(), &[0.0, 10.0, 20.0, 255.0]);
    }

    #[test]
    fn pgm_rejects_bad_maxval_with_offset() {
        let p = tmp("maxval.pgm");
        let data = b"P5\n2 2\n65535\n";
        fs::write(&p, data).unwrap();
        match read_pgm(&p) {
            Err(Error::Format { offset, .. }) => {
                assert_eq!(offset, 7); // position of "65535"
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn pgm_rejects_truncated_payload() {
        let p = tmp("trunc.pgm");
        fs::write(&p, b"P5\n4 4\n255\nabc").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn pfm_roundtrip() {
        let g = Grid::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let p = tmp("rt.pfm");
        write_pfm(&g, &p).unwrap();
        // 12-byte header, 16 payload bytes.
        let bytes = fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 12 + 16);
        let r = read_pfm(&p).unwrap();
        assert_eq!(r, g);
    }

    #[test]
    fn pfm_rejects_color_and_big_endian() {
        let p = tmp("color.pfm");
        fs::write(&p, b"PF\n2 2\n-1.0\n").unwrap();
        assert!(matches!(read_pfm(&p), Err(Error::UnsupportedFormat(_))));
        let p2 = tmp("be.pfm");
        fs::write(&p2, b"Pf\n1 1\n1.0\n\x00\x00\x80\x3f").unwrap();
        assert!(matches!(read_pfm(&p2), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn pfm_preserves_f32_values() {
        let vals = vec![1.5, -2.25, 1e-20, 3.0e20, 0.1f32 as f64, 255.0];
        let g = Grid::new(3, 2, vals.clone()).unwrap();
        let p = tmp("f32.pfm");
        write_pfm(&g, &p).unwrap();
        let r = read_pfm(&p).unwrap();
        for (a, b) in r.values().iter().zip(&vals) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}
