//! Float images with PFM and PPM IO.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Row-major image, rows stored top to bottom.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 (gray) or 3 (RGB).
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_pixels(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels, "pixel buffer size");
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn index(&self, px: usize, py: usize) -> usize {
        (py * self.width + px) * self.channels
    }

    pub fn pixel(&self, px: usize, py: usize) -> &[f64] {
        let i = self.index(px, py);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, px: usize, py: usize) -> &mut [f64] {
        let i = self.index(px, py);
        &mut self.data[i..i + self.channels]
    }

    /// Average `2x2` blocks; odd trailing rows and columns are dropped.
    pub fn downsample2(&self) -> Image {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut out = Image::new(w.max(1), h.max(1), self.channels);
        for py in 0..h {
            for px in 0..w {
                for c in 0..self.channels {
                    let mut s = 0.0;
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        s += self.pixel(2 * px + dx, 2 * py + dy)[c];
                    }
                    out.pixel_mut(px, py)[c] = 0.25 * s;
                }
            }
        }
        out
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(self.data.len() * 4 + 32);
        let tag = if self.channels == 3 { "PF" } else { "Pf" };
        write!(buf, "{tag}\n{} {}\n-1.0\n", self.width, self.height).expect("write to vec");
        for py in (0..self.height).rev() {
            for px in 0..self.width {
                for &v in self.pixel(px, py) {
                    buf.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |m: &str| Error::config(format!("{}: {m}", path.display()));
        let mut line = String::new();
        let mut next_line = |r: &mut BufReader<std::fs::File>| -> Result<String> {
            line.clear();
            r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            Ok(line.trim().to_string())
        };
        let channels = match next_line(&mut r)?.as_str() {
            "PF" => 3,
            "Pf" => 1,
            _ => return Err(bad("not a PFM file")),
        };
        let dims = next_line(&mut r)?;
        let mut it = dims.split_whitespace().map(|s| s.parse::<usize>());
        let (w, h) = match (it.next(), it.next()) {
            (Some(Ok(w)), Some(Ok(h))) => (w, h),
            _ => return Err(bad("bad PFM dimensions")),
        };
        let scale: f64 = next_line(&mut r)?.parse().map_err(|_| bad("bad PFM scale"))?;
        let little = scale < 0.0;
        let mut raw = vec![0u8; w * h * channels * 4];
        r.read_exact(&mut raw).map_err(|e| Error::io(path, e))?;
        let mut img = Image::new(w, h, channels);
        let mut k = 0;
        for py in (0..h).rev() {
            for px in 0..w {
                for c in 0..channels {
                    let b = [raw[k], raw[k + 1], raw[k + 2], raw[k + 3]];
                    k += 4;
                    let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                    img.pixel_mut(px, py)[c] = v as f64;
                }
            }
        }
        Ok(img)
    }

    /// 8-bit binary PPM with gamma 2.2; values are clamped to `[0, 1]`.
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.width * self.height * 3 + 32);
        write!(buf, "P6\n{} {}\n255\n", self.width, self.height).expect("write to vec");
        for py in 0..self.height {
            for px in 0..self.width {
                let p = self.pixel(px, py);
                for c in 0..3 {
                    let v = p[if self.channels == 3 { c } else { 0 }];
                    let g = v.clamp(0.0, 1.0).powf(1.0 / 2.2);
                    buf.push((g * 255.0 + 0.5).floor() as u8);
                }
            }
        }
        buf
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Map a signed single-channel image to a red/blue preview scaled by the
    /// largest magnitude.
    pub fn signed_preview(&self) -> Image {
        let m = self.data.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        let mut out = Image::new(self.width, self.height, 3);
        for py in 0..self.height {
            for px in 0..self.width {
                let v = self.pixel(px, py)[0] / m;
                let rgb = if v >= 0.0 { [v, 0.0, 0.0] } else { [0.0, 0.0, -v] };
                out.pixel_mut(px, py).copy_from_slice(&rgb);
            }
        }
        out
    }
}
