//! Gradient images, pixel classes and estimator-versus-reference metrics.

use super::{pixel_gradient, DirectionalSink, GradStats, GradientConfig};
use crate::error::{Error, Result};
use crate::render::{Image, RenderContext};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelClass {
    /// Every probe ray hits.
    Interior,
    /// Some probe rays hit and some miss.
    Silhouette,
    Empty,
}

/// Classify a pixel by tracing a `(n+1) x (n+1)` lattice that includes its
/// edges and corners.
pub fn classify_pixel(ctx: &RenderContext<'_>, px: usize, py: usize, n: usize) -> Result<PixelClass> {
    let mut hits = 0;
    let total = (n + 1) * (n + 1);
    for j in 0..=n {
        for i in 0..=n {
            let a = [i as f64 / n as f64, j as f64 / n as f64];
            let (_, tr) = ctx.trace(ctx.camera.pixel_point(px, py, a))?;
            hits += tr.hit as usize;
        }
    }
    Ok(match hits {
        0 => PixelClass::Empty,
        h if h == total => PixelClass::Interior,
        _ => PixelClass::Silhouette,
    })
}

/// Per-pixel derivative of the pixel integral (pixel mean times pixel area)
/// along one parameter direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Estimated standard error per pixel; zero for deterministic references.
    pub stderr: Vec<f64>,
    pub class: Vec<PixelClass>,
}

impl GradientImage {
    pub fn to_image(&self) -> Image {
        Image::from_pixels(self.width, self.height, 1, self.values.clone())
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().write_pfm(path)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            k => Error::config(format!("{}: {k:?}", path.display())),
        })?;
        w.write_record(["px", "py", "value", "stderr", "class"])?;
        for i in 0..self.values.len() {
            let class = match self.class[i] {
                PixelClass::Interior => "interior",
                PixelClass::Silhouette => "silhouette",
                PixelClass::Empty => "empty",
            };
            w.write_record([
                (i % self.width).to_string(),
                (i / self.width).to_string(),
                format!("{:e}", self.values[i]),
                format!("{:e}", self.stderr[i]),
                class.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn indices_of(&self, class: PixelClass) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| self.class[i] == class).collect()
    }
}

/// Estimate a gradient image along direction `v` and classify its pixels.
pub fn gradient_image(
    ctx: &RenderContext<'_>,
    cfg: &GradientConfig,
    v: &[f64],
    weights: [f64; 3],
    seed: u64,
    iteration: u64,
) -> Result<(GradientImage, GradStats)> {
    cfg.validate()?;
    let cam = ctx.camera;
    let (w, h) = (cam.width, cam.height);
    let area = cam.pixel_area();
    let per_pixel: Vec<(f64, f64, PixelClass, GradStats)> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (px, py) = (i % w, i / w);
            let mut sink = DirectionalSink::new(ctx.scene, ctx.theta, v);
            let stats = pixel_gradient(ctx, cfg, px, py, weights, seed, iteration, &mut sink)?;
            let class = classify_pixel(ctx, px, py, 8)?;
            Ok((sink.total() * area, sink.variance().sqrt() * area, class, stats))
        })
        .collect::<Result<_>>()?;
    let mut stats = GradStats::default();
    let mut img = GradientImage {
        width: w,
        height: h,
        values: Vec::with_capacity(w * h),
        stderr: Vec::with_capacity(w * h),
        class: Vec::with_capacity(w * h),
    };
    for (v, e, c, s) in per_pixel {
        img.values.push(v);
        img.stderr.push(e);
        img.class.push(c);
        stats.merge(&s);
    }
    Ok((img, stats))
}

/// Agreement between an estimated gradient image and a reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    /// Pearson correlation over all pixels.
    pub pearson: f64,
    /// Mean absolute difference over silhouette pixels.
    pub silhouette_mae: f64,
    /// Mean magnitude of the reference over silhouette pixels.
    pub silhouette_ref_mean: f64,
    pub silhouette_pixels: usize,
    /// Mean absolute difference over interior pixels.
    pub interior_mae: f64,
    pub interior_ref_mean: f64,
    pub interior_pixels: usize,
}

impl CheckReport {
    /// Compare `est` against `reference`, using the pixel classes of `est`.
    pub fn compare(est: &GradientImage, reference: &GradientImage) -> Result<Self> {
        if est.values.len() != reference.values.len() {
            return Err(Error::config("gradient images differ in size"));
        }
        let mae = |idx: &[usize]| -> (f64, f64) {
            if idx.is_empty() {
                return (0.0, 0.0);
            }
            let n = idx.len() as f64;
            let d = idx.iter().map(|&i| (est.values[i] - reference.values[i]).abs()).sum::<f64>() / n;
            let m = idx.iter().map(|&i| reference.values[i].abs()).sum::<f64>() / n;
            (d, m)
        };
        let sil = est.indices_of(PixelClass::Silhouette);
        let int = est.indices_of(PixelClass::Interior);
        let (silhouette_mae, silhouette_ref_mean) = mae(&sil);
        let (interior_mae, interior_ref_mean) = mae(&int);
        Ok(Self {
            pearson: pearson(&est.values, &reference.values),
            silhouette_mae,
            silhouette_ref_mean,
            silhouette_pixels: sil.len(),
            interior_mae,
            interior_ref_mean,
            interior_pixels: int.len(),
        })
    }

    /// Silhouette error relative to the mean reference magnitude there.
    pub fn silhouette_relative(&self) -> f64 {
        if self.silhouette_ref_mean > 0.0 {
            self.silhouette_mae / self.silhouette_ref_mean
        } else {
            f64::INFINITY
        }
    }
}

/// Pearson correlation; zero when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
