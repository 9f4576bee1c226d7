//! Central finite differences with common random numbers.

use super::{GradientImage, PixelClass};
use crate::error::{Error, Result};
use crate::render::RenderContext;
use rayon::prelude::*;

fn weighted(l: [f64; 3], w: [f64; 3]) -> f64 {
    l[0] * w[0] + l[1] * w[1] + l[2] * w[2]
}

/// `(I(theta + h v) - I(theta - h v)) / 2h` for one pixel, both sides using
/// the same sample positions.
pub fn fd_pixel(
    ctx: &RenderContext<'_>,
    v: &[f64],
    h: f64,
    px: usize,
    py: usize,
    weights: [f64; 3],
    spp: usize,
    seed: u64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let shifted = |s: f64| -> Vec<f64> { ctx.theta.iter().zip(v).map(|(t, d)| t + s * h * d).collect() };
    let tp = shifted(1.0);
    let tm = shifted(-1.0);
    let (lp, _) = ctx.with_theta(&tp).pixel_value(px, py, spp, seed, 0)?;
    let (lm, _) = ctx.with_theta(&tm).pixel_value(px, py, spp, seed, 0)?;
    Ok((weighted(lp, weights) - weighted(lm, weights)) / (2.0 * h))
}

/// Finite-difference gradient image in the same units as
/// [`super::gradient_image`] (pixel integral, i.e. scaled by pixel area).
/// Pixel classes are left as [`PixelClass::Empty`].
pub fn fd_gradient_image(
    ctx: &RenderContext<'_>,
    v: &[f64],
    h: f64,
    weights: [f64; 3],
    spp: usize,
    seed: u64,
) -> Result<GradientImage> {
    let cam = ctx.camera;
    let (w, hgt) = (cam.width, cam.height);
    let area = cam.pixel_area();
    let values: Vec<f64> = (0..w * hgt)
        .into_par_iter()
        .map(|i| fd_pixel(ctx, v, h, i % w, i / w, weights, spp, seed).map(|g| g * area))
        .collect::<Result<_>>()?;
    Ok(GradientImage {
        width: w,
        height: hgt,
        stderr: vec![0.0; values.len()],
        class: vec![PixelClass::Empty; values.len()],
        values,
    })
}
