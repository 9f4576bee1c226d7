//! Cameras, shading and the box-filtered pixel integral.

mod camera;
mod image;
pub mod sampling;

pub use camera::{Camera, CameraSpec, Projection};
pub use image::Image;

use crate::ad::vec3;
use crate::error::{Error, Result};
use crate::scene::Scene;
use crate::tracer::{sphere_trace, Ray, Termination, TraceOptions, Trajectory};
use rayon::prelude::*;
use sampling::{keyed_rng, stratified_2d, Stream};

/// Everything needed to turn screen points into radiance.
#[derive(Clone, Copy, Debug)]
pub struct RenderContext<'a> {
    pub scene: &'a Scene,
    pub theta: &'a [f64],
    pub camera: &'a Camera,
    pub trace: TraceOptions,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderStats {
    pub rays: usize,
    pub max_steps: usize,
    pub degenerate: usize,
}

impl RenderStats {
    pub fn merge(&mut self, o: &RenderStats) {
        self.rays += o.rays;
        self.max_steps += o.max_steps;
        self.degenerate += o.degenerate;
    }
}

impl<'a> RenderContext<'a> {
    pub fn new(scene: &'a Scene, theta: &'a [f64], camera: &'a Camera) -> Self {
        let dist = vec3::norm(camera.eye);
        Self {
            scene,
            theta,
            camera,
            trace: TraceOptions::for_scene(scene, dist),
        }
    }

    pub fn with_theta(&self, theta: &'a [f64]) -> Self {
        Self { theta, ..*self }
    }

    pub fn ray(&self, u: [f64; 2]) -> Ray {
        let (origin, dir) = self.camera.ray(u);
        Ray { origin, dir, u }
    }

    pub fn trace(&self, u: [f64; 2]) -> Result<(Ray, Trajectory)> {
        let ray = self.ray(u);
        let tr = sphere_trace(self.scene, self.theta, &ray, &self.trace)?;
        Ok((ray, tr))
    }

    /// Radiance along the ray through `u` and the trajectory that produced it.
    pub fn radiance(&self, u: [f64; 2], stats: &mut RenderStats) -> Result<([f64; 3], Ray, Trajectory)> {
        let (ray, tr) = self.trace(u)?;
        stats.rays += 1;
        if tr.termination == Termination::MaxSteps {
            stats.max_steps += 1;
        }
        let m = &self.scene.material;
        let l = match tr.hit_point() {
            None => m.background,
            Some(_) if !m.depends_on_normal() => m.albedo,
            Some(x) => {
                let (_, g) = self.scene.value_grad(self.theta, x);
                match m.shade(g) {
                    Ok(l) => l,
                    Err(Error::DegenerateNormal(_)) => {
                        stats.degenerate += 1;
                        m.ambient
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("radiance".into()));
        }
        Ok((l, ray, tr))
    }

    /// Box-filtered pixel value from `spp` stratified samples.
    pub fn pixel_value(&self, px: usize, py: usize, spp: usize, seed: u64, iteration: u64) -> Result<([f64; 3], RenderStats)> {
        let id = (py * self.camera.width + px) as u64;
        let mut rng = keyed_rng(seed, Stream::Primal, iteration, id);
        let mut stats = RenderStats::default();
        let mut acc = [0.0; 3];
        for a in stratified_2d(spp, &mut rng) {
            let (l, _, _) = self.radiance(self.camera.pixel_point(px, py, a), &mut stats)?;
            for c in 0..3 {
                acc[c] += l[c];
            }
        }
        Ok((acc.map(|v| v / spp as f64), stats))
    }
}

/// Render every pixel with `spp` samples. Pixels are independent and keyed
/// by index, so the result does not depend on the thread count.
pub fn render_image(ctx: &RenderContext<'_>, spp: usize, seed: u64, iteration: u64) -> Result<(Image, RenderStats)> {
    if spp == 0 {
        return Err(Error::config("spp must be at least 1"));
    }
    let (w, h) = (ctx.camera.width, ctx.camera.height);
    let pixels: Vec<([f64; 3], RenderStats)> = (0..w * h)
        .into_par_iter()
        .map(|i| ctx.pixel_value(i % w, i / w, spp, seed, iteration))
        .collect::<Result<_>>()?;
    let mut img = Image::new(w, h, 3);
    let mut stats = RenderStats::default();
    for (i, (l, s)) in pixels.iter().enumerate() {
        img.pixel_mut(i % w, i / w).copy_from_slice(l);
        stats.merge(s);
    }
    Ok((img, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Material;

    #[test]
    fn flat_sphere_pixels() {
        let scene = Scene::sphere([0.0; 3], 1.0, Material::flat([0.8, 0.5, 0.2], [0.1; 3]), 1.0).unwrap();
        let cam = Camera::orthographic(4.0, 8, 8, 3.0).unwrap();
        let ctx = RenderContext::new(&scene, scene.theta(), &cam);
        let (img, _) = render_image(&ctx, 4, 1, 0).unwrap();
        assert_eq!(img.pixel(3, 3), &[0.8, 0.5, 0.2]);
        assert_eq!(img.pixel(0, 0), &[0.1, 0.1, 0.1]);
        let (again, _) = render_image(&ctx, 4, 1, 0).unwrap();
        assert_eq!(img, again);
    }
}
