//! Pixel-gradient estimators.
//!
//! Every estimator reduces to a list of seeds `(x, alpha, beta)`, each asking
//! for `d/d theta [alpha f(x) + beta . grad_x f(x)]` at a fixed point. A
//! [`Sink`] decides what to do with them: contract against one parameter
//! direction ([`DirectionalSink`]) or accumulate the full parameter gradient
//! ([`AdjointSink`]).
//!
//! The warped estimator integrates `dL/dtheta + grad_u L . V + L div V` over
//! the pixel with the interior samples and subtracts the flux `L V . n`
//! through the pixel edges with the edge samples.

mod check;
mod fd;

pub use check::{classify_pixel, gradient_image, pearson, CheckReport, GradientImage, PixelClass};
pub use fd::{fd_gradient_image, fd_pixel};

use crate::ad::vec3;
use crate::ad::Dual;
use crate::error::{Error, Result};
use crate::render::sampling::{edge_samples, keyed_rng, stratified_2d, Stream};
use crate::render::RenderContext;
use crate::scene::{Scene, DEGENERATE_NORMAL};
use crate::tracer::{Termination, EPS_GRAZE};
use crate::warp::{warp_eval, RayTangents, WarpConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Interior derivative plus the warp field terms.
    Warped,
    /// Interior derivative only; misses every silhouette contribution.
    Naive,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "warped" => Ok(Estimator::Warped),
            "naive" => Ok(Estimator::Naive),
            _ => Err(Error::config(format!("estimator must be `warped` or `naive`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientConfig {
    pub estimator: Estimator,
    /// Interior samples per pixel.
    pub spp: usize,
    /// Samples per pixel edge.
    pub edge_spp: usize,
    pub warp: WarpConfig,
    /// Include the flux through pixel edges. Dropping it keeps the film
    /// total but breaks per-pixel correctness.
    #[serde(default = "yes")]
    pub pixel_boundary: bool,
}

fn yes() -> bool {
    true
}

impl GradientConfig {
    pub fn new(estimator: Estimator, spp: usize, edge_spp: usize, warp: WarpConfig) -> Result<Self> {
        let c = Self {
            estimator,
            spp,
            edge_spp,
            warp,
            pixel_boundary: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 {
            return Err(Error::config("gradient spp must be at least 1"));
        }
        if self.estimator == Estimator::Warped && self.pixel_boundary && self.edge_spp == 0 {
            return Err(Error::config("warped gradients need at least one sample per pixel edge"));
        }
        self.warp.validate()
    }
}

/// Which integral a seed belongs to; used for variance estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleGroup {
    Interior,
    Edge,
}

pub trait Sink {
    fn seed(&mut self, x: [f64; 3], alpha: f64, beta: [f64; 3]);
    /// Called after all seeds of one screen sample have been emitted.
    fn end_sample(&mut self, _group: SampleGroup) {}
}

/// Accumulates the full parameter gradient.
pub struct AdjointSink<'a> {
    pub scene: &'a Scene,
    pub theta: &'a [f64],
    pub grad: Vec<f64>,
}

impl<'a> AdjointSink<'a> {
    pub fn new(scene: &'a Scene, theta: &'a [f64]) -> Self {
        Self {
            scene,
            theta,
            grad: vec![0.0; theta.len()],
        }
    }
}

impl Sink for AdjointSink<'_> {
    fn seed(&mut self, x: [f64; 3], alpha: f64, beta: [f64; 3]) {
        self.scene.accumulate_seed(self.theta, x, alpha, beta, &mut self.grad);
    }
}

/// Contracts seeds against one parameter direction and keeps per-sample
/// contributions for a variance estimate.
pub struct DirectionalSink<'a> {
    pub scene: &'a Scene,
    pub theta: &'a [f64],
    pub v: &'a [f64],
    current: f64,
    interior: Vec<f64>,
    edge: Vec<f64>,
}

impl<'a> DirectionalSink<'a> {
    pub fn new(scene: &'a Scene, theta: &'a [f64], v: &'a [f64]) -> Self {
        assert_eq!(theta.len(), v.len(), "direction length");
        Self {
            scene,
            theta,
            v,
            current: 0.0,
            interior: Vec::new(),
            edge: Vec::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.interior.iter().sum::<f64>() + self.edge.iter().sum::<f64>() + self.current
    }

    /// Variance of [`DirectionalSink::total`], treating samples within each
    /// group as independent.
    pub fn variance(&self) -> f64 {
        fn group(v: &[f64]) -> f64 {
            let n = v.len();
            if n < 2 {
                return 0.0;
            }
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
            var * n as f64
        }
        group(&self.interior) + group(&self.edge)
    }
}

impl Sink for DirectionalSink<'_> {
    fn seed(&mut self, x: [f64; 3], alpha: f64, beta: [f64; 3]) {
        if alpha == 0.0 && beta == [0.0; 3] {
            return;
        }
        let (df, dg) = self.scene.param_directional(self.theta, self.v, x);
        self.current += alpha * df + vec3::dot(beta, dg);
    }

    fn end_sample(&mut self, group: SampleGroup) {
        let c = std::mem::take(&mut self.current);
        match group {
            SampleGroup::Interior => self.interior.push(c),
            SampleGroup::Edge => self.edge.push(c),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GradStats {
    pub rays: usize,
    pub max_steps: usize,
    /// Hits with a vanishing normal; shaded with the ambient term.
    pub degenerate: usize,
    /// Hits too close to tangent for the implicit-function derivative.
    pub grazing: usize,
    /// Rays whose warp fell back to zero.
    pub fallback: usize,
}

impl GradStats {
    pub fn merge(&mut self, o: &GradStats) {
        self.rays += o.rays;
        self.max_steps += o.max_steps;
        self.degenerate += o.degenerate;
        self.grazing += o.grazing;
        self.fallback += o.fallback;
    }
}

/// Emit seeds for `d/d theta` of the channel-weighted pixel mean
/// `sum_c weights[c] I_p[c]`.
pub fn pixel_gradient<K: Sink>(
    ctx: &RenderContext<'_>,
    cfg: &GradientConfig,
    px: usize,
    py: usize,
    weights: [f64; 3],
    seed: u64,
    iteration: u64,
    sink: &mut K,
) -> Result<GradStats> {
    let scene = ctx.scene;
    let theta = ctx.theta;
    let cam = ctx.camera;
    let mat = &scene.material;
    let mut stats = GradStats::default();
    let id = (py * cam.width + px) as u64;
    let mut rng = keyed_rng(seed, Stream::Interior, iteration, id);
    let w_int = 1.0 / cfg.spp as f64;
    let weigh = |l: [f64; 3]| weights[0] * l[0] + weights[1] * l[1] + weights[2] * l[2];

    for a in stratified_2d(cfg.spp, &mut rng) {
        let u = cam.pixel_point(px, py, a);
        let (ray, tr) = ctx.trace(u)?;
        stats.rays += 1;
        if tr.termination == Termination::MaxSteps {
            stats.max_steps += 1;
        }
        // radiance as a weighted scalar with its screen gradient
        let mut ell = weigh(mat.background);
        let mut ell_grad = [0.0; 2];
        if let Some(xs) = tr.hit_point() {
            if !mat.depends_on_normal() {
                ell = weigh(mat.albedo);
            } else {
                let (_, g, hm) = scene.value_grad_hessian(theta, xs);
                let gn = vec3::norm(g);
                if !(gn >= DEGENERATE_NORMAL) {
                    stats.degenerate += 1;
                    ell = weigh(mat.ambient);
                } else {
                    let d = ray.dir;
                    let gd = vec3::dot(g, d);
                    let grazing = gd.abs() <= EPS_GRAZE * gn;
                    let gl = [0, 1, 2].map(|k| Dual::<f64, 3>::variable(g[k], k));
                    let l = mat.shade(gl)?;
                    ell = weights[0] * l[0].v + weights[1] * l[1].v + weights[2] * l[2].v;
                    let dl_dg: [f64; 3] = [0, 1, 2].map(|k| (0..3).map(|c| weights[c] * l[c].d[k]).sum());
                    let hdot = |v: [f64; 3]| [0, 1, 2].map(|r| vec3::dot(hm[r], v));
                    if grazing {
                        stats.grazing += 1;
                    } else {
                        let rt = RayTangents::new(cam, u);
                        let ts = tr.t_star;
                        for ax in 0..2 {
                            let od = [0, 1, 2].map(|k| rt.o[k].d[ax]);
                            let dd = [0, 1, 2].map(|k| rt.d[k].d[ax]);
                            let base = vec3::add(od, vec3::scale(dd, ts));
                            let tdot = -vec3::dot(g, base) / gd;
                            let xdot = vec3::add(base, vec3::scale(d, tdot));
                            ell_grad[ax] = vec3::dot(dl_dg, hdot(xdot));
                        }
                        let alpha = w_int * (-1.0 / gd) * vec3::dot(dl_dg, hdot(d));
                        sink.seed(xs, alpha, vec3::scale(dl_dg, w_int));
                    }
                }
            }
        }
        if ell.is_nan() || ell_grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("radiance in gradient sample".into()));
        }
        if cfg.estimator == Estimator::Warped && (ell != 0.0 || ell_grad != [0.0; 2]) {
            let ev = warp_eval(scene, theta, cam, &ray, &tr, &cfg.warp, ctx.trace.step_scale, true)?;
            if ev.fallback {
                stats.fallback += 1;
            }
            for p in &ev.points {
                let om = p.omega;
                let mut alpha = om.v * (p.c[0].v * ell_grad[0] + p.c[1].v * ell_grad[1]);
                let mut beta = [0.0; 3];
                for ax in 0..2 {
                    alpha += ell * (om.d[ax] * p.c[ax].v + om.v * p.c[ax].d[ax]);
                    beta = vec3::add(beta, vec3::scale(p.xdot[ax], ell * om.v * p.c[ax].v));
                }
                sink.seed(p.x, w_int * alpha, vec3::scale(beta, w_int));
            }
        }
        sink.end_sample(SampleGroup::Interior);
    }

    if cfg.estimator == Estimator::Warped && cfg.pixel_boundary {
        edge_terms(ctx, cfg, px, py, weights, seed, iteration, |_| true, sink, &mut stats)?;
    }
    Ok(stats)
}

/// Seeds for `-(1/|pixel|) \oint L (V . n)` over the sampled pixel edges
/// accepted by `keep` (given the outward normal).
#[allow(clippy::too_many_arguments)]
fn edge_terms<K: Sink>(
    ctx: &RenderContext<'_>,
    cfg: &GradientConfig,
    px: usize,
    py: usize,
    weights: [f64; 3],
    seed: u64,
    iteration: u64,
    keep: impl Fn([f64; 2]) -> bool,
    sink: &mut K,
    stats: &mut GradStats,
) -> Result<()> {
    let cam = ctx.camera;
    let w_edge = -1.0 / (cfg.edge_spp as f64 * cam.pixel_size);
    let mut rstats = crate::render::RenderStats::default();
    for es in edge_samples(cam.width, cam.height, px, py, cfg.edge_spp, seed, iteration) {
        if !keep(es.normal) {
            continue;
        }
        let u = cam.pixel_point(px, py, es.offset);
        let (l, ray, tr) = ctx.radiance(u, &mut rstats)?;
        let ell = weights[0] * l[0] + weights[1] * l[1] + weights[2] * l[2];
        if ell != 0.0 {
            let ev = warp_eval(ctx.scene, ctx.theta, cam, &ray, &tr, &cfg.warp, ctx.trace.step_scale, false)?;
            if ev.fallback {
                stats.fallback += 1;
            }
            for p in &ev.points {
                let vn = p.c[0].v * es.normal[0] + p.c[1].v * es.normal[1];
                sink.seed(p.x, w_edge * ell * p.omega.v * vn, [0.0; 3]);
            }
        }
        sink.end_sample(SampleGroup::Edge);
    }
    stats.rays += rstats.rays;
    stats.max_steps += rstats.max_steps;
    stats.degenerate += rstats.degenerate;
    Ok(())
}

/// Derivative of the whole film integral along `v`, treating the film as one
/// box: interior terms of every pixel plus the flux through the outer film
/// edges only. Agrees with the sum of per-pixel estimates because shared
/// pixel edges cancel.
pub fn film_gradient(
    ctx: &RenderContext<'_>,
    cfg: &GradientConfig,
    v: &[f64],
    weights: [f64; 3],
    seed: u64,
    iteration: u64,
) -> Result<f64> {
    let mut interior = *cfg;
    interior.pixel_boundary = false;
    interior.validate()?;
    let cam = ctx.camera;
    let (w, h) = (cam.width, cam.height);
    let per_pixel: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (px, py) = (i % w, i / w);
            let mut sink = DirectionalSink::new(ctx.scene, ctx.theta, v);
            let mut stats = pixel_gradient(ctx, &interior, px, py, weights, seed, iteration, &mut sink)?;
            if cfg.estimator == Estimator::Warped {
                let outer = |n: [f64; 2]| {
                    (n[0] < 0.0 && px == 0) || (n[0] > 0.0 && px == w - 1) || (n[1] > 0.0 && py == 0) || (n[1] < 0.0 && py == h - 1)
                };
                edge_terms(ctx, cfg, px, py, weights, seed, iteration, outer, &mut sink, &mut stats)?;
            }
            Ok(sink.total() * cam.pixel_area())
        })
        .collect::<Result<_>>()?;
    Ok(per_pixel.iter().sum())
}
