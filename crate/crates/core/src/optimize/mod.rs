//! Inverse rendering: fit scene parameters to multi-view targets.
//!
//! Each iteration draws a random pixel batch from the current pyramid level,
//! estimates the pixel values and their warped gradients with independent
//! random streams, and takes one Adam step on
//! `mean_p |I_p - target_p|^2 + lambda_E * eikonal`.

mod adam;
pub mod checkpoint;
mod dataset;

pub use adam::{Adam, AdamConfig};
pub use dataset::{Dataset, View};

use crate::error::{Error, Result};
use crate::gradient::{pixel_gradient, AdjointSink, Estimator, GradStats, GradientConfig};
use crate::render::sampling::{keyed_rng, Stream};
use crate::render::RenderContext;
use crate::scene::Scene;
use crate::warp::WarpConfig;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimConfig {
    pub iterations: usize,
    #[serde(default = "OptimConfig::default_batch")]
    pub pixels_per_iter: usize,
    /// Interior gradient samples per pixel.
    #[serde(default = "OptimConfig::default_spp")]
    pub spp: usize,
    /// Gradient samples per pixel edge.
    #[serde(default = "OptimConfig::default_edge_spp")]
    pub edge_spp: usize,
    /// Samples for the pixel value estimate.
    #[serde(default = "OptimConfig::default_primal_spp")]
    pub primal_spp: usize,
    #[serde(default = "OptimConfig::default_estimator")]
    pub estimator: Estimator,
    /// Scene-dependent defaults when absent.
    #[serde(default)]
    pub warp: Option<WarpConfig>,
    pub adam: AdamConfig,
    #[serde(default)]
    pub eikonal_weight: f64,
    #[serde(default = "OptimConfig::default_eikonal_samples")]
    pub eikonal_samples: usize,
    /// Iteration fractions at which the pyramid moves one level finer.
    #[serde(default = "OptimConfig::default_switch")]
    pub level_switch: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Write a checkpoint every this many iterations; 0 disables.
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl OptimConfig {
    /// Iteration budget the neural SDF defaults are tuned for.
    pub const MLP_ITERATIONS: usize = 4000;

    fn default_batch() -> usize {
        512
    }
    fn default_spp() -> usize {
        2
    }
    fn default_edge_spp() -> usize {
        1
    }
    fn default_primal_spp() -> usize {
        4
    }
    fn default_estimator() -> Estimator {
        Estimator::Warped
    }
    fn default_eikonal_samples() -> usize {
        256
    }
    fn default_switch() -> Vec<f64> {
        vec![1.0 / 3.0, 2.0 / 3.0]
    }

    /// Defaults for `iterations` steps on `scene`. Neural SDFs get a smaller,
    /// decaying learning rate, a stronger Eikonal term, cleaner pixel values
    /// and an early move to the finer pyramid levels.
    pub fn for_scene(scene: &Scene, iterations: usize) -> Self {
        let base = Self {
            iterations,
            pixels_per_iter: Self::default_batch(),
            spp: Self::default_spp(),
            edge_spp: Self::default_edge_spp(),
            primal_spp: Self::default_primal_spp(),
            estimator: Estimator::Warped,
            warp: None,
            adam: AdamConfig::new(5e-2),
            eikonal_weight: 0.0,
            eikonal_samples: Self::default_eikonal_samples(),
            level_switch: Self::default_switch(),
            seed: 0,
            checkpoint_every: 0,
        };
        if !scene.is_mlp() {
            return base;
        }
        Self {
            pixels_per_iter: 256,
            primal_spp: 8,
            adam: AdamConfig {
                final_lr_fraction: 0.05,
                ..AdamConfig::new(2e-4)
            },
            eikonal_weight: 0.3,
            level_switch: vec![0.15, 0.35],
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.pixels_per_iter == 0 || self.spp == 0 || self.primal_spp == 0 {
            return Err(Error::config("iterations, pixels_per_iter, spp and primal_spp must be positive"));
        }
        if self.eikonal_weight < 0.0 || (self.eikonal_weight > 0.0 && self.eikonal_samples == 0) {
            return Err(Error::config("eikonal weight must be non-negative with at least one sample"));
        }
        if self.level_switch.iter().any(|f| !(0.0..=1.0).contains(f)) || self.level_switch.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("level_switch must be increasing fractions in [0, 1]"));
        }
        if let Some(w) = &self.warp {
            w.validate()?;
        }
        self.adam.validate()
    }

    /// Pyramid level used at `iteration`: coarsest first, one level finer at
    /// each switch point. Pure in the iteration index.
    pub fn level_at(&self, iteration: usize, levels: usize) -> usize {
        let passed = self
            .level_switch
            .iter()
            .filter(|&&f| iteration as f64 >= f * self.iterations as f64)
            .count();
        (levels - 1).saturating_sub(passed)
    }

    pub fn gradient_config(&self, scene: &Scene) -> Result<GradientConfig> {
        let warp = self.warp.unwrap_or_else(|| WarpConfig::default_for(scene));
        GradientConfig::new(self.estimator, self.spp, self.edge_spp, warp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRef {
    pub view: usize,
    pub px: usize,
    pub py: usize,
}

/// `batch` pixels drawn uniformly (with replacement) over all views at `level`.
pub fn sample_batch(dataset: &Dataset, level: usize, batch: usize, seed: u64, iteration: u64) -> Vec<PixelRef> {
    let mut rng = keyed_rng(seed, Stream::Batch, iteration, level as u64);
    let cam = &dataset.views[0].cameras[level];
    let per_view = cam.width * cam.height;
    let total = per_view * dataset.views.len();
    (0..batch)
        .map(|_| {
            let i = rng.random_range(0..total);
            let (view, p) = (i / per_view, i % per_view);
            PixelRef {
                view,
                px: p % cam.width,
                py: p / cam.width,
            }
        })
        .collect()
}

/// Pixel residuals at or below this (relative) are treated as exact.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

fn view_seed(seed: u64, view: usize) -> u64 {
    seed ^ (view as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub image_loss: f64,
    pub eikonal_loss: f64,
    pub grad: Vec<f64>,
    /// Batch pixels with a nonzero residual.
    pub active: usize,
    pub stats: GradStats,
}

pub fn loss_and_grad(
    scene: &Scene,
    theta: &[f64],
    dataset: &Dataset,
    level: usize,
    batch: &[PixelRef],
    cfg: &OptimConfig,
    iteration: u64,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::config("pixel batch is empty"));
    }
    let gcfg = cfg.gradient_config(scene)?;
    let m = batch.len() as f64;
    let per_pixel: Vec<(f64, Option<Vec<f64>>, GradStats)> = batch
        .par_iter()
        .map(|p| {
            let view = &dataset.views[p.view];
            let cam = &view.cameras[level];
            let ctx = RenderContext::new(scene, theta, cam);
            let seed = view_seed(cfg.seed, p.view);
            let (est, _) = ctx.pixel_value(p.px, p.py, cfg.primal_spp, seed, iteration)?;
            let target = view.targets[level].pixel(p.px, p.py);
            // residuals at round-off level come from averaging identical samples
            let r = [0, 1, 2].map(|c| {
                let d = est[c] - target[c];
                if d.abs() <= RESIDUAL_FLOOR * target[c].abs().max(1.0) {
                    0.0
                } else {
                    d
                }
            });
            let loss = r.iter().map(|v| v * v).sum::<f64>();
            if loss == 0.0 {
                return Ok((0.0, None, GradStats::default()));
            }
            let mut sink = AdjointSink::new(scene, theta);
            let w = r.map(|v| 2.0 * v / m);
            let stats = pixel_gradient(&ctx, &gcfg, p.px, p.py, w, seed, iteration, &mut sink)?;
            Ok((loss, Some(sink.grad), stats))
        })
        .collect::<Result<_>>()?;

    let mut grad = vec![0.0; theta.len()];
    let mut image_loss = 0.0;
    let mut stats = GradStats::default();
    let mut active = 0;
    for (l, g, s) in per_pixel {
        image_loss += l / m;
        stats.merge(&s);
        if let Some(g) = g {
            active += 1;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
    }
    let mut eikonal_loss = 0.0;
    if cfg.eikonal_weight > 0.0 {
        let mut rng = keyed_rng(cfg.seed, Stream::Eikonal, iteration, 0);
        let b = scene.bound;
        let pts: Vec<[f64; 3]> = (0..cfg.eikonal_samples)
            .map(|_| [0; 3].map(|_| rng.random_range(-b..b)))
            .collect();
        let (e, eg, _) = scene.eikonal_loss(theta, &pts)?;
        eikonal_loss = e;
        for (a, b) in grad.iter_mut().zip(&eg) {
            *a += cfg.eikonal_weight * b;
        }
    }
    let loss = image_loss + cfg.eikonal_weight * eikonal_loss;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("loss or gradient".into()));
    }
    Ok(LossGrad {
        loss,
        image_loss,
        eikonal_loss,
        grad,
        active,
        stats,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub level: usize,
    pub loss: f64,
    pub image_loss: f64,
    pub eikonal_loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub active_pixels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Parameters after the last iteration.
    pub theta: Vec<f64>,
    /// Parameters with the lowest batch loss seen.
    pub best_theta: Vec<f64>,
    pub best_loss: f64,
    pub history: Vec<HistoryRow>,
}

/// Loss above this multiple of the first loss counts toward divergence.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Consecutive iterations above the divergence threshold before giving up.
pub const DIVERGENCE_PATIENCE: usize = 100;

/// Run the optimizer from `scene`'s current parameters.
pub fn fit(
    scene: &Scene,
    dataset: &Dataset,
    cfg: &OptimConfig,
    checkpoint_dir: Option<&Path>,
    mut on_iteration: impl FnMut(&HistoryRow, &[f64]),
) -> Result<FitResult> {
    cfg.validate()?;
    let levels = dataset.levels();
    let mut theta = scene.theta().to_vec();
    let mut adam = Adam::new(theta.len());
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut best = (f64::INFINITY, theta.clone());
    let mut initial = None;
    let mut above = 0;
    for it in 0..cfg.iterations {
        let level = cfg.level_at(it, levels);
        let batch = sample_batch(dataset, level, cfg.pixels_per_iter, cfg.seed, it as u64);
        let lg = loss_and_grad(scene, &theta, dataset, level, &batch, cfg, it as u64)?;
        let first = *initial.get_or_insert(lg.loss);
        if lg.loss > DIVERGENCE_FACTOR * first {
            above += 1;
            if above >= DIVERGENCE_PATIENCE {
                return Err(Error::DivergenceDetected(it));
            }
        } else {
            above = 0;
        }
        if lg.loss < best.0 {
            best = (lg.loss, theta.clone());
        }
        let lr = cfg.adam.lr_at(it, cfg.iterations);
        adam.step(&mut theta, &lg.grad, &cfg.adam, lr)?;
        let row = HistoryRow {
            iteration: it,
            level,
            loss: lg.loss,
            image_loss: lg.image_loss,
            eikonal_loss: lg.eikonal_loss,
            grad_norm: lg.grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
            lr,
            active_pixels: lg.active,
        };
        on_iteration(&row, &theta);
        history.push(row);
        if let Some(dir) = checkpoint_dir {
            if cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0 {
                checkpoint::write_checkpoint(dir, &format!("checkpoint_{:06}", it + 1), scene, &theta)?;
            }
        }
    }
    Ok(FitResult {
        theta,
        best_theta: best.1,
        best_loss: best.0,
        history,
    })
}

pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        k => Error::config(format!("{}: {k:?}", path.display())),
    })?;
    for row in history {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Camera;
    use crate::scene::Material;

    fn toy() -> (Scene, Dataset) {
        let s = Scene::sphere([0.0; 3], 0.5, Material::flat([1.0; 3], [0.0; 3]), 1.0).unwrap();
        let cam = Camera::orthographic(2.0, 16, 16, 3.0).unwrap();
        let d = Dataset::synthesize(&s, &[cam], 64, 2, 3).unwrap();
        (s, d)
    }

    #[test]
    fn level_schedule_goes_coarse_to_fine() {
        let (s, _) = toy();
        let c = OptimConfig::for_scene(&s, 9);
        let lv: Vec<usize> = (0..9).map(|i| c.level_at(i, 3)).collect();
        assert_eq!(lv, vec![2, 2, 2, 1, 1, 1, 0, 0, 0]);
    }

    #[test]
    fn ground_truth_has_small_loss() {
        let (s, d) = toy();
        let mut c = OptimConfig::for_scene(&s, 1);
        c.primal_spp = 64;
        let batch = sample_batch(&d, 0, 64, 1, 0);
        let lg = loss_and_grad(&s, s.theta(), &d, 0, &batch, &c, 0).unwrap();
        assert!(lg.loss < 1e-2, "{}", lg.loss);
    }

    #[test]
    fn descent_step_reduces_loss_for_translation() {
        let (s, d) = toy();
        let mut th = s.theta().to_vec();
        th[0] += 0.1;
        let mut c = OptimConfig::for_scene(&s, 1);
        c.spp = 16;
        c.edge_spp = 8;
        c.primal_spp = 64;
        let all: Vec<PixelRef> = (0..256)
            .map(|i| PixelRef {
                view: 0,
                px: i % 16,
                py: i / 16,
            })
            .collect();
        let lg = loss_and_grad(&s, &th, &d, 0, &all, &c, 0).unwrap();
        assert!(lg.grad[0] > 0.0, "{:?}", lg.grad);
        let stepped: Vec<f64> = th.iter().zip(&lg.grad).map(|(t, g)| t - 0.02 * g / lg.grad[0].abs()).collect();
        let after = loss_and_grad(&s, &stepped, &d, 0, &all, &c, 0).unwrap();
        assert!(after.image_loss < lg.image_loss);
    }

    #[test]
    fn geometry_free_batch_has_zero_gradient() {
        let s = Scene::sphere([0.0, 0.0, 0.0], 0.1, Material::flat([1.0; 3], [0.0; 3]), 1.0).unwrap();
        let cam = Camera::orthographic(2.0, 16, 16, 3.0).unwrap();
        let d = Dataset::synthesize(&s, &[cam], 4, 1, 3).unwrap();
        let c = OptimConfig::for_scene(&s, 1);
        let corner = [PixelRef { view: 0, px: 0, py: 0 }];
        let lg = loss_and_grad(&s, s.theta(), &d, 0, &corner, &c, 0).unwrap();
        assert!(lg.grad.iter().all(|&g| g == 0.0));
    }
}
