//! Numerical probes of the warp weights: concentration near silhouettes,
//! the closed-form lower bound, top-k continuity and boundary consistency.

use crate::error::Result;
use crate::render::{Camera, RenderContext};
use crate::scene::{Material, Scene};
use crate::warp::{lemma_bound_eval, topk_indices, warp_eval, WarpConfig, WarpEval};
use serde::Serialize;

/// Flat-shaded sphere of radius `r` at the origin seen by an orthographic
/// camera along `+z`; its image is a disk of radius `r` centered on the film.
pub fn circle_scene(r: f64, resolution: usize, object: f64, background: f64) -> Result<(Scene, Camera)> {
    let scene = Scene::sphere([0.0; 3], r, Material::flat([object; 3], [background; 3]), 2.0 * r)?;
    let camera = Camera::orthographic(4.0 * r, resolution, resolution, 4.0 * r)?;
    Ok((scene, camera))
}

/// Trace the ray through `u` and evaluate the warp without screen tangents.
pub fn warp_at(ctx: &RenderContext<'_>, cfg: &WarpConfig, u: [f64; 2]) -> Result<WarpEval> {
    let (ray, tr) = ctx.trace(u)?;
    warp_eval(ctx.scene, ctx.theta, ctx.camera, &ray, &tr, cfg, ctx.trace.step_scale, false)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KroneckerRow {
    /// Distance from the silhouette in pixel footprints.
    pub distance: f64,
    pub max_omega: f64,
    pub points: usize,
    pub fallback: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct KroneckerReport {
    pub gamma: f64,
    pub rows: Vec<KroneckerRow>,
    /// Largest normalized weight at the closest probe distance.
    pub closest: f64,
    pub monotone: bool,
}

impl KroneckerReport {
    pub fn reaches(&self, level: f64) -> bool {
        self.closest >= level
    }
}

/// Largest normalized weight on rays at `distances` (in pixel footprints)
/// outside the silhouette point `u_sil` along the outward screen normal.
/// Distances are probed in the given order; `monotone` means the maximum
/// never decreases along it.
pub fn kronecker_probe(
    ctx: &RenderContext<'_>,
    cfg: &WarpConfig,
    u_sil: [f64; 2],
    normal: [f64; 2],
    distances: &[f64],
) -> Result<KroneckerReport> {
    let h = ctx.camera.pixel_size;
    let mut rows = Vec::with_capacity(distances.len());
    for &d in distances {
        let u = [u_sil[0] + normal[0] * d * h, u_sil[1] + normal[1] * d * h];
        let ev = warp_at(ctx, cfg, u)?;
        rows.push(KroneckerRow {
            distance: d,
            max_omega: ev.max_omega(),
            points: ev.weights.len(),
            fallback: ev.fallback,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].max_omega >= w[0].max_omega);
    let closest = rows.last().map_or(0.0, |r| r.max_omega);
    Ok(KroneckerReport {
        gamma: cfg.gamma,
        rows,
        closest,
        monotone,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundRow {
    pub delta: f64,
    pub bound: f64,
}

/// The weight-mass lower bound at each `delta`; it grows without limit as
/// `delta -> 0` only for `gamma > 2`.
pub fn bound_table(deltas: &[f64], r: f64, lambda: f64, gamma: f64) -> Result<Vec<BoundRow>> {
    deltas
        .iter()
        .map(|&delta| Ok(BoundRow { delta, bound: lemma_bound_eval(delta, r, lambda, gamma)? }))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SetChange {
    /// Scan interval `[j, j + 1]` containing the change.
    pub interval: usize,
    /// Screen parameter of the located change.
    pub s: f64,
    /// Largest change of any shifted weight across the located change,
    /// relative to the largest weight there.
    pub swapped_relative: f64,
    /// `|V(j+1) - V(j)|` over the interval.
    pub jump: f64,
    /// Largest `|dV|` over the nearest unchanged interval on either side.
    pub secant: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TopkScan {
    pub samples: usize,
    pub events: Vec<SetChange>,
    /// Intervals where the trajectory length changes; these are tracer
    /// events, not top-k events, and are not checked.
    pub tracer_events: usize,
    pub max_swapped_relative: f64,
    /// Largest `jump / secant` over the events.
    pub max_jump_ratio: f64,
}

struct ScanSample {
    len: usize,
    set: Vec<usize>,
    velocity: [f64; 2],
}

fn scan_sample(ctx: &RenderContext<'_>, cfg: &WarpConfig, v: &[f64], u: [f64; 2]) -> Result<(ScanSample, WarpEval)> {
    let ev = warp_at(ctx, cfg, u)?;
    let wq: Vec<f64> = ev.weights.iter().map(|w| w.wq).collect();
    let mut set = topk_indices(&wq, cfg.k);
    set.sort_unstable();
    let velocity = ev.velocity(ctx.scene, ctx.theta, v);
    Ok((ScanSample { len: wq.len(), set, velocity }, ev))
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Scan `samples` points on the segment `a -> b` and examine every change of
/// the top-k selection. Each change is located by bisection; the weights that
/// enter or leave the set are read off on both sides of it.
pub fn topk_scan(
    ctx: &RenderContext<'_>,
    cfg: &WarpConfig,
    v: &[f64],
    a: [f64; 2],
    b: [f64; 2],
    samples: usize,
) -> Result<TopkScan> {
    let n = samples.max(4);
    let param = |j: usize| j as f64 / (n - 1) as f64;
    let scan: Vec<ScanSample> = (0..n)
        .map(|j| scan_sample(ctx, cfg, v, lerp(a, b, param(j))).map(|s| s.0))
        .collect::<Result<_>>()?;
    let mut events = Vec::new();
    let mut tracer_events = 0;
    for j in 0..n - 1 {
        let (lo, hi) = (&scan[j], &scan[j + 1]);
        if lo.len != hi.len {
            tracer_events += 1;
            continue;
        }
        if lo.set == hi.set {
            continue;
        }
        // bisect to the change
        let (mut s0, mut s1) = (param(j), param(j + 1));
        let mut left = scan_sample(ctx, cfg, v, lerp(a, b, s0))?;
        let mut right = scan_sample(ctx, cfg, v, lerp(a, b, s1))?;
        for _ in 0..80 {
            let m = 0.5 * (s0 + s1);
            if m <= s0 || m >= s1 {
                break;
            }
            let mid = scan_sample(ctx, cfg, v, lerp(a, b, m))?;
            if mid.0.set == left.0.set {
                s0 = m;
                left = mid;
            } else {
                s1 = m;
                right = mid;
            }
        }
        if left.0.len != right.0.len {
            tracer_events += 1;
            continue;
        }
        // every shifted weight, including the swapped pair, must agree
        // across the change
        let wl: Vec<f64> = left.1.weights.iter().map(|w| w.wk).collect();
        let wr: Vec<f64> = right.1.weights.iter().map(|w| w.wk).collect();
        let peak = wl.iter().chain(&wr).copied().fold(0.0, f64::max);
        let swapped = wl.iter().zip(&wr).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dv = |p: &ScanSample, q: &ScanSample| dist(p.velocity, q.velocity);
        // nearest interval on each side with neither kind of change
        let clean = |i: usize| scan[i].len == scan[i + 1].len && scan[i].set == scan[i + 1].set;
        let mut secant: f64 = 0.0;
        if let Some(i) = (0..j).rev().find(|&i| clean(i)) {
            secant = secant.max(dv(&scan[i], &scan[i + 1]));
        }
        if let Some(i) = (j + 1..n - 1).find(|&i| clean(i)) {
            secant = secant.max(dv(&scan[i], &scan[i + 1]));
        }
        events.push(SetChange {
            interval: j,
            s: 0.5 * (s0 + s1),
            swapped_relative: if peak > 0.0 { swapped / peak } else { 0.0 },
            jump: dv(lo, hi),
            secant,
        });
    }
    let max_swapped_relative = events.iter().map(|e| e.swapped_relative).fold(0.0, f64::max);
    let max_jump_ratio = events
        .iter()
        .map(|e| if e.jump == 0.0 { 0.0 } else { e.jump / e.secant })
        .fold(0.0, f64::max);
    Ok(TopkScan {
        samples: n,
        events,
        tracer_events,
        max_swapped_relative,
        max_jump_ratio,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConsistencyRow {
    pub angle: f64,
    pub side: f64,
    pub velocity: [f64; 2],
    pub expected: [f64; 2],
    pub relative_error: f64,
}

/// Compare the warp at screen distance `offset` from the disk silhouette
/// with the silhouette's normal velocity.
///
/// For a parameter direction with silhouette velocity `w(phi)` the expected
/// value is `(w . n) n`: tangential motion along the contour is not visible
/// in the image, and the warp carries only the normal part.
pub fn circle_consistency(
    ctx: &RenderContext<'_>,
    cfg: &WarpConfig,
    v: &[f64],
    r: f64,
    offset: f64,
    angles: &[f64],
    silhouette_velocity: impl Fn([f64; 2]) -> [f64; 2],
) -> Result<Vec<ConsistencyRow>> {
    let mut rows = Vec::new();
    for &phi in angles {
        let n = [phi.cos(), phi.sin()];
        let w = silhouette_velocity(n);
        let wn = w[0] * n[0] + w[1] * n[1];
        let expected = [wn * n[0], wn * n[1]];
        for side in [1.0, -1.0] {
            let rho = r + side * offset;
            let ev = warp_at(ctx, cfg, [rho * n[0], rho * n[1]])?;
            let velocity = ev.velocity(ctx.scene, ctx.theta, v);
            let scale = (expected[0].powi(2) + expected[1].powi(2)).sqrt();
            rows.push(ConsistencyRow {
                angle: phi,
                side,
                velocity,
                expected,
                relative_error: dist(velocity, expected) / scale,
            });
        }
    }
    Ok(rows)
}
