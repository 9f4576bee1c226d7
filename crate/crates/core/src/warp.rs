//! Discontinuity-aware warp field built from sphere-tracer samples.
//!
//! For a ray through screen point `u`, every trajectory point `x_i` gets a
//! weight that blows up where it looks like a silhouette point (`f = 0` and
//! `grad f . d = 0`). The warp for parameter `j` is the weighted average of the
//! screen-projected boundary derivative
//!
//! ```text
//! V_j(u) = sum_i omega_i(u) c_i(u) df(x_i)/dtheta_j,   c_i = -P_i grad f / |grad f|^2
//! ```
//!
//! where `P_i` is the pseudo-inverse of `dx/du` at `(u, t_i)`. Screen
//! derivatives of `omega_i c_i` and of `x_i` are carried with [`ScreenDual`]
//! numbers through the whole pipeline, including the tracer recurrence.

use crate::ad::vec3::{self, V3};
use crate::ad::{lift_screen, Dual, Scalar, ScreenDual};
use crate::error::{Error, Result};
use crate::render::Camera;
use crate::scene::{Scene, DEGENERATE_NORMAL};
use crate::tracer::{Ray, Termination, Trajectory};
use serde::{Deserialize, Serialize};

/// Denominators below this fall back to a zero warp.
pub const EPS_DEN: f64 = 1e-12;

/// How many of the largest quadrature weights are kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopKRepr", into = "TopKRepr")]
pub enum TopK {
    /// Every trajectory point, unshifted.
    All,
    /// The `k` largest, shifted so the k-th largest weight is zero.
    K(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TopKRepr {
    Num(usize),
    Word(String),
}

impl TryFrom<TopKRepr> for TopK {
    type Error = String;
    fn try_from(r: TopKRepr) -> std::result::Result<Self, String> {
        match r {
            TopKRepr::Num(k) if k >= 2 => Ok(TopK::K(k)),
            TopKRepr::Num(k) => Err(format!("k must be at least 2, got {k}")),
            TopKRepr::Word(w) if w == "all" => Ok(TopK::All),
            TopKRepr::Word(w) => Err(format!("k must be an integer or \"all\", got {w:?}")),
        }
    }
}

impl From<TopK> for TopKRepr {
    fn from(k: TopK) -> Self {
        match k {
            TopK::All => TopKRepr::Word("all".into()),
            TopK::K(k) => TopKRepr::Num(k),
        }
    }
}

impl std::str::FromStr for TopK {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(TopK::All);
        }
        match s.parse::<usize>() {
            Ok(k) if k >= 2 => Ok(TopK::K(k)),
            _ => Err(Error::config(format!("k must be an integer >= 2 or \"all\", got `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarpConfig {
    pub gamma: f64,
    /// Weight of the grazing condition; multiplied by the scene bound.
    pub lambda_d: f64,
    /// Weight padding relative to the scene bound.
    #[serde(default = "default_eps_pad")]
    pub eps_pad: f64,
    pub k: TopK,
    /// Accept `gamma <= 2`; only for probing the weight limit.
    #[serde(default)]
    pub diagnostic: bool,
}

fn default_eps_pad() -> f64 {
    1e-6
}

impl WarpConfig {
    pub fn new(gamma: f64, lambda_d: f64, k: TopK) -> Result<Self> {
        let c = Self {
            gamma,
            lambda_d,
            eps_pad: default_eps_pad(),
            k,
            diagnostic: false,
        };
        c.validate()?;
        Ok(c)
    }

    /// Like [`WarpConfig::new`] but allows any positive `gamma`.
    pub fn diagnostic(gamma: f64, lambda_d: f64, k: TopK) -> Result<Self> {
        let c = Self {
            gamma,
            lambda_d,
            eps_pad: default_eps_pad(),
            k,
            diagnostic: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn analytic_default() -> Self {
        Self::new(4.0, 0.1, TopK::K(8)).expect("valid defaults")
    }

    pub fn mlp_default() -> Self {
        Self::new(4.0, 0.1, TopK::K(16)).expect("valid defaults")
    }

    pub fn default_for(scene: &Scene) -> Self {
        if scene.is_mlp() {
            Self::mlp_default()
        } else {
            Self::analytic_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.diagnostic {
            if !(self.gamma > 0.0) {
                return Err(Error::config("gamma must be positive"));
            }
        } else if !(self.gamma > 2.0) {
            return Err(Error::config(format!(
                "gamma must exceed 2 for the weights to concentrate, got {}",
                self.gamma
            )));
        }
        if !(self.lambda_d > 0.0) {
            return Err(Error::config("lambda_d must be positive"));
        }
        if !(self.eps_pad > 0.0) {
            return Err(Error::config("eps_pad must be positive"));
        }
        if let TopK::K(k) = self.k {
            if k < 2 {
                return Err(Error::config("k must be at least 2"));
            }
        }
        Ok(())
    }
}

/// `|f| + lambda |grad f . d|`; zero exactly at silhouette points.
pub fn silhouette_score<S: Scalar>(f: S, grad: V3<S>, d: V3<S>, lambda: f64) -> S {
    f.abs() + vec3::dot(grad, d).abs() * lambda
}

/// `(s + eps)^-gamma`.
pub fn harmonic_weight<S: Scalar>(s: S, gamma: f64, eps: f64) -> S {
    (s + eps).powf(-gamma)
}

/// Trapezoid half-intervals: `(t_{i+1} - t_{i-1}) / 2` inside, one-sided
/// halves at the ends.
pub fn quadrature_intervals<S: Scalar>(t: &[S]) -> Vec<S> {
    let n = t.len();
    if n < 2 {
        return vec![S::zero(); n];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                (t[1] - t[0]) * 0.5
            } else if i == n - 1 {
                (t[n - 1] - t[n - 2]) * 0.5
            } else {
                (t[i + 1] - t[i - 1]) * 0.5
            }
        })
        .collect()
}

pub fn quadrature_weights(t: &[f64], w: &[f64]) -> Vec<f64> {
    quadrature_intervals(t).iter().zip(w).map(|(d, w)| d * w).collect()
}

/// Indices of the `k` largest weights, ties toward the smaller index,
/// ordered by decreasing weight.
pub fn topk_indices(wq: &[f64], k: TopK) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..wq.len()).collect();
    if let TopK::K(k) = k {
        idx.sort_by(|&a, &b| wq[b].total_cmp(&wq[a]).then(a.cmp(&b)));
        idx.truncate(k.min(wq.len()));
    }
    idx
}

/// Top-k weights: the selected entries minus the k-th largest entry, zero
/// elsewhere. Fewer than `k` weights count as padded with zeros, so nothing
/// is subtracted. `TopK::All` returns the weights unchanged.
pub fn topk_weights(wq: &[f64], k: TopK) -> Vec<f64> {
    let TopK::K(k) = k else {
        return wq.to_vec();
    };
    let sel = topk_indices(wq, TopK::K(k));
    let m = if sel.len() == k { wq[sel[k - 1]] } else { 0.0 };
    let mut out = vec![0.0; wq.len()];
    for &i in &sel {
        out[i] = wq[i] - m;
    }
    out
}

/// Screen tangents of a camera ray.
#[derive(Clone, Copy, Debug)]
pub struct RayTangents {
    pub o: [ScreenDual; 3],
    pub d: [ScreenDual; 3],
}

impl RayTangents {
    pub fn new(camera: &Camera, u: [f64; 2]) -> Self {
        let (o, d) = camera.ray(lift_screen(u));
        Self { o, d }
    }

    /// `d x / d u_a` for `x = o + t d` with `t` carrying tangents `t.d`.
    pub fn point_tangent(&self, t: ScreenDual) -> [[f64; 3]; 2] {
        let x: [ScreenDual; 3] = vec3::add(self.o, vec3::scale(self.d, t));
        [0, 1].map(|a| [x[0].d[a], x[1].d[a], x[2].d[a]])
    }

    pub fn dir(&self) -> [f64; 3] {
        vec3::value(&self.d)
    }
}

type Nested = Dual<ScreenDual, 3>;

/// Signed distance and spatial gradient at `x`, both carrying screen
/// tangents induced by `x` moving with `dx/du = xdot`.
pub fn nested_eval(scene: &Scene, theta: &[f64], x: [f64; 3], xdot: [[f64; 3]; 2]) -> (ScreenDual, [ScreenDual; 3]) {
    let xs: [Nested; 3] = [0, 1, 2].map(|k| Dual {
        v: ScreenDual::new(x[k], [xdot[0][k], xdot[1][k]]),
        d: std::array::from_fn(|j| ScreenDual::constant(if j == k { 1.0 } else { 0.0 })),
    });
    let f = scene.eval_generic(xs, &crate::scene::Theta::Plain(theta));
    (f.v, f.d)
}

/// Per-point record for diagnostics and dumps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointWeights {
    pub t: f64,
    pub f: f64,
    pub s: f64,
    pub w: f64,
    pub wq: f64,
    pub wk: f64,
    pub omega: f64,
}

/// A trajectory point with nonzero normalized weight.
#[derive(Clone, Copy, Debug)]
pub struct WarpPoint {
    pub index: usize,
    pub x: [f64; 3],
    /// `d x_i / d u_a`.
    pub xdot: [[f64; 3]; 2],
    pub omega: ScreenDual,
    /// Screen-projected boundary direction, one dual per screen axis.
    pub c: [ScreenDual; 2],
}

#[derive(Clone, Debug, Default)]
pub struct WarpEval {
    pub points: Vec<WarpPoint>,
    pub weights: Vec<PointWeights>,
    pub denominator: f64,
    /// True when the warp is identically zero (short trajectory or tiny
    /// denominator).
    pub fallback: bool,
    pub skipped_degenerate: usize,
}

impl WarpEval {
    /// Warp velocity along the parameter direction `v`.
    pub fn velocity(&self, scene: &Scene, theta: &[f64], v: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for p in &self.points {
            let (df, _) = scene.param_directional(theta, v, p.x);
            for a in 0..2 {
                out[a] += p.omega.v * p.c[a].v * df;
            }
        }
        out
    }

    /// Screen divergence of the warp along the parameter direction `v`.
    pub fn divergence(&self, scene: &Scene, theta: &[f64], v: &[f64]) -> f64 {
        let mut div = 0.0;
        for p in &self.points {
            let (df, dg) = scene.param_directional(theta, v, p.x);
            for a in 0..2 {
                let coef = p.omega.d[a] * p.c[a].v + p.omega.v * p.c[a].d[a];
                div += coef * df + p.omega.v * p.c[a].v * vec3::dot(dg, p.xdot[a]);
            }
        }
        div
    }

    pub fn max_omega(&self) -> f64 {
        self.weights.iter().map(|w| w.omega).fold(0.0, f64::max)
    }
}

/// Evaluate the quadrature warp for `ray` (traced into `traj`).
///
/// With `tangents = false` only values are computed (enough for pixel-edge
/// samples); screen derivatives are then zero.
pub fn warp_eval(
    scene: &Scene,
    theta: &[f64],
    camera: &Camera,
    ray: &Ray,
    traj: &Trajectory,
    cfg: &WarpConfig,
    step_scale: f64,
    tangents: bool,
) -> Result<WarpEval> {
    let n = traj.points.len();
    let mut ev = WarpEval::default();
    if n < 2 {
        ev.fallback = true;
        return Ok(ev);
    }
    let lambda = cfg.lambda_d * scene.bound;
    let eps = cfg.eps_pad * scene.bound;
    let rt = RayTangents::new(camera, ray.u);
    let d = ray.dir;
    let pinhole = camera.projection == crate::render::Projection::Pinhole;

    // values, spatial gradients and the screen tangents of t_i
    let mut g = Vec::with_capacity(n);
    let mut tdot = Vec::with_capacity(n);
    let mut td = [0.0; 2];
    let mut degenerate = vec![false; n];
    // the closing point of an escaped ray sits at the fixed t_far
    let closing = (traj.termination == Termination::Escaped).then(|| n - 1);
    for (i, p) in traj.points.iter().enumerate() {
        if closing == Some(i) {
            td = [0.0; 2];
        }
        let (_, gi) = scene.value_grad(theta, p.x);
        if !gi.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("spatial gradient in warp".into()));
        }
        // the pinhole projection is singular at the eye
        degenerate[i] = vec3::norm(gi) < DEGENERATE_NORMAL || (pinhole && p.t <= 0.0);
        let t = ScreenDual::new(p.t, td);
        tdot.push(td);
        let xd = rt.point_tangent(t);
        for a in 0..2 {
            td[a] += step_scale * vec3::dot(gi, xd[a]);
        }
        g.push(gi);
    }
    ev.skipped_degenerate = degenerate.iter().filter(|&&b| b).count();

    let ts: Vec<f64> = traj.points.iter().map(|p| p.t).collect();
    let delta = quadrature_intervals(&ts);
    let mut s = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut wq = vec![0.0; n];
    for i in 0..n {
        s[i] = silhouette_score(traj.points[i].f, g[i], d, lambda);
        w[i] = harmonic_weight(s[i], cfg.gamma, eps);
        wq[i] = if degenerate[i] { 0.0 } else { w[i] * delta[i] };
    }
    let sel: Vec<usize> = topk_indices(&wq, cfg.k)
        .into_iter()
        .filter(|&i| !degenerate[i])
        .collect();

    // screen-dual versions of the selected weights
    let t_dual: Vec<ScreenDual> = (0..n).map(|i| ScreenDual::new(ts[i], if tangents { tdot[i] } else { [0.0; 2] })).collect();
    let delta_dual = quadrature_intervals(&t_dual);
    let mut wq_dual = Vec::with_capacity(sel.len());
    let mut g_dual = Vec::with_capacity(sel.len());
    let mut xdots = Vec::with_capacity(sel.len());
    for &i in &sel {
        let p = &traj.points[i];
        let (f, gd, xdot) = if tangents {
            let xdot = rt.point_tangent(t_dual[i]);
            let (f, gd) = nested_eval(scene, theta, p.x, xdot);
            (f, gd, xdot)
        } else {
            (ScreenDual::constant(p.f), g[i].map(ScreenDual::constant), [[0.0; 3]; 2])
        };
        let dd = if tangents { rt.d } else { d.map(ScreenDual::constant) };
        let sd = silhouette_score(f, gd, dd, lambda);
        wq_dual.push(harmonic_weight(sd, cfg.gamma, eps) * delta_dual[i]);
        g_dual.push(gd);
        xdots.push(xdot);
    }
    // short trajectories are padded with zero weights, which keeps the
    // shift continuous when a point appears
    let floor = match cfg.k {
        TopK::K(k) if sel.len() >= k => wq_dual[k - 1],
        _ => ScreenDual::constant(0.0),
    };
    let wk: Vec<ScreenDual> = wq_dual.iter().map(|&v| v - floor).collect();
    let mut den = ScreenDual::constant(0.0);
    for v in &wk {
        den += *v;
    }
    ev.denominator = den.v;

    let mut wk_full = vec![0.0; n];
    for (j, &i) in sel.iter().enumerate() {
        wk_full[i] = wk[j].v;
    }
    let fallback = !(den.v >= EPS_DEN);
    ev.fallback = fallback;
    let mut omega_full = vec![0.0; n];
    if !fallback {
        let u_dual = if tangents {
            lift_screen(ray.u)
        } else {
            ray.u.map(ScreenDual::constant)
        };
        let inv = den.recip();
        for (j, &i) in sel.iter().enumerate() {
            if wk[j].v <= 0.0 {
                continue;
            }
            let omega = wk[j] * inv;
            omega_full[i] = omega.v;
            let gd = g_dual[j];
            let proj = camera.screen_projection(u_dual, t_dual[i])?;
            let inv_g2 = vec3::dot(gd, gd).recip();
            let c = [0, 1].map(|a| -vec3::dot(proj[a], gd) * inv_g2);
            ev.points.push(WarpPoint {
                index: i,
                x: traj.points[i].x,
                xdot: xdots[j],
                omega,
                c,
            });
        }
    }
    ev.weights = (0..n)
        .map(|i| PointWeights {
            t: ts[i],
            f: traj.points[i].f,
            s: s[i],
            w: w[i],
            wq: wq[i],
            wk: wk_full[i],
            omega: omega_full[i],
        })
        .collect();
    Ok(ev)
}

/// Reference warp velocity by dense uniform quadrature of the ray integral
/// over `[0, t_end]` (`t*` for hits, `t_far` otherwise), without top-k.
pub fn dense_velocity(
    scene: &Scene,
    theta: &[f64],
    camera: &Camera,
    ray: &Ray,
    t_end: f64,
    cfg: &WarpConfig,
    v: &[f64],
    samples: usize,
) -> Result<[f64; 2]> {
    let lambda = cfg.lambda_d * scene.bound;
    let eps = cfg.eps_pad * scene.bound;
    let h = t_end / samples as f64;
    let mut num = [0.0; 2];
    let mut den = 0.0;
    for k in 0..samples {
        let t = (k as f64 + 0.5) * h;
        let x = ray.at(t);
        let (f, g) = scene.value_grad(theta, x);
        let gn2 = vec3::dot(g, g);
        if gn2.sqrt() < DEGENERATE_NORMAL {
            continue;
        }
        let w = harmonic_weight(silhouette_score(f, g, ray.dir, lambda), cfg.gamma, eps) * h;
        let proj = camera.screen_projection(ray.u, t)?;
        let (df, _) = scene.param_directional(theta, v, x);
        for a in 0..2 {
            num[a] += w * (-vec3::dot(proj[a], g) / gn2) * df;
        }
        den += w;
    }
    if !(den >= EPS_DEN) {
        return Ok([0.0; 2]);
    }
    Ok([num[0] / den, num[1] / den])
}

/// Closed-form lower bound on the weight mass near a silhouette:
/// `(sqrt(r^2 + delta^2) - r + lambda delta / sqrt(r^2 + delta^2))^-gamma
///  * (sqrt(r^2 + delta^2) - r)`.
pub fn lemma_bound_eval(delta: f64, r: f64, lambda: f64, gamma: f64) -> Result<f64> {
    if !(delta > 0.0 && r > 0.0) {
        return Err(Error::config("lemma bound needs delta > 0 and r > 0"));
    }
    let h = (r * r + delta * delta).sqrt();
    // h - r without cancellation
    let gap = delta * delta / (h + r);
    Ok((gap + lambda * delta / h).powf(-gamma) * gap)
}
