//! Sphere tracing with a full trajectory record.

use crate::ad::vec3;
use crate::error::{Error, Result};
use crate::scene::Scene;
use serde::{Deserialize, Serialize};

/// Hits with `|grad f . d| / |grad f|` at or below this are grazing.
pub const EPS_GRAZE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceOptions {
    pub tau_hit: f64,
    pub t_far: f64,
    pub max_steps: usize,
    pub step_scale: f64,
}

impl TraceOptions {
    /// Defaults for `scene` seen from a camera at `camera_distance` from the
    /// origin. Neural fields get more, shorter steps.
    pub fn for_scene(scene: &Scene, camera_distance: f64) -> Self {
        let mlp = scene.is_mlp();
        Self {
            tau_hit: 1e-5,
            t_far: 2.0 * scene.bound + camera_distance,
            max_steps: if mlp { 256 } else { 128 },
            step_scale: if mlp { 0.9 } else { 1.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub dir: [f64; 3],
    pub u: [f64; 2],
}

impl Ray {
    pub fn at(&self, t: f64) -> [f64; 3] {
        vec3::add(self.origin, vec3::scale(self.dir, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Escaped,
    MaxSteps,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub x: [f64; 3],
    pub f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Iterates in order of `t`. Escaped rays end with a point at `t_far`.
    pub points: Vec<TracePoint>,
    pub hit: bool,
    /// Valid only when `hit`.
    pub t_star: f64,
    pub termination: Termination,
}

impl Trajectory {
    pub fn min_f(&self) -> f64 {
        self.points.iter().map(|p| p.f).fold(f64::INFINITY, f64::min)
    }

    pub fn hit_point(&self) -> Option<[f64; 3]> {
        self.hit.then(|| self.points.last().expect("hit trajectory has points").x)
    }
}

pub fn sphere_trace(scene: &Scene, theta: &[f64], ray: &Ray, opts: &TraceOptions) -> Result<Trajectory> {
    let mut points = Vec::with_capacity(32);
    let mut t = 0.0;
    let f0 = scene.eval_sdf(theta, ray.origin)?;
    if f0 <= 0.0 {
        return Err(Error::InsideStart(f0));
    }
    let mut f = f0;
    for step in 0..opts.max_steps {
        let x = ray.at(t);
        if step > 0 {
            f = scene.eval(theta, x);
            if !f.is_finite() {
                return Err(Error::Numerical("signed distance during tracing".into()));
            }
        }
        points.push(TracePoint { t, x, f });
        if f <= opts.tau_hit {
            return Ok(Trajectory {
                points,
                hit: true,
                t_star: t,
                termination: Termination::Converged,
            });
        }
        let next = t + opts.step_scale * f;
        if next > opts.t_far {
            // A closing point at exactly t_far keeps the ray integral over
            // [0, t_far]; without it the quadrature jumps whenever an
            // iterate crosses t_far.
            let x = ray.at(opts.t_far);
            let f = scene.eval(theta, x);
            if !f.is_finite() {
                return Err(Error::Numerical("signed distance at t_far".into()));
            }
            points.push(TracePoint { t: opts.t_far, x, f });
            return Ok(Trajectory {
                points,
                hit: false,
                t_star: f64::NAN,
                termination: Termination::Escaped,
            });
        }
        t = next;
    }
    Ok(Trajectory {
        points,
        hit: false,
        t_star: f64::NAN,
        termination: Termination::MaxSteps,
    })
}

/// Accumulate `seed * d t* / d theta = -seed / (grad f . d) * d f / d theta`
/// into `out` and return the chain factor `-1 / (grad f . d)`.
pub fn intersection_t_derivative(
    scene: &Scene,
    theta: &[f64],
    x_star: [f64; 3],
    d: [f64; 3],
    seed: f64,
    out: &mut [f64],
) -> Result<f64> {
    let g = scene.eval_sdf_spatial_grad(theta, x_star)?;
    let gd = vec3::dot(g, d);
    if gd.abs() <= EPS_GRAZE * vec3::norm(g) {
        return Err(Error::GrazingHit(gd.abs()));
    }
    let factor = -1.0 / gd;
    scene.accumulate_param_adjoint(theta, x_star, seed * factor, out);
    Ok(factor)
}
