//! Parameterized signed distance scenes.
//!
//! A [`Scene`] is an [`SdfExpr`] tree whose differentiable quantities all live
//! in one flat [`ParamVector`]. Evaluation functions take the parameter values
//! explicitly so optimizers and finite-difference probes can evaluate nearby
//! parameter vectors without cloning the scene.

mod expr;
mod file;
mod material;
mod mlp;
mod params;

pub use expr::{smooth_min, SdfExpr};
pub use file::SceneFile;
pub use material::{Light, Material, Shading, TERMINATOR_WIDTH};
pub use mlp::MlpSdf;
pub use params::{ParamBlock, ParamVector, Slot, Theta};

use crate::ad::{vec3, Dual, Scalar, Tape, Var};
use crate::error::{Error, Result};
use crate::render::CameraSpec;

/// Gradient norms below this are treated as medial-axis points.
pub const DEGENERATE_NORMAL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub sdf: SdfExpr,
    pub params: ParamVector,
    pub material: Material,
    pub cameras: Vec<CameraSpec>,
    /// Bounding radius of the geometry around the origin; sets the scene scale.
    pub bound: f64,
}

type Hess = Dual<Dual<f64, 3>, 3>;

impl Scene {
    pub fn new(sdf: SdfExpr, params: ParamVector, mut material: Material, bound: f64) -> Result<Self> {
        material.validate()?;
        if !(bound > 0.0) {
            return Err(Error::config("scene bound must be positive"));
        }
        let mut max_slot = None;
        sdf.for_each_slot(&mut |s| max_slot = max_slot.max(Some(s)));
        if let Some(s) = max_slot {
            if s >= params.len() {
                return Err(Error::config(format!(
                    "slot {s} out of range for {} parameters",
                    params.len()
                )));
            }
        }
        Ok(Self {
            sdf,
            params,
            material,
            cameras: Vec::new(),
            bound,
        })
    }

    /// Sphere with parameters `center` (3) and `radius`.
    pub fn sphere(center: [f64; 3], radius: f64, material: Material, bound: f64) -> Result<Self> {
        let mut p = ParamVector::new();
        let c = p.push_block("center", &center)?;
        let r = p.push_scalar("radius", radius)?;
        let sdf = SdfExpr::Sphere {
            center: [c, c + 1, c + 2],
            radius: r,
        };
        Self::new(sdf, p, material, bound)
    }

    /// Torus in the xz-plane with parameters `center` (3), `major`, `minor`.
    pub fn torus(center: [f64; 3], major: f64, minor: f64, material: Material, bound: f64) -> Result<Self> {
        let mut p = ParamVector::new();
        let c = p.push_block("center", &center)?;
        let a = p.push_scalar("major", major)?;
        let b = p.push_scalar("minor", minor)?;
        let sdf = SdfExpr::Torus {
            center: [c, c + 1, c + 2],
            major: a,
            minor: b,
        };
        Self::new(sdf, p, material, bound)
    }

    /// A neural SDF with geometrically initialized weights in block `weights`.
    pub fn mlp(arch: MlpSdf, seed: u64, r0: f64, material: Material, bound: f64) -> Result<Self> {
        let mut p = ParamVector::new();
        let weights = arch.geometric_init(seed, r0)?;
        let offset = p.push_block("weights", &weights)?;
        let sdf = SdfExpr::Mlp(MlpSdf { offset, ..arch });
        Self::new(sdf, p, material, bound)
    }

    pub fn theta(&self) -> &[f64] {
        self.params.values()
    }

    pub fn is_mlp(&self) -> bool {
        self.sdf.contains_mlp()
    }

    /// Generic evaluation for any differentiation mode.
    #[inline]
    pub fn eval_generic<S: Scalar>(&self, x: [S; 3], theta: &Theta<'_, S>) -> S {
        self.sdf.eval(x, theta)
    }

    /// Plain evaluation with no finiteness check (tracer hot path).
    #[inline]
    pub fn eval(&self, theta: &[f64], x: [f64; 3]) -> f64 {
        if let SdfExpr::Mlp(m) = &self.sdf {
            return m.forward_tangents(x, theta, []).0;
        }
        self.sdf.eval(x, &Theta::Plain(theta))
    }

    pub fn eval_sdf(&self, theta: &[f64], x: [f64; 3]) -> Result<f64> {
        let f = self.eval(theta, x);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::Numerical("signed distance".into()))
        }
    }

    /// Value and spatial gradient.
    pub fn value_grad(&self, theta: &[f64], x: [f64; 3]) -> (f64, [f64; 3]) {
        if let SdfExpr::Mlp(m) = &self.sdf {
            return m.forward_tangents(x, theta, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        }
        let xd = [0, 1, 2].map(|k| Dual::<f64, 3>::variable(x[k], k));
        let f = self.sdf.eval(xd, &Theta::Plain(theta));
        (f.v, f.d)
    }

    /// Spatial gradient, rejecting medial-axis points.
    pub fn eval_sdf_spatial_grad(&self, theta: &[f64], x: [f64; 3]) -> Result<[f64; 3]> {
        let (f, g) = self.value_grad(theta, x);
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("spatial gradient".into()));
        }
        let n = vec3::norm(g);
        if n < DEGENERATE_NORMAL {
            return Err(Error::DegenerateNormal(n));
        }
        Ok(g)
    }

    /// Value, spatial gradient and spatial Hessian.
    pub fn value_grad_hessian(&self, theta: &[f64], x: [f64; 3]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let xd: [Hess; 3] = [0, 1, 2].map(|k| Dual {
            v: Dual::variable(x[k], k),
            d: std::array::from_fn(|j| Dual::constant(if j == k { 1.0 } else { 0.0 })),
        });
        let f = self.sdf.eval(xd, &Theta::Plain(theta));
        let g = f.v.d;
        let h = [0, 1, 2].map(|a| f.d[a].d);
        (f.v.v, g, h)
    }

    /// `out += seed * d f(x) / d theta`.
    pub fn accumulate_param_adjoint(&self, theta: &[f64], x: [f64; 3], seed: f64, out: &mut [f64]) {
        self.accumulate_seed(theta, x, seed, [0.0; 3], out);
    }

    /// `out += d/d theta [alpha f(x) + beta . grad_x f(x)]` at fixed `x`.
    pub fn accumulate_seed(&self, theta: &[f64], x: [f64; 3], alpha: f64, beta: [f64; 3], out: &mut [f64]) {
        assert_eq!(out.len(), theta.len(), "gradient buffer length");
        if alpha == 0.0 && beta == [0.0; 3] {
            return;
        }
        if let SdfExpr::Mlp(m) = &self.sdf {
            m.accumulate_adjoint(x, theta, alpha, beta, out);
            return;
        }
        let tape = Tape::with_capacity(512);
        let vars: Vec<Var<'_>> = theta.iter().map(|&t| tape.var(t)).collect();
        let lifted: Vec<Dual<Var<'_>, 3>> = vars.iter().map(|&v| Dual::constant(v)).collect();
        let xd = [0, 1, 2].map(|k| Dual::variable(Var::constant(x[k]), k));
        let f = self.sdf.eval(xd, &Theta::Lifted(&lifted));
        let obj = f.v * alpha + f.d[0] * beta[0] + f.d[1] * beta[1] + f.d[2] * beta[2];
        let adj = tape.gradient(obj, 1.0);
        for (o, v) in out.iter_mut().zip(&vars) {
            if let Some(i) = v.index() {
                *o += adj[i];
            }
        }
    }

    /// Directional parameter derivative along `v` of `f(x)` and of `grad_x f(x)`.
    pub fn param_directional(&self, theta: &[f64], v: &[f64], x: [f64; 3]) -> (f64, [f64; 3]) {
        type D = Dual<Dual<f64, 1>, 3>;
        let lifted: Vec<D> = theta
            .iter()
            .zip(v)
            .map(|(&t, &dv)| D::constant(Dual::new(t, [dv])))
            .collect();
        let xd = [0, 1, 2].map(|k| D::variable(Dual::constant(x[k]), k));
        let f = self.sdf.eval(xd, &Theta::Lifted(&lifted));
        (f.v.d[0], [f.d[0].d[0], f.d[1].d[0], f.d[2].d[0]])
    }

    /// Mean of `(|grad f| - 1)^2` over `points` and its parameter gradient.
    /// Medial-axis points are skipped; their number is returned last.
    pub fn eikonal_loss(&self, theta: &[f64], points: &[[f64; 3]]) -> Result<(f64, Vec<f64>, usize)> {
        if points.is_empty() {
            return Err(Error::config("eikonal loss needs at least one sample point"));
        }
        let mut grad = vec![0.0; theta.len()];
        let mut loss = 0.0;
        let mut skipped = 0;
        let mut used = Vec::with_capacity(points.len());
        for &x in points {
            let (_, g) = self.value_grad(theta, x);
            let n = vec3::norm(g);
            if !(n >= DEGENERATE_NORMAL) {
                skipped += 1;
                continue;
            }
            used.push((x, g, n));
        }
        let m = used.len().max(1) as f64;
        for (x, g, n) in used {
            loss += (n - 1.0) * (n - 1.0) / m;
            let beta = vec3::scale(g, 2.0 * (n - 1.0) / (n * m));
            self.accumulate_seed(theta, x, 0.0, beta, &mut grad);
        }
        if !loss.is_finite() {
            return Err(Error::Numerical("eikonal loss".into()));
        }
        Ok((loss, grad, skipped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> Material {
        Material::flat([1.0; 3], [0.0; 3])
    }

    #[test]
    fn sphere_examples() {
        let s = Scene::sphere([0.0; 3], 1.0, flat(), 2.0).unwrap();
        let th = s.theta();
        assert_eq!(s.eval_sdf(th, [0.0, 0.0, -3.0]).unwrap(), 2.0);
        assert_eq!(s.eval_sdf_spatial_grad(th, [0.0, 0.0, -2.0]).unwrap(), [0.0, 0.0, -1.0]);
        let mut out = vec![0.0; 4];
        s.accumulate_param_adjoint(th, [0.0, 0.6, 0.8], 1.0, &mut out);
        let want = [0.0, -0.6, -0.8, -1.0];
        for k in 0..4 {
            assert!((out[k] - want[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn center_point_is_degenerate() {
        let s = Scene::sphere([0.0; 3], 1.0, flat(), 2.0).unwrap();
        assert!(matches!(
            s.eval_sdf_spatial_grad(s.theta(), [0.0; 3]),
            Err(Error::DegenerateNormal(_))
        ));
    }

    #[test]
    fn non_finite_parameters_are_numerical_errors() {
        let s = Scene::sphere([0.0; 3], 1.0, flat(), 2.0).unwrap();
        let bad = [0.0, 0.0, 0.0, f64::NAN];
        assert!(matches!(s.eval_sdf(&bad, [1.0, 0.0, 0.0]), Err(Error::Numerical(_))));
    }

    #[test]
    fn plane_gradient_is_normal() {
        let mut p = ParamVector::new();
        p.push_scalar("h", 0.0).unwrap();
        let s = Scene::new(
            SdfExpr::Plane {
                normal: [0.0, 0.0, 1.0],
                offset: 0,
            },
            p,
            flat(),
            1.0,
        )
        .unwrap();
        assert_eq!(s.eval_sdf_spatial_grad(s.theta(), [0.3, 7.0, -2.0]).unwrap(), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn eikonal_of_exact_and_scaled_sphere() {
        let s = Scene::sphere([0.0; 3], 1.0, flat(), 2.0).unwrap();
        let pts = [[0.3, 0.2, 1.0], [2.0, -1.0, 0.5], [0.1, 0.0, 0.0]];
        let (l, _, skipped) = s.eikonal_loss(s.theta(), &pts).unwrap();
        assert!(l.abs() < 1e-28);
        assert_eq!(skipped, 0);

        // a plane with a doubled normal is f = 2z
        let mut p = ParamVector::new();
        p.push_scalar("h", 0.0).unwrap();
        let doubled = SdfExpr::Plane {
            normal: [0.0, 0.0, 2.0],
            offset: 0,
        };
        let s2 = Scene::new(doubled, p, flat(), 2.0).unwrap();
        let (l, _, _) = s2.eikonal_loss(s2.theta(), &pts).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn directional_matches_adjoint() {
        let s = Scene::torus([0.1, -0.2, 0.05], 1.0, 0.3, flat(), 2.0).unwrap();
        let th = s.theta();
        let v = [0.3, -0.7, 0.2, 1.1, -0.4];
        let x = [0.8, 0.35, -0.6];
        let beta = [0.2, -0.1, 0.5];
        let (df, dg) = s.param_directional(th, &v, x);
        let mut out = vec![0.0; 5];
        s.accumulate_seed(th, x, 0.6, beta, &mut out);
        let via_adj: f64 = out.iter().zip(&v).map(|(a, b)| a * b).sum();
        let via_fwd = 0.6 * df + vec3::dot(beta, dg);
        assert!((via_adj - via_fwd).abs() < 1e-13);
    }

    #[test]
    fn hessian_of_sphere() {
        let s = Scene::sphere([0.0; 3], 1.0, flat(), 2.0).unwrap();
        let (f, g, h) = s.value_grad_hessian(s.theta(), [0.0, 0.0, 2.0]);
        assert_eq!(f, 1.0);
        assert_eq!(g, [0.0, 0.0, 1.0]);
        // (I - n n^T) / |x|
        assert!((h[0][0] - 0.5).abs() < 1e-15 && (h[1][1] - 0.5).abs() < 1e-15);
        assert!(h[2][2].abs() < 1e-15 && h[0][1].abs() < 1e-15);
    }
}
