//! Cameras and the pixel-plane parameterization.
//!
//! Screen coordinates `u` are measured on the image plane in world units for
//! orthographic cameras and in tangent units (plane at unit distance) for
//! pinhole cameras, centered on the optical axis with `u[1]` pointing up.

use crate::ad::vec3::{self, V3};
use crate::ad::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CameraSpec {
    Pinhole {
        eye: [f64; 3],
        look_at: [f64; 3],
        #[serde(default = "default_up")]
        up: [f64; 3],
        /// Horizontal field of view.
        fov_deg: f64,
        width: usize,
        height: usize,
    },
    Orthographic {
        eye: [f64; 3],
        look_at: [f64; 3],
        #[serde(default = "default_up")]
        up: [f64; 3],
        /// Horizontal film extent in world units.
        extent: f64,
        width: usize,
        height: usize,
    },
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    Pinhole,
    Orthographic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub spec: CameraSpec,
    pub projection: Projection,
    pub eye: [f64; 3],
    /// Screen right, screen up, forward; orthonormal.
    pub basis: [[f64; 3]; 3],
    pub width: usize,
    pub height: usize,
    /// Side length of one pixel in screen units.
    pub pixel_size: f64,
}

impl Camera {
    pub fn new(spec: CameraSpec) -> Result<Self> {
        let (eye, look_at, up, width, height, projection, film_w) = match &spec {
            CameraSpec::Pinhole {
                eye,
                look_at,
                up,
                fov_deg,
                width,
                height,
            } => {
                if !(*fov_deg > 0.0 && *fov_deg < 179.0) {
                    return Err(Error::config("pinhole fov_deg must be in (0, 179)"));
                }
                let film = 2.0 * (fov_deg.to_radians() * 0.5).tan();
                (*eye, *look_at, *up, *width, *height, Projection::Pinhole, film)
            }
            CameraSpec::Orthographic {
                eye,
                look_at,
                up,
                extent,
                width,
                height,
            } => {
                if !(*extent > 0.0) {
                    return Err(Error::config("orthographic extent must be positive"));
                }
                (*eye, *look_at, *up, *width, *height, Projection::Orthographic, *extent)
            }
        };
        if width == 0 || height == 0 {
            return Err(Error::config("camera film must have nonzero size"));
        }
        let fwd = vec3::sub(look_at, eye);
        if !(vec3::norm(fwd) > 0.0) {
            return Err(Error::config("camera eye and look_at coincide"));
        }
        let fwd = vec3::normalize(fwd);
        let right = vec3::cross(up, fwd);
        if vec3::norm(right) < 1e-9 {
            return Err(Error::config("camera up is parallel to the view direction"));
        }
        let right = vec3::normalize(right);
        let true_up = vec3::cross(fwd, right);
        Ok(Self {
            spec,
            projection,
            eye,
            basis: [right, true_up, fwd],
            width,
            height,
            pixel_size: film_w / width as f64,
        })
    }

    /// Orthographic camera looking down `+z` from `z = -distance`.
    pub fn orthographic(extent: f64, width: usize, height: usize, distance: f64) -> Result<Self> {
        Self::new(CameraSpec::Orthographic {
            eye: [0.0, 0.0, -distance],
            look_at: [0.0; 3],
            up: default_up(),
            extent,
            width,
            height,
        })
    }

    /// Same view and film extent at a different resolution.
    pub fn with_resolution(&self, width: usize, height: usize) -> Result<Self> {
        let mut spec = self.spec.clone();
        match &mut spec {
            CameraSpec::Pinhole { width: w, height: h, .. } | CameraSpec::Orthographic { width: w, height: h, .. } => {
                *w = width;
                *h = height;
            }
        }
        Self::new(spec)
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_size * self.pixel_size
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Screen-space box of pixel `(px, py)`, rows counted from the top:
    /// `(lower corner, upper corner)`.
    pub fn pixel_box(&self, px: usize, py: usize) -> ([f64; 2], [f64; 2]) {
        let h = self.pixel_size;
        let x0 = (px as f64 - self.width as f64 * 0.5) * h;
        let y1 = (self.height as f64 * 0.5 - py as f64) * h;
        ([x0, y1 - h], [x0 + h, y1])
    }

    /// Screen point for fractional offsets `a = (ax, ay)` in `[0,1]^2` of a
    /// pixel, measured from its lower-left corner.
    pub fn pixel_point(&self, px: usize, py: usize, a: [f64; 2]) -> [f64; 2] {
        let (lo, _) = self.pixel_box(px, py);
        [lo[0] + a[0] * self.pixel_size, lo[1] + a[1] * self.pixel_size]
    }

    /// Ray origin and unit direction for screen point `u`.
    pub fn ray<S: Scalar>(&self, u: [S; 2]) -> (V3<S>, V3<S>) {
        let [e1, e2, f] = self.basis;
        let offset = vec3::add(vec3::scale(vec3::lift(e1), u[0]), vec3::scale(vec3::lift(e2), u[1]));
        match self.projection {
            Projection::Orthographic => (vec3::add(vec3::lift(self.eye), offset), vec3::lift(f)),
            Projection::Pinhole => {
                let w = vec3::add(vec3::lift(f), offset);
                (vec3::lift(self.eye), vec3::normalize(w))
            }
        }
    }

    /// Forward Jacobian `d x(u, t) / d u` as two columns.
    pub fn forward_jacobian<S: Scalar>(&self, u: [S; 2], t: S) -> [V3<S>; 2] {
        let [e1, e2, f] = self.basis;
        match self.projection {
            Projection::Orthographic => [vec3::lift(e1), vec3::lift(e2)],
            Projection::Pinhole => {
                let w = vec3::add(
                    vec3::lift(f),
                    vec3::add(vec3::scale(vec3::lift(e1), u[0]), vec3::scale(vec3::lift(e2), u[1])),
                );
                let len = vec3::norm(w);
                let d = vec3::scale(w, len.recip());
                let k = t / len;
                [e1, e2].map(|e| {
                    let e = vec3::lift(e);
                    let proj = vec3::dot(d, e);
                    vec3::scale(vec3::sub(e, vec3::scale(d, proj)), k)
                })
            }
        }
    }

    /// Screen projection: the pseudo-inverse of [`Self::forward_jacobian`],
    /// returned as two rows so that `du = P dx`.
    pub fn screen_projection<S: Scalar>(&self, u: [S; 2], t: S) -> Result<[V3<S>; 2]> {
        let [j1, j2, _] = self.basis;
        if self.projection == Projection::Orthographic {
            return Ok([vec3::lift(j1), vec3::lift(j2)]);
        }
        let [a, b] = self.forward_jacobian(u, t);
        let (g11, g12, g22) = (vec3::dot(a, a), vec3::dot(a, b), vec3::dot(b, b));
        let det = g11 * g22 - g12 * g12;
        if !(det.value().abs() > 1e-300) || !det.value().is_finite() {
            return Err(Error::RankDeficient);
        }
        let inv = det.recip();
        let (i11, i12, i22) = (g22 * inv, -g12 * inv, g11 * inv);
        Ok([
            vec3::add(vec3::scale(a, i11), vec3::scale(b, i12)),
            vec3::add(vec3::scale(a, i12), vec3::scale(b, i22)),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{lift_screen, Dual, ScreenDual};

    fn pinhole() -> Camera {
        Camera::new(CameraSpec::Pinhole {
            eye: [0.3, 0.2, -3.0],
            look_at: [0.0, 0.0, 0.0],
            up: [0.0, 1.0, 0.0],
            fov_deg: 40.0,
            width: 32,
            height: 24,
        })
        .unwrap()
    }

    #[test]
    fn orthographic_axis_ray() {
        let c = Camera::orthographic(4.0, 8, 8, 3.0).unwrap();
        let (o, d) = c.ray([0.0, 0.0]);
        assert_eq!(o, [0.0, 0.0, -3.0]);
        assert_eq!(d, [0.0, 0.0, 1.0]);
        let p = c.screen_projection([0.0, 0.0], 5.0).unwrap();
        assert_eq!(p, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn pinhole_center_is_optical_axis() {
        let c = pinhole();
        let (_, d) = c.ray([0.0, 0.0]);
        let axis = vec3::normalize(vec3::sub([0.0; 3], c.eye));
        for k in 0..3 {
            assert!((d[k] - axis[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_matches_autodiff() {
        let c = pinhole();
        let u = [0.13, -0.07];
        let t = 2.7;
        let ud = lift_screen(u);
        let (o, d) = c.ray(ud);
        let x: V3<ScreenDual> = vec3::add(o, vec3::scale(d, Dual::constant(t)));
        let j = c.forward_jacobian(u, t);
        for a in 0..2 {
            for k in 0..3 {
                assert!((x[k].d[a] - j[a][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pinhole_projection_is_left_inverse() {
        let c = pinhole();
        for (u, t) in [([0.1, 0.2], 1.0), ([-0.3, 0.05], 4.5), ([0.0, -0.2], 0.3)] {
            let j = c.forward_jacobian(u, t);
            let p = c.screen_projection(u, t).unwrap();
            for r in 0..2 {
                for col in 0..2 {
                    let v = vec3::dot(p[r], j[col]);
                    let want = if r == col { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-10);
                }
            }
            let p2 = c.screen_projection(u, 2.0 * t).unwrap();
            for r in 0..2 {
                for k in 0..3 {
                    assert!((p2[r][k] - 0.5 * p[r][k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pixel_boxes_tile_the_film() {
        let c = Camera::orthographic(4.0, 8, 4, 3.0).unwrap();
        let (lo, hi) = c.pixel_box(0, 0);
        assert_eq!(lo, [-2.0, 0.5]);
        assert_eq!(hi, [-1.5, 1.0]);
        let (lo, _) = c.pixel_box(7, 3);
        assert_eq!(lo, [1.5, -1.0]);
    }
}
