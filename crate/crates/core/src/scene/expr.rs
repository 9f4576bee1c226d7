use super::mlp::MlpSdf;
use super::params::{Slot, Theta};
use crate::ad::vec3::{self, V3};
use crate::ad::Scalar;

/// Signed distance expression tree. Every numeric quantity that should be
/// differentiable is a [`Slot`] into the scene's parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub enum SdfExpr {
    Sphere {
        center: [Slot; 3],
        radius: Slot,
    },
    /// Axis-aligned box given by center and half extents.
    Box {
        center: [Slot; 3],
        half: [Slot; 3],
    },
    /// Torus lying in the xz-plane around the y axis.
    Torus {
        center: [Slot; 3],
        major: Slot,
        minor: Slot,
    },
    /// Half space `normal . x - offset` with a fixed normal. A non-unit normal
    /// scales the field and is no longer an exact distance.
    Plane { normal: [f64; 3], offset: Slot },
    Union(Vec<SdfExpr>),
    /// Polynomial smooth minimum with blend radius `k`, folded left to right.
    SmoothUnion { children: Vec<SdfExpr>, k: Slot },
    Intersection(Vec<SdfExpr>),
    Complement(Box<SdfExpr>),
    /// `s * child(R^T (x - c) / s)` with a fixed row-major rotation `R`.
    Transform {
        child: Box<SdfExpr>,
        translation: [Slot; 3],
        scale: Slot,
        rotation: [[f64; 3]; 3],
    },
    Mlp(MlpSdf),
}

/// Euclidean norm whose derivative at the origin is taken as zero rather
/// than NaN.
#[inline]
fn safe_norm<S: Scalar>(v: &[S]) -> S {
    let mut s = S::zero();
    for c in v {
        s += *c * *c;
    }
    if s.value() == 0.0 {
        S::zero()
    } else {
        s.sqrt()
    }
}

#[inline]
fn positive_part<S: Scalar>(a: S) -> S {
    if a.value() > 0.0 {
        a
    } else {
        S::zero()
    }
}

impl SdfExpr {
    pub fn eval<S: Scalar>(&self, x: V3<S>, th: &Theta<'_, S>) -> S {
        match self {
            SdfExpr::Sphere { center, radius } => {
                let c = slots3(center, th);
                safe_norm(&vec3::sub(x, c)) - th.get(*radius)
            }
            SdfExpr::Box { center, half } => {
                let c = slots3(center, th);
                let p = vec3::sub(x, c);
                let q = [
                    p[0].abs() - th.get(half[0]),
                    p[1].abs() - th.get(half[1]),
                    p[2].abs() - th.get(half[2]),
                ];
                let outside = safe_norm(&[positive_part(q[0]), positive_part(q[1]), positive_part(q[2])]);
                let inner = q[0].max_branch(q[1]).max_branch(q[2]);
                let inside = if inner.value() < 0.0 { inner } else { S::zero() };
                outside + inside
            }
            SdfExpr::Torus {
                center,
                major,
                minor,
            } => {
                let c = slots3(center, th);
                let p = vec3::sub(x, c);
                let radial = safe_norm(&[p[0], p[2]]) - th.get(*major);
                safe_norm(&[radial, p[1]]) - th.get(*minor)
            }
            SdfExpr::Plane { normal, offset } => {
                vec3::dot(x, vec3::lift(*normal)) - th.get(*offset)
            }
            SdfExpr::Union(children) => fold(children, x, th, |a, b| a.min_branch(b)),
            SdfExpr::Intersection(children) => fold(children, x, th, |a, b| a.max_branch(b)),
            SdfExpr::SmoothUnion { children, k } => {
                let k = th.get(*k);
                fold(children, x, th, |a, b| smooth_min(a, b, k))
            }
            SdfExpr::Complement(child) => -child.eval(x, th),
            SdfExpr::Transform {
                child,
                translation,
                scale,
                rotation,
            } => {
                let c = slots3(translation, th);
                let s = th.get(*scale);
                let inv = s.recip();
                let local = vec3::scale(vec3::mat_tmul(rotation, vec3::sub(x, c)), inv);
                child.eval(local, th) * s
            }
            SdfExpr::Mlp(m) => m.eval(x, th),
        }
    }

    /// Visit every parameter slot referenced by the tree (MLP blocks as ranges).
    pub fn for_each_slot(&self, f: &mut impl FnMut(Slot)) {
        match self {
            SdfExpr::Sphere { center, radius } => {
                center.iter().for_each(|&s| f(s));
                f(*radius);
            }
            SdfExpr::Box { center, half } => {
                center.iter().chain(half).for_each(|&s| f(s));
            }
            SdfExpr::Torus {
                center,
                major,
                minor,
            } => {
                center.iter().for_each(|&s| f(s));
                f(*major);
                f(*minor);
            }
            SdfExpr::Plane { offset, .. } => f(*offset),
            SdfExpr::Union(c) | SdfExpr::Intersection(c) => c.iter().for_each(|e| e.for_each_slot(f)),
            SdfExpr::SmoothUnion { children, k } => {
                children.iter().for_each(|e| e.for_each_slot(f));
                f(*k);
            }
            SdfExpr::Complement(c) => c.for_each_slot(f),
            SdfExpr::Transform {
                child,
                translation,
                scale,
                ..
            } => {
                translation.iter().for_each(|&s| f(s));
                f(*scale);
                child.for_each_slot(f);
            }
            SdfExpr::Mlp(m) => (m.offset..m.offset + m.param_count()).for_each(f),
        }
    }

    pub fn contains_mlp(&self) -> bool {
        match self {
            SdfExpr::Mlp(_) => true,
            SdfExpr::Union(c) | SdfExpr::Intersection(c) => c.iter().any(Self::contains_mlp),
            SdfExpr::SmoothUnion { children, .. } => children.iter().any(Self::contains_mlp),
            SdfExpr::Complement(c) => c.contains_mlp(),
            SdfExpr::Transform { child, .. } => child.contains_mlp(),
            _ => false,
        }
    }

    /// Whether the tree is a single analytic primitive, hence an exact SDF.
    pub fn is_exact(&self) -> bool {
        matches!(
            self,
            SdfExpr::Sphere { .. } | SdfExpr::Box { .. } | SdfExpr::Torus { .. } | SdfExpr::Plane { .. }
        )
    }
}

#[inline]
fn slots3<S: Scalar>(s: &[Slot; 3], th: &Theta<'_, S>) -> V3<S> {
    [th.get(s[0]), th.get(s[1]), th.get(s[2])]
}

fn fold<S: Scalar>(children: &[SdfExpr], x: V3<S>, th: &Theta<'_, S>, op: impl Fn(S, S) -> S) -> S {
    let mut it = children.iter();
    let first = it.next().expect("composite node has children").eval(x, th);
    it.fold(first, |acc, c| op(acc, c.eval(x, th)))
}

/// Polynomial smooth minimum; degenerates to `min` for `k <= 0`.
pub fn smooth_min<S: Scalar>(a: S, b: S, k: S) -> S {
    if k.value() <= 0.0 {
        return a.min_branch(b);
    }
    let diff = (a - b).abs();
    let h = k - diff;
    if h.value() <= 0.0 {
        return a.min_branch(b);
    }
    let h = h / k;
    a.min_branch(b) - h * h * k * 0.25
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;

    fn eval(e: &SdfExpr, p: &[f64], x: [f64; 3]) -> f64 {
        e.eval(x, &Theta::Plain(p))
    }

    fn sphere() -> (SdfExpr, Vec<f64>) {
        (
            SdfExpr::Sphere {
                center: [0, 1, 2],
                radius: 3,
            },
            vec![0.0, 0.0, 0.0, 1.0],
        )
    }

    #[test]
    fn primitive_values() {
        let (s, p) = sphere();
        assert_eq!(eval(&s, &p, [0.0, 0.0, -3.0]), 2.0);
        assert_eq!(eval(&s, &p, [0.0, 0.0, 0.0]), -1.0);
        let t = SdfExpr::Torus {
            center: [0, 1, 2],
            major: 3,
            minor: 4,
        };
        let tp = [0.0, 0.0, 0.0, 1.0, 0.25];
        assert_eq!(eval(&t, &tp, [1.0, 0.0, 0.0]), -0.25);
        let b = SdfExpr::Box {
            center: [0, 1, 2],
            half: [3, 4, 5],
        };
        let bp = [0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        assert_eq!(eval(&b, &bp, [3.0, 0.0, 0.0]), 2.0);
        assert_eq!(eval(&b, &bp, [0.0, 0.0, 0.0]), -1.0);
        assert!((eval(&b, &bp, [4.0, 6.0, 0.0]) - 5.0).abs() < 1e-15);
        let pl = SdfExpr::Plane {
            normal: [0.0, 0.0, 1.0],
            offset: 0,
        };
        assert_eq!(eval(&pl, &[0.0], [5.0, -2.0, 0.75]), 0.75);
    }

    #[test]
    fn csg_composition() {
        let a = SdfExpr::Sphere {
            center: [0, 1, 2],
            radius: 3,
        };
        let b = SdfExpr::Sphere {
            center: [4, 5, 6],
            radius: 3,
        };
        let p = [-1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0];
        let x = [-1.2, 0.0, 0.0];
        let u = SdfExpr::Union(vec![a.clone(), b.clone()]);
        let i = SdfExpr::Intersection(vec![a.clone(), b.clone()]);
        let da = eval(&a, &p, x);
        let db = eval(&b, &p, x);
        assert_eq!(eval(&u, &p, x), da.min(db));
        assert_eq!(eval(&i, &p, x), da.max(db));
        assert_eq!(eval(&SdfExpr::Complement(Box::new(a)), &p, x), -da);
    }

    #[test]
    fn transform_scales_distances() {
        let (s, _) = sphere();
        let t = SdfExpr::Transform {
            child: Box::new(s),
            translation: [4, 5, 6],
            scale: 7,
            rotation: [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let p = [0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 0.0, 2.0];
        assert!((eval(&t, &p, [1.0, 2.0, -5.0]) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_union_gradient_matches_fd() {
        let a = SdfExpr::Sphere {
            center: [0, 1, 2],
            radius: 3,
        };
        let b = SdfExpr::Sphere {
            center: [4, 5, 6],
            radius: 3,
        };
        let e = SdfExpr::SmoothUnion {
            children: vec![a, b],
            k: 7,
        };
        let p = [-0.6, 0.0, 0.0, 0.5, 0.6, 0.1, 0.0, 0.4];
        let x = [0.0, 0.3, 0.2];
        let xd = [
            Dual::<f64, 3>::variable(x[0], 0),
            Dual::variable(x[1], 1),
            Dual::variable(x[2], 2),
        ];
        let g = e.eval(xd, &Theta::Plain(&p)).d;
        let h = 1e-4;
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (eval(&e, &p, xp) - eval(&e, &p, xm)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5, "axis {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn csg_ties_go_to_first_child() {
        let a = SdfExpr::Sphere {
            center: [0, 1, 2],
            radius: 3,
        };
        let b = SdfExpr::Sphere {
            center: [0, 1, 2],
            radius: 4,
        };
        let u = SdfExpr::Union(vec![a, b]);
        let p: Vec<Dual<f64, 5>> = [0.0, 0.0, 0.0, 1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| Dual::variable(v, i))
            .collect();
        let f = u.eval(vec3::lift([0.0, 0.0, 2.0]), &Theta::Lifted(&p));
        assert_eq!(f.d[3], -1.0);
        assert_eq!(f.d[4], 0.0);
    }
}
