use super::Scalar;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Forward-mode dual number with `N` tangent directions over the scalar `S`.
///
/// The tangent part is exact under the chain rule; lifting a constant gives
/// zero tangents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S, const N: usize> {
    pub v: S,
    pub d: [S; N],
}

/// Value plus derivatives along the two pixel axes.
pub type ScreenDual = Dual<f64, 2>;

/// Value plus derivatives along the three world axes.
pub type SpatialDual<S> = Dual<S, 3>;

impl<S: Scalar, const N: usize> Dual<S, N> {
    #[inline]
    pub fn constant(v: S) -> Self {
        Self {
            v,
            d: [S::zero(); N],
        }
    }

    /// The `i`-th seed variable: value `v`, unit tangent along axis `i`.
    #[inline]
    pub fn variable(v: S, i: usize) -> Self {
        let mut d = [S::zero(); N];
        d[i] = S::one();
        Self { v, d }
    }

    #[inline]
    pub fn new(v: S, d: [S; N]) -> Self {
        Self { v, d }
    }

    /// Apply a unary function given its value and derivative at `self.v`.
    #[inline]
    fn chain(self, fv: S, dfv: S) -> Self {
        let mut d = self.d;
        for di in d.iter_mut() {
            *di = *di * dfv;
        }
        Self { v: fv, d }
    }
}

impl<S: Scalar, const N: usize> Add for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] + o.d[i];
        }
        Self { v: self.v + o.v, d }
    }
}

impl<S: Scalar, const N: usize> Sub for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = d[i] - o.d[i];
        }
        Self { v: self.v - o.v, d }
    }
}

impl<S: Scalar, const N: usize> Mul for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Self { v: self.v * o.v, d }
    }
}

impl<S: Scalar, const N: usize> Div for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = o.v.recip();
        let q = self.v * inv;
        let mut d = self.d;
        for i in 0..N {
            d[i] = (self.d[i] - q * o.d[i]) * inv;
        }
        Self { v: q, d }
    }
}

impl<S: Scalar, const N: usize> Neg for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = self.d;
        for di in d.iter_mut() {
            *di = -*di;
        }
        Self { v: -self.v, d }
    }
}

impl<S: Scalar, const N: usize> Add<f64> for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Self {
            v: self.v + o,
            d: self.d,
        }
    }
}

impl<S: Scalar, const N: usize> Sub<f64> for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Self {
            v: self.v - o,
            d: self.d,
        }
    }
}

impl<S: Scalar, const N: usize> Mul<f64> for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn mul(self, k: f64) -> Self {
        let mut d = self.d;
        for di in d.iter_mut() {
            *di = *di * k;
        }
        Self { v: self.v * k, d }
    }
}

impl<S: Scalar, const N: usize> Div<f64> for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn div(self, k: f64) -> Self {
        self * (1.0 / k)
    }
}

impl<S: Scalar, const N: usize> AddAssign for Dual<S, N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar, const N: usize> SubAssign for Dual<S, N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar, const N: usize> MulAssign for Dual<S, N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar, const N: usize> Scalar for Dual<S, N> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(S::cst(v))
    }

    #[inline]
    fn value(&self) -> f64 {
        self.v.value()
    }

    #[inline]
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let ds = (s * 2.0).recip();
        self.chain(s, ds)
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    #[inline]
    fn ln(self) -> Self {
        let l = self.v.ln();
        let dl = self.v.recip();
        self.chain(l, dl)
    }

    #[inline]
    fn sin(self) -> Self {
        let s = self.v.sin();
        let c = self.v.cos();
        self.chain(s, c)
    }

    #[inline]
    fn cos(self) -> Self {
        let c = self.v.cos();
        let s = self.v.sin();
        self.chain(c, -s)
    }

    #[inline]
    fn powf(self, k: f64) -> Self {
        let p = self.v.powf(k);
        let dp = self.v.powf(k - 1.0) * k;
        self.chain(p, dp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_on_screen_axes() {
        let u1 = ScreenDual::variable(0.3, 0);
        let u2 = ScreenDual::variable(0.7, 1);
        let p = u1 * u2;
        assert!((p.v - 0.21).abs() < 1e-15);
        assert!((p.d[0] - 0.7).abs() < 1e-15);
        assert!((p.d[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn norm_is_flat_at_origin() {
        let u1 = ScreenDual::variable(0.0, 0);
        let u2 = ScreenDual::variable(0.0, 1);
        let n = (u1 * u1 + u2 * u2 + 1.0).sqrt();
        assert_eq!(n.v, 1.0);
        assert_eq!(n.d, [0.0, 0.0]);
    }

    #[test]
    fn constants_have_zero_tangent() {
        let c = Dual::<f64, 3>::cst(4.0);
        let r = (c.sqrt() * c).exp();
        assert_eq!(r.d, [0.0; 3]);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // f(x) = x^3 at x = 2: f' = 12, f'' = 12
        type H = Dual<Dual<f64, 1>, 1>;
        let x = H::new(Dual::variable(2.0, 0), [Dual::constant(1.0)]);
        let f = x * x * x;
        assert_eq!(f.v.v, 8.0);
        assert_eq!(f.v.d[0], 12.0);
        assert_eq!(f.d[0].v, 12.0);
        assert_eq!(f.d[0].d[0], 12.0);
    }

    #[test]
    fn unary_rules_match_closed_forms() {
        let x = Dual::<f64, 1>::variable(0.8, 0);
        let cases: [(Dual<f64, 1>, f64); 6] = [
            (x.sqrt(), 0.5 / 0.8f64.sqrt()),
            (x.exp(), 0.8f64.exp()),
            (x.ln(), 1.0 / 0.8),
            (x.sin(), 0.8f64.cos()),
            (x.cos(), -0.8f64.sin()),
            (x.powf(2.5), 2.5 * 0.8f64.powf(1.5)),
        ];
        for (got, want) in cases {
            assert!((got.d[0] - want).abs() < 1e-14, "{got:?} vs {want}");
        }
    }

    #[test]
    fn softplus_is_stable_and_smooth() {
        let big = Dual::<f64, 1>::variable(50.0, 0).softplus(100.0);
        assert!((big.v - 50.0).abs() < 1e-12);
        assert!((big.d[0] - 1.0).abs() < 1e-12);
        let small = Dual::<f64, 1>::variable(-50.0, 0).softplus(100.0);
        assert!(small.v >= 0.0 && small.v < 1e-300_f64.max(1e-200));
        let mid = Dual::<f64, 1>::variable(0.0, 0).softplus(100.0);
        assert!((mid.v - 2f64.ln() / 100.0).abs() < 1e-15);
        assert!((mid.d[0] - 0.5).abs() < 1e-15);
    }
}
