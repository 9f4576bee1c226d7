use super::Scalar;
use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [(u32, f64); 2],
}

/// Reverse-mode tape. Every operation on a tape-backed [`Var`] appends one
/// node holding the local partials toward its (at most two) parents.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            nodes: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Create an independent input variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push([(NONE, 0.0), (NONE, 0.0)]);
        Var {
            tape: Some(self),
            idx,
            val: value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, parents: [(u32, f64); 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { parents });
        idx
    }

    /// Adjoints of every node with respect to `output`, seeded with `seed`.
    pub fn gradient(&self, output: Var<'_>, seed: f64) -> Vec<f64> {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        if output.idx == NONE {
            return adj;
        }
        adj[output.idx as usize] = seed;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            for &(p, w) in &nodes[i].parents {
                if p != NONE {
                    adj[p as usize] += a * w;
                }
            }
        }
        adj
    }
}

/// A real value that is either a constant or a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == NONE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Self {
            tape: None,
            idx: NONE,
            val,
        }
    }

    /// Index of this variable's node, if it lives on a tape.
    pub fn index(&self) -> Option<usize> {
        (self.idx != NONE).then_some(self.idx as usize)
    }

    #[inline]
    fn unary(self, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Self::constant(val),
            Some(t) => Self {
                tape: Some(t),
                idx: t.push([(self.idx, partial), (NONE, 0.0)]),
                val,
            },
        }
    }

    #[inline]
    fn binary(self, o: Self, val: f64, pa: f64, pb: f64) -> Self {
        match self.tape.or(o.tape) {
            None => Self::constant(val),
            Some(t) => Self {
                tape: Some(t),
                idx: t.push([(self.idx, pa), (o.idx, pb)]),
                val,
            },
        }
    }
}

impl Add for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.val;
        let q = self.val * inv;
        self.binary(o, q, inv, -q * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        self.unary(self.val + o, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        self.unary(self.val - o, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn mul(self, k: f64) -> Self {
        self.unary(self.val * k, k)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    #[inline]
    fn div(self, k: f64) -> Self {
        self.unary(self.val / k, 1.0 / k)
    }
}

impl AddAssign for Var<'_> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Var<'_> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for Var<'_> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl Scalar for Var<'_> {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    #[inline]
    fn powf(self, k: f64) -> Self {
        self.unary(self.val.powf(k), k * self.val.powf(k - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_polynomial() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(2.0);
        let z = x * x * y + y.sin();
        let g = tape.gradient(z, 1.0);
        assert!((g[x.index().unwrap()] - 12.0).abs() < 1e-14);
        assert!((g[y.index().unwrap()] - (9.0 + 2f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn constants_stay_off_tape() {
        let tape = Tape::new();
        let c = Var::constant(2.0) * Var::constant(5.0);
        assert_eq!(c.index(), None);
        assert!(tape.is_empty());
        assert_eq!(c.value(), 10.0);
    }

    #[test]
    fn zero_seed_gives_zero_gradient() {
        let tape = Tape::new();
        let x = tape.var(1.5);
        let z = (x * x).exp();
        let g = tape.gradient(z, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
