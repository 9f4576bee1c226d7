use super::{Dual, Scalar, ScreenDual, Tape};

/// A scalar function of the parameter vector, generic over the number type so
/// it can be run under any differentiation mode.
pub trait ThetaFn {
    fn eval<S: Scalar>(&self, theta: &[S]) -> S;
}

/// Lift a pixel-plane point so the two screen axes carry unit tangents.
pub fn lift_screen(u: [f64; 2]) -> [ScreenDual; 2] {
    [ScreenDual::variable(u[0], 0), ScreenDual::variable(u[1], 1)]
}

/// Run `f` on a lifted pixel-plane point and return whatever it computes;
/// tangents of the results are derivatives with respect to `u`.
pub fn with_screen_tangents<R>(u: [f64; 2], f: impl FnOnce([ScreenDual; 2]) -> R) -> R {
    f(lift_screen(u))
}

/// Gradient of `f` at `theta` by recording on a tape and sweeping backwards.
///
/// `f` may build screen duals over tape variables internally (for example to
/// take a screen derivative and return it); the adjoint then includes the
/// parameter dependence carried by those tangent components.
pub fn nested_adjoint<F: ThetaFn>(f: &F, theta: &[f64]) -> Vec<f64> {
    let tape = Tape::with_capacity(256);
    let vars: Vec<_> = theta.iter().map(|&t| tape.var(t)).collect();
    let out = f.eval(&vars);
    let adj = tape.gradient(out, 1.0);
    vars.iter()
        .map(|v| v.index().map_or(0.0, |i| adj[i]))
        .collect()
}

const BLOCK: usize = 8;

/// Gradient of `f` at `theta` by dense forward mode, `BLOCK` directions per
/// pass. Intended for small parameter vectors and for cross-checking
/// [`nested_adjoint`].
pub fn dense_forward_gradient<F: ThetaFn>(f: &F, theta: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let mut grad = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let lifted: Vec<Dual<f64, BLOCK>> = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if i >= start && i < start + BLOCK {
                    Dual::variable(t, i - start)
                } else {
                    Dual::constant(t)
                }
            })
            .collect();
        let out = f.eval(&lifted);
        for k in 0..BLOCK.min(n - start) {
            grad[start + k] = out.d[k];
        }
        start += BLOCK;
    }
    grad
}
