//! Small neural SDF: positional encoding, softplus MLP with an input skip,
//! and the geometric initialization that starts it near a sphere.

use super::params::Theta;
use crate::ad::Scalar;
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Architecture of an MLP signed distance field. Weights live in the scene's
/// parameter vector starting at `offset`, layer by layer as row-major `W`
/// followed by `b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSdf {
    /// Units per hidden layer.
    pub hidden: usize,
    /// Number of hidden layers.
    pub layers: usize,
    /// Positional encoding levels (frequencies 2^0 .. 2^(L-1)).
    pub pe_levels: usize,
    /// Linear-layer indices whose input is concatenated with the encoded input.
    pub skip: Vec<usize>,
    /// Softplus sharpness.
    pub beta: f64,
    #[serde(default)]
    pub offset: usize,
}

impl MlpSdf {
    /// The desk-scale default: 4 x 64, 6 encoding levels, skip into layer 2.
    pub fn desk_scale() -> Self {
        Self {
            hidden: 64,
            layers: 4,
            pe_levels: 6,
            skip: vec![2],
            beta: 100.0,
            offset: 0,
        }
    }

    /// The width used for the full-size reference architecture.
    pub fn reference_width() -> usize {
        256
    }

    pub fn input_dim(&self) -> usize {
        3 + 6 * self.pe_levels
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(std::iter::repeat_n(self.hidden, self.layers));
        d.push(1);
        d
    }

    /// `(in, out)` for every linear layer, accounting for skip concatenation.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let dims = self.dims();
        (0..dims.len() - 1)
            .map(|l| {
                let out = if self.skip.contains(&(l + 1)) {
                    dims[l + 1] - dims[0]
                } else {
                    dims[l + 1]
                };
                (dims[l], out)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(Error::config("mlp needs at least one hidden layer"));
        }
        if !(self.beta > 0.0) {
            return Err(Error::config("mlp softplus beta must be positive"));
        }
        for &s in &self.skip {
            if s == 0 || s > self.layers {
                return Err(Error::config(format!("mlp skip layer {s} out of range")));
            }
            if self.hidden <= self.input_dim() {
                return Err(Error::config(
                    "mlp hidden width must exceed the encoded input width when using skips",
                ));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }

    /// `(weight_start, bias_start)` of each layer, relative to `offset`.
    fn layer_offsets(&self) -> Vec<(usize, usize)> {
        let mut at = 0;
        self.layer_shapes()
            .iter()
            .map(|&(i, o)| {
                let w = at;
                let b = w + i * o;
                at = b + o;
                (w, b)
            })
            .collect()
    }

    /// Range of parameter slots that hold the weights acting on the encoded
    /// (non-raw) part of the input: the first layer's columns 3.. and, for
    /// each skip layer, the encoded tail of its concatenated input.
    pub fn encoding_weight_slots(&self) -> Vec<usize> {
        let shapes = self.layer_shapes();
        let offs = self.layer_offsets();
        let enc = self.input_dim() - 3;
        let mut slots = Vec::new();
        for (l, (&(inp, out), &(w, _))) in shapes.iter().zip(&offs).enumerate() {
            let cols: Vec<usize> = if l == 0 {
                (3..inp).collect()
            } else if self.skip.contains(&l) {
                (inp - enc..inp).collect()
            } else {
                continue;
            };
            for o in 0..out {
                for &c in &cols {
                    slots.push(self.offset + w + o * inp + c);
                }
            }
        }
        slots
    }

    /// Index (relative to the scene vector) of the output bias.
    pub fn output_bias_slot(&self) -> usize {
        let offs = self.layer_offsets();
        self.offset + offs.last().expect("mlp has layers").1
    }

    pub fn encode<S: Scalar>(&self, x: [S; 3]) -> Vec<S> {
        let mut e = Vec::with_capacity(self.input_dim());
        e.extend_from_slice(&x);
        let mut freq = 1.0;
        for _ in 0..self.pe_levels {
            for xi in x {
                e.push((xi * freq).sin());
            }
            for xi in x {
                e.push((xi * freq).cos());
            }
            freq *= 2.0;
        }
        e
    }

    fn linear<S: Scalar>(
        theta: &Theta<'_, S>,
        w: usize,
        b: usize,
        input: &[S],
        out_dim: usize,
    ) -> Vec<S> {
        let n = input.len();
        let mut out = Vec::with_capacity(out_dim);
        match theta {
            Theta::Plain(p) => {
                for o in 0..out_dim {
                    let row = &p[w + o * n..w + (o + 1) * n];
                    let mut acc = S::cst(p[b + o]);
                    for (a, &wi) in input.iter().zip(row) {
                        if wi != 0.0 {
                            acc += *a * wi;
                        }
                    }
                    out.push(acc);
                }
            }
            Theta::Lifted(p) => {
                for o in 0..out_dim {
                    let row = &p[w + o * n..w + (o + 1) * n];
                    let mut acc = p[b + o];
                    for (a, wi) in input.iter().zip(row) {
                        acc += *a * *wi;
                    }
                    out.push(acc);
                }
            }
        }
        out
    }

    pub fn eval<S: Scalar>(&self, x: [S; 3], theta: &Theta<'_, S>) -> S {
        let enc = self.encode(x);
        let shapes = self.layer_shapes();
        let offs = self.layer_offsets();
        let last = shapes.len() - 1;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut h = enc.clone();
        for (l, (&(_, out), &(w, b))) in shapes.iter().zip(&offs).enumerate() {
            if l > 0 && self.skip.contains(&l) {
                h.extend_from_slice(&enc);
                for v in h.iter_mut() {
                    *v = *v * inv_sqrt2;
                }
            }
            let z = Self::linear(theta, self.offset + w, self.offset + b, &h, out);
            h = if l == last {
                z
            } else {
                z.into_iter().map(|zi| zi.softplus(self.beta)).collect()
            };
        }
        h[0]
    }

    /// Plain `f64` forward pass carrying `N` spatial tangents: returns
    /// `f(x)` and `grad f(x) . dirs[n]`. Same math as [`Self::eval`] but with
    /// channel-major buffers so the inner products vectorize.
    pub fn forward_tangents<const N: usize>(&self, x: [f64; 3], theta: &[f64], dirs: [[f64; 3]; N]) -> (f64, [f64; N]) {
        let shapes = self.layer_shapes();
        let offs = self.layer_offsets();
        let last = shapes.len() - 1;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let ch = N + 1;
        let ein = self.input_dim();
        // channel 0 holds values, channel n + 1 the tangent along dirs[n]
        let mut enc = vec![0.0; ch * ein];
        for k in 0..3 {
            enc[k] = x[k];
            for n in 0..N {
                enc[(n + 1) * ein + k] = dirs[n][k];
            }
        }
        let mut freq = 1.0;
        let mut at = 3;
        for _ in 0..self.pe_levels {
            for k in 0..3 {
                let (sn, cs) = (x[k] * freq).sin_cos();
                enc[at + k] = sn;
                enc[at + 3 + k] = cs;
                for n in 0..N {
                    enc[(n + 1) * ein + at + k] = cs * freq * dirs[n][k];
                    enc[(n + 1) * ein + at + 3 + k] = -sn * freq * dirs[n][k];
                }
            }
            at += 6;
            freq *= 2.0;
        }
        let mut h = enc.clone();
        let mut hin = ein;
        for (l, (&(inp, outd), &(w, b))) in shapes.iter().zip(&offs).enumerate() {
            if l > 0 && self.skip.contains(&l) {
                let mut joined = vec![0.0; ch * inp];
                for c in 0..ch {
                    for i in 0..hin {
                        joined[c * inp + i] = h[c * hin + i] * inv_sqrt2;
                    }
                    for i in 0..ein {
                        joined[c * inp + hin + i] = enc[c * ein + i] * inv_sqrt2;
                    }
                }
                h = joined;
            }
            debug_assert_eq!(h.len(), ch * inp);
            let wb = self.offset + w;
            let bb = self.offset + b;
            let mut z = vec![0.0; ch * outd];
            for o in 0..outd {
                let row = &theta[wb + o * inp..wb + (o + 1) * inp];
                for c in 0..ch {
                    z[c * outd + o] = dot(row, &h[c * inp..(c + 1) * inp]);
                }
                z[o] += theta[bb + o];
            }
            if l != last {
                for o in 0..outd {
                    let (sp, s) = softplus_sigmoid(self.beta * z[o]);
                    z[o] = sp / self.beta;
                    for c in 1..ch {
                        z[c * outd + o] *= s;
                    }
                }
            }
            h = z;
            hin = outd;
        }
        (h[0], std::array::from_fn(|n| h[n + 1]))
    }

    /// Parameter gradient of `alpha * f(x) + beta . grad_x f(x)`, added into
    /// `out` (the full scene gradient buffer).
    ///
    /// Forward pass carries one spatial tangent along `beta`; the backward
    /// pass differentiates both the value and that tangent.
    pub fn accumulate_adjoint(
        &self,
        x: [f64; 3],
        theta: &[f64],
        alpha: f64,
        beta: [f64; 3],
        out: &mut [f64],
    ) {
        let shapes = self.layer_shapes();
        let offs = self.layer_offsets();
        let last = shapes.len() - 1;
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let bsharp = self.beta;

        // encoded input and its tangent along beta
        let mut enc = Vec::with_capacity(self.input_dim());
        let mut denc = Vec::with_capacity(self.input_dim());
        enc.extend_from_slice(&x);
        denc.extend_from_slice(&beta);
        let mut freq = 1.0;
        for _ in 0..self.pe_levels {
            for k in 0..3 {
                enc.push((x[k] * freq).sin());
                denc.push((x[k] * freq).cos() * freq * beta[k]);
            }
            for k in 0..3 {
                enc.push((x[k] * freq).cos());
                denc.push(-(x[k] * freq).sin() * freq * beta[k]);
            }
            freq *= 2.0;
        }

        // forward, keeping layer inputs and pre-activations
        let mut inputs: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(shapes.len());
        let mut pre: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(shapes.len());
        let (mut h, mut dh) = (enc.clone(), denc.clone());
        for (l, (&(inp, outd), &(w, b))) in shapes.iter().zip(&offs).enumerate() {
            if l > 0 && self.skip.contains(&l) {
                h.extend_from_slice(&enc);
                dh.extend_from_slice(&denc);
                h.iter_mut().for_each(|v| *v *= inv_sqrt2);
                dh.iter_mut().for_each(|v| *v *= inv_sqrt2);
            }
            let wb = self.offset + w;
            let bb = self.offset + b;
            let mut z = vec![0.0; outd];
            let mut dz = vec![0.0; outd];
            for o in 0..outd {
                let row = &theta[wb + o * inp..wb + (o + 1) * inp];
                z[o] = theta[bb + o] + dot(row, &h);
                dz[o] = dot(row, &dh);
            }
            inputs.push((h, dh));
            if l == last {
                h = z.clone();
                dh = dz.clone();
            } else {
                h = z
                    .iter()
                    .map(|&zi| softplus_f64(zi, bsharp))
                    .collect();
                dh = z
                    .iter()
                    .zip(&dz)
                    .map(|(&zi, &dzi)| sigmoid(bsharp * zi) * dzi)
                    .collect();
            }
            pre.push((z, dz));
        }

        // backward: seeds on output value and output tangent
        let mut gz = vec![alpha];
        let mut gdz = vec![1.0];
        for l in (0..shapes.len()).rev() {
            let (inp, outd) = shapes[l];
            let (w, b) = offs[l];
            let wb = self.offset + w;
            let bb = self.offset + b;
            let (hin, dhin) = &inputs[l];
            for o in 0..outd {
                out[bb + o] += gz[o];
                let row = &mut out[wb + o * inp..wb + (o + 1) * inp];
                for i in 0..inp {
                    row[i] += gz[o] * hin[i] + gdz[o] * dhin[i];
                }
            }
            if l == 0 {
                break;
            }
            // adjoint of this layer's input
            let mut gh = vec![0.0; inp];
            let mut gdh = vec![0.0; inp];
            for o in 0..outd {
                let row = &theta[wb + o * inp..wb + (o + 1) * inp];
                for i in 0..inp {
                    gh[i] += row[i] * gz[o];
                    gdh[i] += row[i] * gdz[o];
                }
            }
            if self.skip.contains(&l) {
                let prev = inp - enc.len();
                gh.truncate(prev);
                gdh.truncate(prev);
                gh.iter_mut().for_each(|v| *v *= inv_sqrt2);
                gdh.iter_mut().for_each(|v| *v *= inv_sqrt2);
            }
            // through the softplus of layer l-1
            let (z, dz) = &pre[l - 1];
            let mut nz = vec![0.0; z.len()];
            let mut ndz = vec![0.0; z.len()];
            for j in 0..z.len() {
                let s = sigmoid(bsharp * z[j]);
                let s2 = bsharp * s * (1.0 - s);
                ndz[j] = s * gdh[j];
                nz[j] = s * gh[j] + s2 * dz[j] * gdh[j];
            }
            gz = nz;
            gdz = ndz;
        }
    }

    /// Geometric initialization: the network starts close to `|x| - r0`,
    /// with weights on encoded inputs set to zero.
    pub fn geometric_init(&self, seed: u64, r0: f64) -> Result<Vec<f64>> {
        if !(r0 > 0.0) {
            return Err(Error::config("geometric init radius must be positive"));
        }
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = self.layer_shapes();
        let last = shapes.len() - 1;
        let enc = self.input_dim() - 3;
        let mut p = Vec::with_capacity(self.param_count());
        for (l, &(inp, out)) in shapes.iter().enumerate() {
            if l == last {
                let mean = std::f64::consts::PI.sqrt() / (inp as f64).sqrt();
                let dist = Normal::new(mean, 1e-4).expect("valid normal");
                for _ in 0..inp * out {
                    p.push(dist.sample(&mut rng));
                }
                p.extend(std::iter::repeat_n(-r0, out));
                continue;
            }
            let dist = Normal::new(0.0, 2f64.sqrt() / (out as f64).sqrt()).expect("valid normal");
            for _ in 0..out {
                for c in 0..inp {
                    let zeroed = (l == 0 && c >= 3) || (self.skip.contains(&l) && c >= inp - enc);
                    let w = dist.sample(&mut rng);
                    p.push(if zeroed { 0.0 } else { w });
                }
            }
            p.extend(std::iter::repeat_n(0.0, out));
        }
        Ok(p)
    }
}

/// Inner product; uses AVX2/FMA when the CPU has them.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were just detected.
            return unsafe { dot_fma(a, b) };
        }
    }
    dot_lanes!(a, b, |x: f64, y: f64, acc: f64| acc + x * y)
}

// eight independent partial sums so the loop maps onto vector lanes
macro_rules! dot_lanes {
    ($a:expr, $b:expr, $madd:expr) => {{
        let n = $a.len().min($b.len());
        let (a, b) = (&$a[..n], &$b[..n]);
        let madd = $madd;
        let mut acc = [0.0f64; 8];
        let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
        let (ra, rb) = (ca.remainder(), cb.remainder());
        for (x, y) in ca.zip(cb) {
            for k in 0..8 {
                acc[k] = madd(x[k], y[k], acc[k]);
            }
        }
        let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
        for (x, y) in ra.iter().zip(rb) {
            s = madd(*x, *y, s);
        }
        s
    }};
}
use dot_lanes;

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_fma(a: &[f64], b: &[f64]) -> f64 {
    use std::arch::x86_64::*;
    let n = a.len().min(b.len());
    let (pa, pb) = (a.as_ptr(), b.as_ptr());
    let mut acc0 = _mm256_setzero_pd();
    let mut acc1 = _mm256_setzero_pd();
    let mut i = 0;
    // SAFETY: every load reads lanes i..i+8 (or i..i+4) with i + 8 <= n.
    while i + 8 <= n {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i)), _mm256_loadu_pd(pb.add(i)), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(pa.add(i + 4)), _mm256_loadu_pd(pb.add(i + 4)), acc1);
        i += 8;
    }
    let mut lanes = [0.0f64; 4];
    _mm256_storeu_pd(lanes.as_mut_ptr(), _mm256_add_pd(acc0, acc1));
    let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    while i < n {
        s = a[i].mul_add(b[i], s);
        i += 1;
    }
    s
}

/// `(ln(1 + e^t), 1 / (1 + e^-t))`. Beyond `|t| > 37` the dropped terms are
/// below one ulp of the result.
#[inline]
fn softplus_sigmoid(t: f64) -> (f64, f64) {
    if t > 37.0 {
        (t, 1.0)
    } else if t < -37.0 {
        let e = t.exp();
        (e, e)
    } else {
        let e = (-t.abs()).exp();
        let s = if t >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        (t.max(0.0) + e.ln_1p(), s)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus_f64(z: f64, beta: f64) -> f64 {
    let t = beta * z;
    if t > 0.0 {
        (t + (-t).exp().ln_1p()) / beta
    } else {
        t.exp().ln_1p() / beta
    }
}
