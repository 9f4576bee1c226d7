//! Counter-based random streams and stratified pixel samples.
//!
//! Every random draw is keyed by (seed, stream, iteration, item) so results
//! do not depend on evaluation order or thread count.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent random streams. The primal pixel estimate and the gradient
/// samples use different streams so they are uncorrelated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Primal = 1,
    Interior = 2,
    Edge = 3,
    Eikonal = 4,
    Batch = 5,
    Misc = 6,
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn keyed_rng(seed: u64, stream: Stream, iteration: u64, item: u64) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    h = splitmix(h ^ stream as u64);
    h = splitmix(h ^ iteration);
    h = splitmix(h ^ item);
    ChaCha8Rng::seed_from_u64(h)
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn open01(rng: &mut impl Rng) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// `n` stratified points in the open unit square: a jittered grid when `n`
/// is a perfect square, Latin hypercube otherwise.
pub fn stratified_2d(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let m = (n as f64).sqrt().round() as usize;
    if m * m == n {
        let inv = 1.0 / m as f64;
        let mut out = Vec::with_capacity(n);
        for j in 0..m {
            for i in 0..m {
                out.push([(i as f64 + open01(rng)) * inv, (j as f64 + open01(rng)) * inv]);
            }
        }
        return out;
    }
    let inv = 1.0 / n as f64;
    let mut xs: Vec<f64> = (0..n).map(|i| (i as f64 + open01(rng)) * inv).collect();
    let mut ys: Vec<f64> = (0..n).map(|i| (i as f64 + open01(rng)) * inv).collect();
    xs.shuffle(rng);
    ys.shuffle(rng);
    xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect()
}

/// `n` stratified points in the open unit interval.
pub fn stratified_1d(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let inv = 1.0 / n as f64;
    (0..n).map(|i| (i as f64 + open01(rng)) * inv).collect()
}

/// One side of a pixel box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    /// Outward unit normal in screen coordinates (`u[1]` points up).
    pub fn normal(self) -> [f64; 2] {
        match self {
            Side::Left => [-1.0, 0.0],
            Side::Right => [1.0, 0.0],
            Side::Bottom => [0.0, -1.0],
            Side::Top => [0.0, 1.0],
        }
    }
}

/// Global id of a pixel edge on a `width x height` film, shared by the two
/// pixels adjacent to it. Rows are counted from the top.
pub fn edge_id(width: usize, height: usize, px: usize, py: usize, side: Side) -> u64 {
    let vertical = |line: usize| (py * (width + 1) + line) as u64;
    let horizontal = |line: usize| ((width + 1) * height + line * width + px) as u64;
    match side {
        Side::Left => vertical(px),
        Side::Right => vertical(px + 1),
        Side::Top => horizontal(py),
        Side::Bottom => horizontal(py + 1),
    }
}

/// A sample on a pixel edge: fractional pixel offsets and outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeSample {
    pub offset: [f64; 2],
    pub normal: [f64; 2],
    pub edge: u64,
}

/// `per_edge` stratified samples on each of the four edges of a pixel. The
/// positions along an edge depend only on the edge id, so neighbours evaluate
/// shared edges at identical points with opposite normals.
pub fn edge_samples(
    width: usize,
    height: usize,
    px: usize,
    py: usize,
    per_edge: usize,
    seed: u64,
    iteration: u64,
) -> Vec<EdgeSample> {
    let mut out = Vec::with_capacity(4 * per_edge);
    for side in Side::ALL {
        let edge = edge_id(width, height, px, py, side);
        let mut rng = keyed_rng(seed, Stream::Edge, iteration, edge);
        for s in stratified_1d(per_edge, &mut rng) {
            let offset = match side {
                Side::Left => [0.0, s],
                Side::Right => [1.0, s],
                Side::Bottom => [s, 0.0],
                Side::Top => [s, 1.0],
            };
            out.push(EdgeSample {
                offset,
                normal: side.normal(),
                edge,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_points_cover_strata() {
        let mut rng = keyed_rng(1, Stream::Misc, 0, 0);
        let pts = stratified_2d(16, &mut rng);
        let mut seen = [false; 16];
        for p in &pts {
            assert!(p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0);
            seen[(p[1] * 4.0) as usize * 4 + (p[0] * 4.0) as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
        let lhs = stratified_2d(6, &mut rng);
        let mut cols: Vec<usize> = lhs.iter().map(|p| (p[0] * 6.0) as usize).collect();
        cols.sort();
        assert_eq!(cols, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn keyed_streams_are_reproducible_and_distinct() {
        let a: f64 = keyed_rng(7, Stream::Primal, 3, 11).random();
        let b: f64 = keyed_rng(7, Stream::Primal, 3, 11).random();
        let c: f64 = keyed_rng(7, Stream::Interior, 3, 11).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn shared_edges_match_across_neighbours() {
        let (w, h) = (5, 4);
        let a = edge_samples(w, h, 2, 1, 3, 9, 0);
        let right = edge_samples(w, h, 3, 1, 3, 9, 0);
        let below = edge_samples(w, h, 2, 2, 3, 9, 0);
        let r_of_a: Vec<_> = a.iter().filter(|s| s.normal == [1.0, 0.0]).collect();
        let l_of_b: Vec<_> = right.iter().filter(|s| s.normal == [-1.0, 0.0]).collect();
        for (x, y) in r_of_a.iter().zip(&l_of_b) {
            assert_eq!(x.edge, y.edge);
            assert_eq!(x.offset[1], y.offset[1]);
        }
        let b_of_a: Vec<_> = a.iter().filter(|s| s.normal == [0.0, -1.0]).collect();
        let t_of_c: Vec<_> = below.iter().filter(|s| s.normal == [0.0, 1.0]).collect();
        for (x, y) in b_of_a.iter().zip(&t_of_c) {
            assert_eq!(x.edge, y.edge);
            assert_eq!(x.offset[0], y.offset[0]);
        }
    }

    #[test]
    fn edge_ids_are_unique() {
        let (w, h) = (3, 2);
        let mut ids = std::collections::BTreeSet::new();
        for py in 0..h {
            for px in 0..w {
                for s in Side::ALL {
                    ids.insert(edge_id(w, h, px, py, s));
                }
            }
        }
        assert_eq!(ids.len(), (w + 1) * h + (h + 1) * w);
    }
}
