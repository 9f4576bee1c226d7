use proptest::prelude::*;
use sdfwarp::diagnostics::{circle_scene, warp_at};
use sdfwarp::optimize::checkpoint::{theta_from_bytes, theta_to_bytes};
use sdfwarp::render::RenderContext;
use sdfwarp::scene::{Material, ParamVector, Scene, SdfExpr};
use sdfwarp::warp::{harmonic_weight, quadrature_intervals, topk_weights, TopK, WarpConfig};

fn flat() -> Material {
    Material::flat([0.9; 3], [0.1; 3])
}

/// Smooth union of a sphere and a rotated, scaled box, intersected with a
/// half space: exercises every differentiable node type.
fn composite(p: &[f64; 9]) -> Scene {
    let mut v = ParamVector::new();
    let c = v.push_block("center", &[p[0], p[1], p[2]]).unwrap();
    let r = v.push_scalar("radius", p[3]).unwrap();
    let bc = v.push_block("box_center", &[0.0, 0.0, 0.0]).unwrap();
    let half = v.push_block("half", &[p[4], 0.3, 0.25]).unwrap();
    let tr = v.push_block("shift", &[p[5], -0.1, 0.05]).unwrap();
    let sc = v.push_scalar("scale", p[6]).unwrap();
    let k = v.push_scalar("blend", p[7]).unwrap();
    let off = v.push_scalar("offset", p[8]).unwrap();
    let (s, co) = (0.3f64.sin(), 0.3f64.cos());
    let sdf = SdfExpr::Intersection(vec![
        SdfExpr::SmoothUnion {
            children: vec![
                SdfExpr::Sphere {
                    center: [c, c + 1, c + 2],
                    radius: r,
                },
                SdfExpr::Transform {
                    child: Box::new(SdfExpr::Box {
                        center: [bc, bc + 1, bc + 2],
                        half: [half, half + 1, half + 2],
                    }),
                    translation: [tr, tr + 1, tr + 2],
                    scale: sc,
                    rotation: [[co, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, co]],
                },
            ],
            k,
        },
        SdfExpr::Plane {
            normal: [0.0, 1.0, 0.0],
            offset: off,
        },
    ]);
    Scene::new(sdf, v, flat(), 2.0).unwrap()
}

fn params() -> impl Strategy<Value = [f64; 9]> {
    (
        prop::array::uniform3(-0.2..0.2f64),
        0.3..0.6f64,
        0.2..0.4f64,
        -0.3..0.3f64,
        0.7..1.3f64,
        0.05..0.2f64,
        0.2..0.6f64,
    )
        .prop_map(|(c, r, hx, t, s, k, o)| [c[0], c[1], c[2], r, hx, t, s, k, o])
}

fn point() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-1.2..1.2f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn topk_keeps_at_most_k_minus_one_positive(wq in prop::collection::vec(0.0..10.0f64, 1..40), k in 2usize..20) {
        let out = topk_weights(&wq, TopK::K(k));
        prop_assert!(out.iter().all(|&w| w >= 0.0));
        prop_assert!(out.iter().filter(|&&w| w > 0.0).count() <= k - 1);
        // Every kept entry dominates every dropped one.
        let kept_min = wq.iter().zip(&out).filter(|(_, &o)| o > 0.0).map(|(w, _)| *w).fold(f64::INFINITY, f64::min);
        let dropped_max = wq.iter().zip(&out).filter(|(_, &o)| o == 0.0).map(|(w, _)| *w).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= dropped_max);
        prop_assert_eq!(topk_weights(&wq, TopK::All), wq);
    }

    #[test]
    fn quadrature_intervals_cover_the_trajectory(mut t in prop::collection::vec(0.0..50.0f64, 2..60)) {
        t.sort_by(f64::total_cmp);
        let d = quadrature_intervals(&t);
        let total: f64 = d.iter().sum();
        prop_assert!((total - (t[t.len() - 1] - t[0])).abs() < 1e-9);
        prop_assert!(d.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn harmonic_weight_decreases_with_score(a in 0.0..10.0f64, b in 0.0..10.0f64, gamma in 2.1..8.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(harmonic_weight(lo, gamma, 1e-6) >= harmonic_weight(hi, gamma, 1e-6));
    }

    #[test]
    fn normalized_weights_sum_to_one(angle in 0.0..std::f64::consts::TAU, dist in 1e-3..0.3f64, k in prop_oneof![Just(TopK::All), (2usize..20).prop_map(TopK::K)]) {
        let (scene, cam) = circle_scene(0.5, 32, 0.9, 0.1).unwrap();
        let ctx = RenderContext::new(&scene, scene.theta(), &cam);
        let cfg = WarpConfig::new(4.0, 0.1, k).unwrap();
        let r = 0.5 + dist;
        let ev = warp_at(&ctx, &cfg, [r * angle.cos(), r * angle.sin()]).unwrap();
        prop_assume!(!ev.fallback);
        let sum: f64 = ev.weights.iter().map(|w| w.omega).sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(ev.weights.iter().all(|w| w.omega >= 0.0));
    }

    #[test]
    fn theta_blob_round_trips(theta in prop::collection::vec(prop::num::f64::NORMAL, 0..64)) {
        prop_assert_eq!(theta_from_bytes(&theta_to_bytes(&theta)).unwrap(), theta);
    }

    #[test]
    fn scene_json_round_trips(p in params(), x in point()) {
        let s = composite(&p);
        let text = s.to_json_string();
        let back = Scene::from_json_str(&text).unwrap();
        prop_assert_eq!(back.theta(), s.theta());
        prop_assert_eq!(back.eval(back.theta(), x), s.eval(s.theta(), x));
        prop_assert_eq!(back.to_json_string(), text);
    }

    #[test]
    fn adjoint_matches_directional_fd(p in p_and_dir(), x in point()) {
        let (p, v) = p;
        let s = composite(&p);
        let th = s.theta().to_vec();
        let mut adj = vec![0.0; th.len()];
        s.accumulate_param_adjoint(&th, x, 1.0, &mut adj);
        let dot: f64 = adj.iter().zip(&v).map(|(a, b)| a * b).sum();
        let h = 1e-5;
        let at = |sgn: f64| -> Vec<f64> { th.iter().zip(&v).map(|(t, d)| t + sgn * h * d).collect() };
        let fd = (s.eval(&at(1.0), x) - s.eval(&at(-1.0), x)) / (2.0 * h);
        let (fwd, _) = s.param_directional(&th, &v, x);
        let scale = dot.abs().max(fd.abs()).max(1e-2);
        prop_assert!((dot - fd).abs() <= 1e-4 * scale, "adjoint {} fd {}", dot, fd);
        prop_assert!((fwd - dot).abs() <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn spatial_gradient_matches_fd(p in params(), x in point()) {
        let s = composite(&p);
        let th = s.theta();
        let (_, g) = s.value_grad(th, x);
        let h = 1e-6;
        for a in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (s.eval(th, xp) - s.eval(th, xm)) / (2.0 * h);
            prop_assert!((fd - g[a]).abs() < 1e-4 * g[a].abs().max(1.0), "axis {}: {} vs {}", a, g[a], fd);
        }
    }

    #[test]
    fn primitives_match_closed_forms(c in prop::array::uniform3(-0.5..0.5f64), r in 0.1..1.0f64, x in point(), h in prop::array::uniform3(0.1..0.8f64)) {
        let s = Scene::sphere(c, r, flat(), 2.0).unwrap();
        let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt() - r;
        prop_assert!((s.eval(s.theta(), x) - d).abs() < 1e-14);

        let t = Scene::torus(c, r + 0.3, 0.2, flat(), 2.0).unwrap();
        let q = [x[0] - c[0], x[1] - c[1], x[2] - c[2]];
        let ring = (q[0] * q[0] + q[2] * q[2]).sqrt() - (r + 0.3);
        let d = (ring * ring + q[1] * q[1]).sqrt() - 0.2;
        prop_assert!((t.eval(t.theta(), x) - d).abs() < 1e-14);

        let mut v = ParamVector::new();
        let bc = v.push_block("center", &c).unwrap();
        let bh = v.push_block("half", &h).unwrap();
        let b = Scene::new(SdfExpr::Box { center: [bc, bc + 1, bc + 2], half: [bh, bh + 1, bh + 2] }, v, flat(), 2.0).unwrap();
        let qd: Vec<f64> = (0..3).map(|i| (x[i] - c[i]).abs() - h[i]).collect();
        let outside = qd.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
        let inside = qd.iter().cloned().fold(f64::NEG_INFINITY, f64::max).min(0.0);
        prop_assert!((b.eval(b.theta(), x) - (outside + inside)).abs() < 1e-14);
    }

    #[test]
    fn sign_flips_across_the_surface(c in prop::array::uniform3(-0.3..0.3f64), r in 0.2..0.8f64, dir in prop::array::uniform3(-1.0..1.0f64)) {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        prop_assume!(n > 1e-3);
        let s = Scene::sphere(c, r, flat(), 2.0).unwrap();
        let at = |off: f64| [0, 1, 2].map(|i| c[i] + dir[i] / n * (r + off));
        prop_assert!(s.eval(s.theta(), at(1e-6)) > 0.0);
        prop_assert!(s.eval(s.theta(), at(-1e-6)) < 0.0);
        let t = Scene::torus(c, r + 0.3, 0.15, flat(), 2.0).unwrap();
        let ring = [c[0] + (r + 0.3), c[1], c[2]];
        prop_assert!(t.eval(t.theta(), [ring[0], ring[1] + 0.15 + 1e-6, ring[2]]) > 0.0);
        prop_assert!(t.eval(t.theta(), [ring[0], ring[1] + 0.15 - 1e-6, ring[2]]) < 0.0);
    }
}

fn p_and_dir() -> impl Strategy<Value = ([f64; 9], Vec<f64>)> {
    (params(), prop::collection::vec(-1.0..1.0f64, 16))
}

#[test]
fn zero_seed_gives_zero_adjoint() {
    let s = composite(&[0.0, 0.0, 0.0, 0.4, 0.3, 0.0, 1.0, 0.1, 0.4]);
    let mut out = vec![0.0; s.theta().len()];
    s.accumulate_seed(s.theta(), [0.2, 0.1, 0.3], 0.0, [0.0; 3], &mut out);
    assert!(out.iter().all(|&g| g == 0.0));
}

#[test]
fn adjoint_is_linear_in_the_seed() {
    let s = composite(&[0.05, -0.1, 0.0, 0.4, 0.3, 0.1, 1.1, 0.1, 0.4]);
    let th = s.theta();
    let x = [0.3, 0.05, -0.2];
    let mut a = vec![0.0; th.len()];
    let mut b = vec![0.0; th.len()];
    let mut ab = vec![0.0; th.len()];
    s.accumulate_seed(th, x, 1.0, [0.0; 3], &mut a);
    s.accumulate_seed(th, x, 0.0, [0.2, -0.5, 0.7], &mut b);
    s.accumulate_seed(th, x, 1.0, [0.2, -0.5, 0.7], &mut ab);
    for i in 0..th.len() {
        assert!((a[i] + b[i] - ab[i]).abs() < 1e-12);
    }
}
