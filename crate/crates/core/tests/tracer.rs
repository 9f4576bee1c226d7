use sdfwarp::render::{Camera, CameraSpec, RenderContext};
use sdfwarp::scene::{Material, MlpSdf, Scene};
use sdfwarp::tracer::{intersection_t_derivative, sphere_trace, Ray, Termination, TraceOptions};

fn flat() -> Material {
    Material::flat([0.9; 3], [0.1; 3])
}

fn pinhole(eye: [f64; 3]) -> Camera {
    Camera::new(CameraSpec::Pinhole {
        eye,
        look_at: [0.0; 3],
        up: [0.0, 1.0, 0.0],
        fov_deg: 40.0,
        width: 16,
        height: 16,
    })
    .unwrap()
}

fn retrace_t(scene: &Scene, theta: &[f64], ray: &Ray, opts: &TraceOptions) -> f64 {
    let tr = sphere_trace(scene, theta, ray, opts).unwrap();
    assert!(tr.hit, "perturbed ray must still hit");
    tr.t_star
}

/// Compare the implicit-function derivative of the hit distance against a
/// central difference of two fresh traces, for every parameter.
fn check_ift(scene: &Scene, camera: &Camera, screens: &[[f64; 2]], h: f64, tol: f64) {
    let mut ctx = RenderContext::new(scene, scene.theta(), camera);
    ctx.trace.tau_hit = 1e-10;
    ctx.trace.max_steps = 4096;
    let theta = scene.theta().to_vec();
    for &u in screens {
        let (ray, tr) = ctx.trace(u).unwrap();
        assert!(tr.hit);
        let mut grad = vec![0.0; theta.len()];
        intersection_t_derivative(scene, &theta, tr.hit_point().unwrap(), ray.dir, 1.0, &mut grad).unwrap();
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1.0);
        for j in 0..theta.len() {
            let mut tp = theta.clone();
            let mut tm = theta.clone();
            tp[j] += h;
            tm[j] -= h;
            let fd = (retrace_t(scene, &tp, &ray, &ctx.trace) - retrace_t(scene, &tm, &ray, &ctx.trace)) / (2.0 * h);
            assert!(
                (fd - grad[j]).abs() <= tol * scale,
                "u {u:?} param {j}: ift {} fd {fd}",
                grad[j]
            );
        }
    }
}

#[test]
fn sphere_hit_distance_derivative_matches_retrace() {
    let s = Scene::sphere([0.1, -0.2, 0.05], 0.7, flat(), 1.0).unwrap();
    let cam = pinhole([0.4, 0.3, -3.0]);
    check_ift(&s, &cam, &[[0.0, 0.0], [0.05, -0.08], [-0.1, 0.06]], 1e-6, 1e-6);
}

#[test]
fn sphere_head_on_center_and_radius() {
    let s = Scene::sphere([0.0; 3], 1.0, flat(), 1.0).unwrap();
    let ray = Ray {
        origin: [0.0, 0.0, -3.0],
        dir: [0.0, 0.0, 1.0],
        u: [0.0; 2],
    };
    let tr = sphere_trace(&s, s.theta(), &ray, &TraceOptions::for_scene(&s, 3.0)).unwrap();
    assert!((tr.t_star - 2.0).abs() < 1e-5);
    let mut g = vec![0.0; 4];
    intersection_t_derivative(&s, s.theta(), ray.at(tr.t_star), ray.dir, 1.0, &mut g).unwrap();
    // Moving the sphere away along the ray pushes the hit back; growing it pulls the hit in.
    assert!((g[2] - 1.0).abs() < 1e-4);
    assert!((g[3] + 1.0).abs() < 1e-4);
}

#[test]
fn torus_hit_distance_derivative_matches_retrace() {
    let s = Scene::torus([0.0; 3], 1.0, 0.35, flat(), 1.5).unwrap();
    let cam = pinhole([0.0, 2.6, -2.6]);
    check_ift(&s, &cam, &[[0.0, 0.2], [0.25, 0.1], [-0.2, -0.15]], 1e-6, 1e-5);
}

#[test]
fn mlp_hit_distance_derivative_matches_retrace() {
    let s = Scene::mlp(MlpSdf::desk_scale(), 3, 0.5, flat(), 1.0).unwrap();
    let cam = pinhole([0.0, 0.0, -3.0]);
    let mut ctx = RenderContext::new(&s, s.theta(), &cam);
    ctx.trace.tau_hit = 1e-10;
    ctx.trace.max_steps = 4096;
    let theta = s.theta().to_vec();
    let (ray, tr) = ctx.trace([0.03, -0.02]).unwrap();
    assert!(tr.hit);
    let mut grad = vec![0.0; theta.len()];
    intersection_t_derivative(&s, &theta, tr.hit_point().unwrap(), ray.dir, 1.0, &mut grad).unwrap();
    // A spread of parameters: output bias, and the largest-magnitude entries.
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    let mut picks: Vec<usize> = order[..6].to_vec();
    picks.push(theta.len() - 1);
    let h = 1e-6;
    for j in picks {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        let fd = (retrace_t(&s, &tp, &ray, &ctx.trace) - retrace_t(&s, &tm, &ray, &ctx.trace)) / (2.0 * h);
        let rel = (fd - grad[j]).abs() / grad[j].abs().max(1e-3);
        assert!(rel < 1e-3, "param {j}: ift {} fd {fd}", grad[j]);
    }
}

#[test]
fn trajectories_are_monotone_and_never_overshoot() {
    let s = Scene::torus([0.0; 3], 1.0, 0.35, flat(), 1.5).unwrap();
    let cam = pinhole([0.0, 2.6, -2.6]);
    let ctx = RenderContext::new(&s, s.theta(), &cam);
    for i in 0..400 {
        let u = [(i % 20) as f64 * 0.04 - 0.4, (i / 20) as f64 * 0.04 - 0.4];
        let (_, tr) = ctx.trace(u).unwrap();
        assert!(tr.points.windows(2).all(|p| p[1].t >= p[0].t));
        assert!(tr.points.iter().all(|p| p.f >= -ctx.trace.tau_hit));
        if tr.hit {
            assert_eq!(tr.termination, Termination::Converged);
            assert!(tr.points.last().unwrap().f.abs() <= ctx.trace.tau_hit);
        }
    }
}

#[test]
fn nearby_rays_have_nearby_trajectories() {
    let s = Scene::sphere([0.0; 3], 0.6, flat(), 1.0).unwrap();
    let cam = pinhole([0.0, 0.0, -3.0]);
    let ctx = RenderContext::new(&s, s.theta(), &cam);
    for u in [[0.05, 0.02], [0.12, -0.03], [0.3, 0.1]] {
        let du = 1e-7;
        let (_, a) = ctx.trace(u).unwrap();
        let (_, b) = ctx.trace([u[0] + du, u[1]]).unwrap();
        if a.points.len() != b.points.len() {
            continue;
        }
        let worst = a
            .points
            .iter()
            .zip(&b.points)
            .map(|(p, q)| (p.t - q.t).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e3 * du, "trajectory moved {worst} for du {du}");
    }
}
