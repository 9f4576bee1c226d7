//! Recover a flat-shaded sphere's center and radius from eight silhouettes.
//!
//! `cargo run --release --example fit_sphere -- [iterations] [naive]`

use sdfwarp::gradient::Estimator;
use sdfwarp::optimize::{fit, Dataset, OptimConfig};
use sdfwarp::render::{Camera, CameraSpec};
use sdfwarp::scene::{Material, Scene};

fn main() -> sdfwarp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(2000);
    let naive = args.next().is_some_and(|s| s == "naive");

    let mat = Material::flat([0.9; 3], [0.1; 3]);
    let truth = Scene::sphere([0.1, -0.1, 0.05], 0.6, mat, 1.0)?;
    let mut cameras = Vec::new();
    for i in 0..8 {
        let s = |b: usize| if i >> b & 1 == 1 { 1.0 } else { -1.0 };
        let dir = [s(0), s(1), s(2)].map(|v: f64| v / 3f64.sqrt());
        cameras.push(Camera::new(CameraSpec::Pinhole {
            eye: dir.map(|v| 3.0 * v),
            look_at: [0.0; 3],
            up: [0.0, 1.0, 0.0],
            fov_deg: 40.0,
            width: 64,
            height: 64,
        })?);
    }
    let data = Dataset::synthesize(&truth, &cameras, 64, 3, 1)?;

    let r = 0.6;
    let mut init = truth.clone();
    let off = 0.3 * r;
    let th0: Vec<f64> = truth.theta().iter().zip([1.0, -1.0, 1.0, 1.0]).map(|(t, s)| t + s * off).collect();
    init.params.set_values(&th0)?;

    let mut cfg = OptimConfig::for_scene(&init, iterations);
    cfg.adam.final_lr_fraction = 0.02;
    cfg.seed = 5;
    if naive {
        cfg.estimator = Estimator::Naive;
    }
    let t0 = std::time::Instant::now();
    let res = fit(&init, &data, &cfg, None, |row, _| {
        if row.iteration % 100 == 0 {
            println!("it {:5} level {} loss {:.3e} |g| {:.3e} active {}", row.iteration, row.level, row.loss, row.grad_norm, row.active_pixels);
        }
    })?;
    let err = res.theta.iter().zip(truth.theta()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("theta {:?}", res.theta);
    println!("max parameter error {err:.3e} in {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
