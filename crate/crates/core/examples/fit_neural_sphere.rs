//! Fit a small neural SDF to the eight-view sphere silhouettes.
//!
//! `cargo run --release --example fit_neural_sphere -- [iterations] [out_dir]`

use rand::{Rng, SeedableRng};
use sdfwarp::ad::vec3;
use sdfwarp::optimize::{checkpoint, fit, write_history, Dataset, OptimConfig};
use sdfwarp::render::{Camera, CameraSpec};
use sdfwarp::scene::{Material, MlpSdf, Scene};

fn main() -> sdfwarp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map(|s| s.parse().expect("iterations")).unwrap_or(OptimConfig::MLP_ITERATIONS);
    let out = args.next().map(std::path::PathBuf::from);

    let mat = Material::flat([0.9; 3], [0.1; 3]);
    let (center, radius) = ([0.1, -0.1, 0.05], 0.6);
    let truth = Scene::sphere(center, radius, mat.clone(), 1.0)?;
    let cameras: Vec<Camera> = (0..8)
        .map(|i| {
            let s = |b: usize| if i >> b & 1 == 1 { 1.0 } else { -1.0 };
            let dir = [s(0), s(1), s(2)].map(|v: f64| v / 3f64.sqrt());
            Camera::new(CameraSpec::Pinhole {
                eye: dir.map(|v| 3.0 * v),
                look_at: [0.0; 3],
                up: [0.0, 1.0, 0.0],
                fov_deg: 40.0,
                width: 64,
                height: 64,
            })
        })
        .collect::<sdfwarp::Result<_>>()?;
    let data = Dataset::synthesize(&truth, &cameras, 64, 3, 1)?;

    let init = Scene::mlp(MlpSdf::desk_scale(), 3, 0.5, mat, 1.0)?;
    let mut cfg = OptimConfig::for_scene(&init, iterations);
    cfg.seed = 9;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    let surface: Vec<[f64; 3]> = (0..1000)
        .map(|_| {
            let d = vec3::normalize([0; 3].map(|_| rng.random_range(-1.0..1.0)));
            vec3::add(center, vec3::scale(d, radius))
        })
        .collect();
    let mean_abs_f = |theta: &[f64]| surface.iter().map(|&x| init.eval(theta, x).abs()).sum::<f64>() / 1000.0;
    println!("initial mean |f| on the true surface {:.3e}", mean_abs_f(init.theta()));

    let t0 = std::time::Instant::now();
    let res = fit(&init, &data, &cfg, out.as_deref(), |row, _| {
        if row.iteration % 25 == 0 {
            println!(
                "it {:4} level {} loss {:.3e} eik {:.3e} active {} {:.0}s",
                row.iteration,
                row.level,
                row.image_loss,
                row.eikonal_loss,
                row.active_pixels,
                t0.elapsed().as_secs_f64()
            );
        }
    })?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(18);
    let volume: Vec<[f64; 3]> = (0..2000).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect();
    let (eik, _, _) = init.eikonal_loss(&res.theta, &volume)?;
    println!("final mean |f| on the true surface {:.3e}", mean_abs_f(&res.theta));
    println!("final eikonal residual {eik:.3e} in {:.0}s", t0.elapsed().as_secs_f64());
    if let Some(dir) = out {
        write_history(dir.join("history.csv"), &res.history)?;
        checkpoint::write_checkpoint(&dir, "final", &init, &res.theta)?;
    }
    Ok(())
}
