//! Torus outer-radius gradient image: warped, naive and finite differences.
//!
//! `cargo run --release --example gradient_image -- [out_dir] [spp]`

use sdfwarp::gradient::{fd_gradient_image, gradient_image, CheckReport, Estimator, GradientConfig};
use sdfwarp::render::{render_image, Camera, CameraSpec, RenderContext};
use sdfwarp::scene::{Light, Material, Scene};
use sdfwarp::warp::WarpConfig;
use std::time::Instant;

fn main() -> sdfwarp::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "gradient_out".into()));
    let spp: usize = args.next().map(|s| s.parse().expect("spp")).unwrap_or(256);
    std::fs::create_dir_all(&out).map_err(|e| sdfwarp::Error::io(&out, e))?;

    let light = Light {
        direction: [0.3, 0.8, -0.5],
        intensity: [1.0; 3],
    };
    let mat = Material::lambert([0.8, 0.6, 0.4], [0.25; 3], light, [0.0; 3]);
    let scene = Scene::torus([0.0; 3], 1.0, 0.35, mat, 1.5)?;
    let cam = Camera::new(CameraSpec::Pinhole {
        eye: [0.0, 2.6, -2.6],
        look_at: [0.0; 3],
        up: [0.0, 1.0, 0.0],
        fov_deg: 50.0,
        width: 64,
        height: 64,
    })?;
    let ctx = RenderContext::new(&scene, scene.theta(), &cam);
    let (img, _) = render_image(&ctx, 16, 1, 0)?;
    img.write_ppm(out.join("torus.ppm"))?;

    let j = scene.params.lookup("major")?;
    let mut v = vec![0.0; scene.params.len()];
    v[j] = 1.0;
    let w = [1.0 / 3.0; 3];

    let t0 = Instant::now();
    let warped = GradientConfig::new(Estimator::Warped, spp, 64, WarpConfig::default_for(&scene))?;
    let (gw, stats) = gradient_image(&ctx, &warped, &v, w, 7, 0)?;
    println!("warped: {:.1}s {stats:?}", t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let naive = GradientConfig {
        estimator: Estimator::Naive,
        ..warped
    };
    let (gn, _) = gradient_image(&ctx, &naive, &v, w, 7, 0)?;
    println!("naive: {:.1}s", t0.elapsed().as_secs_f64());
    let t0 = Instant::now();
    let fd = fd_gradient_image(&ctx, &v, 1e-3, w, 1024, 11)?;
    println!("fd: {:.1}s", t0.elapsed().as_secs_f64());

    let rw = CheckReport::compare(&gw, &fd)?;
    let rn = CheckReport::compare(&gn, &fd)?;
    println!("warped: {rw:?} rel {:.4}", rw.silhouette_relative());
    println!("naive:  {rn:?} rel {:.4}", rn.silhouette_relative());
    gw.write_pfm(out.join("warped.pfm"))?;
    gn.write_pfm(out.join("naive.pfm"))?;
    fd.write_pfm(out.join("fd.pfm"))?;
    gw.write_csv(out.join("warped.csv"))?;
    gw.to_image().signed_preview().write_ppm(out.join("warped_preview.ppm"))?;
    fd.to_image().signed_preview().write_ppm(out.join("fd_preview.ppm"))?;
    Ok(())
}
