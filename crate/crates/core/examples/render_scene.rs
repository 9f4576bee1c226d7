//! Render every camera of a scene file to PFM and PPM.
//!
//! `cargo run --release --example render_scene -- [scene.json] [spp] [out_dir]`

use sdfwarp::render::{render_image, Camera, RenderContext};
use sdfwarp::scene::Scene;
use std::path::PathBuf;

fn main() -> sdfwarp::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/scenes/torus.json").into());
    let spp: usize = args.next().map(|s| s.parse().expect("spp")).unwrap_or(16);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "render_out".into()));
    std::fs::create_dir_all(&out).map_err(|e| sdfwarp::Error::io(&out, e))?;

    let scene = Scene::load(&path)?;
    for (i, spec) in scene.cameras.iter().enumerate() {
        let cam = Camera::new(spec.clone())?;
        let ctx = RenderContext::new(&scene, scene.theta(), &cam);
        let (img, stats) = render_image(&ctx, spp, 0, 0)?;
        img.write_pfm(out.join(format!("view_{i}.pfm")))?;
        img.write_ppm(out.join(format!("view_{i}.ppm")))?;
        println!("view {i}: {}x{} {stats:?}", cam.width, cam.height);
    }
    Ok(())
}
