//! Per-point warp weights along rays approaching a disk silhouette.
//!
//! `cargo run --release --example warp_weights -- [k]`

use sdfwarp::diagnostics::{circle_scene, warp_at};
use sdfwarp::render::RenderContext;
use sdfwarp::warp::{TopK, WarpConfig};

fn main() -> sdfwarp::Result<()> {
    let k = match std::env::args().nth(1).as_deref() {
        None | Some("all") => TopK::All,
        Some(s) => TopK::K(s.parse().expect("k")),
    };
    let r = 0.5;
    let (scene, cam) = circle_scene(r, 64, 0.9, 0.1)?;
    let ctx = RenderContext::new(&scene, scene.theta(), &cam);
    let cfg = WarpConfig::new(4.0, 0.1, k)?;
    let mut v = vec![0.0; scene.params.len()];
    v[scene.params.lookup("radius")?] = 1.0;

    for pixels in [4.0, 1.0, 0.1, 0.01] {
        let u = [r + pixels * cam.pixel_size, 0.0];
        let ev = warp_at(&ctx, &cfg, u)?;
        let vel = ev.velocity(&scene, scene.theta(), &v);
        println!("{pixels} px outside: {} points, V = [{:.4}, {:.4}], max omega {:.3}", ev.weights.len(), vel[0], vel[1], ev.max_omega());
        for (i, w) in ev.weights.iter().enumerate() {
            println!("  {i:3} t {:.5} f {:.3e} S {:.3e} wq {:.3e} wk {:.3e} omega {:.4}", w.t, w.f, w.s, w.wq, w.wk, w.omega);
        }
    }
    Ok(())
}
