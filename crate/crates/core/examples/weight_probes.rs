//! Weight concentration, the closed-form mass bound, top-k continuity and
//! boundary consistency on the disk scene.
//!
//! `cargo run --release --example weight_probes`

use sdfwarp::cli::{lemma_report, LemmaSection};
use sdfwarp::diagnostics::{circle_consistency, circle_scene};
use sdfwarp::render::RenderContext;
use sdfwarp::warp::{TopK, WarpConfig};

fn main() -> sdfwarp::Result<()> {
    let rep = lemma_report(&LemmaSection::default())?;
    for (name, k) in [("gamma 4", &rep.kronecker), ("gamma 2", &rep.kronecker_fail)] {
        for row in &k.rows {
            println!("{name}: {:.0e} px from the silhouette, max omega {:.4} over {} points", row.distance, row.max_omega, row.points);
        }
    }
    for (a, b) in rep.bound.iter().zip(&rep.bound_fail) {
        println!("delta {:.0e}: bound {:.3e} (gamma 4) {:.3e} (gamma 2)", a.delta, a.bound, b.bound);
    }
    let s = &rep.scan;
    println!(
        "top-k scan: {} set changes, {} tracer events, swapped {:.2e}, jump/secant {:.2}",
        s.events.len(),
        s.tracer_events,
        s.max_swapped_relative,
        s.max_jump_ratio
    );

    let (scene, cam) = circle_scene(0.5, 64, 0.9, 0.1)?;
    let ctx = RenderContext::new(&scene, scene.theta(), &cam);
    let cfg = WarpConfig::new(4.0, 0.1, TopK::K(8))?;
    let mut v = vec![0.0; scene.params.len()];
    v[scene.params.lookup("radius")?] = 1.0;
    let angles: Vec<f64> = (0..8).map(|i| i as f64 * std::f64::consts::FRAC_PI_4).collect();
    for row in circle_consistency(&ctx, &cfg, &v, 0.5, 1e-3, &angles, |n| n)? {
        println!("angle {:.3} side {:+}: relative error {:.2e}", row.angle, row.side, row.relative_error);
    }
    Ok(())
}
