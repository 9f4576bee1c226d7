use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenes")
}

fn sdfwarp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdfwarp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn summary(out: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(out.join("summary.json")).expect("summary written");
    serde_json::from_str(&text).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL_CIRCLE: &str = r#"{
  "parameters": [
    {"name": "center", "value": [0.0, 0.0, 0.0]},
    {"name": "radius", "value": 0.5}
  ],
  "sdf": {"type": "sphere", "center": "center", "radius": "radius"},
  "material": {"shading": "flat", "albedo": [0.9, 0.9, 0.9], "background": [0.1, 0.1, 0.1]},
  "cameras": [
    {"kind": "orthographic", "eye": [0.0, 0.0, -2.0], "look_at": [0.0, 0.0, 0.0], "extent": 2.0, "width": 16, "height": 16}
  ],
  "bound": 1.0
}"#;

const GRADCHECK_SMALL: &str = r#"{
  "scene": "circle16.json",
  "gradcheck": {"param": "radius", "spp": 256, "edge_spp": 64, "fd_spp": 4096, "fd_h": 3e-3}
}"#;

#[test]
fn render_is_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("torus.json");
    let scene = scene.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = sdfwarp(&["render", "--scene", scene, "--spp", "4", "--seed", "3", "--threads", "1"], &a);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = sdfwarp(&["render", "--scene", scene, "--spp", "4", "--seed", "3", "--threads", "2"], &b);
    assert!(o.status.success());
    for f in ["render_0.pfm", "render_0.ppm"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let s = summary(&a);
    assert_eq!(s["command"], "render");
    assert_eq!(s, summary(&b));
    let stdout: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, summary(&b));
}

#[test]
fn flat_circle_render_matches_stored_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("circle.json");
    let o = sdfwarp(&["render", "--scene", scene.to_str().unwrap(), "--spp", "1", "--seed", "0"], dir.path());
    assert!(o.status.success());
    let ppm = std::fs::read(dir.path().join("render_0.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n64 64\n255\n"));
    // FNV-1a of the preview; changes only if sampling or shading changes.
    let h = ppm.iter().fold(0xcbf29ce484222325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    assert_eq!(summary(dir.path())["images"][0]["ppm_fnv1a"].as_str().unwrap(), format!("{h:016x}"));
    assert_eq!(h, 0x74580f10b851b8cf, "golden checksum moved: {h:016x}");
}

#[test]
fn flat_interiors_do_not_depend_on_spp() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("circle.json");
    let scene = scene.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(sdfwarp(&["render", "--scene", scene, "--spp", "1"], &a).status.success());
    assert!(sdfwarp(&["render", "--scene", scene, "--spp", "64"], &b).status.success());
    let ia = sdfwarp::render::Image::read_pfm(a.join("render_0.pfm")).unwrap();
    let ib = sdfwarp::render::Image::read_pfm(b.join("render_0.pfm")).unwrap();
    // pixels well inside or outside the disc
    for (px, py) in [(32, 32), (28, 35), (0, 0), (63, 10)] {
        assert_eq!(ia.pixel(px, py), ib.pixel(px, py), "pixel ({px},{py})");
    }
}

#[test]
fn missing_scene_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = sdfwarp(&["render", "--scene", "/nonexistent/scene.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/scene.json"));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"scene": "x.json", "rendr": {}}"#);
    let o = sdfwarp(&["render", "--config", cfg.to_str().unwrap()], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rendr"));
}

#[test]
fn gradcheck_passes_on_a_small_circle_and_naive_mode_fails() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "circle16.json", SMALL_CIRCLE);
    let cfg = write(dir.path(), "run.json", GRADCHECK_SMALL);
    let cfg = cfg.to_str().unwrap();
    let warped = dir.path().join("warped");
    let o = sdfwarp(&["gradcheck", "--config", cfg], &warped);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["gradcheck.csv", "grad_warped.pfm", "grad_naive.pfm", "grad_fd.pfm", "grad_fd.csv"] {
        assert!(warped.join(f).exists(), "{f}");
    }
    let s = summary(&warped);
    assert!(s["naive_to_warped_error"].as_f64().unwrap() >= 10.0);

    let naive = dir.path().join("naive");
    let o = sdfwarp(&["gradcheck", "--config", cfg, "--mode", "naive"], &naive);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(summary(&naive)["passed"], false);
}

#[test]
fn gradcheck_on_an_empty_view_passes_trivially() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "circle16.json", &SMALL_CIRCLE.replace("[0.0, 0.0, -2.0], \"look_at\": [0.0, 0.0, 0.0]", "[0.0, 0.0, -2.0], \"look_at\": [5.0, 0.0, -2.0]"));
    let cfg = write(dir.path(), "run.json", GRADCHECK_SMALL);
    let out = dir.path().join("out");
    let o = sdfwarp(&["gradcheck", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let fd = sdfwarp::render::Image::read_pfm(out.join("grad_fd.pfm")).unwrap();
    assert!(fd.data.iter().all(|&v| v == 0.0));
}

#[test]
fn weights_dump_topk_keeps_the_largest_full_weights() {
    let dir = tempfile::tempdir().unwrap();
    let scene = scenes().join("circle.json");
    let scene = scene.to_str().unwrap();
    let (a, b) = (dir.path().join("all"), dir.path().join("k8"));
    assert!(sdfwarp(&["weights-dump", "--scene", scene, "--k", "all"], &a).status.success());
    assert!(sdfwarp(&["weights-dump", "--scene", scene, "--k", "8"], &b).status.success());
    let read = |p: &Path| -> Vec<csv::StringRecord> {
        let mut r = csv::Reader::from_path(p.join("weights.csv")).unwrap();
        assert_eq!(
            r.headers().unwrap().iter().collect::<Vec<_>>(),
            ["ray_id", "i", "t_i", "f_i", "S_i", "w_i", "wq_i", "wk_i", "omega_bar_i"]
        );
        r.records().map(|x| x.unwrap()).collect()
    };
    let (ra, rb) = (read(&a), read(&b));
    assert_eq!(ra.len(), rb.len());
    let num = |r: &csv::StringRecord, i: usize| -> f64 { r[i].parse().unwrap() };
    let rays = ra.iter().map(|r| num(r, 0) as usize).max().unwrap() + 1;
    assert_eq!(rays, 64);
    for ray in 0..rays {
        let pa: Vec<_> = ra.iter().filter(|r| num(r, 0) as usize == ray).collect();
        let pb: Vec<_> = rb.iter().filter(|r| num(r, 0) as usize == ray).collect();
        let mut wq: Vec<f64> = pa.iter().map(|r| num(r, 6)).collect();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(num(x, 6), num(y, 6), "quadrature weights agree");
        }
        wq.sort_by(|x, y| y.total_cmp(x));
        let Some(&cut) = wq.get(7) else { continue };
        for r in &pb {
            if num(r, 7) > 0.0 {
                assert!(num(r, 6) > cut);
            }
        }
        let sum: f64 = pb.iter().map(|r| num(r, 8)).sum();
        assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fit_writes_history_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        &format!(
            r#"{{
  "scene": "{0}/sphere_init.json",
  "seed": 2,
  "fit": {{"target": "{0}/sphere_truth.json", "target_spp": 4, "levels": 2, "iterations": 5}}
}}"#,
            scenes().display()
        ),
    );
    let out = dir.path().join("out");
    let o = sdfwarp(&["fit", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["history.csv", "final.json", "final.theta", "best.json", "best.theta"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let theta = sdfwarp::optimize::checkpoint::read_theta(out.join("final.theta")).unwrap();
    let s = summary(&out);
    let reported: Vec<f64> = s["theta"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(theta, reported);
    assert!(s["param_error_linf"].as_f64().unwrap() > 0.0);
    let model = sdfwarp::scene::Scene::load(out.join("final.json")).unwrap();
    assert_eq!(model.theta(), &theta[..]);
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 6);
}

#[test]
fn lemma_check_writes_the_bound_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", r#"{"lemma_check": {"scan_samples": 400, "min_events": 1}}"#);
    let out = dir.path().join("out");
    let o = sdfwarp(&["lemma-check", "--config", cfg.to_str().unwrap()], &out);
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out.join("lemma_bound.csv")).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["delta", "bound_gamma", "bound_gamma_fail"]);
    let rows: Vec<Vec<f64>> = r.records().map(|x| x.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 2);
    assert!(rows.windows(2).all(|w| w[1][0] < w[0][0]), "delta decreases down the table");
    let s = summary(&out);
    assert_eq!(s["command"], "lemma-check");
    assert_eq!(s["passed"], o.status.code() == Some(0));
}
