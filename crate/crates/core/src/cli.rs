//! Command-line front end: run configs, flag overrides and the commands.
//!
//! Every command writes its artifacts under the output directory together
//! with `summary.json`, and prints the same summary on stdout. Exit codes:
//! 0 success, 1 tolerance failure, 2 usage or config error, 3 numerical
//! error.

use crate::diagnostics::{bound_table, circle_scene, kronecker_probe, topk_scan, BoundRow, KroneckerReport, TopkScan};
use crate::error::{Error, Result};
use crate::gradient::{fd_gradient_image, gradient_image, CheckReport, Estimator, GradientConfig, GradientImage};
use crate::optimize::{checkpoint, fit, write_history, Dataset, OptimConfig, View};
use crate::render::{render_image, Camera, Image, RenderContext};
use crate::scene::Scene;
use crate::warp::{warp_eval, TopK, WarpConfig};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "sdfwarp", version, about = "Differentiable SDF rendering with warped silhouette gradients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Render every camera of the scene to PFM and PPM.
    Render,
    /// Compare warped and naive gradient images against finite differences.
    Gradcheck,
    /// Dump per-point trajectory weights for selected rays.
    WeightsDump,
    /// Weight concentration, lower-bound and top-k continuity probes.
    LemmaCheck,
    /// Fit scene parameters to multi-view targets.
    Fit,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives the serial reference.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub mode: Option<Estimator>,
    /// Parameter name (`center[1]`) or flat index.
    #[arg(long, global = true)]
    pub param: Option<String>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long = "lambda-d", global = true)]
    pub lambda_d: Option<f64>,
    /// Top-k size or `all`.
    #[arg(long, global = true)]
    pub k: Option<TopK>,
    #[arg(long, global = true)]
    pub spp: Option<usize>,
    /// Pyramid level: the film is halved this many times.
    #[arg(long, global = true)]
    pub level: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub scene: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    #[serde(default)]
    pub weights_dump: WeightsSection,
    #[serde(default)]
    pub lemma_check: LemmaSection,
    #[serde(default)]
    pub fit: FitSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub spp: usize,
    pub level: usize,
}

impl Default for RenderSection {
    fn default() -> Self {
        Self { spp: 16, level: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub param: Option<String>,
    pub camera: usize,
    pub level: usize,
    /// Estimator whose thresholds set the exit status.
    pub mode: Estimator,
    pub spp: usize,
    pub edge_spp: usize,
    pub pixel_boundary: bool,
    pub fd_spp: usize,
    pub fd_h: f64,
    pub warp: Option<WarpConfig>,
    /// Per-channel weights of the scalar image being differentiated.
    pub channel_weights: [f64; 3],
    pub pearson_min: f64,
    pub silhouette_rel_max: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            param: None,
            camera: 0,
            level: 0,
            mode: Estimator::Warped,
            spp: 256,
            edge_spp: 64,
            pixel_boundary: true,
            fd_spp: 1024,
            fd_h: 1e-3,
            warp: None,
            channel_weights: [1.0 / 3.0; 3],
            pearson_min: 0.95,
            silhouette_rel_max: 0.10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsSection {
    pub camera: usize,
    pub level: usize,
    /// Rays through these pixel centers; the middle scanline when both
    /// lists are empty.
    pub pixels: Vec<[usize; 2]>,
    /// Rays through these screen points.
    pub points: Vec<[f64; 2]>,
    pub warp: Option<WarpConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaSection {
    pub gamma: f64,
    /// Exponent expected to miss the concentration level.
    pub gamma_fail: f64,
    pub lambda_d: f64,
    pub radius: f64,
    pub resolution: usize,
    /// Probe distances in pixel footprints, farthest first.
    pub distances: Vec<f64>,
    pub level: f64,
    pub bound_deltas: Vec<f64>,
    pub scan_k: usize,
    pub scan_samples: usize,
    /// Scan from `radius + scan_range[0]` to `radius + scan_range[1]`.
    pub scan_range: [f64; 2],
    pub min_events: usize,
    pub swap_tolerance: f64,
    pub jump_ratio_max: f64,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            gamma: 4.0,
            gamma_fail: 2.0,
            lambda_d: 0.1,
            radius: 0.5,
            resolution: 64,
            distances: vec![1e-1, 1e-2, 1e-3, 1e-4],
            level: 0.99,
            bound_deltas: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            scan_k: 8,
            scan_samples: 10_000,
            scan_range: [1e-3, 0.3],
            min_events: 5,
            swap_tolerance: 1e-9,
            jump_ratio_max: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Scene rendered to make the targets; its cameras are used unless the
    /// model scene lists its own.
    pub target: Option<PathBuf>,
    /// Target PFM images, one per model camera, instead of `target`.
    pub target_images: Vec<PathBuf>,
    pub target_spp: usize,
    pub levels: usize,
    /// `OptimConfig::for_scene(model, iterations)` when absent.
    pub optim: Option<OptimConfig>,
    pub iterations: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            target: None,
            target_images: Vec::new(),
            target_spp: 64,
            levels: 3,
            optim: None,
            iterations: 2000,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        // input files are relative to the config; `out` is relative to the
        // working directory
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in cfg.scene.iter_mut().chain(cfg.fit.target.iter_mut()).chain(cfg.fit.target_images.iter_mut()) {
            rebase(p);
        }
        Ok(cfg)
    }

    /// Fold command-line flags into the config. Section-specific flags apply
    /// to every section that has the field.
    pub fn apply(&mut self, f: &Flags) {
        if let Some(s) = &f.scene {
            self.scene = Some(s.clone());
        }
        if let Some(o) = &f.out {
            self.out = Some(o.clone());
        }
        if let Some(s) = f.seed {
            self.seed = s;
        }
        if f.threads.is_some() {
            self.threads = f.threads;
        }
        if let Some(m) = f.mode {
            self.gradcheck.mode = m;
            if let Some(o) = &mut self.fit.optim {
                o.estimator = m;
            }
        }
        if let Some(p) = &f.param {
            self.gradcheck.param = Some(p.clone());
        }
        if let Some(s) = f.spp {
            self.render.spp = s;
            self.gradcheck.spp = s;
            if let Some(o) = &mut self.fit.optim {
                o.spp = s;
            }
        }
        if let Some(l) = f.level {
            self.render.level = l;
            self.gradcheck.level = l;
            self.weights_dump.level = l;
        }
        if let Some(g) = f.gamma {
            self.lemma_check.gamma = g;
        }
        if let Some(l) = f.lambda_d {
            self.lemma_check.lambda_d = l;
        }
        if let Some(TopK::K(k)) = f.k {
            self.lemma_check.scan_k = k;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        if self.render.spp == 0 {
            return Err(Error::config("render.spp must be at least 1"));
        }
        let g = &self.gradcheck;
        if g.spp == 0 || g.fd_spp == 0 || !(g.fd_h > 0.0) {
            return Err(Error::config("gradcheck needs spp, fd_spp and fd_h positive"));
        }
        if let Some(w) = &g.warp {
            w.validate()?;
        }
        if let Some(w) = &self.weights_dump.warp {
            w.validate()?;
        }
        let l = &self.lemma_check;
        if l.distances.is_empty() || l.bound_deltas.len() < 2 || l.scan_k < 2 || l.scan_samples < 4 {
            return Err(Error::config("lemma_check needs distances, deltas, scan_k >= 2 and scan_samples >= 4"));
        }
        if let Some(o) = &self.fit.optim {
            o.validate()?;
        }
        if self.fit.levels == 0 || self.fit.target_spp == 0 {
            return Err(Error::config("fit needs levels and target_spp positive"));
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(out)
    }

    fn load_scene(&self) -> Result<Scene> {
        let path = self.scene.as_ref().ok_or_else(|| Error::config("no scene given (--scene or \"scene\")"))?;
        Scene::load(path)
    }
}

/// Warp settings from the section (or scene defaults) with flag overrides.
fn warp_settings(base: Option<WarpConfig>, scene: &Scene, f: &Flags) -> Result<WarpConfig> {
    let mut w = base.unwrap_or_else(|| WarpConfig::default_for(scene));
    if let Some(g) = f.gamma {
        w.gamma = g;
    }
    if let Some(l) = f.lambda_d {
        w.lambda_d = l;
    }
    if let Some(k) = f.k {
        w.k = k;
    }
    w.validate()?;
    Ok(w)
}

fn cameras(scene: &Scene, level: usize) -> Result<Vec<Camera>> {
    if scene.cameras.is_empty() {
        return Err(Error::config("scene has no cameras"));
    }
    scene
        .cameras
        .iter()
        .map(|spec| {
            let cam = Camera::new(spec.clone())?;
            if level == 0 {
                return Ok(cam);
            }
            let (w, h) = (cam.width >> level, cam.height >> level);
            if w == 0 || h == 0 {
                return Err(Error::config(format!("level {level} leaves an empty film")));
            }
            cam.with_resolution(w, h)
        })
        .collect()
}

/// FNV-1a over a byte buffer, for artifact checksums in summaries.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Result of one command: the JSON summary and whether tolerances held.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
}

/// Process exit code for a command result.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed => 0,
        Ok(_) => 1,
        Err(Error::Config(_) | Error::Io { .. } | Error::Json { .. } | Error::Csv(_)) => 2,
        Err(_) => 3,
    }
}

/// Load the config, apply flags and run `command`. The rayon pool is sized
/// from `threads` on first use.
pub fn run(command: Command, flags: &Flags) -> Result<Outcome> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(flags);
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let out = cfg.out_dir()?;
    let outcome = match command {
        Command::Render => cmd_render(&cfg, &out)?,
        Command::Gradcheck => cmd_gradcheck(&cfg, flags, &out)?,
        Command::WeightsDump => cmd_weights_dump(&cfg, flags, &out)?,
        Command::LemmaCheck => cmd_lemma_check(&cfg, &out)?,
        Command::Fit => cmd_fit(&cfg, flags, &out)?,
    };
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(outcome)
}

pub fn cmd_render(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let scene = cfg.load_scene()?;
    let mut files = Vec::new();
    for (i, cam) in cameras(&scene, cfg.render.level)?.iter().enumerate() {
        let ctx = RenderContext::new(&scene, scene.theta(), cam);
        let (img, stats) = render_image(&ctx, cfg.render.spp, cfg.seed, i as u64)?;
        let stem = format!("render_{i}");
        img.write_pfm(out.join(format!("{stem}.pfm")))?;
        let ppm = img.to_ppm_bytes();
        let path = out.join(format!("{stem}.ppm"));
        std::fs::write(&path, &ppm).map_err(|e| Error::io(&path, e))?;
        files.push(json!({
            "camera": i,
            "width": cam.width,
            "height": cam.height,
            "ppm_fnv1a": format!("{:016x}", fnv1a(&ppm)),
            "rays": stats.rays,
            "max_steps": stats.max_steps,
            "degenerate_normals": stats.degenerate,
        }));
    }
    Ok(Outcome {
        passed: true,
        summary: json!({"command": "render", "seed": cfg.seed, "spp": cfg.render.spp, "images": files}),
    })
}

/// Pass/fail of one estimator against the reference.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Verdict {
    pub report: CheckReport,
    pub silhouette_relative: f64,
    pub pass: bool,
}

impl Verdict {
    pub fn judge(est: &GradientImage, reference: &GradientImage, pearson_min: f64, relative_max: f64) -> Result<Self> {
        let report = CheckReport::compare(est, reference)?;
        // An empty or static view has nothing to correlate; geometry-free
        // pixels there still carry zero-mean warp noise.
        let trivial = reference.values.iter().all(|v| *v == 0.0)
            && report.silhouette_pixels == 0
            && report.interior_pixels == 0;
        let silhouette_relative = report.silhouette_relative();
        let silhouette_ok = report.silhouette_pixels == 0
            || (report.silhouette_ref_mean == 0.0 && report.silhouette_mae == 0.0)
            || silhouette_relative < relative_max;
        Ok(Self {
            report,
            silhouette_relative,
            pass: trivial || (report.pearson > pearson_min && silhouette_ok),
        })
    }
}

fn write_class_table(path: &Path, rows: &[(&str, &Verdict)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["estimator", "class", "pixels", "mae", "reference_mean", "relative", "pearson"])?;
    for (name, v) in rows {
        let r = &v.report;
        let rel = |mae: f64, mean: f64| if mean > 0.0 { mae / mean } else { 0.0 };
        w.write_record([
            name.to_string(),
            "silhouette".into(),
            r.silhouette_pixels.to_string(),
            r.silhouette_mae.to_string(),
            r.silhouette_ref_mean.to_string(),
            rel(r.silhouette_mae, r.silhouette_ref_mean).to_string(),
            r.pearson.to_string(),
        ])?;
        w.write_record([
            name.to_string(),
            "interior".into(),
            r.interior_pixels.to_string(),
            r.interior_mae.to_string(),
            r.interior_ref_mean.to_string(),
            rel(r.interior_mae, r.interior_ref_mean).to_string(),
            r.pearson.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn cmd_gradcheck(cfg: &RunConfig, flags: &Flags, out: &Path) -> Result<Outcome> {
    let g = &cfg.gradcheck;
    let scene = cfg.load_scene()?;
    let cams = cameras(&scene, g.level)?;
    let cam = cams
        .get(g.camera)
        .ok_or_else(|| Error::config(format!("camera {} out of range", g.camera)))?;
    let selector = g.param.as_deref().ok_or_else(|| Error::config("gradcheck needs --param"))?;
    let slot = scene.params.lookup(selector)?;
    let mut v = vec![0.0; scene.params.len()];
    v[slot] = 1.0;
    let ctx = RenderContext::new(&scene, scene.theta(), cam);
    let warp = warp_settings(g.warp, &scene, flags)?;
    let mut gc = GradientConfig::new(Estimator::Warped, g.spp, g.edge_spp, warp)?;
    gc.pixel_boundary = g.pixel_boundary;
    let (gw, sw) = gradient_image(&ctx, &gc, &v, g.channel_weights, cfg.seed, 0)?;
    gc.estimator = Estimator::Naive;
    let (gn, _) = gradient_image(&ctx, &gc, &v, g.channel_weights, cfg.seed, 0)?;
    let mut fd = fd_gradient_image(&ctx, &v, g.fd_h, g.channel_weights, g.fd_spp, cfg.seed)?;
    fd.class = gw.class.clone();

    let vw = Verdict::judge(&gw, &fd, g.pearson_min, g.silhouette_rel_max)?;
    let vn = Verdict::judge(&gn, &fd, g.pearson_min, g.silhouette_rel_max)?;
    write_class_table(&out.join("gradcheck.csv"), &[("warped", &vw), ("naive", &vn)])?;
    for (name, img) in [("warped", &gw), ("naive", &gn), ("fd", &fd)] {
        img.write_pfm(out.join(format!("grad_{name}.pfm")))?;
        img.write_csv(out.join(format!("grad_{name}.csv")))?;
    }
    let passed = match g.mode {
        Estimator::Warped => vw.pass,
        Estimator::Naive => vn.pass,
    };
    Ok(Outcome {
        passed,
        summary: json!({
            "command": "gradcheck",
            "param": scene.params.name_of(slot),
            "mode": g.mode,
            "seed": cfg.seed,
            "warp": warp,
            "thresholds": {"pearson_min": g.pearson_min, "silhouette_rel_max": g.silhouette_rel_max},
            "warped": vw,
            "naive": vn,
            "naive_to_warped_error": vn.report.silhouette_mae / vw.report.silhouette_mae,
            "stats": {"rays": sw.rays, "degenerate": sw.degenerate, "grazing": sw.grazing, "fallback": sw.fallback},
            "passed": passed,
        }),
    })
}

#[derive(Debug, Serialize)]
struct WeightRow {
    ray_id: usize,
    i: usize,
    t_i: f64,
    f_i: f64,
    #[serde(rename = "S_i")]
    s_i: f64,
    w_i: f64,
    wq_i: f64,
    wk_i: f64,
    omega_bar_i: f64,
}

pub fn cmd_weights_dump(cfg: &RunConfig, flags: &Flags, out: &Path) -> Result<Outcome> {
    let wd = &cfg.weights_dump;
    let scene = cfg.load_scene()?;
    let cams = cameras(&scene, wd.level)?;
    let cam = cams
        .get(wd.camera)
        .ok_or_else(|| Error::config(format!("camera {} out of range", wd.camera)))?;
    let warp = warp_settings(wd.warp, &scene, flags)?;
    let mut points: Vec<[f64; 2]> = wd.points.clone();
    let mut pixels = wd.pixels.clone();
    if pixels.is_empty() && points.is_empty() {
        pixels = (0..cam.width).map(|px| [px, cam.height / 2]).collect();
    }
    for [px, py] in pixels {
        if px >= cam.width || py >= cam.height {
            return Err(Error::config(format!("pixel ({px}, {py}) is outside the film")));
        }
        points.push(cam.pixel_point(px, py, [0.5, 0.5]));
    }
    let ctx = RenderContext::new(&scene, scene.theta(), cam);
    let path = out.join("weights.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let mut rays = Vec::new();
    for (ray_id, &u) in points.iter().enumerate() {
        let (ray, tr) = ctx.trace(u)?;
        let ev = warp_eval(&scene, scene.theta(), cam, &ray, &tr, &warp, ctx.trace.step_scale, false)?;
        for (i, p) in ev.weights.iter().enumerate() {
            w.serialize(WeightRow {
                ray_id,
                i,
                t_i: p.t,
                f_i: p.f,
                s_i: p.s,
                w_i: p.w,
                wq_i: p.wq,
                wk_i: p.wk,
                omega_bar_i: p.omega,
            })?;
        }
        rays.push(json!({
            "ray_id": ray_id,
            "u": u,
            "points": ev.weights.len(),
            "hit": tr.hit,
            "max_omega": ev.max_omega(),
            "fallback": ev.fallback,
        }));
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(Outcome {
        passed: true,
        summary: json!({"command": "weights-dump", "warp": warp, "rays": rays}),
    })
}

/// Outcome of the lemma probes with one flag per gate.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub kronecker: KroneckerReport,
    pub kronecker_fail: KroneckerReport,
    pub bound: Vec<BoundRow>,
    pub bound_fail: Vec<BoundRow>,
    pub scan: TopkScan,
    pub kronecker_pass: bool,
    pub kronecker_fail_pass: bool,
    pub bound_pass: bool,
    pub scan_pass: bool,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.kronecker_pass && self.kronecker_fail_pass && self.bound_pass && self.scan_pass
    }
}

pub fn lemma_report(l: &LemmaSection) -> Result<LemmaReport> {
    let (scene, cam) = circle_scene(l.radius, l.resolution, 0.9, 0.1)?;
    let ctx = RenderContext::new(&scene, scene.theta(), &cam);
    let all = WarpConfig::diagnostic(l.gamma, l.lambda_d, TopK::All)?;
    let all_fail = WarpConfig::diagnostic(l.gamma_fail, l.lambda_d, TopK::All)?;
    let u_sil = [l.radius, 0.0];
    let kronecker = kronecker_probe(&ctx, &all, u_sil, [1.0, 0.0], &l.distances)?;
    let kronecker_fail = kronecker_probe(&ctx, &all_fail, u_sil, [1.0, 0.0], &l.distances)?;
    let bound = bound_table(&l.bound_deltas, l.radius, l.lambda_d, l.gamma)?;
    let bound_fail = bound_table(&l.bound_deltas, l.radius, l.lambda_d, l.gamma_fail)?;
    // growth over the last decade of delta: without limit above two, levelling off at two
    let last_ratio = |t: &[BoundRow]| match t {
        [.., a, b] => b.bound / a.bound,
        _ => 1.0,
    };
    let scan_cfg = WarpConfig::diagnostic(l.gamma, l.lambda_d, TopK::K(l.scan_k))?;
    let mut v = vec![0.0; scene.params.len()];
    v[scene.params.lookup("radius")?] = 1.0;
    let a = [l.radius + l.scan_range[0], 0.0];
    let b = [l.radius + l.scan_range[1], 0.0];
    let scan = topk_scan(&ctx, &scan_cfg, &v, a, b, l.scan_samples)?;
    Ok(LemmaReport {
        kronecker_pass: kronecker.reaches(l.level) && kronecker.monotone,
        kronecker_fail_pass: !kronecker_fail.reaches(l.level),
        bound_pass: last_ratio(&bound) > 2.0 && last_ratio(&bound_fail) < 1.1,
        scan_pass: scan.events.len() >= l.min_events
            && scan.max_swapped_relative < l.swap_tolerance
            && scan.max_jump_ratio <= l.jump_ratio_max,
        kronecker,
        kronecker_fail,
        bound,
        bound_fail,
        scan,
    })
}

pub fn cmd_lemma_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let report = lemma_report(&cfg.lemma_check)?;
    let path = out.join("lemma_bound.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["delta", "bound_gamma", "bound_gamma_fail"])?;
    for (a, b) in report.bound.iter().zip(&report.bound_fail) {
        w.write_record([a.delta.to_string(), a.bound.to_string(), b.bound.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let passed = report.passed();
    let mut summary = serde_json::to_value(&report).expect("report serializes");
    summary["command"] = json!("lemma-check");
    summary["passed"] = json!(passed);
    Ok(Outcome { passed, summary })
}

fn load_dataset(section: &FitSection, model: &Scene, seed: u64) -> Result<(Dataset, Option<Scene>)> {
    if !section.target_images.is_empty() {
        let cams = cameras(model, 0)?;
        if cams.len() != section.target_images.len() {
            return Err(Error::config("target_images must match the model cameras one to one"));
        }
        let views = cams
            .into_iter()
            .zip(&section.target_images)
            .map(|(cam, p)| View::new(cam, Image::read_pfm(p)?, section.levels))
            .collect::<Result<_>>()?;
        return Ok((Dataset::new(views)?, None));
    }
    let path = section
        .target
        .as_ref()
        .ok_or_else(|| Error::config("fit needs fit.target or fit.target_images"))?;
    let truth = Scene::load(path)?;
    let cams = if model.cameras.is_empty() { cameras(&truth, 0)? } else { cameras(model, 0)? };
    let data = Dataset::synthesize(&truth, &cams, section.target_spp, section.levels, seed)?;
    Ok((data, Some(truth)))
}

pub fn cmd_fit(cfg: &RunConfig, flags: &Flags, out: &Path) -> Result<Outcome> {
    let model = cfg.load_scene()?;
    let (data, truth) = load_dataset(&cfg.fit, &model, cfg.seed)?;
    let mut optim = cfg.fit.optim.clone().unwrap_or_else(|| OptimConfig::for_scene(&model, cfg.fit.iterations));
    if cfg.fit.optim.is_none() {
        optim.seed = cfg.seed;
    }
    if let Some(m) = flags.mode {
        optim.estimator = m;
    }
    if let Some(s) = flags.spp {
        optim.spp = s;
    }
    if flags.gamma.is_some() || flags.lambda_d.is_some() || flags.k.is_some() {
        optim.warp = Some(warp_settings(optim.warp, &model, flags)?);
    }
    let result = fit(&model, &data, &optim, Some(out), |row, _| {
        if row.iteration % 50 == 0 {
            eprintln!(
                "it {:5} level {} loss {:.4e} |g| {:.3e} active {}",
                row.iteration, row.level, row.loss, row.grad_norm, row.active_pixels
            );
        }
    })?;
    write_history(out.join("history.csv"), &result.history)?;
    checkpoint::write_checkpoint(out, "final", &model, &result.theta)?;
    checkpoint::write_checkpoint(out, "best", &model, &result.best_theta)?;
    let error = truth
        .as_ref()
        .filter(|t| t.params.len() == model.params.len())
        .map(|t| {
            result
                .theta
                .iter()
                .zip(t.theta())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        });
    let last = result.history.last();
    Ok(Outcome {
        passed: true,
        summary: json!({
            "command": "fit",
            "seed": optim.seed,
            "estimator": optim.estimator,
            "iterations": optim.iterations,
            "final_loss": last.map(|r| r.loss),
            "best_loss": result.best_loss,
            "theta": if result.theta.len() <= 64 { json!(result.theta) } else { json!(null) },
            "param_error_linf": error,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_rejects_unknown_keys() {
        let bad = r#"{"seed": 1, "render": {"spp": 4, "sample": 2}}"#;
        assert!(serde_json::from_str::<RunConfig>(bad).is_err());
        let ok: RunConfig = serde_json::from_str(r#"{"seed": 3, "gradcheck": {"param": "radius"}}"#).unwrap();
        assert_eq!(ok.seed, 3);
        assert_eq!(ok.gradcheck.spp, 256);
    }

    #[test]
    fn flags_override_config() {
        let mut c = RunConfig::default();
        let f = Flags {
            spp: Some(7),
            level: Some(1),
            mode: Some(Estimator::Naive),
            ..Default::default()
        };
        c.apply(&f);
        assert_eq!((c.render.spp, c.gradcheck.spp, c.gradcheck.level), (7, 7, 1));
        assert_eq!(c.gradcheck.mode, Estimator::Naive);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(exit_code(&Err(Error::config("x"))), 2);
        assert_eq!(exit_code(&Err(Error::Numerical("x".into()))), 3);
        assert_eq!(exit_code(&Err(Error::DivergenceDetected(3))), 3);
        let failed = Ok(Outcome {
            passed: false,
            summary: Value::Null,
        });
        assert_eq!(exit_code(&failed), 1);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
