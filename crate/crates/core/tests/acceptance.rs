//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Shared fixture: procedural flower and animal corpora at 128 px, 64 px
//! training tiles, 1 mm distance, two 16-filter networks trained for 10 epochs.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twinfree::bench::eval::{evaluate, gs_problem, z_sweep, EvalContext, EvalReport, Method};
use twinfree::bench::io::read_raster;
use twinfree::bench::timing::{time_methods, TimingSetup};
use twinfree::cnn::{gradient_check, train, NetworkSpec, NetworkWeights, TrainConfig};
use twinfree::corpus::{write_corpus, Family};
use twinfree::datasetgen::{build_dataset, DatasetConfig, DatasetManifest, Kind, Split};
use twinfree::field::{rmse, ComplexField, Raster, SystemParams};
use twinfree::gs::{gs_multi, CffConfig};
use twinfree::propagate::{ifft2, PropagationPlan};
use twinfree::reconstruct::{backpropagate, utirnet_reconstruct, Hologram, ReconstructConfig};
use twinfree::tiling::{plan_tiles, process_tiled, PassThrough, RasterFilter, TileLayout};

const Z: f64 = 1e-3;
const IMAGE: usize = 128;
const TILE: usize = 64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Fixture {
    _dir: tempfile::TempDir,
    params: SystemParams,
    train_set: DatasetManifest,
    heldout: DatasetManifest,
    animals: DatasetManifest,
    amp: NetworkWeights,
    phase: NetworkWeights,
}

impl Fixture {
    fn build() -> Fixture {
        let dir = tempfile::tempdir().expect("temp dir");
        let root = dir.path();
        let params = SystemParams::lensless(Z);
        write_corpus(root.join("flowers-train"), Family::Flowers, &["daisy", "sunflower", "tulip"], 70, IMAGE, 1)
            .expect("train corpus");
        write_corpus(root.join("flowers-heldout"), Family::Flowers, &["dandelion", "rose"], 50, IMAGE, 2)
            .expect("held-out corpus");
        write_corpus(root.join("animals"), Family::Animals, Family::Animals.classes(), 20, IMAGE, 3)
            .expect("animal corpus");
        let cfg = DatasetConfig {
            tile_size: TILE,
            ..DatasetConfig::default()
        };
        let t = Instant::now();
        let train_set =
            build_dataset(root.join("flowers-train"), root.join("ds-train"), 200, &params, 7, &cfg).expect("dataset");
        let heldout = build_dataset(
            root.join("flowers-heldout"),
            root.join("ds-heldout"),
            100,
            &params,
            8,
            &DatasetConfig {
                force_split: Some(Split::Validation),
                ..cfg.clone()
            },
        )
        .expect("held-out dataset");
        let animals = build_dataset(
            root.join("animals"),
            root.join("ds-animals"),
            100,
            &params,
            9,
            &DatasetConfig {
                force_split: Some(Split::Test),
                ..cfg
            },
        )
        .expect("animal dataset");
        println!("fixture: datasets in {:.1} s", t.elapsed().as_secs_f64());
        let spec = NetworkSpec {
            filters_per_layer: 16,
            blocks_per_path: 2,
            ..NetworkSpec::default()
        };
        let tc = TrainConfig {
            epochs: 10,
            initial_lr: 1e-4,
            seed: 1,
            ..TrainConfig::default()
        };
        let t = Instant::now();
        let amp = train(&train_set, Kind::Amplitude, spec, &tc).expect("amplitude training");
        let phase = train(&train_set, Kind::Phase, spec, &tc).expect("phase training");
        println!(
            "fixture: trained both networks in {:.1} s (final losses {:.4e}, {:.4e})",
            t.elapsed().as_secs_f64(),
            amp.meta.final_loss,
            phase.meta.final_loss
        );
        Fixture {
            _dir: dir,
            params,
            train_set,
            heldout,
            animals,
            amp,
            phase,
        }
    }

    fn context(&self) -> EvalContext<'_> {
        EvalContext {
            amplitude_net: Some(&self.amp),
            phase_net: Some(&self.phase),
            ..EvalContext::default()
        }
    }

    fn holograms(&self, n: usize) -> Vec<Hologram> {
        self.heldout
            .pairs
            .iter()
            .take(n)
            .map(|rec| {
                let h = read_raster(self.heldout.root.join(&rec.hologram)).expect("hologram");
                Hologram::new(h, self.params).expect("hologram")
            })
            .collect()
    }
}

/// Random field whose spectrum is confined to a disk of radius `n / 8`.
fn band_limited(n: usize, rng: &mut ChaCha8Rng) -> ComplexField {
    let cut = (n / 8) as f64;
    let spectrum = ComplexField::from_fn(n, n, 2.4e-6, |x, y| {
        let fx = if x < n / 2 { x as f64 } else { x as f64 - n as f64 };
        let fy = if y < n / 2 { y as f64 } else { y as f64 - n as f64 };
        if fx.hypot(fy) <= cut {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .expect("spectrum");
    ifft2(&spectrum)
}

fn field_rms_diff(a: &ComplexField, b: &ComplexField) -> f64 {
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (s / a.len() as f64).sqrt()
}

fn field_rms(a: &ComplexField) -> f64 {
    (a.values().iter().map(|x| x.norm_sqr()).sum::<f64>() / a.len() as f64).sqrt()
}

fn as_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 256;
    let t = Instant::now();
    let fwd = PropagationPlan::new(n, n, 2.4e-6, 405e-9, Z).expect("plan");
    let back = PropagationPlan::new(n, n, 2.4e-6, 405e-9, -Z).expect("plan");
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let f = band_limited(n, &mut rng);
        let g = back.apply(&fwd.apply(&f).expect("forward")).expect("back");
        worst = worst.max(field_rms_diff(&g, &f) / field_rms(&f));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-10 && secs < 10.0,
        format!("worst relative error {worst:.3e} (< 1e-10), {secs:.2} s (< 10 s)"),
    )
}

fn identity_equivalence(fx: &Fixture) -> Outcome {
    let cfg = ReconstructConfig {
        tile_size: Some(TILE),
        ..ReconstructConfig::default()
    };
    let mut worst: f64 = 0.0;
    for h in fx.holograms(20) {
        let u = utirnet_reconstruct(&h, &PassThrough, &PassThrough, &cfg).expect("reconstruct");
        let b = backpropagate(&h).expect("backpropagate");
        for (x, y) in u.values().iter().zip(b.values()) {
            worst = worst.max((x - y).norm());
        }
    }
    outcome(worst < 1e-6, format!("max per-sample difference {worst:.3e} (< 1e-6)"))
}

fn physics_consistency(fx: &Fixture) -> Outcome {
    let ctx = fx.context();
    let mut worst: f64 = 0.0;
    for h in fx.holograms(20) {
        let u = utirnet_reconstruct(&h, &fx.amp, &fx.phase, &ctx.reconstruct).expect("reconstruct");
        let (w, hh) = u.dims();
        let cam = PropagationPlan::relative(w, hh, u.pitch(), fx.params.wavelength, -Z)
            .and_then(|p| p.apply(&u))
            .expect("propagate");
        let measured = h.amplitude();
        let e = rmse(&cam.amplitude(), &measured).expect("rmse");
        let norm = (measured.values().iter().map(|v| v * v).sum::<f64>() / measured.len() as f64).sqrt();
        worst = worst.max(e / norm);
    }
    outcome(worst < 1e-6, format!("worst relative camera-plane error {worst:.3e} (< 1e-6)"))
}

fn mean(report: &EvalReport, dataset: &str, m: Method, k: Kind) -> f64 {
    report.cell(dataset, m, k).map_or(f64::NAN, |c| c.mean)
}

fn error_ordering(report: &EvalReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [Kind::Amplitude, Kind::Phase] {
        let a = mean(report, "heldout", Method::As, k);
        let c = mean(report, "heldout", Method::CnnOnly, k);
        let u = mean(report, "heldout", Method::Utirnet, k);
        pass &= u < c && c < a && u <= 0.85 * a;
        parts.push(format!("{k}: UTIRnet {u:.4} < cnn_only {c:.4} < AS {a:.4}, ratio {:.3} (<= 0.85)", u / a));
    }
    outcome(pass, parts.join("; "))
}

fn generalization(report: &EvalReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [Kind::Amplitude, Kind::Phase] {
        let v = mean(report, "heldout", Method::Utirnet, k);
        let o = mean(report, "animals", Method::Utirnet, k);
        let rel = (o - v).abs() / v;
        pass &= rel <= 0.15;
        parts.push(format!("{k}: animals {o:.4} vs flowers {v:.4}, {:.1}% (<= 15%)", 100.0 * rel));
    }
    outcome(pass, parts.join("; "))
}

fn z_robustness(fx: &Fixture) -> Outcome {
    let targets: Vec<(Raster, Kind)> = fx
        .heldout
        .pairs
        .iter()
        .map(|rec| (read_raster(fx.heldout.root.join(&rec.target)).expect("target"), rec.kind))
        .collect();
    let z_values: Vec<f64> = (0..11).map(|i| Z * (0.5 + 0.1 * i as f64)).collect();
    let sweep = z_sweep(&targets, &fx.params, &z_values, &fx.context()).expect("z sweep");
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [Kind::Amplitude, Kind::Phase] {
        let rel: Vec<f64> = sweep.curve(k).iter().map(|p| p.relative).collect();
        let (imin, min) = rel
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("points");
        let near = imin.abs_diff(5) <= 1;
        let flat = rel[3] <= min + 10.0 && rel[7] <= min + 10.0;
        pass &= near && flat;
        parts.push(format!(
            "{k}: minimum {min:.1}% at {:.2} Z (within 0.1 Z), {:.1}% / {:.1}% at 0.8 / 1.2 Z (<= min + 10)",
            0.5 + 0.1 * imin as f64,
            rel[3],
            rel[7]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn gs_baseline(fx: &Fixture, report: &EvalReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for k in [Kind::Amplitude, Kind::Phase] {
        let g = mean(report, "heldout", Method::Gs, k);
        let a = mean(report, "heldout", Method::As, k);
        pass &= g < a;
        parts.push(format!("{k}: GS {g:.4} < AS {a:.4}"));
    }
    let mut worst_rise = f64::NEG_INFINITY;
    for rec in &fx.heldout.pairs {
        let pair = fx.heldout.load_pair(rec).expect("pair");
        let r = gs_multi(&gs_problem(&pair, fx.context().gs_second_wavelength, 5).expect("problem")).expect("gs");
        for w in r.residuals.windows(2) {
            worst_rise = worst_rise.max(w[1][0] - w[0][0]);
        }
    }
    pass &= worst_rise <= 1e-9;
    parts.push(format!("largest first-plane residual step {worst_rise:.3e} (<= 1e-9)"));
    outcome(pass, parts.join("; "))
}

/// Tilt plus a faint sinusoid: gradient magnitude varies by well under 3x
/// anywhere, so a larger jump can only come from stitching.
fn smooth_scene(n: usize) -> Raster {
    let k = 2.0 * std::f64::consts::PI / n as f64;
    Raster::from_fn(n, n, 2.4e-6, |x, y| {
        let (x, y) = (x as f64, y as f64);
        0.5 + 0.3 * (x + y) / (2.0 * n as f64) + 0.01 * (k * x).sin() * (k * y).sin()
    })
    .expect("scene")
}

/// Largest neighbour difference touching an overlap band or tile edge,
/// divided by the median difference elsewhere.
fn seam_ratio(r: &Raster, layout: &TileLayout) -> f64 {
    let (w, h) = r.dims();
    let mark = |len: usize, starts: Vec<usize>| {
        let mut starts = starts;
        starts.sort_unstable();
        starts.dedup();
        let mut band = vec![false; len];
        for i in 1..starts.len() {
            let prev_end = (starts[i - 1] + layout.tile_size).min(len);
            for flag in &mut band[starts[i].saturating_sub(1)..prev_end.max(starts[i])] {
                *flag = true;
            }
        }
        band
    };
    let bx = mark(w, layout.tiles.iter().map(|t| t.x).collect());
    let by = mark(h, layout.tiles.iter().map(|t| t.y).collect());
    let (mut boundary, mut interior) = (Vec::new(), Vec::new());
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let v = r.get(x, y);
            for (d, seam) in [(r.get(x + 1, y) - v, bx[x] || bx[x + 1]), (r.get(x, y + 1) - v, by[y] || by[y + 1])] {
                if seam {
                    boundary.push(d.abs());
                } else {
                    interior.push(d.abs());
                }
            }
        }
    }
    interior.sort_by(f64::total_cmp);
    boundary.iter().copied().fold(0.0, f64::max) / interior[interior.len() / 2]
}

fn tiling(fx: &Fixture) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut exact = true;
    let mut worst_sum: f64 = 0.0;
    for case in 0..100 {
        let w = rng.gen_range(1..400);
        let h = rng.gen_range(1..400);
        let tile = rng.gen_range(2..160);
        let frac = rng.gen_range(0.0..0.5);
        let layout = plan_tiles(w, h, tile, frac).expect("layout");
        for v in layout.weight_sum().values() {
            worst_sum = worst_sum.max((v - 1.0).abs());
        }
        if case < 20 {
            let r = Raster::from_fn(w, h, 1.0, |_, _| rng.gen_range(-5.0..5.0)).expect("raster");
            exact &= process_tiled(&r, &layout, &PassThrough).expect("tiled") == r;
        }
    }
    let scene = smooth_scene(1024);
    let layout = plan_tiles(1024, 1024, TILE, 0.1).expect("layout");
    let abutting = plan_tiles(1024, 1024, TILE, 0.0).expect("layout");
    let whole = fx.amp.apply(&scene).expect("network");
    let tiled = process_tiled(&scene, &layout, &fx.amp).expect("tiled network");
    let unblended = process_tiled(&scene, &abutting, &fx.amp).expect("tiled network");
    // the oracle only means something if the scene and the untiled output pass it
    let valid = seam_ratio(&scene, &layout) <= 3.0 && seam_ratio(&whole, &layout) <= 3.0;
    let ratio = seam_ratio(&tiled, &layout);
    outcome(
        exact && worst_sum <= 1e-12 && valid && ratio <= 3.0,
        format!(
            "identity bit-exact: {exact}; worst weight-sum error {worst_sum:.2e} (<= 1e-12); \
             seam oracle valid: {valid}; boundary/interior gradient {ratio:.2}x (<= 3x), \
             {:.2}x without overlap",
            seam_ratio(&unblended, &abutting)
        ),
    )
}

fn gradients() -> Outcome {
    let spec = NetworkSpec {
        filters_per_layer: 3,
        blocks_per_path: 1,
        ..NetworkSpec::default()
    };
    match gradient_check(spec, 8, false, 3, 1e-6, 1e-4) {
        Ok(r) => outcome(
            true,
            format!("{} parameters, max relative error {:.2e} (<= 1e-4)", r.parameters, r.max_relative_error),
        ),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn timing(fx: &Fixture) -> Outcome {
    let setup = TimingSetup {
        params: fx.params,
        second_wavelength: 561e-9,
        gs_iterations: 5,
        cff: CffConfig::default(),
        reconstruct: ReconstructConfig::default(),
        amplitude_net: Some(&fx.amp),
        phase_net: Some(&fx.phase),
    };
    let sizes = [512, 1024, 2048];
    let order = [Method::As, Method::Gs, Method::GsCff, Method::Utirnet];
    let report = time_methods(&sizes, &order, 1, &setup).expect("timing");
    println!("# {}", report.hardware);
    print!("{}", report.to_csv());
    let mut pass = report.to_csv().lines().count() == order.len() + 1;
    for n in sizes {
        let t: Vec<f64> = order.iter().map(|&m| report.seconds(m, n).unwrap_or(f64::NAN)).collect();
        pass &= t.windows(2).all(|w| w[0] < w[1]);
    }
    outcome(pass, "table-shaped CSV; AS < GS < GS+CFF < UTIRnet at every size")
}

fn cli(args: &[&str], threads: &str) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_twinfree"))
        .args(args)
        .env("TWINFREE_THREADS", threads)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run twinfree");
    assert!(out.status.success(), "twinfree {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn determinism(fx: &Fixture) -> Outcome {
    let root: &Path = fx._dir.path();
    let corpus = root.join("flowers-train");
    let runs: Vec<(PathBuf, String)> = ["1", "3"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let ds = root.join(format!("det-ds-{i}"));
            let net = root.join(format!("det-{i}.net"));
            let (c, d, n) = (corpus.to_str().unwrap(), ds.to_str().unwrap(), net.to_str().unwrap());
            cli(&["gen-dataset", "--corpus", c, "--out", d, "--count", "16", "--seed", "4", "--z", "1e-3", "--tile-size", "32"], threads);
            let log = cli(
                &["train", "--dataset", d, "--kind", "phase", "--out", n, "--epochs", "2", "--filters", "4", "--blocks", "1", "--seed", "2"],
                threads,
            );
            let final_line = log.lines().find(|l| l.starts_with("final loss")).unwrap_or("").to_string();
            (ds, final_line)
        })
        .collect();
    let m0 = std::fs::read(runs[0].0.join("manifest.json")).expect("manifest");
    let m1 = std::fs::read(runs[1].0.join("manifest.json")).expect("manifest");
    let w0 = std::fs::read(root.join("det-0.net")).expect("weights");
    let w1 = std::fs::read(root.join("det-1.net")).expect("weights");
    let same_manifest = m0 == m1;
    let same_loss = !runs[0].1.is_empty() && runs[0].1 == runs[1].1;
    outcome(
        same_manifest && same_loss && w0 == w1,
        format!(
            "manifests identical: {same_manifest}; {} vs {}; weights identical: {}",
            runs[0].1,
            runs[1].1,
            w0 == w1
        ),
    )
}

fn main() -> ExitCode {
    let t = Instant::now();
    let fx = Fixture::build();
    let t_eval = Instant::now();
    let ctx = fx.context();
    let report = evaluate(
        &[("heldout", &fx.heldout), ("animals", &fx.animals)],
        &[Method::As, Method::CnnOnly, Method::Utirnet, Method::Gs],
        &ctx,
    )
    .expect("evaluation");
    print!("{}", report.to_table());
    println!("evaluation in {:.1} s", t_eval.elapsed().as_secs_f64());
    assert!(fx.train_set.pairs.iter().all(|p| p.split == Split::Train));

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 angular-spectrum round trip", Box::new(as_round_trip)),
        ("2 pass-through filters reduce to backpropagation", Box::new(|| identity_equivalence(&fx))),
        ("3 hologram consistency", Box::new(|| physics_consistency(&fx))),
        ("4 error ordering on held-out flowers", Box::new(|| error_ordering(&report))),
        ("5 out-of-distribution generalization", Box::new(|| generalization(&report))),
        ("6 distance robustness", Box::new(|| z_robustness(&fx))),
        ("7 two-wavelength GS baseline", Box::new(|| gs_baseline(&fx, &report))),
        ("8 tiling", Box::new(|| tiling(&fx))),
        ("9 gradient check", Box::new(gradients)),
        ("10 timing table", Box::new(|| timing(&fx))),
        ("11 determinism through the CLI", Box::new(|| determinism(&fx))),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (name, check) in &criteria {
        let start = Instant::now();
        let o = check();
        let line = format!(
            "{} criterion {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        lines.push(line);
        failed += usize::from(!o.pass);
    }
    println!("\nsummary ({:.0} s total)", t.elapsed().as_secs_f64());
    for l in &lines {
        println!("{l}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
