use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use twinfree::bench::eval::{evaluate, z_sweep, EvalContext, Method};
use twinfree::bench::io::{read_any_raster, read_raster, write_field, write_image16, write_raster};
use twinfree::bench::plot::{plot_eval, plot_z_sweep};
use twinfree::bench::timing::{time_methods, TimingSetup};
use twinfree::cnn::layers::{Pooling, Upsampling};
use twinfree::cnn::{read_weights, train, write_weights, NetworkSpec, NetworkWeights, TrainConfig};
use twinfree::corpus::{write_corpus, Family};
use twinfree::datasetgen::{build_dataset, DatasetConfig, DatasetManifest, DenoiserKind, Kind, Split};
use twinfree::field::{ComplexField, Raster, SystemParams};
use twinfree::gs::{gs_cff, gs_multi, CffConfig, Constraint, GsProblem};
use twinfree::reconstruct::{cnn_only_reconstruct, utirnet_reconstruct, AmplitudeNorm, Hologram, ReconstructConfig};
use twinfree::{Error, Result};

/// Thread-count override; unset means one worker per logical core.
const THREADS_VAR: &str = "TWINFREE_THREADS";

#[derive(Parser)]
#[command(name = "twinfree", version, about = "In-line hologram simulation, training and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural image corpus (one folder per class)
    MakeCorpus(MakeCorpusArgs),
    /// Simulate training pairs from an image corpus
    GenDataset(GenDatasetArgs),
    /// Train an amplitude or phase network
    Train(TrainArgs),
    /// Reconstruct a recorded hologram
    Reconstruct(ReconstructArgs),
    /// Multi-wavelength Gerchberg-Saxton reconstruction
    Gs(GsArgs),
    /// Score reconstruction methods on simulated datasets
    Evaluate(EvaluateArgs),
    /// Relative error of fixed networks over a range of distances
    ZSweep(ZSweepArgs),
    /// Time reconstruction methods over image sizes
    BenchTime(BenchTimeArgs),
}

/// Optical system flags shared by several subcommands.
#[derive(Args, Serialize, Deserialize, Default, Clone)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct SystemFlags {
    /// Wavelength in meters
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    wavelength: Option<f64>,
    /// Camera pixel size in meters
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pixel: Option<f64>,
    /// Object-to-camera distance in meters
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    magnification: Option<f64>,
}

impl SystemFlags {
    fn params(&self) -> Result<SystemParams> {
        let mut p = SystemParams::lensless(self.z.unwrap_or(2.6e-3));
        if let Some(w) = self.wavelength {
            p.wavelength = w;
        }
        if let Some(px) = self.pixel {
            p.pixel_size = px;
        }
        if let Some(m) = self.magnification {
            p.magnification = m;
        }
        p.validate()?;
        Ok(p)
    }
}

macro_rules! flag_struct {
    ($(#[$meta:meta])* struct $name:ident { $($(#[$fmeta:meta])* $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Args, Serialize, Deserialize, Default, Clone)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        struct $name {
            /// Structured text (TOML) file with any of these flags; flags given on the command line win
            #[arg(long)]
            #[serde(skip)]
            config: Option<PathBuf>,
            $(
                $(#[$fmeta])*
                #[serde(skip_serializing_if = "Option::is_none", default)]
                $field: Option<$ty>,
            )*
        }
    };
}

flag_struct! {
    struct MakeCorpusArgs {
        /// flowers or animals
        #[arg(long)]
        family: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_class: usize,
        /// Image side in pixels
        #[arg(long)]
        size: usize,
        #[arg(long)]
        seed: u64,
        /// Subset of the family's classes
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
    }
}

flag_struct! {
    struct GenDatasetArgs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of corpus images (each yields one amplitude and one phase pair)
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        wavelength: f64,
        #[arg(long)]
        pixel: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        magnification: f64,
        #[arg(long)]
        tile_size: usize,
        #[arg(long)]
        highpass_sigma: f64,
        /// nlm or identity
        #[arg(long)]
        denoiser: String,
        /// Corpus subfolders labelled as validation
        #[arg(long, value_delimiter = ',')]
        validation_subdirs: Vec<String>,
        /// Label every pair with this split (train, validation, test)
        #[arg(long)]
        split: String,
    }
}

flag_struct! {
    struct TrainArgs {
        #[arg(long)]
        dataset: PathBuf,
        /// amp or phase
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        filters: usize,
        #[arg(long)]
        blocks: usize,
        #[arg(long)]
        kernel: usize,
        /// max or average
        #[arg(long)]
        pooling: String,
        /// nearest or bilinear
        #[arg(long)]
        upsampling: String,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        lr_drop_every: usize,
        #[arg(long)]
        lr_drop_factor: f64,
        #[arg(long)]
        batch_size: usize,
    }
}

flag_struct! {
    struct ReconstructArgs {
        /// Native raster or 8/16-bit grayscale image of the recorded intensity
        #[arg(long)]
        hologram: PathBuf,
        #[arg(long)]
        wavelength: f64,
        #[arg(long)]
        pixel: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        magnification: f64,
        #[arg(long)]
        weights_amp: PathBuf,
        #[arg(long)]
        weights_phase: PathBuf,
        /// Output file; .raw is native, anything else a 16-bit image
        #[arg(long)]
        out_amp: PathBuf,
        #[arg(long)]
        out_phase: PathBuf,
        /// Native complex output of the full field
        #[arg(long)]
        out_field: PathBuf,
        #[arg(long)]
        tile_size: usize,
        #[arg(long)]
        overlap: f64,
        #[arg(long)]
        iterations: usize,
        /// median or none
        #[arg(long)]
        normalize: String,
        /// Skip the hologram-consistency update
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        cnn_only: bool,
    }
}

flag_struct! {
    struct GsArgs {
        #[arg(long, value_delimiter = ',')]
        holograms: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        wavelengths: Vec<f64>,
        /// One distance for all holograms, or one per hologram
        #[arg(long, value_delimiter = ',')]
        z: Vec<f64>,
        #[arg(long)]
        pixel: f64,
        #[arg(long)]
        magnification: f64,
        #[arg(long)]
        iters: usize,
        #[arg(long, num_args = 0..=1, default_missing_value = "true")]
        cff: bool,
        #[arg(long)]
        cff_sigma: f64,
        #[arg(long)]
        cff_strength: f64,
        #[arg(long)]
        out_amp: PathBuf,
        #[arg(long)]
        out_phase: PathBuf,
        #[arg(long)]
        out_field: PathBuf,
        /// CSV of per-iteration residuals
        #[arg(long)]
        residuals: PathBuf,
    }
}

flag_struct! {
    struct EvaluateArgs {
        /// Dataset directories, optionally as name=DIR
        #[arg(long, value_delimiter = ',')]
        datasets: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        weights_amp: PathBuf,
        #[arg(long)]
        weights_phase: PathBuf,
        /// Only score pairs with this split label
        #[arg(long)]
        split: String,
        #[arg(long)]
        tile_size: usize,
        #[arg(long)]
        second_wavelength: f64,
        #[arg(long)]
        gs_iters: usize,
        #[arg(long)]
        cff_sigma: f64,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_json: PathBuf,
        #[arg(long)]
        plot: PathBuf,
    }
}

flag_struct! {
    struct ZSweepArgs {
        /// Dataset whose targets are resimulated
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        weights_amp: PathBuf,
        #[arg(long)]
        weights_phase: PathBuf,
        /// Explicit distances; otherwise an even grid over +-span around the dataset distance
        #[arg(long, value_delimiter = ',')]
        z_values: Vec<f64>,
        #[arg(long)]
        span: f64,
        #[arg(long)]
        steps: usize,
        /// Use at most this many pairs
        #[arg(long)]
        limit: usize,
        #[arg(long)]
        split: String,
        #[arg(long)]
        tile_size: usize,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        plot: PathBuf,
    }
}

flag_struct! {
    struct BenchTimeArgs {
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        weights_amp: PathBuf,
        #[arg(long)]
        weights_phase: PathBuf,
        #[arg(long)]
        wavelength: f64,
        #[arg(long)]
        second_wavelength: f64,
        #[arg(long)]
        pixel: f64,
        #[arg(long)]
        z: f64,
        #[arg(long)]
        tile_size: usize,
        #[arg(long)]
        gs_iters: usize,
        #[arg(long)]
        out_csv: PathBuf,
    }
}

/// Overlays command-line flags on the optional config file.
fn resolve<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Path>) -> Result<T> {
    let mut base = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            serde_json::to_value(value)?
        }
        None => serde_json::Value::Object(Default::default()),
    };
    let obj = base
        .as_object_mut()
        .ok_or_else(|| Error::Config("config file must be a table of flags".into()))?;
    if let serde_json::Value::Object(flags) = serde_json::to_value(cli)? {
        for (k, v) in flags {
            let empty_list = v.as_array().is_some_and(|a| a.is_empty());
            if !v.is_null() && !empty_list {
                obj.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn non_empty<T>(v: Option<Vec<T>>) -> Option<Vec<T>> {
    v.filter(|x| !x.is_empty())
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "validation" | "val" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        other => Err(Error::Config(format!("unknown split '{other}'"))),
    }
}

fn write_channel(path: &Path, r: &Raster) -> Result<()> {
    if path.extension().is_some_and(|e| e == "raw") {
        write_raster(path, r)
    } else {
        let (lo, hi) = r.min_max();
        write_image16(path, r, lo, hi)
    }
}

fn write_outputs(field: &ComplexField, amp: Option<&PathBuf>, phase: Option<&PathBuf>, full: Option<&PathBuf>) -> Result<()> {
    if let Some(p) = amp {
        write_channel(p, &field.amplitude())?;
    }
    if let Some(p) = phase {
        write_channel(p, &field.phase())?;
    }
    if let Some(p) = full {
        write_field(p, field)?;
    }
    Ok(())
}

fn load_nets(amp: Option<PathBuf>, phase: Option<PathBuf>) -> Result<Option<(NetworkWeights, NetworkWeights)>> {
    match (amp, phase) {
        (Some(a), Some(p)) => Ok(Some((read_weights(a)?, read_weights(p)?))),
        (None, None) => Ok(None),
        _ => Err(Error::Config("give both --weights-amp and --weights-phase".into())),
    }
}

fn parse_methods(names: Option<Vec<String>>, default: &[Method]) -> Result<Vec<Method>> {
    match non_empty(names) {
        Some(v) => v.iter().map(|s| s.parse()).collect(),
        None => Ok(default.to_vec()),
    }
}

fn cmd_make_corpus(a: MakeCorpusArgs) -> Result<()> {
    let family: Family = need(a.family, "family")?.parse()?;
    let classes: Vec<String> = non_empty(a.classes)
        .unwrap_or_else(|| family.classes().iter().map(|s| s.to_string()).collect());
    let refs: Vec<&str> = classes.iter().map(String::as_str).collect();
    let files = write_corpus(
        need(a.out, "out")?,
        family,
        &refs,
        a.per_class.unwrap_or(50),
        a.size.unwrap_or(128),
        a.seed.unwrap_or(0),
    )?;
    println!("wrote {} images", files.len());
    Ok(())
}

fn cmd_gen_dataset(a: GenDatasetArgs) -> Result<()> {
    let params = SystemFlags {
        wavelength: a.wavelength,
        pixel: a.pixel,
        z: a.z,
        magnification: a.magnification,
    }
    .params()?;
    let mut cfg = DatasetConfig::default();
    if let Some(t) = a.tile_size {
        cfg.tile_size = t;
    }
    if let Some(s) = a.highpass_sigma {
        cfg.highpass_sigma = s;
    }
    if let Some(d) = a.denoiser {
        cfg.denoiser = match d.as_str() {
            "nlm" => DenoiserKind::Nlm,
            "identity" | "none" => DenoiserKind::Identity,
            other => return Err(Error::Config(format!("unknown denoiser '{other}'"))),
        };
    }
    if let Some(v) = non_empty(a.validation_subdirs) {
        cfg.validation_subdirs = v;
    }
    if let Some(s) = a.split {
        cfg.force_split = Some(parse_split(&s)?);
    }
    let m = build_dataset(
        need(a.corpus, "corpus")?,
        need(a.out, "out")?,
        need(a.count, "count")?,
        &params,
        a.seed.unwrap_or(0),
        &cfg,
    )?;
    println!("{} pairs, manifest hash {}", m.pairs.len(), m.hash()?);
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let manifest = DatasetManifest::load(need(a.dataset, "dataset")?)?;
    let kind: Kind = need(a.kind, "kind")?.parse()?;
    let mut spec = NetworkSpec::default();
    if let Some(f) = a.filters {
        spec.filters_per_layer = f;
    }
    if let Some(b) = a.blocks {
        spec.blocks_per_path = b;
    }
    if let Some(k) = a.kernel {
        spec.kernel_size = k;
    }
    if let Some(p) = a.pooling {
        spec.pooling = match p.as_str() {
            "max" => Pooling::Max,
            "average" | "avg" => Pooling::Average,
            other => return Err(Error::Config(format!("unknown pooling '{other}'"))),
        };
    }
    if let Some(u) = a.upsampling {
        spec.upsampling = match u.as_str() {
            "nearest" => Upsampling::Nearest,
            "bilinear" => Upsampling::Bilinear,
            other => return Err(Error::Config(format!("unknown upsampling '{other}'"))),
        };
    }
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        initial_lr: a.lr.unwrap_or(d.initial_lr),
        lr_drop_every: a.lr_drop_every.unwrap_or(d.lr_drop_every),
        lr_drop_factor: a.lr_drop_factor.unwrap_or(d.lr_drop_factor),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed.unwrap_or(d.seed),
        ..d
    };
    let w = train(&manifest, kind, spec, &cfg)?;
    write_weights(need(a.out, "out")?, &w)?;
    for e in &w.meta.epoch_log {
        println!("epoch {} lr {:e} loss {:e}", e.epoch, e.lr, e.train_loss);
    }
    println!("final loss {:e}", w.meta.final_loss);
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    let params = SystemFlags {
        wavelength: a.wavelength,
        pixel: a.pixel,
        z: a.z,
        magnification: a.magnification,
    }
    .params()?;
    let intensity = read_any_raster(need(a.hologram, "hologram")?, params.pitch())?;
    let holo = Hologram::new(intensity, params)?;
    let (wa, wp) = load_nets(a.weights_amp, a.weights_phase)?
        .ok_or_else(|| Error::Config("--weights-amp and --weights-phase are required".into()))?;
    let d = ReconstructConfig::default();
    let cfg = ReconstructConfig {
        tile_size: a.tile_size.filter(|&t| t > 0).or(d.tile_size),
        overlap_fraction: a.overlap.unwrap_or(d.overlap_fraction),
        iterations: a.iterations.unwrap_or(d.iterations),
        amplitude_norm: match a.normalize.as_deref() {
            None | Some("median") => AmplitudeNorm::Median,
            Some("none") => AmplitudeNorm::None,
            Some(other) => return Err(Error::Config(format!("unknown normalization '{other}'"))),
        },
    };
    let field = if a.cnn_only.unwrap_or(false) {
        cnn_only_reconstruct(&holo, &wa, &wp, &cfg)?
    } else {
        utirnet_reconstruct(&holo, &wa, &wp, &cfg)?
    };
    write_outputs(&field, a.out_amp.as_ref(), a.out_phase.as_ref(), a.out_field.as_ref())
}

fn cmd_gs(a: GsArgs) -> Result<()> {
    let holos = need(non_empty(a.holograms), "holograms")?;
    let lambdas = need(non_empty(a.wavelengths), "wavelengths")?;
    let zs = need(non_empty(a.z), "z")?;
    if lambdas.len() != holos.len() || (zs.len() != 1 && zs.len() != holos.len()) {
        return Err(Error::Config("need one wavelength per hologram and one or per-hologram z".into()));
    }
    let pitch = a.pixel.unwrap_or(2.4e-6) / a.magnification.unwrap_or(1.0);
    let constraints = holos
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(Constraint {
                intensity: read_any_raster(p, pitch)?.with_pitch(pitch)?,
                wavelength: lambdas[i],
                z: if zs.len() == 1 { zs[0] } else { zs[i] },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let problem = GsProblem::new(constraints, a.iters.unwrap_or(5), pitch);
    let result = if a.cff.unwrap_or(false) {
        let d = CffConfig::default();
        gs_cff(
            &problem,
            &CffConfig {
                sigma: a.cff_sigma.unwrap_or(d.sigma),
                strength: a.cff_strength.unwrap_or(d.strength),
            },
        )?
    } else {
        gs_multi(&problem)?
    };
    if let Some(p) = a.residuals {
        let mut s = String::from("iteration");
        for k in 0..holos.len() {
            s.push_str(&format!(",plane{k}"));
        }
        s.push('\n');
        for (i, row) in result.residuals.iter().enumerate() {
            s.push_str(&(i + 1).to_string());
            for r in row {
                s.push_str(&format!(",{r:.5e}"));
            }
            s.push('\n');
        }
        std::fs::write(p, s)?;
    }
    if let Some(f) = &result.filter {
        println!("object-plane filter: sigma {} strength {}", f.sigma, f.strength);
    }
    write_outputs(&result.field, a.out_amp.as_ref(), a.out_phase.as_ref(), a.out_field.as_ref())
}

fn eval_context<'a>(
    nets: Option<&'a (NetworkWeights, NetworkWeights)>,
    tile: Option<usize>,
    split: Option<String>,
) -> Result<EvalContext<'a>> {
    let mut ctx = EvalContext::default();
    if let Some((a, p)) = nets {
        ctx.amplitude_net = Some(a);
        ctx.phase_net = Some(p);
    }
    ctx.reconstruct.tile_size = tile.filter(|&t| t > 0);
    ctx.split = split.as_deref().map(parse_split).transpose()?;
    Ok(ctx)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let specs = need(non_empty(a.datasets), "datasets")?;
    let mut loaded = Vec::new();
    for s in &specs {
        let (name, dir) = match s.split_once('=') {
            Some((n, d)) => (n.to_string(), PathBuf::from(d)),
            None => {
                let d = PathBuf::from(s);
                let n = d.file_name().map_or_else(|| s.clone(), |f| f.to_string_lossy().into_owned());
                (n, d)
            }
        };
        loaded.push((name, DatasetManifest::load(dir)?));
    }
    let nets = load_nets(a.weights_amp, a.weights_phase)?;
    let default: &[Method] = if nets.is_some() { &Method::ALL } else { &[Method::As, Method::Gs, Method::GsCff] };
    let methods = parse_methods(a.methods, default)?;
    let mut ctx = eval_context(nets.as_ref(), a.tile_size, a.split)?;
    if let Some(l) = a.second_wavelength {
        ctx.gs_second_wavelength = l;
    }
    if let Some(i) = a.gs_iters {
        ctx.gs_iterations = i;
    }
    if let Some(s) = a.cff_sigma {
        ctx.cff.sigma = s;
    }
    let refs: Vec<(&str, &DatasetManifest)> = loaded.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let report = evaluate(&refs, &methods, &ctx)?;
    print!("{}", report.to_table());
    if let Some(p) = a.out_csv {
        std::fs::write(p, report.to_csv())?;
    }
    if let Some(p) = a.out_json {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(p) = a.plot {
        plot_eval(&report, p)?;
    }
    Ok(())
}

fn cmd_z_sweep(a: ZSweepArgs) -> Result<()> {
    let manifest = DatasetManifest::load(need(a.dataset, "dataset")?)?;
    let nets = load_nets(a.weights_amp, a.weights_phase)?
        .ok_or_else(|| Error::Config("--weights-amp and --weights-phase are required".into()))?;
    let ctx = eval_context(Some(&nets), a.tile_size, a.split)?;
    let z0 = manifest.params.z_distance;
    let z_values = match non_empty(a.z_values) {
        Some(v) => v,
        None => {
            let span = a.span.unwrap_or(0.5);
            let steps = a.steps.unwrap_or(11).max(2);
            (0..steps)
                .map(|i| z0 * (1.0 - span + 2.0 * span * i as f64 / (steps - 1) as f64))
                .collect()
        }
    };
    let limit = a.limit.unwrap_or(usize::MAX);
    let targets = manifest
        .pairs
        .iter()
        .filter(|p| ctx.split.map_or(true, |s| p.split == s))
        .take(limit)
        .map(|rec| Ok((read_raster(manifest.root.join(&rec.target))?, rec.kind)))
        .collect::<Result<Vec<_>>>()?;
    let sweep = z_sweep(&targets, &manifest.params, &z_values, &ctx)?;
    print!("{}", sweep.to_csv());
    if let Some(p) = a.out_csv {
        std::fs::write(p, sweep.to_csv())?;
    }
    if let Some(p) = a.plot {
        plot_z_sweep(&sweep, p)?;
    }
    Ok(())
}

fn cmd_bench_time(a: BenchTimeArgs) -> Result<()> {
    let nets = load_nets(a.weights_amp, a.weights_phase)?;
    let default: &[Method] = if nets.is_some() {
        &[Method::As, Method::Gs, Method::GsCff, Method::Utirnet]
    } else {
        &[Method::As, Method::Gs, Method::GsCff]
    };
    let methods = parse_methods(a.methods, default)?;
    let params = SystemFlags {
        wavelength: a.wavelength,
        pixel: a.pixel,
        z: a.z,
        magnification: None,
    }
    .params()?;
    let setup = TimingSetup {
        params,
        second_wavelength: a.second_wavelength.unwrap_or(561e-9),
        gs_iterations: a.gs_iters.unwrap_or(5),
        cff: CffConfig::default(),
        reconstruct: ReconstructConfig {
            tile_size: Some(a.tile_size.unwrap_or(512)),
            ..ReconstructConfig::default()
        },
        amplitude_net: nets.as_ref().map(|n| &n.0),
        phase_net: nets.as_ref().map(|n| &n.1),
    };
    let sizes = non_empty(a.sizes).unwrap_or_else(|| vec![512, 1024, 2048]);
    let report = time_methods(&sizes, &methods, a.reps.unwrap_or(3), &setup)?;
    println!("# {}", report.hardware);
    print!("{}", report.to_csv());
    if let Some(p) = a.out_csv {
        std::fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_VAR}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::MakeCorpus(a) => cmd_make_corpus(resolve(&a, a.config.as_deref())?),
        Command::GenDataset(a) => cmd_gen_dataset(resolve(&a, a.config.as_deref())?),
        Command::Train(a) => cmd_train(resolve(&a, a.config.as_deref())?),
        Command::Reconstruct(a) => cmd_reconstruct(resolve(&a, a.config.as_deref())?),
        Command::Gs(a) => cmd_gs(resolve(&a, a.config.as_deref())?),
        Command::Evaluate(a) => cmd_evaluate(resolve(&a, a.config.as_deref())?),
        Command::ZSweep(a) => cmd_z_sweep(resolve(&a, a.config.as_deref())?),
        Command::BenchTime(a) => cmd_bench_time(resolve(&a, a.config.as_deref())?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
