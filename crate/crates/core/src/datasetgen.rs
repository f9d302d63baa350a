//! Synthetic training data: clean target rasters prepared from ordinary
//! images, and their twin-image-corrupted counterparts produced by
//! simulating an in-line hologram and backpropagating it.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::io;
use crate::field::{wrap_phase, ComplexField, Raster, SystemParams};
use crate::imageops::{gaussian_blur, resize, Denoiser, IdentityDenoiser, NonLocalMeans};
use crate::propagate::{crop_center, pad_replicate_sides, PropagationPlan};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Amplitude,
    Phase,
}

impl std::fmt::Display for Kind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Kind::Amplitude => "amplitude",
            Kind::Phase => "phase",
        })
    }
}

impl std::str::FromStr for Kind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amp" | "amplitude" => Ok(Kind::Amplitude),
            "phase" | "ph" => Ok(Kind::Phase),
            other => Err(Error::Parameter(format!("unknown channel kind '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Target phase span before wrapping: `[-2pi, 0]` or `[-pi/2, 0]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseRange {
    Full,
    Quarter,
}

impl PhaseRange {
    pub fn lower(self) -> f64 {
        match self {
            PhaseRange::Full => -2.0 * PI,
            PhaseRange::Quarter => -PI / 2.0,
        }
    }

    /// Even coin flip from the pair seed.
    pub fn pick(seed: u64) -> Self {
        if ChaCha8Rng::seed_from_u64(seed).gen_bool(0.5) {
            PhaseRange::Full
        } else {
            PhaseRange::Quarter
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserKind {
    Nlm,
    Identity,
}

impl DenoiserKind {
    pub fn build(self) -> Box<dyn Denoiser> {
        match self {
            DenoiserKind::Nlm => Box::new(NonLocalMeans::default()),
            DenoiserKind::Identity => Box::new(IdentityDenoiser),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub tile_size: usize,
    /// Gaussian sigma (pixels) of the phase-target high-pass.
    pub highpass_sigma: f64,
    pub denoiser: DenoiserKind,
    /// Top-level corpus subfolders whose images are labelled validation.
    pub validation_subdirs: Vec<String>,
    /// Forces one split label onto every pair (e.g. an out-of-distribution test corpus).
    pub force_split: Option<Split>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            tile_size: 512,
            highpass_sigma: 10.0,
            denoiser: DenoiserKind::Nlm,
            validation_subdirs: Vec::new(),
            force_split: None,
        }
    }
}

/// One simulated example.
#[derive(Clone, Debug)]
pub struct TrainingPair {
    /// Backpropagated, twin-image-corrupted channel.
    pub input: Raster,
    /// Clean channel.
    pub target: Raster,
    /// Camera-plane intensity of the padded object (twice the tile size).
    pub hologram: Raster,
    pub kind: Kind,
    pub params: SystemParams,
    pub source_id: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub kind: Kind,
    pub split: Split,
    pub source_id: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub phase_range: Option<PhaseRange>,
    pub width: usize,
    pub height: usize,
    pub input: String,
    pub target: String,
    pub hologram: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub params: SystemParams,
    pub tile_size: usize,
    pub master_seed: u64,
    pub corpus: Vec<String>,
    pub denoiser: String,
    pub highpass_sigma: f64,
    pub pairs: Vec<PairRecord>,
    /// Directory the record paths are relative to; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(dir_or_file: impl AsRef<Path>) -> Result<Self> {
        let p = dir_or_file.as_ref();
        let file = if p.is_dir() { p.join(MANIFEST_FILE) } else { p.to_path_buf() };
        let text = std::fs::read_to_string(&file)?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::format(&file, format!("unsupported manifest version {}", m.version)));
        }
        m.root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the serialized manifest, hex encoded.
    pub fn hash(&self) -> Result<String> {
        Ok(hex_digest(self.to_json()?.as_bytes()))
    }

    pub fn pairs_of(&self, kind: Kind) -> impl Iterator<Item = &PairRecord> {
        self.pairs.iter().filter(move |p| p.kind == kind)
    }

    pub fn load_pair(&self, rec: &PairRecord) -> Result<TrainingPair> {
        let input = io::read_raster(self.root.join(&rec.input))?;
        let target = io::read_raster(self.root.join(&rec.target))?;
        let hologram = io::read_raster(self.root.join(&rec.hologram))?;
        Ok(TrainingPair {
            input,
            target,
            hologram,
            kind: rec.kind,
            params: self.params,
            source_id: rec.source_id.clone(),
            seed: rec.seed,
        })
    }

    /// Checks that every referenced file exists with the recorded dimensions.
    pub fn validate(&self) -> Result<()> {
        for rec in &self.pairs {
            let pair = self.load_pair(rec)?;
            for (name, r, w, h) in [
                ("input", &pair.input, rec.width, rec.height),
                ("target", &pair.target, rec.width, rec.height),
                ("hologram", &pair.hologram, 2 * rec.width, 2 * rec.height),
            ] {
                if r.dims() != (w, h) {
                    return Err(Error::Shape(format!(
                        "{} {name}: {:?}, manifest says {w}x{h}",
                        rec.source_id,
                        r.dims()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-pair seed derived from the master seed and the corpus item identifier.
pub fn pair_seed(master_seed: u64, source_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(source_id.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

fn is_constant(r: &Raster) -> bool {
    let (lo, hi) = r.min_max();
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1.0)
}

/// Affine map of min..max onto lo..hi; constant input maps to `fallback`.
fn normalize_into(r: &Raster, lo: f64, hi: f64, fallback: f64) -> Raster {
    if is_constant(r) {
        warn!("constant image, normalization is degenerate; using {fallback}");
        return r.map(|_| fallback);
    }
    let (mn, mx) = r.min_max();
    let scale = (hi - lo) / (mx - mn);
    r.map(|v| (lo + (v - mn) * scale).clamp(lo, hi))
}

fn resize_and_denoise(image: &Raster, size: usize, denoiser: &dyn Denoiser) -> Result<Raster> {
    if image.is_empty() {
        return Err(Error::Data("empty image".into()));
    }
    Ok(denoiser.denoise(&resize(image, size, size)))
}

/// Grayscale image -> `size` x `size` amplitude target in [0, 1].
pub fn prepare_target_amplitude(image: &Raster, size: usize, denoiser: &dyn Denoiser) -> Result<Raster> {
    let r = resize_and_denoise(image, size, denoiser)?;
    Ok(normalize_into(&r, 0.0, 1.0, 0.5))
}

/// Grayscale image -> `size` x `size` phase target in [0, 2pi]: high-pass,
/// normalize into `range`, wrap, then shift by +pi.
pub fn prepare_target_phase(
    image: &Raster,
    size: usize,
    highpass_sigma: f64,
    range: PhaseRange,
    denoiser: &dyn Denoiser,
) -> Result<Raster> {
    let r = resize_and_denoise(image, size, denoiser)?;
    let low = gaussian_blur(&r, highpass_sigma);
    let hp = Raster::new(
        r.width(),
        r.height(),
        r.pitch(),
        r.values().iter().zip(low.values()).map(|(a, b)| a - b).collect(),
    )?;
    let norm = normalize_into(&hp, range.lower(), 0.0, 0.0);
    Ok(norm.map(|v| wrap_phase(v) + PI))
}

/// Object field for a target raster: amplitude object with flat phase, or a
/// unit-amplitude phase object with the +pi shift removed.
pub fn object_field(target: &Raster, kind: Kind) -> ComplexField {
    match kind {
        Kind::Amplitude => target.to_complex(),
        Kind::Phase => target.map(|p| num_complex::Complex64::from_polar(1.0, p - PI)),
    }
}

/// Simulates the hologram of `target` and its backpropagated reconstruction.
/// Returns `(input, hologram)`; the hologram covers the padded field.
pub fn forward_model(target: &Raster, kind: Kind, params: &SystemParams) -> Result<(Raster, Raster)> {
    params.validate()?;
    let (w, h) = target.dims();
    let target = target.clone().with_pitch(params.pitch())?;
    let padded = pad_replicate_sides(&target, w / 2, w - w / 2, h / 2, h - h / 2);
    let object = object_field(&padded, kind);
    let (pw, ph) = padded.dims();
    let z = params.z_distance;
    let to_camera = PropagationPlan::relative(pw, ph, params.pitch(), params.wavelength, -z)?;
    let to_object = PropagationPlan::relative(pw, ph, params.pitch(), params.wavelength, z)?;
    let camera = to_camera.apply(&object)?;
    let hologram = camera.map(|c| c.norm_sqr());
    let back = to_object.apply(&camera.amplitude().to_complex())?;
    let back = crop_center(&back, w, h)?;
    let input = match kind {
        Kind::Amplitude => back.amplitude(),
        Kind::Phase => back.phase().map(|p| p + PI),
    };
    Ok((input, hologram))
}

pub fn synthesize_pair(
    target: &Raster,
    kind: Kind,
    params: &SystemParams,
    source_id: &str,
    seed: u64,
) -> Result<TrainingPair> {
    let (input, hologram) = forward_model(target, kind, params)?;
    Ok(TrainingPair {
        input,
        target: target.clone().with_pitch(params.pitch())?,
        hologram,
        kind,
        params: *params,
        source_id: source_id.to_string(),
        seed,
    })
}

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp", "tif", "tiff"];

/// Image files under `dir`, as (relative id with '/' separators, path), sorted by id.
pub fn list_corpus(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Config(format!("corpus directory {} not found", dir.display())));
    }
    let mut items = Vec::new();
    for entry in walkdir::WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry
            .path()
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase);
        if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        items.push((id, entry.path().to_path_buf()));
    }
    items.sort();
    Ok(items)
}

fn split_for(id: &str, cfg: &DatasetConfig) -> Split {
    if let Some(s) = cfg.force_split {
        return s;
    }
    match id.split_once('/') {
        Some((top, _)) if cfg.validation_subdirs.iter().any(|v| v == top) => Split::Validation,
        _ => Split::Train,
    }
}

/// Generates `count` corpus images' worth of amplitude and phase pairs under
/// `out_dir` and writes the manifest there.
pub fn build_dataset(
    corpus_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    count: usize,
    params: &SystemParams,
    master_seed: u64,
    cfg: &DatasetConfig,
) -> Result<DatasetManifest> {
    params.validate()?;
    if cfg.tile_size < 2 {
        return Err(Error::Parameter(format!("tile size {} is too small", cfg.tile_size)));
    }
    let corpus_dir = corpus_dir.as_ref();
    let out_dir = out_dir.as_ref();
    let mut manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        params: *params,
        tile_size: cfg.tile_size,
        master_seed,
        corpus: vec![corpus_dir.display().to_string()],
        denoiser: cfg.denoiser.build().name(),
        highpass_sigma: cfg.highpass_sigma,
        pairs: Vec::new(),
        root: out_dir.to_path_buf(),
    };
    if count == 0 {
        return Ok(manifest);
    }

    let mut items = list_corpus(corpus_dir)?;
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(master_seed));
    let mut selected = Vec::with_capacity(count);
    for (id, path) in items {
        if selected.len() == count {
            break;
        }
        match io::read_image(&path, params.pitch()) {
            Ok(img) => selected.push((id, img)),
            Err(e) => warn!("skipping unreadable corpus image {}: {e}", path.display()),
        }
    }
    if selected.len() < count {
        return Err(Error::Count(format!(
            "corpus {} has {} readable images, {count} requested",
            corpus_dir.display(),
            selected.len()
        )));
    }
    selected.sort_by(|a, b| a.0.cmp(&b.0));

    for kind in ["amplitude", "phase"] {
        std::fs::create_dir_all(out_dir.join(kind))?;
    }
    let denoiser = cfg.denoiser.build();
    let records: Vec<Vec<PairRecord>> = selected
        .par_iter()
        .enumerate()
        .map(|(idx, (id, img))| generate_item(idx, id, img, out_dir, params, master_seed, cfg, denoiser.as_ref()))
        .collect::<Result<_>>()?;
    manifest.pairs = records.into_iter().flatten().collect();
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_json()?)?;
    Ok(manifest)
}

#[allow(clippy::too_many_arguments)]
fn generate_item(
    idx: usize,
    id: &str,
    img: &Raster,
    out_dir: &Path,
    params: &SystemParams,
    master_seed: u64,
    cfg: &DatasetConfig,
    denoiser: &dyn Denoiser,
) -> Result<Vec<PairRecord>> {
    let seed = pair_seed(master_seed, id);
    let split = split_for(id, cfg);
    let size = cfg.tile_size;
    let range = PhaseRange::pick(seed);
    // targets are stored as f32, so simulate from the stored values
    let quantize = |r: Raster| r.map(|v| v as f32 as f64);
    let amp = quantize(prepare_target_amplitude(img, size, denoiser)?);
    let phase = quantize(prepare_target_phase(img, size, cfg.highpass_sigma, range, denoiser)?);

    let mut out = Vec::with_capacity(2);
    for (kind, target, pr) in [(Kind::Amplitude, amp, None), (Kind::Phase, phase, Some(range))] {
        let pair = synthesize_pair(&target, kind, params, id, seed)?;
        let stem = format!("{kind}/{idx:05}");
        let rec = PairRecord {
            kind,
            split,
            source_id: id.to_string(),
            seed,
            phase_range: pr,
            width: size,
            height: size,
            input: format!("{stem}_input.raw"),
            target: format!("{stem}_target.raw"),
            hologram: format!("{stem}_hologram.raw"),
        };
        io::write_raster(out_dir.join(&rec.input), &pair.input)?;
        io::write_raster(out_dir.join(&rec.target), &pair.target)?;
        io::write_raster(out_dir.join(&rec.hologram), &pair.hologram)?;
        out.push(rec);
    }
    Ok(out)
}
