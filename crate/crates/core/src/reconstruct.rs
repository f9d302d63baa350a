//! Hologram reconstruction with learned amplitude and phase filters followed
//! by a hologram-consistency update.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{combine, ComplexField, Raster, SystemParams};
use crate::propagate::{pad_replicate_sides, PropagationPlan};
use crate::tiling::{plan_tiles, process_tiled, RasterFilter};
use crate::{Error, Result};

/// Recorded camera-plane intensity and the system that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Hologram {
    intensity: Raster,
    params: SystemParams,
}

impl Hologram {
    /// The intensity is re-tagged with the effective object-plane pitch.
    pub fn new(intensity: Raster, params: SystemParams) -> Result<Self> {
        params.validate()?;
        if let Some(bad) = intensity.values().iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Data(format!("hologram intensity sample {bad} is negative or non-finite")));
        }
        let intensity = intensity.with_pitch(params.pitch())?;
        Ok(Hologram { intensity, params })
    }

    pub fn intensity(&self) -> &Raster {
        &self.intensity
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn amplitude(&self) -> Raster {
        self.intensity.map(f64::sqrt)
    }

    fn plans(&self) -> Result<(PropagationPlan, PropagationPlan)> {
        let (w, h) = self.intensity.dims();
        let p = &self.params;
        Ok((
            PropagationPlan::relative(w, h, p.pitch(), p.wavelength, p.z_distance)?,
            PropagationPlan::relative(w, h, p.pitch(), p.wavelength, -p.z_distance)?,
        ))
    }
}

/// Scalars undone by [`denormalize`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub amplitude_median: f64,
    pub phase_offset: f64,
}

/// Amplitude and phase channels as fed to the filters.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedField {
    pub amplitude: Raster,
    /// Phase shifted into (0, 2pi].
    pub phase: Raster,
    pub record: NormRecord,
}

/// How the amplitude channel is scaled before filtering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeNorm {
    /// Divide by the median amplitude (recorded holograms of arbitrary exposure).
    #[default]
    Median,
    /// Leave the amplitude as is (simulated holograms in training units).
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructConfig {
    /// Filter in tiles of this size when the field is larger; `None` filters the whole field.
    pub tile_size: Option<usize>,
    pub overlap_fraction: f64,
    /// Number of filter + consistency rounds.
    pub iterations: usize,
    pub amplitude_norm: AmplitudeNorm,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            tile_size: Some(512),
            overlap_fraction: 0.1,
            iterations: 1,
            amplitude_norm: AmplitudeNorm::Median,
        }
    }
}

/// Propagates the square root of the hologram intensity to the object plane.
pub fn backpropagate(holo: &Hologram) -> Result<ComplexField> {
    let (to_object, _) = holo.plans()?;
    to_object.apply(&holo.amplitude().to_complex())
}

/// Divides the amplitude by its median and shifts the phase by +pi.
pub fn normalize_experimental(field: &ComplexField) -> Result<NormalizedField> {
    normalize(field, AmplitudeNorm::Median)
}

pub fn normalize(field: &ComplexField, mode: AmplitudeNorm) -> Result<NormalizedField> {
    let amplitude = field.amplitude();
    let scale = match mode {
        AmplitudeNorm::Median => {
            let m = amplitude.median();
            if !(m > 0.0) {
                return Err(Error::Data(format!("median amplitude {m} is not positive")));
            }
            m
        }
        AmplitudeNorm::None => 1.0,
    };
    Ok(NormalizedField {
        amplitude: amplitude.map(|a| a / scale),
        phase: field.phase().map(|p| p + PI),
        record: NormRecord {
            amplitude_median: scale,
            phase_offset: PI,
        },
    })
}

/// Inverse of [`normalize`]. Negative amplitudes are clipped to zero.
pub fn denormalize(amplitude: &Raster, phase: &Raster, record: &NormRecord) -> Result<ComplexField> {
    let a = amplitude.map(|v| (v * record.amplitude_median).max(0.0));
    let p = phase.map(|v| v - record.phase_offset);
    combine(&a, &p)
}

/// Applies `filter` to the whole raster, padding odd dimensions by one
/// replicated row/column for the duration of the call.
fn filter_whole(filter: &dyn RasterFilter, r: &Raster) -> Result<Raster> {
    let (w, h) = r.dims();
    if w % 2 == 0 && h % 2 == 0 {
        return filter.apply(r);
    }
    let padded = pad_replicate_sides(r, 0, w % 2, 0, h % 2);
    filter.apply(&padded)?.window(0, 0, w, h)
}

fn filter_channel(filter: &dyn RasterFilter, r: &Raster, cfg: &ReconstructConfig) -> Result<Raster> {
    match cfg.tile_size {
        Some(t) if r.width() > t || r.height() > t => {
            let layout = plan_tiles(r.width(), r.height(), t, cfg.overlap_fraction)?;
            process_tiled(r, &layout, filter)
        }
        _ => filter_whole(filter, r),
    }
}

/// Normalize, filter both channels, denormalize.
fn filter_field(
    field: &ComplexField,
    amp: &dyn RasterFilter,
    phase: &dyn RasterFilter,
    cfg: &ReconstructConfig,
) -> Result<ComplexField> {
    let n = normalize(field, cfg.amplitude_norm)?;
    let a = filter_channel(amp, &n.amplitude, cfg)?;
    let p = filter_channel(phase, &n.phase, cfg)?;
    for (name, out, inp) in [("amplitude", &a, &n.amplitude), ("phase", &p, &n.phase)] {
        if out.dims() != inp.dims() {
            return Err(Error::Contract(format!("{name} filter changed {:?} to {:?}", inp.dims(), out.dims())));
        }
    }
    denormalize(&a.with_pitch(field.pitch())?, &p.with_pitch(field.pitch())?, &n.record)
}

/// Backpropagation followed by amplitude and phase filtering, without the
/// consistency update.
pub fn cnn_only_reconstruct(
    holo: &Hologram,
    amp: &dyn RasterFilter,
    phase: &dyn RasterFilter,
    cfg: &ReconstructConfig,
) -> Result<ComplexField> {
    filter_field(&backpropagate(holo)?, amp, phase, cfg)
}

/// Replaces the camera-plane amplitude of `field` with the recorded one and
/// returns to the object plane.
pub fn consistency_update(field: &ComplexField, holo: &Hologram) -> Result<ComplexField> {
    let (to_object, to_camera) = holo.plans()?;
    let camera = to_camera.apply(field)?;
    let measured = holo.amplitude();
    let values = camera
        .values()
        .iter()
        .zip(measured.values())
        .map(|(c, &a)| Complex64::from_polar(a, crate::field::sample_phase(*c)))
        .collect();
    let (w, h) = camera.dims();
    to_object.apply(&ComplexField::new(w, h, camera.pitch(), values)?)
}

/// Full reconstruction: backpropagate, filter, and enforce consistency with
/// the recorded hologram, `cfg.iterations` times.
pub fn utirnet_reconstruct(
    holo: &Hologram,
    amp: &dyn RasterFilter,
    phase: &dyn RasterFilter,
    cfg: &ReconstructConfig,
) -> Result<ComplexField> {
    if cfg.iterations == 0 {
        return Err(Error::Parameter("at least one iteration is required".into()));
    }
    let mut u = backpropagate(holo)?;
    for _ in 0..cfg.iterations {
        let filtered = filter_field(&u, amp, phase, cfg)?;
        u = consistency_update(&filtered, holo)?;
    }
    Ok(u)
}
