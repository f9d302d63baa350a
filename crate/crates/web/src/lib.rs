//! Browser bindings: simulate an in-line hologram, backpropagate it, or run
//! two-wavelength Gerchberg-Saxton on it. Images come back as RGBA bytes.

use twinfree::bench::eval::{channel, gs_problem};
use twinfree::corpus::{render, Family};
use twinfree::datasetgen::{synthesize_pair, Kind, TrainingPair};
use twinfree::field::{rmse, Raster, SystemParams};
use twinfree::gs::{gs_cff, gs_multi, CffConfig};
use twinfree::propagate::crop_center;
use wasm_bindgen::prelude::*;

const SECOND_WAVELENGTH: f64 = 561e-9;

fn js_err(e: twinfree::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Grayscale RGBA, scaled to the raster's own range.
fn to_rgba(r: &Raster) -> Vec<u8> {
    let (lo, hi) = r.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = Vec::with_capacity(r.len() * 4);
    for v in r.values() {
        let g = (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8;
        out.extend_from_slice(&[g, g, g, 255]);
    }
    out
}

#[wasm_bindgen]
pub struct Scene {
    pair: TrainingPair,
    last: Option<Raster>,
}

#[wasm_bindgen]
impl Scene {
    /// Renders a procedural object and simulates its hologram at `z_mm`.
    /// The hologram covers twice the object size.
    #[wasm_bindgen(constructor)]
    pub fn new(animals: bool, class: usize, seed: u32, size: usize, z_mm: f64, phase: bool) -> Result<Scene, JsValue> {
        let family = if animals { Family::Animals } else { Family::Flowers };
        let class = class % family.classes().len();
        let kind = if phase { Kind::Phase } else { Kind::Amplitude };
        let params = SystemParams::lensless(z_mm * 1e-3);
        let image = render(family, class, seed as u64, size);
        let target = match kind {
            Kind::Amplitude => image,
            Kind::Phase => image.map(|v| std::f64::consts::PI * (0.5 + v)),
        };
        let pair = synthesize_pair(&target, kind, &params, "demo", seed as u64).map_err(js_err)?;
        Ok(Scene { pair, last: None })
    }

    pub fn size(&self) -> usize {
        self.pair.target.width()
    }

    pub fn hologram_size(&self) -> usize {
        self.pair.hologram.width()
    }

    pub fn target_rgba(&self) -> Vec<u8> {
        to_rgba(&self.pair.target)
    }

    pub fn hologram_rgba(&self) -> Vec<u8> {
        to_rgba(&self.pair.hologram)
    }

    /// Plain angular-spectrum backpropagation, twin image included.
    pub fn backpropagate(&mut self) -> Vec<u8> {
        let out = to_rgba(&self.pair.input);
        self.last = Some(self.pair.input.clone());
        out
    }

    /// Two-wavelength Gerchberg-Saxton with a simulated 561 nm hologram.
    pub fn gerchberg_saxton(&mut self, iterations: usize, flatten_background: bool) -> Result<Vec<u8>, JsValue> {
        let problem = gs_problem(&self.pair, SECOND_WAVELENGTH, iterations.max(1)).map_err(js_err)?;
        let result = if flatten_background {
            gs_cff(&problem, &CffConfig::default())
        } else {
            gs_multi(&problem)
        }
        .map_err(js_err)?;
        let (w, h) = self.pair.target.dims();
        let field = crop_center(&result.field, w, h).map_err(js_err)?;
        let r = channel(&field, self.pair.kind);
        let out = to_rgba(&r);
        self.last = Some(r);
        Ok(out)
    }

    /// RMSE of the most recent reconstruction against the object, NaN before any.
    pub fn last_rmse(&self) -> f64 {
        self.last
            .as_ref()
            .and_then(|r| rmse(r, &self.pair.target).ok())
            .unwrap_or(f64::NAN)
    }
}
