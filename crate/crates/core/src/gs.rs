//! Multi-constraint Gerchberg-Saxton phase retrieval, with an optional
//! object-plane background filter.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field::{sample_phase, ComplexField, Raster};
use crate::imageops::gaussian_blur;
use crate::propagate::PropagationPlan;
use crate::{Error, Result};

/// One recorded hologram: intensity at distance `z` behind the object at `wavelength`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub intensity: Raster,
    pub wavelength: f64,
    pub z: f64,
}

#[derive(Clone, Debug)]
pub struct GsProblem {
    pub constraints: Vec<Constraint>,
    pub iterations: usize,
    pub pitch: f64,
}

impl GsProblem {
    pub fn new(constraints: Vec<Constraint>, iterations: usize, pitch: f64) -> Self {
        GsProblem {
            constraints,
            iterations,
            pitch,
        }
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .constraints
            .first()
            .ok_or_else(|| Error::Count("at least one intensity constraint is required".into()))?;
        if self.iterations == 0 {
            return Err(Error::Parameter("iterations must be at least 1".into()));
        }
        if !(self.pitch > 0.0) {
            return Err(Error::Parameter(format!("pitch {} must be positive", self.pitch)));
        }
        for c in &self.constraints {
            c.intensity.ensure_same_shape(&first.intensity)?;
            if !(c.wavelength > 0.0) || !c.z.is_finite() {
                return Err(Error::Parameter(format!("bad constraint λ={} z={}", c.wavelength, c.z)));
            }
            if c.intensity.values().iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Data("constraint intensity has negative or non-finite samples".into()));
            }
        }
        Ok(())
    }
}

/// Background flattening applied to the object-plane amplitude every pass.
///
/// An approximation of complex-field filtering: the amplitude's Gaussian
/// low-pass deviation from its mean is subtracted (scaled by `strength`) and
/// the result clamped at zero. Phase is left untouched.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CffConfig {
    /// Low-pass sigma in pixels.
    pub sigma: f64,
    pub strength: f64,
}

impl Default for CffConfig {
    fn default() -> Self {
        CffConfig {
            sigma: 10.0,
            strength: 1.0,
        }
    }
}

fn cff_filter(field: &ComplexField, cfg: &CffConfig) -> Result<ComplexField> {
    let a = field.amplitude();
    let bg = gaussian_blur(&a, cfg.sigma);
    let mean = bg.mean();
    let values = field
        .values()
        .iter()
        .zip(a.values())
        .zip(bg.values())
        .map(|((c, &amp), &b)| Complex64::from_polar((amp - cfg.strength * (b - mean)).max(0.0), sample_phase(*c)))
        .collect();
    ComplexField::new(field.width(), field.height(), field.pitch(), values)
}

#[derive(Clone, Debug)]
pub struct GsResult {
    /// Object-plane field after the final iteration.
    pub field: ComplexField,
    /// `residuals[i][k]`: RMSE between predicted and measured amplitude on
    /// arrival at constraint `k` during iteration `i`.
    pub residuals: Vec<Vec<f64>>,
    /// Object-plane filter used, if any.
    pub filter: Option<CffConfig>,
}

fn run(problem: &GsProblem, filter: Option<&CffConfig>) -> Result<GsResult> {
    problem.validate()?;
    let cs = &problem.constraints;
    let (w, h) = cs[0].intensity.dims();
    let pitch = problem.pitch;
    let mut to_object = Vec::with_capacity(cs.len());
    let mut to_camera = Vec::with_capacity(cs.len());
    for c in cs {
        to_object.push(PropagationPlan::relative(w, h, pitch, c.wavelength, c.z)?);
        to_camera.push(PropagationPlan::relative(w, h, pitch, c.wavelength, -c.z)?);
    }
    let amps: Vec<Raster> = cs.iter().map(|c| c.intensity.map(f64::sqrt)).collect();

    let mut camera = amps[0].to_complex().with_pitch(pitch)?;
    let mut residuals = Vec::with_capacity(problem.iterations);
    for _ in 0..problem.iterations {
        let mut row = vec![0.0; cs.len()];
        for k in 0..cs.len() {
            let mut object = to_object[k].apply(&camera)?;
            if let Some(f) = filter {
                object = cff_filter(&object, f)?;
            }
            let next = (k + 1) % cs.len();
            let predicted = to_camera[next].apply(&object)?;
            let measured = &amps[next];
            let mut sq = 0.0;
            let values: Vec<Complex64> = predicted
                .values()
                .iter()
                .zip(measured.values())
                .map(|(p, &m)| {
                    let d = p.norm() - m;
                    sq += d * d;
                    Complex64::from_polar(m, sample_phase(*p))
                })
                .collect();
            row[next] = (sq / values.len() as f64).sqrt();
            camera = ComplexField::new(w, h, pitch, values)?;
        }
        residuals.push(row);
    }
    let mut field = to_object[0].apply(&camera)?;
    if let Some(f) = filter {
        field = cff_filter(&field, f)?;
    }
    Ok(GsResult {
        field,
        residuals,
        filter: filter.copied(),
    })
}

/// Cyclic projection between the constraint planes, starting from the first
/// hologram's amplitude with zero phase.
pub fn gs_multi(problem: &GsProblem) -> Result<GsResult> {
    run(problem, None)
}

/// [`gs_multi`] with [`CffConfig`] filtering at the object plane.
/// A zero `strength` disables the filter.
pub fn gs_cff(problem: &GsProblem, cfg: &CffConfig) -> Result<GsResult> {
    if cfg.strength == 0.0 {
        return run(problem, None);
    }
    if !(cfg.sigma > 0.0) || !cfg.strength.is_finite() {
        return Err(Error::Parameter(format!("invalid filter {cfg:?}")));
    }
    run(problem, Some(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::rmse;
    use crate::propagate::angular_spectrum_relative;

    const PITCH: f64 = 2.4e-6;
    const Z: f64 = 1e-3;

    fn object(n: usize) -> ComplexField {
        ComplexField::from_fn(n, n, PITCH, |x, y| {
            let d1 = (x as f64 - 30.0).hypot(y as f64 - 34.0);
            let d2 = (x as f64 - 70.0).hypot(y as f64 - 80.0);
            let a = if d1 < 7.0 || d2 < 5.0 { 0.35 } else { 1.0 };
            Complex64::new(a, 0.0)
        })
        .unwrap()
    }

    fn constraint(obj: &ComplexField, wavelength: f64, z: f64) -> Constraint {
        let cam = angular_spectrum_relative(obj, -z, wavelength).unwrap();
        Constraint {
            intensity: cam.map(|c| c.norm_sqr()),
            wavelength,
            z,
        }
    }

    fn two_wavelengths(obj: &ComplexField, iterations: usize) -> GsProblem {
        GsProblem::new(
            vec![constraint(obj, 405e-9, Z), constraint(obj, 532e-9, Z)],
            iterations,
            PITCH,
        )
    }

    #[test]
    fn two_wavelengths_beat_single_backpropagation() {
        let obj = object(128);
        let p = two_wavelengths(&obj, 5);
        let gs = gs_multi(&p).unwrap();
        let single = gs_multi(&GsProblem::new(vec![p.constraints[0].clone()], 1, PITCH)).unwrap();
        let truth = obj.amplitude();
        let e_gs = rmse(&gs.field.amplitude(), &truth).unwrap();
        let e_as = rmse(&single.field.amplitude(), &truth).unwrap();
        assert!(e_gs < e_as, "gs {e_gs} vs as {e_as}");
        let first: Vec<f64> = gs.residuals.iter().map(|r| r[0]).collect();
        for w in first.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{first:?}");
        }
    }

    #[test]
    fn single_constraint_single_iteration_is_backpropagation() {
        let obj = object(64);
        let c = constraint(&obj, 405e-9, Z);
        let plain = angular_spectrum_relative(&c.intensity.map(f64::sqrt).to_complex(), Z, 405e-9).unwrap();
        let gs = gs_multi(&GsProblem::new(vec![c.clone()], 1, PITCH)).unwrap();
        for (a, b) in gs.field.values().iter().zip(plain.values()) {
            assert!((a - b).norm() < 1e-10);
        }
        // identical constraints at the same distance also collapse
        let gs2 = gs_multi(&GsProblem::new(vec![c.clone(), c], 5, PITCH)).unwrap();
        for (a, b) in gs2.field.values().iter().zip(plain.values()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn satisfied_constraints_are_a_fixed_point() {
        let flat = ComplexField::filled(32, 32, PITCH, Complex64::new(1.0, 0.0)).unwrap();
        let gs = gs_multi(&two_wavelengths(&flat, 4)).unwrap();
        assert!(gs.residuals.iter().flatten().all(|&r| r < 1e-12));
        for c in gs.field.values() {
            assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
        let cff = gs_cff(&two_wavelengths(&flat, 4), &CffConfig::default()).unwrap();
        for c in cff.field.values() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn disabled_filter_matches_plain_gs() {
        let p = two_wavelengths(&object(64), 3);
        let a = gs_multi(&p).unwrap();
        let b = gs_cff(&p, &CffConfig { sigma: 5.0, strength: 0.0 }).unwrap();
        assert_eq!(a.field, b.field);
        assert!(b.filter.is_none());
        let c = gs_cff(&p, &CffConfig::default()).unwrap();
        assert_eq!(c.filter, Some(CffConfig::default()));
    }

    #[test]
    fn filter_flattens_slow_background() {
        let n = 128;
        let obj = ComplexField::from_fn(n, n, PITCH, |x, y| {
            let bg = 1.0 + 0.15 * (2.0 * std::f64::consts::PI * x as f64 / n as f64).sin();
            let d = (x as f64 - 96.0).hypot(y as f64 - 96.0);
            Complex64::new(if d < 6.0 { 0.3 } else { bg }, 0.0)
        })
        .unwrap();
        let p = two_wavelengths(&obj, 5);
        let empty = |f: &ComplexField| {
            let a = f.amplitude().window(8, 8, 56, 56).unwrap();
            let m = a.mean();
            (a.values().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / a.len() as f64).sqrt()
        };
        let plain = empty(&gs_multi(&p).unwrap().field);
        let filtered = empty(&gs_cff(&p, &CffConfig::default()).unwrap().field);
        assert!(filtered < plain, "{filtered} vs {plain}");
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = constraint(&object(64), 405e-9, Z);
        let mut b = constraint(&object(64), 532e-9, Z);
        b.intensity = b.intensity.window(0, 0, 32, 32).unwrap();
        assert!(matches!(gs_multi(&GsProblem::new(vec![a, b], 2, PITCH)), Err(Error::Shape(_))));
    }
}
