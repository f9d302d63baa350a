//! Sampled 2-D grids (real rasters and complex optical fields) and the
//! primitives shared by the rest of the crate.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A row-major 2-D grid of samples with a physical sampling pitch in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    pitch: f64,
    values: Vec<T>,
}

/// Real-valued grid: amplitude, phase, intensity, or plain image data.
pub type Raster = Grid<f64>;

/// Complex optical field.
pub type ComplexField = Grid<Complex64>;

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, pitch: f64, values: Vec<T>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples do not fill a {width}x{height} grid",
                values.len()
            )));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        Ok(Grid {
            width,
            height,
            pitch,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, pitch: f64, value: T) -> Result<Self> {
        Self::new(width, height, pitch, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        pitch: f64,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, pitch, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.values[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    /// Same dimensions and pitch, new sample values.
    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            pitch: self.pitch,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn with_pitch(mut self, pitch: f64) -> Result<Self> {
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        self.pitch = pitch;
        Ok(self)
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Sub-window starting at (x0, y0).
    pub fn window(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Shape(format!(
                "window {width}x{height}@({x0},{y0}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            let start = y * self.width + x0;
            values.extend_from_slice(&self.values[start..start + width]);
        }
        Self::new(width, height, self.pitch, values)
    }
}

impl Raster {
    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn median(&self) -> f64 {
        median(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Zero-phase complex field with these samples as amplitude.
    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

impl ComplexField {
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn amplitude(&self) -> Raster {
        self.map(|c| c.norm())
    }

    pub fn phase(&self) -> Raster {
        self.map(sample_phase)
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Optical system description shared by simulation and reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Illumination wavelength, meters.
    pub wavelength: f64,
    /// Camera pixel pitch, meters.
    pub pixel_size: f64,
    /// Sample-to-camera distance, meters.
    pub z_distance: f64,
    pub magnification: f64,
}

impl SystemParams {
    /// Lensless setup used for the reference experiments: 405 nm, 2.4 um pixels.
    pub fn lensless(z_distance: f64) -> Self {
        SystemParams {
            wavelength: 405e-9,
            pixel_size: 2.4e-6,
            z_distance,
            magnification: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("wavelength", self.wavelength),
            ("pixel_size", self.pixel_size),
            ("z_distance", self.z_distance),
            ("magnification", self.magnification),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Object-plane sampling pitch.
    pub fn pitch(&self) -> f64 {
        self.pixel_size / self.magnification
    }

    pub fn with_z(self, z_distance: f64) -> Self {
        SystemParams { z_distance, ..self }
    }
}

/// Phase of one sample in (-pi, pi]; zero-magnitude samples get phase 0.
#[inline]
pub fn sample_phase(c: Complex64) -> f64 {
    if c.re == 0.0 && c.im == 0.0 {
        0.0
    } else {
        wrap_phase(c.im.atan2(c.re))
    }
}

/// Splits a field into its amplitude and phase rasters.
pub fn split(field: &ComplexField) -> (Raster, Raster) {
    (field.amplitude(), field.phase())
}

pub fn combine(amplitude: &Raster, phase: &Raster) -> Result<ComplexField> {
    amplitude.ensure_same_shape(phase)?;
    if amplitude.pitch() != phase.pitch() {
        return Err(Error::Shape(format!(
            "pitch {} vs {}",
            amplitude.pitch(),
            phase.pitch()
        )));
    }
    let values = amplitude
        .values()
        .iter()
        .zip(phase.values())
        .map(|(&a, &p)| Complex64::from_polar(a, p))
        .collect();
    ComplexField::new(amplitude.width(), amplitude.height(), amplitude.pitch(), values)
}

/// Wraps an angle into (-pi, pi]. Values already in range are returned unchanged.
#[inline]
pub fn wrap_phase(x: f64) -> f64 {
    if x > -PI && x <= PI {
        return x;
    }
    let r = (x + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

pub fn rmse(a: &Raster, b: &Raster) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sum / a.len() as f64).sqrt())
}

/// Root-mean-square magnitude of a complex field.
pub fn rms(field: &ComplexField) -> f64 {
    (field.energy() / field.len().max(1) as f64).sqrt()
}

/// RMS of the complex difference, divided by the RMS of `reference`.
pub fn relative_rmse(estimate: &ComplexField, reference: &ComplexField) -> Result<f64> {
    estimate.ensure_same_shape(reference)?;
    let diff: f64 = estimate
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let refe = reference.energy();
    Ok(if refe == 0.0 {
        diff.sqrt()
    } else {
        (diff / refe).sqrt()
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn field(v: Complex64) -> ComplexField {
        ComplexField::filled(4, 3, 1e-6, v).unwrap()
    }

    #[test]
    fn split_examples() {
        let (a, p) = split(&field(Complex64::new(1.0, 0.0)));
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert!(p.values().iter().all(|&v| v == 0.0));

        let (a, p) = split(&field(Complex64::new(0.0, 1.0)));
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert!(p.values().iter().all(|&v| (v - PI / 2.0).abs() < 1e-15));

        let (a, p) = split(&field(Complex64::new(-2.0, 0.0)));
        assert!(a.values().iter().all(|&v| v == 2.0));
        assert!(p.values().iter().all(|&v| v == PI));

        // the negative-zero imaginary part must not flip the branch
        let (_, p) = split(&field(Complex64::new(-2.0, -0.0)));
        assert!(p.values().iter().all(|&v| v == PI));
    }

    #[test]
    fn zero_sample_has_zero_phase() {
        let (a, p) = split(&field(Complex64::new(0.0, 0.0)));
        assert!(a.values().iter().all(|&v| v == 0.0));
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn combine_examples() {
        let ones = Raster::filled(3, 2, 1e-6, 1.0).unwrap();
        let zeros = Raster::filled(3, 2, 1e-6, 0.0).unwrap();
        let f = combine(&ones, &zeros).unwrap();
        assert!(f.values().iter().all(|&c| c == Complex64::new(1.0, 0.0)));

        let twos = Raster::filled(3, 2, 1e-6, 2.0).unwrap();
        let pis = Raster::filled(3, 2, 1e-6, PI).unwrap();
        let f = combine(&twos, &pis).unwrap();
        for c in f.values() {
            assert_abs_diff_eq!(c.re, -2.0, epsilon = 1e-15);
            assert_abs_diff_eq!(c.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn combine_rejects_mismatched_shapes() {
        let a = Raster::filled(3, 2, 1e-6, 1.0).unwrap();
        let b = Raster::filled(2, 3, 1e-6, 0.0).unwrap();
        assert!(matches!(combine(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn grid_rejects_bad_construction() {
        assert!(Raster::new(2, 2, 1e-6, vec![0.0; 3]).is_err());
        assert!(Raster::new(2, 2, 0.0, vec![0.0; 4]).is_err());
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert_abs_diff_eq!(wrap_phase(1.5 * PI), -0.5 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_phase(-2.0 * PI), 0.0, epsilon = 1e-15);
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert_abs_diff_eq!(wrap_phase(3.0 * PI), PI, epsilon = 1e-14);
    }

    #[test]
    fn rmse_examples() {
        let a = Raster::filled(3, 3, 1.0, 1.0).unwrap();
        let b = Raster::filled(3, 3, 1.0, 0.0).unwrap();
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &b).unwrap(), 1.0);
        let a = Raster::new(2, 1, 1.0, vec![0.0, 0.0]).unwrap();
        let b = Raster::new(2, 1, 1.0, vec![3.0, 4.0]).unwrap();
        // (9 + 16) / 2 = 12.5
        assert_abs_diff_eq!(rmse(&a, &b).unwrap(), 12.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(rmse(&a, &b).unwrap(), 3.5355, epsilon = 1e-4);
    }

    #[test]
    fn rmse_rejects_mismatch() {
        let a = Raster::filled(3, 3, 1.0, 1.0).unwrap();
        let b = Raster::filled(3, 2, 1.0, 1.0).unwrap();
        assert!(rmse(&a, &b).is_err());
    }

    #[test]
    fn median_small_arrays() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    fn raster_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, len)
    }

    proptest! {
        #[test]
        fn split_combine_round_trip(
            amps in prop::collection::vec(1e-3f64..5.0, 12),
            phases in prop::collection::vec(-PI..PI, 12),
        ) {
            let f = ComplexField::new(4, 3, 1e-6,
                amps.iter().zip(&phases).map(|(&a, &p)| Complex64::from_polar(a, p)).collect()).unwrap();
            let (a, p) = split(&f);
            let g = combine(&a, &p).unwrap();
            for (x, y) in f.values().iter().zip(g.values()) {
                prop_assert!((x - y).norm() < 1e-12);
            }
            let (a2, p2) = split(&combine(&a, &p).unwrap());
            for (x, y) in a.values().iter().zip(a2.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in p.values().iter().zip(p2.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn wrap_is_idempotent_and_congruent(x in -1e3f64..1e3) {
            let w = wrap_phase(x);
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_phase(w), w);
            let turns = (x - w) / (2.0 * PI);
            prop_assert!((turns - turns.round()).abs() < 1e-9);
        }

        #[test]
        fn rmse_symmetric_and_triangle(a in raster_strategy(16), b in raster_strategy(16), c in raster_strategy(16)) {
            let r = |v: &Vec<f64>| Raster::new(4, 4, 1.0, v.clone()).unwrap();
            let (a, b, c) = (r(&a), r(&b), r(&c));
            prop_assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
            prop_assert!(rmse(&a, &c).unwrap() <= rmse(&a, &b).unwrap() + rmse(&b, &c).unwrap() + 1e-12);
        }
    }
}
