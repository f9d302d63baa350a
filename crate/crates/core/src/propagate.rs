//! Angular-spectrum free-space propagation and the replicate padding used
//! around it.
//!
//! Sign convention: positive `z` carries a camera-plane field back to the
//! object plane, negative `z` carries an object field forward to the camera.
//! Frequencies follow the FFT layout, `fx = k / (N * pitch)` with `k` in the
//! signed Nyquist range.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::field::{ComplexField, Grid};
use crate::{Error, Result};

/// Cached transfer function for one (geometry, wavelength, distance) triple.
///
/// A plan built with [`PropagationPlan::new`] keeps the global piston
/// `exp(i 2 pi z / lambda)`; [`PropagationPlan::relative`] divides it out so
/// phases stay referenced to the undisturbed illumination wave.
pub struct PropagationPlan {
    width: usize,
    height: usize,
    pitch: f64,
    wavelength: f64,
    z: f64,
    transfer: Vec<Complex64>,
    fft: Fft2,
}

impl PropagationPlan {
    pub fn new(width: usize, height: usize, pitch: f64, wavelength: f64, z: f64) -> Result<Self> {
        Self::build(width, height, pitch, wavelength, z, false)
    }

    /// Piston-free plan: the zero frequency passes unchanged.
    pub fn relative(width: usize, height: usize, pitch: f64, wavelength: f64, z: f64) -> Result<Self> {
        Self::build(width, height, pitch, wavelength, z, true)
    }

    fn build(
        width: usize,
        height: usize,
        pitch: f64,
        wavelength: f64,
        z: f64,
        remove_piston: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape("cannot propagate an empty field".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(Error::Parameter(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(Error::Parameter(format!("pitch must be positive, got {pitch}")));
        }
        if !z.is_finite() {
            return Err(Error::Parameter(format!("distance must be finite, got {z}")));
        }
        let inv_l = 1.0 / wavelength;
        let inv_l2 = inv_l * inv_l;
        let fx: Vec<f64> = (0..width).map(|i| fft_freq(i, width, pitch)).collect();
        let fy: Vec<f64> = (0..height).map(|i| fft_freq(i, height, pitch)).collect();
        let mut transfer = Vec::with_capacity(width * height);
        for &v in &fy {
            for &u in &fx {
                let arg = inv_l2 - u * u - v * v;
                if arg >= 0.0 {
                    let phase = if remove_piston {
                        // sqrt(a) - 1/lambda without cancellation
                        -2.0 * PI * z * (u * u + v * v) / (arg.sqrt() + inv_l)
                    } else {
                        2.0 * PI * z * arg.sqrt()
                    };
                    transfer.push(Complex64::new(phase.cos(), phase.sin()));
                } else {
                    transfer.push(Complex64::new(0.0, 0.0));
                }
            }
        }
        Ok(PropagationPlan {
            width,
            height,
            pitch,
            wavelength,
            z,
            transfer,
            fft: Fft2::new(width, height),
        })
    }

    /// Plan matching a field's geometry.
    pub fn for_field(field: &ComplexField, wavelength: f64, z: f64) -> Result<Self> {
        Self::new(field.width(), field.height(), field.pitch(), wavelength, z)
    }

    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    pub fn distance(&self) -> f64 {
        self.z
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn apply(&self, field: &ComplexField) -> Result<ComplexField> {
        if field.dims() != (self.width, self.height) {
            return Err(Error::Shape(format!(
                "plan is {}x{}, field is {}x{}",
                self.width,
                self.height,
                field.width(),
                field.height()
            )));
        }
        if (field.pitch() - self.pitch).abs() > 1e-12 * self.pitch {
            return Err(Error::Shape(format!(
                "plan pitch {} differs from field pitch {}",
                self.pitch,
                field.pitch()
            )));
        }
        if !field.is_finite() {
            return Err(Error::Data("field contains non-finite samples".into()));
        }
        let mut out = field.clone();
        self.fft.forward(out.values_mut());
        let scale = 1.0 / (self.width * self.height) as f64;
        out.values_mut()
            .par_iter_mut()
            .zip(self.transfer.par_iter())
            .for_each(|(v, h)| *v = *v * *h * scale);
        self.fft.inverse(out.values_mut());
        Ok(out)
    }
}

/// Propagates `field` over signed distance `z` at the given wavelength.
pub fn angular_spectrum(field: &ComplexField, z: f64, wavelength: f64) -> Result<ComplexField> {
    PropagationPlan::for_field(field, wavelength, z)?.apply(field)
}

/// [`angular_spectrum`] with the global piston phase divided out.
pub fn angular_spectrum_relative(field: &ComplexField, z: f64, wavelength: f64) -> Result<ComplexField> {
    PropagationPlan::relative(field.width(), field.height(), field.pitch(), wavelength, z)?.apply(field)
}

fn fft_freq(i: usize, n: usize, pitch: f64) -> f64 {
    let k = if i <= (n - 1) / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    };
    k / (n as f64 * pitch)
}

/// Unnormalized 2-D FFT over a row-major buffer.
pub struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform without the 1/N factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    fn run(&self, data: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.width * self.height);
        process_rows(data, self.width, rows);
        let mut t = transpose(data, self.width, self.height);
        process_rows(&mut t, self.height, cols);
        let back = transpose(&t, self.height, self.width);
        data.copy_from_slice(&back);
    }
}

fn process_rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

fn transpose(data: &[Complex64], width: usize, height: usize) -> Vec<Complex64> {
    const B: usize = 32;
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for by in (0..height).step_by(B) {
        for bx in (0..width).step_by(B) {
            for y in by..(by + B).min(height) {
                for x in bx..(bx + B).min(width) {
                    out[x * height + y] = data[y * width + x];
                }
            }
        }
    }
    out
}

/// Forward 2-D FFT of a field, returned as a new grid of the same geometry.
pub fn fft2(field: &ComplexField) -> ComplexField {
    let mut out = field.clone();
    Fft2::new(field.width(), field.height()).forward(out.values_mut());
    out
}

/// Normalized inverse 2-D FFT (inverse of [`fft2`]).
pub fn ifft2(spectrum: &ComplexField) -> ComplexField {
    let mut out = spectrum.clone();
    Fft2::new(spectrum.width(), spectrum.height()).inverse(out.values_mut());
    let scale = 1.0 / out.len() as f64;
    out.values_mut().iter_mut().for_each(|v| *v *= scale);
    out
}

/// Pads each side by `margin` samples, replicating the nearest edge sample.
pub fn pad_replicate<T: Copy>(grid: &Grid<T>, margin: usize) -> Grid<T> {
    pad_replicate_sides(grid, margin, margin, margin, margin)
}

/// Asymmetric replicate padding.
pub fn pad_replicate_sides<T: Copy>(
    grid: &Grid<T>,
    left: usize,
    right: usize,
    top: usize,
    bottom: usize,
) -> Grid<T> {
    let (w, h) = grid.dims();
    let nw = w + left + right;
    let nh = h + top + bottom;
    let mut values = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let sy = y.saturating_sub(top).min(h - 1);
        let row = grid.row(sy);
        values.extend(std::iter::repeat(row[0]).take(left));
        values.extend_from_slice(row);
        values.extend(std::iter::repeat(row[w - 1]).take(right));
    }
    Grid::new(nw, nh, grid.pitch(), values).expect("padded geometry is consistent")
}

/// Centered sub-window; offsets are `(W - width) / 2` and `(H - height) / 2`.
pub fn crop_center<T: Copy>(grid: &Grid<T>, width: usize, height: usize) -> Result<Grid<T>> {
    let (w, h) = grid.dims();
    if width > w || height > h {
        return Err(Error::Shape(format!(
            "cannot crop {w}x{h} to larger {width}x{height}"
        )));
    }
    grid.window((w - width) / 2, (h - height) / 2, width, height)
}
