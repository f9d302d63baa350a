//! Raster filters used while preparing targets: Gaussian blur, antialiased
//! resampling and patch-based denoising.

use rayon::prelude::*;

use crate::field::Raster;

/// Normalized 1-D Gaussian taps covering +-3 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with replicated borders.
pub fn gaussian_blur(r: &Raster, sigma: f64) -> Raster {
    let k = gaussian_kernel(sigma);
    let radius = (k.len() / 2) as i64;
    let (w, h) = r.dims();
    let src = r.values();

    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let line = &src[y * w..(y + 1) * w];
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &kv) in k.iter().enumerate() {
                let sx = (x as i64 + j as i64 - radius).clamp(0, w as i64 - 1) as usize;
                acc += kv * line[sx];
            }
            *out = acc;
        }
    });

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (j, &kv) in k.iter().enumerate() {
            let sy = (y as i64 + j as i64 - radius).clamp(0, h as i64 - 1) as usize;
            let line = &tmp[sy * w..(sy + 1) * w];
            for (o, &v) in row.iter_mut().zip(line) {
                *o += kv * v;
            }
        }
    });
    Raster::new(w, h, r.pitch(), out).expect("blur preserves geometry")
}

/// Resamples to `width` x `height` with a triangle (bilinear) filter whose
/// support widens with the downscale factor, which antialiases on shrink.
pub fn resize(r: &Raster, width: usize, height: usize) -> Raster {
    let (w, h) = r.dims();
    if (w, h) == (width, height) {
        return r.clone();
    }
    let xw = resample_weights(w, width);
    let yw = resample_weights(h, height);

    let src = r.values();
    let mut tmp = vec![0.0; width * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for (x, taps) in xw.iter().enumerate() {
            tmp[y * width + x] = taps.iter().map(|&(i, wt)| wt * line[i]).sum();
        }
    }
    let mut out = vec![0.0; width * height];
    for (y, taps) in yw.iter().enumerate() {
        for &(i, wt) in taps {
            let line = &tmp[i * width..(i + 1) * width];
            for (o, &v) in out[y * width..(y + 1) * width].iter_mut().zip(line) {
                *o += wt * v;
            }
        }
    }
    let pitch = r.pitch() * w as f64 / width as f64;
    Raster::new(width, height, pitch, out).expect("resize geometry is consistent")
}

fn resample_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    let support = scale.max(1.0);
    (0..dst)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            for j in lo..=hi {
                let wt = 1.0 - ((j as f64 - center) / support).abs();
                if wt <= 0.0 {
                    continue;
                }
                let idx = j.clamp(0, src as i64 - 1) as usize;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += wt,
                    None => taps.push((idx, wt)),
                }
            }
            let s: f64 = taps.iter().map(|t| t.1).sum();
            taps.iter_mut().for_each(|t| t.1 /= s);
            taps
        })
        .collect()
}

/// Denoising stage applied to corpus images before simulation.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, r: &Raster) -> Raster;
    fn name(&self) -> String;
}

pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, r: &Raster) -> Raster {
        r.clone()
    }

    fn name(&self) -> String {
        "identity".into()
    }
}

/// Non-local means: each pixel becomes a weighted average of pixels in a
/// search window, weighted by the similarity of their surrounding patches.
#[derive(Clone, Debug)]
pub struct NonLocalMeans {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Filtering strength relative to the estimated noise level.
    pub strength: f64,
}

impl Default for NonLocalMeans {
    fn default() -> Self {
        NonLocalMeans {
            patch_radius: 1,
            search_radius: 5,
            strength: 1.0,
        }
    }
}

/// Noise standard deviation from the median absolute horizontal difference.
pub fn estimate_noise_sigma(r: &Raster) -> f64 {
    let (w, h) = r.dims();
    let mut diffs = Vec::with_capacity(w.saturating_sub(1) * h);
    for y in 0..h {
        let row = r.row(y);
        for x in 1..w {
            diffs.push((row[x] - row[x - 1]).abs());
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    crate::field::median(&diffs) / (0.6745 * std::f64::consts::SQRT_2)
}

impl Denoiser for NonLocalMeans {
    fn denoise(&self, r: &Raster) -> Raster {
        let sigma = estimate_noise_sigma(r);
        if sigma == 0.0 {
            return r.clone();
        }
        let h2 = (self.strength * sigma).powi(2);
        let (w, h) = r.dims();
        let p = self.patch_radius as i64;
        let s = self.search_radius as i64;
        let at = |x: i64, y: i64| r.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize);
        let npatch = ((2 * p + 1) * (2 * p + 1)) as f64;

        let mut out = vec![0.0; w * h];
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let y = y as i64;
            for (x, o) in row.iter_mut().enumerate() {
                let x = x as i64;
                let mut wsum = 0.0;
                let mut acc = 0.0;
                for dy in -s..=s {
                    for dx in -s..=s {
                        let mut d2 = 0.0;
                        for py in -p..=p {
                            for px in -p..=p {
                                let d = at(x + px, y + py) - at(x + dx + px, y + dy + py);
                                d2 += d * d;
                            }
                        }
                        d2 /= npatch;
                        let wt = (-(d2 - 2.0 * sigma * sigma).max(0.0) / h2).exp();
                        wsum += wt;
                        acc += wt * at(x + dx, y + dy);
                    }
                }
                *o = acc / wsum;
            }
        });
        Raster::new(w, h, r.pitch(), out).expect("denoise preserves geometry")
    }

    fn name(&self) -> String {
        format!(
            "nlm(patch={},search={},strength={})",
            self.patch_radius, self.search_radius, self.strength
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(10.0);
        assert_eq!(k.len(), 61);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn blur_keeps_constants() {
        let r = Raster::filled(20, 10, 1.0, 3.5).unwrap();
        let b = gaussian_blur(&r, 4.0);
        assert!(b.values().iter().all(|v| (v - 3.5).abs() < 1e-13));
    }

    #[test]
    fn blur_preserves_linear_ramp_interior() {
        let r = Raster::from_fn(64, 4, 1.0, |x, _| x as f64).unwrap();
        let b = gaussian_blur(&r, 2.0);
        for x in 8..56 {
            assert!((b.get(x, 2) - x as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let r = Raster::from_fn(7, 5, 1.0, |x, y| (x + 2 * y) as f64).unwrap();
        assert_eq!(resize(&r, 7, 5), r);
        let c = Raster::filled(37, 23, 1.0, 0.25).unwrap();
        let s = resize(&c, 16, 16);
        assert!(s.values().iter().all(|v| (v - 0.25).abs() < 1e-14));
        let u = resize(&c, 50, 40);
        assert!(u.values().iter().all(|v| (v - 0.25).abs() < 1e-14));
    }

    #[test]
    fn downscale_averages_checkerboard() {
        let r = Raster::from_fn(64, 64, 1.0, |x, y| ((x + y) % 2) as f64).unwrap();
        let s = resize(&r, 16, 16);
        for v in s.values() {
            assert!((v - 0.5).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn nlm_reduces_noise_on_flat_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy = Raster::from_fn(32, 32, 1.0, |_, _| 0.5 + rng.gen_range(-0.1..0.1)).unwrap();
        let clean = NonLocalMeans::default().denoise(&noisy);
        let var = |r: &Raster| {
            let m = r.mean();
            r.values().iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len() as f64
        };
        assert!(var(&clean) < 0.5 * var(&noisy));
    }

    #[test]
    fn nlm_leaves_noise_free_image_alone() {
        let r = Raster::filled(8, 8, 1.0, 0.3).unwrap();
        assert_eq!(NonLocalMeans::default().denoise(&r), r);
    }
}
