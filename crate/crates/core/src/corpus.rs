//! Procedural image corpora for desk-scale experiments.
//!
//! Two families with different content: `flowers` (radial petal shapes, one
//! subfolder per variety) and `animals` (elliptical bodies with limbs,
//! stripes and spots). Images are ordinary 8-bit PNG files so they go
//! through the same loading path as any photo collection.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::Raster;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Flowers,
    Animals,
}

impl Family {
    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Family::Flowers => &["daisy", "sunflower", "tulip", "dandelion", "rose"],
            Family::Animals => &["cat", "horse", "zebra", "spider", "butterfly"],
        }
    }
}

impl std::str::FromStr for Family {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flowers" => Ok(Family::Flowers),
            "animals" => Ok(Family::Animals),
            other => Err(crate::Error::Parameter(format!("unknown corpus family '{other}'"))),
        }
    }
}

fn smoothstep(edge: f64, d: f64) -> f64 {
    // d is a signed distance in pixels (negative inside)
    (0.5 - d / (2.0 * edge)).clamp(0.0, 1.0)
}

struct Canvas {
    size: usize,
    px: Vec<f64>,
}

impl Canvas {
    fn new(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = rng.gen_range(0.15..0.6);
        let gx = rng.gen_range(-0.25..0.25);
        let gy = rng.gen_range(-0.25..0.25);
        let px = (0..size * size)
            .map(|i| {
                let x = (i % size) as f64 / size as f64 - 0.5;
                let y = (i / size) as f64 / size as f64 - 0.5;
                a + gx * x + gy * y
            })
            .collect();
        Canvas { size, px }
    }

    /// Blends `value(x, y)` wherever `sdf(x, y) < 0`, with a one-pixel soft edge.
    fn paint(&mut self, sdf: impl Fn(f64, f64) -> f64, value: impl Fn(f64, f64) -> f64) {
        let n = self.size;
        for y in 0..n {
            for x in 0..n {
                let (fx, fy) = (x as f64, y as f64);
                let cover = smoothstep(1.0, sdf(fx, fy));
                if cover > 0.0 {
                    let p = &mut self.px[y * n + x];
                    *p = (1.0 - cover) * *p + cover * value(fx, fy);
                }
            }
        }
    }

    fn into_raster(self, rng: &mut ChaCha8Rng) -> Raster {
        let noise = 0.01;
        let vals = self
            .px
            .into_iter()
            .map(|v| (v + rng.gen_range(-noise..noise)).clamp(0.0, 1.0))
            .collect();
        Raster::new(self.size, self.size, 1.0, vals).expect("canvas geometry")
    }
}

fn flower(canvas: &mut Canvas, rng: &mut ChaCha8Rng, class: usize) {
    let n = canvas.size as f64;
    let cx = rng.gen_range(0.2..0.8) * n;
    let cy = rng.gen_range(0.2..0.8) * n;
    let r0 = rng.gen_range(0.12..0.3) * n;
    let (petals, depth, core) = match class {
        0 => (rng.gen_range(10..16), 0.35, 0.25),
        1 => (rng.gen_range(14..22), 0.2, 0.45),
        2 => (rng.gen_range(3..6), 0.45, 0.15),
        3 => (rng.gen_range(18..28), 0.15, 0.3),
        _ => (rng.gen_range(5..8), 0.3, 0.35),
    };
    let twist = rng.gen_range(0.0..2.0 * PI);
    let shade = rng.gen_range(0.55..1.0);
    let core_shade = rng.gen_range(0.0..0.5);
    canvas.paint(
        |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let r = dx.hypot(dy);
            let t = dy.atan2(dx);
            let edge = r0 * (1.0 - depth + depth * (petals as f64 * t + twist).cos().abs());
            r - edge
        },
        |x, y| {
            let r = (x - cx).hypot(y - cy) / r0;
            (shade * (1.0 - 0.35 * r)).clamp(0.0, 1.0)
        },
    );
    canvas.paint(
        |x, y| (x - cx).hypot(y - cy) - core * r0,
        |x, y| core_shade + 0.15 * (((x - cx) * 0.9).sin() * ((y - cy) * 0.9).sin()),
    );
    // stem
    let sw = rng.gen_range(1.0..2.5);
    canvas.paint(
        |x, y| if y > cy { (x - cx - 0.15 * (y - cy)).abs() - sw } else { 1e9 },
        |_, _| shade * 0.6,
    );
}

fn animal(canvas: &mut Canvas, rng: &mut ChaCha8Rng, class: usize) {
    let n = canvas.size as f64;
    let cx = rng.gen_range(0.3..0.7) * n;
    let cy = rng.gen_range(0.3..0.7) * n;
    let rx = rng.gen_range(0.15..0.3) * n;
    let ry = rx * rng.gen_range(0.45..0.8);
    let tone = rng.gen_range(0.5..1.0);
    let angle: f64 = rng.gen_range(-0.4..0.4);
    let (ca, sa) = (angle.cos(), angle.sin());
    let stripes = rng.gen_range(0.3..0.9);
    let spot_phase = rng.gen_range(0.0..2.0 * PI);
    let body = move |x: f64, y: f64| {
        let (dx, dy) = (x - cx, y - cy);
        let u = ca * dx + sa * dy;
        let v = -sa * dx + ca * dy;
        ((u / rx).powi(2) + (v / ry).powi(2)).sqrt() * rx.min(ry) - rx.min(ry)
    };
    let texture = move |x: f64, y: f64| match class {
        2 => tone * (0.55 + 0.45 * ((x * stripes) + spot_phase).sin().signum()),
        1 => tone * (0.85 + 0.15 * ((x * 0.2).sin() * (y * 0.2).cos())),
        4 => tone * (0.6 + 0.4 * ((x * 0.5 + spot_phase).sin() * (y * 0.5).sin()).abs()),
        _ => tone * (0.7 + 0.3 * ((x * stripes * 0.5).sin() * (y * stripes * 0.5 + spot_phase).cos())),
    };
    // limbs
    let legs = if class == 3 { 8 } else if class == 4 { 0 } else { 4 };
    let lw = rng.gen_range(1.0..2.5);
    for k in 0..legs {
        let off = (k as f64 / legs.max(1) as f64 - 0.5) * 1.6 * rx;
        let lx = cx + off;
        let spread = if class == 3 { (k as f64 - 3.5) * 0.25 } else { 0.0 };
        let len = ry * rng.gen_range(1.3..2.0);
        canvas.paint(
            move |x, y| {
                if y >= cy && y <= cy + len {
                    (x - lx - spread * (y - cy)).abs() - lw
                } else {
                    1e9
                }
            },
            move |_, _| tone * 0.5,
        );
    }
    if class == 4 {
        // wings
        for side in [-1.0, 1.0] {
            let wx = cx + side * rx * 0.9;
            let wr = rx * 0.8;
            canvas.paint(move |x, y| (x - wx).hypot(y - cy + 0.4 * wr) - wr, texture);
        }
    }
    canvas.paint(body, texture);
    // head
    let hx = cx + ca * rx * 1.05;
    let hy = cy + sa * rx * 1.05 - ry * 0.4;
    let hr = ry * rng.gen_range(0.45..0.7);
    canvas.paint(move |x, y| (x - hx).hypot(y - hy) - hr, move |_, _| tone * 0.8);
    canvas.paint(move |x, y| (x - hx - hr * 0.3).hypot(y - hy - hr * 0.2) - hr * 0.18, |_, _| 0.05);
}

/// Renders one `size` x `size` image of class `class` (index into [`Family::classes`]).
pub fn render(family: Family, class: usize, seed: u64, size: usize) -> Raster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((class as u64) << 48) ^ family as u64);
    let mut canvas = Canvas::new(size, &mut rng);
    let count = rng.gen_range(1..=3);
    for _ in 0..count {
        match family {
            Family::Flowers => flower(&mut canvas, &mut rng, class),
            Family::Animals => animal(&mut canvas, &mut rng, class),
        }
    }
    canvas.into_raster(&mut rng)
}

/// Writes `per_class` PNG images for each listed class into `dir/<class>/`.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    family: Family,
    classes: &[&str],
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for name in classes {
        let class = family
            .classes()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| crate::Error::Parameter(format!("unknown class '{name}'")))?;
        let sub = dir.as_ref().join(name);
        std::fs::create_dir_all(&sub)?;
        for i in 0..per_class {
            let r = render(family, class, seed.wrapping_mul(1_000_003).wrapping_add(i as u64), size);
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(size as u32, size as u32, |x, y| {
                Luma([(r.get(x as usize, y as usize) * 255.0).round() as u8])
            });
            let path = sub.join(format!("{name}_{i:04}.png"));
            buf.save(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_in_range() {
        for fam in [Family::Flowers, Family::Animals] {
            for class in 0..5 {
                let a = render(fam, class, 7, 48);
                let b = render(fam, class, 7, 48);
                assert_eq!(a, b);
                let (lo, hi) = a.min_max();
                assert!(lo >= 0.0 && hi <= 1.0);
                assert!(hi - lo > 0.1, "{fam:?}/{class} has no contrast");
            }
        }
    }

    #[test]
    fn writes_class_folders() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_corpus(dir.path(), Family::Animals, &["cat", "zebra"], 2, 32, 1).unwrap();
        assert_eq!(files.len(), 4);
        assert!(dir.path().join("zebra/zebra_0001.png").exists());
        assert!(write_corpus(dir.path(), Family::Animals, &["daisy"], 1, 32, 1).is_err());
    }
}
