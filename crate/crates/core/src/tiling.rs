//! Overlapping tile decomposition with linear-ramp blending.
//!
//! Tiles always have the full tile size: edge tiles are shifted inward, and
//! images smaller than one tile are replicate-padded up to it. Per-axis ramp
//! weights are normalized so their 2-D products sum to one at every pixel.

use rayon::prelude::*;

use crate::field::Raster;
use crate::propagate::pad_replicate_sides;
use crate::{Error, Result};

/// A raster-to-raster operation applied tile by tile.
pub trait RasterFilter: Sync {
    fn apply(&self, input: &Raster) -> Result<Raster>;
}

impl<F> RasterFilter for F
where
    F: Fn(&Raster) -> Result<Raster> + Sync,
{
    fn apply(&self, input: &Raster) -> Result<Raster> {
        self(input)
    }
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct PassThrough;

impl RasterFilter for PassThrough {
    fn apply(&self, input: &Raster) -> Result<Raster> {
        Ok(input.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    col: usize,
    row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileLayout {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub overlap_fraction: f64,
    pub overlap_px: usize,
    pub tiles: Vec<Tile>,
    /// Working grid after padding small images up to one tile.
    work_width: usize,
    work_height: usize,
    /// Normalized ramp weights, one vector of length `tile_size` per column/row.
    col_weights: Vec<Vec<f64>>,
    row_weights: Vec<Vec<f64>>,
}

/// Tile starts along one axis of length `len`.
pub fn axis_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let n = (len - overlap).div_ceil(tile - overlap);
    let span = (len - tile) as f64;
    (0..n).map(|i| (span * i as f64 / (n - 1) as f64).round() as usize).collect()
}

fn axis_weights(starts: &[usize], tile: usize, len: usize) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let e = s + tile;
            let left = if i > 0 { starts[i - 1] + tile - s } else { 0 };
            let right = starts.get(i + 1).map_or(0, |&n| e - n);
            (s..e)
                .map(|x| {
                    let mut w: f64 = 1.0;
                    if left > 0 {
                        w = w.min(((x - s) as f64 + 0.5) / left as f64);
                    }
                    if right > 0 {
                        w = w.min(((e - x) as f64 - 0.5) / right as f64);
                    }
                    w
                })
                .collect()
        })
        .collect();
    let mut total = vec![0.0; len];
    for (&s, w) in starts.iter().zip(&raw) {
        for (k, v) in w.iter().enumerate() {
            total[s + k] += v;
        }
    }
    starts
        .iter()
        .zip(raw)
        .map(|(&s, w)| w.iter().enumerate().map(|(k, v)| v / total[s + k]).collect())
        .collect()
}

/// Lays out `tile_size` tiles over a `width` x `height` image with
/// `round(overlap_fraction * tile_size)` pixels of overlap between neighbours.
pub fn plan_tiles(width: usize, height: usize, tile_size: usize, overlap_fraction: f64) -> Result<TileLayout> {
    if tile_size == 0 || width == 0 || height == 0 {
        return Err(Error::Parameter("tile size and image dimensions must be positive".into()));
    }
    if !(0.0..0.5).contains(&overlap_fraction) {
        return Err(Error::Parameter(format!("overlap fraction {overlap_fraction} outside [0, 0.5)")));
    }
    let overlap_px = (overlap_fraction * tile_size as f64).round() as usize;
    let (ww, wh) = (width.max(tile_size), height.max(tile_size));
    let xs = axis_starts(ww, tile_size, overlap_px);
    let ys = axis_starts(wh, tile_size, overlap_px);
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            tiles.push(Tile {
                x,
                y,
                size: tile_size,
                col,
                row,
            });
        }
    }
    Ok(TileLayout {
        width,
        height,
        tile_size,
        overlap_fraction,
        overlap_px,
        tiles,
        work_width: ww,
        work_height: wh,
        col_weights: axis_weights(&xs, tile_size, ww),
        row_weights: axis_weights(&ys, tile_size, wh),
    })
}

impl TileLayout {
    /// Blend weight of `tile` at tile-local pixel (x, y).
    pub fn weight(&self, tile: &Tile, x: usize, y: usize) -> f64 {
        self.col_weights[tile.col][x] * self.row_weights[tile.row][y]
    }

    pub fn weight_map(&self, tile: &Tile) -> Raster {
        Raster::from_fn(self.tile_size, self.tile_size, 1.0, |x, y| self.weight(tile, x, y)).expect("tile geometry")
    }

    /// Sum of blend weights over covering tiles at every pixel of the working grid.
    pub fn weight_sum(&self) -> Raster {
        let mut sum = Raster::filled(self.work_width, self.work_height, 1.0, 0.0).expect("layout geometry");
        for t in &self.tiles {
            for y in 0..self.tile_size {
                for x in 0..self.tile_size {
                    let v = sum.get(t.x + x, t.y + y) + self.weight(t, x, y);
                    sum.set(t.x + x, t.y + y, v);
                }
            }
        }
        sum
    }
}

/// Filters every tile and blends the results back into one raster.
///
/// Blending composites tiles in layout order with weights renormalized by
/// the running total, so equal tile outputs reproduce their value exactly.
pub fn process_tiled(raster: &Raster, layout: &TileLayout, filter: &dyn RasterFilter) -> Result<Raster> {
    if raster.dims() != (layout.width, layout.height) {
        return Err(Error::Shape(format!(
            "raster {:?} does not match layout {}x{}",
            raster.dims(),
            layout.width,
            layout.height
        )));
    }
    let work = if (layout.work_width, layout.work_height) != raster.dims() {
        pad_replicate_sides(raster, 0, layout.work_width - layout.width, 0, layout.work_height - layout.height)
    } else {
        raster.clone()
    };
    let ts = layout.tile_size;
    let outputs: Vec<Raster> = layout
        .tiles
        .par_iter()
        .map(|t| {
            let out = filter.apply(&work.window(t.x, t.y, ts, ts)?)?;
            if out.dims() != (ts, ts) {
                return Err(Error::Contract(format!(
                    "filter returned {:?} for a {ts}x{ts} tile",
                    out.dims()
                )));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let (ww, wh) = (layout.work_width, layout.work_height);
    let mut acc = vec![0.0; ww * wh];
    let mut cum = vec![0.0; ww * wh];
    for (t, out) in layout.tiles.iter().zip(&outputs) {
        for y in 0..ts {
            let wy = layout.row_weights[t.row][y];
            let base = (t.y + y) * ww + t.x;
            let row = out.row(y);
            for x in 0..ts {
                let w = layout.col_weights[t.col][x] * wy;
                let i = base + x;
                cum[i] += w;
                acc[i] += (w / cum[i]) * (row[x] - acc[i]);
            }
        }
    }
    let blended = Raster::new(ww, wh, raster.pitch(), acc)?;
    if (ww, wh) == raster.dims() {
        Ok(blended)
    } else {
        blended.window(0, 0, layout.width, layout.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_tile_when_sizes_match() {
        let l = plan_tiles(512, 512, 512, 0.1).unwrap();
        assert_eq!(l.tiles.len(), 1);
        assert!(l.weight_map(&l.tiles[0]).values().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn starts_follow_even_spacing_rule() {
        // ceil((1024 - 51) / (512 - 51)) = 3 starts over [0, 512]
        assert_eq!(axis_starts(1024, 512, 51), vec![0, 256, 512]);
        let l = plan_tiles(1024, 1024, 512, 0.1).unwrap();
        assert_eq!(l.overlap_px, 51);
        assert_eq!(l.tiles.len(), 9);
        // ceil((1500 - 51) / 461) = 4 starts, spacing 329.33
        assert_eq!(axis_starts(1500, 512, 51), vec![0, 329, 659, 988]);
    }

    #[test]
    fn bad_parameters_rejected() {
        assert!(plan_tiles(100, 100, 0, 0.1).is_err());
        assert!(plan_tiles(100, 100, 32, 0.5).is_err());
        assert!(plan_tiles(100, 100, 32, -0.1).is_err());
    }

    #[test]
    fn identity_and_shift_are_exact() {
        let r = Raster::from_fn(300, 170, 1e-6, |x, y| ((x * 13 + y * 7) % 31) as f64 * 0.37 - 2.0).unwrap();
        let l = plan_tiles(300, 170, 64, 0.1).unwrap();
        assert_eq!(process_tiled(&r, &l, &PassThrough).unwrap(), r);
        let shifted = process_tiled(&r, &l, &|t: &Raster| Ok(t.map(|v| v + 0.25))).unwrap();
        for (a, b) in shifted.values().iter().zip(r.values()) {
            assert_eq!(*a, b + 0.25);
        }
    }

    #[test]
    fn small_image_is_padded_then_cropped() {
        let r = Raster::from_fn(20, 9, 1e-6, |x, y| (x + 3 * y) as f64).unwrap();
        let l = plan_tiles(20, 9, 32, 0.1).unwrap();
        assert_eq!(l.tiles.len(), 1);
        let seen = std::sync::atomic::AtomicUsize::new(0);
        let out = process_tiled(&r, &l, &|t: &Raster| {
            seen.store(t.width() * t.height(), std::sync::atomic::Ordering::SeqCst);
            Ok(t.clone())
        })
        .unwrap();
        assert_eq!(seen.into_inner(), 32 * 32);
        assert_eq!(out, r);
    }

    #[test]
    fn filter_changing_size_is_contract_error() {
        let r = Raster::filled(64, 64, 1e-6, 1.0).unwrap();
        let l = plan_tiles(64, 64, 32, 0.1).unwrap();
        let err = process_tiled(&r, &l, &|t: &Raster| t.window(0, 0, 16, 16)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn weights_are_a_partition_of_unity(
            w in 1usize..400, h in 1usize..400, tile in 8usize..128, frac in 0.0f64..0.49
        ) {
            let l = plan_tiles(w, h, tile, frac).unwrap();
            for s in l.weight_sum().values() {
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
            // coverage and overlap between neighbours
            let xs = axis_starts(w.max(tile), tile, l.overlap_px);
            prop_assert_eq!(*xs.last().unwrap() + tile, w.max(tile));
            for p in xs.windows(2) {
                prop_assert!(p[0] + tile >= p[1] + l.overlap_px);
            }
        }
    }
}
