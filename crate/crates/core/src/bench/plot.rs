//! Bar charts and curves rendered to PNG. No text: colours follow the
//! method (or channel) order of the report, which the CSV output names.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::eval::{EvalReport, ZSweep};
use crate::datasetgen::Kind;
use crate::{Error, Result};

const WIDTH: u32 = 800;
const HEIGHT: u32 = 480;
const MARGIN: i64 = 50;
const PALETTE: [[u8; 3]; 6] = [
    [68, 119, 170],
    [238, 102, 119],
    [34, 136, 51],
    [204, 187, 68],
    [102, 204, 238],
    [170, 51, 119],
];
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new() -> Self {
        let mut c = Canvas {
            img: RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255])),
        };
        let (x0, y0, x1, y1) = c.plot_area();
        c.line(x0, y1, x1, y1, AXIS);
        c.line(x0, y0, x0, y1, AXIS);
        c
    }

    fn plot_area(&self) -> (i64, i64, i64, i64) {
        (MARGIN, MARGIN / 2, WIDTH as i64 - MARGIN / 2, HEIGHT as i64 - MARGIN)
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.put(x, y, c);
            }
        }
    }

    fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.put(x, y, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    fn save(self, path: &Path) -> Result<()> {
        self.img.save(path)?;
        Ok(())
    }
}

fn color(i: usize) -> Rgb<u8> {
    Rgb(PALETTE[i % PALETTE.len()])
}

/// Grouped bars: one group per (dataset, channel), one bar per method, with
/// a one-standard-deviation whisker.
pub fn plot_eval(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    if report.cells.is_empty() {
        return Err(Error::Count("evaluation report has no cells to plot".into()));
    }
    let mut groups: Vec<(String, Kind)> = Vec::new();
    for c in &report.cells {
        if !groups.contains(&(c.dataset.clone(), c.channel)) {
            groups.push((c.dataset.clone(), c.channel));
        }
    }
    let top = report
        .cells
        .iter()
        .map(|c| c.mean + c.std)
        .fold(f64::MIN_POSITIVE, f64::max);
    let mut cv = Canvas::new();
    let (x0, y0, x1, y1) = cv.plot_area();
    let group_w = (x1 - x0) / groups.len() as i64;
    let bar_w = (group_w - 10) / report.methods.len().max(1) as i64;
    let scale = |v: f64| y1 - ((v / top) * (y1 - y0) as f64).round() as i64;
    for (gi, (ds, ch)) in groups.iter().enumerate() {
        for (mi, m) in report.methods.iter().enumerate() {
            if let Some(c) = report.cell(ds, *m, *ch) {
                let bx = x0 + 5 + gi as i64 * group_w + mi as i64 * bar_w;
                cv.rect(bx + 1, scale(c.mean), bx + bar_w - 2, y1 - 1, color(mi));
                let mid = bx + bar_w / 2;
                cv.line(mid, scale(c.mean - c.std), mid, scale(c.mean + c.std), AXIS);
            }
        }
    }
    cv.save(path.as_ref())
}

/// One curve per channel; a filled square marks each curve's minimum and a
/// vertical line the training distance.
pub fn plot_z_sweep(sweep: &ZSweep, path: impl AsRef<Path>) -> Result<()> {
    if sweep.points.is_empty() {
        return Err(Error::Count("z sweep has no points to plot".into()));
    }
    let zmin = sweep.points.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
    let zmax = sweep.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
    let top = sweep.points.iter().map(|p| p.relative).fold(0.0, f64::max).max(100.0) * 1.05;
    let mut cv = Canvas::new();
    let (x0, y0, x1, y1) = cv.plot_area();
    let span = if zmax > zmin { zmax - zmin } else { 1.0 };
    let px = |z: f64| x0 + (((z - zmin) / span) * (x1 - x0) as f64).round() as i64;
    let py = |v: f64| y1 - ((v / top) * (y1 - y0) as f64).round() as i64;
    // 100 % reference and training distance
    for x in (x0..x1).step_by(6) {
        cv.line(x, py(100.0), x + 2, py(100.0), AXIS);
    }
    let tx = px(sweep.training_z);
    for y in (y0..y1).step_by(6) {
        cv.line(tx, y, tx, y + 2, AXIS);
    }
    for (ci, kind) in [Kind::Amplitude, Kind::Phase].into_iter().enumerate() {
        let curve = sweep.curve(kind);
        if curve.is_empty() {
            continue;
        }
        for w in curve.windows(2) {
            cv.line(px(w[0].z), py(w[0].relative), px(w[1].z), py(w[1].relative), color(ci));
        }
        let best = curve
            .iter()
            .min_by(|a, b| a.relative.total_cmp(&b.relative))
            .expect("non-empty curve");
        let (bx, by) = (px(best.z), py(best.relative));
        cv.rect(bx - 4, by - 4, bx + 4, by + 4, color(ci));
    }
    cv.save(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::eval::{EvalCell, Method, ZPoint};

    fn report(cells: Vec<EvalCell>) -> EvalReport {
        EvalReport {
            params: None,
            methods: vec![Method::As, Method::Utirnet],
            datasets: Vec::new(),
            cells,
            scores: Vec::new(),
        }
    }

    #[test]
    fn empty_report_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bars.png");
        assert!(plot_eval(&report(Vec::new()), &p).is_err());
        assert!(!p.exists());
        let sweep = ZSweep {
            training_z: 1.0,
            points: Vec::new(),
        };
        assert!(plot_z_sweep(&sweep, &p).is_err());
        assert!(!p.exists());
    }

    #[test]
    fn two_method_bar_chart() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bars.png");
        let cell = |m, mean| EvalCell {
            dataset: "val".into(),
            method: m,
            channel: Kind::Amplitude,
            count: 3,
            mean,
            std: 0.01,
        };
        plot_eval(&report(vec![cell(Method::As, 0.07), cell(Method::Utirnet, 0.05)]), &p).unwrap();
        assert!(std::fs::metadata(&p).unwrap().len() > 0);
    }

    #[test]
    fn sweep_marks_the_minimum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        let rel = [90.0, 70.0, 80.0];
        let sweep = ZSweep {
            training_z: 2.0,
            points: rel
                .iter()
                .enumerate()
                .map(|(i, &r)| ZPoint {
                    z: 1.0 + i as f64,
                    channel: Kind::Amplitude,
                    as_rmse: 1.0,
                    utirnet_rmse: r / 100.0,
                    relative: r,
                })
                .collect(),
        };
        plot_z_sweep(&sweep, &p).unwrap();
        let img = image::open(&p).unwrap().to_rgb8();
        // marker centre at the argmin (z = 2, 70 %)
        let (x0, y0, x1, y1) = (MARGIN, MARGIN / 2, WIDTH as i64 - MARGIN / 2, HEIGHT as i64 - MARGIN);
        let mx = x0 + (x1 - x0) / 2;
        let my = y1 - ((70.0 / 105.0) * (y1 - y0) as f64).round() as i64;
        assert_eq!(*img.get_pixel((mx + 3) as u32, (my + 3) as u32), color(0));
    }
}
