//! Wall-clock comparison of reconstruction methods across image sizes.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::eval::{sig6, Method};
use crate::cnn::NetworkWeights;
use crate::corpus::{render, Family};
use crate::field::{Raster, SystemParams};
use crate::gs::{gs_cff, gs_multi, CffConfig, Constraint, GsProblem};
use crate::propagate::PropagationPlan;
use crate::reconstruct::{backpropagate, cnn_only_reconstruct, utirnet_reconstruct, Hologram, ReconstructConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub size: usize,
    /// Median over repetitions.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub hardware: String,
    pub repetitions: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn seconds(&self, method: Method, size: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.size == size)
            .map(|r| r.seconds)
    }

    /// One row per method, one column per size.
    pub fn to_csv(&self) -> String {
        let mut sizes: Vec<usize> = self.rows.iter().map(|r| r.size).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let mut s = String::from("method");
        for n in &sizes {
            let _ = write!(s, ",{n}x{n}");
        }
        s.push('\n');
        for m in methods {
            s.push_str(m.name());
            for &n in &sizes {
                match self.seconds(m, n) {
                    Some(t) => {
                        let _ = write!(s, ",{}", sig6(t));
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// CPU model, logical cores and worker threads.
pub fn hardware_descriptor() -> String {
    let model = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{model}; {cores} logical cores; {} worker threads; {}-{}",
        rayon::current_num_threads(),
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

#[derive(Clone, Debug)]
pub struct TimingSetup<'a> {
    pub params: SystemParams,
    pub second_wavelength: f64,
    pub gs_iterations: usize,
    pub cff: CffConfig,
    pub reconstruct: ReconstructConfig,
    pub amplitude_net: Option<&'a NetworkWeights>,
    pub phase_net: Option<&'a NetworkWeights>,
}

fn hologram_at(n: usize, params: &SystemParams, wavelength: f64) -> Result<Raster> {
    let obj = render(Family::Flowers, 0, 42, n).with_pitch(params.pitch())?.to_complex();
    let plan = PropagationPlan::relative(n, n, params.pitch(), wavelength, -params.z_distance)?;
    Ok(plan.apply(&obj)?.map(|c| c.norm_sqr()))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median wall-clock seconds per (method, size) over `reps` runs on a
/// synthetic hologram. Plan construction is included in every run.
pub fn time_methods(sizes: &[usize], methods: &[Method], reps: usize, setup: &TimingSetup) -> Result<TimingReport> {
    let reps = reps.max(1);
    let needs_nets = methods.iter().any(|m| matches!(m, Method::Utirnet | Method::CnnOnly));
    let nets = match (setup.amplitude_net, setup.phase_net) {
        (Some(a), Some(p)) => Some((a, p)),
        _ if needs_nets => return Err(Error::Config("learned methods need both weights files".into())),
        _ => None,
    };
    let mut rows = Vec::new();
    for &n in sizes {
        let i1 = hologram_at(n, &setup.params, setup.params.wavelength)?;
        let i2 = hologram_at(n, &setup.params, setup.second_wavelength)?;
        let holo = Hologram::new(i1.clone(), setup.params)?;
        let problem = GsProblem::new(
            vec![
                Constraint {
                    intensity: i1,
                    wavelength: setup.params.wavelength,
                    z: setup.params.z_distance,
                },
                Constraint {
                    intensity: i2,
                    wavelength: setup.second_wavelength,
                    z: setup.params.z_distance,
                },
            ],
            setup.gs_iterations,
            setup.params.pitch(),
        );
        for &m in methods {
            let mut times = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t = Instant::now();
                match m {
                    Method::As => drop(backpropagate(&holo)?),
                    Method::Gs => drop(gs_multi(&problem)?),
                    Method::GsCff => drop(gs_cff(&problem, &setup.cff)?),
                    Method::CnnOnly => {
                        let (a, p) = nets.expect("checked above");
                        drop(cnn_only_reconstruct(&holo, a, p, &setup.reconstruct)?)
                    }
                    Method::Utirnet => {
                        let (a, p) = nets.expect("checked above");
                        drop(utirnet_reconstruct(&holo, a, p, &setup.reconstruct)?)
                    }
                }
                times.push(t.elapsed().as_secs_f64());
            }
            let seconds = median(times);
            log::info!("{m} at {n}x{n}: {seconds:.4} s");
            rows.push(TimingRow { method: m, size: n, seconds });
        }
    }
    Ok(TimingReport {
        hardware: hardware_descriptor(),
        repetitions: reps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_table_shaped() {
        let setup = TimingSetup {
            params: SystemParams::lensless(1e-3),
            second_wavelength: 561e-9,
            gs_iterations: 2,
            cff: CffConfig::default(),
            reconstruct: ReconstructConfig::default(),
            amplitude_net: None,
            phase_net: None,
        };
        let r = time_methods(&[32, 64], &[Method::As, Method::Gs], 3, &setup).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "method,32x32,64x64");
        assert!(lines[1].starts_with("AS,") && lines[2].starts_with("GS,"));
        assert_eq!(lines[1].split(',').count(), 3);
        assert!(r.hardware.contains("logical cores"));
        assert!(time_methods(&[32], &[Method::Utirnet], 1, &setup).is_err());
    }

    #[test]
    fn median_of_reps() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
