//! RMSE evaluation of reconstruction methods over simulated datasets.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::NetworkWeights;
use crate::datasetgen::{forward_model, object_field, DatasetManifest, Kind, PairRecord, Split, TrainingPair};
use crate::field::{rmse, ComplexField, Raster, SystemParams};
use crate::gs::{gs_cff, gs_multi, CffConfig, Constraint, GsProblem};
use crate::propagate::{crop_center, pad_replicate_sides, PropagationPlan};
use crate::reconstruct::{cnn_only_reconstruct, utirnet_reconstruct, AmplitudeNorm, Hologram, ReconstructConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "AS")]
    As,
    #[serde(rename = "cnn_only")]
    CnnOnly,
    #[serde(rename = "UTIRnet")]
    Utirnet,
    #[serde(rename = "GS")]
    Gs,
    #[serde(rename = "GS+CFF")]
    GsCff,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::As, Method::CnnOnly, Method::Utirnet, Method::Gs, Method::GsCff];

    pub fn name(self) -> &'static str {
        match self {
            Method::As => "AS",
            Method::CnnOnly => "cnn_only",
            Method::Utirnet => "UTIRnet",
            Method::Gs => "GS",
            Method::GsCff => "GS+CFF",
        }
    }

    fn learned(self) -> bool {
        matches!(self, Method::CnnOnly | Method::Utirnet)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown method '{s}'")))
    }
}

/// Everything the learned and iterative methods need besides the data.
#[derive(Clone, Debug)]
pub struct EvalContext<'a> {
    pub amplitude_net: Option<&'a NetworkWeights>,
    pub phase_net: Option<&'a NetworkWeights>,
    pub reconstruct: ReconstructConfig,
    /// Wavelength of the simulated second hologram used by the GS methods.
    pub gs_second_wavelength: f64,
    pub gs_iterations: usize,
    pub cff: CffConfig,
    /// Only pairs with this split label are evaluated.
    pub split: Option<Split>,
}

impl Default for EvalContext<'_> {
    fn default() -> Self {
        EvalContext {
            amplitude_net: None,
            phase_net: None,
            reconstruct: ReconstructConfig {
                tile_size: None,
                amplitude_norm: AmplitudeNorm::None,
                ..ReconstructConfig::default()
            },
            gs_second_wavelength: 561e-9,
            gs_iterations: 5,
            cff: CffConfig::default(),
            split: None,
        }
    }
}

impl EvalContext<'_> {
    fn nets(&self) -> Result<(&NetworkWeights, &NetworkWeights)> {
        match (self.amplitude_net, self.phase_net) {
            (Some(a), Some(p)) => Ok((a, p)),
            _ => Err(Error::Config("learned methods need both amplitude and phase weights".into())),
        }
    }
}

/// Channel of a reconstructed field compared against a target of `kind`.
pub fn channel(field: &ComplexField, kind: Kind) -> Raster {
    match kind {
        Kind::Amplitude => field.amplitude(),
        Kind::Phase => field.phase().map(|p| p + PI),
    }
}

/// Camera intensity of the padded target at another wavelength.
fn second_hologram(target: &Raster, kind: Kind, params: &SystemParams, wavelength: f64) -> Result<Raster> {
    let (w, h) = target.dims();
    let padded = pad_replicate_sides(target, w / 2, w - w / 2, h / 2, h - h / 2);
    let obj = object_field(&padded, kind);
    let plan = PropagationPlan::relative(2 * w, 2 * h, params.pitch(), wavelength, -params.z_distance)?;
    Ok(plan.apply(&obj)?.map(|c| c.norm_sqr()))
}

/// Two-wavelength problem for a simulated pair: the stored hologram plus a
/// second one simulated from the target at `second_wavelength`.
pub fn gs_problem(pair: &TrainingPair, second_wavelength: f64, iterations: usize) -> Result<GsProblem> {
    let params = &pair.params;
    Ok(GsProblem::new(
        vec![
            Constraint {
                intensity: pair.hologram.clone(),
                wavelength: params.wavelength,
                z: params.z_distance,
            },
            Constraint {
                intensity: second_hologram(&pair.target, pair.kind, params, second_wavelength)?,
                wavelength: second_wavelength,
                z: params.z_distance,
            },
        ],
        iterations,
        params.pitch(),
    ))
}

/// RMSE of one method on one pair (compared on the pair's own channel).
pub fn method_rmse(pair: &TrainingPair, method: Method, ctx: &EvalContext) -> Result<f64> {
    let (w, h) = pair.target.dims();
    let holo = || Hologram::new(pair.hologram.clone(), pair.params);
    let score = |f: ComplexField| -> Result<f64> { rmse(&channel(&crop_center(&f, w, h)?, pair.kind), &pair.target) };
    match method {
        Method::As => rmse(&pair.input, &pair.target),
        Method::CnnOnly => {
            let (a, p) = ctx.nets()?;
            score(cnn_only_reconstruct(&holo()?, a, p, &ctx.reconstruct)?)
        }
        Method::Utirnet => {
            let (a, p) = ctx.nets()?;
            score(utirnet_reconstruct(&holo()?, a, p, &ctx.reconstruct)?)
        }
        Method::Gs | Method::GsCff => {
            let problem = gs_problem(pair, ctx.gs_second_wavelength, ctx.gs_iterations)?;
            let result = if method == Method::Gs {
                gs_multi(&problem)?
            } else {
                gs_cff(&problem, &ctx.cff)?
            };
            score(result.field)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub manifest_hash: String,
    pub corpus: Vec<String>,
    pub pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub dataset: String,
    pub source_id: String,
    pub kind: Kind,
    pub method: Method,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub dataset: String,
    pub method: Method,
    pub channel: Kind,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub params: Option<SystemParams>,
    pub methods: Vec<Method>,
    pub datasets: Vec<DatasetInfo>,
    pub cells: Vec<EvalCell>,
    pub scores: Vec<PairScore>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Six significant digits.
pub(crate) fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

impl EvalReport {
    pub fn cell(&self, dataset: &str, method: Method, channel: Kind) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.method == method && c.channel == channel)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dataset,method,channel,count,mean_rmse,std_rmse\n");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                c.dataset,
                c.method,
                c.channel,
                c.count,
                sig6(c.mean),
                sig6(c.std)
            );
        }
        s
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<16} {:<10} {:<10} {:>6} {:>14} {:>14}\n", "dataset", "method", "channel", "n", "mean", "std");
        for c in &self.cells {
            let _ = writeln!(
                s,
                "{:<16} {:<10} {:<10} {:>6} {:>14} {:>14}",
                c.dataset,
                c.method.name(),
                c.channel.to_string(),
                c.count,
                sig6(c.mean),
                sig6(c.std)
            );
        }
        s
    }
}

/// Scores every selected pair of every dataset with every method.
pub fn evaluate(datasets: &[(&str, &DatasetManifest)], methods: &[Method], ctx: &EvalContext) -> Result<EvalReport> {
    if datasets.is_empty() {
        return Err(Error::Count("no datasets to evaluate".into()));
    }
    if methods.is_empty() {
        return Err(Error::Count("no methods to evaluate".into()));
    }
    if methods.iter().any(|m| m.learned()) {
        ctx.nets()?;
    }
    let mut report = EvalReport {
        params: Some(datasets[0].1.params),
        methods: methods.to_vec(),
        datasets: Vec::new(),
        cells: Vec::new(),
        scores: Vec::new(),
    };
    for &(name, manifest) in datasets {
        let mut records: Vec<&PairRecord> = manifest
            .pairs
            .iter()
            .filter(|p| ctx.split.map_or(true, |s| p.split == s))
            .collect();
        records.sort_by(|a, b| (&a.source_id, a.kind as u8).cmp(&(&b.source_id, b.kind as u8)));
        let scores: Vec<Vec<PairScore>> = records
            .par_iter()
            .map(|rec| {
                let pair = manifest.load_pair(rec)?;
                methods
                    .iter()
                    .map(|&m| {
                        Ok(PairScore {
                            dataset: name.to_string(),
                            source_id: rec.source_id.clone(),
                            kind: rec.kind,
                            method: m,
                            rmse: method_rmse(&pair, m, ctx)?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let scores: Vec<PairScore> = scores.into_iter().flatten().collect();
        for &m in methods {
            for kind in [Kind::Amplitude, Kind::Phase] {
                let v: Vec<f64> = scores
                    .iter()
                    .filter(|s| s.method == m && s.kind == kind)
                    .map(|s| s.rmse)
                    .collect();
                if v.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&v);
                report.cells.push(EvalCell {
                    dataset: name.to_string(),
                    method: m,
                    channel: kind,
                    count: v.len(),
                    mean,
                    std,
                });
            }
        }
        report.datasets.push(DatasetInfo {
            name: name.to_string(),
            manifest_hash: manifest.hash()?,
            corpus: manifest.corpus.clone(),
            pairs: records.len(),
        });
        report.scores.extend(scores);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZPoint {
    pub z: f64,
    pub channel: Kind,
    pub as_rmse: f64,
    pub utirnet_rmse: f64,
    /// UTIRnet RMSE / AS RMSE in percent.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZSweep {
    pub training_z: f64,
    pub points: Vec<ZPoint>,
}

impl ZSweep {
    pub fn curve(&self, channel: Kind) -> Vec<&ZPoint> {
        self.points.iter().filter(|p| p.channel == channel).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,z,as_rmse,utirnet_rmse,relative_percent\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.channel,
                sig6(p.z),
                sig6(p.as_rmse),
                sig6(p.utirnet_rmse),
                sig6(p.relative)
            );
        }
        s
    }
}

/// Resimulates `targets` at every distance in `z_values` and
/// scores UTIRnet against plain backpropagation with fixed weights.
pub fn z_sweep(
    targets: &[(Raster, Kind)],
    params: &SystemParams,
    z_values: &[f64],
    ctx: &EvalContext,
) -> Result<ZSweep> {
    if targets.is_empty() {
        return Err(Error::Count("no targets for the z sweep".into()));
    }
    if let Some(z) = z_values.iter().find(|z| !(**z > 0.0)) {
        return Err(Error::Parameter(format!("sweep distance {z} must be positive")));
    }
    let (a, p) = ctx.nets()?;
    let mut points = Vec::new();
    for &z in z_values {
        let pz = params.with_z(z);
        let results: Vec<(Kind, f64, f64)> = targets
            .par_iter()
            .map(|(target, kind)| {
                let (input, hologram) = forward_model(target, *kind, &pz)?;
                let t = target.clone().with_pitch(pz.pitch())?;
                let u = utirnet_reconstruct(&Hologram::new(hologram, pz)?, a, p, &ctx.reconstruct)?;
                let u = channel(&crop_center(&u, t.width(), t.height())?, *kind);
                Ok((*kind, rmse(&input, &t)?, rmse(&u, &t)?))
            })
            .collect::<Result<_>>()?;
        for kind in [Kind::Amplitude, Kind::Phase] {
            let sel: Vec<_> = results.iter().filter(|r| r.0 == kind).collect();
            if sel.is_empty() {
                continue;
            }
            let n = sel.len() as f64;
            let as_rmse = sel.iter().map(|r| r.1).sum::<f64>() / n;
            let utirnet_rmse = sel.iter().map(|r| r.2).sum::<f64>() / n;
            points.push(ZPoint {
                z,
                channel: kind,
                as_rmse,
                utirnet_rmse,
                relative: 100.0 * utirnet_rmse / as_rmse,
            });
        }
    }
    Ok(ZSweep {
        training_z: params.z_distance,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasetgen::synthesize_pair;
    use crate::tiling::PassThrough;

    fn pair(kind: Kind) -> TrainingPair {
        let t = Raster::from_fn(32, 32, 1.0, |x, y| {
            let d = (x as f64 - 14.0).hypot(y as f64 - 17.0);
            if d < 6.0 {
                0.3
            } else {
                0.8
            }
        })
        .unwrap();
        let t = if kind == Kind::Phase { t.map(|v| v * 2.0) } else { t };
        synthesize_pair(&t, kind, &SystemParams::lensless(1e-3), "x", 1).unwrap()
    }

    #[test]
    fn as_method_is_stored_input_rmse() {
        let p = pair(Kind::Amplitude);
        let ctx = EvalContext::default();
        assert_eq!(method_rmse(&p, Method::As, &ctx).unwrap(), rmse(&p.input, &p.target).unwrap());
    }

    #[test]
    fn learned_methods_need_weights() {
        let p = pair(Kind::Amplitude);
        let err = method_rmse(&p, Method::Utirnet, &EvalContext::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn gs_beats_as_on_simulated_pairs() {
        let ctx = EvalContext::default();
        for kind in [Kind::Amplitude, Kind::Phase] {
            let p = pair(kind);
            let a = method_rmse(&p, Method::As, &ctx).unwrap();
            let g = method_rmse(&p, Method::Gs, &ctx).unwrap();
            assert!(g < a, "{kind}: gs {g} as {a}");
        }
    }

    #[test]
    fn pass_through_reconstruction_matches_stored_input() {
        // a network replaced by identity reproduces plain backpropagation
        let p = pair(Kind::Amplitude);
        let holo = Hologram::new(p.hologram.clone(), p.params).unwrap();
        let u = utirnet_reconstruct(&holo, &PassThrough, &PassThrough, &EvalContext::default().reconstruct).unwrap();
        let c = channel(&crop_center(&u, 32, 32).unwrap(), Kind::Amplitude);
        for (a, b) in c.values().iter().zip(p.input.values()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0604981234), "6.04981e-2");
        assert_eq!(sig6(123.0), "1.23000e2");
    }
}
