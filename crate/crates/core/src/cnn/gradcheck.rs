//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{NetworkSpec, NetworkWeights};
use crate::field::Raster;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    pub worst_parameter: String,
}

/// Weights first, then biases, within layer `li`.
fn param_mut(net: &mut NetworkWeights, li: usize, pi: usize) -> &mut f64 {
    let conv = &mut net.layers[li];
    let nw = conv.weights.len();
    if pi < nw {
        &mut conv.weights[pi]
    } else {
        &mut conv.bias[pi - nw]
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares every analytic parameter gradient against a central difference
/// with half-width `step`. Fails with the offending parameter names when any
/// relative error exceeds `tolerance`.
pub fn gradient_check_weights(
    weights: &NetworkWeights,
    input: &Raster,
    target: &Raster,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, grads) = weights.loss_and_grad(input, target)?;
    let mut probe = weights.clone();
    let mut offenders = Vec::new();
    let mut worst = (0.0f64, String::new());
    let mut count = 0;
    let loss_at = |net: &NetworkWeights| -> Result<f64> { Ok(net.loss_and_grad(input, target)?.0) };

    for li in 0..weights.layers.len() {
        let nw = weights.layers[li].weights.len();
        let nb = weights.layers[li].bias.len();
        for pi in 0..nw + nb {
            let (name, analytic) = if pi < nw {
                (format!("layer{li}.w[{pi}]"), grads[li].weights[pi])
            } else {
                (format!("layer{li}.b[{}]", pi - nw), grads[li].bias[pi - nw])
            };
            let orig = *param_mut(&mut probe, li, pi);
            *param_mut(&mut probe, li, pi) = orig + step;
            let up = loss_at(&probe)?;
            *param_mut(&mut probe, li, pi) = orig - step;
            let down = loss_at(&probe)?;
            *param_mut(&mut probe, li, pi) = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic, numeric);
            count += 1;
            if err > worst.0 {
                worst = (err, name.clone());
            }
            if err > tolerance {
                offenders.push(format!("{name}: analytic {analytic:.6e}, numeric {numeric:.6e}"));
            }
        }
    }
    if !offenders.is_empty() {
        return Err(Error::GradientMismatch {
            offenders,
            worst: worst.0,
        });
    }
    Ok(GradCheckReport {
        parameters: count,
        max_relative_error: worst.0,
        worst_parameter: worst.1,
    })
}

/// Gradient check on a small network of shape `spec` with seeded random
/// weights (or all zeros when `zero_weights`), input and target.
pub fn gradient_check(
    spec: NetworkSpec,
    size: usize,
    zero_weights: bool,
    seed: u64,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if spec.filters_per_layer > 4 || size > 8 {
        return Err(Error::Parameter("gradient check expects at most 4 filters and 8x8 input".into()));
    }
    let weights = if zero_weights {
        NetworkWeights::zeros(spec)?
    } else {
        let mut w = NetworkWeights::init(spec, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
        for conv in &mut w.layers {
            conv.bias.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
        }
        w
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let input = Raster::from_fn(size, size, 1.0, |_, _| rng.gen_range(-1.0..1.0))?;
    let target = Raster::from_fn(size, size, 1.0, |_, _| rng.gen_range(-1.0..1.0))?;
    gradient_check_weights(&weights, &input, &target, step, tolerance)
}
