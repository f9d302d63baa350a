//! Two-path convolutional image filter.
//!
//! Path 1 runs a stack of conv + ReLU blocks at full resolution. Path 2
//! pools the input 2x2, runs an identical stack, and upsamples back. The two
//! feature stacks are concatenated and a final convolution maps them to one
//! output channel.

mod gradcheck;
mod io;
pub mod layers;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::field::Raster;
use crate::{Error, Result};
use layers::{Conv, Pooling, Tensor, Upsampling};

pub use gradcheck::{gradient_check, gradient_check_weights, GradCheckReport};
pub use io::{read_weights, write_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use train::{learning_rate, train, train_pairs, EpochLog, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub filters_per_layer: usize,
    pub kernel_size: usize,
    pub blocks_per_path: usize,
    pub pooling: Pooling,
    pub upsampling: Upsampling,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            filters_per_layer: 70,
            kernel_size: 3,
            blocks_per_path: 4,
            pooling: Pooling::Max,
            upsampling: Upsampling::Bilinear,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filters_per_layer == 0 {
            return Err(Error::Parameter("filters_per_layer must be at least 1".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size {} is not odd", self.kernel_size)));
        }
        if self.blocks_per_path == 0 {
            return Err(Error::Parameter("blocks_per_path must be at least 1".into()));
        }
        Ok(())
    }

    /// (in, out) channel counts of every convolution, in storage order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let f = self.filters_per_layer;
        let path: Vec<(usize, usize)> = (0..self.blocks_per_path)
            .map(|b| (if b == 0 { 1 } else { f }, f))
            .collect();
        let mut all = path.clone();
        all.extend(path);
        all.push((2 * f, 1));
        all
    }
}

/// Provenance recorded alongside trained weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub kind: Option<String>,
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_log: Vec<EpochLog>,
    pub dataset_hash: String,
    pub params_hash: String,
    pub seed: u64,
    pub train_pairs: usize,
}

/// Convolutions in order: path-1 blocks, path-2 blocks, final layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    pub spec: NetworkSpec,
    pub layers: Vec<Conv>,
    pub meta: TrainingMeta,
}

struct PathCache {
    /// Padded input of each convolution.
    padded: Vec<Tensor>,
    /// Post-ReLU output of each block.
    acts: Vec<Tensor>,
}

impl NetworkWeights {
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.kernel_size;
        Ok(NetworkWeights {
            spec,
            layers: spec.layer_shapes().into_iter().map(|(i, o)| Conv::zeros(i, o, k)).collect(),
            meta: TrainingMeta::default(),
        })
    }

    /// He-normal hidden layers, unit-gain final layer, zero biases.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = w.layers.len() - 1;
        for (li, conv) in w.layers.iter_mut().enumerate() {
            let fan_in = (conv.in_channels * conv.kernel * conv.kernel) as f64;
            let gain = if li == last { 1.0 } else { 2.0 };
            let dist = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
            conv.weights.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
        Ok(w)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv::param_count).sum()
    }

    /// Checks layer shapes against `self.spec` and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let shapes = self.spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "spec needs {} layers, weights have {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (li, (conv, (i, o))) in self.layers.iter().zip(shapes).enumerate() {
            let k = self.spec.kernel_size;
            if conv.in_channels != i
                || conv.out_channels != o
                || conv.kernel != k
                || conv.weights.len() != i * o * k * k
                || conv.bias.len() != o
            {
                return Err(Error::Shape(format!("layer {li} does not match the network shape")));
            }
            if !conv.weights.iter().chain(&conv.bias).all(|v| v.is_finite()) {
                return Err(Error::Data(format!("layer {li} has non-finite values")));
            }
        }
        Ok(())
    }

    fn blocks(&self) -> usize {
        self.spec.blocks_per_path
    }

    fn path1(&self) -> &[Conv] {
        &self.layers[..self.blocks()]
    }

    fn path2(&self) -> &[Conv] {
        &self.layers[self.blocks()..2 * self.blocks()]
    }

    /// The final convolution split into its path-1 and path-2 input halves.
    /// The bias rides on the first half.
    fn final_halves(&self) -> (Conv, Conv) {
        let fin = &self.layers[2 * self.blocks()];
        let f = self.spec.filters_per_layer;
        let k = fin.kernel;
        let kk = k * k;
        let mut a = Conv::zeros(f, 1, k);
        let mut b = Conv::zeros(f, 1, k);
        a.weights.copy_from_slice(&fin.weights[..f * kk]);
        b.weights.copy_from_slice(&fin.weights[f * kk..]);
        a.bias.copy_from_slice(&fin.bias);
        (a, b)
    }

    fn check_input(&self, input: &Raster) -> Result<()> {
        let (w, h) = input.dims();
        if w % 2 != 0 || h % 2 != 0 {
            return Err(Error::Shape(format!("network input {w}x{h} must have even dimensions")));
        }
        if !input.is_finite() {
            return Err(Error::Data("network input contains non-finite values".into()));
        }
        Ok(())
    }

    fn run_path(&self, convs: &[Conv], mut x: Tensor, mut cache: Option<&mut PathCache>) -> Tensor {
        let r = self.spec.kernel_size / 2;
        for conv in convs {
            let padded = layers::pad_planes(&x, r);
            x = layers::conv_forward(&padded, conv);
            layers::relu_inplace(&mut x);
            if let Some(c) = cache.as_deref_mut() {
                c.padded.push(padded);
                c.acts.push(x.clone());
            }
        }
        x
    }

    /// Applies the network to one image; output has the input's shape and pitch.
    pub fn forward(&self, input: &Raster) -> Result<Raster> {
        self.check_input(input)?;
        let (w, h) = input.dims();
        let r = self.spec.kernel_size / 2;
        let (fa, fb) = self.final_halves();
        let x = Tensor {
            channels: 1,
            height: h,
            width: w,
            data: input.values().to_vec(),
        };
        let pooled = layers::pool2(&x, self.spec.pooling);

        let p1 = self.run_path(self.path1(), x, None);
        let mut out = layers::conv_forward(&layers::pad_planes(&p1, r), &fa);
        drop(p1);
        let p2 = self.run_path(self.path2(), pooled, None);
        let up = layers::upsample2(&p2, self.spec.upsampling);
        drop(p2);
        let part = layers::conv_forward(&layers::pad_planes(&up, r), &fb);
        for (o, p) in out.data.iter_mut().zip(&part.data) {
            *o += p;
        }
        Raster::new(w, h, input.pitch(), out.data)
    }

    /// Mean squared error against `target` and its gradient for every parameter.
    pub fn loss_and_grad(&self, input: &Raster, target: &Raster) -> Result<(f64, Vec<Conv>)> {
        self.check_input(input)?;
        input.ensure_same_shape(target)?;
        let (w, h) = input.dims();
        let r = self.spec.kernel_size / 2;
        let (fa, fb) = self.final_halves();
        let x = Tensor {
            channels: 1,
            height: h,
            width: w,
            data: input.values().to_vec(),
        };
        let pooled = layers::pool2(&x, self.spec.pooling);

        let mut c1 = PathCache {
            padded: Vec::new(),
            acts: Vec::new(),
        };
        let mut c2 = PathCache {
            padded: Vec::new(),
            acts: Vec::new(),
        };
        let p1 = self.run_path(self.path1(), x, Some(&mut c1));
        let p2 = self.run_path(self.path2(), pooled, Some(&mut c2));
        let up = layers::upsample2(&p2, self.spec.upsampling);
        let pad1 = layers::pad_planes(&p1, r);
        let pad2 = layers::pad_planes(&up, r);
        let mut out = layers::conv_forward(&pad1, &fa);
        let part = layers::conv_forward(&pad2, &fb);
        for (o, p) in out.data.iter_mut().zip(&part.data) {
            *o += p;
        }

        let n = (w * h) as f64;
        let mut loss = 0.0;
        let mut g = Tensor::zeros(1, h, w);
        for ((gv, o), t) in g.data.iter_mut().zip(&out.data).zip(target.values()) {
            let d = o - t;
            loss += d * d;
            *gv = 2.0 * d / n;
        }
        loss /= n;

        let ga = layers::conv_backward(&pad1, &fa, &g, true);
        let gb = layers::conv_backward(&pad2, &fb, &g, true);
        let blocks = self.blocks();
        let mut grads: Vec<Conv> = self
            .layers
            .iter()
            .map(|c| Conv::zeros(c.in_channels, c.out_channels, c.kernel))
            .collect();
        {
            let fin = &mut grads[2 * blocks];
            let half = ga.weights.len();
            fin.weights[..half].copy_from_slice(&ga.weights);
            fin.weights[half..].copy_from_slice(&gb.weights);
            fin.bias.copy_from_slice(&ga.bias);
        }
        let g1 = ga.input.expect("requested");
        let g2 = layers::upsample2_backward(&gb.input.expect("requested"), self.spec.upsampling);
        let (left, right) = grads.split_at_mut(blocks);
        path_backward(self.path1(), &c1, g1, left);
        path_backward(self.path2(), &c2, g2, &mut right[..blocks]);
        Ok((loss, grads))
    }
}

fn path_backward(convs: &[Conv], cache: &PathCache, mut g: Tensor, grads: &mut [Conv]) {
    for l in (0..convs.len()).rev() {
        layers::relu_backward_inplace(&mut g, &cache.acts[l]);
        let cg = layers::conv_backward(&cache.padded[l], &convs[l], &g, l > 0);
        grads[l].weights = cg.weights;
        grads[l].bias = cg.bias;
        if let Some(gi) = cg.input {
            g = gi;
        }
    }
}

impl crate::tiling::RasterFilter for NetworkWeights {
    fn apply(&self, input: &Raster) -> Result<Raster> {
        self.forward(input)
    }
}

/// Convenience wrapper for [`NetworkWeights::forward`].
pub fn forward(weights: &NetworkWeights, input: &Raster) -> Result<Raster> {
    weights.forward(input)
}
