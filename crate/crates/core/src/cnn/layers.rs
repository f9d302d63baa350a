//! Tensor kernels for the filtering network. Every parallel loop writes a
//! disjoint output slice and accumulates serially, so results are bitwise
//! reproducible regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Channel-major stack of `channels` planes of `height` x `width`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Max,
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    Nearest,
    Bilinear,
}

/// Weights `[out][in][ky][kx]` and one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv {
            in_channels,
            out_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_channels + i) * self.kernel + ky) * self.kernel + kx
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Replicate-pads every plane by `r` on each side.
pub fn pad_planes(t: &Tensor, r: usize) -> Tensor {
    let (h, w) = (t.height, t.width);
    let (ph, pw) = (h + 2 * r, w + 2 * r);
    let mut out = Tensor::zeros(t.channels, ph, pw);
    out.data.par_chunks_mut(ph * pw).enumerate().for_each(|(c, dst)| {
        let src = t.plane(c);
        for y in 0..ph {
            let sy = y.saturating_sub(r).min(h - 1);
            let row = &src[sy * w..(sy + 1) * w];
            let d = &mut dst[y * pw..(y + 1) * pw];
            d[..r].fill(row[0]);
            d[r..r + w].copy_from_slice(row);
            d[r + w..].fill(row[w - 1]);
        }
    });
    out
}

/// Same-size convolution over a pre-padded input.
pub fn conv_forward(padded: &Tensor, conv: &Conv) -> Tensor {
    let k = conv.kernel;
    let (h, w) = (padded.height + 1 - k, padded.width + 1 - k);
    let pw = padded.width;
    let mut out = Tensor::zeros(conv.out_channels, h, w);
    out.data.par_chunks_mut(h * w).enumerate().for_each(|(o, plane)| {
        plane.fill(conv.bias[o]);
        for i in 0..conv.in_channels {
            let src = padded.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = conv.weights[conv.widx(o, i, ky, kx)];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let d = &mut plane[y * w..(y + 1) * w];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv += wv * sv;
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradients of one convolution.
pub struct ConvGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Gradient with respect to the unpadded input, when requested.
    pub input: Option<Tensor>,
}

pub fn conv_backward(padded: &Tensor, conv: &Conv, grad_out: &Tensor, need_input: bool) -> ConvGrad {
    let k = conv.kernel;
    let r = k / 2;
    let (h, w) = (grad_out.height, grad_out.width);
    let pw = padded.width;
    let ci = conv.in_channels;

    let bias: Vec<f64> = (0..conv.out_channels).map(|o| grad_out.plane(o).iter().sum()).collect();

    let mut weights = vec![0.0; conv.weights.len()];
    weights.par_chunks_mut(ci * k * k).enumerate().for_each(|(o, wg)| {
        let g = grad_out.plane(o);
        for i in 0..ci {
            let src = padded.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let s = &src[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let gr = &g[y * w..(y + 1) * w];
                        acc += s.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    wg[(i * k + ky) * k + kx] = acc;
                }
            }
        }
    });

    let input = need_input.then(|| {
        let ph = padded.height;
        let mut gp = Tensor::zeros(ci, ph, pw);
        gp.data.par_chunks_mut(ph * pw).enumerate().for_each(|(i, dst)| {
            for o in 0..conv.out_channels {
                let g = grad_out.plane(o);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = conv.weights[conv.widx(o, i, ky, kx)];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in 0..h {
                            let d = &mut dst[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                            for (dv, gv) in d.iter_mut().zip(&g[y * w..(y + 1) * w]) {
                                *dv += wv * gv;
                            }
                        }
                    }
                }
            }
        });
        unpad_accumulate(&gp, r)
    });

    ConvGrad { weights, bias, input }
}

/// Adjoint of [`pad_planes`]: border samples fold back onto the edge they replicate.
fn unpad_accumulate(gp: &Tensor, r: usize) -> Tensor {
    let (ph, pw) = (gp.height, gp.width);
    let (h, w) = (ph - 2 * r, pw - 2 * r);
    let mut out = Tensor::zeros(gp.channels, h, w);
    out.data.par_chunks_mut(h * w).enumerate().for_each(|(c, dst)| {
        let src = gp.plane(c);
        for y in 0..ph {
            let sy = y.saturating_sub(r).min(h - 1);
            for x in 0..pw {
                let sx = x.saturating_sub(r).min(w - 1);
                dst[sy * w + sx] += src[y * pw + x];
            }
        }
    });
    out
}

pub fn relu_inplace(t: &mut Tensor) {
    t.data.par_iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries where the activation output was not positive.
pub fn relu_backward_inplace(grad: &mut Tensor, activation: &Tensor) {
    grad.data
        .par_iter_mut()
        .zip(activation.data.par_iter())
        .for_each(|(g, a)| {
            if *a <= 0.0 {
                *g = 0.0;
            }
        });
}

/// 2x2 pooling with stride 2; dimensions must be even.
pub fn pool2(t: &Tensor, mode: Pooling) -> Tensor {
    let (h, w) = (t.height / 2, t.width / 2);
    let mut out = Tensor::zeros(t.channels, h, w);
    out.data.par_chunks_mut(h * w).enumerate().for_each(|(c, dst)| {
        let src = t.plane(c);
        let tw = t.width;
        for y in 0..h {
            for x in 0..w {
                let a = src[2 * y * tw + 2 * x];
                let b = src[2 * y * tw + 2 * x + 1];
                let cc = src[(2 * y + 1) * tw + 2 * x];
                let d = src[(2 * y + 1) * tw + 2 * x + 1];
                dst[y * w + x] = match mode {
                    Pooling::Max => a.max(b).max(cc).max(d),
                    Pooling::Average => 0.25 * (a + b + cc + d),
                };
            }
        }
    });
    out
}

/// Two-tap (or one-tap) interpolation weights for doubling a length `n` axis.
fn up2_taps(n: usize, mode: Upsampling) -> Vec<[(usize, f64); 2]> {
    (0..2 * n)
        .map(|j| match mode {
            Upsampling::Nearest => [(j / 2, 1.0), (j / 2, 0.0)],
            Upsampling::Bilinear => {
                let m = j / 2;
                if j % 2 == 0 {
                    [(m.saturating_sub(1), 0.25), (m, 0.75)]
                } else {
                    [(m, 0.75), ((m + 1).min(n - 1), 0.25)]
                }
            }
        })
        .collect()
}

/// Doubles both spatial dimensions (half-pixel aligned, edge clamped).
pub fn upsample2(t: &Tensor, mode: Upsampling) -> Tensor {
    let (h, w) = (t.height, t.width);
    let xt = up2_taps(w, mode);
    let yt = up2_taps(h, mode);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(t.channels, oh, ow);
    out.data.par_chunks_mut(oh * ow).enumerate().for_each(|(c, dst)| {
        let src = t.plane(c);
        let mut rows = vec![0.0; h * ow];
        for y in 0..h {
            let s = &src[y * w..(y + 1) * w];
            for (x, taps) in xt.iter().enumerate() {
                rows[y * ow + x] = taps[0].1 * s[taps[0].0] + taps[1].1 * s[taps[1].0];
            }
        }
        for (y, taps) in yt.iter().enumerate() {
            let d = &mut dst[y * ow..(y + 1) * ow];
            let (a, b) = (&rows[taps[0].0 * ow..(taps[0].0 + 1) * ow], &rows[taps[1].0 * ow..(taps[1].0 + 1) * ow]);
            for x in 0..ow {
                d[x] = taps[0].1 * a[x] + taps[1].1 * b[x];
            }
        }
    });
    out
}

/// Adjoint of [`upsample2`].
pub fn upsample2_backward(grad: &Tensor, mode: Upsampling) -> Tensor {
    let (h, w) = (grad.height / 2, grad.width / 2);
    let xt = up2_taps(w, mode);
    let yt = up2_taps(h, mode);
    let ow = grad.width;
    let mut out = Tensor::zeros(grad.channels, h, w);
    out.data.par_chunks_mut(h * w).enumerate().for_each(|(c, dst)| {
        let g = grad.plane(c);
        let mut rows = vec![0.0; h * ow];
        for (y, taps) in yt.iter().enumerate() {
            let src = &g[y * ow..(y + 1) * ow];
            for &(sy, wt) in taps {
                let d = &mut rows[sy * ow..(sy + 1) * ow];
                for (dv, sv) in d.iter_mut().zip(src) {
                    *dv += wt * sv;
                }
            }
        }
        for y in 0..h {
            let src = &rows[y * ow..(y + 1) * ow];
            for (x, taps) in xt.iter().enumerate() {
                for &(sx, wt) in taps {
                    dst[y * w + sx] += wt * src[x];
                }
            }
        }
    });
    out
}
