use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// No padding; every axis shrinks by `kernel - 1`.
    Valid,
    /// Zero padding so that, at stride 1, every axis keeps its extent.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    None,
}

/// Weights `[n, m, d, kh, kw]`, bias `[n]` and per-axis stride of a 3D
/// convolution mapping `m` feature maps to `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv3dParams {
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: [usize; 3],
}

#[derive(Clone, Debug)]
pub struct Conv3dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Conv3dParams {
    pub fn new(weight: Tensor, bias: Tensor, stride: [usize; 3]) -> Result<Self> {
        if weight.rank() != 5 {
            return Err(Error::InvalidShape {
                shape: weight.shape().to_vec(),
                reason: "conv3d weights must be [n, m, d, k, k]".into(),
            });
        }
        bias.expect_shape(&[weight.shape()[0]], "conv3d bias")?;
        if stride.contains(&0) {
            return Err(Error::InvalidShape { shape: stride.to_vec(), reason: "strides must be positive".into() });
        }
        Ok(Conv3dParams { weight, bias, stride })
    }

    /// Fan-in scaled uniform initialisation with zero bias and unit stride.
    pub fn init<R: Rng + ?Sized>(out_maps: usize, in_maps: usize, kernel: [usize; 3], rng: &mut R) -> Self {
        let fan_in = in_maps * kernel.iter().product::<usize>();
        let scale = (1.0 / fan_in as f64).sqrt();
        let weight = Tensor::uniform([out_maps, in_maps, kernel[0], kernel[1], kernel[2]], scale, rng);
        Conv3dParams { weight, bias: Tensor::zeros([out_maps]), stride: [1; 3] }
    }

    pub fn out_maps(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 3] {
        let s = self.weight.shape();
        [s[2], s[3], s[4]]
    }
}

pub(crate) struct ConvGeometry {
    pub in_dims: [usize; 4],
    pub out_dims: [usize; 4],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
}

impl ConvGeometry {
    pub fn new(input: &Tensor, params: &Conv3dParams, padding: Padding) -> Result<Self> {
        if input.rank() != 4 || input.shape()[0] != params.in_maps() {
            return Err(Error::shape(
                format!("conv3d input vs weights {:?}", params.weight.shape()),
                [params.in_maps(), 0, 0, 0],
                input.shape().to_vec(),
            ));
        }
        let s = input.shape();
        let kernel = params.kernel();
        let mut out_dims = [params.out_maps(), 0, 0, 0];
        let mut pad = [0; 3];
        for axis in 0..3 {
            let (len, k, st) = (s[axis + 1], kernel[axis], params.stride[axis]);
            out_dims[axis + 1] = match padding {
                Padding::Valid => {
                    if k > len {
                        return Err(Error::shape(
                            format!("conv3d kernel {:?} larger than input", params.weight.shape()),
                            kernel.to_vec(),
                            s[1..].to_vec(),
                        ));
                    }
                    (len - k) / st + 1
                }
                Padding::Same => {
                    pad[axis] = (k - 1) / 2;
                    (len - 1) / st + 1
                }
            };
        }
        Ok(ConvGeometry {
            in_dims: [s[0], s[1], s[2], s[3]],
            out_dims,
            kernel,
            stride: params.stride,
            pad,
        })
    }

    fn range(&self, axis: usize, offset: usize) -> Range<usize> {
        axis_range(self.out_dims[axis + 1], self.in_dims[axis + 1], self.stride[axis], offset, self.pad[axis])
    }
}

/// Output indices `o` for which `o * stride + offset - pad` lands inside `[0, in_len)`.
fn axis_range(out_len: usize, in_len: usize, stride: usize, offset: usize, pad: usize) -> Range<usize> {
    let lo = if pad > offset { (pad - offset).div_ceil(stride) } else { 0 };
    if in_len - 1 + pad < offset {
        return 0..0;
    }
    let hi = ((in_len - 1 + pad - offset) / stride + 1).min(out_len);
    lo..hi.max(lo)
}

/// Convolution without the activation.
pub fn conv3d_linear(input: &Tensor, params: &Conv3dParams, padding: Padding) -> Result<Tensor> {
    let g = ConvGeometry::new(input, params, padding)?;
    let [n, od, oh, ow] = g.out_dims;
    let [m, _, ih, iw] = g.in_dims;
    let [kd, kh, kw] = g.kernel;
    let (in_plane, out_plane) = (g.in_dims[1] * ih * iw, od * oh * ow);
    let (x, w) = (input.data(), params.weight.data());
    let mut out = vec![0.0; n * out_plane];

    for (o, out_o) in out.chunks_exact_mut(out_plane).enumerate() {
        out_o.fill(params.bias.data()[o]);
        for c in 0..m {
            let xc = &x[c * in_plane..(c + 1) * in_plane];
            let wc = &w[(o * m + c) * kd * kh * kw..];
            for a in 0..kd {
                let zr = g.range(0, a);
                for b in 0..kh {
                    let yr = g.range(1, b);
                    for e in 0..kw {
                        let xr = g.range(2, e);
                        let wv = wc[(a * kh + b) * kw + e];
                        for z in zr.clone() {
                            let zi = z * g.stride[0] + a - g.pad[0];
                            for y in yr.clone() {
                                let yi = y * g.stride[1] + b - g.pad[1];
                                let row_in = &xc[(zi * ih + yi) * iw..(zi * ih + yi + 1) * iw];
                                let row_out = &mut out_o[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                                if g.stride[2] == 1 {
                                    let shift = e as isize - g.pad[2] as isize;
                                    let src = &row_in[(xr.start as isize + shift) as usize..(xr.end as isize + shift) as usize];
                                    for (dst, s) in row_out[xr.clone()].iter_mut().zip(src) {
                                        *dst += wv * s;
                                    }
                                } else {
                                    for xo in xr.clone() {
                                        row_out[xo] += wv * row_in[xo * g.stride[2] + e - g.pad[2]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(g.out_dims.to_vec(), out)
}

/// 3D convolution of `input: [m, L, H, W]` producing `[n, L', H', W']`.
pub fn conv3d(input: &Tensor, params: &Conv3dParams, padding: Padding, activation: Activation) -> Result<Tensor> {
    let pre = conv3d_linear(input, params, padding)?;
    Ok(match activation {
        Activation::Relu => relu(&pre),
        Activation::None => pre,
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given the pre-activation. The kink at zero takes
/// the zero branch.
pub fn relu_backward(pre_activation: &Tensor, grad: &Tensor) -> Result<Tensor> {
    pre_activation.zip_map(grad, |z, g| if z > 0.0 { g } else { 0.0 })
}

/// Gradients of `conv3d_linear` given the gradient w.r.t. its output.
pub fn conv3d_backward(input: &Tensor, params: &Conv3dParams, padding: Padding, grad_out: &Tensor) -> Result<Conv3dGrads> {
    let g = ConvGeometry::new(input, params, padding)?;
    grad_out.expect_shape(&g.out_dims, "conv3d output gradient")?;
    let [n, od, oh, ow] = g.out_dims;
    let [m, _, ih, iw] = g.in_dims;
    let [kd, kh, kw] = g.kernel;
    let (in_plane, out_plane) = (g.in_dims[1] * ih * iw, od * oh * ow);
    let ksize = kd * kh * kw;
    let (x, w, go) = (input.data(), params.weight.data(), grad_out.data());

    let grad_bias: Vec<f64> = go.chunks_exact(out_plane).map(|c| c.iter().sum()).collect();
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_x = vec![0.0; x.len()];

    for o in 0..n {
        let go_o = &go[o * out_plane..(o + 1) * out_plane];
        for c in 0..m {
            let xc = &x[c * in_plane..(c + 1) * in_plane];
            let gxc = &mut grad_x[c * in_plane..(c + 1) * in_plane];
            let wbase = (o * m + c) * ksize;
            for a in 0..kd {
                let zr = g.range(0, a);
                for b in 0..kh {
                    let yr = g.range(1, b);
                    for e in 0..kw {
                        let xr = g.range(2, e);
                        let widx = wbase + (a * kh + b) * kw + e;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for z in zr.clone() {
                            let zi = z * g.stride[0] + a - g.pad[0];
                            for y in yr.clone() {
                                let yi = y * g.stride[1] + b - g.pad[1];
                                let in_row = (zi * ih + yi) * iw;
                                let out_row = (z * oh + y) * ow;
                                for xo in xr.clone() {
                                    let xi = in_row + xo * g.stride[2] + e - g.pad[2];
                                    let gv = go_o[out_row + xo];
                                    acc += gv * xc[xi];
                                    gxc[xi] += wv * gv;
                                }
                            }
                        }
                        grad_w[widx] += acc;
                    }
                }
            }
        }
    }

    Ok(Conv3dGrads {
        input: Tensor::new(input.shape().to_vec(), grad_x)?,
        weight: Tensor::new(params.weight.shape().to_vec(), grad_w)?,
        bias: Tensor::new([n], grad_bias)?,
    })
}
