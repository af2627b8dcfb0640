use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv3d_backward, conv3d_linear, Conv3dParams, Padding};
use super::{sigmoid, Gates, Tensor};
use crate::error::{Error, Result};

/// ConvLSTM cell: input kernels `[n, m, k, k]`, recurrent kernels
/// `[n, n, k, k]` and biases `[n]` per gate. Convolutions use "same"
/// zero padding so the state keeps the spatial extent of the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLstmParams {
    pub w_x: Gates<Tensor>,
    pub w_h: Gates<Tensor>,
    pub b: Gates<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmState {
    pub h: Tensor,
    pub c: Tensor,
}

impl ConvLstmState {
    pub fn zeros(maps: usize, height: usize, width: usize) -> Self {
        ConvLstmState { h: Tensor::zeros([maps, height, width]), c: Tensor::zeros([maps, height, width]) }
    }
}

impl ConvLstmParams {
    pub fn new(w_x: Gates<Tensor>, w_h: Gates<Tensor>, b: Gates<Tensor>) -> Result<Self> {
        let p = ConvLstmParams { w_x, w_h, b };
        p.validate()?;
        Ok(p)
    }

    /// Fan-in scaled uniform weights (input and recurrent kernels scaled by
    /// their own fan-in), zero biases.
    pub fn init<R: Rng + ?Sized>(out_maps: usize, in_maps: usize, kernel: usize, rng: &mut R) -> Self {
        let sx = (1.0 / (in_maps * kernel * kernel) as f64).sqrt();
        let sh = (1.0 / (out_maps * kernel * kernel) as f64).sqrt();
        ConvLstmParams {
            w_x: Gates::from_fn(|| Tensor::uniform([out_maps, in_maps, kernel, kernel], sx, rng)),
            w_h: Gates::from_fn(|| Tensor::uniform([out_maps, out_maps, kernel, kernel], sh, rng)),
            b: Gates::from_fn(|| Tensor::zeros([out_maps])),
        }
    }

    pub fn out_maps(&self) -> usize {
        self.w_x.i.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.w_x.i.shape()[1]
    }

    pub fn kernel(&self) -> [usize; 2] {
        [self.w_x.i.shape()[2], self.w_x.i.shape()[3]]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.w_x.i.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: self.w_x.i.shape().to_vec(),
                reason: "ConvLSTM input weights must be [n, m, k, k]".into(),
            });
        }
        let (n, m, [kh, kw]) = (self.out_maps(), self.in_maps(), self.kernel());
        for w in self.w_x.iter() {
            w.expect_shape(&[n, m, kh, kw], "ConvLSTM input weights")?;
        }
        if self.w_h.i.rank() != 4 {
            return Err(Error::InvalidShape {
                shape: self.w_h.i.shape().to_vec(),
                reason: "ConvLSTM recurrent weights must be [n, n, k, k]".into(),
            });
        }
        let rk = [self.w_h.i.shape()[2], self.w_h.i.shape()[3]];
        for w in self.w_h.iter() {
            w.expect_shape(&[n, n, rk[0], rk[1]], "ConvLSTM recurrent weights")?;
        }
        for b in self.b.iter() {
            b.expect_shape(&[n], "ConvLSTM bias")?;
        }
        Ok(())
    }

    /// The four gates' kernels stacked into single `[4n, in, 1, k, k]`
    /// convolutions; the biases ride on the input convolution.
    pub(crate) fn stacked(&self) -> StackedConvLstm {
        let stack = |ws: &Gates<Tensor>, bias: Tensor| {
            let s = ws.i.shape();
            let data = ws.iter().flat_map(|w| w.data().iter().copied()).collect();
            let weight = Tensor::new([4 * s[0], s[1], 1, s[2], s[3]], data).expect("gate kernels share a shape");
            Conv3dParams { weight, bias, stride: [1; 3] }
        };
        let bias = Tensor::new([4 * self.out_maps()], self.b.iter().flat_map(|b| b.data().iter().copied()).collect())
            .expect("gate biases share a shape");
        StackedConvLstm {
            input: stack(&self.w_x, bias),
            recurrent: stack(&self.w_h, Tensor::zeros([4 * self.out_maps()])),
            maps: self.out_maps(),
        }
    }
}

pub(crate) struct StackedConvLstm {
    input: Conv3dParams,
    recurrent: Conv3dParams,
    maps: usize,
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct ConvLstmCache {
    /// Activated gates stacked as `[i; f; c~; o]`, each `[n, H, W]`.
    pub gates: Vec<f64>,
    pub c_prev: Tensor,
    pub state: ConvLstmState,
}

#[derive(Clone, Debug)]
pub struct ConvLstmStepGrads {
    pub x: Tensor,
    pub h_prev: Tensor,
    pub c_prev: Tensor,
    pub w_x: Gates<Tensor>,
    pub w_h: Gates<Tensor>,
    pub b: Gates<Tensor>,
}

fn as_volume(t: &Tensor) -> Tensor {
    let s = t.shape();
    t.clone().reshape([s[0], 1, s[1], s[2]]).expect("rank-3 map reshaped to a single slice")
}

impl StackedConvLstm {
    fn check(&self, x: &Tensor, state: &ConvLstmState) -> Result<()> {
        let m = self.input.in_maps();
        if x.rank() != 3 || x.shape()[0] != m {
            return Err(Error::shape("ConvLSTM input vs input weights", [m, 0, 0], x.shape().to_vec()));
        }
        let want = [self.maps, x.shape()[1], x.shape()[2]];
        state.h.expect_shape(&want, "ConvLSTM hidden state")?;
        state.c.expect_shape(&want, "ConvLSTM cell state")?;
        Ok(())
    }

    pub(crate) fn step(&self, x: &Tensor, state: &ConvLstmState) -> Result<ConvLstmCache> {
        self.check(x, state)?;
        let n = self.maps;
        let mut z = conv3d_linear(&as_volume(x), &self.input, Padding::Same)?;
        z.add_assign(&conv3d_linear(&as_volume(&state.h), &self.recurrent, Padding::Same)?)?;
        let plane = state.c.len();
        let mut gates = z.into_data();
        for (g, chunk) in gates.chunks_exact_mut(plane).enumerate() {
            let f: fn(f64) -> f64 = if g == 2 { f64::tanh } else { sigmoid };
            chunk.iter_mut().for_each(|v| *v = f(*v));
        }
        let (gi, gf, gc, go) = (&gates[..plane], &gates[plane..2 * plane], &gates[2 * plane..3 * plane], &gates[3 * plane..]);
        let c_prev = state.c.data();
        let c: Vec<f64> = (0..plane).map(|j| gf[j] * c_prev[j] + gi[j] * gc[j]).collect();
        let h: Vec<f64> = (0..plane).map(|j| go[j] * c[j].tanh()).collect();
        let shape = [n, x.shape()[1], x.shape()[2]];
        Ok(ConvLstmCache {
            c_prev: state.c.clone(),
            state: ConvLstmState { h: Tensor::new(shape, h)?, c: Tensor::new(shape, c)? },
            gates,
        })
    }

    pub(crate) fn backward(
        &self,
        x: &Tensor,
        h_prev: &Tensor,
        cache: &ConvLstmCache,
        grad_h: &Tensor,
        grad_c: &Tensor,
    ) -> Result<ConvLstmStepGrads> {
        let shape = cache.state.h.shape().to_vec();
        grad_h.expect_shape(&shape, "ConvLSTM hidden gradient")?;
        grad_c.expect_shape(&shape, "ConvLSTM cell gradient")?;
        let plane = cache.state.c.len();
        let g = &cache.gates;
        let (c, c_prev) = (cache.state.c.data(), cache.c_prev.data());
        let (gh, gc) = (grad_h.data(), grad_c.data());
        let mut dz = vec![0.0; 4 * plane];
        let mut grad_c_prev = vec![0.0; plane];
        for j in 0..plane {
            let (i, f, ct, o) = (g[j], g[plane + j], g[2 * plane + j], g[3 * plane + j]);
            let tc = c[j].tanh();
            let dc = gc[j] + gh[j] * o * (1.0 - tc * tc);
            dz[j] = dc * ct * i * (1.0 - i);
            dz[plane + j] = dc * c_prev[j] * f * (1.0 - f);
            dz[2 * plane + j] = dc * i * (1.0 - ct * ct);
            dz[3 * plane + j] = gh[j] * tc * o * (1.0 - o);
            grad_c_prev[j] = dc * f;
        }
        let dz = Tensor::new([4 * self.maps, 1, shape[1], shape[2]], dz)?;
        let gx = conv3d_backward(&as_volume(x), &self.input, Padding::Same, &dz)?;
        let gr = conv3d_backward(&as_volume(h_prev), &self.recurrent, Padding::Same, &dz)?;

        let split = |t: &Tensor, per_gate: Vec<usize>| -> Gates<Tensor> {
            let len: usize = per_gate.iter().product();
            let mut parts = t.data().chunks_exact(len).map(|c| Tensor::new(per_gate.clone(), c.to_vec()).expect("split gate"));
            Gates {
                i: parts.next().expect("four gates"),
                f: parts.next().expect("four gates"),
                c: parts.next().expect("four gates"),
                o: parts.next().expect("four gates"),
            }
        };
        let ws = |p: &Conv3dParams| {
            let s = p.weight.shape();
            vec![s[0] / 4, s[1], s[3], s[4]]
        };
        let xs = x.shape().to_vec();
        Ok(ConvLstmStepGrads {
            x: gx.input.reshape(xs)?,
            h_prev: gr.input.reshape(shape.clone())?,
            c_prev: Tensor::new(shape, grad_c_prev)?,
            w_x: split(&gx.weight, ws(&self.input)),
            w_h: split(&gr.weight, ws(&self.recurrent)),
            b: split(&gx.bias, vec![self.maps]),
        })
    }
}

pub fn convlstm_step_cached(x: &Tensor, state: &ConvLstmState, params: &ConvLstmParams) -> Result<ConvLstmCache> {
    params.validate()?;
    params.stacked().step(x, state)
}

/// One ConvLSTM step on `x: [m, H, W]`.
pub fn convlstm_step(x: &Tensor, state: &ConvLstmState, params: &ConvLstmParams) -> Result<ConvLstmState> {
    Ok(convlstm_step_cached(x, state, params)?.state)
}

pub fn convlstm_step_backward(
    x: &Tensor,
    state_prev: &ConvLstmState,
    params: &ConvLstmParams,
    cache: &ConvLstmCache,
    grad_h: &Tensor,
    grad_c: &Tensor,
) -> Result<ConvLstmStepGrads> {
    params.validate()?;
    params.stacked().backward(x, &state_prev.h, cache, grad_h, grad_c)
}
