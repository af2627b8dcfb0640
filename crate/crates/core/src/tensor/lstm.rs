use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, Gates, Tensor};
use crate::error::{Error, Result};

/// Fully-connected LSTM cell: input weights `[n, m]`, recurrent weights
/// `[n, n]` and biases `[n]` for each of the four gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: Gates<Tensor>,
    pub w_h: Gates<Tensor>,
    pub b: Gates<Tensor>,
}

impl LstmParams {
    pub fn new(w_x: Gates<Tensor>, w_h: Gates<Tensor>, b: Gates<Tensor>) -> Result<Self> {
        let p = LstmParams { w_x, w_h, b };
        p.validate()?;
        Ok(p)
    }

    pub fn zeros(hidden: usize, input: usize) -> Self {
        LstmParams {
            w_x: Gates::from_fn(|| Tensor::zeros([hidden, input])),
            w_h: Gates::from_fn(|| Tensor::zeros([hidden, hidden])),
            b: Gates::from_fn(|| Tensor::zeros([hidden])),
        }
    }

    pub fn random<R: Rng + ?Sized>(hidden: usize, input: usize, scale: f64, rng: &mut R) -> Self {
        LstmParams {
            w_x: Gates::from_fn(|| Tensor::uniform([hidden, input], scale, rng)),
            w_h: Gates::from_fn(|| Tensor::uniform([hidden, hidden], scale, rng)),
            b: Gates::from_fn(|| Tensor::uniform([hidden], scale, rng)),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_x.i.shape()[0]
    }

    pub fn input(&self) -> usize {
        self.w_x.i.shape()[1]
    }

    fn validate(&self) -> Result<()> {
        if self.w_x.i.rank() != 2 {
            return Err(Error::InvalidShape { shape: self.w_x.i.shape().to_vec(), reason: "LSTM input weights must be [n, m]".into() });
        }
        let (n, m) = (self.hidden(), self.input());
        for w in self.w_x.iter() {
            w.expect_shape(&[n, m], "LSTM input weights")?;
        }
        for w in self.w_h.iter() {
            w.expect_shape(&[n, n], "LSTM recurrent weights")?;
        }
        for b in self.b.iter() {
            b.expect_shape(&[n], "LSTM bias")?;
        }
        Ok(())
    }
}

/// Activated gate values and states kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub gates: Gates<Vec<f64>>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmStepGrads {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub w_x: Gates<Tensor>,
    pub w_h: Gates<Tensor>,
    pub b: Gates<Tensor>,
}

fn matvec(w: &Tensor, v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (o, row) in out.iter_mut().zip(w.data().chunks_exact(cols)) {
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn check_dims(x: &[f64], h: &[f64], c: &[f64], params: &LstmParams) -> Result<()> {
    params.validate()?;
    let (n, m) = (params.hidden(), params.input());
    if x.len() != m {
        return Err(Error::shape("LSTM input", [m], [x.len()]));
    }
    if h.len() != n || c.len() != n {
        return Err(Error::shape("LSTM state", [n, n], [h.len(), c.len()]));
    }
    Ok(())
}

pub fn lstm_step_cached(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<LstmCache> {
    check_dims(x, h_prev, c_prev, params)?;
    let pre = |w_x: &Tensor, w_h: &Tensor, b: &Tensor| {
        let mut z = b.data().to_vec();
        matvec(w_x, x, &mut z);
        matvec(w_h, h_prev, &mut z);
        z
    };
    let gates = Gates {
        i: pre(&params.w_x.i, &params.w_h.i, &params.b.i).into_iter().map(sigmoid).collect::<Vec<_>>(),
        f: pre(&params.w_x.f, &params.w_h.f, &params.b.f).into_iter().map(sigmoid).collect(),
        c: pre(&params.w_x.c, &params.w_h.c, &params.b.c).into_iter().map(f64::tanh).collect(),
        o: pre(&params.w_x.o, &params.w_h.o, &params.b.o).into_iter().map(sigmoid).collect(),
    };
    let c: Vec<f64> = (0..params.hidden())
        .map(|j| gates.f[j] * c_prev[j] + gates.i[j] * gates.c[j])
        .collect();
    let h = c.iter().zip(&gates.o).map(|(c, o)| o * c.tanh()).collect();
    Ok(LstmCache { gates, c_prev: c_prev.to_vec(), c, h })
}

/// One step of the classic LSTM; returns `(h_t, c_t)`.
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = lstm_step_cached(x, h_prev, c_prev, params)?;
    Ok((cache.h, cache.c))
}

/// Back-propagates `grad_h`, `grad_c` (w.r.t. `h_t`, `c_t`) through one step.
pub fn lstm_step_backward(
    x: &[f64],
    h_prev: &[f64],
    params: &LstmParams,
    cache: &LstmCache,
    grad_h: &[f64],
    grad_c: &[f64],
) -> Result<LstmStepGrads> {
    let (n, m) = (params.hidden(), params.input());
    if grad_h.len() != n || grad_c.len() != n {
        return Err(Error::shape("LSTM state gradient", [n, n], [grad_h.len(), grad_c.len()]));
    }
    let g = &cache.gates;
    let mut dz = Gates::from_fn(|| vec![0.0; n]);
    let mut grad_c_prev = vec![0.0; n];
    for j in 0..n {
        let tc = cache.c[j].tanh();
        let dc = grad_c[j] + grad_h[j] * g.o[j] * (1.0 - tc * tc);
        dz.o[j] = grad_h[j] * tc * g.o[j] * (1.0 - g.o[j]);
        dz.f[j] = dc * cache.c_prev[j] * g.f[j] * (1.0 - g.f[j]);
        dz.i[j] = dc * g.c[j] * g.i[j] * (1.0 - g.i[j]);
        dz.c[j] = dc * g.i[j] * (1.0 - g.c[j] * g.c[j]);
        grad_c_prev[j] = dc * g.f[j];
    }

    let outer = |d: &[f64], v: &[f64]| {
        Tensor::from_fn([d.len(), v.len()], |k| d[k / v.len()] * v[k % v.len()])
    };
    let mut grad_x = vec![0.0; m];
    let mut grad_h_prev = vec![0.0; n];
    for (d, (wx, wh)) in dz.iter().zip(params.w_x.iter().zip(params.w_h.iter())) {
        for j in 0..n {
            for (k, gx) in grad_x.iter_mut().enumerate() {
                *gx += wx.data()[j * m + k] * d[j];
            }
            for (k, gh) in grad_h_prev.iter_mut().enumerate() {
                *gh += wh.data()[j * n + k] * d[j];
            }
        }
    }
    Ok(LstmStepGrads {
        x: grad_x,
        h_prev: grad_h_prev,
        c_prev: grad_c_prev,
        w_x: dz.map(|d| outer(d, x)),
        w_h: dz.map(|d| outer(d, h_prev)),
        b: dz.map(|d| Tensor::new([n], d.clone()).expect("bias gradient has n entries")),
    })
}
