use serde::{Deserialize, Serialize};

use super::{strides, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    Max,
    Avg,
}

/// For every input element in row-major order, the flat index of the
/// block it belongs to after dividing each coordinate by `block`.
fn block_index_map(shape: &[usize], block: &[usize]) -> Vec<usize> {
    let reduced: Vec<usize> = shape.iter().zip(block).map(|(s, b)| s / b).collect();
    let rstrides = strides(&reduced);
    let total: usize = shape.iter().product();
    let mut coord = vec![0usize; shape.len()];
    let mut map = Vec::with_capacity(total);
    for _ in 0..total {
        map.push(coord.iter().zip(block).zip(&rstrides).map(|((c, b), s)| (c / b) * s).sum());
        for axis in (0..shape.len()).rev() {
            coord[axis] += 1;
            if coord[axis] < shape[axis] {
                break;
            }
            coord[axis] = 0;
        }
    }
    map
}

fn check_window(input: &Tensor, window: &[usize], what: &str) -> Result<Vec<usize>> {
    if window.len() != input.rank() {
        return Err(Error::shape(format!("{what} window rank"), input.shape().to_vec(), window.to_vec()));
    }
    if window.contains(&0) {
        return Err(Error::InvalidShape { shape: window.to_vec(), reason: format!("{what} sizes must be positive") });
    }
    Ok(window.to_vec())
}

fn pooled_shape(input: &Tensor, window: &[usize]) -> Result<Vec<usize>> {
    check_window(input, window, "pooling")?;
    if input.shape().iter().zip(window).any(|(s, w)| s % w != 0) {
        return Err(Error::InvalidShape {
            shape: input.shape().to_vec(),
            reason: format!("extents are not divisible by the pooling window {window:?}"),
        });
    }
    Ok(input.shape().iter().zip(window).map(|(s, w)| s / w).collect())
}

/// Non-overlapping pooling with a per-axis window (one entry per tensor
/// axis, including the feature-map axis).
pub fn pool3d(input: &Tensor, window: &[usize], mode: PoolMode) -> Result<Tensor> {
    let out_shape = pooled_shape(input, window)?;
    let map = block_index_map(input.shape(), window);
    let mut out = Tensor::full(
        out_shape,
        match mode {
            PoolMode::Max => f64::NEG_INFINITY,
            PoolMode::Avg => 0.0,
        },
    );
    let dst = out.data_mut();
    for (&v, &o) in input.data().iter().zip(&map) {
        match mode {
            PoolMode::Max => {
                if v > dst[o] {
                    dst[o] = v;
                }
            }
            PoolMode::Avg => dst[o] += v,
        }
    }
    if mode == PoolMode::Avg {
        let count = window.iter().product::<usize>() as f64;
        dst.iter_mut().for_each(|v| *v /= count);
    }
    Ok(out)
}

/// Flat input index of the first maximum within each pooling block.
pub(crate) fn max_pool_argmax(input: &Tensor, window: &[usize]) -> Result<Vec<usize>> {
    let out_len: usize = pooled_shape(input, window)?.iter().product();
    let map = block_index_map(input.shape(), window);
    let mut best = vec![usize::MAX; out_len];
    for (i, (&v, &o)) in input.data().iter().zip(&map).enumerate() {
        if best[o] == usize::MAX || v > input.data()[best[o]] {
            best[o] = i;
        }
    }
    Ok(best)
}

pub fn pool3d_backward(input: &Tensor, window: &[usize], mode: PoolMode, grad_out: &Tensor) -> Result<Tensor> {
    let out_shape = pooled_shape(input, window)?;
    grad_out.expect_shape(&out_shape, "pooling output gradient")?;
    let mut grad = Tensor::zeros(input.shape().to_vec());
    match mode {
        PoolMode::Max => {
            let arg = max_pool_argmax(input, window)?;
            for (o, &i) in arg.iter().enumerate() {
                grad.data_mut()[i] += grad_out.data()[o];
            }
        }
        PoolMode::Avg => {
            let count = window.iter().product::<usize>() as f64;
            let map = block_index_map(input.shape(), window);
            for (g, &o) in grad.data_mut().iter_mut().zip(&map) {
                *g = grad_out.data()[o] / count;
            }
        }
    }
    Ok(grad)
}

/// Nearest-neighbour upsampling: every element is replicated `factor[axis]`
/// times along each axis.
pub fn upsample(input: &Tensor, factor: &[usize]) -> Result<Tensor> {
    check_window(input, factor, "upsampling")?;
    let out_shape: Vec<usize> = input.shape().iter().zip(factor).map(|(s, f)| s * f).collect();
    let map = block_index_map(&out_shape, factor);
    let data = map.iter().map(|&i| input.data()[i]).collect();
    Tensor::new(out_shape, data)
}

/// Adjoint of [`upsample`]: sums the gradient over each replicated block.
pub fn upsample_backward(grad_out: &Tensor, factor: &[usize]) -> Result<Tensor> {
    let in_shape = pooled_shape(grad_out, factor)?;
    let map = block_index_map(grad_out.shape(), factor);
    let mut grad = Tensor::zeros(in_shape);
    for (&g, &i) in grad_out.data().iter().zip(&map) {
        grad.data_mut()[i] += g;
    }
    Ok(grad)
}
