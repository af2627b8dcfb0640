use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConnectionMask, NetworkSpec, UnitType};
use crate::error::{Error, Result};
use crate::tensor::{
    conv3d_backward, conv3d_linear, pool3d, pool3d_backward, relu, relu_backward, sigmoid, upsample, upsample_backward,
    Conv3dParams, ConvLstmCache, ConvLstmParams, ConvLstmState, Padding, PoolMode, StackedConvLstm, Tensor,
};
use crate::volume::{ProbabilityMap, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UnitParams {
    Conv3d(Conv3dParams),
    ConvLstm(ConvLstmParams),
}

impl UnitParams {
    fn init(spec: &NetworkSpec, out_maps: usize, in_maps: usize, rng: &mut ChaCha8Rng) -> Self {
        match spec.unit_type {
            UnitType::Conv3d => {
                UnitParams::Conv3d(Conv3dParams::init(out_maps, in_maps, [spec.temporal_kernel, spec.kernel, spec.kernel], rng))
            }
            UnitType::ConvLstm => UnitParams::ConvLstm(ConvLstmParams::init(out_maps, in_maps, spec.kernel, rng)),
        }
    }

    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            UnitParams::Conv3d(p) => vec![&p.weight, &p.bias],
            UnitParams::ConvLstm(p) => p.w_x.iter().chain(p.w_h.iter()).chain(p.b.iter()).collect(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            UnitParams::Conv3d(p) => vec![&mut p.weight, &mut p.bias],
            UnitParams::ConvLstm(p) => p.w_x.iter_mut().chain(p.w_h.iter_mut()).chain(p.b.iter_mut()).collect(),
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.data_mut().fill(0.0));
        z
    }
}

/// All trainable tensors. Declaration order (used by checkpoints and by
/// [`flatten`](Self::flatten)) is: contracting units, upsampling
/// projections, expanding units, output head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    /// `depth + 1` units; unit `l` maps level `l - 1` (or the single input
    /// channel) to `widths[l]` maps.
    pub encoders: Vec<UnitParams>,
    /// `depth` 1×1×1 projections from `widths[l + 1]` to `widths[l]`
    /// applied after nearest-neighbour upsampling.
    pub up: Vec<Conv3dParams>,
    /// `depth` units at widths `widths[l] -> widths[l]`.
    pub decoders: Vec<UnitParams>,
    /// 1×1×1 projection to a single logit map.
    pub head: Conv3dParams,
}

impl NetworkParams {
    /// Seeded from `spec.rng_seed`.
    pub fn init(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let w = &spec.widths;
        let encoders = (0..=spec.depth)
            .map(|l| UnitParams::init(spec, w[l], if l == 0 { 1 } else { w[l - 1] }, &mut rng))
            .collect();
        let up = (0..spec.depth).map(|l| Conv3dParams::init(w[l], w[l + 1], [1, 1, 1], &mut rng)).collect();
        let decoders = (0..spec.depth).map(|l| UnitParams::init(spec, w[l], w[l], &mut rng)).collect();
        let head = Conv3dParams::init(1, w[0], [1, 1, 1], &mut rng);
        Ok(NetworkParams { encoders, up, decoders, head })
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.encoders.iter().flat_map(|u| u.tensors()).collect();
        out.extend(self.up.iter().flat_map(|p| [&p.weight, &p.bias]));
        out.extend(self.decoders.iter().flat_map(|u| u.tensors()));
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.encoders.iter_mut().flat_map(|u| u.tensors_mut()).collect();
        out.extend(self.up.iter_mut().flat_map(|p| [&mut p.weight, &mut p.bias]));
        out.extend(self.decoders.iter_mut().flat_map(|u| u.tensors_mut()));
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            encoders: self.encoders.iter().map(UnitParams::zeros_like).collect(),
            up: self.up.iter().map(zero_conv).collect(),
            decoders: self.decoders.iter().map(UnitParams::zeros_like).collect(),
            head: zero_conv(&self.head),
        }
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::shape("flat parameter vector", [self.len()], [values.len()]));
        }
        let mut rest = values;
        for t in self.tensors_mut() {
            let (head, tail) = rest.split_at(t.len());
            t.data_mut().copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// `self += factor * other`, tensor by tensor.
    pub fn axpy(&mut self, factor: f64, other: &NetworkParams) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(factor, b)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let reference = NetworkParams::init(&NetworkSpec { rng_seed: 0, ..spec.clone() })?;
        let (ours, theirs) = (self.tensors(), reference.tensors());
        if ours.len() != theirs.len() {
            return Err(Error::InvalidSpec(format!(
                "parameter set has {} tensors, spec requires {}",
                ours.len(),
                theirs.len()
            )));
        }
        for (a, b) in ours.iter().zip(&theirs) {
            a.expect_shape(b.shape(), "network parameter")?;
        }
        Ok(())
    }
}

fn zero_conv(p: &Conv3dParams) -> Conv3dParams {
    Conv3dParams { weight: Tensor::zeros(p.weight.shape().to_vec()), bias: Tensor::zeros(p.bias.shape().to_vec()), stride: p.stride }
}

/// How skip connections are treated in a forward pass.
#[derive(Clone, Copy, Debug)]
pub enum Skips<'a> {
    /// Each connection fully on or off.
    Mask(&'a ConnectionMask),
    /// Each connection scaled by its inclusion probability `alpha`.
    Expectation,
}

#[derive(Clone, Debug)]
enum UnitTrace {
    Conv { input: Tensor, pre: Tensor },
    Lstm { input: Tensor, steps: Vec<(Tensor, ConvLstmCache)> },
}

impl UnitTrace {
    fn input(&self) -> &Tensor {
        match self {
            UnitTrace::Conv { input, .. } | UnitTrace::Lstm { input, .. } => input,
        }
    }
}

/// Intermediate values of one forward pass, enough to run the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    encoders: Vec<UnitTrace>,
    enc_out: Vec<Tensor>,
    upsampled: Vec<Tensor>,
    skip_scale: Vec<f64>,
    decoders: Vec<UnitTrace>,
    head_in: Tensor,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

impl ForwardTrace {
    /// Which side of every non-smooth point (ReLU sign, max-pool winner) the
    /// pass landed on. Two passes with equal signatures lie on the same
    /// smooth piece of the network function.
    pub fn kink_signature(&self, spec: &NetworkSpec) -> Vec<usize> {
        let mut sig = Vec::new();
        for t in self.encoders.iter().chain(&self.decoders) {
            if let UnitTrace::Conv { pre, .. } = t {
                sig.extend(pre.data().iter().map(|&z| usize::from(z > 0.0)));
            }
        }
        let window = spec.pool_window();
        for e in &self.enc_out[..self.enc_out.len() - 1] {
            sig.extend(crate::tensor::max_pool_argmax(e, &window).expect("pooled during the forward pass"));
        }
        sig
    }
}

fn time_slice(x: &Tensor, t: usize) -> Tensor {
    let s = x.shape();
    let (m, d, plane) = (s[0], s[1], s[2] * s[3]);
    let mut out = Vec::with_capacity(m * plane);
    for c in 0..m {
        let start = (c * d + t) * plane;
        out.extend_from_slice(&x.data()[start..start + plane]);
    }
    Tensor::new([m, s[2], s[3]], out).expect("slice of a valid tensor")
}

fn write_time_slice(dst: &mut Tensor, t: usize, src: &Tensor) {
    let s = dst.shape().to_vec();
    let (d, plane) = (s[1], s[2] * s[3]);
    for (c, chunk) in src.data().chunks_exact(plane).enumerate() {
        let start = (c * d + t) * plane;
        dst.data_mut()[start..start + plane].copy_from_slice(chunk);
    }
}

fn unit_forward(unit: &UnitParams, input: Tensor) -> Result<(Tensor, UnitTrace)> {
    match unit {
        UnitParams::Conv3d(p) => {
            let pre = conv3d_linear(&input, p, Padding::Same)?;
            Ok((relu(&pre), UnitTrace::Conv { input, pre }))
        }
        UnitParams::ConvLstm(p) => {
            p.validate()?;
            let cell = p.stacked();
            let s = input.shape().to_vec();
            let n = p.out_maps();
            let mut out = Tensor::zeros([n, s[1], s[2], s[3]]);
            let mut state = ConvLstmState::zeros(n, s[2], s[3]);
            let mut steps = Vec::with_capacity(s[1]);
            for t in 0..s[1] {
                let x_t = time_slice(&input, t);
                let cache = cell.step(&x_t, &state)?;
                write_time_slice(&mut out, t, &cache.state.h);
                state = cache.state.clone();
                steps.push((x_t, cache));
            }
            Ok((out, UnitTrace::Lstm { input, steps }))
        }
    }
}

/// Accumulates the unit's parameter gradients into `grads` and returns the
/// gradient w.r.t. its input.
fn unit_backward(unit: &UnitParams, trace: &UnitTrace, grad_out: &Tensor, grads: &mut UnitParams) -> Result<Tensor> {
    match (unit, trace, grads) {
        (UnitParams::Conv3d(p), UnitTrace::Conv { input, pre }, UnitParams::Conv3d(g)) => {
            let g_pre = relu_backward(pre, grad_out)?;
            let cg = conv3d_backward(input, p, Padding::Same, &g_pre)?;
            g.weight.add_assign(&cg.weight)?;
            g.bias.add_assign(&cg.bias)?;
            Ok(cg.input)
        }
        (UnitParams::ConvLstm(p), UnitTrace::Lstm { input, steps }, UnitParams::ConvLstm(g)) => {
            let cell: StackedConvLstm = p.stacked();
            let s = input.shape();
            let n = p.out_maps();
            let mut grad_in = Tensor::zeros(s.to_vec());
            let mut gh_next = Tensor::zeros([n, s[2], s[3]]);
            let mut gc_next = Tensor::zeros([n, s[2], s[3]]);
            let zero_h = Tensor::zeros([n, s[2], s[3]]);
            for t in (0..steps.len()).rev() {
                let (x_t, cache) = &steps[t];
                let h_prev = if t == 0 { &zero_h } else { &steps[t - 1].1.state.h };
                let mut gh = time_slice(grad_out, t);
                gh.add_assign(&gh_next)?;
                let sg = cell.backward(x_t, h_prev, cache, &gh, &gc_next)?;
                write_time_slice(&mut grad_in, t, &sg.x);
                for (acc, d) in g.w_x.iter_mut().zip(sg.w_x.iter()) {
                    acc.add_assign(d)?;
                }
                for (acc, d) in g.w_h.iter_mut().zip(sg.w_h.iter()) {
                    acc.add_assign(d)?;
                }
                for (acc, d) in g.b.iter_mut().zip(sg.b.iter()) {
                    acc.add_assign(d)?;
                }
                gh_next = sg.h_prev;
                gc_next = sg.c_prev;
            }
            Ok(grad_in)
        }
        _ => Err(Error::InvalidSpec("unit parameters do not match the recorded trace".into())),
    }
}

/// A network specification together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RcNet {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
}

impl RcNet {
    pub fn new(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        params.check(&spec)?;
        Ok(RcNet { spec, params })
    }

    pub fn init(spec: NetworkSpec) -> Result<Self> {
        let params = NetworkParams::init(&spec)?;
        Ok(RcNet { spec, params })
    }

    fn skip_scales(&self, skips: Skips<'_>) -> Result<Vec<f64>> {
        match skips {
            Skips::Mask(mask) => {
                if mask.len() != self.spec.depth {
                    return Err(Error::shape("connection mask", [self.spec.depth], [mask.len()]));
                }
                Ok(mask.0.iter().map(|&on| if on { 1.0 } else { 0.0 }).collect())
            }
            Skips::Expectation => Ok(vec![self.spec.alpha; self.spec.depth]),
        }
    }

    /// Full forward pass on `input: [1, D, H, W]` keeping intermediates.
    pub fn forward_trace(&self, input: &Tensor, skips: Skips<'_>) -> Result<ForwardTrace> {
        let spec = &self.spec;
        let p = &self.params;
        match input.shape() {
            &[1, d, h, w] => spec.check_input([d, h, w])?,
            s => return Err(Error::shape("network input [1, D, H, W]", [1, 0, 0, 0], s.to_vec())),
        }
        let skip_scale = self.skip_scales(skips)?;
        let window = spec.pool_window();

        let mut encoders = Vec::with_capacity(spec.depth + 1);
        let mut enc_out: Vec<Tensor> = Vec::with_capacity(spec.depth + 1);
        for (l, unit) in p.encoders.iter().enumerate() {
            let x = if l == 0 { input.clone() } else { pool3d(&enc_out[l - 1], &window, PoolMode::Max)? };
            let (y, trace) = unit_forward(unit, x)?;
            encoders.push(trace);
            enc_out.push(y);
        }

        let mut upsampled = vec![Tensor::zeros([1]); spec.depth];
        let mut decoders: Vec<Option<UnitTrace>> = vec![None; spec.depth];
        let mut y = enc_out[spec.depth].clone();
        for l in (0..spec.depth).rev() {
            let u = upsample(&y, &window)?;
            let mut merged = conv3d_linear(&u, &p.up[l], Padding::Same)?;
            if skip_scale[l] != 0.0 {
                merged.axpy(skip_scale[l], &enc_out[l])?;
            }
            let (out, trace) = unit_forward(&p.decoders[l], merged)?;
            upsampled[l] = u;
            decoders[l] = Some(trace);
            y = out;
        }

        let logits = conv3d_linear(&y, &p.head, Padding::Same)?;
        let probabilities = logits.map(sigmoid);
        Ok(ForwardTrace {
            encoders,
            enc_out,
            upsampled,
            skip_scale,
            decoders: decoders.into_iter().map(|t| t.expect("every level decoded")).collect(),
            head_in: y,
            logits,
            probabilities,
        })
    }

    /// Foreground probabilities `[1, D, H, W]`.
    pub fn forward(&self, input: &Tensor, skips: Skips<'_>) -> Result<Tensor> {
        Ok(self.forward_trace(input, skips)?.probabilities)
    }

    /// Parameter gradients given the gradient of a scalar loss w.r.t. the
    /// logits.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Tensor) -> Result<NetworkParams> {
        let spec = &self.spec;
        let p = &self.params;
        let window = spec.pool_window();
        let mut grads = p.zeros_like();

        let hg = conv3d_backward(&trace.head_in, &p.head, Padding::Same, grad_logits)?;
        grads.head.weight = hg.weight;
        grads.head.bias = hg.bias;

        let mut grad_enc: Vec<Option<Tensor>> = vec![None; spec.depth + 1];
        let mut g_y = hg.input;
        for l in 0..spec.depth {
            let g_merged = unit_backward(&p.decoders[l], &trace.decoders[l], &g_y, &mut grads.decoders[l])?;
            if trace.skip_scale[l] != 0.0 {
                grad_enc[l] = Some(g_merged.scale(trace.skip_scale[l]));
            }
            let ug = conv3d_backward(&trace.upsampled[l], &p.up[l], Padding::Same, &g_merged)?;
            grads.up[l].weight = ug.weight;
            grads.up[l].bias = ug.bias;
            g_y = upsample_backward(&ug.input, &window)?;
        }
        grad_enc[spec.depth] = Some(g_y);

        for l in (0..=spec.depth).rev() {
            let g_out = grad_enc[l].take().expect("gradient reaches every contracting level");
            let g_in = unit_backward(&p.encoders[l], &trace.encoders[l], &g_out, &mut grads.encoders[l])?;
            if l > 0 {
                let g_prev = pool3d_backward(&trace.enc_out[l - 1], &window, PoolMode::Max, &g_in)?;
                match &mut grad_enc[l - 1] {
                    Some(acc) => acc.add_assign(&g_prev)?,
                    slot => *slot = Some(g_prev),
                }
            }
            debug_assert_eq!(trace.encoders[l].input().rank(), 4);
        }
        Ok(grads)
    }
}

/// Forward pass returning the foreground probability map.
/// Runs the network on a standardized copy of `input`, matching training.
pub fn forward(spec: &NetworkSpec, params: &NetworkParams, input: &Volume, skips: Skips<'_>) -> Result<ProbabilityMap> {
    let net = RcNet::new(spec.clone(), params.clone())?;
    let probs = net.forward(&input.standardized().to_tensor(), skips)?;
    ProbabilityMap::new(input.dims(), vec![probs.into_data()])
}

/// Deterministic inference: every skip scaled by `alpha`.
pub fn infer(spec: &NetworkSpec, params: &NetworkParams, volume: &Volume) -> Result<ProbabilityMap> {
    forward(spec, params, volume, Skips::Expectation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(unit: UnitType) -> RcNet {
        RcNet::init(NetworkSpec { unit_type: unit, depth: 2, widths: vec![2, 3, 4], kernel: 3, temporal_kernel: 3, alpha: 0.5, rng_seed: 4 })
            .unwrap()
    }

    fn input(dims: [usize; 3]) -> Tensor {
        Tensor::from_fn([1, dims[0], dims[1], dims[2]], |i| ((i * 7919) % 97) as f64 / 97.0)
    }

    #[test]
    fn output_matches_input_extent_and_is_a_probability() {
        for unit in [UnitType::Conv3d, UnitType::ConvLstm] {
            let net = tiny(unit);
            let x = input([4, 8, 8]);
            let p = net.forward(&x, Skips::Expectation).unwrap();
            assert_eq!(p.shape(), x.shape());
            assert!(p.data().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn non_divisible_input_rejected() {
        let net = tiny(UnitType::Conv3d);
        assert!(net.forward(&input([6, 8, 8]), Skips::Expectation).is_err());
        let net = tiny(UnitType::ConvLstm);
        assert!(net.forward(&input([6, 8, 8]), Skips::Expectation).is_ok());
        assert!(net.forward(&input([6, 8, 10]), Skips::Expectation).is_err());
    }

    #[test]
    fn mask_length_checked() {
        let net = tiny(UnitType::Conv3d);
        let mask = ConnectionMask::all(3, true);
        assert!(net.forward(&input([4, 4, 4]), Skips::Mask(&mask)).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let net = tiny(UnitType::ConvLstm);
        let flat = net.params.flatten();
        let mut other = net.params.zeros_like();
        other.assign_flat(&flat).unwrap();
        assert_eq!(other, net.params);
        assert_eq!(flat.len(), net.params.len());
    }

    #[test]
    fn parameters_checked_against_spec() {
        let net = tiny(UnitType::Conv3d);
        let mut spec = net.spec.clone();
        spec.widths = vec![2, 3, 5];
        assert!(RcNet::new(spec, net.params.clone()).is_err());
        let lstm = tiny(UnitType::ConvLstm);
        assert!(RcNet::new(net.spec.clone(), lstm.params).is_err());
    }
}
