//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcseg::rcnet::{bce_with_logits, sample_mask, ConnectionMask, NetworkSpec, RcNet, Skips, UnitType};
use rcseg::tensor::*;
use rcseg::walker::{CompactGraph, DirichletTerm, Edge, IntensityVolume, SolveOptions};
use rcseg::select::select;
use rcseg::{ProbabilityMap, Volume};

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().map(|v| v.abs()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

pub fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, stride: [usize; 3], same: bool) -> Tensor {
    let (xs, ws) = (x.shape(), w.shape());
    let (m, n) = (xs[0], ws[0]);
    let mut out_dims = [n, 0, 0, 0];
    let mut pad = [0isize; 3];
    for a in 0..3 {
        let (len, k, s) = (xs[a + 1], ws[a + 2], stride[a]);
        if same {
            pad[a] = ((k - 1) / 2) as isize;
            out_dims[a + 1] = len.div_ceil(s);
        } else {
            out_dims[a + 1] = (len - k) / s + 1;
        }
    }
    let mut out = Tensor::zeros(out_dims.to_vec());
    for o in 0..n {
        for z in 0..out_dims[1] {
            for y in 0..out_dims[2] {
                for xo in 0..out_dims[3] {
                    let mut acc = b.get(&[o]);
                    for c in 0..m {
                        for a in 0..ws[2] {
                            for bb in 0..ws[3] {
                                for e in 0..ws[4] {
                                    let zi = (z * stride[0] + a) as isize - pad[0];
                                    let yi = (y * stride[1] + bb) as isize - pad[1];
                                    let xi = (xo * stride[2] + e) as isize - pad[2];
                                    if zi < 0 || yi < 0 || xi < 0 {
                                        continue;
                                    }
                                    let (zi, yi, xi) = (zi as usize, yi as usize, xi as usize);
                                    if zi >= xs[1] || yi >= xs[2] || xi >= xs[3] {
                                        continue;
                                    }
                                    acc += w.get(&[o, c, a, bb, e]) * x.get(&[c, zi, yi, xi]);
                                }
                            }
                        }
                    }
                    out.set(&[o, z, y, xo], acc);
                }
            }
        }
    }
    out
}

pub fn pool_oracle(x: &Tensor, window: [usize; 4], max: bool) -> Tensor {
    let s = x.shape();
    let out_shape: Vec<usize> = (0..4).map(|a| s[a] / window[a]).collect();
    let mut out = Tensor::zeros(out_shape.clone());
    for c in 0..out_shape[0] {
        for z in 0..out_shape[1] {
            for y in 0..out_shape[2] {
                for xo in 0..out_shape[3] {
                    let mut vals = Vec::new();
                    for a in 0..window[0] {
                        for b in 0..window[1] {
                            for d in 0..window[2] {
                                for e in 0..window[3] {
                                    vals.push(x.get(&[
                                        c * window[0] + a,
                                        z * window[1] + b,
                                        y * window[2] + d,
                                        xo * window[3] + e,
                                    ]));
                                }
                            }
                        }
                    }
                    let v = if max {
                        vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                    } else {
                        vals.iter().sum::<f64>() / vals.len() as f64
                    };
                    out.set(&[c, z, y, xo], v);
                }
            }
        }
    }
    out
}

pub fn lstm_oracle(x: &[f64], h: &[f64], c: &[f64], p: &LstmParams) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let pre = |wx: &Tensor, wh: &Tensor, b: &Tensor, j: usize| {
        let mut z = b.get(&[j]);
        for (k, xv) in x.iter().enumerate() {
            z += wx.get(&[j, k]) * xv;
        }
        for (k, hv) in h.iter().enumerate() {
            z += wh.get(&[j, k]) * hv;
        }
        z
    };
    let mut h_new = vec![0.0; n];
    let mut c_new = vec![0.0; n];
    for j in 0..n {
        let i = sig(pre(&p.w_x.i, &p.w_h.i, &p.b.i, j));
        let f = sig(pre(&p.w_x.f, &p.w_h.f, &p.b.f, j));
        let g = pre(&p.w_x.c, &p.w_h.c, &p.b.c, j).tanh();
        let o = sig(pre(&p.w_x.o, &p.w_h.o, &p.b.o, j));
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    (h_new, c_new)
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Same-padded 2D cross-correlation of `[m, H, W]` with `[n, m, kh, kw]`.
pub fn conv2d_same(x: &Tensor, w: &Tensor, o: usize, y: usize, xo: usize) -> f64 {
    let (xs, ws) = (x.shape(), w.shape());
    let (ph, pw) = (((ws[2] - 1) / 2) as isize, ((ws[3] - 1) / 2) as isize);
    let mut acc = 0.0;
    for c in 0..xs[0] {
        for a in 0..ws[2] {
            for b in 0..ws[3] {
                let (yi, xi) = ((y + a) as isize - ph, (xo + b) as isize - pw);
                if yi >= 0 && xi >= 0 && (yi as usize) < xs[1] && (xi as usize) < xs[2] {
                    acc += w.get(&[o, c, a, b]) * x.get(&[c, yi as usize, xi as usize]);
                }
            }
        }
    }
    acc
}

pub fn convlstm_oracle(x: &Tensor, s: &ConvLstmState, p: &ConvLstmParams) -> ConvLstmState {
    let [n, h, w] = [s.h.shape()[0], s.h.shape()[1], s.h.shape()[2]];
    let mut out = ConvLstmState::zeros(n, h, w);
    for o in 0..n {
        for y in 0..h {
            for xo in 0..w {
                let pre = |wx: &Tensor, wh: &Tensor, b: &Tensor| {
                    b.get(&[o]) + conv2d_same(x, wx, o, y, xo) + conv2d_same(&s.h, wh, o, y, xo)
                };
                let i = sig(pre(&p.w_x.i, &p.w_h.i, &p.b.i));
                let f = sig(pre(&p.w_x.f, &p.w_h.f, &p.b.f));
                let g = pre(&p.w_x.c, &p.w_h.c, &p.b.c).tanh();
                let og = sig(pre(&p.w_x.o, &p.w_h.o, &p.b.o));
                let c = f * s.c.get(&[o, y, xo]) + i * g;
                out.c.set(&[o, y, xo], c);
                out.h.set(&[o, y, xo], og * c.tanh());
            }
        }
    }
    out
}

pub fn random_convlstm(n: usize, m: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvLstmParams {
    ConvLstmParams::new(
        Gates::from_fn(|| Tensor::uniform([n, m, k, k], 0.8, rng)),
        Gates::from_fn(|| Tensor::uniform([n, n, k, k], 0.8, rng)),
        Gates::from_fn(|| Tensor::uniform([n], 0.8, rng)),
    )
    .unwrap()
}

pub fn random_state(n: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> ConvLstmState {
    ConvLstmState { h: Tensor::uniform([n, h, w], 1.0, rng), c: Tensor::uniform([n, h, w], 1.0, rng) }
}

/// Dense minimiser of the walker energy, assembled term by term from the
/// graph and solved by LU.
pub fn dense_solve(graph: &CompactGraph) -> Vec<f64> {
    let n = graph.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (i, ps) in graph.unary.iter().enumerate() {
        for &p in ps {
            a[(i, i)] += p * p + (1.0 - p) * (1.0 - p);
            b[i] += p * p;
        }
    }
    for e in &graph.edges {
        let w2 = e.weight * e.weight;
        a[(e.a, e.a)] += w2;
        a[(e.b, e.b)] += w2;
        a[(e.a, e.b)] -= w2;
        a[(e.b, e.a)] -= w2;
    }
    for t in &graph.dirichlet {
        let w2 = t.weight * t.weight;
        a[(t.node, t.node)] += w2;
        b[t.node] += w2 * t.label as f64;
    }
    a.lu().solve(&b).expect("walker system is nonsingular").iter().copied().collect()
}

/// The default tolerance bounds the relative residual, not the error, so
/// comparisons against the dense solve tighten it.
pub const TIGHT: SolveOptions = SolveOptions { tol: 1e-11, max_iters: None };

pub fn random_graph(rng: &mut ChaCha8Rng) -> CompactGraph {
    let n = rng.random_range(1..=50);
    let k = rng.random_range(1..=3);
    let unary = (0..n).map(|_| (0..k).map(|_| rng.random_range(0.0..=1.0)).collect()).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool((4.0 / n as f64).min(1.0)) {
                edges.push(Edge { a, b, weight: rng.random_range(0.0..=1.0) });
            }
        }
    }
    let dirichlet = (0..rng.random_range(0..n))
        .map(|_| DirichletTerm { node: rng.random_range(0..n), label: rng.random_range(0..2), weight: rng.random_range(0.0..=1.0) })
        .collect();
    CompactGraph { candidates: (0..n).collect(), unary, edges, dirichlet }
}

pub fn random_maps(dims: [usize; 3], k: usize, rng: &mut ChaCha8Rng) -> ProbabilityMap {
    let n = dims.iter().product();
    ProbabilityMap::new(dims, (0..k).map(|_| (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()).collect()).unwrap()
}

pub fn random_intensity(dims: [usize; 3], rng: &mut ChaCha8Rng) -> IntensityVolume {
    IntensityVolume::normalized(&Volume::from_fn(dims, |_| rng.random_range(0.0..1.0))).unwrap()
}

pub fn seeded_maps(dims: [usize; 3], k: usize, seed: u64) -> ProbabilityMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    ProbabilityMap::new(dims, (0..k).map(|_| (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()).collect()).unwrap()
}

/// Per-node energy written out from the definition, with adjacency found by
/// scanning every voxel pair for Manhattan distance one.
pub fn oracle_energy(maps: &ProbabilityMap, i: usize) -> f64 {
    let [d, h, w] = maps.dims();
    let coord = |v: usize| [(v / (h * w)) as i64, (v / w % h) as i64, (v % w) as i64];
    let cos = |p: f64, q: f64| (p * q + (1.0 - p) * (1.0 - q)) / ((p * p + (1.0 - p).powi(2)).sqrt() * (q * q + (1.0 - q).powi(2)).sqrt());
    let ci = coord(i);
    let mut total = 0.0;
    for k in 0..maps.count() {
        let p = maps.map(k)[i];
        total += (1.0 - 2.0 * p).powi(2);
        for j in 0..d * h * w {
            let cj = coord(j);
            if (0..3).map(|a| (ci[a] - cj[a]).abs()).sum::<i64>() == 1 {
                total += cos(p, maps.map(k)[j]);
            }
        }
        for other in 0..maps.count() {
            if other != k {
                total += cos(p, maps.map(other)[i]);
            }
        }
    }
    total
}

/// Best subset of size `m` by enumerating every bitmask with `m` set bits
/// (Gosper's hack). Returns the winning objective and every maximiser.
pub fn exhaustive_best(energies: &[f64], m: usize) -> (f64, Vec<u64>) {
    let n = energies.len();
    let objective = |set: u64| (0..n).filter(|b| set >> b & 1 == 1).map(|b| energies[b]).sum::<f64>();
    if m == 0 {
        return (0.0, vec![0]);
    }
    let mut best = f64::NEG_INFINITY;
    let mut winners = Vec::new();
    let mut set: u64 = (1 << m) - 1;
    while set < 1 << n {
        let value = objective(set);
        if value > best + 1e-9 {
            best = value;
            winners.clear();
        }
        if (value - best).abs() <= 1e-9 {
            winners.push(set);
        }
        let c = set & set.wrapping_neg();
        let r = set + c;
        set = (((r ^ set) >> 2) / c) | r;
    }
    (best, winners)
}

pub fn confident_bits(maps: &ProbabilityMap, theta: f64) -> u64 {
    select(maps, theta).unwrap().confident.iter().map(|&(i, _)| 1u64 << i).sum()
}

pub fn small_spec(unit_type: UnitType, seed: u64) -> NetworkSpec {
    NetworkSpec { unit_type, depth: 2, widths: vec![2, 3, 4], kernel: 3, temporal_kernel: 3, alpha: 0.5, rng_seed: seed }
}

pub fn random_input(dims: [usize; 3], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform([1, dims[0], dims[1], dims[2]], 1.0, rng)
}

pub fn loss_at(net: &RcNet, flat: &[f64], input: &Tensor, labels: &[u8], mask: &ConnectionMask) -> f64 {
    let mut params = net.params.clone();
    params.assign_flat(flat).unwrap();
    let net = RcNet::new(net.spec.clone(), params).unwrap();
    let trace = net.forward_trace(input, Skips::Mask(mask)).unwrap();
    bce_with_logits(&trace.logits, labels).unwrap().0
}

/// Central-difference check of the full training-loss gradient. Returns
/// `None` when no tried direction keeps the perturbation clear of a ReLU or
/// max-pool kink, so the caller resamples the instance.
pub fn network_grad_check(unit_type: UnitType, seed: u64) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = RcNet::init(small_spec(unit_type, seed)).unwrap();
    let input = random_input([4, 4, 4], &mut rng);
    let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..2)).collect();
    let mask = sample_mask(0.5, 2, &mut rng);
    let eps = 1e-4;

    let trace = net.forward_trace(&input, Skips::Mask(&mask)).unwrap();
    let (_, g_logits) = bce_with_logits(&trace.logits, &labels).unwrap();
    let grad = net.backward(&trace, &g_logits).unwrap().flatten();
    let point = net.params.flatten();
    let signature = trace.kink_signature(&net.spec);

    for _ in 0..10 {
        let direction: Vec<f64> = (0..point.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let same_piece = [-1.0, 1.0].iter().all(|s| {
            let mut p = net.params.clone();
            p.assign_flat(&point.iter().zip(&direction).map(|(a, d)| a + s * eps * d).collect::<Vec<_>>()).unwrap();
            let shifted = RcNet::new(net.spec.clone(), p).unwrap();
            shifted.forward_trace(&input, Skips::Mask(&mask)).unwrap().kink_signature(&net.spec) == signature
        });
        if !same_piece {
            continue;
        }
        return Some(grad_check(|x| loss_at(&net, x, &input, &labels, &mask), &grad, &point, &direction, eps).unwrap());
    }
    None
}

/// Relative error of the directional derivative along a random direction.
fn directional(f: impl Fn(&[f64]) -> f64, grad: &[f64], point: &[f64], eps: f64, rng: &mut ChaCha8Rng) -> f64 {
    let dir = random_vec(point.len(), rng);
    grad_check(f, grad, point, &dir, eps).unwrap()
}

fn with_data(like: &Tensor, v: &[f64]) -> Tensor {
    Tensor::new(like.shape().to_vec(), v.to_vec()).unwrap()
}

fn gate_mut<T>(g: &mut Gates<T>, k: usize) -> &mut T {
    match k {
        0 => &mut g.i,
        1 => &mut g.f,
        2 => &mut g.c,
        _ => &mut g.o,
    }
}

/// Parameter groups of a four-gate cell: input weights, recurrent weights
/// and biases of gate `k`.
fn gate_tensor<'a, T>(w_x: &'a mut Gates<T>, w_h: &'a mut Gates<T>, b: &'a mut Gates<T>, k: usize, which: usize) -> &'a mut T {
    match which {
        0 => gate_mut(w_x, k),
        1 => gate_mut(w_h, k),
        _ => gate_mut(b, k),
    }
}

/// Checks the ReLU conv3d gradient w.r.t. input, weight and bias of one
/// random instance. `None` when some pre-activation sits close enough to
/// zero that a step of `eps` could cross the kink.
pub fn conv3d_grad_errors(seed: u64, eps: f64) -> Option<Vec<(String, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let (m, n) = (rng.random_range(1..=2), rng.random_range(1..=3));
    let dims: [usize; 3] = std::array::from_fn(|_| rng.random_range(2..=4));
    let kernel: [usize; 3] = std::array::from_fn(|a| rng.random_range(1..=dims[a].min(3)));
    let stride: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..=2));
    let padding = if seed % 2 == 0 { Padding::Same } else { Padding::Valid };
    let x = Tensor::uniform([m, dims[0], dims[1], dims[2]], 1.0, &mut rng);
    let params = Conv3dParams::new(
        Tensor::uniform([n, m, kernel[0], kernel[1], kernel[2]], 1.0, &mut rng),
        Tensor::uniform([n], 1.0, &mut rng),
        stride,
    )
    .unwrap();
    let pre = conv3d_linear(&x, &params, padding).unwrap();
    // A unit step in every coordinate moves a pre-activation by at most the
    // fan-in sum below; keep a margin of that times eps.
    let fan_in = (m * kernel.iter().product::<usize>()) as f64;
    let reach = eps * (1.0 + fan_in * 2.0);
    if pre.data().iter().any(|v| v.abs() < 10.0 * reach) {
        return None;
    }
    let r = Tensor::uniform(pre.shape().to_vec(), 1.0, &mut rng);
    let g = conv3d_backward(&x, &params, padding, &relu_backward(&pre, &r).unwrap()).unwrap();
    let loss = |x: &Tensor, p: &Conv3dParams| conv3d(x, p, padding, Activation::Relu).unwrap().dot(&r).unwrap();
    let with_weight = |v: &[f64]| Conv3dParams { weight: with_data(&params.weight, v), ..params.clone() };
    let with_bias = |v: &[f64]| Conv3dParams { bias: with_data(&params.bias, v), ..params.clone() };
    Some(vec![
        ("conv3d input".into(), directional(|v| loss(&with_data(&x, v), &params), g.input.data(), x.data(), eps, &mut rng)),
        ("conv3d weight".into(), directional(|v| loss(&x, &with_weight(v)), g.weight.data(), params.weight.data(), eps, &mut rng)),
        ("conv3d bias".into(), directional(|v| loss(&x, &with_bias(v)), g.bias.data(), params.bias.data(), eps, &mut rng)),
    ])
}

pub fn lstm_grad_errors(seed: u64, eps: f64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
    let (n, m) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let p = LstmParams::random(n, m, 1.0, &mut rng);
    let (x, h, c) = (random_vec(m, &mut rng), random_vec(n, &mut rng), random_vec(n, &mut rng));
    let (rh, rc) = (random_vec(n, &mut rng), random_vec(n, &mut rng));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let loss = |x: &[f64], h: &[f64], c: &[f64], p: &LstmParams| {
        let (h1, c1) = lstm_step(x, h, c, p).unwrap();
        dot(&h1, &rh) + dot(&c1, &rc)
    };
    let cache = lstm_step_cached(&x, &h, &c, &p).unwrap();
    let mut g = lstm_step_backward(&x, &h, &p, &cache, &rh, &rc).unwrap();

    let mut out = vec![
        ("lstm x".to_string(), directional(|v| loss(v, &h, &c, &p), &g.x, &x, eps, &mut rng)),
        ("lstm h_prev".to_string(), directional(|v| loss(&x, v, &c, &p), &g.h_prev, &h, eps, &mut rng)),
        ("lstm c_prev".to_string(), directional(|v| loss(&x, &h, v, &p), &g.c_prev, &c, eps, &mut rng)),
    ];
    for k in 0..4 {
        for which in 0..3 {
            let grad = gate_tensor(&mut g.w_x, &mut g.w_h, &mut g.b, k, which).clone();
            let mut base = p.clone();
            let point = gate_tensor(&mut base.w_x, &mut base.w_h, &mut base.b, k, which).clone();
            let f = |v: &[f64]| {
                let mut q = p.clone();
                gate_tensor(&mut q.w_x, &mut q.w_h, &mut q.b, k, which).data_mut().copy_from_slice(v);
                loss(&x, &h, &c, &q)
            };
            out.push((format!("lstm gate {k} group {which}"), directional(f, grad.data(), point.data(), eps, &mut rng)));
        }
    }
    out
}

pub fn convlstm_grad_errors(seed: u64, eps: f64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
    let (n, m) = (rng.random_range(1..=2), rng.random_range(1..=2));
    let k = [1, 3][(seed % 2) as usize];
    let (h, w) = (rng.random_range(1..=4), rng.random_range(1..=4));
    let p = random_convlstm(n, m, k, &mut rng);
    let x = Tensor::uniform([m, h, w], 1.0, &mut rng);
    let s = random_state(n, h, w, &mut rng);
    let (rh, rc) = (Tensor::uniform([n, h, w], 1.0, &mut rng), Tensor::uniform([n, h, w], 1.0, &mut rng));
    let loss = |x: &Tensor, s: &ConvLstmState, p: &ConvLstmParams| {
        let out = convlstm_step(x, s, p).unwrap();
        out.h.dot(&rh).unwrap() + out.c.dot(&rc).unwrap()
    };
    let cache = convlstm_step_cached(&x, &s, &p).unwrap();
    let mut g = convlstm_step_backward(&x, &s, &p, &cache, &rh, &rc).unwrap();

    let with_h = |v: &[f64]| ConvLstmState { h: with_data(&s.h, v), c: s.c.clone() };
    let with_c = |v: &[f64]| ConvLstmState { h: s.h.clone(), c: with_data(&s.c, v) };
    let mut out = vec![
        ("convlstm x".to_string(), directional(|v| loss(&with_data(&x, v), &s, &p), g.x.data(), x.data(), eps, &mut rng)),
        ("convlstm h_prev".to_string(), directional(|v| loss(&x, &with_h(v), &p), g.h_prev.data(), s.h.data(), eps, &mut rng)),
        ("convlstm c_prev".to_string(), directional(|v| loss(&x, &with_c(v), &p), g.c_prev.data(), s.c.data(), eps, &mut rng)),
    ];
    for k in 0..4 {
        for which in 0..3 {
            let grad = gate_tensor(&mut g.w_x, &mut g.w_h, &mut g.b, k, which).clone();
            let mut base = p.clone();
            let point = gate_tensor(&mut base.w_x, &mut base.w_h, &mut base.b, k, which).clone();
            let f = |v: &[f64]| {
                let mut q = p.clone();
                gate_tensor(&mut q.w_x, &mut q.w_h, &mut q.b, k, which).data_mut().copy_from_slice(v);
                loss(&x, &s, &q)
            };
            out.push((format!("convlstm gate {k} group {which}"), directional(f, grad.data(), point.data(), eps, &mut rng)));
        }
    }
    out
}
