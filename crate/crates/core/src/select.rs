//! Node selection: rank voxels by how confident and how locally consistent
//! the networks' probability maps are, and prune the top fraction.
//!
//! For voxel `i` the selection energy is
//!
//! ```text
//! E(i) = Σ_k [ (1 - 2 p_i^k)^2 + Σ_{j ∈ N6(i)} cos(v_i^k, v_j^k) + Σ_{k' ≠ k} cos(v_i^k, v_i^k') ]
//! ```
//!
//! with `v = (p, 1 - p)`. Neighbourhoods are truncated at the volume border.
//! The objective summed over a set of voxels is separable, so the best set
//! of a given size is the top of the energy ranking.

use crate::error::{Error, Result};
use crate::volume::{lattice_neighbors, order_free_sum, ProbabilityMap};

/// Label confidence `(1 - 2p)^2`.
pub fn confidence(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange { name: "probability", value: p, range: "[0, 1]" });
    }
    Ok((1.0 - 2.0 * p).powi(2))
}

/// Cosine similarity of two node vectors.
pub fn consistency(v: [f64; 2], u: [f64; 2]) -> f64 {
    let dot = v[0] * u[0] + v[1] * u[1];
    dot / (v[0].hypot(v[1]) * u[0].hypot(u[1]))
}

/// Selection energy of voxel `i`. The per-network terms are summed in
/// sorted order so the value does not depend on how the maps are ordered.
pub fn node_energy(maps: &ProbabilityMap, i: usize) -> f64 {
    let dims = maps.dims();
    let mut per_map: Vec<f64> = (0..maps.count())
        .map(|k| {
            let v = maps.node(k, i);
            let p = maps.map(k)[i];
            let mut lattice: Vec<f64> = lattice_neighbors(dims, i).map(|j| consistency(v, maps.node(k, j))).collect();
            let mut cross: Vec<f64> = (0..maps.count()).filter(|&o| o != k).map(|o| consistency(v, maps.node(o, i))).collect();
            (1.0 - 2.0 * p).powi(2) + order_free_sum(&mut lattice) + order_free_sum(&mut cross)
        })
        .collect();
    order_free_sum(&mut per_map)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionResult {
    /// Confident voxels with their hard labels, in ranking order.
    pub confident: Vec<(usize, u8)>,
    /// Remaining voxels, ascending.
    pub candidates: Vec<usize>,
    pub theta: f64,
    pub energies: Vec<f64>,
}

impl SelectionResult {
    /// Per-voxel flag: `Some(label)` for confident voxels.
    pub fn confident_labels(&self, voxels: usize) -> Vec<Option<u8>> {
        let mut out = vec![None; voxels];
        for &(i, l) in &self.confident {
            out[i] = Some(l);
        }
        out
    }
}

/// Number of voxels pruned for a given `theta`.
pub fn confident_count(voxels: usize, theta: f64) -> usize {
    ((voxels as f64 * theta).floor() as usize).min(voxels)
}

/// Marks the `floor(|V| θ)` highest-energy voxels confident (ties broken by
/// ascending voxel index); their hard label is the across-network mean
/// probability thresholded at 0.5.
pub fn select(maps: &ProbabilityMap, theta: f64) -> Result<SelectionResult> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::OutOfRange { name: "theta", value: theta, range: "[0, 1]" });
    }
    let n = maps.voxels();
    let energies: Vec<f64> = (0..n).map(|i| node_energy(maps, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    let keep = confident_count(n, theta);
    let confident = order[..keep].iter().map(|&i| (i, u8::from(maps.mean(i) >= 0.5))).collect();
    let mut candidates = order[keep..].to_vec();
    candidates.sort_unstable();
    Ok(SelectionResult { confident, candidates, theta, energies })
}
