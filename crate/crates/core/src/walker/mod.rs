//! Random-walker label inference on the compact graph of candidate voxels.
//!
//! Each candidate `i` carries an unknown `x_i ∈ [0, 1]`. The energy
//!
//! ```text
//! Σ_i Σ_k [ (p_i^k)^2 (x_i - 1)^2 + (1 - p_i^k)^2 x_i^2 ]
//!   + Σ_(i,j) w_ij^2 (x_i - x_j)^2
//!   + Σ_(i,c) w_ic^2 (x_i - ℓ_c)^2
//! ```
//!
//! ties every candidate to the virtual foreground and background terminals
//! through the network probabilities, to its candidate lattice neighbours,
//! and (optionally) to the hard labels `ℓ_c` of adjacent confident voxels.
//! Its minimiser solves a sparse M-matrix system.

mod solve;

pub use solve::{solve, SolveOptions, SparseSystem, WalkerSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::select::{select, SelectionResult};
use crate::volume::{lattice_neighbors, order_free_sum, Dims, LabelVolume, ProbabilityMap, Volume};

/// Gaussian edge weight `exp(-β (I_i - I_j)^2)`.
pub fn edge_weight(ii: f64, ij: f64, beta: f64) -> f64 {
    (-beta * (ii - ij).powi(2)).exp()
}

/// Intensities min-max scaled to `[0, 1]`. A constant volume maps to zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityVolume {
    dims: Dims,
    values: Vec<f64>,
    /// Raw `(min, max)` before scaling.
    pub range: (f64, f64),
}

impl IntensityVolume {
    pub fn normalized(volume: &Volume) -> Result<Self> {
        if let Some(i) = volume.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("intensity at voxel {i} is {}", volume.data()[i])));
        }
        let min = volume.data().iter().copied().fold(f64::INFINITY, f64::min);
        let max = volume.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        let values = volume.data().iter().map(|&v| if span > 0.0 { (v - min) / span } else { 0.0 }).collect();
        Ok(IntensityVolume { dims: volume.dims(), values, range: (min, max) })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    /// Positions in [`CompactGraph::candidates`], `a < b`.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Lattice edge from a candidate to a confident voxel with a fixed label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirichletTerm {
    pub node: usize,
    pub label: u8,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompactGraph {
    /// Voxel index of every candidate, ascending.
    pub candidates: Vec<usize>,
    /// Per candidate, the foreground probability from each network; the
    /// terminal weights are `(p, 1 - p)`.
    pub unary: Vec<Vec<f64>>,
    pub edges: Vec<Edge>,
    pub dirichlet: Vec<DirichletTerm>,
}

impl CompactGraph {
    /// Builds the graph over `selection.candidates`. Confident neighbours
    /// become Dirichlet terms when `dirichlet` is set and are ignored
    /// otherwise.
    pub fn assemble(
        selection: &SelectionResult,
        maps: &ProbabilityMap,
        intensity: &IntensityVolume,
        beta: f64,
        dirichlet: bool,
    ) -> Result<Self> {
        if maps.dims() != intensity.dims() {
            return Err(Error::shape("intensity vs probability maps", maps.dims().to_vec(), intensity.dims().to_vec()));
        }
        let n = maps.voxels();
        if selection.energies.len() != n || selection.confident.len() + selection.candidates.len() != n {
            return Err(Error::shape("selection vs probability maps", [n], [selection.energies.len()]));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::OutOfRange { name: "beta", value: beta, range: "[0, inf)" });
        }
        let confident = selection.confident_labels(n);
        let mut position = vec![usize::MAX; n];
        for (c, &v) in selection.candidates.iter().enumerate() {
            position[v] = c;
        }
        let values = intensity.values();
        let mut edges = Vec::new();
        let mut terms = Vec::new();
        for (c, &v) in selection.candidates.iter().enumerate() {
            for j in lattice_neighbors(maps.dims(), v) {
                let weight = edge_weight(values[v], values[j], beta);
                match confident[j] {
                    None if j > v => edges.push(Edge { a: c, b: position[j], weight }),
                    None => {}
                    Some(label) if dirichlet => terms.push(DirichletTerm { node: c, label, weight }),
                    Some(_) => {}
                }
            }
        }
        let unary = selection.candidates.iter().map(|&v| (0..maps.count()).map(|k| maps.map(k)[v]).collect()).collect();
        Ok(CompactGraph { candidates: selection.candidates.clone(), unary, edges, dirichlet: terms })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Stationarity system `A x = b` of the energy.
    pub fn system(&self) -> SparseSystem {
        let n = self.len();
        let mut diag: Vec<f64> = self
            .unary
            .iter()
            .map(|ps| order_free_sum(&mut ps.iter().map(|p| p * p + (1.0 - p) * (1.0 - p)).collect::<Vec<_>>()))
            .collect();
        let mut rhs: Vec<f64> =
            self.unary.iter().map(|ps| order_free_sum(&mut ps.iter().map(|p| p * p).collect::<Vec<_>>())).collect();
        let mut off = vec![Vec::new(); n];
        for e in &self.edges {
            let w2 = e.weight * e.weight;
            diag[e.a] += w2;
            diag[e.b] += w2;
            off[e.a].push((e.b, -w2));
            off[e.b].push((e.a, -w2));
        }
        for t in &self.dirichlet {
            let w2 = t.weight * t.weight;
            diag[t.node] += w2;
            rhs[t.node] += w2 * t.label as f64;
        }
        for row in &mut off {
            row.sort_by_key(|&(j, _)| j);
        }
        SparseSystem { diag, off, rhs }
    }

    /// Energy of an assignment `x` to the candidates.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let unary: f64 = self
            .unary
            .iter()
            .zip(x)
            .map(|(ps, &xi)| ps.iter().map(|p| p * p * (xi - 1.0).powi(2) + (1.0 - p).powi(2) * xi * xi).sum::<f64>())
            .sum();
        let pairwise: f64 = self.edges.iter().map(|e| e.weight.powi(2) * (x[e.a] - x[e.b]).powi(2)).sum();
        let boundary: f64 = self.dirichlet.iter().map(|t| t.weight.powi(2) * (x[t.node] - t.label as f64).powi(2)).sum();
        unary + pairwise + boundary
    }

    /// Minimiser of the unary terms alone, used as the starting point.
    pub fn unary_guess(&self) -> Vec<f64> {
        self.unary
            .iter()
            .map(|ps| {
                let fg = order_free_sum(&mut ps.iter().map(|p| p * p).collect::<Vec<_>>());
                let all = order_free_sum(&mut ps.iter().map(|p| p * p + (1.0 - p) * (1.0 - p)).collect::<Vec<_>>());
                fg / all
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub theta: f64,
    pub beta: f64,
    pub tol: f64,
    /// Couple candidates to the labels of adjacent confident voxels.
    pub dirichlet: bool,
    /// Defaults to ten times the number of candidates.
    pub max_iters: Option<usize>,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { theta: 0.999, beta: 100.0, tol: 1e-8, dirichlet: true, max_iters: None }
    }
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub labels: LabelVolume,
    pub selection: SelectionResult,
    pub solution: WalkerSolution,
}

/// Node selection followed by random-walker inference on the candidates.
/// Confident voxels keep their hard labels; the returned `x` field holds
/// the walker solution on candidates and the hard label elsewhere.
pub fn refine_with(maps: &ProbabilityMap, intensity: &IntensityVolume, config: &RefineConfig) -> Result<Refinement> {
    let selection = select(maps, config.theta)?;
    let graph = CompactGraph::assemble(&selection, maps, intensity, config.beta, config.dirichlet)?;
    let solution = solve(&graph, &SolveOptions { tol: config.tol, max_iters: config.max_iters })?;
    let n = maps.voxels();
    let mut labels = vec![0u8; n];
    let mut x = vec![0.0; n];
    for &(i, l) in &selection.confident {
        labels[i] = l;
        x[i] = l as f64;
    }
    for (c, &i) in graph.candidates.iter().enumerate() {
        labels[i] = solution.labels[c];
        x[i] = solution.x[c];
    }
    let mut labels = LabelVolume::new(maps.dims(), labels)?;
    labels.x = Some(x);
    Ok(Refinement { labels, selection, solution })
}

pub fn refine(maps: &ProbabilityMap, intensity: &IntensityVolume, theta: f64, beta: f64, tol: f64) -> Result<LabelVolume> {
    let config = RefineConfig { theta, beta, tol, ..RefineConfig::default() };
    Ok(refine_with(maps, intensity, &config)?.labels)
}
