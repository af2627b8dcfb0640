//! The end-to-end synthetic experiment: train several toy networks on one
//! scene, segment a second scene with each, fuse the maps and refine them.

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::synth::{synth, SynthScene};
use crate::io::PipelineConfig;
use crate::metrics::{stage_report, StageDice};
use crate::rcnet::{infer, train_toy, NetworkParams, NetworkSpec, UnitType};
use crate::volume::{Dims, LabelVolume, ProbabilityMap, Volume};
use crate::walker::{refine_with, IntensityVolume, Refinement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub dims: Dims,
    pub n_blobs: usize,
    pub noise_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { dims: [32, 32, 32], n_blobs: 2, noise_sigma: 0.3 }
    }
}

/// Sets a `size`³ cube of `map` to 1 at the first position (scan order,
/// away from the border) whose surrounding cube, one voxel wider on every
/// side, is background in `truth`. Returns the corrupted voxel indices.
pub fn plant_false_positive(map: &mut Volume, truth: &LabelVolume, size: usize) -> Result<Vec<usize>> {
    let [d, h, w] = truth.dims();
    let margin = size + 2;
    let inside = |z: usize, y: usize, x: usize| (z * h + y) * w + x;
    for z in 2..d.saturating_sub(margin + 1) {
        for y in 2..h.saturating_sub(margin + 1) {
            for x in 2..w.saturating_sub(margin + 1) {
                let clear = (0..margin).all(|a| {
                    (0..margin).all(|b| (0..margin).all(|c| truth.labels()[inside(z + a, y + b, x + c)] == 0))
                });
                if clear {
                    let mut planted = Vec::with_capacity(size.pow(3));
                    for a in 1..=size {
                        for b in 1..=size {
                            for c in 1..=size {
                                planted.push(inside(z + a, y + b, x + c));
                            }
                        }
                    }
                    planted.sort_unstable();
                    for &i in &planted {
                        map.data_mut()[i] = 1.0;
                    }
                    return Ok(planted);
                }
            }
        }
    }
    Err(Error::InvalidShape { shape: truth.dims().to_vec(), reason: "no background region to plant a blob in".into() })
}

#[derive(Clone, Debug)]
pub struct TrainedNetwork {
    pub spec: NetworkSpec,
    pub params: NetworkParams,
    pub losses: Vec<f64>,
    /// Foreground probability on the evaluation scene.
    pub probabilities: Volume,
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub train_scene: SynthScene,
    pub test_scene: SynthScene,
    pub networks: Vec<TrainedNetwork>,
    /// Maps fed to refinement, after any planting.
    pub maps: ProbabilityMap,
    pub planted: Vec<usize>,
    pub fused: LabelVolume,
    pub refinement: Refinement,
    pub report: Vec<StageDice>,
}

/// Trains one network per entry of `units` on a scene from `seeds.synth`,
/// evaluates all of them on a scene from `seeds.synth + 1`, optionally
/// corrupts the first map with a planted `plant`³ cube, and refines.
pub fn run(config: &PipelineConfig, scene: &SceneConfig, units: &[UnitType], plant: Option<usize>) -> Result<PipelineRun> {
    config.validate()?;
    if units.is_empty() {
        return Err(Error::InvalidSpec("the pipeline needs at least one network".into()));
    }
    let train_scene = synth(config.seeds.synth, scene.dims, scene.n_blobs, scene.noise_sigma)?;
    let test_scene = synth(config.seeds.synth + 1, scene.dims, scene.n_blobs, scene.noise_sigma)?;
    let dataset = [(train_scene.intensity.clone(), train_scene.truth.clone())];

    let mut networks = Vec::with_capacity(units.len());
    for &unit in units {
        let spec = config.network_spec(unit);
        let report = train_toy(&spec, &config.train_config(unit), &dataset)?;
        info!(
            "{unit:?}: loss {:.4} -> {:.4}",
            report.iteration_losses.first().copied().unwrap_or(f64::NAN),
            report.iteration_losses.last().copied().unwrap_or(f64::NAN)
        );
        let probs = infer(&spec, &report.params, &test_scene.intensity)?;
        let probabilities = Volume::new(scene.dims, probs.map(0).to_vec())?;
        networks.push(TrainedNetwork { spec, params: report.params, losses: report.iteration_losses, probabilities });
    }

    let mut volumes: Vec<Volume> = networks.iter().map(|n| n.probabilities.clone()).collect();
    let planted = match plant {
        Some(size) => plant_false_positive(&mut volumes[0], &test_scene.truth, size)?,
        None => Vec::new(),
    };
    let maps = ProbabilityMap::from_volumes(&volumes)?;
    let fused = maps.thresholded_mean();
    let intensity = IntensityVolume::normalized(&test_scene.intensity)?;
    let refinement = refine_with(&maps, &intensity, &config.refine_config())?;

    let mut stages: Vec<(String, LabelVolume)> = networks
        .iter()
        .enumerate()
        .map(|(k, n)| (format!("net{k}_{}", unit_name(n.spec.unit_type)), n.probabilities.threshold(0.5)))
        .collect();
    stages.push(("fused_mean".into(), fused.clone()));
    stages.push(("refined".into(), refinement.labels.clone()));
    let report = stage_report(&test_scene.truth, &stages)?;
    Ok(PipelineRun { train_scene, test_scene, networks, maps, planted, fused, refinement, report })
}

pub fn unit_name(unit: UnitType) -> &'static str {
    match unit {
        UnitType::Conv3d => "conv3d",
        UnitType::ConvLstm => "convlstm",
    }
}
