use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rcnet::{NetworkSpec, TrainConfig, UnitType};
use crate::walker::RefineConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub synth: u64,
    /// Weight initialisation.
    pub init: u64,
    /// Mask sampling and shuffling during training.
    pub train: u64,
}

/// Per-unit step sizes that replace `learning_rate` when set.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct UnitRates {
    pub conv3d: Option<f64>,
    pub convlstm: Option<f64>,
}

/// Every knob of the pipeline. Missing JSON fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub theta: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub unit_learning_rates: UnitRates,
    pub tol: f64,
    pub epochs: usize,
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub temporal_kernel: usize,
    pub dirichlet: bool,
    pub seeds: Seeds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.5,
            theta: 0.999,
            beta: 100.0,
            learning_rate: 1e-4,
            unit_learning_rates: UnitRates::default(),
            tol: 1e-8,
            epochs: 200,
            widths: vec![8, 16, 32],
            kernel: 3,
            temporal_kernel: 3,
            dirichlet: true,
            seeds: Seeds::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_slice(&std::fs::read(path)?)
            .map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &'static str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::OutOfRange { name, value: v, range: "[0, 1]" })
            }
        };
        unit("alpha", self.alpha)?;
        unit("theta", self.theta)?;
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::OutOfRange { name: "beta", value: self.beta, range: "[0, inf)" });
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::OutOfRange { name: "tol", value: self.tol, range: "(0, inf)" });
        }
        for unit in [UnitType::Conv3d, UnitType::ConvLstm] {
            self.train_config(unit).validate()?;
        }
        self.network_spec(UnitType::Conv3d).validate()
    }

    pub fn network_spec(&self, unit_type: UnitType) -> NetworkSpec {
        NetworkSpec {
            unit_type,
            depth: self.widths.len().saturating_sub(1),
            widths: self.widths.clone(),
            kernel: self.kernel,
            temporal_kernel: self.temporal_kernel,
            alpha: self.alpha,
            rng_seed: self.seeds.init,
        }
    }

    pub fn learning_rate(&self, unit_type: UnitType) -> f64 {
        let rate = match unit_type {
            UnitType::Conv3d => self.unit_learning_rates.conv3d,
            UnitType::ConvLstm => self.unit_learning_rates.convlstm,
        };
        rate.unwrap_or(self.learning_rate)
    }

    pub fn train_config(&self, unit_type: UnitType) -> TrainConfig {
        TrainConfig { learning_rate: self.learning_rate(unit_type), epochs: self.epochs, seed: self.seeds.train, ..TrainConfig::default() }
    }

    pub fn refine_config(&self) -> RefineConfig {
        RefineConfig { theta: self.theta, beta: self.beta, tol: self.tol, dirichlet: self.dirichlet, max_iters: None }
    }
}
