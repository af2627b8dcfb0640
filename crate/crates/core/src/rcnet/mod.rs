//! Symmetric contracting/expanding network whose skip connections are
//! switched on per iteration with probability `alpha`.
//!
//! Level `l` of the expanding path computes
//! `y_l = Up(y_{l+1}) + R(e_l)` where `e_l` is the contracting-path output
//! at the same resolution and `R` either passes `e_l` through or drops it.
//! With `depth` levels there are `depth` such connections and therefore
//! `2^depth` distinct computation graphs.

mod checkpoint;
mod network;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use network::{forward, infer, ForwardTrace, NetworkParams, RcNet, Skips, UnitParams};
pub use train::{bce_with_logits, train_toy, Connections, Loss, TrainConfig, TrainReport};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Dims;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitType {
    Conv3d,
    ConvLstm,
}

impl std::str::FromStr for UnitType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv3d" => Ok(UnitType::Conv3d),
            "convlstm" => Ok(UnitType::ConvLstm),
            other => Err(Error::InvalidSpec(format!("unknown unit type {other:?} (expected conv3d or convlstm)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub unit_type: UnitType,
    /// Number of pool/upsample levels, which is also the number of skips.
    pub depth: usize,
    /// Feature maps per level, `depth + 1` entries.
    pub widths: Vec<usize>,
    /// Spatial kernel size `k`.
    pub kernel: usize,
    /// Kernel extent along the first (slice) axis; conv3d units only.
    pub temporal_kernel: usize,
    pub alpha: f64,
    pub rng_seed: u64,
}

impl NetworkSpec {
    /// Depth 2, widths `[8, 16, 32]`, `k = d = 3`, `alpha = 0.5`.
    pub fn toy(unit_type: UnitType) -> Self {
        NetworkSpec { unit_type, depth: 2, widths: vec![8, 16, 32], kernel: 3, temporal_kernel: 3, alpha: 0.5, rng_seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != self.depth + 1 {
            return Err(Error::InvalidSpec(format!(
                "widths has {} entries but depth {} needs {}",
                self.widths.len(),
                self.depth,
                self.depth + 1
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidSpec("every level needs at least one feature map".into()));
        }
        if self.kernel == 0 || self.temporal_kernel == 0 {
            return Err(Error::InvalidSpec("kernel sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::OutOfRange { name: "alpha", value: self.alpha, range: "[0, 1]" });
        }
        Ok(())
    }

    /// Pooling window over `[maps, D, H, W]`. ConvLSTM networks keep the
    /// slice axis intact because it carries the recurrence.
    pub fn pool_window(&self) -> [usize; 4] {
        match self.unit_type {
            UnitType::Conv3d => [1, 2, 2, 2],
            UnitType::ConvLstm => [1, 1, 2, 2],
        }
    }

    pub fn check_input(&self, dims: Dims) -> Result<()> {
        let scale = 1usize << self.depth;
        let window = self.pool_window();
        for axis in 0..3 {
            if window[axis + 1] > 1 && dims[axis] % scale != 0 {
                return Err(Error::InvalidShape {
                    shape: dims.to_vec(),
                    reason: format!("axis {axis} is not divisible by 2^{} = {scale}", self.depth),
                });
            }
        }
        Ok(())
    }
}

/// One flag per skip connection, indexed by level (0 = full resolution).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConnectionMask(pub Vec<bool>);

impl ConnectionMask {
    pub fn all(depth: usize, on: bool) -> Self {
        ConnectionMask(vec![on; depth])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bit `l` set iff connection `l` is on.
    pub fn pattern(&self) -> usize {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(l, _)| 1 << l).sum()
    }

    /// Every one of the `2^depth` masks, ordered by [`pattern`](Self::pattern).
    pub fn enumerate(depth: usize) -> impl Iterator<Item = ConnectionMask> {
        (0..1usize << depth).map(move |bits| ConnectionMask((0..depth).map(|l| bits >> l & 1 == 1).collect()))
    }
}

/// Independent Bernoulli(`alpha`) draw per connection.
pub fn sample_mask<R: Rng + ?Sized>(alpha: f64, depth: usize, rng: &mut R) -> ConnectionMask {
    ConnectionMask((0..depth).map(|_| rng.random_bool(alpha.clamp(0.0, 1.0))).collect())
}
