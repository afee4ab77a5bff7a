use crate::tokens::{MAX_SEQ_LEN, VOCAB_SIZE};
use serde::{Deserialize, Serialize};

/// Model shape. Training runs in `f32`; gradient checks run in `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab: usize,
    pub max_seq: usize,
    /// Fine voxel edge in meters.
    pub voxel_size: f64,
    /// Each level halves the grid; coarse cells span `2^levels` voxels.
    pub pooling_levels: u32,
    /// Residual dropout rate during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 128,
            layers: 2,
            heads: 4,
            d_ff: 512,
            vocab: VOCAB_SIZE,
            max_seq: MAX_SEQ_LEN,
            voxel_size: 0.05,
            pooling_levels: 5,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    /// One layer at width 16, small enough for finite differences.
    pub fn tiny() -> Self {
        ModelConfig { d_model: 16, layers: 1, heads: 2, d_ff: 32, ..ModelConfig::default() }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Edge of a coarse encoder cell in meters.
    pub fn cell_size(&self) -> f64 {
        self.voxel_size * (1u64 << self.pooling_levels) as f64
    }

    pub fn check(&self) -> Result<(), String> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err("d_model must be divisible by heads".into());
        }
        if self.d_model < 4 {
            return Err("d_model must be at least 4".into());
        }
        if self.pooling_levels < 1 || self.pooling_levels > 20 {
            return Err("pooling_levels must lie in 1..=20".into());
        }
        if !(self.voxel_size > 0.0) {
            return Err("voxel_size must be positive".into());
        }
        if self.vocab != VOCAB_SIZE || !(2..=MAX_SEQ_LEN).contains(&self.max_seq) || self.d_ff == 0 {
            return Err("vocab must be 2048; max_seq and d_ff must be in range".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must lie in [0, 1)".into());
        }
        Ok(())
    }
}
