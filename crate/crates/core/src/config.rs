use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of the prefiltering pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Side of the square tiles fed to the image encoder.
    pub tile_size: usize,
    /// Target number of tiles; picks the sliding-window stride.
    pub tile_num: usize,
    pub logit_scale: f64,
    /// σ at score 1.
    pub sigma_one: f64,
    /// σ at score 0.
    pub sigma_max: f64,
    pub kernel_size: usize,
    /// Text encoder context window in tokens, begin/end markers included.
    pub context_window: usize,
    /// Tiles per inference call.
    pub batch_size: usize,
    pub flags: AblationFlags,
}

/// Switches for the ablation variants of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    /// When false every cell gets score 1.
    pub use_scoring: bool,
    /// When false the stride is pinned to the tile size.
    pub allow_overlap: bool,
    /// When false the raw prompt goes to the text encoder.
    pub preprocess_prompt: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_scoring: true,
            allow_overlap: true,
            preprocess_prompt: true,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile_size: 224,
            tile_num: 24,
            logit_scale: 20.0,
            sigma_one: 0.2,
            sigma_max: 3.0,
            kernel_size: 11,
            context_window: 77,
            batch_size: 8,
            flags: AblationFlags::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<()> {
            Err(Error::Config {
                field,
                reason: reason.into(),
            })
        }
        if self.tile_size == 0 || self.tile_size % 4 != 0 {
            return bad("tile_size", format!("{} is not a positive multiple of 4", self.tile_size));
        }
        if self.tile_num == 0 {
            return bad("tile_num", "must be at least 1");
        }
        if !self.logit_scale.is_finite() || self.logit_scale <= 0.0 {
            return bad("logit_scale", format!("{} must be positive and finite", self.logit_scale));
        }
        if !(self.sigma_one > 0.0) {
            return bad("sigma_one", format!("{} must be > 0", self.sigma_one));
        }
        if !(self.sigma_one < self.sigma_max) || !self.sigma_max.is_finite() {
            return bad(
                "sigma_max",
                format!("need sigma_one < sigma_max, got {} >= {}", self.sigma_one, self.sigma_max),
            );
        }
        if self.kernel_size < 3 || self.kernel_size % 2 == 0 {
            return bad("kernel_size", format!("{} must be odd and >= 3", self.kernel_size));
        }
        let radius = (self.kernel_size - 1) / 2;
        if self.tile_size / 4 < radius + 1 {
            return bad(
                "kernel_size",
                format!(
                    "kernel radius {radius} does not fit the smallest block ({} px)",
                    self.tile_size / 4
                ),
            );
        }
        if self.context_window < 2 {
            return bad("context_window", "must leave room for begin/end markers (>= 2)");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        Ok(())
    }
}
