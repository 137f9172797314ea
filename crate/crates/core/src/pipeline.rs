//! End-to-end prefiltering: resize, tile, score, map to σ, smooth.

use crate::config::PipelineConfig;
use crate::embed::{encode_tiles, SharedBackend};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::prefilter::{filter_blocks, gaussian_blur, sigma_map, SigmaGrid};
use crate::prompt::PromptPreprocessor;
use crate::score::{aggregate, score_tiles, uniform_scores, ScoreGrid};
use crate::tiler::{extract_tiles, resize_to_tile_multiple, select_stride, TileGrid};

/// Everything one prefiltering pass produces.
#[derive(Debug, Clone)]
pub struct PrefilterOutput {
    /// Input resampled to a multiple of the tile size.
    pub resized: Image,
    pub filtered: Image,
    pub grid: TileGrid,
    /// Per-tile scores; empty when scoring is disabled.
    pub tile_scores: Vec<f64>,
    pub scores: ScoreGrid,
    pub sigmas: SigmaGrid,
    /// Text handed to the encoder, if any.
    pub text: Option<String>,
}

pub struct Prefilter {
    config: PipelineConfig,
    backend: SharedBackend,
    prep: PromptPreprocessor,
}

impl std::fmt::Debug for Prefilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prefilter")
            .field("config", &self.config)
            .field("backend", &self.backend.name())
            .finish()
    }
}

impl Prefilter {
    pub fn new(config: PipelineConfig, backend: SharedBackend) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            backend,
            prep: PromptPreprocessor::default(),
        })
    }

    pub fn with_preprocessor(mut self, prep: PromptPreprocessor) -> Self {
        self.prep = prep;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn backend(&self) -> &SharedBackend {
        &self.backend
    }

    /// The text the encoder sees for `prompt` under the current flags.
    pub fn prepare_prompt(&self, prompt: &str) -> String {
        if self.config.flags.preprocess_prompt {
            let backend = &self.backend;
            self.prep
                .prepare(prompt, self.config.context_window, &|t| backend.count_tokens(t))
        } else {
            prompt.trim().to_owned()
        }
    }

    /// Tile grid for an input of the given size.
    pub fn grid_for(&self, width: usize, height: usize) -> Result<TileGrid> {
        let c = &self.config;
        let (rw, rh) = crate::tiler::tile_multiple_dims(width, height, c.tile_size);
        let stride = select_stride(rw, rh, c.tile_size, c.tile_num, c.flags.allow_overlap);
        TileGrid::new(rw, rh, c.tile_size, stride)
    }

    pub fn run(&self, img: &Image, prompt: &str) -> Result<PrefilterOutput> {
        let c = &self.config;
        let grid = self.grid_for(img.width(), img.height())?;
        let resized = resize_to_tile_multiple(img, c.tile_size)?;
        let (tile_scores, scores, text) = if c.flags.use_scoring {
            if prompt.trim().is_empty() {
                return Err(Error::InvalidInput(
                    "empty prompt with scoring enabled; disable scoring for the uniform path".into(),
                ));
            }
            let text = self.prepare_prompt(prompt);
            let text_emb = self.backend.encode_text(&text)?;
            let mut tiles = extract_tiles(&resized, &grid)?;
            let side = self.backend.image_size();
            if side != c.tile_size {
                tiles = tiles
                    .iter()
                    .map(|t| t.resize_bilinear(side, side))
                    .collect::<Result<_>>()?;
            }
            let tile_embs = encode_tiles(self.backend.as_ref(), &tiles, c.batch_size)?;
            let s = score_tiles(&text_emb, &tile_embs, c.logit_scale)?;
            let agg = aggregate(&grid, &s)?;
            (s, agg, Some(text))
        } else {
            (Vec::new(), uniform_scores(&grid), None)
        };
        let sigmas = sigma_map(&scores, c.sigma_one, c.sigma_max)?;
        let filtered = filter_blocks(&resized, &sigmas, c.kernel_size)?;
        Ok(PrefilterOutput {
            resized,
            filtered,
            grid,
            tile_scores,
            scores,
            sigmas,
            text,
        })
    }
}

/// Whole-image Gaussian of fixed σ on the tile-multiple raster.
pub fn global_gaussian(img: &Image, sigma: f64, config: &PipelineConfig) -> Result<Image> {
    let resized = resize_to_tile_multiple(img, config.tile_size)?;
    gaussian_blur(&resized, sigma, config.kernel_size)
}
