//! ONNX-backed CLIP-style backend.
//!
//! An assets directory holds a vision model, a text model, the BPE merges
//! file and `metadata.json` describing embedding size, context window and
//! input normalization. Models are run with `tract`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{ClipTokenizer, Embedding, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::image::Image;

/// Default location of the assets directory.
pub const MODEL_DIR_ENV: &str = "SEMFILTER_MODEL_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub context_window: usize,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    pub mean: [f32; 3],
    pub std: [f32; 3],
    /// Channel order the vision model expects, "RGB" or "BGR".
    #[serde(default = "default_channel_order")]
    pub channel_order: String,
    /// Temperature stored in the checkpoint. Informational only.
    #[serde(default)]
    pub logit_scale_hint: Option<f64>,
    pub vision_model: PathBuf,
    pub text_model: PathBuf,
    pub tokenizer: PathBuf,
    #[serde(default)]
    pub golden: Option<GoldenSet>,
}

/// Reference vectors produced by the exporting framework.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GoldenSet {
    #[serde(default)]
    pub texts: Vec<GoldenText>,
    #[serde(default)]
    pub tiles: Vec<GoldenTile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenText {
    pub text: String,
    #[serde(default)]
    pub token_ids: Option<Vec<u32>>,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldenTile {
    pub image: PathBuf,
    pub vector: Vec<f32>,
}

fn default_name() -> String {
    "neural".into()
}

fn default_image_size() -> usize {
    224
}

fn default_channel_order() -> String {
    "RGB".into()
}

type Plan = Arc<TypedRunnableModel>;

/// Lazily compiled plans, one per batch size.
struct PlanCache {
    model: InferenceModel,
    plans: Mutex<HashMap<usize, Plan>>,
}

impl PlanCache {
    fn load(path: &Path) -> Result<Self> {
        let model = tract_onnx::onnx()
            .model_for_path(path)
            .map_err(|e| Error::Backend(format!("loading {}: {e}", path.display())))?;
        Ok(Self {
            model,
            plans: Mutex::new(HashMap::new()),
        })
    }

    fn plan(&self, batch: usize, fact: InferenceFact) -> Result<Plan> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        if let Some(p) = plans.get(&batch) {
            return Ok(p.clone());
        }
        let plan = self
            .model
            .clone()
            .with_input_fact(0, fact)
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Backend(format!("compiling model for batch {batch}: {e}")))?;
        plans.insert(batch, plan.clone());
        Ok(plan)
    }
}

pub struct NeuralBackend {
    meta: ModelMetadata,
    dir: PathBuf,
    tokenizer: ClipTokenizer,
    vision: PlanCache,
    text: PlanCache,
}

impl std::fmt::Debug for NeuralBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NeuralBackend")
            .field("name", &self.meta.name)
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

impl NeuralBackend {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let meta_path = dir.join("metadata.json");
        let raw = std::fs::read_to_string(&meta_path)
            .map_err(|e| Error::Backend(format!("model assets: cannot read {}: {e}", meta_path.display())))?;
        let meta: ModelMetadata = serde_json::from_str(&raw)
            .map_err(|e| Error::Backend(format!("model assets: bad {}: {e}", meta_path.display())))?;
        if meta.dim == 0 || meta.context_window < 2 || meta.image_size == 0 {
            return Err(Error::Backend(format!("implausible metadata in {}", meta_path.display())));
        }
        if !matches!(meta.channel_order.as_str(), "RGB" | "BGR") {
            return Err(Error::Backend(format!("unknown channel order {:?}", meta.channel_order)));
        }
        let tokenizer = ClipTokenizer::from_file(dir.join(&meta.tokenizer))
            .map_err(|e| Error::Backend(format!("model assets: tokenizer: {e}")))?;
        let vision = PlanCache::load(&dir.join(&meta.vision_model))?;
        let text = PlanCache::load(&dir.join(&meta.text_model))?;
        Ok(Self {
            meta,
            dir,
            tokenizer,
            vision,
            text,
        })
    }

    /// Loads from `$SEMFILTER_MODEL_DIR`.
    pub fn from_env() -> Result<Self> {
        let dir = std::env::var_os(MODEL_DIR_ENV)
            .ok_or_else(|| Error::Backend(format!("{MODEL_DIR_ENV} is not set; point it at a model assets directory")))?;
        Self::load(dir)
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.meta
    }

    pub fn assets_dir(&self) -> &Path {
        &self.dir
    }

    pub fn tokenizer(&self) -> &ClipTokenizer {
        &self.tokenizer
    }

    fn to_embeddings(&self, out: &TValue, expected: usize) -> Result<Vec<Embedding>> {
        let view = out
            .to_plain_array_view::<f32>()
            .map_err(|e| Error::Backend(format!("model output: {e}")))?;
        let shape = view.shape().to_vec();
        if shape.len() != 2 || shape[0] != expected || shape[1] != self.meta.dim {
            return Err(Error::Backend(format!(
                "model output shape {shape:?}, expected [{expected}, {}]",
                self.meta.dim
            )));
        }
        view.outer_iter()
            .map(|row| Embedding::normalized(row.iter().copied().collect()))
            .collect()
    }
}

impl EmbeddingBackend for NeuralBackend {
    fn name(&self) -> &str {
        &self.meta.name
    }

    fn dim(&self) -> usize {
        self.meta.dim
    }

    fn image_size(&self) -> usize {
        self.meta.image_size
    }

    fn context_window(&self) -> usize {
        self.meta.context_window
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        let ctx = self.meta.context_window;
        let ids: Vec<i64> = self
            .tokenizer
            .encode_padded(text, ctx)
            .into_iter()
            .map(i64::from)
            .collect();
        let input = tract_ndarray::Array2::from_shape_vec((1, ctx), ids)
            .map_err(|e| Error::Backend(e.to_string()))?;
        let plan = self.text.plan(1, i64::fact([1, ctx]).into())?;
        let out = plan
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| Error::Backend(format!("text inference: {e}")))?;
        Ok(self.to_embeddings(&out[0], 1)?.remove(0))
    }

    fn encode_images(&self, images: &[Image]) -> Result<Vec<Embedding>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let side = self.meta.image_size;
        if let Some(bad) = images.iter().find(|i| i.dims() != (side, side)) {
            return Err(Error::Dimension(format!(
                "vision model expects {side}x{side}, got {}x{}",
                bad.width(),
                bad.height()
            )));
        }
        let n = images.len();
        let bgr = self.meta.channel_order == "BGR";
        let (mean, std) = (self.meta.mean, self.meta.std);
        let input = tract_ndarray::Array4::from_shape_fn((n, 3, side, side), |(i, c, y, x)| {
            let src = if bgr { 2 - c } else { c };
            let v = images[i].pixel(x, y)[src] as f32 / 255.0;
            (v - mean[c]) / std[c]
        });
        let plan = self.vision.plan(n, f32::fact([n, 3, side, side]).into())?;
        let out = plan
            .run(tvec!(Tensor::from(input).into()))
            .map_err(|e| Error::Backend(format!("vision inference: {e}")))?;
        self.to_embeddings(&out[0], n)
    }

    fn count_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }
}
