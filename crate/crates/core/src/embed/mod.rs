//! Text and image embeddings behind a backend-agnostic interface.

mod stub;
mod tokenizer;

#[cfg(feature = "neural")]
mod neural;

use std::sync::Arc;

pub use stub::{tile_fingerprint, SimilarityTable, StubBackend};
pub use tokenizer::ClipTokenizer;

#[cfg(feature = "neural")]
pub use neural::{ModelMetadata, NeuralBackend, MODEL_DIR_ENV};

use crate::error::{Error, Result};
use crate::image::Image;

/// An L2-normalized embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `raw` to unit length. Fails on an empty, zero or
    /// non-finite vector.
    pub fn normalized(raw: Vec<f32>) -> Result<Self> {
        let norm = raw.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
        if raw.is_empty() || !norm.is_finite() || norm == 0.0 {
            return Err(Error::Backend(format!(
                "cannot normalize embedding (len {}, norm {norm})",
                raw.len()
            )));
        }
        Ok(Self(raw.into_iter().map(|v| (v as f64 / norm) as f32).collect()))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }

    /// Dot product; equals the cosine similarity for unit vectors.
    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!(
                "embedding dims differ: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }
}

/// A joint text/image embedding model.
///
/// Implementations are immutable after construction and may be shared
/// between threads.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Side length of the square images `encode_images` expects.
    fn image_size(&self) -> usize;

    fn context_window(&self) -> usize;

    /// Encodes text; input longer than the context window is truncated.
    fn encode_text(&self, text: &str) -> Result<Embedding>;

    /// Encodes a batch of `image_size` x `image_size` images.
    fn encode_images(&self, images: &[Image]) -> Result<Vec<Embedding>>;

    /// Tokens the text encoder would see, begin/end markers included.
    fn count_tokens(&self, text: &str) -> usize;
}

pub type SharedBackend = Arc<dyn EmbeddingBackend>;

/// Encodes text through `backend`.
pub fn encode_text(backend: &dyn EmbeddingBackend, text: &str) -> Result<Embedding> {
    backend.encode_text(text)
}

/// Encodes tiles in batches of `batch_size`, preserving order.
pub fn encode_tiles(backend: &dyn EmbeddingBackend, tiles: &[Image], batch_size: usize) -> Result<Vec<Embedding>> {
    let side = backend.image_size();
    if let Some(bad) = tiles.iter().find(|t| t.dims() != (side, side)) {
        return Err(Error::Dimension(format!(
            "backend {} expects {side}x{side} tiles, got {}x{}",
            backend.name(),
            bad.width(),
            bad.height()
        )));
    }
    let mut out = Vec::with_capacity(tiles.len());
    for chunk in tiles.chunks(batch_size.max(1)) {
        let embs = backend.encode_images(chunk)?;
        if embs.len() != chunk.len() {
            return Err(Error::Backend(format!(
                "backend returned {} embeddings for {} tiles",
                embs.len(),
                chunk.len()
            )));
        }
        out.extend(embs);
    }
    Ok(out)
}

pub fn count_tokens(backend: &dyn EmbeddingBackend, text: &str) -> usize {
    backend.count_tokens(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_contract() {
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert!((e.values()[0] - 0.6).abs() < 1e-7);
        assert!(Embedding::normalized(vec![0.0, 0.0]).is_err());
        assert!(Embedding::normalized(vec![]).is_err());
        assert!(Embedding::normalized(vec![f32::NAN]).is_err());
    }

    #[test]
    fn dot_checks_dims() {
        let a = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let b = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(a.dot(&b).is_err());
    }

    #[test]
    fn encode_tiles_rejects_wrong_size() {
        let backend = StubBackend::default();
        let tiles = vec![Image::filled(10, 10, [0, 0, 0]).unwrap()];
        assert!(matches!(encode_tiles(&backend, &tiles, 8), Err(Error::Dimension(_))));
    }

    #[test]
    fn encode_tiles_batches_preserve_order() {
        let backend = StubBackend::default();
        let tiles: Vec<Image> = (0..5u8)
            .map(|i| Image::filled(224, 224, [i * 40, 255 - i * 40, i]).unwrap())
            .collect();
        let batched = encode_tiles(&backend, &tiles, 2).unwrap();
        let single = encode_tiles(&backend, &tiles, 100).unwrap();
        assert_eq!(batched, single);
        assert_eq!(batched.len(), 5);
    }
}
