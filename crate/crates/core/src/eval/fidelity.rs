use crate::embed::EmbeddingBackend;
use crate::error::{Error, Result};
use crate::image::Image;

/// Cosine similarity between the whole-image embeddings of `original` and
/// `reconstructed`, both resized to the backend's input size. A stand-in
/// for downstream task accuracy when no task model is run.
pub fn fidelity_proxy(backend: &dyn EmbeddingBackend, original: &Image, reconstructed: &Image) -> Result<f64> {
    if original.dims() != reconstructed.dims() {
        return Err(Error::Dimension(format!(
            "original {}x{} vs reconstructed {}x{}",
            original.width(),
            original.height(),
            reconstructed.width(),
            reconstructed.height()
        )));
    }
    let side = backend.image_size();
    let pair = [original.resize_bilinear(side, side)?, reconstructed.resize_bilinear(side, side)?];
    let emb = backend.encode_images(&pair)?;
    if emb.len() != 2 {
        return Err(Error::Backend(format!("expected 2 embeddings, got {}", emb.len())));
    }
    Ok(emb[0].dot(&emb[1])?.clamp(-1.0, 1.0))
}
