//! Prompt-guided image prefiltering.
//!
//! An input image is resized to a multiple of the tile size and cut into
//! overlapping tiles. Each tile is scored against a text prompt with a
//! joint text/image embedding model, the scores are averaged onto a
//! stride grid and mapped to Gaussian σ values, and every grid block is
//! smoothed with its own σ. Low-relevance regions lose detail, which a
//! downstream codec turns into saved bits. The [`eval`] module measures
//! that saving as a BD-rate.

pub mod codec;
pub mod config;
pub mod embed;
pub mod error;
pub mod eval;
pub mod image;
pub mod pipeline;
pub mod prefilter;
pub mod prompt;
pub mod score;
pub mod tiler;

pub use config::{AblationFlags, PipelineConfig};
pub use embed::{Embedding, EmbeddingBackend, SharedBackend, StubBackend};
pub use error::{Error, ErrorKind, Result};
pub use eval::{RateQualityCurve, RateQualityPoint};
pub use image::{load_image, Image};
pub use pipeline::{Prefilter, PrefilterOutput};
