use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Embedding, EmbeddingBackend};
use crate::error::{Error, Result};
use crate::image::Image;

const PROJECTION_SEED: u64 = 0x5eed_f11e_7e55_0001;
const GRID: usize = 8;
const FEATURES: usize = GRID * GRID * 3 + GRID * GRID + 1;

/// FNV-1a over the tile dimensions and bytes. Keys [`SimilarityTable`].
pub fn tile_fingerprint(img: &Image) -> u64 {
    let mut h = fnv1a(0xcbf2_9ce4_8422_2325, &(img.width() as u64).to_le_bytes());
    h = fnv1a(h, &(img.height() as u64).to_le_bytes());
    fnv1a(h, img.data())
}

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Fixed text-tile cosine similarities keyed by tile content.
///
/// With a table installed, the stub maps every text to one basis vector and
/// every tile to a unit vector at exactly the tabulated cosine from it, so
/// tests can dictate the score field.
#[derive(Debug, Clone, Default)]
pub struct SimilarityTable {
    pub default: f64,
    pub entries: HashMap<u64, f64>,
}

impl SimilarityTable {
    pub fn new(default: f64) -> Self {
        Self {
            default,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, tile: &Image, cosine: f64) {
        self.entries.insert(tile_fingerprint(tile), cosine);
    }

    pub fn lookup(&self, tile: &Image) -> f64 {
        self.entries
            .get(&tile_fingerprint(tile))
            .copied()
            .unwrap_or(self.default)
    }
}

/// Deterministic, weight-free backend.
///
/// Text is embedded as the normalized sum of per-word Gaussian vectors seeded
/// by a hash of the word. Images are reduced to coarse color and gradient
/// statistics on an 8x8 grid and randomly projected, so visually similar
/// images land close together.
#[derive(Debug, Clone)]
pub struct StubBackend {
    dim: usize,
    image_size: usize,
    context_window: usize,
    projection: Vec<f32>,
    table: Option<SimilarityTable>,
}

impl Default for StubBackend {
    fn default() -> Self {
        Self::new(64, 224, 77)
    }
}

impl StubBackend {
    pub fn new(dim: usize, image_size: usize, context_window: usize) -> Self {
        assert!(dim >= 2, "stub embeddings need at least two dimensions");
        assert!(image_size >= GRID, "stub image size must be at least {GRID}");
        let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
        let projection = (0..dim * FEATURES)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Self {
            dim,
            image_size,
            context_window,
            projection,
            table: None,
        }
    }

    pub fn with_similarity_table(mut self, table: SimilarityTable) -> Self {
        self.table = Some(table);
        self
    }

    fn words<'a>(&self, text: &'a str) -> impl Iterator<Item = String> + 'a {
        text.split_whitespace().map(str::to_lowercase)
    }

    fn image_features(img: &Image) -> Vec<f64> {
        let (w, h) = img.dims();
        let mut feats = vec![0.0; FEATURES];
        let mut counts = vec![0usize; GRID * GRID];
        let luma = |x: usize, y: usize| {
            let p = img.pixel(x, y);
            (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0
        };
        for y in 0..h {
            let cy = y * GRID / h;
            for x in 0..w {
                let cell = cy * GRID + x * GRID / w;
                let p = img.pixel(x, y);
                for c in 0..3 {
                    feats[cell * 3 + c] += p[c] as f64;
                }
                let gx = if x + 1 < w { (luma(x + 1, y) - luma(x, y)).abs() } else { 0.0 };
                let gy = if y + 1 < h { (luma(x, y + 1) - luma(x, y)).abs() } else { 0.0 };
                feats[GRID * GRID * 3 + cell] += gx + gy;
                counts[cell] += 1;
            }
        }
        for cell in 0..GRID * GRID {
            let n = counts[cell].max(1) as f64;
            for c in 0..3 {
                feats[cell * 3 + c] = (feats[cell * 3 + c] / n - 128.0) / 128.0;
            }
            feats[GRID * GRID * 3 + cell] /= n * 32.0;
        }
        feats[FEATURES - 1] = 0.25;
        feats
    }

    fn project(&self, feats: &[f64]) -> Vec<f32> {
        self.projection
            .chunks(FEATURES)
            .map(|row| row.iter().zip(feats).map(|(&m, &f)| m as f64 * f).sum::<f64>() as f32)
            .collect()
    }

    fn basis_mix(&self, cosine: f64) -> Vec<f32> {
        let c = cosine.clamp(-1.0, 1.0);
        let mut v = vec![0.0f32; self.dim];
        v[0] = c as f32;
        v[1] = (1.0 - c * c).max(0.0).sqrt() as f32;
        v
    }
}

impl EmbeddingBackend for StubBackend {
    fn name(&self) -> &str {
        "stub"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn image_size(&self) -> usize {
        self.image_size
    }

    fn context_window(&self) -> usize {
        self.context_window
    }

    fn encode_text(&self, text: &str) -> Result<Embedding> {
        if self.table.is_some() {
            return Embedding::normalized(self.basis_mix(1.0));
        }
        let budget = self.context_window.saturating_sub(2);
        let mut acc = vec![0.0f64; self.dim];
        let mut any = false;
        for word in self.words(text).take(budget) {
            any = true;
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(0xcbf2_9ce4_8422_2325, word.as_bytes()));
            for a in acc.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *a += g;
            }
        }
        if !any {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            for a in acc.iter_mut() {
                *a = StandardNormal.sample(&mut rng);
            }
        }
        Embedding::normalized(acc.into_iter().map(|v| v as f32).collect())
    }

    fn encode_images(&self, images: &[Image]) -> Result<Vec<Embedding>> {
        images
            .iter()
            .map(|img| {
                if img.dims() != (self.image_size, self.image_size) {
                    return Err(Error::Dimension(format!(
                        "stub expects {0}x{0} images, got {1}x{2}",
                        self.image_size,
                        img.width(),
                        img.height()
                    )));
                }
                let raw = match &self.table {
                    Some(t) => self.basis_mix(t.lookup(img)),
                    None => self.project(&Self::image_features(img)),
                };
                Embedding::normalized(raw)
            })
            .collect()
    }

    fn count_tokens(&self, text: &str) -> usize {
        text.split_whitespace().count() + 2
    }
}
