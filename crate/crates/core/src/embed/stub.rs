use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EmbeddingBackend, FeatureMapStack, FEATURE_DIM};
use crate::error::{HarError, Result};
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub seed: u64,
    /// Feature maps are `grid × grid`.
    pub grid: usize,
    /// Each map cell sees a `patch × patch` block of the pooled image.
    pub patch: usize,
}

impl Default for StubConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: 8,
            patch: 8,
        }
    }
}

/// Seeded random-projection stand-in for a convolutional backbone.
///
/// The image is box-averaged down to a `(grid·patch)²` grid of intensities in
/// [0, 1]; every `patch × patch` block is flattened and sent through the same
/// dense map `tanh(W·v + b)` with `W` (2048 × patch²) and `b` drawn from a
/// seeded Gaussian. The resulting `grid × grid × 2048` stack is the feature
/// map output, and its spatial mean is the embedding.
#[derive(Debug, Clone)]
pub struct StubBackend {
    config: StubConfig,
    id: String,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl StubBackend {
    pub fn new(config: StubConfig) -> Result<Self> {
        if config.grid == 0 || config.patch == 0 {
            return Err(HarError::config("stub grid and patch must be positive"));
        }
        let inputs = config.patch * config.patch;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w_dist = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).expect("valid normal");
        let b_dist = Normal::new(0.0, 0.5).expect("valid normal");
        let weights = (0..FEATURE_DIM * inputs)
            .map(|_| w_dist.sample(&mut rng) as f32)
            .collect();
        let bias = (0..FEATURE_DIM).map(|_| b_dist.sample(&mut rng) as f32).collect();
        Ok(Self {
            id: format!("stub-seed{}-g{}-p{}", config.seed, config.grid, config.patch),
            config,
            weights,
            bias,
        })
    }

    pub fn with_seed(seed: u64) -> Self {
        Self::new(StubConfig {
            seed,
            ..Default::default()
        })
        .expect("default stub config is valid")
    }

    pub fn config(&self) -> StubConfig {
        self.config
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Output for an all-zero input block: `tanh(b)`.
    pub fn zero_response(&self) -> Vec<f32> {
        self.bias.iter().map(|&b| (b as f64).tanh() as f32).collect()
    }

    fn pooled(&self, image: &RasterImage) -> Result<Vec<f64>> {
        let side = self.config.grid * self.config.patch;
        if image.width < side || image.height < side {
            return Err(HarError::config(format!(
                "stub backend needs images of at least {side}×{side}, got {}×{}",
                image.width, image.height
            )));
        }
        let gray = image.gray_values();
        let mut sum = vec![0.0f64; side * side];
        let mut count = vec![0u32; side * side];
        for r in 0..image.height {
            let pr = r * side / image.height;
            for c in 0..image.width {
                let pc = c * side / image.width;
                sum[pr * side + pc] += gray[r * image.width + c] as f64 / 255.0;
                count[pr * side + pc] += 1;
            }
        }
        Ok(sum.iter().zip(&count).map(|(s, &n)| s / n as f64).collect())
    }
}

impl EmbeddingBackend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn map_shape(&self) -> Option<(usize, usize)> {
        Some((self.config.grid, self.config.grid))
    }

    fn embed_values(&self, image: &RasterImage, image_id: &str) -> Result<Vec<f32>> {
        Ok(self.feature_maps(image, image_id)?.global_average_pool())
    }

    fn feature_maps(&self, image: &RasterImage, _image_id: &str) -> Result<FeatureMapStack> {
        let pooled = self.pooled(image)?;
        let StubConfig { grid, patch, .. } = self.config;
        let side = grid * patch;
        let inputs = patch * patch;
        let mut values = Vec::with_capacity(grid * grid * FEATURE_DIM);
        let mut block = vec![0.0f32; inputs];
        for gy in 0..grid {
            for gx in 0..grid {
                for py in 0..patch {
                    for px in 0..patch {
                        block[py * patch + px] = pooled[(gy * patch + py) * side + gx * patch + px] as f32;
                    }
                }
                for (k, row) in self.weights.chunks_exact(inputs).enumerate() {
                    let pre: f32 = row.iter().zip(&block).map(|(w, v)| w * v).sum::<f32>() + self.bias[k];
                    values.push(pre.tanh());
                }
            }
        }
        FeatureMapStack::new(grid, grid, FEATURE_DIM, values)
    }
}
