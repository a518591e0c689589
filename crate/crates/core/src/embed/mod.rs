//! Image embeddings: 2048-d pooled feature vectors and the spatial feature
//! maps they are pooled from.

mod features_io;
#[cfg(feature = "onnx")]
mod onnx;
mod precomputed;
mod stub;

pub use features_io::{
    read_features, read_features_binary, read_features_csv, write_features, write_features_binary,
    write_features_csv, FEATURE_FILE_MAGIC, FEATURE_FILE_VERSION,
};
#[cfg(feature = "onnx")]
pub use onnx::{OnnxBackend, OnnxConfig, TensorLayout};
pub use precomputed::PrecomputedBackend;
pub use stub::{StubBackend, StubConfig};

use crate::error::{HarError, Result};
use crate::label::ActivityLabel;
use crate::raster::RasterImage;

pub const FEATURE_DIM: usize = 2048;

/// Pooled embedding of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub label: ActivityLabel,
    pub source: String,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, label: ActivityLabel, source: impl Into<String>) -> Result<Self> {
        if values.len() != FEATURE_DIM {
            return Err(HarError::config(format!(
                "feature vector has {} values, expected {FEATURE_DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarError::data("feature vector contains non-finite values"));
        }
        Ok(Self {
            values,
            label,
            source: source.into(),
        })
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// Pre-pooling activations, laid out height × width × channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapStack {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl FeatureMapStack {
    pub fn new(height: usize, width: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(HarError::config("feature map dimensions must be positive"));
        }
        if values.len() != height * width * channels {
            return Err(HarError::config(format!(
                "feature map stack expects {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HarError::data("feature maps contain non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            values,
        })
    }

    /// Builds a stack from one `height × width` map per channel.
    pub fn from_channel_maps(height: usize, width: usize, maps: &[Vec<f32>]) -> Result<Self> {
        let channels = maps.len();
        let mut values = vec![0.0; height * width * channels];
        for (k, map) in maps.iter().enumerate() {
            if map.len() != height * width {
                return Err(HarError::config(format!("channel {k} map has wrong size")));
            }
            for (cell, &v) in map.iter().enumerate() {
                values[cell * channels + k] = v;
            }
        }
        Self::new(height, width, channels, values)
    }

    pub fn at(&self, y: usize, x: usize, k: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + k]
    }

    /// One channel as a row-major `height × width` map.
    pub fn channel(&self, k: usize) -> Vec<f32> {
        self.values.iter().skip(k).step_by(self.channels).copied().collect()
    }

    /// Global average pooling over the spatial axes, accumulated in f64.
    pub fn global_average_pool(&self) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.channels];
        for cell in self.values.chunks_exact(self.channels) {
            for (a, &v) in acc.iter_mut().zip(cell) {
                *a += v as f64;
            }
        }
        let cells = (self.height * self.width) as f64;
        acc.into_iter().map(|a| (a / cells) as f32).collect()
    }
}

/// A source of 2048-d image features. Implementations are read-only after
/// construction and may be shared across threads.
pub trait EmbeddingBackend: Send + Sync {
    fn id(&self) -> &str;

    /// Spatial shape of the feature maps, if the backend exposes them.
    fn map_shape(&self) -> Option<(usize, usize)>;

    /// Raw pooled features for an image. `image_id` identifies the image for
    /// lookup-based backends.
    fn embed_values(&self, image: &RasterImage, image_id: &str) -> Result<Vec<f32>>;

    fn feature_maps(&self, image: &RasterImage, image_id: &str) -> Result<FeatureMapStack>;
}

pub fn embed(
    image: &RasterImage,
    image_id: &str,
    label: ActivityLabel,
    backend: &dyn EmbeddingBackend,
) -> Result<FeatureVector> {
    FeatureVector::new(backend.embed_values(image, image_id)?, label, image_id)
}

pub fn feature_maps(
    image: &RasterImage,
    image_id: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<FeatureMapStack> {
    let maps = backend.feature_maps(image, image_id)?;
    if maps.channels != FEATURE_DIM {
        return Err(HarError::Backend(format!(
            "backend '{}' produced {} channels, expected {FEATURE_DIM}",
            backend.id(),
            maps.channels
        )));
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_of_hand_built_stack() {
        let stack = FeatureMapStack::from_channel_maps(
            2,
            2,
            &[vec![1.0, 2.0, 3.0, 4.0], vec![0.0, 0.0, 0.0, 8.0]],
        )
        .unwrap();
        assert_eq!(stack.global_average_pool(), vec![2.5, 2.0]);
        assert_eq!(stack.channel(1), vec![0.0, 0.0, 0.0, 8.0]);
        assert_eq!(stack.at(1, 0, 0), 3.0);
    }

    #[test]
    fn unit_spatial_stack_pools_to_itself() {
        let values: Vec<f32> = (0..16).map(|i| i as f32 * 0.37 - 2.0).collect();
        let stack = FeatureMapStack::new(1, 1, 16, values.clone()).unwrap();
        assert_eq!(stack.global_average_pool(), values);
    }

    #[test]
    fn feature_vector_checks_length() {
        assert!(FeatureVector::new(vec![0.0; 10], ActivityLabel::Walk, "x").is_err());
        let mut v = vec![0.0; FEATURE_DIM];
        v[3] = f32::NAN;
        assert!(FeatureVector::new(v, ActivityLabel::Walk, "x").is_err());
        assert!(FeatureVector::new(vec![0.0; FEATURE_DIM], ActivityLabel::Walk, "x").is_ok());
    }
}
