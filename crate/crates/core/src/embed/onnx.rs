use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{EmbeddingBackend, FeatureMapStack, FEATURE_DIM};
use crate::error::{HarError, Result};
use crate::raster::RasterImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorLayout {
    Nchw,
    Nhwc,
}

/// Adapter settings for a pretrained network stored as ONNX.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnnxConfig {
    pub model: PathBuf,
    /// Node whose output is the pooled 2048-d vector.
    pub pooled_output: String,
    /// Node whose output is the pre-pooling feature-map stack, if CAM is wanted.
    #[serde(default)]
    pub maps_output: Option<String>,
    #[serde(default = "default_size")]
    pub input_width: usize,
    #[serde(default = "default_size")]
    pub input_height: usize,
    #[serde(default = "default_layout")]
    pub layout: TensorLayout,
    /// Pixel p in [0, 255] is fed as `p / 255 * scale + offset`. The defaults
    /// map to [-1, 1], the Inception-v3 convention.
    #[serde(default = "default_scale")]
    pub scale: f32,
    #[serde(default = "default_offset")]
    pub offset: f32,
}

fn default_size() -> usize {
    299
}
fn default_layout() -> TensorLayout {
    TensorLayout::Nchw
}
fn default_scale() -> f32 {
    2.0
}
fn default_offset() -> f32 {
    -1.0
}

type Plan = Arc<TypedRunnableModel>;

pub struct OnnxBackend {
    id: String,
    config: OnnxConfig,
    plan: Plan,
    map_shape: Option<(usize, usize)>,
}

fn backend_err(e: impl std::fmt::Display) -> HarError {
    HarError::Backend(e.to_string())
}

impl OnnxBackend {
    pub fn load(config: OnnxConfig) -> Result<Self> {
        let shape = match config.layout {
            TensorLayout::Nchw => [1, 3, config.input_height, config.input_width],
            TensorLayout::Nhwc => [1, config.input_height, config.input_width, 3],
        };
        let mut outputs = vec![config.pooled_output.clone()];
        outputs.extend(config.maps_output.clone());
        let model = tract_onnx::onnx()
            .model_for_path(&config.model)
            .map_err(|e| HarError::Backend(format!("loading {}: {e}", config.model.display())))?
            .with_input_fact(0, f32::fact(shape).into())
            .map_err(backend_err)?
            .with_outputs_by_name(&outputs)
            .map_err(backend_err)?
            .into_optimized()
            .map_err(backend_err)?;
        let plan = model.into_runnable().map_err(backend_err)?;
        let mut backend = Self {
            id: format!("onnx:{}", config.model.display()),
            config,
            plan,
            map_shape: None,
        };
        if backend.config.maps_output.is_some() {
            let probe = RasterImage::filled(backend.config.input_width, backend.config.input_height, 1, 255);
            let maps = backend.feature_maps(&probe, "probe")?;
            backend.map_shape = Some((maps.height, maps.width));
        }
        Ok(backend)
    }

    fn input_tensor(&self, image: &RasterImage) -> Result<Tensor> {
        let (w, h) = (self.config.input_width, self.config.input_height);
        if image.width != w || image.height != h {
            return Err(HarError::config(format!(
                "model expects {w}×{h} images, got {}×{}",
                image.width, image.height
            )));
        }
        let rgb = image.to_rgb();
        let px = |r: usize, c: usize, ch: usize| {
            rgb.pixels[(r * w + c) * 3 + ch] as f32 / 255.0 * self.config.scale + self.config.offset
        };
        let data: Vec<f32> = match self.config.layout {
            TensorLayout::Nchw => (0..3)
                .flat_map(|ch| (0..h).flat_map(move |r| (0..w).map(move |c| (r, c, ch))))
                .map(|(r, c, ch)| px(r, c, ch))
                .collect(),
            TensorLayout::Nhwc => (0..h)
                .flat_map(|r| (0..w).flat_map(move |c| (0..3).map(move |ch| (r, c, ch))))
                .map(|(r, c, ch)| px(r, c, ch))
                .collect(),
        };
        let shape: &[usize] = match self.config.layout {
            TensorLayout::Nchw => &[1, 3, h, w],
            TensorLayout::Nhwc => &[1, h, w, 3],
        };
        Tensor::from_shape(shape, &data).map_err(backend_err)
    }

    fn run(&self, image: &RasterImage) -> Result<TVec<TValue>> {
        let input = self.input_tensor(image)?;
        self.plan.run(tvec!(input.into())).map_err(backend_err)
    }
}

impl EmbeddingBackend for OnnxBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn map_shape(&self) -> Option<(usize, usize)> {
        self.map_shape
    }

    fn embed_values(&self, image: &RasterImage, _image_id: &str) -> Result<Vec<f32>> {
        let out = self.run(image)?;
        let view = out[0].to_plain_array_view::<f32>().map_err(backend_err)?;
        let values: Vec<f32> = view.iter().copied().collect();
        if values.len() != FEATURE_DIM {
            return Err(HarError::Backend(format!(
                "pooled output '{}' has {} values, expected {FEATURE_DIM}",
                self.config.pooled_output,
                values.len()
            )));
        }
        Ok(values)
    }

    fn feature_maps(&self, image: &RasterImage, _image_id: &str) -> Result<FeatureMapStack> {
        let name = self.config.maps_output.as_ref().ok_or_else(|| {
            HarError::Backend("no feature-map output configured for this model".into())
        })?;
        let out = self.run(image)?;
        let view = out[1].to_plain_array_view::<f32>().map_err(backend_err)?;
        let shape = view.shape().to_vec();
        if shape.len() != 4 || shape[0] != 1 {
            return Err(HarError::Backend(format!("output '{name}' has shape {shape:?}, expected rank 4")));
        }
        let (h, w, c) = match self.config.layout {
            TensorLayout::Nchw => (shape[2], shape[3], shape[1]),
            TensorLayout::Nhwc => (shape[1], shape[2], shape[3]),
        };
        let mut values = vec![0.0f32; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for k in 0..c {
                    values[(y * w + x) * c + k] = match self.config.layout {
                        TensorLayout::Nchw => view[[0, k, y, x]],
                        TensorLayout::Nhwc => view[[0, y, x, k]],
                    };
                }
            }
        }
        FeatureMapStack::new(h, w, c, values)
    }
}
