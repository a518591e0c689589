use std::collections::HashMap;
use std::path::Path;

use super::{read_features, EmbeddingBackend, FeatureMapStack, FeatureVector};
use crate::error::{HarError, Result};
use crate::raster::RasterImage;

/// Serves features extracted elsewhere, looked up by image id.
#[derive(Debug, Clone)]
pub struct PrecomputedBackend {
    id: String,
    table: HashMap<String, Vec<f32>>,
}

impl PrecomputedBackend {
    pub fn from_vectors(id: impl Into<String>, vectors: &[FeatureVector]) -> Self {
        Self {
            id: id.into(),
            table: vectors
                .iter()
                .map(|v| (v.source.clone(), v.values.clone()))
                .collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let vectors = read_features(path).map_err(|e| match e {
            HarError::Io(io) => HarError::Backend(format!("cannot load {}: {io}", path.display())),
            other => other,
        })?;
        Ok(Self::from_vectors(format!("precomputed:{}", path.display()), &vectors))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingBackend for PrecomputedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn map_shape(&self) -> Option<(usize, usize)> {
        None
    }

    fn embed_values(&self, _image: &RasterImage, image_id: &str) -> Result<Vec<f32>> {
        self.table
            .get(image_id)
            .cloned()
            .ok_or_else(|| HarError::Backend(format!("no stored features for image '{image_id}'")))
    }

    fn feature_maps(&self, _image: &RasterImage, _image_id: &str) -> Result<FeatureMapStack> {
        Err(HarError::Backend(
            "precomputed features carry no spatial maps".into(),
        ))
    }
}
