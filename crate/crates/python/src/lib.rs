//! Python module `ppg_har`: the signal, imaging, classification and
//! explanation steps of the pipeline as plain functions and a few classes.
//!
//! Labels cross the boundary as strings (`walk`, `run`, `bike_low`,
//! `bike_high`); images as row lists of gray levels.

use std::path::PathBuf;

use har_core::embed::{EmbeddingBackend, FeatureMapStack, StubBackend, StubConfig};
use har_core::eval::{split_dataset, SplitItem, SplitSpec};
use har_core::filter::ButterworthLowpass;
use har_core::raster::{rasterize as raster_window, RasterImage, RasterStyle};
use har_core::signal::{samples_for, window_count};
use har_core::softmax::{train_softmax, SoftmaxHead as CoreHead, TrainConfig};
use har_core::svm::{fit_with_spec, nested_cv as core_nested_cv, CvConfig, GammaSpec, SmoOptions, SvmClassifier as CoreSvm};
use har_core::xai::{compute_cam_raw, normalize_map, tsne as core_tsne, TsneConfig};
use har_core::{ActivityLabel, HarError};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: HarError) -> PyErr {
    match e {
        HarError::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_labels(labels: &[String]) -> PyResult<Vec<ActivityLabel>> {
    labels
        .iter()
        .map(|s| s.parse::<ActivityLabel>().map_err(py_err))
        .collect()
}

fn gray_image(rows: &[Vec<u8>]) -> PyResult<RasterImage> {
    let height = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err("image rows differ in length"));
    }
    RasterImage::from_pixels(width, height, 1, rows.concat()).map_err(py_err)
}

fn gamma_spec(gamma: Option<f64>) -> PyResult<GammaSpec> {
    match gamma {
        None => Ok(GammaSpec::Scale),
        Some(g) if g > 0.0 && g.is_finite() => Ok(GammaSpec::Value(g)),
        Some(g) => Err(PyValueError::new_err(format!("gamma must be positive, got {g}"))),
    }
}

/// Zero-phase Butterworth low-pass of a sampled signal.
#[pyfunction]
#[pyo3(signature = (samples, fs, cutoff_hz = 15.0, order = 4))]
fn lowpass(samples: Vec<f64>, fs: f64, cutoff_hz: f64, order: usize) -> PyResult<Vec<f64>> {
    ButterworthLowpass::design(cutoff_hz, fs, order)
        .and_then(|f| f.filtfilt(&samples))
        .map_err(py_err)
}

/// Overlapping rectangular windows; a short tail is dropped.
#[pyfunction]
#[pyo3(signature = (samples, fs, window_s = 8.0, step_s = 2.0))]
fn segment(samples: Vec<f64>, fs: f64, window_s: f64, step_s: f64) -> PyResult<Vec<Vec<f64>>> {
    let len = samples_for(window_s, fs).map_err(py_err)?;
    let step = samples_for(step_s, fs).map_err(py_err)?;
    Ok((0..window_count(samples.len(), len, step))
        .map(|k| samples[k * step..k * step + len].to_vec())
        .collect())
}

/// Plots a window as a black line on white, returned as rows of gray levels.
#[pyfunction]
#[pyo3(signature = (samples, width = 299, height = 299, line_width = 1, margin = 0.05))]
fn rasterize(samples: Vec<f64>, width: usize, height: usize, line_width: usize, margin: f64) -> PyResult<Vec<Vec<u8>>> {
    let style = RasterStyle {
        line_width,
        margin,
        ..RasterStyle::default()
    };
    let img = raster_window(&samples, &style, width, height).map_err(py_err)?;
    Ok(img.gray_values().chunks(width).map(<[u8]>::to_vec).collect())
}

/// Indices of the (train, validation, test) parts of a stratified split.
#[pyfunction]
#[pyo3(signature = (labels, seed = 0, train = 0.8, val = 0.1, test = 0.1))]
fn split(labels: Vec<String>, seed: u64, train: f64, val: f64, test: f64) -> PyResult<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let items: Vec<SplitItem> = parse_labels(&labels)?
        .into_iter()
        .enumerate()
        .map(|(i, label)| SplitItem {
            id: i.to_string(),
            label,
            group: i.to_string(),
        })
        .collect();
    let spec = SplitSpec {
        train,
        val,
        test,
        seed,
        ..SplitSpec::default()
    };
    let s = split_dataset(&items, &spec).map_err(py_err)?;
    Ok((s.train, s.val, s.test))
}

/// Min–max normalised class activation map from `height × width × channels`
/// feature maps and one class's weight row.
#[pyfunction]
fn class_activation_map(maps: Vec<Vec<Vec<f64>>>, weights: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let height = maps.len();
    let width = maps.first().map_or(0, Vec::len);
    let channels = weights.len();
    let mut values = Vec::with_capacity(height * width * channels);
    for row in &maps {
        if row.len() != width {
            return Err(PyValueError::new_err("feature map rows differ in length"));
        }
        for cell in row {
            if cell.len() != channels {
                return Err(PyValueError::new_err("channel count differs from weight length"));
            }
            values.extend(cell.iter().map(|&v| v as f32));
        }
    }
    let stack = FeatureMapStack::new(height, width, channels, values).map_err(py_err)?;
    let raw = compute_cam_raw(&stack, &weights).map_err(py_err)?;
    Ok(normalize_map(&raw).chunks(width).map(<[f64]>::to_vec).collect())
}

/// Exact t-SNE to two dimensions. Returns the points and the final KL.
#[pyfunction]
#[pyo3(signature = (x, perplexity = 30.0, iterations = 1000, seed = 0))]
fn tsne(x: Vec<Vec<f64>>, perplexity: f64, iterations: usize, seed: u64) -> PyResult<(Vec<[f64; 2]>, f64)> {
    let cfg = TsneConfig {
        perplexity,
        iterations,
        seed,
        ..TsneConfig::default()
    };
    let out = core_tsne(&x, &cfg).map_err(py_err)?;
    Ok((out.points, out.kl))
}

/// Nested cross-validated RBF-SVM accuracy: (mean, per-fold accuracies).
#[pyfunction]
#[pyo3(signature = (x, labels, outer_k = 5, inner_k = 3, seed = 0))]
fn nested_cv(x: Vec<Vec<f64>>, labels: Vec<String>, outer_k: usize, inner_k: usize, seed: u64) -> PyResult<(f64, Vec<f64>)> {
    let y = parse_labels(&labels)?;
    let ids: Vec<String> = (0..x.len()).map(|i| i.to_string()).collect();
    let cfg = CvConfig {
        outer_k,
        inner_k,
        seed,
        ..CvConfig::default()
    };
    let out = core_nested_cv(&x, &y, &ids, &cfg).map_err(py_err)?;
    Ok((out.report.mean_accuracy, out.report.folds.iter().map(|f| f.accuracy).collect()))
}

/// Seeded random-projection image embedder (2048-d).
#[pyclass(name = "StubEmbedder")]
struct PyStubEmbedder {
    inner: StubBackend,
}

#[pymethods]
impl PyStubEmbedder {
    #[new]
    #[pyo3(signature = (seed = 0, grid = 8, patch = 8))]
    fn new(seed: u64, grid: usize, patch: usize) -> PyResult<Self> {
        let inner = StubBackend::new(StubConfig { seed, grid, patch }).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn embed(&self, image: Vec<Vec<u8>>) -> PyResult<Vec<f32>> {
        self.inner.embed_values(&gray_image(&image)?, "").map_err(py_err)
    }

    /// Pre-pooling maps as `height × width × 2048` nested lists.
    fn feature_maps(&self, image: Vec<Vec<u8>>) -> PyResult<Vec<Vec<Vec<f32>>>> {
        let maps = self.inner.feature_maps(&gray_image(&image)?, "").map_err(py_err)?;
        Ok(maps
            .values
            .chunks(maps.channels * maps.width)
            .map(|row| row.chunks(maps.channels).map(<[f32]>::to_vec).collect())
            .collect())
    }
}

/// One-vs-one RBF SVM over (optionally standardised) feature vectors.
#[pyclass(name = "SvmClassifier")]
struct PySvm {
    inner: CoreSvm,
    gamma: f64,
}

#[pymethods]
impl PySvm {
    /// `gamma=None` uses the "scale" heuristic on the training features.
    #[staticmethod]
    #[pyo3(signature = (x, labels, c = 1.0, gamma = None, standardize = true, tol = 1e-3))]
    fn fit(x: Vec<Vec<f64>>, labels: Vec<String>, c: f64, gamma: Option<f64>, standardize: bool, tol: f64) -> PyResult<Self> {
        let y = parse_labels(&labels)?;
        let opts = SmoOptions {
            tol,
            ..SmoOptions::default()
        };
        let (inner, gamma) = fit_with_spec(&x, &y, c, gamma_spec(gamma)?, standardize, &opts).map_err(py_err)?;
        Ok(Self { inner, gamma })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> Vec<String> {
        x.iter().map(|row| self.inner.predict(row).0.to_string()).collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreSvm::load(&path).map_err(py_err)?,
            gamma: f64::NAN,
        })
    }
}

/// Linear softmax head over pooled features.
#[pyclass(name = "SoftmaxHead")]
struct PySoftmax {
    inner: CoreHead,
    history: Vec<(usize, f64)>,
}

#[pymethods]
impl PySoftmax {
    #[staticmethod]
    #[pyo3(signature = (x, labels, steps = 10000, learning_rate = 0.01, batch_size = 100, seed = 0, standardize = true))]
    fn train(
        x: Vec<Vec<f64>>,
        labels: Vec<String>,
        steps: usize,
        learning_rate: f64,
        batch_size: usize,
        seed: u64,
        standardize: bool,
    ) -> PyResult<Self> {
        let y = parse_labels(&labels)?;
        let cfg = TrainConfig {
            steps,
            learning_rate,
            batch_size,
            seed,
            standardize,
        };
        let run = train_softmax(&x, &y, &cfg).map_err(py_err)?;
        Ok(Self {
            inner: run.head,
            history: run.history.iter().map(|p| (p.step, p.loss)).collect(),
        })
    }

    /// `(step, mean batch loss)` checkpoints from training.
    #[getter]
    fn loss_history(&self) -> Vec<(usize, f64)> {
        self.history.clone()
    }

    fn weights(&self, label: String) -> PyResult<Vec<f64>> {
        let class = label.parse::<ActivityLabel>().map_err(py_err)?;
        self.inner
            .class_weights(class)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("no weights for {class}")))
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.predict_proba(&x).map_err(py_err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<String>> {
        x.iter()
            .map(|row| self.inner.predict(row).map(|l| l.to_string()).map_err(py_err))
            .collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreHead::load(&path).map_err(py_err)?,
            history: Vec::new(),
        })
    }
}

#[pymodule]
fn ppg_har(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LABELS", ActivityLabel::ALL.iter().map(|l| l.to_string()).collect::<Vec<_>>())?;
    m.add_function(wrap_pyfunction!(lowpass, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(class_activation_map, m)?)?;
    m.add_function(wrap_pyfunction!(tsne, m)?)?;
    m.add_function(wrap_pyfunction!(nested_cv, m)?)?;
    m.add_class::<PyStubEmbedder>()?;
    m.add_class::<PySvm>()?;
    m.add_class::<PySoftmax>()?;
    Ok(())
}
