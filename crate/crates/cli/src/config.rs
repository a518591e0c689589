//! Pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use har_core::embed::StubConfig;
use har_core::eval::SplitSpec;
use har_core::raster::{ImageEncoding, RasterStyle, DEFAULT_SIZE};
use har_core::signal::{DEFAULT_STEP_S, DEFAULT_WINDOW_S};
use har_core::softmax::TrainConfig;
use har_core::svm::{SmoOptions, SvmGrid};
use har_core::synth::SynthConfig;
use har_core::xai::TsneConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
    pub dataset: DatasetSection,
    /// When present and no manifest is given, `synth` generates the dataset.
    pub synth: Option<SynthSection>,
    pub filter: FilterSection,
    pub window: WindowSection,
    pub raster: RasterSection,
    pub backend: BackendSection,
    pub classifier: ClassifierChoice,
    pub svm: SvmSection,
    pub softmax: SoftmaxSection,
    pub split: SplitSection,
    pub cam: CamSection,
    pub tsne: TsneSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("har-out"),
            jobs: 1,
            dataset: DatasetSection::default(),
            synth: None,
            filter: FilterSection::default(),
            window: WindowSection::default(),
            raster: RasterSection::default(),
            backend: BackendSection::default(),
            classifier: ClassifierChoice::Both,
            svm: SvmSection::default(),
            softmax: SoftmaxSection::default(),
            split: SplitSection::default(),
            cam: CamSection::default(),
            tsne: TsneSection::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub records_per_class: usize,
    pub duration_s: f64,
    pub fs: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            records_per_class: d.records_per_class,
            duration_s: d.duration_s,
            fs: d.fs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    /// Filter records flagged `needs_lowpass`; when false nothing is filtered.
    pub enabled: bool,
    pub cutoff_hz: f64,
    pub order: usize,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            enabled: true,
            cutoff_hz: 15.0,
            order: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSection {
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for WindowSection {
    fn default() -> Self {
        Self {
            window_s: DEFAULT_WINDOW_S,
            step_s: DEFAULT_STEP_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterSection {
    pub width: usize,
    pub height: usize,
    /// `png` (lossless, default) or `jpeg`.
    pub encoding: String,
    #[serde(flatten)]
    pub style: RasterStyle,
}

impl Default for RasterSection {
    fn default() -> Self {
        Self {
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
            encoding: "png".into(),
            style: RasterStyle::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Stub,
    Precomputed,
    Onnx,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "stub" => Ok(BackendKind::Stub),
            "precomputed" => Ok(BackendKind::Precomputed),
            "onnx" => Ok(BackendKind::Onnx),
            other => Err(format!("unknown backend '{other}' (expected stub, precomputed or onnx)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubSection {
    pub grid: usize,
    pub patch: usize,
}

impl Default for StubSection {
    fn default() -> Self {
        let d = StubConfig::default();
        Self {
            grid: d.grid,
            patch: d.patch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecomputedSection {
    /// Feature file (`.bin` or `.csv`) keyed by image id.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnnxSection {
    pub model: PathBuf,
    pub pooled_output: String,
    #[serde(default)]
    pub maps_output: Option<String>,
    #[serde(default)]
    pub input_width: Option<usize>,
    #[serde(default)]
    pub input_height: Option<usize>,
    /// `nchw` or `nhwc`.
    #[serde(default)]
    pub layout: Option<String>,
    #[serde(default)]
    pub scale: Option<f32>,
    #[serde(default)]
    pub offset: Option<f32>,
}

/// `kind` selects exactly one backend; the matching sub-table holds its
/// settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub stub: StubSection,
    pub precomputed: Option<PrecomputedSection>,
    pub onnx: Option<OnnxSection>,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Stub,
            stub: StubSection::default(),
            precomputed: None,
            onnx: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierChoice {
    Svm,
    Softmax,
    Both,
}

impl ClassifierChoice {
    pub fn svm(self) -> bool {
        matches!(self, ClassifierChoice::Svm | ClassifierChoice::Both)
    }

    pub fn softmax(self) -> bool {
        matches!(self, ClassifierChoice::Softmax | ClassifierChoice::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvmMode {
    /// Outer folds estimate accuracy, inner folds pick (C, γ).
    NestedCv,
    /// (C, γ) picked on the validation part, accuracy on the test part.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub mode: SvmMode,
    pub outer_k: usize,
    pub inner_k: usize,
    pub standardize: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub c: Vec<f64>,
    pub gamma: Vec<har_core::svm::GammaSpec>,
}

impl Default for SvmSection {
    fn default() -> Self {
        let grid = SvmGrid::default();
        let smo = SmoOptions::default();
        Self {
            mode: SvmMode::NestedCv,
            outer_k: 5,
            inner_k: 3,
            standardize: true,
            tol: smo.tol,
            max_iter: smo.max_iter,
            c: grid.c,
            gamma: grid.gamma,
        }
    }
}

impl SvmSection {
    pub fn grid(&self) -> SvmGrid {
        SvmGrid {
            c: self.c.clone(),
            gamma: self.gamma.clone(),
        }
    }

    pub fn smo(&self) -> SmoOptions {
        SmoOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub standardize: bool,
}

impl Default for SoftmaxSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            steps: d.steps,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            standardize: d.standardize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub stratified: bool,
    pub group_by_record: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitSpec::default();
        Self {
            train: d.train,
            val: d.val,
            test: d.test,
            stratified: d.stratified,
            group_by_record: d.group_by_record,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CamSection {
    pub enabled: bool,
    /// Individual overlays written per class, in test-split order.
    pub examples_per_class: usize,
}

impl Default for CamSection {
    fn default() -> Self {
        Self {
            enabled: true,
            examples_per_class: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneSection {
    pub enabled: bool,
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for TsneSection {
    fn default() -> Self {
        let d = TsneConfig::default();
        Self {
            enabled: true,
            perplexity: d.perplexity,
            iterations: d.iterations,
            learning_rate: d.learning_rate,
        }
    }
}

impl PipelineConfig {
    /// Parses TOML and resolves relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        if let Some(m) = &mut self.dataset.manifest {
            fix(m);
        }
        if let Some(p) = &mut self.backend.precomputed {
            fix(&mut p.path);
        }
        if let Some(o) = &mut self.backend.onnx {
            fix(&mut o.model);
        }
    }

    pub fn image_encoding(&self) -> Result<ImageEncoding, CliError> {
        self.raster.encoding.parse().map_err(|e: har_core::HarError| CliError::Config(e.to_string()))
    }

    /// Checks value ranges and the selected backend's settings. File
    /// existence is checked by the stage that reads each file.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.jobs == 0 {
            return bad("jobs must be at least 1");
        }
        if self.dataset.manifest.is_none() && self.synth.is_none() {
            return bad("either dataset.manifest or a [synth] section is required");
        }
        if !(self.filter.cutoff_hz > 0.0) || self.filter.order == 0 {
            return bad("filter cutoff_hz and order must be positive");
        }
        if !(self.window.window_s > 0.0 && self.window.step_s > 0.0) {
            return bad("window_s and step_s must be positive");
        }
        if self.raster.width == 0 || self.raster.height == 0 {
            return bad("raster width and height must be positive");
        }
        self.raster.style.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.image_encoding()?;
        match self.backend.kind {
            BackendKind::Stub => {
                if self.backend.stub.grid == 0 || self.backend.stub.patch == 0 {
                    return bad("backend.stub grid and patch must be positive");
                }
            }
            BackendKind::Precomputed if self.backend.precomputed.is_none() => {
                return bad("backend kind 'precomputed' needs a [backend.precomputed] table");
            }
            BackendKind::Onnx if self.backend.onnx.is_none() => {
                return bad("backend kind 'onnx' needs a [backend.onnx] table");
            }
            BackendKind::Onnx if !cfg!(feature = "onnx") => {
                return bad("this build has no ONNX support (rebuild with --features onnx)");
            }
            _ => {}
        }
        if self.svm.outer_k < 2 || self.svm.inner_k < 2 {
            return bad("svm outer_k and inner_k must be at least 2");
        }
        self.svm.grid().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.softmax_config(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.split_spec(0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.tsne.perplexity > 0.0) || self.tsne.iterations == 0 {
            return bad("tsne perplexity and iterations must be positive");
        }
        if let Some(s) = &self.synth {
            self.synth_config(s, 0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn synth_config(&self, s: &SynthSection, seed: u64) -> SynthConfig {
        SynthConfig {
            records_per_class: s.records_per_class,
            duration_s: s.duration_s,
            fs: s.fs,
            seed,
        }
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            seed,
            stratified: self.split.stratified,
            group_by_record: self.split.group_by_record,
        }
    }

    pub fn softmax_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            steps: self.softmax.steps,
            learning_rate: self.softmax.learning_rate,
            batch_size: self.softmax.batch_size,
            seed,
            standardize: self.softmax.standardize,
        }
    }

    pub fn tsne_config(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity: self.tsne.perplexity,
            iterations: self.tsne.iterations,
            learning_rate: self.tsne.learning_rate,
            seed,
            ..TsneConfig::default()
        }
    }

    /// Whether the train stage fits a softmax head (also needed for CAM).
    pub fn needs_softmax(&self) -> bool {
        self.classifier.softmax() || self.cam.enabled
    }
}
