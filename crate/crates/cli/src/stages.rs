//! One function per pipeline stage. Each stage clears its directory, writes
//! its outputs and finishes with an `outputs.manifest`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use har_core::embed::{
    self, read_features, write_features_binary, EmbeddingBackend, FeatureVector, PrecomputedBackend, StubBackend,
    StubConfig,
};
use har_core::eval::{emit_report, split_dataset, ConfusionMatrix, FoldSummary, ReportInput, SplitItem};
use har_core::filter::lowpass_filter;
use har_core::raster::{decode_image, encode_image, rasterize, RasterImage};
use har_core::signal::{format_record, parse_record, segment_windows, DatasetManifest, ManifestEntry};
use har_core::softmax::{train_softmax, SoftmaxHead};
use har_core::svm::{consensus_choice, evaluate_grid, fit_with_spec, nested_cv, CvConfig, GridScore};
use har_core::xai::{average_cam, compute_cam, render_overlay, tsne, CamMap};
use har_core::{synth, ActivityLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BackendKind, PipelineConfig, SvmMode};
use crate::error::{CliError, CliResult};
use crate::outputs::{derive_seed, require_stage, write_stage_manifest};

pub const SYNTH: &str = "synth";
pub const INGEST: &str = "ingest";
pub const WINDOWS: &str = "windows";
pub const IMAGES: &str = "images";
pub const FEATURES: &str = "features";
pub const MODELS: &str = "models";
pub const REPORT: &str = "report";
pub const CAM: &str = "cam";
pub const TSNE: &str = "tsne";

/// Stage directories in pipeline order.
pub const ALL_STAGES: [&str; 9] = [SYNTH, INGEST, WINDOWS, IMAGES, FEATURES, MODELS, REPORT, CAM, TSNE];

pub struct Context {
    pub cfg: PipelineConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowRow {
    pub id: String,
    pub record: String,
    pub subject: String,
    pub label: ActivityLabel,
    pub offset_s: f64,
    pub fs: f64,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRow {
    pub id: String,
    pub label: ActivityLabel,
    pub record: String,
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SplitRow {
    id: String,
    label: ActivityLabel,
    part: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub truth: ActivityLabel,
    pub predicted: ActivityLabel,
    pub fold: usize,
}

/// Evaluation results handed from `train` to `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub classifier: String,
    pub protocol: String,
    pub folds: Vec<FoldSummary>,
    pub predictions: Vec<PredictionRow>,
    pub metadata: Vec<(String, String)>,
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    require_file(path)?;
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<Result<Vec<T>, _>>()?)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    require_file(path)?;
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

impl Context {
    pub fn new(cfg: PipelineConfig) -> Self {
        Self { cfg }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.cfg.out.join(stage)
    }

    pub fn seed(&self, stage: &str) -> u64 {
        derive_seed(self.cfg.seed, stage)
    }

    fn fresh(&self, stage: &str) -> CliResult<PathBuf> {
        let dir = self.dir(stage);
        if dir.exists() {
            std::fs::remove_dir_all(&dir)?;
        }
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn finish(&self, stage: &str) -> CliResult<()> {
        write_stage_manifest(&self.dir(stage), stage)?;
        log::info!("stage {stage} done");
        Ok(())
    }

    fn input(&self, stage: &str) -> CliResult<PathBuf> {
        let dir = self.dir(stage);
        require_stage(&dir, stage)?;
        Ok(dir)
    }

    pub fn synth(&self) -> CliResult<()> {
        let section = self
            .cfg
            .synth
            .ok_or_else(|| CliError::Config("the synth command needs a [synth] section".into()))?;
        let dir = self.fresh(SYNTH)?;
        let path = synth::write_dataset(&self.cfg.synth_config(&section, self.seed(SYNTH)), &dir)?;
        log::info!("wrote synthetic dataset {}", path.display());
        self.finish(SYNTH)
    }

    fn dataset_manifest(&self) -> CliResult<PathBuf> {
        match &self.cfg.dataset.manifest {
            Some(p) => {
                require_file(p)?;
                Ok(p.clone())
            }
            None => Ok(self.input(SYNTH)?.join(synth::MANIFEST_FILE)),
        }
    }

    pub fn ingest(&self) -> CliResult<()> {
        let manifest_path = self.dataset_manifest()?;
        let manifest = DatasetManifest::load(&manifest_path)?;
        for e in &manifest.entries {
            require_file(&e.path)?;
        }
        let dir = self.fresh(INGEST)?;
        std::fs::create_dir_all(dir.join("records"))?;
        let filter = self.cfg.filter;
        let entries: Vec<ManifestEntry> = manifest
            .entries
            .par_iter()
            .map(|e| -> CliResult<ManifestEntry> {
                let mut record = DatasetManifest::read_record(e)?;
                if filter.enabled && e.needs_lowpass {
                    record = lowpass_filter(&record, filter.cutoff_hz, filter.order)?;
                }
                let rel = PathBuf::from("records").join(format!("{}.txt", record.id));
                std::fs::write(dir.join(&rel), format_record(&record.samples))?;
                Ok(ManifestEntry {
                    path: rel,
                    subject_id: e.subject_id.clone(),
                    activity: e.activity,
                    needs_lowpass: false,
                    fs: e.fs,
                })
            })
            .collect::<CliResult<_>>()?;
        let out = DatasetManifest { entries };
        std::fs::write(dir.join("manifest.toml"), out.to_toml()?)?;
        log::info!("ingested {} records", out.entries.len());
        self.finish(INGEST)
    }

    pub fn window(&self) -> CliResult<()> {
        let input = self.input(INGEST)?;
        let manifest = DatasetManifest::load(&input.join("manifest.toml"))?;
        let dir = self.fresh(WINDOWS)?;
        std::fs::create_dir_all(dir.join("data"))?;
        let w = self.cfg.window;
        let per_record: Vec<Vec<WindowRow>> = manifest
            .entries
            .par_iter()
            .map(|e| -> CliResult<Vec<WindowRow>> {
                let record = DatasetManifest::read_record(e)?;
                let mut rows = Vec::new();
                for win in segment_windows(&record, w.window_s, w.step_s)? {
                    let id = win.id();
                    let path = format!("data/{id}.txt");
                    std::fs::write(dir.join(&path), format_record(&win.samples))?;
                    rows.push(WindowRow {
                        id,
                        record: win.source_record.clone(),
                        subject: win.subject_id.clone(),
                        label: win.label,
                        offset_s: win.start_offset_s,
                        fs: win.fs,
                        path,
                    });
                }
                Ok(rows)
            })
            .collect::<CliResult<_>>()?;
        let rows: Vec<WindowRow> = per_record.into_iter().flatten().collect();
        write_csv(&dir.join("index.csv"), &rows)?;
        log::info!("wrote {} windows", rows.len());
        self.finish(WINDOWS)
    }

    pub fn rasterize(&self) -> CliResult<()> {
        let input = self.input(WINDOWS)?;
        let rows: Vec<WindowRow> = read_csv(&input.join("index.csv"))?;
        let encoding = self.cfg.image_encoding()?;
        let dir = self.fresh(IMAGES)?;
        for label in ActivityLabel::ALL {
            std::fs::create_dir_all(dir.join(label.as_str()))?;
        }
        let r = &self.cfg.raster;
        let images: Vec<ImageRow> = rows
            .par_iter()
            .map(|row| -> CliResult<ImageRow> {
                let src = input.join(&row.path);
                require_file(&src)?;
                let win = parse_record(&std::fs::read(&src)?, row.fs, &row.subject, row.label)?;
                let img = rasterize(&win.samples, &r.style, r.width, r.height)?;
                let path = format!("{}/{}.{}", row.label.as_str(), row.id, encoding.extension());
                std::fs::write(dir.join(&path), encode_image(&img, encoding)?)?;
                Ok(ImageRow {
                    id: row.id.clone(),
                    label: row.label,
                    record: row.record.clone(),
                    path,
                })
            })
            .collect::<CliResult<_>>()?;
        write_csv(&dir.join("index.csv"), &images)?;
        log::info!("rendered {} images", images.len());
        self.finish(IMAGES)
    }

    pub fn backend(&self) -> CliResult<Box<dyn EmbeddingBackend>> {
        let b = &self.cfg.backend;
        match b.kind {
            BackendKind::Stub => Ok(Box::new(StubBackend::new(StubConfig {
                seed: self.seed("embed"),
                grid: b.stub.grid,
                patch: b.stub.patch,
            })?)),
            BackendKind::Precomputed => {
                let section = b
                    .precomputed
                    .as_ref()
                    .ok_or_else(|| CliError::Config("missing [backend.precomputed]".into()))?;
                require_file(&section.path)?;
                Ok(Box::new(PrecomputedBackend::load(&section.path)?))
            }
            BackendKind::Onnx => self.onnx_backend(),
        }
    }

    #[cfg(feature = "onnx")]
    fn onnx_backend(&self) -> CliResult<Box<dyn EmbeddingBackend>> {
        use har_core::embed::{OnnxBackend, OnnxConfig, TensorLayout};
        let o = self
            .cfg
            .backend
            .onnx
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [backend.onnx]".into()))?;
        require_file(&o.model)?;
        let layout = match o.layout.as_deref() {
            None | Some("nchw") => TensorLayout::Nchw,
            Some("nhwc") => TensorLayout::Nhwc,
            Some(other) => return Err(CliError::Config(format!("unknown tensor layout '{other}'"))),
        };
        Ok(Box::new(OnnxBackend::load(OnnxConfig {
            model: o.model.clone(),
            pooled_output: o.pooled_output.clone(),
            maps_output: o.maps_output.clone(),
            input_width: o.input_width.unwrap_or(299),
            input_height: o.input_height.unwrap_or(299),
            layout,
            scale: o.scale.unwrap_or(2.0),
            offset: o.offset.unwrap_or(-1.0),
        })?))
    }

    #[cfg(not(feature = "onnx"))]
    fn onnx_backend(&self) -> CliResult<Box<dyn EmbeddingBackend>> {
        Err(CliError::Config("this build has no ONNX support (rebuild with --features onnx)".into()))
    }

    fn load_image(&self, images: &Path, row: &ImageRow) -> CliResult<RasterImage> {
        let path = images.join(&row.path);
        require_file(&path)?;
        Ok(decode_image(&std::fs::read(&path)?)?)
    }

    pub fn embed(&self) -> CliResult<()> {
        let images = self.input(IMAGES)?;
        let rows: Vec<ImageRow> = read_csv(&images.join("index.csv"))?;
        let backend = self.backend()?;
        let dir = self.fresh(FEATURES)?;
        let vectors: Vec<FeatureVector> = rows
            .par_iter()
            .map(|row| -> CliResult<FeatureVector> {
                let img = self.load_image(&images, row)?;
                Ok(embed::embed(&img, &row.id, row.label, backend.as_ref())?)
            })
            .collect::<CliResult<_>>()?;
        write_features_binary(&vectors, &dir.join("features.bin"))?;
        std::fs::write(
            dir.join("backend.txt"),
            format!("backend: {}\ncount: {}\n", backend.id(), vectors.len()),
        )?;
        log::info!("embedded {} images with {}", vectors.len(), backend.id());
        self.finish(FEATURES)
    }

    fn load_features(&self) -> CliResult<(Vec<FeatureVector>, Vec<Vec<f64>>)> {
        let dir = self.input(FEATURES)?;
        let vectors = read_features(&dir.join("features.bin"))?;
        if vectors.is_empty() {
            return Err(CliError::Runtime("feature file is empty".into()));
        }
        let x = vectors.iter().map(FeatureVector::to_f64).collect();
        Ok((vectors, x))
    }

    pub fn train(&self) -> CliResult<()> {
        let (vectors, x) = self.load_features()?;
        let images = self.input(IMAGES)?;
        let rows: Vec<ImageRow> = read_csv(&images.join("index.csv"))?;
        let record_of: HashMap<&str, &str> = rows.iter().map(|r| (r.id.as_str(), r.record.as_str())).collect();
        let y: Vec<ActivityLabel> = vectors.iter().map(|v| v.label).collect();
        let ids: Vec<String> = vectors.iter().map(|v| v.source.clone()).collect();
        let items: Vec<SplitItem> = vectors
            .iter()
            .map(|v| SplitItem {
                id: v.source.clone(),
                label: v.label,
                group: record_of.get(v.source.as_str()).copied().unwrap_or(&v.source).to_string(),
            })
            .collect();
        let split = split_dataset(&items, &self.cfg.split_spec(self.seed("split")))?;
        let dir = self.fresh(MODELS)?;

        let mut parts = vec![""; items.len()];
        for (name, idx) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
            for &i in idx {
                parts[i] = name;
            }
        }
        let split_rows: Vec<SplitRow> = items
            .iter()
            .zip(&parts)
            .map(|(it, p)| SplitRow {
                id: it.id.clone(),
                label: it.label,
                part: p.to_string(),
            })
            .collect();
        write_csv(&dir.join("split.csv"), &split_rows)?;

        let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<ActivityLabel>) {
            (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
        };

        if self.cfg.classifier.svm() {
            let s = &self.cfg.svm;
            let grid = s.grid();
            let smo = s.smo();
            let record = match s.mode {
                SvmMode::NestedCv => {
                    let cv = CvConfig {
                        grid: grid.clone(),
                        outer_k: s.outer_k,
                        inner_k: s.inner_k,
                        seed: self.seed("cv"),
                        smo,
                        standardize: s.standardize,
                    };
                    let outcome = nested_cv(&x, &y, &ids, &cv)?;
                    let (c, gi) = consensus_choice(&outcome.report.folds).expect("at least two folds");
                    let (model, gamma) = fit_with_spec(&x, &y, c, grid.gamma[gi], s.standardize, &smo)?;
                    model.save(&dir.join("svm.bin"))?;
                    write_json(&dir.join("svm_cv.json"), &outcome.report)?;
                    EvalRecord {
                        classifier: "svm".into(),
                        protocol: format!("nested cross-validation ({} outer x {} inner folds)", s.outer_k, s.inner_k),
                        folds: outcome
                            .report
                            .folds
                            .iter()
                            .map(|f| FoldSummary {
                                fold: f.fold,
                                test_size: f.test_size,
                                accuracy: f.accuracy,
                                c: Some(f.c),
                                gamma: Some(f.gamma),
                            })
                            .collect(),
                        predictions: outcome
                            .predictions
                            .iter()
                            .map(|p| PredictionRow {
                                id: p.id.clone(),
                                truth: p.truth,
                                predicted: p.predicted,
                                fold: p.fold,
                            })
                            .collect(),
                        metadata: vec![
                            ("stratified_folds".into(), outcome.report.stratified.to_string()),
                            ("final_c".into(), c.to_string()),
                            ("final_gamma".into(), gamma.to_string()),
                        ],
                    }
                }
                SvmMode::Split => {
                    let (xt, yt) = pick(&split.train);
                    let (xv, yv) = pick(&split.val);
                    let (xs, ys) = pick(&split.test);
                    let scores = evaluate_grid(&xt, &yt, &xv, &yv, &grid, s.standardize, &smo)?;
                    write_csv(&dir.join("svm_grid.csv"), &scores)?;
                    let best: GridScore = GridScore::best(&scores).expect("grid is non-empty");
                    let (model, gamma) =
                        fit_with_spec(&xt, &yt, best.c, grid.gamma[best.gamma_index], s.standardize, &smo)?;
                    model.save(&dir.join("svm.bin"))?;
                    let predictions: Vec<PredictionRow> = split
                        .test
                        .iter()
                        .zip(&xs)
                        .map(|(&i, xi)| PredictionRow {
                            id: ids[i].clone(),
                            truth: y[i],
                            predicted: model.predict(xi).0,
                            fold: 0,
                        })
                        .collect();
                    let hits = predictions.iter().filter(|p| p.truth == p.predicted).count();
                    EvalRecord {
                        classifier: "svm".into(),
                        protocol: "train/validation/test split".into(),
                        folds: vec![FoldSummary {
                            fold: 0,
                            test_size: ys.len(),
                            accuracy: hits as f64 / ys.len().max(1) as f64,
                            c: Some(best.c),
                            gamma: Some(gamma),
                        }],
                        predictions,
                        metadata: vec![("validation_accuracy".into(), format!("{:.6}", best.accuracy))],
                    }
                }
            };
            write_json(&dir.join("svm_eval.json"), &record)?;
        }

        if self.cfg.needs_softmax() {
            let (xt, yt) = pick(&split.train);
            let trained = train_softmax(&xt, &yt, &self.cfg.softmax_config(self.seed("softmax")))?;
            trained.head.save(&dir.join("softmax.bin"))?;
            let mut loss = String::from("step,loss\n");
            for p in &trained.history {
                loss.push_str(&format!("{},{}\n", p.step, p.loss));
            }
            std::fs::write(dir.join("softmax_loss.csv"), loss)?;
            let predictions: Vec<PredictionRow> = split
                .test
                .iter()
                .map(|&i| -> CliResult<PredictionRow> {
                    Ok(PredictionRow {
                        id: ids[i].clone(),
                        truth: y[i],
                        predicted: trained.head.predict(&x[i])?,
                        fold: 0,
                    })
                })
                .collect::<CliResult<_>>()?;
            let hits = predictions.iter().filter(|p| p.truth == p.predicted).count();
            let record = EvalRecord {
                classifier: "softmax".into(),
                protocol: "train/validation/test split".into(),
                folds: vec![FoldSummary {
                    fold: 0,
                    test_size: predictions.len(),
                    accuracy: hits as f64 / predictions.len().max(1) as f64,
                    c: None,
                    gamma: None,
                }],
                predictions,
                metadata: vec![
                    ("steps".into(), self.cfg.softmax.steps.to_string()),
                    (
                        "final_training_loss".into(),
                        format!("{:.6}", trained.history.last().map_or(f64::NAN, |p| p.loss)),
                    ),
                ],
            };
            write_json(&dir.join("softmax_eval.json"), &record)?;
        }
        self.finish(MODELS)
    }

    pub fn evaluate(&self) -> CliResult<()> {
        let models = self.input(MODELS)?;
        let features = std::fs::read_to_string(self.input(FEATURES)?.join("backend.txt"))?;
        let backend_id = features
            .lines()
            .find_map(|l| l.strip_prefix("backend: "))
            .unwrap_or("unknown")
            .to_string();
        let mut sources = Vec::new();
        if self.cfg.classifier.svm() {
            sources.push(models.join("svm_eval.json"));
        }
        if self.cfg.classifier.softmax() {
            sources.push(models.join("softmax_eval.json"));
        }
        let dir = self.fresh(REPORT)?;
        for (k, src) in sources.iter().enumerate() {
            let record: EvalRecord = read_json(src)?;
            let pairs: Vec<(ActivityLabel, ActivityLabel)> =
                record.predictions.iter().map(|p| (p.truth, p.predicted)).collect();
            let matrix = ConfusionMatrix::from_pairs(&pairs)?;
            let mut metadata = vec![
                ("classifier".to_string(), record.classifier.clone()),
                ("protocol".to_string(), record.protocol.clone()),
                ("backend".to_string(), backend_id.clone()),
                ("seed".to_string(), self.cfg.seed.to_string()),
            ];
            metadata.extend(record.metadata.iter().cloned());
            let title = format!("{} activity classification", record.classifier);
            let target = if k == 0 { dir.clone() } else { dir.join(&record.classifier) };
            emit_report(
                &ReportInput {
                    title: &title,
                    matrix: &matrix,
                    folds: &record.folds,
                    metadata: &metadata,
                },
                &target,
            )?;
            write_csv(&target.join("predictions.csv"), &record.predictions)?;
            log::info!("{} accuracy {:.4}", record.classifier, matrix.accuracy());
        }
        self.finish(REPORT)
    }

    pub fn cam(&self) -> CliResult<()> {
        let models = self.input(MODELS)?;
        let head_path = models.join("softmax.bin");
        require_file(&head_path)?;
        let head = SoftmaxHead::load(&head_path)?;
        let eval: EvalRecord = read_json(&models.join("softmax_eval.json"))?;
        let images = self.input(IMAGES)?;
        let rows: Vec<ImageRow> = read_csv(&images.join("index.csv"))?;
        let by_id: HashMap<&str, &ImageRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
        let backend = self.backend()?;
        let dir = self.fresh(CAM)?;
        let mut summary = String::from("class,images\n");

        for class in ActivityLabel::ALL {
            let chosen: Vec<&ImageRow> = eval
                .predictions
                .iter()
                .filter(|p| p.truth == class && p.predicted == class)
                .filter_map(|p| by_id.get(p.id.as_str()).copied())
                .collect();
            summary.push_str(&format!("{class},{}\n", chosen.len()));
            if chosen.is_empty() {
                log::warn!("no correctly classified test images for {class}; skipping its CAM");
                continue;
            }
            let class_dir = dir.join(class.as_str());
            std::fs::create_dir_all(&class_dir)?;
            let computed: Vec<(RasterImage, CamMap)> = chosen
                .par_iter()
                .map(|row| -> CliResult<(RasterImage, CamMap)> {
                    let img = self.load_image(&images, row)?;
                    let maps = embed::feature_maps(&img, &row.id, backend.as_ref())?;
                    Ok((img, compute_cam(&maps, &head, class)?))
                })
                .collect::<CliResult<_>>()?;
            for ((img, cam), row) in computed.iter().zip(&chosen).take(self.cfg.cam.examples_per_class) {
                let cam = cam.clone().with_upsampled(img.width, img.height);
                write_overlay(&class_dir, &row.id, img, &cam)?;
            }
            let cams: Vec<CamMap> = computed.iter().map(|(_, c)| c.clone()).collect();
            let avg = average_cam(&cams, class)?;
            write_overlay(&class_dir, "average", &mean_image(computed.iter().map(|(i, _)| i)), &avg)?;
        }
        std::fs::write(dir.join("summary.csv"), summary)?;
        self.finish(CAM)
    }

    pub fn tsne(&self) -> CliResult<()> {
        let (vectors, x) = self.load_features()?;
        let n = x.len();
        if self.cfg.tsne.perplexity >= n as f64 {
            return Err(CliError::Config(format!(
                "tsne perplexity {} must be below the number of images ({n})",
                self.cfg.tsne.perplexity
            )));
        }
        let out = tsne(&x, &self.cfg.tsne_config(self.seed(TSNE)))?;
        let dir = self.fresh(TSNE)?;
        let mut csv = String::from("id,label,x,y\n");
        for (v, p) in vectors.iter().zip(&out.points) {
            csv.push_str(&format!("{},{},{},{}\n", v.source, v.label, p[0], p[1]));
        }
        std::fs::write(dir.join("embedding.csv"), csv)?;
        let mut kl = String::from("iteration,kl\n");
        for (it, v) in &out.trace {
            kl.push_str(&format!("{it},{v}\n"));
        }
        std::fs::write(dir.join("kl.csv"), kl)?;
        log::info!("t-SNE final KL {:.4}", out.kl);
        self.finish(TSNE)
    }

    /// Every stage in order; `synth` only when no manifest is configured.
    pub fn run_all(&self) -> CliResult<()> {
        if self.cfg.dataset.manifest.is_none() {
            self.synth()?;
        }
        self.ingest()?;
        self.window()?;
        self.rasterize()?;
        self.embed()?;
        self.train()?;
        self.evaluate()?;
        if self.cfg.cam.enabled {
            self.cam()?;
        }
        if self.cfg.tsne.enabled {
            self.tsne()?;
        }
        Ok(())
    }

    /// Re-hashes the outputs of every stage present under the output root.
    pub fn verify(&self) -> CliResult<usize> {
        let mut checked = 0;
        let mut problems = Vec::new();
        for stage in ALL_STAGES {
            let dir = self.dir(stage);
            if !dir.join(crate::outputs::MANIFEST_NAME).is_file() {
                continue;
            }
            checked += 1;
            problems.extend(crate::outputs::verify_stage(&dir)?);
        }
        if checked == 0 {
            return Err(CliError::MissingInput(self.cfg.out.join("*/outputs.manifest")));
        }
        if !problems.is_empty() {
            return Err(CliError::Verify(problems.join("\n")));
        }
        Ok(checked)
    }
}

fn write_overlay(dir: &Path, name: &str, image: &RasterImage, cam: &CamMap) -> CliResult<()> {
    let overlay = render_overlay(image, cam)?;
    std::fs::write(
        dir.join(format!("{name}.png")),
        encode_image(&overlay, har_core::raster::ImageEncoding::Png)?,
    )?;
    let mut csv = String::new();
    for row in cam.values.chunks(cam.width) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    std::fs::write(dir.join(format!("{name}.csv")), csv)?;
    Ok(())
}

/// Pixel-wise mean of equally sized images, rounded, as RGB.
fn mean_image<'a>(images: impl Iterator<Item = &'a RasterImage>) -> RasterImage {
    let mut acc: Vec<u64> = Vec::new();
    let (mut w, mut h, mut n) = (0, 0, 0u64);
    for img in images {
        let rgb = img.to_rgb();
        if acc.is_empty() {
            (w, h) = (rgb.width, rgb.height);
            acc = vec![0; rgb.pixels.len()];
        }
        for (a, &p) in acc.iter_mut().zip(&rgb.pixels) {
            *a += p as u64;
        }
        n += 1;
    }
    let pixels = acc.iter().map(|&a| ((a + n / 2) / n.max(1)) as u8).collect();
    RasterImage::from_pixels(w, h, 3, pixels).expect("mean of equally sized images")
}
