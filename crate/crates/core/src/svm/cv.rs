//! Grid search over (C, γ) under nested cross-validation.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{cross_squared_distances, squared_distances, Kernel};
use super::model::{train_multiclass_with_gram, MulticlassSvm, SvmClassifier};
use super::scale::{overall_variance, Standardizer};
use super::smo::SmoOptions;
use crate::error::{HarError, Result};
use crate::eval::ConfusionMatrix;
use crate::label::ActivityLabel;

/// A γ grid entry: a fixed value, or `"scale"`, meaning 1 / (d · Var(X)) on
/// the (standardised) training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRaw", into = "GammaRaw")]
pub enum GammaSpec {
    Scale,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GammaRaw {
    Num(f64),
    Name(String),
}

impl TryFrom<GammaRaw> for GammaSpec {
    type Error = String;

    fn try_from(raw: GammaRaw) -> Result<Self, String> {
        match raw {
            GammaRaw::Num(v) if v > 0.0 && v.is_finite() => Ok(GammaSpec::Value(v)),
            GammaRaw::Num(v) => Err(format!("gamma must be positive, got {v}")),
            GammaRaw::Name(s) if s == "scale" => Ok(GammaSpec::Scale),
            GammaRaw::Name(s) => Err(format!("unknown gamma '{s}' (expected a number or \"scale\")")),
        }
    }
}

impl From<GammaSpec> for GammaRaw {
    fn from(g: GammaSpec) -> Self {
        match g {
            GammaSpec::Scale => GammaRaw::Name("scale".into()),
            GammaSpec::Value(v) => GammaRaw::Num(v),
        }
    }
}

impl GammaSpec {
    fn resolve(self, train: &[Vec<f64>]) -> f64 {
        match self {
            GammaSpec::Value(v) => v,
            GammaSpec::Scale => {
                let dim = train.first().map_or(1, Vec::len).max(1) as f64;
                let var = overall_variance(train);
                if var > 0.0 {
                    1.0 / (dim * var)
                } else {
                    1.0 / dim
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<GammaSpec>,
}

impl Default for SvmGrid {
    fn default() -> Self {
        Self {
            c: vec![0.1, 1.0, 10.0, 100.0],
            gamma: vec![
                GammaSpec::Scale,
                GammaSpec::Value(1e-4),
                GammaSpec::Value(1e-3),
                GammaSpec::Value(1e-2),
            ],
        }
    }
}

impl SvmGrid {
    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() || self.gamma.is_empty() {
            return Err(HarError::config("hyperparameter grid must not be empty"));
        }
        if self.c.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(HarError::config("grid C values must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub grid: SvmGrid,
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub smo: SmoOptions,
    pub standardize: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            grid: SvmGrid::default(),
            outer_k: 5,
            inner_k: 3,
            seed: 0,
            smo: SmoOptions::default(),
            standardize: true,
        }
    }
}

/// Validation accuracy of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub c: f64,
    pub gamma_index: usize,
    /// γ as resolved on the training split.
    pub gamma: f64,
    pub accuracy: f64,
}

impl GridScore {
    /// Highest accuracy; ties go to the smallest C, then the smallest γ.
    pub fn best(scores: &[GridScore]) -> Option<GridScore> {
        let mut ordered = scores.to_vec();
        ordered.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.gamma.total_cmp(&b.gamma)));
        let mut best: Option<GridScore> = None;
        for s in ordered {
            if best.is_none_or(|b| s.accuracy > b.accuracy) {
                best = Some(s);
            }
        }
        best
    }
}

struct PreparedSplit {
    train: Vec<Vec<f64>>,
    train_dist: Vec<f64>,
    eval_dist: Vec<f64>,
}

fn prepare(train: &[Vec<f64>], eval: &[Vec<f64>], standardize: bool) -> PreparedSplit {
    let (train, eval) = if standardize {
        let s = Standardizer::fit(train);
        (s.transform(train), s.transform(eval))
    } else {
        (train.to_vec(), eval.to_vec())
    };
    PreparedSplit {
        train_dist: squared_distances(&train),
        eval_dist: cross_squared_distances(&eval, &train),
        train,
    }
}

fn fit_and_predict(
    split: &PreparedSplit,
    y_train: &[ActivityLabel],
    c: f64,
    gamma: f64,
    smo: &SmoOptions,
) -> Result<(MulticlassSvm, Vec<ActivityLabel>)> {
    let kernel = Kernel::Rbf { gamma };
    kernel.validate()?;
    let gram: Vec<f64> = split.train_dist.iter().map(|d| (-gamma * d).exp()).collect();
    let model = train_multiclass_with_gram(&split.train, y_train, &gram, c, kernel, smo)?;
    let n = split.train.len();
    let preds = split
        .eval_dist
        .chunks_exact(n.max(1))
        .map(|row| {
            let krow: Vec<f64> = row.iter().map(|d| (-gamma * d).exp()).collect();
            model.predict_from_kernel_row(&krow).0
        })
        .collect();
    Ok((model, preds))
}

fn accuracy(truth: &[ActivityLabel], pred: &[ActivityLabel]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Trains an RBF one-vs-one SVM for every grid point on `train` and scores it
/// on `eval`. Scores come back in grid order (C outer, γ inner).
pub fn evaluate_grid(
    x_train: &[Vec<f64>],
    y_train: &[ActivityLabel],
    x_eval: &[Vec<f64>],
    y_eval: &[ActivityLabel],
    grid: &SvmGrid,
    standardize: bool,
    smo: &SmoOptions,
) -> Result<Vec<GridScore>> {
    grid.validate()?;
    let split = prepare(x_train, x_eval, standardize);
    let gammas: Vec<f64> = grid.gamma.iter().map(|g| g.resolve(&split.train)).collect();
    let mut scores = Vec::with_capacity(grid.c.len() * gammas.len());
    for &c in &grid.c {
        for (gi, &gamma) in gammas.iter().enumerate() {
            let (_, preds) = fit_and_predict(&split, y_train, c, gamma, smo)?;
            scores.push(GridScore {
                c,
                gamma_index: gi,
                gamma,
                accuracy: accuracy(y_eval, &preds),
            });
        }
    }
    Ok(scores)
}

/// Fits a classifier with γ given as a grid entry, resolving `"scale"` on the
/// (standardised) training data. Returns the classifier and the γ used.
pub fn fit_with_spec(
    x: &[Vec<f64>],
    y: &[ActivityLabel],
    c: f64,
    gamma: GammaSpec,
    standardize: bool,
    smo: &SmoOptions,
) -> Result<(SvmClassifier, f64)> {
    let resolved = if standardize {
        gamma.resolve(&Standardizer::fit(x).transform(x))
    } else {
        gamma.resolve(x)
    };
    let model = SvmClassifier::fit(x, y, c, Kernel::Rbf { gamma: resolved }, standardize, smo)?;
    Ok((model, resolved))
}

/// The (C, γ-grid index) chosen by most outer folds; ties go to the smallest
/// C, then the earliest γ entry.
pub fn consensus_choice(folds: &[FoldResult]) -> Option<(f64, usize)> {
    let mut tally: Vec<((f64, usize), usize)> = Vec::new();
    for f in folds {
        match tally.iter_mut().find(|(k, _)| k.0 == f.c && k.1 == f.gamma_index) {
            Some((_, n)) => *n += 1,
            None => tally.push(((f.c, f.gamma_index), 1)),
        }
    }
    tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.0 .0.total_cmp(&b.0 .0)).then(a.0 .1.cmp(&b.0 .1)));
    tally.first().map(|(k, _)| *k)
}

/// Assigns each item to one of `k` folds. Stratified (classes dealt
/// round-robin after a seeded shuffle) unless some class has fewer than `k`
/// members, in which case items are shuffled and dealt without regard to
/// class. Returns the fold of every item and whether stratification held.
pub fn fold_assignment(labels: &[ActivityLabel], k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
    let mut counts = [0usize; ActivityLabel::COUNT];
    for l in labels {
        counts[l.index()] += 1;
    }
    let stratified = counts.iter().all(|&c| c == 0 || c >= k);
    let mut folds = vec![0; labels.len()];
    if stratified {
        let mut dealt = 0;
        for class in ActivityLabel::ALL {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            members.shuffle(rng);
            for i in members {
                folds[i] = dealt % k;
                dealt += 1;
            }
        }
    } else {
        log::warn!("a class has fewer than {k} members; falling back to unstratified folds");
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.shuffle(rng);
        for (pos, i) in order.into_iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    (folds, stratified)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub c: f64,
    pub gamma_index: usize,
    pub gamma: f64,
    /// Mean inner-CV accuracy of the chosen grid point.
    pub inner_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub confusion: ConfusionMatrix,
    pub mean_accuracy: f64,
    pub outer_k: usize,
    pub inner_k: usize,
    pub seed: u64,
    pub stratified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPrediction {
    pub id: String,
    pub truth: ActivityLabel,
    pub predicted: ActivityLabel,
    pub fold: usize,
}

/// Which ids each outer fold tested on and which it used for model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTrace {
    pub fold: usize,
    pub test_ids: Vec<String>,
    pub selection_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCvOutcome {
    pub report: CvReport,
    /// Out-of-fold predictions in input order.
    pub predictions: Vec<CvPrediction>,
    pub trace: Vec<FoldTrace>,
}

fn pick<T: Clone>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

struct OuterFold {
    result: FoldResult,
    predictions: Vec<(usize, ActivityLabel)>,
    trace: FoldTrace,
}

/// Outer folds estimate accuracy; inside each, an inner k-fold CV over the
/// outer-training part chooses (C, γ), and the chosen model is retrained on
/// the whole outer-training part before it sees the outer test fold.
pub fn nested_cv(
    x: &[Vec<f64>],
    y: &[ActivityLabel],
    ids: &[String],
    cfg: &CvConfig,
) -> Result<NestedCvOutcome> {
    let n = x.len();
    if y.len() != n || ids.len() != n {
        return Err(HarError::config("features, labels and ids must have equal length"));
    }
    if cfg.outer_k < 2 || cfg.inner_k < 2 {
        return Err(HarError::config("outer_k and inner_k must be at least 2"));
    }
    if n < cfg.outer_k {
        return Err(HarError::data(format!("{n} items cannot fill {} folds", cfg.outer_k)));
    }
    cfg.grid.validate()?;
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarError::data("features contain non-finite values"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (outer, stratified) = fold_assignment(y, cfg.outer_k, &mut rng);
    let inner_seeds: Vec<u64> = (0..cfg.outer_k).map(|_| rng.next_u64()).collect();

    let folds: Vec<OuterFold> = (0..cfg.outer_k)
        .into_par_iter()
        .map(|f| -> Result<OuterFold> {
            let test_idx: Vec<usize> = (0..n).filter(|&i| outer[i] == f).collect();
            let train_idx: Vec<usize> = (0..n).filter(|&i| outer[i] != f).collect();
            let (xt, yt) = (pick(x, &train_idx), pick(y, &train_idx));

            let mut inner_rng = ChaCha8Rng::seed_from_u64(inner_seeds[f]);
            let (inner, _) = fold_assignment(&yt, cfg.inner_k, &mut inner_rng);
            let mut sums: Vec<f64> = vec![0.0; cfg.grid.c.len() * cfg.grid.gamma.len()];
            for g in 0..cfg.inner_k {
                let fit: Vec<usize> = (0..xt.len()).filter(|&i| inner[i] != g).collect();
                let val: Vec<usize> = (0..xt.len()).filter(|&i| inner[i] == g).collect();
                let scores = evaluate_grid(
                    &pick(&xt, &fit),
                    &pick(&yt, &fit),
                    &pick(&xt, &val),
                    &pick(&yt, &val),
                    &cfg.grid,
                    cfg.standardize,
                    &cfg.smo,
                )?;
                for (s, score) in sums.iter_mut().zip(&scores) {
                    *s += score.accuracy;
                }
            }

            let (xs, ys) = (pick(x, &test_idx), pick(y, &test_idx));
            let split = prepare(&xt, &xs, cfg.standardize);
            let n_gamma = cfg.grid.gamma.len();
            let candidates: Vec<GridScore> = sums
                .iter()
                .enumerate()
                .map(|(k, s)| GridScore {
                    c: cfg.grid.c[k / n_gamma],
                    gamma_index: k % n_gamma,
                    gamma: cfg.grid.gamma[k % n_gamma].resolve(&split.train),
                    accuracy: s / cfg.inner_k as f64,
                })
                .collect();
            let best = GridScore::best(&candidates).expect("grid is non-empty");
            let (_, preds) = fit_and_predict(&split, &yt, best.c, best.gamma, &cfg.smo)?;

            Ok(OuterFold {
                result: FoldResult {
                    fold: f,
                    test_size: test_idx.len(),
                    accuracy: accuracy(&ys, &preds),
                    c: best.c,
                    gamma_index: best.gamma_index,
                    gamma: best.gamma,
                    inner_accuracy: best.accuracy,
                },
                predictions: test_idx.iter().copied().zip(preds).collect(),
                trace: FoldTrace {
                    fold: f,
                    test_ids: pick(ids, &test_idx),
                    selection_ids: pick(ids, &train_idx),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut predicted = vec![ActivityLabel::Walk; n];
    let mut results = Vec::with_capacity(folds.len());
    let mut trace = Vec::with_capacity(folds.len());
    for fold in folds {
        for (i, p) in fold.predictions {
            predicted[i] = p;
        }
        results.push(fold.result);
        trace.push(fold.trace);
    }
    let pairs: Vec<(ActivityLabel, ActivityLabel)> = y.iter().copied().zip(predicted.iter().copied()).collect();
    let confusion = ConfusionMatrix::from_pairs(&pairs)?;
    let mean_accuracy = results.iter().map(|r| r.accuracy).sum::<f64>() / results.len() as f64;
    let predictions = (0..n)
        .map(|i| CvPrediction {
            id: ids[i].clone(),
            truth: y[i],
            predicted: predicted[i],
            fold: outer[i],
        })
        .collect();
    Ok(NestedCvOutcome {
        report: CvReport {
            folds: results,
            confusion,
            mean_accuracy,
            outer_k: cfg.outer_k,
            inner_k: cfg.inner_k,
            seed: cfg.seed,
            stratified,
        },
        predictions,
        trace,
    })
}
