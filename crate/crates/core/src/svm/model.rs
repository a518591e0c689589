//! Binary and one-vs-one SVM models.
//!
//! Serialized classifier layout (little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `HARS` | 4 bytes |
//! | version (1) | u8 |
//! | has scaler | u8 |
//! | scaler dim, then means, then scales | u32, f64 × dim × 2 (only if present) |
//! | class count, then class indices | u8, u8 × count |
//! | pair model count | u8 |
//!
//! followed by each pair model: positive class (u8), negative class (u8) and
//! a binary model:
//!
//! | field | type |
//! |---|---|
//! | version (1) | u8 |
//! | kernel kind (0 = rbf, 1 = linear), gamma (0 for linear) | u8, f64 |
//! | C, bias | f64, f64 |
//! | support-vector count, dimension | u32, u32 |
//! | per vector: coefficient α·y, then values | f64, f64 × dim |

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::kernel::{gram_matrix, Kernel};
use super::scale::Standardizer;
use super::smo::{solve_dual, DualSolution, SmoOptions};
use crate::error::{HarError, Result};
use crate::label::ActivityLabel;

pub const SVM_FILE_MAGIC: &[u8; 4] = b"HARS";
pub const SVM_FILE_VERSION: u8 = 1;
const BINARY_MODEL_VERSION: u8 = 1;

/// A trained two-class SVM. Only examples with α > 0 are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub bias: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// α_i·y_i per support vector.
    pub coefficients: Vec<f64>,
    /// Positions of the support vectors in the training set.
    pub sv_indices: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub max_violation: f64,
}

impl SvmModel {
    fn from_solution(rows: &[&[f64]], y: &[f64], sol: DualSolution, kernel: Kernel, c: f64) -> Self {
        let mut model = SvmModel {
            kernel,
            c,
            bias: sol.bias,
            support_vectors: Vec::new(),
            coefficients: Vec::new(),
            sv_indices: Vec::new(),
            objective: sol.objective,
            iterations: sol.iterations,
            max_violation: sol.max_violation,
        };
        for (i, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                model.support_vectors.push(rows[i].to_vec());
                model.coefficients.push(a * y[i]);
                model.sv_indices.push(i);
            }
        }
        model
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, coef)| coef * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value from kernel values against every training example.
    pub fn decision_from_row(&self, kernel_row: &[f64]) -> f64 {
        self.sv_indices
            .iter()
            .zip(&self.coefficients)
            .map(|(&i, coef)| coef * kernel_row[i])
            .sum::<f64>()
            + self.bias
    }

    /// +1 when the decision value is ≥ 0, −1 otherwise.
    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_u8(BINARY_MODEL_VERSION)?;
        match self.kernel {
            Kernel::Rbf { gamma } => {
                w.write_u8(0)?;
                w.write_f64::<LittleEndian>(gamma)?;
            }
            Kernel::Linear => {
                w.write_u8(1)?;
                w.write_f64::<LittleEndian>(0.0)?;
            }
        }
        w.write_f64::<LittleEndian>(self.c)?;
        w.write_f64::<LittleEndian>(self.bias)?;
        let dim = self.support_vectors.first().map_or(0, Vec::len);
        w.write_u32::<LittleEndian>(self.support_vectors.len() as u32)?;
        w.write_u32::<LittleEndian>(dim as u32)?;
        for (sv, coef) in self.support_vectors.iter().zip(&self.coefficients) {
            w.write_f64::<LittleEndian>(*coef)?;
            for &v in sv {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let version = r.read_u8()?;
        if version != BINARY_MODEL_VERSION {
            return Err(HarError::Format(format!("unsupported SVM model version {version}")));
        }
        let kind = r.read_u8()?;
        let gamma = r.read_f64::<LittleEndian>()?;
        let kernel = match kind {
            0 => Kernel::Rbf { gamma },
            1 => Kernel::Linear,
            k => return Err(HarError::Format(format!("unknown kernel kind {k}"))),
        };
        let c = r.read_f64::<LittleEndian>()?;
        let bias = r.read_f64::<LittleEndian>()?;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let dim = r.read_u32::<LittleEndian>()? as usize;
        let mut support_vectors = Vec::with_capacity(count);
        let mut coefficients = Vec::with_capacity(count);
        for _ in 0..count {
            coefficients.push(r.read_f64::<LittleEndian>()?);
            let mut sv = vec![0.0; dim];
            r.read_f64_into::<LittleEndian>(&mut sv)?;
            support_vectors.push(sv);
        }
        Ok(SvmModel {
            kernel,
            c,
            bias,
            support_vectors,
            coefficients,
            sv_indices: (0..count).collect(),
            objective: f64::NAN,
            iterations: 0,
            max_violation: f64::NAN,
        })
    }
}

fn check_rows(x: &[Vec<f64>]) -> Result<()> {
    let dim = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != dim) {
        return Err(HarError::config("training vectors differ in length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(HarError::data("training features contain non-finite values"));
    }
    Ok(())
}

/// Trains a two-class SVM on labels in {−1, +1}.
pub fn train_binary_svm(x: &[Vec<f64>], y: &[f64], c: f64, kernel: Kernel, opts: &SmoOptions) -> Result<SvmModel> {
    if x.len() != y.len() {
        return Err(HarError::config("feature and label counts differ"));
    }
    kernel.validate()?;
    check_rows(x)?;
    let gram = gram_matrix(&kernel, x);
    let sol = solve_dual(&gram, y, c, opts)?;
    let rows: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    Ok(SvmModel::from_solution(&rows, y, sol, kernel, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    /// Wins the vote when the decision value is ≥ 0; always the lower class.
    pub positive: ActivityLabel,
    pub negative: ActivityLabel,
    pub model: SvmModel,
}

/// One binary model per pair of classes present in training, voting on
/// predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassSvm {
    pub classes: Vec<ActivityLabel>,
    pub models: Vec<PairModel>,
}

/// Trains one-vs-one models from a precomputed kernel matrix over `x`.
pub(crate) fn train_multiclass_with_gram(
    x: &[Vec<f64>],
    y: &[ActivityLabel],
    gram: &[f64],
    c: f64,
    kernel: Kernel,
    opts: &SmoOptions,
) -> Result<MulticlassSvm> {
    let n = x.len();
    let mut classes: Vec<ActivityLabel> = y.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(HarError::data("multiclass SVM needs at least two classes"));
    }
    let mut models = Vec::new();
    for (a, &pos) in classes.iter().enumerate() {
        for &neg in &classes[a + 1..] {
            let idx: Vec<usize> = (0..n).filter(|&i| y[i] == pos || y[i] == neg).collect();
            let m = idx.len();
            let mut sub = vec![0.0; m * m];
            for (r, &i) in idx.iter().enumerate() {
                for (s, &j) in idx.iter().enumerate() {
                    sub[r * m + s] = gram[i * n + j];
                }
            }
            let labels: Vec<f64> = idx.iter().map(|&i| if y[i] == pos { 1.0 } else { -1.0 }).collect();
            let sol = solve_dual(&sub, &labels, c, opts)?;
            let rows: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
            let mut model = SvmModel::from_solution(&rows, &labels, sol, kernel, c);
            // refer back to positions in the full training set
            model.sv_indices = model.sv_indices.iter().map(|&s| idx[s]).collect();
            models.push(PairModel {
                positive: pos,
                negative: neg,
                model,
            });
        }
    }
    Ok(MulticlassSvm { classes, models })
}

pub fn train_multiclass(
    x: &[Vec<f64>],
    y: &[ActivityLabel],
    c: f64,
    kernel: Kernel,
    opts: &SmoOptions,
) -> Result<MulticlassSvm> {
    if x.len() != y.len() {
        return Err(HarError::config("feature and label counts differ"));
    }
    kernel.validate()?;
    check_rows(x)?;
    let gram = gram_matrix(&kernel, x);
    train_multiclass_with_gram(x, y, &gram, c, kernel, opts)
}

fn tally(decisions: impl Iterator<Item = (ActivityLabel, ActivityLabel, f64)>) -> (ActivityLabel, [u32; 4]) {
    let mut votes = [0u32; ActivityLabel::COUNT];
    for (pos, neg, d) in decisions {
        let winner = if d >= 0.0 { pos } else { neg };
        votes[winner.index()] += 1;
    }
    // first maximum wins, i.e. the lowest class index among tied classes
    let mut best = 0;
    for k in 1..votes.len() {
        if votes[k] > votes[best] {
            best = k;
        }
    }
    (ActivityLabel::ALL[best], votes)
}

impl MulticlassSvm {
    /// Majority vote over the pair models; ties go to the class that comes
    /// first in the fixed label order.
    pub fn predict(&self, x: &[f64]) -> (ActivityLabel, [u32; 4]) {
        tally(self.models.iter().map(|p| (p.positive, p.negative, p.model.decision(x))))
    }

    /// Same as [`predict`](Self::predict), with kernel values against every
    /// training example supplied by the caller.
    pub fn predict_from_kernel_row(&self, kernel_row: &[f64]) -> (ActivityLabel, [u32; 4]) {
        tally(
            self.models
                .iter()
                .map(|p| (p.positive, p.negative, p.model.decision_from_row(kernel_row))),
        )
    }
}

/// Standardisation plus one-vs-one SVM, as applied to raw feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmClassifier {
    pub scaler: Option<Standardizer>,
    pub svm: MulticlassSvm,
}

impl SvmClassifier {
    pub fn fit(x: &[Vec<f64>], y: &[ActivityLabel], c: f64, kernel: Kernel, standardize: bool, opts: &SmoOptions) -> Result<Self> {
        let scaler = standardize.then(|| Standardizer::fit(x));
        let svm = match &scaler {
            Some(s) => train_multiclass(&s.transform(x), y, c, kernel, opts)?,
            None => train_multiclass(x, y, c, kernel, opts)?,
        };
        Ok(Self { scaler, svm })
    }

    pub fn predict(&self, x: &[f64]) -> (ActivityLabel, [u32; 4]) {
        match &self.scaler {
            Some(s) => self.svm.predict(&s.transform_one(x)),
            None => self.svm.predict(x),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Vec::new();
        w.write_all(SVM_FILE_MAGIC)?;
        w.write_u8(SVM_FILE_VERSION)?;
        match &self.scaler {
            Some(s) => {
                w.write_u8(1)?;
                w.write_u32::<LittleEndian>(s.dim() as u32)?;
                for &v in s.mean.iter().chain(&s.scale) {
                    w.write_f64::<LittleEndian>(v)?;
                }
            }
            None => w.write_u8(0)?,
        }
        w.write_u8(self.svm.classes.len() as u8)?;
        for c in &self.svm.classes {
            w.write_u8(c.index() as u8)?;
        }
        w.write_u8(self.svm.models.len() as u8)?;
        for p in &self.svm.models {
            w.write_u8(p.positive.index() as u8)?;
            w.write_u8(p.negative.index() as u8)?;
            p.model.write_to(&mut w)?;
        }
        Ok(w)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let r = &mut &bytes[..];
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SVM_FILE_MAGIC {
            return Err(HarError::Format("not an SVM model file".into()));
        }
        let version = r.read_u8()?;
        if version != SVM_FILE_VERSION {
            return Err(HarError::Format(format!("unsupported SVM file version {version}")));
        }
        let label = |i: u8| {
            ActivityLabel::from_index(i as usize).ok_or_else(|| HarError::Format(format!("bad class index {i}")))
        };
        let scaler = match r.read_u8()? {
            0 => None,
            _ => {
                let dim = r.read_u32::<LittleEndian>()? as usize;
                let mut mean = vec![0.0; dim];
                let mut scale = vec![0.0; dim];
                r.read_f64_into::<LittleEndian>(&mut mean)?;
                r.read_f64_into::<LittleEndian>(&mut scale)?;
                Some(Standardizer { mean, scale })
            }
        };
        let n_classes = r.read_u8()?;
        let classes = (0..n_classes).map(|_| label(r.read_u8()?)).collect::<Result<Vec<_>>>()?;
        let n_models = r.read_u8()?;
        let mut models = Vec::with_capacity(n_models as usize);
        for _ in 0..n_models {
            let positive = label(r.read_u8()?)?;
            let negative = label(r.read_u8()?)?;
            models.push(PairModel {
                positive,
                negative,
                model: SvmModel::read_from(r)?,
            });
        }
        Ok(Self {
            scaler,
            svm: MulticlassSvm { classes, models },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
