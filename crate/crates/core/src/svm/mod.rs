//! Kernel SVM trained by SMO, one-vs-one multiclass voting and nested
//! cross-validated hyperparameter search.

mod cv;
mod kernel;
mod model;
mod scale;
mod smo;

pub use cv::{
    consensus_choice, evaluate_grid, fit_with_spec, fold_assignment, nested_cv, CvConfig, CvPrediction, CvReport, FoldResult, FoldTrace,
    GammaSpec, GridScore, NestedCvOutcome, SvmGrid,
};
pub use kernel::{cross_squared_distances, gram_matrix, rbf_kernel, squared_distances, Kernel};
pub use model::{
    train_binary_svm, train_multiclass, MulticlassSvm, PairModel, SvmClassifier, SvmModel,
    SVM_FILE_MAGIC, SVM_FILE_VERSION,
};
pub use scale::Standardizer;
pub use smo::{dual_objective, solve_dual, DualSolution, SmoOptions};
