//! Human activity recognition from wrist PPG by classifying plotted signal
//! windows: filtering and windowing, rasterisation, image embeddings, SVM and
//! softmax classifiers, class activation maps and t-SNE.

pub mod embed;
pub mod error;
pub mod eval;
pub mod filter;
pub mod label;
pub mod raster;
pub mod signal;
pub mod softmax;
pub mod svm;
pub mod synth;
pub mod xai;

pub use error::{HarError, Result};
pub use label::ActivityLabel;
