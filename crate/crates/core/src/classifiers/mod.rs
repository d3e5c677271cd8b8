//! Downstream classifiers over raw or embedded vectors.

mod cosine;
mod knn;
mod svm;

pub use cosine::{CosineModel, CosineScore};
pub use knn::{KnnModel, KnnPrediction, ScoreRule, DEFAULT_K};
pub use svm::{
    rbf_kernel, solve_binary, BinarySolution, BinarySvm, Gram, SupportTerm, SvmEnsemble, SvmParams, SvmPrediction,
    DEFAULT_C, DEFAULT_MAX_PASSES, DEFAULT_TOL,
};
