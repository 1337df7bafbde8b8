//! N-gram features, class-weighted linear SVM training, grid-searched
//! cross-validation, evaluation, and confidence-stratified resampling.

mod cv;
mod eval;
mod io;
mod ngram;
mod sampling;
mod svm;

pub use cv::{
    evaluate_fold, grid_search_cv, stratified_folds, write_cv_table, CvCell, CvRow, GridSearch, DEFAULT_C_GRID,
    DEFAULT_RATIO_GRID,
};
pub use eval::{evaluate, ClassMetrics, Confusion, EvalReport};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use ngram::{extract_ngrams, ngram_multiset, FeatureVocab, Featurizer, NgramConfig, SparseVector};
pub use sampling::{nearest_rank_percentile, select_round2_samples, Round2Samples, ScoredItem};
pub use svm::{
    decision_score, fit_hinge, primal_objective, top_features, train_linear_svm, ConfidenceScore, HingeSolution,
    LinearModel, TrainConfig,
};
