//! Boosted estimation of academic preparedness: the ex-ante probability of
//! passing the assessment, learned from complete-information units, plus
//! model-quality diagnostics (AUC, calibration).

mod boost;
mod cv;
mod metrics;
mod tree;

pub use boost::{
    fit_boosted, fit_passage_model, predict_mu, CvEntry, PreparednessModel, TrainingReport,
    DEFAULT_ROUNDS, EARLY_STOP_PATIENCE, MODEL_FORMAT_VERSION,
};
pub use cv::{cv_select, HyperGrid};
pub use metrics::{auc, calibration_report, CalibrationCell};
pub use tree::{BoostParams, Node, SplitKind, Tree};
