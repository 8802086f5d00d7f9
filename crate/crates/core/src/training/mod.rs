//! Estimation: mini-batch Adam on the penalized likelihood, the staged
//! interaction fit, importance scores and k-fold cross-validation.

mod config;
mod cv;
mod fit;
mod importance;

pub use config::{ImportanceNormalization, StageRates, TrainConfig};
pub use cv::{cross_validate, run_fold, CvPlan, CvReport, FoldResult, Summary};
pub use fit::{accuracy, fit, fit_gaiunet_staged, EpochRecord, FitResult, StageRecord};
pub use importance::{importance_scores, linspace, select_pairs, ImportanceReport, PairImportance, VariableImportance};
