//! CSV renderings of reports.

use super::csv_text;
use crate::data::VifReport;
use crate::error::Result;
use crate::training::{CvReport, ImportanceReport};

pub fn importance_csv(report: &ImportanceReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "alternative",
        "variable",
        "raw_score",
        "magnitude_score",
        "share",
        "selected",
        "grid_min",
        "grid_max",
    ])?;
    for v in &report.variables {
        w.write_record([
            v.alternative.clone(),
            v.variable.clone(),
            v.raw_score.to_string(),
            v.magnitude_score.to_string(),
            v.share.to_string(),
            v.selected.to_string(),
            v.grid_min.to_string(),
            v.grid_max.to_string(),
        ])?;
    }
    csv_text(w)
}

/// Interaction scores, one row per pair; header only when there are none.
pub fn pair_importance_csv(report: &ImportanceReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alternative", "variable_1", "variable_2", "raw_score", "magnitude_score"])?;
    for p in &report.pairs {
        w.write_record([
            p.alternative.clone(),
            p.variables.0.clone(),
            p.variables.1.clone(),
            p.raw_score.to_string(),
            p.magnitude_score.to_string(),
        ])?;
    }
    csv_text(w)
}

pub fn vif_csv(reports: &[VifReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["alternative", "variable", "r_squared", "vif", "passes"])?;
    for r in reports {
        for e in &r.entries {
            w.write_record([
                r.alternative.clone(),
                e.variable.clone(),
                e.r_squared.to_string(),
                e.vif.to_string(),
                e.passes.to_string(),
            ])?;
        }
    }
    csv_text(w)
}

/// One row per fold, then `mean` and `stdev` rows.
pub fn cv_csv(report: &CvReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "fold",
        "n_train",
        "n_test",
        "train_log_likelihood",
        "test_log_likelihood",
        "train_accuracy",
        "test_accuracy",
    ])?;
    for f in &report.folds {
        w.write_record([
            f.fold.to_string(),
            f.n_train.to_string(),
            f.n_test.to_string(),
            f.train_log_likelihood.to_string(),
            f.test_log_likelihood.to_string(),
            f.train_accuracy.to_string(),
            f.test_accuracy.to_string(),
        ])?;
    }
    let s = [
        report.train_log_likelihood,
        report.test_log_likelihood,
        report.train_accuracy,
        report.test_accuracy,
    ];
    w.write_record(
        ["mean".to_string(), String::new(), String::new()]
            .into_iter()
            .chain(s.iter().map(|x| x.mean.to_string())),
    )?;
    w.write_record(
        ["stdev".to_string(), String::new(), String::new()]
            .into_iter()
            .chain(s.iter().map(|x| x.stdev.to_string())),
    )?;
    csv_text(w)
}
