//! Saved models, policy sweeps, curve export and experiment orchestration.

mod curves;
mod experiment;
mod model_io;
mod policy;
mod tables;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use curves::{curve_csv, export_curves, surface_csv, write_curve_files, Curve, CurveTable, SurfaceCurve};
pub use experiment::{
    run_experiment, run_experiment_to_dir, test_split, CurveSettings, CvSettings, DataSource, DataSummary,
    ExperimentConfig, ExperimentReport, ExperimentRun, ModelEntry, ModelResult, SplitScores, RESULTS_SCHEMA_VERSION,
};
pub use model_io::{argmax, load_model, model_from_json, model_to_json, save_model, FittedModel, MODEL_FORMAT_VERSION};
pub use policy::{
    bus_access_deltas, delta_rng, policy_csv, policy_eval, relabel, taxi_cost_deltas, DeltaResult, PolicyShift,
    PolicySpec,
};
pub use tables::{cv_csv, importance_csv, pair_importance_csv, vif_csv};

/// Parse a JSON config document; errors name the offending field path.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<document>".to_string() } else { path }, e.inner().to_string())
    })
}

/// Read and parse a JSON config file.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<std::path::Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn csv_text(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv output is not utf-8: {e}")))
}

/// File-name-safe join of labels with `__`.
fn file_stem(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '_' || c == '-'), "_"))
        .collect::<Vec<_>>()
        .join("__")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_path_safe() {
        assert_eq!(file_stem(&["bus", "access time/x"]), "bus__access_time_x");
    }
}
