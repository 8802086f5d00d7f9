use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{export_curves, write_curve_files};
use super::policy::{policy_csv, policy_eval, PolicyShift, PolicySpec};
use super::tables::{cv_csv, importance_csv, pair_importance_csv, vif_csv};
use super::{save_model, FittedModel};
use crate::data::{generate_synthetic, load_csv, vif, Dataset, GenerationStats, SyntheticConfig, VifReport};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::training::{cross_validate, fit, importance_scores, CvPlan, CvReport, ImportanceReport, TrainConfig};
use crate::utility::ModelSpec;

/// Version of the results document layout.
pub const RESULTS_SCHEMA_VERSION: &str = "1.0.0";

const STREAM_TEST_SPLIT: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub name: String,
    pub spec: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSettings {
    pub grid_points: usize,
    /// Dataset rows used for conditional curves of dense models.
    pub conditional_rows: usize,
}

impl Default for CurveSettings {
    fn default() -> Self {
        Self {
            grid_points: 100,
            conditional_rows: 50,
        }
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Everything one experiment run does, as read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the test split, fold plan and policy noise.
    #[serde(default)]
    pub seed: u64,
    pub data: DataSource,
    /// Share of rows held out for testing; 0 evaluates on the training rows.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub cv: Option<CvSettings>,
    #[serde(default)]
    pub vif: bool,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    /// Ground truth for relabelled policy sweeps. Defaults to the synthetic
    /// data config.
    #[serde(default)]
    pub truth: Option<SyntheticConfig>,
    #[serde(default)]
    pub policy_sweeps: Vec<PolicySpec>,
    #[serde(default)]
    pub curves: Option<CurveSettings>,
    #[serde(default)]
    pub importance: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::config("test_fraction", "must lie in [0, 1)"));
        }
        if let Some(cv) = self.cv {
            if cv.folds < 2 {
                return Err(Error::config("cv.folds", "must be at least 2"));
            }
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| prefix("data.synthetic", e))?;
        }
        for (i, m) in self.models.iter().enumerate() {
            if m.name.trim().is_empty() {
                return Err(Error::config(format!("models[{i}].name"), "must not be empty"));
            }
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::config(format!("models[{i}].name"), format!("duplicate name {:?}", m.name)));
            }
            m.train.validate().map_err(|e| prefix(&format!("models[{i}].train"), e))?;
        }
        for (i, p) in self.policy_sweeps.iter().enumerate() {
            p.resolved_deltas().map_err(|e| prefix(&format!("policy_sweeps[{i}]"), e))?;
            if p.relabel && self.truth_config().is_none() {
                return Err(Error::config(
                    format!("policy_sweeps[{i}].relabel"),
                    "relabelling needs `truth` or synthetic data",
                ));
            }
        }
        if let Some(c) = self.curves {
            if c.grid_points < 2 {
                return Err(Error::config("curves.grid_points", "must be at least 2"));
            }
        }
        Ok(())
    }

    pub fn truth_config(&self) -> Option<&SyntheticConfig> {
        match (&self.truth, &self.data) {
            (Some(t), _) => Some(t),
            (None, DataSource::Synthetic(s)) => Some(s),
            _ => None,
        }
    }
}

fn prefix(path: &str, e: Error) -> Error {
    match e {
        Error::Config { path: p, message } => Error::config(format!("{path}.{p}"), message),
        other => Error::config(path, other.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub n: usize,
    pub log_likelihood: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    pub spec: ModelSpec,
    pub train: SplitScores,
    /// Absent when `test_fraction` is 0.
    pub test: Option<SplitScores>,
    pub epochs: Vec<usize>,
    pub selected_pairs: Option<Vec<Vec<(usize, usize)>>>,
    pub cv: Option<CvReport>,
    pub importance: Option<ImportanceReport>,
    pub policy: Vec<PolicyShift>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub n_observations: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub choice_shares: Vec<f64>,
    pub generation: Option<GenerationStats>,
}

/// Contents of `results.json`. Carries no timestamps so that reruns with
/// the same seeds are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    pub config: ExperimentConfig,
    pub data: DataSummary,
    pub vif: Vec<VifReport>,
    pub models: Vec<ModelResult>,
}

impl ExperimentReport {
    /// `model,log_likelihood,accuracy` on the test split (training split
    /// when there is none).
    pub fn table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "log_likelihood", "accuracy"])?;
        for m in &self.models {
            let s = m.test.unwrap_or(m.train);
            w.write_record([m.name.clone(), s.log_likelihood.to_string(), s.accuracy.to_string()])?;
        }
        super::csv_text(w)
    }
}

fn load_data(cfg: &ExperimentConfig, base_dir: &Path) -> Result<(Dataset, Option<GenerationStats>)> {
    match &cfg.data {
        DataSource::Synthetic(s) => {
            let (d, stats) = generate_synthetic(s)?;
            Ok((d, Some(stats)))
        }
        DataSource::Csv { path } => Ok((load_csv(base_dir.join(path), None)?, None)),
    }
}

/// Training and held-out test indices, both ascending.
pub fn test_split(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let n_test = n_test.min(n.saturating_sub(1));
    let order = Rng::stream(seed, STREAM_TEST_SPLIT).permutation(n);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

fn scores(model: &FittedModel, data: &Dataset) -> Result<SplitScores> {
    Ok(SplitScores {
        n: data.len(),
        log_likelihood: model.log_likelihood(data)?,
        accuracy: model.accuracy(data)?,
    })
}

struct Fitted {
    result: ModelResult,
    model: FittedModel,
}

fn run_model(cfg: &ExperimentConfig, entry: &ModelEntry, all: &Dataset, train: &Dataset, test: Option<&Dataset>) -> Result<Fitted> {
    info!("fitting {}", entry.name);
    let fitted = fit(&entry.spec, train, &entry.train)?;
    let model = fitted.model;
    let eval_set = test.unwrap_or(train);
    let cv = match cfg.cv {
        Some(c) => {
            let plan = CvPlan::new(all.len(), c.folds, cfg.seed)?;
            Some(cross_validate(&entry.spec, all, &entry.train, &plan)?)
        }
        None => None,
    };
    let importance = if cfg.importance && entry.spec.kind.is_additive() {
        Some(importance_scores(
            &model,
            entry.train.importance_grid_points,
            entry.train.importance_threshold,
            entry.train.importance_normalization,
        )?)
    } else {
        None
    };
    let policy = cfg
        .policy_sweeps
        .iter()
        .map(|p| policy_eval(&model, eval_set, cfg.truth_config(), p, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(Fitted {
        result: ModelResult {
            name: entry.name.clone(),
            spec: entry.spec.clone(),
            train: scores(&model, train)?,
            test: test.map(|t| scores(&model, t)).transpose()?,
            epochs: fitted.stages.iter().map(|s| s.trace.len()).collect(),
            selected_pairs: fitted.selected_pairs,
            cv,
            importance,
            policy,
        },
        model,
    })
}

/// Outcome of [`run_experiment`]: the report plus what its file bundle needs.
pub struct ExperimentRun {
    pub report: ExperimentReport,
    /// Same order as `report.models`.
    pub models: Vec<FittedModel>,
    pub train: Dataset,
}

/// Run every step of an experiment in memory. `base_dir` resolves relative
/// data paths.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentRun> {
    cfg.validate()?;
    let (all, generation) = load_data(cfg, base_dir)?;
    let (train_idx, test_idx) = test_split(all.len(), cfg.test_fraction, cfg.seed);
    let train = all.subset(&train_idx, "experiment training split");
    let test = (!test_idx.is_empty()).then(|| all.subset(&test_idx, "experiment test split"));

    let vif_reports = if cfg.vif {
        let alts = all.alternatives();
        (0..alts.len())
            .filter(|&a| alts.variable_count(a) >= 2)
            .map(|a| vif(&all, a))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let fitted = cfg
        .models
        .par_iter()
        .map(|m| run_model(cfg, m, &all, &train, test.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let (results, models) = fitted.into_iter().map(|f| (f.result, f.model)).unzip();

    let report = ExperimentReport {
        schema_version: RESULTS_SCHEMA_VERSION.to_string(),
        config: cfg.clone(),
        data: DataSummary {
            n_observations: all.len(),
            n_train: train.len(),
            n_test: test.as_ref().map_or(0, Dataset::len),
            choice_shares: all.choice_shares(),
            generation,
        },
        vif: vif_reports,
        models: results,
    };
    Ok(ExperimentRun { report, models, train })
}

/// Run an experiment and write its bundle into `out_dir`:
/// `results.json`, `table.csv`, and per model the saved model plus any
/// cv, importance, policy and curve tables.
pub fn run_experiment_to_dir(cfg: &ExperimentConfig, base_dir: &Path, out_dir: &Path) -> Result<ExperimentReport> {
    let ExperimentRun { report, models, train } = run_experiment(cfg, base_dir)?;
    let mkdir = |d: &Path| std::fs::create_dir_all(d).map_err(|e| Error::io(d, e));
    let put = |path: PathBuf, text: String| std::fs::write(&path, text).map_err(|e| Error::io(&path, e));
    mkdir(out_dir)?;

    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    put(out_dir.join("results.json"), json)?;
    put(out_dir.join("table.csv"), report.table_csv()?)?;
    if cfg.vif {
        put(out_dir.join("vif.csv"), vif_csv(&report.vif)?)?;
    }

    for (result, model) in report.models.iter().zip(&models) {
        let dir = out_dir.join(super::file_stem(&[&result.name]));
        mkdir(&dir)?;
        save_model(model, dir.join("model.json"))?;
        if let Some(cv) = &result.cv {
            put(dir.join("cv.csv"), cv_csv(cv)?)?;
        }
        if let Some(imp) = &result.importance {
            put(dir.join("importance.csv"), importance_csv(imp)?)?;
            if !imp.pairs.is_empty() {
                put(dir.join("importance_pairs.csv"), pair_importance_csv(imp)?)?;
            }
        }
        for shift in &result.policy {
            let name = format!("policy__{}.csv", super::file_stem(&[&shift.alternative, &shift.variable]));
            put(dir.join(name), policy_csv(shift, model.alternatives().names())?)?;
        }
        if let Some(settings) = cfg.curves {
            let idx: Vec<usize> = (0..settings.conditional_rows.min(train.len())).collect();
            let table = export_curves(model, &train.subset(&idx, "curve rows"), settings.grid_points)?;
            write_curve_files(&table, &dir.join("curves"))?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        let (train, test) = test_split(10, 0.2, 3);
        assert_eq!((train.len(), test.len()), (8, 2));
        assert!(test.iter().all(|i| !train.contains(i)));
        assert_eq!(test_split(10, 0.0, 3).1, Vec::<usize>::new());
    }

    #[test]
    fn config_errors_carry_paths() {
        let text = r#"{"data": {"synthetic": {}}, "models": [{"name": "a", "spec": {"kind": "linear"}, "train": {"batch_size": 0}}]}"#;
        let cfg: ExperimentConfig = super::super::parse_config(text).unwrap();
        match cfg.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "models[0].train.batch_size"),
            other => panic!("{other:?}"),
        }
        let typo = r#"{"data": {"synthetic": {}}, "modles": []}"#;
        assert!(matches!(super::super::parse_config::<ExperimentConfig>(typo), Err(Error::Config { .. })));
    }
}
