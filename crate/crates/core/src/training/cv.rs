use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, TrainConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::utility::ModelSpec;

const STREAM_FOLDS: u64 = 5;

/// Assignment of observations to `fold_count` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub fold_count: usize,
    pub seed: u64,
    /// Fold of every observation.
    pub assignment: Vec<usize>,
}

impl CvPlan {
    /// Shuffle with `seed` and deal observations round-robin, so fold sizes
    /// differ by at most one.
    pub fn new(n: usize, fold_count: usize, seed: u64) -> Result<Self> {
        if fold_count < 2 {
            return Err(Error::invalid("cross-validation needs at least two folds"));
        }
        if n < fold_count {
            return Err(Error::invalid(format!("{n} observations cannot fill {fold_count} folds")));
        }
        let order = Rng::stream(seed, STREAM_FOLDS).permutation(n);
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % fold_count;
        }
        Ok(Self {
            fold_count,
            seed,
            assignment,
        })
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.fold_count];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(training indices, test indices)` of one fold, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_log_likelihood: f64,
    pub test_log_likelihood: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub stdev: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, stdev: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub train_log_likelihood: Summary,
    pub test_log_likelihood: Summary,
    pub train_accuracy: Summary,
    pub test_accuracy: Summary,
}

impl CvReport {
    pub fn from_folds(folds: Vec<FoldResult>) -> Self {
        let col = |f: fn(&FoldResult) -> f64| Summary::of(&folds.iter().map(f).collect::<Vec<_>>());
        Self {
            train_log_likelihood: col(|f| f.train_log_likelihood),
            test_log_likelihood: col(|f| f.test_log_likelihood),
            train_accuracy: col(|f| f.train_accuracy),
            test_accuracy: col(|f| f.test_accuracy),
            folds,
        }
    }
}

/// Fit on every fold but `fold` and score both parts. The standardizer is
/// refit on the training folds.
pub fn run_fold(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig, plan: &CvPlan, fold: usize) -> Result<FoldResult> {
    if plan.assignment.len() != data.len() {
        return Err(Error::invalid("fold plan and dataset sizes differ"));
    }
    if fold >= plan.fold_count {
        return Err(Error::invalid(format!("fold {fold} out of range")));
    }
    let (train_idx, test_idx) = plan.split(fold);
    let train = data.subset(&train_idx, &format!("cv fold {fold} training"));
    let test = data.subset(&test_idx, &format!("cv fold {fold} test"));
    let fitted = fit(spec, &train, cfg)?.model;
    Ok(FoldResult {
        fold,
        n_train: train.len(),
        n_test: test.len(),
        train_log_likelihood: fitted.log_likelihood(&train)?,
        test_log_likelihood: fitted.log_likelihood(&test)?,
        train_accuracy: fitted.accuracy(&train)?,
        test_accuracy: fitted.accuracy(&test)?,
    })
}

/// One independent fit per fold, run in parallel; results come back in fold
/// order.
pub fn cross_validate(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig, plan: &CvPlan) -> Result<CvReport> {
    let folds = (0..plan.fold_count)
        .into_par_iter()
        .map(|f| run_fold(spec, data, cfg, plan, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvReport::from_folds(folds))
}
