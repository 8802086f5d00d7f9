use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::utility::AlternativeSet;

/// Training-split statistics of one `(alternative, variable)` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    /// Population standard deviation, or 1 when the column is constant.
    pub stdev: f64,
    /// True when `stdev` was substituted because the column has no variance.
    pub substituted: bool,
    pub min: f64,
    pub max: f64,
}

impl ColumnStats {
    fn identity() -> Self {
        Self {
            mean: 0.0,
            stdev: 1.0,
            substituted: false,
            min: 0.0,
            max: 1.0,
        }
    }
}

/// Z-score scaling applied to every model input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    alternatives: AlternativeSet,
    /// Flat column order of `alternatives`.
    columns: Vec<ColumnStats>,
}

impl Standardizer {
    /// Fit on the observations at `fit_on`.
    pub fn fit(data: &Dataset, fit_on: &[usize]) -> Result<Self> {
        if fit_on.is_empty() {
            return Err(Error::invalid("cannot fit a standardizer on zero observations"));
        }
        let alts = data.alternatives();
        let obs = data.observations();
        let n = fit_on.len() as f64;
        let columns = alts
            .columns()
            .map(|(a, v)| {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                let mut sum = 0.0;
                for &i in fit_on {
                    let x = obs[i].values[a][v];
                    sum += x;
                    min = min.min(x);
                    max = max.max(x);
                }
                let mean = sum / n;
                let var = fit_on
                    .iter()
                    .map(|&i| {
                        let d = obs[i].values[a][v] - mean;
                        d * d
                    })
                    .sum::<f64>()
                    / n;
                let stdev = var.sqrt();
                let substituted = !(stdev > 0.0);
                ColumnStats {
                    mean,
                    stdev: if substituted { 1.0 } else { stdev },
                    substituted,
                    min,
                    max,
                }
            })
            .collect();
        Ok(Self {
            alternatives: alts.clone(),
            columns,
        })
    }

    /// Pass-through scaling (mean 0, stdev 1) with unit ranges.
    pub fn identity(alternatives: &AlternativeSet) -> Self {
        Self {
            alternatives: alternatives.clone(),
            columns: vec![ColumnStats::identity(); alternatives.total_variables()],
        }
    }

    /// Identity scaling but with explicit `(min, max)` ranges per column.
    pub fn identity_with_ranges(alternatives: &AlternativeSet, ranges: &[(f64, f64)]) -> Result<Self> {
        if ranges.len() != alternatives.total_variables() {
            return Err(Error::invalid("one range per column required"));
        }
        Ok(Self {
            alternatives: alternatives.clone(),
            columns: ranges
                .iter()
                .map(|&(min, max)| ColumnStats { min, max, ..ColumnStats::identity() })
                .collect(),
        })
    }

    pub fn alternatives(&self) -> &AlternativeSet {
        &self.alternatives
    }

    pub fn stats(&self, alt: usize, var: usize) -> &ColumnStats {
        &self.columns[self.alternatives.flat_index(alt, var)]
    }

    /// Columns whose variance was zero in the fitting split.
    pub fn constant_columns(&self) -> Vec<(usize, usize)> {
        self.alternatives
            .columns()
            .filter(|&(a, v)| self.stats(a, v).substituted)
            .collect()
    }

    #[inline]
    pub fn transform_value(&self, alt: usize, var: usize, x: f64) -> f64 {
        let s = self.stats(alt, var);
        (x - s.mean) / s.stdev
    }

    #[inline]
    pub fn inverse_value(&self, alt: usize, var: usize, z: f64) -> f64 {
        let s = self.stats(alt, var);
        z * s.stdev + s.mean
    }

    pub fn transform_values(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(a, vals)| vals.iter().enumerate().map(|(v, &x)| self.transform_value(a, v, x)).collect())
            .collect()
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        if data.alternatives() != &self.alternatives {
            return Err(Error::invalid("dataset schema differs from the standardizer's"));
        }
        Ok(data.map_values(|a, v, x| self.transform_value(a, v, x)))
    }

    pub fn inverse(&self, data: &Dataset) -> Result<Dataset> {
        if data.alternatives() != &self.alternatives {
            return Err(Error::invalid("dataset schema differs from the standardizer's"));
        }
        Ok(data.map_values(|a, v, z| self.inverse_value(a, v, z)))
    }
}

/// Fit on `fit_on` and transform the whole dataset.
pub fn standardize(data: &Dataset, fit_on: &[usize]) -> Result<(Standardizer, Dataset)> {
    let s = Standardizer::fit(data, fit_on)?;
    let t = s.transform(data)?;
    Ok((s, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, Provenance};
    use proptest::prelude::*;

    fn one_column(xs: &[f64]) -> Dataset {
        let alts = AlternativeSet::new(vec!["a".into(), "b".into()], vec![vec!["x".into()], vec![]]).unwrap();
        let obs = xs
            .iter()
            .map(|&x| Observation {
                chosen: 0,
                values: vec![vec![x], vec![]],
            })
            .collect();
        Dataset::new(alts, obs, Provenance::Memory).unwrap()
    }

    #[test]
    fn two_point_column() {
        let d = one_column(&[0.0, 2.0]);
        let (s, t) = standardize(&d, &[0, 1]).unwrap();
        assert_eq!(t.column(0, 0), vec![-1.0, 1.0]);
        assert_eq!(s.stats(0, 0).stdev, 1.0);
        assert!(!s.stats(0, 0).substituted);
        assert_eq!((s.stats(0, 0).min, s.stats(0, 0).max), (0.0, 2.0));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let d = one_column(&[3.0, 3.0, 3.0]);
        let (s, t) = standardize(&d, &[0, 1, 2]).unwrap();
        assert!(t.column(0, 0).iter().all(|&z| z == 0.0));
        assert!(s.stats(0, 0).substituted);
        assert_eq!(s.constant_columns(), vec![(0, 0)]);
    }

    #[test]
    fn statistics_come_from_fit_rows_only() {
        let d = one_column(&[0.0, 2.0, 100.0]);
        let (s, t) = standardize(&d, &[0, 1]).unwrap();
        assert_eq!(s.stats(0, 0).mean, 1.0);
        assert_eq!(t.column(0, 0)[2], 99.0);
        assert!(standardize(&d, &[]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_undoes_transform(xs in proptest::collection::vec(-1e4f64..1e4, 2..40)) {
            let d = one_column(&xs);
            let all: Vec<usize> = (0..xs.len()).collect();
            let (s, t) = standardize(&d, &all).unwrap();
            let back = s.inverse(&t).unwrap();
            for (x, y) in xs.iter().zip(back.column(0, 0)) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
