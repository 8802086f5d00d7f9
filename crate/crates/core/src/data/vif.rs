//! Variance inflation factors for one alternative's variables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Variables at or above this VIF are flagged as collinear.
pub const VIF_THRESHOLD: f64 = 10.0;

const RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifEntry {
    pub variable: String,
    pub r_squared: f64,
    /// `+inf` when the variable is an exact combination of the others.
    pub vif: f64,
    /// True when `vif < VIF_THRESHOLD`.
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub alternative: String,
    pub entries: Vec<VifEntry>,
}

impl VifReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.passes)
    }
}

pub fn vif(data: &Dataset, alternative: usize) -> Result<VifReport> {
    let alts = data.alternatives();
    if alternative >= alts.len() {
        return Err(Error::invalid(format!("alternative index {alternative} out of range")));
    }
    let columns: Vec<Vec<f64>> = (0..alts.variable_count(alternative))
        .map(|v| data.column(alternative, v))
        .collect();
    let names = alts.variables(alternative).to_vec();
    Ok(VifReport {
        alternative: alts.name(alternative).to_string(),
        entries: vif_columns(&columns, &names)?,
    })
}

/// VIF of every column against the rest (with intercept).
pub fn vif_columns(columns: &[Vec<f64>], names: &[String]) -> Result<Vec<VifEntry>> {
    let p = columns.len();
    if p < 2 {
        return Err(Error::invalid("VIF needs at least two variables"));
    }
    if names.len() != p {
        return Err(Error::invalid("one name per column required"));
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("columns have different lengths"));
    }
    // p - 1 regressors plus the intercept must be identifiable
    if n <= p {
        return Err(Error::invalid(format!("{n} observations cannot identify a regression on {p} variables")));
    }

    // z-scoring makes R² exactly invariant to affine rescaling of any column
    let z: Vec<Vec<f64>> = columns.iter().map(|c| zscore(c)).collect();
    (0..p)
        .map(|target| {
            let r2 = r_squared(&z, target, n)?;
            let vif = if (1.0 - r2).abs() <= 1e-12 { f64::INFINITY } else { 1.0 / (1.0 - r2) };
            Ok(VifEntry {
                variable: names[target].clone(),
                r_squared: r2,
                vif,
                passes: vif < VIF_THRESHOLD,
            })
        })
        .collect()
}

fn zscore(c: &[f64]) -> Vec<f64> {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let sd = (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    c.iter().map(|x| (x - mean) / sd).collect()
}

fn r_squared(z: &[Vec<f64>], target: usize, n: usize) -> Result<f64> {
    let regressors: Vec<&Vec<f64>> = z.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, c)| c).collect();
    let k = regressors.len() + 1;
    let x = DMatrix::from_fn(n, k, |r, c| if c == 0 { 1.0 } else { regressors[c - 1][r] });
    let y = DVector::from_column_slice(&z[target]);
    let mut gram = x.transpose() * &x;
    for i in 0..k {
        gram[(i, i)] += RIDGE;
    }
    let rhs = x.transpose() * &y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("normal equations are not positive definite"))?;
    let beta = chol.solve(&rhs);
    let fitted = &x * beta;
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        // a constant column is explained perfectly by the intercept
        return Ok(1.0);
    }
    let ss_res: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((1.0 - ss_res / ss_tot).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn independent_columns_near_one() {
        let mut rng = Rng::new(3);
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..10_000).map(|_| rng.open01()).collect()).collect();
        for e in vif_columns(&cols, &names(2)).unwrap() {
            assert!((e.vif - 1.0).abs() < 0.05, "{e:?}");
            assert!(e.passes);
        }
    }

    #[test]
    fn duplicate_columns_are_infinite() {
        let mut rng = Rng::new(4);
        let a: Vec<f64> = (0..500).map(|_| rng.open01()).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.open01()).collect();
        let entries = vif_columns(&[a.clone(), a, b], &names(3)).unwrap();
        assert!(entries[0].vif.is_infinite() && !entries[0].passes);
        assert!(entries[1].vif.is_infinite() && !entries[1].passes);
        assert!(entries[2].vif.is_finite());
    }

    #[test]
    fn near_duplicate_flags() {
        let mut rng = Rng::new(5);
        let a: Vec<f64> = (0..2000).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.01 * rng.uniform(-1.0, 1.0)).collect();
        let entries = vif_columns(&[a, b], &names(2)).unwrap();
        assert!(entries.iter().all(|e| e.vif > 10.0 && !e.passes));
    }

    #[test]
    fn underdetermined_rejected() {
        assert!(vif_columns(&[vec![1.0, 2.0], vec![3.0, 1.0]], &names(2)).is_err());
        assert!(vif_columns(&[vec![1.0, 2.0, 3.0]], &names(1)).is_err());
    }
}
