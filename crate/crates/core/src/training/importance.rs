use serde::{Deserialize, Serialize};

use super::ImportanceNormalization;
use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::eval::FittedModel;
use crate::utility::UtilityModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportance {
    pub alternative: String,
    pub variable: String,
    pub alt: usize,
    pub var: usize,
    /// Grid mean of the signed contribution `w * NN(x)`.
    pub raw_score: f64,
    /// Grid mean of `|w * NN(x)|`.
    pub magnitude_score: f64,
    /// `magnitude_score` over the sum of all magnitude scores.
    pub share: f64,
    pub selected: bool,
    pub grid_min: f64,
    pub grid_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairImportance {
    pub alternative: String,
    pub variables: (String, String),
    pub alt: usize,
    pub pair: (usize, usize),
    pub raw_score: f64,
    pub magnitude_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub threshold: f64,
    pub normalization: ImportanceNormalization,
    pub grid_points: usize,
    /// Column order of the model's alternatives.
    pub variables: Vec<VariableImportance>,
    pub pairs: Vec<PairImportance>,
}

impl ImportanceReport {
    pub fn selected(&self) -> impl Iterator<Item = &VariableImportance> {
        self.variables.iter().filter(|v| v.selected)
    }

    pub fn get(&self, alternative: &str, variable: &str) -> Option<&VariableImportance> {
        self.variables
            .iter()
            .find(|v| v.alternative == alternative && v.variable == variable)
    }
}

/// `n` evenly spaced points from `lo` to `hi`, both included exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Importance of every main effect and interaction of an additive model.
///
/// Grids run over the training range recorded in the standardizer, in
/// original units.
pub fn importance_scores(
    model: &FittedModel,
    grid_points: usize,
    threshold: f64,
    normalization: ImportanceNormalization,
) -> Result<ImportanceReport> {
    importance_with(&model.utility, &model.standardizer, grid_points, threshold, normalization)
}

pub(crate) fn importance_with(
    utility: &UtilityModel,
    standardizer: &Standardizer,
    grid_points: usize,
    threshold: f64,
    normalization: ImportanceNormalization,
) -> Result<ImportanceReport> {
    if !utility.kind().is_additive() {
        return Err(Error::KindMismatch {
            expected: "gaunet or gaiunet".into(),
            found: utility.kind().to_string(),
        });
    }
    if grid_points == 0 {
        return Err(Error::invalid("importance grid needs at least one point"));
    }
    let alts = utility.alternatives();
    let grid_of = |a: usize, v: usize| {
        let s = standardizer.stats(a, v);
        linspace(s.min, s.max, grid_points)
    };

    let mut variables = Vec::new();
    for (a, v) in alts.columns() {
        let grid = grid_of(a, v);
        let z: Vec<f64> = grid.iter().map(|&g| standardizer.transform_value(a, v, g)).collect();
        let values = utility.shape_curve(a, v, &z)?;
        let n = values.len() as f64;
        variables.push(VariableImportance {
            alternative: alts.name(a).to_string(),
            variable: alts.variables(a)[v].clone(),
            alt: a,
            var: v,
            raw_score: values.iter().sum::<f64>() / n,
            magnitude_score: values.iter().map(|x| x.abs()).sum::<f64>() / n,
            share: 0.0,
            selected: false,
            grid_min: grid[0],
            grid_max: grid[grid.len() - 1],
        });
    }
    let total: f64 = variables.iter().map(|v| v.magnitude_score).sum();
    for v in &mut variables {
        v.share = if total > 0.0 { v.magnitude_score / total } else { 0.0 };
        let score = match normalization {
            ImportanceNormalization::Raw => v.magnitude_score,
            ImportanceNormalization::Share => v.share,
        };
        v.selected = score >= threshold;
    }

    let mut pairs = Vec::new();
    for it in utility.interactions() {
        let a = it.alternative();
        let (j, k) = it.pair();
        let zj: Vec<f64> = grid_of(a, j).iter().map(|&g| standardizer.transform_value(a, j, g)).collect();
        let zk: Vec<f64> = grid_of(a, k).iter().map(|&g| standardizer.transform_value(a, k, g)).collect();
        let mut ws = it.net.workspace();
        let (mut raw, mut mag) = (0.0, 0.0);
        for &xj in &zj {
            for &xk in &zk {
                let v = it.outer_weight * it.net.forward_ws(&[xj, xk], &mut ws);
                raw += v;
                mag += v.abs();
            }
        }
        let n = (zj.len() * zk.len()) as f64;
        pairs.push(PairImportance {
            alternative: alts.name(a).to_string(),
            variables: (alts.variables(a)[j].clone(), alts.variables(a)[k].clone()),
            alt: a,
            pair: (j, k),
            raw_score: raw / n,
            magnitude_score: mag / n,
        });
    }

    Ok(ImportanceReport {
        threshold,
        normalization,
        grid_points,
        variables,
        pairs,
    })
}

/// All pairs `(j, k)`, `j < k`, of selected variables within each
/// alternative.
pub fn select_pairs(report: &ImportanceReport, n_alternatives: usize) -> Vec<Vec<(usize, usize)>> {
    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); n_alternatives];
    for v in report.selected() {
        chosen[v.alt].push(v.var);
    }
    chosen
        .into_iter()
        .map(|mut vars| {
            vars.sort_unstable();
            vars.dedup();
            let mut pairs = Vec::new();
            for (i, &j) in vars.iter().enumerate() {
                for &k in &vars[i + 1..] {
                    pairs.push((j, k));
                }
            }
            pairs
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Activation, Mlp};
    use crate::utility::{AlternativeSet, ModelKind, ModelSpec};

    fn identity_model(p: usize) -> UtilityModel {
        let alts = AlternativeSet::new(
            vec!["a".into(), "b".into()],
            vec![(0..p).map(|v| format!("x{v}")).collect(), vec!["y".into()]],
        )
        .unwrap();
        let spec = ModelSpec::new(ModelKind::GaUnet).with_hidden(vec![]);
        let mut m = UtilityModel::zeros(&spec, &alts).unwrap();
        for u in m.units_mut() {
            u.net = Mlp::from_layers(vec![(vec![vec![1.0]], vec![0.0])], Activation::Identity).unwrap();
            u.outer_weight = 1.0;
        }
        m
    }

    fn report(m: &UtilityModel, ranges: &[(f64, f64)], threshold: f64) -> ImportanceReport {
        let st = Standardizer::identity_with_ranges(m.alternatives(), ranges).unwrap();
        importance_with(m, &st, 100, threshold, ImportanceNormalization::Raw).unwrap()
    }

    #[test]
    fn grid_means_of_identity() {
        let m = identity_model(2);
        let r = report(&m, &[(0.0, 1.0), (-1.0, 1.0), (0.0, 0.0)], 0.1);
        let unit = &r.variables[0];
        assert!((unit.raw_score - 0.5).abs() < 1e-12);
        assert!((unit.magnitude_score - 0.5).abs() < 1e-12);
        let sym = &r.variables[1];
        assert!(sym.raw_score.abs() < 1e-12);
        // 100 points on [-1, 1] miss 0, so the mean of |x| is exactly 0.5 + 1/198
        assert!((sym.magnitude_score - (0.5 + 1.0 / 198.0)).abs() < 1e-12);
        assert_eq!((sym.grid_min, sym.grid_max), (-1.0, 1.0));
        assert!(!r.variables[2].selected);
    }

    #[test]
    fn zero_shape_scores_zero() {
        let mut m = identity_model(1);
        m.units_mut()[0].outer_weight = 0.0;
        let r = report(&m, &[(0.0, 5.0), (0.0, 1.0)], 0.1);
        assert_eq!((r.variables[0].raw_score, r.variables[0].magnitude_score), (0.0, 0.0));
    }

    #[test]
    fn pair_enumeration() {
        let m = identity_model(4);
        let r = report(&m, &[(0.0, 1.0), (0.0, 0.0), (0.0, 1.0), (0.0, 1.0), (0.0, 0.0)], 0.1);
        assert_eq!(select_pairs(&r, 2), vec![vec![(0, 2), (0, 3), (2, 3)], vec![]]);
        let none = report(&m, &[(0.0, 1.0); 5], f64::INFINITY);
        assert_eq!(select_pairs(&none, 2), vec![vec![], vec![]]);
        let single = report(&m, &[(0.0, 1.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0)], 0.1);
        assert_eq!(select_pairs(&single, 2), vec![vec![], vec![]]);
    }

    #[test]
    fn selection_is_order_invariant() {
        let m = identity_model(3);
        let mut r = report(&m, &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 0.1);
        let forward = select_pairs(&r, 2);
        r.variables.reverse();
        assert_eq!(select_pairs(&r, 2), forward);
    }

    #[test]
    fn linspace_endpoints_exact() {
        let g = linspace(0.1, 0.7, 7);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[6], 0.7);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
