use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::training::linspace;
use crate::utility::ModelKind;

/// Contribution of one variable over a grid in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub alternative: String,
    pub variable: String,
    pub grid: Vec<f64>,
    /// Separable contribution; for dense models the pointwise median of the
    /// conditional curves.
    pub values: Vec<f64>,
    /// Dense models only: `conditional[row][g]` is the utility with the
    /// other variables taken from dataset row `row`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional: Vec<Vec<f64>>,
}

/// Interaction surface on the product of two variable grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCurve {
    pub alternative: String,
    pub variables: (String, String),
    pub grid_x: Vec<f64>,
    pub grid_y: Vec<f64>,
    /// `values[i][j]` at `(grid_x[i], grid_y[j])`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveTable {
    pub kind: ModelKind,
    pub curves: Vec<Curve>,
    pub surfaces: Vec<SurfaceCurve>,
}

/// Learned utility curves over the training range of every variable.
///
/// Linear and additive models give one separable curve per variable and
/// ignore `data`. ASU-DNN curves are conditional on every row of `data`
/// with the median reported as the curve value.
pub fn export_curves(model: &FittedModel, data: &Dataset, grid_points: usize) -> Result<CurveTable> {
    if grid_points < 2 {
        return Err(Error::invalid("curve grids need at least two points"));
    }
    let alts = model.alternatives();
    let kind = model.kind();
    if kind == ModelKind::AsuDnn {
        if data.alternatives() != alts {
            return Err(Error::invalid("dataset schema differs from the model's"));
        }
        if data.is_empty() {
            return Err(Error::invalid("conditional curves need at least one dataset row"));
        }
    }
    let grid = |a: usize, v: usize| {
        let s = model.standardizer.stats(a, v);
        linspace(s.min, s.max, grid_points)
    };

    let mut curves = Vec::new();
    for (a, v) in alts.columns() {
        let g = grid(a, v);
        let (values, conditional) = if kind == ModelKind::AsuDnn {
            let mut rows = Vec::with_capacity(data.len());
            for o in data.observations() {
                let row = g
                    .iter()
                    .map(|&gv| conditional_utility(model, a, v, &o.values, gv))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(row);
            }
            let median = (0..g.len())
                .map(|j| median(rows.iter().map(|r| r[j]).collect()))
                .collect();
            (median, rows)
        } else {
            let vals = g.iter().map(|&x| model.contribution(a, v, x)).collect::<Result<Vec<_>>>()?;
            (vals, Vec::new())
        };
        curves.push(Curve {
            alternative: alts.name(a).to_string(),
            variable: alts.variables(a)[v].clone(),
            grid: g,
            values,
            conditional,
        });
    }

    let mut surfaces = Vec::new();
    for it in model.utility.interactions() {
        let a = it.alternative();
        let (j, k) = it.pair();
        let (gx, gy) = (grid(a, j), grid(a, k));
        let values = gx
            .iter()
            .map(|&x| {
                let zx = model.standardizer.transform_value(a, j, x);
                gy.iter()
                    .map(|&y| it.value(zx, model.standardizer.transform_value(a, k, y)))
                    .collect()
            })
            .collect();
        surfaces.push(SurfaceCurve {
            alternative: alts.name(a).to_string(),
            variables: (alts.variables(a)[j].clone(), alts.variables(a)[k].clone()),
            grid_x: gx,
            grid_y: gy,
            values,
        });
    }
    Ok(CurveTable { kind, curves, surfaces })
}

/// Utility of alternative `alt` with variable `var` set to `value` and the
/// remaining variables taken from `row`. Dense utilities have no separable
/// part, so the ASC is included.
fn conditional_utility(model: &FittedModel, alt: usize, var: usize, row: &[Vec<f64>], value: f64) -> Result<f64> {
    let mut x = row[alt].clone();
    x[var] = value;
    let z: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(v, &xv)| model.standardizer.transform_value(alt, v, xv))
        .collect();
    model.utility.alternative_utility(alt, &z)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// CSV text of one curve: `grid,value`, plus `row_<i>` columns for
/// conditional curves.
pub fn curve_csv(curve: &Curve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["grid".to_string(), "value".into()];
    header.extend((0..curve.conditional.len()).map(|i| format!("row_{i}")));
    w.write_record(&header)?;
    for (g, (&x, &y)) in curve.grid.iter().zip(&curve.values).enumerate() {
        let mut row = vec![x.to_string(), y.to_string()];
        row.extend(curve.conditional.iter().map(|r| r[g].to_string()));
        w.write_record(&row)?;
    }
    super::csv_text(w)
}

/// Long-format CSV of a surface: `x,y,value`.
pub fn surface_csv(surface: &SurfaceCurve) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([&surface.variables.0, &surface.variables.1, "value"])?;
    for (i, &x) in surface.grid_x.iter().enumerate() {
        for (j, &y) in surface.grid_y.iter().enumerate() {
            w.write_record([x.to_string(), y.to_string(), surface.values[i][j].to_string()])?;
        }
    }
    super::csv_text(w)
}

/// Write `<alternative>__<variable>.csv` per curve and
/// `<alternative>__<var1>__<var2>.csv` per surface into `dir`.
pub fn write_curve_files(table: &CurveTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for c in &table.curves {
        put(format!("{}.csv", super::file_stem(&[&c.alternative, &c.variable])), curve_csv(c)?)?;
    }
    for s in &table.surfaces {
        put(
            format!("{}.csv", super::file_stem(&[&s.alternative, &s.variables.0, &s.variables.1])),
            surface_csv(s)?,
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
