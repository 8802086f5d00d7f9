use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FittedModel;
use crate::data::{synthetic_alternatives, Dataset, SyntheticConfig, SYNTHETIC_VARIABLES};
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Which variable to shift, by how much, and how to label the shifted rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub alternative: String,
    pub variable: String,
    /// Shifts in original units, evaluated in the given order. Defaults
    /// exist for taxi cost and bus access time.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
    /// Redraw ground-truth choices on the shifted inputs under the true
    /// generator. When false the original labels are kept.
    #[serde(default = "yes")]
    pub relabel: bool,
}

fn yes() -> bool {
    true
}

impl PolicySpec {
    pub fn new(alternative: &str, variable: &str, deltas: Vec<f64>) -> Self {
        Self {
            alternative: alternative.into(),
            variable: variable.into(),
            deltas: Some(deltas),
            relabel: true,
        }
    }

    /// Explicit deltas, or the default sweep of a known target.
    pub fn resolved_deltas(&self) -> Result<Vec<f64>> {
        if let Some(d) = &self.deltas {
            if let Some(bad) = d.iter().find(|x| !x.is_finite()) {
                return Err(Error::config("deltas", format!("non-finite delta {bad}")));
            }
            return Ok(d.clone());
        }
        match (self.alternative.as_str(), self.variable.as_str()) {
            ("taxi", "cost") => Ok(taxi_cost_deltas()),
            ("bus", "access_time") => Ok(bus_access_deltas()),
            _ => Err(Error::config(
                "deltas",
                format!("no default sweep for {}:{}", self.alternative, self.variable),
            )),
        }
    }
}

fn stepped(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

/// -10 to 20 dollars in steps of 2.
pub fn taxi_cost_deltas() -> Vec<f64> {
    stepped(-10.0, 20.0, 2.0)
}

/// -2 to 5 minutes in steps of 0.5.
pub fn bus_access_deltas() -> Vec<f64> {
    stepped(-2.0, 5.0, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub delta: f64,
    /// Rows scored at this delta.
    pub n_evaluated: usize,
    /// Rows dropped because no alternative is feasible after the shift.
    pub n_excluded: usize,
    pub accuracy: f64,
    /// Share of scored rows predicted for each alternative.
    pub predicted_shares: Vec<f64>,
    /// Share of scored rows labelled with each alternative.
    pub label_shares: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyShift {
    pub alternative: String,
    pub variable: String,
    pub relabel: bool,
    pub seed: u64,
    pub results: Vec<DeltaResult>,
}

impl PolicyShift {
    pub fn at(&self, delta: f64) -> Option<&DeltaResult> {
        self.results.iter().find(|r| r.delta == delta)
    }
}

/// Noise stream of one delta. Zero maps to stream 0, i.e. `Rng::new(seed)`.
pub fn delta_rng(seed: u64, delta: f64) -> Rng {
    Rng::stream(seed, (delta + 0.0).to_bits())
}

/// Labels of `data` redrawn under `truth`, using the delta-0 stream of
/// `seed`. Rows without a feasible alternative are dropped.
pub fn relabel(data: &Dataset, truth: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    check_truth_schema(data)?;
    let mut rng = delta_rng(seed, 0.0);
    let mut keep = Vec::new();
    let mut labels = Vec::new();
    for (i, o) in data.observations().iter().enumerate() {
        if let Some(y) = truth.sample_choice(&o.values, &mut rng)? {
            keep.push(i);
            labels.push(y);
        }
    }
    let mut out = data.subset(&keep, "relabelled");
    let observations = out
        .observations()
        .iter()
        .zip(labels)
        .map(|(o, y)| crate::data::Observation {
            chosen: y,
            values: o.values.clone(),
        })
        .collect();
    out = Dataset::new(out.alternatives().clone(), observations, out.provenance().clone())?;
    Ok(out)
}

fn check_truth_schema(data: &Dataset) -> Result<()> {
    if data.alternatives() != &synthetic_alternatives() {
        return Err(Error::invalid(format!(
            "ground-truth relabelling needs the bus/taxi schema with variables {SYNTHETIC_VARIABLES:?}"
        )));
    }
    Ok(())
}

/// Shift one variable of every observation and score the model on the
/// shifted rows. Deltas are evaluated in parallel; each uses its own noise
/// stream so results do not depend on scheduling.
pub fn policy_eval(
    model: &FittedModel,
    base: &Dataset,
    truth: Option<&SyntheticConfig>,
    spec: &PolicySpec,
    seed: u64,
) -> Result<PolicyShift> {
    if base.alternatives() != model.alternatives() {
        return Err(Error::invalid("dataset schema differs from the model's"));
    }
    let (alt, var) = model.alternatives().resolve(&spec.alternative, &spec.variable)?;
    let deltas = spec.resolved_deltas()?;
    let truth = if spec.relabel {
        let t = truth.ok_or_else(|| Error::config("truth", "relabelling requires a ground-truth generator config"))?;
        t.validate()?;
        check_truth_schema(base)?;
        Some(t)
    } else {
        None
    };
    if base.is_empty() {
        return Err(Error::invalid("policy evaluation of an empty dataset"));
    }
    let k = model.alternatives().len();
    let results = deltas
        .par_iter()
        .map(|&delta| {
            let mut rng = delta_rng(seed, delta);
            let mut hits = 0usize;
            let mut excluded = 0usize;
            let mut predicted = vec![0usize; k];
            let mut labelled = vec![0usize; k];
            let mut x = Vec::new();
            for o in base.observations() {
                x.clone_from(&o.values);
                x[alt][var] += delta;
                let label = match truth {
                    Some(t) => match t.sample_choice(&x, &mut rng)? {
                        Some(y) => y,
                        None => {
                            excluded += 1;
                            continue;
                        }
                    },
                    None => o.chosen,
                };
                let p = model.predict(&x)?;
                predicted[p] += 1;
                labelled[label] += 1;
                hits += usize::from(p == label);
            }
            let n = base.len() - excluded;
            let share = |c: &[usize]| c.iter().map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 }).collect();
            Ok(DeltaResult {
                delta,
                n_evaluated: n,
                n_excluded: excluded,
                accuracy: if n > 0 { hits as f64 / n as f64 } else { f64::NAN },
                predicted_shares: share(&predicted),
                label_shares: share(&labelled),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyShift {
        alternative: spec.alternative.clone(),
        variable: spec.variable.clone(),
        relabel: spec.relabel,
        seed,
        results,
    })
}

/// `delta,n_evaluated,n_excluded,accuracy,predicted_<alt>...,label_<alt>...`
pub fn policy_csv(shift: &PolicyShift, alternatives: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["delta".to_string(), "n_evaluated".into(), "n_excluded".into(), "accuracy".into()];
    header.extend(alternatives.iter().map(|a| format!("predicted_{a}")));
    header.extend(alternatives.iter().map(|a| format!("label_{a}")));
    w.write_record(&header)?;
    for r in &shift.results {
        let mut row = vec![
            r.delta.to_string(),
            r.n_evaluated.to_string(),
            r.n_excluded.to_string(),
            r.accuracy.to_string(),
        ];
        row.extend(r.predicted_shares.iter().map(f64::to_string));
        row.extend(r.label_shares.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    super::csv_text(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grids() {
        let t = taxi_cost_deltas();
        assert_eq!((t.len(), t[0], t[15]), (16, -10.0, 20.0));
        assert!(t.contains(&0.0));
        let b = bus_access_deltas();
        assert_eq!((b.len(), b[0], b[14]), (15, -2.0, 5.0));
        assert!(b.contains(&0.0));
    }

    #[test]
    fn zero_delta_uses_base_stream() {
        let mut a = delta_rng(5, 0.0);
        let mut b = delta_rng(5, -0.0);
        let mut c = Rng::new(5);
        let x = a.open01();
        assert_eq!(x, b.open01());
        assert_eq!(x, c.open01());
        assert_ne!(delta_rng(5, 2.0).open01(), Rng::new(5).open01());
    }

    #[test]
    fn missing_default_sweep() {
        let spec = PolicySpec {
            deltas: None,
            ..PolicySpec::new("bus", "cost", vec![])
        };
        assert!(matches!(spec.resolved_deltas(), Err(Error::Config { .. })));
    }
}
