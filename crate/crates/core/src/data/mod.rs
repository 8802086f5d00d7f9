//! Choice datasets, file formats, input scaling, the bus/taxi generator and
//! multicollinearity screening.

mod csv_io;
mod standardize;
mod synthetic;
mod vif;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::AlternativeSet;

pub use csv_io::{load_csv, read_csv, write_csv, write_csv_to};
pub use standardize::{standardize, ColumnStats, Standardizer};
pub use synthetic::{
    generate_synthetic, synthetic_alternatives, GenerationStats, ModeRanges, SyntheticConfig, BUS, TAXI,
    SYNTHETIC_VARIABLES,
};
pub use vif::{vif, vif_columns, VifEntry, VifReport, VIF_THRESHOLD};

/// One chooser: the chosen alternative and every alternative's variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub chosen: usize,
    /// `values[alt][var]`.
    pub values: Vec<Vec<f64>>,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    File { path: String },
    Synthetic { config: SyntheticConfig },
    Subset { parent: Box<Provenance>, description: String },
    Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    alternatives: AlternativeSet,
    observations: Vec<Observation>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(alternatives: AlternativeSet, observations: Vec<Observation>, provenance: Provenance) -> Result<Self> {
        for (row, obs) in observations.iter().enumerate() {
            if obs.chosen >= alternatives.len() {
                return Err(Error::invalid(format!(
                    "observation {row} chose alternative {} of {}",
                    obs.chosen,
                    alternatives.len()
                )));
            }
            if obs.values.len() != alternatives.len() {
                return Err(Error::invalid(format!("observation {row} has the wrong number of alternatives")));
            }
            for (a, vals) in obs.values.iter().enumerate() {
                if vals.len() != alternatives.variable_count(a) {
                    return Err(Error::invalid(format!(
                        "observation {row} has {} values for {} (expected {})",
                        vals.len(),
                        alternatives.name(a),
                        alternatives.variable_count(a)
                    )));
                }
                if let Some(v) = vals.iter().position(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!(
                        "observation {row} has a non-finite value for {}",
                        alternatives.column_label(a, v)
                    )));
                }
            }
        }
        Ok(Self {
            alternatives,
            observations,
            provenance,
        })
    }

    pub fn alternatives(&self) -> &AlternativeSet {
        &self.alternatives
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observations at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], description: &str) -> Dataset {
        Dataset {
            alternatives: self.alternatives.clone(),
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
            provenance: Provenance::Subset {
                parent: Box::new(self.provenance.clone()),
                description: description.to_string(),
            },
        }
    }

    /// Same schema, values replaced by `f(alt, var, value)`.
    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Dataset {
        let observations = self
            .observations
            .iter()
            .map(|o| Observation {
                chosen: o.chosen,
                values: o
                    .values
                    .iter()
                    .enumerate()
                    .map(|(a, vals)| vals.iter().enumerate().map(|(v, &x)| f(a, v, x)).collect())
                    .collect(),
            })
            .collect();
        Dataset {
            alternatives: self.alternatives.clone(),
            observations,
            provenance: self.provenance.clone(),
        }
    }

    pub fn column(&self, alt: usize, var: usize) -> Vec<f64> {
        self.observations.iter().map(|o| o.values[alt][var]).collect()
    }

    /// Fraction of observations choosing each alternative.
    pub fn choice_shares(&self) -> Vec<f64> {
        let mut counts = vec![0.0; self.alternatives.len()];
        for o in &self.observations {
            counts[o.chosen] += 1.0;
        }
        let n = self.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }
}
