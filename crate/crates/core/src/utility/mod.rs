//! Deterministic utility functions: linear, GAUNet, GAIUNet and ASU-DNN.

mod model;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Activation;

pub use model::{
    EvalCache, InteractionFunction, ParamSegments, ShapeFunction, ShapeUnit, Upstream, UtilityModel,
    UtilityTerms,
};

/// The choice set and the explanatory variables of each alternative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AlternativeSetRepr", into = "AlternativeSetRepr")]
pub struct AlternativeSet {
    names: Vec<String>,
    variables: Vec<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct AlternativeSetRepr {
    names: Vec<String>,
    variables: Vec<Vec<String>>,
}

impl From<AlternativeSet> for AlternativeSetRepr {
    fn from(a: AlternativeSet) -> Self {
        Self {
            names: a.names,
            variables: a.variables,
        }
    }
}

impl TryFrom<AlternativeSetRepr> for AlternativeSet {
    type Error = Error;
    fn try_from(r: AlternativeSetRepr) -> Result<Self> {
        AlternativeSet::new(r.names, r.variables)
    }
}

impl AlternativeSet {
    pub fn new(names: Vec<String>, variables: Vec<Vec<String>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::invalid("the choice set is empty"));
        }
        if names.len() != variables.len() {
            return Err(Error::invalid(format!(
                "{} alternatives but {} variable lists",
                names.len(),
                variables.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() || name.contains(':') || name.contains(',') {
                return Err(Error::invalid(format!("bad alternative name {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate alternative {name:?}")));
            }
        }
        for (alt, vars) in names.iter().zip(&variables) {
            let mut seen = HashSet::new();
            for v in vars {
                if v.is_empty() || v.contains(',') {
                    return Err(Error::invalid(format!("bad variable name {v:?} for {alt}")));
                }
                if !seen.insert(v.as_str()) {
                    return Err(Error::invalid(format!("duplicate variable {alt}:{v}")));
                }
            }
        }
        Ok(Self { names, variables })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, alt: usize) -> &str {
        &self.names[alt]
    }

    pub fn variables(&self, alt: usize) -> &[String] {
        &self.variables[alt]
    }

    pub fn variable_count(&self, alt: usize) -> usize {
        self.variables[alt].len()
    }

    pub fn total_variables(&self) -> usize {
        self.variables.iter().map(Vec::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn variable_index(&self, alt: usize, variable: &str) -> Option<usize> {
        self.variables[alt].iter().position(|v| v == variable)
    }

    /// Resolve `(alternative name, variable name)` to indices.
    pub fn resolve(&self, alternative: &str, variable: &str) -> Result<(usize, usize)> {
        let alt = self
            .index_of(alternative)
            .ok_or_else(|| Error::invalid(format!("unknown alternative {alternative:?}")))?;
        let var = self
            .variable_index(alt, variable)
            .ok_or_else(|| Error::invalid(format!("unknown variable {alternative}:{variable}")))?;
        Ok((alt, var))
    }

    /// Position of `(alt, var)` when all variables are laid out alternative by alternative.
    pub fn flat_index(&self, alt: usize, var: usize) -> usize {
        self.variables[..alt].iter().map(Vec::len).sum::<usize>() + var
    }

    /// All `(alt, var)` pairs in flat order.
    pub fn columns(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.variables
            .iter()
            .enumerate()
            .flat_map(|(a, vars)| (0..vars.len()).map(move |v| (a, v)))
    }

    /// Column label used in dataset files, e.g. `bus:travel_time`.
    pub fn column_label(&self, alt: usize, var: usize) -> String {
        format!("{}:{}", self.names[alt], self.variables[alt][var])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "gaunet")]
    GaUnet,
    #[serde(rename = "gaiunet")]
    GaiUnet,
    #[serde(rename = "asu_dnn")]
    AsuDnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::GaUnet => "gaunet",
            ModelKind::GaiUnet => "gaiunet",
            ModelKind::AsuDnn => "asu_dnn",
        }
    }

    pub fn is_additive(self) -> bool {
        matches!(self, ModelKind::GaUnet | ModelKind::GaiUnet)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Variables whose shape function (network and outer weight) is pooled.
///
/// With `alternatives` unset the group covers every alternative that has
/// `variable`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShareGroup {
    pub name: String,
    pub variable: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternatives: Option<Vec<String>>,
}

impl ShareGroup {
    pub fn across_alternatives(name: &str, variable: &str) -> Self {
        Self {
            name: name.to_string(),
            variable: variable.to_string(),
            alternatives: None,
        }
    }

    /// `(alt, var)` members of the group within `alts`.
    pub fn members(&self, alts: &AlternativeSet) -> Result<Vec<(usize, usize)>> {
        let candidates: Vec<usize> = match &self.alternatives {
            Some(names) => names
                .iter()
                .map(|n| {
                    alts.index_of(n).ok_or_else(|| {
                        Error::invalid(format!("share group {:?}: unknown alternative {n:?}", self.name))
                    })
                })
                .collect::<Result<_>>()?,
            None => (0..alts.len()).collect(),
        };
        let mut members = Vec::new();
        for a in candidates {
            match alts.variable_index(a, &self.variable) {
                Some(v) => members.push((a, v)),
                None if self.alternatives.is_some() => {
                    return Err(Error::invalid(format!(
                        "share group {:?}: {} has no variable {:?}",
                        self.name,
                        alts.name(a),
                        self.variable
                    )))
                }
                None => {}
            }
        }
        if members.len() < 2 {
            return Err(Error::invalid(format!(
                "share group {:?} must cover at least two alternatives",
                self.name
            )));
        }
        Ok(members)
    }
}

fn default_hidden() -> Vec<usize> {
    vec![5, 5]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

/// Architecture of a utility model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden widths of every shape, interaction and dense network.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub share_groups: Vec<ShareGroup>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            hidden: default_hidden(),
            activation: default_activation(),
            share_groups: Vec::new(),
        }
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_share_group(mut self, group: ShareGroup) -> Self {
        self.share_groups.push(group);
        self
    }

    pub fn layer_sizes(&self, input_width: usize) -> Vec<usize> {
        let mut sizes = vec![input_width];
        sizes.extend(&self.hidden);
        sizes.push(1);
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn rejects_duplicates() {
        assert!(AlternativeSet::new(s(&["bus", "bus"]), vec![vec![], vec![]]).is_err());
        assert!(AlternativeSet::new(s(&["bus"]), vec![s(&["cost", "cost"])]).is_err());
        assert!(AlternativeSet::new(s(&["bus"]), vec![]).is_err());
    }

    #[test]
    fn flat_indexing() {
        let alts = AlternativeSet::new(s(&["a", "b"]), vec![s(&["x", "y"]), s(&["z"])]).unwrap();
        assert_eq!(alts.flat_index(1, 0), 2);
        assert_eq!(alts.columns().collect::<Vec<_>>(), vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(alts.column_label(0, 1), "a:y");
        assert_eq!(alts.resolve("b", "z").unwrap(), (1, 0));
        assert!(alts.resolve("b", "x").is_err());
    }

    #[test]
    fn share_group_membership() {
        let alts = AlternativeSet::new(
            s(&["a", "b", "c"]),
            vec![s(&["time"]), s(&["time", "cost"]), s(&["cost"])],
        )
        .unwrap();
        let g = ShareGroup::across_alternatives("t", "time");
        assert_eq!(g.members(&alts).unwrap(), vec![(0, 0), (1, 0)]);
        let lone = ShareGroup {
            name: "x".into(),
            variable: "cost".into(),
            alternatives: Some(s(&["c"])),
        };
        assert!(lone.members(&alts).is_err());
    }
}
