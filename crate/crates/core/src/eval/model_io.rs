use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance, Standardizer};
use crate::error::{Error, Result};
use crate::mnl;
use crate::training::TrainConfig;
use crate::utility::{AlternativeSet, ModelKind, ModelSpec, UtilityModel};

/// Format version written into every saved model. Files with a different
/// major version are rejected.
pub const MODEL_FORMAT_VERSION: &str = "1.0.0";

/// A trained utility model together with the input scaling it expects.
///
/// All `x` arguments are in original (unstandardized) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModel {
    pub version: String,
    pub spec: ModelSpec,
    pub utility: UtilityModel,
    pub standardizer: Standardizer,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub provenance: Provenance,
}

impl FittedModel {
    pub fn new(
        spec: ModelSpec,
        utility: UtilityModel,
        standardizer: Standardizer,
        train_config: TrainConfig,
        provenance: Provenance,
    ) -> Result<Self> {
        let m = Self {
            version: MODEL_FORMAT_VERSION.to_string(),
            spec,
            seed: train_config.seed,
            utility,
            standardizer,
            train_config,
            provenance,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.utility.alternatives() != self.standardizer.alternatives() {
            return Err(Error::invalid("standardizer and utility model disagree on the schema"));
        }
        if self.utility.kind() != self.spec.kind {
            return Err(Error::invalid("model spec and utility kind disagree"));
        }
        for (a, v) in self.alternatives().columns() {
            let s = self.standardizer.stats(a, v);
            let ok = [s.mean, s.stdev, s.min, s.max].iter().all(|x| x.is_finite()) && s.stdev > 0.0;
            if !ok {
                return Err(Error::Numeric {
                    index: self.alternatives().flat_index(a, v),
                    message: format!("bad standardizer entry for {}", self.alternatives().column_label(a, v)),
                });
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.utility.kind()
    }

    pub fn alternatives(&self) -> &AlternativeSet {
        self.utility.alternatives()
    }

    /// Dataset in model input units.
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        self.standardizer.transform(data)
    }

    pub fn utilities(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        if x.len() != self.alternatives().len() {
            return Err(Error::invalid("one variable vector per alternative required"));
        }
        self.utility.utility_vector(&self.standardizer.transform_values(x))
    }

    pub fn probabilities(&self, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        mnl::softmax(&self.utilities(x)?)
    }

    /// Most probable alternative; ties go to the lowest index.
    pub fn predict(&self, x: &[Vec<f64>]) -> Result<usize> {
        Ok(argmax(&self.probabilities(x)?))
    }

    pub fn log_likelihood(&self, data: &Dataset) -> Result<f64> {
        mnl::log_likelihood(&self.utility, &self.transform(data)?)
    }

    /// Share of observations whose predicted alternative was chosen.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::invalid("accuracy of an empty dataset"));
        }
        let mut hits = 0usize;
        for o in data.observations() {
            hits += usize::from(self.predict(&o.values)? == o.chosen);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Contribution of one variable at an original-unit value.
    pub fn contribution(&self, alt: usize, var: usize, x: f64) -> Result<f64> {
        self.utility
            .variable_contribution(alt, var, self.standardizer.transform_value(alt, var, x))
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn model_to_json(model: &FittedModel) -> Result<String> {
    let mut text = serde_json::to_string_pretty(model)?;
    text.push('\n');
    Ok(text)
}

pub fn model_from_json(text: &str) -> Result<FittedModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        path: "<document>".into(),
        message: e.to_string(),
    })?;
    let version = value.get("version").and_then(|v| v.as_str()).ok_or_else(|| Error::Schema {
        path: "version".into(),
        message: "missing version tag".into(),
    })?;
    let major = |v: &str| v.split('.').next().map(str::to_string);
    if major(version) != major(MODEL_FORMAT_VERSION) {
        return Err(Error::Schema {
            path: "version".into(),
            message: format!("unsupported model format {version}, expected {MODEL_FORMAT_VERSION}"),
        });
    }
    let mut de = serde_json::Deserializer::from_str(text);
    let model: FittedModel = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &FittedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    fn sample() -> FittedModel {
        let alts = crate::data::synthetic_alternatives();
        let spec = ModelSpec::new(ModelKind::GaUnet);
        let utility = UtilityModel::initialize(&spec, &alts, &mut Rng::new(11)).unwrap();
        let ranges: Vec<(f64, f64)> = alts.columns().map(|(a, v)| (a as f64, 10.0 + v as f64)).collect();
        let st = Standardizer::identity_with_ranges(&alts, &ranges).unwrap();
        FittedModel::new(spec, utility, st, TrainConfig::default(), Provenance::Memory).unwrap()
    }

    #[test]
    fn json_round_trip_is_stable() {
        let m = sample();
        let first = model_to_json(&m).unwrap();
        let back = model_from_json(&first).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back).unwrap(), first);
    }

    #[test]
    fn missing_weights_name_the_path() {
        let text = model_to_json(&sample()).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["utility"]["terms"]["additive"]["units"][1]["net"]["layers"][0]
            .as_object_mut()
            .unwrap()
            .remove("weights");
        match model_from_json(&v.to_string()) {
            Err(Error::Schema { path, .. }) => {
                assert!(path.contains("units[1]"), "{path}");
                assert!(path.contains("layers[0]"), "{path}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn major_version_checked() {
        let text = model_to_json(&sample()).unwrap().replace("\"1.0.0\"", "\"2.0.0\"");
        assert!(matches!(model_from_json(&text), Err(Error::Schema { path, .. }) if path == "version"));
        let minor = model_to_json(&sample()).unwrap().replace("\"1.0.0\"", "\"1.3.0\"");
        assert!(model_from_json(&minor).is_ok());
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
