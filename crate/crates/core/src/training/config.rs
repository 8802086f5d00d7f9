use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mnl::PenaltyConfig;

/// How importance scores are compared with the selection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceNormalization {
    /// Threshold the mean absolute contribution directly.
    #[default]
    Raw,
    /// Threshold each variable's share of the summed magnitudes.
    Share,
}

/// Optional per-stage learning rates of the staged interaction fit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRates {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main_effects: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interactions: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_tune: Option<f64>,
}

/// Optimizer, regularization and selection settings.
///
/// Regularization strengths are given as non-negative magnitudes and negated
/// when the objective is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate after every epoch; 1 disables decay.
    pub learning_rate_decay: f64,
    /// Epoch limit of every stage.
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Held-out share used for early stopping; 0 monitors the training objective.
    pub validation_fraction: f64,
    pub l1: f64,
    pub l1_interaction: f64,
    pub marginal_clarity: f64,
    /// `inf` disables interaction selection.
    #[serde(serialize_with = "ser_threshold", deserialize_with = "de_threshold")]
    pub importance_threshold: f64,
    pub importance_grid_points: usize,
    pub importance_normalization: ImportanceNormalization,
    pub stage_learning_rates: StageRates,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 200,
            learning_rate: 1e-3,
            learning_rate_decay: 1.0,
            max_epochs: 1000,
            early_stop_patience: 50,
            validation_fraction: 0.1,
            l1: 1e-3,
            l1_interaction: 1e-3,
            marginal_clarity: 1e-3,
            importance_threshold: 0.1,
            importance_grid_points: 100,
            importance_normalization: ImportanceNormalization::Raw,
            stage_learning_rates: StageRates::default(),
            seed: 0,
        }
    }
}

fn ser_threshold<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_threshold<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Number(x) => Ok(x),
        Repr::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
        Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn penalties(&self) -> PenaltyConfig {
        PenaltyConfig::from_magnitudes(self.l1, self.l1_interaction, self.marginal_clarity)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive and finite, got {v}")))
            }
        };
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        positive("learning_rate", self.learning_rate)?;
        positive("learning_rate_decay", self.learning_rate_decay)?;
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be positive"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction", "must lie in [0, 1)"));
        }
        for (name, v) in [
            ("l1", self.l1),
            ("l1_interaction", self.l1_interaction),
            ("marginal_clarity", self.marginal_clarity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be a finite magnitude >= 0, got {v}")));
            }
        }
        if !(self.importance_threshold >= 0.0) {
            return Err(Error::config("importance_threshold", "must be >= 0"));
        }
        if self.importance_grid_points == 0 {
            return Err(Error::config("importance_grid_points", "must be positive"));
        }
        let rates = &self.stage_learning_rates;
        for (name, r) in [
            ("stage_learning_rates.main_effects", rates.main_effects),
            ("stage_learning_rates.interactions", rates.interactions),
            ("stage_learning_rates.fine_tune", rates.fine_tune),
        ] {
            if let Some(r) = r {
                positive(name, r)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_infinite_threshold() {
        let cfg: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.penalties().alpha, -1e-3);

        let inf: TrainConfig = serde_json::from_str(r#"{"importance_threshold": "inf"}"#).unwrap();
        assert!(inf.importance_threshold.is_infinite());
        let text = serde_json::to_string(&inf).unwrap();
        assert!(text.contains(r#""importance_threshold":"inf""#));
        assert_eq!(serde_json::from_str::<TrainConfig>(&text).unwrap(), inf);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"batchsize": 3}"#).is_err());
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { .. })));
        let neg = TrainConfig {
            l1: -1.0,
            ..TrainConfig::default()
        };
        assert!(neg.validate().is_err());
    }
}
