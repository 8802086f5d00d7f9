//! The two-mode bus/taxi generator with hidden feasibility rules.
//!
//! A bus whose access time exceeds the cap and a taxi whose cost exceeds
//! the cap are removed from the choice set, so neither is ever chosen.
//! Neither rule is visible in the recorded variables.

use serde::{Deserialize, Serialize};

use super::{Dataset, Observation, Provenance};
use crate::error::{Error, Result};
use crate::numcore::Rng;
use crate::utility::AlternativeSet;

pub const BUS: usize = 0;
pub const TAXI: usize = 1;
pub const SYNTHETIC_VARIABLES: [&str; 4] = ["cost", "travel_time", "access_time", "egress_time"];

const COST: usize = 0;
const ACCESS: usize = 2;

/// Sampling interval `[lo, hi]` of each variable for one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRanges {
    pub cost: [f64; 2],
    pub travel_time: [f64; 2],
    pub access_time: [f64; 2],
    pub egress_time: [f64; 2],
}

impl ModeRanges {
    fn as_array(&self) -> [[f64; 2]; 4] {
        [self.cost, self.travel_time, self.access_time, self.egress_time]
    }

    pub fn bus() -> Self {
        Self {
            cost: [2.0, 6.0],
            travel_time: [15.0, 60.0],
            access_time: [2.0, 10.0],
            egress_time: [2.0, 10.0],
        }
    }

    pub fn taxi() -> Self {
        Self {
            cost: [10.0, 35.0],
            travel_time: [10.0, 20.0],
            access_time: [0.0, 2.0],
            egress_time: [0.0, 2.0],
        }
    }
}

fn default_n_points() -> usize {
    10_000
}
fn default_coefficients() -> [f64; 4] {
    [-0.5, -0.2, -0.3, -0.4]
}
fn default_bus_access_cap() -> f64 {
    4.0
}
fn default_taxi_cost_cap() -> f64 {
    20.0
}
fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    #[serde(default = "default_n_points")]
    pub n_points: usize,
    /// Utility coefficients on (cost, travel time, access time, egress time).
    #[serde(default = "default_coefficients")]
    pub coefficients: [f64; 4],
    #[serde(default = "default_bus_access_cap")]
    pub bus_access_cap: f64,
    #[serde(default = "default_taxi_cost_cap")]
    pub taxi_cost_cap: f64,
    #[serde(default = "ModeRanges::bus")]
    pub bus: ModeRanges,
    #[serde(default = "ModeRanges::taxi")]
    pub taxi: ModeRanges,
    #[serde(default = "default_one")]
    pub gumbel_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_points: default_n_points(),
            coefficients: default_coefficients(),
            bus_access_cap: default_bus_access_cap(),
            taxi_cost_cap: default_taxi_cost_cap(),
            bus: ModeRanges::bus(),
            taxi: ModeRanges::taxi(),
            gumbel_scale: 1.0,
            seed: 0,
        }
    }
}

/// Counts reported alongside a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub n_candidates: usize,
    pub n_kept: usize,
    pub bus_infeasible: usize,
    pub taxi_infeasible: usize,
    pub both_infeasible: usize,
    pub seed: u64,
}

pub fn synthetic_alternatives() -> AlternativeSet {
    let vars: Vec<String> = SYNTHETIC_VARIABLES.iter().map(|s| s.to_string()).collect();
    AlternativeSet::new(vec!["bus".into(), "taxi".into()], vec![vars.clone(), vars]).expect("static schema")
}

impl SyntheticConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::config("n_points", "must be positive"));
        }
        if !self.coefficients.iter().all(|c| c.is_finite()) {
            return Err(Error::config("coefficients", "must be finite"));
        }
        if !self.bus_access_cap.is_finite() || !self.taxi_cost_cap.is_finite() {
            return Err(Error::config("caps", "must be finite"));
        }
        if !(self.gumbel_scale > 0.0 && self.gumbel_scale.is_finite()) {
            return Err(Error::config("gumbel_scale", "must be positive"));
        }
        for (mode, r) in [("bus", &self.bus), ("taxi", &self.taxi)] {
            for ([lo, hi], var) in r.as_array().into_iter().zip(SYNTHETIC_VARIABLES) {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::config(format!("{mode}.{var}"), format!("bad range [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    pub fn bus_feasible(&self, bus: &[f64]) -> bool {
        bus[ACCESS] <= self.bus_access_cap
    }

    pub fn taxi_feasible(&self, taxi: &[f64]) -> bool {
        taxi[COST] <= self.taxi_cost_cap
    }

    fn linear(&self, x: &[f64]) -> f64 {
        self.coefficients.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Deterministic utilities, `None` for an alternative outside the choice set.
    pub fn true_utilities(&self, values: &[Vec<f64>]) -> [Option<f64>; 2] {
        let bus = &values[BUS];
        let taxi = &values[TAXI];
        [
            self.bus_feasible(bus).then(|| self.linear(bus)),
            self.taxi_feasible(taxi).then(|| self.linear(taxi)),
        ]
    }

    /// Add fresh Gumbel noise to every feasible alternative and pick the
    /// largest. `None` when neither alternative is feasible (no draws made).
    pub fn sample_choice(&self, values: &[Vec<f64>], rng: &mut Rng) -> Result<Option<usize>> {
        let mut best: Option<(usize, f64)> = None;
        for (alt, v) in self.true_utilities(values).into_iter().enumerate() {
            if let Some(v) = v {
                let u = v + rng.gumbel(0.0, self.gumbel_scale)?;
                if best.is_none_or(|(_, b)| u > b) {
                    best = Some((alt, u));
                }
            }
        }
        Ok(best.map(|(alt, _)| alt))
    }

    fn draw(ranges: &ModeRanges, rng: &mut Rng) -> Vec<f64> {
        ranges.as_array().iter().map(|&[lo, hi]| rng.uniform(lo, hi)).collect()
    }
}

/// Draw `n_points` candidates and keep those with a feasible alternative.
///
/// Per candidate the draw order is: bus variables, taxi variables (in
/// `SYNTHETIC_VARIABLES` order), then one Gumbel draw per feasible mode.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, GenerationStats)> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut stats = GenerationStats {
        n_candidates: cfg.n_points,
        n_kept: 0,
        bus_infeasible: 0,
        taxi_infeasible: 0,
        both_infeasible: 0,
        seed: cfg.seed,
    };
    let mut observations = Vec::new();
    for _ in 0..cfg.n_points {
        let values = vec![SyntheticConfig::draw(&cfg.bus, &mut rng), SyntheticConfig::draw(&cfg.taxi, &mut rng)];
        let bus_ok = cfg.bus_feasible(&values[BUS]);
        let taxi_ok = cfg.taxi_feasible(&values[TAXI]);
        stats.bus_infeasible += usize::from(!bus_ok);
        stats.taxi_infeasible += usize::from(!taxi_ok);
        stats.both_infeasible += usize::from(!bus_ok && !taxi_ok);
        if let Some(chosen) = cfg.sample_choice(&values, &mut rng)? {
            observations.push(Observation { chosen, values });
        }
    }
    stats.n_kept = observations.len();
    let data = Dataset::new(
        synthetic_alternatives(),
        observations,
        Provenance::Synthetic { config: cfg.clone() },
    )?;
    Ok((data, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(bus_access: f64, taxi_cost: f64) -> Vec<Vec<f64>> {
        vec![vec![4.0, 30.0, bus_access, 3.0], vec![taxi_cost, 15.0, 1.0, 1.0]]
    }

    #[test]
    fn excluded_bus_forces_taxi() {
        let cfg = SyntheticConfig::default();
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            assert_eq!(cfg.sample_choice(&point(8.0, 12.0), &mut rng).unwrap(), Some(TAXI));
        }
        assert_eq!(cfg.sample_choice(&point(8.0, 25.0), &mut rng).unwrap(), None);
    }

    #[test]
    fn hand_utilities() {
        let cfg = SyntheticConfig::default();
        let [b, t] = cfg.true_utilities(&point(3.0, 20.0));
        assert!((b.unwrap() - (-2.0 - 6.0 - 0.9 - 1.2)).abs() < 1e-12);
        assert!((t.unwrap() - (-10.0 - 3.0 - 0.3 - 0.4)).abs() < 1e-12);
    }

    #[test]
    fn equal_utilities_split_evenly() {
        let cfg = SyntheticConfig::default();
        let x = vec![vec![4.0, 20.0, 2.0, 2.0], vec![4.0, 20.0, 2.0, 2.0]];
        let mut rng = Rng::new(9);
        let n = 100_000;
        let bus = (0..n).filter(|_| cfg.sample_choice(&x, &mut rng).unwrap() == Some(BUS)).count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((bus as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn generation_is_deterministic_and_respects_constraints() {
        let cfg = SyntheticConfig {
            n_points: 2000,
            ..SyntheticConfig::with_seed(5)
        };
        let (a, sa) = generate_synthetic(&cfg).unwrap();
        let (b, sb) = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert_eq!(sa.n_kept, sa.n_candidates - sa.both_infeasible);
        for o in a.observations() {
            if o.chosen == BUS {
                assert!(o.values[BUS][ACCESS] <= 4.0);
            } else {
                assert!(o.values[TAXI][COST] <= 20.0);
            }
        }
    }

    #[test]
    fn config_defaults_from_empty_json() {
        let cfg: SyntheticConfig = serde_json::from_str("{\"seed\": 3}").unwrap();
        assert_eq!(cfg, SyntheticConfig::with_seed(3));
        let bad = SyntheticConfig {
            gumbel_scale: 0.0,
            ..SyntheticConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
