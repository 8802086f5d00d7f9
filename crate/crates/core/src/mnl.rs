//! Multinomial logit choice probabilities, the log-likelihood, the sparsity
//! and marginal-clarity penalties, and the penalized objective with its
//! analytic gradient.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::utility::{EvalCache, ModelKind, Upstream, UtilityModel};

/// Penalty weights of the objective. All are non-positive because the
/// objective is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub alpha: f64,
    pub alpha_interaction: f64,
    pub beta_clarity: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self::from_magnitudes(1e-3, 1e-3, 1e-3)
    }
}

impl PenaltyConfig {
    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            alpha_interaction: 0.0,
            beta_clarity: 0.0,
        }
    }

    /// Build from non-negative magnitudes, which are negated.
    pub fn from_magnitudes(l1: f64, l1_interaction: f64, clarity: f64) -> Self {
        Self {
            alpha: -l1.abs(),
            alpha_interaction: -l1_interaction.abs(),
            beta_clarity: -clarity.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("alpha_interaction", self.alpha_interaction),
            ("beta_clarity", self.beta_clarity),
        ] {
            if !(v.is_finite() && v <= 0.0) {
                return Err(Error::invalid(format!("penalty {name} must be finite and <= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Components of the penalized objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub log_likelihood: f64,
    pub l1_main: f64,
    pub l1_interaction: f64,
    pub marginal_clarity: f64,
    pub total: f64,
}

impl Objective {
    pub fn compose(log_likelihood: f64, l1_main: f64, l1_interaction: f64, marginal_clarity: f64, cfg: &PenaltyConfig) -> Self {
        Self {
            log_likelihood,
            l1_main,
            l1_interaction,
            marginal_clarity,
            total: log_likelihood
                + cfg.alpha * l1_main
                + cfg.alpha_interaction * l1_interaction
                + cfg.beta_clarity * marginal_clarity,
        }
    }
}

/// Sign with `sign(0) = 0`, the subgradient used at `|.|` kinks.
#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Softmax written into `out`, with the maximum subtracted first.
fn softmax_into(v: &[f64], out: &mut [f64]) -> Result<()> {
    if let Some(index) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric {
            index,
            message: "non-finite utility".into(),
        });
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    let mut out = vec![0.0; v.len()];
    softmax_into(v, &mut out)?;
    Ok(out)
}

/// `ln softmax(v)[i]`, stable for large utility gaps.
fn log_prob(v: &[f64], i: usize) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = v.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    v[i] - lse
}

pub fn choice_probabilities(model: &UtilityModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
    softmax(&model.utility_vector(x)?)
}

fn check_schema(model: &UtilityModel, data: &Dataset) -> Result<()> {
    if model.alternatives() != data.alternatives() {
        return Err(Error::invalid("dataset alternatives or variables differ from the model's"));
    }
    Ok(())
}

pub fn log_likelihood(model: &UtilityModel, data: &Dataset) -> Result<f64> {
    check_schema(model, data)?;
    let mut cache = model.cache();
    let mut ll = 0.0;
    for (d, obs) in data.observations().iter().enumerate() {
        model.evaluate(&obs.values, &mut cache);
        check_utilities(&cache.utilities, d)?;
        ll += log_prob(&cache.utilities, obs.chosen);
    }
    Ok(ll)
}

fn check_utilities(v: &[f64], observation: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            index: observation,
            message: "non-finite utility".into(),
        })
    }
}

fn require_additive(model: &UtilityModel) -> Result<()> {
    if model.kind().is_additive() {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            expected: "gaunet or gaiunet".into(),
            found: model.kind().to_string(),
        })
    }
}

fn require_gaiunet(model: &UtilityModel) -> Result<()> {
    if model.kind() == ModelKind::GaiUnet {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            expected: "gaiunet".into(),
            found: model.kind().to_string(),
        })
    }
}

/// `sum |w_ij|` with one term per shape function, so a shared weight is
/// counted once for every variable it serves.
fn l1_main_unchecked(model: &UtilityModel) -> f64 {
    let units = model.units();
    model.shapes().iter().map(|s| units[s.unit()].outer_weight.abs()).sum()
}

fn l1_interaction_unchecked(model: &UtilityModel) -> f64 {
    model.interactions().iter().map(|it| it.outer_weight.abs()).sum()
}

pub fn l1_main(model: &UtilityModel) -> Result<f64> {
    require_additive(model)?;
    Ok(l1_main_unchecked(model))
}

pub fn l1_interaction(model: &UtilityModel) -> Result<f64> {
    require_gaiunet(model)?;
    Ok(l1_interaction_unchecked(model))
}

/// Number of interaction pairs per alternative.
fn pair_counts(model: &UtilityModel) -> Vec<usize> {
    let mut counts = vec![0; model.alternatives().len()];
    for it in model.interactions() {
        counts[it.alternative()] += 1;
    }
    counts
}

/// Per-alternative inner sums `(1/|S_i|) sum v_ij * v_ijk` for the
/// observation held in `cache`.
fn clarity_inner(model: &UtilityModel, cache: &EvalCache, counts: &[usize], inner: &mut [f64]) {
    inner.iter_mut().for_each(|v| *v = 0.0);
    let alts = model.alternatives();
    let units = model.units();
    let shapes = model.shapes();
    for (i, it) in model.interactions().iter().enumerate() {
        let a = it.alternative();
        let s_idx = alts.flat_index(a, it.pair().0);
        let v_main = units[shapes[s_idx].unit()].outer_weight * cache.shape_outputs[s_idx];
        let v_pair = it.outer_weight * cache.interaction_outputs[i];
        inner[a] += v_main * v_pair / counts[a] as f64;
    }
}

pub fn marginal_clarity(model: &UtilityModel, data: &Dataset) -> Result<f64> {
    require_gaiunet(model)?;
    check_schema(model, data)?;
    let counts = pair_counts(model);
    let mut inner = vec![0.0; counts.len()];
    let mut cache = model.cache();
    let mut omega = 0.0;
    for obs in data.observations() {
        model.evaluate(&obs.values, &mut cache);
        clarity_inner(model, &cache, &counts, &mut inner);
        omega += inner.iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(omega)
}

/// Smallest `|inner sum|` of the clarity penalty over every observation and
/// every alternative that has interactions; `+inf` when there are none.
/// The penalty is differentiable wherever this is nonzero.
pub fn clarity_kink_distance(model: &UtilityModel, data: &Dataset) -> Result<f64> {
    require_gaiunet(model)?;
    check_schema(model, data)?;
    let counts = pair_counts(model);
    let mut inner = vec![0.0; counts.len()];
    let mut cache = model.cache();
    let mut nearest = f64::INFINITY;
    for obs in data.observations() {
        model.evaluate(&obs.values, &mut cache);
        clarity_inner(model, &cache, &counts, &mut inner);
        for (v, &c) in inner.iter().zip(&counts) {
            if c > 0 {
                nearest = nearest.min(v.abs());
            }
        }
    }
    Ok(nearest)
}

/// Data-dependent parts of the objective over a set of observations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchTerms {
    pub log_likelihood: f64,
    pub marginal_clarity: f64,
}

/// Reusable buffers for [`accumulate_batch`].
#[derive(Debug, Clone)]
pub struct BatchScratch {
    cache: EvalCache,
    probs: Vec<f64>,
    d_utility: Vec<f64>,
    inner: Vec<f64>,
    counts: Vec<usize>,
    shape_extra: Vec<f64>,
    interaction_extra: Vec<f64>,
}

impl BatchScratch {
    pub fn new(model: &UtilityModel) -> Self {
        let k = model.alternatives().len();
        Self {
            cache: model.cache(),
            probs: vec![0.0; k],
            d_utility: vec![0.0; k],
            inner: vec![0.0; k],
            counts: pair_counts(model),
            shape_extra: vec![0.0; model.shapes().len()],
            interaction_extra: vec![0.0; model.interactions().len()],
        }
    }
}

/// Sum the log-likelihood and the clarity penalty over `observations` and,
/// when `grad` is given, add the gradient of `LL + beta * Omega` into it.
///
/// `beta` is only used for the gradient; pass the clarity weight of the
/// objective being maximized.
pub fn accumulate_batch<'a>(
    model: &UtilityModel,
    observations: impl IntoIterator<Item = &'a Observation>,
    beta: f64,
    scratch: &mut BatchScratch,
    mut grad: Option<&mut [f64]>,
) -> Result<BatchTerms> {
    let has_pairs = !model.interactions().is_empty();
    let mut terms = BatchTerms::default();
    for (d, obs) in observations.into_iter().enumerate() {
        model.evaluate(&obs.values, &mut scratch.cache);
        let v = &scratch.cache.utilities;
        check_utilities(v, d)?;
        terms.log_likelihood += log_prob(v, obs.chosen);
        if has_pairs {
            clarity_inner(model, &scratch.cache, &scratch.counts, &mut scratch.inner);
            terms.marginal_clarity += scratch.inner.iter().map(|v| v.abs()).sum::<f64>();
        }
        let Some(grad) = grad.as_deref_mut() else { continue };

        softmax_into(&scratch.cache.utilities, &mut scratch.probs)?;
        for (i, (du, p)) in scratch.d_utility.iter_mut().zip(&scratch.probs).enumerate() {
            *du = if i == obs.chosen { 1.0 - p } else { -p };
        }
        let upstream = if has_pairs && beta != 0.0 {
            clarity_upstream(model, scratch, beta);
            Upstream {
                utility: &scratch.d_utility,
                shape_extra: Some(&scratch.shape_extra),
                interaction_extra: Some(&scratch.interaction_extra),
            }
        } else {
            Upstream::utilities(&scratch.d_utility)
        };
        model.accumulate_gradient(&obs.values, &mut scratch.cache, &upstream, grad);
    }
    Ok(terms)
}

/// Derivatives of `beta * sum_i |inner_i|` with respect to each `v_ij` and
/// each `v_ijk`, written into the scratch buffers.
fn clarity_upstream(model: &UtilityModel, scratch: &mut BatchScratch, beta: f64) {
    scratch.shape_extra.iter_mut().for_each(|v| *v = 0.0);
    let alts = model.alternatives();
    let units = model.units();
    let shapes = model.shapes();
    for (i, it) in model.interactions().iter().enumerate() {
        let a = it.alternative();
        let s_idx = alts.flat_index(a, it.pair().0);
        let scale = beta * sign0(scratch.inner[a]) / scratch.counts[a] as f64;
        let v_main = units[shapes[s_idx].unit()].outer_weight * scratch.cache.shape_outputs[s_idx];
        let v_pair = it.outer_weight * scratch.cache.interaction_outputs[i];
        scratch.shape_extra[s_idx] += scale * v_pair;
        scratch.interaction_extra[i] = scale * v_main;
    }
}

/// Add `scale * (alpha * dL1 + alpha_I * dL1_I)` into `grad`.
pub fn add_penalty_gradient(model: &UtilityModel, cfg: &PenaltyConfig, scale: f64, grad: &mut [f64]) {
    if !model.kind().is_additive() {
        return;
    }
    let idx = model.unit_weight_indices();
    let units = model.units();
    for s in model.shapes() {
        let u = s.unit();
        grad[idx[u]] += scale * cfg.alpha * sign0(units[u].outer_weight);
    }
    for (it, &i) in model.interactions().iter().zip(&model.interaction_weight_indices()) {
        grad[i] += scale * cfg.alpha_interaction * sign0(it.outer_weight);
    }
}

/// Penalty components that apply to `model`'s kind, zero otherwise.
pub fn weight_penalties(model: &UtilityModel) -> (f64, f64) {
    if model.kind().is_additive() {
        (l1_main_unchecked(model), l1_interaction_unchecked(model))
    } else {
        (0.0, 0.0)
    }
}

pub fn objective(model: &UtilityModel, data: &Dataset, cfg: &PenaltyConfig) -> Result<Objective> {
    cfg.validate()?;
    check_schema(model, data)?;
    let mut scratch = BatchScratch::new(model);
    let terms = accumulate_batch(model, data.observations(), cfg.beta_clarity, &mut scratch, None)?;
    let (l1, l1i) = weight_penalties(model);
    Ok(Objective::compose(terms.log_likelihood, l1, l1i, terms.marginal_clarity, cfg))
}

/// Gradient of `objective(..).total` over the flat trainable parameters of
/// `model` (see [`UtilityModel::params`]).
pub fn objective_gradients(model: &UtilityModel, data: &Dataset, cfg: &PenaltyConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_schema(model, data)?;
    let mut grad = vec![0.0; model.param_count()];
    let mut scratch = BatchScratch::new(model);
    accumulate_batch(model, data.observations(), cfg.beta_clarity, &mut scratch, Some(&mut grad))?;
    add_penalty_gradient(model, cfg, 1.0, &mut grad);
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            index,
            message: "non-finite gradient".into(),
        });
    }
    Ok(grad)
}

/// Expand the free-ASC block of a flat gradient to one entry per
/// alternative, with the pinned first alternative at 0.
pub fn asc_gradient(model: &UtilityModel, grad: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0];
    out.extend_from_slice(&grad[model.segments().asc]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::numcore::{Activation, Mlp, Rng};
    use crate::utility::{AlternativeSet, InteractionFunction, ModelSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn alts(k: usize, p: usize) -> AlternativeSet {
        AlternativeSet::new(
            (0..k).map(|a| format!("alt{a}")).collect(),
            (0..k).map(|_| (0..p).map(|v| format!("x{v}")).collect()).collect(),
        )
        .unwrap()
    }

    fn random_data(alts: &AlternativeSet, n: usize, seed: u64) -> Dataset {
        let mut rng = Rng::new(seed);
        let obs = (0..n)
            .map(|i| Observation {
                chosen: i % alts.len(),
                values: (0..alts.len())
                    .map(|a| (0..alts.variable_count(a)).map(|_| rng.uniform(-2.0, 2.0)).collect())
                    .collect(),
            })
            .collect();
        Dataset::new(alts.clone(), obs, Provenance::Memory).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(p[1], 0.26894, epsilon = 1e-5);
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1] >= 0.0 && p[1] < 1e-300);
        assert!(matches!(softmax(&[f64::NAN, 0.0]), Err(Error::Numeric { index: 0, .. })));
    }

    #[test]
    fn zero_model_likelihood() {
        let a = alts(3, 2);
        let m = UtilityModel::zeros(&ModelSpec::new(ModelKind::GaUnet), &a).unwrap();
        let d = random_data(&a, 17, 1);
        assert_abs_diff_eq!(log_likelihood(&m, &d).unwrap(), 17.0 * (1.0f64 / 3.0).ln(), epsilon = 1e-10);
        let empty = Dataset::new(a, vec![], Provenance::Memory).unwrap();
        assert_eq!(log_likelihood(&m, &empty).unwrap(), 0.0);
    }

    #[test]
    fn one_observation_symmetric() {
        let a = alts(2, 1);
        let m = UtilityModel::zeros(&ModelSpec::new(ModelKind::Linear), &a).unwrap();
        let d = random_data(&a, 1, 2);
        assert_abs_diff_eq!(log_likelihood(&m, &d).unwrap(), -std::f64::consts::LN_2, epsilon = 1e-12);
    }

    fn affine(weights: &[f64]) -> Mlp {
        Mlp::from_layers(vec![(vec![weights.to_vec()], vec![0.0])], Activation::Identity).unwrap()
    }

    fn gaiunet_fixture(main_w: f64, pair_w: f64) -> UtilityModel {
        // one alternative-0 pair: v_main = main_w * x0, v_pair = pair_w * (x0 + x1)
        let a = alts(2, 2);
        let mut m = UtilityModel::zeros(&ModelSpec::new(ModelKind::GaiUnet).with_hidden(vec![]), &a).unwrap();
        for u in m.units_mut() {
            u.net = affine(&[1.0]);
        }
        m.units_mut()[0].outer_weight = main_w;
        let it = InteractionFunction::new(0, (0, 1), affine(&[1.0, 1.0]), pair_w).unwrap();
        UtilityModel::additive(
            ModelKind::GaiUnet,
            a,
            vec![0.0, 0.0],
            m.units().to_vec(),
            m.shapes().to_vec(),
            vec![it],
        )
        .unwrap()
    }

    #[test]
    fn clarity_hand_value() {
        // x0 = 1, x1 = 0.5: v_main = 2 * 1, v_pair = 2 * 1.5 = 3
        let m = gaiunet_fixture(2.0, 2.0);
        let d = Dataset::new(
            m.alternatives().clone(),
            vec![Observation {
                chosen: 0,
                values: vec![vec![1.0, 0.5], vec![0.0, 0.0]],
            }],
            Provenance::Memory,
        )
        .unwrap();
        assert_abs_diff_eq!(marginal_clarity(&m, &d).unwrap(), 6.0, epsilon = 1e-12);
        let flipped = gaiunet_fixture(2.0, -2.0);
        assert_abs_diff_eq!(marginal_clarity(&flipped, &d).unwrap(), 6.0, epsilon = 1e-12);
        let off = gaiunet_fixture(2.0, 0.0);
        assert_eq!(marginal_clarity(&off, &d).unwrap(), 0.0);
    }

    #[test]
    fn l1_sums() {
        let a = alts(2, 1);
        let mut m = UtilityModel::zeros(&ModelSpec::new(ModelKind::GaUnet), &a).unwrap();
        assert_eq!(l1_main(&m).unwrap(), 0.0);
        m.units_mut()[0].outer_weight = -0.5;
        m.units_mut()[1].outer_weight = 0.2;
        assert_abs_diff_eq!(l1_main(&m).unwrap(), 0.7, epsilon = 1e-15);
        assert!(l1_interaction(&m).is_err());

        let shared = ModelSpec::new(ModelKind::GaUnet)
            .with_share_group(crate::utility::ShareGroup::across_alternatives("g", "x0"));
        let mut s = UtilityModel::zeros(&shared, &a).unwrap();
        assert_eq!(s.units().len(), 1);
        s.units_mut()[0].outer_weight = 1.0;
        assert_eq!(l1_main(&s).unwrap(), 2.0);

        let lin = UtilityModel::zeros(&ModelSpec::new(ModelKind::Linear), &a).unwrap();
        assert!(l1_main(&lin).is_err());
    }

    #[test]
    fn objective_arithmetic() {
        let cfg = PenaltyConfig {
            alpha: -1e-3,
            alpha_interaction: 0.0,
            beta_clarity: 0.0,
        };
        let o = Objective::compose(-100.0, 0.7, 0.0, 0.0, &cfg);
        assert_abs_diff_eq!(o.total, -100.0007, epsilon = 1e-12);
        assert!(PenaltyConfig { alpha: 0.1, ..cfg }.validate().is_err());
    }

    #[test]
    fn asc_gradient_is_share_gap() {
        let a = alts(3, 0);
        let m = UtilityModel::zeros(&ModelSpec::new(ModelKind::Linear), &a).unwrap();
        let obs: Vec<Observation> = [0, 1, 1, 2, 2, 2]
            .iter()
            .map(|&c| Observation {
                chosen: c,
                values: vec![vec![]; 3],
            })
            .collect();
        let d = Dataset::new(a, obs, Provenance::Memory).unwrap();
        let g = objective_gradients(&m, &d, &PenaltyConfig::zero()).unwrap();
        let full = asc_gradient(&m, &g);
        let shares = d.choice_shares();
        assert_eq!(full[0], 0.0);
        for i in 1..3 {
            assert_abs_diff_eq!(full[i], 6.0 * (shares[i] - 1.0 / 3.0), epsilon = 1e-12);
        }
    }

    fn finite_difference_error(model: &UtilityModel, data: &Dataset, cfg: &PenaltyConfig) -> f64 {
        let g = objective_gradients(model, data, cfg).unwrap();
        let p0 = model.params();
        let h = 1e-5;
        let mut m = model.clone();
        let mut worst: f64 = 0.0;
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] += h;
            m.set_params(&p).unwrap();
            let up = objective(&m, data, cfg).unwrap().total;
            p[i] -= 2.0 * h;
            m.set_params(&p).unwrap();
            let down = objective(&m, data, cfg).unwrap().total;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(crate::numcore::relative_error(g[i], numeric));
        }
        worst
    }

    #[test]
    fn gaunet_tanh_gradient_matches_differences() {
        let a = alts(3, 2);
        let mut rng = Rng::new(7);
        let mut m = UtilityModel::initialize(&ModelSpec::new(ModelKind::GaUnet), &a, &mut rng).unwrap();
        m.set_asc(1, 0.3).unwrap();
        let d = random_data(&a, 12, 3);
        assert!(finite_difference_error(&m, &d, &PenaltyConfig::default()) < 1e-4);
    }

    #[test]
    fn gaiunet_gradient_matches_differences() {
        let a = alts(2, 3);
        let spec = ModelSpec::new(ModelKind::GaiUnet);
        let mut rng = Rng::new(8);
        let mut m = UtilityModel::initialize(&spec, &a, &mut rng).unwrap();
        m.add_interactions(&[vec![(0, 1), (1, 2)], vec![(0, 2)]], &spec, &mut rng).unwrap();
        for (i, it) in m.interactions_mut().iter_mut().enumerate() {
            it.outer_weight = 0.5 - 0.3 * i as f64;
        }
        let d = random_data(&a, 10, 4);
        let cfg = PenaltyConfig::from_magnitudes(1e-2, 1e-2, 0.5);
        assert!(finite_difference_error(&m, &d, &cfg) < 1e-4);
    }

    #[test]
    fn shared_units_stay_consistent_under_gradient() {
        let a = alts(2, 1);
        let spec = ModelSpec::new(ModelKind::GaUnet)
            .with_share_group(crate::utility::ShareGroup::across_alternatives("g", "x0"));
        let mut rng = Rng::new(1);
        let m = UtilityModel::initialize(&spec, &a, &mut rng).unwrap();
        assert_eq!(m.units().len(), 1);
        let d = random_data(&a, 8, 5);
        assert!(finite_difference_error(&m, &d, &PenaltyConfig::default()) < 1e-4);
    }

    #[test]
    fn non_additive_objective_is_likelihood() {
        let a = alts(2, 2);
        let mut rng = Rng::new(2);
        let m = UtilityModel::initialize(&ModelSpec::new(ModelKind::AsuDnn), &a, &mut rng).unwrap();
        let d = random_data(&a, 9, 6);
        let o = objective(&m, &d, &PenaltyConfig::default()).unwrap();
        assert_eq!(o.total, o.log_likelihood);
        assert!(finite_difference_error(&m, &d, &PenaltyConfig::default()) < 1e-4);
    }

    proptest! {
        #[test]
        fn probabilities_normalized_and_shift_invariant(
            v in proptest::collection::vec(-1e3f64..1e3, 2..6),
            c in -1e3f64..1e3,
        ) {
            let p = softmax(&v).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let q = softmax(&shifted).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn raising_one_utility_raises_its_probability(
            v in proptest::collection::vec(-8f64..8.0, 2..5),
            bump in 0.01f64..5.0,
        ) {
            // strict inside the range where probabilities stay below 1 in f64
            let p = softmax(&v).unwrap();
            let mut w = v.clone();
            w[0] += bump;
            let q = softmax(&w).unwrap();
            prop_assert!(q[0] > p[0]);
        }

        #[test]
        fn raising_one_utility_never_lowers_its_probability(
            v in proptest::collection::vec(-1e3f64..1e3, 2..5),
            bump in 0.0f64..100.0,
        ) {
            let p = softmax(&v).unwrap();
            let mut w = v.clone();
            w[0] += bump;
            prop_assert!(softmax(&w).unwrap()[0] >= p[0]);
        }
    }
}
