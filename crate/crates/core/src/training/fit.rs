use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use super::importance::{importance_with, select_pairs, ImportanceReport};
use super::TrainConfig;
use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::eval::FittedModel;
use crate::mnl::{self, accumulate_batch, add_penalty_gradient, BatchScratch, Objective, PenaltyConfig};
use crate::numcore::{AdamState, Rng};
use crate::utility::{ModelKind, ModelSpec, UtilityModel};

// Independent random streams derived from the training seed.
const STREAM_INIT: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_INTERACTION_INIT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of the per-batch objectives over the epoch, which tracks the
    /// full training objective while the parameters move.
    pub train_objective: f64,
    /// Monitored quantity: validation log-likelihood, or the full training
    /// objective when there is no validation split.
    pub monitor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub learning_rate: f64,
    pub trace: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 means the starting point).
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Flat parameters after the stage, best checkpoint restored.
    pub params_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FittedModel,
    pub stages: Vec<StageRecord>,
    /// Objective on the standardized training split before and after fitting.
    pub initial_objective: Objective,
    pub final_objective: Objective,
    pub importance: Option<ImportanceReport>,
    /// Pairs added per alternative by the staged interaction fit.
    pub selected_pairs: Option<Vec<Vec<(usize, usize)>>>,
    /// Column labels that had zero variance in the training split.
    pub constant_columns: Vec<String>,
    pub n_train: usize,
    pub n_validation: usize,
}

/// Training and validation rows of a dataset, in original units and
/// standardized on the training rows.
struct Prepared {
    standardizer: Standardizer,
    train: Dataset,
    validation: Option<Dataset>,
    constant_columns: Vec<String>,
}

fn prepare(data: &Dataset, cfg: &TrainConfig) -> Result<Prepared> {
    if data.is_empty() {
        return Err(Error::invalid("cannot fit on an empty dataset"));
    }
    if data.alternatives().len() < 2 {
        return Err(Error::invalid("a choice model needs at least two alternatives"));
    }
    let n = data.len();
    let n_val = ((n as f64) * cfg.validation_fraction).round() as usize;
    let n_val = n_val.min(n - 1);
    let order = Rng::stream(cfg.seed, STREAM_SPLIT).permutation(n);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let standardizer = Standardizer::fit(data, &train_idx)?;
    let constant_columns: Vec<String> = standardizer
        .constant_columns()
        .into_iter()
        .map(|(a, v)| data.alternatives().column_label(a, v))
        .collect();
    for c in &constant_columns {
        warn!("column {c} has zero variance in the training split; it is standardized to 0");
    }
    let z = standardizer.transform(data)?;
    let train = z.subset(&train_idx, "training split");
    let validation = (!val_idx.is_empty()).then(|| z.subset(&val_idx, "validation split"));
    Ok(Prepared {
        standardizer,
        train,
        validation,
        constant_columns,
    })
}

/// Which flat parameters a stage may move.
#[derive(Debug, Clone)]
enum Trainable {
    All,
    Range(std::ops::Range<usize>),
}

impl Trainable {
    fn indices(&self, n: usize) -> Vec<usize> {
        match self {
            Trainable::All => (0..n).collect(),
            Trainable::Range(r) => r.clone().collect(),
        }
    }
}

struct StageRunner<'a> {
    train: &'a Dataset,
    validation: Option<&'a Dataset>,
    cfg: &'a TrainConfig,
    penalties: PenaltyConfig,
    shuffle: &'a mut Rng,
}

impl StageRunner<'_> {
    fn monitor(&self, model: &UtilityModel) -> Result<f64> {
        match self.validation {
            Some(v) => mnl::log_likelihood(model, v),
            None => Ok(mnl::objective(model, self.train, &self.penalties)?.total),
        }
    }

    fn run(&mut self, name: &str, model: &mut UtilityModel, trainable: Trainable, learning_rate: f64) -> Result<StageRecord> {
        let cfg = self.cfg;
        let n = self.train.len();
        let batch = cfg.batch_size.min(n);
        let idx = trainable.indices(model.param_count());
        let mut adam = AdamState::new(idx.len(), learning_rate);
        let mut scratch = BatchScratch::new(model);
        let mut grad = vec![0.0; model.param_count()];
        let mut sub_params = vec![0.0; idx.len()];
        let mut sub_grad = vec![0.0; idx.len()];
        let obs = self.train.observations();

        let mut params = model.params();
        let mut best = (self.monitor(model)?, 0usize, params.clone());
        let mut since_best = 0;
        let mut trace = Vec::new();
        let mut stopped_early = false;

        for epoch in 1..=cfg.max_epochs {
            let order = self.shuffle.permutation(n);
            let mut epoch_objective = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let terms = accumulate_batch(
                    model,
                    chunk.iter().map(|&i| &obs[i]),
                    self.penalties.beta_clarity,
                    &mut scratch,
                    Some(&mut grad),
                )?;
                let scale = chunk.len() as f64 / n as f64;
                add_penalty_gradient(model, &self.penalties, scale, &mut grad);
                let (l1, l1i) = mnl::weight_penalties(model);
                epoch_objective += terms.log_likelihood
                    + self.penalties.beta_clarity * terms.marginal_clarity
                    + scale * (self.penalties.alpha * l1 + self.penalties.alpha_interaction * l1i);
                batches += 1;

                // Adam descends, so feed it the negated ascent direction.
                for (k, &i) in idx.iter().enumerate() {
                    sub_params[k] = params[i];
                    sub_grad[k] = -grad[i];
                }
                adam.step(&mut sub_params, &sub_grad)?;
                for (k, &i) in idx.iter().enumerate() {
                    params[i] = sub_params[k];
                }
                model.set_params(&params)?;
            }
            adam.learning_rate *= cfg.learning_rate_decay;

            let monitor = self.monitor(model)?;
            trace.push(EpochRecord {
                epoch,
                train_objective: epoch_objective,
                monitor,
            });
            debug!("{name} epoch {epoch}: objective {epoch_objective:.6} monitor {monitor:.6} over {batches} batches");
            if monitor > best.0 {
                best = (monitor, epoch, params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.early_stop_patience {
                    stopped_early = true;
                    break;
                }
            }
        }

        model.set_params(&best.2)?;
        info!(
            "{name}: kept epoch {} of {} (monitor {:.6})",
            best.1,
            trace.len(),
            best.0
        );
        Ok(StageRecord {
            name: name.to_string(),
            learning_rate,
            trace,
            best_epoch: best.1,
            stopped_early,
            params_after: best.2,
        })
    }
}

/// Fit a model of the kind in `spec` by penalized maximum likelihood.
///
/// GAIUNet specs are routed through [`fit_gaiunet_staged`].
pub fn fit(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    if spec.kind == ModelKind::GaiUnet {
        return fit_gaiunet_staged(spec, data, cfg);
    }
    cfg.validate()?;
    let prep = prepare(data, cfg)?;
    let penalties = cfg.penalties();
    let mut model = UtilityModel::initialize(spec, data.alternatives(), &mut Rng::stream(cfg.seed, STREAM_INIT))?;
    let initial_objective = mnl::objective(&model, &prep.train, &penalties)?;
    let mut shuffle = Rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut runner = StageRunner {
        train: &prep.train,
        validation: prep.validation.as_ref(),
        cfg,
        penalties,
        shuffle: &mut shuffle,
    };
    let stage = runner.run("fit", &mut model, Trainable::All, cfg.learning_rate)?;
    let final_objective = mnl::objective(&model, &prep.train, &penalties)?;
    let importance = if spec.kind.is_additive() {
        Some(importance_with(
            &model,
            &prep.standardizer,
            cfg.importance_grid_points,
            cfg.importance_threshold,
            cfg.importance_normalization,
        )?)
    } else {
        None
    };
    finish(spec, data, cfg, prep, model, vec![stage], initial_objective, final_objective, importance, None)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    prep: Prepared,
    model: UtilityModel,
    stages: Vec<StageRecord>,
    initial_objective: Objective,
    final_objective: Objective,
    importance: Option<ImportanceReport>,
    selected_pairs: Option<Vec<Vec<(usize, usize)>>>,
) -> Result<FitResult> {
    let n_train = prep.train.len();
    let n_validation = prep.validation.as_ref().map_or(0, Dataset::len);
    Ok(FitResult {
        model: FittedModel::new(spec.clone(), model, prep.standardizer, cfg.clone(), data.provenance().clone())?,
        stages,
        initial_objective,
        final_objective,
        importance,
        selected_pairs,
        constant_columns: prep.constant_columns,
        n_train,
        n_validation,
    })
}

/// Staged fit of main effects, then selected pairwise interactions.
///
/// 1. Main effects and ASCs maximize `LL + alpha * L1`.
/// 2. Importance scores pick the variables whose pairs get interaction terms.
/// 3. Only interaction parameters are trained; main effects and ASCs are frozen.
/// 4. Every parameter is fine-tuned on the full objective.
///
/// With no selected pair, stages 3 and 4 are skipped and the result matches a
/// plain GAUNet fit.
pub fn fit_gaiunet_staged(spec: &ModelSpec, data: &Dataset, cfg: &TrainConfig) -> Result<FitResult> {
    if spec.kind != ModelKind::GaiUnet {
        return Err(Error::KindMismatch {
            expected: "gaiunet".into(),
            found: spec.kind.to_string(),
        });
    }
    cfg.validate()?;
    let prep = prepare(data, cfg)?;
    let penalties = cfg.penalties();
    let rates = cfg.stage_learning_rates;
    let mut model = UtilityModel::initialize(spec, data.alternatives(), &mut Rng::stream(cfg.seed, STREAM_INIT))?;
    let initial_objective = mnl::objective(&model, &prep.train, &penalties)?;
    let mut shuffle = Rng::stream(cfg.seed, STREAM_SHUFFLE);
    let mut runner = StageRunner {
        train: &prep.train,
        validation: prep.validation.as_ref(),
        cfg,
        penalties,
        shuffle: &mut shuffle,
    };
    let mut stages = vec![runner.run(
        "main_effects",
        &mut model,
        Trainable::All,
        rates.main_effects.unwrap_or(cfg.learning_rate),
    )?];

    let report = importance_with(
        &model,
        &prep.standardizer,
        cfg.importance_grid_points,
        cfg.importance_threshold,
        cfg.importance_normalization,
    )?;
    let pairs = select_pairs(&report, data.alternatives().len());
    let n_pairs: usize = pairs.iter().map(Vec::len).sum();
    info!("selected {n_pairs} interaction pairs");

    if n_pairs > 0 {
        model.add_interactions(&pairs, spec, &mut Rng::stream(cfg.seed, STREAM_INTERACTION_INIT))?;
        let interaction = model.segments().interaction;
        stages.push(runner.run(
            "interactions",
            &mut model,
            Trainable::Range(interaction),
            rates.interactions.unwrap_or(cfg.learning_rate),
        )?);
        stages.push(runner.run(
            "fine_tune",
            &mut model,
            Trainable::All,
            rates.fine_tune.unwrap_or(cfg.learning_rate),
        )?);
    }
    let final_objective = mnl::objective(&model, &prep.train, &penalties)?;
    // the report that drove the selection
    finish(spec, data, cfg, prep, model, stages, initial_objective, final_objective, Some(report), Some(pairs))
}

/// Share of observations whose most probable alternative was chosen.
pub fn accuracy(model: &FittedModel, data: &Dataset) -> Result<f64> {
    model.accuracy(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Observation, Provenance, SyntheticConfig};
    use crate::utility::AlternativeSet;

    fn small_synthetic(seed: u64) -> Dataset {
        let cfg = SyntheticConfig {
            n_points: 800,
            ..SyntheticConfig::with_seed(seed)
        };
        generate_synthetic(&cfg).unwrap().0
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 15,
            learning_rate: 1e-2,
            ..TrainConfig::with_seed(seed)
        }
    }

    #[test]
    fn constant_inputs_fit_the_choice_shares() {
        let alts = AlternativeSet::new(vec!["a".into(), "b".into()], vec![vec!["x".into()], vec!["x".into()]]).unwrap();
        let observations = (0..400)
            .map(|i| Observation {
                chosen: usize::from(i % 4 == 0),
                values: vec![vec![3.0], vec![1.0]],
            })
            .collect();
        let data = Dataset::new(alts, observations, Provenance::Memory).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            validation_fraction: 0.0,
            l1: 0.0,
            max_epochs: 400,
            ..TrainConfig::default()
        };
        let r = fit(&ModelSpec::new(ModelKind::Linear), &data, &cfg).unwrap();
        assert_eq!(r.constant_columns, vec!["a:x", "b:x"]);
        let asc = r.model.utility.ascs()[1];
        assert!((asc - (1.0f64 / 3.0).ln()).abs() < 1e-3, "{asc}");
    }

    #[test]
    fn same_seed_same_model() {
        let data = small_synthetic(3);
        let spec = ModelSpec::new(ModelKind::GaUnet);
        let a = fit(&spec, &data, &quick(9)).unwrap();
        let b = fit(&spec, &data, &quick(9)).unwrap();
        assert_eq!(a, b);
        let c = fit(&spec, &data, &quick(10)).unwrap();
        assert_ne!(a.model.utility.params(), c.model.utility.params());
    }

    #[test]
    fn infinite_threshold_reduces_to_gaunet() {
        let data = small_synthetic(4);
        let cfg = TrainConfig {
            importance_threshold: f64::INFINITY,
            ..quick(2)
        };
        let staged = fit(&ModelSpec::new(ModelKind::GaiUnet), &data, &cfg).unwrap();
        let plain = fit(&ModelSpec::new(ModelKind::GaUnet), &data, &cfg).unwrap();
        assert_eq!(staged.stages.len(), 1);
        assert_eq!(staged.model.utility.params(), plain.model.utility.params());
        assert_eq!(staged.final_objective.log_likelihood, plain.final_objective.log_likelihood);
    }

    #[test]
    fn interaction_stage_leaves_main_effects_alone() {
        let data = small_synthetic(5);
        let cfg = TrainConfig {
            importance_threshold: 0.0,
            ..quick(1)
        };
        let r = fit(&ModelSpec::new(ModelKind::GaiUnet), &data, &cfg).unwrap();
        assert_eq!(r.stages.len(), 3);
        let pairs = r.selected_pairs.as_ref().unwrap();
        assert_eq!(pairs.iter().map(Vec::len).sum::<usize>(), 12);
        let main_end = r.model.utility.segments().main.end;
        let before = &r.stages[0].params_after[..main_end];
        let after = &r.stages[1].params_after[..main_end];
        assert!(before.iter().zip(after).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
