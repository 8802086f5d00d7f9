use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gaunet::data::{generate_synthetic, load_csv, vif, write_csv, SyntheticConfig};
use gaunet::eval::{
    export_curves, load_config, load_model, policy_csv, policy_eval, run_experiment_to_dir, save_model,
    write_curve_files, ExperimentConfig, PolicySpec,
};
use gaunet::eval::{cv_csv, importance_csv, pair_importance_csv, vif_csv};
use gaunet::training::{cross_validate, fit, importance_scores, CvPlan, TrainConfig};
use gaunet::utility::{ModelKind, ModelSpec};
use log::info;

/// Discrete choice models with neural shape functions.
#[derive(Parser)]
#[command(name = "gaunet", version, about)]
struct Cli {
    /// Seed overriding the one in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config whose schema depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the bus/taxi dataset (config: generator settings).
    Synth,
    /// Fit a model (config: training settings).
    Fit(FitArgs),
    /// k-fold cross-validation (config: training settings).
    Cv(CvArgs),
    /// Log-likelihood and accuracy of a saved model on a dataset.
    Evaluate(ModelData),
    /// Accuracy and predicted shares under shifts of one variable
    /// (config: sweep settings).
    PolicyEval(PolicyArgs),
    /// Utility curves of a saved model, one CSV per variable.
    Curves(CurveArgs),
    /// Importance scores of an additive model.
    Importance(ModelOnly),
    /// Variance inflation factors of every alternative's variables.
    Vif(DataOnly),
    /// Run a whole experiment (config: experiment description).
    Experiment,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Linear,
    Gaunet,
    Gaiunet,
    AsuDnn,
}

impl From<Kind> for ModelKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Linear => ModelKind::Linear,
            Kind::Gaunet => ModelKind::GaUnet,
            Kind::Gaiunet => ModelKind::GaiUnet,
            Kind::AsuDnn => ModelKind::AsuDnn,
        }
    }
}

#[derive(Args)]
struct SpecArgs {
    /// Model kind; hidden sizes and activation take their defaults.
    #[arg(long, value_enum, conflicts_with = "spec")]
    kind: Option<Kind>,
    /// JSON model architecture.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl SpecArgs {
    fn resolve(&self) -> Result<ModelSpec> {
        match (&self.spec, self.kind) {
            (Some(path), _) => Ok(load_config(path)?),
            (None, Some(k)) => Ok(ModelSpec::new(k.into())),
            (None, None) => Err(usage("one of --kind or --spec is required")),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
}

#[derive(Args)]
struct ModelData {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ModelOnly {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct DataOnly {
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Generator config used to relabel shifted rows.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Target as `<alternative>:<variable>`; ignored when --config is given.
    #[arg(long, default_value = "taxi:cost")]
    target: String,
    /// Comma-separated shifts; the target's default sweep when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    deltas: Option<Vec<f64>>,
    /// Keep the original labels instead of relabelling.
    #[arg(long)]
    no_relabel: bool,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    grid_points: usize,
    /// Dataset rows used for conditional curves of dense models.
    #[arg(long, default_value_t = 50)]
    rows: usize,
}

/// A user mistake, reported with exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl Cli {
    fn out(&self) -> Result<&Path> {
        let dir = self.out.as_deref().ok_or_else(|| usage("--out is required"))?;
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg: TrainConfig = match &self.config {
            Some(p) => load_config(p)?,
            None => TrainConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: PathBuf, text: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth => {
            let mut cfg: SyntheticConfig = match &cli.config {
                Some(p) => load_config(p)?,
                None => SyntheticConfig::default(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let (data, stats) = generate_synthetic(&cfg)?;
            let out = cli.out()?;
            write_csv(&data, out.join("data.csv"))?;
            write(out.join("stats.json"), pretty(&stats)?)?;
            println!("kept {} of {} candidates", stats.n_kept, stats.n_candidates);
        }
        Command::Fit(a) => {
            let cfg = cli.train_config()?;
            let spec = a.spec.resolve()?;
            let data = load_csv(&a.data, None)?;
            let out = cli.out()?;
            let result = fit(&spec, &data, &cfg)?;
            save_model(&result.model, out.join("model.json"))?;
            let mut report = serde_json::to_value(&result)?;
            if let Some(obj) = report.as_object_mut() {
                obj.remove("model");
            }
            write(out.join("fit_report.json"), pretty(&report)?)?;
            println!(
                "{}: train log-likelihood {:.4}, accuracy {:.4}",
                spec.kind,
                result.model.log_likelihood(&data)?,
                result.model.accuracy(&data)?
            );
        }
        Command::Cv(a) => {
            let cfg = cli.train_config()?;
            let spec = a.spec.resolve()?;
            let data = load_csv(&a.data, None)?;
            let out = cli.out()?;
            let plan = CvPlan::new(data.len(), a.folds, cfg.seed)?;
            let report = cross_validate(&spec, &data, &cfg, &plan)?;
            write(out.join("cv.csv"), cv_csv(&report)?)?;
            write(out.join("cv.json"), pretty(&report)?)?;
            println!(
                "test accuracy {:.4} +- {:.4}, test log-likelihood {:.4}",
                report.test_accuracy.mean, report.test_accuracy.stdev, report.test_log_likelihood.mean
            );
        }
        Command::Evaluate(a) => {
            let model = load_model(&a.model)?;
            let data = load_csv(&a.data, Some(model.alternatives()))?;
            let summary = serde_json::json!({
                "n": data.len(),
                "log_likelihood": model.log_likelihood(&data)?,
                "accuracy": model.accuracy(&data)?,
            });
            let text = pretty(&summary)?;
            if cli.out.is_some() {
                write(cli.out()?.join("evaluation.json"), &text)?;
            }
            print!("{text}");
        }
        Command::PolicyEval(a) => {
            let model = load_model(&a.model)?;
            let data = load_csv(&a.data, Some(model.alternatives()))?;
            let spec: PolicySpec = match &cli.config {
                Some(p) => load_config(p)?,
                None => {
                    let (alt, var) = a
                        .target
                        .split_once(':')
                        .ok_or_else(|| usage("--target must look like <alternative>:<variable>"))?;
                    PolicySpec {
                        deltas: a.deltas.clone(),
                        relabel: !a.no_relabel,
                        ..PolicySpec::new(alt, var, Vec::new())
                    }
                }
            };
            let truth: Option<SyntheticConfig> = match &a.truth {
                Some(p) => Some(load_config(p)?),
                None if spec.relabel => Some(SyntheticConfig::default()),
                None => None,
            };
            let seed = cli.seed.unwrap_or(model.seed);
            let shift = policy_eval(&model, &data, truth.as_ref(), &spec, seed)?;
            let out = cli.out()?;
            write(out.join("policy.csv"), policy_csv(&shift, model.alternatives().names())?)?;
            write(out.join("policy.json"), pretty(&shift)?)?;
            for r in &shift.results {
                println!("delta {:>6}: accuracy {:.4} over {} rows", r.delta, r.accuracy, r.n_evaluated);
            }
        }
        Command::Curves(a) => {
            let model = load_model(&a.model)?;
            let data = load_csv(&a.data, Some(model.alternatives()))?;
            let rows: Vec<usize> = (0..a.rows.min(data.len())).collect();
            let table = export_curves(&model, &data.subset(&rows, "curve rows"), a.grid_points)?;
            let files = write_curve_files(&table, &cli.out()?.join("curves"))?;
            println!("wrote {} curve files", files.len());
        }
        Command::Importance(a) => {
            let model = load_model(&a.model)?;
            let t = &model.train_config;
            let report = importance_scores(&model, t.importance_grid_points, t.importance_threshold, t.importance_normalization)?;
            let out = cli.out()?;
            write(out.join("importance.csv"), importance_csv(&report)?)?;
            if !report.pairs.is_empty() {
                write(out.join("importance_pairs.csv"), pair_importance_csv(&report)?)?;
            }
            for v in &report.variables {
                println!("{}:{} {:.4}{}", v.alternative, v.variable, v.magnitude_score, if v.selected { " *" } else { "" });
            }
        }
        Command::Vif(a) => {
            let data = load_csv(&a.data, None)?;
            let alts = data.alternatives();
            let reports = (0..alts.len())
                .filter(|&i| alts.variable_count(i) >= 2)
                .map(|i| vif(&data, i))
                .collect::<gaunet::Result<Vec<_>>>()?;
            write(cli.out()?.join("vif.csv"), vif_csv(&reports)?)?;
            for r in &reports {
                for e in &r.entries {
                    println!("{}:{} {:.4}{}", r.alternative, e.variable, e.vif, if e.passes { "" } else { " (flagged)" });
                }
            }
        }
        Command::Experiment => {
            let Some(path) = &cli.config else {
                bail!(usage("experiment needs --config"));
            };
            let mut cfg: ExperimentConfig = load_config(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let base = path.parent().unwrap_or(Path::new("."));
            let out = cli.out()?;
            let report = run_experiment_to_dir(&cfg, base, out)?;
            info!("wrote report bundle to {}", out.display());
            print!("{}", report.table_csv()?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<gaunet::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
