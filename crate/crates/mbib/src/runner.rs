//! End-to-end experiments: per seed, build the two domains, fit on the
//! source, impute the target and score it when the truth is known.

use std::path::{Path, PathBuf};

use mbib_core::eval::{mask_mcar, mb_invariance_diagnostic, metrics, InvarianceReport, Metrics};
use mbib_core::numstats::column_means;
use mbib_core::rng::{derive_seed, permutation};
use mbib_core::sem::preset;
use mbib_core::vib::TrainingSummary;
use mbib_core::{Dag, Dataset, Imputer};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig, Scope, SCHEMA_VERSION, TOOLKIT_VERSION};
use crate::error::{CliError, Context, Result};
use crate::model::{fit_model, FittedModel};

/// CSV domains, loaded once and shared by every seed.
#[derive(Debug, Clone)]
pub struct CsvDomains {
    pub source: Dataset,
    pub target: Dataset,
    pub dag: Option<Dag>,
}

impl CsvDomains {
    pub fn load(source: &Path, target: &Path, dag: Option<&Path>) -> Result<Self> {
        let source_data = crate::io::read_dataset(source)?;
        let target_data = crate::io::read_dataset(target)?;
        let dag = dag.map(crate::io::read_dag).transpose()?;
        if let Some(dag) = &dag {
            for name in source_data.columns() {
                if !dag.contains(name) {
                    return Err(CliError::data(source, format!("column `{name}` is not a node of the DAG")));
                }
            }
        }
        Ok(CsvDomains { source: source_data, target: target_data, dag })
    }
}

/// Both domains for one seed, with the target truth split off.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub source: Dataset,
    pub target_inputs: Dataset,
    pub target_truth: Option<Vec<f64>>,
    pub dag: Option<Dag>,
}

pub fn seed_data(config: &ExperimentConfig, seed: u64, csv: Option<&CsvDomains>) -> Result<SeedData> {
    let (source, target, dag) = match (&config.experiment, csv) {
        (Experiment::Preset { name, params }, _) => {
            let p = preset(*name, params).context(|| format!("building preset {name}"))?;
            let target_spec = if config.stretch == 1.0 {
                p.target
            } else {
                p.target.stretch_exogenous(config.stretch, &config.target).context(|| "stretching the target".into())?
            };
            let source = p.source.sample(params.n_source, derive_seed(seed, "source")).context(|| "sampling".into())?;
            let target = target_spec.sample(params.n_target, derive_seed(seed, "target")).context(|| "sampling".into())?;
            (source, target, Some(p.dag))
        }
        (Experiment::CsvPair { .. }, Some(d)) => (d.source.clone(), d.target.clone(), d.dag.clone()),
        (Experiment::CsvPair { .. }, None) => return Err(CliError::Config("csv_pair experiment without data".into())),
    };
    if !source.has_column(&config.target) {
        return Err(CliError::Config(format!("target `{}` is not a source column", config.target)));
    }
    let (target_inputs, target_truth) = if target.has_column(&config.target) {
        let truth = target.column(&config.target).context(|| "reading target truth".into())?;
        (target.without_column(&config.target).context(|| "dropping the target".into())?, Some(truth))
    } else {
        (target, None)
    };
    Ok(SeedData { source, target_inputs, target_truth, dag })
}

/// Feature names the model reads, in a deterministic order: DAG order for
/// graph scopes, column order for the global scope, as listed otherwise.
pub fn resolve_scope(config: &ExperimentConfig, dag: Option<&Dag>, columns: &[String]) -> Result<Vec<String>> {
    let target = config.target.as_str();
    let graph = || dag.ok_or_else(|| CliError::Config("scope needs a DAG".into()));
    let features = match &config.scope {
        Scope::Blanket => graph()?.markov_blanket(target).context(|| "resolving the Markov blanket".into())?,
        Scope::Parents => graph()?.parents(target).context(|| "resolving the parents".into())?,
        Scope::Global => columns.iter().filter(|c| *c != target).cloned().collect(),
        Scope::Explicit { features } => features.clone(),
    };
    if let Some(missing) = features.iter().find(|f| !columns.contains(f)) {
        return Err(CliError::Config(format!("scope feature `{missing}` is not a source column")));
    }
    if features.is_empty() {
        return Err(CliError::Config(format!("scope resolves to no features for target `{target}`")));
    }
    Ok(features)
}

/// Per-method facts worth keeping in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ModelSummary {
    Gib { dim: usize, spectrum: Vec<f64> },
    Vib { training: TrainingSummary, decoder_scale: f64, mean_kl: f64 },
    Bn { inputs: Vec<String> },
    Dnn { training: TrainingSummary },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub features: Vec<String>,
    pub n_source_fit: usize,
    pub n_source_eval: usize,
    pub n_target: usize,
    /// Whether `source_metrics` come from held-out rows or the fit rows.
    pub source_eval: String,
    pub source_metrics: Metrics,
    pub target_metrics: Option<Metrics>,
    pub invariance: Option<InvarianceReport>,
    pub model: ModelSummary,
}

/// One seed's report together with its raw predictions.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub report: SeedReport,
    pub truth: Option<Vec<f64>>,
    pub predicted: Vec<f64>,
    pub model: FittedModel,
}

pub fn run_seed(config: &ExperimentConfig, seed: u64, csv: Option<&CsvDomains>) -> Result<SeedOutcome> {
    let data = seed_data(config, seed, csv)?;
    let features = resolve_scope(config, data.dag.as_ref(), data.source.columns())?;
    let target = config.target.as_str();

    let (fit_rows, eval_rows) = if config.holdout_fraction > 0.0 {
        let n = data.source.n_rows();
        let perm = permutation(seed, "holdout", n);
        let n_eval = ((n as f64 * config.holdout_fraction).round() as usize).clamp(1, n - 1);
        let (eval, fit) = perm.split_at(n_eval);
        let mut fit = fit.to_vec();
        let mut eval = eval.to_vec();
        fit.sort_unstable();
        eval.sort_unstable();
        (data.source.take_rows(&fit), Some(data.source.take_rows(&eval)))
    } else {
        (data.source.clone(), None)
    };
    let source_eval = eval_rows.as_ref().unwrap_or(&fit_rows);

    let model = fit_model(config, &fit_rows, &features, derive_seed(seed, "model"))?;
    let source_truth = source_eval.column(target).context(|| "reading source truth".into())?;
    let source_pred = model.predict(source_eval).context(|| "predicting the source".into())?;
    let source_metrics = metrics(&source_truth, &source_pred).context(|| "scoring the source".into())?;

    let inputs = if config.missing_rate > 0.0 {
        let masked: Vec<String> =
            model.features().iter().filter(|f| data.target_inputs.has_column(f)).cloned().collect();
        let idx = fit_rows.indices_of(&masked).context(|| "locating masked columns".into())?;
        let means = column_means(fit_rows.values());
        let fill: Vec<f64> = idx.iter().map(|&j| means[j]).collect();
        mask_mcar(&data.target_inputs, &masked, &fill, config.missing_rate, derive_seed(seed, "missing"))
            .context(|| "masking target features".into())?
    } else {
        data.target_inputs.clone()
    };
    let predicted = model.predict(&inputs).context(|| "imputing the target domain".into())?;

    let (target_metrics, invariance) = match &data.target_truth {
        Some(truth) => {
            let m = metrics(truth, &predicted).context(|| "scoring the target".into())?;
            let audited = inputs.with_column(target, truth).context(|| "attaching the target truth".into())?;
            let inv = mb_invariance_diagnostic(&model, source_eval, &audited).context(|| "invariance check".into())?;
            (Some(m), Some(inv))
        }
        None => (None, None),
    };

    let summary = match &model {
        FittedModel::Gib(m) => ModelSummary::Gib { dim: m.dim(), spectrum: m.spectrum.clone() },
        FittedModel::Vib(m) => ModelSummary::Vib {
            training: m.training,
            decoder_scale: m.decoder_scale(),
            mean_kl: m.mean_kl(&fit_rows).context(|| "measuring the KL term".into())?,
        },
        FittedModel::Bn(m) => ModelSummary::Bn { inputs: m.features().to_vec() },
        FittedModel::Dnn(m) => ModelSummary::Dnn { training: m.training },
    };

    let report = SeedReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config.clone(),
        seed,
        features,
        n_source_fit: fit_rows.n_rows(),
        n_source_eval: source_eval.n_rows(),
        n_target: inputs.n_rows(),
        source_eval: if eval_rows.is_some() { "holdout" } else { "in_sample" }.into(),
        source_metrics,
        target_metrics,
        invariance,
        model: summary,
    };
    Ok(SeedOutcome { report, truth: data.target_truth, predicted, model })
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    /// `None` for a single observation.
    pub se: Option<f64>,
    pub n: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> MeanSe {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = (n > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        MeanSe { mean, se, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mae: MeanSe,
    pub rmse: MeanSe,
    pub r2: MeanSe,
}

impl MetricSummary {
    pub fn of(ms: &[Metrics]) -> MetricSummary {
        let col = |f: fn(&Metrics) -> f64| MeanSe::of(&ms.iter().map(f).collect::<Vec<_>>());
        MetricSummary { mae: col(|m| m.mae), rmse: col(|m| m.rmse), r2: col(|m| m.r2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub source: MetricSummary,
    pub target: Option<MetricSummary>,
    /// Seeds whose target residuals moved by more than the flag threshold.
    pub invariance_flags: usize,
    pub mean_kl: Option<MeanSe>,
}

impl AggregateReport {
    pub fn of(config: &ExperimentConfig, seeds: &[SeedReport]) -> AggregateReport {
        let source: Vec<Metrics> = seeds.iter().map(|s| s.source_metrics).collect();
        let target: Option<Vec<Metrics>> = seeds.iter().map(|s| s.target_metrics).collect();
        let kl: Option<Vec<f64>> = seeds
            .iter()
            .map(|s| match s.model {
                ModelSummary::Vib { mean_kl, .. } => Some(mean_kl),
                _ => None,
            })
            .collect();
        AggregateReport {
            schema_version: SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION.into(),
            config: config.clone(),
            seeds: seeds.iter().map(|s| s.seed).collect(),
            source: MetricSummary::of(&source),
            target: target.map(|t| MetricSummary::of(&t)),
            invariance_flags: seeds.iter().filter(|s| s.invariance.is_some_and(|i| i.flagged)).count(),
            mean_kl: kl.map(|k| MeanSe::of(&k)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seeds: Vec<SeedOutcome>,
    pub aggregate: AggregateReport,
}

fn load_csv(config: &ExperimentConfig) -> Result<Option<CsvDomains>> {
    match &config.experiment {
        Experiment::CsvPair { source, target, dag } => Ok(Some(CsvDomains::load(source, target, dag.as_deref())?)),
        Experiment::Preset { .. } => Ok(None),
    }
}

/// Validates the config and runs every seed without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let csv = load_csv(config)?;
    execute_with(config, csv.as_ref())
}

pub(crate) fn execute_with(config: &ExperimentConfig, csv: Option<&CsvDomains>) -> Result<RunOutcome> {
    let results: Vec<Result<SeedOutcome>> = config.seeds.par_iter().map(|&s| run_seed(config, s, csv)).collect();
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reports: Vec<SeedReport> = seeds.iter().map(|s| s.report.clone()).collect();
    let aggregate = AggregateReport::of(config, &reports);
    Ok(RunOutcome { seeds, aggregate })
}

/// Output files of a run, relative to its output directory.
pub fn seed_report_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("seeds").join(format!("seed_{seed}.json"))
}

pub fn scatter_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join("scatter").join(format!("seed_{seed}.csv"))
}

pub fn aggregate_path(dir: &Path) -> PathBuf {
    dir.join("aggregate.json")
}

pub fn write_outcome(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    for s in &outcome.seeds {
        crate::io::write_json(&seed_report_path(dir, s.report.seed), &s.report)?;
        match &s.truth {
            Some(truth) => crate::io::write_scatter(&scatter_path(dir, s.report.seed), truth, &s.predicted)?,
            None => {
                let data = Dataset::from_columns(vec!["predicted".into()], &[s.predicted.clone()])
                    .context(|| "collecting predictions".into())?;
                crate::io::write_dataset(&scatter_path(dir, s.report.seed), &data)?;
            }
        }
    }
    crate::io::write_json(&aggregate_path(dir), &outcome.aggregate)
}

/// Runs the experiment and writes its reports under `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    write_outcome(&config.output_dir, &outcome)?;
    Ok(outcome)
}
