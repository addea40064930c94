use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbib::config::{Experiment, ExperimentConfig, Method, Scope};
use mbib::core::gib::Bottleneck;
use mbib::core::rng::derive_seed;
use mbib::core::sem::{PresetName, PresetParams};
use mbib::core::theorycheck::SuiteConfig;
use mbib::core::Imputer;
use mbib::error::{CliError, Context, Result};
use mbib::model::{fit_model, ModelFile};
use mbib::runner::{resolve_scope, seed_data, CsvDomains, MetricSummary};
use mbib::sweep::{GridAxis, SweepGrid};

/// Markov-blanket information bottlenecks for imputing a missing target
/// under domain shift.
#[derive(Parser, Debug)]
#[command(name = "mbib", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a preset's source and target domains to CSV, with its DAG.
    Simulate(SimulateArgs),
    /// Fit a model on the source domain and save it.
    Fit {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Where to write the model file.
        #[arg(long)]
        model: PathBuf,
    },
    /// Impute the target column of a CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit on the source and evaluate on the target for every seed.
    Run(ExperimentArgs),
    /// Run a grid of experiments over one or two axes.
    Sweep {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Axis as `name=v1,v2,...`; names are z_dim, beta, stretch,
        /// missing_rate and n_source. Repeat for a second axis.
        #[arg(long = "grid")]
        grid: Vec<String>,
        /// JSON grid document, used instead of `--grid`.
        #[arg(long, conflicts_with = "grid")]
        grid_file: Option<PathBuf>,
        /// Concurrent cells; 0 picks one per core.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run the numerical verification suite.
    TheoryCheck(TheoryArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Preset name.
    #[arg(long, default_value = "motivating")]
    preset: String,
    /// JSON object of preset parameters.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Source sample size.
    #[arg(long)]
    n_source: Option<usize>,
    /// Target sample size.
    #[arg(long)]
    n_target: Option<usize>,
    /// Noise multiplier on the target domain's exogenous features.
    #[arg(long)]
    stretch: Option<f64>,
    /// Sampling seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving source.csv, target.csv and dag.txt.
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

/// Every flag mirrors a configuration key and wins over the file.
#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name (motivating, seven_node_covariate, seven_node_target_shift).
    #[arg(long, conflicts_with = "source")]
    preset: Option<String>,
    /// Source CSV of a csv_pair experiment.
    #[arg(long, requires = "target_csv")]
    source: Option<PathBuf>,
    /// Target CSV of a csv_pair experiment.
    #[arg(long, requires = "source")]
    target_csv: Option<PathBuf>,
    /// DAG text file of a csv_pair experiment.
    #[arg(long)]
    dag: Option<PathBuf>,
    /// Name of the target column.
    #[arg(long)]
    target: Option<String>,
    /// blanket, parents, global or explicit:A,B,...
    #[arg(long)]
    scope: Option<String>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Comma-separated repeat seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Directory receiving the run outputs.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Noise multiplier on the target domain's exogenous features.
    #[arg(long)]
    stretch: Option<f64>,
    /// Fraction of target feature entries masked at random.
    #[arg(long)]
    missing_rate: Option<f64>,
    /// Fraction of source rows held out for source metrics.
    #[arg(long)]
    holdout_fraction: Option<f64>,
    /// Source sample size of a preset.
    #[arg(long)]
    n_source: Option<usize>,
    /// Target sample size of a preset.
    #[arg(long)]
    n_target: Option<usize>,
    /// Fixed GIB bottleneck dimension.
    #[arg(long, conflicts_with = "gib_beta")]
    gib_dim: Option<usize>,
    /// GIB trade-off β; keeps directions with eigenvalue above 1 − 1/β.
    #[arg(long)]
    gib_beta: Option<f64>,
    #[arg(long)]
    vib_beta: Option<f64>,
    /// VIB latent dimension.
    #[arg(long)]
    z_dim: Option<usize>,
    /// Epoch cap of the VIB and DNN trainers.
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(name) = &self.preset {
            let name: PresetName = name.parse().map_err(|e: mbib::core::Error| CliError::Config(e.to_string()))?;
            let params = match c.experiment {
                Experiment::Preset { params, .. } => params,
                Experiment::CsvPair { .. } => PresetParams::default(),
            };
            c.experiment = Experiment::Preset { name, params };
        }
        if let (Some(source), Some(target)) = (&self.source, &self.target_csv) {
            c.experiment = Experiment::CsvPair { source: source.clone(), target: target.clone(), dag: self.dag.clone() };
        } else if let Some(dag) = &self.dag {
            match &mut c.experiment {
                Experiment::CsvPair { dag: d, .. } => *d = Some(dag.clone()),
                Experiment::Preset { .. } => return Err(CliError::Config("--dag applies to csv_pair experiments".into())),
            }
        }
        if let Some(t) = &self.target {
            c.target = t.clone();
        }
        if let Some(s) = &self.scope {
            c.scope = Scope::parse(s)?;
        }
        if let Some(m) = self.method {
            c.method = m;
        }
        if let Some(s) = &self.seeds {
            c.seeds = s.clone();
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = d.clone();
        }
        c.stretch = self.stretch.unwrap_or(c.stretch);
        c.missing_rate = self.missing_rate.unwrap_or(c.missing_rate);
        c.holdout_fraction = self.holdout_fraction.unwrap_or(c.holdout_fraction);
        if self.n_source.is_some() || self.n_target.is_some() {
            match &mut c.experiment {
                Experiment::Preset { params, .. } => {
                    params.n_source = self.n_source.unwrap_or(params.n_source);
                    params.n_target = self.n_target.unwrap_or(params.n_target);
                }
                Experiment::CsvPair { .. } => {
                    return Err(CliError::Config("--n-source and --n-target apply to presets only".into()));
                }
            }
        }
        if let Some(d) = self.gib_dim {
            c.gib.bottleneck = Bottleneck::Dim(d);
        }
        if let Some(b) = self.gib_beta {
            c.gib.bottleneck = Bottleneck::Beta(b);
        }
        if let Some(b) = self.vib_beta {
            c.vib.beta = b;
        }
        if let Some(z) = self.z_dim {
            c.vib.latent_dim = z;
        }
        if let Some(e) = self.max_epochs {
            c.vib.max_epochs = e;
            c.dnn.max_epochs = e;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct TheoryArgs {
    /// JSON suite configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of random SEMs in the structural checks.
    #[arg(long)]
    random_instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seeds per sample size in the concentration sweep.
    #[arg(long)]
    sweep_seeds: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long, default_value = "theory_check.json")]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate(args) => simulate(&args)?,
        Command::Fit { experiment, model } => fit(&experiment.resolve()?, &model)?,
        Command::Predict { model, input, output } => predict(&model, &input, output.as_deref())?,
        Command::Run(args) => {
            let config = args.resolve()?;
            let outcome = mbib::runner::run(&config)?;
            let a = &outcome.aggregate;
            print_summary("source", &a.source);
            if let Some(t) = &a.target {
                print_summary("target", t);
            }
            if a.invariance_flags > 0 {
                println!("warning: {} seed(s) show a target residual shift; blanket invariance may not hold", a.invariance_flags);
            }
            println!("reports written to {}", config.output_dir.display());
        }
        Command::Sweep { experiment, grid, grid_file, workers } => {
            let config = experiment.resolve()?;
            let grid = match grid_file {
                Some(path) => mbib::io::read_json::<SweepGrid>(&path)?,
                None => SweepGrid { axes: grid.iter().map(|g| GridAxis::parse(g)).collect::<Result<_>>()? },
            };
            let outcome = mbib::sweep::sweep(&config, &grid, workers)?;
            print!("{}", mbib::sweep::cell_table(&outcome));
            println!("reports written to {}", config.output_dir.display());
        }
        Command::TheoryCheck(args) => return theory_check(&args),
    }
    Ok(ExitCode::SUCCESS)
}

fn print_summary(label: &str, m: &MetricSummary) {
    let se = |s: Option<f64>| s.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"));
    println!(
        "{label}: r2 {:.4} ± {}  rmse {:.4} ± {}  mae {:.4} ± {}  ({} seeds)",
        m.r2.mean,
        se(m.r2.se),
        m.rmse.mean,
        se(m.rmse.se),
        m.mae.mean,
        se(m.mae.se),
        m.r2.n
    );
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let name: PresetName = args.preset.parse().map_err(|e: mbib::core::Error| CliError::Config(e.to_string()))?;
    let mut params = match &args.params {
        Some(path) => mbib::io::read_json::<PresetParams>(path)?,
        None => PresetParams::default(),
    };
    params.n_source = args.n_source.unwrap_or(params.n_source);
    params.n_target = args.n_target.unwrap_or(params.n_target);
    let config = ExperimentConfig {
        experiment: Experiment::Preset { name, params },
        seeds: vec![args.seed],
        stretch: args.stretch.unwrap_or(1.0),
        ..Default::default()
    };
    config.validate()?;
    let data = seed_data(&config, args.seed, None)?;
    let truth = data.target_truth.as_deref().expect("presets always carry the target");
    let target = data
        .target_inputs
        .with_column(&config.target, truth)
        .and_then(|t| t.select(data.source.columns()))
        .context(|| "assembling the target".into())?;
    mbib::io::write_dataset(&args.out.join("source.csv"), &data.source)?;
    mbib::io::write_dataset(&args.out.join("target.csv"), &target)?;
    mbib::io::write_dag(&args.out.join("dag.txt"), data.dag.as_ref().expect("presets carry their DAG"))?;
    println!(
        "wrote {} source and {} target rows to {} (seed {})",
        data.source.n_rows(),
        target.n_rows(),
        args.out.display(),
        args.seed
    );
    Ok(())
}

fn fit(config: &ExperimentConfig, path: &Path) -> Result<()> {
    let csv = match &config.experiment {
        Experiment::CsvPair { source, target, dag } => Some(CsvDomains::load(source, target, dag.as_deref())?),
        Experiment::Preset { .. } => None,
    };
    let seed = config.seeds[0];
    let data = seed_data(config, seed, csv.as_ref())?;
    let features = resolve_scope(config, data.dag.as_ref(), data.source.columns())?;
    let model = fit_model(config, &data.source, &features, derive_seed(seed, "model"))?;
    ModelFile::new(model.clone()).save(path)?;
    println!("{} model on [{}] written to {}", config.method.as_str(), model.features().join(", "), path.display());
    Ok(())
}

fn predict(model_path: &Path, input: &Path, output: Option<&Path>) -> Result<()> {
    let model = ModelFile::load(model_path)?.model;
    let data = mbib::io::read_dataset(input)?;
    let target = model.target().to_owned();
    let inputs = if data.has_column(&target) {
        data.without_column(&target).context(|| "dropping the target column".into())?
    } else {
        data
    };
    let predicted = model.predict(&inputs).map_err(|e| match e {
        mbib::core::Error::MissingColumn(c) => CliError::data(input, format!("missing feature column `{c}`")),
        other => CliError::Core { context: "predicting".into(), source: other },
    })?;
    let out = inputs.with_column(&target, &predicted).context(|| "assembling predictions".into())?;
    match output {
        Some(path) => mbib::io::write_dataset(path, &out)?,
        None => mbib::io::format_dataset(std::io::stdout().lock(), &out).map_err(|e| CliError::io("<stdout>", e))?,
    }
    Ok(())
}

fn theory_check(args: &TheoryArgs) -> Result<ExitCode> {
    let mut config = match &args.config {
        Some(path) => mbib::io::read_json::<SuiteConfig>(path)?,
        None => SuiteConfig::default(),
    };
    config.random_instances = args.random_instances.unwrap_or(config.random_instances);
    if let Some(seed) = args.seed {
        config.seed = seed;
        config.risk.first_seed = seed;
        config.sweep.first_seed = seed;
    }
    config.sweep.seeds = args.sweep_seeds.unwrap_or(config.sweep.seeds);
    let report = mbib::theory::run_suite(&config)?;
    print!("{}", mbib::theory::summary_table(&report));
    mbib::io::write_json(&args.output, &report)?;
    println!("report written to {}", args.output.display());
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
