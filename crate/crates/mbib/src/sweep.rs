//! Grid sweeps over at most two axes. Every cell is an ordinary run with its
//! own output directory; the long-format table is merged in grid order once
//! all cells finish, so the worker count never changes the output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mbib_core::gib::Bottleneck;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig, Method, SCHEMA_VERSION, TOOLKIT_VERSION};
use crate::error::{CliError, Result};
use crate::runner::{execute_with, write_outcome, CsvDomains, MetricSummary, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    ZDim,
    Beta,
    Stretch,
    MissingRate,
    NSource,
}

impl Axis {
    pub const ALL: [Axis; 5] = [Axis::ZDim, Axis::Beta, Axis::Stretch, Axis::MissingRate, Axis::NSource];

    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::ZDim => "z_dim",
            Axis::Beta => "beta",
            Axis::Stretch => "stretch",
            Axis::MissingRate => "missing_rate",
            Axis::NSource => "n_source",
        }
    }

    /// Returns `config` with this axis set to `value`.
    pub fn apply(&self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(CliError::Config(format!("{} must be a positive integer, got {value}", self.as_str())))
            }
        };
        let not_for = |m: Method| Err(CliError::Config(format!("axis {} does not apply to method {}", self.as_str(), m.as_str())));
        match self {
            Axis::ZDim => match c.method {
                Method::Vib => c.vib.latent_dim = count()?,
                Method::Dnn => c.dnn.latent_dim = count()?,
                Method::Gib => c.gib.bottleneck = Bottleneck::Dim(count()?),
                m @ Method::Bn => return not_for(m),
            },
            Axis::Beta => match c.method {
                Method::Vib => c.vib.beta = value,
                Method::Gib => c.gib.bottleneck = Bottleneck::Beta(value),
                m => return not_for(m),
            },
            Axis::Stretch => c.stretch = value,
            Axis::MissingRate => c.missing_rate = value,
            Axis::NSource => match &mut c.experiment {
                Experiment::Preset { params, .. } => params.n_source = count()?,
                Experiment::CsvPair { .. } => {
                    return Err(CliError::Config("axis n_source applies to presets only".into()));
                }
            },
        }
        Ok(c)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL.into_iter().find(|a| a.as_str() == s).ok_or_else(|| {
            CliError::Config(format!("unknown sweep axis `{s}` (expected z_dim, beta, stretch, missing_rate or n_source)"))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl GridAxis {
    /// Parses `name=v1,v2,...`.
    pub fn parse(s: &str) -> Result<GridAxis> {
        let (name, list) =
            s.split_once('=').ok_or_else(|| CliError::Config(format!("grid axis `{s}` must look like name=v1,v2")))?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("`{v}` in axis {name} is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridAxis { axis: name.trim().parse()?, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub axes: Vec<GridAxis>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(CliError::Config(format!("a sweep needs one or two axes, got {}", self.axes.len())));
        }
        if self.axes.len() == 2 && self.axes[0].axis == self.axes[1].axis {
            return Err(CliError::Config(format!("axis {} given twice", self.axes[0].axis)));
        }
        for a in &self.axes {
            if a.values.is_empty() || a.values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(format!("axis {} needs finite values", a.axis)));
            }
        }
        Ok(())
    }

    /// Cells in row-major order; the first axis varies slowest.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, axis| {
            acc.into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut cell = prefix.clone();
                        cell.push(v);
                        cell
                    })
                })
                .collect()
        })
    }

    fn names(&self) -> Vec<&'static str> {
        self.axes.iter().map(|a| a.axis.as_str()).collect()
    }
}

/// One sweep cell's aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub values: Vec<f64>,
    pub output_dir: PathBuf,
    pub target: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub grid: SweepGrid,
    pub cells: Vec<CellSummary>,
}

/// A completed sweep: the merged report plus each cell's full outcome.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub cells: Vec<(ExperimentConfig, RunOutcome)>,
}

fn cell_dir(base: &Path, grid: &SweepGrid, values: &[f64]) -> PathBuf {
    let label: Vec<String> = grid.axes.iter().zip(values).map(|(a, v)| format!("{}={v}", a.axis)).collect();
    base.join("cells").join(label.join("_"))
}

/// Runs every cell with up to `workers` threads (0 uses the rayon default)
/// without writing anything.
pub fn execute_sweep(config: &ExperimentConfig, grid: &SweepGrid, workers: usize) -> Result<SweepOutcome> {
    grid.validate()?;
    config.validate()?;
    let mut cell_configs = Vec::new();
    for values in grid.cells() {
        let mut c = config.clone();
        for (axis, &v) in grid.axes.iter().zip(&values) {
            c = axis.axis.apply(&c, v)?;
        }
        c.output_dir = cell_dir(&config.output_dir, grid, &values);
        c.validate()?;
        cell_configs.push((values, c));
    }
    let csv = match &config.experiment {
        Experiment::CsvPair { source, target, dag } => Some(CsvDomains::load(source, target, dag.as_deref())?),
        Experiment::Preset { .. } => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let results: Vec<Result<RunOutcome>> =
        pool.install(|| cell_configs.par_iter().map(|(_, c)| execute_with(c, csv.as_ref())).collect());

    let mut cells = Vec::new();
    let mut summaries = Vec::new();
    for ((values, c), outcome) in cell_configs.into_iter().zip(results) {
        let outcome = outcome?;
        let target = outcome.aggregate.target.ok_or_else(|| {
            CliError::Config("sweeps need target truth to score cells; the target file has no target column".into())
        })?;
        summaries.push(CellSummary { values, output_dir: c.output_dir.clone(), target });
        cells.push((c, outcome));
    }
    let report = SweepReport {
        schema_version: SCHEMA_VERSION,
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config.clone(),
        grid: grid.clone(),
        cells: summaries,
    };
    Ok(SweepOutcome { report, cells })
}

/// Long-format table: axis values, seed, mae, rmse, r2.
pub fn long_table(outcome: &SweepOutcome) -> String {
    let grid = &outcome.report.grid;
    let mut out = grid.names().join(",");
    out.push_str(",seed,mae,rmse,r2\n");
    for (summary, (_, run)) in outcome.report.cells.iter().zip(&outcome.cells) {
        for s in &run.seeds {
            let m = s.report.target_metrics.expect("sweep cells are scored");
            let axes: Vec<String> = summary.values.iter().map(f64::to_string).collect();
            out.push_str(&format!("{},{},{},{},{}\n", axes.join(","), s.report.seed, m.mae, m.rmse, m.r2));
        }
    }
    out
}

/// One row per cell with mean and standard error of each metric.
pub fn cell_table(outcome: &SweepOutcome) -> String {
    let mut out = outcome.report.grid.names().join(",");
    out.push_str(",n_seeds,mae_mean,mae_se,rmse_mean,rmse_se,r2_mean,r2_se\n");
    let se = |s: Option<f64>| s.map_or_else(String::new, |v| v.to_string());
    for c in &outcome.report.cells {
        let axes: Vec<String> = c.values.iter().map(f64::to_string).collect();
        let t = &c.target;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            axes.join(","),
            t.rmse.n,
            t.mae.mean,
            se(t.mae.se),
            t.rmse.mean,
            se(t.rmse.se),
            t.r2.mean,
            se(t.r2.se)
        ));
    }
    out
}

pub fn write_sweep(dir: &Path, outcome: &SweepOutcome) -> Result<()> {
    for (c, run) in &outcome.cells {
        write_outcome(&c.output_dir, run)?;
    }
    crate::io::write_bytes(&dir.join("sweep_long.csv"), long_table(outcome).as_bytes())?;
    crate::io::write_bytes(&dir.join("sweep_cells.csv"), cell_table(outcome).as_bytes())?;
    crate::io::write_json(&dir.join("sweep.json"), &outcome.report)
}

/// Runs the sweep and writes everything under `config.output_dir`.
pub fn sweep(config: &ExperimentConfig, grid: &SweepGrid, workers: usize) -> Result<SweepOutcome> {
    let outcome = execute_sweep(config, grid, workers)?;
    write_sweep(&config.output_dir, &outcome)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mbib_core::sem::PresetName;

    fn grid(specs: &[&str]) -> SweepGrid {
        SweepGrid { axes: specs.iter().map(|s| GridAxis::parse(s).unwrap()).collect() }
    }

    #[test]
    fn cells_are_row_major() {
        let g = grid(&["stretch=1,2", "missing_rate=0,0.5,0.25"]);
        let cells = g.cells();
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], vec![1.0, 0.0]);
        assert_eq!(cells[2], vec![1.0, 0.25]);
        assert_eq!(cells[3], vec![2.0, 0.0]);
    }

    #[test]
    fn grid_validation() {
        assert!(grid(&[]).validate().is_err());
        assert!(grid(&["beta=1", "z_dim=1", "stretch=1"]).validate().is_err());
        assert!(grid(&["beta=1", "beta=2"]).validate().is_err());
        assert!(GridAxis::parse("gamma=1").is_err());
        assert!(GridAxis::parse("beta").is_err());
        assert!(GridAxis::parse("beta=x").is_err());
    }

    #[test]
    fn axes_map_onto_config_fields() {
        let base = ExperimentConfig { method: Method::Vib, ..Default::default() };
        assert_eq!(Axis::ZDim.apply(&base, 4.0).unwrap().vib.latent_dim, 4);
        assert!(Axis::ZDim.apply(&base, 2.5).is_err());
        assert_eq!(Axis::Beta.apply(&base, 0.01).unwrap().vib.beta, 0.01);
        let gib = ExperimentConfig::default();
        assert_eq!(Axis::Beta.apply(&gib, 3.0).unwrap().gib.bottleneck, Bottleneck::Beta(3.0));
        let bn = ExperimentConfig { method: Method::Bn, ..Default::default() };
        assert!(Axis::Beta.apply(&bn, 3.0).is_err());
        match Axis::NSource.apply(&gib, 500.0).unwrap().experiment {
            Experiment::Preset { params, .. } => assert_eq!(params.n_source, 500),
            _ => unreachable!(),
        }
    }

    #[test]
    fn single_cell_matches_a_plain_run() {
        let config = ExperimentConfig { seeds: vec![0, 1], ..ExperimentConfig::preset(PresetName::SevenNodeCovariate) };
        let out = execute_sweep(&config, &grid(&["stretch=1"]), 1).unwrap();
        let run = crate::runner::execute(&config).unwrap();
        let (cell_config, cell) = &out.cells[0];
        assert_eq!(cell.seeds.len(), run.seeds.len());
        for (a, b) in cell.seeds.iter().zip(&run.seeds) {
            assert_eq!(a.predicted, b.predicted);
            assert_eq!(a.report.target_metrics, b.report.target_metrics);
        }
        assert_eq!(ExperimentConfig { output_dir: config.output_dir.clone(), ..cell_config.clone() }, config);
        assert_eq!(long_table(&out).lines().count(), 3);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let config = ExperimentConfig { seeds: vec![0], ..ExperimentConfig::preset(PresetName::SevenNodeCovariate) };
        let g = grid(&["missing_rate=0,0.3"]);
        let a = execute_sweep(&config, &g, 1).unwrap();
        let b = execute_sweep(&config, &g, 2).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(long_table(&a), long_table(&b));
    }
}
