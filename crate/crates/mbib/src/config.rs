//! The experiment configuration document.
//!
//! A configuration is one JSON object. Every field has a default, so `{}` is
//! a valid configuration describing MB-GIB on the motivating preset over
//! five seeds. Unknown keys are rejected to catch typos early.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use mbib_core::gib::{Bottleneck, GibConfig};
use mbib_core::numstats::Ridge;
use mbib_core::sem::{PresetName, PresetParams};
use mbib_core::vib::VibConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Version of the configuration and report documents.
pub const SCHEMA_VERSION: u32 = 1;

/// Version of this toolkit, embedded in every report.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where source and target data come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// Simulated domains from a built-in SEM pair.
    Preset {
        name: PresetName,
        #[serde(default)]
        params: PresetParams,
    },
    /// One CSV per domain. The target file may lack the target column; when
    /// present it is held back for audit metrics only.
    CsvPair {
        source: PathBuf,
        target: PathBuf,
        #[serde(default)]
        dag: Option<PathBuf>,
    },
}

/// Which features the model may read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scope {
    Blanket,
    Parents,
    /// Every column except the target.
    Global,
    Explicit { features: Vec<String> },
}

impl Scope {
    pub fn needs_dag(&self) -> bool {
        matches!(self, Scope::Blanket | Scope::Parents)
    }

    /// Parses the command-line spelling: `blanket`, `parents`, `global` or
    /// `explicit:A,B,C`.
    pub fn parse(s: &str) -> Result<Scope> {
        match s {
            "blanket" => Ok(Scope::Blanket),
            "parents" => Ok(Scope::Parents),
            "global" => Ok(Scope::Global),
            _ => match s.strip_prefix("explicit:") {
                Some(list) => Ok(Scope::Explicit {
                    features: list.split(',').map(str::trim).filter(|f| !f.is_empty()).map(str::to_owned).collect(),
                }),
                None => Err(CliError::Config(format!(
                    "unknown scope `{s}` (expected blanket, parents, global or explicit:A,B)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Closed-form Gaussian information bottleneck on the scope.
    Gib,
    /// Variational information bottleneck on the scope.
    Vib,
    /// Joint Gaussian over every column, conditioned on all but the target.
    Bn,
    /// Plain regression network on the scope.
    Dnn,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Gib => "gib",
            Method::Vib => "vib",
            Method::Bn => "bn",
            Method::Dnn => "dnn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub target: String,
    pub scope: Scope,
    pub method: Method,
    pub gib: GibConfig,
    pub vib: VibConfig,
    /// Network settings of the `dnn` baseline. Compression, sampling and the
    /// learned scale are always switched off for it.
    pub dnn: VibConfig,
    pub bn_ridge: Ridge,
    pub seeds: Vec<u64>,
    /// Multiplies the noise scale of the target domain's exogenous nodes
    /// (presets only).
    pub stretch: f64,
    /// Probability that a target-domain feature entry is missing completely
    /// at random; missing entries are filled with the source mean.
    pub missing_rate: f64,
    /// Fraction of source rows held out from fitting to measure source
    /// performance. With 0 the model sees every source row and source
    /// metrics are in-sample.
    pub holdout_fraction: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment: Experiment::Preset { name: PresetName::Motivating, params: PresetParams::default() },
            target: "T".into(),
            scope: Scope::Blanket,
            method: Method::Gib,
            gib: GibConfig::default(),
            vib: VibConfig::default(),
            dnn: VibConfig::dnn(),
            bn_ridge: Ridge::default(),
            seeds: (0..5).collect(),
            stretch: 1.0,
            missing_rate: 0.0,
            holdout_fraction: 0.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|source| CliError::Json { path: origin.into(), source })?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::io::read_text(path)?;
        Self::from_json_str(&text, path)
    }

    pub fn preset(name: PresetName) -> Self {
        ExperimentConfig {
            experiment: Experiment::Preset { name, params: PresetParams::default() },
            ..Default::default()
        }
    }

    pub fn is_preset(&self) -> bool {
        matches!(self.experiment, Experiment::Preset { .. })
    }

    /// Checks every rule that can be decided without reading data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.target.is_empty() {
            return bad("target must name a column".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if !(self.stretch > 0.0) || !self.stretch.is_finite() {
            return bad(format!("stretch must be positive, got {}", self.stretch));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction must lie in [0, 1), got {}", self.holdout_fraction));
        }
        match &self.experiment {
            Experiment::Preset { params, .. } => {
                params.driver_weights().map_err(|e| CliError::Config(e.to_string()))?;
                if params.n_source < 2 || params.n_target < 2 {
                    return bad("preset sample sizes must be at least 2".into());
                }
            }
            Experiment::CsvPair { dag, .. } => {
                if self.scope.needs_dag() && dag.is_none() {
                    return bad("scope blanket and parents need a DAG file for csv_pair experiments".into());
                }
                if self.stretch != 1.0 {
                    return bad("stretch applies to presets only".into());
                }
            }
        }
        if let Scope::Explicit { features } = &self.scope {
            if features.is_empty() {
                return bad("explicit scope needs at least one feature".into());
            }
            if features.iter().collect::<BTreeSet<_>>().len() != features.len() {
                return bad("explicit scope lists a feature twice".into());
            }
            if features.contains(&self.target) {
                return bad("explicit scope must not contain the target".into());
            }
        }
        match self.gib.bottleneck {
            Bottleneck::Dim(0) => return bad("gib bottleneck dimension must be at least 1".into()),
            Bottleneck::Beta(b) if !(b > 0.0) || !b.is_finite() => {
                return bad(format!("gib beta must be positive, got {b}"));
            }
            _ => {}
        }
        for (ridge, what) in [(self.gib.ridge, "gib.ridge"), (self.bn_ridge, "bn_ridge")] {
            let v = match ridge {
                Ridge::RelativeTrace(v) | Ridge::Absolute(v) => v,
            };
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{what} must be finite and non-negative"));
            }
        }
        self.vib.validate().map_err(|e| CliError::Config(format!("vib: {e}")))?;
        self.dnn_config(0).validate().map_err(|e| CliError::Config(format!("dnn: {e}")))?;
        Ok(())
    }

    /// The network settings actually used by the `dnn` method.
    pub fn dnn_config(&self, seed: u64) -> VibConfig {
        VibConfig { beta: 0.0, stochastic: false, learn_scale: false, seed, ..self.dnn.clone() }
    }
}
