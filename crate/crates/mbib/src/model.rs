//! Fitting any of the four methods behind one type, and the versioned model
//! file.

use std::path::Path;

use mbib_core::eval::GaussianBnImputer;
use mbib_core::gib::{fit_gib, GibModel};
use mbib_core::vib::{fit_vib, VibModel};
use mbib_core::{Dataset, Imputer};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, TOOLKIT_VERSION};
use crate::error::{CliError, Context, Result};

pub const MODEL_FORMAT: &str = "mbib-model";
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum FittedModel {
    Gib(GibModel),
    Vib(VibModel),
    Bn(GaussianBnImputer),
    Dnn(VibModel),
}

impl FittedModel {
    pub fn method(&self) -> Method {
        match self {
            FittedModel::Gib(_) => Method::Gib,
            FittedModel::Vib(_) => Method::Vib,
            FittedModel::Bn(_) => Method::Bn,
            FittedModel::Dnn(_) => Method::Dnn,
        }
    }

    fn inner(&self) -> &dyn Imputer {
        match self {
            FittedModel::Gib(m) => m,
            FittedModel::Vib(m) | FittedModel::Dnn(m) => m,
            FittedModel::Bn(m) => m,
        }
    }
}

impl Imputer for FittedModel {
    fn features(&self) -> &[String] {
        self.inner().features()
    }

    fn target(&self) -> &str {
        self.inner().target()
    }

    fn predict(&self, inputs: &Dataset) -> mbib_core::Result<Vec<f64>> {
        self.inner().predict(inputs)
    }
}

/// Fits `config.method` on `source`. `features` is the resolved scope; the
/// `bn` method ignores it and conditions on every non-target column.
pub fn fit_model(config: &ExperimentConfig, source: &Dataset, features: &[String], seed: u64) -> Result<FittedModel> {
    let target = config.target.as_str();
    let context = || format!("fitting {} on the source", config.method.as_str());
    Ok(match config.method {
        Method::Gib => FittedModel::Gib(fit_gib(source, features, target, config.gib).context(context)?),
        Method::Vib => {
            let vib = mbib_core::vib::VibConfig { seed, ..config.vib.clone() };
            FittedModel::Vib(fit_vib(source, features, target, &vib).context(context)?)
        }
        Method::Dnn => FittedModel::Dnn(fit_vib(source, features, target, &config.dnn_config(seed)).context(context)?),
        Method::Bn => FittedModel::Bn(GaussianBnImputer::fit(source, target, config.bn_ridge).context(context)?),
    })
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub schema_version: u32,
    pub toolkit_version: String,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn new(model: FittedModel) -> Self {
        ModelFile {
            format: MODEL_FORMAT.into(),
            schema_version: MODEL_SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION.into(),
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = crate::io::read_json(path)?;
        if file.format != MODEL_FORMAT {
            return Err(CliError::data(path, format!("not a model file (format `{}`)", file.format)));
        }
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(CliError::data(path, format!("unsupported model schema version {}", file.schema_version)));
        }
        Ok(file)
    }
}
