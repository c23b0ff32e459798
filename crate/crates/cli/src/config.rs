use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spikerace::mcmc::{ModelKind, PriorConfig, SamplerConfig};
use spikerace::modelselect::ScreenConfig;
use spikerace::posteriorpred::PredictiveConfig;
use spikerace::simulate::DatasetSpec;
use spikerace::splines::BasisConfig;

use crate::error::{CliError, Result};

/// Contents of the TOML run file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Triplet JSON read by fit, compare, screen and predict.
    pub triplet: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Defaults to a cubic basis with quartile knots on the data window.
    pub basis: Option<BasisConfig>,
    pub prior: PriorConfig,
    /// `seed` here is replaced by one derived from the run seed.
    pub sampler: SamplerConfig,
    pub simulate: SimulateConfig,
    pub screen: ScreenConfig,
    pub predict: PredictiveConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Competition,
            seed: None,
            workers: None,
            triplet: None,
            out_dir: PathBuf::from("out"),
            basis: None,
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            simulate: SimulateConfig::default(),
            screen: ScreenConfig::default(),
            predict: PredictiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Named protocol; takes `n_trials` trials per condition.
    pub preset: Option<String>,
    pub n_trials: usize,
    /// Explicit generator, used when no preset is given.
    pub spec: Option<DatasetSpec>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { preset: None, n_trials: 25, spec: None }
    }
}

impl SimulateConfig {
    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let spec = match (&self.preset, &self.spec) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either a preset or an explicit simulate.spec, not both".into())),
            (Some(name), None) => DatasetSpec::preset(name, self.n_trials)?,
            (None, Some(spec)) => spec.clone(),
            (None, None) => return Err(CliError::Usage("simulate needs --preset or a [simulate.spec] table".into())),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input { path: path.to_path_buf(), msg: e.to_string() })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Input { path: path.to_path_buf(), msg: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.triplet = cfg.triplet.map(|p| base.join(p));
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.sampler.validate()?;
        if self.workers == Some(0) {
            return Err(CliError::Usage("workers must be at least 1".into()));
        }
        if self.predict.n_rep == 0 {
            return Err(CliError::Usage("predict.n_rep must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the settings that determine results. Paths and the worker
    /// count are left out because outputs do not depend on them.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.triplet = None;
        c.out_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
