use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use reqgate_core::classifier::{BaselineParams, SearchSpace};
use reqgate_core::generator::GeneratorConfig;
use reqgate_core::harness::ExperimentConfig;
use reqgate_core::rules::{Environment, VersionId};
use reqgate_core::workflow::TrainSettings;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOML: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub raw_log: PathBuf,
    pub dataset: PathBuf,
    pub schema: PathBuf,
    pub model: PathBuf,
    /// Schema after feature selection; the model is tied to this one.
    pub model_schema: PathBuf,
    pub campaign_log: PathBuf,
    pub results: PathBuf,
    pub reports: PathBuf,
    pub catalog: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        let out = PathBuf::from("out");
        Self {
            raw_log: out.join("raw.jsonl"),
            dataset: out.join("dataset.csv"),
            schema: out.join("schema.json"),
            model: out.join("model.json"),
            model_schema: out.join("model_schema.json"),
            campaign_log: out.join("campaign.jsonl"),
            results: out.join("results.csv"),
            reports: out.join("reports"),
            catalog: out.join("catalog"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Service {
    pub catalog_seed: u64,
    pub version: VersionId,
    pub environment: Environment,
    pub listen: String,
    /// Send requests to a running server instead of an in-process one.
    pub url: Option<String>,
}

impl Default for Service {
    fn default() -> Self {
        Self {
            catalog_seed: 0,
            version: VersionId::new(1).expect("v1"),
            environment: Environment::Dev,
            listen: "127.0.0.1:8080".into(),
            url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Search {
    pub trials: usize,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for Search {
    fn default() -> Self {
        Self {
            trials: 50,
            seed: 1,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Campaign {
    pub seed: u64,
    pub budget: usize,
    pub shadow: bool,
}

impl Default for Campaign {
    fn default() -> Self {
        Self {
            seed: 99,
            budget: 5_000,
            shadow: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub paths: Paths,
    pub service: Service,
    pub generator: GeneratorConfig,
    pub train: TrainSettings,
    pub search: Search,
    pub baselines: BaselineParams,
    pub campaign: Campaign,
    pub experiment: ExperimentConfig,
}

impl Config {
    /// Reads `path`, or the built-in defaults when none is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg: Config = match path {
            None => toml::from_str(DEFAULT_TOML).expect("built-in config parses"),
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
        };
        cfg.experiment.generator = cfg.generator.clone();
        cfg.experiment.validate()?;
        Ok(cfg)
    }
}
