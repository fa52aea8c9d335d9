//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::networks::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Spatial nodes, both walls included.
    pub nx: usize,
    /// Time intervals; the grid has `nt + 1` nodes.
    pub nt: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { nx: 64, nt: 100 }
    }
}

pub const PAPER_MU_TRAIN: [f64; 8] = [20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 100.0];
pub const PAPER_MU_TEST: [f64; 5] = [15.0, 25.0, 45.0, 90.0, 110.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mu_train: Vec<f64>,
    #[serde(default = "default_mu_test")]
    pub mu_test: Vec<f64>,
}

fn default_mu_test() -> Vec<f64> {
    PAPER_MU_TEST.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name of the pretrained checkpoint inside `dir`.
    pub checkpoint: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            checkpoint: "pretrained.ckpt".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub domain: DomainSpec,
    #[serde(default)]
    pub grid: GridConfig,
    pub train: TrainConfig,
    pub params: ParamsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn new(train: TrainConfig, mu_train: Vec<f64>) -> Self {
        Self {
            model: ModelConfig::default(),
            domain: DomainSpec::default(),
            grid: GridConfig::default(),
            train,
            params: ParamsConfig {
                mu_train,
                mu_test: default_mu_test(),
            },
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.domain.validate()?;
        self.train.validate()?;
        if self.grid.nx < 3 || self.grid.nt < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs nx >= 3 and nt >= 2, got nx={}, nt={}",
                self.grid.nx, self.grid.nt
            )));
        }
        for (name, list) in [("mu_train", &self.params.mu_train), ("mu_test", &self.params.mu_test)] {
            if list.is_empty() {
                return Err(Error::InvalidConfig(format!("params.{name} must not be empty")));
            }
            if let Some(&mu) = list.iter().find(|&&m| !(m > 0.0)) {
                return Err(Error::InvalidConfig(format!(
                    "params.{name} contains non-positive mu {mu}"
                )));
            }
        }
        Ok(())
    }

    /// μ_train ∪ μ_test, sorted.
    pub fn all_mus(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .params
            .mu_train
            .iter()
            .chain(&self.params.mu_test)
            .copied()
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[train]\nepochs = 10\n[params]\nmu_train = [20.0, 30.0]\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL, Path::new("m.toml")).unwrap();
        assert_eq!(c.train.epochs, 10);
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.finetune_learning_rate, 1e-4);
        assert_eq!(c.grid, GridConfig { nx: 64, nt: 100 });
        assert_eq!(c.params.mu_test, PAPER_MU_TEST.to_vec());
        assert_eq!(c.model.latent_dim, 10);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::from_toml_str(MINIMAL, Path::new("m.toml")).unwrap();
        c.train.target_rel_l2 = Some(0.05);
        c.model.decoder.freq_scale = 0.1 + 0.2;
        let back = RunConfig::from_toml_str(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_field_is_named() {
        let err =
            RunConfig::from_toml_str("[train]\n[params]\nmu_train = [20.0]\n", Path::new("bad.toml")).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::ConfigParse { .. }));
        assert!(msg.contains("bad.toml") && msg.contains("epochs"), "{msg}");
        let err = RunConfig::from_toml_str("[train]\nepochs = 1\n", Path::new("bad.toml")).unwrap_err();
        assert!(err.to_string().contains("params"), "{err}");
    }

    #[test]
    fn unknown_and_invalid_fields_are_rejected() {
        let text = format!("{MINIMAL}[grid]\nnx = 16\nnz = 3\n");
        let err = RunConfig::from_toml_str(&text, Path::new("c.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("nz") && err.contains("line"), "{err}");
        let text = "[train]\nepochs = 1\n[params]\nmu_train = [20.0, -1.0]\n";
        assert!(matches!(
            RunConfig::from_toml_str(text, Path::new("c.toml")),
            Err(Error::InvalidConfig(_))
        ));
        let text = "[train]\nepochs = 1\n[params]\nmu_train = []\n";
        assert!(RunConfig::from_toml_str(text, Path::new("c.toml")).is_err());
    }

    #[test]
    fn union_of_parameter_sets() {
        let c = RunConfig::new(TrainConfig::new(1), PAPER_MU_TRAIN.to_vec());
        let all = c.all_mus();
        assert_eq!(all.len(), 13);
        assert_eq!(all[0], 15.0);
        assert_eq!(all[12], 110.0);
    }
}
