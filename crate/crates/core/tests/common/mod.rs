#![allow(dead_code)]

use std::path::Path;

use cnf_rom::config::RunConfig;
use cnf_rom::networks::{DecoderConfig, ModelConfig, PnodeConfig};
use cnf_rom::training::TrainConfig;

pub fn small_model() -> ModelConfig {
    ModelConfig {
        latent_dim: 4,
        decoder: DecoderConfig {
            layers: 2,
            filters_per_layer: 4,
            hidden_width: 8,
            freq_scale: 8.0,
            ..Default::default()
        },
        pnode: PnodeConfig {
            hidden_layers: 2,
            width: 16,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// nx=16, nt=20, one μ.
pub fn smoke_config(dir: &Path, epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::new(TrainConfig::new(epochs), vec![20.0]);
    cfg.model = small_model();
    cfg.grid.nx = 16;
    cfg.grid.nt = 20;
    cfg.params.mu_test = vec![15.0];
    cfg.train.weights.data = 100.0;
    cfg.output.dir = dir.to_path_buf();
    cfg
}

pub fn write_config(dir: &Path, cfg: &RunConfig) -> std::path::PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join("run.toml");
    std::fs::write(&p, cfg.to_toml()).unwrap();
    p
}
