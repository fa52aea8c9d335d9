//! The command-line verbs as library functions.

use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::networks::init_parameters;
use crate::oracle::{fom_solve, grid_relative_l2, GridSolution};
use crate::report::{evaluate_model, EvaluationReport};
use crate::training::{
    build_collocation, finetune_scenario_b, train_scenario_a, Adam, LossHistory, Targets, TrainRun, TrainState,
};

pub const PRETRAIN_HISTORY: &str = "pretrain_history.csv";
pub const EVALUATION_REPORT: &str = "evaluation.csv";

/// Command-line values that take precedence over the configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub nx: Option<usize>,
    pub nt: Option<usize>,
    /// Fine-tuning steps.
    pub steps: Option<usize>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        if let Some(nx) = self.nx {
            cfg.grid.nx = nx;
        }
        if let Some(nt) = self.nt {
            cfg.grid.nt = nt;
        }
        if let Some(s) = self.steps {
            cfg.train.finetune_epochs = s;
        }
    }
}

/// `μ` as it appears in file names.
pub fn mu_tag(mu: f64) -> String {
    format!("{mu}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub loss_history: LossHistory,
}

/// Persist the run, then surface a divergence as an error.
fn finish(run: TrainRun, ckpt: &Checkpoint, ckpt_path: PathBuf, hist_path: PathBuf) -> Result<TrainOutput> {
    ckpt.save(&ckpt_path)?;
    write(&hist_path, &run.history.to_csv())?;
    let loss_history = run.into_result()?;
    Ok(TrainOutput {
        checkpoint: ckpt_path,
        history: hist_path,
        loss_history,
    })
}

/// Scenario (a) from a config file. With `resume`, training continues from
/// that checkpoint until `train.epochs` epochs are complete.
pub fn cmd_pretrain(config_path: &Path, resume: Option<&Path>, ov: &Overrides) -> Result<TrainOutput> {
    let mut cfg = RunConfig::load(config_path)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    pretrain_with(cfg, resume)
}

pub fn pretrain_with(cfg: RunConfig, resume: Option<&Path>) -> Result<TrainOutput> {
    let model = Model::new(cfg.model.clone(), cfg.domain)?;
    let (mut bank, mut opt, epoch) = match resume {
        Some(p) => {
            let c = Checkpoint::load(p)?;
            if c.config.model != cfg.model || c.config.domain != cfg.domain {
                return Err(Error::InvalidConfig(
                    "checkpoint model or domain differs from the config".into(),
                ));
            }
            (c.bank, c.optimizer, c.epoch)
        }
        None => {
            let bank = init_parameters(&cfg.model, &cfg.params.mu_train, cfg.train.seed)?;
            let opt = Adam::new(cfg.train.learning_rate, bank.len());
            (bank, opt, 0)
        }
    };
    opt.lr = cfg.train.learning_rate;
    let colloc = build_collocation(&cfg.domain, cfg.grid.nx, cfg.grid.nt, &cfg.params.mu_train)?;
    let targets = Targets::exact(&colloc);
    let mut tc = cfg.train.clone();
    tc.epochs = tc.epochs.saturating_sub(epoch);
    let state = TrainState {
        bank: &mut bank,
        optimizer: &mut opt,
        epoch,
    };
    let run = train_scenario_a(&model, state, &tc, &colloc, &targets)?;
    let dir = cfg.output.dir.clone();
    ensure_dir(&dir)?;
    let ckpt = Checkpoint {
        seed: cfg.train.seed,
        epoch: run.epoch,
        stage: "pretrain".into(),
        config: cfg.clone(),
        bank,
        optimizer: opt,
    };
    finish(run, &ckpt, dir.join(&cfg.output.checkpoint), dir.join(PRETRAIN_HISTORY))
}

/// Scenario (b) for one μ starting from a checkpoint. An optional config
/// replaces the checkpoint's training and grid settings; its model and
/// domain must agree with the checkpoint.
pub fn cmd_finetune(checkpoint: &Path, mu: f64, config: Option<&Path>, ov: &Overrides) -> Result<TrainOutput> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    let mut ck = Checkpoint::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    if let Some(p) = config {
        let over = RunConfig::load(p)?;
        if over.model != cfg.model || over.domain != cfg.domain {
            return Err(Error::InvalidConfig(
                "config model or domain differs from the checkpoint".into(),
            ));
        }
        cfg.train = over.train;
        cfg.grid = over.grid;
        cfg.output = over.output;
    }
    ov.apply(&mut cfg);
    cfg.validate()?;
    let model = Model::new(cfg.model.clone(), cfg.domain)?;
    let mut opt = Adam::new(cfg.train.finetune_learning_rate, ck.bank.len());
    let state = TrainState {
        bank: &mut ck.bank,
        optimizer: &mut opt,
        epoch: 0,
    };
    let run = finetune_scenario_b(&model, state, &cfg.train, cfg.grid.nx, cfg.grid.nt, mu)?;
    let dir = cfg.output.dir.clone();
    ensure_dir(&dir)?;
    let tag = mu_tag(mu);
    let out = Checkpoint {
        seed: cfg.train.seed,
        epoch: ck.epoch,
        stage: format!("finetune mu={tag} steps={}", run.epoch),
        config: cfg,
        bank: ck.bank,
        optimizer: opt,
    };
    finish(
        run,
        &out,
        dir.join(format!("finetune_mu{tag}.ckpt")),
        dir.join(format!("finetune_mu{tag}_history.csv")),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutput {
    pub report: EvaluationReport,
    pub report_path: PathBuf,
    pub heatmaps: Vec<PathBuf>,
}

/// Errors against the closed form on `[0, T]` and `(T, t_max]`. Defaults to
/// μ_train ∪ μ_test and the grid stored in the checkpoint.
pub fn cmd_evaluate(
    checkpoint: &Path,
    mus: Option<&[f64]>,
    t_max: Option<f64>,
    ov: &Overrides,
) -> Result<EvaluateOutput> {
    let ck = Checkpoint::load(checkpoint)?;
    let mut cfg = ck.config.clone();
    ov.apply(&mut cfg);
    let model = Model::new(cfg.model.clone(), cfg.domain)?;
    let all = cfg.all_mus();
    let mus = mus.unwrap_or(&all);
    if let Some(&mu) = mus.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::NonPositiveMu(mu));
    }
    let t_max = t_max.unwrap_or(cfg.domain.t_final);
    let report = evaluate_model(
        &model,
        &ck.bank,
        mus,
        &cfg.params.mu_train,
        cfg.grid.nx,
        cfg.grid.nt,
        t_max,
    )?;
    let dir = cfg.output.dir.clone();
    ensure_dir(&dir)?;
    let report_path = dir.join(EVALUATION_REPORT);
    write(&report_path, &report.to_csv())?;
    let mut heatmaps = Vec::new();
    for h in &report.heatmaps {
        let p = dir.join(format!("heatmap_mu{}.csv", mu_tag(h.mu)));
        write(&p, &h.to_csv())?;
        heatmaps.push(p);
    }
    Ok(EvaluateOutput {
        report,
        report_path,
        heatmaps,
    })
}

/// Backward-Euler reference grid and its relative L2 error against the closed form.
pub fn cmd_fom(mu: f64, nx: usize, nt: usize, t_final: f64, out_dir: &Path) -> Result<(PathBuf, f64)> {
    let fom = fom_solve(mu, nx, nt, t_final)?;
    let err = grid_relative_l2(&fom, &GridSolution::exact(mu, nx, nt, t_final))?;
    ensure_dir(out_dir)?;
    let p = out_dir.join(format!("fom_mu{}.csv", mu_tag(mu)));
    fom.write_csv(&p)?;
    Ok((p, err))
}

/// Closed-form solution sampled on a grid.
pub fn cmd_exact(mu: f64, nx: usize, nt: usize, t_final: f64, out_dir: &Path) -> Result<PathBuf> {
    if !(mu > 0.0) {
        return Err(Error::NonPositiveMu(mu));
    }
    if nx < 2 || nt < 1 {
        return Err(Error::MalformedGrid(format!(
            "need nx >= 2 and nt >= 1, got nx={nx}, nt={nt}"
        )));
    }
    ensure_dir(out_dir)?;
    let p = out_dir.join(format!("exact_mu{}.csv", mu_tag(mu)));
    GridSolution::exact(mu, nx, nt, t_final).write_csv(&p)?;
    Ok(p)
}
