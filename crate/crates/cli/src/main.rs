use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnf_rom::commands::{self, Overrides};
use cnf_rom::config::RunConfig;
use cnf_rom::Result;

#[derive(Parser)]
#[command(
    name = "cnf-rom",
    version,
    about = "CNF-ROM experiments on the 1D viscous Burgers equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Random seed (overrides `train.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Spatial nodes including both walls (overrides `grid.nx`).
    #[arg(long)]
    nx: Option<usize>,
    /// Time intervals (overrides `grid.nt`).
    #[arg(long)]
    nt: Option<usize>,
}

impl Common {
    fn overrides(&self, steps: Option<usize>) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            nx: self.nx,
            nt: self.nt,
            steps,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Scenario (a): data pretraining of every parameter group.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Scenario (b): residual-driven fine-tuning of the latent dynamics for one mu.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        mu: f64,
        /// Replaces the checkpoint's [train], [grid] and [output] settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fine-tuning steps (overrides `train.finetune_epochs`).
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Relative L2 errors against the closed form and absolute-error heatmaps.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Parameters to evaluate; defaults to mu_train and mu_test of the checkpoint.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        mu: Vec<f64>,
        #[arg(long)]
        t_max: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Backward-Euler full-order solution.
    Fom(GridArgs),
    /// Closed-form solution sampled on a grid.
    Exact(GridArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Take grid, domain and default mu values from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mu: Vec<f64>,
    /// Final time (defaults to the domain's T).
    #[arg(long)]
    t_max: Option<f64>,
    #[command(flatten)]
    common: Common,
}

struct Grid {
    mus: Vec<f64>,
    nx: usize,
    nt: usize,
    t_final: f64,
    out_dir: PathBuf,
}

fn resolve_grid(a: &GridArgs) -> Result<Grid> {
    let cfg = a.config.as_deref().map(RunConfig::load).transpose()?;
    let mus = match (&cfg, a.mu.is_empty()) {
        (_, false) => a.mu.clone(),
        (Some(c), true) => c.all_mus(),
        (None, true) => return Err(cnf_rom::Error::EmptyMuList),
    };
    Ok(Grid {
        mus,
        nx: a.common.nx.or(cfg.as_ref().map(|c| c.grid.nx)).unwrap_or(64),
        nt: a.common.nt.or(cfg.as_ref().map(|c| c.grid.nt)).unwrap_or(100),
        t_final: a.t_max.or(cfg.as_ref().map(|c| c.domain.t_final)).unwrap_or(1.0),
        out_dir: a
            .common
            .out_dir
            .clone()
            .or(cfg.as_ref().map(|c| c.output.dir.clone()))
            .unwrap_or_else(|| PathBuf::from("out")),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain {
            config,
            checkpoint,
            common,
        } => {
            let out = commands::cmd_pretrain(&config, checkpoint.as_deref(), &common.overrides(None))?;
            if let (Some(f), Some(l)) = (out.loss_history.first(), out.loss_history.last()) {
                println!(
                    "epochs {}..{}: loss {:e} -> {:e}, mean relative L2 {:e}",
                    f.epoch, l.epoch, f.total, l.total, l.mean_rel_l2
                );
            }
            println!("checkpoint {}", out.checkpoint.display());
            println!("history {}", out.history.display());
        }
        Command::Finetune {
            checkpoint,
            mu,
            config,
            steps,
            common,
        } => {
            let out = commands::cmd_finetune(&checkpoint, mu, config.as_deref(), &common.overrides(steps))?;
            if let (Some(f), Some(l)) = (out.loss_history.first(), out.loss_history.last()) {
                println!(
                    "mu {mu}: pde loss {:e} -> {:e}, relative L2 {:e}",
                    f.pde, l.pde, l.mean_rel_l2
                );
            }
            println!("checkpoint {}", out.checkpoint.display());
            println!("history {}", out.history.display());
        }
        Command::Evaluate {
            checkpoint,
            mu,
            t_max,
            common,
        } => {
            let mus = (!mu.is_empty()).then_some(mu.as_slice());
            let out = commands::cmd_evaluate(&checkpoint, mus, t_max, &common.overrides(None))?;
            print!("{}", out.report.to_csv());
            println!("report {}", out.report_path.display());
        }
        Command::Fom(a) => {
            let g = resolve_grid(&a)?;
            for mu in g.mus {
                let (p, err) = commands::cmd_fom(mu, g.nx, g.nt, g.t_final, &g.out_dir)?;
                println!("mu {mu}: relative L2 vs closed form {err:e} -> {}", p.display());
            }
        }
        Command::Exact(a) => {
            let g = resolve_grid(&a)?;
            for mu in g.mus {
                let p = commands::cmd_exact(mu, g.nx, g.nt, g.t_final, &g.out_dir)?;
                println!("mu {mu}: {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
