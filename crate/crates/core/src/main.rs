use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vsp_spectrum::experiment::config::{AgentKind, RunConfig, SweepKind};
use vsp_spectrum::experiment::{run_all, tables};
use vsp_spectrum::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AgentArg {
    Ddpg,
    Greedy,
    Unit,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Ddpg => AgentKind::Ddpg,
            AgentArg::Greedy => AgentKind::Greedy,
            AgentArg::Unit => AgentKind::Unit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    None,
    Blocks,
    Vsps,
}

impl From<SweepArg> for SweepKind {
    fn from(s: SweepArg) -> Self {
        match s {
            SweepArg::None => SweepKind::None,
            SweepArg::Blocks => SweepKind::Blocks,
            SweepArg::Vsps => SweepKind::Vsps,
        }
    }
}

/// Priority-weighted repeated spectrum auction with a DDPG broker.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    /// Key-value configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Agent kind to run; repeatable.
    #[arg(long, value_enum)]
    agent: Vec<AgentArg>,
    /// Run seed; repeatable.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    /// Block budget; sets the total band to blocks times the block width.
    #[arg(long)]
    blocks: Option<u32>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    sweep: Option<SweepArg>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Aggregate completed runs under DIR into figure tables.
    Tables { dir: PathBuf },
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_kv_str(&text)?
        }
        None => RunConfig::default(),
    };
    if !cli.agent.is_empty() {
        cfg.agents = cli.agent.iter().map(|&a| a.into()).collect();
    }
    if !cli.seed.is_empty() {
        cfg.seeds = cli.seed.clone();
    }
    if let Some(n) = cli.episodes {
        cfg.set_episodes(n);
    }
    if let Some(n) = cli.frames {
        cfg.set_frames(n);
    }
    if let Some(n) = cli.blocks {
        cfg.set_blocks(n);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = cli.sweep {
        cfg.sweep = s.into();
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(Command::Tables { dir }) = &cli.command {
        return match tables::figure_tables(dir) {
            Ok(report) => {
                for p in &report.written {
                    println!("wrote {}", p.display());
                }
                if !report.missing.is_empty() {
                    eprintln!("{} planned runs missing", report.missing.len());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    if cli.dry_run {
        print!("{}", cfg.to_kv());
        return ExitCode::SUCCESS;
    }
    let result = run_all(&cfg, |r, s| {
        println!(
            "{} {} seed {}: reward {:.3} utilization {:.3} jain {:.3}",
            r.agent, r.point, r.seed, s.mean_reward, s.final_utilization, s.jain
        );
    })
    .and_then(|_| tables::figure_tables(&cfg.output_dir));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
