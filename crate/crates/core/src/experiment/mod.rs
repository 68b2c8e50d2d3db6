//! Experiment orchestration: run planning, execution and figure tables.

pub mod config;
pub mod run;
pub mod tables;

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::cycled_profiles;
use crate::error::{Error, Result};
use config::{AgentKind, RunConfig, SweepKind};
use run::{execute, run_dir, RunSpec, Summary};

pub use config::EvalWindows;
pub use run::RunResult;

/// One expected run of the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRun {
    pub agent: AgentKind,
    /// Sweep point label, e.g. `base`, `blocks-120`, `vsps-20`.
    pub point: String,
    pub seed: u64,
    pub dir: PathBuf,
    #[serde(skip)]
    pub spec: Option<RunSpec>,
}

/// Sweep points as (label, config) pairs.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
    Ok(match cfg.sweep {
        SweepKind::None => vec![("base".to_string(), cfg.clone())],
        SweepKind::Blocks => cfg
            .block_count_sweep
            .iter()
            .map(|&n| {
                let mut c = cfg.clone();
                c.set_blocks(n);
                (format!("blocks-{n}"), c)
            })
            .collect(),
        SweepKind::Vsps => cfg
            .vsp_count_sweep
            .iter()
            .map(|&n| {
                let mut c = cfg.clone();
                let participation = cfg.env.profiles.first().map(|p| p.participation_prob());
                let mut profiles = cycled_profiles(n);
                if let Some(p) = participation {
                    profiles = profiles
                        .into_iter()
                        .map(|v| v.with_participation(p))
                        .collect::<Result<_>>()?;
                }
                c.env.profiles = profiles;
                Ok((format!("vsps-{n}"), c))
            })
            .collect::<Result<_>>()?,
    })
}

/// Every (agent, sweep point, seed) run implied by the config.
pub fn plan(cfg: &RunConfig) -> Result<Vec<PlannedRun>> {
    cfg.validate()?;
    let mut runs = Vec::new();
    for (label, point_cfg) in sweep_points(cfg)? {
        for &agent in &cfg.agents {
            for &seed in &cfg.seeds {
                runs.push(PlannedRun {
                    agent,
                    point: label.clone(),
                    seed,
                    dir: run_dir(&cfg.output_dir, agent, &label, seed),
                    spec: Some(RunSpec {
                        agent,
                        seed,
                        env: point_cfg.env.clone(),
                        ddpg: point_cfg.ddpg.clone(),
                        windows: point_cfg.windows,
                    }),
                });
            }
        }
    }
    Ok(runs)
}

/// Writes the plan and resolved config, then executes every run in order.
/// `progress` is called after each run completes.
pub fn run_all<F>(cfg: &RunConfig, mut progress: F) -> Result<Vec<Summary>>
where
    F: FnMut(&PlannedRun, &Summary),
{
    let runs = plan(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    fs::write(cfg.output_dir.join("config.resolved.txt"), cfg.to_kv())?;
    fs::write(
        cfg.output_dir.join("plan.json"),
        serde_json::to_string_pretty(&runs).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    let mut out = Vec::with_capacity(runs.len());
    for r in &runs {
        let spec = r.spec.as_ref().expect("planned runs carry their spec");
        let result = execute(spec, Some(&r.dir))?;
        progress(r, &result.summary);
        out.push(result.summary);
    }
    Ok(out)
}
