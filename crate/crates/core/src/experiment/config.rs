//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! env.total_bandwidth_hz = 300e6
//! ddpg.actor_hidden = 1024, 512
//! run.seeds = 1, 2, 3
//! ```
//!
//! Unknown keys are rejected. Lists are comma-separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::CoefficientParams;
use crate::domain::{cycled_profiles, DdpgConfig, Optimizer};
use crate::environment::EnvConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Ddpg,
    Greedy,
    Unit,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Ddpg, AgentKind::Greedy, AgentKind::Unit];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Ddpg => "ddpg",
            AgentKind::Greedy => "greedy",
            AgentKind::Unit => "unit",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ddpg" => Ok(AgentKind::Ddpg),
            "greedy" => Ok(AgentKind::Greedy),
            "unit" => Ok(AgentKind::Unit),
            other => Err(Error::Config(format!("unknown agent kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    None,
    Blocks,
    Vsps,
}

impl FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(SweepKind::None),
            "blocks" => Ok(SweepKind::Blocks),
            "vsps" => Ok(SweepKind::Vsps),
            other => Err(Error::Config(format!("unknown sweep '{other}'"))),
        }
    }
}

/// Sizes of the evaluation windows used by the summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalWindows {
    /// Final triggered auctions over which utilization is reported.
    pub utilization_auctions: usize,
    /// Final triggered auctions over which win percentages are reported.
    pub win_auctions: usize,
    /// Final episodes whose frames feed the fairness index.
    pub fairness_episodes: usize,
    /// Number of final episodes written to auctions.csv; 0 writes all.
    pub auction_log_episodes: usize,
}

impl Default for EvalWindows {
    fn default() -> Self {
        Self {
            utilization_auctions: 100,
            win_auctions: 200,
            fairness_episodes: 100,
            auction_log_episodes: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub ddpg: DdpgConfig,
    pub agents: Vec<AgentKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub sweep: SweepKind,
    pub block_count_sweep: Vec<u32>,
    pub vsp_count_sweep: Vec<usize>,
    pub windows: EvalWindows,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            ddpg: DdpgConfig::default(),
            agents: AgentKind::ALL.to_vec(),
            seeds: vec![1],
            output_dir: PathBuf::from("runs"),
            sweep: SweepKind::None,
            block_count_sweep: vec![60, 120, 180, 240],
            vsp_count_sweep: vec![5, 20],
            windows: EvalWindows::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{}'", v.trim())))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let e = &mut self.env;
        let d = &mut self.ddpg;
        match key {
            "env.total_bandwidth_hz" => e.total_bandwidth = parse(key, v)?,
            "env.block_bandwidth_hz" => e.block_bandwidth = parse(key, v)?,
            "env.bw_fraction_lo" => e.bw_fraction_range.0 = parse(key, v)?,
            "env.bw_fraction_hi" => e.bw_fraction_range.1 = parse(key, v)?,
            "env.demand_max" => e.demand_max = parse(key, v)?,
            "env.value_lo" => e.value_range.0 = parse(key, v)?,
            "env.value_hi" => e.value_range.1 = parse(key, v)?,
            "env.per_block_rate" => e.per_block_rate = parse(key, v)?,
            "env.vsp_count" => {
                let p = e.profiles.first().map_or(1.0, |x| x.participation_prob());
                e.profiles = cycled_profiles(parse(key, v)?)
                    .into_iter()
                    .map(|x| x.with_participation(p))
                    .collect::<Result<_>>()?;
            }
            "env.participation_prob" => {
                let p: f64 = parse(key, v)?;
                e.profiles = e
                    .profiles
                    .drain(..)
                    .map(|x| x.with_participation(p))
                    .collect::<Result<_>>()?;
            }
            "env.qos_weight" => e.coefficients = CoefficientParams::new(parse(key, v)?, e.coefficients.truth_weight())?,
            "env.truth_weight" => e.coefficients = CoefficientParams::new(e.coefficients.qos_weight(), parse(key, v)?)?,
            "ddpg.buffer_capacity" => d.buffer_capacity = parse(key, v)?,
            "ddpg.batch_size" => d.batch_size = parse(key, v)?,
            "ddpg.actor_lr" => d.actor_lr = parse(key, v)?,
            "ddpg.critic_lr" => d.critic_lr = parse(key, v)?,
            "ddpg.polyak" => d.polyak = parse(key, v)?,
            "ddpg.discount" => d.discount = parse(key, v)?,
            "ddpg.actor_hidden" => d.actor_hidden = parse_list(key, v)?,
            "ddpg.critic_hidden" => d.critic_hidden = parse_list(key, v)?,
            "ddpg.exploration_noise_std" => d.exploration_noise_std = parse(key, v)?,
            "ddpg.noise_decay" => d.noise_decay = parse(key, v)?,
            "ddpg.noise_min" => d.noise_min = parse(key, v)?,
            "ddpg.episodes" => d.episodes = parse(key, v)?,
            "ddpg.frames_per_episode" => {
                d.frames_per_episode = parse(key, v)?;
                e.frames_per_episode = d.frames_per_episode;
            }
            "ddpg.max_coefficient" => d.max_coefficient = parse(key, v)?,
            "ddpg.reward_scale" => d.reward_scale = parse(key, v)?,
            "ddpg.optimizer" => {
                d.optimizer = match v {
                    "sgd" => Optimizer::Sgd,
                    "adam" => Optimizer::Adam,
                    other => return Err(Error::Config(format!("{key}: unknown optimizer '{other}'"))),
                }
            }
            "run.agents" => self.agents = parse_list(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v)?,
            "run.out" => self.output_dir = PathBuf::from(v),
            "run.sweep" => self.sweep = parse(key, v)?,
            "run.block_sweep" => self.block_count_sweep = parse_list(key, v)?,
            "run.vsp_sweep" => self.vsp_count_sweep = parse_list(key, v)?,
            "run.utilization_auctions" => self.windows.utilization_auctions = parse(key, v)?,
            "run.win_auctions" => self.windows.win_auctions = parse(key, v)?,
            "run.fairness_episodes" => self.windows.fairness_episodes = parse(key, v)?,
            "run.auction_log_episodes" => self.windows.auction_log_episodes = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Sets the block budget by resizing the shareable band to `blocks * w`.
    pub fn set_blocks(&mut self, blocks: u32) {
        self.env.total_bandwidth = blocks as f64 * self.env.block_bandwidth;
    }

    pub fn set_episodes(&mut self, episodes: usize) {
        self.ddpg.episodes = episodes;
    }

    pub fn set_frames(&mut self, frames: usize) {
        self.ddpg.frames_per_episode = frames;
        self.env.frames_per_episode = frames;
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ddpg.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed required".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("at least one agent kind required".into()));
        }
        if self.block_count_sweep.is_empty() || self.block_count_sweep.contains(&0) {
            return Err(Error::Config("block sweep must be non-empty and positive".into()));
        }
        if self.vsp_count_sweep.is_empty() || self.vsp_count_sweep.contains(&0) {
            return Err(Error::Config("vsp sweep must be non-empty and positive".into()));
        }
        Ok(())
    }

    /// Every resolved setting as `key = value` lines, in key order.
    pub fn to_kv(&self) -> String {
        let mut m = BTreeMap::new();
        let e = &self.env;
        let d = &self.ddpg;
        let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        m.insert("env.total_bandwidth_hz", e.total_bandwidth.to_string());
        m.insert("env.block_bandwidth_hz", e.block_bandwidth.to_string());
        m.insert("env.bw_fraction_lo", e.bw_fraction_range.0.to_string());
        m.insert("env.bw_fraction_hi", e.bw_fraction_range.1.to_string());
        m.insert("env.demand_max", e.demand_max.to_string());
        m.insert("env.value_lo", e.value_range.0.to_string());
        m.insert("env.value_hi", e.value_range.1.to_string());
        m.insert("env.per_block_rate", e.per_block_rate.to_string());
        m.insert("env.vsp_count", e.profiles.len().to_string());
        m.insert("env.qos_weight", e.coefficients.qos_weight().to_string());
        m.insert("env.truth_weight", e.coefficients.truth_weight().to_string());
        m.insert("ddpg.buffer_capacity", d.buffer_capacity.to_string());
        m.insert("ddpg.batch_size", d.batch_size.to_string());
        m.insert("ddpg.actor_lr", d.actor_lr.to_string());
        m.insert("ddpg.critic_lr", d.critic_lr.to_string());
        m.insert("ddpg.polyak", d.polyak.to_string());
        m.insert("ddpg.discount", d.discount.to_string());
        m.insert("ddpg.actor_hidden", join(&d.actor_hidden));
        m.insert("ddpg.critic_hidden", join(&d.critic_hidden));
        m.insert("ddpg.exploration_noise_std", d.exploration_noise_std.to_string());
        m.insert("ddpg.noise_decay", d.noise_decay.to_string());
        m.insert("ddpg.noise_min", d.noise_min.to_string());
        m.insert("ddpg.episodes", d.episodes.to_string());
        m.insert("ddpg.frames_per_episode", d.frames_per_episode.to_string());
        m.insert("ddpg.max_coefficient", d.max_coefficient.to_string());
        m.insert("ddpg.reward_scale", d.reward_scale.to_string());
        m.insert(
            "ddpg.optimizer",
            match d.optimizer {
                Optimizer::Sgd => "sgd".into(),
                Optimizer::Adam => "adam".into(),
            },
        );
        m.insert(
            "run.agents",
            self.agents.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(", "),
        );
        m.insert(
            "run.seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", "),
        );
        m.insert("run.out", self.output_dir.display().to_string());
        m.insert(
            "run.sweep",
            match self.sweep {
                SweepKind::None => "none".into(),
                SweepKind::Blocks => "blocks".into(),
                SweepKind::Vsps => "vsps".into(),
            },
        );
        m.insert(
            "run.block_sweep",
            self.block_count_sweep
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        m.insert("run.vsp_sweep", join(&self.vsp_count_sweep));
        m.insert(
            "run.utilization_auctions",
            self.windows.utilization_auctions.to_string(),
        );
        m.insert("run.win_auctions", self.windows.win_auctions.to_string());
        m.insert("run.fairness_episodes", self.windows.fairness_episodes.to_string());
        m.insert(
            "run.auction_log_episodes",
            self.windows.auction_log_episodes.to_string(),
        );
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let cfg = RunConfig::from_kv_str(
            "# demo\n env.total_bandwidth_hz = 600e6\n ddpg.actor_hidden = 32, 16 # small\n\
             run.seeds = 3,4\nrun.agents = greedy, unit\nrun.sweep = blocks\nenv.vsp_count = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.env.total_bandwidth, 600e6);
        assert_eq!(cfg.ddpg.actor_hidden, vec![32, 16]);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.agents, vec![AgentKind::Greedy, AgentKind::Unit]);
        assert_eq!(cfg.sweep, SweepKind::Blocks);
        assert_eq!(cfg.env.profiles.len(), 20);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::from_kv_str("env.nope = 1").is_err());
        assert!(RunConfig::from_kv_str("env.demand_max").is_err());
        assert!(RunConfig::from_kv_str("env.demand_max = lots").is_err());
        assert!(RunConfig::from_kv_str("run.agents = dqn").is_err());
        let mut cfg = RunConfig::default();
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set_blocks(120);
        cfg.set_frames(40);
        cfg.seeds = vec![7, 8];
        let again = RunConfig::from_kv_str(&cfg.to_kv()).unwrap();
        assert_eq!(again.to_kv(), cfg.to_kv());
        assert_eq!(again.env.total_bandwidth, 600e6);
        assert_eq!(again.env.frames_per_episode, 40);
    }
}
