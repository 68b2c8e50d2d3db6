//! Single seeded runs of one agent kind and the CSV artifacts they produce.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{episode_seed, train, DdpgAgent, EpisodeStats, FrameRecord};
use crate::baselines::{greedy_allocate, unit_policy};
use crate::checkpoint;
use crate::domain::DdpgConfig;
use crate::environment::{EnvConfig, SpectrumEnv, Step};
use crate::error::{Error, Result};
use crate::experiment::config::{AgentKind, EvalWindows};
use crate::metrics::{jain_fairness, mean_episode_reward};

pub const AUCTIONS_SCHEMA: &str = "# schema: auctions v1";
pub const EPISODES_SCHEMA: &str = "# schema: episodes v1";
pub const SUMMARY_SCHEMA: &str = "# schema: summary v1";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

const AUCTION_COLUMNS: [&str; 15] = [
    "episode",
    "frame",
    "triggered",
    "J_f",
    "vsp_id",
    "bid",
    "value",
    "demand",
    "theta",
    "coefficient",
    "weighted_bid",
    "won",
    "rate",
    "payment_weighted",
    "payment_raw",
];
const EPISODE_COLUMNS: [&str; 7] = [
    "episode",
    "mean_reward",
    "utilization",
    "jain",
    "noise_std",
    "critic_loss_mean",
    "actor_loss_mean",
];

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub agent: AgentKind,
    pub seed: u64,
    pub env: EnvConfig,
    pub ddpg: DdpgConfig,
    pub windows: EvalWindows,
}

impl RunSpec {
    pub fn episodes(&self) -> usize {
        self.ddpg.episodes
    }
    pub fn frames(&self) -> usize {
        self.ddpg.frames_per_episode
    }
}

/// Compact per-frame record retained for the final evaluation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSummary {
    pub episode: usize,
    pub frame: usize,
    pub triggered: bool,
    pub block_count: u32,
    pub blocks_used: u32,
    pub winners: Vec<bool>,
    pub reward: f64,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub agent: AgentKind,
    pub seed: u64,
    pub vsp_count: usize,
    pub max_blocks: u32,
    pub episodes: usize,
    pub frames_per_episode: usize,
    pub triggered_auctions: usize,
    pub mean_reward: f64,
    /// Utilization over the final `utilization_auctions` triggered auctions.
    pub final_utilization: f64,
    /// Utilization over every triggered auction of the run.
    pub utilization: f64,
    /// Utilization over every frame, direct assignments included.
    pub utilization_all_frames: f64,
    /// Jain index of cumulative granted rate over the final `fairness_episodes`.
    pub jain: f64,
    /// Win share per bidder over the final `win_auctions` triggered auctions.
    pub win_pct: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub history: Vec<EpisodeStats>,
    /// Per-episode utilization over triggered frames (`None` if none triggered).
    pub episode_utilization: Vec<Option<f64>>,
    pub episode_jain: Vec<Option<f64>>,
    pub summary: Summary,
    pub agent: Option<DdpgAgent>,
}

/// Streams per-frame data into running aggregates and the auctions log.
struct Collector {
    bidders: usize,
    windows: EvalWindows,
    episodes: usize,
    frames: usize,
    auctions: Option<csv::Writer<BufWriter<File>>>,
    tail: VecDeque<FrameSummary>,
    ep_used: u64,
    ep_avail: u64,
    ep_rates: Vec<f64>,
    episode_utilization: Vec<Option<f64>>,
    episode_jain: Vec<Option<f64>>,
    fair_rates: Vec<f64>,
    used_triggered: u64,
    avail_triggered: u64,
    used_all: u64,
    avail_all: u64,
    triggered: usize,
    rewards: Vec<f64>,
    error: Option<Error>,
}

impl Collector {
    fn new(spec: &RunSpec, auctions: Option<csv::Writer<BufWriter<File>>>) -> Self {
        let bidders = spec.env.bidders();
        Self {
            bidders,
            windows: spec.windows,
            episodes: spec.episodes(),
            frames: spec.frames(),
            auctions,
            tail: VecDeque::new(),
            ep_used: 0,
            ep_avail: 0,
            ep_rates: vec![0.0; bidders],
            episode_utilization: Vec::new(),
            episode_jain: Vec::new(),
            fair_rates: vec![0.0; bidders],
            used_triggered: 0,
            avail_triggered: 0,
            used_all: 0,
            avail_all: 0,
            triggered: 0,
            rewards: Vec::with_capacity(spec.episodes() * spec.frames()),
            error: None,
        }
    }

    fn tail_len(&self) -> usize {
        self.windows.utilization_auctions.max(self.windows.win_auctions)
    }

    fn observe(&mut self, episode: usize, frame: usize, step: &Step) {
        let out = &step.outcome;
        let j = step.frame.block_count();
        let used = out.total_blocks_used();
        self.rewards.push(step.reward);
        self.used_all += used as u64;
        self.avail_all += j as u64;
        if out.triggered() {
            self.triggered += 1;
            self.used_triggered += used as u64;
            self.avail_triggered += j as u64;
            self.ep_used += used as u64;
            self.ep_avail += j as u64;
            self.tail.push_back(FrameSummary {
                episode,
                frame,
                triggered: true,
                block_count: j,
                blocks_used: used,
                winners: out.winners().to_vec(),
                reward: step.reward,
            });
            if self.tail.len() > self.tail_len() {
                self.tail.pop_front();
            }
        }
        let in_fair_window = episode + self.windows.fairness_episodes >= self.episodes;
        for (i, req) in step.frame.requests().iter().enumerate() {
            if out.won(i) {
                self.ep_rates[i] += req.rate();
                if in_fair_window {
                    self.fair_rates[i] += req.rate();
                }
            }
        }
        let log_all = self.windows.auction_log_episodes == 0;
        if log_all || episode + self.windows.auction_log_episodes >= self.episodes {
            if let Err(e) = self.log_auction(episode, frame, step) {
                self.error.get_or_insert(e);
            }
        }
        if frame + 1 == self.frames {
            self.episode_utilization
                .push((self.ep_avail > 0).then(|| self.ep_used as f64 / self.ep_avail as f64));
            self.episode_jain.push(jain_fairness(&self.ep_rates).ok());
            self.ep_used = 0;
            self.ep_avail = 0;
            self.ep_rates.iter_mut().for_each(|r| *r = 0.0);
        }
    }

    fn log_auction(&mut self, episode: usize, frame: usize, step: &Step) -> Result<()> {
        let Some(w) = self.auctions.as_mut() else {
            return Ok(());
        };
        let out = &step.outcome;
        for (i, req) in step.frame.requests().iter().enumerate() {
            w.write_record([
                episode.to_string(),
                frame.to_string(),
                (out.triggered() as u8).to_string(),
                step.frame.block_count().to_string(),
                req.vsp_id().to_string(),
                req.bid().to_string(),
                req.value().to_string(),
                req.demand().to_string(),
                req.theta().to_string(),
                out.coefficients()[i].to_string(),
                out.weighted_bids()[i].to_string(),
                (out.won(i) as u8).to_string(),
                req.rate().to_string(),
                out.payments()[i].to_string(),
                out.raw_payment(i).map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        Ok(())
    }

    fn finish(mut self, spec: &RunSpec, history: Vec<EpisodeStats>, agent: Option<DdpgAgent>) -> Result<RunResult> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        if let Some(mut w) = self.auctions.take() {
            w.flush()?;
        }
        let ratio = |u: u64, a: u64| if a > 0 { u as f64 / a as f64 } else { f64::NAN };
        let util_tail: Vec<&FrameSummary> = self.tail.iter().rev().take(self.windows.utilization_auctions).collect();
        let (u, a) = util_tail.iter().fold((0u64, 0u64), |(u, a), f| {
            (u + f.blocks_used as u64, a + f.block_count as u64)
        });
        let win_tail: Vec<&FrameSummary> = self.tail.iter().rev().take(self.windows.win_auctions).collect();
        let win_pct = (0..self.bidders)
            .map(|i| {
                if win_tail.is_empty() {
                    f64::NAN
                } else {
                    win_tail.iter().filter(|f| f.winners[i]).count() as f64 / win_tail.len() as f64
                }
            })
            .collect();
        let summary = Summary {
            agent: spec.agent,
            seed: spec.seed,
            vsp_count: self.bidders,
            max_blocks: spec.env.max_blocks(),
            episodes: spec.episodes(),
            frames_per_episode: spec.frames(),
            triggered_auctions: self.triggered,
            mean_reward: mean_episode_reward(&self.rewards)?,
            final_utilization: ratio(u, a),
            utilization: ratio(self.used_triggered, self.avail_triggered),
            utilization_all_frames: ratio(self.used_all, self.avail_all),
            jain: jain_fairness(&self.fair_rates).unwrap_or(f64::NAN),
            win_pct,
        };
        Ok(RunResult {
            history,
            episode_utilization: self.episode_utilization,
            episode_jain: self.episode_jain,
            summary,
            agent,
        })
    }
}

/// Runs a fixed non-learning policy over the same episode seeds a learner sees.
fn run_fixed<F>(
    spec: &RunSpec,
    env: &mut SpectrumEnv,
    collector: &mut Collector,
    mut clear: F,
) -> Result<Vec<EpisodeStats>>
where
    F: FnMut(&mut SpectrumEnv, &[f64]) -> Result<Step>,
{
    let mut history = Vec::with_capacity(spec.episodes());
    for episode in 0..spec.episodes() {
        let mut state = env.reset(episode_seed(spec.seed, episode));
        let mut total = 0.0;
        for frame in 0..spec.frames() {
            let step = clear(env, &state)?;
            total += step.reward;
            collector.observe(episode, frame, &step);
            state = step.next_state;
        }
        history.push(EpisodeStats {
            episode,
            mean_reward: total / spec.frames() as f64,
            noise_std: 0.0,
            critic_loss_mean: 0.0,
            actor_loss_mean: 0.0,
            updates: 0,
        });
    }
    Ok(history)
}

/// Executes one run. With `dir`, streams auctions.csv there and writes the
/// remaining artifacts on success.
pub fn execute(spec: &RunSpec, dir: Option<&Path>) -> Result<RunResult> {
    let mut env_cfg = spec.env.clone();
    env_cfg.seed = spec.seed;
    env_cfg.frames_per_episode = spec.frames();
    let mut env = SpectrumEnv::new(env_cfg)?;
    spec.ddpg.validate()?;

    let auctions = match dir {
        Some(d) => {
            fs::create_dir_all(d)?;
            fs::write(d.join(INCOMPLETE_MARKER), "run started, not finished\n")?;
            let mut file = BufWriter::new(File::create(d.join("auctions.csv"))?);
            writeln!(file, "{AUCTIONS_SCHEMA}")?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(AUCTION_COLUMNS)?;
            Some(w)
        }
        None => None,
    };
    let mut collector = Collector::new(spec, auctions);

    let (history, agent) = match spec.agent {
        AgentKind::Ddpg => {
            let bidders = spec.env.bidders();
            let mut agent = DdpgAgent::new(3 * bidders, bidders, spec.ddpg.clone(), spec.seed)?;
            let mut buffer = crate::replay::ReplayBuffer::new(spec.ddpg.buffer_capacity)?;
            let history = train(
                &mut agent,
                &mut env,
                &mut buffer,
                spec.episodes(),
                spec.frames(),
                spec.seed,
                |rec: &FrameRecord<'_>| collector.observe(rec.episode, rec.frame, rec.step),
            )?;
            if !agent.is_finite() {
                return Err(Error::invalid("agent", "non-finite weights after training"));
            }
            (history, Some(agent))
        }
        AgentKind::Unit => {
            let bidders = spec.env.bidders();
            let h = run_fixed(spec, &mut env, &mut collector, |env, s| {
                env.step(&unit_policy(s, bidders))
            })?;
            (h, None)
        }
        AgentKind::Greedy => {
            let h = run_fixed(spec, &mut env, &mut collector, |env, _| env.step_with(greedy_allocate))?;
            (h, None)
        }
    };
    let result = collector.finish(spec, history, agent)?;
    if let Some(d) = dir {
        write_artifacts(spec, &result, d)?;
        fs::remove_file(d.join(INCOMPLETE_MARKER))?;
    }
    Ok(result)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_artifacts(spec: &RunSpec, result: &RunResult, dir: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(dir.join("episodes.csv"))?);
    writeln!(file, "{EPISODES_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(EPISODE_COLUMNS)?;
    for (k, e) in result.history.iter().enumerate() {
        w.write_record([
            e.episode.to_string(),
            e.mean_reward.to_string(),
            opt(result.episode_utilization[k]),
            opt(result.episode_jain[k]),
            e.noise_std.to_string(),
            e.critic_loss_mean.to_string(),
            e.actor_loss_mean.to_string(),
        ])?;
    }
    w.flush()?;

    write_summary(&result.summary, &dir.join("summary.csv"))?;

    let metadata = serde_json::json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "schema_versions": { "auctions": 1, "episodes": 1, "summary": 1 },
        "agent": spec.agent,
        "seed": spec.seed,
        "normalization": {
            "bid": spec.env.value_range.1,
            "value": spec.env.value_range.1,
            "demand": spec.env.demand_max,
        },
        "spec": spec,
    });
    fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).map_err(|e| Error::Io(e.to_string()))?,
    )?;
    if let Some(agent) = &result.agent {
        checkpoint::save(agent, &dir.join("checkpoint.bin"))?;
    }
    Ok(())
}

/// Long-format `metric,vsp_id,value` table.
pub fn write_summary(s: &Summary, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "{SUMMARY_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["metric", "vsp_id", "value"])?;
    let rows: [(&str, String); 12] = [
        ("agent", s.agent.to_string()),
        ("seed", s.seed.to_string()),
        ("vsp_count", s.vsp_count.to_string()),
        ("max_blocks", s.max_blocks.to_string()),
        ("episodes", s.episodes.to_string()),
        ("frames_per_episode", s.frames_per_episode.to_string()),
        ("triggered_auctions", s.triggered_auctions.to_string()),
        ("mean_reward", s.mean_reward.to_string()),
        ("final_utilization", s.final_utilization.to_string()),
        ("utilization", s.utilization.to_string()),
        ("utilization_all_frames", s.utilization_all_frames.to_string()),
        ("jain", s.jain.to_string()),
    ];
    for (k, v) in rows {
        w.write_record([k, "", v.as_str()])?;
    }
    for (i, p) in s.win_pct.iter().enumerate() {
        w.write_record(["win_pct".to_string(), (i + 1).to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Directory of one run below the output root.
pub fn run_dir(root: &Path, agent: AgentKind, point: &str, seed: u64) -> PathBuf {
    root.join(agent.as_str()).join(point).join(format!("seed-{seed}"))
}
