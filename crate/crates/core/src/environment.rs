//! Frame-by-frame spectrum market seen by the operator's agent.
//!
//! Each frame draws fresh requests and a fresh available bandwidth. The agent
//! supplies one coefficient scale per bidder; the frame is cleared by direct
//! assignment or by the weighted auction and the reward is the frame utility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::auction::{clear_frame, CoefficientParams};
use crate::domain::{default_profiles, AuctionOutcome, FrameState, Request, VspProfile};
use crate::error::{Error, Result};
use crate::metrics::frame_utility;

/// Environment parameters. Bandwidths are in Hz, rates in bits/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub profiles: Vec<VspProfile>,
    pub total_bandwidth: f64,
    pub block_bandwidth: f64,
    pub bw_fraction_range: (f64, f64),
    pub demand_max: u32,
    pub value_range: (f64, f64),
    pub per_block_rate: f64,
    pub frames_per_episode: usize,
    pub seed: u64,
    pub coefficients: CoefficientParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            profiles: default_profiles(),
            total_bandwidth: 300e6,
            block_bandwidth: 5e6,
            bw_fraction_range: (0.5, 1.0),
            demand_max: 30,
            value_range: (10.0, 100.0),
            per_block_rate: 33.22,
            frames_per_episode: 250,
            seed: 0,
            coefficients: CoefficientParams::default(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.profiles.is_empty() {
            return Err(Error::invalid("env.profiles", "at least one bidder required"));
        }
        if !(self.block_bandwidth > 0.0 && self.total_bandwidth >= self.block_bandwidth) {
            return Err(Error::invalid("env.total_bandwidth", "need B >= w > 0"));
        }
        let (lo, hi) = self.bw_fraction_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(
                "env.bw_fraction_range",
                format!("[{lo}, {hi}] not inside (0, 1]"),
            ));
        }
        let (vlo, vhi) = self.value_range;
        if !(vlo > 0.0 && vlo <= vhi && vhi.is_finite()) {
            return Err(Error::invalid("env.value_range", format!("[{vlo}, {vhi}] invalid")));
        }
        if self.demand_max == 0 {
            return Err(Error::invalid("env.demand_max", "must be >= 1"));
        }
        if !(self.per_block_rate > 0.0) {
            return Err(Error::invalid("env.per_block_rate", "must be > 0"));
        }
        if self.frames_per_episode == 0 {
            return Err(Error::invalid("env.frames_per_episode", "must be >= 1"));
        }
        Ok(())
    }

    pub fn bidders(&self) -> usize {
        self.profiles.len()
    }

    /// Length of the encoded state, three features per bidder.
    pub fn state_dim(&self) -> usize {
        3 * self.bidders()
    }

    /// Largest block count a frame can offer.
    pub fn max_blocks(&self) -> u32 {
        crate::domain::block_count(self.total_bandwidth, self.block_bandwidth)
    }
}

/// Draws one request per bidder.
///
/// Each bidder participates with its configured probability; a participant draws
/// a value uniformly from `value_range`, a truthfulness from a normal clipped to
/// `[0, 1]`, and a demand uniformly from `1..=demand_max`. Its rate is the demand
/// times `per_block_rate`, capped at the bidder's maximum rate.
pub fn generate_requests<R: Rng + ?Sized>(rng: &mut R, profiles: &[VspProfile], config: &EnvConfig) -> Vec<Request> {
    let (vlo, vhi) = config.value_range;
    profiles
        .iter()
        .map(|p| {
            if !rng.random_bool(p.participation_prob()) {
                return Request::absent(p.id());
            }
            let value = if vlo < vhi { rng.random_range(vlo..=vhi) } else { vlo };
            let normal =
                Normal::new(p.truthfulness_mean(), p.truthfulness_spread()).expect("profile spread is validated");
            let theta = normal.sample(rng).clamp(0.0, 1.0);
            let demand = rng.random_range(1..=config.demand_max);
            let rate = (demand as f64 * config.per_block_rate).min(p.max_rate());
            Request::new(p.id(), (theta * value).min(value), value, demand, rate)
                .expect("generated request satisfies invariants")
        })
        .collect()
}

/// `B * U(lo, hi)` for the configured fraction range.
pub fn sample_bandwidth<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> f64 {
    let (lo, hi) = config.bw_fraction_range;
    let frac = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    (config.total_bandwidth * frac).min(config.total_bandwidth)
}

/// Encodes requests as `[b_1, v_1, n_1, ..., b_I, v_I, n_I]` scaled into `[0, 1]`.
pub fn encode_state(requests: &[Request], config: &EnvConfig) -> Vec<f64> {
    let vmax = config.value_range.1;
    let nmax = config.demand_max as f64;
    requests
        .iter()
        .flat_map(|r| [r.bid() / vmax, r.value() / vmax, r.demand() as f64 / nmax])
        .collect()
}

/// What one call to [`SpectrumEnv::step`] produced.
#[derive(Debug, Clone)]
pub struct Step {
    /// The frame that was just cleared.
    pub frame: FrameState,
    pub outcome: AuctionOutcome,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectrumEnv {
    config: EnvConfig,
    rng: ChaCha8Rng,
    frame: FrameState,
    clamped_actions: u64,
}

impl SpectrumEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let frame = Self::draw_frame(&mut rng, &config, 0);
        Ok(Self {
            config,
            rng,
            frame,
            clamped_actions: 0,
        })
    }

    fn draw_frame(rng: &mut ChaCha8Rng, config: &EnvConfig, index: usize) -> FrameState {
        let requests = generate_requests(rng, &config.profiles, config);
        let bw = sample_bandwidth(rng, config);
        FrameState::new(index, bw, config.block_bandwidth, config.total_bandwidth, requests)
            .expect("sampled bandwidth lies within the band")
    }

    /// Reseeds the generator, rewinds to frame 0 and returns the first state.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.frame = Self::draw_frame(&mut self.rng, &self.config, 0);
        self.state()
    }

    pub fn state(&self) -> Vec<f64> {
        encode_state(self.frame.requests(), &self.config)
    }

    pub fn frame(&self) -> &FrameState {
        &self.frame
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Number of negative or non-finite action entries replaced by zero so far.
    pub fn clamped_actions(&self) -> u64 {
        self.clamped_actions
    }

    /// Clears the current frame under `action` and advances to the next one.
    pub fn step(&mut self, action: &[f64]) -> Result<Step> {
        let n = self.config.bidders();
        if action.len() != n {
            return Err(Error::Dimension {
                context: "env.step action",
                expected: n,
                actual: action.len(),
            });
        }
        let scales: Vec<f64> = action
            .iter()
            .map(|&a| {
                if a >= 0.0 && a.is_finite() {
                    a
                } else {
                    self.clamped_actions += 1;
                    0.0
                }
            })
            .collect();
        let params = self.config.coefficients;
        self.step_with(|profiles, frame| clear_frame(profiles, frame, &params, &scales))
    }

    /// Clears the current frame with a caller-supplied allocator instead of the
    /// weighted auction, then advances.
    pub fn step_with<F>(&mut self, allocate: F) -> Result<Step>
    where
        F: FnOnce(&[VspProfile], &FrameState) -> Result<AuctionOutcome>,
    {
        let outcome = allocate(&self.config.profiles, &self.frame)?;
        let reward = frame_utility(&outcome, self.frame.requests(), &self.config.profiles);
        let next = Self::draw_frame(&mut self.rng, &self.config, self.frame.index() + 1);
        let frame = std::mem::replace(&mut self.frame, next);
        Ok(Step {
            frame,
            outcome,
            reward,
            next_state: self.state(),
        })
    }
}
