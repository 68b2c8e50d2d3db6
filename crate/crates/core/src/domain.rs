//! Value types shared by the auction, environment, agent and experiment layers.
//!
//! Every constructor validates its invariants and returns an [`Error`] instead of
//! clamping. Once built, values are immutable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static identity of one bidder (a vertical sector player).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VspProfile {
    id: usize,
    qci_priority: u32,
    min_rate: f64,
    max_rate: f64,
    truthfulness_mean: f64,
    truthfulness_spread: f64,
    participation_prob: f64,
}

impl VspProfile {
    pub const DEFAULT_TRUTHFULNESS: f64 = 0.95;
    pub const DEFAULT_SPREAD: f64 = 0.05;
    pub const DEFAULT_PARTICIPATION: f64 = 0.9;

    /// Builds a profile with default truthfulness and participation.
    pub fn new(id: usize, qci_priority: u32, min_rate: f64, max_rate: f64) -> Result<Self> {
        if qci_priority < 1 {
            return Err(Error::invalid("qci_priority", "must be >= 1"));
        }
        if !(min_rate > 0.0) || !min_rate.is_finite() {
            return Err(Error::invalid("min_rate", format!("{min_rate} must be > 0")));
        }
        if !(max_rate >= min_rate) || !max_rate.is_finite() {
            return Err(Error::invalid(
                "max_rate",
                format!("{max_rate} must be >= min_rate {min_rate}"),
            ));
        }
        Ok(Self {
            id,
            qci_priority,
            min_rate,
            max_rate,
            truthfulness_mean: Self::DEFAULT_TRUTHFULNESS,
            truthfulness_spread: Self::DEFAULT_SPREAD,
            participation_prob: Self::DEFAULT_PARTICIPATION,
        })
    }

    pub fn with_truthfulness(mut self, mean: f64, spread: f64) -> Result<Self> {
        if !(mean > 0.0 && mean <= 1.0) {
            return Err(Error::invalid("truthfulness_mean", format!("{mean} not in (0,1]")));
        }
        if !(spread >= 0.0) || !spread.is_finite() {
            return Err(Error::invalid("truthfulness_spread", format!("{spread} < 0")));
        }
        self.truthfulness_mean = mean;
        self.truthfulness_spread = spread;
        Ok(self)
    }

    pub fn with_participation(mut self, prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::invalid("participation_prob", format!("{prob} not in [0,1]")));
        }
        self.participation_prob = prob;
        Ok(self)
    }

    /// Same profile under a different bidder index.
    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }
    pub fn qci_priority(&self) -> u32 {
        self.qci_priority
    }
    /// Normalized priority weight, `1 / q` (QCI 1 is the most urgent).
    pub fn priority_weight(&self) -> f64 {
        1.0 / self.qci_priority as f64
    }
    pub fn min_rate(&self) -> f64 {
        self.min_rate
    }
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }
    pub fn truthfulness_mean(&self) -> f64 {
        self.truthfulness_mean
    }
    pub fn truthfulness_spread(&self) -> f64 {
        self.truthfulness_spread
    }
    pub fn participation_prob(&self) -> f64 {
        self.participation_prob
    }
}

/// Guaranteed bit rate shared by the QCI 1, 3 and 4 classes (bits/s).
pub const GBR_LOW: f64 = 66.44;
/// Guaranteed bit rate of the QCI 2 class (bits/s).
pub const GBR_HIGH: f64 = 199.32;
/// Per-bidder rate cap (bits/s).
pub const MAX_RATE: f64 = 500.0;

/// The five reference bidders. Bidder 5 shares bidder 1's QCI class but bids less
/// truthfully.
pub fn default_profiles() -> Vec<VspProfile> {
    let table = [
        (1, 1, GBR_LOW, VspProfile::DEFAULT_TRUTHFULNESS),
        (2, 3, GBR_LOW, VspProfile::DEFAULT_TRUTHFULNESS),
        (3, 2, GBR_HIGH, VspProfile::DEFAULT_TRUTHFULNESS),
        (4, 4, GBR_LOW, VspProfile::DEFAULT_TRUTHFULNESS),
        (5, 1, GBR_LOW, 0.6),
    ];
    table
        .iter()
        .map(|&(id, q, rmin, theta)| {
            VspProfile::new(id, q, rmin, MAX_RATE)
                .and_then(|p| p.with_truthfulness(theta, VspProfile::DEFAULT_SPREAD))
                .expect("reference profiles are valid")
        })
        .collect()
}

/// `count` bidders cycling through the reference profiles, ids `1..=count`.
pub fn cycled_profiles(count: usize) -> Vec<VspProfile> {
    let base = default_profiles();
    (0..count)
        .map(|k| base[k % base.len()].clone().with_id(k + 1))
        .collect()
}

/// Ratio of bid to value. Non-participants (`value == 0`, `bid == 0`) map to 0.
pub fn truthfulness(bid: f64, value: f64) -> Result<f64> {
    if !(bid >= 0.0) || !(value >= 0.0) {
        return Err(Error::invalid(
            "truthfulness",
            format!("bid {bid} and value {value} must be non-negative"),
        ));
    }
    if value == 0.0 {
        if bid > 0.0 {
            return Err(Error::invalid("truthfulness", "positive bid with zero value"));
        }
        return Ok(0.0);
    }
    Ok(bid / value)
}

/// One bidder's request for one frame: `(bid, value, demand, rate)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    vsp_id: usize,
    bid: f64,
    value: f64,
    demand: u32,
    rate: f64,
    participating: bool,
}

impl Request {
    /// The all-zero request of a bidder sitting this frame out.
    pub fn absent(vsp_id: usize) -> Self {
        Self {
            vsp_id,
            bid: 0.0,
            value: 0.0,
            demand: 0,
            rate: 0.0,
            participating: false,
        }
    }

    pub fn new(vsp_id: usize, bid: f64, value: f64, demand: u32, rate: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::invalid("request.value", format!("{value} must be > 0")));
        }
        if !(bid >= 0.0 && bid <= value) {
            return Err(Error::invalid(
                "request.bid",
                format!("{bid} must lie in [0, value = {value}]"),
            ));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid("request.rate", format!("{rate} must be >= 0")));
        }
        Ok(Self {
            vsp_id,
            bid,
            value,
            demand,
            rate,
            participating: true,
        })
    }

    pub fn vsp_id(&self) -> usize {
        self.vsp_id
    }
    pub fn bid(&self) -> f64 {
        self.bid
    }
    pub fn value(&self) -> f64 {
        self.value
    }
    pub fn demand(&self) -> u32 {
        self.demand
    }
    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn participating(&self) -> bool {
        self.participating
    }
    /// `bid / value`, or 0 for non-participants.
    pub fn theta(&self) -> f64 {
        if self.participating {
            self.bid / self.value
        } else {
            0.0
        }
    }
}

/// Spectrum on offer in one frame together with the requests received.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameState {
    index: usize,
    available_bandwidth: f64,
    block_bandwidth: f64,
    block_count: u32,
    requests: Vec<Request>,
}

impl FrameState {
    pub fn new(
        index: usize,
        available_bandwidth: f64,
        block_bandwidth: f64,
        total_bandwidth: f64,
        requests: Vec<Request>,
    ) -> Result<Self> {
        if !(block_bandwidth > 0.0) {
            return Err(Error::invalid("block_bandwidth", "must be > 0"));
        }
        if !(available_bandwidth >= 0.0 && available_bandwidth <= total_bandwidth) {
            return Err(Error::invalid(
                "available_bandwidth",
                format!("{available_bandwidth} outside [0, {total_bandwidth}]"),
            ));
        }
        Ok(Self {
            index,
            available_bandwidth,
            block_bandwidth,
            block_count: block_count(available_bandwidth, block_bandwidth),
            requests,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }
    pub fn available_bandwidth(&self) -> f64 {
        self.available_bandwidth
    }
    pub fn block_bandwidth(&self) -> f64 {
        self.block_bandwidth
    }
    /// `floor(BW_f / w)`.
    pub fn block_count(&self) -> u32 {
        self.block_count
    }
    pub fn requests(&self) -> &[Request] {
        &self.requests
    }
}

/// Number of whole blocks of width `block_bandwidth` in `bandwidth`.
pub fn block_count(bandwidth: f64, block_bandwidth: f64) -> u32 {
    (bandwidth / block_bandwidth).floor() as u32
}

/// Result of clearing one frame, either by auction or by direct assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    winners: Vec<bool>,
    coefficients: Vec<f64>,
    weighted_bids: Vec<f64>,
    payments: Vec<f64>,
    blocks_allocated: Vec<u32>,
    total_blocks_used: u32,
    triggered: bool,
}

impl AuctionOutcome {
    /// Assembles an outcome and checks it against the requests and block budget.
    pub fn new(
        requests: &[Request],
        capacity: u32,
        winners: Vec<bool>,
        coefficients: Vec<f64>,
        weighted_bids: Vec<f64>,
        payments: Vec<f64>,
        triggered: bool,
    ) -> Result<Self> {
        let n = requests.len();
        for (ctx, len) in [
            ("outcome.winners", winners.len()),
            ("outcome.coefficients", coefficients.len()),
            ("outcome.weighted_bids", weighted_bids.len()),
            ("outcome.payments", payments.len()),
        ] {
            if len != n {
                return Err(Error::Dimension {
                    context: ctx,
                    expected: n,
                    actual: len,
                });
            }
        }
        let blocks_allocated: Vec<u32> = requests
            .iter()
            .zip(&winners)
            .map(|(r, &won)| if won { r.demand() } else { 0 })
            .collect();
        let total_blocks_used: u32 = blocks_allocated.iter().sum();
        if total_blocks_used > capacity {
            return Err(Error::invalid(
                "outcome",
                format!("{total_blocks_used} blocks allocated, only {capacity} available"),
            ));
        }
        for i in 0..n {
            if coefficients[i] < 0.0 {
                return Err(Error::invalid("outcome.coefficient", "negative coefficient"));
            }
            let p = payments[i];
            if !winners[i] && p != 0.0 {
                return Err(Error::invalid("outcome.payment", "loser charged"));
            }
            if !(p >= 0.0 && p <= weighted_bids[i]) && winners[i] {
                return Err(Error::invalid(
                    "outcome.payment",
                    format!("payment {p} outside [0, {}]", weighted_bids[i]),
                ));
            }
        }
        Ok(Self {
            winners,
            coefficients,
            weighted_bids,
            payments,
            blocks_allocated,
            total_blocks_used,
            triggered,
        })
    }

    pub fn winners(&self) -> &[bool] {
        &self.winners
    }
    pub fn won(&self, i: usize) -> bool {
        self.winners[i]
    }
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
    pub fn weighted_bids(&self) -> &[f64] {
        &self.weighted_bids
    }
    /// Payments in weighted-bid units.
    pub fn payments(&self) -> &[f64] {
        &self.payments
    }
    /// Payment divided by the applied coefficient, when that coefficient is positive.
    pub fn raw_payment(&self, i: usize) -> Option<f64> {
        (self.coefficients[i] > 0.0).then(|| self.payments[i] / self.coefficients[i])
    }
    pub fn blocks_allocated(&self) -> &[u32] {
        &self.blocks_allocated
    }
    pub fn total_blocks_used(&self) -> u32 {
        self.total_blocks_used
    }
    pub fn triggered(&self) -> bool {
        self.triggered
    }
    pub fn len(&self) -> usize {
        self.winners.len()
    }
    pub fn is_empty(&self) -> bool {
        self.winners.is_empty()
    }
}

/// Hyperparameters of the actor-critic learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdpgConfig {
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub polyak: f64,
    pub discount: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub exploration_noise_std: f64,
    pub noise_decay: f64,
    pub noise_min: f64,
    pub episodes: usize,
    pub frames_per_episode: usize,
    /// Upper bound on the coefficient scale the actor may emit.
    pub max_coefficient: f64,
    /// Multiplier applied to environment rewards before they enter the critic.
    pub reward_scale: f64,
    pub optimizer: Optimizer,
}

/// Update rule applied to actor and critic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 10_000,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            polyak: 5e-4,
            discount: 0.99,
            actor_hidden: vec![1024, 512],
            critic_hidden: vec![512, 256],
            exploration_noise_std: 1.0,
            noise_decay: 5e-4,
            noise_min: 0.01,
            episodes: 500,
            frames_per_episode: 250,
            max_coefficient: 5.0,
            reward_scale: 1e-3,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl DdpgConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ddpg.actor_lr", self.actor_lr),
            ("ddpg.critic_lr", self.critic_lr),
            ("ddpg.noise_decay", self.noise_decay),
            ("ddpg.max_coefficient", self.max_coefficient),
            ("ddpg.reward_scale", self.reward_scale),
        ];
        for (what, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(what, format!("{v} must be > 0")));
            }
        }
        if !(self.polyak > 0.0 && self.polyak <= 1.0) {
            return Err(Error::invalid("ddpg.polyak", format!("{} not in (0,1]", self.polyak)));
        }
        if !(self.discount >= 0.0 && self.discount < 1.0) {
            return Err(Error::invalid(
                "ddpg.discount",
                format!("{} not in [0,1)", self.discount),
            ));
        }
        if !(self.exploration_noise_std >= 0.0) || !(self.noise_min >= 0.0) {
            return Err(Error::invalid("ddpg.exploration_noise_std", "must be >= 0"));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::invalid(
                "ddpg.batch_size",
                format!(
                    "batch {} must be in 1..=buffer capacity {}",
                    self.batch_size, self.buffer_capacity
                ),
            ));
        }
        if self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return Err(Error::invalid("ddpg.hidden", "layer width 0"));
        }
        if self.episodes == 0 || self.frames_per_episode == 0 {
            return Err(Error::invalid("ddpg.episodes", "episode schedule must be non-empty"));
        }
        Ok(())
    }
}

/// One replay-buffer record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
}
