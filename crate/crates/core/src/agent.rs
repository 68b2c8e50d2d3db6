//! Deep deterministic policy gradient learner for per-bidder coefficient scales.
//!
//! The actor maps an encoded frame state to one non-negative scale per bidder.
//! The critic scores `(state, action)` pairs from their concatenation. Both have
//! target copies that trail the live weights by Polyak averaging. Updates are
//! plain gradient descent with mean reduction over the minibatch.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{DdpgConfig, Optimizer, Transition};
use crate::environment::{SpectrumEnv, Step};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Gradients, Mlp};
use crate::replay::ReplayBuffer;

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub(crate) actor: Mlp,
    pub(crate) critic: Mlp,
    pub(crate) target_actor: Mlp,
    pub(crate) target_critic: Mlp,
    pub(crate) config: DdpgConfig,
    pub(crate) noise_steps: u64,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) actor_opt: Adam,
    pub(crate) critic_opt: Adam,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: DdpgConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::invalid("agent dims", "state and action must be non-empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor_sizes: Vec<usize> = std::iter::once(state_dim)
            .chain(config.actor_hidden.iter().copied())
            .chain(std::iter::once(action_dim))
            .collect();
        let critic_sizes: Vec<usize> = std::iter::once(state_dim + action_dim)
            .chain(config.critic_hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let actor = Mlp::new(&actor_sizes, Activation::Softplus, &mut rng)?;
        let critic = Mlp::new(&critic_sizes, Activation::Identity, &mut rng)?;
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            actor,
            critic,
            config,
            noise_steps: 0,
            rng,
        })
    }

    /// Reassembles an agent from saved parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        actor: Mlp,
        critic: Mlp,
        target_actor: Mlp,
        target_critic: Mlp,
        config: DdpgConfig,
        noise_steps: u64,
        rng: ChaCha8Rng,
        optimizers: (Adam, Adam),
    ) -> Result<Self> {
        config.validate()?;
        if !actor.same_shape(&target_actor) || !critic.same_shape(&target_critic) {
            return Err(Error::invalid("agent", "target shapes differ from live networks"));
        }
        if critic.input_dim() != actor.input_dim() + actor.output_dim() || critic.output_dim() != 1 {
            return Err(Error::invalid("agent", "critic input must be state + action, output 1"));
        }
        let (actor_opt, critic_opt) = optimizers;
        if actor_opt.m.len() != actor.parameter_count() || critic_opt.m.len() != critic.parameter_count() {
            return Err(Error::invalid("agent", "optimizer state does not match network size"));
        }
        Ok(Self {
            actor,
            critic,
            target_actor,
            target_critic,
            config,
            noise_steps,
            rng,
            actor_opt,
            critic_opt,
        })
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }
    pub fn critic(&self) -> &Mlp {
        &self.critic
    }
    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }
    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }
    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }
    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }
    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }
    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }
    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }
    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    /// Current exploration standard deviation: linear decay to a floor.
    pub fn noise_std(&self) -> f64 {
        let c = &self.config;
        (c.exploration_noise_std - c.noise_decay * self.noise_steps as f64).max(c.noise_min)
    }

    pub fn noise_steps(&self) -> u64 {
        self.noise_steps
    }

    pub fn decay_noise(&mut self) {
        self.noise_steps += 1;
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite()
            && self.critic.is_finite()
            && self.target_actor.is_finite()
            && self.target_critic.is_finite()
    }

    fn bound(&self, a: f64) -> f64 {
        a.clamp(0.0, self.config.max_coefficient)
    }

    /// Policy output for `state`, with Gaussian exploration noise when `explore`.
    /// Every entry lies in `[0, max_coefficient]`.
    pub fn act(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let (mut action, _) = self.actor.forward(state)?;
        let std = self.noise_std();
        for a in &mut action {
            if explore && std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *a += std * z;
            }
            *a = self.bound(*a);
        }
        Ok(action)
    }

    /// Deterministic policy output; does not touch the generator.
    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (action, _) = self.actor.forward(state)?;
        Ok(action.into_iter().map(|a| self.bound(a)).collect())
    }

    fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
        rows.flat_map(|r| r.iter().copied()).collect()
    }

    fn concat(states: &[f64], actions: &[f64], s: usize, a: usize) -> Vec<f64> {
        states
            .chunks_exact(s)
            .zip(actions.chunks_exact(a))
            .flat_map(|(x, y)| x.iter().chain(y.iter()).copied())
            .collect()
    }

    /// One descent step on the mean squared temporal-difference error. The
    /// bootstrap target uses the target actor and critic and carries no gradient.
    /// Returns the loss before the step.
    pub fn critic_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::BufferUnderfull { have: 0, need: 1 });
        }
        let (s, a, n) = (self.state_dim(), self.action_dim(), batch.len());
        let states = Self::stack(batch.iter().map(|t| t.state.as_slice()));
        let actions = Self::stack(batch.iter().map(|t| t.action.as_slice()));
        let next = Self::stack(batch.iter().map(|t| t.next_state.as_slice()));

        let next_actions: Vec<f64> = self
            .target_actor
            .forward_batch(&next, n)?
            .into_output()
            .into_iter()
            .map(|x| self.bound(x))
            .collect();
        let next_q = self
            .target_critic
            .forward_batch(&Self::concat(&next, &next_actions, s, a), n)?
            .into_output();
        let targets: Vec<f64> = batch
            .iter()
            .zip(&next_q)
            .map(|(t, q)| self.config.reward_scale * t.reward + self.config.discount * q)
            .collect();

        let cache = self.critic.forward_batch(&Self::concat(&states, &actions, s, a), n)?;
        let q = cache.output();
        let mut loss = 0.0;
        let mut upstream = Vec::with_capacity(n);
        for (qi, yi) in q.iter().zip(&targets) {
            let err = qi - yi;
            loss += err * err;
            upstream.push(2.0 * err / n as f64);
        }
        loss /= n as f64;
        let (grads, _) = self.critic.gradient(&cache, &upstream)?;
        self.step_critic(&grads);
        Ok(loss)
    }

    /// One descent step on `-mean Q(s, pi(s))` through the frozen critic.
    /// Returns the loss before the step.
    pub fn actor_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::BufferUnderfull { have: 0, need: 1 });
        }
        let (s, a, n) = (self.state_dim(), self.action_dim(), batch.len());
        let states = Self::stack(batch.iter().map(|t| t.state.as_slice()));
        let actor_cache = self.actor.forward_batch(&states, n)?;
        let raw = actor_cache.output();
        let bounded: Vec<f64> = raw.iter().map(|&x| self.bound(x)).collect();
        let critic_cache = self.critic.forward_batch(&Self::concat(&states, &bounded, s, a), n)?;
        let loss = -critic_cache.output().iter().sum::<f64>() / n as f64;
        let upstream = vec![-1.0 / n as f64; n];
        let (_, d_input) = self.critic.gradient(&critic_cache, &upstream)?;
        let mut d_action = Vec::with_capacity(n * a);
        for (row, out) in d_input.chunks_exact(s + a).zip(raw.chunks_exact(a)) {
            for (g, &x) in row[s..].iter().zip(out) {
                // Past the upper bound, only gradients pulling back inside pass.
                let blocked = x > self.config.max_coefficient && *g < 0.0;
                d_action.push(if blocked { 0.0 } else { *g });
            }
        }
        let (grads, _) = self.actor.gradient(&actor_cache, &d_action)?;
        self.step_actor(&grads);
        Ok(loss)
    }

    fn step_critic(&mut self, grads: &Gradients) {
        let lr = self.config.critic_lr;
        match self.config.optimizer {
            Optimizer::Sgd => self.critic.apply_sgd(grads, lr),
            Optimizer::Adam => self.critic_opt.apply(&mut self.critic, grads, lr),
        }
    }

    fn step_actor(&mut self, grads: &Gradients) {
        let lr = self.config.actor_lr;
        match self.config.optimizer {
            Optimizer::Sgd => self.actor.apply_sgd(grads, lr),
            Optimizer::Adam => self.actor_opt.apply(&mut self.actor, grads, lr),
        }
    }

    /// Polyak step of both target networks toward the live ones.
    pub fn soft_update(&mut self) {
        let tau = self.config.polyak;
        self.target_actor.soft_update_from(&self.actor, tau);
        self.target_critic.soft_update_from(&self.critic, tau);
    }

    /// Samples a minibatch and runs critic, actor and target updates.
    /// Returns `(critic_loss, actor_loss)`, or `BufferUnderfull` without touching
    /// any weights.
    pub fn learn(&mut self, buffer: &ReplayBuffer) -> Result<(f64, f64)> {
        let batch = buffer.sample(&mut self.rng, self.config.batch_size)?;
        let critic_loss = self.critic_update(&batch)?;
        let actor_loss = self.actor_update(&batch)?;
        self.soft_update();
        Ok((critic_loss, actor_loss))
    }
}

/// Per-episode training summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub mean_reward: f64,
    pub noise_std: f64,
    pub critic_loss_mean: f64,
    pub actor_loss_mean: f64,
    pub updates: usize,
}

/// Everything the training loop reports about one frame.
pub struct FrameRecord<'a> {
    pub episode: usize,
    pub frame: usize,
    pub action: &'a [f64],
    pub step: &'a Step,
}

/// Seed for episode `episode` of a run seeded with `run_seed`.
pub fn episode_seed(run_seed: u64, episode: usize) -> u64 {
    let mut z = run_seed ^ (episode as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the actor-critic loop: per frame act with noise, step, store, learn, and
/// soft-update the targets. Learning is skipped while the buffer holds fewer
/// than one minibatch.
pub fn train<F>(
    agent: &mut DdpgAgent,
    env: &mut SpectrumEnv,
    buffer: &mut ReplayBuffer,
    episodes: usize,
    frames_per_episode: usize,
    run_seed: u64,
    mut observe: F,
) -> Result<Vec<EpisodeStats>>
where
    F: FnMut(&FrameRecord<'_>),
{
    if env.config().state_dim() != agent.state_dim() || env.config().bidders() != agent.action_dim() {
        return Err(Error::Dimension {
            context: "agent/environment",
            expected: env.config().state_dim(),
            actual: agent.state_dim(),
        });
    }
    let mut history = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = env.reset(episode_seed(run_seed, episode));
        let mut reward_sum = 0.0;
        let (mut closs, mut aloss, mut updates) = (0.0, 0.0, 0usize);
        for frame in 0..frames_per_episode {
            let action = agent.act(&state, true)?;
            let step = env.step(&action)?;
            reward_sum += step.reward;
            observe(&FrameRecord {
                episode,
                frame,
                action: &action,
                step: &step,
            });
            buffer.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
            });
            match agent.learn(buffer) {
                Ok((c, a)) => {
                    closs += c;
                    aloss += a;
                    updates += 1;
                }
                Err(Error::BufferUnderfull { .. }) => {}
                Err(e) => return Err(e),
            }
            agent.decay_noise();
            state = step.next_state;
        }
        let per = |x: f64| if updates > 0 { x / updates as f64 } else { 0.0 };
        history.push(EpisodeStats {
            episode,
            mean_reward: reward_sum / frames_per_episode as f64,
            noise_std: agent.noise_std(),
            critic_loss_mean: per(closs),
            actor_loss_mean: per(aloss),
            updates,
        });
    }
    Ok(history)
}
