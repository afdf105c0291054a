//! ε-greedy deep Q-learning agent with uniform experience replay and a
//! periodically synchronized target network.

mod checkpoint;
mod replay;

use std::sync::Arc;
use std::time::{Duration, Instant};

use homedqn_nn::{scale_pixels, FeatureTap, Gradients, NetworkSpec, NnError, QNetwork, RmsProp, RmsPropConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::home::ACTION_COUNT;
use crate::render::{ProfileName, StateImage};

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use replay::{ReplayPool, Transition};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("replay pool is empty")]
    EmptyPool,
    #[error("non-finite bootstrap target {value} for action {action}")]
    NonFiniteTarget { action: usize, value: f32 },
    #[error("image side {actual} does not match the network input side {expected}")]
    ImageSide { expected: usize, actual: usize },
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_anneal_steps: u64,
    pub minibatch_size: usize,
    pub update_freq: u64,
    pub target_q: u64,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let rms = RmsPropConfig::default();
        AgentConfig {
            gamma: 0.9,
            epsilon_start: 0.99,
            epsilon_end: 0.5,
            epsilon_anneal_steps: 200_000,
            minibatch_size: 32,
            update_freq: 12,
            target_q: 4096,
            replay_capacity: 100_000,
            learning_rate: rms.learning_rate,
            rms_decay: rms.decay,
            rms_epsilon: rms.epsilon,
        }
    }
}

impl AgentConfig {
    /// Negated comparisons so that NaN settings are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon endpoints must be probabilities");
        }
        if self.minibatch_size == 0 || self.update_freq == 0 || self.target_q == 0 || self.replay_capacity == 0 {
            return bad("minibatch_size, update_freq, target_q and replay_capacity must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.rms_decay) || !(self.rms_epsilon >= 0.0) {
            return bad("rmsprop constants out of range");
        }
        Ok(())
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig { learning_rate: self.learning_rate, decay: self.rms_decay, epsilon: self.rms_epsilon }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Linear anneal from `epsilon_start` at step 0 to `epsilon_end` at
/// `epsilon_anneal_steps`, constant afterwards; zero when evaluating.
pub fn epsilon(cfg: &AgentConfig, step: u64, mode: Mode) -> f64 {
    match mode {
        Mode::Eval => 0.0,
        Mode::Train if step >= cfg.epsilon_anneal_steps => cfg.epsilon_end,
        Mode::Train => {
            let frac = step as f64 / cfg.epsilon_anneal_steps as f64;
            cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn network_spec(profile: ProfileName) -> NetworkSpec {
    match profile {
        ProfileName::Full => NetworkSpec::full(),
        ProfileName::Desk => NetworkSpec::desk(),
    }
}

pub fn profile_of(spec: &NetworkSpec) -> Option<ProfileName> {
    [ProfileName::Full, ProfileName::Desk].into_iter().find(|p| network_spec(*p) == *spec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub steps: u64,
    pub learn_calls: u64,
    pub syncs: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LearnStats {
    pub mean_abs_loss: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ObserveOutcome {
    pub learned: Option<LearnStats>,
    pub synced: bool,
}

pub struct DqnAgent {
    cfg: AgentConfig,
    online: QNetwork<f32>,
    target: QNetwork<f32>,
    opt: RmsProp<f32>,
    grads: Gradients<f32>,
    pool: ReplayPool,
    rng: ChaCha8Rng,
    counters: Counters,
    learn_time: Duration,
}

impl DqnAgent {
    /// Fresh agent with seeded initial weights.
    pub fn new(cfg: AgentConfig, spec: NetworkSpec, seed: u64) -> Result<Self> {
        let net = QNetwork::seeded(spec, seed)?;
        Self::from_network(cfg, net, seed)
    }

    /// Agent starting from `net`, with an empty pool and target = online.
    pub fn from_network(cfg: AgentConfig, net: QNetwork<f32>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        net.check_finite()?;
        Ok(DqnAgent {
            opt: RmsProp::new(cfg.rmsprop(), &net),
            grads: Gradients::zeros_like(&net),
            target: net.clone(),
            online: net,
            pool: ReplayPool::new(cfg.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7),
            counters: Counters::default(),
            learn_time: Duration::ZERO,
            cfg,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online(&self) -> &QNetwork<f32> {
        &self.online
    }

    pub fn target(&self) -> &QNetwork<f32> {
        &self.target
    }

    pub fn pool(&self) -> &ReplayPool {
        &self.pool
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    /// Total time spent inside `learn`.
    pub fn learn_time(&self) -> Duration {
        self.learn_time
    }

    pub fn profile(&self) -> Option<ProfileName> {
        profile_of(self.online.spec())
    }

    fn input(&self, img: &StateImage) -> Result<Vec<f32>> {
        let expected = self.online.spec().input_side;
        if img.side != expected {
            return Err(AgentError::ImageSide { expected, actual: img.side });
        }
        Ok(scale_pixels(&img.pixels))
    }

    pub fn q_values(&self, img: &StateImage) -> Result<Vec<f32>> {
        Ok(self.online.forward(&self.input(img)?)?)
    }

    pub fn target_q_values(&self, img: &StateImage) -> Result<Vec<f32>> {
        Ok(self.target.forward(&self.input(img)?)?)
    }

    pub fn greedy(&self, img: &StateImage) -> Result<usize> {
        Ok(argmax(&self.q_values(img)?))
    }

    /// With probability `eps` a uniform action, else the greedy one.
    pub fn get_action(&mut self, img: &StateImage, eps: f64) -> Result<usize> {
        if eps > 0.0 && self.rng.gen::<f64>() < eps {
            return Ok(self.rng.gen_range(0..ACTION_COUNT));
        }
        self.greedy(img)
    }

    /// Records one interaction, learning every `update_freq` steps and
    /// synchronizing the target every `target_q` steps.
    pub fn observe(&mut self, t: Transition) -> Result<ObserveOutcome> {
        self.pool.push(t);
        self.counters.steps += 1;
        let step = self.counters.steps;
        let learned = if step.is_multiple_of(self.cfg.update_freq) { Some(self.learn()?) } else { None };
        let synced = self.maybe_sync_target(step);
        Ok(ObserveOutcome { learned, synced })
    }

    pub fn maybe_sync_target(&mut self, step: u64) -> bool {
        if step.is_multiple_of(self.cfg.target_q) {
            self.sync_target();
            true
        } else {
            false
        }
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
        self.counters.syncs += 1;
    }

    /// One minibatch update. The batch is drawn with replacement, so a pool
    /// smaller than the batch is sampled repeatedly rather than skipped.
    pub fn learn(&mut self) -> Result<LearnStats> {
        let started = Instant::now();
        let picks = self.pool.sample_indices(self.cfg.minibatch_size, &mut self.rng)?;
        self.grads.clear();
        let gamma = self.cfg.gamma as f32;
        let mut dq = vec![0.0f32; ACTION_COUNT];
        let mut abs_loss = 0.0f64;
        for &i in &picks {
            let t = self.pool.get(i);
            let next = self.target.forward(&scale_pixels(&t.s_next.pixels))?;
            let best = next.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let target = t.r as f32 + gamma * best;
            if !target.is_finite() {
                return Err(AgentError::NonFiniteTarget { action: t.a, value: target });
            }
            let trace = self.online.forward_trace(&scale_pixels(&t.s.pixels))?;
            let loss = target - trace.q_values()[t.a];
            abs_loss += loss.abs() as f64;
            dq.fill(0.0);
            dq[t.a] = loss;
            self.online.backward(&trace, &dq, &mut self.grads)?;
        }
        self.opt.step(&mut self.online, &self.grads)?;
        self.counters.learn_calls += 1;
        let elapsed = started.elapsed();
        self.learn_time += elapsed;
        Ok(LearnStats { mean_abs_loss: abs_loss / picks.len() as f64, elapsed })
    }

    pub fn features(&self, img: &StateImage, tap: FeatureTap) -> Result<Vec<f32>> {
        Ok(self.online.features(&self.input(img)?, tap)?)
    }

    /// Copy of the online weights for an independent agent; optimizer state,
    /// pool and counters start fresh.
    pub fn fork(&self, cfg: AgentConfig, seed: u64) -> Result<DqnAgent> {
        DqnAgent::from_network(cfg, self.online.clone(), seed)
    }

    pub fn restore_counters(&mut self, counters: Counters) {
        self.counters = counters;
    }
}

/// Convenience for callers holding images behind `Arc`.
pub fn transition(s: &Arc<StateImage>, a: usize, r: i32, s_next: &Arc<StateImage>) -> Transition {
    Transition { s: s.clone(), a, r, s_next: s_next.clone() }
}
