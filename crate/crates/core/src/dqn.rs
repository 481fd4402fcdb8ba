//! Deep Q-learning agent: experience replay, epsilon-greedy exploration,
//! bootstrapped targets and soft target-network tracking. A tabular
//! Q-learning update is kept alongside as a small-instance reference.

use std::collections::VecDeque;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, AGENT_CELL};
use crate::error::{Error, Result};
use crate::neuralnet::checkpoint::{self, Checkpoint};
use crate::neuralnet::{adam_step, soft_update, AdamConfig, AdamState, Architecture, Matrix, Model};
use crate::topology::{EntityId, Purpose, RngSet, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
}

/// Bounded FIFO of experiences; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` distinct experiences chosen uniformly, or `None` while fewer than `n` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Experience>> {
        if self.items.len() < n {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.items.len(), n)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

/// `epsilon_t = max(min, start * decay^t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub min: f64,
    pub decay: f64,
    value: f64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, min: f64, decay: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&min) || !(min..=1.0).contains(&start) {
            return Err(Error::config("epsilon", format!("need 0 <= min {min} <= start {start} <= 1")));
        }
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::config("epsilon", format!("decay {decay} outside [0, 1]")));
        }
        Ok(Self { start, min, decay, value: start })
    }

    /// Decay that reaches `min` after `steps` calls to [`advance`](Self::advance).
    pub fn reaching_min_after(start: f64, min: f64, steps: usize) -> Result<Self> {
        let decay = if steps == 0 || start <= 0.0 || min <= 0.0 {
            0.0
        } else {
            (min / start).powf(1.0 / steps as f64)
        };
        Self::new(start, min, decay)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn advance(&mut self) {
        self.value = (self.value * self.decay).max(self.min);
    }

    pub fn set_value(&mut self, v: f64) {
        self.value = v.clamp(self.min, self.start);
    }
}

/// Which network supplies which term of the temporal-difference loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RoleConvention {
    /// Target network bootstraps `max Q(s', .)`; prediction network is fitted on `Q(s, a)`.
    #[default]
    Conventional,
    /// Prediction network bootstraps and the target network produces `Q(s, a)`.
    /// The fitted term then carries no gradient w.r.t. the prediction network.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Soft-update blend factor.
    pub tau: f64,
    /// Slots between soft updates.
    pub target_period: usize,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    /// Fraction of the training horizon after which epsilon reaches its floor.
    pub epsilon_decay_fraction: f64,
    pub adam: AdamConfig,
    pub roles: RoleConvention,
    /// Multiplier applied to rewards before they enter the learner.
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            batch_size: 32,
            replay_capacity: 1000,
            tau: 0.1,
            target_period: 10,
            epsilon_start: 1.0,
            epsilon_min: 0.001,
            epsilon_decay_fraction: 0.8,
            adam: AdamConfig::default(),
            roles: RoleConvention::Conventional,
            reward_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", format!("{} outside [0, 1]", self.gamma)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::config("replay_capacity", "smaller than the batch size"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::config("tau", format!("{} outside [0, 1]", self.tau)));
        }
        if self.target_period == 0 {
            return Err(Error::config("target_period", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.epsilon_decay_fraction) {
            return Err(Error::config("epsilon_decay_fraction", "outside [0, 1]"));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::config("reward_scale", "must be positive and finite"));
        }
        Ok(())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct QAgent {
    pub config: AgentConfig,
    pred: Model,
    target: Model,
    adam: AdamState,
    epsilon: EpsilonSchedule,
    replay: ReplayBuffer,
    explore_rng: Stream,
    replay_rng: Stream,
    slots: u64,
}

impl QAgent {
    /// Fresh agent whose epsilon reaches its floor after
    /// `epsilon_decay_fraction * total_slots` action selections.
    pub fn new(arch: Architecture, config: AgentConfig, total_slots: usize, rngs: &RngSet) -> Result<Self> {
        config.validate()?;
        let me = EntityId::iue(AGENT_CELL);
        let pred = Model::new(arch, &mut rngs.stream(Purpose::WeightInit, me))?;
        let target = pred.clone();
        let adam = AdamState::for_model(config.adam, &pred);
        let horizon = (config.epsilon_decay_fraction * total_slots as f64).round() as usize;
        let epsilon = EpsilonSchedule::reaching_min_after(config.epsilon_start, config.epsilon_min, horizon)?;
        let replay = ReplayBuffer::new(config.replay_capacity);
        Ok(Self {
            config,
            pred,
            target,
            adam,
            epsilon,
            replay,
            explore_rng: rngs.stream(Purpose::Exploration, me),
            replay_rng: rngs.stream(Purpose::ReplaySampling, me),
            slots: 0,
        })
    }

    pub fn prediction(&self) -> &Model {
        &self.pred
    }

    pub fn target(&self) -> &Model {
        &self.target
    }

    pub fn prediction_mut(&mut self) -> &mut Model {
        &mut self.pred
    }

    pub fn target_mut(&mut self) -> &mut Model {
        &mut self.target
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.value()
    }

    pub fn epsilon_schedule_mut(&mut self) -> &mut EpsilonSchedule {
        &mut self.epsilon
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn slots_observed(&self) -> u64 {
        self.slots
    }

    pub fn greedy(&self, s: &[f64]) -> Result<usize> {
        Ok(argmax(&self.pred.q_values(s)?))
    }

    /// Epsilon-greedy choice; advances the schedule by one step.
    pub fn select_action(&mut self, s: &[f64]) -> Result<usize> {
        let explore = self.explore_rng.random::<f64>() < self.epsilon.value();
        let random = self.explore_rng.random_range(0..Action::ALL.len());
        let a = if explore { random } else { self.greedy(s)? };
        self.epsilon.advance();
        Ok(a)
    }

    fn roles(&self) -> (&Model, &Model) {
        match self.config.roles {
            RoleConvention::Conventional => (&self.pred, &self.target),
            RoleConvention::Literal => (&self.target, &self.pred),
        }
    }

    /// `y = r + gamma * max_a' Q(s', a')` per experience, rewards scaled by
    /// `reward_scale`.
    pub fn q_targets(&self, batch: &[&Experience]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Ok(vec![]);
        }
        let (_, bootstrap) = self.roles();
        let next = bootstrap.predict(&Matrix::from_rows(&batch.iter().map(|e| &e.s_next[..]).collect::<Vec<_>>())?)?;
        Ok(batch
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let best = next.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                self.config.reward_scale * e.r + self.config.gamma * best
            })
            .collect())
    }

    /// One gradient step on the mean squared error of the taken actions' Q-values.
    pub fn train_step(&mut self, batch: &[&Experience]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Usage("empty training batch".into()));
        }
        if let Some(e) = batch.iter().find(|e| e.a >= self.pred.architecture().output) {
            return Err(Error::Domain(format!("action index {} beyond Q outputs", e.a)));
        }
        let y = self.q_targets(batch)?;
        let (fitted, _) = self.roles();
        let states = Matrix::from_rows(&batch.iter().map(|e| &e.s[..]).collect::<Vec<_>>())?;
        let trace = fitted.forward(&states)?;
        let n = batch.len() as f64;
        let mut grad = Matrix::zeros(trace.output.rows(), trace.output.cols());
        let mut loss = 0.0;
        for (i, (e, &yi)) in batch.iter().zip(&y).enumerate() {
            let d = trace.output[(i, e.a)] - yi;
            loss += d * d;
            grad[(i, e.a)] = 2.0 * d / n;
        }
        loss /= n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        match self.config.roles {
            RoleConvention::Conventional => {
                let g = self.pred.backward(&trace, &grad)?;
                adam_step(&mut self.pred, &g, &mut self.adam)?;
            }
            RoleConvention::Literal => {
                let mut p = self.pred.flat_params();
                let zeros = vec![0.0; p.len()];
                self.adam.update(&mut p, &zeros)?;
                self.pred.set_flat_params(&p)?;
            }
        }
        Ok(loss)
    }

    /// Store the transition, refresh the target network on schedule and
    /// train on one sampled batch. Returns the loss when a batch was available.
    pub fn observe(&mut self, e: Experience) -> Result<Option<f64>> {
        if e.s.len() != self.pred.architecture().input || e.s_next.len() != e.s.len() {
            return Err(Error::Shape("experience state width differs from the model input".into()));
        }
        self.replay.push(e);
        self.slots += 1;
        if self.slots % self.config.target_period as u64 == 0 {
            soft_update(&mut self.target, &self.pred, self.config.tau)?;
        }
        let batch: Vec<Experience> = match self.replay.sample(self.config.batch_size, &mut self.replay_rng) {
            Some(b) => b.into_iter().cloned().collect(),
            None => return Ok(None),
        };
        let refs: Vec<&Experience> = batch.iter().collect();
        self.train_step(&refs).map(Some)
    }

    /// Networks, optimizer moments and schedule counters.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.insert(*b"PRED", checkpoint::encode_model(&self.pred));
        c.insert(*b"TARG", checkpoint::encode_model(&self.target));
        c.insert(*b"ADAM", checkpoint::encode_adam(&self.adam));
        let mut sched = Vec::new();
        sched.write_f64::<LE>(self.epsilon.value()).expect("vec write");
        sched.write_f64::<LE>(self.epsilon.decay).expect("vec write");
        sched.write_u64::<LE>(self.slots).expect("vec write");
        c.insert(*b"SCHD", sched);
        c
    }

    /// Replace networks, optimizer and schedule state from a checkpoint.
    pub fn restore(&mut self, c: &Checkpoint) -> Result<()> {
        let pred = checkpoint::decode_model(c.get(*b"PRED")?)?;
        let target = checkpoint::decode_model(c.get(*b"TARG")?)?;
        let adam = checkpoint::decode_adam(c.get(*b"ADAM")?)?;
        if pred.architecture() != self.pred.architecture() || target.architecture() != pred.architecture() {
            return Err(Error::Checkpoint("architecture differs from the agent's".into()));
        }
        if adam.m.len() != pred.param_count() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        let mut r = c.get(*b"SCHD")?;
        let eps = r.read_f64::<LE>().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let decay = r.read_f64::<LE>().map_err(|e| Error::Checkpoint(e.to_string()))?;
        let slots = r.read_u64::<LE>().map_err(|e| Error::Checkpoint(e.to_string()))?;
        self.pred = pred;
        self.target = target;
        self.adam = adam;
        self.epsilon.decay = decay;
        self.epsilon.set_value(eps);
        self.slots = slots;
        Ok(())
    }
}

/// Greedy map from states to actions.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    model: Model,
}

impl GreedyPolicy {
    pub fn act(&self, s: &[f64]) -> Result<Action> {
        Action::from_index(argmax(&self.model.q_values(s)?))
    }

    pub fn q_values(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.model.q_values(s)
    }
}

pub fn extract_policy(agent: &QAgent) -> GreedyPolicy {
    GreedyPolicy { model: agent.prediction().clone() }
}

/// Dense state-action value table.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub states: usize,
    pub actions: usize,
    pub q: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize, actions: usize) -> Self {
        Self { states, actions, q: vec![0.0; states * actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.actions..(s + 1) * self.actions]
    }
}

/// `Q(s, a) += alpha * (r + gamma * max_a' Q(s', a') - Q(s, a))`.
pub fn tabular_q_update(
    table: &mut QTable,
    s: usize,
    a: usize,
    r: f64,
    s_next: usize,
    alpha: f64,
    gamma: f64,
) -> Result<()> {
    if s >= table.states || s_next >= table.states || a >= table.actions {
        return Err(Error::Domain(format!(
            "index (s={s}, a={a}, s'={s_next}) outside a {}x{} table",
            table.states, table.actions
        )));
    }
    let best = table.row(s_next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let i = s * table.actions + a;
    table.q[i] += alpha * (r + gamma * best - table.q[i]);
    Ok(())
}
