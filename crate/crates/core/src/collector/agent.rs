use std::collections::VecDeque;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;

use super::state::{StateVector, STATE_DIM};
use crate::nn::{relu, relu_backward, Dense, Optimizer, Param, Parameterized};

/// One experience tuple. `next_valid` is the number of unmasked actions in
/// `next_state`, used to mask the bootstrap maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    pub next_valid: usize,
    pub terminal: bool,
}

/// Two-layer Q-network: state -> hidden (ReLU) -> one Q-value per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QNet {
    pub hidden: Dense,
    pub out: Dense,
}

/// Signed log squashing so that statistics of heavy-tailed crosses stay in a
/// trainable range.
fn squash(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

fn state_batch(states: &[&StateVector]) -> Array2<f64> {
    Array2::from_shape_fn((states.len(), STATE_DIM), |(r, c)| squash(states[r].0[c]))
}

impl QNet {
    pub fn new<R: Rng + ?Sized>(name: &str, hidden: usize, actions: usize, rng: &mut R) -> QNet {
        QNet {
            hidden: Dense::new(&format!("{name}.hidden"), STATE_DIM, hidden, rng),
            out: Dense::new(&format!("{name}.out"), hidden, actions, rng),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.out.output_dim()
    }

    pub fn q_values(&self, s: &StateVector) -> Vec<f64> {
        let x = state_batch(&[s]);
        let h = relu(&self.hidden.forward(x.view()));
        self.out.forward(h.view()).row(0).to_vec()
    }

    fn forward_batch(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let pre = self.hidden.forward(x.view());
        let h = relu(&pre);
        let q = self.out.forward(h.view());
        (pre, h, q)
    }
}

impl Parameterized for QNet {
    fn params(&self) -> Vec<&Param> {
        let mut v = self.hidden.params();
        v.extend(self.out.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.hidden.params_mut();
        v.extend(self.out.params_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        let k = batch.min(self.items.len());
        index::sample(rng, self.items.len(), k)
            .into_iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub lr: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub sync_every: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: 64,
            gamma: 0.9,
            lr: 0.001,
            replay_capacity: 4096,
            batch_size: 64,
            sync_every: 50,
        }
    }
}

/// A DQN agent with its own online/target networks, optimizer and replay buffer.
#[derive(Debug, Clone)]
pub struct QAgent {
    pub online: QNet,
    pub target: QNet,
    pub optimizer: Optimizer,
    pub buffer: ReplayBuffer,
    pub updates: usize,
    pub cfg: DqnConfig,
}

impl QAgent {
    pub fn new<R: Rng + ?Sized>(name: &str, actions: usize, cfg: DqnConfig, rng: &mut R) -> QAgent {
        let online = QNet::new(name, cfg.hidden, actions, rng);
        QAgent {
            target: online.clone(),
            online,
            optimizer: Optimizer::adam(cfg.lr),
            buffer: ReplayBuffer::new(cfg.replay_capacity),
            updates: 0,
            cfg,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.online.n_actions()
    }

    /// Epsilon-greedy choice among the first `valid` actions.
    pub fn act<R: Rng + ?Sized>(&self, state: &StateVector, valid: usize, epsilon: f64, rng: &mut R) -> usize {
        let valid = valid.min(self.n_actions());
        assert!(valid >= 1, "no valid action");
        if rng.gen::<f64>() < epsilon {
            return rng.gen_range(0..valid);
        }
        argmax_masked(&self.online.q_values(state), valid)
    }

    /// One replay-batch update once the buffer holds a full batch.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        if self.buffer.len() < self.cfg.batch_size {
            return None;
        }
        let batch = self.buffer.sample(self.cfg.batch_size, rng);
        Some(bellman_update(self, &batch))
    }
}

/// Index of the largest Q-value among the first `valid` entries; ties go to
/// the lower index.
pub fn argmax_masked(q: &[f64], valid: usize) -> usize {
    let mut best = 0;
    for a in 1..valid.min(q.len()) {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

/// Bellman target for one transition under `target_net`.
pub fn td_target(target_net: &QNet, t: &Transition, gamma: f64) -> f64 {
    if t.terminal {
        return t.reward;
    }
    let q = target_net.q_values(&t.next_state);
    let best = argmax_masked(&q, t.next_valid.max(1));
    t.reward + gamma * q[best]
}

/// Mean-squared TD loss on a batch followed by one optimizer step; the
/// target network is re-synced every `sync_every` updates. Returns the loss
/// before the step.
pub fn bellman_update(agent: &mut QAgent, batch: &[Transition]) -> f64 {
    assert!(!batch.is_empty());
    let targets: Vec<f64> = batch.iter().map(|t| td_target(&agent.target, t, agent.cfg.gamma)).collect();
    let states: Vec<&StateVector> = batch.iter().map(|t| &t.state).collect();
    let x = state_batch(&states);
    let (pre, h, q) = agent.online.forward_batch(&x);
    let b = batch.len() as f64;
    let mut dq = Array2::zeros(q.raw_dim());
    let mut loss = 0.0;
    for (r, (t, y)) in batch.iter().zip(&targets).enumerate() {
        let err = q[[r, t.action]] - y;
        loss += err * err / b;
        dq[[r, t.action]] = 2.0 * err / b;
    }
    let dh = agent.online.out.backward(h.view(), dq.view());
    let dpre = relu_backward(&pre, &dh);
    agent.online.hidden.accumulate(x.view(), dpre.view());
    agent.optimizer.step(&mut agent.online);
    agent.updates += 1;
    if agent.updates.is_multiple_of(agent.cfg.sync_every) {
        agent.target = agent.online.clone();
    }
    loss
}
