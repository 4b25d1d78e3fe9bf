//! Training-data collection: three cooperating Q-learning agents (head
//! feature, operator, tail feature) grow feature crosses from the original
//! columns, and every visited feature set is recorded together with its
//! utility. A random-generation collector serves as the ablation.

mod agent;
mod records;
mod state;

use rand::Rng;

pub use agent::{argmax_masked, bellman_update, td_target, DqnConfig, QAgent, QNet, ReplayBuffer, Transition};
pub use records::{ExplorationRecord, RecordError, RecordFile};
pub(crate) use state::quantile_sorted;
pub use state::{describe_state, StateVector, STATE_DIM, STAT_COUNT};

use crate::expr::{eval_on_columns, random_cross, CrossSequence, ExprError, FeatureCross, OpCode, DEFAULT_MAX_LEN, SEGMENT_CAP};
use crate::tabular::DataTable;
use crate::utility::{FeatureMatrix, UtilityConfig, UtilityKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectorConfig {
    pub episodes: usize,
    pub steps: usize,
    /// Feature cap; `None` means twice the original feature count.
    pub max_features: Option<usize>,
    pub dqn: DqnConfig,
    pub utility: UtilityConfig,
    pub utility_kind: UtilityKind,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Record only the generated crosses instead of originals plus crosses.
    pub record_crosses_only: bool,
    /// Tree depth limit for the random collector.
    pub random_depth: usize,
}

impl Default for CollectorConfig {
    fn default() -> Self {
        CollectorConfig {
            episodes: 512,
            steps: 10,
            max_features: None,
            dqn: DqnConfig::default(),
            utility: UtilityConfig::default(),
            utility_kind: UtilityKind::Mdcg,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.7,
            record_crosses_only: false,
            random_depth: 3,
        }
    }
}

impl CollectorConfig {
    pub fn feature_cap(&self, n_features: usize) -> usize {
        self.max_features.unwrap_or(2 * n_features).max(n_features)
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.epsilon_decay_fraction * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / span).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone)]
pub struct AgentTriplet {
    pub head: QAgent,
    pub op: QAgent,
    pub tail: QAgent,
}

impl AgentTriplet {
    /// Feature agents get `max_features` action slots, the operator agent
    /// one slot per operator.
    pub fn new<R: Rng + ?Sized>(max_features: usize, cfg: DqnConfig, rng: &mut R) -> AgentTriplet {
        AgentTriplet {
            head: QAgent::new("head", max_features, cfg, rng),
            op: QAgent::new("op", OpCode::ALL.len(), cfg, rng),
            tail: QAgent::new("tail", max_features, cfg, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Actions {
    pub head: usize,
    pub op: OpCode,
    /// `None` exactly when `op` is unary.
    pub tail: Option<usize>,
}

pub fn select_actions<R: Rng + ?Sized>(
    agents: &AgentTriplet,
    state: &StateVector,
    n_current: usize,
    epsilon: f64,
    rng: &mut R,
) -> Actions {
    assert!(n_current >= 1);
    let head = agents.head.act(state, n_current, epsilon, rng);
    let op = OpCode::ALL[agents.op.act(state, OpCode::ALL.len(), epsilon, rng)];
    let tail = (op.arity() == 2).then(|| agents.tail.act(state, n_current, epsilon, rng));
    Actions { head, op, tail }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub features: FeatureMatrix,
    pub reward: f64,
    /// False when the step was a no-op (duplicate column, cap or length limit).
    pub grew: bool,
    pub sequence: CrossSequence,
    /// Utility of `sequence` as materialized by `apply_sequence`.
    pub record_utility: f64,
}

/// Applies one cross to the current set. `current_utility` must be the
/// utility of `f`: it is the reward of a no-op step.
pub fn collector_step(
    f: &FeatureMatrix,
    current_utility: f64,
    actions: &Actions,
    table: &DataTable,
    cfg: &CollectorConfig,
) -> Result<StepOutcome, ExprError> {
    let prov = f.provenance();
    let head = &prov[actions.head];
    let tail = actions.tail.map(|t| &prov[t]);
    let cross = FeatureCross::combine(head, actions.op, tail);
    let cap = cfg.feature_cap(table.n_features());
    let seq_len = CrossSequence::from_crosses(prov).len() + cross.len() + 1;
    let mut next = None;
    if f.n_cols() < cap && cross.len() <= SEGMENT_CAP && seq_len <= DEFAULT_MAX_LEN {
        // Evaluated from the originals so the column is bitwise what
        // `apply_sequence` would produce.
        let col = eval_on_columns(&cross, table.columns())?;
        if !f.columns().iter().any(|c| crate::expr::bitwise_eq(c, &col)) {
            let mut g = f.clone();
            g.push(col, cross);
            next = Some(g);
        }
    }
    let (features, reward, grew) = match next {
        Some(g) => {
            let u = cfg.utility_kind.score(&g, &cfg.utility);
            (g, u, true)
        }
        None => (f.clone(), current_utility, false),
    };
    let (sequence, record_utility) = record_view(&features, reward, cfg);
    Ok(StepOutcome {
        features,
        reward,
        grew,
        sequence,
        record_utility,
    })
}

fn record_view(f: &FeatureMatrix, utility: f64, cfg: &CollectorConfig) -> (CrossSequence, f64) {
    if cfg.record_crosses_only {
        let keep: Vec<usize> = (0..f.n_cols()).filter(|&q| !f.provenance()[q].is_original()).collect();
        if !keep.is_empty() {
            let cols = keep.iter().map(|&q| f.column(q).to_vec()).collect();
            let prov: Vec<FeatureCross> = keep.iter().map(|&q| f.provenance()[q].clone()).collect();
            let sub = FeatureMatrix::new(cols, prov.clone()).expect("columns of a valid matrix");
            return (CrossSequence::from_crosses(&prov), cfg.utility_kind.score(&sub, &cfg.utility));
        }
    }
    (CrossSequence::from_crosses(f.provenance()), utility)
}

/// Runs the multi-agent exploration. Each episode restarts from the original
/// features; one record is produced per step.
pub fn collect<R: Rng + ?Sized>(
    table: &DataTable,
    cfg: &CollectorConfig,
    rng: &mut R,
) -> Result<Vec<ExplorationRecord>, ExprError> {
    assert!(cfg.episodes >= 1 && cfg.steps >= 1);
    let cap = cfg.feature_cap(table.n_features());
    let mut agents = AgentTriplet::new(cap, cfg.dqn, rng);
    let original = FeatureMatrix::from_table(table);
    let base_utility = cfg.utility_kind.score(&original, &cfg.utility);
    let mut records = Vec::with_capacity(cfg.episodes * cfg.steps);
    for episode in 0..cfg.episodes {
        let epsilon = cfg.epsilon(episode);
        let mut f = original.clone();
        let mut utility = base_utility;
        let mut state = describe_state(&f);
        let mut total = 0.0;
        for step in 0..cfg.steps {
            let actions = select_actions(&agents, &state, f.n_cols(), epsilon, rng);
            let out = collector_step(&f, utility, &actions, table, cfg)?;
            let next_state = if out.grew { describe_state(&out.features) } else { state.clone() };
            let terminal = step + 1 == cfg.steps;
            let next_count = out.features.n_cols();
            let transition = |action: usize, next_valid: usize| Transition {
                state: state.clone(),
                action,
                reward: out.reward,
                next_state: next_state.clone(),
                next_valid,
                terminal,
            };
            agents.head.buffer.push(transition(actions.head, next_count));
            agents.op.buffer.push(transition(actions.op.index(), OpCode::ALL.len()));
            if let Some(t) = actions.tail {
                agents.tail.buffer.push(transition(t, next_count));
            }
            agents.head.train_step(rng);
            agents.op.train_step(rng);
            if actions.tail.is_some() {
                agents.tail.train_step(rng);
            }
            total += out.record_utility;
            records.push(ExplorationRecord {
                sequence: out.sequence,
                utility: out.record_utility,
                episode,
                step,
            });
            f = out.features;
            utility = out.reward;
            state = next_state;
        }
        log::info!(
            "stage=collect episode={episode} epsilon={epsilon:.3} mean_utility={:.6} features={}",
            total / cfg.steps as f64,
            f.n_cols()
        );
    }
    Ok(records)
}

/// Random-generation collector: `n_records` records in episodes of `steps`
/// steps, each step appending a random cross over the original features
/// under the same no-op rules as the learned collector.
pub fn collect_random<R: Rng + ?Sized>(
    table: &DataTable,
    n_records: usize,
    steps: usize,
    cfg: &CollectorConfig,
    rng: &mut R,
) -> Result<Vec<ExplorationRecord>, ExprError> {
    assert!(steps >= 1);
    let original = FeatureMatrix::from_table(table);
    let base_utility = cfg.utility_kind.score(&original, &cfg.utility);
    let cap = cfg.feature_cap(table.n_features());
    let mut records = Vec::with_capacity(n_records);
    let mut f = original.clone();
    let mut utility = base_utility;
    for i in 0..n_records {
        let step = i % steps;
        if step == 0 {
            f = original.clone();
            utility = base_utility;
        }
        let cross = random_cross(cfg.random_depth, table.n_features(), rng);
        let seq_len = CrossSequence::from_crosses(f.provenance()).len() + cross.len() + 1;
        if f.n_cols() < cap && seq_len <= DEFAULT_MAX_LEN {
            let col = eval_on_columns(&cross, table.columns())?;
            if !f.columns().iter().any(|c| crate::expr::bitwise_eq(c, &col)) {
                f.push(col, cross);
                utility = cfg.utility_kind.score(&f, &cfg.utility);
            }
        }
        let (sequence, record_utility) = record_view(&f, utility, cfg);
        records.push(ExplorationRecord {
            sequence,
            utility: record_utility,
            episode: i / steps,
            step,
        });
    }
    log::info!("stage=collect mode=random records={n_records}");
    Ok(records)
}
