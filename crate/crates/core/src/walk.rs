//! The walking environment: queries, states, legal moves and rewards.
//!
//! The environment itself holds no episode state. A [`WalkState`] is a plain
//! value that [`WalkEnv::step`] consumes and returns, so any number of
//! episodes can run against one shared graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Action, EntityId, KnowledgeGraph, RelationId, TypeId, Triple};
use crate::metapath::Metapath;

/// `(head, relation, ?)` with its hidden answer set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub head: EntityId,
    pub relation: RelationId,
    /// Sorted, duplicate-free.
    pub answers: Vec<EntityId>,
    pub target_type: TypeId,
}

impl Query {
    pub fn new(
        head: EntityId,
        relation: RelationId,
        mut answers: Vec<EntityId>,
        target_type: TypeId,
    ) -> Self {
        answers.sort_unstable();
        answers.dedup();
        Self {
            head,
            relation,
            answers,
            target_type,
        }
    }

    pub fn is_answer(&self, e: EntityId) -> bool {
        self.answers.binary_search(&e).is_ok()
    }
}

/// Groups triples into tail queries, one per triple, each carrying every
/// tail known for its `(head, relation)` among `known`.
pub fn tail_queries(triples: &[Triple], known: &[Triple], graph: &KnowledgeGraph) -> Vec<Query> {
    use std::collections::HashMap;
    let mut tails: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
    for t in known {
        tails.entry((t.head, t.relation)).or_default().push(t.tail);
    }
    triples
        .iter()
        .map(|t| {
            let mut answers = tails.get(&(t.head, t.relation)).cloned().unwrap_or_default();
            answers.push(t.tail);
            Query::new(t.head, t.relation, answers, graph.entity_type(t.tail))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Path length `T`.
    pub max_steps: usize,
    /// Weight of the metapath bonus; 0 gives the plain hit reward.
    pub lambda: f64,
    pub terminal_reward: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_steps: 3,
            lambda: 0.0,
            terminal_reward: 1.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

/// Whether direct query edges are hidden at the first step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// A finished or partial walk: the moves taken from `head`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub head: EntityId,
    pub relation: RelationId,
    pub steps: Vec<Action>,
    /// Accumulated path score; the sum of step log-probabilities for a policy walk.
    pub log_probability: f64,
}

impl Rollout {
    pub fn new(head: EntityId, relation: RelationId, steps: Vec<Action>, log_probability: f64) -> Self {
        Self {
            head,
            relation,
            steps,
            log_probability,
        }
    }

    pub fn terminal(&self) -> EntityId {
        self.steps.last().map_or(self.head, |a| a.entity)
    }

    /// Steps other than `NO_OP`.
    pub fn hops(&self) -> impl Iterator<Item = &Action> {
        self.steps.iter().filter(|a| !a.is_no_op())
    }

    /// Every step is `NO_OP` (staying put) or an edge of `graph`.
    pub fn is_valid_in(&self, graph: &KnowledgeGraph) -> bool {
        let mut at = self.head;
        for step in &self.steps {
            if !graph.has_edge(at, *step) {
                return false;
            }
            at = step.entity;
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkState<'q> {
    pub query: &'q Query,
    pub current: EntityId,
    pub step: usize,
    pub history: Vec<Action>,
}

/// Capped action lists for every entity, computed once.
#[derive(Debug, Clone)]
pub struct ActionTable {
    offsets: Vec<usize>,
    actions: Vec<Action>,
}

impl ActionTable {
    pub fn new(graph: &KnowledgeGraph, max_out: usize, seed: u64) -> Result<Self> {
        let mut offsets = Vec::with_capacity(graph.num_entities() + 1);
        let mut actions = Vec::new();
        offsets.push(0);
        for e in graph.entity_ids() {
            actions.extend(graph.out_actions(e, max_out, seed)?);
            offsets.push(actions.len());
        }
        Ok(Self { offsets, actions })
    }

    pub fn get(&self, e: EntityId) -> &[Action] {
        &self.actions[self.offsets[e.index()]..self.offsets[e.index() + 1]]
    }
}

pub struct WalkEnv<'g> {
    graph: &'g KnowledgeGraph,
    table: ActionTable,
    max_steps: usize,
    mode: Mode,
}

impl<'g> WalkEnv<'g> {
    pub fn new(graph: &'g KnowledgeGraph, max_steps: usize, max_out: usize, seed: u64, mode: Mode) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(Self {
            graph,
            table: ActionTable::new(graph, max_out, seed)?,
            max_steps,
            mode,
        })
    }

    /// Same graph and action lists, different masking mode.
    pub fn with_mode(&self, mode: Mode) -> Self {
        Self {
            graph: self.graph,
            table: self.table.clone(),
            max_steps: self.max_steps,
            mode,
        }
    }

    pub fn graph(&self) -> &'g KnowledgeGraph {
        self.graph
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn reset<'q>(&self, query: &'q Query) -> Result<WalkState<'q>> {
        if !self.graph.has_entity(query.head) {
            return Err(Error::UnknownEntity(format!("#{}", query.head.0)));
        }
        Ok(WalkState {
            query,
            current: query.head,
            step: 0,
            history: Vec::with_capacity(self.max_steps),
        })
    }

    pub fn is_terminal(&self, state: &WalkState<'_>) -> bool {
        state.step >= self.max_steps
    }

    /// Legal moves from the state's current entity. In training mode the
    /// `(query.relation, answer)` edges out of the query head are hidden so
    /// the walker cannot just read the answer off the training graph. This
    /// holds at every step, otherwise `NO_OP` followed by the direct edge
    /// would leak it anyway.
    pub fn legal_actions(&self, state: &WalkState<'_>) -> Result<Vec<Action>> {
        if self.is_terminal(state) {
            return Err(Error::TerminalState(state.step));
        }
        Ok(self.actions_at(state.current, state.query))
    }

    pub(crate) fn actions_at(&self, at: EntityId, query: &Query) -> Vec<Action> {
        let all = self.table.get(at);
        if self.mode == Mode::Train && at == query.head {
            all.iter()
                .filter(|a| !(a.relation == query.relation && query.is_answer(a.entity)))
                .copied()
                .collect()
        } else {
            all.to_vec()
        }
    }

    pub fn step<'q>(&self, state: WalkState<'q>, action_index: usize) -> Result<WalkState<'q>> {
        let legal = self.legal_actions(&state)?;
        let action = *legal.get(action_index).ok_or(Error::ActionOutOfRange {
            index: action_index,
            len: legal.len(),
        })?;
        Ok(advance(state, action))
    }
}

pub(crate) fn advance(mut state: WalkState<'_>, action: Action) -> WalkState<'_> {
    state.current = action.entity;
    state.history.push(action);
    state.step += 1;
    state
}

/// `terminal_reward * [hit] + lambda * [path follows some metapath]`.
/// The bonus is granted at most once, regardless of correctness.
pub fn terminal_reward(
    path: &Rollout,
    query: &Query,
    metapaths: &[Metapath],
    cfg: &EpisodeConfig,
    graph: &KnowledgeGraph,
) -> f64 {
    let hit = if query.is_answer(path.terminal()) {
        cfg.terminal_reward
    } else {
        0.0
    };
    let bonus = if cfg.lambda != 0.0 && metapaths.iter().any(|mp| mp.matches(path, graph)) {
        cfg.lambda
    } else {
        0.0
    };
    hit + bonus
}
