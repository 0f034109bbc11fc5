//! Deterministic beam search over walks and the resulting candidate lists.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Action, EntityId, RelationId, TypeId};
use crate::kge::KgeParams;
use crate::policy::PolicyParams;
use crate::walk::{Query, Rollout, WalkEnv};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionEntry {
    pub entity: EntityId,
    pub score: f64,
    /// The best path that reached `entity`; absent for embedding rankings.
    pub witness: Option<Rollout>,
}

/// Ranked candidate tails for one `(head, relation, ?)` query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionList {
    pub head: EntityId,
    pub relation: RelationId,
    /// Best first, at most one entry per entity.
    pub entries: Vec<PredictionEntry>,
    /// Candidate universe is the entities of this type rather than the whole graph.
    pub pruned_to: Option<TypeId>,
}

impl PredictionList {
    /// Full list from one score per entity id.
    pub fn from_scores(head: EntityId, relation: RelationId, scores: impl Iterator<Item = f64>) -> Self {
        let entries = scores
            .enumerate()
            .map(|(i, score)| PredictionEntry {
                entity: EntityId(i as u32),
                score,
                witness: None,
            })
            .collect();
        let mut list = Self {
            head,
            relation,
            entries,
            pruned_to: None,
        };
        list.sort();
        list
    }

    /// Score descending, entity id ascending on ties.
    pub fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
    }

    pub fn get(&self, e: EntityId) -> Option<&PredictionEntry> {
        self.entries.iter().find(|x| x.entity == e)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Errors if some entity is listed twice.
    pub fn check_unique(&self) -> Result<()> {
        let mut seen: Vec<EntityId> = self.entries.iter().map(|e| e.entity).collect();
        seen.sort_unstable();
        match seen.windows(2).find(|w| w[0] == w[1]) {
            Some(w) => Err(Error::DuplicatePrediction(format!("entity #{}", w[0].0))),
            None => Ok(()),
        }
    }
}

/// How a beam scores its partial paths.
pub trait PathScorer: Sync {
    /// Per-path memory, e.g. a recurrent hidden state.
    type State: Clone + Send + Sync;

    fn initial(&self, query: &Query) -> Self::State;

    /// Scores of the paths obtained by extending a partial path (ending at
    /// `at`, with score `score`) by each of `actions`. `-inf` drops a path.
    fn extend(&self, query: &Query, state: &Self::State, at: EntityId, score: f64, actions: &[Action]) -> Vec<f64>;

    /// Memory after taking `action`.
    fn advance(&self, state: &Self::State, action: Action) -> Self::State;

    /// Keep only the best partial path per frontier entity at each step.
    fn dedup_frontier(&self) -> bool {
        false
    }
}

/// Cumulative policy log-probability.
pub struct PolicyScorer<'p> {
    pub params: &'p PolicyParams,
}

impl PathScorer for PolicyScorer<'_> {
    type State = Vec<f64>;

    fn initial(&self, _query: &Query) -> Vec<f64> {
        vec![0.0; self.params.dims.hidden]
    }

    fn extend(&self, query: &Query, hidden: &Vec<f64>, at: EntityId, score: f64, actions: &[Action]) -> Vec<f64> {
        let s = self.params.state_encoding(hidden, at, query.relation);
        let dist = self.params.score_actions(&s, actions);
        dist.log_probabilities.iter().map(|lp| score + lp).collect()
    }

    fn advance(&self, hidden: &Vec<f64>, action: Action) -> Vec<f64> {
        self.params.encode_history(hidden, action)
    }
}

/// Embedding plausibility of `(head, relation, frontier)`; the graph only
/// decides what is reachable.
pub struct EmbeddingScorer<'p> {
    pub params: &'p KgeParams,
}

impl PathScorer for EmbeddingScorer<'_> {
    type State = ();

    fn initial(&self, _query: &Query) {}

    fn extend(&self, query: &Query, _: &(), _at: EntityId, _score: f64, actions: &[Action]) -> Vec<f64> {
        actions
            .iter()
            .map(|a| self.params.score(query.head, query.relation, a.entity))
            .collect()
    }

    fn advance(&self, _: &(), _: Action) {}

    fn dedup_frontier(&self) -> bool {
        true
    }
}

struct Partial<S> {
    steps: Vec<Action>,
    at: EntityId,
    score: f64,
    state: S,
}

/// Beam search of `env.max_steps()` steps keeping the `width` best partial
/// paths. Terminals are grouped by entity; each keeps its best path.
pub fn beam<S: PathScorer>(scorer: &S, env: &WalkEnv<'_>, query: &Query, width: usize) -> Result<PredictionList> {
    if width == 0 {
        return Err(Error::InvalidConfig("beam width must be at least 1".into()));
    }
    if !env.graph().has_entity(query.head) {
        return Err(Error::UnknownEntity(format!("#{}", query.head.0)));
    }
    let steps = env.max_steps();
    let mut beam = vec![Partial {
        steps: Vec::new(),
        at: query.head,
        score: 0.0,
        state: scorer.initial(query),
    }];
    for t in 0..steps {
        // (score, parent, action)
        let mut candidates: Vec<(f64, usize, Action)> = Vec::new();
        for (i, p) in beam.iter().enumerate() {
            let actions = env.actions_at(p.at, query);
            let scores = scorer.extend(query, &p.state, p.at, p.score, &actions);
            candidates.extend(
                scores
                    .into_iter()
                    .zip(actions)
                    .filter(|(s, _)| *s != f64::NEG_INFINITY)
                    .map(|(s, a)| (s, i, a)),
            );
        }
        // stable: equal scores keep parent-then-action order
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        if scorer.dedup_frontier() {
            let mut seen = std::collections::HashSet::new();
            candidates.retain(|c| seen.insert(c.2.entity));
        }
        candidates.truncate(width);
        let last = t + 1 == steps;
        beam = candidates
            .into_iter()
            .map(|(score, parent, action)| {
                let p = &beam[parent];
                let mut path = p.steps.clone();
                path.push(action);
                Partial {
                    steps: path,
                    at: action.entity,
                    score,
                    state: if last { p.state.clone() } else { scorer.advance(&p.state, action) },
                }
            })
            .collect();
    }

    let mut best: HashMap<EntityId, usize> = HashMap::new();
    for (i, p) in beam.iter().enumerate() {
        // beam is sorted, so the first path per entity is its best
        best.entry(p.at).or_insert(i);
    }
    let mut entries: Vec<PredictionEntry> = best
        .into_values()
        .map(|i| {
            let p = &beam[i];
            PredictionEntry {
                entity: p.at,
                score: p.score,
                witness: Some(Rollout::new(query.head, query.relation, p.steps.clone(), p.score)),
            }
        })
        .collect();
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.entity.cmp(&b.entity)));
    Ok(PredictionList {
        head: query.head,
        relation: query.relation,
        entries,
        pruned_to: None,
    })
}

/// Policy beam search: partial paths ranked by cumulative log-probability.
pub fn beam_search(params: &PolicyParams, env: &WalkEnv<'_>, query: &Query, width: usize) -> Result<PredictionList> {
    beam(&PolicyScorer { params }, env, query, width)
}

/// Beam guided by embedding plausibility at the frontier.
pub fn embedding_guided_walk(params: &KgeParams, env: &WalkEnv<'_>, query: &Query, width: usize) -> Result<PredictionList> {
    beam(&EmbeddingScorer { params }, env, query, width)
}

/// [`beam`] over many queries in parallel; output order follows `queries`.
pub fn beam_all<S: PathScorer>(scorer: &S, env: &WalkEnv<'_>, queries: &[Query], width: usize) -> Result<Vec<PredictionList>> {
    queries.par_iter().map(|q| beam(scorer, env, q, width)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::KnowledgeGraph;
    use crate::policy::PolicyDims;
    use crate::walk::Mode;

    fn diamond() -> KnowledgeGraph {
        let mut b = KnowledgeGraph::builder();
        for n in ["s", "a", "b", "x"] {
            b.add_entity(n, "T").unwrap();
        }
        b.add_triple("s", "r", "a").unwrap();
        b.add_triple("s", "r", "b").unwrap();
        b.add_triple("a", "r", "x").unwrap();
        b.add_triple("b", "r", "x").unwrap();
        b.build()
    }

    fn query(g: &KnowledgeGraph) -> Query {
        Query::new(g.entity("s").unwrap(), g.relation("r").unwrap(), vec![], TypeId(0))
    }

    #[test]
    fn width_one_is_greedy() {
        let g = diamond();
        let env = WalkEnv::new(&g, 2, 200, 0, Mode::Eval).unwrap();
        let p = PolicyParams::init(PolicyDims { entities: 4, relations: 2, embedding: 3, hidden: 4 }, 1);
        let list = beam_search(&p, &env, &query(&g), 1).unwrap();
        assert_eq!(list.len(), 1);
        // the greedy walk takes the argmax at each step
        let q = query(&g);
        let mut at = q.head;
        let mut hidden = vec![0.0; 4];
        for _ in 0..2 {
            let acts = env.actions_at(at, &q);
            let d = p.score_actions(&p.state_encoding(&hidden, at, q.relation), &acts);
            let best = (0..acts.len())
                .max_by(|i, j| d.probabilities[*i].total_cmp(&d.probabilities[*j]).then(j.cmp(i)))
                .unwrap();
            hidden = p.encode_history(&hidden, acts[best]);
            at = acts[best].entity;
        }
        assert_eq!(list.entries[0].entity, at);
    }

    #[test]
    fn max_dedup_keeps_best_path() {
        // fixed scorer: each action worth a preset amount
        struct Fixed;
        impl PathScorer for Fixed {
            type State = ();
            fn initial(&self, _: &Query) {}
            fn extend(&self, _: &Query, _: &(), _: EntityId, s: f64, actions: &[Action]) -> Vec<f64> {
                actions
                    .iter()
                    .map(|a| match (a.is_no_op(), a.entity.0) {
                        (true, _) => f64::NEG_INFINITY,
                        (false, 1) => s - 1.0,
                        (false, 2) => s - 0.5,
                        _ => s - 0.2,
                    })
                    .collect()
            }
            fn advance(&self, _: &(), _: Action) {}
        }
        let g = diamond();
        let env = WalkEnv::new(&g, 2, 200, 0, Mode::Eval).unwrap();
        let list = beam(&Fixed, &env, &query(&g), 10).unwrap();
        assert_eq!(list.len(), 1);
        let x = &list.entries[0];
        assert!((x.score - -0.7).abs() < 1e-12);
        assert_eq!(x.witness.as_ref().unwrap().steps[0].entity, g.entity("b").unwrap());
    }

    #[test]
    fn zero_width_rejected() {
        let g = diamond();
        let env = WalkEnv::new(&g, 2, 200, 0, Mode::Eval).unwrap();
        let p = PolicyParams::init(PolicyDims { entities: 4, relations: 2, embedding: 2, hidden: 2 }, 1);
        assert!(beam_search(&p, &env, &query(&g), 0).is_err());
    }

    #[test]
    fn duplicate_entities_detected() {
        let mut l = PredictionList::from_scores(EntityId(0), RelationId(1), [0.3, 0.2].into_iter());
        assert!(l.check_unique().is_ok());
        l.entries.push(l.entries[0].clone());
        assert!(matches!(l.check_unique(), Err(Error::DuplicatePrediction(_))));
    }
}
