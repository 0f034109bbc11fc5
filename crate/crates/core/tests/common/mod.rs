//! Reference implementations and random instances for the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet};

use kgpath::beam::{PredictionEntry, PredictionList};
use kgpath::graph::{Action, EntityId, KnowledgeGraph, RelationId, Triple, TypeId};
use kgpath::policy::PolicyParams;
use kgpath::walk::{Query, WalkEnv, WalkState};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct RankInstance {
    pub graph: KnowledgeGraph,
    pub list: PredictionList,
    pub answer: EntityId,
    pub filter: Vec<Triple>,
    pub target_type: TypeId,
}

/// Up to 50 entities over 1-3 types, a partial candidate list with many
/// tied scores, and a random filter around the query.
pub fn random_rank_instance<R: Rng>(rng: &mut R) -> RankInstance {
    let n = rng.gen_range(2..=50);
    let n_types = rng.gen_range(1..=3);
    let mut b = KnowledgeGraph::builder();
    for i in 0..n {
        b.add_entity(&format!("e{i}"), &format!("T{}", rng.gen_range(0..n_types))).unwrap();
    }
    b.add_relation("r").unwrap();
    let graph = b.build();
    let head = EntityId(rng.gen_range(0..n as u32));
    let relation = graph.relation("r").unwrap();

    let mut ids: Vec<EntityId> = graph.entity_ids().collect();
    ids.shuffle(rng);
    let listed = rng.gen_range(0..=n);
    let entries = ids[..listed]
        .iter()
        .map(|&entity| PredictionEntry {
            entity,
            // coarse grid so ties are common
            score: -(rng.gen_range(0..8) as f64) * 0.5,
            witness: None,
        })
        .collect();
    let mut list = PredictionList {
        head,
        relation,
        entries,
        pruned_to: None,
    };
    list.sort();

    let answer = EntityId(rng.gen_range(0..n as u32));
    let filter = graph
        .entity_ids()
        .filter(|_| rng.gen_bool(0.3))
        .map(|t| Triple::new(head, relation, t))
        .collect();
    let target_type = graph.entity_type(EntityId(rng.gen_range(0..n as u32)));
    if rng.gen_bool(0.5) {
        list.pruned_to = Some(target_type);
        list.entries.retain(|e| graph.entity_type(e.entity) == target_type);
    }
    RankInstance {
        graph,
        list,
        answer,
        filter,
        target_type,
    }
}

/// Full score list over the candidate universe (unlisted entities score
/// `-inf`), filtered entities deleted, sorted with the answer placed last
/// among its ties, then a linear scan for the answer.
pub fn brute_rank(list: &PredictionList, answer: EntityId, filter: &[Triple], graph: &KnowledgeGraph) -> usize {
    let filtered: HashSet<EntityId> = filter
        .iter()
        .filter(|t| t.head == list.head && t.relation == list.relation)
        .map(|t| t.tail)
        .collect();
    let listed: BTreeMap<EntityId, f64> = list.entries.iter().map(|e| (e.entity, e.score)).collect();
    let mut full: Vec<(EntityId, f64)> = graph
        .entity_ids()
        .filter(|e| list.pruned_to.map_or(true, |t| graph.entity_type(*e) == t) || *e == answer)
        .filter(|e| *e == answer || !filtered.contains(e))
        .map(|e| (e, listed.get(&e).copied().unwrap_or(f64::NEG_INFINITY)))
        .collect();
    full.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then((a.0 == answer).cmp(&(b.0 == answer)))
    });
    full.iter().position(|(e, _)| *e == answer).unwrap() + 1
}

/// `[hits@1, hits@3, hits@10, mrr]` by direct counting.
pub fn brute_metrics(ranks: &[usize]) -> [f64; 4] {
    let n = ranks.len() as f64;
    let mut out = [0.0; 4];
    for (slot, k) in [1, 3, 10].into_iter().enumerate() {
        let mut c = 0usize;
        for r in ranks {
            if *r <= k {
                c += 1;
            }
        }
        out[slot] = c as f64 / n;
    }
    let mut s = 0.0;
    for r in ranks {
        s += 1.0 / *r as f64;
    }
    out[3] = s / n;
    out
}

/// Every complete walk of `env.max_steps()` moves, via the public step API.
pub fn enumerate_walks<'q>(env: &WalkEnv<'_>, query: &'q Query) -> Vec<WalkState<'q>> {
    fn go<'q>(env: &WalkEnv<'_>, state: WalkState<'q>, out: &mut Vec<WalkState<'q>>) {
        if env.is_terminal(&state) {
            out.push(state);
            return;
        }
        let n = env.legal_actions(&state).unwrap().len();
        for i in 0..n {
            go(env, env.step(state.clone(), i).unwrap(), out);
        }
    }
    let mut out = Vec::new();
    go(env, env.reset(query).unwrap(), &mut out);
    out
}

/// Cumulative log-probability of `steps` under `params`, summed in order.
pub fn path_log_probability(params: &PolicyParams, env: &WalkEnv<'_>, query: &Query, steps: &[Action]) -> f64 {
    let mut state = env.reset(query).unwrap();
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut score = 0.0;
    for a in steps {
        let actions = env.legal_actions(&state).unwrap();
        let i = actions.iter().position(|x| x == a).unwrap();
        let s = params.state_encoding(&hidden, state.current, query.relation);
        let dist = params.score_actions(&s, &actions);
        score += dist.log_probabilities[i];
        hidden = params.encode_history(&hidden, *a);
        state = env.step(state, i).unwrap();
    }
    score
}

/// Best score per terminal entity over all walks.
pub fn exhaustive_best(params: &PolicyParams, env: &WalkEnv<'_>, query: &Query) -> BTreeMap<EntityId, f64> {
    let mut best: BTreeMap<EntityId, f64> = BTreeMap::new();
    for w in enumerate_walks(env, query) {
        let s = path_log_probability(params, env, query, &w.history);
        let slot = best.entry(w.current).or_insert(f64::NEG_INFINITY);
        if s > *slot {
            *slot = s;
        }
    }
    best
}

/// Entities within `hops` edges of `from`, including `from`.
pub fn bfs_within(graph: &KnowledgeGraph, from: EntityId, hops: usize) -> BTreeSet<EntityId> {
    let mut seen = BTreeSet::from([from]);
    let mut frontier = vec![from];
    for _ in 0..hops {
        let mut next = Vec::new();
        for e in frontier {
            for t in graph.triples().iter().filter(|t| t.head == e) {
                if seen.insert(t.tail) {
                    next.push(t.tail);
                }
            }
        }
        frontier = next;
    }
    seen
}

pub fn relation(graph: &KnowledgeGraph, name: &str) -> RelationId {
    graph.relation(name).unwrap()
}
