//! Filtered, tail-sided ranking metrics.
//!
//! Ties are broken pessimistically. Entities missing from a prediction list
//! count as failed walks: they rank behind every listed candidate and
//! pessimistically among themselves.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::beam::PredictionList;
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple, TypeId};

/// Known true tails per `(head, relation)`.
#[derive(Debug, Clone, Default)]
pub struct FilterSet {
    known: HashMap<(EntityId, RelationId), HashSet<EntityId>>,
}

impl FilterSet {
    pub fn new<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut known: HashMap<_, HashSet<_>> = HashMap::new();
        for t in triples {
            known.entry((t.head, t.relation)).or_default().insert(t.tail);
        }
        Self { known }
    }

    /// No filtering at all.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_known(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.known
            .get(&(head, relation))
            .is_some_and(|s| s.contains(&tail))
    }
}

/// Keeps entries of `target_type` and shrinks the candidate universe to it.
pub fn prune_by_type(predictions: &PredictionList, target_type: TypeId, graph: &KnowledgeGraph) -> PredictionList {
    PredictionList {
        head: predictions.head,
        relation: predictions.relation,
        entries: predictions
            .entries
            .iter()
            .filter(|e| graph.entity_type(e.entity) == target_type)
            .cloned()
            .collect(),
        pruned_to: Some(target_type),
    }
}

/// Filtered rank of `answer`: known-true tails other than the answer are
/// removed first.
pub fn filtered_rank(
    predictions: &PredictionList,
    answer: EntityId,
    filter: &FilterSet,
    graph: &KnowledgeGraph,
) -> Result<usize> {
    if !graph.has_entity(answer) {
        return Err(Error::UnknownEntity(format!("#{}", answer.0)));
    }
    predictions.check_unique()?;
    let in_universe = |e: EntityId| predictions.pruned_to.map_or(true, |t| graph.entity_type(e) == t);
    let competes = |e: EntityId| {
        e != answer && in_universe(e) && !filter.is_known(predictions.head, predictions.relation, e)
    };

    if let Some(hit) = predictions.get(answer) {
        let ahead = predictions
            .entries
            .iter()
            .filter(|e| competes(e.entity) && e.score >= hit.score)
            .count();
        return Ok(1 + ahead);
    }
    let universe: Box<dyn Iterator<Item = EntityId>> = match predictions.pruned_to {
        Some(t) => Box::new(graph.entities_of_type(t)),
        None => Box::new(graph.entity_ids()),
    };
    // the answer sits last among every unfiltered candidate
    Ok(1 + universe.filter(|e| competes(*e)).count())
}

/// HITS@{1,3,10} and MRR over one set of ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mrr: f64,
    pub queries: usize,
}

impl RankMetrics {
    pub const NAMES: [&'static str; 4] = ["HITS@1", "HITS@3", "HITS@10", "MRR"];

    pub fn values(&self) -> [f64; 4] {
        [self.hits1, self.hits3, self.hits10, self.mrr]
    }
}

pub fn compute_metrics(ranks: &[usize]) -> Result<RankMetrics> {
    if ranks.is_empty() {
        return Err(Error::InvalidInput("no ranks to summarize".into()));
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidInput("ranks start at 1".into()));
    }
    let n = ranks.len() as f64;
    let hits = |k: usize| ranks.iter().filter(|r| **r <= k).count() as f64 / n;
    Ok(RankMetrics {
        hits1: hits(1),
        hits3: hits(3),
        hits10: hits(10),
        mrr: ranks.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n,
        queries: ranks.len(),
    })
}

/// Mean and standard error (sample std / √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub standard_error: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self {
            mean,
            standard_error: (var / n).sqrt(),
        }
    }
}

/// `.463±.041`
impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let strip = |v: f64| {
            let s = format!("{v:.3}");
            match s.strip_prefix("0.") {
                Some(rest) => format!(".{rest}"),
                None => s,
            }
        };
        write!(f, "{}±{}", strip(self.mean), strip(self.standard_error))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub per_fold: Vec<RankMetrics>,
    pub hits1: Summary,
    pub hits3: Summary,
    pub hits10: Summary,
    pub mrr: Summary,
}

impl AggregateMetrics {
    pub fn summaries(&self) -> [Summary; 4] {
        [self.hits1, self.hits3, self.hits10, self.mrr]
    }
}

pub fn aggregate_folds(per_fold: &[RankMetrics]) -> Result<AggregateMetrics> {
    if per_fold.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 folds to aggregate, got {}",
            per_fold.len()
        )));
    }
    let pick = |f: fn(&RankMetrics) -> f64| Summary::of(&per_fold.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateMetrics {
        per_fold: per_fold.to_vec(),
        hits1: pick(|m| m.hits1),
        hits3: pick(|m| m.hits3),
        hits10: pick(|m| m.hits10),
        mrr: pick(|m| m.mrr),
    })
}

/// Ranks of one fold before and after type pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRanks {
    pub unpruned: Vec<usize>,
    pub pruned: Vec<usize>,
}

/// Ranks every `(list, answer)` pair with and without pruning to `target_type`.
pub fn rank_predictions(
    lists: &[PredictionList],
    answers: &[EntityId],
    target_type: TypeId,
    filter: &FilterSet,
    graph: &KnowledgeGraph,
) -> Result<FoldRanks> {
    if lists.len() != answers.len() {
        return Err(Error::InvalidInput(format!(
            "{} prediction lists for {} answers",
            lists.len(),
            answers.len()
        )));
    }
    let mut out = FoldRanks {
        unpruned: Vec::with_capacity(lists.len()),
        pruned: Vec::with_capacity(lists.len()),
    };
    for (list, answer) in lists.iter().zip(answers) {
        out.unpruned.push(filtered_rank(list, *answer, filter, graph)?);
        let pruned = prune_by_type(list, target_type, graph);
        out.pruned.push(filtered_rank(&pruned, *answer, filter, graph)?);
    }
    Ok(out)
}
