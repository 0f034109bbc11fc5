//! Per-fold plumbing shared by the command line and the tests: building fold
//! graphs, producing prediction lists with any model, and ranking them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::{beam_all, EmbeddingScorer, PolicyScorer, PredictionList};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, rank_predictions, FilterSet, FoldRanks, RankMetrics};
use crate::graph::{split_folds, DatasetSplit, KnowledgeGraph, RelationId, SplitOptions, Triple, TypeId};
use crate::kge::KgeParams;
use crate::policy::PolicyParams;
use crate::walk::{Mode, Query, WalkEnv};

/// Candidates are filtered against these target-relation triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterScope {
    /// train ∪ valid ∪ test
    #[default]
    All,
    /// train ∪ valid
    TrainValid,
}

/// Everything a model needs for one fold.
#[derive(Debug, Clone)]
pub struct Fold {
    pub split: DatasetSplit,
    /// Non-target triples plus the fold's training target triples, with inverses.
    pub graph: KnowledgeGraph,
    pub filter: FilterSet,
    pub target_type: TypeId,
}

impl Fold {
    pub fn index(&self) -> usize {
        self.split.fold_index
    }

    /// One tail query per triple, answer excluded from the query's answer set.
    pub fn queries(&self, triples: &[Triple]) -> Vec<Query> {
        triples
            .iter()
            .map(|t| Query::new(t.head, t.relation, Vec::new(), self.target_type))
            .collect()
    }
}

/// The most common tail type of `relation`.
pub fn target_type_of(graph: &KnowledgeGraph, relation: RelationId) -> Result<TypeId> {
    let mut counts = vec![0usize; graph.num_types()];
    for t in graph.triples().iter().filter(|t| t.relation == relation) {
        counts[graph.entity_type(t.tail).index()] += 1;
    }
    counts
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0)
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| TypeId(i as u32))
        .ok_or_else(|| Error::InvalidInput(format!("relation `{}` has no triples", graph.relation_name(relation))))
}

/// Splits `graph` (not augmented) on `target` and builds every fold.
pub fn prepare_folds(
    graph: &KnowledgeGraph,
    target: RelationId,
    target_type: TypeId,
    options: SplitOptions,
    scope: FilterScope,
) -> Result<Vec<Fold>> {
    split_folds(graph, target, options)?
        .into_iter()
        .map(|split| {
            let filter = match scope {
                FilterScope::All => FilterSet::new(split.all_target()),
                FilterScope::TrainValid => FilterSet::new(split.train.iter().chain(&split.valid)),
            };
            Ok(Fold {
                graph: split.training_graph(graph).augment_inverses()?,
                split,
                filter,
                target_type,
            })
        })
        .collect()
}

/// A trained model that can produce prediction lists.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    /// Policy beam search.
    Policy(&'a PolicyParams),
    /// Ranking every entity by embedding score.
    Embedding(&'a KgeParams),
    /// Beam walk scored by embedding plausibility at the frontier.
    Guided(&'a KgeParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub beam_width: usize,
    pub max_steps: usize,
    pub max_out: usize,
    pub seed: u64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            beam_width: 100,
            max_steps: 3,
            max_out: 200,
            seed: 0,
        }
    }
}

pub fn predict(
    predictor: Predictor<'_>,
    graph: &KnowledgeGraph,
    queries: &[Query],
    options: &InferenceOptions,
) -> Result<Vec<PredictionList>> {
    match predictor {
        Predictor::Embedding(p) => Ok(queries
            .par_iter()
            .map(|q| p.rank_tails(q.head, q.relation))
            .collect()),
        Predictor::Policy(p) => {
            let env = WalkEnv::new(graph, options.max_steps, options.max_out, options.seed, Mode::Eval)?;
            beam_all(&PolicyScorer { params: p }, &env, queries, options.beam_width)
        }
        Predictor::Guided(p) => {
            let env = WalkEnv::new(graph, options.max_steps, options.max_out, options.seed, Mode::Eval)?;
            beam_all(&EmbeddingScorer { params: p }, &env, queries, options.beam_width)
        }
    }
}

/// Metrics of one fold, before and after pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEvaluation {
    pub ranks: FoldRanks,
    pub unpruned: RankMetrics,
    pub pruned: RankMetrics,
}

/// Predicts and ranks the tails of `triples` in `fold`.
pub fn evaluate(
    predictor: Predictor<'_>,
    fold: &Fold,
    triples: &[Triple],
    options: &InferenceOptions,
) -> Result<(Vec<PredictionList>, FoldEvaluation)> {
    let queries = fold.queries(triples);
    let lists = predict(predictor, &fold.graph, &queries, options)?;
    let answers: Vec<_> = triples.iter().map(|t| t.tail).collect();
    let ranks = rank_predictions(&lists, &answers, fold.target_type, &fold.filter, &fold.graph)?;
    let evaluation = FoldEvaluation {
        unpruned: compute_metrics(&ranks.unpruned)?,
        pruned: compute_metrics(&ranks.pruned)?,
        ranks,
    };
    Ok((lists, evaluation))
}
