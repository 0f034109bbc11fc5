use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, RelationId, Triple};
use crate::error::{Error, Result};

/// One cross-validation fold over the triples of a target relation.
///
/// `train`, `valid` and `test` only hold target-relation triples; every
/// other relation's triples belong to training implicitly and are added
/// back by [`DatasetSplit::training_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Triple>,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub target_relation: RelationId,
    pub fold_index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub folds: usize,
    /// Fraction of the non-test target triples used for training.
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            train_ratio: 0.8,
            seed: 0,
        }
    }
}

impl DatasetSplit {
    /// The graph the models of this fold may see: all non-target triples
    /// plus the training target triples. Not augmented.
    pub fn training_graph(&self, graph: &KnowledgeGraph) -> KnowledgeGraph {
        let others = graph
            .triples()
            .iter()
            .filter(|t| t.relation != self.target_relation)
            .copied();
        graph.with_triples(others.chain(self.train.iter().copied()))
    }

    /// All target triples of the fold.
    pub fn all_target(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Seeded k-fold split of the `target` relation's triples.
///
/// Each target triple is in exactly one fold's test set. Within a fold the
/// remaining triples are shuffled again and split into train and valid by
/// `train_ratio`.
pub fn split_folds(
    graph: &KnowledgeGraph,
    target: RelationId,
    options: SplitOptions,
) -> Result<Vec<DatasetSplit>> {
    let SplitOptions {
        folds,
        train_ratio,
        seed,
    } = options;
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if !(0.0..=1.0).contains(&train_ratio) {
        return Err(Error::InvalidConfig(format!(
            "train ratio {train_ratio} outside [0, 1]"
        )));
    }
    let mut targets: Vec<Triple> = graph
        .triples()
        .iter()
        .filter(|t| t.relation == target)
        .copied()
        .collect();
    if targets.len() < folds {
        return Err(Error::TooFewTriples {
            needed: folds,
            found: targets.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    targets.shuffle(&mut rng);

    let n = targets.len();
    let base = n / folds;
    let extra = n % folds;
    let mut bounds = Vec::with_capacity(folds + 1);
    bounds.push(0);
    for i in 0..folds {
        let size = base + usize::from(i < extra);
        bounds.push(bounds[i] + size);
    }

    let splits = (0..folds)
        .map(|i| {
            let (lo, hi) = (bounds[i], bounds[i + 1]);
            let mut test = targets[lo..hi].to_vec();
            let mut rest: Vec<Triple> = targets[..lo]
                .iter()
                .chain(&targets[hi..])
                .copied()
                .collect();
            let mut fold_rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_add(1 + i as u64).rotate_left(17));
            rest.shuffle(&mut fold_rng);
            let n_train = (rest.len() as f64 * train_ratio).floor() as usize;
            let mut valid = rest.split_off(n_train);
            let mut train = rest;
            train.sort_unstable();
            valid.sort_unstable();
            test.sort_unstable();
            DatasetSplit {
                train,
                valid,
                test,
                target_relation: target,
                fold_index: i,
                seed,
            }
        })
        .collect();
    Ok(splits)
}
