//! TransE and DistMult embedding baselines.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::beam::PredictionList;
use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::tensor::{axpy, l2_norm, sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KgeKind {
    TransE,
    DistMult,
}

impl KgeKind {
    pub fn name(self) -> &'static str {
        match self {
            KgeKind::TransE => "transe",
            KgeKind::DistMult => "distmult",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeParams {
    pub kind: KgeKind,
    pub entity: Matrix,
    pub relation: Matrix,
}

impl KgeParams {
    /// TransE: uniform `±6/sqrt(d)`, unit-normalized. DistMult: uniform `±1/sqrt(d)`.
    pub fn init(kind: KgeKind, entities: usize, relations: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = match kind {
            KgeKind::TransE => 6.0 / (dim as f64).sqrt(),
            KgeKind::DistMult => 1.0 / (dim as f64).sqrt(),
        };
        let mut entity = Matrix::uniform(entities, dim, bound, &mut rng);
        let mut relation = Matrix::uniform(relations, dim, bound, &mut rng);
        if kind == KgeKind::TransE {
            for i in 0..entities {
                normalize(entity.row_mut(i));
            }
            for i in 0..relations {
                normalize(relation.row_mut(i));
            }
        }
        Self { kind, entity, relation }
    }

    pub fn dim(&self) -> usize {
        self.entity.cols()
    }

    /// Plausibility of `(h, r, t)`; higher is better for both models.
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let (eh, er, et) = (
            self.entity.row(h.index()),
            self.relation.row(r.index()),
            self.entity.row(t.index()),
        );
        match self.kind {
            KgeKind::TransE => -eh
                .iter()
                .zip(er)
                .zip(et)
                .map(|((h, r), t)| {
                    let x = h + r - t;
                    x * x
                })
                .sum::<f64>()
                .sqrt(),
            // r·(h⊙t) keeps the product exactly symmetric in h and t
            KgeKind::DistMult => eh
                .iter()
                .zip(er)
                .zip(et)
                .map(|((h, r), t)| r * (h * t))
                .sum(),
        }
    }

    /// Adds `shift` to every entity embedding.
    pub fn translate_entities(&mut self, shift: &[f64]) {
        for i in 0..self.entity.rows() {
            axpy(1.0, shift, self.entity.row_mut(i));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entity.as_slice().iter().chain(self.relation.as_slice()).all(|x| x.is_finite())
    }

    /// Every entity as a tail of `(head, relation, ?)`, best first.
    pub fn rank_tails(&self, head: EntityId, relation: RelationId) -> PredictionList {
        let scores = (0..self.entity.rows()).map(|t| self.score(head, relation, EntityId(t as u32)));
        PredictionList::from_scores(head, relation, scores)
    }

    /// Every entity as a head of `(?, relation, tail)`, best first.
    pub fn rank_heads(&self, relation: RelationId, tail: EntityId) -> Vec<(EntityId, f64)> {
        let mut out: Vec<(EntityId, f64)> = (0..self.entity.rows())
            .map(|h| {
                let h = EntityId(h as u32);
                (h, self.score(h, relation, tail))
            })
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

fn normalize(x: &mut [f64]) {
    let n = l2_norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgeTrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    pub max_steps: usize,
    /// Positives per step.
    pub batch_size: usize,
    /// TransE margin.
    pub margin: f64,
    /// Reject corrupted triples that are known training triples.
    pub filtered_negatives: bool,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for KgeTrainConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            learning_rate: 0.01,
            negatives_per_positive: 8,
            max_steps: 12_000,
            batch_size: 32,
            margin: 1.0,
            filtered_negatives: false,
            log_every: 1_000,
            seed: 0,
        }
    }
}

impl KgeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.dim == 0 {
            return bad("kge dim must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("kge learning_rate must be non-negative");
        }
        if self.negatives_per_positive == 0 || self.batch_size == 0 {
            return bad("negatives_per_positive and batch_size must be positive");
        }
        if self.log_every == 0 {
            return bad("log_every must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgeLogEntry {
    pub step: usize,
    /// Mean loss over the steps since the previous entry.
    pub loss: f64,
}

/// Draws a corrupted version of `t`: head or tail replaced with equal
/// probability. With `known`, triples in it are rejected; `None` when no
/// acceptable corruption turned up.
pub fn corrupt<R: Rng + ?Sized>(
    t: Triple,
    num_entities: usize,
    known: Option<&HashSet<Triple>>,
    rng: &mut R,
) -> Option<Triple> {
    for _ in 0..1000 {
        let e = EntityId(rng.gen_range(0..num_entities as u32));
        let c = if rng.gen_bool(0.5) {
            Triple::new(e, t.relation, t.tail)
        } else {
            Triple::new(t.head, t.relation, e)
        };
        match known {
            Some(k) if k.contains(&c) => continue,
            _ => return Some(c),
        }
    }
    None
}

/// SGD with sampled negatives over every triple of `graph`.
pub fn train_kge(
    graph: &KnowledgeGraph,
    cfg: &KgeTrainConfig,
    kind: KgeKind,
) -> Result<(KgeParams, Vec<KgeLogEntry>)> {
    cfg.validate()?;
    let triples = graph.triples();
    if triples.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut params = KgeParams::init(kind, graph.num_entities(), graph.num_relations(), cfg.dim, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6b67_6500);
    let known: Option<HashSet<Triple>> = cfg.filtered_negatives.then(|| triples.iter().copied().collect());
    let mut log = Vec::new();
    let mut window = 0.0;
    let mut window_steps = 0usize;

    for step in 0..cfg.max_steps {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        let mut grads = KgeGrads::default();
        for _ in 0..cfg.batch_size {
            let pos = triples[rng.gen_range(0..triples.len())];
            for _ in 0..cfg.negatives_per_positive {
                let Some(neg) = corrupt(pos, graph.num_entities(), known.as_ref(), &mut rng) else {
                    continue;
                };
                pairs += 1;
                loss += match kind {
                    KgeKind::TransE => transe_pair(&params, pos, neg, cfg.margin, &mut grads),
                    KgeKind::DistMult => distmult_pair(&params, pos, neg, &mut grads),
                };
            }
        }
        if pairs > 0 {
            loss /= pairs as f64;
            // mean over each positive's negatives, summed over positives
            grads.apply(&mut params, cfg.learning_rate / cfg.negatives_per_positive as f64);
        }
        if !loss.is_finite() || !params.is_finite() {
            return Err(Error::NonFinite {
                batch: step,
                detail: format!("{} loss {loss}", kind.name()),
            });
        }
        if step == 0 {
            log.push(KgeLogEntry { step, loss });
        } else {
            window += loss;
            window_steps += 1;
            if step % cfg.log_every == 0 || step + 1 == cfg.max_steps {
                log.push(KgeLogEntry {
                    step,
                    loss: window / window_steps as f64,
                });
                window = 0.0;
                window_steps = 0;
            }
        }
    }
    Ok((params, log))
}

/// Sparse row gradients, applied in insertion order.
#[derive(Default)]
struct KgeGrads {
    entity: Vec<(EntityId, Vec<f64>)>,
    relation: Vec<(RelationId, Vec<f64>)>,
}

impl KgeGrads {
    fn entity(&mut self, e: EntityId, scale: f64, g: &[f64]) {
        self.entity.push((e, g.iter().map(|x| x * scale).collect()));
    }

    fn relation(&mut self, r: RelationId, scale: f64, g: &[f64]) {
        self.relation.push((r, g.iter().map(|x| x * scale).collect()));
    }

    fn apply(self, params: &mut KgeParams, lr: f64) {
        if lr == 0.0 {
            return;
        }
        let mut touched = Vec::with_capacity(self.entity.len());
        for (e, g) in &self.entity {
            axpy(-lr, g, params.entity.row_mut(e.index()));
            touched.push(*e);
        }
        for (r, g) in &self.relation {
            axpy(-lr, g, params.relation.row_mut(r.index()));
        }
        if params.kind == KgeKind::TransE {
            touched.sort_unstable();
            touched.dedup();
            for e in touched {
                normalize(params.entity.row_mut(e.index()));
            }
        }
    }
}

/// `max(0, margin - s(pos) + s(neg))` with `s = -‖h + r - t‖`.
fn transe_pair(p: &KgeParams, pos: Triple, neg: Triple, margin: f64, grads: &mut KgeGrads) -> f64 {
    let residual = |t: Triple| -> Vec<f64> {
        let (h, r, tl) = (p.entity.row(t.head.index()), p.relation.row(t.relation.index()), p.entity.row(t.tail.index()));
        h.iter().zip(r).zip(tl).map(|((h, r), t)| h + r - t).collect()
    };
    let xp = residual(pos);
    let xn = residual(neg);
    let (dp, dn) = (l2_norm(&xp), l2_norm(&xn));
    let loss = margin + dp - dn;
    if loss <= 0.0 {
        return 0.0;
    }
    // d‖x‖/dx = x/‖x‖
    if dp > 0.0 {
        let up: Vec<f64> = xp.iter().map(|x| x / dp).collect();
        grads.entity(pos.head, 1.0, &up);
        grads.relation(pos.relation, 1.0, &up);
        grads.entity(pos.tail, -1.0, &up);
    }
    if dn > 0.0 {
        let un: Vec<f64> = xn.iter().map(|x| x / dn).collect();
        grads.entity(neg.head, -1.0, &un);
        grads.relation(neg.relation, -1.0, &un);
        grads.entity(neg.tail, 1.0, &un);
    }
    loss
}

/// `softplus(-s(pos)) + softplus(s(neg))`.
fn distmult_pair(p: &KgeParams, pos: Triple, neg: Triple, grads: &mut KgeGrads) -> f64 {
    let mut loss = 0.0;
    for (t, label) in [(pos, 1.0), (neg, -1.0)] {
        let s = p.score(t.head, t.relation, t.tail);
        let z = -label * s;
        loss += if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        // d softplus(-label·s)/ds
        let ds = -label * sigmoid(z);
        let (h, r, tl) = (
            p.entity.row(t.head.index()),
            p.relation.row(t.relation.index()),
            p.entity.row(t.tail.index()),
        );
        let gh: Vec<f64> = r.iter().zip(tl).map(|(r, t)| r * t).collect();
        let gr: Vec<f64> = h.iter().zip(tl).map(|(h, t)| h * t).collect();
        let gt: Vec<f64> = r.iter().zip(h).map(|(r, h)| r * h).collect();
        grads.entity(t.head, ds, &gh);
        grads.relation(t.relation, ds, &gr);
        grads.entity(t.tail, ds, &gt);
    }
    loss
}

/// `n` learning rates drawn log-uniformly from `[low, high]`.
pub fn sample_learning_rates(n: usize, low: f64, high: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (low.ln(), high.ln());
    (0..n).map(|_| rng.gen_range(a..=b).exp()).collect()
}
