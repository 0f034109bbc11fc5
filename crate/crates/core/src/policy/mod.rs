//! Stochastic walking policy.
//!
//! A single-layer GRU summarizes the moves taken so far. The state
//! encoding `[hidden; current entity; query relation]` goes through a
//! two-layer tanh network to an output vector `o`; each candidate move
//! `[relation; tail]` is projected to a key `P·[r; e]` and scored by
//! `o · key`. A softmax over the legal moves gives the distribution.
//!
//! Gradients of the REINFORCE-with-entropy loss are derived by hand in
//! [`grad`], there is no autodiff.

mod grad;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Action, EntityId, RelationId};
use crate::tensor::{dot, log_sum_exp, sigmoid, Matrix};
use crate::walk::Rollout;

pub use grad::{accumulate_gradients, episode_loss, gru_backward, policy_gradients};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDims {
    pub entities: usize,
    /// Including `NO_OP` and inverse relations.
    pub relations: usize,
    pub embedding: usize,
    pub hidden: usize,
}

impl PolicyDims {
    fn state_len(&self) -> usize {
        self.hidden + 2 * self.embedding
    }
}

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub dims: PolicyDims,
    pub entity: Matrix,
    pub relation: Matrix,
    /// Input weights of the update, reset and candidate gates, stacked (3H × 2d).
    pub gru_wx: Matrix,
    /// Recurrent weights, same gate order (3H × H).
    pub gru_wh: Matrix,
    pub gru_bx: Matrix,
    pub gru_bh: Matrix,
    /// Scorer hidden layer (H × (H + 2d)).
    pub mlp_w1: Matrix,
    pub mlp_b1: Matrix,
    /// Scorer output layer (d × H).
    pub mlp_w2: Matrix,
    pub mlp_b2: Matrix,
    /// Action key projection (d × 2d).
    pub action_proj: Matrix,
}

pub const PARAM_GROUPS: [&str; 11] = [
    "entity",
    "relation",
    "gru_wx",
    "gru_wh",
    "gru_bx",
    "gru_bh",
    "mlp_w1",
    "mlp_b1",
    "mlp_w2",
    "mlp_b2",
    "action_proj",
];

impl PolicyParams {
    pub fn zeros(dims: PolicyDims) -> Self {
        let (d, h) = (dims.embedding, dims.hidden);
        Self {
            dims,
            entity: Matrix::zeros(dims.entities, d),
            relation: Matrix::zeros(dims.relations, d),
            gru_wx: Matrix::zeros(3 * h, 2 * d),
            gru_wh: Matrix::zeros(3 * h, h),
            gru_bx: Matrix::zeros(1, 3 * h),
            gru_bh: Matrix::zeros(1, 3 * h),
            mlp_w1: Matrix::zeros(h, dims.state_len()),
            mlp_b1: Matrix::zeros(1, h),
            mlp_w2: Matrix::zeros(d, h),
            mlp_b2: Matrix::zeros(1, d),
            action_proj: Matrix::zeros(d, 2 * d),
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weights, embeddings `±1/sqrt(d)`, zero
    /// biases except the GRU update gate, which starts at 1.
    pub fn init(dims: PolicyDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, h) = (dims.embedding, dims.hidden);
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let mut gru_bx = Matrix::zeros(1, 3 * h);
        gru_bx.as_mut_slice()[..h].fill(1.0);
        Self {
            dims,
            entity: Matrix::uniform(dims.entities, d, bound(d), &mut rng),
            relation: Matrix::uniform(dims.relations, d, bound(d), &mut rng),
            gru_wx: Matrix::uniform(3 * h, 2 * d, bound(2 * d), &mut rng),
            gru_wh: Matrix::uniform(3 * h, h, bound(h), &mut rng),
            gru_bx,
            gru_bh: Matrix::zeros(1, 3 * h),
            mlp_w1: Matrix::uniform(h, dims.state_len(), bound(dims.state_len()), &mut rng),
            mlp_b1: Matrix::zeros(1, h),
            mlp_w2: Matrix::uniform(d, h, bound(h), &mut rng),
            mlp_b2: Matrix::zeros(1, d),
            action_proj: Matrix::uniform(d, 2 * d, bound(2 * d), &mut rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims)
    }

    /// Parameter groups in [`PARAM_GROUPS`] order.
    pub fn groups(&self) -> [&Matrix; 11] {
        [
            &self.entity,
            &self.relation,
            &self.gru_wx,
            &self.gru_wh,
            &self.gru_bx,
            &self.gru_bh,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
            &self.action_proj,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Matrix; 11] {
        [
            &mut self.entity,
            &mut self.relation,
            &mut self.gru_wx,
            &mut self.gru_wh,
            &mut self.gru_bx,
            &mut self.gru_bh,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
            &mut self.action_proj,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.groups().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn add_assign(&mut self, other: &PolicyParams) {
        for (a, b) in self.groups_mut().into_iter().zip(other.groups()) {
            for (x, y) in a.as_mut_slice().iter_mut().zip(b.as_slice()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.groups_mut() {
            m.as_mut_slice().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|m| m.as_slice().iter().all(|x| x.is_finite()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|m| m.as_slice())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// `[hidden; entity(current); relation(query)]`
    pub fn state_encoding(&self, hidden: &[f64], current: EntityId, query: RelationId) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.dims.state_len());
        s.extend_from_slice(hidden);
        s.extend_from_slice(self.entity.row(current.index()));
        s.extend_from_slice(self.relation.row(query.index()));
        s
    }

    /// One GRU update on the move just taken.
    pub fn encode_history(&self, prev_hidden: &[f64], action: Action) -> Vec<f64> {
        self.gru_forward(prev_hidden, action).next
    }

    pub(crate) fn gru_forward(&self, prev: &[f64], action: Action) -> GruCache {
        let h = self.dims.hidden;
        let mut x = Vec::with_capacity(2 * self.dims.embedding);
        x.extend_from_slice(self.relation.row(action.relation.index()));
        x.extend_from_slice(self.entity.row(action.entity.index()));

        let mut ax = self.gru_bx.as_slice().to_vec();
        self.gru_wx.gemv(&x, &mut ax);
        let mut ah = self.gru_bh.as_slice().to_vec();
        self.gru_wh.gemv(prev, &mut ah);

        let mut z = vec![0.0; h];
        let mut r = vec![0.0; h];
        let mut n = vec![0.0; h];
        let mut next = vec![0.0; h];
        for i in 0..h {
            z[i] = sigmoid(ax[i] + ah[i]);
            r[i] = sigmoid(ax[h + i] + ah[h + i]);
            n[i] = (ax[2 * h + i] + r[i] * ah[2 * h + i]).tanh();
            next[i] = (1.0 - z[i]) * n[i] + z[i] * prev[i];
        }
        GruCache {
            prev: prev.to_vec(),
            action,
            x,
            z,
            r,
            hn: ah[2 * h..].to_vec(),
            n,
            next,
        }
    }

    /// Softmax over `actions` given a state encoding.
    pub fn score_actions(&self, state: &[f64], actions: &[Action]) -> ActionDistribution {
        self.score_forward(state, actions).1
    }

    pub(crate) fn score_forward(&self, state: &[f64], actions: &[Action]) -> (ScoreCache, ActionDistribution) {
        let d = self.dims.embedding;
        let mut u = self.mlp_b1.as_slice().to_vec();
        self.mlp_w1.gemv(state, &mut u);
        u.iter_mut().for_each(|x| *x = x.tanh());
        let mut o = self.mlp_b2.as_slice().to_vec();
        self.mlp_w2.gemv(&u, &mut o);
        let mut v = vec![0.0; 2 * d];
        self.action_proj.gemv_t(&o, &mut v);
        let (v_rel, v_ent) = v.split_at(d);
        let logits: Vec<f64> = actions
            .iter()
            .map(|a| {
                dot(v_rel, self.relation.row(a.relation.index()))
                    + dot(v_ent, self.entity.row(a.entity.index()))
            })
            .collect();
        let dist = ActionDistribution::from_logits(&logits);
        (
            ScoreCache {
                state: state.to_vec(),
                u,
                o,
                v,
            },
            dist,
        )
    }
}

pub(crate) struct GruCache {
    pub prev: Vec<f64>,
    pub action: Action,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    /// Recurrent pre-activation of the candidate gate, `Wh_n h + bh_n`.
    pub hn: Vec<f64>,
    pub n: Vec<f64>,
    pub next: Vec<f64>,
}

pub(crate) struct ScoreCache {
    pub state: Vec<f64>,
    pub u: Vec<f64>,
    pub o: Vec<f64>,
    pub v: Vec<f64>,
}

/// Probabilities over a legal-action list, index-aligned with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probabilities: Vec<f64>,
    pub log_probabilities: Vec<f64>,
}

impl ActionDistribution {
    pub fn from_logits(logits: &[f64]) -> Self {
        let lse = log_sum_exp(logits);
        let log_probabilities: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let probabilities = log_probabilities.iter().map(|l| l.exp()).collect();
        Self {
            probabilities,
            log_probabilities,
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self
            .probabilities
            .iter()
            .zip(&self.log_probabilities)
            .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
            .sum::<f64>()
    }
}

/// Inverse-CDF draw; returns the index and its log-probability.
pub fn sample_action<R: Rng + ?Sized>(dist: &ActionDistribution, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in dist.probabilities.iter().enumerate() {
        if *p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return (i, dist.log_probabilities[i]);
        }
    }
    // rounding left `acc` just below 1
    (last_positive, dist.log_probabilities[last_positive])
}

/// One decision of a recorded episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    pub actions: Vec<Action>,
    pub chosen: usize,
    pub distribution: ActionDistribution,
}

/// A sampled walk together with the distributions it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub rollout: Rollout,
    pub steps: Vec<EpisodeStep>,
}

impl Episode {
    pub fn mean_entropy(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps
            .iter()
            .map(|s| s.distribution.entropy())
            .sum::<f64>()
            / self.steps.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityId, RelationId};

    fn dims() -> PolicyDims {
        PolicyDims {
            entities: 6,
            relations: 4,
            embedding: 3,
            hidden: 4,
        }
    }

    #[test]
    fn zero_weights_keep_zero_hidden() {
        let p = PolicyParams::zeros(dims());
        let h = p.encode_history(&[0.0; 4], Action::new(RelationId(1), EntityId(2)));
        assert_eq!(h, vec![0.0; 4]);
    }

    #[test]
    fn encode_history_is_pure() {
        let p = PolicyParams::init(dims(), 3);
        let a = Action::new(RelationId(2), EntityId(4));
        let prev = [0.1, -0.2, 0.3, 0.0];
        assert_eq!(p.encode_history(&prev, a), p.encode_history(&prev, a));
    }

    #[test]
    fn singleton_and_symmetric_distributions() {
        let p = PolicyParams::init(dims(), 1);
        let s = p.state_encoding(&[0.0; 4], EntityId(0), RelationId(1));
        let one = p.score_actions(&s, &[Action::new(RelationId(1), EntityId(3))]);
        assert_eq!(one.probabilities, vec![1.0]);
        let a = Action::new(RelationId(2), EntityId(5));
        let two = p.score_actions(&s, &[a, a]);
        assert_eq!(two.probabilities[0], two.probabilities[1]);
        assert!((two.probabilities[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let logits = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = logits.iter().map(|l| l + 17.25).collect();
        let a = ActionDistribution::from_logits(&logits);
        let b = ActionDistribution::from_logits(&shifted);
        for (x, y) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_certain_and_reproducible() {
        let certain = ActionDistribution::from_logits(&[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_action(&certain, &mut rng).0, 0);
        }
        let dist = ActionDistribution::from_logits(&[0.1, 0.5, -0.3]);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_action(&dist, &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn sampling_frequencies_match() {
        let dist = ActionDistribution {
            probabilities: vec![0.3, 0.7],
            log_probabilities: vec![0.3f64.ln(), 0.7f64.ln()],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let zeros = (0..n).filter(|_| sample_action(&dist, &mut rng).0 == 0).count();
        let freq = zeros as f64 / n as f64;
        assert!((freq - 0.3).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn entropy_of_uniform() {
        let d = ActionDistribution::from_logits(&[0.0; 4]);
        assert!((d.entropy() - 4f64.ln()).abs() < 1e-12);
    }
}
