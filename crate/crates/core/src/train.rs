//! REINFORCE training of the walking policy.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};
use crate::metapath::Metapath;
use crate::optim::Adam;
use crate::policy::{accumulate_gradients, sample_action, Episode, EpisodeStep, PolicyDims, PolicyParams};
use crate::walk::{advance, tail_queries, terminal_reward, EpisodeConfig, Mode, Query, Rollout, WalkEnv};

/// Episodes per gradient-reduction chunk. Fixed so the summation order, and
/// therefore the result, does not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    /// Metapath bonus weight; 0 is MINERVA, positive is PoLo.
    pub lambda: f64,
    /// Entropy weight at the first batch.
    pub beta: f64,
    pub beta_decay: f64,
    pub beta_floor: f64,
    pub rollouts_per_query: usize,
    /// Queries per batch.
    pub batch_size: usize,
    pub total_batches: usize,
    pub baseline_momentum: f64,
    /// Gradient L2 norm cap; 0 disables clipping.
    pub grad_clip: f64,
    pub max_steps: usize,
    pub max_out: usize,
    pub terminal_reward: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 128,
            hidden_dim: 256,
            learning_rate: 0.001,
            lambda: 0.0,
            beta: 0.1,
            beta_decay: 0.99,
            beta_floor: 0.001,
            rollouts_per_query: 20,
            batch_size: 128,
            total_batches: 2000,
            baseline_momentum: 0.9,
            grad_clip: 5.0,
            max_steps: 3,
            max_out: 200,
            terminal_reward: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return bad("embedding_dim and hidden_dim must be positive");
        }
        if !(self.learning_rate >= 0.0) {
            return bad("learning_rate must be non-negative");
        }
        if self.rollouts_per_query == 0 || self.batch_size == 0 {
            return bad("rollouts_per_query and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.baseline_momentum) {
            return bad("baseline_momentum must lie in [0, 1)");
        }
        if !(self.beta >= 0.0 && self.beta_floor >= 0.0 && self.beta_decay > 0.0) {
            return bad("beta, beta_floor and beta_decay must be non-negative");
        }
        if !(self.grad_clip >= 0.0) {
            return bad("grad_clip must be non-negative");
        }
        self.episode().validate()
    }

    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig {
            max_steps: self.max_steps,
            lambda: self.lambda,
            terminal_reward: self.terminal_reward,
        }
    }

    pub fn policy_dims(&self, graph: &KnowledgeGraph) -> PolicyDims {
        PolicyDims {
            entities: graph.num_entities(),
            relations: graph.num_relations(),
            embedding: self.embedding_dim,
            hidden: self.hidden_dim,
        }
    }

    /// Field values in declaration order, the key for tie-breaking.
    fn sort_key(&self) -> [f64; 16] {
        [
            self.embedding_dim as f64,
            self.hidden_dim as f64,
            self.learning_rate,
            self.lambda,
            self.beta,
            self.beta_decay,
            self.beta_floor,
            self.rollouts_per_query as f64,
            self.batch_size as f64,
            self.total_batches as f64,
            self.baseline_momentum,
            self.grad_clip,
            self.max_steps as f64,
            self.max_out as f64,
            self.terminal_reward,
            self.seed as f64,
        ]
    }

    pub fn lexicographic_cmp(&self, other: &Self) -> Ordering {
        self.sort_key()
            .iter()
            .zip(other.sort_key().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub value: f64,
    pub momentum: f64,
}

/// `b ← μ·b + (1−μ)·mean`
pub fn update_baseline(state: BaselineState, batch_mean_reward: f64) -> BaselineState {
    BaselineState {
        value: state.momentum * state.value + (1.0 - state.momentum) * batch_mean_reward,
        momentum: state.momentum,
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub mean_reward: f64,
    pub hit_rate: f64,
    pub entropy: f64,
    pub beta: f64,
    pub metapath_rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub log: Vec<BatchLog>,
}

impl TrainOutcome {
    /// Fraction of metapath-matching rollouts over the whole run.
    pub fn metapath_frequency(&self) -> f64 {
        if self.log.is_empty() {
            return 0.0;
        }
        // every batch holds the same number of rollouts
        self.log.iter().map(|b| b.metapath_rate).sum::<f64>() / self.log.len() as f64
    }
}

/// Samples one walk of `env.max_steps()` moves from the policy.
pub fn run_episode<R: Rng + ?Sized>(params: &PolicyParams, env: &WalkEnv<'_>, query: &Query, rng: &mut R) -> Result<Episode> {
    let mut state = env.reset(query)?;
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut steps = Vec::with_capacity(env.max_steps());
    let mut log_probability = 0.0;
    while !env.is_terminal(&state) {
        let actions = env.actions_at(state.current, query);
        let s = params.state_encoding(&hidden, state.current, query.relation);
        let distribution = params.score_actions(&s, &actions);
        let (chosen, lp) = sample_action(&distribution, rng);
        let action = actions[chosen];
        log_probability += lp;
        if state.step + 1 < env.max_steps() {
            hidden = params.encode_history(&hidden, action);
        }
        state = advance(state, action);
        steps.push(EpisodeStep {
            actions,
            chosen,
            distribution,
        });
    }
    Ok(Episode {
        rollout: Rollout::new(query.head, query.relation, state.history, log_probability),
        steps,
    })
}

#[derive(Default)]
struct ChunkStats {
    reward: f64,
    hits: usize,
    matches: usize,
    entropy: f64,
    loss: f64,
}

/// Trains a fresh policy on `train_triples` walking `graph`, the augmented
/// training graph. One tail query per training triple.
pub fn train(
    graph: &KnowledgeGraph,
    train_triples: &[Triple],
    metapaths: &[Metapath],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(graph, train_triples, metapaths, cfg, |_| {})
}

/// [`train`] with a callback after every batch.
pub fn train_with(
    graph: &KnowledgeGraph,
    train_triples: &[Triple],
    metapaths: &[Metapath],
    cfg: &TrainConfig,
    mut on_batch: impl FnMut(&BatchLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_triples.is_empty() {
        return Err(Error::InvalidInput("no training triples".into()));
    }
    let queries = tail_queries(train_triples, train_triples, graph);
    let env = WalkEnv::new(graph, cfg.max_steps, cfg.max_out, cfg.seed, Mode::Train)?;
    let episode_cfg = cfg.episode();
    let mut params = PolicyParams::init(cfg.policy_dims(graph), cfg.seed);
    let mut adam = Adam::new(&params, cfg.learning_rate);
    let mut baseline = BaselineState {
        value: 0.0,
        momentum: cfg.baseline_momentum,
    };
    let mut beta = cfg.beta;
    let mut sampler = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7175_6572_7921);
    let per_batch = cfg.batch_size * cfg.rollouts_per_query;
    let mut log = Vec::with_capacity(cfg.total_batches);

    for batch in 0..cfg.total_batches {
        let picked: Vec<usize> = (0..cfg.batch_size)
            .map(|_| sampler.gen_range(0..queries.len()))
            .collect();
        let first_episode = (batch * per_batch) as u64;
        let b = baseline.value;
        let scale = 1.0 / per_batch as f64;

        let chunks: Vec<Result<(PolicyParams, ChunkStats)>> = (0..per_batch)
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut grads = params.zeros_like();
                let mut stats = ChunkStats::default();
                for &i in idx {
                    let query = &queries[picked[i / cfg.rollouts_per_query]];
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (first_episode + i as u64));
                    let episode = run_episode(&params, &env, query, &mut rng)?;
                    let reward = terminal_reward(&episode.rollout, query, metapaths, &episode_cfg, graph);
                    stats.reward += reward;
                    stats.hits += usize::from(query.is_answer(episode.rollout.terminal()));
                    stats.matches += usize::from(metapaths.iter().any(|m| m.matches(&episode.rollout, graph)));
                    stats.entropy += episode.mean_entropy();
                    stats.loss += accumulate_gradients(&params, &episode, reward - b, beta, &mut grads);
                }
                Ok((grads, stats))
            })
            .collect();

        let mut grads = params.zeros_like();
        let mut total = ChunkStats::default();
        for chunk in chunks {
            let (g, s) = chunk?;
            grads.add_assign(&g);
            total.reward += s.reward;
            total.hits += s.hits;
            total.matches += s.matches;
            total.entropy += s.entropy;
            total.loss += s.loss;
        }
        grads.scale(scale);
        let loss = total.loss * scale;
        let norm = grads.l2_norm();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::NonFinite {
                batch,
                detail: format!("loss {loss}, gradient norm {norm}"),
            });
        }
        if cfg.grad_clip > 0.0 && norm > cfg.grad_clip {
            grads.scale(cfg.grad_clip / norm);
        }
        adam.step(&mut params, &grads);
        if !params.is_finite() {
            return Err(Error::NonFinite {
                batch,
                detail: "parameters after update".into(),
            });
        }

        let n = per_batch as f64;
        let entry = BatchLog {
            batch,
            mean_reward: total.reward / n,
            hit_rate: total.hits as f64 / n,
            entropy: total.entropy / n,
            beta,
            metapath_rate: total.matches as f64 / n,
            loss,
        };
        on_batch(&entry);
        log.push(entry);
        baseline = update_baseline(baseline, entry.mean_reward);
        beta = (beta * cfg.beta_decay).max(cfg.beta_floor);
    }
    Ok(TrainOutcome { params, log })
}

/// The paper's MINERVA grid (λ = 0) over `base`: 16 configurations.
pub fn minerva_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    grid(base, &[0.0])
}

/// The PoLo grid, λ ∈ {0.1, 1}: 32 configurations.
pub fn polo_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    grid(base, &[0.1, 1.0])
}

fn grid(base: &TrainConfig, lambdas: &[f64]) -> Vec<TrainConfig> {
    let mut out = Vec::new();
    for d in [128, 256] {
        for h in [256, 512] {
            for lr in [0.0001, 0.001] {
                for &lambda in lambdas {
                    for beta in [0.01, 0.1] {
                        out.push(TrainConfig {
                            embedding_dim: d,
                            hidden_dim: h,
                            learning_rate: lr,
                            lambda,
                            beta,
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: TrainConfig,
    pub score: f64,
}

/// Trains every configuration and scores it with `score` (validation pruned
/// MRR in the pipeline). Returns the best, with ties going to the
/// lexicographically smaller configuration, and the full table.
pub fn grid_search(
    grid: &[TrainConfig],
    mut train_and_score: impl FnMut(&TrainConfig) -> Result<f64>,
) -> Result<(TrainConfig, Vec<GridEntry>)> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty hyperparameter grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for cfg in grid {
        let score = train_and_score(cfg)?;
        table.push(GridEntry {
            config: cfg.clone(),
            score,
        });
    }
    let best = table
        .iter()
        .max_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| b.config.lexicographic_cmp(&a.config))
        })
        .map(|e| e.config.clone())
        .expect("grid is non-empty");
    Ok((best, table))
}
