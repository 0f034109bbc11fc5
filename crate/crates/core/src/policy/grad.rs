//! Backpropagation through a recorded episode.
//!
//! Per-step loss: `-A·log π(a_s) - β·H(π_s)`. For logits `z` the derivative
//! is `g_j = -A(1[j=a] - p_j) + β·p_j(log p_j + H)`; everything upstream is
//! the chain rule through the scorer and, across steps, through the GRU.

use super::{Episode, GruCache, PolicyParams, ScoreCache};
use crate::graph::{Action, EntityId, RelationId};
use crate::tensor::axpy;

/// Loss of an episode under `params`, recomputed from its recorded moves.
pub fn episode_loss(params: &PolicyParams, episode: &Episode, advantage: f64, beta: f64) -> f64 {
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut current = episode.rollout.head;
    let mut loss = 0.0;
    let last = episode.steps.len().saturating_sub(1);
    for (t, step) in episode.steps.iter().enumerate() {
        let s = params.state_encoding(&hidden, current, episode.rollout.relation);
        let dist = params.score_actions(&s, &step.actions);
        loss += -advantage * dist.log_probabilities[step.chosen] - beta * dist.entropy();
        let action = step.actions[step.chosen];
        if t < last {
            hidden = params.encode_history(&hidden, action);
        }
        current = action.entity;
    }
    loss
}

/// Gradient bundle of [`episode_loss`] with respect to every parameter.
pub fn policy_gradients(params: &PolicyParams, episode: &Episode, advantage: f64, beta: f64) -> PolicyParams {
    let mut grads = params.zeros_like();
    accumulate_gradients(params, episode, advantage, beta, &mut grads);
    grads
}

/// Adds the episode's gradient into `grads` and returns its loss.
pub fn accumulate_gradients(
    params: &PolicyParams,
    episode: &Episode,
    advantage: f64,
    beta: f64,
    grads: &mut PolicyParams,
) -> f64 {
    let steps = &episode.steps;
    if steps.is_empty() {
        return 0.0;
    }
    let query = episode.rollout.relation;
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut current = episode.rollout.head;
    let mut scores = Vec::with_capacity(steps.len());
    let mut currents = Vec::with_capacity(steps.len());
    let mut grus: Vec<GruCache> = Vec::with_capacity(steps.len());
    let mut loss = 0.0;

    for (t, step) in steps.iter().enumerate() {
        let s = params.state_encoding(&hidden, current, query);
        let (cache, dist) = params.score_forward(&s, &step.actions);
        loss += -advantage * dist.log_probabilities[step.chosen] - beta * dist.entropy();
        scores.push((cache, dist));
        currents.push(current);
        let action = step.actions[step.chosen];
        if t + 1 < steps.len() {
            let g = params.gru_forward(&hidden, action);
            hidden = g.next.clone();
            grus.push(g);
        }
        current = action.entity;
    }

    let h = params.dims.hidden;
    let mut d_future = vec![0.0; h];
    for t in (0..steps.len()).rev() {
        let mut d_hidden = if t < grus.len() {
            gru_backward_cached(params, &grus[t], &d_future, grads)
        } else {
            vec![0.0; h]
        };
        let (cache, dist) = &scores[t];
        let step = &steps[t];
        let logit_grads: Vec<f64> = {
            let entropy = dist.entropy();
            dist.probabilities
                .iter()
                .zip(&dist.log_probabilities)
                .enumerate()
                .map(|(j, (p, lp))| {
                    let chosen = if j == step.chosen { 1.0 } else { 0.0 };
                    let entropy_term = if *p > 0.0 { beta * p * (lp + entropy) } else { 0.0 };
                    -advantage * (chosen - p) + entropy_term
                })
                .collect()
        };
        let ds = score_backward(params, cache, &step.actions, &logit_grads, currents[t], query, grads);
        axpy(1.0, &ds[..h], &mut d_hidden);
        d_future = d_hidden;
    }
    loss
}

/// Backprop of the scorer for one step; returns `dL/d state` (hidden part
/// only is meaningful to the caller, the embedding parts are already
/// scattered into `grads`).
fn score_backward(
    params: &PolicyParams,
    cache: &ScoreCache,
    actions: &[Action],
    logit_grads: &[f64],
    current: EntityId,
    query: RelationId,
    grads: &mut PolicyParams,
) -> Vec<f64> {
    let d = params.dims.embedding;
    let h = params.dims.hidden;
    let (v_rel, v_ent) = cache.v.split_at(d);

    let mut dv = vec![0.0; 2 * d];
    for (a, g) in actions.iter().zip(logit_grads) {
        if *g == 0.0 {
            continue;
        }
        let (dv_rel, dv_ent) = dv.split_at_mut(d);
        axpy(*g, params.relation.row(a.relation.index()), dv_rel);
        axpy(*g, params.entity.row(a.entity.index()), dv_ent);
        axpy(*g, v_rel, grads.relation.row_mut(a.relation.index()));
        axpy(*g, v_ent, grads.entity.row_mut(a.entity.index()));
    }

    // v = Pᵀ o
    grads.action_proj.add_outer(&cache.o, &dv);
    let mut d_o = vec![0.0; d];
    params.action_proj.gemv(&dv, &mut d_o);

    // o = W2 u + b2
    grads.mlp_w2.add_outer(&d_o, &cache.u);
    axpy(1.0, &d_o, grads.mlp_b2.as_mut_slice());
    let mut du = vec![0.0; h];
    params.mlp_w2.gemv_t(&d_o, &mut du);

    // u = tanh(W1 s + b1)
    let da: Vec<f64> = du
        .iter()
        .zip(&cache.u)
        .map(|(g, u)| g * (1.0 - u * u))
        .collect();
    grads.mlp_w1.add_outer(&da, &cache.state);
    axpy(1.0, &da, grads.mlp_b1.as_mut_slice());
    let mut ds = vec![0.0; cache.state.len()];
    params.mlp_w1.gemv_t(&da, &mut ds);

    axpy(1.0, &ds[h..h + d], grads.entity.row_mut(current.index()));
    axpy(1.0, &ds[h + d..], grads.relation.row_mut(query.index()));
    ds
}

/// Backprop of one GRU update. Adds parameter gradients into `grads` and
/// returns `dL/d prev_hidden`.
pub fn gru_backward(
    params: &PolicyParams,
    prev_hidden: &[f64],
    action: Action,
    d_next: &[f64],
    grads: &mut PolicyParams,
) -> Vec<f64> {
    let cache = params.gru_forward(prev_hidden, action);
    gru_backward_cached(params, &cache, d_next, grads)
}

fn gru_backward_cached(params: &PolicyParams, c: &GruCache, d_next: &[f64], grads: &mut PolicyParams) -> Vec<f64> {
    let h = params.dims.hidden;
    let d = params.dims.embedding;
    let mut dax = vec![0.0; 3 * h];
    let mut dah = vec![0.0; 3 * h];
    let mut d_prev = vec![0.0; h];
    for i in 0..h {
        let g = d_next[i];
        let (z, r, n, hn) = (c.z[i], c.r[i], c.n[i], c.hn[i]);
        let dn = g * (1.0 - z);
        let dz = g * (c.prev[i] - n);
        d_prev[i] = g * z;
        let dan = dn * (1.0 - n * n);
        let dr = dan * hn;
        let daz = dz * z * (1.0 - z);
        let dar = dr * r * (1.0 - r);
        dax[i] = daz;
        dax[h + i] = dar;
        dax[2 * h + i] = dan;
        dah[i] = daz;
        dah[h + i] = dar;
        dah[2 * h + i] = dan * r;
    }
    grads.gru_wx.add_outer(&dax, &c.x);
    axpy(1.0, &dax, grads.gru_bx.as_mut_slice());
    grads.gru_wh.add_outer(&dah, &c.prev);
    axpy(1.0, &dah, grads.gru_bh.as_mut_slice());
    params.gru_wh.gemv_t(&dah, &mut d_prev);

    let mut dx = vec![0.0; 2 * d];
    params.gru_wx.gemv_t(&dax, &mut dx);
    axpy(1.0, &dx[..d], grads.relation.row_mut(c.action.relation.index()));
    axpy(1.0, &dx[d..], grads.entity.row_mut(c.action.entity.index()));
    d_prev
}
