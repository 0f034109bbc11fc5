//! Central finite differences against the hand-written backward pass.

use kgpath::graph::{Action, EntityId, RelationId};
use kgpath::policy::{
    episode_loss, gru_backward, policy_gradients, Episode, EpisodeStep, PolicyDims, PolicyParams,
    PARAM_GROUPS,
};
use kgpath::walk::Rollout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

/// Relative error with a 1e-6 magnitude floor; central differences at
/// step 1e-5 carry roughly 1e-11 of round-off.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn dims() -> PolicyDims {
    PolicyDims { entities: 7, relations: 5, embedding: 3, hidden: 4 }
}

/// Random walk with random action lists; the state is recomputed from the
/// parameters so the recorded distributions are the true ones.
fn random_episode(params: &PolicyParams, steps: usize, seed: u64) -> Episode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = EntityId(rng.gen_range(0..dims().entities as u32));
    let query = RelationId(rng.gen_range(1..dims().relations as u32));
    let mut hidden = vec![0.0; params.dims.hidden];
    let mut current = head;
    let mut recorded = Vec::new();
    let mut taken = Vec::new();
    for _ in 0..steps {
        let n = rng.gen_range(1..6);
        let mut actions = vec![Action::no_op(current)];
        for _ in 1..n {
            actions.push(Action::new(
                RelationId(rng.gen_range(1..dims().relations as u32)),
                EntityId(rng.gen_range(0..dims().entities as u32)),
            ));
        }
        let s = params.state_encoding(&hidden, current, query);
        let distribution = params.score_actions(&s, &actions);
        let chosen = rng.gen_range(0..actions.len());
        hidden = params.encode_history(&hidden, actions[chosen]);
        current = actions[chosen].entity;
        taken.push(actions[chosen]);
        recorded.push(EpisodeStep { actions, chosen, distribution });
    }
    Episode { rollout: Rollout::new(head, query, taken, 0.0), steps: recorded }
}

fn check_episode(seed: u64, steps: usize, advantage: f64, beta: f64) {
    let params = PolicyParams::init(dims(), seed);
    let episode = random_episode(&params, steps, seed + 100);
    let grads = policy_gradients(&params, &episode, advantage, beta);

    let mut worst = (0.0f64, "");
    for (g, name) in PARAM_GROUPS.iter().enumerate() {
        let len = grads.groups()[g].as_slice().len();
        for i in 0..len {
            let mut plus = params.clone();
            plus.groups_mut()[g].as_mut_slice()[i] += STEP;
            let mut minus = params.clone();
            minus.groups_mut()[g].as_mut_slice()[i] -= STEP;
            let numeric = (episode_loss(&plus, &episode, advantage, beta)
                - episode_loss(&minus, &episode, advantage, beta))
                / (2.0 * STEP);
            let analytic = grads.groups()[g].as_slice()[i];
            let err = relative_error(analytic, numeric);
            assert!(
                err < TOLERANCE,
                "{name}[{i}]: analytic {analytic:e} numeric {numeric:e} (rel err {err:e})"
            );
            if err > worst.0 {
                worst = (err, name);
            }
        }
    }
    eprintln!("seed {seed}: worst relative error {:e} in {}", worst.0, worst.1);
}

#[test]
fn reinforce_gradient_all_groups() {
    check_episode(1, 3, 0.8, 0.0);
    check_episode(2, 3, -1.3, 0.0);
}

#[test]
fn entropy_gradient_all_groups() {
    check_episode(3, 3, 0.0, 0.1);
    check_episode(4, 4, 0.5, 0.05);
}

#[test]
fn single_step_episode() {
    check_episode(5, 1, 1.0, 0.02);
}

#[test]
fn nonzero_biases_and_longer_walks() {
    let mut params = PolicyParams::init(dims(), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for m in [&mut params.gru_bh, &mut params.mlp_b1, &mut params.mlp_b2] {
        m.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
    }
    let episode = random_episode(&params, 5, 11);
    let grads = policy_gradients(&params, &episode, 0.7, 0.03);
    for (g, name) in PARAM_GROUPS.iter().enumerate() {
        for i in 0..grads.groups()[g].as_slice().len() {
            let mut plus = params.clone();
            plus.groups_mut()[g].as_mut_slice()[i] += STEP;
            let mut minus = params.clone();
            minus.groups_mut()[g].as_mut_slice()[i] -= STEP;
            let numeric = (episode_loss(&plus, &episode, 0.7, 0.03)
                - episode_loss(&minus, &episode, 0.7, 0.03))
                / (2.0 * STEP);
            let analytic = grads.groups()[g].as_slice()[i];
            assert!(relative_error(analytic, numeric) < TOLERANCE, "{name}[{i}]");
        }
    }
}

#[test]
fn gru_jacobian_against_finite_differences() {
    let params = PolicyParams::init(dims(), 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let h = params.dims.hidden;
    let prev: Vec<f64> = (0..h).map(|_| rng.gen_range(-0.8..0.8)).collect();
    let action = Action::new(RelationId(2), EntityId(5));
    for out in 0..h {
        // d next[out] / d prev[k]
        let mut unit = vec![0.0; h];
        unit[out] = 1.0;
        let mut scratch = params.zeros_like();
        let d_prev = gru_backward(&params, &prev, action, &unit, &mut scratch);
        for k in 0..h {
            let mut p = prev.clone();
            p[k] += STEP;
            let mut m = prev.clone();
            m[k] -= STEP;
            let numeric = (params.encode_history(&p, action)[out]
                - params.encode_history(&m, action)[out])
                / (2.0 * STEP);
            let err = relative_error(d_prev[k], numeric);
            assert!(err < TOLERANCE, "J[{out}][{k}]: {} vs {numeric} ({err:e})", d_prev[k]);
        }
    }
}
