//! Adam over a [`PolicyParams`]-shaped parameter set.

use serde::{Deserialize, Serialize};

use crate::policy::PolicyParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: PolicyParams,
    v: PolicyParams,
}

impl Adam {
    pub fn new(params: &PolicyParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One descent step on `params` along `grads`.
    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let groups = params
            .groups_mut()
            .into_iter()
            .zip(grads.groups())
            .zip(self.m.groups_mut())
            .zip(self.v.groups_mut());
        for (((p, g), m), v) in groups {
            let it = p
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(m.as_mut_slice().iter_mut())
                .zip(v.as_mut_slice().iter_mut());
            for (((p, g), m), v) in it {
                if *g == 0.0 && *m == 0.0 && *v == 0.0 {
                    continue;
                }
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyDims;

    fn dims() -> PolicyDims {
        PolicyDims { entities: 2, relations: 2, embedding: 1, hidden: 1 }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = PolicyParams::zeros(dims());
        let mut g = p.zeros_like();
        g.entity.as_mut_slice()[0] = 3.0;
        g.entity.as_mut_slice()[1] = -0.5;
        let mut adam = Adam::new(&p, 0.01);
        adam.step(&mut p, &g);
        // bias-corrected first step is lr * sign(g)
        assert!((p.entity.as_slice()[0] + 0.01).abs() < 1e-9);
        assert!((p.entity.as_slice()[1] - 0.01).abs() < 1e-9);
        assert_eq!(p.relation.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut p = PolicyParams::init(dims(), 4);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.gru_wx.fill(1.0);
        let mut adam = Adam::new(&p, 0.0);
        adam.step(&mut p, &g);
        assert_eq!(p, before);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = PolicyParams::zeros(dims());
        p.mlp_b1.as_mut_slice()[0] = 5.0;
        let mut adam = Adam::new(&p, 0.1);
        for _ in 0..500 {
            let mut g = p.zeros_like();
            g.mlp_b1.as_mut_slice()[0] = 2.0 * (p.mlp_b1.as_slice()[0] - 1.0);
            adam.step(&mut p, &g);
        }
        assert!((p.mlp_b1.as_slice()[0] - 1.0).abs() < 1e-2);
    }
}
