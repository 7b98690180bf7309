//! Small finite MDPs and tabular policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soed_agent::net::sigmoid;

pub const MAX_STATES: usize = 12;
pub const MAX_ACTIONS: usize = 4;
pub const MAX_HORIZON: usize = 5;

/// `horizon` is the maximum number of acquisitions; the state reached after
/// the last one stops with certainty.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[(x * n_actions + a) * n_states + x']`.
    pub transition: Vec<f64>,
    pub psnr: Vec<f64>,
    pub cost_b: f64,
    pub horizon: usize,
    pub initial: usize,
}

impl TabularMdp {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_states == 0 || self.n_states > MAX_STATES {
            return Err(format!("state count {} outside 1..={MAX_STATES}", self.n_states));
        }
        if self.n_actions == 0 || self.n_actions > MAX_ACTIONS {
            return Err(format!("action count {} outside 1..={MAX_ACTIONS}", self.n_actions));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(format!("horizon {} outside 1..={MAX_HORIZON}", self.horizon));
        }
        if self.initial >= self.n_states || self.psnr.len() != self.n_states {
            return Err("initial state or PSNR table inconsistent".into());
        }
        if self.transition.len() != self.n_states * self.n_actions * self.n_states {
            return Err("transition table has wrong size".into());
        }
        for x in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(x, a);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(format!("transition row ({x}, {a}) is not a distribution"));
                }
            }
        }
        Ok(())
    }

    pub fn row(&self, x: usize, a: usize) -> &[f64] {
        let o = (x * self.n_actions + a) * self.n_states;
        &self.transition[o..o + self.n_states]
    }

    /// Random transitions (normalised uniforms) and PSNR values in
    /// `[10, 30)`.
    pub fn random(n_states: usize, n_actions: usize, horizon: usize, cost_b: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let w: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            transition.extend(w.into_iter().map(|v| v / s));
        }
        let psnr = (0..n_states).map(|_| rng.random_range(10.0..30.0)).collect();
        Self { n_states, n_actions, transition, psnr, cost_b, horizon, initial: 0 }
    }

    /// Deterministic transitions `x → next[x][a]`.
    pub fn deterministic(next: &[Vec<usize>], psnr: Vec<f64>, cost_b: f64, horizon: usize) -> Self {
        let n_states = next.len();
        let n_actions = next[0].len();
        let mut transition = vec![0.0; n_states * n_actions * n_states];
        for (x, row) in next.iter().enumerate() {
            for (a, &y) in row.iter().enumerate() {
                transition[(x * n_actions + a) * n_states + y] = 1.0;
            }
        }
        Self { n_states, n_actions, transition, psnr, cost_b, horizon, initial: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicies {
    pub n_actions: usize,
    /// `actor_logits[x * n_actions + a]`.
    pub actor_logits: Vec<f64>,
    pub term_logits: Vec<f64>,
}

impl TabularPolicies {
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { n_actions, actor_logits: vec![0.0; n_states * n_actions], term_logits: vec![0.0; n_states] }
    }

    pub fn random(n_states: usize, n_actions: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            n_actions,
            actor_logits: (0..n_states * n_actions).map(|_| rng.random_range(-1.5..1.5)).collect(),
            term_logits: (0..n_states).map(|_| rng.random_range(-2.0..1.0)).collect(),
        }
    }

    pub fn actor_probs(&self, x: usize) -> Vec<f64> {
        let z = &self.actor_logits[x * self.n_actions..(x + 1) * self.n_actions];
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn term_prob(&self, x: usize) -> f64 {
        sigmoid(self.term_logits[x])
    }

    /// All logits as one vector: actor table then terminal table.
    pub fn flat(&self) -> Vec<f64> {
        self.actor_logits.iter().chain(&self.term_logits).copied().collect()
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        let n = self.actor_logits.len();
        self.actor_logits.copy_from_slice(&v[..n]);
        self.term_logits.copy_from_slice(&v[n..]);
    }
}
