//! Tabular environment and agent that plug into the training loop, so the
//! Monte-Carlo checks exercise the same per-step update code as image
//! training.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soed_agent::loss::{head_loss, UpdateTarget};
use soed_agent::net::NetOutputs;
use soed_agent::train::{ActorCritic, EpisodeSource, Environment, TrainError};
use soed_agent::{Adam, OptimizerConfig};
use soed_core::AngleMask;

use crate::exact::{exact_continuation_values, ValueTables};
use crate::mdp::{TabularMdp, TabularPolicies};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TabularState {
    pub x: usize,
    /// Acquisitions so far (level − 1).
    pub acquired: usize,
}

pub struct TabularEnv {
    mdp: TabularMdp,
    rng: ChaCha8Rng,
}

impl Environment for TabularEnv {
    type State = TabularState;

    fn reset(&mut self) -> TabularState {
        TabularState { x: self.mdp.initial, acquired: 0 }
    }

    fn acquire(&mut self, s: &TabularState, a: usize) -> Result<TabularState, TrainError> {
        if a >= self.mdp.n_actions {
            return Err(TrainError::Env(format!("action {a} out of range")));
        }
        if s.acquired >= self.mdp.horizon {
            return Err(TrainError::Env("horizon exhausted".into()));
        }
        let u: f64 = self.rng.random();
        let row = self.mdp.row(s.x, a);
        let mut acc = 0.0;
        let mut next = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        for (y, &p) in row.iter().enumerate() {
            acc += p;
            if p > 0.0 && u < acc {
                next = y;
                break;
            }
        }
        Ok(TabularState { x: next, acquired: s.acquired + 1 })
    }

    fn quality(&mut self, s: &TabularState) -> Result<f64, TrainError> {
        Ok(self.mdp.psnr[s.x])
    }

    fn mask(&self, _: &TabularState) -> AngleMask {
        AngleMask::new()
    }

    fn cost(&self) -> f64 {
        self.mdp.cost_b
    }

    fn max_steps(&self) -> usize {
        self.mdp.horizon
    }

    fn label(&self) -> &str {
        "tabular"
    }

    fn id(&self) -> &str {
        "mdp"
    }
}

pub struct TabularSource {
    pub mdp: TabularMdp,
}

impl EpisodeSource for TabularSource {
    type Env = TabularEnv;

    fn make(&self, _episode: u64, rng: &mut ChaCha8Rng) -> Result<TabularEnv, TrainError> {
        Ok(TabularEnv { mdp: self.mdp.clone(), rng: ChaCha8Rng::seed_from_u64(rng.random()) })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Critic {
    /// Exact continuation values of the (frozen) policy.
    Exact(ValueTables),
    /// Learned table indexed `[acquired][x]`.
    Learned(Vec<f64>),
}

/// Softmax/sigmoid tables with either an exact or a learned critic. With
/// `naive` set the last actor column is the stop action.
#[derive(Clone, Debug)]
pub struct TabularAgent {
    pub pol: TabularPolicies,
    pub critic: Critic,
    pub n_states: usize,
    pub adam: Adam,
    pub opt: OptimizerConfig,
}

impl TabularAgent {
    pub fn with_exact_critic(mdp: &TabularMdp, pol: TabularPolicies, opt: OptimizerConfig) -> Self {
        let critic = Critic::Exact(exact_continuation_values(mdp, &pol));
        let mut a = Self { pol, critic, n_states: mdp.n_states, adam: Adam::new(0), opt };
        a.adam = Adam::new(a.flat().len());
        a
    }

    pub fn with_learned_critic(mdp: &TabularMdp, pol: TabularPolicies, opt: OptimizerConfig) -> Self {
        let critic = Critic::Learned(vec![0.0; (mdp.horizon + 1) * mdp.n_states]);
        let mut a = Self { pol, critic, n_states: mdp.n_states, adam: Adam::new(0), opt };
        a.adam = Adam::new(a.flat().len());
        a
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.pol.flat();
        if let Critic::Learned(t) = &self.critic {
            v.extend_from_slice(t);
        }
        v
    }

    fn value(&self, s: &TabularState) -> f64 {
        match &self.critic {
            Critic::Exact(t) => t.vc.get(s.acquired).map_or(0.0, |row| row[s.x]),
            Critic::Learned(t) => t[s.acquired * self.n_states + s.x],
        }
    }
}

impl ActorCritic<TabularState> for TabularAgent {
    type Cache = TabularState;

    fn n_actions(&self) -> usize {
        self.pol.n_actions
    }

    fn n_params(&self) -> usize {
        self.flat().len()
    }

    fn evaluate(&self, s: &TabularState, _: &AngleMask) -> Result<(NetOutputs, TabularState), TrainError> {
        let out = NetOutputs {
            action_probs: self.pol.actor_probs(s.x),
            value: self.value(s),
            term_logit: self.pol.term_logits[s.x],
            term_prob: self.pol.term_prob(s.x),
        };
        Ok((out, *s))
    }

    fn accumulate(
        &self,
        s: &TabularState,
        out: &NetOutputs,
        mask: &AngleMask,
        target: &UpdateTarget,
        grads: &mut [f64],
    ) -> Result<(), TrainError> {
        let (_, h) = head_loss(&out.action_probs, out.value, out.term_prob, mask, target, &self.opt.loss_weights);
        let na = self.pol.n_actions;
        for (j, g) in h.logits.iter().enumerate() {
            grads[s.x * na + j] += g;
        }
        let n_actor = self.pol.actor_logits.len();
        grads[n_actor + s.x] += h.term_logit;
        if let Critic::Learned(_) = self.critic {
            grads[n_actor + self.n_states + s.acquired * self.n_states + s.x] += h.value;
        }
        Ok(())
    }

    fn apply(&mut self, grads: &[f64]) -> Result<(), TrainError> {
        let mut v = self.flat();
        self.adam.step(&self.opt, &mut v, grads)?;
        let n = self.pol.actor_logits.len() + self.pol.term_logits.len();
        self.pol.set_flat(&v[..n]);
        if let Critic::Learned(t) = &mut self.critic {
            t.copy_from_slice(&v[n..]);
        }
        Ok(())
    }
}
