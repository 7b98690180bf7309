//! Per-step update rules and the surrogate loss
//! `L = w_a·L_actor + w_c·L_critic + w_t·L_term − w_e·H`.

use soed_core::{AngleMask, Image};
use thiserror::Error;

use crate::net::{action_available, ForwardCache, HeadGrads, NetError, NetOutputs, NetParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Naive,
    Terminal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub actor: f64,
    pub critic: f64,
    pub terminal: f64,
    pub entropy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { actor: 1.0, critic: 0.5, terminal: 1.0, entropy: 0.01 }
    }
}

/// Terminal-head contribution of one record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerminalTerm {
    /// Not part of this variant.
    Absent,
    /// Forced stop: no gradient for the terminal head.
    Skipped,
    /// Advantage `PSNR(x̂_k) − V̂_C(x̂_k)`, treated as a constant.
    Advantage(f64),
}

/// Constants entering one step's surrogate loss. `action: None` drops the
/// actor and entropy terms, `value_target: None` the critic term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateTarget {
    pub action: Option<usize>,
    pub delta: f64,
    pub value_target: Option<f64>,
    pub terminal: TerminalTerm,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("record {0} lacks a terminal-head target")]
    MissingTarget(usize),
    #[error("record {0}: action {1} is masked or out of range")]
    InvalidAction(usize, usize),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// `∂ log π(a) / ∂ z_j = 1[j=a] − π_j` over available actions.
pub fn log_prob_logit_grad(probs: &[f64], mask: &AngleMask, action: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            if !action_available(mask, j) {
                0.0
            } else if j == action {
                1.0 - p
            } else {
                -p
            }
        })
        .collect()
}

/// `∂p / ∂z = p(1 − p)` for `p = sigmoid(z)`.
pub fn prob_logit_grad(p: f64) -> f64 {
    p * (1.0 - p)
}

/// Entropy of the available-action distribution and its logit gradient
/// `∂H/∂z_j = −π_j (log π_j + H)`.
pub fn entropy_and_grad(probs: &[f64]) -> (f64, Vec<f64>) {
    let h: f64 = probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    let g = probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect();
    (h, g)
}

/// One record of a loss batch.
#[derive(Clone, Debug)]
pub struct LossRecord<'a> {
    pub image: &'a Image,
    pub mask: &'a AngleMask,
    pub target: UpdateTarget,
}

/// Loss value and head gradients for a single state given its forward
/// outputs.
pub fn head_loss(
    probs: &[f64],
    value: f64,
    term_prob: f64,
    mask: &AngleMask,
    target: &UpdateTarget,
    w: &LossWeights,
) -> (f64, HeadGrads) {
    let mut g = HeadGrads::zeros(probs.len());
    let mut loss = 0.0;
    if let Some(action) = target.action {
        loss -= w.actor * probs[action].ln() * target.delta;
        if target.delta != 0.0 {
            for (gz, d) in g.logits.iter_mut().zip(log_prob_logit_grad(probs, mask, action)) {
                *gz -= w.actor * target.delta * d;
            }
        }
        let (h, dh) = entropy_and_grad(probs);
        loss -= w.entropy * h;
        for (gz, d) in g.logits.iter_mut().zip(dh) {
            *gz -= w.entropy * d;
        }
    }
    if let Some(vt) = target.value_target {
        let err = value - vt;
        loss += w.critic * 0.5 * err * err;
        g.value = w.critic * err;
    }
    if let TerminalTerm::Advantage(adv) = target.terminal {
        loss -= w.terminal * term_prob * adv;
        g.term_logit = -w.terminal * adv * prob_logit_grad(term_prob);
    }
    (loss, g)
}

/// Summed loss and parameter gradient over a batch.
pub fn loss_and_grads(
    params: &NetParams,
    batch: &[LossRecord<'_>],
    variant: Variant,
    weights: &LossWeights,
) -> Result<(f64, Vec<f64>), LossError> {
    let mut grads = params.zero_grads();
    let mut total = 0.0;
    for (i, rec) in batch.iter().enumerate() {
        total += accumulate_record(params, rec, variant, weights, &mut grads, i)?;
    }
    Ok((total, grads))
}

/// Adds one record's gradient into `grads` and returns its loss.
pub fn accumulate_record(
    params: &NetParams,
    rec: &LossRecord<'_>,
    variant: Variant,
    weights: &LossWeights,
    grads: &mut [f64],
    index: usize,
) -> Result<f64, LossError> {
    let mut target = rec.target;
    match (variant, target.terminal) {
        (Variant::Terminal, TerminalTerm::Absent) => return Err(LossError::MissingTarget(index)),
        (Variant::Naive, _) => target.terminal = TerminalTerm::Absent,
        _ => {}
    }
    if let Some(a) = target.action {
        if a >= params.config().n_actions || !action_available(rec.mask, a) {
            return Err(LossError::InvalidAction(index, a));
        }
    }
    let (out, cache) = params.forward_cached(rec.image, rec.mask)?;
    accumulate_cached(params, &cache, &out, rec.mask, &target, weights, grads)
}

/// Like [`accumulate_record`] but reuses a forward pass.
pub fn accumulate_cached(
    params: &NetParams,
    cache: &ForwardCache,
    out: &NetOutputs,
    mask: &AngleMask,
    target: &UpdateTarget,
    weights: &LossWeights,
    grads: &mut [f64],
) -> Result<f64, LossError> {
    let (loss, heads) = head_loss(&out.action_probs, out.value, out.term_prob, mask, target, weights);
    params.backward(cache, &heads, grads)?;
    Ok(loss)
}
