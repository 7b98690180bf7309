//! Exact values and gradients by backward recursion, forward occupancy and
//! brute-force enumeration.
//!
//! Levels run from 1 (initial state) to `M + 1`; at level `M + 1` stopping
//! is forced, so `V(x, M+1) = PSNR(x)`.

use crate::mdp::{TabularMdp, TabularPolicies};

/// Tables indexed `[level - 1][x]` (and `[level - 1][x][a]` for Q/A).
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTables {
    pub v: Vec<Vec<f64>>,
    /// Continuation value; defined for levels `1..=M`.
    pub vc: Vec<Vec<f64>>,
    pub qc: Vec<Vec<Vec<f64>>>,
    pub ac: Vec<Vec<Vec<f64>>>,
}

impl ValueTables {
    pub fn objective(&self, mdp: &TabularMdp) -> f64 {
        self.v[0][mdp.initial]
    }
}

pub fn exact_continuation_values(mdp: &TabularMdp, pol: &TabularPolicies) -> ValueTables {
    let (ns, na, m) = (mdp.n_states, mdp.n_actions, mdp.horizon);
    let mut v = vec![vec![0.0; ns]; m + 1];
    let mut vc = vec![vec![0.0; ns]; m];
    let mut qc = vec![vec![vec![0.0; na]; ns]; m];
    let mut ac = vec![vec![vec![0.0; na]; ns]; m];
    v[m] = mdp.psnr.clone();
    for lvl in (0..m).rev() {
        for x in 0..ns {
            let pa = pol.actor_probs(x);
            for a in 0..na {
                let ev: f64 = mdp.row(x, a).iter().zip(&v[lvl + 1]).map(|(p, val)| p * val).sum();
                qc[lvl][x][a] = -mdp.cost_b + ev;
            }
            vc[lvl][x] = pa.iter().zip(&qc[lvl][x]).map(|(p, q)| p * q).sum();
            for a in 0..na {
                ac[lvl][x][a] = qc[lvl][x][a] - vc[lvl][x];
            }
            let p = pol.term_prob(x);
            v[lvl][x] = p * mdp.psnr[x] + (1.0 - p) * vc[lvl][x];
        }
    }
    ValueTables { v, vc, qc, ac }
}

/// `J = V(x₁, 1)`.
pub fn exact_objective(mdp: &TabularMdp, pol: &TabularPolicies) -> f64 {
    exact_continuation_values(mdp, pol).objective(mdp)
}

/// Expected return by summing over every trajectory.
pub fn enumerate_objective(mdp: &TabularMdp, pol: &TabularPolicies) -> f64 {
    fn go(mdp: &TabularMdp, pol: &TabularPolicies, x: usize, acquired: usize, prob: f64) -> f64 {
        let stop_value = mdp.psnr[x] - mdp.cost_b * acquired as f64;
        if acquired == mdp.horizon {
            return prob * stop_value;
        }
        let p = pol.term_prob(x);
        let mut total = prob * p * stop_value;
        let pa = pol.actor_probs(x);
        for (a, &q) in pa.iter().enumerate() {
            for (y, &t) in mdp.row(x, a).iter().enumerate() {
                let w = prob * (1.0 - p) * q * t;
                if w != 0.0 {
                    total += go(mdp, pol, y, acquired + 1, w);
                }
            }
        }
        total
    }
    go(mdp, pol, mdp.initial, 0, 1.0)
}

/// State occupancy `ρ[level - 1][x]` for levels `1..=M`: the probability
/// that the trajectory is at `x` at that level without having stopped.
pub fn occupancy(mdp: &TabularMdp, pol: &TabularPolicies) -> Vec<Vec<f64>> {
    let (ns, m) = (mdp.n_states, mdp.horizon);
    let mut rho = vec![vec![0.0; ns]; m];
    rho[0][mdp.initial] = 1.0;
    for lvl in 0..m.saturating_sub(1) {
        for x in 0..ns {
            let w = rho[lvl][x] * (1.0 - pol.term_prob(x));
            if w == 0.0 {
                continue;
            }
            for (a, q) in pol.actor_probs(x).into_iter().enumerate() {
                for (y, t) in mdp.row(x, a).iter().enumerate() {
                    rho[lvl + 1][y] += w * q * t;
                }
            }
        }
    }
    rho
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// `∂J/∂actor_logits`, same layout as the policy table.
    pub actor: Vec<f64>,
    pub term: Vec<f64>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.actor.iter().chain(&self.term).copied().collect()
    }
}

/// Unrolled policy gradient:
/// `∂J/∂z_a(x) = Σ_k ρ_k(x)(1 − p(x)) Σ_θ ∂π_a(θ|x)/∂z Q_C(x, θ, k)` and
/// `∂J/∂z_t(x) = Σ_k ρ_k(x) p(1 − p) (PSNR(x) − V_C(x, k))`.
pub fn exact_gradients(mdp: &TabularMdp, pol: &TabularPolicies) -> Gradients {
    let t = exact_continuation_values(mdp, pol);
    let rho = occupancy(mdp, pol);
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut actor = vec![0.0; ns * na];
    let mut term = vec![0.0; ns];
    for (lvl, rho_l) in rho.iter().enumerate() {
        for x in 0..ns {
            if rho_l[x] == 0.0 {
                continue;
            }
            let p = pol.term_prob(x);
            let pa = pol.actor_probs(x);
            for j in 0..na {
                // ∂π_θ/∂z_j = π_θ (1[θ=j] − π_j)
                let d: f64 = (0..na)
                    .map(|th| pa[th] * (if th == j { 1.0 } else { 0.0 } - pa[j]) * t.qc[lvl][x][th])
                    .sum();
                actor[x * na + j] += rho_l[x] * (1.0 - p) * d;
            }
            term[x] += rho_l[x] * p * (1.0 - p) * (mdp.psnr[x] - t.vc[lvl][x]);
        }
    }
    Gradients { actor, term }
}

/// Fourth-order central differences of [`exact_objective`] in every logit.
/// The two-point stencil's roundoff (≈ ε·J/h) is too coarse for small
/// gradient components at a 1e-6 relative tolerance.
pub fn finite_difference_gradients(mdp: &TabularMdp, pol: &TabularPolicies, h: f64) -> Gradients {
    let base = pol.flat();
    let mut g = vec![0.0; base.len()];
    let mut work = pol.clone();
    for i in 0..base.len() {
        let mut at = |d: f64| {
            let mut v = base.clone();
            v[i] = base[i] + d;
            work.set_flat(&v);
            exact_objective(mdp, &work)
        };
        g[i] = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
    }
    let n = pol.actor_logits.len();
    Gradients { actor: g[..n].to_vec(), term: g[n..].to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn immediate_stop_returns_initial_psnr() {
        let mdp = TabularMdp::random(3, 2, 3, 0.5, 1);
        let mut pol = TabularPolicies::random(3, 2, 2);
        pol.term_logits.fill(800.0);
        assert_eq!(exact_objective(&mdp, &pol), mdp.psnr[0]);
    }

    #[test]
    fn forced_run_pays_every_step() {
        let mdp = TabularMdp::deterministic(&[vec![1, 1], vec![2, 2], vec![2, 2]], vec![5.0, 9.0, 21.0], 0.5, 2);
        let mut pol = TabularPolicies::uniform(3, 2);
        pol.term_logits.fill(-800.0);
        assert_eq!(exact_objective(&mdp, &pol), -2.0 * 0.5 + 21.0);
    }
}
