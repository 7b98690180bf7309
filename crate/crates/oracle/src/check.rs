//! Oracle checks: exact identities, gradient cross-validation and
//! Monte-Carlo agreement of the sampled update rules.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soed_agent::loss::{LossWeights, Variant};
use soed_agent::train::{run_episode_accumulate, LoopConfig};
use soed_agent::OptimizerConfig;

use crate::exact::{
    enumerate_objective, exact_continuation_values, exact_gradients, finite_difference_gradients, occupancy, Gradients,
};
use crate::mdp::{TabularMdp, TabularPolicies};
use crate::sim::{TabularAgent, TabularSource};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn result(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

pub fn check_recursion_vs_enumeration(mdp: &TabularMdp, pol: &TabularPolicies) -> CheckResult {
    let a = exact_continuation_values(mdp, pol).objective(mdp);
    let b = enumerate_objective(mdp, pol);
    let err = (a - b).abs();
    result("recursion_vs_enumeration", err <= 1e-12, format!("J={a:.12} enumeration={b:.12} |diff|={err:.2e}"))
}

/// `V_C = Σ π_a Q_C`, `Σ π_a A_C = 0`, and `V = p·PSNR + (1−p)·V_C`.
pub fn check_identities(mdp: &TabularMdp, pol: &TabularPolicies) -> CheckResult {
    let t = exact_continuation_values(mdp, pol);
    let mut worst: f64 = 0.0;
    for lvl in 0..mdp.horizon {
        for x in 0..mdp.n_states {
            let pa = pol.actor_probs(x);
            let vc: f64 = pa.iter().zip(&t.qc[lvl][x]).map(|(p, q)| p * q).sum();
            let adv: f64 = pa.iter().zip(&t.ac[lvl][x]).map(|(p, a)| p * a).sum();
            let p = pol.term_prob(x);
            let v = p * mdp.psnr[x] + (1.0 - p) * t.vc[lvl][x];
            worst = worst.max((vc - t.vc[lvl][x]).abs()).max(adv.abs()).max((v - t.v[lvl][x]).abs());
        }
    }
    result("value_identities", worst <= 1e-12, format!("max violation {worst:.2e}"))
}

pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-9))
        .fold(0.0, f64::max)
}

pub fn check_gradients(mdp: &TabularMdp, pol: &TabularPolicies) -> CheckResult {
    let g = exact_gradients(mdp, pol).flat();
    let fd = finite_difference_gradients(mdp, pol, 1e-3).flat();
    let gap = max_relative_gap(&g, &fd);
    result("unrolled_vs_finite_difference", gap < 1e-6, format!("max relative gap {gap:.2e} over {} logits", g.len()))
}

/// Where `PSNR(x) − V_C(x, k)` has one sign at every reachable level, the
/// terminal-logit gradient has that sign.
pub fn check_stopping_sign(mdp: &TabularMdp, pol: &TabularPolicies) -> CheckResult {
    let t = exact_continuation_values(mdp, pol);
    let rho = occupancy(mdp, pol);
    let g = exact_gradients(mdp, pol);
    let mut checked = 0;
    let mut ok = true;
    for x in 0..mdp.n_states {
        let signs: Vec<f64> = (0..mdp.horizon)
            .filter(|&l| rho[l][x] > 0.0)
            .map(|l| (mdp.psnr[x] - t.vc[l][x]).signum())
            .collect();
        if signs.is_empty() || signs.iter().any(|&s| s != signs[0]) {
            continue;
        }
        checked += 1;
        ok &= g.term[x].signum() == signs[0];
    }
    result("stopping_gradient_sign", ok && checked > 0, format!("{checked} states with a definite sign"))
}

/// Sample mean of the TD error over next states versus `A_C`.
pub fn check_td_sampling(mdp: &TabularMdp, pol: &TabularPolicies, draws: usize, seed: u64) -> CheckResult {
    let t = exact_continuation_values(mdp, pol);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for lvl in 0..mdp.horizon {
        for x in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let row = mdp.row(x, a);
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..draws {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut y = mdp.n_states - 1;
                    for (i, &p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            y = i;
                            break;
                        }
                    }
                    let (p_next, vc_next) = if lvl + 1 == mdp.horizon { (1.0, 0.0) } else { (pol.term_prob(y), t.vc[lvl + 1][y]) };
                    let d = soed_agent::td_error_terminal(-mdp.cost_b, p_next, mdp.psnr[y], t.vc[lvl][x], vc_next).delta;
                    s += d;
                    s2 += d * d;
                }
                let n = draws as f64;
                let mean = s / n;
                let se = ((s2 / n - mean * mean).max(0.0) / n).sqrt();
                worst = worst.max((mean - t.ac[lvl][x][a]).abs() / se.max(1e-12));
            }
        }
    }
    result("td_error_mean_matches_advantage", worst < 3.0, format!("worst |z| = {worst:.2} over {draws} draws"))
}

/// Per-coordinate sample mean and standard error of the update direction
/// (negated loss gradient) produced by the training loop.
#[derive(Clone, Debug)]
pub struct EstimatorStats {
    pub n: usize,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    /// Running means after each prefix length in `checkpoints`.
    pub prefix_means: Vec<(usize, Vec<f64>)>,
}

pub fn sample_update_directions(
    mdp: &TabularMdp,
    pol: &TabularPolicies,
    n_trajectories: usize,
    seed: u64,
    decide_before_acquire: bool,
    checkpoints: &[usize],
) -> EstimatorStats {
    let opt = OptimizerConfig {
        loss_weights: LossWeights { actor: 1.0, critic: 0.0, terminal: 1.0, entropy: 0.0 },
        ..Default::default()
    };
    let agent = TabularAgent::with_exact_critic(mdp, pol.clone(), opt);
    let source = TabularSource { mdp: mdp.clone() };
    let cfg = LoopConfig { decide_before_acquire, ..LoopConfig::new(Variant::Terminal, 1, seed) };
    let n_params = pol.actor_logits.len() + pol.term_logits.len();
    let mut sum = vec![0.0; n_params];
    let mut sum2 = vec![0.0; n_params];
    let mut prefix_means = Vec::new();
    let mut g = vec![0.0; n_params];
    for e in 0..n_trajectories {
        g.fill(0.0);
        run_episode_accumulate(&cfg, &source, &agent, e as u64, &mut g).expect("tabular episode");
        for i in 0..n_params {
            let u = -g[i];
            sum[i] += u;
            sum2[i] += u * u;
        }
        if checkpoints.contains(&(e + 1)) {
            prefix_means.push((e + 1, sum.iter().map(|s| s / (e + 1) as f64).collect()));
        }
    }
    let n = n_trajectories as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum2
        .iter()
        .zip(&mean)
        .map(|(s2, m)| ((s2 / n - m * m).max(0.0) / n).sqrt())
        .collect();
    EstimatorStats { n: n_trajectories, mean, std_err, prefix_means }
}

fn z_scores(stats: &EstimatorStats, exact: &[f64], range: std::ops::Range<usize>) -> f64 {
    range
        .map(|i| {
            let d = (stats.mean[i] - exact[i]).abs();
            if stats.std_err[i] == 0.0 {
                if d <= 1e-12 { 0.0 } else { f64::INFINITY }
            } else {
                d / stats.std_err[i]
            }
        })
        .fold(0.0, f64::max)
}

/// Actor and terminal estimator checks (decide-first ordering, which is the
/// ordering the objective describes).
pub fn estimator_check(mdp: &TabularMdp, pol: &TabularPolicies, n_trajectories: usize, seed: u64) -> Vec<CheckResult> {
    let exact = exact_gradients(mdp, pol).flat();
    let stats = sample_update_directions(mdp, pol, n_trajectories, seed, true, &[]);
    let na = pol.actor_logits.len();
    let za = z_scores(&stats, &exact, 0..na);
    let zt = z_scores(&stats, &exact, na..exact.len());
    vec![
        result("actor_estimator", za < 3.0, format!("worst |z| = {za:.2} over {na} logits, N = {n_trajectories}")),
        result(
            "terminal_estimator",
            zt < 3.0,
            format!("worst |z| = {zt:.2} over {} logits, N = {n_trajectories}", exact.len() - na),
        ),
    ]
}

/// Log-log slope of the estimator error against N.
pub fn convergence_slope(mdp: &TabularMdp, pol: &TabularPolicies, ns: &[usize], seed: u64) -> (f64, Vec<(usize, f64)>) {
    let exact = exact_gradients(mdp, pol).flat();
    let max_n = *ns.iter().max().expect("non-empty");
    let stats = sample_update_directions(mdp, pol, max_n, seed, true, ns);
    let errs: Vec<(usize, f64)> = stats
        .prefix_means
        .iter()
        .map(|(n, m)| {
            let e = m.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            (*n, e)
        })
        .collect();
    let pts: Vec<(f64, f64)> = errs.iter().map(|&(n, e)| ((n as f64).ln(), e.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    (slope, errs)
}

pub fn check_convergence(mdp: &TabularMdp, pol: &TabularPolicies, seed: u64) -> CheckResult {
    let (slope, errs) = convergence_slope(mdp, pol, &[1_000, 10_000, 100_000], seed);
    let detail = errs.iter().map(|(n, e)| format!("N={n}: {e:.3e}")).collect::<Vec<_>>().join(", ");
    result("estimator_error_decay", (-0.8..-0.25).contains(&slope), format!("slope {slope:.3} ({detail})"))
}

/// Gradient of an unreachable state's logits is exactly zero.
pub fn check_unreachable() -> CheckResult {
    let mut mdp = TabularMdp::random(3, 2, 3, 0.4, 77);
    for x in 0..3 {
        for a in 0..2 {
            let o = (x * 2 + a) * 3;
            let row = &mut mdp.transition[o..o + 3];
            let keep = row[0] + row[1];
            row[0] /= keep;
            row[1] /= keep;
            row[2] = 0.0;
        }
    }
    let pol = TabularPolicies::random(3, 2, 78);
    let g: Gradients = exact_gradients(&mdp, &pol);
    let zero = g.actor[4..6].iter().all(|&v| v == 0.0) && g.term[2] == 0.0;
    result("unreachable_state_gradient", zero, format!("actor {:?}, terminal {}", &g.actor[4..6], g.term[2]))
}

/// Every check on the reference instance (3 states, 2 actions, M = 4).
pub fn run_all(seed: u64, n_trajectories: usize) -> Vec<CheckResult> {
    let mdp = TabularMdp::random(3, 2, 4, 0.5, seed);
    let pol = TabularPolicies::random(3, 2, seed.wrapping_add(1));
    let mut out = vec![
        check_recursion_vs_enumeration(&mdp, &pol),
        check_identities(&mdp, &pol),
        check_gradients(&mdp, &pol),
        check_stopping_sign(&mdp, &pol),
        check_unreachable(),
        check_td_sampling(&mdp, &pol, n_trajectories, seed.wrapping_add(2)),
    ];
    out.extend(estimator_check(&mdp, &pol, n_trajectories, seed.wrapping_add(3)));
    out.push(check_convergence(&mdp, &pol, seed.wrapping_add(4)));
    out
}
