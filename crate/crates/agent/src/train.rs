//! Training loops for the naive-stopping and terminal-policy algorithms,
//! generic over the environment and the function approximator.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use soed_core::{AngleMask, N_ANGLES};
use thiserror::Error;

use crate::loss::{LossError, TerminalTerm, UpdateTarget, Variant};
use crate::net::{NetError, NetOutputs};
use crate::td::{td_error_naive, td_error_terminal, TdRecord};

/// Index of the stop action in the naive action space over all angles.
pub const STOP_ACTION: usize = N_ANGLES;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("environment: {0}")]
    Env(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// A sequential-acquisition episode.
pub trait Environment {
    type State: Clone;
    fn reset(&mut self) -> Self::State;
    fn acquire(&mut self, state: &Self::State, angle: usize) -> Result<Self::State, TrainError>;
    /// Terminal reward (PSNR) of a state.
    fn quality(&mut self, state: &Self::State) -> Result<f64, TrainError>;
    fn mask(&self, state: &Self::State) -> AngleMask;
    fn cost(&self) -> f64;
    fn max_steps(&self) -> usize;
    fn label(&self) -> &str;
    fn id(&self) -> &str;
}

/// Produces the environment for a given episode index.
pub trait EpisodeSource: Sync {
    type Env: Environment;
    fn make(&self, episode: u64, rng: &mut ChaCha8Rng) -> Result<Self::Env, TrainError>;
}

/// A three-headed policy/value model.
pub trait ActorCritic<S>: Sync {
    type Cache: Send;
    fn n_actions(&self) -> usize;
    fn n_params(&self) -> usize;
    fn evaluate(&self, state: &S, mask: &AngleMask) -> Result<(NetOutputs, Self::Cache), TrainError>;
    /// Adds the loss gradient of one step into `grads`.
    fn accumulate(
        &self,
        cache: &Self::Cache,
        outputs: &NetOutputs,
        mask: &AngleMask,
        target: &UpdateTarget,
        grads: &mut [f64],
    ) -> Result<(), TrainError>;
    fn apply(&mut self, grads: &[f64]) -> Result<(), TrainError>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateMode {
    /// Apply the gradient after every step.
    Online,
    /// `workers` episodes run on frozen parameters; their summed gradient
    /// is applied once per group.
    Synchronous { workers: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    pub variant: Variant,
    pub episodes: u64,
    pub seed: u64,
    /// First episode index (non-zero when resuming).
    pub start_episode: u64,
    pub mode: UpdateMode,
    /// Sample the stop decision before acquiring the next angle.
    pub decide_before_acquire: bool,
    /// Never update the terminal head.
    pub freeze_terminal: bool,
}

impl LoopConfig {
    pub fn new(variant: Variant, episodes: u64, seed: u64) -> Self {
        Self {
            variant,
            episodes,
            seed,
            start_episode: 0,
            mode: UpdateMode::Online,
            decide_before_acquire: false,
            freeze_terminal: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Sampled stop (terminal decision or stop action).
    Decision,
    /// Step limit reached.
    Cap,
}

/// One iteration of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub k: usize,
    /// Acquired angle, or `None` when the iteration only stopped.
    pub angle: Option<usize>,
    pub decision: u8,
    pub psnr_before: f64,
    pub psnr_after: f64,
    pub td: Option<TdRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub id: String,
    pub label: String,
    pub n_angles: usize,
    pub final_psnr: f64,
    pub episode_return: f64,
    pub stop: StopReason,
    pub mean_abs_td: f64,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub summary: EpisodeSummary,
    pub steps: Vec<StepLog>,
}

/// Per-episode random stream: depends only on the run seed and the index.
pub fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng
}

/// Categorical draw by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn sample_bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// Where a step's gradient goes.
enum Sink<'a, A> {
    Apply(&'a mut A, Vec<f64>),
    Accumulate(&'a A, &'a mut Vec<f64>),
}

impl<A> Sink<'_, A> {
    fn update<S>(
        &mut self,
        cache: &A::Cache,
        out: &NetOutputs,
        mask: &AngleMask,
        target: &UpdateTarget,
    ) -> Result<(), TrainError>
    where
        A: ActorCritic<S>,
    {
        match self {
            Sink::Apply(agent, buf) => {
                buf.fill(0.0);
                agent.accumulate(cache, out, mask, target, buf)?;
                agent.apply(buf)
            }
            Sink::Accumulate(agent, grads) => agent.accumulate(cache, out, mask, target, grads),
        }
    }

    fn agent(&self) -> &A {
        match self {
            Sink::Apply(a, _) => a,
            Sink::Accumulate(a, _) => a,
        }
    }
}

struct Episode<'a, E: Environment> {
    env: &'a mut E,
    cfg: &'a LoopConfig,
    rng: &'a mut ChaCha8Rng,
}

impl<E: Environment> Episode<'_, E> {
    fn run<A: ActorCritic<E::State>>(self, sink: &mut Sink<'_, A>, episode: u64) -> Result<EpisodeOutcome, TrainError> {
        match (self.cfg.variant, self.cfg.decide_before_acquire) {
            (Variant::Naive, _) => self.run_naive(sink, episode),
            (Variant::Terminal, false) => self.run_terminal_literal(sink, episode),
            (Variant::Terminal, true) => self.run_terminal_decide_first(sink, episode),
        }
    }

    fn finish(&mut self, episode: u64, n_angles: usize, final_psnr: f64, stop: StopReason, steps: Vec<StepLog>) -> EpisodeOutcome {
        let tds: Vec<f64> = steps.iter().filter_map(|s| s.td.map(|t| t.delta.abs())).collect();
        let mean_abs_td = if tds.is_empty() { 0.0 } else { tds.iter().sum::<f64>() / tds.len() as f64 };
        EpisodeOutcome {
            summary: EpisodeSummary {
                episode,
                id: self.env.id().to_string(),
                label: self.env.label().to_string(),
                n_angles,
                final_psnr,
                episode_return: -self.env.cost() * n_angles as f64 + final_psnr,
                stop,
                mean_abs_td,
            },
            steps,
        }
    }

    fn terminal_term(&self, psnr_k: f64, vc_k: f64) -> TerminalTerm {
        if self.cfg.freeze_terminal {
            TerminalTerm::Skipped
        } else {
            TerminalTerm::Advantage(psnr_k - vc_k)
        }
    }

    /// Acquire θ_k, then sample d_k from x̂_k.
    fn run_terminal_literal<A: ActorCritic<E::State>>(mut self, sink: &mut Sink<'_, A>, episode: u64) -> Result<EpisodeOutcome, TrainError> {
        let m = self.env.max_steps();
        let reward = -self.env.cost();
        let mut x = self.env.reset();
        let mut psnr_k = self.env.quality(&x)?;
        let mut steps = Vec::new();
        let mut k = 0;
        loop {
            let mask = self.env.mask(&x);
            let (out, cache) = sink.agent().evaluate(&x, &mask)?;
            let theta = sample_categorical(&out.action_probs, self.rng);
            let next = self.env.acquire(&x, theta)?;
            let psnr_next = self.env.quality(&next)?;
            let d = sample_bernoulli(out.term_prob, self.rng);
            let at_cap = k + 1 == m;
            let (p_next, vc_next) = if at_cap {
                (1.0, 0.0)
            } else {
                let (o, _) = sink.agent().evaluate(&next, &self.env.mask(&next))?;
                (o.term_prob, o.value)
            };
            let td = td_error_terminal(reward, p_next, psnr_next, out.value, vc_next);
            let target = UpdateTarget {
                action: Some(theta),
                delta: td.delta,
                value_target: Some(td.target),
                terminal: self.terminal_term(psnr_k, out.value),
            };
            sink.update(&cache, &out, &mask, &target)?;
            steps.push(StepLog { k, angle: Some(theta), decision: d as u8, psnr_before: psnr_k, psnr_after: psnr_next, td: Some(td) });
            x = next;
            psnr_k = psnr_next;
            k += 1;
            if d {
                return Ok(self.finish(episode, k, psnr_k, StopReason::Decision, steps));
            }
            if k == m {
                return Ok(self.finish(episode, k, psnr_k, StopReason::Cap, steps));
            }
        }
    }

    /// Sample d_k from x̂_k first; acquire only when continuing.
    fn run_terminal_decide_first<A: ActorCritic<E::State>>(mut self, sink: &mut Sink<'_, A>, episode: u64) -> Result<EpisodeOutcome, TrainError> {
        let m = self.env.max_steps();
        let reward = -self.env.cost();
        let mut x = self.env.reset();
        let mut psnr_k = self.env.quality(&x)?;
        let mut steps = Vec::new();
        let mut k = 0;
        loop {
            if k == m {
                return Ok(self.finish(episode, k, psnr_k, StopReason::Cap, steps));
            }
            let mask = self.env.mask(&x);
            let (out, cache) = sink.agent().evaluate(&x, &mask)?;
            let d = sample_bernoulli(out.term_prob, self.rng);
            let term = self.terminal_term(psnr_k, out.value);
            if d {
                let target = UpdateTarget { action: None, delta: 0.0, value_target: None, terminal: term };
                sink.update(&cache, &out, &mask, &target)?;
                steps.push(StepLog { k, angle: None, decision: 1, psnr_before: psnr_k, psnr_after: psnr_k, td: None });
                return Ok(self.finish(episode, k, psnr_k, StopReason::Decision, steps));
            }
            let theta = sample_categorical(&out.action_probs, self.rng);
            let next = self.env.acquire(&x, theta)?;
            let psnr_next = self.env.quality(&next)?;
            let (p_next, vc_next) = if k + 1 == m {
                (1.0, 0.0)
            } else {
                let (o, _) = sink.agent().evaluate(&next, &self.env.mask(&next))?;
                (o.term_prob, o.value)
            };
            let td = td_error_terminal(reward, p_next, psnr_next, out.value, vc_next);
            let target = UpdateTarget { action: Some(theta), delta: td.delta, value_target: Some(td.target), terminal: term };
            sink.update(&cache, &out, &mask, &target)?;
            steps.push(StepLog { k, angle: Some(theta), decision: 0, psnr_before: psnr_k, psnr_after: psnr_next, td: Some(td) });
            x = next;
            psnr_k = psnr_next;
            k += 1;
        }
    }

    /// Stop action appended to the action space as its last index; at the
    /// step cap an angle action still bootstraps from V̂(x̂_{k+1}).
    fn run_naive<A: ActorCritic<E::State>>(mut self, sink: &mut Sink<'_, A>, episode: u64) -> Result<EpisodeOutcome, TrainError> {
        let n_actions = sink.agent().n_actions();
        if n_actions < 2 {
            return Err(TrainError::Config("naive stopping needs at least one angle plus the stop action".into()));
        }
        let stop_action = n_actions - 1;
        let m = self.env.max_steps();
        let reward = -self.env.cost();
        let mut x = self.env.reset();
        let mut psnr_k = self.env.quality(&x)?;
        let mut steps = Vec::new();
        let mut k = 0;
        loop {
            let mask = self.env.mask(&x);
            let (out, cache) = sink.agent().evaluate(&x, &mask)?;
            let a = sample_categorical(&out.action_probs, self.rng);
            let terminated = a == stop_action;
            let (next, psnr_next) = if terminated {
                (x.clone(), psnr_k)
            } else {
                let n = self.env.acquire(&x, a)?;
                let q = self.env.quality(&n)?;
                (n, q)
            };
            let v_next = if terminated {
                0.0
            } else {
                sink.agent().evaluate(&next, &self.env.mask(&next))?.0.value
            };
            let td = td_error_naive(reward, psnr_next, out.value, v_next, terminated);
            let target = UpdateTarget { action: Some(a), delta: td.delta, value_target: Some(td.target), terminal: TerminalTerm::Absent };
            sink.update(&cache, &out, &mask, &target)?;
            steps.push(StepLog {
                k,
                angle: (!terminated).then_some(a),
                decision: terminated as u8,
                psnr_before: psnr_k,
                psnr_after: psnr_next,
                td: Some(td),
            });
            x = next;
            psnr_k = psnr_next;
            k += 1;
            let n_angles = self.env.mask(&x).len();
            if terminated {
                return Ok(self.finish(episode, n_angles, psnr_k, StopReason::Decision, steps));
            }
            if k == m {
                return Ok(self.finish(episode, n_angles, psnr_k, StopReason::Cap, steps));
            }
        }
    }
}

/// Runs one episode with online updates.
pub fn run_episode_online<Src, A>(cfg: &LoopConfig, source: &Src, agent: &mut A, episode: u64) -> Result<EpisodeOutcome, TrainError>
where
    Src: EpisodeSource,
    A: ActorCritic<<Src::Env as Environment>::State>,
{
    let mut rng = episode_rng(cfg.seed, episode);
    let mut env = source.make(episode, &mut rng)?;
    let buf = vec![0.0; agent.n_params()];
    let mut sink = Sink::Apply(agent, buf);
    Episode { env: &mut env, cfg, rng: &mut rng }.run(&mut sink, episode)
}

/// Runs one episode on frozen parameters, adding its gradient to `grads`.
pub fn run_episode_accumulate<Src, A>(cfg: &LoopConfig, source: &Src, agent: &A, episode: u64, grads: &mut Vec<f64>) -> Result<EpisodeOutcome, TrainError>
where
    Src: EpisodeSource,
    A: ActorCritic<<Src::Env as Environment>::State>,
{
    let mut rng = episode_rng(cfg.seed, episode);
    let mut env = source.make(episode, &mut rng)?;
    let mut sink = Sink::Accumulate(agent, grads);
    Episode { env: &mut env, cfg, rng: &mut rng }.run(&mut sink, episode)
}

/// Main training loop. `on_episode` is called after each episode's
/// updates have been applied (after each group in synchronous mode).
pub fn train<Src, A>(
    cfg: &LoopConfig,
    source: &Src,
    agent: &mut A,
    mut on_episode: impl FnMut(&EpisodeOutcome, &A) -> Result<(), TrainError>,
) -> Result<TrainTrace, TrainError>
where
    Src: EpisodeSource,
    A: ActorCritic<<Src::Env as Environment>::State>,
{
    if cfg.episodes == 0 {
        return Err(TrainError::Config("episodes must be at least 1".into()));
    }
    let end = cfg.start_episode + cfg.episodes;
    let mut trace = TrainTrace::default();
    match cfg.mode {
        UpdateMode::Online => {
            for e in cfg.start_episode..end {
                let out = run_episode_online(cfg, source, agent, e)?;
                on_episode(&out, agent)?;
                trace.episodes.push(out.summary);
            }
        }
        UpdateMode::Synchronous { workers } => {
            if workers == 0 {
                return Err(TrainError::Config("workers must be at least 1".into()));
            }
            let n = agent.n_params();
            let mut e = cfg.start_episode;
            while e < end {
                let group: Vec<u64> = (e..end.min(e + workers as u64)).collect();
                let frozen: &A = agent;
                let results: Vec<Result<(EpisodeOutcome, Vec<f64>), TrainError>> = group
                    .par_iter()
                    .map(|&ep| {
                        let mut g = vec![0.0; n];
                        let out = run_episode_accumulate(cfg, source, frozen, ep, &mut g)?;
                        Ok((out, g))
                    })
                    .collect();
                let mut total = vec![0.0; n];
                let mut outs = Vec::with_capacity(results.len());
                for r in results {
                    let (out, g) = r?;
                    for (t, v) in total.iter_mut().zip(&g) {
                        *t += v;
                    }
                    outs.push(out);
                }
                agent.apply(&total)?;
                for out in outs {
                    on_episode(&out, agent)?;
                    trace.episodes.push(out.summary);
                }
                e += group.len() as u64;
            }
        }
    }
    Ok(trace)
}

/// Algorithm 1: stop action in the action space.
pub fn train_naive<Src, A>(cfg: &LoopConfig, source: &Src, agent: &mut A) -> Result<TrainTrace, TrainError>
where
    Src: EpisodeSource,
    A: ActorCritic<<Src::Env as Environment>::State>,
{
    let cfg = LoopConfig { variant: Variant::Naive, ..cfg.clone() };
    train(&cfg, source, agent, |_, _| Ok(()))
}

/// Algorithm 2: separate terminal policy.
pub fn train_terminal<Src, A>(cfg: &LoopConfig, source: &Src, agent: &mut A) -> Result<TrainTrace, TrainError>
where
    Src: EpisodeSource,
    A: ActorCritic<<Src::Env as Environment>::State>,
{
    let cfg = LoopConfig { variant: Variant::Terminal, ..cfg.clone() };
    train(&cfg, source, agent, |_, _| Ok(()))
}

/// Per-window, per-label statistics of episode length.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowStat {
    pub window: u64,
    pub label: String,
    pub count: usize,
    pub mean_angles: f64,
    pub var_angles: f64,
    pub mean_psnr: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    pub episodes: Vec<EpisodeSummary>,
}

pub const TRACE_HEADER: &str = "episode\tid\tlabel\tn_angles\tfinal_psnr\treturn\tstop\tmean_abs_td";
pub const WINDOW_HEADER: &str = "window_start\tlabel\tcount\tmean_angles\tvar_angles\tmean_psnr\tmean_return";

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Groups episodes by `episode / window` and label; variance is the
    /// population variance.
    pub fn aggregate(&self, window: u64) -> Vec<WindowStat> {
        let mut groups: std::collections::BTreeMap<(u64, String), Vec<&EpisodeSummary>> = Default::default();
        for e in &self.episodes {
            groups.entry((e.episode / window * window, e.label.clone())).or_default().push(e);
        }
        groups
            .into_iter()
            .map(|((w, label), es)| {
                let n = es.len() as f64;
                let mean = es.iter().map(|e| e.n_angles as f64).sum::<f64>() / n;
                let var = es.iter().map(|e| (e.n_angles as f64 - mean).powi(2)).sum::<f64>() / n;
                WindowStat {
                    window: w,
                    label,
                    count: es.len(),
                    mean_angles: mean,
                    var_angles: var,
                    mean_psnr: es.iter().map(|e| e.final_psnr).sum::<f64>() / n,
                    mean_return: es.iter().map(|e| e.episode_return).sum::<f64>() / n,
                }
            })
            .collect()
    }

    pub fn write_episode_row<W: Write>(out: &mut W, e: &EpisodeSummary) -> io::Result<()> {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{:.6}",
            e.episode,
            e.id,
            e.label,
            e.n_angles,
            e.final_psnr,
            e.episode_return,
            match e.stop {
                StopReason::Decision => "decision",
                StopReason::Cap => "cap",
            },
            e.mean_abs_td
        )
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for e in &self.episodes {
            Self::write_episode_row(&mut out, e)?;
        }
        Ok(())
    }

    pub fn write_windows<W: Write>(&self, window: u64, mut out: W) -> io::Result<()> {
        writeln!(out, "{WINDOW_HEADER}")?;
        for s in self.aggregate(window) {
            writeln!(
                out,
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                s.window, s.label, s.count, s.mean_angles, s.var_angles, s.mean_psnr, s.mean_return
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categorical_skips_zero_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let a = sample_categorical(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(a == 1 || a == 3);
        }
    }

    #[test]
    fn episode_streams_are_independent_of_order() {
        let a: u64 = episode_rng(5, 3).random();
        let _: u64 = episode_rng(5, 2).random();
        assert_eq!(a, episode_rng(5, 3).random::<u64>());
        assert_ne!(a, episode_rng(5, 4).random::<u64>());
    }

    #[test]
    fn windows_use_population_variance() {
        let mk = |episode, n| EpisodeSummary {
            episode,
            id: "x".into(),
            label: "tri".into(),
            n_angles: n,
            final_psnr: 20.0,
            episode_return: 0.0,
            stop: StopReason::Cap,
            mean_abs_td: 0.0,
        };
        let t = TrainTrace { episodes: vec![mk(0, 2), mk(1, 4), mk(1000, 7)] };
        let w = t.aggregate(1000);
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].mean_angles, w[0].var_angles), (3.0, 1.0));
        assert_eq!(w[1].window, 1000);
    }
}
