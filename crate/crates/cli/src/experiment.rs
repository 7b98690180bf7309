//! Experiment building blocks shared by the subcommands and the acceptance
//! suite: phantom pools, episode sources, training and evaluation runs.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soed_agent::checkpoint::Checkpoint;
use soed_agent::ct::SimulatedSource;
use soed_agent::eval::{run_policy_episode, EvalMode, EvalRecord};
use soed_agent::train::{self, EpisodeOutcome};
use soed_agent::{LoopConfig, LossWeights, NetAgent, NetConfig, NetParams, OptimizerConfig, TrainTrace, UpdateMode, Variant};
use soed_core::env::EnvConfig;
use soed_core::phantom::{generate_phantom, read_manifest, sample_specs, training_rotations, validation_rotations};
use soed_core::{Geometry, Phantom, Projector, RewardSpec, ScanEnv, SirtConfig, N_ANGLES};

use crate::config::{RunConfig, VariantKind};
use crate::error::CliError;

pub fn variant(cfg: &RunConfig) -> Variant {
    match cfg.train_variant {
        VariantKind::Naive => Variant::Naive,
        VariantKind::Terminal => Variant::Terminal,
    }
}

pub fn n_actions(v: Variant) -> usize {
    match v {
        Variant::Naive => N_ANGLES + 1,
        Variant::Terminal => N_ANGLES,
    }
}

pub fn env_config(cfg: &RunConfig) -> Result<EnvConfig, CliError> {
    Ok(EnvConfig {
        reward: RewardSpec::new(cfg.env_cost_b).map_err(|e| CliError::Config(e.to_string()))?,
        max_steps: cfg.env_max_steps,
        sirt: SirtConfig { iterations: cfg.env_sirt_iterations, relaxation: cfg.env_sirt_relaxation },
    })
}

pub fn optimizer_config(cfg: &RunConfig) -> Result<OptimizerConfig, CliError> {
    let opt = OptimizerConfig {
        learning_rate: cfg.optim_learning_rate,
        weight_decay: cfg.optim_weight_decay,
        betas: (cfg.optim_beta1, cfg.optim_beta2),
        eps: cfg.optim_eps,
        loss_weights: LossWeights {
            actor: cfg.optim_w_actor,
            critic: cfg.optim_w_critic,
            terminal: cfg.optim_w_terminal,
            entropy: cfg.optim_w_entropy,
        },
    };
    opt.validate().map_err(CliError::Config)?;
    Ok(opt)
}

pub fn loop_config(cfg: &RunConfig, start_episode: u64) -> LoopConfig {
    LoopConfig {
        start_episode,
        mode: if cfg.train_workers > 1 {
            UpdateMode::Synchronous { workers: cfg.train_workers }
        } else {
            UpdateMode::Online
        },
        decide_before_acquire: cfg.train_decide_before_acquire,
        ..LoopConfig::new(variant(cfg), cfg.train_episodes.saturating_sub(start_episode), cfg.seed)
    }
}

fn rotation_pool(name: &str) -> Vec<f64> {
    if name == "validation" {
        validation_rotations()
    } else {
        training_rotations()
    }
}

/// Phantom pool: read from a manifest when one is configured, otherwise
/// sampled from `seed`.
pub fn phantom_pool(cfg: &RunConfig, seed: u64, n_per_shape: usize, rotations: &str) -> Result<Vec<Arc<Phantom>>, CliError> {
    let specs = match &cfg.data_manifest {
        Some(path) => {
            let f = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            read_manifest(BufReader::new(f))
                .map_err(|e| CliError::Data(e.to_string()))?
                .into_iter()
                .map(|r| r.spec)
                .collect()
        }
        None => sample_specs(seed, n_per_shape, &rotation_pool(rotations)).map_err(|e| CliError::Config(e.to_string()))?,
    };
    specs
        .iter()
        .map(|s| generate_phantom(s, cfg.data_grid).map(Arc::new).map_err(|e| CliError::Data(e.to_string())))
        .collect()
}

pub fn projector(grid: usize) -> Arc<Projector> {
    Arc::new(Projector::new(Geometry::square(grid)))
}

pub fn training_source(cfg: &RunConfig) -> Result<SimulatedSource, CliError> {
    Ok(SimulatedSource {
        projector: projector(cfg.data_grid),
        phantoms: phantom_pool(cfg, cfg.seed, cfg.data_n_per_shape, &cfg.data_rotations)?,
        eta: cfg.env_eta,
        env: env_config(cfg)?,
    })
}

/// Fresh agent, or the one stored in `cfg.train_resume`.
pub fn initial_agent(cfg: &RunConfig) -> Result<(NetAgent, u64), CliError> {
    let opt = optimizer_config(cfg)?;
    match &cfg.train_resume {
        Some(path) => {
            let ck = Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let want = n_actions(variant(cfg));
            let c = ck.params.config();
            if c.grid != cfg.data_grid || c.n_actions != want {
                return Err(CliError::Config(format!(
                    "checkpoint has G={} with {} actions; configuration needs G={} with {want}",
                    c.grid, c.n_actions, cfg.data_grid
                )));
            }
            Ok((NetAgent { params: ck.params, adam: ck.adam, opt }, ck.episodes_done))
        }
        None => {
            let net = NetConfig::for_grid(cfg.data_grid, n_actions(variant(cfg))).map_err(|e| CliError::Config(e.to_string()))?;
            let params = NetParams::init(net, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
            Ok((NetAgent::new(params, opt), 0))
        }
    }
}

pub fn checkpoint_of(agent: &NetAgent, episodes_done: u64) -> Checkpoint {
    Checkpoint { params: agent.params.clone(), adam: agent.adam.clone(), episodes_done }
}

/// Artifacts of a training run.
pub struct TrainedRun {
    pub agent: NetAgent,
    pub trace: TrainTrace,
    pub episodes_done: u64,
}

/// Trains until `cfg.train_episodes` episodes have been completed in total
/// (counting any resumed ones). With `out` set, streams the per-episode
/// trace and writes periodic and final checkpoints there.
pub fn train_run(
    cfg: &RunConfig,
    out: Option<&Path>,
    mut progress: impl FnMut(&EpisodeOutcome),
) -> Result<TrainedRun, CliError> {
    let source = training_source(cfg)?;
    let (mut agent, done) = initial_agent(cfg)?;
    if done >= cfg.train_episodes {
        return Err(CliError::Config(format!(
            "checkpoint already holds {done} episodes; train.episodes = {} leaves nothing to run",
            cfg.train_episodes
        )));
    }
    let lcfg = loop_config(cfg, done);
    let mut trace_out = match out {
        Some(dir) => {
            let mut w = BufWriter::new(fs::File::create(dir.join("trace.tsv"))?);
            writeln!(w, "{}", train::TRACE_HEADER)?;
            Some(w)
        }
        None => None,
    };
    let every = cfg.train_checkpoint_every;
    let trace = train::train(&lcfg, &source, &mut agent, |o, a| {
        progress(o);
        if let Some(w) = trace_out.as_mut() {
            TrainTrace::write_episode_row(w, &o.summary)?;
        }
        let n = o.summary.episode + 1;
        if let (Some(dir), true) = (out, every > 0 && n % every == 0) {
            w_flush(&mut trace_out)?;
            checkpoint_of(a, n)
                .save(&dir.join(format!("checkpoint-{n:06}.ckpt")))
                .map_err(|e| train::TrainError::Config(e.to_string()))?;
        }
        Ok(())
    })?;
    w_flush(&mut trace_out)?;
    let episodes_done = done + trace.len() as u64;
    if let Some(dir) = out {
        checkpoint_of(&agent, episodes_done)
            .save(&dir.join("checkpoint.ckpt"))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let w = BufWriter::new(fs::File::create(dir.join("windows.tsv"))?);
        trace.write_windows(cfg.train_trace_window.max(1), w)?;
    }
    Ok(TrainedRun { agent, trace, episodes_done })
}

fn w_flush(w: &mut Option<BufWriter<fs::File>>) -> std::io::Result<()> {
    match w {
        Some(w) => w.flush(),
        None => Ok(()),
    }
}

pub fn eval_mode(cfg: &RunConfig) -> EvalMode {
    if cfg.eval_mode == "greedy" {
        EvalMode::Greedy
    } else {
        EvalMode::Stochastic
    }
}

/// Deterministic per-episode seed for evaluation scans and policy draws.
fn eval_seed(seed: u64, condition_index: usize, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_e7a1);
    rng.set_stream(((condition_index as u64) << 32) | i as u64);
    rng
}

/// Evaluates `params` on freshly simulated validation scans at noise `eta`.
pub fn evaluate_synthetic(
    cfg: &RunConfig,
    params: &NetParams,
    phantoms: &[Arc<Phantom>],
    eta: f64,
    condition_index: usize,
) -> Result<Vec<EvalRecord>, CliError> {
    use rand::Rng;
    use rayon::prelude::*;
    let proj = projector(cfg.data_grid);
    let env_cfg = env_config(cfg)?;
    let condition = format!("eta={eta}");
    let v = variant(cfg);
    let mode = eval_mode(cfg);
    phantoms
        .par_iter()
        .enumerate()
        .map(|(i, ph)| {
            let mut rng = eval_seed(cfg.seed, condition_index, i);
            let noise_seed: u64 = rng.random();
            let env = ScanEnv::simulate(proj.clone(), ph, eta, noise_seed, &env_cfg).map_err(|e| CliError::Data(e.to_string()))?;
            run_policy_episode(params, &env, v, mode, cfg.train_decide_before_acquire, &condition, &mut rng)
                .map_err(|e| CliError::Runtime(e.to_string()))
        })
        .collect()
}

/// Evaluates on prepared environments (e.g. rebinned experimental scans).
pub fn evaluate_fixed(cfg: &RunConfig, params: &NetParams, envs: &[Arc<ScanEnv>], condition: &str) -> Result<Vec<EvalRecord>, CliError> {
    let v = variant(cfg);
    let mode = eval_mode(cfg);
    envs.iter()
        .enumerate()
        .map(|(i, env)| {
            let mut rng = eval_seed(cfg.seed, usize::MAX >> 32, i);
            run_policy_episode(params, env, v, mode, cfg.train_decide_before_acquire, condition, &mut rng)
                .map_err(|e| CliError::Runtime(e.to_string()))
        })
        .collect()
}
