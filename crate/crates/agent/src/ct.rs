//! Adapters between the tomography environment and the training loop.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use soed_core::env::EnvConfig;
use soed_core::{AngleMask, Phantom, Projector, ReconState, ScanEnv};

use crate::train::{EpisodeSource, Environment, TrainError};

/// Shared handle to a scan environment.
#[derive(Clone)]
pub struct CtEnv(pub Arc<ScanEnv>);

impl Environment for CtEnv {
    type State = ReconState;

    fn reset(&mut self) -> ReconState {
        self.0.reset()
    }

    fn acquire(&mut self, state: &ReconState, angle: usize) -> Result<ReconState, TrainError> {
        self.0.step(state, angle).map(|(s, _)| s).map_err(|e| TrainError::Env(e.to_string()))
    }

    fn quality(&mut self, state: &ReconState) -> Result<f64, TrainError> {
        self.0.terminal_reward(state).map_err(|e| TrainError::Env(e.to_string()))
    }

    fn mask(&self, state: &ReconState) -> AngleMask {
        state.mask
    }

    fn cost(&self) -> f64 {
        self.0.reward().cost_b
    }

    fn max_steps(&self) -> usize {
        self.0.max_steps()
    }

    fn label(&self) -> &str {
        self.0.label()
    }

    fn id(&self) -> &str {
        self.0.id()
    }
}

/// Draws a phantom uniformly from a pool and simulates a fresh noisy scan.
pub struct SimulatedSource {
    pub projector: Arc<Projector>,
    pub phantoms: Vec<Arc<Phantom>>,
    pub eta: f64,
    pub env: EnvConfig,
}

impl EpisodeSource for SimulatedSource {
    type Env = CtEnv;

    fn make(&self, _episode: u64, rng: &mut ChaCha8Rng) -> Result<CtEnv, TrainError> {
        if self.phantoms.is_empty() {
            return Err(TrainError::Config("empty phantom pool".into()));
        }
        let ph = &self.phantoms[rng.random_range(0..self.phantoms.len())];
        let noise_seed: u64 = rng.random();
        let env = ScanEnv::simulate(self.projector.clone(), ph, self.eta, noise_seed, &self.env)
            .map_err(|e| TrainError::Env(e.to_string()))?;
        Ok(CtEnv(Arc::new(env)))
    }
}

/// Draws uniformly from prepared environments (e.g. experimental scans).
pub struct FixedSource {
    pub envs: Vec<Arc<ScanEnv>>,
}

impl EpisodeSource for FixedSource {
    type Env = CtEnv;

    fn make(&self, _episode: u64, rng: &mut ChaCha8Rng) -> Result<CtEnv, TrainError> {
        if self.envs.is_empty() {
            return Err(TrainError::Config("no environments".into()));
        }
        Ok(CtEnv(self.envs[rng.random_range(0..self.envs.len())].clone()))
    }
}
