//! The neural actor-critic used with reconstruction states.

use soed_core::{AngleMask, Image, ReconState};

use crate::loss::{accumulate_cached, TerminalTerm, UpdateTarget};
use crate::net::{ForwardCache, NetOutputs, NetParams};
use crate::optim::{Adam, OptimizerConfig};
use crate::train::{ActorCritic, TrainError};

/// States the network can read.
pub trait ImageState {
    fn image(&self) -> &Image;
}

impl ImageState for ReconState {
    fn image(&self) -> &Image {
        &self.image
    }
}

impl ImageState for Image {
    fn image(&self) -> &Image {
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetAgent {
    pub params: NetParams,
    pub adam: Adam,
    pub opt: OptimizerConfig,
}

impl NetAgent {
    pub fn new(params: NetParams, opt: OptimizerConfig) -> Self {
        let adam = Adam::new(params.len());
        Self { params, adam, opt }
    }
}

impl<S: ImageState> ActorCritic<S> for NetAgent {
    type Cache = ForwardCache;

    fn n_actions(&self) -> usize {
        self.params.config().n_actions
    }

    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn evaluate(&self, state: &S, mask: &AngleMask) -> Result<(NetOutputs, ForwardCache), TrainError> {
        Ok(self.params.forward_cached(state.image(), mask)?)
    }

    fn accumulate(
        &self,
        cache: &ForwardCache,
        outputs: &NetOutputs,
        mask: &AngleMask,
        target: &UpdateTarget,
        grads: &mut [f64],
    ) -> Result<(), TrainError> {
        let mut t = *target;
        if self.params.config().n_actions > soed_core::N_ANGLES {
            t.terminal = TerminalTerm::Absent;
        }
        accumulate_cached(&self.params, cache, outputs, mask, &t, &self.opt.loss_weights, grads)?;
        Ok(())
    }

    fn apply(&mut self, grads: &[f64]) -> Result<(), TrainError> {
        self.adam.step(&self.opt, self.params.data_mut(), grads)?;
        Ok(())
    }
}
