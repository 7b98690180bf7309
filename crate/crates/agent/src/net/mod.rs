//! Shared-encoder actor-critic network with three heads: a masked softmax
//! over angles, a scalar value, and a sigmoid terminal probability.

pub mod layers;

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soed_core::{AngleMask, Image};
use thiserror::Error;

use layers::Shape;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("no unmasked action available")]
    NoValidAction,
}

/// Architecture hyper-parameters. The encoder is a stack of
/// conv3×3 → group-norm → leaky-ReLU → max-pool blocks; only the first
/// convolution is strided.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub grid: usize,
    pub channels: Vec<usize>,
    pub pools: Vec<usize>,
    pub first_stride: usize,
    pub groups: usize,
    pub leaky_slope: f64,
    pub n_actions: usize,
}

impl NetConfig {
    /// Full-size network at G=240 (flatten width 2352).
    pub fn paper(n_actions: usize) -> Self {
        Self {
            grid: 240,
            channels: vec![12, 24, 48],
            pools: vec![2, 2, 4],
            first_stride: 2,
            groups: 4,
            leaky_slope: 0.2,
            n_actions,
        }
    }

    /// G=64 variant: last pool kernel 2, flatten width 768.
    pub fn desk(n_actions: usize) -> Self {
        Self {
            grid: 64,
            pools: vec![2, 2, 2],
            ..Self::paper(n_actions)
        }
    }

    /// Two-block encoder at G=16, used for gradient checks.
    pub fn reduced(n_actions: usize) -> Self {
        Self {
            grid: 16,
            channels: vec![12, 24],
            pools: vec![2, 2],
            ..Self::paper(n_actions)
        }
    }

    /// Picks the standard architecture for a grid size.
    pub fn for_grid(grid: usize, n_actions: usize) -> Result<Self, NetError> {
        let cfg = match grid {
            240 => Self::paper(n_actions),
            64 => Self::desk(n_actions),
            16 => Self::reduced(n_actions),
            g => {
                let mut c = Self::desk(n_actions);
                c.grid = g;
                c
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.channels.is_empty() || self.channels.len() != self.pools.len() {
            return Err(NetError::Config("channels and pools must be non-empty and equal length".into()));
        }
        if self.channels.iter().any(|c| c % self.groups != 0) {
            return Err(NetError::Config(format!("channels must be divisible by {} groups", self.groups)));
        }
        if self.n_actions == 0 || self.first_stride == 0 || self.pools.contains(&0) {
            return Err(NetError::Config("zero-sized action space, stride or pool".into()));
        }
        let (_, flat) = self.block_shapes();
        if flat == 0 {
            return Err(NetError::Config(format!("grid {} collapses to an empty feature map", self.grid)));
        }
        Ok(())
    }

    /// Per-block (input, conv output, pooled output) shapes and the
    /// flatten width.
    pub fn block_shapes(&self) -> (Vec<(Shape, Shape, Shape)>, usize) {
        let mut s = Shape { c: 1, h: self.grid, w: self.grid };
        let mut out = Vec::new();
        for (i, (&c, &p)) in self.channels.iter().zip(&self.pools).enumerate() {
            let stride = if i == 0 { self.first_stride } else { 1 };
            let conv = layers::conv_out(s, c, stride);
            let pooled = layers::pool_out(conv, p);
            out.push((s, conv, pooled));
            s = pooled;
        }
        (out, s.len())
    }

    pub fn flat_features(&self) -> usize {
        self.block_shapes().1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayout {
    pub conv_w: Range<usize>,
    pub conv_b: Range<usize>,
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
}

/// Offsets of every parameter tensor within the flat vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub blocks: Vec<BlockLayout>,
    pub actor_w: Range<usize>,
    pub actor_b: Range<usize>,
    pub critic1_w: Range<usize>,
    pub critic1_b: Range<usize>,
    pub critic2_w: Range<usize>,
    pub critic2_b: Range<usize>,
    pub term_w: Range<usize>,
    pub term_b: Range<usize>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &NetConfig) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let mut blocks = Vec::new();
        let mut c_in = 1;
        for &c in &cfg.channels {
            blocks.push(BlockLayout {
                conv_w: take(c * c_in * 9),
                conv_b: take(c),
                gamma: take(c),
                beta: take(c),
            });
            c_in = c;
        }
        let f = cfg.flat_features();
        let a = cfg.n_actions;
        let actor_w = take(a * f);
        let actor_b = take(a);
        let critic1_w = take(f * f);
        let critic1_b = take(f);
        let critic2_w = take(f);
        let critic2_b = take(1);
        let term_w = take(f);
        let term_b = take(1);
        Self {
            blocks,
            actor_w,
            actor_b,
            critic1_w,
            critic1_b,
            critic2_w,
            critic2_b,
            term_w,
            term_b,
            total: at,
        }
    }

    /// Named tensors with their shapes, for reporting.
    pub fn tensors(&self, cfg: &NetConfig) -> Vec<(String, Vec<usize>, Range<usize>)> {
        let f = cfg.flat_features();
        let mut out = Vec::new();
        let mut c_in = 1;
        for (i, (b, &c)) in self.blocks.iter().zip(&cfg.channels).enumerate() {
            out.push((format!("conv{}.weight", i + 1), vec![c, c_in, 3, 3], b.conv_w.clone()));
            out.push((format!("conv{}.bias", i + 1), vec![c], b.conv_b.clone()));
            out.push((format!("norm{}.weight", i + 1), vec![c], b.gamma.clone()));
            out.push((format!("norm{}.bias", i + 1), vec![c], b.beta.clone()));
            c_in = c;
        }
        out.push(("actor.weight".into(), vec![cfg.n_actions, f], self.actor_w.clone()));
        out.push(("actor.bias".into(), vec![cfg.n_actions], self.actor_b.clone()));
        out.push(("critic.0.weight".into(), vec![f, f], self.critic1_w.clone()));
        out.push(("critic.0.bias".into(), vec![f], self.critic1_b.clone()));
        out.push(("critic.2.weight".into(), vec![1, f], self.critic2_w.clone()));
        out.push(("critic.2.bias".into(), vec![1], self.critic2_b.clone()));
        out.push(("terminal.weight".into(), vec![1, f], self.term_w.clone()));
        out.push(("terminal.bias".into(), vec![1], self.term_b.clone()));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetParams {
    config: NetConfig,
    layout: Layout,
    data: Vec<f64>,
}

impl NetParams {
    /// Fan-in scaled uniform weights `U(−1/√fan_in, 1/√fan_in)`, zero
    /// biases, unit group-norm scales.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self, NetError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut data = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |r: &Range<usize>, fan_in: usize, data: &mut [f64]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut data[r.clone()] {
                *v = rng.random_range(-bound..bound);
            }
        };
        let mut c_in = 1;
        for (b, &c) in layout.blocks.iter().zip(&config.channels) {
            fill(&b.conv_w, c_in * 9, &mut data);
            data[b.gamma.clone()].fill(1.0);
            c_in = c;
        }
        let f = config.flat_features();
        fill(&layout.actor_w, f, &mut data);
        fill(&layout.critic1_w, f, &mut data);
        fill(&layout.critic2_w, f, &mut data);
        fill(&layout.term_w, f, &mut data);
        Ok(Self { config, layout, data })
    }

    pub fn from_parts(config: NetConfig, data: Vec<f64>) -> Result<Self, NetError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.total {
            return Err(NetError::ShapeMismatch(format!(
                "parameter vector has {} entries, architecture needs {}",
                data.len(),
                layout.total
            )));
        }
        Ok(Self { config, layout, data })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Zeroes the terminal weights and sets its bias, pinning the terminal
    /// probability to `sigmoid(bias)` for every input.
    pub fn pin_terminal(&mut self, bias: f64) {
        let (w, b) = (self.layout.term_w.clone(), self.layout.term_b.clone());
        self.data[w].fill(0.0);
        self.data[b].fill(bias);
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    /// Inference pass.
    pub fn forward(&self, image: &Image, mask: &AngleMask) -> Result<NetOutputs, NetError> {
        Ok(self.forward_cached(image, mask)?.0)
    }

    pub fn forward_cached(&self, image: &Image, mask: &AngleMask) -> Result<(NetOutputs, ForwardCache), NetError> {
        let cfg = &self.config;
        if image.size() != cfg.grid {
            return Err(NetError::ShapeMismatch(format!("image is {0}×{0}, network expects {1}×{1}", image.size(), cfg.grid)));
        }
        let (shapes, flat) = cfg.block_shapes();
        let mut x = image.data().to_vec();
        let mut blocks = Vec::with_capacity(shapes.len());
        for (i, ((ins, convs, pooled), bl)) in shapes.iter().zip(&self.layout.blocks).enumerate() {
            let stride = if i == 0 { cfg.first_stride } else { 1 };
            let mut z = vec![0.0; convs.len()];
            layers::conv3x3_forward(&x, *ins, &self.data[bl.conv_w.clone()], &self.data[bl.conv_b.clone()], stride, &mut z, *convs);
            let mut y = vec![0.0; convs.len()];
            let gn = layers::group_norm_forward(&z, *convs, cfg.groups, &self.data[bl.gamma.clone()], &self.data[bl.beta.clone()], &mut y);
            let mut a = y.clone();
            layers::leaky_relu_inplace(&mut a, cfg.leaky_slope);
            let mut p = vec![0.0; pooled.len()];
            let argmax = layers::max_pool_forward(&a, *convs, cfg.pools[i], &mut p);
            blocks.push(BlockCache { input: x, gn, pre_act: y, argmax });
            x = p;
        }
        debug_assert_eq!(x.len(), flat);
        let features = x;

        let mut logits = vec![0.0; cfg.n_actions];
        layers::linear_forward(&self.data[self.layout.actor_w.clone()], &self.data[self.layout.actor_b.clone()], &features, &mut logits);
        let action_probs = masked_softmax(&logits, mask)?;

        let mut hidden_pre = vec![0.0; flat];
        layers::linear_forward(&self.data[self.layout.critic1_w.clone()], &self.data[self.layout.critic1_b.clone()], &features, &mut hidden_pre);
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let mut value = [0.0];
        layers::linear_forward(&self.data[self.layout.critic2_w.clone()], &self.data[self.layout.critic2_b.clone()], &hidden, &mut value);

        let mut term_logit = [0.0];
        layers::linear_forward(&self.data[self.layout.term_w.clone()], &self.data[self.layout.term_b.clone()], &features, &mut term_logit);

        let out = NetOutputs {
            action_probs,
            value: value[0],
            term_logit: term_logit[0],
            term_prob: sigmoid(term_logit[0]),
        };
        Ok((out, ForwardCache { blocks, features, hidden_pre, hidden }))
    }

    /// Back-propagates head gradients (w.r.t. logits, value and terminal
    /// logit) into `grads`. Zero head gradients skip their branch.
    pub fn backward(&self, cache: &ForwardCache, heads: &HeadGrads, grads: &mut [f64]) -> Result<(), NetError> {
        let cfg = &self.config;
        let l = &self.layout;
        if grads.len() != self.data.len() {
            return Err(NetError::ShapeMismatch(format!("gradient has {} entries, parameters {}", grads.len(), self.data.len())));
        }
        if heads.logits.len() != cfg.n_actions {
            return Err(NetError::ShapeMismatch("logit gradient length".into()));
        }
        let f = cache.features.len();
        let mut d_feat = vec![0.0; f];

        if heads.logits.iter().any(|&g| g != 0.0) {
            let (dw, db) = split_two(grads, &l.actor_w, &l.actor_b);
            layers::linear_backward(&self.data[l.actor_w.clone()], &cache.features, &heads.logits, dw, db, &mut d_feat);
        }
        if heads.value != 0.0 {
            let mut d_hidden = vec![0.0; f];
            {
                let (dw, db) = split_two(grads, &l.critic2_w, &l.critic2_b);
                layers::linear_backward(&self.data[l.critic2_w.clone()], &cache.hidden, &[heads.value], dw, db, &mut d_hidden);
            }
            for (d, &h) in d_hidden.iter_mut().zip(&cache.hidden_pre) {
                if h <= 0.0 {
                    *d = 0.0;
                }
            }
            let (dw, db) = split_two(grads, &l.critic1_w, &l.critic1_b);
            layers::linear_backward(&self.data[l.critic1_w.clone()], &cache.features, &d_hidden, dw, db, &mut d_feat);
        }
        if heads.term_logit != 0.0 {
            let (dw, db) = split_two(grads, &l.term_w, &l.term_b);
            layers::linear_backward(&self.data[l.term_w.clone()], &cache.features, &[heads.term_logit], dw, db, &mut d_feat);
        }
        if d_feat.iter().all(|&g| g == 0.0) {
            return Ok(());
        }

        let (shapes, _) = cfg.block_shapes();
        let mut d_out = d_feat;
        for i in (0..shapes.len()).rev() {
            let (ins, convs, _) = shapes[i];
            let bl = &l.blocks[i];
            let bc = &cache.blocks[i];
            let stride = if i == 0 { cfg.first_stride } else { 1 };
            let mut d_act = vec![0.0; convs.len()];
            layers::max_pool_backward(&bc.argmax, &d_out, &mut d_act);
            layers::leaky_relu_backward(&bc.pre_act, &mut d_act, cfg.leaky_slope);
            let mut d_z = vec![0.0; convs.len()];
            {
                let (dg, db) = split_two(grads, &bl.gamma, &bl.beta);
                layers::group_norm_backward(&bc.gn, convs, cfg.groups, &self.data[bl.gamma.clone()], &d_act, dg, db, &mut d_z);
            }
            let mut d_in = if i > 0 { Some(vec![0.0; ins.len()]) } else { None };
            {
                let (dw, db) = split_two(grads, &bl.conv_w, &bl.conv_b);
                layers::conv3x3_backward(&bc.input, ins, &self.data[bl.conv_w.clone()], stride, &d_z, convs, dw, db, d_in.as_deref_mut());
            }
            match d_in {
                Some(d) => d_out = d,
                None => break,
            }
        }
        Ok(())
    }
}

/// Disjoint mutable views of two ranges where `a` precedes `b`.
fn split_two<'a>(g: &'a mut [f64], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = g.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetOutputs {
    pub action_probs: Vec<f64>,
    pub value: f64,
    pub term_logit: f64,
    pub term_prob: f64,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    input: Vec<f64>,
    gn: layers::GroupNormCache,
    pre_act: Vec<f64>,
    argmax: Vec<u32>,
}

/// Activations retained by [`NetParams::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    blocks: Vec<BlockCache>,
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl ForwardCache {
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// Loss gradients with respect to the three head outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub logits: Vec<f64>,
    pub value: f64,
    pub term_logit: f64,
}

impl HeadGrads {
    pub fn zeros(n_actions: usize) -> Self {
        Self { logits: vec![0.0; n_actions], value: 0.0, term_logit: 0.0 }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// True when action `a` may be chosen: angle actions must not be acquired
/// already; any index past the angle range (the stop action) is always
/// available.
pub fn action_available(mask: &AngleMask, a: usize) -> bool {
    a >= soed_core::N_ANGLES || !mask.contains(a)
}

/// Softmax restricted to available actions; masked entries are exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &AngleMask) -> Result<Vec<f64>, NetError> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(a, _)| action_available(mask, a))
        .map(|(_, &z)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NetError::NoValidAction);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(a, &z)| if action_available(mask, a) { (z - max).exp() } else { 0.0 })
        .collect();
    let s: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= s;
    }
    Ok(probs)
}
