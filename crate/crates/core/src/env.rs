//! Sequential scanning environment.
//!
//! The belief state is the SIRT reconstruction from every angle acquired so
//! far. Noisy measurements for all 180 views are fixed when the environment
//! is built, so a state is a pure function of (object, noise seed, mask).

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::N_ANGLES;
use crate::image::Image;
use crate::mask::AngleMask;
use crate::metrics::{psnr, MetricError};
use crate::noise::{add_noise, NoiseModel};
use crate::phantom::Phantom;
use crate::projector::{ProjectionError, Projector, Sinogram};
use crate::sirt::{sirt_reconstruct, SirtConfig, SirtError};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("angle {0} already acquired")]
    AngleRepeated(usize),
    #[error("angle index {0} outside [0, 180)")]
    AngleOutOfRange(usize),
    #[error("episode exhausted: step {step} exceeds the limit of {max_steps}")]
    EpisodeExhausted { step: usize, max_steps: usize },
    #[error("invalid environment setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Sirt(#[from] SirtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSpec {
    /// Magnitude of the per-step cost; the continuation reward is `-cost_b`.
    pub cost_b: f64,
}

impl RewardSpec {
    pub fn new(cost_b: f64) -> Result<Self, EnvError> {
        if !(cost_b > 0.0 && cost_b.is_finite()) {
            return Err(EnvError::Setup(format!("cost must be positive, got {cost_b}")));
        }
        Ok(RewardSpec { cost_b })
    }

    pub fn continuation(&self) -> f64 {
        -self.cost_b
    }
}

/// Belief state `x̂_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub image: Image,
    pub mask: AngleMask,
    /// `k`, always `mask.len() + 1`.
    pub step: usize,
    pub phantom_id: Arc<str>,
}

/// One row of an episode log.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub phantom_id: Arc<str>,
    pub step: usize,
    pub theta: usize,
    pub decision: u8,
    pub reward_continue: f64,
    pub psnr_before: f64,
    pub psnr_after: f64,
    pub td_error: f64,
}

pub const EPISODE_LOG_HEADER: &str = "phantom_id\tstep\ttheta\td\tpsnr_before\tpsnr_after\ttd_error";

pub fn write_episode_log<W: Write>(mut out: W, records: &[StepRecord]) -> io::Result<()> {
    writeln!(out, "{EPISODE_LOG_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            r.phantom_id, r.step, r.theta, r.decision, r.psnr_before, r.psnr_after, r.td_error
        )?;
    }
    Ok(())
}

pub struct ScanEnv {
    projector: Arc<Projector>,
    measurements: Sinogram,
    ground_truth: Image,
    id: Arc<str>,
    label: String,
    reward: RewardSpec,
    max_steps: usize,
    sirt: SirtConfig,
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub reward: RewardSpec,
    pub max_steps: usize,
    pub sirt: SirtConfig,
}

impl ScanEnv {
    /// Simulated acquisition of `phantom` with noise level `eta`.
    pub fn simulate(
        projector: Arc<Projector>,
        phantom: &Phantom,
        eta: f64,
        noise_seed: u64,
        cfg: &EnvConfig,
    ) -> Result<Self, EnvError> {
        let clean = projector.project_all(&phantom.image)?;
        let model = NoiseModel::calibrated(eta, noise_seed, &clean);
        let noisy = add_noise(&clean, &model);
        Self::from_measurements(
            projector,
            noisy,
            phantom.image.clone(),
            &phantom.id,
            phantom.spec.kind.name(),
            cfg,
        )
    }

    /// Environment over an existing 180-view sinogram, e.g. rebinned
    /// experimental data whose full-angle reconstruction is the reference.
    pub fn from_measurements(
        projector: Arc<Projector>,
        measurements: Sinogram,
        ground_truth: Image,
        id: &str,
        label: &str,
        cfg: &EnvConfig,
    ) -> Result<Self, EnvError> {
        if cfg.max_steps == 0 {
            return Err(EnvError::Setup("max_steps must be at least 1".into()));
        }
        if measurements.angles != (0..N_ANGLES).collect::<Vec<_>>() {
            return Err(EnvError::Setup("measurements must hold views 0..179 in order".into()));
        }
        let geom = projector.geometry();
        if measurements.n_detector != geom.n_detector || ground_truth.size() != geom.grid {
            return Err(EnvError::Setup("measurements or reference do not match the geometry".into()));
        }
        Ok(ScanEnv {
            projector,
            measurements,
            ground_truth,
            id: Arc::from(id),
            label: label.to_string(),
            reward: cfg.reward,
            max_steps: cfg.max_steps,
            sirt: cfg.sirt.clone(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Shape name or data-group label used for per-class reporting.
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn reward(&self) -> RewardSpec {
        self.reward
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn grid(&self) -> usize {
        self.projector.geometry().grid
    }

    pub fn measurements(&self) -> &Sinogram {
        &self.measurements
    }

    pub fn ground_truth(&self) -> &Image {
        &self.ground_truth
    }

    /// Step-1 state: empty mask, zero image.
    pub fn reset(&self) -> ReconState {
        ReconState {
            image: Image::zeros(self.grid()),
            mask: AngleMask::new(),
            step: 1,
            phantom_id: self.id.clone(),
        }
    }

    /// `true` once the state sits at the step limit, where stopping is forced.
    pub fn must_stop(&self, state: &ReconState) -> bool {
        state.step >= self.max_steps
    }

    /// Acquires `theta` and reconstructs from all acquired views.
    pub fn step(&self, state: &ReconState, theta: usize) -> Result<(ReconState, f64), EnvError> {
        if theta >= N_ANGLES {
            return Err(EnvError::AngleOutOfRange(theta));
        }
        if state.mask.contains(theta) {
            return Err(EnvError::AngleRepeated(theta));
        }
        if state.step > self.max_steps {
            return Err(EnvError::EpisodeExhausted {
                step: state.step,
                max_steps: self.max_steps,
            });
        }
        let mut mask = state.mask;
        mask.insert(theta);
        let image = self.reconstruct(&mask)?;
        let next = ReconState {
            image,
            mask,
            step: state.step + 1,
            phantom_id: state.phantom_id.clone(),
        };
        Ok((next, self.reward.continuation()))
    }

    /// SIRT from a cold start over the masked views, in ascending angle order.
    pub fn reconstruct(&self, mask: &AngleMask) -> Result<Image, EnvError> {
        if mask.is_empty() {
            return Ok(Image::zeros(self.grid()));
        }
        let angles: Vec<usize> = mask.iter().collect();
        let sino = self.measurements.select(&angles)?;
        Ok(sirt_reconstruct(&self.projector, &sino, &self.sirt, None)?)
    }

    pub fn psnr_of(&self, image: &Image) -> Result<f64, EnvError> {
        Ok(psnr(image, &self.ground_truth)?.psnr)
    }

    /// PSNR of the state against the ground truth.
    pub fn terminal_reward(&self, state: &ReconState) -> Result<f64, EnvError> {
        self.psnr_of(&state.image)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use crate::phantom::{generate_phantom, ShapeKind, ShapeSpec};

    fn env(max_steps: usize) -> ScanEnv {
        let projector = Arc::new(Projector::new(Geometry::square(32)));
        let phantom = generate_phantom(&ShapeSpec::new(ShapeKind::Triangle, 70.0, 10.0), 32).unwrap();
        let cfg = EnvConfig {
            reward: RewardSpec::new(0.5).unwrap(),
            max_steps,
            sirt: SirtConfig {
                iterations: 30,
                relaxation: 1.0,
            },
        };
        ScanEnv::simulate(projector, &phantom, 0.05, 17, &cfg).unwrap()
    }

    #[test]
    fn reset_is_empty_zero_state() {
        let e = env(20);
        let s = e.reset();
        assert!(s.image.is_zero());
        assert_eq!(s.mask.len(), 0);
        assert_eq!(s.step, 1);
        assert!(e.terminal_reward(&s).unwrap().is_finite());
    }

    #[test]
    fn step_contract_and_errors() {
        let e = env(2);
        let s = e.reset();
        let (s1, r) = e.step(&s, 37).unwrap();
        assert_eq!(s1.mask.iter().collect::<Vec<_>>(), vec![37]);
        assert_eq!(r, -0.5);
        assert_eq!(s1.step, 2);
        assert_eq!(e.step(&s1, 37), Err(EnvError::AngleRepeated(37)));
        let (s2, _) = e.step(&s1, 38).unwrap();
        assert!(matches!(e.step(&s2, 39), Err(EnvError::EpisodeExhausted { .. })));
    }

    #[test]
    fn acquisition_order_does_not_matter() {
        let e = env(20);
        let s = e.reset();
        let (a, _) = e.step(&s, 10).unwrap();
        let (a, _) = e.step(&a, 20).unwrap();
        let (b, _) = e.step(&s, 20).unwrap();
        let (b, _) = e.step(&b, 10).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.image, e.reconstruct(&AngleMask::from_angles([10, 20])).unwrap());
    }

    #[test]
    fn single_step_limit_forces_stop_at_step_one() {
        let e = env(1);
        assert!(e.must_stop(&e.reset()));
        assert!(!env(2).must_stop(&env(2).reset()));
    }

    #[test]
    fn identical_setup_gives_identical_measurements() {
        assert_eq!(env(3).measurements(), env(3).measurements());
    }

    #[test]
    fn episode_log_has_header_and_rows() {
        let rec = StepRecord {
            phantom_id: Arc::from("p"),
            step: 1,
            theta: 4,
            decision: 0,
            reward_continue: -0.5,
            psnr_before: 8.0,
            psnr_after: 11.0,
            td_error: 0.25,
        };
        let mut out = Vec::new();
        write_episode_log(&mut out, &[rec]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with(EPISODE_LOG_HEADER));
        assert!(text.contains("p\t1\t4\t0\t8.000000\t11.000000\t0.250000"));
    }
}
