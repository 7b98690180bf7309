//! Non-learned angle schedules.

use crate::env::{EnvError, ScanEnv};
use crate::geometry::N_ANGLES;
use crate::mask::AngleMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    GoldenRatio,
    Uniform,
    GreedyExhaustive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AngleSequence {
    pub policy_kind: PolicyKind,
    pub angles: Vec<usize>,
}

/// Golden-ratio increment `180/φ` in degrees.
pub fn golden_increment() -> f64 {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    180.0 / phi
}

/// Nearest unused integer angle to `target` on the circle of 180 angles,
/// ties resolved toward the larger angle.
fn nearest_unused(target: usize, used: &AngleMask) -> usize {
    for d in 0..N_ANGLES {
        let up = (target + d) % N_ANGLES;
        if !used.contains(up) {
            return up;
        }
        let down = (target + N_ANGLES - d % N_ANGLES) % N_ANGLES;
        if !used.contains(down) {
            return down;
        }
    }
    unreachable!("all angles used")
}

/// `θ_k = round(offset + k·180/φ) mod 180`, collisions moved to the nearest
/// unused angle.
pub fn golden_ratio_sequence_from(n: usize, offset: f64) -> AngleSequence {
    assert!(n <= N_ANGLES, "at most {N_ANGLES} distinct angles");
    let inc = golden_increment();
    let mut used = AngleMask::new();
    let mut angles = Vec::with_capacity(n);
    for k in 0..n {
        let raw = (offset + k as f64 * inc).round() as i64;
        let target = raw.rem_euclid(N_ANGLES as i64) as usize;
        let a = nearest_unused(target, &used);
        used.insert(a);
        angles.push(a);
    }
    AngleSequence {
        policy_kind: PolicyKind::GoldenRatio,
        angles,
    }
}

pub fn golden_ratio_sequence(n: usize) -> AngleSequence {
    golden_ratio_sequence_from(n, 0.0)
}

/// `round(i·180/n) mod 180`; not prefix-consistent across `n`.
pub fn uniform_sequence(n: usize) -> AngleSequence {
    assert!((1..=N_ANGLES).contains(&n), "n must be in 1..=180");
    let mut used = AngleMask::new();
    let mut angles = Vec::with_capacity(n);
    for i in 0..n {
        let target = ((i as f64 * N_ANGLES as f64 / n as f64).round() as usize) % N_ANGLES;
        let a = nearest_unused(target, &used);
        used.insert(a);
        angles.push(a);
    }
    AngleSequence {
        policy_kind: PolicyKind::Uniform,
        angles,
    }
}

/// Greedy search: each step adds the unused angle whose reconstruction has
/// the highest PSNR. Costs up to 180 reconstructions per step.
pub fn greedy_exhaustive(env: &ScanEnv, n: usize) -> Result<AngleSequence, EnvError> {
    let mut mask = AngleMask::new();
    let mut angles = Vec::with_capacity(n);
    for _ in 0..n.min(N_ANGLES) {
        let mut best: Option<(usize, f64)> = None;
        for a in 0..N_ANGLES {
            if mask.contains(a) {
                continue;
            }
            let mut trial = mask;
            trial.insert(a);
            let q = env.psnr_of(&env.reconstruct(&trial)?)?;
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((a, q));
            }
        }
        let (a, _) = best.expect("an unused angle exists");
        mask.insert(a);
        angles.push(a);
    }
    Ok(AngleSequence {
        policy_kind: PolicyKind::GreedyExhaustive,
        angles,
    })
}

/// PSNR after each prefix of `angles`.
pub fn prefix_psnr(env: &ScanEnv, angles: &[usize]) -> Result<Vec<f64>, EnvError> {
    let mut mask = AngleMask::new();
    angles
        .iter()
        .map(|&a| {
            mask.insert(a);
            env.psnr_of(&env.reconstruct(&mask)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_ratio_first_terms() {
        assert_eq!(golden_ratio_sequence(1).angles, vec![0]);
        assert_eq!(golden_ratio_sequence(4).angles, vec![0, 111, 42, 154]);
    }

    #[test]
    fn golden_ratio_exhausts_all_angles() {
        let mut a = golden_ratio_sequence(180).angles;
        a.sort_unstable();
        assert_eq!(a, (0..180).collect::<Vec<_>>());
    }

    #[test]
    fn golden_ratio_is_prefix_consistent() {
        let long = golden_ratio_sequence(60).angles;
        for n in [1, 7, 33] {
            assert_eq!(golden_ratio_sequence(n).angles, long[..n]);
        }
    }

    #[test]
    fn uniform_cases() {
        assert_eq!(uniform_sequence(2).angles, vec![0, 90]);
        assert_eq!(uniform_sequence(4).angles, vec![0, 45, 90, 135]);
        assert_eq!(uniform_sequence(180).angles, (0..180).collect::<Vec<_>>());
        for n in 1..=180 {
            let a = uniform_sequence(n).angles;
            assert_eq!(AngleMask::from_angles(a.iter().copied()).len(), n);
        }
    }

    #[test]
    fn nearest_unused_prefers_larger_on_ties() {
        let used = AngleMask::from_angles([10]);
        assert_eq!(nearest_unused(10, &used), 11);
        let used = AngleMask::from_angles([10, 11]);
        assert_eq!(nearest_unused(10, &used), 9);
        let used = AngleMask::from_angles([179]);
        assert_eq!(nearest_unused(179, &used), 0);
    }
}
