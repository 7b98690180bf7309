//! Fan-beam to parallel-beam rebinning.
//!
//! The source sits at `SOD·n⊥(β)` and the detector centre at `−ODD·n⊥(β)`,
//! with detector coordinate `u` along `n(β) = (cos β, sin β)`. The ray
//! hitting `u` has fan angle `γ = atan(u / SDD)` and is the parallel ray
//! `(φ, s) = (β + γ, SOD·sin γ)`.

use soed_core::{Sinogram, N_ANGLES};

use crate::preprocess::FanSinogram;
use crate::IngestError;

pub const PARALLEL_BINS: usize = 240;

/// Parallel coordinates `(φ [deg], s [mm])` of the fan ray at detector
/// offset `u` (mm) for source angle `β` (deg).
pub fn fan_to_parallel(beta_deg: f64, u: f64, sod: f64, sdd: f64) -> (f64, f64) {
    let gamma = (u / sdd).atan();
    (beta_deg + gamma.to_degrees(), sod * gamma.sin())
}

/// Inverse of [`fan_to_parallel`].
pub fn parallel_to_fan(phi_deg: f64, s: f64, sod: f64, sdd: f64) -> Option<(f64, f64)> {
    let r = s / sod;
    if r.abs() >= 1.0 {
        return None;
    }
    let gamma = r.asin();
    Some((phi_deg - gamma.to_degrees(), sdd * gamma.tan()))
}

/// Resamples onto `180 × n_bins` parallel rays spaced `bin_mm` apart (by
/// default the detector pitch divided by the magnification). Bilinear
/// interpolation in (β, u); β wraps modulo 360°; rays that miss the
/// detector are zero.
pub fn rebin_fan_to_parallel(fan: &FanSinogram, n_bins: usize, bin_mm: Option<f64>) -> Result<Sinogram, IngestError> {
    let g = fan.geometry;
    if g.source_object <= 0.0 || g.object_detector <= 0.0 || g.pitch <= 0.0 || fan.n_views < 2 {
        return Err(IngestError::GeometryMissing);
    }
    let span = fan.angles_deg[fan.n_views - 1] - fan.angles_deg[0];
    if span < 360.0 - 1e-9 {
        return Err(IngestError::Format(format!("fan data spans {span}°, a full rotation is required")));
    }
    let dbeta = span / (fan.n_views - 1) as f64;
    let beta0 = fan.angles_deg[0];
    let sdd = g.source_detector();
    let ds = bin_mm.unwrap_or(g.pitch / g.magnification());
    let col_center = (fan.n_cols as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; N_ANGLES * n_bins];
    for j in 0..N_ANGLES {
        for i in 0..n_bins {
            let s = (i as f64 - (n_bins as f64 - 1.0) / 2.0) * ds;
            let Some((beta, u)) = parallel_to_fan(j as f64, s, g.source_object, sdd) else { continue };
            let c = (u - g.center_offset) / g.pitch + col_center;
            if c < 0.0 || c > (fan.n_cols - 1) as f64 {
                continue;
            }
            let b = (beta - beta0).rem_euclid(360.0) / dbeta;
            let v0 = (b.floor() as usize).min(fan.n_views - 2);
            let tb = b - v0 as f64;
            let c0 = (c.floor() as usize).min(fan.n_cols.saturating_sub(2));
            let tc = c - c0 as f64;
            let c1 = (c0 + 1).min(fan.n_cols - 1);
            let lerp = |v: usize| fan.at(v, c0) * (1.0 - tc) + fan.at(v, c1) * tc;
            out[j * n_bins + i] = lerp(v0) * (1.0 - tb) + lerp(v0 + 1) * tb;
        }
    }
    Ok(Sinogram::new((0..N_ANGLES).collect(), n_bins, out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_ray_is_unchanged() {
        assert_eq!(fan_to_parallel(37.0, 0.0, 225.0, 450.0), (37.0, 0.0));
    }

    #[test]
    fn inverse_round_trips() {
        for (b, u) in [(10.0, 30.0), (200.0, -55.5), (359.0, 1.0)] {
            let (phi, s) = fan_to_parallel(b, u, 225.0, 450.0);
            let (b2, u2) = parallel_to_fan(phi, s, 225.0, 450.0).unwrap();
            assert!((b - b2).abs() < 1e-10 && (u - u2).abs() < 1e-10);
        }
    }
}
