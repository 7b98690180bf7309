//! SIRT with a non-negativity constraint:
//! `x ← max(0, x + λ·C·Aᵀ·R·(y − A x))`, `R`/`C` the inverse ray and pixel
//! sums of the system matrix restricted to the acquired views.

use thiserror::Error;

use crate::image::Image;
use crate::projector::{check_angles, ProjectionError, Projector, Sinogram};

#[derive(Debug, Error, PartialEq)]
pub enum SirtError {
    #[error("cannot reconstruct from an empty sinogram")]
    EmptySinogram,
    #[error("at least one iteration is required")]
    NoIterations,
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SirtConfig {
    pub iterations: usize,
    /// Relaxation factor λ; 1.0 is plain SIRT.
    pub relaxation: f64,
}

impl Default for SirtConfig {
    fn default() -> Self {
        SirtConfig {
            iterations: 150,
            relaxation: 1.0,
        }
    }
}

/// Reconstruction plus `‖A x_k − y‖₂` before every update and after the last.
#[derive(Clone, Debug)]
pub struct SirtOutcome {
    pub image: Image,
    pub residuals: Vec<f64>,
}

pub fn sirt_reconstruct(
    projector: &Projector,
    sino: &Sinogram,
    cfg: &SirtConfig,
    x0: Option<&Image>,
) -> Result<Image, SirtError> {
    run(projector, sino, cfg, x0, false).map(|o| o.image)
}

pub fn sirt_with_residuals(
    projector: &Projector,
    sino: &Sinogram,
    cfg: &SirtConfig,
    x0: Option<&Image>,
) -> Result<SirtOutcome, SirtError> {
    run(projector, sino, cfg, x0, true)
}

fn run(
    projector: &Projector,
    sino: &Sinogram,
    cfg: &SirtConfig,
    x0: Option<&Image>,
    trace: bool,
) -> Result<SirtOutcome, SirtError> {
    if sino.angles.is_empty() {
        return Err(SirtError::EmptySinogram);
    }
    if cfg.iterations == 0 {
        return Err(SirtError::NoIterations);
    }
    check_angles(&sino.angles)?;
    let geom = projector.geometry();
    let nd = geom.n_detector;
    if sino.n_detector != nd || sino.data.len() != sino.angles.len() * nd {
        return Err(ProjectionError::ShapeMismatch("sinogram does not match projector".into()).into());
    }
    let npix = geom.grid * geom.grid;
    let mut x = match x0 {
        Some(img) if img.size() == geom.grid => img.data().to_vec(),
        Some(img) => {
            return Err(ProjectionError::ShapeMismatch(format!(
                "initial image is {0}x{0}",
                img.size()
            ))
            .into())
        }
        None => vec![0.0; npix],
    };

    let inv_rows: Vec<Vec<f64>> = sino
        .angles
        .iter()
        .map(|&a| projector.ray_sums(a).iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect())
        .collect();
    let mut col = vec![0.0; npix];
    for &a in &sino.angles {
        for (c, s) in col.iter_mut().zip(projector.pixel_sums(a)) {
            *c += s;
        }
    }
    let step: Vec<f64> = col
        .iter()
        .map(|&c| if c > 0.0 { cfg.relaxation / c } else { 0.0 })
        .collect();

    let mut row = vec![0.0; projector.padded_len()];
    let mut grad = vec![0.0; npix];
    let mut residuals = Vec::new();
    for _ in 0..cfg.iterations {
        grad.fill(0.0);
        let mut res2 = 0.0;
        for (i, &a) in sino.angles.iter().enumerate() {
            projector.forward_view(a, &x, &mut row);
            let y = sino.row(i);
            let w = &inv_rows[i];
            for b in 0..nd {
                let r = y[b] - row[b + 1];
                res2 += r * r;
                row[b + 1] = w[b] * r;
            }
            let last = row.len();
            row[0] = 0.0;
            row[nd + 1..last].fill(0.0);
            projector.back_view(a, &row, &mut grad);
        }
        if trace {
            residuals.push(res2.sqrt());
        }
        for ((xv, g), s) in x.iter_mut().zip(&grad).zip(&step) {
            *xv = (*xv + s * g).max(0.0);
        }
    }
    if trace {
        let img = Image::from_vec(geom.grid, x.clone()).unwrap();
        let ax = projector.project(&img, &sino.angles)?;
        let r: f64 = ax.data.iter().zip(&sino.data).map(|(a, b)| (a - b).powi(2)).sum();
        residuals.push(r.sqrt());
    }
    Ok(SirtOutcome {
        image: Image::from_vec(geom.grid, x).unwrap(),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;

    #[test]
    fn zero_data_gives_zero_image() {
        let p = Projector::new(Geometry::square(16));
        let sino = Sinogram::zeros(vec![0, 60, 120], 16);
        let img = sirt_reconstruct(&p, &sino, &SirtConfig::default(), None).unwrap();
        assert!(img.is_zero());
    }

    #[test]
    fn rejects_empty_and_zero_iterations() {
        let p = Projector::new(Geometry::square(8));
        let empty = Sinogram::zeros(vec![], 8);
        assert_eq!(
            sirt_reconstruct(&p, &empty, &SirtConfig::default(), None),
            Err(SirtError::EmptySinogram)
        );
        let cfg = SirtConfig {
            iterations: 0,
            relaxation: 1.0,
        };
        assert_eq!(
            sirt_reconstruct(&p, &Sinogram::zeros(vec![1], 8), &cfg, None),
            Err(SirtError::NoIterations)
        );
    }

    #[test]
    fn output_is_non_negative_on_noisy_data() {
        let p = Projector::new(Geometry::square(16));
        let mut sino = Sinogram::zeros(vec![0, 45, 90], 16);
        for (i, v) in sino.data.iter_mut().enumerate() {
            *v = ((i * 7919) % 13) as f64 - 6.0;
        }
        let img = sirt_reconstruct(&p, &sino, &SirtConfig::default(), None).unwrap();
        assert!(img.data().iter().all(|&v| v >= 0.0));
    }
}
