//! Pixel-driven parallel-beam projector.
//!
//! Every pixel centre is projected onto the detector and its value is split
//! between the two neighbouring bins by linear interpolation. Backprojection
//! gathers with the same weights, so it is the exact adjoint, and each pixel
//! that lands on the detector contributes its full mass to every view.

use std::collections::HashSet;

use thiserror::Error;

use crate::geometry::{Geometry, N_ANGLES};
use crate::image::Image;

#[derive(Debug, Error, PartialEq)]
pub enum ProjectionError {
    #[error("angle {0} requested twice")]
    DuplicateAngle(usize),
    #[error("empty angle set")]
    EmptyAngleSet,
    #[error("angle index {0} outside [0, {N_ANGLES})")]
    AngleOutOfRange(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Per-angle line integrals. Row `i` belongs to `angles[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    pub angles: Vec<usize>,
    pub n_detector: usize,
    pub data: Vec<f64>,
    pub noise_level: f64,
}

impl Sinogram {
    pub fn new(angles: Vec<usize>, n_detector: usize, data: Vec<f64>) -> Result<Self, ProjectionError> {
        if data.len() != angles.len() * n_detector {
            return Err(ProjectionError::ShapeMismatch(format!(
                "{} values for {} angles x {} bins",
                data.len(),
                angles.len(),
                n_detector
            )));
        }
        check_angles(&angles)?;
        Ok(Sinogram {
            angles,
            n_detector,
            data,
            noise_level: 0.0,
        })
    }

    pub fn zeros(angles: Vec<usize>, n_detector: usize) -> Self {
        let data = vec![0.0; angles.len() * n_detector];
        Sinogram {
            angles,
            n_detector,
            data,
            noise_level: 0.0,
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_detector..(i + 1) * self.n_detector]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_detector..(i + 1) * self.n_detector]
    }

    /// Row index holding `angle`, if present.
    pub fn position(&self, angle: usize) -> Option<usize> {
        self.angles.iter().position(|&a| a == angle)
    }

    /// New sinogram with the rows of `angles`, in the given order.
    pub fn select(&self, angles: &[usize]) -> Result<Sinogram, ProjectionError> {
        check_angles(angles)?;
        let mut data = Vec::with_capacity(angles.len() * self.n_detector);
        for &a in angles {
            let i = self.position(a).ok_or_else(|| {
                ProjectionError::ShapeMismatch(format!("angle {a} not present in sinogram"))
            })?;
            data.extend_from_slice(self.row(i));
        }
        Ok(Sinogram {
            angles: angles.to_vec(),
            n_detector: self.n_detector,
            data,
            noise_level: self.noise_level,
        })
    }

    pub fn dot(&self, other: &Sinogram) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

pub(crate) fn check_angles(angles: &[usize]) -> Result<(), ProjectionError> {
    if angles.is_empty() {
        return Err(ProjectionError::EmptyAngleSet);
    }
    let mut seen = HashSet::with_capacity(angles.len());
    for &a in angles {
        if a >= N_ANGLES {
            return Err(ProjectionError::AngleOutOfRange(a));
        }
        if !seen.insert(a) {
            return Err(ProjectionError::DuplicateAngle(a));
        }
    }
    Ok(())
}

/// Interpolation footprint of every pixel for one view.
///
/// Rows are padded by one bin on the left and two on the right; pixels that
/// miss the detector entirely point into the right padding.
struct ViewTable {
    slot: Vec<u32>,
    upper: Vec<f32>,
}

/// Projector for a fixed geometry with all 180 view tables precomputed.
pub struct Projector {
    geom: Geometry,
    views: Vec<ViewTable>,
    /// Projection of the all-ones image per view (ray sums of A).
    ray_sums: Vec<Vec<f64>>,
    /// Backprojection of an all-ones row per view (per-view column sums of A).
    pixel_sums: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Projector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Projector").field("geom", &self.geom).finish()
    }
}

impl Projector {
    pub fn new(geom: Geometry) -> Self {
        let views: Vec<ViewTable> = (0..N_ANGLES).map(|a| build_view(&geom, a)).collect();
        let mut projector = Projector {
            geom,
            views,
            ray_sums: Vec::new(),
            pixel_sums: Vec::new(),
        };
        let ones = Image::from_vec(projector.geom.grid, vec![1.0; projector.npix()]).unwrap();
        let pad = projector.padded_len();
        let mut row = vec![0.0; pad];
        let mut ray_sums = Vec::with_capacity(N_ANGLES);
        let mut pixel_sums = Vec::with_capacity(N_ANGLES);
        for a in 0..N_ANGLES {
            projector.forward_view(a, ones.data(), &mut row);
            ray_sums.push(row[1..=projector.geom.n_detector].to_vec());
            let mut unit = vec![0.0; pad];
            unit[1..=projector.geom.n_detector].fill(1.0);
            let mut acc = vec![0.0; projector.npix()];
            projector.back_view(a, &unit, &mut acc);
            pixel_sums.push(acc);
        }
        projector.ray_sums = ray_sums;
        projector.pixel_sums = pixel_sums;
        projector
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    #[inline]
    fn npix(&self) -> usize {
        self.geom.grid * self.geom.grid
    }

    #[inline]
    pub(crate) fn padded_len(&self) -> usize {
        self.geom.n_detector + 3
    }

    /// Forward-projects one view into a zeroed padded row buffer.
    #[inline]
    pub(crate) fn forward_view(&self, angle: usize, pixels: &[f64], row: &mut [f64]) {
        row.fill(0.0);
        let view = &self.views[angle];
        for ((&slot, &up), &v) in view.slot.iter().zip(&view.upper).zip(pixels) {
            if v == 0.0 {
                continue;
            }
            let s = slot as usize;
            let up = up as f64;
            row[s] += (1.0 - up) * v;
            row[s + 1] += up * v;
        }
    }

    /// Adds the backprojection of a padded row (padding must be zero) into
    /// `acc`.
    #[inline]
    pub(crate) fn back_view(&self, angle: usize, row: &[f64], acc: &mut [f64]) {
        let view = &self.views[angle];
        for ((&slot, &up), out) in view.slot.iter().zip(&view.upper).zip(acc.iter_mut()) {
            let s = slot as usize;
            let up = up as f64;
            *out += (1.0 - up) * row[s] + up * row[s + 1];
        }
    }

    pub(crate) fn ray_sums(&self, angle: usize) -> &[f64] {
        &self.ray_sums[angle]
    }

    pub(crate) fn pixel_sums(&self, angle: usize) -> &[f64] {
        &self.pixel_sums[angle]
    }

    pub fn project(&self, image: &Image, angles: &[usize]) -> Result<Sinogram, ProjectionError> {
        check_angles(angles)?;
        if image.size() != self.geom.grid {
            return Err(ProjectionError::ShapeMismatch(format!(
                "image is {0}x{0}, geometry expects {1}x{1}",
                image.size(),
                self.geom.grid
            )));
        }
        let nd = self.geom.n_detector;
        let mut sino = Sinogram::zeros(angles.to_vec(), nd);
        let mut row = vec![0.0; self.padded_len()];
        for (i, &a) in angles.iter().enumerate() {
            self.forward_view(a, image.data(), &mut row);
            sino.row_mut(i).copy_from_slice(&row[1..=nd]);
        }
        Ok(sino)
    }

    /// All 180 views.
    pub fn project_all(&self, image: &Image) -> Result<Sinogram, ProjectionError> {
        let angles: Vec<usize> = (0..N_ANGLES).collect();
        self.project(image, &angles)
    }

    pub fn backproject(&self, sino: &Sinogram) -> Result<Image, ProjectionError> {
        if sino.n_detector != self.geom.n_detector {
            return Err(ProjectionError::ShapeMismatch(format!(
                "sinogram has {} bins, geometry expects {}",
                sino.n_detector, self.geom.n_detector
            )));
        }
        if sino.data.len() != sino.angles.len() * sino.n_detector {
            return Err(ProjectionError::ShapeMismatch(
                "sinogram data does not match its angle list".into(),
            ));
        }
        check_angles(&sino.angles)?;
        let nd = self.geom.n_detector;
        let mut acc = vec![0.0; self.npix()];
        let mut row = vec![0.0; self.padded_len()];
        for (i, &a) in sino.angles.iter().enumerate() {
            row[1..=nd].copy_from_slice(sino.row(i));
            self.back_view(a, &row, &mut acc);
        }
        Ok(Image::from_vec(self.geom.grid, acc).unwrap())
    }
}

fn build_view(geom: &Geometry, angle: usize) -> ViewTable {
    let (cos, sin) = Geometry::normal(angle);
    let n = geom.grid;
    let nd = geom.n_detector;
    let half = (nd as f64 - 1.0) / 2.0;
    let miss = (nd + 1) as u32;
    let mut slot = Vec::with_capacity(n * n);
    let mut upper = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let (x, y) = geom.pixel_center(row, col);
            let t = (x * cos + y * sin) / geom.detector_spacing + half;
            let lo = t.floor();
            let frac = t - lo;
            if lo < -1.0 || lo > (nd - 1) as f64 {
                slot.push(miss);
                upper.push(0.0);
            } else {
                slot.push((lo as i64 + 1) as u32);
                upper.push(frac as f32);
            }
        }
    }
    ViewTable { slot, upper }
}
