//! Parallel-beam acquisition geometry.
//!
//! Image coordinates are centred on the grid: pixel `(row, col)` sits at
//! `x = col - (G-1)/2`, `y = row - (G-1)/2` (y grows downward). A ray at angle
//! index `a` (one-degree steps) with detector coordinate `s` is the line
//! `{ s·n + t·n⊥ }` with `n = (cos θ, sin θ)` and `n⊥ = (-sin θ, cos θ)`.

/// Number of candidate angles, 0°..179° in one-degree increments.
pub const N_ANGLES: usize = 180;

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub grid: usize,
    pub n_detector: usize,
    pub detector_spacing: f64,
}

impl Geometry {
    /// Detector bins equal to the grid size, unit spacing.
    pub fn square(grid: usize) -> Self {
        Geometry {
            grid,
            n_detector: grid,
            detector_spacing: 1.0,
        }
    }

    pub fn angle_radians(angle: usize) -> f64 {
        (angle as f64).to_radians()
    }

    /// Detector normal `n` for the given angle index.
    pub fn normal(angle: usize) -> (f64, f64) {
        let t = Self::angle_radians(angle);
        (t.cos(), t.sin())
    }

    /// Direction along which rays of this angle travel, in (x, y) image
    /// coordinates.
    pub fn ray_direction(angle: usize) -> (f64, f64) {
        let t = Self::angle_radians(angle);
        (-t.sin(), t.cos())
    }

    /// Centre coordinate of detector bin `bin`.
    pub fn bin_center(&self, bin: usize) -> f64 {
        (bin as f64 - (self.n_detector as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    /// Image-plane coordinates of a pixel centre.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        let c = (self.grid as f64 - 1.0) / 2.0;
        (col as f64 - c, row as f64 - c)
    }
}
