//! Projection subsampling, row/column selection and log conversion.

use log::warn;

use crate::raw::{FanGeometry, RawScan};
use crate::IngestError;

/// Lower clamp on transmission before the logarithm.
pub const MIN_TRANSMISSION: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub view_step: usize,
    pub row: usize,
    pub col_step: usize,
    pub col_offset: usize,
}

impl Default for PreprocessConfig {
    /// Every 10th projection, detector row 5 of 10, every 4th column from 0.
    fn default() -> Self {
        Self { view_step: 10, row: 5, col_step: 4, col_offset: 0 }
    }
}

/// Line integrals `[view][column]` over a full rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct FanSinogram {
    pub n_views: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
    /// Rotation angle of each view, degrees.
    pub angles_deg: Vec<f64>,
    /// Geometry with the pitch of the kept columns.
    pub geometry: FanGeometry,
}

impl FanSinogram {
    pub fn at(&self, view: usize, col: usize) -> f64 {
        self.data[view * self.n_cols + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub sinogram: FanSinogram,
    pub warnings: Vec<String>,
}

/// `p = −ln(max((I − D)/(F − D), 1e-6))`. Without a flat field the maximum
/// kept intensity stands in for `F`; without a dark field `D = 0`.
pub fn preprocess(raw: &RawScan, cfg: &PreprocessConfig) -> Result<Preprocessed, IngestError> {
    raw.validate()?;
    if cfg.row >= raw.rows || cfg.view_step == 0 || cfg.col_step == 0 || cfg.col_offset >= raw.cols {
        return Err(IngestError::Format(format!("selection {cfg:?} does not fit a {}×{} detector", raw.cols, raw.rows)));
    }
    let views: Vec<usize> = (0..raw.n_projections).step_by(cfg.view_step).collect();
    let cols: Vec<usize> = (cfg.col_offset..raw.cols).step_by(cfg.col_step).collect();
    let mut warnings = Vec::new();
    let row_of = |f: &Option<Vec<f32>>| f.as_ref().map(|f| f[cfg.row * raw.cols..(cfg.row + 1) * raw.cols].to_vec());
    let dark = row_of(&raw.dark).unwrap_or_else(|| {
        warnings.push("no dark field; assuming zero offset".to_string());
        vec![0.0; raw.cols]
    });
    let flat = match row_of(&raw.flat) {
        Some(f) => f,
        None => {
            let max = views
                .iter()
                .flat_map(|&v| cols.iter().map(move |&c| (v, c)))
                .map(|(v, c)| raw.pixel(v, cfg.row, c))
                .fold(f32::MIN, f32::max);
            warnings.push(format!("no flat field; normalising by maximum intensity {max}"));
            vec![max; raw.cols]
        }
    };
    for w in &warnings {
        warn!("{}: {w}", raw.label);
    }
    let mut data = Vec::with_capacity(views.len() * cols.len());
    for &v in &views {
        for &c in &cols {
            let i = f64::from(raw.pixel(v, cfg.row, c));
            let (d, f) = (f64::from(dark[c]), f64::from(flat[c]));
            let t = if f - d > 0.0 { (i - d) / (f - d) } else { MIN_TRANSMISSION };
            data.push(-t.max(MIN_TRANSMISSION).ln());
        }
    }
    let step_deg = raw.geometry.angular_range / (raw.n_projections - 1).max(1) as f64;
    let geometry = FanGeometry { pitch: raw.geometry.pitch * cfg.col_step as f64, ..raw.geometry };
    Ok(Preprocessed {
        sinogram: FanSinogram {
            n_views: views.len(),
            n_cols: cols.len(),
            data,
            angles_deg: views.iter().map(|&v| v as f64 * step_deg).collect(),
            geometry,
        },
        warnings,
    })
}
