//! Raw scans and the FleX-ray directory reader.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::warn;
use tiff::decoder::{Decoder, DecodingResult};

use crate::IngestError;

pub const RAW_PROJECTIONS: usize = 3601;
pub const RAW_COLUMNS: usize = 956;
pub const RAW_ROWS: usize = 10;

/// Fan-beam geometry; lengths in millimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FanGeometry {
    pub source_object: f64,
    pub object_detector: f64,
    /// Detector pixel pitch of the stored columns.
    pub pitch: f64,
    /// Offset of the rotation axis projection from the detector centre.
    pub center_offset: f64,
    /// Rotation covered by the projections, degrees.
    pub angular_range: f64,
}

impl FanGeometry {
    /// Raw pitch of the binned detector (0.1496 mm).
    pub const RAW_PITCH: f64 = 0.1496;

    pub fn flexray(pitch: f64) -> Self {
        Self { source_object: 225.0, object_detector: 225.0, pitch, center_offset: 0.0, angular_range: 360.0 }
    }

    pub fn source_detector(&self) -> f64 {
        self.source_object + self.object_detector
    }

    pub fn magnification(&self) -> f64 {
        self.source_detector() / self.source_object
    }
}

/// Intensities `[projection][row][column]` plus optional reference fields
/// `[row][column]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawScan {
    pub n_projections: usize,
    pub rows: usize,
    pub cols: usize,
    pub projections: Vec<f32>,
    pub flat: Option<Vec<f32>>,
    pub dark: Option<Vec<f32>>,
    pub geometry: FanGeometry,
    pub current_ua: u16,
    pub label: String,
}

impl RawScan {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.projections.len() != self.n_projections * self.rows * self.cols {
            return Err(IngestError::Format("projection buffer size does not match dimensions".into()));
        }
        for f in [&self.flat, &self.dark].into_iter().flatten() {
            if f.len() != self.rows * self.cols {
                return Err(IngestError::Format("reference field size does not match detector".into()));
            }
        }
        if self.geometry.source_object <= 0.0 || self.geometry.object_detector <= 0.0 || self.geometry.pitch <= 0.0 {
            return Err(IngestError::GeometryMissing);
        }
        Ok(())
    }

    pub fn pixel(&self, proj: usize, row: usize, col: usize) -> f32 {
        self.projections[(proj * self.rows + row) * self.cols + col]
    }
}

pub fn read_tiff(path: &Path) -> Result<(usize, usize, Vec<f32>), IngestError> {
    let mut d = Decoder::new(BufReader::new(File::open(path)?))
        .map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = d.dimensions().map_err(|e| IngestError::Format(e.to_string()))?;
    let data: Vec<f32> = match d.read_image().map_err(|e| IngestError::Format(format!("{}: {e}", path.display())))? {
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
        _ => return Err(IngestError::Format(format!("{}: unsupported sample type", path.display()))),
    };
    if data.len() != (w * h) as usize {
        return Err(IngestError::Format(format!("{}: multi-channel images are not supported", path.display())));
    }
    Ok((w as usize, h as usize, data))
}

fn files_with_prefix(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>, IngestError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && (n.ends_with(".tif") || n.ends_with(".tiff")))
        })
        .collect();
    v.sort();
    Ok(v)
}

fn mean_field(paths: &[PathBuf], rows: usize, cols: usize) -> Result<Option<Vec<f32>>, IngestError> {
    if paths.is_empty() {
        return Ok(None);
    }
    let mut acc = vec![0f64; rows * cols];
    for p in paths {
        let (w, h, d) = read_tiff(p)?;
        if (w, h) != (cols, rows) {
            return Err(IngestError::Format(format!("{}: reference field is {w}×{h}", p.display())));
        }
        for (a, v) in acc.iter_mut().zip(d) {
            *a += f64::from(v);
        }
    }
    let n = paths.len() as f64;
    Ok(Some(acc.into_iter().map(|v| (v / n) as f32).collect()))
}

/// Reads a FleX-ray style directory: `scan_*.tif` projections in name
/// order, optional `di*.tif` dark and `io*.tif` flat fields (averaged).
pub fn read_flexray_dir(dir: &Path, geometry: FanGeometry, current_ua: u16, label: &str) -> Result<RawScan, IngestError> {
    let scans = files_with_prefix(dir, "scan_")?;
    if scans.is_empty() {
        return Err(IngestError::Format(format!("{}: no scan_*.tif projections", dir.display())));
    }
    let (cols, rows, first) = read_tiff(&scans[0])?;
    let mut projections = Vec::with_capacity(scans.len() * rows * cols);
    projections.extend(first);
    for p in &scans[1..] {
        let (w, h, d) = read_tiff(p)?;
        if (w, h) != (cols, rows) {
            return Err(IngestError::Format(format!("{}: size {w}×{h} differs from first projection", p.display())));
        }
        projections.extend(d);
    }
    let dark = mean_field(&files_with_prefix(dir, "di")?, rows, cols)?;
    let flat = mean_field(&files_with_prefix(dir, "io")?, rows, cols)?;
    if scans.len() != RAW_PROJECTIONS {
        warn!("{}: {} projections (expected {RAW_PROJECTIONS})", dir.display(), scans.len());
    }
    let scan = RawScan {
        n_projections: scans.len(),
        rows,
        cols,
        projections,
        flat,
        dark,
        geometry,
        current_ua,
        label: label.to_string(),
    };
    scan.validate()?;
    Ok(scan)
}
