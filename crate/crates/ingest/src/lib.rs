//! Experimental data ingestion: verified download, FleX-ray reading,
//! log conversion and fan-to-parallel rebinning.

use std::path::PathBuf;

use thiserror::Error;

pub mod fetch;
pub mod manifest;
pub mod preprocess;
pub mod raw;
pub mod rebin;

pub use fetch::{fetch_dataset, FetchReport, HttpTransport, Transport};
pub use manifest::{standard_groups, GroupId, GroupShape, Manifest, ManifestEntry};
pub use preprocess::{preprocess, FanSinogram, PreprocessConfig};
pub use raw::{read_flexray_dir, FanGeometry, RawScan};
pub use rebin::{rebin_fan_to_parallel, PARALLEL_BINS};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("network: {0}")]
    Network(String),
    #[error("checksum mismatch for {path} (expected sha256 {expected})")]
    ChecksumMismatch { path: PathBuf, expected: String },
    #[error("cache entry locked by another process: {0}")]
    Locked(PathBuf),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("format: {0}")]
    Format(String),
    #[error("fan geometry missing or invalid")]
    GeometryMissing,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Projection(#[from] soed_core::projector::ProjectionError),
}
