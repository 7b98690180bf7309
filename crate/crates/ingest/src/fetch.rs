//! Idempotent, checksum-verified download into a local cache.

use std::fs::{self, OpenOptions};
use std::io::Read;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::manifest::{sha256_bytes, sha256_file, Manifest, ManifestEntry};
use crate::IngestError;

/// Source of remote bytes.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>, IngestError>;
}

/// Plain HTTP(S) client.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self { agent: ureq::AgentBuilder::new().timeout(std::time::Duration::from_secs(600)).build() }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, IngestError> {
        let resp = self.agent.get(url).call().map_err(|e| IngestError::Network(format!("{url}: {e}")))?;
        let mut buf = Vec::new();
        resp.into_reader()
            .read_to_end(&mut buf)
            .map_err(|e| IngestError::Network(format!("{url}: {e}")))?;
        Ok(buf)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FetchReport {
    pub downloaded: Vec<PathBuf>,
    pub reused: Vec<PathBuf>,
    /// Cached files that failed verification and were fetched again.
    pub repaired: Vec<(PathBuf, String)>,
}

fn verify(path: &Path, e: &ManifestEntry) -> Result<bool, IngestError> {
    if !path.exists() {
        return Ok(false);
    }
    if fs::metadata(path)?.len() != e.size {
        return Ok(false);
    }
    Ok(sha256_file(path)? == e.sha256)
}

/// Exclusive lock on a cache entry, released on drop.
struct Lock(PathBuf);

impl Lock {
    fn acquire(target: &Path) -> Result<Self, IngestError> {
        let p = target.with_extension("lock");
        OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&p)
            .map_err(|_| IngestError::Locked(p.clone()))?;
        Ok(Lock(p))
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Ensures every manifest entry is present and verified under `cache_dir`,
/// downloading `base_url/<path>` when missing or corrupt.
pub fn fetch_dataset(
    base_url: &str,
    manifest: &Manifest,
    cache_dir: &Path,
    transport: &dyn Transport,
) -> Result<FetchReport, IngestError> {
    let mut report = FetchReport::default();
    for e in &manifest.entries {
        let target = cache_dir.join(&e.path);
        if verify(&target, e)? {
            report.reused.push(target);
            continue;
        }
        if target.exists() {
            let err = IngestError::ChecksumMismatch { path: target.clone(), expected: e.sha256.clone() };
            warn!("{err}; downloading again");
            report.repaired.push((target.clone(), err.to_string()));
        }
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        let _lock = Lock::acquire(&target)?;
        let url = format!("{}/{}", base_url.trim_end_matches('/'), e.path);
        info!("fetching {url}");
        let bytes = transport.get(&url)?;
        if bytes.len() as u64 != e.size || sha256_bytes(&bytes) != e.sha256 {
            return Err(IngestError::ChecksumMismatch { path: target, expected: e.sha256.clone() });
        }
        let tmp = target.with_extension("part");
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, &target)?;
        report.downloaded.push(target);
    }
    Ok(report)
}
