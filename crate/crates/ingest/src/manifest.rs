//! Checksum manifests and the experimental group catalogue.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::IngestError;

pub const DEFAULT_RECORD_URL: &str = "https://zenodo.org/records/14893740/files";

/// One `path <TAB> size <TAB> sha256` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub size: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse<R: BufRead>(input: R) -> Result<Self, IngestError> {
        let mut entries = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = || IngestError::Manifest(format!("line {}: expected path, size, sha256", i + 1));
            if f.len() != 3 || f[2].len() != 64 || !f[2].bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad());
            }
            if f[0].split('/').any(|c| c == ".." || c.is_empty()) || f[0].starts_with('/') {
                return Err(IngestError::Manifest(format!("line {}: unsafe path {:?}", i + 1, f[0])));
            }
            entries.push(ManifestEntry {
                path: f[0].to_string(),
                size: f[1].parse().map_err(|_| bad())?,
                sha256: f[2].to_ascii_lowercase(),
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::parse(BufReader::new(File::open(path)?))
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# path\tsize\tsha256")?;
        for e in &self.entries {
            writeln!(out, "{}\t{}\t{}", e.path, e.size, e.sha256)?;
        }
        Ok(())
    }

    /// Builds a manifest from files under `root`.
    pub fn from_files(root: &Path, paths: &[&str]) -> Result<Self, IngestError> {
        let mut entries = Vec::new();
        for p in paths {
            let full = root.join(p);
            entries.push(ManifestEntry {
                path: p.to_string(),
                size: std::fs::metadata(&full)?.len(),
                sha256: sha256_file(&full)?,
            });
        }
        Ok(Self { entries })
    }

    /// Distinct experimental groups referenced by the manifest.
    pub fn groups(&self) -> Vec<GroupId> {
        let mut g: Vec<GroupId> = self
            .entries
            .iter()
            .filter_map(|e| e.path.split('/').next().and_then(|d| d.parse().ok()))
            .collect();
        g.sort();
        g.dedup();
        g
    }
}

pub fn sha256_bytes(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn sha256_file(path: &Path) -> Result<String, IngestError> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Experimental group: shape, sample number (1–12) and tube current (µA).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupId {
    pub shape: GroupShape,
    pub sample: u8,
    pub current_ua: u16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupShape {
    Triangle,
    Pentagon,
}

impl GroupShape {
    pub fn name(self) -> &'static str {
        match self {
            GroupShape::Triangle => "triangle",
            GroupShape::Pentagon => "pentagon",
        }
    }
}

pub const CURRENTS_UA: [u16; 2] = [600, 100];
pub const SAMPLES_PER_SHAPE: u8 = 12;

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:02}_{}uA", self.shape.name(), self.sample, self.current_ua)
    }
}

impl FromStr for GroupId {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, IngestError> {
        let bad = || IngestError::Manifest(format!("not a group name: {s:?}"));
        let mut parts = s.split('_');
        let shape = match parts.next() {
            Some("triangle") => GroupShape::Triangle,
            Some("pentagon") => GroupShape::Pentagon,
            _ => return Err(bad()),
        };
        let sample: u8 = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
        let current_ua: u16 = parts
            .next()
            .and_then(|p| p.strip_suffix("uA"))
            .and_then(|p| p.parse().ok())
            .ok_or_else(bad)?;
        if parts.next().is_some() || !(1..=SAMPLES_PER_SHAPE).contains(&sample) {
            return Err(bad());
        }
        Ok(GroupId { shape, sample, current_ua })
    }
}

/// All 48 groups: 2 shapes × 12 samples × 2 currents.
pub fn standard_groups() -> Vec<GroupId> {
    let mut out = Vec::with_capacity(48);
    for shape in [GroupShape::Triangle, GroupShape::Pentagon] {
        for sample in 1..=SAMPLES_PER_SHAPE {
            for current_ua in CURRENTS_UA {
                out.push(GroupId { shape, sample, current_ua });
            }
        }
    }
    out
}

/// Selects groups by optional shape, sample and current.
pub fn select_groups(shape: Option<GroupShape>, sample: Option<u8>, current: Option<u16>) -> Vec<GroupId> {
    standard_groups()
        .into_iter()
        .filter(|g| shape.is_none_or(|s| g.shape == s))
        .filter(|g| sample.is_none_or(|s| g.sample == s))
        .filter(|g| current.is_none_or(|c| g.current_ua == c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_has_48_groups() {
        let g = standard_groups();
        assert_eq!(g.len(), 48);
        let mut names: Vec<String> = g.iter().map(|x| x.to_string()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 48);
        for x in &g {
            assert_eq!(x.to_string().parse::<GroupId>().unwrap(), *x);
        }
        assert_eq!(select_groups(Some(GroupShape::Pentagon), None, Some(100)).len(), 12);
    }

    #[test]
    fn manifest_round_trip_and_validation() {
        let m = Manifest {
            entries: vec![ManifestEntry { path: "triangle_01_600uA/scan_000000.tif".into(), size: 12, sha256: "ab".repeat(32) }],
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(Manifest::parse(&buf[..]).unwrap(), m);
        assert_eq!(m.groups().len(), 1);
        assert!(Manifest::parse(&b"../x\t1\tab\n"[..]).is_err());
        assert!(Manifest::parse(format!("../x\t1\t{}\n", "0".repeat(64)).as_bytes()).is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_bytes(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
