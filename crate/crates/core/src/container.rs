//! Two-file image/sinogram container: a `key = value` text header
//! (`<stem>.hdr`) next to a raw little-endian float32 payload (`<stem>.raw`).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::Image;
use crate::projector::Sinogram;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad header: {0}")]
    Header(String),
    #[error("payload has {actual} bytes, header implies {expected}")]
    PayloadSize { expected: usize, actual: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerKind {
    Image,
    Sinogram,
}

/// Header plus float32 payload as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    /// Row-major shape, outermost first.
    pub shape: Vec<usize>,
    /// Extra header fields (geometry, eta, seed, angles, ...).
    pub fields: BTreeMap<String, String>,
    pub data: Vec<f32>,
}

impl Container {
    pub fn from_image(img: &Image) -> Self {
        Container {
            kind: ContainerKind::Image,
            shape: vec![img.size(), img.size()],
            fields: BTreeMap::new(),
            data: img.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_sinogram(s: &Sinogram) -> Self {
        let mut fields = BTreeMap::new();
        fields.insert(
            "angles".to_string(),
            s.angles.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "),
        );
        fields.insert("eta".to_string(), format!("{:?}", s.noise_level));
        fields.insert("beam".to_string(), "parallel".to_string());
        Container {
            kind: ContainerKind::Sinogram,
            shape: vec![s.angles.len(), s.n_detector],
            fields,
            data: s.data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn with_field(mut self, key: &str, value: impl ToString) -> Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_image(&self) -> Result<Image, ContainerError> {
        if self.kind != ContainerKind::Image || self.shape.len() != 2 || self.shape[0] != self.shape[1] {
            return Err(ContainerError::Header("not a square image".into()));
        }
        Image::from_vec(self.shape[0], self.data.iter().map(|&v| v as f64).collect())
            .map_err(|e| ContainerError::Header(e.to_string()))
    }

    pub fn to_sinogram(&self) -> Result<Sinogram, ContainerError> {
        if self.kind != ContainerKind::Sinogram || self.shape.len() != 2 {
            return Err(ContainerError::Header("not a sinogram".into()));
        }
        let angles: Vec<usize> = self
            .fields
            .get("angles")
            .ok_or_else(|| ContainerError::Header("missing angles".into()))?
            .split_whitespace()
            .map(|a| a.parse().map_err(|_| ContainerError::Header(format!("bad angle '{a}'"))))
            .collect::<Result<_, _>>()?;
        let mut s = Sinogram::new(angles, self.shape[1], self.data.iter().map(|&v| v as f64).collect())
            .map_err(|e| ContainerError::Header(e.to_string()))?;
        if let Some(eta) = self.fields.get("eta") {
            s.noise_level = eta.parse().map_err(|_| ContainerError::Header(format!("bad eta '{eta}'")))?;
        }
        Ok(s)
    }

    /// Writes `<stem>.hdr` and `<stem>.raw`.
    pub fn write(&self, stem: &Path) -> Result<(), ContainerError> {
        let (hdr, raw) = paths(stem);
        let mut text = String::new();
        text.push_str("format = soed-container 1\n");
        let kind = match self.kind {
            ContainerKind::Image => "image",
            ContainerKind::Sinogram => "sinogram",
        };
        text.push_str(&format!("kind = {kind}\n"));
        let shape: Vec<String> = self.shape.iter().map(|d| d.to_string()).collect();
        text.push_str(&format!("shape = {}\n", shape.join(" ")));
        text.push_str("dtype = float32\norder = row-major\nendian = little\n");
        for (k, v) in &self.fields {
            text.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(&hdr, text).map_err(|source| ContainerError::Io { path: hdr.clone(), source })?;
        let mut bytes = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&raw, bytes).map_err(|source| ContainerError::Io { path: raw, source })
    }

    pub fn read(stem: &Path) -> Result<Container, ContainerError> {
        let (hdr, raw) = paths(stem);
        let text = fs::read_to_string(&hdr).map_err(|source| ContainerError::Io { path: hdr.clone(), source })?;
        let mut fields = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ContainerError::Header(format!("line without '=': {line}")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| ContainerError::Header(format!("missing '{k}'")))
        };
        if take("format")? != "soed-container 1" {
            return Err(ContainerError::Header("unsupported format version".into()));
        }
        let kind = match take("kind")?.as_str() {
            "image" => ContainerKind::Image,
            "sinogram" => ContainerKind::Sinogram,
            other => return Err(ContainerError::Header(format!("unknown kind '{other}'"))),
        };
        let shape: Vec<usize> = take("shape")?
            .split_whitespace()
            .map(|d| d.parse().map_err(|_| ContainerError::Header(format!("bad dimension '{d}'"))))
            .collect::<Result<_, _>>()?;
        for (k, want) in [("dtype", "float32"), ("order", "row-major"), ("endian", "little")] {
            let got = take(k)?;
            if got != want {
                return Err(ContainerError::Header(format!("{k} = {got}, expected {want}")));
            }
        }
        let bytes = fs::read(&raw).map_err(|source| ContainerError::Io { path: raw, source })?;
        let expected = shape.iter().product::<usize>() * 4;
        if bytes.len() != expected {
            return Err(ContainerError::PayloadSize {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Container {
            kind,
            shape,
            fields,
            data,
        })
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("hdr"), stem.with_extension("raw"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn payload_round_trips_bit_exactly(values in proptest::collection::vec(any::<f32>(), 12)) {
            let dir = tempfile::tempdir().unwrap();
            let c = Container {
                kind: ContainerKind::Sinogram,
                shape: vec![3, 4],
                fields: [("angles".to_string(), "0 5 9".to_string())].into(),
                data: values,
            };
            let stem = dir.path().join("s");
            c.write(&stem).unwrap();
            let back = Container::read(&stem).unwrap();
            prop_assert_eq!(back.shape, c.shape);
            prop_assert_eq!(back.fields, c.fields);
            let a: Vec<u32> = back.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = c.data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn sinogram_fields_survive() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Sinogram::new(vec![3, 1], 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        s.noise_level = 0.05;
        let stem = dir.path().join("sino");
        Container::from_sinogram(&s).with_field("seed", 4).write(&stem).unwrap();
        let c = Container::read(&stem).unwrap();
        assert_eq!(c.fields["seed"], "4");
        assert_eq!(c.to_sinogram().unwrap(), s);
        assert!(c.to_image().is_err());
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("img");
        Container::from_image(&Image::zeros(4)).write(&stem).unwrap();
        fs::write(stem.with_extension("raw"), [0u8; 10]).unwrap();
        assert!(matches!(Container::read(&stem), Err(ContainerError::PayloadSize { .. })));
    }
}
