//! Checkpoint files: a text header (architecture, optimizer step, episode
//! counter) followed by little-endian `f64` parameters and Adam moments.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::net::{NetConfig, NetError, NetParams};
use crate::optim::Adam;

pub const CHECKPOINT_MAGIC: &str = "soed-checkpoint 1";
const SEPARATOR: &[u8] = b"\n--\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: NetParams,
    pub adam: Adam,
    /// Episodes completed when the checkpoint was written.
    pub episodes_done: u64,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let c = self.params.config();
        let header = format!(
            "{CHECKPOINT_MAGIC}\ngrid = {}\nchannels = {}\npools = {}\nfirst_stride = {}\ngroups = {}\nleaky_slope_bits = {:016x}\nn_actions = {}\nstep_count = {}\nepisodes_done = {}\nn_params = {}\ndtype = float64",
            c.grid,
            join(&c.channels),
            join(&c.pools),
            c.first_stride,
            c.groups,
            c.leaky_slope.to_bits(),
            c.n_actions,
            self.adam.step_count,
            self.episodes_done,
            self.params.len(),
        );
        let tmp = path.with_extension("tmp");
        {
            let mut f = io::BufWriter::new(fs::File::create(&tmp)?);
            f.write_all(header.as_bytes())?;
            f.write_all(SEPARATOR)?;
            for block in [self.params.data(), &self.adam.m, &self.adam.v] {
                for v in block {
                    f.write_all(&v.to_le_bytes())?;
                }
            }
            f.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path)?;
        let split = bytes
            .windows(SEPARATOR.len())
            .position(|w| w == SEPARATOR)
            .ok_or_else(|| CheckpointError::Format("missing header separator".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))?;
        let mut lines = header.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(CheckpointError::Format("unknown format tag".into()));
        }
        let mut kv = std::collections::HashMap::new();
        for line in lines {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| CheckpointError::Format(format!("bad header line {line:?}")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| kv.get(k).ok_or_else(|| CheckpointError::Format(format!("missing key {k}")));
        let num = |k: &str| -> Result<u64, CheckpointError> {
            get(k)?.parse().map_err(|_| CheckpointError::Format(format!("bad value for {k}")))
        };
        let list = |k: &str| -> Result<Vec<usize>, CheckpointError> {
            get(k)?
                .split(',')
                .map(|s| s.parse().map_err(|_| CheckpointError::Format(format!("bad list {k}"))))
                .collect()
        };
        if get("dtype")? != "float64" {
            return Err(CheckpointError::Format("unsupported dtype".into()));
        }
        let slope_bits = u64::from_str_radix(get("leaky_slope_bits")?, 16).map_err(|_| CheckpointError::Format("bad slope".into()))?;
        let config = NetConfig {
            grid: num("grid")? as usize,
            channels: list("channels")?,
            pools: list("pools")?,
            first_stride: num("first_stride")? as usize,
            groups: num("groups")? as usize,
            leaky_slope: f64::from_bits(slope_bits),
            n_actions: num("n_actions")? as usize,
        };
        let n = num("n_params")? as usize;
        let payload = &bytes[split + SEPARATOR.len()..];
        if payload.len() != 3 * n * 8 {
            return Err(CheckpointError::Format(format!("payload has {} bytes, expected {}", payload.len(), 3 * n * 8)));
        }
        let mut vals = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let data: Vec<f64> = vals.by_ref().take(n).collect();
        let m: Vec<f64> = vals.by_ref().take(n).collect();
        let v: Vec<f64> = vals.collect();
        let params = NetParams::from_parts(config, data)?;
        Ok(Self {
            params,
            adam: Adam { m, v, step_count: num("step_count")? },
            episodes_done: num("episodes_done")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let params = NetParams::init(NetConfig::reduced(181), 9).unwrap();
        let n = params.len();
        let mut adam = Adam::new(n);
        adam.m.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).sin() * 1e-3);
        adam.v.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64).cos().powi(2) * 1e-7);
        adam.step_count = 17;
        let ck = Checkpoint { params, adam, episodes_done: 123 };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.ckpt");
        ck.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let params = NetParams::init(NetConfig::reduced(180), 1).unwrap();
        let ck = Checkpoint { adam: Adam::new(params.len()), params, episodes_done: 0 };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("net.ckpt");
        ck.save(&p).unwrap();
        let mut b = fs::read(&p).unwrap();
        b.truncate(b.len() - 5);
        fs::write(&p, b).unwrap();
        assert!(matches!(Checkpoint::load(&p), Err(CheckpointError::Format(_))));
    }
}
