//! Run configuration: `key = value` text with dotted section keys, layered
//! as defaults < file < command-line overrides. Array values in sweepable
//! keys expand into one run per combination.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;
use toml::Value;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey { key: String, suggestion: Option<String> },
    #[error("key `{key}`: expected {expected}, got `{got}`")]
    TypeError { key: String, expected: &'static str, got: String },
    #[error("missing required setting `{0}`")]
    MissingRequired(String),
    #[error("cannot parse configuration: {0}")]
    Syntax(String),
    #[error("cannot read {0}: {1}")]
    Read(PathBuf, String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantKind {
    Naive,
    Terminal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,

    pub data_grid: usize,
    pub data_n_per_shape: usize,
    pub data_manifest: Option<PathBuf>,
    pub data_rotations: String,

    pub env_cost_b: f64,
    pub env_eta: f64,
    pub env_max_steps: usize,
    pub env_sirt_iterations: usize,
    pub env_sirt_relaxation: f64,

    pub train_variant: VariantKind,
    pub train_episodes: u64,
    pub train_decide_before_acquire: bool,
    pub train_workers: usize,
    pub train_checkpoint_every: u64,
    pub train_trace_window: u64,
    pub train_resume: Option<PathBuf>,

    pub optim_learning_rate: f64,
    pub optim_weight_decay: f64,
    pub optim_beta1: f64,
    pub optim_beta2: f64,
    pub optim_eps: f64,
    pub optim_w_actor: f64,
    pub optim_w_critic: f64,
    pub optim_w_terminal: f64,
    pub optim_w_entropy: f64,

    pub eval_checkpoint: Option<PathBuf>,
    pub eval_mode: String,
    pub eval_n_per_shape: usize,
    pub eval_etas: Vec<f64>,
    pub eval_sinogram_dir: Option<PathBuf>,

    pub ingest_url: String,
    pub ingest_cache_dir: Option<PathBuf>,
    pub ingest_manifest: Option<PathBuf>,
    pub ingest_fetch: bool,
    pub ingest_input_dir: Option<PathBuf>,
    pub ingest_shape: Option<String>,
    pub ingest_sample: Option<u8>,
    pub ingest_current: Option<u16>,
    pub ingest_row: usize,
    pub ingest_col_offset: usize,
    pub ingest_pitch: f64,

    pub oracle_trajectories: usize,
    pub oracle_n_mdps: usize,

    pub baseline_policy: String,
    pub baseline_n_angles: usize,
    pub baseline_gr_offset: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 1,
            out_dir: PathBuf::from("runs"),
            data_grid: 64,
            data_n_per_shape: 200,
            data_manifest: None,
            data_rotations: "train".into(),
            env_cost_b: 0.5,
            env_eta: 0.05,
            env_max_steps: 20,
            env_sirt_iterations: 150,
            env_sirt_relaxation: 1.0,
            train_variant: VariantKind::Terminal,
            train_episodes: 5000,
            train_decide_before_acquire: false,
            train_workers: 1,
            train_checkpoint_every: 1000,
            train_trace_window: 1000,
            train_resume: None,
            optim_learning_rate: 1e-4,
            optim_weight_decay: 1e-5,
            optim_beta1: 0.9,
            optim_beta2: 0.999,
            optim_eps: 1e-8,
            optim_w_actor: 1.0,
            optim_w_critic: 0.5,
            optim_w_terminal: 1.0,
            optim_w_entropy: 0.01,
            eval_checkpoint: None,
            eval_mode: "stochastic".into(),
            eval_n_per_shape: 100,
            eval_etas: vec![0.03, 0.05, 0.07],
            eval_sinogram_dir: None,
            ingest_url: soed_ingest::manifest::DEFAULT_RECORD_URL.into(),
            ingest_cache_dir: None,
            ingest_manifest: None,
            ingest_fetch: false,
            ingest_input_dir: None,
            ingest_shape: None,
            ingest_sample: None,
            ingest_current: None,
            ingest_row: 5,
            ingest_col_offset: 0,
            ingest_pitch: soed_ingest::FanGeometry::RAW_PITCH,
            oracle_trajectories: 100_000,
            oracle_n_mdps: 20,
            baseline_policy: "golden".into(),
            baseline_n_angles: 20,
            baseline_gr_offset: 0.0,
        }
    }
}

/// Keys that take a list as their value and therefore never sweep.
const LIST_KEYS: &[&str] = &["eval.etas"];

pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "out_dir",
    "data.grid",
    "data.n_per_shape",
    "data.manifest",
    "data.rotations",
    "env.cost_b",
    "env.eta",
    "env.max_steps",
    "env.sirt_iterations",
    "env.sirt_relaxation",
    "train.variant",
    "train.episodes",
    "train.decide_before_acquire",
    "train.workers",
    "train.checkpoint_every",
    "train.trace_window",
    "train.resume",
    "optim.learning_rate",
    "optim.weight_decay",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.w_actor",
    "optim.w_critic",
    "optim.w_terminal",
    "optim.w_entropy",
    "eval.checkpoint",
    "eval.mode",
    "eval.n_per_shape",
    "eval.etas",
    "eval.sinogram_dir",
    "ingest.url",
    "ingest.cache_dir",
    "ingest.manifest",
    "ingest.fetch",
    "ingest.input_dir",
    "ingest.shape",
    "ingest.sample",
    "ingest.current",
    "ingest.row",
    "ingest.col_offset",
    "ingest.pitch",
    "oracle.trajectories",
    "oracle.n_mdps",
    "baseline.policy",
    "baseline.n_angles",
    "baseline.gr_offset",
];

fn suggest(key: &str) -> Option<String> {
    KEYS.iter()
        .map(|k| (strsim::jaro_winkler(key, k), *k))
        .filter(|(s, _)| *s > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, k)| k.to_string())
}

fn type_err(key: &str, expected: &'static str, v: &Value) -> ConfigError {
    ConfigError::TypeError { key: key.into(), expected, got: v.to_string() }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(type_err(key, "a number", v)),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(type_err(key, "a non-negative integer", v)),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize, ConfigError> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| type_err(key, "true or false", v))
}

fn as_string(key: &str, v: &Value) -> Result<String, ConfigError> {
    v.as_str().map(str::to_string).ok_or_else(|| type_err(key, "a string", v))
}

fn as_path(key: &str, v: &Value) -> Result<Option<PathBuf>, ConfigError> {
    let s = as_string(key, v)?;
    Ok(if s.is_empty() { None } else { Some(PathBuf::from(s)) })
}

fn one_of(key: &str, v: &Value, allowed: &'static [&'static str], expected: &'static str) -> Result<String, ConfigError> {
    let s = as_string(key, v)?;
    if allowed.contains(&s.as_str()) {
        Ok(s)
    } else {
        Err(type_err(key, expected, v))
    }
}

impl RunConfig {
    /// Sets one dotted key from a scalar (or list, for list keys) value.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), ConfigError> {
        match key {
            "seed" => self.seed = as_u64(key, v)?,
            "threads" => self.threads = as_usize(key, v)?.max(1),
            "out_dir" => self.out_dir = PathBuf::from(as_string(key, v)?),
            "data.grid" => self.data_grid = as_usize(key, v)?,
            "data.n_per_shape" => self.data_n_per_shape = as_usize(key, v)?,
            "data.manifest" => self.data_manifest = as_path(key, v)?,
            "data.rotations" => self.data_rotations = one_of(key, v, &["train", "validation"], "\"train\" or \"validation\"")?,
            "env.cost_b" => self.env_cost_b = as_f64(key, v)?,
            "env.eta" => self.env_eta = as_f64(key, v)?,
            "env.max_steps" => self.env_max_steps = as_usize(key, v)?,
            "env.sirt_iterations" => self.env_sirt_iterations = as_usize(key, v)?,
            "env.sirt_relaxation" => self.env_sirt_relaxation = as_f64(key, v)?,
            "train.variant" => {
                self.train_variant = match one_of(key, v, &["naive", "terminal"], "\"naive\" or \"terminal\"")?.as_str() {
                    "naive" => VariantKind::Naive,
                    _ => VariantKind::Terminal,
                }
            }
            "train.episodes" => self.train_episodes = as_u64(key, v)?,
            "train.decide_before_acquire" => self.train_decide_before_acquire = as_bool(key, v)?,
            "train.workers" => self.train_workers = as_usize(key, v)?,
            "train.checkpoint_every" => self.train_checkpoint_every = as_u64(key, v)?,
            "train.trace_window" => self.train_trace_window = as_u64(key, v)?,
            "train.resume" => self.train_resume = as_path(key, v)?,
            "optim.learning_rate" => self.optim_learning_rate = as_f64(key, v)?,
            "optim.weight_decay" => self.optim_weight_decay = as_f64(key, v)?,
            "optim.beta1" => self.optim_beta1 = as_f64(key, v)?,
            "optim.beta2" => self.optim_beta2 = as_f64(key, v)?,
            "optim.eps" => self.optim_eps = as_f64(key, v)?,
            "optim.w_actor" => self.optim_w_actor = as_f64(key, v)?,
            "optim.w_critic" => self.optim_w_critic = as_f64(key, v)?,
            "optim.w_terminal" => self.optim_w_terminal = as_f64(key, v)?,
            "optim.w_entropy" => self.optim_w_entropy = as_f64(key, v)?,
            "eval.checkpoint" => self.eval_checkpoint = as_path(key, v)?,
            "eval.mode" => self.eval_mode = one_of(key, v, &["stochastic", "greedy"], "\"stochastic\" or \"greedy\"")?,
            "eval.n_per_shape" => self.eval_n_per_shape = as_usize(key, v)?,
            "eval.etas" => {
                let arr = v.as_array().ok_or_else(|| type_err(key, "a list of numbers", v))?;
                self.eval_etas = arr.iter().map(|x| as_f64(key, x)).collect::<Result<_, _>>()?;
            }
            "eval.sinogram_dir" => self.eval_sinogram_dir = as_path(key, v)?,
            "ingest.url" => self.ingest_url = as_string(key, v)?,
            "ingest.cache_dir" => self.ingest_cache_dir = as_path(key, v)?,
            "ingest.manifest" => self.ingest_manifest = as_path(key, v)?,
            "ingest.fetch" => self.ingest_fetch = as_bool(key, v)?,
            "ingest.input_dir" => self.ingest_input_dir = as_path(key, v)?,
            "ingest.shape" => {
                let s = as_string(key, v)?;
                self.ingest_shape = match s.as_str() {
                    "" => None,
                    "triangle" | "pentagon" => Some(s),
                    _ => return Err(type_err(key, "\"triangle\" or \"pentagon\"", v)),
                }
            }
            "ingest.sample" => {
                let n = as_u64(key, v)?;
                self.ingest_sample = if n == 0 { None } else { Some(n.min(255) as u8) }
            }
            "ingest.current" => {
                let n = as_u64(key, v)?;
                self.ingest_current = if n == 0 { None } else { Some(n.min(u16::MAX as u64) as u16) }
            }
            "ingest.row" => self.ingest_row = as_usize(key, v)?,
            "ingest.col_offset" => self.ingest_col_offset = as_usize(key, v)?,
            "ingest.pitch" => self.ingest_pitch = as_f64(key, v)?,
            "oracle.trajectories" => self.oracle_trajectories = as_usize(key, v)?,
            "oracle.n_mdps" => self.oracle_n_mdps = as_usize(key, v)?,
            "baseline.policy" => {
                self.baseline_policy = one_of(key, v, &["golden", "uniform", "greedy"], "\"golden\", \"uniform\" or \"greedy\"")?
            }
            "baseline.n_angles" => self.baseline_n_angles = as_usize(key, v)?,
            "baseline.gr_offset" => self.baseline_gr_offset = as_f64(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into(), suggestion: suggest(key) }),
        }
        Ok(())
    }

    /// Every key with its current value, in `KEYS` order.
    pub fn resolved(&self) -> Vec<(&'static str, Value)> {
        let p = |o: &Option<PathBuf>| Value::String(o.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        let f = Value::Float;
        let i = |x: u64| Value::Integer(x as i64);
        let s = |x: &str| Value::String(x.to_string());
        vec![
            ("seed", i(self.seed)),
            ("threads", i(self.threads as u64)),
            ("out_dir", s(&self.out_dir.display().to_string())),
            ("data.grid", i(self.data_grid as u64)),
            ("data.n_per_shape", i(self.data_n_per_shape as u64)),
            ("data.manifest", p(&self.data_manifest)),
            ("data.rotations", s(&self.data_rotations)),
            ("env.cost_b", f(self.env_cost_b)),
            ("env.eta", f(self.env_eta)),
            ("env.max_steps", i(self.env_max_steps as u64)),
            ("env.sirt_iterations", i(self.env_sirt_iterations as u64)),
            ("env.sirt_relaxation", f(self.env_sirt_relaxation)),
            ("train.variant", s(match self.train_variant {
                VariantKind::Naive => "naive",
                VariantKind::Terminal => "terminal",
            })),
            ("train.episodes", i(self.train_episodes)),
            ("train.decide_before_acquire", Value::Boolean(self.train_decide_before_acquire)),
            ("train.workers", i(self.train_workers as u64)),
            ("train.checkpoint_every", i(self.train_checkpoint_every)),
            ("train.trace_window", i(self.train_trace_window)),
            ("train.resume", p(&self.train_resume)),
            ("optim.learning_rate", f(self.optim_learning_rate)),
            ("optim.weight_decay", f(self.optim_weight_decay)),
            ("optim.beta1", f(self.optim_beta1)),
            ("optim.beta2", f(self.optim_beta2)),
            ("optim.eps", f(self.optim_eps)),
            ("optim.w_actor", f(self.optim_w_actor)),
            ("optim.w_critic", f(self.optim_w_critic)),
            ("optim.w_terminal", f(self.optim_w_terminal)),
            ("optim.w_entropy", f(self.optim_w_entropy)),
            ("eval.checkpoint", p(&self.eval_checkpoint)),
            ("eval.mode", s(&self.eval_mode)),
            ("eval.n_per_shape", i(self.eval_n_per_shape as u64)),
            ("eval.etas", Value::Array(self.eval_etas.iter().map(|&e| f(e)).collect())),
            ("eval.sinogram_dir", p(&self.eval_sinogram_dir)),
            ("ingest.url", s(&self.ingest_url)),
            ("ingest.cache_dir", p(&self.ingest_cache_dir)),
            ("ingest.manifest", p(&self.ingest_manifest)),
            ("ingest.fetch", Value::Boolean(self.ingest_fetch)),
            ("ingest.input_dir", p(&self.ingest_input_dir)),
            ("ingest.shape", s(self.ingest_shape.as_deref().unwrap_or(""))),
            ("ingest.sample", i(self.ingest_sample.unwrap_or(0) as u64)),
            ("ingest.current", i(self.ingest_current.unwrap_or(0) as u64)),
            ("ingest.row", i(self.ingest_row as u64)),
            ("ingest.col_offset", i(self.ingest_col_offset as u64)),
            ("ingest.pitch", f(self.ingest_pitch)),
            ("oracle.trajectories", i(self.oracle_trajectories as u64)),
            ("oracle.n_mdps", i(self.oracle_n_mdps as u64)),
            ("baseline.policy", s(&self.baseline_policy)),
            ("baseline.n_angles", i(self.baseline_n_angles as u64)),
            ("baseline.gr_offset", f(self.baseline_gr_offset)),
        ]
    }

    /// Resolved configuration in the same `key = value` grammar it is read
    /// from.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// Flattens nested tables into dotted keys.
fn flatten(prefix: &str, t: &toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(inner) => flatten(&key, inner, out),
            _ => {
                out.insert(key, v.clone());
            }
        }
    }
}

/// Parses configuration text into dotted key/value pairs.
pub fn parse_text(text: &str) -> Result<BTreeMap<String, Value>, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out);
    Ok(out)
}

pub fn parse_file(path: &Path) -> Result<BTreeMap<String, Value>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(path.to_path_buf(), e.to_string()))?;
    parse_text(&text)
}

/// Parses a `key=value` override; values that are not valid literals are
/// taken as bare strings.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::Syntax(format!("override `{s}` is not of the form key=value")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    let value = match format!("v = {v}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(v.to_string()),
    };
    Ok((k, value))
}

/// Applies layered settings (later layers win) and expands sweeps. Returns
/// one configuration per combination of array-valued sweepable keys.
pub fn resolve(layers: &[BTreeMap<String, Value>]) -> Result<Vec<RunConfig>, ConfigError> {
    let mut merged: BTreeMap<String, Value> = BTreeMap::new();
    for l in layers {
        for (k, v) in l {
            merged.insert(k.clone(), v.clone());
        }
    }
    let mut combos: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for (k, v) in &merged {
        let choices: Vec<Value> = match v {
            Value::Array(a) if !LIST_KEYS.contains(&k.as_str()) => {
                if a.is_empty() {
                    return Err(ConfigError::TypeError { key: k.clone(), expected: "a non-empty sweep list", got: v.to_string() });
                }
                a.clone()
            }
            _ => vec![v.clone()],
        };
        combos = combos
            .into_iter()
            .flat_map(|c| {
                choices.iter().map(move |ch| {
                    let mut c = c.clone();
                    c.push((k.clone(), ch.clone()));
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|c| {
            let mut cfg = RunConfig::default();
            for (k, v) in &c {
                cfg.set(k, v)?;
            }
            Ok(cfg)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfgs = resolve(&[parse_text("").unwrap()]).unwrap();
        assert_eq!(cfgs, vec![RunConfig::default()]);
        let d = &cfgs[0];
        assert_eq!((d.env_cost_b, d.env_eta, d.env_max_steps), (0.5, 0.05, 20));
        assert_eq!((d.optim_learning_rate, d.optim_weight_decay), (1e-4, 1e-5));
        assert_eq!((d.optim_w_actor, d.optim_w_critic, d.optim_w_terminal, d.optim_w_entropy), (1.0, 0.5, 1.0, 0.01));
    }

    #[test]
    fn flags_override_file() {
        let file = parse_text("env.cost_b = 0.5\n[train]\nepisodes = 10\n").unwrap();
        let flags: BTreeMap<_, _> = [parse_override("env.cost_b=0.9").unwrap()].into_iter().collect();
        let c = resolve(&[file, flags]).unwrap();
        assert_eq!(c[0].env_cost_b, 0.9);
        assert_eq!(c[0].train_episodes, 10);
    }

    #[test]
    fn typo_names_nearest_key() {
        let err = resolve(&[parse_text("consts_b = 0.4").unwrap()]).unwrap_err();
        match err {
            ConfigError::UnknownKey { key, suggestion } => {
                assert_eq!(key, "consts_b");
                assert_eq!(suggestion.as_deref(), Some("env.cost_b"));
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(resolve(&[parse_text("env.eta = \"high\"").unwrap()]), Err(ConfigError::TypeError { .. })));
    }

    #[test]
    fn lists_expand_into_sweeps() {
        let c = resolve(&[parse_text("env.cost_b = [0.4, 0.9]\nenv.eta = [0.03, 0.05, 0.07]\neval.etas = [0.03]").unwrap()]).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|x| x.eval_etas == vec![0.03]));
    }

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::default();
        c.env_cost_b = 0.7;
        c.train_variant = VariantKind::Naive;
        c.eval_checkpoint = Some("a/b.ckpt".into());
        let back = resolve(&[parse_text(&c.to_text()).unwrap()]).unwrap();
        assert_eq!(back, vec![c]);
    }

    #[test]
    fn bare_strings_are_accepted_in_overrides() {
        let (k, v) = parse_override("train.variant=naive").unwrap();
        let mut c = RunConfig::default();
        c.set(&k, &v).unwrap();
        assert_eq!(c.train_variant, VariantKind::Naive);
    }
}
