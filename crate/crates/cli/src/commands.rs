//! Subcommand bodies. Each writes its artifacts into a fresh run directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use soed_agent::checkpoint::Checkpoint;
use soed_agent::eval::{self, EvalRecord};
use soed_core::baselines::{golden_ratio_sequence_from, greedy_exhaustive, prefix_psnr, uniform_sequence};
use soed_core::container::Container;
use soed_core::phantom::{write_manifest, ManifestRecord};
use soed_core::sirt::sirt_reconstruct;
use soed_core::{ScanEnv, N_ANGLES};
use soed_ingest::manifest::{select_groups, GroupShape};
use soed_ingest::{fetch_dataset, preprocess, read_flexray_dir, rebin_fan_to_parallel, FanGeometry, HttpTransport, Manifest, PreprocessConfig, PARALLEL_BINS};
use soed_oracle::check::{check_gradients, check_identities, check_recursion_vs_enumeration, check_stopping_sign};
use soed_oracle::{run_all, CheckResult, TabularMdp, TabularPolicies};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::experiment;

/// Environment variable overriding the download cache directory.
pub const CACHE_ENV: &str = "SOED_CACHE_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    GenData,
    Train,
    Eval,
    Ingest,
    Oracle,
    Baseline,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::GenData => "gen-data",
            Subcommand::Train => "train",
            Subcommand::Eval => "eval",
            Subcommand::Ingest => "ingest",
            Subcommand::Oracle => "oracle",
            Subcommand::Baseline => "baseline",
        }
    }
}

/// Creates `<out_dir>/<command>-<timestamp>-s<seed>` and records the
/// resolved configuration, crate version and seed in it.
pub fn create_run_dir(cfg: &RunConfig, cmd: Subcommand) -> Result<PathBuf, CliError> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S%.3f");
    let base = cfg.out_dir.join(format!("{}-{stamp}-s{}", cmd.name(), cfg.seed));
    let mut dir = base.clone();
    let mut n = 1;
    while dir.exists() {
        dir = PathBuf::from(format!("{}-{n}", base.display()));
        n += 1;
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.toml"), cfg.to_text())?;
    fs::write(
        dir.join("run.txt"),
        format!(
            "command = {}\nseed = {}\nsoed_version = {}\ncreated = {}\n",
            cmd.name(),
            cfg.seed,
            env!("CARGO_PKG_VERSION"),
            chrono::Local::now().to_rfc3339()
        ),
    )?;
    Ok(dir)
}

pub fn run(cmd: Subcommand, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = create_run_dir(cfg, cmd)?;
    info!("{} → {}", cmd.name(), dir.display());
    match cmd {
        Subcommand::GenData => gen_data(cfg, &dir)?,
        Subcommand::Train => train(cfg, &dir)?,
        Subcommand::Eval => evaluate(cfg, &dir)?,
        Subcommand::Ingest => ingest(cfg, &dir)?,
        Subcommand::Oracle => oracle(cfg, &dir)?,
        Subcommand::Baseline => baseline(cfg, &dir)?,
    }
    Ok(dir)
}

fn gen_data(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let pool = experiment::phantom_pool(cfg, cfg.seed, cfg.data_n_per_shape, &cfg.data_rotations)?;
    let img_dir = dir.join("phantoms");
    fs::create_dir_all(&img_dir)?;
    let records: Vec<ManifestRecord> = pool
        .iter()
        .map(|p| ManifestRecord { id: p.id.clone(), spec: p.spec.clone(), seed: cfg.seed })
        .collect();
    write_manifest(BufWriter::new(fs::File::create(dir.join("manifest.tsv"))?), &records)?;
    for (i, p) in pool.iter().enumerate() {
        Container::from_image(&p.image)
            .with_field("id", &p.id)
            .write(&img_dir.join(format!("{i:05}")))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    info!("wrote {} phantoms", pool.len());
    Ok(())
}

fn train(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let mut recent = Vec::new();
    let run = experiment::train_run(cfg, Some(dir), |o| {
        recent.push(o.summary.n_angles as f64);
        if (o.summary.episode + 1) % 100 == 0 {
            let mean = recent.iter().sum::<f64>() / recent.len() as f64;
            info!("episode {} mean angles over last {}: {mean:.2}", o.summary.episode + 1, recent.len());
            recent.clear();
        }
    })?;
    info!("trained to {} episodes; checkpoint {}", run.episodes_done, dir.join("checkpoint.ckpt").display());
    Ok(())
}

fn write_eval_outputs(records: &[EvalRecord], dir: &Path) -> Result<(), CliError> {
    let rows = eval::summarize(records).map_err(|e| CliError::Runtime(e.to_string()))?;
    eval::write_summary(&rows, BufWriter::new(fs::File::create(dir.join("summary.tsv"))?))?;
    eval::write_episodes(records, BufWriter::new(fs::File::create(dir.join("episodes.tsv"))?))?;
    let mut conditions: Vec<&str> = records.iter().map(|r| r.condition.as_str()).collect();
    conditions.sort();
    conditions.dedup();
    for c in conditions {
        let subset: Vec<EvalRecord> = records.iter().filter(|r| r.condition == c).cloned().collect();
        let file = format!("scatter_{}.svg", c.replace(['=', '/', ' '], "_"));
        eval::scatter_svg(&subset, &format!("policy vs golden ratio ({c})"), &dir.join(file))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

/// Loads rebinned sinograms and builds environments whose reference is the
/// full-angle reconstruction.
pub fn experimental_envs(cfg: &RunConfig, sino_dir: &Path) -> Result<Vec<Arc<ScanEnv>>, CliError> {
    let mut stems: Vec<PathBuf> = fs::read_dir(sino_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", sino_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hdr"))
        .map(|p| p.with_extension(""))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(CliError::Data(format!("no sinogram containers in {}", sino_dir.display())));
    }
    let env_cfg = experiment::env_config(cfg)?;
    stems
        .iter()
        .map(|stem| {
            let c = Container::read(stem).map_err(|e| CliError::Data(e.to_string()))?;
            let sino = c.to_sinogram().map_err(|e| CliError::Data(e.to_string()))?;
            let proj = experiment::projector(sino.n_detector);
            let truth = sirt_reconstruct(&proj, &sino, &env_cfg.sirt, None).map_err(|e| CliError::Data(e.to_string()))?;
            let name = stem.file_name().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
            let label = name.split('_').next().unwrap_or("scan").to_string();
            ScanEnv::from_measurements(proj, sino, truth, &name, &label, &env_cfg)
                .map(Arc::new)
                .map_err(|e| CliError::Data(e.to_string()))
        })
        .collect()
}

fn evaluate(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let path = cfg.eval_checkpoint.as_ref().ok_or_else(|| CliError::Config("missing required setting `eval.checkpoint`".into()))?;
    let ck = Checkpoint::load(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    if let Some(sd) = &cfg.eval_sinogram_dir {
        let envs = experimental_envs(cfg, sd)?;
        records.extend(experiment::evaluate_fixed(cfg, &ck.params, &envs, "experimental")?);
    } else {
        let vcfg = RunConfig { data_manifest: None, ..cfg.clone() };
        let pool = experiment::phantom_pool(&vcfg, cfg.seed.wrapping_add(1), cfg.eval_n_per_shape, "validation")?;
        for (i, &eta) in cfg.eval_etas.iter().enumerate() {
            records.extend(experiment::evaluate_synthetic(cfg, &ck.params, &pool, eta, i)?);
        }
    }
    write_eval_outputs(&records, dir)?;
    info!("evaluated {} episodes", records.len());
    Ok(())
}

fn cache_dir(cfg: &RunConfig) -> PathBuf {
    if let Some(d) = &cfg.ingest_cache_dir {
        return d.clone();
    }
    if let Ok(d) = std::env::var(CACHE_ENV) {
        if !d.is_empty() {
            return PathBuf::from(d);
        }
    }
    std::env::var("HOME").map(|h| PathBuf::from(h).join(".cache").join("soed")).unwrap_or_else(|_| PathBuf::from(".soed-cache"))
}

fn ingest(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let data_err = |e: soed_ingest::IngestError| CliError::Data(e.to_string());
    let root = match &cfg.ingest_input_dir {
        Some(d) => d.clone(),
        None => cache_dir(cfg),
    };
    if cfg.ingest_fetch {
        let mpath = cfg.ingest_manifest.as_ref().ok_or_else(|| CliError::Config("missing required setting `ingest.manifest`".into()))?;
        let manifest = Manifest::load(mpath).map_err(data_err)?;
        let report = fetch_dataset(&cfg.ingest_url, &manifest, &root, &HttpTransport::default()).map_err(data_err)?;
        info!("fetch: {} downloaded, {} reused, {} repaired", report.downloaded.len(), report.reused.len(), report.repaired.len());
    }
    let shape = match cfg.ingest_shape.as_deref() {
        Some("triangle") => Some(GroupShape::Triangle),
        Some("pentagon") => Some(GroupShape::Pentagon),
        _ => None,
    };
    let groups: Vec<_> = select_groups(shape, cfg.ingest_sample, cfg.ingest_current)
        .into_iter()
        .filter(|g| root.join(g.to_string()).is_dir())
        .collect();
    if groups.is_empty() {
        return Err(CliError::Data(format!("no matching scan groups under {}", root.display())));
    }
    let out = dir.join("sinograms");
    fs::create_dir_all(&out)?;
    let pcfg = PreprocessConfig { row: cfg.ingest_row, col_offset: cfg.ingest_col_offset, ..PreprocessConfig::default() };
    let results: Vec<Result<(), CliError>> = groups
        .par_iter()
        .map(|g| {
            let name = g.to_string();
            let raw = read_flexray_dir(&root.join(&name), FanGeometry::flexray(cfg.ingest_pitch), g.current_ua, &name).map_err(data_err)?;
            let pre = preprocess(&raw, &pcfg).map_err(data_err)?;
            for w in &pre.warnings {
                warn!("{name}: {w}");
            }
            let sino = rebin_fan_to_parallel(&pre.sinogram, PARALLEL_BINS, None).map_err(data_err)?;
            Container::from_sinogram(&sino)
                .with_field("group", &name)
                .write(&out.join(&name))
                .map_err(|e| CliError::Runtime(e.to_string()))
        })
        .collect();
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    info!("rebinned {} groups", groups.len());
    Ok(())
}

/// Gradient-oracle suite: identities, unrolled-vs-finite-difference
/// gradients on `n_mdps` random instances, and the sampled estimator and
/// convergence checks on the reference instance.
pub fn oracle_checks(seed: u64, n_mdps: usize, trajectories: usize) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_mdps {
        let ns = rng.random_range(2..=12);
        let na = rng.random_range(2..=4);
        let horizon = rng.random_range(1..=5);
        let b = rng.random_range(0.1..2.0);
        let mdp = TabularMdp::random(ns, na, horizon, b, rng.random());
        let pol = TabularPolicies::random(ns, na, rng.random());
        let tag = format!("mdp{i:02}[{ns}s,{na}a,M={horizon}]");
        let mut checks = vec![check_identities(&mdp, &pol), check_gradients(&mdp, &pol)];
        if ((ns * na) as f64).powi(horizon as i32) <= 2e5 {
            checks.push(check_recursion_vs_enumeration(&mdp, &pol));
        }
        for mut c in checks {
            c.name = format!("{tag} {}", c.name);
            out.push(c);
        }
        let mut sign = check_stopping_sign(&mdp, &pol);
        // Informational only: instances without a definite-sign state are skipped.
        if sign.detail.starts_with("0 ") {
            continue;
        }
        sign.name = format!("{tag} {}", sign.name);
        out.push(sign);
    }
    out.extend(run_all(seed, trajectories));
    out
}

fn oracle(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let results = oracle_checks(cfg.seed, cfg.oracle_n_mdps, cfg.oracle_trajectories);
    let mut f = BufWriter::new(fs::File::create(dir.join("oracle.txt"))?);
    for r in &results {
        println!("{r}");
        writeln!(f, "{r}")?;
    }
    f.flush()?;
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} of {} oracle checks failed", results.len())));
    }
    Ok(())
}

fn baseline(cfg: &RunConfig, dir: &Path) -> Result<(), CliError> {
    let vcfg = RunConfig { data_manifest: None, ..cfg.clone() };
    let pool = experiment::phantom_pool(&vcfg, cfg.seed.wrapping_add(1), cfg.eval_n_per_shape, "validation")?;
    let proj = experiment::projector(cfg.data_grid);
    let env_cfg = experiment::env_config(cfg)?;
    let n = cfg.baseline_n_angles.min(N_ANGLES);
    let rows: Vec<Result<Vec<String>, CliError>> = pool
        .par_iter()
        .enumerate()
        .map(|(i, ph)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let env = ScanEnv::simulate(proj.clone(), ph, cfg.env_eta, rng.random(), &env_cfg).map_err(|e| CliError::Data(e.to_string()))?;
            let seq = match cfg.baseline_policy.as_str() {
                "uniform" => uniform_sequence(n),
                "greedy" => greedy_exhaustive(&env, n).map_err(|e| CliError::Runtime(e.to_string()))?,
                _ => golden_ratio_sequence_from(n, cfg.baseline_gr_offset),
            };
            let psnr = prefix_psnr(&env, &seq.angles).map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok(seq
                .angles
                .iter()
                .zip(&psnr)
                .enumerate()
                .map(|(k, (a, p))| format!("{}\t{}\t{}\t{}\t{a}\t{p:.6}", ph.id, ph.spec.kind.name(), cfg.baseline_policy, k + 1))
                .collect())
        })
        .collect();
    let mut f = BufWriter::new(fs::File::create(dir.join("baseline.tsv"))?);
    writeln!(f, "id\tlabel\tpolicy\tn_angles\tangle\tpsnr")?;
    for r in rows {
        for line in r? {
            writeln!(f, "{line}")?;
        }
    }
    f.flush()?;
    Ok(())
}
