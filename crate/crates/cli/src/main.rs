use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand as ClapSubcommand};
use soed_cli::config::{parse_file, parse_override, resolve};
use soed_cli::{run, CliError, Subcommand};
use toml::Value;

#[derive(Parser)]
#[command(name = "soed", version, about = "Sequential angle selection for sparse-angle CT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`key = value`, dotted section keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any key: `--set env.eta=0.03` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Per-step cost b.
    #[arg(long, global = true)]
    cost_b: Option<f64>,
    /// Relative noise level.
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Image grid size.
    #[arg(long, global = true)]
    grid: Option<usize>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Generate a phantom dataset and its manifest.
    GenData,
    /// Train an agent.
    Train {
        /// naive | terminal
        #[arg(long)]
        variant: Option<String>,
        /// Total episodes (including resumed ones).
        #[arg(long)]
        episodes: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the golden-ratio baseline.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Download and rebin experimental scans.
    Ingest {
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        fetch: bool,
        #[arg(long)]
        input_dir: Option<PathBuf>,
        #[arg(long)]
        shape: Option<String>,
        #[arg(long)]
        sample: Option<u8>,
        #[arg(long)]
        current: Option<u16>,
    },
    /// Exact gradient checks on tabular problems.
    Oracle,
    /// Fixed-schedule baselines.
    Baseline {
        /// golden | uniform | greedy
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        n_angles: Option<usize>,
    },
}

fn flags(cli: &Cli) -> Result<(Subcommand, BTreeMap<String, Value>), CliError> {
    let mut m = BTreeMap::new();
    for s in &cli.set {
        let (k, v) = parse_override(s)?;
        m.insert(k, v);
    }
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
    let int = |x: Option<u64>| x.map(|x| Value::Integer(x as i64));
    put("seed", int(cli.seed));
    put("threads", int(cli.threads.map(|t| t as u64)));
    put("out_dir", path(&cli.out_dir));
    put("env.cost_b", cli.cost_b.map(Value::Float));
    put("env.eta", cli.eta.map(Value::Float));
    put("data.grid", int(cli.grid.map(|g| g as u64)));
    let cmd = match &cli.command {
        Command::GenData => Subcommand::GenData,
        Command::Train { variant, episodes, resume } => {
            put("train.variant", variant.clone().map(Value::String));
            put("train.episodes", int(*episodes));
            put("train.resume", path(resume));
            Subcommand::Train
        }
        Command::Eval { checkpoint, variant } => {
            put("eval.checkpoint", path(checkpoint));
            put("train.variant", variant.clone().map(Value::String));
            Subcommand::Eval
        }
        Command::Ingest { url, cache_dir, manifest, fetch, input_dir, shape, sample, current } => {
            put("ingest.url", url.clone().map(Value::String));
            put("ingest.cache_dir", path(cache_dir));
            put("ingest.manifest", path(manifest));
            put("ingest.fetch", fetch.then_some(Value::Boolean(true)));
            put("ingest.input_dir", path(input_dir));
            put("ingest.shape", shape.clone().map(Value::String));
            put("ingest.sample", int(sample.map(u64::from)));
            put("ingest.current", int(current.map(u64::from)));
            Subcommand::Ingest
        }
        Command::Oracle => Subcommand::Oracle,
        Command::Baseline { policy, n_angles } => {
            put("baseline.policy", policy.clone().map(Value::String));
            put("baseline.n_angles", int(n_angles.map(|n| n as u64)));
            Subcommand::Baseline
        }
    };
    Ok((cmd, m))
}

fn main_inner() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (cmd, overrides) = flags(&cli)?;
    let file = match &cli.config {
        Some(p) => parse_file(p)?,
        None => BTreeMap::new(),
    };
    let configs = resolve(&[file, overrides])?;
    for cfg in &configs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?
            .install(|| run(cmd, cfg))
            .map(|dir| println!("{}", dir.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("soed: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
