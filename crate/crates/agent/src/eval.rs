//! Policy evaluation against the golden-ratio baseline, with summary tables
//! and scatter plots.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use plotters::prelude::*;
use rand::Rng;
use soed_core::baselines::golden_ratio_sequence;
use soed_core::{AngleMask, ScanEnv};
use thiserror::Error;

use crate::loss::Variant;
use crate::net::NetParams;
use crate::train::{sample_bernoulli, sample_categorical, STOP_ACTION};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("network expects G={net_grid} with {n_actions} actions; scan has G={env_grid}")]
    ArchitectureMismatch { net_grid: usize, env_grid: usize, n_actions: usize },
    #[error("no evaluation records")]
    EmptyRunSet,
    #[error("environment: {0}")]
    Env(String),
    #[error("network: {0}")]
    Net(#[from] crate::net::NetError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("plot: {0}")]
    Plot(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalMode {
    Greedy,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub id: String,
    pub label: String,
    pub condition: String,
    pub cost_b: f64,
    pub angles: Vec<usize>,
    pub psnr_policy: f64,
    pub psnr_gr: f64,
    pub gr_angles: usize,
}

impl EvalRecord {
    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }
}

fn env_err(e: impl ToString) -> EvalError {
    EvalError::Env(e.to_string())
}

/// Runs the trained policy without learning. Greedy mode takes the argmax
/// angle and stops when p > 0.5; stochastic mode samples both.
#[allow(clippy::too_many_arguments)]
pub fn run_policy_episode(
    params: &NetParams,
    env: &ScanEnv,
    variant: Variant,
    mode: EvalMode,
    decide_before_acquire: bool,
    condition: &str,
    rng: &mut impl Rng,
) -> Result<EvalRecord, EvalError> {
    let cfg = params.config();
    let expected_actions = match variant {
        Variant::Naive => STOP_ACTION + 1,
        Variant::Terminal => STOP_ACTION,
    };
    if cfg.grid != env.grid() || cfg.n_actions != expected_actions {
        return Err(EvalError::ArchitectureMismatch { net_grid: cfg.grid, env_grid: env.grid(), n_actions: cfg.n_actions });
    }
    let pick = |probs: &[f64], rng: &mut dyn rand::RngCore| -> usize {
        match mode {
            EvalMode::Greedy => argmax(probs),
            EvalMode::Stochastic => sample_categorical(probs, rng),
        }
    };
    let stop = |p: f64, rng: &mut dyn rand::RngCore| -> bool {
        match mode {
            EvalMode::Greedy => p > 0.5,
            EvalMode::Stochastic => sample_bernoulli(p, rng),
        }
    };
    let m = env.max_steps();
    let mut state = env.reset();
    let mut angles = Vec::new();
    while angles.len() < m {
        let out = params.forward(&state.image, &state.mask)?;
        if variant == Variant::Terminal && decide_before_acquire && stop(out.term_prob, rng) {
            break;
        }
        let a = pick(&out.action_probs, rng);
        if a == STOP_ACTION {
            break;
        }
        state = env.step(&state, a).map_err(env_err)?.0;
        angles.push(a);
        if variant == Variant::Terminal && !decide_before_acquire && stop(out.term_prob, rng) {
            break;
        }
    }
    let psnr_policy = env.terminal_reward(&state).map_err(env_err)?;
    let gr = golden_ratio_sequence(angles.len());
    let gr_img = env.reconstruct(&AngleMask::from_angles(gr.angles.iter().copied())).map_err(env_err)?;
    let psnr_gr = env.psnr_of(&gr_img).map_err(env_err)?;
    assert_eq!(gr.angles.len(), angles.len());
    Ok(EvalRecord {
        id: env.id().to_string(),
        label: env.label().to_string(),
        condition: condition.to_string(),
        cost_b: env.reward().cost_b,
        gr_angles: gr.angles.len(),
        angles,
        psnr_policy,
        psnr_gr,
    })
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
        .0
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub condition: String,
    pub count: usize,
    pub angles: (f64, f64),
    pub psnr_policy: (f64, f64),
    pub psnr_gr: (f64, f64),
}

/// Aggregates per (label, condition); rows are sorted by key so the result
/// does not depend on record order.
pub fn summarize(records: &[EvalRecord]) -> Result<Vec<SummaryRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRunSet);
    }
    let mut groups: BTreeMap<(String, String), Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.label.clone(), r.condition.clone())).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((label, condition), rs)| {
            let mut n: Vec<f64> = rs.iter().map(|r| r.n_angles() as f64).collect();
            let mut p: Vec<f64> = rs.iter().map(|r| r.psnr_policy).collect();
            let mut g: Vec<f64> = rs.iter().map(|r| r.psnr_gr).collect();
            for v in [&mut n, &mut p, &mut g] {
                v.sort_by(f64::total_cmp);
            }
            SummaryRow {
                label,
                condition,
                count: rs.len(),
                angles: mean_std(&n),
                psnr_policy: mean_std(&p),
                psnr_gr: mean_std(&g),
            }
        })
        .collect())
}

pub const SUMMARY_HEADER: &str =
    "label\tcondition\tcount\tangles_mean\tangles_std\tpsnr_rl_mean\tpsnr_rl_std\tpsnr_gr_mean\tpsnr_gr_std";
pub const EPISODES_HEADER: &str = "id\tlabel\tcondition\tcost_b\tn_angles\tpsnr_rl\tpsnr_gr\tangles";

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.label, r.condition, r.count, r.angles.0, r.angles.1, r.psnr_policy.0, r.psnr_policy.1, r.psnr_gr.0, r.psnr_gr.1
        )?;
    }
    Ok(())
}

pub fn write_episodes<W: Write>(records: &[EvalRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{EPISODES_HEADER}")?;
    for r in records {
        let angles: Vec<String> = r.angles.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            r.id,
            r.label,
            r.condition,
            r.cost_b,
            r.n_angles(),
            r.psnr_policy,
            r.psnr_gr,
            angles.join(",")
        )?;
    }
    Ok(())
}

/// Scatter of angle count against PSNR, one colour per cost, with the
/// golden-ratio mean at each count drawn as black crosses.
pub fn scatter_svg(records: &[EvalRecord], title: &str, path: &Path) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRunSet);
    }
    let perr = |e: &dyn std::fmt::Display| EvalError::Plot(e.to_string());
    let max_n = records.iter().map(EvalRecord::n_angles).max().unwrap_or(1) + 1;
    let (lo, hi) = records
        .iter()
        .flat_map(|r| [r.psnr_policy, r.psnr_gr])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let root = SVGBackend::new(path, (800, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| perr(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..max_n as f64, (lo - 1.0)..(hi + 1.0))
        .map_err(|e| perr(&e))?;
    chart
        .configure_mesh()
        .x_desc("number of angles")
        .y_desc("PSNR [dB]")
        .draw()
        .map_err(|e| perr(&e))?;
    let mut costs: Vec<f64> = records.iter().map(|r| r.cost_b).collect();
    costs.sort_by(f64::total_cmp);
    costs.dedup();
    for (i, &c) in costs.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.cost_b == c)
            .map(|r| (r.n_angles() as f64, r.psnr_policy))
            .collect();
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(|e| perr(&e))?
            .label(format!("b = {c}"))
            .legend(move |(x, y)| Circle::new((x, y), 4, color.filled()));
    }
    let mut gr: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records {
        gr.entry(r.n_angles()).or_default().push(r.psnr_gr);
    }
    chart
        .draw_series(gr.into_iter().map(|(n, v)| Cross::new((n as f64, mean_std(&v).0), 6, BLACK.stroke_width(2))))
        .map_err(|e| perr(&e))?
        .label("golden ratio (mean)")
        .legend(|(x, y)| Cross::new((x, y), 5, BLACK.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| perr(&e))?;
    root.present().map_err(|e| perr(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: &str, n: usize, p: f64) -> EvalRecord {
        EvalRecord {
            id: format!("{label}{n}"),
            label: label.into(),
            condition: "eta=0.05".into(),
            cost_b: 0.5,
            angles: (0..n).collect(),
            psnr_policy: p,
            psnr_gr: p - 1.0,
            gr_angles: n,
        }
    }

    #[test]
    fn single_record_has_zero_spread() {
        let rows = summarize(&[rec("triangle", 4, 20.0)]).unwrap();
        assert_eq!(rows[0].angles, (4.0, 0.0));
        assert_eq!(rows[0].psnr_policy.1, 0.0);
    }

    #[test]
    fn summary_is_order_invariant() {
        let a = vec![rec("triangle", 4, 20.0), rec("pentagon", 6, 22.0), rec("triangle", 7, 21.3), rec("triangle", 3, 18.1)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(summarize(&a).unwrap(), summarize(&b).unwrap());
        assert!(matches!(summarize(&[]), Err(EvalError::EmptyRunSet)));
    }

    #[test]
    fn scatter_writes_svg() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scatter.svg");
        scatter_svg(&[rec("triangle", 4, 20.0), rec("triangle", 6, 23.0)], "test", &p).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("<svg"));
    }
}
