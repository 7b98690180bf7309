use std::sync::Arc;

use soed_agent::checkpoint::Checkpoint;
use soed_agent::ct::SimulatedSource;
use soed_agent::train::{run_episode_online, train, LoopConfig, StopReason, UpdateMode};
use soed_agent::{NetAgent, NetConfig, NetParams, OptimizerConfig, Variant};
use soed_core::env::EnvConfig;
use soed_core::phantom::{sample_dataset, training_rotations};
use soed_core::{Geometry, Projector, RewardSpec, SirtConfig};

fn source(max_steps: usize) -> SimulatedSource {
    let projector = Arc::new(Projector::new(Geometry::square(16)));
    let phantoms = sample_dataset(1, 2, 16, &training_rotations()).unwrap().into_iter().map(Arc::new).collect();
    SimulatedSource {
        projector,
        phantoms,
        eta: 0.05,
        env: EnvConfig {
            reward: RewardSpec::new(0.5).unwrap(),
            max_steps,
            sirt: SirtConfig { iterations: 20, ..Default::default() },
        },
    }
}

fn agent(n_actions: usize, lr: f64) -> NetAgent {
    let opt = OptimizerConfig { learning_rate: lr, ..Default::default() };
    NetAgent::new(NetParams::init(NetConfig::reduced(n_actions), 7).unwrap(), opt)
}

#[test]
fn naive_with_single_step_cap_takes_one_action() {
    let src = source(1);
    let mut a = agent(181, 1e-3);
    let cfg = LoopConfig::new(Variant::Naive, 12, 3);
    let mut lens = Vec::new();
    let trace = train(&cfg, &src, &mut a, |o, _| {
        lens.push(o.steps.len());
        Ok(())
    })
    .unwrap();
    assert_eq!(trace.len(), 12);
    assert!(lens.iter().all(|&l| l == 1));
    assert!(trace.episodes.iter().all(|e| e.n_angles <= 1));
}

#[test]
fn pinned_terminal_head_forces_episode_length() {
    let src = source(6);
    for (bias, expect) in [(60.0, 1), (-60.0, 6)] {
        let mut a = agent(180, 1e-3);
        a.params.pin_terminal(bias);
        let cfg = LoopConfig { freeze_terminal: true, ..LoopConfig::new(Variant::Terminal, 5, 4) };
        let trace = train(&cfg, &src, &mut a, |_, _| Ok(())).unwrap();
        assert!(trace.episodes.iter().all(|e| e.n_angles == expect), "bias {bias}");
        let l = a.params.layout();
        assert!(a.params.data()[l.term_w.clone()].iter().all(|&w| w == 0.0));
    }
}

#[test]
fn stored_td_errors_recompute_exactly_and_lengths_are_bounded() {
    let src = source(5);
    for variant in [Variant::Naive, Variant::Terminal] {
        for decide_first in [false, true] {
            let n = if variant == Variant::Naive { 181 } else { 180 };
            let mut a = agent(n, 1e-3);
            let cfg = LoopConfig { decide_before_acquire: decide_first, ..LoopConfig::new(variant, 1, 5) };
            for e in 0..6 {
                let out = run_episode_online(&cfg, &src, &mut a, e).unwrap();
                assert!((1..=5).contains(&out.steps.len()));
                assert!(out.summary.n_angles <= 5);
                for s in &out.steps {
                    if let Some(td) = s.td {
                        assert_eq!(td.recompute(), td);
                    }
                }
                if out.summary.stop == StopReason::Cap {
                    assert_eq!(out.summary.n_angles, 5);
                }
            }
        }
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let src = source(4);
    let mut a = agent(180, 0.0);
    let before = a.params.clone();
    train(&LoopConfig::new(Variant::Terminal, 6, 9), &src, &mut a, |_, _| Ok(())).unwrap();
    assert_eq!(a.params, before);
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let src = source(4);
    let mut full = agent(180, 1e-3);
    let cfg = LoopConfig::new(Variant::Terminal, 6, 21);
    let t_full = train(&cfg, &src, &mut full, |_, _| Ok(())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let mut first = agent(180, 1e-3);
    let t1 = train(&LoopConfig { episodes: 3, ..cfg.clone() }, &src, &mut first, |_, _| Ok(())).unwrap();
    Checkpoint { params: first.params.clone(), adam: first.adam.clone(), episodes_done: 3 }.save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    let mut resumed = NetAgent { params: ck.params, adam: ck.adam, opt: first.opt };
    let t2 = train(&LoopConfig { episodes: 3, start_episode: ck.episodes_done, ..cfg }, &src, &mut resumed, |_, _| Ok(())).unwrap();

    let joined: Vec<_> = t1.episodes.into_iter().chain(t2.episodes).collect();
    assert_eq!(joined, t_full.episodes);
    assert_eq!(resumed.params, full.params);
}

#[test]
fn synchronous_mode_is_reproducible() {
    let src = source(3);
    let cfg = LoopConfig { mode: UpdateMode::Synchronous { workers: 3 }, ..LoopConfig::new(Variant::Terminal, 7, 2) };
    let mut a = agent(180, 1e-3);
    let mut b = agent(180, 1e-3);
    let ta = train(&cfg, &src, &mut a, |_, _| Ok(())).unwrap();
    let tb = train(&cfg, &src, &mut b, |_, _| Ok(())).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(a.params, b.params);
    assert_eq!(a.adam.step_count, 3);
}
