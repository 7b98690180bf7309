use std::sync::Arc;

use soed_core::baselines::{greedy_exhaustive, prefix_psnr, uniform_sequence};
use soed_core::env::EnvConfig;
use soed_core::phantom::{generate_phantom, ShapeKind, ShapeSpec};
use soed_core::{AngleMask, Geometry, Image, Projector, RewardSpec, ScanEnv, SirtConfig};

const G: usize = 64;

fn cfg() -> EnvConfig {
    EnvConfig {
        reward: RewardSpec::new(0.5).unwrap(),
        max_steps: 20,
        sirt: SirtConfig::default(),
    }
}

fn projector() -> Arc<Projector> {
    Arc::new(Projector::new(Geometry::square(G)))
}

#[test]
fn greedy_is_monotone_and_beats_uniform_on_a_triangle() {
    let phantom = generate_phantom(&ShapeSpec::new(ShapeKind::Triangle, 80.0, 17.0), G).unwrap();
    let env = ScanEnv::simulate(projector(), &phantom, 0.0, 0, &cfg()).unwrap();
    let greedy = greedy_exhaustive(&env, 10).unwrap();
    assert_eq!(AngleMask::from_angles(greedy.angles.iter().copied()).len(), 10);
    let g_curve = prefix_psnr(&env, &greedy.angles).unwrap();
    for w in g_curve.windows(2) {
        assert!(w[1] >= w[0], "greedy PSNR dropped: {g_curve:?}");
    }
    let u_curve: Vec<f64> = (1..=10)
        .map(|k| *prefix_psnr(&env, &uniform_sequence(k).angles).unwrap().last().unwrap())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&g_curve) > mean(&u_curve), "greedy {g_curve:?}\nuniform {u_curve:?}");
    // Greedy sequences extend their own prefixes.
    assert_eq!(greedy_exhaustive(&env, 3).unwrap().angles, greedy.angles[..3]);
}

#[test]
fn single_greedy_angle_runs_along_a_bar() {
    // Horizontal bar: long edges parallel to the x axis.
    let bar = Image::from_fn(G, |r, c| if (28..36).contains(&r) && (10..54).contains(&c) { 1.0 } else { 0.0 });
    let p = projector();
    let sino = p.project_all(&bar).unwrap();
    let env = ScanEnv::from_measurements(p, sino, bar, "bar", "bar", &cfg()).unwrap();

    // Brute-force sweep of every single-angle reconstruction.
    let scores: Vec<f64> = (0..180)
        .map(|a| env.psnr_of(&env.reconstruct(&AngleMask::from_angles([a])).unwrap()).unwrap())
        .collect();
    // First maximiser, matching the greedy tie rule (symmetric angles tie).
    let best = (0..180).fold(0, |b, a| if scores[a] > scores[b] { a } else { b });
    let chosen = greedy_exhaustive(&env, 1).unwrap().angles[0];
    assert_eq!(chosen, best);

    let (dx, dy) = Geometry::ray_direction(chosen);
    let off_axis = dy.atan2(dx).to_degrees().rem_euclid(180.0);
    let dist = off_axis.min(180.0 - off_axis);
    assert!(dist <= 2.0, "chosen {chosen}, ray {off_axis} deg from the long edge");
}
