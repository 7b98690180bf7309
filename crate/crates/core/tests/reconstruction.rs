use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soed_core::env::EnvConfig;
use soed_core::phantom::{generate_phantom, ShapeKind, ShapeSpec};
use soed_core::sirt::{sirt_reconstruct, sirt_with_residuals};
use soed_core::{psnr, AngleMask, Geometry, Projector, RewardSpec, ScanEnv, SirtConfig};

fn triangle(g: usize) -> soed_core::Phantom {
    generate_phantom(&ShapeSpec::new(ShapeKind::Triangle, 72.0, 25.0), g).unwrap()
}

fn env_cfg() -> EnvConfig {
    EnvConfig {
        reward: RewardSpec::new(0.5).unwrap(),
        max_steps: 180,
        sirt: SirtConfig::default(),
    }
}

#[test]
fn sirt_improves_and_residual_never_increases() {
    let g = 64;
    let p = Projector::new(Geometry::square(g));
    let phantom = triangle(g);
    let sino = p.project_all(&phantom.image).unwrap();
    let early = SirtConfig {
        iterations: 10,
        relaxation: 1.0,
    };
    let x10 = sirt_reconstruct(&p, &sino, &early, None).unwrap();
    let out = sirt_with_residuals(&p, &sino, &SirtConfig::default(), None).unwrap();
    let q10 = psnr(&x10, &phantom.image).unwrap().psnr;
    let q150 = psnr(&out.image, &phantom.image).unwrap().psnr;
    assert!(q150 > q10, "{q150} vs {q10}");
    assert_eq!(out.residuals.len(), 151);
    for w in out.residuals.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
    assert!(out.image.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn reconstruction_rarely_degrades_with_more_data() {
    let g = 64;
    let projector = Arc::new(Projector::new(Geometry::square(g)));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut total = 0;
    let mut ok = 0;
    for (i, kind) in ShapeKind::ALL.iter().cycle().take(6).enumerate() {
        let (lo, hi) = kind.radius_range();
        let spec = ShapeSpec::new(*kind, rng.random_range(lo..=hi), rng.random_range(0..360) as f64);
        let phantom = generate_phantom(&spec, g).unwrap();
        let env = ScanEnv::simulate(projector.clone(), &phantom, 0.0, i as u64, &env_cfg()).unwrap();
        let mut state = env.reset();
        let mut before = env.terminal_reward(&state).unwrap();
        for _ in 0..10 {
            let theta = loop {
                let t = rng.random_range(0..180);
                if !state.mask.contains(t) {
                    break t;
                }
            };
            let (next, _) = env.step(&state, theta).unwrap();
            let after = env.terminal_reward(&next).unwrap();
            total += 1;
            if after >= before - 0.5 {
                ok += 1;
            }
            before = after;
            state = next;
        }
    }
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

#[test]
fn full_scan_has_the_best_prefix_psnr() {
    let g = 64;
    let projector = Arc::new(Projector::new(Geometry::square(g)));
    let env = ScanEnv::simulate(projector, &triangle(g), 0.0, 0, &env_cfg()).unwrap();
    let order = soed_core::baselines::golden_ratio_sequence(180).angles;
    let mut mask = AngleMask::new();
    let mut best_partial = f64::NEG_INFINITY;
    for (i, &a) in order.iter().enumerate() {
        mask.insert(a);
        if i % 15 == 14 && i < 179 {
            best_partial = best_partial.max(env.psnr_of(&env.reconstruct(&mask).unwrap()).unwrap());
        }
    }
    let full = env.psnr_of(&env.reconstruct(&mask).unwrap()).unwrap();
    let zero = env.terminal_reward(&env.reset()).unwrap();
    assert!(full > best_partial && best_partial > zero);
}
