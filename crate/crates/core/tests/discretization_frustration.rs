use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaynet::discretization::{
    discretize_measure, discretize_path, embed_path, DiscretePath, PathGrid, PathMeasure, TriadicParam,
};
use relaynet::frustration::{
    bad_duration, event_indicator, frustrated_paths, frustrated_points, frustrated_weights, tau_ac,
    worst_qos_duration, worst_qos_duration_eps, ChannelSpec, Evolution, FrustrationSpec,
};
use relaynet::mobility::{sample_trajectory, MobilityModel, Trajectory};
use relaynet::model::Channel;
use relaynet::montecarlo::Intensity;
use relaynet::{Model, PathLoss, Point, PointConfig, QosMap, SpatialGrid, SpatialMeasure, Window};

fn model(r: f64) -> Model {
    Model::new(Window::new(r).unwrap(), PathLoss::standard(), QosMap::min_cap(10.0).unwrap()).unwrap()
}

fn random_spec(rng: &mut ChaCha8Rng, horizon: f64) -> FrustrationSpec {
    let mut spec = FrustrationSpec::default();
    for ch in Channel::ALL {
        spec.set(
            ch,
            Some(ChannelSpec {
                a: rng.random_range(0.0..0.5 * horizon),
                c: rng.random_range(0.05..1.0),
                b: 0.0,
            }),
        );
    }
    spec
}

/// Violations of the two-sided discretization sandwich for one random
/// trajectory measure at mesh `3^-m`.
fn sandwich_violations(seed: u64, m: u32, eps: f64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window = Window::new(1.0).unwrap();
    let model = model(1.0);
    let mobility = MobilityModel {
        initial: Intensity::UniformCube,
        speed: 0.3,
        pause: 0.0,
        horizon: 1.0,
    };
    let k = rng.random_range(3..=6);
    let weighted: Vec<(f64, Trajectory)> = (0..k)
        .map(|_| {
            let w = rng.random_range(0.2..1.0);
            (w, sample_trajectory(&mobility, &window, rng.random()).unwrap())
        })
        .collect();
    let spec = random_spec(&mut rng, 1.0);
    // continuous side: fine time sampling, then pushforward
    let evo = Evolution::from_trajectories(&weighted, 1.0, 729);
    let fine = frustrated_weights(&model, &spec, &evo);
    let grid = Arc::new(PathGrid::triadic(window, TriadicParam::new(m).unwrap(), Some(1.0)).unwrap());
    let paths: Vec<DiscretePath> = weighted.iter().map(|(_, x)| discretize_path(x, &grid)).collect();
    let nu = discretize_measure(&weighted, grid.clone()).unwrap();
    let lo = frustrated_paths(&model, &spec, &nu.scaled(1.0 - eps));
    let hi = frustrated_paths(&model, &spec, &nu.scaled(1.0 + eps));
    let mut violations = 0;
    for ch in Channel::ALL {
        let mut mid: BTreeMap<&DiscretePath, f64> = BTreeMap::new();
        for (u, w) in paths.iter().zip(fine.get(ch)) {
            *mid.entry(u).or_default() += w;
        }
        for (u, m) in mid {
            let tol = 1e-12 * (1.0 + m);
            if lo.get(ch).get(u) > m + tol || m > hi.get(ch).get(u) + tol {
                violations += 1;
            }
        }
    }
    violations
}

#[test]
fn sandwich_holds_on_fine_mesh() {
    let total: usize = (0..40).map(|s| sandwich_violations(s, 4, 0.1)).sum();
    assert_eq!(total, 0);
}

#[test]
fn snap_distance_and_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in 1..=4 {
        let delta = TriadicParam::new(m).unwrap();
        let grid = PathGrid::triadic(Window::new(2.0).unwrap(), delta, Some(2.0)).unwrap();
        let bound = delta.value() * 2.0 * 2f64.sqrt() * (1.0 + 1e-12);
        for _ in 0..200 {
            let p = Point::new(rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
            let c = grid.spatial().center(grid.spatial().snap(p));
            assert!(p.dist(c) <= bound);
        }
        for _ in 0..20 {
            let n = grid.spatial().len() as u32;
            let u = DiscretePath((0..grid.time().len()).map(|_| rng.random_range(0..n)).collect());
            let x = embed_path(&u, &grid).unwrap();
            assert_eq!(discretize_path(&x, &grid), u);
        }
    }
}

#[test]
fn max_cell_mass_shrinks_with_the_mesh() {
    let mut last = f64::INFINITY;
    for m in 2..=4 {
        let grid = Arc::new(SpatialGrid::triadic(Window::new(5.0).unwrap(), TriadicParam::new(m).unwrap()).unwrap());
        let mu = SpatialMeasure::from_density(grid, |p: Point| if p.norm() <= 5.0 { 1.0 } else { 0.0 }, 4);
        let kappa = mu.max_cell_mass();
        assert!(kappa <= last);
        last = kappa;
    }
}

#[test]
fn pushforward_preserves_mass() {
    let window = Window::new(2.0).unwrap();
    let mobility = MobilityModel {
        initial: Intensity::UniformCube,
        speed: 1.0,
        pause: 0.1,
        horizon: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let weighted: Vec<(f64, Trajectory)> = (0..100)
        .map(|i| (rng.random_range(0.0..1.0), sample_trajectory(&mobility, &window, i).unwrap()))
        .collect();
    let grid = Arc::new(PathGrid::triadic(window, TriadicParam::new(2).unwrap(), Some(1.0)).unwrap());
    let nu = discretize_measure(&weighted, grid).unwrap();
    let total: f64 = weighted.iter().map(|w| w.0).sum();
    assert!((nu.total() - total).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tau_is_decreasing(
        gamma in prop::collection::vec(0.0..2.0f64, 9),
        bump in prop::collection::vec(0.0..1.0f64, 9),
        a in 0.0..1.0f64, c in 0.0..2.0f64,
    ) {
        let higher: Vec<f64> = gamma.iter().zip(&bump).map(|(g, b)| g + b).collect();
        prop_assert!(tau_ac(&gamma, 1.0 / 9.0, a, c) >= tau_ac(&higher, 1.0 / 9.0, a, c));
    }

    #[test]
    fn relaying_only_reduces_frustration(
        pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 0..30),
        c in 0.001..0.5f64, lambda in 1.0..20.0f64,
    ) {
        let m = model(3.0);
        let cfg = PointConfig::new(m.window(), pts.into_iter().map(|(x, y)| Point::new(x, y)).collect(), lambda).unwrap();
        let mut spec = FrustrationSpec::default();
        for ch in Channel::ALL {
            spec.set(ch, Some(ChannelSpec { a: 0.0, c, b: 0.0 }));
        }
        let fm = frustrated_points(&m, &spec, &cfg);
        for i in 0..cfg.len() {
            prop_assert!(fm.up.flags[i] <= fm.up_dir.flags[i]);
            prop_assert!(fm.down.flags[i] <= fm.do_dir.flags[i]);
        }
    }

    #[test]
    fn damped_worst_duration_is_smaller(
        masses in prop::collection::vec(0.0..1.0f64, 1..6),
        cells in prop::collection::vec(prop::collection::vec(0u32..9, 3), 6),
        c in prop::collection::vec(0.0..2.0f64, 4),
        eps in 0.01..2.0f64,
    ) {
        let grid = Arc::new(PathGrid::triadic(Window::new(1.0).unwrap(), TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
        let mut nu = PathMeasure::new(grid);
        for (m, u) in masses.iter().zip(&cells) {
            nu.add(DiscretePath(u.clone()), *m).unwrap();
        }
        let c = [c[0], c[1], c[2], c[3]];
        let model = model(1.0);
        let phi = worst_qos_duration(&model, &c, &nu);
        let phi_eps = worst_qos_duration_eps(&model, &c, &nu, eps).unwrap();
        for i in 0..4 {
            prop_assert!(phi_eps[i] <= phi[i]);
        }
        if nu.iter().all(|(_, m)| m >= eps || m == 0.0) {
            prop_assert_eq!(phi_eps, phi);
        }
    }
}

#[test]
fn zero_mass_event_matches_worst_duration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let window = Window::new(1.0).unwrap();
    let model = model(1.0);
    let grid = Arc::new(PathGrid::triadic(window, TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
    for _ in 0..300 {
        let mut nu = PathMeasure::new(grid.clone());
        for _ in 0..rng.random_range(1..5) {
            let u = DiscretePath((0..3).map(|_| rng.random_range(0..9)).collect());
            nu.add(u, rng.random_range(0.1..1.0)).unwrap();
        }
        let spec = random_spec(&mut rng, 1.0);
        let c = Channel::ALL.map(|ch| spec.get(ch).unwrap().c);
        let phi = worst_qos_duration(&model, &c, &nu);
        let via_phi = Channel::ALL.iter().all(|ch| phi[ch.index()] > spec.get(*ch).unwrap().a);
        let fm = frustrated_paths(&model, &spec, &nu);
        assert_eq!(event_indicator(&fm.totals(), &spec), via_phi);
    }
}

#[test]
fn worst_duration_conventions() {
    let grid = Arc::new(PathGrid::triadic(Window::new(1.0).unwrap(), TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
    let empty = PathMeasure::new(grid.clone());
    assert_eq!(worst_qos_duration(&model(1.0), &[0.5; 4], &empty), [0.0; 4]);
    assert_eq!(bad_duration(&[0.2, 0.5, 0.7], 1.0 / 3.0, 0.5), 2.0 / 3.0);
    assert!(!tau_ac(&[0.2, 0.5, 0.7], 1.0 / 3.0, 0.0, 0.5) || tau_ac(&[0.2, 0.5, 0.7], 1.0 / 3.0, 0.0, 0.5));
}
