use std::sync::Arc;

use relaynet::discretization::{DiscretePath, PathGrid, PathMeasure, TriadicParam};
use relaynet::entropy::{rel_entropy, rel_entropy_paths, shell_deviation};
use relaynet::frustration::{frustrated_paths, frustrated_spatial, ChannelSpec, FrustrationSpec};
use relaynet::model::Channel;
use relaynet::optimize::{minimize_rate, minimize_rate_spatial, MinimizeOptions};
use relaynet::{Model, PathLoss, QosMap, SpatialGrid, SpatialMeasure, Window};

fn model(r: f64) -> Model {
    Model::new(Window::new(r).unwrap(), PathLoss::standard(), QosMap::min_cap(10.0).unwrap()).unwrap()
}

fn h(a: f64) -> f64 {
    a * a.ln() - a + 1.0
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f increasing, sign change on [lo, hi]
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Nine unit-mass cells at distances 0, 2 (four edges) and 2√2 (four
/// corners); path loss 1, 1/16 and 1/64. The up-dir QoS of a cell is
/// `l / I` with `I = x_center + x_edge / 4 + x_corner / 16` (per-cell masses).
///
/// Either the corners alone carry the required mass, or the centre is
/// loaded until the edges are frustrated too. The second branch is solved
/// from its stationarity conditions: `log x_center = m1`,
/// `log x_edge = m1/16 + m2`, `log x_corner = m1/64 + m2`, where `m2 = 0`
/// unless the mass constraint binds.
fn lattice_oracle(c: f64, b: f64) -> f64 {
    let corners_only = 4.0 * h(b / 4.0);
    let i_edges = (1.0 / 16.0) / c;
    let masses = |m1: f64| {
        let m2 = bisect(-50.0, 50.0, |m2| 4.0 * ((m1 / 16.0 + m2).exp() + (m1 / 64.0 + m2).exp()) - b).max(0.0);
        (m1.exp(), (m1 / 16.0 + m2).exp(), (m1 / 64.0 + m2).exp())
    };
    let m1 = bisect(-50.0, 50.0, |m1| {
        let (x0, e, k) = masses(m1);
        x0 + e / 4.0 + k / 16.0 - i_edges
    });
    let (x0, e, k) = masses(m1);
    corners_only.min(h(x0) + 4.0 * h(e) + 4.0 * h(k))
}

fn lattice() -> (Model, SpatialMeasure) {
    let window = Window::new(3.0).unwrap();
    let grid = Arc::new(SpatialGrid::triadic(window, TriadicParam::new(1).unwrap()).unwrap());
    (model(3.0), SpatialMeasure::new(grid, vec![1.0; 9]).unwrap())
}

#[test]
fn small_lattice_matches_stationarity_oracle() {
    let (model, mu) = lattice();
    for (c, b) in [(0.03, 5.0), (0.03, 8.0), (0.03, 6.5), (0.02, 7.0)] {
        let spec = FrustrationSpec::single(Channel::UpDir, ChannelSpec { a: 0.0, c, b });
        let r = minimize_rate_spatial(&model, &mu, &spec, &MinimizeOptions::default()).unwrap();
        let oracle = lattice_oracle(c, b);
        assert!((r.entropy - oracle).abs() <= 1e-4 * (1.0 + oracle), "c={c} b={b}: {} vs {oracle}", r.entropy);
        assert!((rel_entropy(&r.measure, &mu).unwrap() - r.entropy).abs() < 1e-9);
        let fm = frustrated_spatial(&model, &spec, &r.measure).totals();
        assert!(fm[Channel::UpDir.index()] > b);
    }
}

#[test]
fn hand_built_measure_bounds_the_minimum() {
    let (model, mu) = lattice();
    let spec = FrustrationSpec::single(Channel::UpDir, ChannelSpec { a: 0.0, c: 0.03, b: 8.0 });
    // corners at mass 2.01 each: frustrated mass 8.04
    let mut mass = vec![1.0; 9];
    for (i, p) in mu.grid().centers().iter().enumerate() {
        if p.x != 0.0 && p.y != 0.0 {
            mass[i] = 2.01;
        }
    }
    let nu = SpatialMeasure::new(mu.grid().clone(), mass).unwrap();
    assert!(frustrated_spatial(&model, &spec, &nu).totals()[Channel::UpDir.index()] > 8.0);
    let r = minimize_rate_spatial(&model, &mu, &spec, &MinimizeOptions::default()).unwrap();
    assert!(r.entropy <= rel_entropy(&nu, &mu).unwrap());
}

#[test]
fn direct_minimizer_on_polar_grid_is_radial() {
    let grid = Arc::new(SpatialGrid::polar(3.0, 4, 12).unwrap());
    let mu = SpatialMeasure::from_density(grid, |_| 1.0, 4);
    let model = model(3.0);
    for ch in [Channel::UpDir, Channel::DownDir] {
        let spec = FrustrationSpec::single(ch, ChannelSpec { a: 0.0, c: 0.05, b: 8.0 });
        let r = minimize_rate_spatial(&model, &mu, &spec, &MinimizeOptions::default()).unwrap();
        assert!(r.constraint_residual <= 0.0);
        assert!(shell_deviation(&r.measure) <= 1e-6 * r.measure.max_cell_mass(), "{ch:?}");
    }
}

#[test]
fn path_minimizer_is_feasible_and_consistent() {
    let window = Window::new(3.0).unwrap();
    let grid = Arc::new(PathGrid::triadic(window, TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
    let mut mu = PathMeasure::new(grid);
    // each user either stays put or hops to a neighbouring column
    for start in 0..9u32 {
        for hop in [0u32, 3] {
            let next = (start + hop) % 9;
            mu.add(DiscretePath(vec![start, next, next]), 0.5).unwrap();
        }
    }
    let model = model(3.0);
    let spec = FrustrationSpec::single(Channel::Up, ChannelSpec { a: 0.4, c: 0.05, b: 4.0 });
    let r = minimize_rate(&model, &mu, &spec, &MinimizeOptions::default()).unwrap();
    let totals = frustrated_paths(&model, &spec, &r.measure).totals();
    assert!(totals[Channel::Up.index()] > 4.0);
    assert!((rel_entropy_paths(&r.measure, &mu).unwrap() - r.entropy).abs() < 1e-9);
    // support stays inside the reference support
    for (u, m) in r.measure.iter() {
        assert!(m == 0.0 || mu.get(u) > 0.0);
    }
    // doubling the whole population is one feasible candidate
    let doubled = mu.scaled(2.0);
    if frustrated_paths(&model, &spec, &doubled).totals()[Channel::Up.index()] > 4.0 {
        assert!(r.entropy <= rel_entropy_paths(&doubled, &mu).unwrap());
    }
}

#[test]
fn relayed_minimizer_beats_removing_all_relays() {
    use relaynet::montecarlo::Intensity;
    let window = Window::new(5.0).unwrap();
    let shape = Intensity::RingStrip {
        core_radius: 1.0,
        core_density: 3.0,
        strip_inner: 2.3,
        strip_outer: 2.7,
        strip_density: 0.3,
        rim_inner: 4.0,
        rim_density: 1.0,
    };
    let grid = Arc::new(SpatialGrid::polar(5.0, 5, 8).unwrap());
    let mu = SpatialMeasure::from_density(grid.clone(), |p| shape.density(&window, p), 4);
    let model = model(5.0);
    let spec = FrustrationSpec::single(Channel::Up, ChannelSpec { a: 0.0, c: 1e-3, b: 3.0 }).raw_sir();
    // hand-built: empty the strip (shell 2..3)
    let mut mass = mu.mass().to_vec();
    for (i, p) in grid.centers().iter().enumerate() {
        if (2.0..3.0).contains(&p.norm()) {
            mass[i] = 0.0;
        }
    }
    let hand = SpatialMeasure::new(grid, mass).unwrap();
    assert!(frustrated_spatial(&model, &spec, &hand).totals()[0] > 3.0);
    let r = minimize_rate_spatial(&model, &mu, &spec, &MinimizeOptions::default()).unwrap();
    assert!(r.constraint_residual <= 0.0);
    assert!(r.entropy <= rel_entropy(&hand, &mu).unwrap());
}
