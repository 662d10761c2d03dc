use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaynet::analysis::{kde_radial, symmetry_diagnostics};
use relaynet::discretization::{DiscretePath, PathGrid, PathMeasure, TriadicParam};
use relaynet::io::{
    read_hits_csv, read_json, read_measure_csv, read_path_measure_csv, read_profile_csv, write_hits_csv,
    write_json, write_measure_csv, write_path_measure_csv, write_radial_profile_csv,
};
use relaynet::montecarlo::{sample_poisson, EstimateResult, HitRow, Intensity, IntensitySpec};
use relaynet::{Error, Point, SpatialGrid, SpatialMeasure, Window};

#[test]
fn uniform_disk_gives_flat_profile() {
    let window = Window::new(5.0).unwrap();
    let lambda = 20.0;
    let cfg = sample_poisson(&IntensitySpec::new(Intensity::UniformDisk { radius: 5.0 }, lambda), &window, 17).unwrap();
    let samples: Vec<(f64, f64)> = cfg.points.iter().map(|p| (p.norm(), 1.0 / lambda)).collect();
    let profile = kde_radial(&samples, 5.0, Some(0.3), 201).unwrap();
    let total = cfg.len() as f64 / lambda;
    assert!((profile.planar_mass() - total).abs() < 0.03 * total);
    for (s, f) in profile.radii.iter().zip(&profile.intensity) {
        if (1.0..=4.5).contains(s) {
            assert!((f - 1.0).abs() < 0.15, "intensity {f} at {s}");
        }
    }
}

#[test]
fn isotropic_and_clustered_hits_are_told_apart() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut iso = Vec::new();
    let mut clustered = Vec::new();
    for run in 0..200 {
        let centre = rng.random_range(0.0..std::f64::consts::TAU);
        for _ in 0..5 {
            let p = Point::from_polar(rng.random_range(1.0..2.0), rng.random_range(0.0..std::f64::consts::TAU));
            iso.push(HitRow { run_id: run, x: p.x, y: p.y, channel_mask: 1 });
            let q = Point::from_polar(rng.random_range(1.0..2.0), centre + rng.random_range(-0.2..0.2));
            clustered.push(HitRow { run_id: run, x: q.x, y: q.y, channel_mask: 1 });
        }
    }
    let a = symmetry_diagnostics(&iso, 1).unwrap();
    let b = symmetry_diagnostics(&clustered, 1).unwrap();
    assert_eq!(a.runs, 200);
    // centroids spread over the circle in both cases
    assert!(a.circular_variance_of_centroids > 0.8 && b.circular_variance_of_centroids > 0.8);
    assert!(b.mean_concentration > 0.9 && a.mean_concentration < 0.6);
    assert!(a.pooled_rayleigh_p > 1e-3);
    assert!(symmetry_diagnostics(&iso, 2).unwrap().per_run.iter().all(|r| r.frustrated == 0));
}

#[test]
fn csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let window = Window::new(1.0).unwrap();

    let grid = Arc::new(SpatialGrid::triadic(window, TriadicParam::new(2).unwrap()).unwrap());
    let nu = SpatialMeasure::new(grid.clone(), (0..grid.len()).map(|_| rng.random::<f64>() / 3.0).collect()).unwrap();
    let path = dir.path().join("nu.csv");
    write_measure_csv(&nu, &path).unwrap();
    assert_eq!(read_measure_csv(grid, &path).unwrap(), nu);
    let other = Arc::new(SpatialGrid::triadic(window, TriadicParam::new(1).unwrap()).unwrap());
    assert!(matches!(read_measure_csv(other, &path), Err(Error::GridMismatch(_))));

    let pgrid = Arc::new(PathGrid::triadic(window, TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
    let mut paths = PathMeasure::new(pgrid.clone());
    for _ in 0..20 {
        paths.add(DiscretePath((0..3).map(|_| rng.random_range(0..9)).collect()), rng.random()).unwrap();
    }
    let path = dir.path().join("paths.csv");
    write_path_measure_csv(&paths, &path).unwrap();
    let back = read_path_measure_csv(pgrid, &path).unwrap();
    assert_eq!(back.iter().collect::<Vec<_>>(), paths.iter().collect::<Vec<_>>());

    let rows: Vec<HitRow> = (0..50)
        .map(|i| HitRow { run_id: i / 7, x: rng.random(), y: -rng.random::<f64>(), channel_mask: (i % 16) as u8 })
        .collect();
    let path = dir.path().join("hits.csv");
    write_hits_csv(&rows, &path).unwrap();
    assert_eq!(read_hits_csv(&path).unwrap(), rows);

    let samples: Vec<(f64, f64)> = (0..30).map(|_| (rng.random_range(0.0..1.0), 1.0)).collect();
    let profile = kde_radial(&samples, 1.0, None, 33).unwrap();
    let path = dir.path().join("profile.csv");
    write_radial_profile_csv(&profile, &path).unwrap();
    let back = read_profile_csv(&path).unwrap();
    assert_eq!(back.iter().map(|r| r.0).collect::<Vec<_>>(), profile.radii);
    assert_eq!(back.iter().map(|r| r.1).collect::<Vec<_>>(), profile.intensity);
}

#[test]
fn json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("estimate.json");
    let est = EstimateResult {
        hits: 3,
        runs: 1000,
        p_hat: 0.003,
        std_err: (0.003f64 * 0.997 / 1000.0).sqrt(),
        rate_hat: None,
        wall_seconds: 0.25,
        seed: 9,
    };
    write_json(&est, &path).unwrap();
    assert_eq!(read_json::<EstimateResult>(&path).unwrap(), est);
}
