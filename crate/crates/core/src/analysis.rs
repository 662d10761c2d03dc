//! Boundary-corrected radial kernel density estimates and angular
//! diagnostics of hit configurations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::montecarlo::HitRow;

/// Estimated planar intensity as a function of the radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub intensity: Vec<f64>,
    pub bandwidth: f64,
}

impl RadialProfile {
    /// `int_0^r 2 pi s f(s) ds` by the trapezoidal rule on the grid.
    pub fn planar_mass(&self) -> f64 {
        self.radii
            .windows(2)
            .zip(self.intensity.windows(2))
            .map(|(s, f)| 0.5 * (s[1] - s[0]) * 2.0 * PI * (s[0] * f[0] + s[1] * f[1]))
            .sum()
    }
}

/// Silverman's rule of thumb on unweighted samples.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = (q(0.75) - q(0.25)) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn gauss(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn check(samples: &[(f64, f64)], r: f64) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("no observations".into()));
    }
    if let Some((s, _)) = samples.iter().find(|(s, w)| !(0.0..=r).contains(s) || !(*w >= 0.0)) {
        return Err(Error::InvalidParameter(format!("radius {s} outside [0, {r}] or negative weight")));
    }
    Ok(())
}

fn resolve_bandwidth(samples: &[(f64, f64)], r: f64, bandwidth: Option<f64>) -> f64 {
    match bandwidth {
        Some(h) => h,
        None => {
            let radii: Vec<f64> = samples.iter().map(|s| s.0).collect();
            let h = silverman_bandwidth(&radii);
            if h > 0.0 {
                h
            } else {
                r / 100.0
            }
        }
    }
}

/// Reflected Gaussian density of weighted radii on `[0, r]`: its integral
/// over `[0, r]` equals the total weight up to kernel mass beyond `-r` or
/// `2r`.
pub fn kde_1d(samples: &[(f64, f64)], r: f64, bandwidth: Option<f64>, n_grid: usize) -> Result<RadialProfile> {
    check(samples, r)?;
    let h = resolve_bandwidth(samples, r, bandwidth);
    let radii = grid(r, n_grid);
    let intensity = radii
        .iter()
        .map(|&s| {
            samples
                .iter()
                .map(|&(x, w)| w * (gauss((s - x) / h) + gauss((s + x) / h) + gauss((s - (2.0 * r - x)) / h)) / h)
                .sum()
        })
        .collect();
    Ok(RadialProfile { radii, intensity, bandwidth: h })
}

/// Planar intensity profile: each observation at radius `s` carries weight
/// `w / (2 pi max(s, r/100))` before reflected Gaussian smoothing, so that
/// `int 2 pi s f(s) ds` approximates the total weight.
pub fn kde_radial(samples: &[(f64, f64)], r: f64, bandwidth: Option<f64>, n_grid: usize) -> Result<RadialProfile> {
    check(samples, r)?;
    let floor = r / 100.0;
    let weighted: Vec<(f64, f64)> = samples
        .iter()
        .map(|&(s, w)| (s, w / (2.0 * PI * s.max(floor))))
        .collect();
    let h = resolve_bandwidth(samples, r, bandwidth);
    kde_1d(&weighted, r, Some(h), n_grid)
}

fn grid(r: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|i| r * i as f64 / (n - 1) as f64).collect()
}

/// Angle of the centroid of a point set.
pub fn cluster_angle(points: &[Point]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Empty("no points".into()));
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.x, a.1 + p.y));
    let c = Point::new(sx / n, sy / n);
    let scale = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
    if c.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("centroid at the origin; angle undefined".into()));
    }
    Ok(c.angle())
}

/// Mean resultant length of unit vectors at the given angles.
pub fn mean_resultant_length(angles: &[f64]) -> f64 {
    if angles.is_empty() {
        return 0.0;
    }
    let (c, s) = angles.iter().fold((0.0, 0.0), |a, t| (a.0 + t.cos(), a.1 + t.sin()));
    (c * c + s * s).sqrt() / angles.len() as f64
}

/// `1 - R` with `R` the mean resultant length.
pub fn circular_variance(angles: &[f64]) -> f64 {
    1.0 - mean_resultant_length(angles)
}

/// p-value of the Rayleigh test of uniformity.
pub fn rayleigh_test(angles: &[f64]) -> f64 {
    let n = angles.len() as f64;
    if n == 0.0 {
        return 1.0;
    }
    let rbar = mean_resultant_length(angles);
    let z = n * rbar * rbar;
    let p = (-z).exp()
        * (1.0 + (2.0 * z - z * z) / (4.0 * n)
            - (24.0 * z - 132.0 * z * z + 76.0 * z.powi(3) - 9.0 * z.powi(4)) / (288.0 * n * n));
    p.clamp(0.0, 1.0)
}

/// Per-run angular summary of the users frustrated on the selected channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAngles {
    pub run_id: u64,
    pub frustrated: usize,
    /// `None` when the centroid is degenerate.
    pub centroid_angle: Option<f64>,
    /// Mean resultant length of the frustrated users' angles.
    pub concentration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryDiagnostics {
    pub runs: usize,
    pub circular_variance_of_centroids: f64,
    pub mean_concentration: f64,
    pub pooled_rayleigh_p: f64,
    pub per_run: Vec<RunAngles>,
}

/// Group hit rows by run and summarize frustrated users selected by `mask`.
pub fn symmetry_diagnostics(rows: &[HitRow], mask: u8) -> Result<SymmetryDiagnostics> {
    let mut runs: BTreeMap<u64, Vec<Point>> = BTreeMap::new();
    for h in rows {
        let entry = runs.entry(h.run_id).or_default();
        if h.channel_mask & mask != 0 {
            entry.push(Point::new(h.x, h.y));
        }
    }
    if runs.is_empty() {
        return Err(Error::Empty("no hit rows".into()));
    }
    let mut per_run = Vec::new();
    let mut pooled = Vec::new();
    for (run_id, pts) in runs {
        let angles: Vec<f64> = pts.iter().filter(|p| p.norm() > 0.0).map(|p| p.angle()).collect();
        pooled.extend_from_slice(&angles);
        per_run.push(RunAngles {
            run_id,
            frustrated: pts.len(),
            centroid_angle: cluster_angle(&pts).ok(),
            concentration: mean_resultant_length(&angles),
        });
    }
    let centroids: Vec<f64> = per_run.iter().filter_map(|r| r.centroid_angle).collect();
    let with_users: Vec<f64> = per_run.iter().filter(|r| r.frustrated > 0).map(|r| r.concentration).collect();
    Ok(SymmetryDiagnostics {
        runs: per_run.len(),
        circular_variance_of_centroids: circular_variance(&centroids),
        mean_concentration: if with_users.is_empty() { 0.0 } else { with_users.iter().sum::<f64>() / with_users.len() as f64 },
        pooled_rayleigh_p: rayleigh_test(&pooled),
        per_run,
    })
}
