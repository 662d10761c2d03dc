//! Relative entropy of discrete measures and rotational averaging.

use crate::discretization::PathMeasure;
use crate::error::{Error, Result};
use crate::measure::SpatialMeasure;

/// Cellwise relative entropy `h(a|b) = a log(a/b) - a + b`.
pub fn h_cell(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        a * (a / b).ln() - a + b
    }
}

/// Derivative of `h(.|b)` at `a > 0`.
pub fn h_cell_grad(a: f64, b: f64) -> f64 {
    (a / b).ln()
}

pub fn rel_entropy(nu: &SpatialMeasure, mu: &SpatialMeasure) -> Result<f64> {
    if !nu.same_grid(mu) {
        return Err(Error::GridMismatch("relative entropy needs a common grid".into()));
    }
    Ok(nu.mass().iter().zip(mu.mass()).map(|(a, b)| h_cell(*a, *b)).sum())
}

pub fn rel_entropy_paths(nu: &PathMeasure, mu: &PathMeasure) -> Result<f64> {
    if !nu.same_grid(mu) {
        return Err(Error::GridMismatch("relative entropy needs a common grid".into()));
    }
    // Paths carrying no mass under either measure contribute h(0|0) = 0.
    let mut total = 0.0;
    for (u, a) in nu.iter() {
        total += h_cell(a, mu.get(u));
    }
    for (u, b) in mu.iter() {
        if nu.get(u) == 0.0 {
            total += b;
        }
    }
    Ok(total)
}

/// `|h(a nu|mu) - (a h(nu|mu) + a log(a) nu(L) + (1 - a) mu(L))|`.
pub fn entropy_scaling_check(a: f64, nu: &SpatialMeasure, mu: &SpatialMeasure) -> Result<f64> {
    if !(a > 0.0) {
        return Err(crate::error::invalid("scaling factor must be positive"));
    }
    let lhs = rel_entropy(&nu.scaled(a), mu)?;
    let rhs = a * rel_entropy(nu, mu)? + a * a.ln() * nu.total() + (1.0 - a) * mu.total();
    if lhs.is_infinite() && rhs.is_infinite() {
        return Ok(0.0);
    }
    Ok((lhs - rhs).abs())
}

/// Replace each radial shell's masses by the shell mean.
pub fn radial_symmetrize(nu: &SpatialMeasure) -> SpatialMeasure {
    let mut out = nu.clone();
    for shell in nu.grid().radial_shells() {
        // Constant shells stay untouched, which makes the map idempotent.
        if shell.iter().all(|&i| nu.get(i) == nu.get(shell[0])) {
            continue;
        }
        let mean = shell.iter().map(|&i| nu.get(i)).sum::<f64>() / shell.len() as f64;
        for &i in &shell {
            out.mass_mut()[i] = mean;
        }
    }
    out
}

/// Largest relative deviation of a cell mass from its shell mean.
pub fn shell_deviation(nu: &SpatialMeasure) -> f64 {
    let mut worst: f64 = 0.0;
    for shell in nu.grid().radial_shells() {
        let mean = shell.iter().map(|&i| nu.get(i)).sum::<f64>() / shell.len() as f64;
        for &i in &shell {
            let dev = (nu.get(i) - mean).abs();
            worst = worst.max(if mean > 0.0 { dev / mean } else { dev });
        }
    }
    worst
}
