//! Radial variational approximation of the direct-uplink rate minimizer
//! on a disk with Lebesgue a-priori intensity.

use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::geometry::Point;
use crate::pathloss::PathLoss;
use crate::quadrature::{disk_integral_about, find_root, golden_section, integrate};

const TOL_1D: f64 = 1e-10;

fn kinks(ell: &PathLoss) -> Vec<f64> {
    ell.kinks()
}

/// `int_{B_r(o)} l(|x|) dx`.
pub fn radial_mass(r: f64, ell: &PathLoss) -> f64 {
    2.0 * PI * integrate(&|s: f64| s * ell.eval(s), 0.0, r, &kinks(ell), TOL_1D)
}

/// Screening threshold of the direct uplink: `l(r) / int_{B_r} l(|x|) dx`.
pub fn c0_uplink(r: f64, ell: &PathLoss) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("r must be positive"));
    }
    Ok(ell.eval(r) / radial_mass(r, ell))
}

/// Screening threshold of the direct downlink to a user on the boundary:
/// `l(r) / int_{B_r} l(|x - r e1|) dx`.
pub fn c0_downlink(r: f64, ell: &PathLoss) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("r must be positive"));
    }
    let f = |s: f64| ell.eval(s);
    let integral = disk_integral_about(&f, &kinks(ell), Point::new(r, 0.0), r, 1e-9);
    Ok(ell.eval(r) / integral)
}

/// `int_0^r 2 pi s e^{alpha l(s)} l(s) ds`.
pub fn weighted_interference(alpha: f64, r: f64, ell: &PathLoss, tol: f64) -> f64 {
    2.0 * PI * integrate(&|s: f64| { let l = ell.eval(s); s * (alpha * l).exp() * l }, 0.0, r, &kinks(ell), tol)
}

/// Solve `int_0^r 2 pi s e^{alpha l(s)} l(s) ds = l(rho)/c` for `alpha`.
pub fn solve_alpha(rho: f64, c: f64, r: f64, ell: &PathLoss) -> Result<f64> {
    if !(0.0..=r).contains(&rho) {
        return Err(invalid("rho must lie in [0, r]"));
    }
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    let target = ell.eval(rho) / c;
    let tol = 1e-12 * target;
    let f = |a: f64| weighted_interference(a, r, ell, tol) - target;
    // The left side increases in alpha from 0 (alpha -> -inf).
    let (mut lo, mut hi) = (-1.0, 1.0);
    // l is non-increasing, so its maximum is at 0.
    let lmax = ell.eval(0.0);
    while f(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi * lmax > 700.0 {
            return Err(Error::Bracket(format!("alpha beyond overflow range for target {target}")));
        }
    }
    while f(lo) > 0.0 {
        hi = lo;
        lo *= 2.0;
        if lo < -1e12 {
            return Err(Error::Bracket(format!("no alpha reaches target {target}")));
        }
    }
    find_root(&f, lo, hi, 0.0, 1e-10 * target)
}

/// Result of the radial variational approximation.
#[derive(Clone, Debug, Serialize)]
pub struct VariationalProfile {
    pub r: f64,
    pub c: f64,
    pub b: f64,
    pub rho_min: f64,
    pub alpha: f64,
    /// Flat density on the annulus `rho_min < s <= r`.
    pub outer_level: f64,
    /// The optimized objective (entropy up to an additive constant).
    pub objective: f64,
    /// Entropic cost of the inner disk.
    pub gamma_int: f64,
    /// Entropic cost of the flat outer annulus.
    pub gamma_out: f64,
    #[serde(skip)]
    ell: PathLoss,
}

impl VariationalProfile {
    pub fn inner_profile(&self, s: f64) -> f64 {
        (self.alpha * self.ell.eval(s)).exp()
    }

    /// Assembled radial density.
    pub fn density(&self, s: f64) -> f64 {
        if s <= self.rho_min {
            self.inner_profile(s)
        } else {
            self.outer_level
        }
    }

    /// Relative residual of the defining equation for `alpha`.
    pub fn alpha_residual(&self) -> f64 {
        let target = self.ell.eval(self.rho_min) / self.c;
        (weighted_interference(self.alpha, self.r, &self.ell, 1e-13 * target) - target).abs() / target
    }

    /// Relative residual of the interference constraint for the assembled
    /// density (inner exponential, flat outer part).
    pub fn constraint_residual(&self) -> f64 {
        let target = self.ell.eval(self.rho_min) / self.c;
        let mut cuts = kinks(&self.ell);
        cuts.push(self.rho_min);
        let got = 2.0
            * PI
            * integrate(&|s: f64| s * self.density(s) * self.ell.eval(s), 0.0, self.r, &cuts, 1e-13 * target);
        (got - target).abs() / target
    }

    /// `(s, f(s))` on `n` equally spaced radii covering `[0, r]`.
    pub fn table(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let s = self.r * i as f64 / (n - 1) as f64;
                (s, self.density(s))
            })
            .collect()
    }
}

/// `rho -> 2 pi int_0^rho s e^{a l}(a l - 1) ds - b log(pi (r^2 - rho^2))`
/// with `a = alpha(rho)`. Returns `(objective, alpha, inner cost)`.
fn objective(rho: f64, c: f64, r: f64, b: f64, ell: &PathLoss) -> Result<(f64, f64, f64)> {
    let alpha = solve_alpha(rho, c, r, ell)?;
    let inner = 2.0
        * PI
        * integrate(
            &|s: f64| {
                let al = alpha * ell.eval(s);
                s * al.exp() * (al - 1.0)
            },
            0.0,
            rho,
            &kinks(ell),
            TOL_1D,
        );
    Ok((inner - b * (PI * (r * r - rho * rho)).ln(), alpha, inner))
}

/// Optimize the radius of the exponential core by a 64-point prescan
/// followed by golden-section search.
pub fn approx_minimizer(r: f64, c: f64, b: f64, ell: &PathLoss) -> Result<VariationalProfile> {
    if !(b > 0.0 && b < PI * r * r) {
        return Err(invalid("b must lie in (0, pi r^2)"));
    }
    let c0 = c0_uplink(r, ell)?;
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    if c >= c0 {
        return Err(Error::Degenerate(format!(
            "c = {c} is not below c0 = {c0}; the typical configuration is already frustrated"
        )));
    }
    let edge = r - 1e-6 * r;
    let eval = |rho: f64| objective(rho, c, r, b, ell).map(|o| o.0).unwrap_or(f64::INFINITY);
    let n = 64;
    let grid: Vec<f64> = (0..n).map(|i| edge * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&x| eval(x)).collect();
    let best = (0..n).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(n - 1)];
    let (mut rho, mut val) = golden_section(&eval, lo, hi, 1e-9 * r);
    if vals[best] < val {
        rho = grid[best];
        val = vals[best];
    }
    let (obj, alpha, inner) = objective(rho, c, r, b, ell)?;
    debug_assert_eq!(obj, val);
    let area = PI * (r * r - rho * rho);
    let outer_level = b / area;
    Ok(VariationalProfile {
        r,
        c,
        b,
        rho_min: rho,
        alpha,
        outer_level,
        objective: obj,
        gamma_int: inner + PI * rho * rho,
        gamma_out: b * outer_level.ln() - b + area,
        ell: ell.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_closed_forms() {
        let one = PathLoss::constant(1.0).unwrap();
        assert!((c0_uplink(3.0, &one).unwrap() - 1.0 / (9.0 * PI)).abs() < 1e-12);
        assert!((c0_downlink(3.0, &one).unwrap() * 9.0 * PI - 1.0).abs() < 1e-8);
        let std = PathLoss::standard();
        assert!((c0_uplink(1.0, &std).unwrap() - 1.0 / PI).abs() < 1e-12);
        let want = (1.0 / 625.0) / (PI * 49.0 / 25.0);
        assert!((c0_uplink(5.0, &std).unwrap() / want - 1.0).abs() < 1e-10);
    }

    #[test]
    fn alpha_zero_at_fixed_point() {
        let ell = PathLoss::standard();
        let rho = 2.0;
        let c = ell.eval(rho) / radial_mass(5.0, &ell);
        assert!(solve_alpha(rho, c, 5.0, &ell).unwrap().abs() < 1e-8);
        assert!(solve_alpha(rho, 0.5 * c, 5.0, &ell).unwrap() > 0.0);
    }

    #[test]
    fn degenerate_when_not_below_c0() {
        let ell = PathLoss::standard();
        let c0 = c0_uplink(5.0, &ell).unwrap();
        assert!(matches!(approx_minimizer(5.0, c0, 0.1, &ell), Err(Error::Degenerate(_))));
    }

    #[test]
    fn objective_at_zero_radius() {
        let ell = PathLoss::standard();
        let c = 0.5 * c0_uplink(5.0, &ell).unwrap();
        let (obj, _, inner) = objective(0.0, c, 5.0, 0.1, &ell).unwrap();
        assert_eq!(inner, 0.0);
        assert!((obj + 0.1 * (25.0 * PI).ln()).abs() < 1e-14);
    }
}
