//! Adaptive 1-D quadrature, disk integrals, root bracketing and golden-section search.

use crate::error::{Error, Result};
use crate::geometry::Point;

const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson split at the given interior kinks.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, kinks: &[f64], tol: f64) -> f64 {
    let (lo, hi, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts: Vec<f64> = kinks.iter().copied().filter(|k| *k > lo && *k < hi).collect();
    cuts.sort_by(f64::total_cmp);
    let mut pts = Vec::with_capacity(cuts.len() + 2);
    pts.push(lo);
    pts.extend(cuts);
    pts.push(hi);
    let share = tol / (pts.len() - 1) as f64;
    sign * pts.windows(2).map(|w| simpson(f, w[0], w[1], share)).sum::<f64>()
}

/// `int_{B_r(o)} f(|x - p|) dx` for `|p| <= r`, in polar coordinates about `p`.
///
/// `radial_kinks` are the radii where `f` is not smooth. The result has
/// relative accuracy about `rel_tol`.
pub fn disk_integral_about<F: Fn(f64) -> f64>(f: &F, radial_kinks: &[f64], p: Point, r: f64, rel_tol: f64) -> f64 {
    // Inner primitive G(R) = int_0^R f(s) s ds, cached on each call.
    let g = |big_r: f64| integrate(&|s: f64| f(s) * s, 0.0, big_r, radial_kinks, 1e-13 * (1.0 + big_r * big_r));
    let p2 = p.norm_sq();
    let reach = |theta: f64| {
        let proj = p.x * theta.cos() + p.y * theta.sin();
        let disc = (proj * proj - p2 + r * r).max(0.0);
        (-proj + disc.sqrt()).max(0.0)
    };
    let scale = g(2.0 * r).abs() * 2.0 * std::f64::consts::PI;
    let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
    // Split the angle at a few points so the recursion sees the kinks.
    let n = 16;
    let step = 2.0 * std::f64::consts::PI / n as f64;
    (0..n)
        .map(|k| {
            let a = k as f64 * step;
            simpson(&|t: f64| g(reach(t)), a, a + step, tol / n as f64)
        })
        .sum()
}

/// Root of an increasing or decreasing `f` on `[lo, hi]` by bisection with
/// secant steps (Illinois variant). Requires a sign change.
pub fn find_root<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, x_tol: f64, f_tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!("no sign change on [{lo}, {hi}]")));
    }
    let mut side = 0i8;
    for _ in 0..500 {
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !(c > a.min(b) && c < a.max(b)) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc.abs() <= f_tol || (b - a).abs() <= x_tol {
            return Ok(c);
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

/// Golden-section minimization on `[a, b]`; returns `(argmin, min)`.
pub fn golden_section<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_and_kinks() {
        let v = simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 4.0).abs() < 1e-12);
        let ell = |s: f64| if s <= 1.0 { 1.0 } else { s.powi(-4) };
        let v = integrate(&|s: f64| s * ell(s), 0.0, 5.0, &[1.0], 1e-12);
        let exact = 0.5 + 0.5 * (1.0 - 1.0 / 25.0);
        assert!((v - exact).abs() < 1e-11);
        assert_eq!(integrate(&|s: f64| s, 3.0, 1.0, &[], 1e-12), -4.0);
    }

    #[test]
    fn disk_area_from_any_center() {
        for p in [Point::ORIGIN, Point::new(1.0, 0.5), Point::new(2.0, 0.0)] {
            let v = disk_integral_about(&|_s: f64| 1.0, &[], p, 2.0, 1e-10);
            assert!((v - 4.0 * PI).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn root_and_golden() {
        let x = find_root(&|x: f64| x * x - 2.0, 0.0, 2.0, 1e-15, 0.0).unwrap();
        assert!((x - 2f64.sqrt()).abs() < 1e-12);
        assert!(find_root(&|x: f64| x * x + 1.0, 0.0, 1.0, 1e-12, 0.0).is_err());
        let (x, fx) = golden_section(&|x: f64| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-6 && (fx - 1.0).abs() < 1e-12);
    }
}
