//! Path-loss functions and SIR-to-QoS maps.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::geometry::Window;

type LossFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Positive, Lipschitz, non-increasing signal decay `s -> l(s)`.
#[derive(Clone)]
pub enum PathLoss {
    /// `l(s) = min{cap, s^-exponent}`.
    MinPower { cap: f64, exponent: f64 },
    /// `l(s) = value`.
    Constant { value: f64 },
    /// User-supplied decay with a declared Lipschitz constant.
    Custom {
        f: LossFn,
        lipschitz: f64,
        kinks: Vec<f64>,
    },
}

impl fmt::Debug for PathLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathLoss::MinPower { cap, exponent } => f
                .debug_struct("MinPower")
                .field("cap", cap)
                .field("exponent", exponent)
                .finish(),
            PathLoss::Constant { value } => f.debug_struct("Constant").field("value", value).finish(),
            PathLoss::Custom { lipschitz, .. } => {
                f.debug_struct("Custom").field("lipschitz", lipschitz).finish()
            }
        }
    }
}

/// Config-file form of a path-loss choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PathLossSpec {
    MinPower { cap: f64, exponent: f64 },
    Constant { value: f64 },
}

impl PathLossSpec {
    pub fn build(&self) -> Result<PathLoss> {
        match *self {
            PathLossSpec::MinPower { cap, exponent } => PathLoss::min_power(cap, exponent),
            PathLossSpec::Constant { value } => PathLoss::constant(value),
        }
    }
}

impl PathLoss {
    pub fn min_power(cap: f64, exponent: f64) -> Result<Self> {
        if !(cap > 0.0 && cap.is_finite()) || !(exponent > 0.0 && exponent.is_finite()) {
            return Err(invalid(format!(
                "min-power path loss needs cap > 0 and exponent > 0, got cap={cap}, exponent={exponent}"
            )));
        }
        Ok(PathLoss::MinPower { cap, exponent })
    }

    /// The `min{1, s^-4}` loss used throughout the reference scenarios.
    pub fn standard() -> Self {
        PathLoss::MinPower {
            cap: 1.0,
            exponent: 4.0,
        }
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(invalid(format!("constant path loss must be positive, got {value}")));
        }
        Ok(PathLoss::Constant { value })
    }

    pub fn custom<F>(f: F, lipschitz: f64, kinks: Vec<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid("custom path loss needs a finite Lipschitz constant"));
        }
        Ok(PathLoss::Custom {
            f: Arc::new(f),
            lipschitz,
            kinks,
        })
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            PathLoss::MinPower { cap, exponent } => {
                if s <= 0.0 {
                    *cap
                } else if *exponent == 4.0 {
                    let s2 = s * s;
                    cap.min(1.0 / (s2 * s2))
                } else {
                    cap.min(s.powf(-exponent))
                }
            }
            PathLoss::Constant { value } => *value,
            PathLoss::Custom { f, .. } => f(s),
        }
    }

    /// Evaluate from a squared distance, avoiding the square root where the
    /// family allows it.
    #[inline]
    pub fn eval_sq(&self, s2: f64) -> f64 {
        match self {
            PathLoss::MinPower { cap, exponent } => {
                if s2 <= 0.0 {
                    *cap
                } else if *exponent == 4.0 {
                    cap.min(1.0 / (s2 * s2))
                } else if *exponent == 2.0 {
                    cap.min(1.0 / s2)
                } else {
                    cap.min(s2.powf(-0.5 * exponent))
                }
            }
            PathLoss::Constant { value } => *value,
            PathLoss::Custom { f, .. } => f(s2.sqrt()),
        }
    }

    /// Lipschitz constant of `s -> l(s)` on `[0, inf)`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PathLoss::MinPower { cap, exponent } => exponent * cap.powf((exponent + 1.0) / exponent),
            PathLoss::Constant { .. } => 0.0,
            PathLoss::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    /// Radii where the loss is not differentiable; quadrature splits there.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            PathLoss::MinPower { cap, exponent } => vec![cap.powf(-1.0 / exponent)],
            PathLoss::Constant { .. } => Vec::new(),
            PathLoss::Custom { kinks, .. } => kinks.clone(),
        }
    }

    /// Extremes of `l(|x - y|)` over `x, y` in the window.
    ///
    /// Computed by dense sampling of `[0, diam]`; the reported `slack` is the
    /// Lipschitz bound `J2 * step / 2` on how far the true extremes can sit
    /// from the sampled ones.
    pub fn bounds(&self, window: &Window) -> LossBounds {
        const SAMPLES: usize = 20_001;
        let diam = window.diameter();
        let step = diam / (SAMPLES - 1) as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sample = |s: f64| {
            let v = self.eval(s);
            lo = lo.min(v);
            hi = hi.max(v);
        };
        for i in 0..SAMPLES {
            sample(i as f64 * step);
        }
        for k in self.kinks() {
            if (0.0..=diam).contains(&k) {
                sample(k);
            }
        }
        LossBounds {
            ell_min: lo,
            ell_max: hi,
            lipschitz: self.lipschitz(),
            slack: 0.5 * self.lipschitz() * step,
        }
    }
}

/// Cached extremes of the path loss over a window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    pub ell_min: f64,
    pub ell_max: f64,
    pub lipschitz: f64,
    pub slack: f64,
}

/// The monotone map `g` from SIR to QoS.
///
/// `g` is strictly increasing on `[0, rho_plus)` and equal to `c_plus`
/// beyond. [`QosMap::Identity`] is the uncapped map used when thresholds
/// are applied to raw SIR values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QosMap {
    /// `g(s) = min{s, cap}`.
    MinCap { cap: f64 },
    /// `g(s) = min{log(1 + s), cap}`.
    ShannonCap { cap: f64 },
    /// `g(s) = s`; `c_plus = rho_plus = inf`.
    Identity,
}

impl QosMap {
    pub fn min_cap(cap: f64) -> Result<Self> {
        Self::check_cap(cap)?;
        Ok(QosMap::MinCap { cap })
    }

    pub fn shannon_cap(cap: f64) -> Result<Self> {
        Self::check_cap(cap)?;
        Ok(QosMap::ShannonCap { cap })
    }

    fn check_cap(cap: f64) -> Result<()> {
        if cap > 0.0 && cap.is_finite() {
            Ok(())
        } else {
            Err(invalid(format!("QoS cap must be positive and finite, got {cap}")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QosMap::MinCap { cap } | QosMap::ShannonCap { cap } => Self::check_cap(cap),
            QosMap::Identity => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, sir: f64) -> f64 {
        match *self {
            QosMap::MinCap { cap } => sir.min(cap),
            QosMap::ShannonCap { cap } => sir.ln_1p().min(cap),
            QosMap::Identity => sir,
        }
    }

    pub fn c_plus(&self) -> f64 {
        match *self {
            QosMap::MinCap { cap } | QosMap::ShannonCap { cap } => cap,
            QosMap::Identity => f64::INFINITY,
        }
    }

    pub fn rho_plus(&self) -> f64 {
        match *self {
            QosMap::MinCap { cap } => cap,
            QosMap::ShannonCap { cap } => cap.exp_m1(),
            QosMap::Identity => f64::INFINITY,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        1.0
    }

    /// The SIR level at which `g` reaches `c`, for `0 <= c < c_plus`.
    ///
    /// Since `g` is strictly increasing below `rho_plus`,
    /// `g(s) < c` iff `s < inverse(c)`.
    pub fn inverse(&self, c: f64) -> f64 {
        match *self {
            QosMap::MinCap { .. } => c,
            QosMap::ShannonCap { .. } => c.exp_m1(),
            QosMap::Identity => c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_power_values() {
        let l = PathLoss::standard();
        assert_eq!(l.eval(0.0), 1.0);
        assert_eq!(l.eval(0.5), 1.0);
        assert_eq!(l.eval(2.0), 1.0 / 16.0);
        assert!((l.eval_sq(9.0) - 1.0 / 81.0).abs() < 1e-15);
        assert_eq!(l.lipschitz(), 4.0);
        assert_eq!(l.kinks(), vec![1.0]);
    }

    #[test]
    fn general_exponent_matches_eval_sq() {
        let l = PathLoss::min_power(2.0, 3.0).unwrap();
        for &s in &[0.1, 0.7, 0.8, 1.3, 4.0] {
            assert!((l.eval(s) - l.eval_sq(s * s)).abs() < 1e-14);
        }
        let kink = l.kinks()[0];
        assert!((l.eval(kink) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_bound_holds_on_samples() {
        for l in [PathLoss::standard(), PathLoss::min_power(3.0, 2.5).unwrap()] {
            let j = l.lipschitz();
            for i in 0..2000 {
                let s = i as f64 * 0.003;
                let t = s + 0.0017;
                assert!((l.eval(s) - l.eval(t)).abs() <= j * (t - s) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn bounds_over_window() {
        let w = Window::new(5.0).unwrap();
        let b = PathLoss::standard().bounds(&w);
        assert_eq!(b.ell_max, 1.0);
        let exact_min = (w.diameter()).powi(-4);
        assert!((b.ell_min - exact_min).abs() <= 1e-15 + b.slack);
        let c = PathLoss::constant(2.0).unwrap().bounds(&w);
        assert_eq!((c.ell_min, c.ell_max), (2.0, 2.0));
    }

    #[test]
    fn qos_maps() {
        let g = QosMap::min_cap(2.0).unwrap();
        assert_eq!(g.eval(0.5), 0.5);
        assert_eq!(g.eval(f64::INFINITY), 2.0);
        assert_eq!(g.rho_plus(), 2.0);
        let h = QosMap::shannon_cap(1.0).unwrap();
        assert!((h.eval(h.inverse(0.4)) - 0.4).abs() < 1e-15);
        assert_eq!(h.eval(1e9), 1.0);
        assert!((h.rho_plus() - (1f64.exp() - 1.0)).abs() < 1e-15);
        // strictly increasing below rho_plus
        let mut prev = -1.0;
        for i in 0..100 {
            let v = h.eval(i as f64 * h.rho_plus() / 100.0);
            assert!(v > prev);
            prev = v;
        }
        assert!(QosMap::min_cap(0.0).is_err());
    }
}
