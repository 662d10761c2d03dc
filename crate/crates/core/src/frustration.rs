//! Frustration functionals, frustrated-user measures, event indicators and
//! worst-QoS durations.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::discretization::{DiscretePath, PathMeasure};
use crate::error::{invalid, Result};
use crate::measure::{Atom, PointConfig, SpatialMeasure};
use crate::mobility::{Frames, Path};
use crate::model::{Channel, Model, Snapshot};

/// Time budget `a`, QoS threshold `c` and mass threshold `b` of one channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default)]
    pub a: f64,
    pub c: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScale {
    /// Threshold `g(SIR)`.
    #[default]
    Qos,
    /// Threshold the raw SIR.
    RawSir,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up: Option<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_dir: Option<ChannelSpec>,
    #[serde(default, rename = "do", skip_serializing_if = "Option::is_none")]
    pub down: Option<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub do_dir: Option<ChannelSpec>,
}

/// Which channels are constrained, and how. An omitted channel is
/// unconstrained (as if `b = -inf`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrustrationSpec {
    pub channels: Channels,
    #[serde(default)]
    pub threshold_scale: ThresholdScale,
}

impl FrustrationSpec {
    pub fn single(channel: Channel, spec: ChannelSpec) -> Self {
        let mut out = FrustrationSpec::default();
        out.set(channel, Some(spec));
        out
    }

    pub fn raw_sir(mut self) -> Self {
        self.threshold_scale = ThresholdScale::RawSir;
        self
    }

    pub fn get(&self, channel: Channel) -> Option<&ChannelSpec> {
        match channel {
            Channel::Up => self.channels.up.as_ref(),
            Channel::UpDir => self.channels.up_dir.as_ref(),
            Channel::Down => self.channels.down.as_ref(),
            Channel::DownDir => self.channels.do_dir.as_ref(),
        }
    }

    pub fn set(&mut self, channel: Channel, spec: Option<ChannelSpec>) {
        let slot = match channel {
            Channel::Up => &mut self.channels.up,
            Channel::UpDir => &mut self.channels.up_dir,
            Channel::Down => &mut self.channels.down,
            Channel::DownDir => &mut self.channels.do_dir,
        };
        *slot = spec;
    }

    pub fn active(&self) -> Vec<(Channel, ChannelSpec)> {
        Channel::ALL
            .into_iter()
            .filter_map(|ch| self.get(ch).map(|s| (ch, *s)))
            .collect()
    }

    /// The model whose QoS values are compared against `c`.
    pub fn scoring_model(&self, model: &Model) -> Model {
        match self.threshold_scale {
            ThresholdScale::Qos => model.clone(),
            ThresholdScale::RawSir => model.raw_sir(),
        }
    }

    /// Checks `0 <= a < T` and `0 <= c < c_plus` (the latter on the QoS
    /// scale only; raw SIR is unbounded).
    pub fn validate(&self, model: &Model, horizon: Option<f64>) -> Result<()> {
        for (ch, s) in self.active() {
            let name = ch.name();
            if !(s.c >= 0.0) || s.c.is_infinite() {
                return Err(invalid(format!("channel {name}: c must be finite and >= 0")));
            }
            if self.threshold_scale == ThresholdScale::Qos && s.c >= model.c_plus() {
                return Err(invalid(format!("channel {name}: c = {} must be below c+ = {}", s.c, model.c_plus())));
            }
            match horizon {
                Some(t) => {
                    if !(s.a >= 0.0 && s.a < t) {
                        return Err(invalid(format!("channel {name}: a must lie in [0, T)")));
                    }
                }
                None => {
                    if s.a != 0.0 {
                        return Err(invalid(format!("channel {name}: a must be 0 in static mode")));
                    }
                }
            }
            if s.b.is_nan() {
                return Err(invalid(format!("channel {name}: b is NaN")));
            }
        }
        Ok(())
    }
}

/// `1{ sum_t dT 1{gamma_t < c} > a }`.
pub fn tau_ac(gamma: &[f64], step: f64, a: f64, c: f64) -> bool {
    let bad = gamma.iter().filter(|g| **g < c).count();
    bad as f64 * step > a
}

/// Non-strict duration `sum_t dT 1{gamma_t <= c}`.
pub fn bad_duration(gamma: &[f64], step: f64, c: f64) -> f64 {
    gamma.iter().filter(|g| **g <= c).count() as f64 * step
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().fold(0.0, |a, b| a + b);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// A weighted population followed over a list of instants.
///
/// Frame `i` lists the atoms present at instant `i`; user `j` sits on atom
/// `users[j].slots[i]` of that frame.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub frames: Frames,
    pub users: Vec<User>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct User {
    pub weight: f64,
    pub slots: Vec<usize>,
}

impl Evolution {
    pub fn from_points(cfg: &PointConfig) -> Self {
        let w = cfg.weight();
        let atoms: Vec<Atom> = cfg.points.iter().map(|p| Atom::new(*p, w)).collect();
        Self::from_atoms(atoms)
    }

    /// Each positive-mass atom is one user.
    pub fn from_atoms(atoms: Vec<Atom>) -> Self {
        let atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        let users = atoms
            .iter()
            .enumerate()
            .map(|(k, a)| User {
                weight: a.mass,
                slots: vec![k],
            })
            .collect();
        let mut frames = Frames::single(&atoms);
        frames.frames = vec![atoms];
        Evolution { frames, users }
    }

    /// Users are the cells of positive mass, in cell order.
    pub fn from_spatial(nu: &SpatialMeasure) -> Self {
        let atoms = nu
            .mass()
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > 0.0)
            .map(|(i, m)| Atom::new(nu.grid().center(i), *m))
            .collect();
        Self::from_atoms(atoms)
    }

    /// Users are the occupied discrete paths, in path order.
    pub fn from_path_measure(nu: &PathMeasure) -> Self {
        let frames = Frames::from_path_measure(nu);
        let centers = nu.grid().spatial().centers();
        let slot_maps: Vec<BTreeMap<usize, usize>> = frames
            .frames
            .iter()
            .map(|atoms| {
                atoms
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (nu.grid().spatial().snap(a.pos), k))
                    .collect()
            })
            .collect();
        debug_assert!(centers.len() >= slot_maps.iter().map(|m| m.len()).max().unwrap_or(0));
        let users = nu
            .iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(u, m)| User {
                weight: m,
                slots: (0..u.len()).map(|i| slot_maps[i][&u.cell(i)]).collect(),
            })
            .collect();
        Evolution { frames, users }
    }

    /// Weighted trajectories sampled at `n` midpoint instants of `[0, T)`.
    /// Users of zero weight are dropped.
    pub fn from_trajectories<P: Path + Clone>(weighted: &[(f64, P)], horizon: f64, n: usize) -> Self {
        let kept: Vec<(f64, P)> = weighted.iter().filter(|(w, _)| *w > 0.0).cloned().collect();
        let frames = Frames::from_trajectories(&kept, horizon, n);
        let users = kept
            .iter()
            .enumerate()
            .map(|(j, (w, _))| User {
                weight: *w,
                slots: vec![j; n],
            })
            .collect();
        Evolution { frames, users }
    }

    /// QoS trajectory of every user on `channel`.
    pub fn qos_paths(&self, model: &Model, channels: &[Channel]) -> Vec<[Vec<f64>; 4]> {
        let need = channels.iter().any(|c| *c != Channel::UpDir);
        let snaps: Vec<Snapshot> = self
            .frames
            .frames
            .iter()
            .map(|atoms| Snapshot::new(model, atoms.clone(), need))
            .collect();
        self.users
            .iter()
            .map(|u| {
                let mut out: [Vec<f64>; 4] = Default::default();
                for &ch in channels {
                    out[ch.index()] = snaps
                        .iter()
                        .zip(&u.slots)
                        .map(|(s, &k)| s.qos(ch, k))
                        .collect();
                }
                out
            })
            .collect()
    }

    /// Per-user frustration flags for each active channel.
    pub fn flags(&self, model: &Model, spec: &FrustrationSpec) -> Vec<[bool; 4]> {
        let scoring = spec.scoring_model(model);
        let active = spec.active();
        let channels: Vec<Channel> = active.iter().map(|(c, _)| *c).collect();
        let step = self.frames.step;
        self.qos_paths(&scoring, &channels)
            .into_iter()
            .map(|paths| {
                let mut f = [false; 4];
                for (ch, s) in &active {
                    f[ch.index()] = tau_ac(&paths[ch.index()], step, s.a, s.c);
                }
                f
            })
            .collect()
    }
}

/// Frustrated part of a measure on each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct FrustratedMeasures<M> {
    pub up: M,
    pub up_dir: M,
    pub down: M,
    pub do_dir: M,
}

impl<M> FrustratedMeasures<M> {
    pub fn get(&self, channel: Channel) -> &M {
        match channel {
            Channel::Up => &self.up,
            Channel::UpDir => &self.up_dir,
            Channel::Down => &self.down,
            Channel::DownDir => &self.do_dir,
        }
    }

    fn from_fn(mut f: impl FnMut(Channel) -> M) -> Self {
        FrustratedMeasures {
            up: f(Channel::Up),
            up_dir: f(Channel::UpDir),
            down: f(Channel::Down),
            do_dir: f(Channel::DownDir),
        }
    }
}

/// Anything with a total mass.
pub trait TotalMass {
    fn total_mass(&self) -> f64;
}

impl TotalMass for Vec<f64> {
    fn total_mass(&self) -> f64 {
        pairwise_sum(self)
    }
}

impl TotalMass for SpatialMeasure {
    fn total_mass(&self) -> f64 {
        pairwise_sum(self.mass())
    }
}

impl TotalMass for PathMeasure {
    fn total_mass(&self) -> f64 {
        let v: Vec<f64> = self.iter().map(|(_, m)| m).collect();
        pairwise_sum(&v)
    }
}

impl<M: TotalMass> FrustratedMeasures<M> {
    pub fn totals(&self) -> [f64; 4] {
        Channel::ALL.map(|ch| self.get(ch).total_mass())
    }
}

/// Per-user frustrated weight (`weight * tau`) of an evolution, in user
/// order. Channels absent from `spec` get zero.
pub fn frustrated_weights(model: &Model, spec: &FrustrationSpec, evo: &Evolution) -> FrustratedMeasures<Vec<f64>> {
    let flags = evo.flags(model, spec);
    FrustratedMeasures::from_fn(|ch| {
        evo.users
            .iter()
            .zip(&flags)
            .map(|(u, f)| if f[ch.index()] { u.weight } else { 0.0 })
            .collect()
    })
}

/// Frustration flags of the users of a static configuration; the mass of
/// a channel is `count / lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMarks {
    pub flags: Vec<bool>,
    pub lambda: f64,
}

impl PointMarks {
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }
}

impl TotalMass for PointMarks {
    fn total_mass(&self) -> f64 {
        self.count() as f64 / self.lambda
    }
}

/// Frustrated users of a static configuration, one flag per point.
pub fn frustrated_points(model: &Model, spec: &FrustrationSpec, cfg: &PointConfig) -> FrustratedMeasures<PointMarks> {
    let flags = Evolution::from_points(cfg).flags(model, spec);
    FrustratedMeasures::from_fn(|ch| PointMarks {
        flags: flags.iter().map(|f| f[ch.index()]).collect(),
        lambda: cfg.lambda,
    })
}

pub fn frustrated_spatial(model: &Model, spec: &FrustrationSpec, nu: &SpatialMeasure) -> FrustratedMeasures<SpatialMeasure> {
    let evo = Evolution::from_spatial(nu);
    let w = frustrated_weights(model, spec, &evo);
    let cells: Vec<usize> = (0..nu.grid().len()).filter(|i| nu.get(*i) > 0.0).collect();
    FrustratedMeasures::from_fn(|ch| {
        let mut out = SpatialMeasure::zeros(nu.grid().clone());
        for (i, m) in cells.iter().zip(w.get(ch)) {
            out.mass_mut()[*i] = *m;
        }
        out
    })
}

pub fn frustrated_paths(model: &Model, spec: &FrustrationSpec, nu: &PathMeasure) -> FrustratedMeasures<PathMeasure> {
    let evo = Evolution::from_path_measure(nu);
    let w = frustrated_weights(model, spec, &evo);
    let paths: Vec<DiscretePath> = nu.iter().filter(|(_, m)| *m > 0.0).map(|(u, _)| u.clone()).collect();
    FrustratedMeasures::from_fn(|ch| {
        let mut out = PathMeasure::new(nu.grid().clone());
        for (u, m) in paths.iter().zip(w.get(ch)) {
            if *m > 0.0 {
                out.set(u.clone(), *m).expect("path taken from the same grid");
            }
        }
        out
    })
}

/// `1` iff the frustrated mass exceeds `b` on every constrained channel.
pub fn event_indicator(totals: &[f64; 4], spec: &FrustrationSpec) -> bool {
    spec.active().iter().all(|(ch, s)| totals[ch.index()] > s.b)
}

/// Worst bad-QoS durations `Phi(c, nu)` over occupied paths, per channel.
/// Uses `<=` in the time indicator; the empty maximum is 0.
pub fn worst_qos_duration(model: &Model, c: &[f64; 4], nu: &PathMeasure) -> [f64; 4] {
    worst_damped(model, c, nu, |_| 1.0)
}

/// `Phi_eps`: each path's durations damped by `min{1, nu(u)/eps}`.
pub fn worst_qos_duration_eps(model: &Model, c: &[f64; 4], nu: &PathMeasure, eps: f64) -> Result<[f64; 4]> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    Ok(worst_damped(model, c, nu, |m| (m / eps).min(1.0)))
}

fn worst_damped(model: &Model, c: &[f64; 4], nu: &PathMeasure, damp: impl Fn(f64) -> f64) -> [f64; 4] {
    let evo = Evolution::from_path_measure(nu);
    let step = evo.frames.step;
    let mut out = [0.0f64; 4];
    for (u, paths) in evo.users.iter().zip(evo.qos_paths(model, &Channel::ALL)) {
        let factor = damp(u.weight);
        for ch in Channel::ALL {
            let d = bad_duration(&paths[ch.index()], step, c[ch.index()]) * factor;
            out[ch.index()] = out[ch.index()].max(d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{PathGrid, TriadicParam};
    use crate::geometry::{Point, Window};
    use crate::pathloss::{PathLoss, QosMap};
    use std::sync::Arc;

    fn model(r: f64) -> Model {
        Model::new(Window::new(r).unwrap(), PathLoss::standard(), QosMap::min_cap(1.0).unwrap()).unwrap()
    }

    #[test]
    fn tau_boundaries() {
        assert!(!tau_ac(&[1.0; 3], 1.0 / 3.0, 0.0, 0.5));
        assert!(tau_ac(&[0.0; 3], 1.0 / 3.0, 0.9, 0.5));
        assert!(!tau_ac(&[0.0, 1.0], 0.5, 0.5, 0.5));
        assert!(tau_ac(&[0.2], 1.0, 0.0, 0.5));
        assert!(!tau_ac(&[0.5], 1.0, 0.0, 0.5));
    }

    #[test]
    fn empty_config_gives_zero_measures() {
        let m = model(3.0);
        let spec = FrustrationSpec::single(Channel::Up, ChannelSpec { a: 0.0, c: 0.5, b: 0.0 });
        let fm = frustrated_points(&m, &spec, &PointConfig::from_parts(vec![], 2.0));
        assert_eq!(fm.totals(), [0.0; 4]);
        assert!(!event_indicator(&fm.totals(), &spec));
    }

    #[test]
    fn lone_far_user_is_frustrated_on_up_dir() {
        // One user at (2,0) with lambda = 4: SIR at o is l(2)/(l(2)/4) = 4,
        // so D = min{4, 1} = 1 on the QoS scale; raw SIR = 4.
        let m = model(3.0);
        let cfg = PointConfig::from_parts(vec![Point::new(2.0, 0.0)], 4.0);
        let spec = FrustrationSpec::single(Channel::UpDir, ChannelSpec { a: 0.0, c: 4.0 + 1e-9, b: 0.0 }).raw_sir();
        let fm = frustrated_points(&m, &spec, &cfg);
        assert_eq!(fm.up_dir.flags, vec![true]);
        assert_eq!(fm.totals()[Channel::UpDir.index()], 0.25);
        let spec = FrustrationSpec::single(Channel::UpDir, ChannelSpec { a: 0.0, c: 4.0, b: 0.0 }).raw_sir();
        assert_eq!(frustrated_points(&m, &spec, &cfg).up_dir.flags, vec![false]);
    }

    #[test]
    fn event_thresholds() {
        let mut spec = FrustrationSpec::single(Channel::Up, ChannelSpec { a: 0.0, c: 0.5, b: -1.0 });
        assert!(event_indicator(&[0.0; 4], &spec));
        spec.set(Channel::Up, Some(ChannelSpec { a: 0.0, c: 0.5, b: f64::INFINITY }));
        assert!(!event_indicator(&[1e300; 4], &spec));
        spec.set(Channel::Up, Some(ChannelSpec { a: 0.0, c: 0.5, b: 0.1 }));
        assert!(!event_indicator(&[0.1, 0.0, 0.0, 0.0], &spec));
        assert!(event_indicator(&[0.0; 4], &FrustrationSpec::default()));
    }

    #[test]
    fn phi_on_empty_and_single_paths() {
        let m = model(1.0);
        let grid = Arc::new(PathGrid::triadic(Window::new(1.0).unwrap(), TriadicParam::new(1).unwrap(), Some(1.0)).unwrap());
        let empty = PathMeasure::new(grid.clone());
        assert_eq!(worst_qos_duration(&m, &[0.5; 4], &empty), [0.0; 4]);
        // A single heavy path: every QoS equals g(l/(w l)) = min{1/w, 1}.
        let mut nu = PathMeasure::new(grid.clone());
        nu.add(DiscretePath::constant(4, 3), 4.0).unwrap();
        let phi = worst_qos_duration(&m, &[0.25; 4], &nu);
        for v in phi {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let phi_eps = worst_qos_duration_eps(&m, &[0.25; 4], &nu, 8.0).unwrap();
        for v in phi_eps {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }
}
