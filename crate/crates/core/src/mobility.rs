//! Trajectories, random-waypoint sampling and QoS along a trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::PathMeasure;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, Window};
use crate::measure::{Atom, Population};
use crate::model::{Channel, Model, Snapshot};
use crate::montecarlo::Intensity;

/// A map from `[0, T)` into the window.
pub trait Path {
    fn position(&self, t: f64) -> Point;
    fn horizon(&self) -> f64;
}

/// Piecewise-linear path through time-stamped knots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    knots: Vec<(f64, Point)>,
    horizon: f64,
}

impl Trajectory {
    /// Knots must start at time 0 and be strictly increasing in time; the
    /// last knot time is the horizon.
    pub fn new(knots: Vec<(f64, Point)>) -> Result<Self> {
        let horizon = knots.last().map(|k| k.0).unwrap_or(0.0);
        Self::with_horizon(knots, horizon)
    }

    pub fn with_horizon(knots: Vec<(f64, Point)>, horizon: f64) -> Result<Self> {
        if knots.is_empty() || knots[0].0 != 0.0 {
            return Err(invalid("trajectory knots must start at t = 0"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("trajectory knot times must increase strictly"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("trajectory horizon must be positive"));
        }
        Ok(Trajectory { knots, horizon })
    }

    pub fn constant(p: Point, horizon: f64) -> Self {
        Trajectory {
            knots: vec![(0.0, p)],
            horizon,
        }
    }

    pub fn knots(&self) -> &[(f64, Point)] {
        &self.knots
    }

    /// Largest speed over the linear pieces.
    pub fn max_speed(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[0].1.dist(w[1].1) / (w[1].0 - w[0].0))
            .fold(0.0, f64::max)
    }

    /// Same path shifted by a fixed offset (may leave the window).
    pub fn shifted(&self, by: Point) -> Trajectory {
        Trajectory {
            knots: self.knots.iter().map(|(t, p)| (*t, *p + by)).collect(),
            horizon: self.horizon,
        }
    }
}

impl Path for Trajectory {
    fn position(&self, t: f64) -> Point {
        let k = &self.knots;
        if t <= k[0].0 {
            return k[0].1;
        }
        let i = k.partition_point(|(s, _)| *s <= t);
        if i >= k.len() {
            return k[k.len() - 1].1;
        }
        let (t0, p0) = k[i - 1];
        let (t1, p1) = k[i];
        let w = (t - t0) / (t1 - t0);
        p0 + (p1 - p0) * w
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

impl<P: Path + ?Sized> Path for &P {
    fn position(&self, t: f64) -> Point {
        (**self).position(t)
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
}

/// Random waypoint with constant speed: start from the initial law, then
/// repeatedly pick a uniform waypoint in the window, move there in a
/// straight line and pause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel {
    pub initial: Intensity,
    pub speed: f64,
    pub pause: f64,
    pub horizon: f64,
}

impl MobilityModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(invalid("speed must be finite and nonnegative"));
        }
        if !(self.pause >= 0.0 && self.pause.is_finite()) {
            return Err(invalid("pause must be finite and nonnegative"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon must be positive"));
        }
        self.initial.validate()
    }

    /// The Lipschitz constant `J1` of every sampled path.
    pub fn lipschitz(&self) -> f64 {
        self.speed
    }
}

pub fn sample_trajectory(model: &MobilityModel, window: &Window, seed: u64) -> Result<Trajectory> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_trajectory_with(model, window, &mut rng))
}

pub(crate) fn sample_trajectory_with<R: Rng + ?Sized>(
    model: &MobilityModel,
    window: &Window,
    rng: &mut R,
) -> Trajectory {
    let start = model.initial.sample_point(window, rng);
    waypoint_path(start, model, window, rng)
}

/// Random-waypoint continuation from a given starting point.
pub(crate) fn waypoint_path<R: Rng + ?Sized>(
    start: Point,
    model: &MobilityModel,
    window: &Window,
    rng: &mut R,
) -> Trajectory {
    let horizon = model.horizon;
    if model.speed == 0.0 {
        return Trajectory::constant(start, horizon);
    }
    let mut knots = vec![(0.0, start)];
    let mut t = 0.0;
    let mut here = start;
    while t < horizon {
        let target = Point::new(
            rng.random_range(-window.r..=window.r),
            rng.random_range(-window.r..=window.r),
        );
        let travel = here.dist(target) / model.speed;
        if travel <= 0.0 {
            continue;
        }
        if t + travel >= horizon {
            let w = (horizon - t) / travel;
            knots.push((horizon, here + (target - here) * w));
            break;
        }
        t += travel;
        here = target;
        knots.push((t, here));
        if model.pause > 0.0 {
            let end = (t + model.pause).min(horizon);
            knots.push((end, here));
            t = end;
        }
    }
    if knots.len() == 1 {
        return Trajectory::constant(start, horizon);
    }
    Trajectory { knots, horizon }
}

/// A population observed at a list of instants.
///
/// Each frame lists the atoms present at that instant. `step` is the time
/// weight of one instant (`delta T` on a grid, `1` in static mode).
#[derive(Clone, Debug, PartialEq)]
pub struct Frames {
    pub instants: Vec<f64>,
    pub step: f64,
    pub horizon: f64,
    pub is_static: bool,
    pub frames: Vec<Vec<Atom>>,
}

impl Frames {
    /// A single static frame.
    pub fn single<P: Population + ?Sized>(nu: &P) -> Self {
        Frames {
            instants: vec![0.0],
            step: 1.0,
            horizon: 1.0,
            is_static: true,
            frames: vec![nu.to_atoms()],
        }
    }

    /// Time marginals of a path measure on its grid instants.
    pub fn from_path_measure(nu: &PathMeasure) -> Self {
        let time = nu.grid().time();
        Frames {
            instants: time.instants(),
            step: time.step(),
            horizon: time.horizon(),
            is_static: time.is_static(),
            frames: (0..time.len())
                .map(|i| nu.time_slice_index(i).to_atoms())
                .collect(),
        }
    }

    /// Positions of weighted trajectories at the midpoints of `n` equal
    /// subintervals of `[0, T)`.
    pub fn from_trajectories<P: Path>(weighted: &[(f64, P)], horizon: f64, n: usize) -> Self {
        let step = horizon / n as f64;
        let instants: Vec<f64> = (0..n).map(|i| step * (i as f64 + 0.5)).collect();
        let frames = instants
            .iter()
            .map(|&t| {
                weighted
                    .iter()
                    .map(|(w, x)| Atom::new(x.position(t), *w))
                    .collect()
            })
            .collect();
        Frames {
            instants,
            step,
            horizon,
            is_static: false,
            frames,
        }
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }
}

/// QoS trajectory `(Q(x_t, nu_t))_t` of a path on one channel.
pub fn qos_path<P: Path + ?Sized>(model: &Model, x: &P, frames: &Frames, channel: Channel) -> Result<Vec<f64>> {
    if !frames.is_static && (x.horizon() - frames.horizon).abs() > 1e-9 * frames.horizon {
        return Err(Error::GridMismatch(format!(
            "path horizon {} differs from frame horizon {}",
            x.horizon(),
            frames.horizon
        )));
    }
    let need_atoms = channel != Channel::UpDir;
    Ok(frames
        .instants
        .iter()
        .zip(&frames.frames)
        .map(|(&t, atoms)| {
            let snap = Snapshot::new(model, atoms.clone(), need_atoms);
            snap.qos_at(channel, x.position(t))
        })
        .collect())
}
