//! Triadic space-time grids and the maps between continuous trajectories
//! and discrete paths.
//!
//! A discrete path assigns a cell of the spatial grid to each instant of the
//! time grid. The path space is exponentially large, so path measures are
//! stored sparsely: only paths carrying mass appear.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, Window};
use crate::measure::{SpatialGrid, SpatialMeasure};
use crate::mobility::Path;

/// A mesh `delta = 3^-m` with `m >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriadicParam {
    m: u32,
}

impl TriadicParam {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 || m > 12 {
            return Err(invalid(format!("triadic exponent must be in 1..=12, got {m}")));
        }
        Ok(TriadicParam { m })
    }

    /// Accepts `delta` only if it is (numerically) a power `3^-m`.
    pub fn from_value(delta: f64) -> Result<Self> {
        let m = (-delta.ln() / 3f64.ln()).round();
        if m >= 1.0 && (3f64.powi(-(m as i32)) - delta).abs() <= 1e-12 * delta {
            Self::new(m as u32)
        } else {
            Err(invalid(format!("{delta} is not of the form 3^-m")))
        }
    }

    pub fn exponent(&self) -> u32 {
        self.m
    }

    pub fn value(&self) -> f64 {
        3f64.powi(-(self.m as i32))
    }

    /// `1 / delta`.
    pub fn inverse(&self) -> usize {
        3usize.pow(self.m)
    }
}

/// Instants `I_delta = delta T (Z + 1/2) ∩ [0, T)`, or a single instant in
/// static mode.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    delta: TriadicParam,
    is_static: bool,
}

impl TimeGrid {
    pub fn new(horizon: f64, delta: TriadicParam) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("time horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid {
            horizon,
            delta,
            is_static: false,
        })
    }

    /// One instant of unit weight: durations become indicators.
    pub fn static_grid() -> Self {
        TimeGrid {
            horizon: 1.0,
            delta: TriadicParam { m: 1 },
            is_static: true,
        }
    }

    pub fn is_static(&self) -> bool {
        self.is_static
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        if self.is_static {
            1
        } else {
            self.delta.inverse()
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of the time interval each instant stands for.
    pub fn step(&self) -> f64 {
        if self.is_static {
            1.0
        } else {
            self.delta.value() * self.horizon
        }
    }

    pub fn instant(&self, i: usize) -> f64 {
        if self.is_static {
            0.0
        } else {
            self.step() * (i as f64 + 0.5)
        }
    }

    pub fn instants(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.instant(i)).collect()
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        if self.is_static {
            return if t == 0.0 { Ok(0) } else { Err(Error::NotOnTimeGrid(t)) };
        }
        let q = t / self.step() - 0.5;
        let i = q.round();
        if i >= 0.0 && (i as usize) < self.len() && (q - i).abs() <= 1e-9 {
            Ok(i as usize)
        } else {
            Err(Error::NotOnTimeGrid(t))
        }
    }

    /// Index of the interval `[i step, (i+1) step)` containing `t`.
    pub fn interval_of(&self, t: f64) -> usize {
        if self.is_static {
            return 0;
        }
        ((t / self.step()).floor().max(0.0) as usize).min(self.len() - 1)
    }
}

/// The product of a spatial grid and a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGrid {
    spatial: Arc<SpatialGrid>,
    time: TimeGrid,
}

impl PathGrid {
    /// Triadic grid in space and time with the same mesh; `horizon = None`
    /// gives the static grid.
    pub fn triadic(window: Window, delta: TriadicParam, horizon: Option<f64>) -> Result<Self> {
        let spatial = Arc::new(SpatialGrid::triadic(window, delta)?);
        let time = match horizon {
            Some(t) => TimeGrid::new(t, delta)?,
            None => TimeGrid::static_grid(),
        };
        Ok(PathGrid { spatial, time })
    }

    pub fn new(spatial: Arc<SpatialGrid>, time: TimeGrid) -> Self {
        PathGrid { spatial, time }
    }

    pub fn static_over(spatial: Arc<SpatialGrid>) -> Self {
        PathGrid {
            spatial,
            time: TimeGrid::static_grid(),
        }
    }

    pub fn spatial(&self) -> &Arc<SpatialGrid> {
        &self.spatial
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }
}

/// A cell index per instant of the time grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DiscretePath(pub Vec<u32>);

impl DiscretePath {
    pub fn constant(cell: usize, len: usize) -> Self {
        DiscretePath(vec![cell as u32; len])
    }

    pub fn cell(&self, i: usize) -> usize {
        self.0[i] as usize
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sparse nonnegative measure on the discrete path space.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMeasure {
    grid: Arc<PathGrid>,
    mass: BTreeMap<DiscretePath, f64>,
}

impl PathMeasure {
    pub fn new(grid: Arc<PathGrid>) -> Self {
        PathMeasure {
            grid,
            mass: BTreeMap::new(),
        }
    }

    /// The static path measure carrying a spatial measure.
    pub fn from_spatial(grid: Arc<PathGrid>, nu: &SpatialMeasure) -> Result<Self> {
        if !grid.time().is_static() {
            return Err(Error::GridMismatch("from_spatial needs a static path grid".into()));
        }
        if grid.spatial().as_ref() != nu.grid().as_ref() {
            return Err(Error::GridMismatch("spatial grids differ".into()));
        }
        let mut out = PathMeasure::new(grid);
        for (i, &m) in nu.mass().iter().enumerate() {
            if m > 0.0 {
                out.mass.insert(DiscretePath::constant(i, 1), m);
            }
        }
        Ok(out)
    }

    pub fn grid(&self) -> &Arc<PathGrid> {
        &self.grid
    }

    pub fn add(&mut self, path: DiscretePath, m: f64) -> Result<()> {
        if path.len() != self.grid.time().len() {
            return Err(Error::GridMismatch(format!(
                "path of length {} on a time grid of {} instants",
                path.len(),
                self.grid.time().len()
            )));
        }
        if path.0.iter().any(|&c| c as usize >= self.grid.spatial().len()) {
            return Err(Error::GridMismatch("path visits a cell outside the grid".into()));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(invalid("path masses must be finite and nonnegative"));
        }
        *self.mass.entry(path).or_insert(0.0) += m;
        Ok(())
    }

    pub fn set(&mut self, path: DiscretePath, m: f64) -> Result<()> {
        self.mass.remove(&path);
        self.add(path, m)
    }

    pub fn get(&self, path: &DiscretePath) -> f64 {
        self.mass.get(path).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DiscretePath, f64)> + '_ {
        self.mass.iter().map(|(p, m)| (p, *m))
    }

    /// Paths carrying strictly positive mass.
    pub fn support(&self) -> Vec<DiscretePath> {
        self.mass
            .iter()
            .filter(|(_, m)| **m > 0.0)
            .map(|(p, _)| p.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        PathMeasure {
            grid: self.grid.clone(),
            mass: self.mass.iter().map(|(p, m)| (p.clone(), m * a)).collect(),
        }
    }

    /// `kappa = max_u mu(u)`.
    pub fn max_path_mass(&self) -> f64 {
        self.mass.values().copied().fold(0.0, f64::max)
    }

    pub fn same_grid(&self, other: &PathMeasure) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Marginal at grid instant `t`.
    pub fn time_slice(&self, t: f64) -> Result<SpatialMeasure> {
        let i = self.grid.time().index_of(t)?;
        Ok(self.time_slice_index(i))
    }

    pub fn time_slice_index(&self, i: usize) -> SpatialMeasure {
        let spatial = self.grid.spatial().clone();
        let mut mass = vec![0.0; spatial.len()];
        for (p, m) in &self.mass {
            mass[p.cell(i)] += *m;
        }
        SpatialMeasure::new(spatial, mass).expect("marginal of a valid path measure")
    }
}

/// Snaps a trajectory at each instant of the time grid to its nearest cell.
pub fn discretize_path<P: Path + ?Sized>(x: &P, grid: &PathGrid) -> DiscretePath {
    let time = grid.time();
    DiscretePath(
        (0..time.len())
            .map(|i| grid.spatial().snap(x.position(time.instant(i))) as u32)
            .collect(),
    )
}

/// Pushforward of a weighted trajectory list onto the path grid.
pub fn discretize_measure<P: Path>(weighted: &[(f64, P)], grid: Arc<PathGrid>) -> Result<PathMeasure> {
    let mut out = PathMeasure::new(grid.clone());
    for (w, x) in weighted {
        out.add(discretize_path(x, &grid), *w)?;
    }
    Ok(out)
}

/// Piecewise-constant trajectory obtained by holding each discrete
/// position over its time interval.
#[derive(Clone, Debug, PartialEq)]
pub struct StepPath {
    time: TimeGrid,
    positions: Vec<Point>,
}

impl StepPath {
    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    /// Interval boundaries `i delta T`, `i = 1..1/delta`.
    pub fn breakpoints(&self) -> Vec<f64> {
        (1..self.positions.len())
            .map(|i| i as f64 * self.time.step())
            .collect()
    }
}

impl Path for StepPath {
    fn position(&self, t: f64) -> Point {
        self.positions[self.time.interval_of(t)]
    }

    fn horizon(&self) -> f64 {
        self.time.horizon()
    }
}

/// Embeds a discrete path as a step function.
pub fn embed_path(u: &DiscretePath, grid: &PathGrid) -> Result<StepPath> {
    if u.len() != grid.time().len() {
        return Err(Error::GridMismatch("path length differs from the time grid".into()));
    }
    Ok(StepPath {
        time: grid.time().clone(),
        positions: u.0.iter().map(|&c| grid.spatial().center(c as usize)).collect(),
    })
}
