//! Finite measures on the window: empirical user configurations and
//! mass vectors on spatial grids.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::discretization::TriadicParam;
use crate::error::{invalid, Error, Result};
use crate::geometry::{Point, Window};

/// A point mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pos: Point,
    pub mass: f64,
}

impl Atom {
    pub const fn new(pos: Point, mass: f64) -> Self {
        Atom { pos, mass }
    }
}

/// Anything that can be viewed as a finite sum of point masses.
///
/// Only atoms of strictly positive mass are yielded; they are both the
/// interferers and the admissible relay locations.
pub trait Population {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_;

    fn total_mass(&self) -> f64 {
        self.atoms().map(|a| a.mass).sum()
    }

    fn to_atoms(&self) -> Vec<Atom> {
        self.atoms().collect()
    }
}

impl Population for [Atom] {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.iter().copied().filter(|a| a.mass > 0.0)
    }
}

impl Population for Vec<Atom> {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.as_slice().atoms()
    }
}

/// A realization of the user process at one instant, with its intensity
/// scale. The associated empirical measure puts mass `1/lambda` on each
/// user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointConfig {
    pub points: Vec<Point>,
    pub lambda: f64,
}

impl PointConfig {
    pub fn new(window: &Window, points: Vec<Point>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        if let Some(p) = points.iter().find(|p| !window.contains(**p)) {
            return Err(invalid(format!("point ({}, {}) lies outside the window", p.x, p.y)));
        }
        Ok(PointConfig { points, lambda })
    }

    /// Skips the window check; used by samplers that draw inside the window
    /// by construction.
    pub fn from_parts(points: Vec<Point>, lambda: f64) -> Self {
        PointConfig { points, lambda }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.lambda
    }
}

impl Population for PointConfig {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        let w = self.weight();
        self.points.iter().map(move |&p| Atom::new(p, w))
    }

    fn total_mass(&self) -> f64 {
        self.points.len() as f64 / self.lambda
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GridLayout {
    /// `W_delta = delta 2 r Z^2 ∩ W` with square cells of side `2 delta r`.
    Triadic {
        window: Window,
        delta: TriadicParam,
        per_axis: usize,
        spacing: f64,
    },
    /// Equal-width rings split into equal angular sectors.
    Polar {
        radius: f64,
        shells: usize,
        sectors: usize,
    },
    /// Arbitrary cell centers with given areas.
    Custom,
}

/// A finite set of cells, each represented by its center.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    centers: Vec<Point>,
    areas: Vec<f64>,
    layout: GridLayout,
}

impl SpatialGrid {
    /// The triadic grid of mesh `delta` on a window with integer `r >= 1`.
    /// The origin is the center of the middle cell; centers are stored in
    /// lexicographic order.
    pub fn triadic(window: Window, delta: TriadicParam) -> Result<Self> {
        if !window.is_triadic_compatible() {
            return Err(invalid(format!(
                "triadic grids need an integer window half-width >= 1, got {}",
                window.r
            )));
        }
        let per_axis = 3usize.pow(delta.exponent());
        let spacing = 2.0 * window.r * delta.value();
        let half = (per_axis / 2) as i64;
        let mut centers = Vec::with_capacity(per_axis * per_axis);
        for i in -half..=half {
            for j in -half..=half {
                centers.push(Point::new(i as f64 * spacing, j as f64 * spacing));
            }
        }
        let areas = vec![spacing * spacing; centers.len()];
        Ok(SpatialGrid {
            centers,
            areas,
            layout: GridLayout::Triadic {
                window,
                delta,
                per_axis,
                spacing,
            },
        })
    }

    /// Rings of equal width on the disk of the given radius, each split into
    /// `sectors` equal sectors. Cell centers sit at the area-median radius of
    /// their ring and the mid-angle of their sector.
    pub fn polar(radius: f64, shells: usize, sectors: usize) -> Result<Self> {
        if !(radius > 0.0) || shells == 0 || sectors == 0 {
            return Err(invalid("polar grid needs radius > 0 and at least one shell and sector"));
        }
        let mut centers = Vec::with_capacity(shells * sectors);
        let mut areas = Vec::with_capacity(shells * sectors);
        for s in 0..shells {
            let a = radius * s as f64 / shells as f64;
            let b = radius * (s + 1) as f64 / shells as f64;
            let rc = ((a * a + b * b) / 2.0).sqrt();
            for k in 0..sectors {
                let theta = 2.0 * PI * (k as f64 + 0.5) / sectors as f64;
                centers.push(Point::from_polar(rc, theta));
                areas.push(PI * (b * b - a * a) / sectors as f64);
            }
        }
        Ok(SpatialGrid {
            centers,
            areas,
            layout: GridLayout::Polar {
                radius,
                shells,
                sectors,
            },
        })
    }

    pub fn custom(centers: Vec<Point>, areas: Vec<f64>) -> Result<Self> {
        if centers.len() != areas.len() {
            return Err(invalid("custom grid: centers and areas differ in length"));
        }
        if areas.iter().any(|a| !(*a >= 0.0)) {
            return Err(invalid("custom grid: areas must be nonnegative"));
        }
        Ok(SpatialGrid {
            centers,
            areas,
            layout: GridLayout::Custom,
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn center(&self, idx: usize) -> Point {
        self.centers[idx]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn layout(&self) -> &GridLayout {
        &self.layout
    }

    /// Index of the nearest cell center; ties go to the lexicographically
    /// smallest center.
    pub fn snap(&self, p: Point) -> usize {
        match self.layout {
            GridLayout::Triadic {
                window,
                per_axis,
                spacing,
                ..
            } => {
                let half = (per_axis / 2) as i64;
                let axis = |v: f64| -> usize {
                    // ceil(q - 1/2) rounds to nearest, halves downwards
                    let k = (v / spacing - 0.5).ceil() as i64;
                    (k.clamp(-half, half) + half) as usize
                };
                let _ = window;
                axis(p.x) * per_axis + axis(p.y)
            }
            _ => {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (i, c) in self.centers.iter().enumerate() {
                    let d = c.dist_sq(p);
                    if d < best_d || (d == best_d && c.lex_cmp(&self.centers[best]).is_lt()) {
                        best = i;
                        best_d = d;
                    }
                }
                best
            }
        }
    }

    /// Groups cells whose centers share a distance to the origin (up to a
    /// relative tolerance). Used for radial averaging.
    pub fn radial_shells(&self) -> Vec<Vec<usize>> {
        let scale = self
            .centers
            .iter()
            .map(|c| c.norm())
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.centers[a].norm().total_cmp(&self.centers[b].norm()));
        let mut shells: Vec<Vec<usize>> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for i in order {
            let rad = self.centers[i].norm();
            if rad - last > 1e-9 * scale || shells.is_empty() {
                shells.push(vec![i]);
                last = rad;
            } else {
                shells.last_mut().unwrap().push(i);
            }
        }
        for s in &mut shells {
            s.sort_unstable();
        }
        shells
    }
}

/// A nonnegative mass per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMeasure {
    grid: Arc<SpatialGrid>,
    mass: Vec<f64>,
}

impl SpatialMeasure {
    pub fn new(grid: Arc<SpatialGrid>, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mass vector has {} entries, grid has {} cells",
                mass.len(),
                grid.len()
            )));
        }
        if mass.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
            return Err(invalid("masses must be finite and nonnegative"));
        }
        Ok(SpatialMeasure { grid, mass })
    }

    pub fn zeros(grid: Arc<SpatialGrid>) -> Self {
        let n = grid.len();
        SpatialMeasure {
            grid,
            mass: vec![0.0; n],
        }
    }

    /// Integrates `density` over each cell with a `sub x sub` midpoint rule
    /// (in area-uniform coordinates for polar cells).
    pub fn from_density<F>(grid: Arc<SpatialGrid>, density: F, sub: usize) -> Self
    where
        F: Fn(Point) -> f64,
    {
        let sub = sub.max(1);
        let mut mass = vec![0.0; grid.len()];
        match *grid.layout() {
            GridLayout::Triadic { spacing, .. } => {
                let h = spacing / sub as f64;
                for (i, c) in grid.centers().iter().enumerate() {
                    let mut acc = 0.0;
                    for a in 0..sub {
                        for b in 0..sub {
                            let p = Point::new(
                                c.x - 0.5 * spacing + (a as f64 + 0.5) * h,
                                c.y - 0.5 * spacing + (b as f64 + 0.5) * h,
                            );
                            acc += density(p);
                        }
                    }
                    mass[i] = acc * h * h;
                }
            }
            GridLayout::Polar {
                radius,
                shells,
                sectors,
            } => {
                for s in 0..shells {
                    let a = radius * s as f64 / shells as f64;
                    let b = radius * (s + 1) as f64 / shells as f64;
                    for k in 0..sectors {
                        let idx = s * sectors + k;
                        let t0 = 2.0 * PI * k as f64 / sectors as f64;
                        let dt = 2.0 * PI / sectors as f64;
                        let mut acc = 0.0;
                        for u in 0..sub {
                            let r2 = a * a + (b * b - a * a) * (u as f64 + 0.5) / sub as f64;
                            for v in 0..sub {
                                let th = t0 + dt * (v as f64 + 0.5) / sub as f64;
                                acc += density(Point::from_polar(r2.sqrt(), th));
                            }
                        }
                        mass[idx] = acc / (sub * sub) as f64 * grid.areas()[idx];
                    }
                }
            }
            GridLayout::Custom => {
                for (i, c) in grid.centers().iter().enumerate() {
                    mass[i] = density(*c) * grid.areas()[i];
                }
            }
        }
        SpatialMeasure { grid, mass }
    }

    pub fn grid(&self) -> &Arc<SpatialGrid> {
        &self.grid
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_mut(&mut self) -> &mut [f64] {
        &mut self.mass
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.mass[idx]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        SpatialMeasure {
            grid: self.grid.clone(),
            mass: self.mass.iter().map(|m| m * a).collect(),
        }
    }

    pub fn same_grid(&self, other: &SpatialMeasure) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Cellwise `self <= other`.
    pub fn le(&self, other: &SpatialMeasure) -> bool {
        self.mass.iter().zip(&other.mass).all(|(a, b)| a <= b)
    }

    /// Largest cell mass (`kappa` for a discretized intensity).
    pub fn max_cell_mass(&self) -> f64 {
        self.mass.iter().copied().fold(0.0, f64::max)
    }
}

impl Population for SpatialMeasure {
    fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.grid
            .centers()
            .iter()
            .zip(&self.mass)
            .filter(|(_, m)| **m > 0.0)
            .map(|(c, m)| Atom::new(*c, *m))
    }

    fn total_mass(&self) -> f64 {
        self.total()
    }
}
