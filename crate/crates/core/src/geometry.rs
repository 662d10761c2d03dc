use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::{invalid, Result};

/// A location in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Point::new(radius * c, radius * s)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    #[inline]
    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Lexicographic comparison, `x` first.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then_with(|| self.y.total_cmp(&other.y))
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// The square window `[-r, r]^2` around the base station at the origin.
///
/// Only the planar case is modelled; `dim` is kept so configuration files
/// can state it explicitly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub r: f64,
    pub dim: usize,
}

impl Window {
    pub fn new(r: f64) -> Result<Self> {
        Self::with_dim(r, 2)
    }

    pub fn with_dim(r: f64, dim: usize) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid(format!("window half-width must be positive, got {r}")));
        }
        if dim != 2 {
            return Err(invalid(format!("only planar windows are supported, got d={dim}")));
        }
        Ok(Window { r, dim })
    }

    /// Whether `r` is an integer `>= 1`, as required for triadic grids.
    pub fn is_triadic_compatible(&self) -> bool {
        self.r >= 1.0 && self.r.fract() == 0.0
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x.abs() <= self.r && p.y.abs() <= self.r
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.r * (self.dim as f64).sqrt()
    }

    pub fn origin(&self) -> Point {
        Point::ORIGIN
    }

    pub fn area(&self) -> f64 {
        (2.0 * self.r).powi(self.dim as i32)
    }
}
