//! Relay-augmented single-cell network model under the SIR paradigm.
//!
//! The crate covers four layers:
//!
//! * the model itself ([`model`], [`pathloss`], [`measure`]): interference,
//!   SIR, direct, relay-link and relayed QoS for point configurations and
//!   discrete measures;
//! * space-time discretization and mobility ([`discretization`],
//!   [`mobility`]);
//! * frustration functionals and rare-event Monte Carlo ([`frustration`],
//!   [`montecarlo`]);
//! * the entropy side: relative entropy, the constrained rate minimizer and
//!   the radial variational approximation ([`entropy`], [`optimize`],
//!   [`variational`]), plus post-processing ([`analysis`], [`io`]).

pub mod analysis;
pub mod discretization;
pub mod entropy;
pub mod error;
pub mod frustration;
pub mod geometry;
pub mod io;
pub mod measure;
pub mod mobility;
pub mod model;
pub mod montecarlo;
pub mod optimize;
pub mod pathloss;
pub mod quadrature;
pub mod variational;

pub use error::{Error, Result};
pub use geometry::{Point, Window};
pub use measure::{Atom, PointConfig, Population, SpatialGrid, SpatialMeasure};
pub use model::Model;
pub use pathloss::{PathLoss, QosMap};
