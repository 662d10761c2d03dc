//! Interference, SIR and the direct, relay-link and relayed QoS values.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Point, Window};
use crate::measure::{Atom, Population};
use crate::pathloss::{LossBounds, PathLoss, QosMap};

/// The four communication channels, in the order `(up, up-dir, do, do-dir)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    Up,
    UpDir,
    Down,
    DownDir,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Up, Channel::UpDir, Channel::Down, Channel::DownDir];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_relayed(self) -> bool {
        matches!(self, Channel::Up | Channel::Down)
    }

    pub fn is_uplink(self) -> bool {
        matches!(self, Channel::Up | Channel::UpDir)
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Up => "up",
            Channel::UpDir => "up-dir",
            Channel::Down => "do",
            Channel::DownDir => "do-dir",
        }
    }
}

/// Window, path loss and QoS map, plus the optional base-station
/// interferer.
#[derive(Clone, Debug)]
pub struct Model {
    window: Window,
    path_loss: PathLoss,
    qos: QosMap,
    bounds: LossBounds,
    base_station_mass: f64,
}

impl Model {
    pub fn new(window: Window, path_loss: PathLoss, qos: QosMap) -> Result<Self> {
        qos.validate()?;
        let bounds = path_loss.bounds(&window);
        if !(bounds.ell_min > 0.0) {
            return Err(invalid("path loss must stay positive on the window"));
        }
        Ok(Model {
            window,
            path_loss,
            qos,
            bounds,
            base_station_mass: 0.0,
        })
    }

    /// Adds an atom of the given (normalized) mass at the origin to every
    /// interference sum. It is not a relay candidate and does not count
    /// towards the total mass that decides the empty-measure convention.
    pub fn with_base_station(mut self, mass: f64) -> Self {
        self.base_station_mass = mass.max(0.0);
        self
    }

    /// Same model with thresholds applied to SIR itself.
    pub fn raw_sir(&self) -> Model {
        Model {
            qos: QosMap::Identity,
            ..self.clone()
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn path_loss(&self) -> &PathLoss {
        &self.path_loss
    }

    pub fn qos(&self) -> &QosMap {
        &self.qos
    }

    pub fn bounds(&self) -> &LossBounds {
        &self.bounds
    }

    pub fn base_station_mass(&self) -> f64 {
        self.base_station_mass
    }

    pub fn c_plus(&self) -> f64 {
        self.qos.c_plus()
    }

    /// Total mass below which every direct link is at `c_plus`:
    /// `min{1, l_min / (rho_plus l_max)}`.
    pub fn beta_o(&self) -> f64 {
        (self.bounds.ell_min / (self.qos.rho_plus() * self.bounds.ell_max)).min(1.0)
    }

    #[inline]
    pub fn loss(&self, a: Point, b: Point) -> f64 {
        self.path_loss.eval_sq(a.dist_sq(b))
    }

    /// `sum_i m_i l(|x_i - eta|)`, the transmitter's own term included.
    pub fn interference<P: Population + ?Sized>(&self, eta: Point, nu: &P) -> f64 {
        let users: f64 = nu.atoms().map(|a| a.mass * self.loss(a.pos, eta)).sum();
        users + self.base_station_mass * self.path_loss.eval_sq(eta.norm_sq())
    }

    /// `l(|xi - eta|) / nu(l(|. - eta|))`; `+inf` when `nu` has no mass.
    pub fn sir<P: Population + ?Sized>(&self, xi: Point, eta: Point, nu: &P) -> f64 {
        if nu.total_mass() <= 0.0 {
            return f64::INFINITY;
        }
        self.loss(xi, eta) / self.interference(eta, nu)
    }

    /// `D = g(SIR)`, equal to `c_plus` for the zero measure.
    pub fn qos_direct<P: Population + ?Sized>(&self, xi: Point, eta: Point, nu: &P) -> f64 {
        self.qos.eval(self.sir(xi, eta, nu))
    }

    /// `Gamma = min{D(xi, zeta), D(zeta, eta)}`.
    pub fn qos_relay_link<P: Population + ?Sized>(
        &self,
        xi: Point,
        zeta: Point,
        eta: Point,
        nu: &P,
    ) -> f64 {
        self.qos_direct(xi, zeta, nu).min(self.qos_direct(zeta, eta, nu))
    }

    /// Best of the direct uplink and every two-hop route through an atom of
    /// `nu` (the sender itself included).
    pub fn qos_relayed_uplink<P: Population + ?Sized>(&self, xi: Point, nu: &P) -> f64 {
        let atoms = nu.to_atoms();
        Snapshot::new(self, atoms, true).uplink_relayed_at(xi)
    }

    /// Mirror of [`Model::qos_relayed_uplink`] with hops `o -> relay -> xi`.
    pub fn qos_relayed_downlink<P: Population + ?Sized>(&self, xi: Point, nu: &P) -> f64 {
        let atoms = nu.to_atoms();
        Snapshot::new(self, atoms, true).downlink_relayed_at(xi)
    }

    /// Channel QoS of a location, with the destination (uplink) or source
    /// (downlink) at the origin.
    pub fn channel_qos<P: Population + ?Sized>(&self, channel: Channel, xi: Point, nu: &P) -> f64 {
        let atoms = nu.to_atoms();
        let snap = Snapshot::new(self, atoms, channel != Channel::UpDir);
        snap.qos_at(channel, xi)
    }
}

/// A population frozen at one instant with its interference levels
/// precomputed, so that per-user QoS costs `O(1)` (direct) or `O(N)`
/// (relayed).
#[derive(Clone, Debug)]
pub struct Snapshot<'m> {
    model: &'m Model,
    atoms: Vec<Atom>,
    empty: bool,
    i_origin: f64,
    i_atoms: Vec<f64>,
    up_dir: Vec<f64>,
    do_dir: Vec<f64>,
}

impl<'m> Snapshot<'m> {
    /// `atom_interference` requests interference at every atom, needed for
    /// downlink and relayed channels (`O(N^2)`).
    pub fn new(model: &'m Model, atoms: Vec<Atom>, atom_interference: bool) -> Self {
        let atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        let empty = atoms.is_empty();
        let i_origin = model.interference(Point::ORIGIN, atoms.as_slice());
        let g = model.qos();
        let up_dir = atoms
            .iter()
            .map(|a| {
                if empty {
                    g.c_plus()
                } else {
                    g.eval(model.path_loss().eval_sq(a.pos.norm_sq()) / i_origin)
                }
            })
            .collect();
        let (i_atoms, do_dir) = if atom_interference {
            let i_atoms: Vec<f64> = atoms
                .iter()
                .map(|a| model.interference(a.pos, atoms.as_slice()))
                .collect();
            let do_dir = atoms
                .iter()
                .zip(&i_atoms)
                .map(|(a, i)| g.eval(model.path_loss().eval_sq(a.pos.norm_sq()) / i))
                .collect();
            (i_atoms, do_dir)
        } else {
            (Vec::new(), Vec::new())
        };
        Snapshot {
            model,
            atoms,
            empty,
            i_origin,
            i_atoms,
            up_dir,
            do_dir,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn interference_at_origin(&self) -> f64 {
        self.i_origin
    }

    pub fn interference_at_atoms(&self) -> &[f64] {
        &self.i_atoms
    }

    fn c_plus(&self) -> f64 {
        self.model.c_plus()
    }

    fn g(&self, sir: f64) -> f64 {
        self.model.qos().eval(sir)
    }

    fn interference(&self, p: Point) -> f64 {
        self.model.interference(p, self.atoms.as_slice())
    }

    /// QoS of atom `k` on `channel`.
    pub fn qos(&self, channel: Channel, k: usize) -> f64 {
        if self.empty {
            return self.c_plus();
        }
        match channel {
            Channel::UpDir => self.up_dir[k],
            Channel::DownDir => self.do_dir[k],
            Channel::Up => self.uplink_relayed_inner(self.atoms[k].pos, self.up_dir[k]),
            Channel::Down => {
                self.downlink_relayed_inner(self.atoms[k].pos, self.do_dir[k], self.i_atoms[k])
            }
        }
    }

    /// QoS of an arbitrary location on `channel`.
    pub fn qos_at(&self, channel: Channel, p: Point) -> f64 {
        match channel {
            Channel::UpDir => self.uplink_direct_at(p),
            Channel::DownDir => self.downlink_direct_at(p),
            Channel::Up => self.uplink_relayed_at(p),
            Channel::Down => self.downlink_relayed_at(p),
        }
    }

    pub fn uplink_direct_at(&self, p: Point) -> f64 {
        if self.empty {
            return self.c_plus();
        }
        self.g(self.model.path_loss().eval_sq(p.norm_sq()) / self.i_origin)
    }

    pub fn downlink_direct_at(&self, p: Point) -> f64 {
        if self.empty {
            return self.c_plus();
        }
        self.g(self.model.path_loss().eval_sq(p.norm_sq()) / self.interference(p))
    }

    pub fn uplink_relayed_at(&self, p: Point) -> f64 {
        if self.empty {
            return self.c_plus();
        }
        let direct = self.uplink_direct_at(p);
        self.uplink_relayed_inner(p, direct)
    }

    pub fn downlink_relayed_at(&self, p: Point) -> f64 {
        if self.empty {
            return self.c_plus();
        }
        let ip = self.interference(p);
        let direct = self.g(self.model.path_loss().eval_sq(p.norm_sq()) / ip);
        self.downlink_relayed_inner(p, direct, ip)
    }

    fn uplink_relayed_inner(&self, p: Point, direct: f64) -> f64 {
        let loss = self.model.path_loss();
        let mut best = direct;
        for (j, a) in self.atoms.iter().enumerate() {
            let second = self.up_dir[j];
            if second <= best {
                continue;
            }
            let first = self.g(loss.eval_sq(p.dist_sq(a.pos)) / self.i_atoms[j]);
            best = best.max(first.min(second));
        }
        best
    }

    fn downlink_relayed_inner(&self, p: Point, direct: f64, ip: f64) -> f64 {
        let loss = self.model.path_loss();
        let mut best = direct;
        for (j, a) in self.atoms.iter().enumerate() {
            let first = self.do_dir[j];
            if first <= best {
                continue;
            }
            let second = self.g(loss.eval_sq(a.pos.dist_sq(p)) / ip);
            best = best.max(first.min(second));
        }
        best
    }
}
