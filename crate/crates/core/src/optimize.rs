//! Numerical minimization of `h(nu|mu)` over measures whose frustrated mass
//! exceeds `b` on every constrained channel.
//!
//! Two phases:
//!
//! 1. Multi-start penalty descent. The indicators are smoothed with a
//!    sigmoid in `log QoS` whose temperature is annealed while the penalty
//!    weight grows; the entropy gradient is analytic and the penalty
//!    gradient is taken by central finite differences.
//! 2. Active-set polish. The combinatorial state of a candidate (which users
//!    are frustrated, which relays are empty, which hop of each relay route
//!    fails) is frozen. Every remaining requirement is then a linear
//!    inequality in the masses: a direct link `D(a, b) < c` is
//!    `I(b) > l(|a - b|) / g^{-1}(c)`. The frozen problem is convex and is
//!    solved through its dual, `x = mu exp(A^T lambda)`. A greedy search
//!    over neighbouring states (and exhaustive enumeration when the state
//!    space is small) follows.
//!
//! Every returned measure is re-checked with the exact frustration map.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::discretization::{DiscretePath, PathGrid, PathMeasure};
use crate::entropy::{h_cell, rel_entropy_paths};
use crate::error::{Error, Result};
use crate::frustration::{frustrated_paths, ChannelSpec, FrustrationSpec};
use crate::geometry::Point;
use crate::measure::SpatialMeasure;
use crate::model::{Channel, Model};
use crate::pathloss::QosMap;

#[derive(Clone, Debug)]
pub struct MinimizeOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Iteration cap per annealing stage.
    pub max_iter: usize,
    /// Feasibility margin; default `1e-6 max(1, b)` per channel.
    pub eps_feas: Option<f64>,
    pub polish: bool,
    /// The polish is skipped for states with more linear constraints.
    pub max_polish_rows: usize,
    /// Largest state space that is enumerated exhaustively.
    pub max_enumeration: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            restarts: 16,
            seed: 0,
            max_iter: 200,
            eps_feas: None,
            polish: true,
            max_polish_rows: 400,
            max_enumeration: 5000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizerResult<M> {
    #[serde(skip)]
    pub measure: M,
    pub entropy: f64,
    /// `max_i (b_i + eps_feas - M_i)^+` over constrained channels.
    pub constraint_residual: f64,
    pub eps_feas: f64,
    /// Frustrated mass per channel (up, up-dir, do, do-dir).
    pub frustrated_mass: [f64; 4],
    pub restarts_used: usize,
    pub converged: bool,
}

/// Static version of [`minimize_rate`].
pub fn minimize_rate_spatial(
    model: &Model,
    mu: &SpatialMeasure,
    spec: &FrustrationSpec,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult<SpatialMeasure>> {
    let grid = Arc::new(PathGrid::static_over(mu.grid().clone()));
    let paths = PathMeasure::from_spatial(grid, mu)?;
    let r = minimize_rate(model, &paths, spec, opts)?;
    Ok(MinimizerResult {
        measure: r.measure.time_slice_index(0),
        entropy: r.entropy,
        constraint_residual: r.constraint_residual,
        eps_feas: r.eps_feas,
        frustrated_mass: r.frustrated_mass,
        restarts_used: r.restarts_used,
        converged: r.converged,
    })
}

/// Minimize `h(nu|mu)` subject to `nu[tau_i](L) >= b_i + eps_feas` on every
/// constrained channel. `nu` is supported on `supp(mu)`.
pub fn minimize_rate(
    model: &Model,
    mu: &PathMeasure,
    spec: &FrustrationSpec,
    opts: &MinimizeOptions,
) -> Result<MinimizerResult<PathMeasure>> {
    let horizon = (!mu.grid().time().is_static()).then(|| mu.grid().time().horizon());
    spec.validate(model, horizon)?;
    let active = spec.active();
    let eps_of = |b: f64| opts.eps_feas.unwrap_or(1e-6 * b.max(1.0));
    let eps_feas = active.iter().map(|(_, s)| eps_of(s.b)).fold(0.0, f64::max);

    // Vacuous or already satisfied: mu itself is optimal.
    let at_mu = frustrated_paths(model, spec, mu).totals();
    if active.iter().all(|(ch, s)| at_mu[ch.index()] > s.b) {
        return Ok(MinimizerResult {
            measure: mu.clone(),
            entropy: 0.0,
            constraint_residual: residual(&at_mu, &active, &eps_of),
            eps_feas,
            frustrated_mass: at_mu,
            restarts_used: 0,
            converged: true,
        });
    }
    if mu.is_empty() {
        return Err(Error::Infeasible("the a-priori measure is zero".into()));
    }

    let prob = Problem::new(model, mu, spec, &eps_of);
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        if best.as_ref().is_none_or(|b| c.entropy < b.entropy) {
            *best = Some(c);
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = opts.restarts.max(1);
    let mut starts = Vec::with_capacity(restarts);
    for k in 0..restarts {
        let mut y: Vec<f64> = vec![0.0; prob.n];
        let mut frozen = vec![false; prob.n];
        if k > 0 {
            for v in y.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            if prob.relayed && prob.n > 1 {
                for f in frozen.iter_mut() {
                    *f = rng.random::<f64>() < 0.25;
                }
                if frozen.iter().all(|f| *f) {
                    frozen[0] = false;
                }
            }
        }
        starts.push((y, frozen));
    }

    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for (y, frozen) in starts {
        let x = prob.descend(y, &frozen, opts.max_iter);
        if let Some(c) = prob.candidate(&x) {
            consider(c, &mut best);
        }
        seeds.push(x);
    }

    if opts.polish {
        let polisher = Polisher::new(&prob, opts.max_polish_rows);
        if let Some(space) = prob.enumeration_size() {
            if space <= opts.max_enumeration {
                for state in prob.enumerate_states() {
                    if let Some(c) = polisher.solve(&state) {
                        consider(c, &mut best);
                    }
                }
            }
        }
        let mut ranked: Option<Candidate> = None;
        for state in prob.ranked_states() {
            if let Some(c) = polisher.solve(&state) {
                consider(c, &mut ranked);
            }
        }
        if let Some(r) = ranked {
            if let Some(state) = prob.state_of(&r.x) {
                if let Some(c) = polisher.greedy(state) {
                    consider(c, &mut best);
                }
            }
            consider(r, &mut best);
        }
        for x in &seeds {
            if let Some(state) = prob.state_of(x) {
                if let Some(c) = polisher.greedy(state) {
                    consider(c, &mut best);
                }
            }
        }
        if let Some(b) = best.clone() {
            if let Some(state) = prob.state_of(&b.x) {
                if let Some(c) = polisher.greedy(state) {
                    consider(c, &mut best);
                }
            }
        }
    }

    let Some(best) = best else {
        return Err(Error::Infeasible(format!(
            "no restart reached the frustration constraint ({} restarts)",
            restarts
        )));
    };
    let measure = prob.to_measure(&best.x);
    let masses = frustrated_paths(model, spec, &measure).totals();
    let res = residual(&masses, &active, &eps_of);
    let entropy = rel_entropy_paths(&measure, mu)?;
    Ok(MinimizerResult {
        measure,
        entropy,
        constraint_residual: res,
        eps_feas,
        frustrated_mass: masses,
        restarts_used: restarts,
        converged: res <= 1e-9 * eps_feas.max(1.0) && best.converged,
    })
}

fn residual(masses: &[f64; 4], active: &[(Channel, ChannelSpec)], eps_of: &dyn Fn(f64) -> f64) -> f64 {
    active
        .iter()
        .map(|(ch, s)| (s.b + eps_of(s.b) - masses[ch.index()]).max(0.0))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
struct Candidate {
    x: Vec<f64>,
    entropy: f64,
    converged: bool,
}

/// Channel data with its threshold on the SIR scale.
#[derive(Clone, Copy, Debug)]
struct Active {
    ch: Channel,
    spec: ChannelSpec,
    /// `g^{-1}(c)`.
    sir_c: f64,
    /// Required frustrated mass `b + eps_feas`.
    need: f64,
}

/// One instant of the support: the occupied cells and their geometry.
#[derive(Clone, Debug)]
struct Frame {
    pos: Vec<Point>,
    /// `l(|cell - o|)`.
    l_o: Vec<f64>,
    /// `l(|cell_a - cell_b|)`, row-major.
    l: Vec<f64>,
    /// Base-station contribution to the interference at each cell.
    bs: Vec<f64>,
}

impl Frame {
    fn k(&self) -> usize {
        self.pos.len()
    }
}

/// QoS of every occupied cell of one frame.
#[derive(Clone, Debug, Default)]
struct FrameQos {
    q: [Vec<f64>; 4],
    mass: Vec<f64>,
    i_cell: Vec<f64>,
}

struct Problem {
    g: QosMap,
    c_plus: f64,
    mu: Vec<f64>,
    paths: Vec<DiscretePath>,
    grid: Arc<PathGrid>,
    n: usize,
    frames: Vec<Frame>,
    slot: Vec<Vec<usize>>,
    step: f64,
    active: Vec<Active>,
    relayed: bool,
    /// Whether any active channel looks at the interference at users.
    need_cells: bool,
    bs_origin: f64,
}

impl Problem {
    fn new(model: &Model, mu: &PathMeasure, spec: &FrustrationSpec, eps_of: &dyn Fn(f64) -> f64) -> Self {
        let scoring = spec.scoring_model(model);
        let g = *scoring.qos();
        let paths: Vec<DiscretePath> = mu.iter().map(|(u, _)| u.clone()).collect();
        let masses: Vec<f64> = mu.iter().map(|(_, m)| m).collect();
        let time = mu.grid().time();
        let spatial = mu.grid().spatial().clone();
        let bs_mass = model.base_station_mass();
        let ell = model.path_loss();
        let mut frames = Vec::new();
        let mut slot = vec![Vec::new(); paths.len()];
        for t in 0..time.len() {
            let cells: BTreeSet<usize> = paths.iter().map(|u| u.cell(t)).collect();
            let cells: Vec<usize> = cells.into_iter().collect();
            let index: BTreeMap<usize, usize> = cells.iter().enumerate().map(|(k, c)| (*c, k)).collect();
            for (u, s) in paths.iter().zip(slot.iter_mut()) {
                s.push(index[&u.cell(t)]);
            }
            let pos: Vec<Point> = cells.iter().map(|c| spatial.center(*c)).collect();
            let k = pos.len();
            let mut l = vec![0.0; k * k];
            for a in 0..k {
                for b in 0..k {
                    l[a * k + b] = model.loss(pos[a], pos[b]);
                }
            }
            frames.push(Frame {
                l_o: pos.iter().map(|p| ell.eval_sq(p.norm_sq())).collect(),
                bs: pos.iter().map(|p| bs_mass * ell.eval_sq(p.norm_sq())).collect(),
                pos,
                l,
            });
        }
        let active: Vec<Active> = spec
            .active()
            .into_iter()
            .map(|(ch, s)| Active {
                ch,
                spec: s,
                sir_c: g.inverse(s.c),
                need: s.b + eps_of(s.b),
            })
            .collect();
        let relayed = active.iter().any(|a| a.ch.is_relayed());
        let need_cells = active.iter().any(|a| a.ch != Channel::UpDir);
        Problem {
            g,
            c_plus: g.c_plus(),
            n: paths.len(),
            mu: masses,
            paths,
            grid: mu.grid().clone(),
            frames,
            slot,
            step: time.step(),
            active,
            relayed,
            need_cells,
            bs_origin: bs_mass * ell.eval_sq(0.0),
        }
    }

    fn to_measure(&self, x: &[f64]) -> PathMeasure {
        let mut out = PathMeasure::new(self.grid.clone());
        for (u, &m) in self.paths.iter().zip(x) {
            if m > 0.0 {
                out.set(u.clone(), m).expect("support path");
            }
        }
        out
    }

    fn entropy(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.mu).map(|(a, b)| h_cell(*a, *b)).sum()
    }

    fn frame_qos(&self, t: usize, x: &[f64]) -> FrameQos {
        let f = &self.frames[t];
        let k = f.k();
        let mut mass = vec![0.0; k];
        for (u, &m) in x.iter().enumerate() {
            mass[self.slot[u][t]] += m;
        }
        let empty = mass.iter().all(|m| *m <= 0.0);
        if empty {
            return FrameQos {
                q: std::array::from_fn(|_| vec![self.c_plus; k]),
                mass,
                i_cell: vec![0.0; k],
            };
        }
        let g = &self.g;
        let mut i_o = 0.0;
        for c in 0..k {
            if mass[c] > 0.0 {
                i_o += mass[c] * f.l_o[c];
            }
        }
        i_o += self.bs_origin;
        let mut i_cell = vec![f64::INFINITY; k];
        for (b, ib) in i_cell.iter_mut().enumerate().filter(|_| self.need_cells) {
            let mut s = 0.0;
            for a in 0..k {
                if mass[a] > 0.0 {
                    s += mass[a] * f.l[a * k + b];
                }
            }
            *ib = s + f.bs[b];
        }
        let up_dir: Vec<f64> = (0..k).map(|c| g.eval(f.l_o[c] / i_o)).collect();
        let do_dir: Vec<f64> = (0..k).map(|c| g.eval(f.l_o[c] / i_cell[c])).collect();
        let mut up = up_dir.clone();
        let mut down = do_dir.clone();
        if self.relayed {
            for c in 0..k {
                for j in 0..k {
                    if mass[j] <= 0.0 {
                        continue;
                    }
                    if up_dir[j] > up[c] {
                        let first = g.eval(f.l[c * k + j] / i_cell[j]);
                        up[c] = up[c].max(first.min(up_dir[j]));
                    }
                    if do_dir[j] > down[c] {
                        let second = g.eval(f.l[j * k + c] / i_cell[c]);
                        down[c] = down[c].max(do_dir[j].min(second));
                    }
                }
            }
        }
        FrameQos {
            q: [up, up_dir, down, do_dir],
            mass,
            i_cell,
        }
    }

    fn all_qos(&self, x: &[f64]) -> Vec<FrameQos> {
        (0..self.frames.len()).map(|t| self.frame_qos(t, x)).collect()
    }

    /// Exact frustration flags per active channel and user.
    fn flags(&self, fq: &[FrameQos]) -> Vec<Vec<bool>> {
        self.active
            .iter()
            .map(|a| {
                (0..self.n)
                    .map(|u| {
                        let bad = (0..fq.len())
                            .filter(|&t| fq[t].q[a.ch.index()][self.slot[u][t]] < a.spec.c)
                            .count();
                        bad as f64 * self.step > a.spec.a
                    })
                    .collect()
            })
            .collect()
    }

    fn exact_masses(&self, x: &[f64]) -> Vec<f64> {
        let fq = self.all_qos(x);
        self.flags(&fq)
            .iter()
            .map(|f| f.iter().zip(x).filter(|(b, _)| **b).map(|(_, m)| *m).sum())
            .collect()
    }

    fn feasible(&self, x: &[f64]) -> bool {
        self.exact_masses(x)
            .iter()
            .zip(&self.active)
            .all(|(m, a)| *m >= a.need * (1.0 - 1e-12) - 1e-15)
    }

    fn candidate(&self, x: &[f64]) -> Option<Candidate> {
        self.feasible(x).then(|| Candidate {
            x: x.to_vec(),
            entropy: self.entropy(x),
            converged: false,
        })
    }

    /// Smoothed frustrated masses at temperature `s`.
    fn smooth_masses(&self, x: &[f64], s: f64) -> Vec<f64> {
        let fq = self.all_qos(x);
        let single = fq.len() == 1;
        self.active
            .iter()
            .map(|a| {
                let lc = a.spec.c.ln();
                let mut total = 0.0;
                for u in 0..self.n {
                    if x[u] <= 0.0 {
                        continue;
                    }
                    let soft = |t: usize| {
                        let q = fq[t].q[a.ch.index()][self.slot[u][t]];
                        if q <= 0.0 {
                            1.0
                        } else {
                            sigmoid((lc - q.ln()) / s)
                        }
                    };
                    let tau = if single {
                        soft(0)
                    } else {
                        let d: f64 = (0..fq.len()).map(soft).sum::<f64>() * self.step;
                        sigmoid((d - a.spec.a - 0.5 * self.step) / (s * self.step))
                    };
                    total += x[u] * tau;
                }
                total
            })
            .collect()
    }

    fn penalty(&self, x: &[f64], s: f64, p: f64) -> f64 {
        self.smooth_masses(x, s)
            .iter()
            .zip(&self.active)
            .map(|(m, a)| {
                let v = (a.need - m).max(0.0);
                p * v * v
            })
            .sum()
    }

    /// Penalty descent in `y = log(x / mu)` with annealed smoothing.
    fn descend(&self, mut y: Vec<f64>, frozen: &[bool], max_iter: usize) -> Vec<f64> {
        let to_x = |y: &[f64]| -> Vec<f64> {
            y.iter()
                .zip(&self.mu)
                .zip(frozen)
                .map(|((v, m), f)| if *f { 0.0 } else { m * v.clamp(-50.0, 50.0).exp() })
                .collect()
        };
        let objective = |y: &[f64], s: f64, p: f64| {
            let x = to_x(y);
            self.entropy(&x) + self.penalty(&x, s, p)
        };
        let mut s = 0.3;
        let mut p = 10.0;
        for _stage in 0..6 {
            let mut history: Vec<f64> = Vec::new();
            let mut f = objective(&y, s, p);
            for _ in 0..max_iter {
                let x = to_x(&y);
                // d h / d y = x y; penalty by central differences.
                let mut grad: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
                for u in 0..self.n {
                    if frozen[u] {
                        grad[u] = 0.0;
                        continue;
                    }
                    let hstep = 1e-5;
                    let mut yp = y.clone();
                    yp[u] += hstep;
                    let mut ym = y.clone();
                    ym[u] -= hstep;
                    grad[u] += (self.penalty(&to_x(&yp), s, p) - self.penalty(&to_x(&ym), s, p)) / (2.0 * hstep);
                }
                let gn: f64 = grad.iter().map(|g| g * g).sum();
                if gn == 0.0 {
                    break;
                }
                let mut alpha = 1.0 / gn.sqrt().max(1.0);
                let mut moved = false;
                for _ in 0..40 {
                    let trial: Vec<f64> = y.iter().zip(&grad).map(|(v, g)| v - alpha * g).collect();
                    let ft = objective(&trial, s, p);
                    if ft <= f - 1e-4 * alpha * gn {
                        y = trial;
                        f = ft;
                        moved = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                history.push(f);
                if !moved {
                    break;
                }
                if history.len() > 50 {
                    let old = history[history.len() - 51];
                    if (old - f).abs() <= 1e-8 * f.abs().max(1e-12) {
                        break;
                    }
                }
            }
            s *= 0.4;
            p *= 10.0;
        }
        to_x(&y)
    }

    /// Number of states visited by [`Problem::enumerate_states`], when
    /// enumeration applies (static grid, one constrained channel).
    fn enumeration_size(&self) -> Option<usize> {
        if self.frames.len() != 1 || self.active.len() != 1 || self.n > 12 {
            return None;
        }
        let per = if self.relayed { 4usize } else { 3 };
        per.checked_pow(self.n as u32)
    }

    /// Every (frustrated set, zero set, relay blocking) combination of a
    /// static single-channel problem. Relay blocking is chosen per relay.
    fn enumerate_states(&self) -> Vec<State> {
        let per: usize = if self.relayed { 4 } else { 3 };
        let total = per.pow(self.n as u32);
        let mut out = Vec::new();
        for code in 0..total {
            let mut c = code;
            let mut member = vec![false; self.n];
            let mut zero = vec![false; self.n];
            let mut block_link = vec![false; self.n];
            for u in 0..self.n {
                match c % per {
                    0 => member[u] = true,
                    1 => zero[u] = true,
                    2 => {}
                    _ => block_link[u] = true,
                }
                c /= per;
            }
            if self.active[0].need > 0.0 && !member.iter().any(|m| *m) {
                continue;
            }
            let mut routes = BTreeMap::new();
            if self.relayed {
                let ch = self.active[0].ch;
                for u in (0..self.n).filter(|&u| member[u]) {
                    for j in (0..self.n).filter(|&j| !member[j] && !zero[j]) {
                        let cu = self.slot[u][0];
                        let cj = self.slot[j][0];
                        if cu == cj {
                            continue;
                        }
                        routes.insert((0, ch.index(), u, cj), if block_link[j] { Route::Link } else { Route::Hop });
                    }
                }
            }
            out.push(State {
                members: vec![member],
                bad: vec![vec![vec![0]; self.n]],
                zero,
                routes,
            });
        }
        out
    }

    /// States whose frustrated users are the `k` worst-served users under
    /// `mu`, for a spread of `k`. Each user's bad instants are its worst
    /// ones; relay routes fail on the relay's own link.
    fn ranked_states(&self) -> Vec<State> {
        let fq = self.all_qos(&self.mu);
        let zero = vec![false; self.n];
        let per_channel: Vec<(Vec<usize>, Vec<Vec<usize>>)> = self
            .active
            .iter()
            .map(|a| {
                let needed = ((a.spec.a / self.step).floor() as usize + 1).min(fq.len());
                let mut score = Vec::with_capacity(self.n);
                let mut worst = Vec::with_capacity(self.n);
                for u in 0..self.n {
                    let mut ts: Vec<(f64, usize)> =
                        (0..fq.len()).map(|t| (fq[t].q[a.ch.index()][self.slot[u][t]], t)).collect();
                    ts.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    score.push(ts[needed - 1].0);
                    let mut bad: Vec<usize> = ts[..needed].iter().map(|x| x.1).collect();
                    bad.sort_unstable();
                    worst.push(bad);
                }
                let mut order: Vec<usize> = (0..self.n).collect();
                order.sort_by(|x, y| score[*x].total_cmp(&score[*y]).then(x.cmp(y)));
                (order, worst)
            })
            .collect();
        let ks: Vec<usize> = if self.n <= 256 {
            (1..=self.n).collect()
        } else {
            let mut ks: Vec<usize> = (1..=64).map(|i| (i * self.n).div_ceil(64)).collect();
            ks.dedup();
            ks
        };
        let mut out = Vec::new();
        for k in ks {
            let mut members = Vec::new();
            let mut bad = Vec::new();
            for (order, worst) in &per_channel {
                let mut member = vec![false; self.n];
                let mut bad_a = vec![Vec::new(); self.n];
                for &u in &order[..k] {
                    member[u] = true;
                    bad_a[u] = worst[u].clone();
                }
                members.push(member);
                bad.push(bad_a);
            }
            // screening: every relay route fails on the relay's own link
            let mut routes = BTreeMap::new();
            for (ai, a) in self.active.iter().enumerate().filter(|(_, a)| a.ch.is_relayed()) {
                for u in (0..self.n).filter(|&u| members[ai][u]) {
                    for &t in &bad[ai][u] {
                        for j in 0..self.frames[t].k() {
                            routes.insert((t, a.ch.index(), u, j), Route::Link);
                        }
                    }
                }
            }
            let screening = State {
                members: members.clone(),
                bad: bad.clone(),
                zero: zero.clone(),
                routes,
            };
            if self.relayed {
                out.push(self.isolation(&fq, members, bad));
            }
            out.push(screening);
        }
        out
    }

    /// Remove every user that serves a selected user as a working relay
    /// under `mu`; other routes keep the hop that already fails.
    fn isolation(&self, fq: &[FrameQos], members: Vec<Vec<bool>>, bad: Vec<Vec<Vec<usize>>>) -> State {
        let mut useful: BTreeSet<(usize, usize)> = BTreeSet::new();
        let mut failing = Vec::new();
        for (ai, a) in self.active.iter().enumerate().filter(|(_, a)| a.ch.is_relayed()) {
            let c = a.spec.c;
            for u in (0..self.n).filter(|&u| members[ai][u]) {
                for &t in &bad[ai][u] {
                    let f = &self.frames[t];
                    let q = &fq[t];
                    let k = f.k();
                    let cu = self.slot[u][t];
                    for j in (0..k).filter(|&j| j != cu) {
                        let (link, hop) = match a.ch {
                            Channel::Up => (q.q[Channel::UpDir.index()][j], self.g.eval(f.l[cu * k + j] / q.i_cell[j])),
                            _ => (q.q[Channel::DownDir.index()][j], self.g.eval(f.l[j * k + cu] / q.i_cell[cu])),
                        };
                        if link >= c && hop >= c {
                            useful.insert((t, j));
                        } else {
                            failing.push(((t, a.ch.index(), u, j), if link < c { Route::Link } else { Route::Hop }));
                        }
                    }
                }
            }
        }
        let zero: Vec<bool> = (0..self.n)
            .map(|v| {
                !members.iter().any(|m| m[v]) && (0..self.frames.len()).any(|t| useful.contains(&(t, self.slot[v][t])))
            })
            .collect();
        State {
            members,
            bad,
            zero,
            routes: failing.into_iter().collect(),
        }
    }

    /// The frozen state of a positive measure: its frustrated users, their
    /// bad instants, its zero entries and the failing hop of every relay
    /// route.
    fn state_of(&self, x: &[f64]) -> Option<State> {
        let fq = self.all_qos(x);
        let flags = self.flags(&fq);
        let zero: Vec<bool> = x.iter().map(|m| *m <= 0.0).collect();
        let mut members = Vec::new();
        let mut bad = Vec::new();
        let mut routes = BTreeMap::new();
        for (ai, a) in self.active.iter().enumerate() {
            let member: Vec<bool> = (0..self.n).map(|u| flags[ai][u] && !zero[u]).collect();
            let mut bad_a = vec![Vec::new(); self.n];
            for u in (0..self.n).filter(|&u| member[u]) {
                for (t, q) in fq.iter().enumerate() {
                    if q.q[a.ch.index()][self.slot[u][t]] < a.spec.c {
                        bad_a[u].push(t);
                    }
                }
                if a.ch.is_relayed() {
                    for &t in &bad_a[u] {
                        let q = &fq[t];
                        let cu = self.slot[u][t];
                        for j in 0..self.frames[t].k() {
                            if j == cu || q.mass[j] <= 0.0 {
                                continue;
                            }
                            let link_bad = match a.ch {
                                Channel::Up => q.q[Channel::UpDir.index()][j] < a.spec.c,
                                _ => q.q[Channel::DownDir.index()][j] < a.spec.c,
                            };
                            routes.insert((t, a.ch.index(), u, j), if link_bad { Route::Link } else { Route::Hop });
                        }
                    }
                }
            }
            members.push(member);
            bad.push(bad_a);
        }
        Some(State {
            members,
            bad,
            zero,
            routes,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Which hop of a relay route is kept below the threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Route {
    /// The relay's own link to (uplink) or from (downlink) the origin.
    Link,
    /// The hop between the user and the relay.
    Hop,
}

/// Frozen combinatorial state of a candidate.
#[derive(Clone, Debug, PartialEq)]
struct State {
    /// Per active channel: which users must stay frustrated.
    members: Vec<Vec<bool>>,
    /// Per active channel and user: instants that must stay bad.
    bad: Vec<Vec<Vec<usize>>>,
    /// Users (support paths) fixed at zero mass.
    zero: Vec<bool>,
    /// `(instant, channel, user, relay cell) -> failing hop`.
    routes: BTreeMap<(usize, usize, usize, usize), Route>,
}

/// Where an interference constraint is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Site {
    Origin,
    Cell(usize),
}

struct Polisher<'p> {
    prob: &'p Problem,
    max_rows: usize,
}

impl<'p> Polisher<'p> {
    fn new(prob: &'p Problem, max_rows: usize) -> Self {
        Polisher { prob, max_rows }
    }

    /// Linear constraints `A x >= d` over the free users.
    fn rows(&self, state: &State) -> Option<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
        let p = self.prob;
        let free: Vec<usize> = (0..p.n).filter(|u| !state.zero[*u]).collect();
        // Interference requirements: (instant, site) -> largest threshold.
        let mut need: BTreeMap<(usize, Site), f64> = BTreeMap::new();
        let mut bump = |t: usize, site: Site, thr: f64| {
            let e = need.entry((t, site)).or_insert(f64::NEG_INFINITY);
            *e = e.max(thr);
        };
        for (ai, a) in p.active.iter().enumerate() {
            if a.sir_c <= 0.0 {
                if state.members[ai].iter().any(|m| *m) {
                    return None;
                }
                continue;
            }
            for u in (0..p.n).filter(|&u| state.members[ai][u]) {
                if state.zero[u] {
                    return None;
                }
                for &t in &state.bad[ai][u] {
                    let f = &p.frames[t];
                    let k = f.k();
                    let cu = p.slot[u][t];
                    let (site, own) = match a.ch {
                        Channel::Up | Channel::UpDir => (Site::Origin, f.l_o[cu]),
                        _ => (Site::Cell(cu), f.l_o[cu]),
                    };
                    bump(t, site, own / a.sir_c);
                    if !a.ch.is_relayed() {
                        continue;
                    }
                    for j in 0..k {
                        if j == cu || !self.relay_alive(state, t, j) {
                            continue;
                        }
                        let route = state.routes.get(&(t, a.ch.index(), u, j)).copied().unwrap_or(Route::Link);
                        match (a.ch, route) {
                            (Channel::Up, Route::Link) => bump(t, Site::Origin, f.l_o[j] / a.sir_c),
                            (Channel::Up, Route::Hop) => bump(t, Site::Cell(j), f.l[cu * k + j] / a.sir_c),
                            (_, Route::Link) => bump(t, Site::Cell(j), f.l_o[j] / a.sir_c),
                            (_, Route::Hop) => bump(t, Site::Cell(cu), f.l[j * k + cu] / a.sir_c),
                        }
                    }
                }
            }
        }
        let mut a_rows = Vec::new();
        let mut d = Vec::new();
        for ((t, site), thr) in need {
            let f = &p.frames[t];
            let k = f.k();
            let (coef, konst): (Vec<f64>, f64) = match site {
                Site::Origin => (free.iter().map(|&u| f.l_o[p.slot[u][t]]).collect(), p.bs_origin),
                Site::Cell(c) => (free.iter().map(|&u| f.l[p.slot[u][t] * k + c]).collect(), f.bs[c]),
            };
            let rhs = thr * (1.0 + 1e-7) - konst;
            push_row(&mut a_rows, &mut d, coef, rhs)?;
        }
        for (ai, a) in p.active.iter().enumerate() {
            let coef: Vec<f64> = free.iter().map(|&u| if state.members[ai][u] { 1.0 } else { 0.0 }).collect();
            push_row(&mut a_rows, &mut d, coef, a.need * (1.0 + 1e-9))?;
        }
        if a_rows.len() > self.max_rows {
            return None;
        }
        Some((free, a_rows, d))
    }

    /// A relay cell keeps positive mass unless all paths through it are zero.
    fn relay_alive(&self, state: &State, t: usize, cell: usize) -> bool {
        (0..self.prob.n).any(|v| !state.zero[v] && self.prob.slot[v][t] == cell)
    }

    fn solve(&self, state: &State) -> Option<Candidate> {
        let p = self.prob;
        let (free, rows, d) = self.rows(state)?;
        let mu: Vec<f64> = free.iter().map(|&u| p.mu[u]).collect();
        let (xf, ok) = dual_solve(&rows, &d, &mu)?;
        let mut x = vec![0.0; p.n];
        for (k, &u) in free.iter().enumerate() {
            x[u] = xf[k];
        }
        let mut c = p.candidate(&x)?;
        c.converged = ok;
        Some(c)
    }

    /// Close the state under the measure it produces, then try single
    /// changes until none lowers the entropy.
    fn greedy(&self, start: State) -> Option<Candidate> {
        let p = self.prob;
        let mut best = self.solve(&start)?;
        let mut state = start;
        let mut budget = 400usize;
        loop {
            let mut improved = false;
            // Closure: adopt the state of the solution itself.
            if let Some(closed) = p.state_of(&best.x) {
                if closed != state {
                    if let Some(c) = self.solve(&closed) {
                        if c.entropy < best.entropy * (1.0 - 1e-12) - 1e-15 {
                            best = c;
                            state = closed;
                            improved = true;
                        }
                    }
                }
            }
            for next in self.neighbours(&state) {
                if budget == 0 {
                    return Some(best);
                }
                budget -= 1;
                if let Some(c) = self.solve(&next) {
                    if c.entropy < best.entropy * (1.0 - 1e-12) - 1e-15 {
                        best = c;
                        state = next;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                return Some(best);
            }
        }
    }

    fn neighbours(&self, state: &State) -> Vec<State> {
        let p = self.prob;
        let mut out = Vec::new();
        for ai in 0..p.active.len() {
            let count = state.members[ai].iter().filter(|m| **m).count();
            for u in 0..p.n {
                let mut s = state.clone();
                if state.members[ai][u] {
                    if count <= 1 {
                        continue;
                    }
                    s.members[ai][u] = false;
                    s.bad[ai][u].clear();
                } else if !state.zero[u] {
                    s.members[ai][u] = true;
                    let needed = (p.active[ai].spec.a / p.step).floor() as usize + 1;
                    s.bad[ai][u] = (0..needed.min(p.frames.len())).collect();
                    for &t in &s.bad[ai][u] {
                        for j in 0..p.frames[t].k() {
                            s.routes.entry((t, p.active[ai].ch.index(), u, j)).or_insert(Route::Link);
                        }
                    }
                } else {
                    continue;
                }
                out.push(s);
            }
        }
        for u in 0..p.n {
            if state.members.iter().any(|m| m[u]) {
                continue;
            }
            let mut s = state.clone();
            s.zero[u] = !s.zero[u];
            out.push(s);
        }
        for (key, route) in &state.routes {
            let mut s = state.clone();
            s.routes.insert(*key, if *route == Route::Link { Route::Hop } else { Route::Link });
            out.push(s);
        }
        out
    }
}

fn push_row(rows: &mut Vec<Vec<f64>>, d: &mut Vec<f64>, coef: Vec<f64>, rhs: f64) -> Option<()> {
    let scale = coef.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        // 0 >= rhs.
        return if rhs <= 0.0 { Some(()) } else { None };
    }
    if !rhs.is_finite() {
        return None;
    }
    rows.push(coef.iter().map(|c| c / scale).collect());
    d.push(rhs / scale);
    Some(())
}

/// Minimize `sum h(x_u | mu_u)` subject to `A x >= d` by projected Newton
/// ascent on the dual. Returns the primal point and whether the KKT
/// tolerance was met; `None` when the dual diverges (infeasible rows).
fn dual_solve(rows: &[Vec<f64>], d: &[f64], mu: &[f64]) -> Option<(Vec<f64>, bool)> {
    let m = rows.len();
    let n = mu.len();
    if m == 0 {
        return Some((mu.to_vec(), true));
    }
    let a = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    let dv = DVector::from_column_slice(d);
    let muv = DVector::from_column_slice(mu);
    let primal = |lam: &DVector<f64>| -> Option<DVector<f64>> {
        let z = a.tr_mul(lam);
        if z.iter().any(|v| *v > 700.0) {
            return None;
        }
        Some(muv.zip_map(&z, |m, z| m * z.exp()))
    };
    let dual = |lam: &DVector<f64>, x: &DVector<f64>| (&muv - x).sum() + lam.dot(&dv);
    let mut lam = DVector::zeros(m);
    let mut x = primal(&lam)?;
    let mut q = dual(&lam, &x);
    for _ in 0..500 {
        let grad = &dv - &a * &x;
        let kkt = (0..m)
            .map(|i| if lam[i] > 0.0 { grad[i].abs() } else { grad[i].max(0.0) })
            .fold(0.0, f64::max);
        let scale = 1.0 + dv.amax();
        if kkt <= 1e-11 * scale {
            return Some((x.iter().copied().collect(), true));
        }
        let free: Vec<usize> = (0..m).filter(|&i| lam[i] > 1e-14 || grad[i] > 0.0).collect();
        if free.is_empty() {
            return Some((x.iter().copied().collect(), true));
        }
        let af = DMatrix::from_fn(free.len(), n, |i, j| a[(free[i], j)]);
        let weighted = DMatrix::from_fn(free.len(), n, |i, j| af[(i, j)] * x[j]);
        let mut h = &weighted * af.transpose();
        let ridge = 1e-13 * h.diagonal().amax().max(1e-300);
        for i in 0..free.len() {
            h[(i, i)] += ridge;
        }
        let gf = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&gf),
            None => {
                for i in 0..free.len() {
                    h[(i, i)] += 1e-8 * h.diagonal().amax().max(1e-300);
                }
                h.cholesky()?.solve(&gf)
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = lam.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] = (lam[i] + alpha * step[k]).max(0.0);
            }
            if let Some(xt) = primal(&trial) {
                let qt = dual(&trial, &xt);
                let gain = grad.dot(&(&trial - &lam));
                if qt >= q + 1e-4 * gain && qt >= q {
                    lam = trial;
                    x = xt;
                    q = qt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
        if lam.amax() > 1e12 {
            return None;
        }
    }
    Some((x.iter().copied().collect(), false))
}
