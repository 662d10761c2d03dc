//! Poisson sampling of users and naive Monte Carlo estimation of
//! frustration probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{invalid, Result};
use crate::frustration::{event_indicator, frustrated_points, Evolution, FrustrationSpec};
use crate::geometry::{Point, Window};
use crate::measure::PointConfig;
use crate::mobility::{waypoint_path, MobilityModel, Trajectory};
use crate::model::{Channel, Model};

/// Shape of the a-priori intensity `mu` (a density on the window).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Intensity {
    /// Lebesgue measure on the disk `B_radius(o)`.
    UniformDisk { radius: f64 },
    /// Lebesgue measure on the whole window.
    UniformCube,
    /// Rotation-invariant profile on `B_r(o)`: a dense core, a sparse strip
    /// around half the radius and a dense rim, zero elsewhere.
    RingStrip {
        core_radius: f64,
        core_density: f64,
        strip_inner: f64,
        strip_outer: f64,
        strip_density: f64,
        rim_inner: f64,
        rim_density: f64,
    },
    /// Density `densities[i]` on the annulus `radii[i-1] <= |x| < radii[i]`
    /// (with `radii[-1] = 0`).
    PiecewiseRadial { radii: Vec<f64>, densities: Vec<f64> },
}

/// Annuli `(inner, outer, density)` of a radial intensity.
type Annuli = Vec<(f64, f64, f64)>;

impl Intensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            Intensity::UniformDisk { radius } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("disk radius must be positive"));
                }
            }
            Intensity::UniformCube => {}
            Intensity::RingStrip {
                core_radius,
                strip_inner,
                strip_outer,
                rim_inner,
                ..
            } => {
                if !(0.0 < *core_radius && core_radius <= strip_inner && strip_inner < strip_outer && strip_outer <= rim_inner) {
                    return Err(invalid("ring-strip radii must satisfy 0 < core <= strip_inner < strip_outer <= rim_inner"));
                }
            }
            Intensity::PiecewiseRadial { radii, densities } => {
                if radii.is_empty() || radii.len() != densities.len() {
                    return Err(invalid("piecewise-radial needs equally many radii and densities"));
                }
                if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid("piecewise-radial radii must be positive and increasing"));
                }
            }
        }
        if let Some(a) = self.annuli_unchecked(f64::INFINITY) {
            if a.iter().any(|(_, _, d)| !(*d >= 0.0 && d.is_finite())) {
                return Err(invalid("densities must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Checks that the intensity lives inside the window.
    pub fn validate_in(&self, window: &Window) -> Result<()> {
        self.validate()?;
        if let Some(a) = self.annuli_unchecked(window.r) {
            let outer = a.last().map(|x| x.1).unwrap_or(0.0);
            if outer > window.r * (1.0 + 1e-12) {
                return Err(invalid(format!("intensity extends to radius {outer} beyond the window half-width {}", window.r)));
            }
        }
        Ok(())
    }

    fn annuli_unchecked(&self, r: f64) -> Option<Annuli> {
        match self {
            Intensity::UniformDisk { radius } => Some(vec![(0.0, *radius, 1.0)]),
            Intensity::UniformCube => None,
            Intensity::RingStrip {
                core_radius,
                core_density,
                strip_inner,
                strip_outer,
                strip_density,
                rim_inner,
                rim_density,
            } => Some(vec![
                (0.0, *core_radius, *core_density),
                (*core_radius, *strip_inner, 0.0),
                (*strip_inner, *strip_outer, *strip_density),
                (*strip_outer, *rim_inner, 0.0),
                (*rim_inner, r, *rim_density),
            ]),
            Intensity::PiecewiseRadial { radii, densities } => {
                let mut inner = 0.0;
                Some(
                    radii
                        .iter()
                        .zip(densities)
                        .map(|(&b, &d)| {
                            let a = (inner, b, d);
                            inner = b;
                            a
                        })
                        .collect(),
                )
            }
        }
    }

    /// `mu(W)`.
    pub fn mass(&self, window: &Window) -> f64 {
        match self.annuli_unchecked(window.r) {
            None => window.area(),
            Some(a) => a.iter().map(|(i, o, d)| d * PI * (o * o - i * i)).sum(),
        }
    }

    /// Density of `mu` at `p`.
    pub fn density(&self, window: &Window, p: Point) -> f64 {
        match self.annuli_unchecked(window.r) {
            None => {
                if window.contains(p) {
                    1.0
                } else {
                    0.0
                }
            }
            Some(a) => {
                let s = p.norm();
                a.iter()
                    .find(|(i, o, _)| s >= *i && (s < *o || (s == *o && *o == a.last().unwrap().1)))
                    .map(|x| x.2)
                    .unwrap_or(0.0)
            }
        }
    }

    /// Whether the density is a function of `|x|` only.
    pub fn is_radial(&self) -> bool {
        !matches!(self, Intensity::UniformCube)
    }

    /// One point from the normalized density.
    pub fn sample_point<R: Rng + ?Sized>(&self, window: &Window, rng: &mut R) -> Point {
        let sampler = Sampler::new(self, window);
        let part = sampler.draw(rng);
        sampler.point(part, rng.random::<f64>())
    }
}

/// Precomputed draw tables for an intensity.
#[derive(Clone, Debug)]
struct Sampler {
    r: f64,
    /// `(inner^2, outer^2 - inner^2)` per annulus with positive mass.
    annuli: Option<Vec<(f64, f64)>>,
    cdf: Vec<f64>,
}

impl Sampler {
    fn new(intensity: &Intensity, window: &Window) -> Self {
        match intensity.annuli_unchecked(window.r) {
            None => Sampler {
                r: window.r,
                annuli: None,
                cdf: Vec::new(),
            },
            Some(a) => {
                let kept: Vec<(f64, f64, f64)> = a
                    .into_iter()
                    .filter(|(i, o, d)| *d > 0.0 && o > i)
                    .map(|(i, o, d)| (i * i, o * o - i * i, d * PI * (o * o - i * i)))
                    .collect();
                let total: f64 = kept.iter().map(|k| k.2).sum();
                let mut acc = 0.0;
                let cdf = kept
                    .iter()
                    .map(|k| {
                        acc += k.2 / total;
                        acc
                    })
                    .collect();
                Sampler {
                    r: window.r,
                    annuli: Some(kept.iter().map(|k| (k.0, k.1)).collect()),
                    cdf,
                }
            }
        }
    }

    /// Radial kinds return `(|x|^2, 0)`; the cube returns `(x, y)`.
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match &self.annuli {
            None => (
                self.r * (2.0 * rng.random::<f64>() - 1.0),
                self.r * (2.0 * rng.random::<f64>() - 1.0),
            ),
            Some(a) => {
                let k = if a.len() == 1 {
                    0
                } else {
                    let u: f64 = rng.random();
                    self.cdf.partition_point(|c| *c <= u).min(a.len() - 1)
                };
                let (base, span) = a[k];
                (base + span * rng.random::<f64>(), 0.0)
            }
        }
    }

    #[inline]
    fn norm_sq(&self, part: (f64, f64)) -> f64 {
        match self.annuli {
            None => part.0 * part.0 + part.1 * part.1,
            Some(_) => part.0,
        }
    }

    /// Coordinates of a draw; `angle_u` in `[0, 1)` sets the polar angle of
    /// radial draws.
    #[inline]
    fn point(&self, part: (f64, f64), angle_u: f64) -> Point {
        match self.annuli {
            None => Point::new(part.0, part.1),
            Some(_) => Point::from_polar(part.0.sqrt(), 2.0 * PI * angle_u),
        }
    }
}

/// Intensity shape together with the scale `lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensitySpec {
    #[serde(flatten)]
    pub shape: Intensity,
    pub lambda: f64,
}

impl IntensitySpec {
    pub fn new(shape: Intensity, lambda: f64) -> Self {
        IntensitySpec { shape, lambda }
    }

    pub fn validate(&self, window: &Window) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda must be positive and finite"));
        }
        self.shape.validate_in(window)
    }

    /// `E[N] = lambda mu(W)`.
    pub fn mean_count(&self, window: &Window) -> f64 {
        self.lambda * self.shape.mass(window)
    }
}

/// SplitMix64 finalizer applied to `seed ^ golden * (run + 1)`.
pub fn mix_seed(seed: u64, run: u64) -> u64 {
    let mut z = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(run.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG streams of one run: counts and radii, and angles.
fn run_streams(seed: u64, run: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let s = mix_seed(seed, run);
    let mut main = ChaCha8Rng::seed_from_u64(s);
    main.set_stream(0);
    let mut angles = ChaCha8Rng::seed_from_u64(s);
    angles.set_stream(1);
    (main, angles)
}

fn draw_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// One Poisson configuration with intensity `lambda mu`.
pub fn sample_poisson(spec: &IntensitySpec, window: &Window, seed: u64) -> Result<PointConfig> {
    spec.validate(window)?;
    let sampler = Sampler::new(&spec.shape, window);
    let (mut main, mut angles) = run_streams(seed, 0);
    Ok(sample_with(spec, window, &sampler, &mut main, &mut angles))
}

fn sample_with(spec: &IntensitySpec, window: &Window, sampler: &Sampler, main: &mut ChaCha8Rng, angles: &mut ChaCha8Rng) -> PointConfig {
    let n = draw_count(spec.mean_count(window), main);
    let parts: Vec<(f64, f64)> = (0..n).map(|_| sampler.draw(main)).collect();
    let points = parts.iter().map(|&p| sampler.point(p, angles.random())).collect();
    PointConfig::from_parts(points, spec.lambda)
}

/// Random-waypoint mobility for Monte Carlo runs: users start at their
/// Poisson positions and move until the horizon, observed at `instants`
/// midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobileSetup {
    pub speed: f64,
    #[serde(default)]
    pub pause: f64,
    pub horizon: f64,
    pub instants: usize,
}

/// Everything needed for one Monte Carlo experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub model: Model,
    pub intensity: IntensitySpec,
    pub frustration: FrustrationSpec,
    pub mobility: Option<MobileSetup>,
}

/// One row of a hit dump: a user of a run in which the event occurred.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRow {
    pub run_id: u64,
    pub x: f64,
    pub y: f64,
    /// Bit `i` set iff the user is frustrated on channel `i` in the order
    /// up, up-dir, do, do-dir.
    pub channel_mask: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub hits: u64,
    pub runs: u64,
    pub p_hat: f64,
    pub std_err: f64,
    /// `-(1/lambda) log p_hat`; `None` when no hit was observed.
    pub rate_hat: Option<f64>,
    pub wall_seconds: f64,
    pub seed: u64,
}

impl EstimateResult {
    fn new(hits: u64, runs: u64, lambda: f64, wall_seconds: f64, seed: u64) -> Self {
        let p = hits as f64 / runs as f64;
        EstimateResult {
            hits,
            runs,
            p_hat: p,
            std_err: (p * (1.0 - p) / runs as f64).sqrt(),
            rate_hat: if hits > 0 { Some(-p.ln() / lambda) } else { None },
            wall_seconds,
            seed,
        }
    }
}

/// Reusable per-worker buffers.
#[derive(Default)]
struct Scratch {
    parts: Vec<(f64, f64)>,
    loss: Vec<f64>,
    points: Vec<Point>,
    cells: CellList,
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        let window = self.model.window();
        self.intensity.validate(window)?;
        if let Some(m) = &self.mobility {
            if m.instants == 0 {
                return Err(invalid("mobility needs at least one instant"));
            }
            self.mobility_model(m).validate()?;
            self.frustration.validate(&self.model, Some(m.horizon))
        } else {
            self.frustration.validate(&self.model, None)
        }
    }

    fn mobility_model(&self, m: &MobileSetup) -> MobilityModel {
        MobilityModel {
            initial: self.intensity.shape.clone(),
            speed: m.speed,
            pause: m.pause,
            horizon: m.horizon,
        }
    }

    fn fast_path(&self) -> bool {
        self.mobility.is_none()
            && self
                .frustration
                .active()
                .iter()
                .all(|(ch, _)| matches!(ch, Channel::UpDir | Channel::DownDir))
    }

    /// Growth of the per-run cost in the number of users.
    pub fn cost_class(&self) -> &'static str {
        let only_up_dir = self.frustration.active().iter().all(|(ch, _)| *ch == Channel::UpDir);
        if self.mobility.is_none() && only_up_dir {
            "O(N)"
        } else {
            "O(N^2)"
        }
    }

    /// The configuration of run `run` (positions at time 0 under mobility).
    pub fn configuration(&self, run: u64, seed: u64) -> PointConfig {
        let window = self.model.window();
        let sampler = Sampler::new(&self.intensity.shape, window);
        let (mut main, mut angles) = run_streams(seed, run);
        sample_with(&self.intensity, window, &sampler, &mut main, &mut angles)
    }

    /// Per-user frustration masks of run `run`, computed with the general
    /// library routines (no shortcuts).
    pub fn reference_masks(&self, run: u64, seed: u64) -> (PointConfig, Vec<u8>, bool) {
        match &self.mobility {
            None => {
                let cfg = self.configuration(run, seed);
                let fm = frustrated_points(&self.model, &self.frustration, &cfg);
                let mut masks = vec![0u8; cfg.len()];
                for ch in Channel::ALL {
                    for (m, f) in masks.iter_mut().zip(&fm.get(ch).flags) {
                        if *f {
                            *m |= 1 << ch.index();
                        }
                    }
                }
                let hit = event_indicator(&fm.totals(), &self.frustration);
                (cfg, masks, hit)
            }
            Some(_) => self.mobile_run(run, seed),
        }
    }

    /// The users of run `run` as an evolution: one static frame, or the
    /// observed instants of their waypoint paths under mobility.
    pub fn evolution(&self, run: u64, seed: u64) -> (PointConfig, Evolution) {
        let cfg = self.configuration(run, seed);
        let Some(m) = &self.mobility else {
            let evo = Evolution::from_points(&cfg);
            return (cfg, evo);
        };
        let window = self.model.window();
        let mm = self.mobility_model(m);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, run));
        rng.set_stream(2);
        let paths: Vec<(f64, Trajectory)> = cfg
            .points
            .iter()
            .map(|&p| (cfg.weight(), waypoint_path(p, &mm, window, &mut rng)))
            .collect();
        let evo = Evolution::from_trajectories(&paths, m.horizon, m.instants);
        (cfg, evo)
    }

    fn mobile_run(&self, run: u64, seed: u64) -> (PointConfig, Vec<u8>, bool) {
        let (cfg, evo) = self.evolution(run, seed);
        let flags = evo.flags(&self.model, &self.frustration);
        let masks: Vec<u8> = flags
            .iter()
            .map(|f| (0..4).filter(|i| f[*i]).fold(0u8, |acc, i| acc | (1 << i)))
            .collect();
        let mut totals = [0.0; 4];
        for ch in Channel::ALL {
            let count = masks.iter().filter(|m| **m & (1 << ch.index()) != 0).count();
            totals[ch.index()] = count as f64 / cfg.lambda;
        }
        let hit = event_indicator(&totals, &self.frustration);
        (cfg, masks, hit)
    }

    /// Whether the event occurs in run `run`.
    fn run_hit(&self, run: u64, seed: u64, sampler: &Sampler, scratch: &mut Scratch) -> bool {
        if !self.fast_path() {
            return self.reference_masks(run, seed).2;
        }
        let window = self.model.window();
        let (mut main, mut angles) = run_streams(seed, run);
        let n = draw_count(self.intensity.mean_count(window), &mut main);
        scratch.parts.clear();
        scratch.parts.extend((0..n).map(|_| sampler.draw(&mut main)));
        let mut totals = [0.0; 4];
        if n == 0 {
            return event_indicator(&totals, &self.frustration);
        }
        let scoring = self.frustration.scoring_model(&self.model);
        let g = *scoring.qos();
        let ell = scoring.path_loss();
        let w = 1.0 / self.intensity.lambda;
        scratch.loss.clear();
        scratch
            .loss
            .extend(scratch.parts.iter().map(|&p| ell.eval_sq(sampler.norm_sq(p))));
        if let Some(spec) = self.frustration.get(Channel::UpDir) {
            let users: f64 = scratch.loss.iter().map(|l| w * l).sum();
            let i_o = users + scoring.base_station_mass() * ell.eval_sq(0.0);
            let count = scratch.loss.iter().filter(|l| g.eval(**l / i_o) < spec.c).count();
            totals[Channel::UpDir.index()] = count as f64 / self.intensity.lambda;
            // Early exit: the event needs every constrained channel.
            if totals[Channel::UpDir.index()] <= spec.b {
                return false;
            }
        }
        if let Some(spec) = self.frustration.get(Channel::DownDir) {
            scratch.points.clear();
            scratch
                .points
                .extend(scratch.parts.iter().map(|&p| sampler.point(p, angles.random())));
            let thr_scale = g.inverse(spec.c);
            scratch.cells.build(&scratch.points, window.r);
            let bs = scoring.base_station_mass();
            let total = w * n as f64;
            let mut count = 0usize;
            for (j, &p) in scratch.points.iter().enumerate() {
                let own = scratch.loss[j];
                let thr = own / thr_scale;
                let bs_term = bs * own;
                // Crude bound first: every user at full strength.
                if (total * ell.eval_sq(0.0) + bs_term) * (1.0 + 1e-6) < thr {
                    continue;
                }
                let ub = scratch.cells.upper_bound(p, w, ell) + bs_term;
                if ub * (1.0 + 1e-6) < thr {
                    continue;
                }
                let exact = interference_at(&scoring, &scratch.points, w, p);
                if g.eval(ell.eval_sq(p.norm_sq()) / exact) < spec.c {
                    count += 1;
                }
            }
            totals[Channel::DownDir.index()] = count as f64 / self.intensity.lambda;
        }
        event_indicator(&totals, &self.frustration)
    }

    /// Per-user masks for the dump, consistent with the fast decision.
    fn hit_rows(&self, run: u64, seed: u64) -> Vec<HitRow> {
        let (cfg, masks, _) = self.reference_masks(run, seed);
        cfg.points
            .iter()
            .zip(masks)
            .map(|(p, m)| HitRow {
                run_id: run,
                x: p.x,
                y: p.y,
                channel_mask: m,
            })
            .collect()
    }
}

/// `sum_i w l(|x_i - p|)` plus the base-station term, summed in the same
/// order as [`Model::interference`].
fn interference_at(model: &Model, points: &[Point], w: f64, p: Point) -> f64 {
    let users: f64 = points.iter().map(|&q| w * model.loss(q, p)).sum();
    users + model.base_station_mass() * model.path_loss().eval_sq(p.norm_sq())
}

/// Uniform bucket grid over `[-r, r]^2` for interference upper bounds.
#[derive(Clone, Debug, Default)]
struct CellList {
    n: usize,
    h: f64,
    r: f64,
    counts: Vec<u32>,
}

impl CellList {
    fn build(&mut self, points: &[Point], r: f64) {
        let n = ((points.len() as f64 / 8.0).sqrt().ceil() as usize).clamp(1, 48);
        self.n = n;
        self.r = r;
        self.h = 2.0 * r / n as f64;
        self.counts.clear();
        self.counts.resize(n * n, 0);
        for p in points {
            let (ix, iy) = self.cell(*p);
            self.counts[ix * n + iy] += 1;
        }
    }

    #[inline]
    fn cell(&self, p: Point) -> (usize, usize) {
        let f = |v: f64| (((v + self.r) / self.h).floor().max(0.0) as usize).min(self.n - 1);
        (f(p.x), f(p.y))
    }

    /// `sum_cells count w l(dist(p, cell))`, an upper bound on the user
    /// interference at `p` since `l` is non-increasing.
    fn upper_bound(&self, p: Point, w: f64, ell: &crate::pathloss::PathLoss) -> f64 {
        let mut acc = 0.0;
        for ix in 0..self.n {
            let lo = -self.r + ix as f64 * self.h;
            let dx = (lo - p.x).max(p.x - (lo + self.h)).max(0.0);
            for iy in 0..self.n {
                let c = self.counts[ix * self.n + iy];
                if c == 0 {
                    continue;
                }
                let lo = -self.r + iy as f64 * self.h;
                let dy = (lo - p.y).max(p.y - (lo + self.h)).max(0.0);
                acc += c as f64 * w * ell.eval_sq(dx * dx + dy * dy);
            }
        }
        // Guard against rounding in the accumulated bound.
        acc * (1.0 + 1e-12)
    }
}

/// Options for [`estimate_probability`].
#[derive(Clone, Copy, Debug)]
pub struct EstimateOptions {
    pub runs: u64,
    pub seed: u64,
    pub workers: usize,
    pub collect_hits: bool,
}

/// Naive Monte Carlo estimate of the event probability. The hit count does
/// not depend on `workers`.
pub fn estimate_probability(exp: &Experiment, opts: EstimateOptions) -> Result<(EstimateResult, Vec<HitRow>)> {
    if opts.runs == 0 {
        return Err(invalid("runs must be at least 1"));
    }
    exp.validate()?;
    let start = Instant::now();
    let window = *exp.model.window();
    let sampler = Sampler::new(&exp.intensity.shape, &window);
    let workers = opts.workers.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let chunk = (opts.runs / (workers as u64 * 16)).clamp(1, 1 << 16);
    let n_chunks = opts.runs.div_ceil(chunk);
    let per_chunk: Vec<(u64, Vec<u64>)> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|k| {
                let mut scratch = Scratch::default();
                let mut hits = Vec::new();
                let end = ((k + 1) * chunk).min(opts.runs);
                for run in k * chunk..end {
                    if exp.run_hit(run, opts.seed, &sampler, &mut scratch) {
                        hits.push(run);
                    }
                }
                (hits.len() as u64, hits)
            })
            .collect()
    });
    let hits: u64 = per_chunk.iter().map(|c| c.0).sum();
    let mut rows = Vec::new();
    if opts.collect_hits {
        let runs: Vec<u64> = per_chunk.into_iter().flat_map(|c| c.1).collect();
        let dumped: Vec<Vec<HitRow>> = pool.install(|| runs.par_iter().map(|&r| exp.hit_rows(r, opts.seed)).collect());
        rows = dumped.into_iter().flatten().collect();
    }
    let result = EstimateResult::new(hits, opts.runs, exp.intensity.lambda, start.elapsed().as_secs_f64(), opts.seed);
    Ok((result, rows))
}

/// Run ids of hits among runs `0..runs`, in increasing order.
pub fn hit_runs(exp: &Experiment, runs: u64, seed: u64) -> Vec<u64> {
    let sampler = Sampler::new(&exp.intensity.shape, exp.model.window());
    let mut scratch = Scratch::default();
    (0..runs).filter(|&r| exp.run_hit(r, seed, &sampler, &mut scratch)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub lambda: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub rate_hat: Option<f64>,
}

/// Estimates at each `lambda`, all other parameters fixed.
pub fn rate_curve(exp: &Experiment, lambdas: &[f64], runs: u64, seed: u64, workers: usize) -> Result<Vec<RatePoint>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut e = exp.clone();
            e.intensity.lambda = lambda;
            let opts = EstimateOptions {
                runs,
                seed,
                workers,
                collect_hits: false,
            };
            let (r, _) = estimate_probability(&e, opts)?;
            Ok(RatePoint {
                lambda,
                p_hat: r.p_hat,
                std_err: r.std_err,
                rate_hat: r.rate_hat,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frustration::ChannelSpec;
    use crate::pathloss::{PathLoss, QosMap};

    fn model(r: f64) -> Model {
        Model::new(Window::new(r).unwrap(), PathLoss::standard(), QosMap::min_cap(1.0).unwrap()).unwrap()
    }

    #[test]
    fn seed_mixing_differs() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
    }

    #[test]
    fn zero_intensity_is_empty() {
        let w = Window::new(2.0).unwrap();
        let spec = IntensitySpec::new(Intensity::PiecewiseRadial { radii: vec![1.0], densities: vec![0.0] }, 5.0);
        assert!(sample_poisson(&spec, &w, 3).unwrap().is_empty());
    }

    #[test]
    fn samples_stay_in_their_support() {
        let w = Window::new(5.0).unwrap();
        let shape = Intensity::RingStrip {
            core_radius: 1.0,
            core_density: 2.0,
            strip_inner: 2.4,
            strip_outer: 2.6,
            strip_density: 0.5,
            rim_inner: 4.5,
            rim_density: 2.0,
        };
        let cfg = sample_poisson(&IntensitySpec::new(shape.clone(), 20.0), &w, 9).unwrap();
        assert!(!cfg.is_empty());
        for p in &cfg.points {
            assert!(shape.density(&w, *p) > 0.0, "{p:?}");
            assert!(w.contains(*p));
        }
    }

    #[test]
    fn fast_path_matches_reference() {
        let m = model(3.0);
        for (ch, c, b) in [(Channel::UpDir, 0.003, 5.0), (Channel::DownDir, 0.01, 15.0)] {
            let spec = FrustrationSpec::single(ch, ChannelSpec { a: 0.0, c, b });
            let exp = Experiment {
                model: m.clone(),
                intensity: IntensitySpec::new(Intensity::UniformDisk { radius: 3.0 }, 6.0),
                frustration: spec,
                mobility: None,
            };
            let sampler = Sampler::new(&exp.intensity.shape, m.window());
            let mut scratch = Scratch::default();
            let mut seen = [0, 0];
            for run in 0..300 {
                let fast = exp.run_hit(run, 7, &sampler, &mut scratch);
                let slow = exp.reference_masks(run, 7).2;
                assert_eq!(fast, slow, "run {run} channel {ch:?}");
                seen[fast as usize] += 1;
            }
            assert!(seen[0] > 0 && seen[1] > 0, "{ch:?} {seen:?}");
        }
    }

    #[test]
    fn certain_event() {
        let spec = FrustrationSpec::single(Channel::Up, ChannelSpec { a: 0.0, c: 0.5, b: -1.0 });
        let exp = Experiment {
            model: model(2.0),
            intensity: IntensitySpec::new(Intensity::UniformDisk { radius: 2.0 }, 3.0),
            frustration: spec,
            mobility: None,
        };
        let opts = EstimateOptions { runs: 5, seed: 1, workers: 1, collect_hits: true };
        let (r, rows) = estimate_probability(&exp, opts).unwrap();
        assert_eq!(r.p_hat, 1.0);
        assert_eq!(r.std_err, 0.0);
        let runs: std::collections::BTreeSet<u64> = rows.iter().map(|h| h.run_id).collect();
        assert!(runs.len() <= 5);
    }
}
