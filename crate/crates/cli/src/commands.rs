use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use relaynet::analysis::{kde_radial, symmetry_diagnostics, SymmetryDiagnostics};
use relaynet::discretization::discretize_measure;
use relaynet::entropy::rel_entropy;
use relaynet::frustration::{event_indicator, ThresholdScale};
use relaynet::io::{
    read_hits_csv, write_hits_csv, write_json, write_measure_csv, write_path_measure_csv, write_profile_csv,
    write_radial_profile_csv,
};
use relaynet::mobility::{sample_trajectory, MobilityModel, Trajectory};
use relaynet::model::Channel;
use relaynet::montecarlo::{estimate_probability, mix_seed, EstimateOptions, Intensity};
use relaynet::optimize::{minimize_rate, minimize_rate_spatial, MinimizeOptions, MinimizerResult};
use relaynet::variational::{approx_minimizer, c0_uplink, VariationalProfile};
use relaynet::{Error, SpatialMeasure};

use crate::scenario::Scenario;
use crate::CliError;

#[derive(Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// Scenario file (TOML).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Override a scenario key, e.g. `--set lambda=100` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Scenario, CliError> {
        Scenario::load(&self.config, &self.overrides)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn out_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `users.csv` and `simulate.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct SimulateSummary {
    seed: u64,
    users: usize,
    lambda: f64,
    /// Frustrated mass per channel (up, up_dir, do, do_dir).
    frustrated_mass: [f64; 4],
    event: bool,
}

/// One realization (run 0 of `estimate` with the same seed). QoS columns
/// hold the worst value over the observed instants on the threshold scale.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let sc = args.scenario.load()?;
    let exp = sc.experiment()?;
    let (cfg, evo) = exp.evolution(0, args.seed);
    let scoring = exp.frustration.scoring_model(&exp.model);
    let qos = evo.qos_paths(&scoring, &Channel::ALL);
    let flags = evo.flags(&exp.model, &exp.frustration);
    let mut csv = String::from("x,y,qos_up,qos_up_dir,qos_do,qos_do_dir,channel_mask\n");
    let mut counts = [0usize; 4];
    for ((p, q), f) in cfg.points.iter().zip(&qos).zip(&flags) {
        let worst = |v: &Vec<f64>| v.iter().copied().fold(f64::INFINITY, f64::min);
        let mut mask = 0u8;
        for ch in Channel::ALL {
            if f[ch.index()] {
                mask |= 1 << ch.index();
                counts[ch.index()] += 1;
            }
        }
        writeln!(
            csv,
            "{},{},{},{},{},{},{mask}",
            p.x,
            p.y,
            worst(&q[0]),
            worst(&q[1]),
            worst(&q[2]),
            worst(&q[3])
        )
        .unwrap();
    }
    let frustrated_mass = counts.map(|c| c as f64 / cfg.lambda);
    let summary = SimulateSummary {
        seed: args.seed,
        users: cfg.points.len(),
        lambda: cfg.lambda,
        frustrated_mass,
        event: event_indicator(&frustrated_mass, &exp.frustration),
    };
    let users = out_path(&args.out_dir, "users.csv")?;
    std::fs::write(&users, csv).map_err(Error::from)?;
    write_json(&summary, &out_path(&args.out_dir, "simulate.json")?)?;
    println!("{} users, event = {}", summary.users, summary.event);
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 10_000)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores). Does not change the result.
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Result file (default: `<out-dir>/estimate.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every user of every hit run (run_id, x, y, channel_mask).
    #[arg(long, value_name = "FILE")]
    pub dump_hits: Option<PathBuf>,
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let sc = args.scenario.load()?;
    let exp = sc.experiment()?;
    eprintln!(
        "per-run cost {} in the number of users (mean {:.1} users)",
        exp.cost_class(),
        exp.intensity.mean_count(exp.model.window())
    );
    let opts = EstimateOptions {
        runs: args.runs,
        seed: args.seed,
        workers: args.workers,
        collect_hits: args.dump_hits.is_some(),
    };
    let (result, rows) = estimate_probability(&exp, opts)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => out_path(&args.out_dir, "estimate.json")?,
    };
    write_json(&result, &out)?;
    if let Some(p) = &args.dump_hits {
        write_hits_csv(&rows, p)?;
    }
    println!(
        "hits {} / {} runs, p_hat = {:e} +- {:e}",
        result.hits, result.runs, result.p_hat, result.std_err
    );
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct MinimizeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,
    /// Output directory for `measure.csv` and `minimize.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
#[serde(bound = "")]
struct MinimizeSummary<'a, M> {
    #[serde(flatten)]
    result: &'a MinimizerResult<M>,
    mu_total: f64,
    nu_total: f64,
    cells: usize,
}

/// Static scenarios integrate the intensity over the grid cells; mobile
/// ones push `mobility.trajectories` sampled paths onto the space-time grid.
pub fn cmd_minimize(args: &MinimizeArgs) -> Result<(), CliError> {
    let sc = args.scenario.load()?;
    let exp = sc.experiment()?;
    let window = sc.window()?;
    let opts = MinimizeOptions {
        restarts: args.restarts,
        seed: args.seed,
        ..MinimizeOptions::default()
    };
    let measure = out_path(&args.out_dir, "measure.csv")?;
    let summary = out_path(&args.out_dir, "minimize.json")?;
    let entropy = match &sc.mobility {
        None => {
            let (grid, sub) = sc.spatial_grid()?;
            let cells = grid.len();
            let mu = SpatialMeasure::from_density(grid, |p| sc.intensity.density(&window, p), sub);
            let r = minimize_rate_spatial(&exp.model, &mu, &exp.frustration, &opts)?;
            debug_assert!((rel_entropy(&r.measure, &mu)? - r.entropy).abs() < 1e-6);
            write_measure_csv(&r.measure, &measure)?;
            write_json(
                &MinimizeSummary {
                    result: &r,
                    mu_total: mu.total(),
                    nu_total: r.measure.total(),
                    cells,
                },
                &summary,
            )?;
            r.entropy
        }
        Some(m) => {
            let grid = sc.path_grid()?;
            let model = MobilityModel {
                initial: sc.intensity.clone(),
                speed: m.speed,
                pause: m.pause,
                horizon: m.horizon,
            };
            let weight = sc.intensity.mass(&window) / m.trajectories as f64;
            let paths = (0..m.trajectories as u64)
                .map(|i| Ok((weight, sample_trajectory(&model, &window, mix_seed(args.seed, i))?)))
                .collect::<Result<Vec<(f64, Trajectory)>, Error>>()?;
            let mu = discretize_measure(&paths, grid)?;
            let r = minimize_rate(&exp.model, &mu, &exp.frustration, &opts)?;
            write_path_measure_csv(&r.measure, &measure)?;
            write_json(
                &MinimizeSummary {
                    result: &r,
                    mu_total: mu.total(),
                    nu_total: r.measure.total(),
                    cells: mu.len(),
                },
                &summary,
            )?;
            r.entropy
        }
    };
    println!("minimal relative entropy {entropy:e}");
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Rows of the profile table (equally spaced radii on [0, r]).
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Output directory for `profile.csv` and `approx.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
enum ApproxReport<'a> {
    Ok {
        c0: f64,
        c_sir: f64,
        #[serde(flatten)]
        profile: &'a VariationalProfile,
        alpha_residual: f64,
        constraint_residual: f64,
    },
    Degenerate {
        c0: f64,
        c_sir: f64,
        reason: String,
    },
}

/// Needs a uniform-disk intensity and an `up_dir` channel.
pub fn cmd_approx(args: &ApproxArgs) -> Result<(), CliError> {
    let sc = args.scenario.load()?;
    let Intensity::UniformDisk { radius } = sc.intensity else {
        return Err(CliError::Config("approx needs a uniform-disk intensity".into()));
    };
    let spec = sc.frustration()?;
    let ch = spec
        .get(Channel::UpDir)
        .ok_or_else(|| CliError::Config("approx needs an up_dir channel".into()))?;
    let c_sir = match spec.threshold_scale {
        ThresholdScale::RawSir => ch.c,
        ThresholdScale::Qos => sc.qos.inverse(ch.c),
    };
    let ell = sc.path_loss.build()?;
    let c0 = c0_uplink(radius, &ell)?;
    let report = out_path(&args.out_dir, "approx.json")?;
    match approx_minimizer(radius, c_sir, ch.b, &ell) {
        Ok(p) => {
            write_profile_csv(&p.table(args.points), &out_path(&args.out_dir, "profile.csv")?)?;
            write_json(
                &ApproxReport::Ok {
                    c0,
                    c_sir,
                    profile: &p,
                    alpha_residual: p.alpha_residual(),
                    constraint_residual: p.constraint_residual(),
                },
                &report,
            )?;
            println!("rho_min = {}, alpha = {}, outer level = {}", p.rho_min, p.alpha, p.outer_level);
        }
        Err(Error::Degenerate(reason)) => {
            println!("degenerate: {reason}");
            write_json(&ApproxReport::Degenerate { c0, c_sir, reason }, &report)?;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Hit dump written by `estimate --dump-hits`.
    #[arg(long, value_name = "FILE")]
    pub hits: PathBuf,
    /// Channels whose frustrated users enter the angular diagnostics
    /// (bit 0 up, 1 up_dir, 2 do, 3 do_dir; default: the configured ones).
    #[arg(long)]
    pub mask: Option<u8>,
    /// KDE bandwidth [length] (default: Silverman's rule).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Output directory for `profile.csv` and `analysis.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct AnalysisReport {
    hit_runs: usize,
    users: usize,
    radius: f64,
    bandwidth: f64,
    /// Integral of the profile; compare with `users_per_run_over_lambda`.
    planar_mass: f64,
    users_per_run_over_lambda: f64,
    symmetry: SymmetryDiagnostics,
}

/// Radius of the support of a radial intensity (half diagonal for the cube).
fn support_radius(sc: &Scenario) -> f64 {
    match &sc.intensity {
        Intensity::UniformDisk { radius } => *radius,
        Intensity::UniformCube => sc.window * std::f64::consts::SQRT_2,
        Intensity::RingStrip { .. } => sc.window,
        Intensity::PiecewiseRadial { radii, .. } => radii.last().copied().unwrap_or(sc.window),
    }
}

/// The profile covers all users of hit runs, each weighted `1/(lambda n)`
/// for `n` hit runs.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let sc = args.scenario.load()?;
    let rows = read_hits_csv(&args.hits)?;
    if rows.is_empty() {
        return Err(CliError::Config(format!("{} contains no hits", args.hits.display())));
    }
    let mask = args.mask.unwrap_or_else(|| {
        sc.frustration()
            .map(|f| f.active().iter().fold(0u8, |m, (ch, _)| m | (1 << ch.index())))
            .unwrap_or(0xF)
    });
    let symmetry = symmetry_diagnostics(&rows, mask)?;
    let radius = support_radius(&sc);
    let weight = 1.0 / (sc.lambda * symmetry.runs as f64);
    let samples: Vec<(f64, f64)> = rows
        .iter()
        .map(|h| ((h.x * h.x + h.y * h.y).sqrt().min(radius), weight))
        .collect();
    let profile = kde_radial(&samples, radius, args.bandwidth, args.points)?;
    write_radial_profile_csv(&profile, &out_path(&args.out_dir, "profile.csv")?)?;
    let report = AnalysisReport {
        hit_runs: symmetry.runs,
        users: rows.len(),
        radius,
        bandwidth: profile.bandwidth,
        planar_mass: profile.planar_mass(),
        users_per_run_over_lambda: rows.len() as f64 * weight,
        symmetry,
    };
    write_json(&report, &out_path(&args.out_dir, "analysis.json")?)?;
    println!(
        "{} hit runs, centroid circular variance {:.3}, pooled Rayleigh p {:.3e}",
        report.hit_runs, report.symmetry.circular_variance_of_centroids, report.symmetry.pooled_rayleigh_p
    );
    Ok(())
}
