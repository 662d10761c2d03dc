//! Scenario files: one TOML document per experiment.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use relaynet::discretization::{PathGrid, TriadicParam};
use relaynet::frustration::{ChannelSpec, FrustrationSpec, ThresholdScale};
use relaynet::model::Channel;
use relaynet::montecarlo::{Experiment, Intensity, IntensitySpec, MobileSetup};
use relaynet::pathloss::PathLossSpec;
use relaynet::variational::{c0_downlink, c0_uplink};
use relaynet::{Model, QosMap, SpatialGrid, Window};

use crate::CliError;

/// Every key a scenario may contain, with units. Shown by `--help`.
pub const CONFIG_KEYS: &str = "\
SCENARIO KEYS (TOML; override any of them with --set key=value):
  window                      half side r of the square window [-r, r]^2 [length]
  lambda                      intensity scale: expected users = lambda * mu(W) [users per unit mass]
  base_station                include the base station (mass 1/lambda at o) in the interference [bool, default false]
  path_loss.kind              \"min-power\" (l(s) = min{cap, s^-exponent}) or \"constant\"
  path_loss.cap               cap of min-power loss [received power]
  path_loss.exponent          decay exponent of min-power loss [dimensionless]
  path_loss.value             value of constant loss [received power]
  qos.kind                    \"min-cap\" (min{SIR, cap}), \"shannon-cap\" (min{log(1+SIR), cap}) or \"identity\"
  qos.cap                     QoS cap c+ [QoS units]
  intensity.kind              \"uniform-disk\", \"uniform-cube\", \"ring-strip\" or \"piecewise-radial\"
  intensity.radius            disk radius (uniform-disk) [length]
  intensity.core_radius, intensity.strip_inner, intensity.strip_outer, intensity.rim_inner
                              ring-strip radii [length]
  intensity.core_density, intensity.strip_density, intensity.rim_density
                              ring-strip densities [mass per unit area]
  intensity.radii, intensity.densities
                              piecewise-radial annulus outer radii [length] and densities [mass per unit area]
  mobility.speed              random-waypoint speed [length per unit time]
  mobility.pause              pause at each waypoint [time, default 0]
  mobility.horizon            time horizon T [time]
  mobility.instants           observation instants per run for `estimate`/`simulate` [count]
  mobility.trajectories       sampled trajectories forming mu for `minimize` [count, default 256]
  grid.kind                   \"triadic\" or \"polar\" (cells for `minimize`)
  grid.m                      triadic mesh exponent: cell side 2r/3^m, time step T/3^m [count]
  grid.radius                 polar grid radius [length]
  grid.shells, grid.sectors   polar grid resolution [count]
  grid.sub                    sub-samples per cell side when integrating the intensity [count, default 4]
  frustration.threshold_scale \"qos\" (compare g(SIR) with c) or \"raw-sir\" (compare SIR with c) [default qos]
  frustration.<ch>.a          time budget: frustrated when below c for longer than a [time, default 0]
  frustration.<ch>.c          QoS threshold [QoS or SIR units]
  frustration.<ch>.c_over_c0  threshold as a multiple of the boundary value c0 (direct channels, uniform-disk) [dimensionless]
  frustration.<ch>.b          frustrated-mass threshold: event when mass > b [mass = users / lambda]
  (<ch> is one of up, up_dir, do, do_dir)
";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub window: f64,
    pub lambda: f64,
    #[serde(default)]
    pub base_station: bool,
    pub path_loss: PathLossSpec,
    pub qos: QosMap,
    pub intensity: Intensity,
    #[serde(default)]
    pub mobility: Option<MobilityConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    pub frustration: FrustrationConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed: f64,
    #[serde(default)]
    pub pause: f64,
    pub horizon: f64,
    pub instants: usize,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
}

fn default_trajectories() -> usize {
    256
}

fn default_sub() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridConfig {
    Triadic {
        m: u32,
        #[serde(default = "default_sub")]
        sub: usize,
    },
    Polar {
        radius: f64,
        shells: usize,
        sectors: usize,
        #[serde(default = "default_sub")]
        sub: usize,
    },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrustrationConfig {
    #[serde(default)]
    pub threshold_scale: ThresholdScale,
    #[serde(default)]
    pub up: Option<ChannelConfig>,
    #[serde(default)]
    pub up_dir: Option<ChannelConfig>,
    #[serde(default, rename = "do")]
    pub down: Option<ChannelConfig>,
    #[serde(default)]
    pub do_dir: Option<ChannelConfig>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub c_over_c0: Option<f64>,
    pub b: f64,
}

impl FrustrationConfig {
    fn get(&self, ch: Channel) -> Option<&ChannelConfig> {
        match ch {
            Channel::Up => self.up.as_ref(),
            Channel::UpDir => self.up_dir.as_ref(),
            Channel::Down => self.down.as_ref(),
            Channel::DownDir => self.do_dir.as_ref(),
        }
    }
}

/// Replace `path = value` in a TOML table; `value` is parsed as TOML and
/// taken as a bare string if that fails.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Scenario {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let sc: Scenario = doc.try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    /// Cross-field checks; everything the commands rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        let exp = self.experiment()?;
        exp.validate()?;
        if let Some(m) = &self.mobility {
            if m.trajectories == 0 {
                return Err(CliError::Config("mobility.trajectories must be at least 1".into()));
            }
        }
        if exp.frustration.active().is_empty() {
            return Err(CliError::Config("no frustration channel configured".into()));
        }
        if let Some(g) = &self.grid {
            self.spatial_grid_for(g)?;
        }
        Ok(())
    }

    pub fn window(&self) -> Result<Window, CliError> {
        Ok(Window::new(self.window)?)
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let model = Model::new(self.window()?, self.path_loss.build()?, self.qos)?;
        Ok(if self.base_station {
            model.with_base_station(1.0 / self.lambda)
        } else {
            model
        })
    }

    /// `c0` of a direct channel under a uniform disk intensity.
    pub fn c0(&self, ch: Channel) -> Result<f64, CliError> {
        let Intensity::UniformDisk { radius } = self.intensity else {
            return Err(CliError::Config("c_over_c0 needs a uniform-disk intensity".into()));
        };
        let ell = self.path_loss.build()?;
        Ok(match ch {
            Channel::UpDir => c0_uplink(radius, &ell)?,
            Channel::DownDir => c0_downlink(radius, &ell)?,
            _ => return Err(CliError::Config(format!("c_over_c0 is only defined for direct channels, not {}", ch.name()))),
        })
    }

    pub fn frustration(&self) -> Result<FrustrationSpec, CliError> {
        let f = &self.frustration;
        let mut spec = FrustrationSpec {
            threshold_scale: f.threshold_scale,
            ..FrustrationSpec::default()
        };
        for ch in Channel::ALL {
            let Some(cfg) = f.get(ch) else { continue };
            let c = match (cfg.c, cfg.c_over_c0) {
                (Some(c), None) => c,
                (None, Some(k)) => {
                    let raw = k * self.c0(ch)?;
                    match f.threshold_scale {
                        ThresholdScale::RawSir => raw,
                        ThresholdScale::Qos => self.qos.eval(raw),
                    }
                }
                _ => {
                    return Err(CliError::Config(format!(
                        "frustration.{}: give exactly one of c and c_over_c0",
                        key_of(ch)
                    )))
                }
            };
            spec.set(ch, Some(ChannelSpec { a: cfg.a, c, b: cfg.b }));
        }
        Ok(spec)
    }

    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let model = self.model()?;
        let mobility = self.mobility.as_ref().map(|m| MobileSetup {
            speed: m.speed,
            pause: m.pause,
            horizon: m.horizon,
            instants: m.instants,
        });
        Ok(Experiment {
            model,
            intensity: IntensitySpec::new(self.intensity.clone(), self.lambda),
            frustration: self.frustration()?,
            mobility,
        })
    }

    fn spatial_grid_for(&self, g: &GridConfig) -> Result<(Arc<SpatialGrid>, usize), CliError> {
        let window = self.window()?;
        Ok(match *g {
            GridConfig::Triadic { m, sub } => (Arc::new(SpatialGrid::triadic(window, TriadicParam::new(m)?)?), sub),
            GridConfig::Polar {
                radius,
                shells,
                sectors,
                sub,
            } => {
                if radius > window.r {
                    return Err(CliError::Config(format!("grid.radius {radius} exceeds the window half side {}", window.r)));
                }
                (Arc::new(SpatialGrid::polar(radius, shells, sectors)?), sub)
            }
        })
    }

    pub fn spatial_grid(&self) -> Result<(Arc<SpatialGrid>, usize), CliError> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [grid] section".into()))?;
        self.spatial_grid_for(g)
    }

    /// Space-time grid for mobile scenarios: triadic in space and time.
    pub fn path_grid(&self) -> Result<Arc<PathGrid>, CliError> {
        let m = self.mobility.as_ref().expect("mobile scenario");
        match self.grid {
            Some(GridConfig::Triadic { m: exp, .. }) => {
                Ok(Arc::new(PathGrid::triadic(self.window()?, TriadicParam::new(exp)?, Some(m.horizon))?))
            }
            _ => Err(CliError::Config("mobile scenarios need a triadic [grid]".into())),
        }
    }
}

pub fn key_of(ch: Channel) -> &'static str {
    match ch {
        Channel::Up => "up",
        Channel::UpDir => "up_dir",
        Channel::Down => "do",
        Channel::DownDir => "do_dir",
    }
}
