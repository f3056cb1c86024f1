//! Flat key/value run configuration with SI units in the key names, the
//! shipped presets, and `key=value` overrides.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::integrate::IntegrationPlan;
use crate::model::{
    contact_coefficients, nondimensionalize, sphere_mass, ChainConfig, DriveSpec, ScaledSystem,
    WallModel,
};
use crate::orbit::ShootingOptions;
use crate::sweep::{AmplitudeSchedule, SweepSpec};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("n_beads", "number of beads"),
    ("bead_radius_m", "bead radius R"),
    ("bead_mass_kg", "bead mass m; derived from radius and density when absent"),
    ("density_kg_m3", "bead density"),
    ("youngs_modulus_pa", "elastic modulus E"),
    ("poisson_ratio", "Poisson ratio"),
    ("damping_ns_per_m", "contact damping D"),
    ("foundation_n_per_m", "grounding stiffness k per bead"),
    ("foundation_hertz_fraction", "grounding stiffness as a fraction of the bead-bead Hertz coefficient (overrides foundation_n_per_m)"),
    ("foundation_nd", "scaled grounding stiffness used by scaled and extended runs instead of the physical value"),
    ("wall_model", "right wall contact: rigid_plane or identical_sphere"),
    ("drive_amplitude_m", "zeroth-bead displacement amplitude A0"),
    ("drive_frequency_hz", "drive frequency f"),
    ("amplitude_schedule", "sweep amplitudes as [[frequency_hz, amplitude_m], ...], linearly interpolated"),
    ("dt", "RK4 step in scaled time"),
    ("transient_periods", "drive periods discarded before measuring"),
    ("settle_time", "minimum discarded duration in scaled time"),
    ("measure_periods", "drive periods kept after the transient"),
    ("record_stride", "keep every n-th step in trajectory output"),
    ("sweep_f_min_hz", "lowest sweep frequency"),
    ("sweep_f_max_hz", "highest sweep frequency"),
    ("sweep_points", "number of sweep frequencies"),
    ("orbit_system", "system shot by floquet: extended or chain"),
    ("orbit_periods", "orbit period in drive periods"),
    ("newton_tol", "Newton residual tolerance"),
    ("newton_max_iter", "Newton iteration limit"),
    ("fd_rel_step", "relative finite-difference step of the map Jacobian"),
    ("tol_margin", "multiplier modulus margin around 1 for a marginal verdict"),
    ("assimilate_mode", "extended (driver/observer pair) or recorded (force record input)"),
    ("observer_perturbation", "scaled displacement offset of the observer start"),
    ("sync_periods", "length of an extended assimilation run in drive periods"),
    ("force_record_path", "CSV force record (time_s, force_N) for recorded assimilation"),
];

pub const PRESETS: &[(&str, &str)] = &[
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3-340", include_str!("../presets/fig3-340.toml")),
    ("fig3-1130", include_str!("../presets/fig3-1130.toml")),
    ("fig9a", include_str!("../presets/fig9a.toml")),
    ("fig11-k0", include_str!("../presets/fig11-k0.toml")),
    ("fig11-k001", include_str!("../presets/fig11-k001.toml")),
    ("fig12-60", include_str!("../presets/fig12-60.toml")),
    ("fig12-90", include_str!("../presets/fig12-90.toml")),
    ("fig12-100", include_str!("../presets/fig12-100.toml")),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrbitSystem {
    Chain,
    Extended,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssimilateMode {
    Extended,
    Recorded,
}

/// A fully resolved run configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub chain: ChainConfig,
    pub amplitude: f64,
    pub frequency: f64,
    pub amplitude_schedule: Option<Vec<(f64, f64)>>,
    pub foundation_nd: Option<f64>,
    pub plan: IntegrationPlan,
    pub sweep_f_min: f64,
    pub sweep_f_max: f64,
    pub sweep_points: usize,
    pub orbit_system: OrbitSystem,
    pub orbit_periods: usize,
    pub shooting: ShootingOptions,
    pub assimilate_mode: AssimilateMode,
    pub observer_perturbation: f64,
    pub sync_periods: usize,
    pub force_record_path: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::steel_demo(),
            amplitude: 5e-7,
            frequency: 340.0,
            amplitude_schedule: None,
            foundation_nd: None,
            plan: IntegrationPlan::default(),
            sweep_f_min: 30.0,
            sweep_f_max: 3000.0,
            sweep_points: 200,
            orbit_system: OrbitSystem::Extended,
            orbit_periods: 1,
            shooting: ShootingOptions::default(),
            assimilate_mode: AssimilateMode::Extended,
            observer_perturbation: 1e-3,
            sync_periods: 300,
            force_record_path: None,
        }
    }
}

fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|p| p.0 == name)
        .map(|p| p.1)
        .ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|p| p.0).collect();
            Error::Config(format!("unknown preset {name:?} (available: {})", names.join(", ")))
        })
}

fn parse_table(text: &str, origin: &str) -> Result<Table> {
    text.parse::<Table>()
        .map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Parses `key=value`; the value is read as a TOML value, falling back to a
/// bare string.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {text:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key, value))
}

fn float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Config(format!("{key} must be a number"))),
    }
}

fn count(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::Config(format!("{key} must be a non-negative integer"))),
    }
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Config(format!("{key} must be a string")))
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&parse_table(preset_text(name)?, name)?)?;
        Ok(cfg)
    }

    /// Builds a configuration from an optional preset, an optional TOML file
    /// and overrides, applied in that order.
    pub fn load(preset: Option<&str>, path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self> {
        let mut cfg = match preset {
            Some(name) => Self::from_preset(name)?,
            None => Self::default(),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply(&parse_table(&text, &path.display().to_string())?)?;
        }
        let mut table = Table::new();
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        cfg.apply(&table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies the keys of `table`. Unknown keys are rejected.
    pub fn apply(&mut self, table: &Table) -> Result<()> {
        for key in table.keys() {
            if !KEYS.iter().any(|k| k.0 == key) {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        let get = |k: &str| table.get(k);
        let mut mass_given = false;
        if let Some(v) = get("n_beads") {
            self.chain.n_beads = count("n_beads", v)?;
        }
        if let Some(v) = get("bead_radius_m") {
            self.chain.bead_radius = float("bead_radius_m", v)?;
        }
        if let Some(v) = get("density_kg_m3") {
            self.chain.material.density = float("density_kg_m3", v)?;
        }
        if let Some(v) = get("youngs_modulus_pa") {
            self.chain.material.elastic_modulus = float("youngs_modulus_pa", v)?;
        }
        if let Some(v) = get("poisson_ratio") {
            self.chain.material.poisson_ratio = float("poisson_ratio", v)?;
        }
        if let Some(v) = get("bead_mass_kg") {
            self.chain.bead_mass = float("bead_mass_kg", v)?;
            mass_given = true;
        }
        if !mass_given && (get("bead_radius_m").is_some() || get("density_kg_m3").is_some()) {
            self.chain.bead_mass = sphere_mass(self.chain.bead_radius, self.chain.material.density);
        }
        if let Some(v) = get("damping_ns_per_m") {
            self.chain.damping = float("damping_ns_per_m", v)?;
        }
        if let Some(v) = get("wall_model") {
            self.chain.wall_model = WallModel::parse(string("wall_model", v)?)?;
        }
        if let Some(v) = get("foundation_n_per_m") {
            self.chain.foundation_stiffness = float("foundation_n_per_m", v)?;
        }
        if let Some(v) = get("foundation_hertz_fraction") {
            let frac = float("foundation_hertz_fraction", v)?;
            self.chain.foundation_stiffness = frac * contact_coefficients(&self.chain).bead_bead;
        }
        if let Some(v) = get("foundation_nd") {
            self.foundation_nd = Some(float("foundation_nd", v)?);
        }
        if let Some(v) = get("drive_amplitude_m") {
            self.amplitude = float("drive_amplitude_m", v)?;
        }
        if let Some(v) = get("drive_frequency_hz") {
            self.frequency = float("drive_frequency_hz", v)?;
        }
        if let Some(v) = get("amplitude_schedule") {
            let err = || Error::Config("amplitude_schedule must be [[frequency_hz, amplitude_m], ...]".into());
            let rows = v.as_array().ok_or_else(err)?;
            let mut knots = Vec::with_capacity(rows.len());
            for row in rows {
                let pair = row.as_array().filter(|p| p.len() == 2).ok_or_else(err)?;
                knots.push((float("amplitude_schedule", &pair[0])?, float("amplitude_schedule", &pair[1])?));
            }
            self.amplitude_schedule = Some(knots);
        }
        if let Some(v) = get("dt") {
            self.plan.dt = float("dt", v)?;
        }
        if let Some(v) = get("transient_periods") {
            self.plan.transient_periods = count("transient_periods", v)?;
        }
        if let Some(v) = get("settle_time") {
            self.plan.settle_time = float("settle_time", v)?;
        }
        if let Some(v) = get("measure_periods") {
            self.plan.measure_periods = count("measure_periods", v)?;
        }
        if let Some(v) = get("record_stride") {
            self.plan.record_stride = count("record_stride", v)?;
        }
        if let Some(v) = get("sweep_f_min_hz") {
            self.sweep_f_min = float("sweep_f_min_hz", v)?;
        }
        if let Some(v) = get("sweep_f_max_hz") {
            self.sweep_f_max = float("sweep_f_max_hz", v)?;
        }
        if let Some(v) = get("sweep_points") {
            self.sweep_points = count("sweep_points", v)?;
        }
        if let Some(v) = get("orbit_system") {
            self.orbit_system = match string("orbit_system", v)? {
                "chain" => OrbitSystem::Chain,
                "extended" => OrbitSystem::Extended,
                other => return Err(Error::Config(format!("unknown orbit_system {other:?}"))),
            };
        }
        if let Some(v) = get("orbit_periods") {
            self.orbit_periods = count("orbit_periods", v)?;
        }
        if let Some(v) = get("newton_tol") {
            self.shooting.newton_tol = float("newton_tol", v)?;
        }
        if let Some(v) = get("newton_max_iter") {
            self.shooting.max_iter = count("newton_max_iter", v)?;
        }
        if let Some(v) = get("fd_rel_step") {
            self.shooting.fd_rel_step = float("fd_rel_step", v)?;
        }
        if let Some(v) = get("tol_margin") {
            self.shooting.tol_margin = float("tol_margin", v)?;
        }
        if let Some(v) = get("assimilate_mode") {
            self.assimilate_mode = match string("assimilate_mode", v)? {
                "extended" => AssimilateMode::Extended,
                "recorded" => AssimilateMode::Recorded,
                other => return Err(Error::Config(format!("unknown assimilate_mode {other:?}"))),
            };
        }
        if let Some(v) = get("observer_perturbation") {
            self.observer_perturbation = float("observer_perturbation", v)?;
        }
        if let Some(v) = get("sync_periods") {
            self.sync_periods = count("sync_periods", v)?;
        }
        if let Some(v) = get("force_record_path") {
            self.force_record_path = Some(PathBuf::from(string("force_record_path", v)?));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        self.drive().validate()?;
        if !(self.amplitude > 0.0) {
            return Err(Error::InvalidInput("drive_amplitude_m must be > 0".into()));
        }
        self.plan.validate()?;
        if let Some(k) = self.foundation_nd {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidInput("foundation_nd must be >= 0".into()));
            }
        }
        if self.orbit_periods == 0 {
            return Err(Error::InvalidInput("orbit_periods must be >= 1".into()));
        }
        Ok(())
    }

    pub fn drive(&self) -> DriveSpec {
        DriveSpec::harmonic(self.amplitude, self.frequency)
    }

    /// Scaled parameters at the configured drive, with `foundation_nd`
    /// applied when set.
    pub fn scaled(&self) -> Result<ScaledSystem> {
        let s = nondimensionalize(&self.chain, &self.drive())?;
        Ok(match self.foundation_nd {
            Some(k) => s.with_foundation(k),
            None => s,
        })
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            config: self.chain.clone(),
            amplitude: match &self.amplitude_schedule {
                Some(knots) => AmplitudeSchedule::PiecewiseLinear(knots.clone()),
                None => AmplitudeSchedule::Constant(self.amplitude),
            },
            foundation_nd: self.foundation_nd,
            f_min: self.sweep_f_min,
            f_max: self.sweep_f_max,
            n_points: self.sweep_points,
        }
    }

    pub fn shooting(&self) -> ShootingOptions {
        ShootingOptions {
            dt: self.plan.dt,
            ..self.shooting
        }
    }
}
