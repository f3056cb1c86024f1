//! Chain definitions, contact laws, nondimensionalization and the
//! right-hand sides of every chain variant.
//!
//! All chain variants share one lattice kernel. A lattice is described in
//! arbitrary consistent units by its bead mass, Hertz coefficient, wall
//! coefficient, contact damping and on-site foundation stiffness, so the
//! dimensional and the scaled equations run through the same code: the scaled
//! form is the lattice with unit mass, unit Hertz coefficient, damping `λ`,
//! foundation `k_nd` and a zeroth bead moving as `sin(βτ)`.
//!
//! Flat state layout for a single chain is `[u_1..u_N, v_1..v_N]`. The
//! extended driver/observer system uses `[x_1..x_N, y_1..y_N, ẋ_1..ẋ_N, ẏ_1..ẏ_N]`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::integrate::Dynamics;
use crate::record::ForceRecord;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialSpec {
    /// Young's modulus, Pa.
    pub elastic_modulus: f64,
    pub poisson_ratio: f64,
    /// kg/m³
    pub density: f64,
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.elastic_modulus > 0.0 && self.elastic_modulus.is_finite()) {
            return Err(Error::InvalidInput("elastic_modulus must be > 0".into()));
        }
        if !(0.0..0.5).contains(&self.poisson_ratio) {
            return Err(Error::InvalidInput(
                "poisson_ratio must lie in [0, 0.5)".into(),
            ));
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidInput("density must be > 0".into()));
        }
        Ok(())
    }
}

/// Contact law between the last bead and the right boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WallModel {
    /// Same coefficient as a bead-bead contact.
    IdenticalSphere,
    /// Sphere against a flat: √2 times the bead-bead coefficient.
    #[default]
    RigidPlane,
}

impl WallModel {
    pub fn factor(self) -> f64 {
        match self {
            WallModel::IdenticalSphere => 1.0,
            WallModel::RigidPlane => std::f64::consts::SQRT_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WallModel::IdenticalSphere => "identical_sphere",
            WallModel::RigidPlane => "rigid_plane",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identical_sphere" | "IdenticalSphere" => Ok(WallModel::IdenticalSphere),
            "rigid_plane" | "RigidPlane" => Ok(WallModel::RigidPlane),
            other => Err(Error::Config(format!(
                "unknown wall_model {other:?} (expected identical_sphere or rigid_plane)"
            ))),
        }
    }
}

/// Physical description of one chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub n_beads: usize,
    /// m
    pub bead_radius: f64,
    /// kg
    pub bead_mass: f64,
    /// Contact damping D, N·s/m.
    pub damping: f64,
    /// Grounding stiffness k per bead, N/m.
    pub foundation_stiffness: f64,
    pub wall_model: WallModel,
    pub material: MaterialSpec,
}

/// Mass of a solid sphere.
pub fn sphere_mass(radius: f64, density: f64) -> f64 {
    4.0 / 3.0 * PI * radius.powi(3) * density
}

impl ChainConfig {
    /// 11 steel beads, D = 100 N·s/m, no foundation, wall contact identical
    /// to a bead contact.
    pub fn steel_demo() -> Self {
        Self {
            n_beads: 11,
            bead_radius: 9.525e-3,
            bead_mass: 28.84e-3,
            damping: 100.0,
            foundation_stiffness: 0.0,
            wall_model: WallModel::IdenticalSphere,
            material: MaterialSpec {
                elastic_modulus: 193e9,
                poisson_ratio: 0.3,
                density: 7850.0,
            },
        }
    }

    /// 11 E52100 beads on flexures: D = 35.4 N·s/m and grounding stiffness
    /// 0.1% of the Hertz coefficient.
    pub fn e52100_fixture() -> Self {
        let material = MaterialSpec {
            elastic_modulus: 210e9,
            poisson_ratio: 0.3,
            density: 7850.0,
        };
        let radius = 12.7e-3;
        let mut cfg = Self {
            n_beads: 11,
            bead_radius: radius,
            bead_mass: sphere_mass(radius, material.density),
            damping: 35.4,
            foundation_stiffness: 0.0,
            wall_model: WallModel::RigidPlane,
            material,
        };
        cfg.foundation_stiffness = 1e-3 * contact_coefficients(&cfg).bead_bead;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        if self.n_beads < 2 {
            return Err(Error::InvalidInput("n_beads must be >= 2".into()));
        }
        if !(self.bead_radius > 0.0 && self.bead_radius.is_finite()) {
            return Err(Error::InvalidInput("bead_radius must be > 0".into()));
        }
        if !(self.bead_mass > 0.0 && self.bead_mass.is_finite()) {
            return Err(Error::InvalidInput("bead_mass must be > 0".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidInput("damping must be >= 0".into()));
        }
        if !(self.foundation_stiffness >= 0.0 && self.foundation_stiffness.is_finite()) {
            return Err(Error::InvalidInput(
                "foundation_stiffness must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveKind {
    HarmonicDisplacement,
    RecordedForce,
}

/// Left-end excitation: a zeroth bead moving as `A0 sin(2πft)`, or a
/// measured force applied directly to bead 1.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveSpec {
    pub kind: DriveKind,
    /// Displacement amplitude A0, m.
    pub amplitude: Option<f64>,
    /// Hz
    pub frequency: f64,
    pub recorded: Option<ForceRecord>,
}

impl DriveSpec {
    pub fn harmonic(amplitude: f64, frequency: f64) -> Self {
        Self {
            kind: DriveKind::HarmonicDisplacement,
            amplitude: Some(amplitude),
            frequency,
            recorded: None,
        }
    }

    /// Harmonic drive given its velocity amplitude, `A0 = V0 / 2πf`.
    pub fn from_velocity_amplitude(velocity_amplitude: f64, frequency: f64) -> Self {
        Self::harmonic(velocity_amplitude / (2.0 * PI * frequency), frequency)
    }

    pub fn recorded(record: ForceRecord, frequency: f64) -> Self {
        Self {
            kind: DriveKind::RecordedForce,
            amplitude: None,
            frequency,
            recorded: Some(record),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "drive frequency must be > 0 (got {})",
                self.frequency
            )));
        }
        match self.kind {
            DriveKind::HarmonicDisplacement => {
                if self.recorded.is_some() {
                    return Err(Error::InvalidInput(
                        "harmonic drive must not carry a force record".into(),
                    ));
                }
                match self.amplitude {
                    Some(a) if a.is_finite() && a >= 0.0 => Ok(()),
                    _ => Err(Error::InvalidInput(
                        "harmonic drive needs a finite amplitude >= 0".into(),
                    )),
                }
            }
            DriveKind::RecordedForce => {
                if self.amplitude.is_some() || self.recorded.is_none() {
                    return Err(Error::InvalidInput(
                        "recorded drive needs a force record and no amplitude".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

/// Nondimensional parameters of a harmonically driven chain plus the scales
/// needed to map results back to SI units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledSystem {
    /// Time scale factor φ, 1/s.
    pub phi: f64,
    pub lambda: f64,
    pub beta: f64,
    pub k_nd: f64,
    pub n_beads: usize,
    pub wall_model: WallModel,
    /// Length scale A0, m.
    pub amplitude: f64,
    /// Mass scale m, kg.
    pub mass: f64,
}

impl ScaledSystem {
    /// A purely dimensionless system (unit scales).
    pub fn dimensionless(
        n_beads: usize,
        lambda: f64,
        beta: f64,
        k_nd: f64,
        wall_model: WallModel,
    ) -> Result<Self> {
        let s = Self {
            phi: 1.0,
            lambda,
            beta,
            k_nd,
            n_beads,
            wall_model,
            amplitude: 1.0,
            mass: 1.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_beads < 2 {
            return Err(Error::InvalidInput("n_beads must be >= 2".into()));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(Error::DegenerateScaling("phi must be > 0".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput("lambda must be >= 0".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput("beta must be > 0".into()));
        }
        if !(self.k_nd >= 0.0 && self.k_nd.is_finite()) {
            return Err(Error::InvalidInput("k_nd must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_foundation(mut self, k_nd: f64) -> Self {
        self.k_nd = k_nd;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Drive period in scaled time, `2π/β`.
    pub fn drive_period(&self) -> f64 {
        2.0 * PI / self.beta
    }

    /// Force in N corresponding to a unit scaled force, `m φ² A0`.
    pub fn force_scale(&self) -> f64 {
        self.mass * self.phi * self.phi * self.amplitude
    }

    pub fn physical_time(&self, tau: f64) -> f64 {
        tau / self.phi
    }

    pub fn physical_displacement(&self, x: f64) -> f64 {
        x * self.amplitude
    }

    pub fn physical_velocity(&self, xdot: f64) -> f64 {
        xdot * self.amplitude * self.phi
    }

    /// Contact damping D in N·s/m.
    pub fn physical_damping(&self) -> f64 {
        self.lambda * self.mass * self.phi
    }

    /// Drive frequency f in Hz.
    pub fn physical_frequency(&self) -> f64 {
        self.beta * self.phi / (2.0 * PI)
    }

    /// Foundation stiffness k in N/m.
    pub fn physical_foundation(&self) -> f64 {
        self.k_nd * self.mass * self.phi * self.phi
    }
}

/// A phase point: per-bead displacements and velocities at a time.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub displacements: Vec<f64>,
    pub velocities: Vec<f64>,
    pub time: f64,
}

impl State {
    pub fn zeros(n: usize) -> Self {
        Self {
            displacements: vec![0.0; n],
            velocities: vec![0.0; n],
            time: 0.0,
        }
    }

    /// Splits a flat `[displacements, velocities]` vector.
    pub fn from_flat(time: f64, y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self {
            displacements: y[..n].to_vec(),
            velocities: y[n..2 * n].to_vec(),
            time,
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.displacements.len());
        y.extend_from_slice(&self.displacements);
        y.extend_from_slice(&self.velocities);
        y
    }

    pub fn len(&self) -> usize {
        self.displacements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacements.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Contact laws

/// `coefficient · overlap^{3/2}` for positive overlap, else zero.
pub fn hertz_force(overlap: f64, coefficient: f64) -> Result<f64> {
    if !overlap.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite overlap {overlap}")));
    }
    if !(coefficient > 0.0) {
        return Err(Error::InvalidInput("Hertz coefficient must be > 0".into()));
    }
    Ok(hertz(overlap, coefficient))
}

#[inline(always)]
fn hertz(overlap: f64, coefficient: f64) -> f64 {
    if overlap > 0.0 {
        coefficient * overlap * overlap.sqrt()
    } else {
        0.0
    }
}

#[inline(always)]
fn hertz_potential(overlap: f64, coefficient: f64) -> f64 {
    if overlap > 0.0 {
        0.4 * coefficient * overlap * overlap * overlap.sqrt()
    } else {
        0.0
    }
}

/// Viscous contact force, active only while the contact is closed.
pub fn damping_force(rel_velocity: f64, in_contact: bool, damping: f64) -> f64 {
    if in_contact {
        damping * rel_velocity
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactCoefficients {
    /// N·m^{-3/2}
    pub bead_bead: f64,
    pub bead_wall: f64,
}

/// Hertz coefficients `E√(2R) / 3(1−ν²)` and the matching wall coefficient.
pub fn contact_coefficients(config: &ChainConfig) -> ContactCoefficients {
    let m = &config.material;
    let bead_bead = m.elastic_modulus * (2.0 * config.bead_radius).sqrt()
        / (3.0 * (1.0 - m.poisson_ratio * m.poisson_ratio));
    ContactCoefficients {
        bead_bead,
        bead_wall: bead_bead * config.wall_model.factor(),
    }
}

pub fn nondimensionalize(config: &ChainConfig, drive: &DriveSpec) -> Result<ScaledSystem> {
    config.validate()?;
    drive.validate()?;
    if drive.kind != DriveKind::HarmonicDisplacement {
        return Err(Error::InvalidInput(
            "scaling requires a harmonic displacement drive".into(),
        ));
    }
    let amplitude = drive.amplitude.unwrap_or(0.0);
    if !(amplitude > 0.0) {
        return Err(Error::DegenerateScaling(
            "zero drive amplitude leaves no length scale".into(),
        ));
    }
    let c = contact_coefficients(config).bead_bead;
    let m = config.bead_mass;
    let phi = (c * amplitude.sqrt() / m).sqrt();
    let s = ScaledSystem {
        phi,
        lambda: config.damping / (m * phi),
        beta: 2.0 * PI * drive.frequency / phi,
        k_nd: config.foundation_stiffness / (m * phi * phi),
        n_beads: config.n_beads,
        wall_model: config.wall_model,
        amplitude,
        mass: m,
    };
    s.validate()?;
    Ok(s)
}

// ---------------------------------------------------------------------------
// Lattice kernel

/// Units-agnostic chain parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub n_beads: usize,
    pub mass: f64,
    /// Bead-bead Hertz coefficient (also used against the zeroth bead).
    pub contact: f64,
    pub wall_contact: f64,
    pub damping: f64,
    pub foundation: f64,
}

impl Lattice {
    pub fn from_config(config: &ChainConfig) -> Self {
        let cc = contact_coefficients(config);
        Self {
            n_beads: config.n_beads,
            mass: config.bead_mass,
            contact: cc.bead_bead,
            wall_contact: cc.bead_wall,
            damping: config.damping,
            foundation: config.foundation_stiffness,
        }
    }

    pub fn from_scaled(s: &ScaledSystem) -> Self {
        Self {
            n_beads: s.n_beads,
            mass: 1.0,
            contact: 1.0,
            wall_contact: s.wall_model.factor(),
            damping: s.lambda,
            foundation: s.k_nd,
        }
    }

    /// Elastic plus gated viscous force of one contact, positive in compression.
    #[inline(always)]
    fn contact_force(&self, coefficient: f64, overlap: f64, rate: f64) -> f64 {
        if overlap > 0.0 {
            coefficient * overlap * overlap.sqrt() + self.damping * rate
        } else {
            0.0
        }
    }

    /// Accelerations of all beads given the external force on bead 1.
    #[inline]
    fn accelerations(&self, u: &[f64], v: &[f64], left_force: f64, acc: &mut [f64]) {
        let n = self.n_beads;
        for i in 0..n {
            acc[i] = -self.foundation * u[i];
        }
        acc[0] += left_force;
        for i in 0..n - 1 {
            let f = self.contact_force(self.contact, u[i] - u[i + 1], v[i] - v[i + 1]);
            acc[i] -= f;
            acc[i + 1] += f;
        }
        acc[n - 1] -= self.contact_force(self.wall_contact, u[n - 1], v[n - 1]);
        let inv_m = 1.0 / self.mass;
        for a in acc.iter_mut() {
            *a *= inv_m;
        }
    }

    /// Number of closed contacts touching each bead, excluding the left drive contact.
    fn closed_contacts(&self, u: &[f64]) -> usize {
        let n = self.n_beads;
        let pairs = (0..n - 1).filter(|&i| u[i] - u[i + 1] > 0.0).count();
        2 * pairs + usize::from(u[n - 1] > 0.0)
    }

    pub fn transmitted_force(&self, u_last: f64) -> f64 {
        hertz(u_last, self.wall_contact)
    }

    pub fn kinetic_energies(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|vi| 0.5 * self.mass * vi * vi).collect()
    }

    /// Hertz potentials of internal and wall contacts plus foundation energy.
    pub fn potential_energy(&self, u: &[f64]) -> f64 {
        let n = self.n_beads;
        let mut pe: f64 = (0..n - 1)
            .map(|i| hertz_potential(u[i] - u[i + 1], self.contact))
            .sum();
        pe += hertz_potential(u[n - 1], self.wall_contact);
        pe += u.iter().map(|x| 0.5 * self.foundation * x * x).sum::<f64>();
        pe
    }
}

/// Left-end forcing of a single chain.
#[derive(Clone, Debug, PartialEq)]
pub enum LeftBoundary {
    /// Zeroth bead at `amplitude · sin(omega t)`; zero amplitude is a fixed wall.
    Driven { amplitude: f64, omega: f64 },
    /// Prescribed force on bead 1, no contact gating.
    Force(ForceRecord),
    /// Nothing to the left of bead 1.
    Open,
}

/// One chain (dimensional or scaled) with its left-end forcing.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSystem {
    pub lattice: Lattice,
    pub left: LeftBoundary,
}

impl ChainSystem {
    pub fn new(lattice: Lattice, left: LeftBoundary) -> Self {
        Self { lattice, left }
    }

    /// Dimensional chain (SI units, time in s) for a harmonic or recorded drive.
    pub fn dimensional(config: &ChainConfig, drive: &DriveSpec) -> Result<Self> {
        config.validate()?;
        drive.validate()?;
        let left = match drive.kind {
            DriveKind::HarmonicDisplacement => LeftBoundary::Driven {
                amplitude: drive.amplitude.unwrap_or(0.0),
                omega: 2.0 * PI * drive.frequency,
            },
            DriveKind::RecordedForce => {
                LeftBoundary::Force(drive.recorded.clone().expect("validated"))
            }
        };
        Ok(Self::new(Lattice::from_config(config), left))
    }

    /// Scaled chain driven by a zeroth bead at `sin(βτ)`.
    pub fn scaled(s: &ScaledSystem) -> Self {
        Self::new(
            Lattice::from_scaled(s),
            LeftBoundary::Driven {
                amplitude: 1.0,
                omega: s.beta,
            },
        )
    }

    pub fn n_beads(&self) -> usize {
        self.lattice.n_beads
    }

    /// Force exerted on bead 1 from the left at time `t`.
    #[inline]
    pub fn input_force(&self, t: f64, u1: f64, v1: f64) -> Result<f64> {
        match &self.left {
            LeftBoundary::Driven { amplitude, omega } => {
                let (s, c) = (omega * t).sin_cos();
                let overlap = amplitude * s - u1;
                let rate = amplitude * omega * c - v1;
                Ok(self.lattice.contact_force(self.lattice.contact, overlap, rate))
            }
            LeftBoundary::Force(record) => record.force_at(t),
            LeftBoundary::Open => Ok(0.0),
        }
    }

    pub fn input_force_at(&self, t: f64, y: &[f64]) -> Result<f64> {
        let n = self.n_beads();
        self.input_force(t, y[0], y[n])
    }

    pub fn transmitted_force_at(&self, y: &[f64]) -> f64 {
        self.lattice.transmitted_force(y[self.n_beads() - 1])
    }

    pub fn kinetic_energies_at(&self, y: &[f64]) -> Vec<f64> {
        self.lattice.kinetic_energies(&y[self.n_beads()..])
    }

    /// Total potential energy, including the contact with a driven zeroth bead.
    pub fn potential_energy_at(&self, t: f64, y: &[f64]) -> f64 {
        let n = self.n_beads();
        let mut pe = self.lattice.potential_energy(&y[..n]);
        if let LeftBoundary::Driven { amplitude, omega } = self.left {
            pe += hertz_potential(amplitude * (omega * t).sin() - y[0], self.lattice.contact);
        }
        pe
    }

    pub fn total_energy_at(&self, t: f64, y: &[f64]) -> f64 {
        self.kinetic_energies_at(y).iter().sum::<f64>() + self.potential_energy_at(t, y)
    }

    /// Drive period in model time, if the forcing is periodic.
    pub fn drive_period(&self) -> Option<f64> {
        match self.left {
            LeftBoundary::Driven { amplitude, omega } if amplitude != 0.0 => {
                Some(2.0 * PI / omega)
            }
            _ => None,
        }
    }
}

impl Dynamics for ChainSystem {
    fn dim(&self) -> usize {
        2 * self.lattice.n_beads
    }

    #[inline]
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.lattice.n_beads;
        let (u, v) = y.split_at(n);
        let f_in = self.input_force(t, u[0], v[0])?;
        let (du, dv) = dy.split_at_mut(n);
        du.copy_from_slice(v);
        self.lattice.accelerations(u, v, f_in, dv);
        Ok(())
    }

    fn divergence(&self, t: f64, y: &[f64]) -> Option<f64> {
        let n = self.lattice.n_beads;
        let mut closed = self.lattice.closed_contacts(&y[..n]);
        if let LeftBoundary::Driven { amplitude, omega } = self.left {
            if amplitude * (omega * t).sin() - y[0] > 0.0 {
                closed += 1;
            }
        }
        Some(-(self.lattice.damping / self.lattice.mass) * closed as f64)
    }
}

/// Driver chain `x` forced by a moving zeroth bead, and observer chain `y`
/// forced by the driver's drive-contact force.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedSystem {
    pub driver: ChainSystem,
    pub observer: Lattice,
}

impl ExtendedSystem {
    pub fn new(s: &ScaledSystem) -> Self {
        let driver = ChainSystem::scaled(s);
        let observer = driver.lattice;
        Self { driver, observer }
    }

    pub fn n_beads(&self) -> usize {
        self.driver.n_beads()
    }

    /// Splits a flat extended state into the two single-chain flat states.
    pub fn split(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_beads();
        let mut x = Vec::with_capacity(2 * n);
        x.extend_from_slice(&y[..n]);
        x.extend_from_slice(&y[2 * n..3 * n]);
        let mut o = Vec::with_capacity(2 * n);
        o.extend_from_slice(&y[n..2 * n]);
        o.extend_from_slice(&y[3 * n..4 * n]);
        (x, o)
    }

    /// Joins driver and observer flat states into one extended state.
    pub fn join(&self, driver: &[f64], observer: &[f64]) -> Vec<f64> {
        let n = self.n_beads();
        let mut y = Vec::with_capacity(4 * n);
        y.extend_from_slice(&driver[..n]);
        y.extend_from_slice(&observer[..n]);
        y.extend_from_slice(&driver[n..2 * n]);
        y.extend_from_slice(&observer[n..2 * n]);
        y
    }
}

impl Dynamics for ExtendedSystem {
    fn dim(&self) -> usize {
        4 * self.n_beads()
    }

    #[inline]
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n_beads();
        let (pos, vel) = y.split_at(2 * n);
        let (xu, yu) = pos.split_at(n);
        let (xv, yv) = vel.split_at(n);
        let f_in = self.driver.input_force(t, xu[0], xv[0])?;
        let (dpos, dvel) = dy.split_at_mut(2 * n);
        dpos.copy_from_slice(vel);
        let (dxv, dyv) = dvel.split_at_mut(n);
        self.driver.lattice.accelerations(xu, xv, f_in, dxv);
        self.observer.accelerations(yu, yv, f_in, dyv);
        Ok(())
    }

    fn divergence(&self, t: f64, y: &[f64]) -> Option<f64> {
        let n = self.n_beads();
        let (x, o) = self.split(y);
        let driver = self.driver.divergence(t, &x)?;
        let observer =
            -(self.observer.damping / self.observer.mass) * self.observer.closed_contacts(&o[..n]) as f64;
        Some(driver + observer)
    }
}

// ---------------------------------------------------------------------------
// Variant dispatch

/// Which set of equations of motion to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModelVariant {
    /// SI units, time in seconds; harmonic zeroth bead or recorded force per
    /// the drive kind. Foundation and wall law follow the config.
    Dimensional,
    /// Scaled equations with zeroth bead at `sin(βτ)`; `k_nd = k/(mφ²)`.
    Scaled,
    /// Scaled driver/observer pair. `foundation_nd` overrides the scaled
    /// foundation stiffness when given.
    Extended { foundation_nd: Option<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Chain(ChainSystem),
    Extended(ExtendedSystem),
}

impl Model {
    pub fn build(variant: ModelVariant, config: &ChainConfig, drive: &DriveSpec) -> Result<Self> {
        match variant {
            ModelVariant::Dimensional => Ok(Model::Chain(ChainSystem::dimensional(config, drive)?)),
            ModelVariant::Scaled => {
                let s = nondimensionalize(config, drive)?;
                Ok(Model::Chain(ChainSystem::scaled(&s)))
            }
            ModelVariant::Extended { foundation_nd } => {
                let mut s = nondimensionalize(config, drive)?;
                if let Some(k) = foundation_nd {
                    s = s.with_foundation(k);
                }
                s.validate()?;
                Ok(Model::Extended(ExtendedSystem::new(&s)))
            }
        }
    }
}

impl Dynamics for Model {
    fn dim(&self) -> usize {
        match self {
            Model::Chain(c) => c.dim(),
            Model::Extended(e) => e.dim(),
        }
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        match self {
            Model::Chain(c) => c.eval(t, y, dy),
            Model::Extended(e) => e.eval(t, y, dy),
        }
    }

    fn divergence(&self, t: f64, y: &[f64]) -> Option<f64> {
        match self {
            Model::Chain(c) => c.divergence(t, y),
            Model::Extended(e) => e.divergence(t, y),
        }
    }
}

/// Time derivative of `state` under the chosen variant. The returned state
/// holds `(du/dt, dv/dt)` in its displacement/velocity slots.
pub fn rhs(
    state: &State,
    variant: ModelVariant,
    config: &ChainConfig,
    drive: &DriveSpec,
) -> Result<State> {
    let model = Model::build(variant, config, drive)?;
    if state.displacements.len() != state.velocities.len() {
        return Err(Error::InvalidInput(
            "displacements and velocities differ in length".into(),
        ));
    }
    let y = state.to_flat();
    if y.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: y.len(),
        });
    }
    let mut dy = vec![0.0; y.len()];
    model.eval(state.time, &y, &mut dy)?;
    Ok(State::from_flat(state.time, &dy))
}

/// Hertz force of the last bead on the right wall, N.
pub fn transmitted_force(state: &State, config: &ChainConfig) -> f64 {
    let u_last = state.displacements[config.n_beads - 1];
    hertz(u_last, contact_coefficients(config).bead_wall)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Energies {
    /// J, per bead.
    pub kinetic: Vec<f64>,
    /// J, internal and wall contacts plus foundation.
    pub potential: f64,
}

impl Energies {
    pub fn total(&self) -> f64 {
        self.kinetic.iter().sum::<f64>() + self.potential
    }
}

pub fn energies(state: &State, config: &ChainConfig) -> Energies {
    let lattice = Lattice::from_config(config);
    Energies {
        kinetic: lattice.kinetic_energies(&state.velocities),
        potential: lattice.potential_energy(&state.displacements),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn hertz_force_contact_law() {
        assert_eq!(hertz_force(-1e-6, 5.0).unwrap(), 0.0);
        assert_eq!(hertz_force(0.0, 5.0).unwrap(), 0.0);
        let f = hertz_force(1e-6, 9.7575e9).unwrap();
        assert!(close(f, 9.7575, 1e-12));
        assert!(hertz_force(f64::NAN, 1.0).is_err());
        assert!(hertz_force(f64::INFINITY, 1.0).is_err());
    }

    #[test]
    fn hertz_force_is_c1_at_contact() {
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let d = 10f64.powi(-k);
            let slope = hertz_force(d, 1.0).unwrap() / d;
            assert!(slope < prev);
            prev = slope;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn contact_coefficients_for_both_parameter_sets() {
        let demo = ChainConfig::steel_demo();
        let cc = contact_coefficients(&demo);
        assert!(close(cc.bead_bead, 9.7575e9, 1e-4));
        assert_eq!(cc.bead_wall, cc.bead_bead);

        let fixture = ChainConfig::e52100_fixture();
        let cc = contact_coefficients(&fixture);
        assert!(close(cc.bead_bead, 1.2259e10, 1e-4));
        assert!(close(cc.bead_wall, std::f64::consts::SQRT_2 * cc.bead_bead, 1e-15));

        let mut nu0 = demo.clone();
        nu0.material.poisson_ratio = 0.0;
        let ratio = contact_coefficients(&demo).bead_bead / contact_coefficients(&nu0).bead_bead;
        assert!(close(1.0 / ratio, 0.91, 1e-12));
    }

    #[test]
    fn derived_fixture_mass() {
        let cfg = ChainConfig::e52100_fixture();
        assert!(close(cfg.bead_mass, 0.0673, 2e-3));
        assert!(close(
            cfg.foundation_stiffness,
            contact_coefficients(&cfg).bead_bead / 1000.0,
            1e-12
        ));
    }

    #[test]
    fn damping_force_gating() {
        assert_eq!(damping_force(0.1, false, 100.0), 0.0);
        assert_eq!(damping_force(0.0, true, 100.0), 0.0);
        assert!(close(damping_force(0.1, true, 35.4), 3.54, 1e-12));
    }

    #[test]
    fn scaling_of_demo_set() {
        let cfg = ChainConfig::steel_demo();
        let s = nondimensionalize(&cfg, &DriveSpec::harmonic(5e-7, 340.0)).unwrap();
        assert!(close(s.phi, 1.547e4, 1e-3));
        assert!(close(s.lambda, 0.224, 2e-3));
        assert!(close(s.beta, 0.1381, 1e-3));
        assert_eq!(s.k_nd, 0.0);

        let mut undamped = cfg.clone();
        undamped.damping = 0.0;
        let s = nondimensionalize(&undamped, &DriveSpec::harmonic(5e-7, 340.0)).unwrap();
        assert_eq!(s.lambda, 0.0);

        assert!(matches!(
            nondimensionalize(&cfg, &DriveSpec::harmonic(0.0, 340.0)),
            Err(Error::DegenerateScaling(_))
        ));
    }

    #[test]
    fn scaling_round_trip() {
        let cfg = ChainConfig::e52100_fixture();
        let drive = DriveSpec::harmonic(9e-6, 73.0);
        let s = nondimensionalize(&cfg, &drive).unwrap();
        assert!(close(s.physical_damping(), cfg.damping, 1e-12));
        assert!(close(s.physical_frequency(), drive.frequency, 1e-12));
        assert!(close(s.physical_foundation(), cfg.foundation_stiffness, 1e-12));
        assert!(close(s.physical_displacement(1.0), 9e-6, 1e-12));
    }

    #[test]
    fn velocity_amplitude_drive() {
        let d = DriveSpec::from_velocity_amplitude(2.0 * PI * 60.0 * 7e-6, 60.0);
        assert!(close(d.amplitude.unwrap(), 7e-6, 1e-12));
    }

    #[test]
    fn rhs_zero_state_is_equilibrium() {
        let cfg = ChainConfig::steel_demo();
        let drive = DriveSpec::harmonic(5e-7, 340.0);
        let d = rhs(&State::zeros(11), ModelVariant::Scaled, &cfg, &drive).unwrap();
        assert!(d.displacements.iter().chain(&d.velocities).all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_unit_overlap_on_first_bead() {
        let s = ScaledSystem::dimensionless(3, 0.0, 0.5, 0.0, WallModel::IdenticalSphere).unwrap();
        let chain = ChainSystem::scaled(&s);
        // sin(βτ) = 1 at βτ = π/2, x_1 = 0 gives a unit overlap.
        let t = PI / 2.0 / 0.5;
        let mut st = State::zeros(3);
        st.displacements = vec![0.0, 0.5, 0.5];
        let mut dy = vec![0.0; 6];
        chain.eval(t, &st.to_flat(), &mut dy).unwrap();
        assert!(close(dy[3], 1.0, 1e-12));
        assert_eq!(dy[4], 0.0);
    }

    #[test]
    fn rhs_rejects_dimension_mismatch() {
        let cfg = ChainConfig::steel_demo();
        let drive = DriveSpec::harmonic(5e-7, 340.0);
        let err = rhs(&State::zeros(5), ModelVariant::Scaled, &cfg, &drive).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 22, got: 10 }));
        let err = rhs(
            &State::zeros(11),
            ModelVariant::Extended { foundation_nd: None },
            &cfg,
            &drive,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 44, got: 22 }));
    }

    #[test]
    fn rhs_recorded_force_outside_span() {
        let cfg = ChainConfig::e52100_fixture();
        let rec = ForceRecord::new(&[(0.0, 1.0), (0.01, 1.0)]).unwrap();
        let drive = DriveSpec::recorded(rec, 60.0);
        let mut st = State::zeros(11);
        st.time = 0.005;
        let d = rhs(&st, ModelVariant::Dimensional, &cfg, &drive).unwrap();
        assert!(close(d.velocities[0], 1.0 / cfg.bead_mass, 1e-12));
        st.time = 0.02;
        assert!(matches!(
            rhs(&st, ModelVariant::Dimensional, &cfg, &drive),
            Err(Error::OutsideRecord { .. })
        ));
    }

    #[test]
    fn extended_halves_coincide_for_identical_states() {
        let cfg = ChainConfig::e52100_fixture();
        let drive = DriveSpec::harmonic(1e-5, 60.0);
        let variant = ModelVariant::Extended {
            foundation_nd: Some(1e-3),
        };
        let mut st = State::zeros(22);
        let chain: Vec<f64> = (0..11).map(|i| 0.3 - 0.07 * i as f64).collect();
        let vel: Vec<f64> = (0..11).map(|i| 0.01 * (i as f64).sin()).collect();
        st.displacements = [chain.clone(), chain].concat();
        st.velocities = [vel.clone(), vel].concat();
        st.time = 3.0;
        let d = rhs(&st, variant, &cfg, &drive).unwrap();
        assert_eq!(d.displacements[..11], d.displacements[11..]);
        assert_eq!(d.velocities[..11], d.velocities[11..]);
    }

    #[test]
    fn transmitted_force_formula() {
        let cfg = ChainConfig::e52100_fixture();
        let mut st = State::zeros(11);
        st.displacements[10] = -1e-7;
        assert_eq!(transmitted_force(&st, &cfg), 0.0);
        st.displacements[10] = 1e-6;
        let f = transmitted_force(&st, &cfg);
        let expected = 2.0 * 210e9 * 0.0127f64.sqrt() * 1e-9 / (3.0 * 0.91);
        assert!(close(f, expected, 1e-12));
        assert!(close(f, 17.34, 1e-3));
        st.displacements[10] = 2e-6;
        assert!(close(transmitted_force(&st, &cfg) / f, 2f64.powf(1.5), 1e-12));
    }

    #[test]
    fn kinetic_energy_of_one_bead() {
        let cfg = ChainConfig::steel_demo();
        let mut st = State::zeros(11);
        assert!(energies(&st, &cfg).kinetic.iter().all(|&k| k == 0.0));
        st.velocities[4] = 1.0;
        let e = energies(&st, &cfg);
        assert!(close(e.kinetic[4], 14.42e-3, 1e-12));
        assert_eq!(e.potential, 0.0);
    }

    #[test]
    fn internal_forces_balance() {
        let lattice = Lattice {
            n_beads: 6,
            mass: 2.0,
            contact: 3.0,
            wall_contact: 0.0,
            damping: 0.7,
            foundation: 0.0,
        };
        let chain = ChainSystem::new(lattice, LeftBoundary::Open);
        let y: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.13).collect();
        let mut dy = vec![0.0; 12];
        chain.eval(0.0, &y, &mut dy).unwrap();
        let net: f64 = dy[6..].iter().sum();
        assert!(net.abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ChainConfig::steel_demo();
        cfg.n_beads = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ChainConfig::steel_demo();
        cfg.material.poisson_ratio = 0.5;
        assert!(cfg.validate().is_err());
        assert!(DriveSpec::harmonic(1e-6, 0.0).validate().is_err());
    }
}
