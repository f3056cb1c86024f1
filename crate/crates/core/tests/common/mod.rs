//! Measurements shared by the property tests and the acceptance report.

#![allow(dead_code)]

use granular_chain::assimilation::{run_extended, run_prescribed_zeroth, run_recorded};
use granular_chain::integrate::{advance, integrate_steps, Dynamics, IntegrationPlan, DEFAULT_SCALED_DT};
use granular_chain::model::{
    nondimensionalize, ChainConfig, ChainSystem, DriveSpec, ExtendedSystem, Lattice, LeftBoundary,
    ScaledSystem, State, WallModel,
};
use granular_chain::record::ForceRecord;
use granular_chain::orbit::{
    flow_period, liouville_determinant, map_jacobian, newton_periodic, PeriodicOrbit, ShootingOptions,
};

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest relative deviation between a dimensional run converted to scaled
/// units and the scaled run, over `periods` drive periods from rest.
pub fn rescaling_error(config: &ChainConfig, amplitude: f64, frequency: f64, periods: usize) -> f64 {
    let drive = DriveSpec::harmonic(amplitude, frequency);
    let s = nondimensionalize(config, &drive).unwrap();
    let scaled = ChainSystem::scaled(&s);
    let dimensional = ChainSystem::dimensional(config, &drive).unwrap();
    let (spp, h) = IntegrationPlan::default().steps_per_period(s.drive_period());
    let steps = periods * spp;
    let n = config.n_beads;

    let mut ys = vec![0.0; 2 * n];
    let a = integrate_steps(&scaled, &mut ys, 0.0, h, steps, 10).unwrap();
    let mut yd = vec![0.0; 2 * n];
    let b = integrate_steps(&dimensional, &mut yd, 0.0, h / s.phi, steps, 10).unwrap();

    let (mut du, mut dv, mut su, mut sv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.states.iter().zip(&b.states) {
        for i in 0..n {
            du = du.max((x[i] - y[i] / s.amplitude).abs());
            dv = dv.max((x[n + i] - y[n + i] / (s.amplitude * s.phi)).abs());
            su = su.max(x[i].abs());
            sv = sv.max(x[n + i].abs());
        }
    }
    (du / su).max(dv / sv)
}

/// A single undamped bead launched at unit speed against a rigid plane from
/// `gap` away; returns `[u, v]` at time `t_end`.
pub fn bounce(gap: f64, t_end: f64, h: f64) -> Vec<f64> {
    let lattice = Lattice {
        n_beads: 1,
        mass: 1.0,
        contact: 1.0,
        wall_contact: WallModel::RigidPlane.factor(),
        damping: 0.0,
        foundation: 0.0,
    };
    let chain = ChainSystem::new(lattice, LeftBoundary::Open);
    let mut y = vec![-gap, 1.0];
    let steps = (t_end / h).round() as usize;
    advance(&chain, &mut y, 0.0, h, steps, |_, _, _| {}).unwrap();
    y
}

/// Relative speed mismatch `| |v_out| − v_in | / v_in` after one bounce at the
/// default step.
pub fn bounce_speed_reversal() -> f64 {
    let y = bounce(0.5, 6.0, DEFAULT_SCALED_DT);
    assert!(y[1] < 0.0, "bead did not rebound");
    (y[1].abs() - 1.0).abs()
}

/// Ratio of final-state errors at steps `h` and `h/2` for the bounce test.
/// The error is the RMS over contact onsets spread across one step, measured
/// against a run at `h/64`.
pub fn bounce_convergence_factor(h: f64) -> f64 {
    const OFFSETS: usize = 64;
    let t_end = 6.0;
    let (mut e1, mut e2) = (0.0, 0.0);
    for j in 0..OFFSETS {
        let gap = 0.5 + h * j as f64 / OFFSETS as f64;
        let reference = bounce(gap, t_end, h / 64.0);
        e1 += max_diff(&bounce(gap, t_end, h), &reference).powi(2);
        e2 += max_diff(&bounce(gap, t_end, h / 2.0), &reference).powi(2);
    }
    (e1 / e2).sqrt()
}

struct Harmonic;

impl Dynamics for Harmonic {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> granular_chain::Result<()> {
        dy[0] = y[1];
        dy[1] = -4.0 * y[0];
        Ok(())
    }
}

/// Ratio of final-state errors at `h` and `h/2` for a harmonic oscillator
/// (smooth right-hand side), against the exact solution.
pub fn smooth_convergence_factor(h: f64) -> f64 {
    let t_end: f64 = 10.0;
    let exact = [-0.1 * (2.0 * t_end).cos(), 0.2 * (2.0 * t_end).sin()];
    let run = |h: f64| {
        let mut y = vec![-0.1, 0.0];
        advance(&Harmonic, &mut y, 0.0, h, (t_end / h).round() as usize, |_, _, _| {}).unwrap();
        max_diff(&y, &exact)
    };
    run(h) / run(h / 2.0)
}

/// Relative drift of total energy for an undamped chain between fixed walls,
/// over `periods` characteristic periods `2π` of scaled time.
pub fn energy_drift(periods: usize) -> f64 {
    let lattice = Lattice {
        n_beads: 5,
        mass: 1.0,
        contact: 1.0,
        wall_contact: 1.0,
        damping: 0.0,
        foundation: 0.0,
    };
    let chain = ChainSystem::new(lattice, LeftBoundary::Driven { amplitude: 0.0, omega: 1.0 });
    let mut y = vec![0.0; 10];
    y[5] = 1.0;
    y[7] = -0.5;
    let e0 = chain.total_energy_at(0.0, &y);
    let h = DEFAULT_SCALED_DT;
    let steps = (periods as f64 * 2.0 * std::f64::consts::PI / h).round() as usize;
    let mut drift: f64 = 0.0;
    advance(&chain, &mut y, 0.0, h, steps, |_, t, s| {
        drift = drift.max((chain.total_energy_at(t, s) - e0).abs());
    })
    .unwrap();
    drift / e0
}

/// `|det M| / exp(∫div) − 1` on a converged orbit of a small damped chain.
pub fn liouville_mismatch() -> (f64, f64, f64) {
    let s = ScaledSystem::dimensionless(3, 0.3, 0.5, 0.01, WallModel::RigidPlane).unwrap();
    let chain = ChainSystem::scaled(&s);
    let period = s.drive_period();
    let opts = ShootingOptions {
        dt: DEFAULT_SCALED_DT,
        ..Default::default()
    };
    let plan = IntegrationPlan::default().with_periods(100, 1);
    let (spp, h) = plan.steps_per_period(period);
    let mut y = vec![0.0; chain.dim()];
    advance(&chain, &mut y, 0.0, h, 100 * spp, |_, _, _| {}).unwrap();
    let found = newton_periodic(&State::from_flat(0.0, &y), &chain, period, &opts).unwrap();
    let orbit = PeriodicOrbit {
        converged: true,
        ..found
    };
    let anchor = orbit.anchor_state.to_flat();
    let image = flow_period(&chain, &anchor, period, opts.dt).unwrap();
    let det = map_jacobian(&chain, &anchor, &image, period, &opts).unwrap().determinant();
    let liouville = liouville_determinant(&orbit, &chain, opts.dt).unwrap();
    ((det.abs() / liouville - 1.0).abs(), det, liouville)
}

/// Largest sync error for an extended run from identical chain states.
pub fn diagonal_error(system: &ScaledSystem, start: &State, periods: usize) -> f64 {
    let plan = IntegrationPlan::default()
        .with_dt(1e-2)
        .with_t_end(periods as f64 * system.drive_period())
        .with_stride(1);
    let run = run_extended(system, start, start, &plan).unwrap();
    let stored = run.sync_error.iter().fold(0.0f64, |m, e| m.max(e.1));
    let states = run
        .driver_trajectory
        .states
        .iter()
        .zip(&run.observer_trajectory.states)
        .fold(0.0f64, |m, (a, b)| m.max(max_diff(a, b)));
    stored.max(states).max(run.terminal_error)
}

/// Feeds the drive-contact force of a zeroth-bead run back through
/// `run_recorded` and returns the relative mismatch of displacements and
/// velocities.
///
/// The force record is sampled at every step of a run at half the replay
/// step, so the replay finds a sample at each of its stage times.
pub fn force_equivalence_error(
    config: &ChainConfig,
    amplitude: f64,
    frequency: f64,
    periods: f64,
    scaled_dt: f64,
) -> f64 {
    const STRIDE: usize = 1000;
    let drive = DriveSpec::harmonic(amplitude, frequency);
    let s = nondimensionalize(config, &drive).unwrap();
    let t_end = periods / frequency;
    let h = t_end / (t_end * s.phi / scaled_dt).ceil();
    let fine = IntegrationPlan::default()
        .with_dt(h / 2.0)
        .with_t_end(t_end)
        .with_stride(2 * STRIDE);
    let reference = run_prescribed_zeroth(config, amplitude, frequency, &fine).unwrap();

    let chain = ChainSystem::dimensional(config, &drive).unwrap();
    let n = config.n_beads;
    let mut y = vec![0.0; 2 * n];
    let mut forces = vec![chain.input_force_at(0.0, &y).unwrap()];
    let steps = (t_end / (h / 2.0)).ceil() as usize;
    advance(&chain, &mut y, 0.0, h / 2.0, steps, |_, t, s| {
        forces.push(chain.input_force_at(t, s).unwrap());
    })
    .unwrap();
    let record = ForceRecord::uniform(0.0, h / 2.0, forces).unwrap();

    let coarse = IntegrationPlan::default()
        .with_dt(h)
        .with_t_end(t_end - h)
        .with_stride(STRIDE);
    let replay = run_recorded(config, &record, &State::zeros(n), &coarse).unwrap();

    let (mut du, mut dv, mut su, mut sv) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (x, y) in reference.states.iter().zip(&replay.states) {
        for i in 0..n {
            du = du.max((x[i] - y[i]).abs());
            dv = dv.max((x[n + i] - y[n + i]).abs());
            su = su.max(x[i].abs());
            sv = sv.max(x[n + i].abs());
        }
    }
    (du / su).max(dv / sv)
}

/// Per-period maxima of the sync error for observers offset by each of
/// `perturbations` from the same driver, settled from rest for `settle`
/// periods.
pub fn sync_envelopes(
    system: &ScaledSystem,
    perturbations: &[f64],
    settle: usize,
    periods: usize,
    dt: f64,
) -> Vec<Vec<f64>> {
    let chain = ChainSystem::scaled(system);
    let period = system.drive_period();
    let (spp, h) = IntegrationPlan::default().with_dt(dt).steps_per_period(period);
    let mut y = vec![0.0; chain.dim()];
    advance(&chain, &mut y, 0.0, h, settle * spp, |_, _, _| {}).unwrap();
    let ext = ExtendedSystem::new(system);
    let n = system.n_beads;
    perturbations
        .iter()
        .map(|&eps| {
            let mut obs = y.clone();
            for u in &mut obs[..n] {
                *u += eps;
            }
            let mut z = ext.join(&y, &obs);
            let mut envelope = vec![0.0f64; periods];
            advance(&ext, &mut z, 0.0, h, periods * spp, |k, _, s| {
                let e = (0..n).fold(0.0f64, |m, i| m.max((s[i] - s[n + i]).abs()));
                let p = (k - 1) / spp;
                envelope[p] = envelope[p].max(e);
            })
            .unwrap();
            envelope
        })
        .collect()
}
