//! Driver/observer runs: a second chain forced by the first chain's contact
//! force, or by a measured force record.

use crate::error::{Error, Result};
use crate::integrate::{advance, integrate, Dynamics, IntegrationPlan, Trajectory};
use crate::model::{
    ChainConfig, ChainSystem, DriveSpec, ExtendedSystem, Lattice, LeftBoundary, ScaledSystem, State,
};
use crate::record::ForceRecord;

/// Synchronization threshold on `‖x − y‖∞` (scaled displacements).
pub const SYNC_TOL: f64 = 1e-6;

/// Drive periods at the end of a run over which the sync error is judged.
pub const SYNC_WINDOW_PERIODS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct AssimilationRun {
    pub driver_trajectory: Trajectory,
    pub observer_trajectory: Trajectory,
    /// `(time, ‖x − y‖∞)` at the recorded samples.
    pub sync_error: Vec<(f64, f64)>,
    /// Largest sync error over the final window, evaluated at every step.
    pub terminal_error: f64,
    pub synchronized: bool,
}

impl AssimilationRun {
    pub fn final_error(&self) -> f64 {
        self.sync_error.last().map_or(0.0, |e| e.1)
    }

    pub fn write_sync_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "error"])?;
        for (t, e) in &self.sync_error {
            w.write_record([format!("{t:.12e}"), format!("{e:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn displacement_gap(n: usize, y: &[f64]) -> f64 {
    (0..n)
        .map(|i| (y[i] - y[n + i]).abs())
        .fold(0.0, f64::max)
}

/// Integrates the driver/observer pair from the given chain states over
/// `plan.t_end` (rounded up to whole drive periods).
///
/// A non-finite state is reported as [`Error::ChainDivergence`] naming the
/// chain whose component blew up first.
pub fn run_extended(
    system: &ScaledSystem,
    driver_start: &State,
    observer_start: &State,
    plan: &IntegrationPlan,
) -> Result<AssimilationRun> {
    system.validate()?;
    plan.validate()?;
    let ext = ExtendedSystem::new(system);
    let n = ext.n_beads();
    for s in [driver_start, observer_start] {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            });
        }
    }
    let period = system.drive_period();
    let (spp, h) = plan.steps_per_period(period);
    let periods = (plan.t_end / period).ceil().max(1.0) as usize;
    let steps = periods * spp;
    let window_start = steps.saturating_sub(SYNC_WINDOW_PERIODS * spp);

    let t0 = driver_start.time;
    let mut y = ext.join(&driver_start.to_flat(), &observer_start.to_flat());
    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut sync_error = vec![(t0, displacement_gap(n, &y))];
    let mut terminal_error: f64 = if window_start == 0 { sync_error[0].1 } else { 0.0 };

    let outcome = advance(&ext, &mut y, t0, h, steps, |k, t, s| {
        if k >= window_start {
            terminal_error = terminal_error.max(displacement_gap(n, s));
        }
        if k % plan.record_stride == 0 {
            times.push(t);
            states.push(s.to_vec());
            sync_error.push((t, displacement_gap(n, s)));
        }
    });
    if let Err(e) = outcome {
        return Err(match e {
            Error::Divergence { time, component } => Error::ChainDivergence {
                chain: if component % (2 * n) < n { "driver" } else { "observer" },
                time,
            },
            other => other,
        });
    }

    let (driver_states, observer_states) = states.iter().map(|s| ext.split(s)).unzip();
    Ok(AssimilationRun {
        driver_trajectory: Trajectory {
            times: times.clone(),
            states: driver_states,
        },
        observer_trajectory: Trajectory {
            times,
            states: observer_states,
        },
        sync_error,
        synchronized: terminal_error < SYNC_TOL,
        terminal_error,
    })
}

/// Settles the driver from rest for `plan.transient_periods`, then starts the
/// observer at the driver state with every displacement shifted by
/// `perturbation`.
pub fn run_perturbed_observer(
    system: &ScaledSystem,
    perturbation: f64,
    plan: &IntegrationPlan,
) -> Result<AssimilationRun> {
    let chain = ChainSystem::scaled(system);
    let (spp, h) = plan.steps_per_period(system.drive_period());
    let mut y = vec![0.0; chain.dim()];
    let steps = plan.transient_periods_for(system.drive_period()) * spp;
    advance(&chain, &mut y, 0.0, h, steps, |_, _, _| {})?;
    let driver = State::from_flat(steps as f64 * h, &y);
    let mut observer = driver.clone();
    for u in &mut observer.displacements {
        *u += perturbation;
    }
    run_extended(system, &driver, &observer, plan)
}

/// Integrates a dimensional chain whose first bead is pushed by the recorded
/// force, from `initial` over `plan.t_end` seconds.
pub fn run_recorded(
    config: &ChainConfig,
    record: &ForceRecord,
    initial: &State,
    plan: &IntegrationPlan,
) -> Result<Trajectory> {
    plan.validate()?;
    let t0 = initial.time;
    let t1 = t0 + plan.t_end;
    let slack = 1e-9 * record.spacing();
    if t0 < record.start() - slack || t1 > record.end() + slack {
        return Err(Error::InvalidInput(format!(
            "force record spans [{}, {}] s but the run needs [{t0}, {t1}] s",
            record.start(),
            record.end()
        )));
    }
    config.validate()?;
    let chain = ChainSystem::new(Lattice::from_config(config), LeftBoundary::Force(record.clone()));
    // Step shrunk so the run ends exactly at t_end.
    let steps = (plan.t_end / plan.dt - 1e-9).ceil().max(1.0);
    integrate(&chain, initial, &plan.with_dt(plan.t_end / steps))
}

/// Integrates a dimensional chain pushed by a zeroth bead at `A0 sin(2πft)`,
/// from rest at `t = 0` over `plan.t_end` seconds.
pub fn run_prescribed_zeroth(
    config: &ChainConfig,
    amplitude: f64,
    frequency: f64,
    plan: &IntegrationPlan,
) -> Result<Trajectory> {
    if !(amplitude > 0.0 && frequency > 0.0) {
        return Err(Error::InvalidInput(
            "drive amplitude and frequency must be > 0".into(),
        ));
    }
    let chain = ChainSystem::dimensional(config, &DriveSpec::harmonic(amplitude, frequency))?;
    integrate(&chain, &State::zeros(config.n_beads), plan)
}

/// The drive-contact force along a trajectory of `chain`, as a force record.
pub fn input_force_record(chain: &ChainSystem, traj: &Trajectory) -> Result<ForceRecord> {
    if traj.len() < 2 {
        return Err(Error::InvalidInput(
            "trajectory needs at least two samples".into(),
        ));
    }
    let forces = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| chain.input_force_at(t, s))
        .collect::<Result<Vec<_>>>()?;
    ForceRecord::uniform(traj.times[0], traj.spacing(), forces)
}
