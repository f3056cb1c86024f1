//! Fixed-step classical Runge–Kutta time stepping.
//!
//! The contact damping is switched on and off by the sign of each overlap,
//! which makes the right-hand side discontinuous. A small fixed step keeps
//! the discrete flow deterministic and lets the stroboscopic map be a plain
//! composition of steps (no step-size controller reacting to contacts).

use crate::error::{Error, Result};
use crate::model::State;

/// A first-order system `dy/dt = f(t, y)`.
pub trait Dynamics {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Trace of the Jacobian `∂f/∂y`, where the model can provide it.
    fn divergence(&self, _t: f64, _y: &[f64]) -> Option<f64> {
        None
    }
}

impl<T: Dynamics + ?Sized> Dynamics for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (**self).eval(t, y, dy)
    }

    fn divergence(&self, t: f64, y: &[f64]) -> Option<f64> {
        (**self).divergence(t, y)
    }
}

/// Default step in scaled time units.
pub const DEFAULT_SCALED_DT: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationPlan {
    pub dt: f64,
    pub t_end: f64,
    /// Keep one sample every `record_stride` steps.
    pub record_stride: usize,
    pub transient_periods: usize,
    pub measure_periods: usize,
    /// Minimum transient duration in model time; the transient covers
    /// whichever is longer, this or `transient_periods`.
    pub settle_time: f64,
}

impl Default for IntegrationPlan {
    fn default() -> Self {
        Self {
            dt: DEFAULT_SCALED_DT,
            t_end: 1.0,
            record_stride: 10,
            transient_periods: 200,
            measure_periods: 50,
            settle_time: 0.0,
        }
    }
}

impl IntegrationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput("dt must be > 0".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidInput("t_end must be > 0".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidInput("record_stride must be >= 1".into()));
        }
        if !(self.settle_time >= 0.0 && self.settle_time.is_finite()) {
            return Err(Error::InvalidInput("settle_time must be >= 0".into()));
        }
        if self.measure_periods == 0 {
            return Err(Error::InvalidInput("measure_periods must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_periods(mut self, transient: usize, measure: usize) -> Self {
        self.transient_periods = transient;
        self.measure_periods = measure;
        self
    }

    pub fn with_settle_time(mut self, settle_time: f64) -> Self {
        self.settle_time = settle_time;
        self
    }

    /// Whole drive periods discarded before measuring.
    pub fn transient_periods_for(&self, period: f64) -> usize {
        let by_time = (self.settle_time / period).ceil() as usize;
        self.transient_periods.max(by_time)
    }

    /// Number of whole steps per drive period and the matching step size,
    /// no larger than `dt`.
    pub fn steps_per_period(&self, period: f64) -> (usize, f64) {
        let n = (period / self.dt).ceil().max(1.0) as usize;
        (n, period / n as f64)
    }
}

/// Sampled time history of a flat state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> State {
        State::from_flat(self.times[i], &self.states[i])
    }

    pub fn last(&self) -> Option<State> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    /// Sample spacing, assuming at least two samples.
    pub fn spacing(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// One component over time.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }

    pub fn map<F: FnMut(f64, &[f64]) -> f64>(&self, mut f: F) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, s)| f(t, s))
            .collect()
    }
}

/// Reusable RK4 stage storage.
#[derive(Clone, Debug, Default)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// One step from `(t, y)` to `(t + h, y)`, in place.
    #[inline]
    pub fn step<D: Dynamics + ?Sized>(&mut self, sys: &D, t: f64, h: f64, y: &mut [f64]) -> Result<()> {
        let half = 0.5 * h;
        sys.eval(t, y, &mut self.k1)?;
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *tmp = yi + half * k;
        }
        sys.eval(t + half, &self.tmp, &mut self.k2)?;
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *tmp = yi + half * k;
        }
        sys.eval(t + half, &self.tmp, &mut self.k3)?;
        for ((tmp, &yi), &k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *tmp = yi + h * k;
        }
        sys.eval(t + h, &self.tmp, &mut self.k4)?;
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] += sixth * (self.k1[i] + 2.0 * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    match y.iter().position(|v| !v.is_finite()) {
        Some(component) => Err(Error::Divergence { time: t, component }),
        None => Ok(()),
    }
}

/// Advances `y` by `steps` steps of size `h` starting at `t0`. Step times are
/// `t0 + k h` (computed by multiplication, not accumulation). `observe` is
/// called after every step with the step number `k` (1-based) and the time.
pub fn advance<D, F>(sys: &D, y: &mut [f64], t0: f64, h: f64, steps: usize, mut observe: F) -> Result<()>
where
    D: Dynamics + ?Sized,
    F: FnMut(usize, f64, &[f64]),
{
    if y.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: y.len(),
        });
    }
    let mut rk = Rk4::new(y.len());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        rk.step(sys, t, h, y)?;
        let t_next = t0 + (k + 1) as f64 * h;
        check_finite(t_next, y)?;
        observe(k + 1, t_next, y);
    }
    Ok(())
}

/// Integrates from `initial` over `[initial.time, initial.time + t_end]`.
pub fn integrate<D: Dynamics + ?Sized>(sys: &D, initial: &State, plan: &IntegrationPlan) -> Result<Trajectory> {
    plan.validate()?;
    let mut y = initial.to_flat();
    let steps = (plan.t_end / plan.dt).ceil() as usize;
    integrate_steps(sys, &mut y, initial.time, plan.dt, steps, plan.record_stride)
}

/// Runs `steps` steps from `(t0, y)` and records the initial point plus every
/// `stride`-th step. `y` is left at the final state.
pub fn integrate_steps<D: Dynamics + ?Sized>(
    sys: &D,
    y: &mut [f64],
    t0: f64,
    h: f64,
    steps: usize,
    stride: usize,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps / stride + 1),
        states: Vec::with_capacity(steps / stride + 1),
    };
    traj.times.push(t0);
    traj.states.push(y.to_vec());
    advance(sys, y, t0, h, steps, |k, t, s| {
        if k % stride == 0 {
            traj.times.push(t);
            traj.states.push(s.to_vec());
        }
    })?;
    Ok(traj)
}

/// Integrates `plan.transient_periods` drive periods from rest at `t = 0`,
/// discards them, and returns the following `plan.measure_periods` periods.
pub fn integrate_to_stationary<D: Dynamics + ?Sized>(
    sys: &D,
    drive_period: f64,
    plan: &IntegrationPlan,
) -> Result<Trajectory> {
    let initial = State::zeros(sys.dim() / 2);
    stationary_from(sys, &initial, drive_period, plan)
}

/// Same as [`integrate_to_stationary`] from an arbitrary initial state.
pub fn stationary_from<D: Dynamics + ?Sized>(
    sys: &D,
    initial: &State,
    drive_period: f64,
    plan: &IntegrationPlan,
) -> Result<Trajectory> {
    plan.validate()?;
    if !(drive_period > 0.0) {
        return Err(Error::InvalidInput("drive period must be > 0".into()));
    }
    let (spp, h) = plan.steps_per_period(drive_period);
    let transient = plan.transient_periods_for(drive_period) * spp;
    let mut y = initial.to_flat();
    let t0 = initial.time;
    advance(sys, &mut y, t0, h, transient, |_, _, _| {})?;
    let t_start = t0 + transient as f64 * h;
    integrate_steps(sys, &mut y, t_start, h, plan.measure_periods * spp, plan.record_stride)
}

/// Runs the transient, then calls `observe` at every step of the measurement
/// window (and once at its start). Returns the final state.
pub fn observe_stationary<D, F>(
    sys: &D,
    drive_period: f64,
    plan: &IntegrationPlan,
    mut observe: F,
) -> Result<Vec<f64>>
where
    D: Dynamics + ?Sized,
    F: FnMut(f64, &[f64]),
{
    plan.validate()?;
    let (spp, h) = plan.steps_per_period(drive_period);
    let transient = plan.transient_periods_for(drive_period) * spp;
    let mut y = vec![0.0; sys.dim()];
    advance(sys, &mut y, 0.0, h, transient, |_, _, _| {})?;
    let t_start = transient as f64 * h;
    observe(t_start, &y);
    advance(sys, &mut y, t_start, h, plan.measure_periods * spp, |_, t, s| observe(t, s))?;
    Ok(y)
}
