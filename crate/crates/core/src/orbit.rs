//! Periodic orbits as fixed points of the stroboscopic map, found by
//! Newton shooting, and their Floquet multipliers.
//!
//! The map Jacobian is a forward finite difference of the discrete RK4 flow,
//! the same map whose fixed point Newton solves.

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{advance, Dynamics, IntegrationPlan, DEFAULT_SCALED_DT};
use crate::model::State;

/// Residual tolerance on `‖P(s) − s‖∞`.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-10;
/// Multipliers within this distance of the unit circle are marginal.
pub const DEFAULT_TOL_MARGIN: f64 = 1e-3;
/// Relative finite-difference step for the map Jacobian.
pub const FD_REL_STEP: f64 = 1e-7;
const MAX_HALVINGS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingOptions {
    /// Nominal integrator step; the actual step divides the period evenly.
    pub dt: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub fd_rel_step: f64,
    pub tol_margin: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_SCALED_DT,
            newton_tol: DEFAULT_NEWTON_TOL,
            max_iter: 30,
            fd_rel_step: FD_REL_STEP,
            tol_margin: DEFAULT_TOL_MARGIN,
        }
    }
}

impl ShootingOptions {
    fn steps(&self, period: f64) -> (usize, f64) {
        IntegrationPlan::default().with_dt(self.dt).steps_per_period(period)
    }
}

/// Flows the flat state `y` from `t = 0` over one `period`.
pub fn flow_period<D: Dynamics + ?Sized>(sys: &D, y: &[f64], period: f64, dt: f64) -> Result<Vec<f64>> {
    let (steps, h) = ShootingOptions {
        dt,
        ..Default::default()
    }
    .steps(period);
    let mut out = y.to_vec();
    advance(sys, &mut out, 0.0, h, steps, |_, _, _| {})?;
    Ok(out)
}

/// Image of `state` under the period-`period` stroboscopic map.
pub fn stroboscopic_map<D: Dynamics + ?Sized>(sys: &D, state: &State, period: f64, dt: f64) -> Result<State> {
    if !(period > 0.0) {
        return Err(Error::InvalidInput("period must be > 0".into()));
    }
    let y = flow_period(sys, &state.to_flat(), period, dt)?;
    Ok(State::from_flat(state.time + period, &y))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Forward-difference Jacobian of the stroboscopic map at `y`, given `p = P(y)`.
pub fn map_jacobian<D>(sys: &D, y: &[f64], p: &[f64], period: f64, opts: &ShootingOptions) -> Result<DMatrix<f64>>
where
    D: Dynamics + Sync + ?Sized,
{
    let n = y.len();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = opts.fd_rel_step * y[j].abs().max(1.0);
            let mut yp = y.to_vec();
            yp[j] += h;
            let pj = flow_period(sys, &yp, period, opts.dt)?;
            Ok(pj.iter().zip(p).map(|(a, b)| (a - b) / h).collect())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| columns[j][i]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicOrbit {
    /// Fixed point of the map, at phase τ = 0.
    pub anchor_state: State,
    pub period: f64,
    /// `‖P(s) − s‖∞` at the anchor.
    pub residual: f64,
    pub converged: bool,
    /// Residual before each iteration and after the last.
    pub residual_history: Vec<f64>,
}

/// Newton iteration `s ← s − (J − I)⁻¹ (P(s) − s)` with step halving on
/// residual increase. A run that exhausts `max_iter` returns the best iterate
/// with `converged = false`.
pub fn newton_periodic<D>(guess: &State, sys: &D, period: f64, opts: &ShootingOptions) -> Result<PeriodicOrbit>
where
    D: Dynamics + Sync + ?Sized,
{
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::InvalidInput("period must be > 0".into()));
    }
    let mut s = guess.to_flat();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Newton guess is not finite".into()));
    }
    if s.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            got: s.len(),
        });
    }
    let n = s.len();
    let mut p = flow_period(sys, &s, period, opts.dt)?;
    let mut r: Vec<f64> = p.iter().zip(&s).map(|(a, b)| a - b).collect();
    let mut res = inf_norm(&r);
    let mut history = vec![res];

    let finish = |s: Vec<f64>, res: f64, history: Vec<f64>| PeriodicOrbit {
        anchor_state: State::from_flat(0.0, &s),
        period,
        residual: res,
        converged: res < opts.newton_tol,
        residual_history: history,
    };

    for _ in 0..opts.max_iter {
        if res < opts.newton_tol {
            break;
        }
        let mut a = map_jacobian(sys, &s, &p, period, opts)?;
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let delta = a
            .lu()
            .solve(&rhs)
            .filter(|d| d.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularJacobian { residual: res })?;

        let mut step = 1.0;
        let mut best: Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = s.iter().zip(delta.iter()).map(|(a, d)| a + step * d).collect();
            if let Ok(pt) = flow_period(sys, &trial, period, opts.dt) {
                let rt: Vec<f64> = pt.iter().zip(&trial).map(|(a, b)| a - b).collect();
                let rest = inf_norm(&rt);
                let improves = rest < res;
                if best.as_ref().map_or(true, |b| rest < b.3) {
                    best = Some((trial, pt, rt, rest));
                }
                if improves {
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((ns, np, nr, nres)) = best else {
            return Err(Error::Divergence {
                time: period,
                component: 0,
            });
        };
        if nres >= res {
            // No halving reduced the residual; keep the current iterate.
            history.push(res);
            break;
        }
        s = ns;
        p = np;
        r = nr;
        res = nres;
        history.push(res);
    }
    Ok(finish(s, res, history))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Clone, Debug)]
pub struct FloquetSpectrum {
    pub multipliers: Vec<Complex<f64>>,
    pub max_modulus: f64,
    pub verdict: Stability,
    pub monodromy: DMatrix<f64>,
}

impl FloquetSpectrum {
    pub fn from_monodromy(monodromy: DMatrix<f64>, tol_margin: f64) -> Result<Self> {
        if monodromy.iter().any(|v| !v.is_finite()) {
            return Err(Error::Eigen("monodromy matrix has non-finite entries".into()));
        }
        let n = monodromy.nrows();
        let schur = nalgebra::linalg::Schur::try_new(monodromy.clone(), 1e-14, 100_000)
            .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
        let mut multipliers: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
        debug_assert_eq!(multipliers.len(), n);
        multipliers.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        let max_modulus = multipliers.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let verdict = if max_modulus < 1.0 - tol_margin {
            Stability::Stable
        } else if max_modulus > 1.0 + tol_margin {
            Stability::Unstable
        } else {
            Stability::Marginal
        };
        Ok(Self {
            multipliers,
            max_modulus,
            verdict,
            monodromy,
        })
    }

    /// Multipliers with modulus above one.
    pub fn unstable_count(&self) -> usize {
        self.multipliers.iter().filter(|z| z.norm() > 1.0).count()
    }

    pub fn determinant(&self) -> f64 {
        self.monodromy.determinant()
    }
}

/// Floquet multipliers of a converged orbit: eigenvalues of the
/// finite-difference monodromy matrix at its anchor.
pub fn floquet<D>(orbit: &PeriodicOrbit, sys: &D, opts: &ShootingOptions) -> Result<FloquetSpectrum>
where
    D: Dynamics + Sync + ?Sized,
{
    if !orbit.converged {
        return Err(Error::InvalidInput(
            "Floquet analysis needs a converged orbit".into(),
        ));
    }
    let y = orbit.anchor_state.to_flat();
    let p = flow_period(sys, &y, orbit.period, opts.dt)?;
    let m = map_jacobian(sys, &y, &p, orbit.period, opts)?;
    FloquetSpectrum::from_monodromy(m, opts.tol_margin)
}

/// State augmented with the running integral of the vector-field divergence.
struct WithDivergence<'a, D: ?Sized>(&'a D);

impl<D: Dynamics + ?Sized> Dynamics for WithDivergence<'_, D> {
    fn dim(&self) -> usize {
        self.0.dim() + 1
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.0.dim();
        self.0.eval(t, &y[..n], &mut dy[..n])?;
        dy[n] = self
            .0
            .divergence(t, &y[..n])
            .ok_or_else(|| Error::InvalidInput("model has no divergence".into()))?;
        Ok(())
    }
}

/// `exp(∫ div f dτ)` along the orbit over one period, integrated with the same
/// steps as the map. By Liouville's formula this is `det M`.
pub fn liouville_determinant<D>(orbit: &PeriodicOrbit, sys: &D, dt: f64) -> Result<f64>
where
    D: Dynamics + ?Sized,
{
    let mut y = orbit.anchor_state.to_flat();
    y.push(0.0);
    let aug = WithDivergence(sys);
    let out = flow_period(&aug, &y, orbit.period, dt)?;
    Ok(out[out.len() - 1].exp())
}
