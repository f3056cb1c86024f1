//! Frequency-response harness: maximum transmitted force against drive
//! frequency, resonance/anti-resonance detection and 1:n classification.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrate::{observe_stationary, IntegrationPlan};
use crate::model::{nondimensionalize, ChainConfig, ChainSystem, DriveSpec, ScaledSystem};

/// Drive amplitude as a function of frequency.
#[derive(Clone, Debug, PartialEq)]
pub enum AmplitudeSchedule {
    Constant(f64),
    /// `(frequency Hz, amplitude m)` knots, linearly interpolated and held
    /// constant outside the knot range.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl AmplitudeSchedule {
    pub fn at(&self, frequency: f64) -> f64 {
        match self {
            AmplitudeSchedule::Constant(a) => *a,
            AmplitudeSchedule::PiecewiseLinear(knots) => {
                let first = knots[0];
                let last = knots[knots.len() - 1];
                if frequency <= first.0 {
                    return first.1;
                }
                if frequency >= last.0 {
                    return last.1;
                }
                let j = knots.windows(2).position(|w| frequency <= w[1].0).unwrap_or(0);
                let (f0, a0) = knots[j];
                let (f1, a1) = knots[j + 1];
                a0 + (a1 - a0) * (frequency - f0) / (f1 - f0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AmplitudeSchedule::Constant(a) if *a > 0.0 && a.is_finite() => Ok(()),
            AmplitudeSchedule::PiecewiseLinear(k)
                if !k.is_empty()
                    && k.iter().all(|(f, a)| f.is_finite() && *a > 0.0 && a.is_finite())
                    && k.windows(2).all(|w| w[1].0 > w[0].0) =>
            {
                Ok(())
            }
            _ => Err(Error::InvalidInput(
                "drive amplitude must be positive (knot frequencies increasing)".into(),
            )),
        }
    }
}

/// Everything that defines one sweep apart from the integration plan.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub config: ChainConfig,
    pub amplitude: AmplitudeSchedule,
    /// Scaled foundation stiffness used at every frequency instead of
    /// `k / (m φ²)`.
    pub foundation_nd: Option<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub n_points: usize,
}

impl SweepSpec {
    pub fn new(config: ChainConfig, amplitude: f64, f_min: f64, f_max: f64, n_points: usize) -> Self {
        Self {
            config,
            amplitude: AmplitudeSchedule::Constant(amplitude),
            foundation_nd: None,
            f_min,
            f_max,
            n_points,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.amplitude.validate()?;
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 < f_min < f_max (got {} .. {})",
                self.f_min, self.f_max
            )));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidInput(format!(
                "n_points must be >= 2 (got {})",
                self.n_points
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let step = (self.f_max - self.f_min) / (self.n_points - 1) as f64;
        (0..self.n_points)
            .map(|i| self.f_min + i as f64 * step)
            .collect()
    }

    /// Scaled system at one grid frequency.
    pub fn scaled_at(&self, frequency: f64) -> Result<ScaledSystem> {
        let drive = DriveSpec::harmonic(self.amplitude.at(frequency), frequency);
        let mut s = nondimensionalize(&self.config, &drive)?;
        if let Some(k) = self.foundation_nd {
            s = s.with_foundation(k);
            s.validate()?;
        }
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExtremumKind {
    Resonance,
    AntiResonance,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extremum {
    pub index: usize,
    pub frequency: f64,
    pub kind: ExtremumKind,
    /// 1:n order, filled in for classified resonances.
    pub order: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    /// Hz
    pub frequency: f64,
    /// N
    pub max_force: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub extrema: Vec<Extremum>,
}

impl SweepResult {
    pub fn forces(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.max_force).collect()
    }

    pub fn global_max(&self) -> f64 {
        self.points.iter().map(|p| p.max_force).fold(0.0, f64::max)
    }

    pub fn resonances(&self) -> impl Iterator<Item = &Extremum> {
        self.extrema.iter().filter(|e| e.kind == ExtremumKind::Resonance)
    }

    pub fn anti_resonances(&self) -> impl Iterator<Item = &Extremum> {
        self.extrema.iter().filter(|e| e.kind == ExtremumKind::AntiResonance)
    }

    /// Label of the grid point at `index` as written to the sweep CSV.
    pub fn label(&self, index: usize) -> String {
        match self.extrema.iter().find(|e| e.index == index) {
            Some(Extremum {
                kind: ExtremumKind::Resonance,
                order: Some(n),
                ..
            }) => format!("resonance:{n}"),
            Some(Extremum {
                kind: ExtremumKind::Resonance,
                ..
            }) => "resonance:?".to_string(),
            Some(Extremum {
                kind: ExtremumKind::AntiResonance,
                ..
            }) => "antiresonance".to_string(),
            None => "-".to_string(),
        }
    }
}

/// Default prominence: 2% of the sweep's largest force.
pub const DEFAULT_PROMINENCE_FRACTION: f64 = 0.02;

/// Max transmitted force (N) over the stationary window at one frequency.
pub fn max_transmitted_force(spec: &SweepSpec, frequency: f64, plan: &IntegrationPlan) -> Result<f64> {
    let s = spec.scaled_at(frequency)?;
    let chain = ChainSystem::scaled(&s);
    let mut max_force: f64 = 0.0;
    observe_stationary(&chain, s.drive_period(), plan, |_, y| {
        max_force = max_force.max(chain.transmitted_force_at(y));
    })
    .map_err(|e| Error::SweepDivergence {
        frequency_hz: frequency,
        source: Box::new(e),
    })?;
    Ok(max_force * s.force_scale())
}

/// Sweeps the uniform grid of `spec` with the scaled model. Grid points run
/// in parallel; results come back in frequency order. Extrema use the
/// default prominence.
pub fn run_sweep(spec: &SweepSpec, plan: &IntegrationPlan) -> Result<SweepResult> {
    spec.validate()?;
    plan.validate()?;
    let grid = spec.grid();
    let forces: Vec<f64> = grid
        .par_iter()
        .map(|&f| max_transmitted_force(spec, f, plan))
        .collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = grid
        .into_iter()
        .zip(forces)
        .map(|(frequency, max_force)| SweepPoint {
            frequency,
            max_force,
        })
        .collect();
    let mut result = SweepResult {
        points,
        extrema: Vec::new(),
    };
    let prominence = DEFAULT_PROMINENCE_FRACTION * result.global_max();
    result.extrema = detect_extrema(&result.points, prominence);
    Ok(result)
}

/// Constant-amplitude sweep of `config` over `n_points` frequencies.
pub fn frequency_sweep(
    config: &ChainConfig,
    amplitude: f64,
    f_min: f64,
    f_max: f64,
    n_points: usize,
    plan: &IntegrationPlan,
) -> Result<SweepResult> {
    run_sweep(
        &SweepSpec::new(config.clone(), amplitude, f_min, f_max, n_points),
        plan,
    )
}

/// Input-force samples `(time, force)` of the scaled chain at every step of
/// its stationary window, in scaled units.
pub fn stationary_input_force(s: &ScaledSystem, plan: &IntegrationPlan) -> Result<(Vec<f64>, Vec<f64>)> {
    let chain = ChainSystem::scaled(s);
    let mut times = Vec::new();
    let mut forces = Vec::new();
    let mut failure = None;
    observe_stationary(&chain, s.drive_period(), plan, |t, y| match chain.input_force_at(t, y) {
        Ok(f) => {
            times.push(t);
            forces.push(f);
        }
        Err(e) => failure = failure.take().or(Some(e)),
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((times, forces)),
    }
}

/// 1:n order of the stationary response at one sweep frequency.
pub fn classify_frequency(spec: &SweepSpec, frequency: f64, plan: &IntegrationPlan) -> Result<usize> {
    let s = spec.scaled_at(frequency)?;
    let (times, forces) = stationary_input_force(&s, plan)?;
    classify_resonance(&times, &forces, s.drive_period())
}

/// Fills in the 1:n order of every resonance; unclassifiable ones keep `None`.
pub fn classify_extrema(result: &mut SweepResult, spec: &SweepSpec, plan: &IntegrationPlan) -> Result<()> {
    let orders: Vec<Option<usize>> = result
        .extrema
        .par_iter()
        .map(|e| match e.kind {
            ExtremumKind::Resonance => match classify_frequency(spec, e.frequency, plan) {
                Ok(n) => Ok(Some(n)),
                Err(Error::Unclassifiable(_)) => Ok(None),
                Err(other) => Err(other),
            },
            ExtremumKind::AntiResonance => Ok(None),
        })
        .collect::<Result<_>>()?;
    for (e, n) in result.extrema.iter_mut().zip(orders) {
        e.order = n;
    }
    Ok(())
}

/// Local maxima/minima of the force curve that stand out from their
/// flanking extrema by at least `prominence`. The flanking minimum of a peak
/// on one side is the lowest value between the peak and the nearest higher
/// point on that side (or the curve end); anti-resonances are the mirror
/// image. Endpoints are never extrema.
pub fn detect_extrema(points: &[SweepPoint], prominence: f64) -> Vec<Extremum> {
    let y: Vec<f64> = points.iter().map(|p| p.max_force).collect();
    let n = y.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    for i in 1..n - 1 {
        let kind = if y[i] > y[i - 1] && y[i] > y[i + 1] {
            ExtremumKind::Resonance
        } else if y[i] < y[i - 1] && y[i] < y[i + 1] {
            ExtremumKind::AntiResonance
        } else {
            continue;
        };
        // Flip sign for troughs so both cases are "peak" searches.
        let sign = if kind == ExtremumKind::Resonance { 1.0 } else { -1.0 };
        let v = |j: usize| sign * y[j];
        let flank = |range: &mut dyn Iterator<Item = usize>| {
            let mut lowest = v(i);
            for j in range {
                if v(j) > v(i) {
                    break;
                }
                lowest = lowest.min(v(j));
            }
            lowest
        };
        let left = flank(&mut (0..i).rev());
        let right = flank(&mut (i + 1..n));
        if v(i) - left >= prominence && v(i) - right >= prominence {
            out.push(Extremum {
                index: i,
                frequency: points[i].frequency,
                kind,
                order: None,
            });
        }
    }
    out
}

/// Fraction of the window's largest input force that marks a strong pulse.
pub const PULSE_THRESHOLD: f64 = 0.5;

/// Times of strong pulses: each maximal run of samples at or above
/// `PULSE_THRESHOLD` of the series maximum contributes the time of its peak.
pub fn strong_pulse_times(times: &[f64], force: &[f64]) -> Vec<f64> {
    let fmax = force.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(fmax > 0.0) {
        return Vec::new();
    }
    let threshold = PULSE_THRESHOLD * fmax;
    let mut pulses = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for (&t, &f) in times.iter().zip(force) {
        if f >= threshold {
            match current {
                Some((_, best)) if best >= f => {}
                _ => current = Some((t, f)),
            }
        } else if let Some((tp, _)) = current.take() {
            pulses.push(tp);
        }
    }
    if let Some((tp, _)) = current {
        pulses.push(tp);
    }
    pulses
}

/// 1:n order from the input-force pulse train of a stationary window:
/// `n = round(dominant inter-pulse interval / drive period)`, with the
/// dominant interval taken as the median. Fails when the window is shorter
/// than six periods, has fewer than two strong pulses, or the dominant
/// interval sits 10% of a period or more away from `n` periods.
pub fn classify_resonance(times: &[f64], input_force: &[f64], drive_period: f64) -> Result<usize> {
    if times.len() != input_force.len() || times.len() < 2 {
        return Err(Error::InvalidInput(
            "time and force series must have equal length >= 2".into(),
        ));
    }
    let span = times[times.len() - 1] - times[0];
    if span < 6.0 * drive_period * (1.0 - 1e-9) {
        return Err(Error::InvalidInput(format!(
            "window spans {:.3} drive periods, need at least 6",
            span / drive_period
        )));
    }
    let pulses = strong_pulse_times(times, input_force);
    if pulses.len() < 2 {
        return Err(Error::Unclassifiable(format!(
            "{} strong input pulses in window",
            pulses.len()
        )));
    }
    let mut gaps: Vec<f64> = pulses.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.total_cmp(b));
    let dominant = if gaps.len() % 2 == 1 {
        gaps[gaps.len() / 2]
    } else {
        0.5 * (gaps[gaps.len() / 2 - 1] + gaps[gaps.len() / 2])
    };
    let n = (dominant / drive_period).round();
    if n < 1.0 {
        return Err(Error::Unclassifiable(format!(
            "dominant pulse interval {dominant:.4} shorter than half a period"
        )));
    }
    let mismatch = (dominant - n * drive_period).abs();
    if mismatch >= 0.1 * drive_period {
        return Err(Error::Unclassifiable(format!(
            "dominant pulse interval {:.4} periods is not near an integer",
            dominant / drive_period
        )));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(forces: &[f64]) -> Vec<SweepPoint> {
        forces
            .iter()
            .enumerate()
            .map(|(i, &f)| SweepPoint {
                frequency: 10.0 + i as f64,
                max_force: f,
            })
            .collect()
    }

    #[test]
    fn monotone_sweep_has_no_extrema() {
        let p = pts(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(detect_extrema(&p, 0.0).is_empty());
    }

    #[test]
    fn triangle_has_single_peak_at_apex() {
        let p = pts(&[1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0]);
        let e = detect_extrema(&p, 0.5);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].index, 3);
        assert_eq!(e[0].kind, ExtremumKind::Resonance);
    }

    #[test]
    fn prominence_filters_small_bumps() {
        let f = [1.0, 5.0, 2.0, 2.1, 1.8, 6.0, 1.0];
        let p = pts(&f);
        let all = detect_extrema(&p, 0.0);
        assert_eq!(all.len(), 5);
        let big = detect_extrema(&p, 0.5);
        let kinds: Vec<_> = big.iter().map(|e| (e.index, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (1, ExtremumKind::Resonance),
                (4, ExtremumKind::AntiResonance),
                (5, ExtremumKind::Resonance)
            ]
        );
    }

    #[test]
    fn anti_resonance_between_peaks() {
        let p = pts(&[1.0, 4.0, 2.0, 1.5, 2.5, 5.0, 1.0]);
        let e = detect_extrema(&p, 0.5);
        assert_eq!(e.len(), 3);
        assert_eq!(e[1].index, 3);
        assert_eq!(e[1].kind, ExtremumKind::AntiResonance);
    }

    #[test]
    fn endpoints_never_extrema() {
        let p = pts(&[9.0, 1.0, 2.0, 1.0, 9.0]);
        let e = detect_extrema(&p, 0.1);
        assert!(e.iter().all(|e| e.index != 0 && e.index != 4));
    }

    fn pulse_train(interval: f64, period: f64, periods: usize) -> (Vec<f64>, Vec<f64>) {
        let dt = period / 200.0;
        let n = (periods as f64 * period / dt) as usize;
        let times: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
        let force = times
            .iter()
            .map(|&t| {
                let phase = (t + 0.3 * period) % interval;
                let strong = (-((phase - 0.1 * period) / (0.02 * period)).powi(2)).exp();
                // weaker secondary bump that must not count
                let weak = 0.3 * (-((phase - 0.5 * interval) / (0.02 * period)).powi(2)).exp();
                strong + weak
            })
            .collect();
        (times, force)
    }

    #[test]
    fn classifies_synthetic_orders() {
        let period = 0.01;
        for n in 1..=5 {
            let (t, f) = pulse_train(n as f64 * period, period, 6 * n + 2);
            assert_eq!(classify_resonance(&t, &f, period).unwrap(), n);
        }
    }

    #[test]
    fn rejects_off_integer_and_empty() {
        let period = 1.0;
        let (t, f) = pulse_train(1.5, period, 12);
        assert!(matches!(
            classify_resonance(&t, &f, period),
            Err(Error::Unclassifiable(_))
        ));
        let zeros = vec![0.0; t.len()];
        assert!(matches!(
            classify_resonance(&t, &zeros, period),
            Err(Error::Unclassifiable(_))
        ));
        let (t, f) = pulse_train(1.0, period, 4);
        assert!(matches!(
            classify_resonance(&t, &f, period),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn amplitude_schedule_interpolates() {
        let s = AmplitudeSchedule::PiecewiseLinear(vec![(20.0, 6e-6), (120.0, 1.1e-5)]);
        assert_eq!(s.at(10.0), 6e-6);
        assert!((s.at(70.0) - 8.5e-6).abs() < 1e-18);
        assert_eq!(s.at(200.0), 1.1e-5);
    }

    #[test]
    fn sweep_validation() {
        let cfg = ChainConfig::steel_demo();
        let plan = IntegrationPlan::default();
        assert!(frequency_sweep(&cfg, 5e-7, 30.0, 3000.0, 1, &plan).is_err());
        assert!(frequency_sweep(&cfg, 5e-7, 300.0, 30.0, 10, &plan).is_err());
    }
}
