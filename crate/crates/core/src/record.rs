//! Measured force time series used as a prescribed input on the first bead.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Relative tolerance on sample spacing below which a record counts as uniform.
const UNIFORM_TOL: f64 = 1e-9;

/// A uniformly sampled force signal, `(time s, force N)`.
///
/// Construction validates strictly increasing times and resamples
/// non-uniform input onto a uniform grid by linear interpolation, using the
/// median input spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceRecord {
    start: f64,
    spacing: f64,
    forces: Vec<f64>,
}

impl ForceRecord {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(
                "force record needs at least two samples".into(),
            ));
        }
        for (i, &(t, f)) in samples.iter().enumerate() {
            if !t.is_finite() || !f.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite force sample at row {i}"
                )));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::InvalidInput(format!(
                    "force record times not strictly increasing at row {i} ({} -> {t})",
                    samples[i - 1].0
                )));
            }
        }

        let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
        let start = samples[0].0;
        let end = samples[samples.len() - 1].0;
        let uniform_guess = (end - start) / (samples.len() - 1) as f64;
        let uniform = gaps
            .iter()
            .all(|g| (g - uniform_guess).abs() <= UNIFORM_TOL * uniform_guess);
        if uniform {
            return Ok(Self {
                start,
                spacing: uniform_guess,
                forces: samples.iter().map(|s| s.1).collect(),
            });
        }

        gaps.sort_by(|a, b| a.total_cmp(b));
        let spacing = gaps[gaps.len() / 2];
        let n = ((end - start) / spacing + 1e-9).floor() as usize + 1;
        let mut forces = Vec::with_capacity(n);
        let mut j = 0;
        for i in 0..n {
            let t = start + i as f64 * spacing;
            while j + 2 < samples.len() && samples[j + 1].0 < t {
                j += 1;
            }
            let (t0, f0) = samples[j];
            let (t1, f1) = samples[j + 1];
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            forces.push(f0 + w * (f1 - f0));
        }
        Ok(Self {
            start,
            spacing,
            forces,
        })
    }

    /// Builds a record directly from uniform samples.
    pub fn uniform(start: f64, spacing: f64, forces: Vec<f64>) -> Result<Self> {
        if !(spacing > 0.0) || !start.is_finite() {
            return Err(Error::InvalidInput(
                "uniform record needs finite start and positive spacing".into(),
            ));
        }
        if forces.len() < 2 || forces.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidInput(
                "uniform record needs at least two finite samples".into(),
            ));
        }
        Ok(Self {
            start,
            spacing,
            forces,
        })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + (self.forces.len() - 1) as f64 * self.spacing
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.spacing
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.forces
            .iter()
            .enumerate()
            .map(|(i, &f)| (self.start + i as f64 * self.spacing, f))
    }

    /// Linearly interpolated force at `time`.
    pub fn force_at(&self, time: f64) -> Result<f64> {
        let end = self.end();
        // Allow round-off at the record edges.
        let slack = 1e-9 * self.spacing;
        if !(time >= self.start - slack && time <= end + slack) {
            return Err(Error::OutsideRecord {
                time,
                start: self.start,
                end,
            });
        }
        let pos = ((time - self.start) / self.spacing).max(0.0);
        let last = self.forces.len() - 1;
        let i = (pos.floor() as usize).min(last - 1);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        Ok(self.forces[i] + w * (self.forces[i + 1] - self.forces[i]))
    }

    /// Reads a two-column CSV (`time_s, force_N`) with a header line.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut samples = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "force record row {} has {} columns, expected 2",
                    row + 1,
                    rec.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| {
                    Error::InvalidInput(format!("bad number {s:?} in force record row {}", row + 1))
                })
            };
            samples.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        Self::new(&samples)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| {
            Error::Config(format!("cannot open force record {}: {e}", path.display()))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time_s", "force_N"])?;
        for (t, f) in self.samples() {
            w.write_record([format!("{t:.12e}"), format!("{f:.12e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_monotone_times() {
        let err = ForceRecord::new(&[(0.0, 1.0), (0.2, 1.0), (0.1, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(ForceRecord::new(&[(0.0, 1.0), (0.0, 2.0)]).is_err());
    }

    #[test]
    fn interpolates_linearly() {
        let r = ForceRecord::new(&[(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]).unwrap();
        assert_eq!(r.force_at(0.5).unwrap(), 1.0);
        assert_eq!(r.force_at(2.0).unwrap(), 0.0);
        assert!(matches!(
            r.force_at(2.5),
            Err(Error::OutsideRecord { .. })
        ));
    }

    #[test]
    fn resamples_non_uniform_input() {
        let r = ForceRecord::new(&[(0.0, 0.0), (0.1, 1.0), (0.3, 3.0), (0.4, 4.0)]).unwrap();
        assert!((r.spacing() - 0.1).abs() < 1e-15);
        assert_eq!(r.len(), 5);
        for (t, f) in r.samples() {
            assert!((f - 10.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_ingest() {
        let text = "time_s,force_N\n0.0, 0.5\n0.001, 1.5\n0.002, 2.5\n";
        let r = ForceRecord::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(r.len(), 3);
        assert!((r.sample_rate() - 1000.0).abs() < 1e-6);
        assert!((r.force_at(0.0015).unwrap() - 2.0).abs() < 1e-12);

        let bad = "time_s,force_N\n0.0,abc\n";
        assert!(ForceRecord::from_csv_reader(bad.as_bytes()).is_err());
    }
}
