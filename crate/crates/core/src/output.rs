//! CSV exports and a minimal SVG line plot.

use std::io::Write;

use crate::error::Result;
use crate::integrate::Trajectory;
use crate::model::{ChainSystem, ScaledSystem};
use crate::orbit::FloquetSpectrum;
use crate::sweep::SweepResult;

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// Writes `time, u_1..u_N, v_1..v_N, F_in, F_out`. With `scales` the scaled
/// trajectory is converted to SI units (s, m, m/s, N); otherwise values are
/// written in the chain's own units.
pub fn write_trajectory_csv<W: Write>(
    writer: W,
    chain: &ChainSystem,
    traj: &Trajectory,
    scales: Option<&ScaledSystem>,
) -> Result<()> {
    let n = chain.n_beads();
    let (t_s, x_s, v_s, f_s) = match scales {
        Some(s) => (1.0 / s.phi, s.amplitude, s.amplitude * s.phi, s.force_scale()),
        None => (1.0, 1.0, 1.0, 1.0),
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend((1..=n).map(|i| format!("u_{i}")));
    header.extend((1..=n).map(|i| format!("v_{i}")));
    header.push("F_in".into());
    header.push("F_out".into());
    w.write_record(&header)?;
    for (&t, y) in traj.times.iter().zip(&traj.states) {
        let mut row = Vec::with_capacity(2 * n + 3);
        row.push(num(t * t_s));
        row.extend(y[..n].iter().map(|u| num(u * x_s)));
        row.extend(y[n..2 * n].iter().map(|v| num(v * v_s)));
        row.push(num(chain.input_force_at(t, y)? * f_s));
        row.push(num(chain.transmitted_force_at(y) * f_s));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `frequency_hz, max_force_n, extremum` with extremum labels such as
/// `resonance:1` or `antiresonance`.
pub fn write_sweep_csv<W: Write>(writer: W, sweep: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["frequency_hz", "max_force_n", "extremum"])?;
    for (i, p) in sweep.points.iter().enumerate() {
        w.write_record([num(p.frequency), num(p.max_force), sweep.label(i)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_csv<W: Write>(writer: W, spectrum: &FloquetSpectrum) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["re", "im", "modulus"])?;
    for z in &spectrum.multipliers {
        w.write_record([num(z.re), num(z.im), num(z.norm())])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_residual_history_csv<W: Write>(writer: W, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "residual"])?;
    for (i, r) in history.iter().enumerate() {
        w.write_record([i.to_string(), num(*r)])?;
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One or more `(x, y)` series on shared axes.
#[derive(Clone, Debug, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    series: Vec<(String, Vec<(f64, f64)>)>,
}

impl LinePlot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn add_series(&mut self, name: &str, points: Vec<(f64, f64)>) -> &mut Self {
        self.series.push((name.into(), points));
        self
    }

    pub fn render(&self) -> String {
        const W: f64 = 900.0;
        const H: f64 = 500.0;
        const ML: f64 = 80.0;
        const MR: f64 = 20.0;
        const MT: f64 = 40.0;
        const MB: f64 = 60.0;

        let all = self.series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
        let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

        let mut svg = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        svg.push_str(&format!(r#"<rect width="{W}" height="{H}" fill="white"/>"#));
        svg.push_str(&format!(
            r#"<path d="M{ML} {MT} L{ML} {b} L{r} {b}" stroke="black" fill="none"/>"#,
            b = H - MB,
            r = W - MR
        ));
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(fx),
                H - MB + 18.0,
                tick(fx)
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                ML - 6.0,
                py(fy) + 4.0,
                tick(fy)
            ));
        }
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            escape(&self.title)
        ));
        svg.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (ML + W - MR) / 2.0,
            H - 15.0,
            escape(&self.x_label)
        ));
        svg.push_str(&format!(
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        ));

        for (k, (name, points)) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let mut d = String::new();
            for (i, &(x, y)) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).enumerate() {
                d.push_str(&format!("{}{:.2} {:.2} ", if i == 0 { 'M' } else { 'L' }, px(x), py(y)));
            }
            svg.push_str(&format!(
                r#"<path d="{}" stroke="{color}" stroke-width="1.5" fill="none"/>"#,
                d.trim_end()
            ));
            svg.push_str(&format!(
                r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
                W - MR - 150.0,
                MT + 16.0 * k as f64,
                escape(name)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 || (v.abs() >= 1e-2 && v.abs() < 1e4) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
