//! Plain SVG line plots of `l2_error` against `t`.
//!
//! Every run contributes a solid measured curve and a dotted fitted reference
//! curve in the same colour. When a `config.echo` sits next to a CSV it is
//! used for the legend label and to pick the reference: the fitted entropy
//! bound (square-rooted) for `s > 1`, an exponential otherwise.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    default_window, fit_decay_exponent, fit_exponential_rate, fit_rate_constant,
    read_diagnostics_csv, theoretical_rate_curve, DiagnosticsRow, FitWindow,
};
use crate::error::{Error, Result};

use super::config::{parse_config_file, ExperimentConfig, Mode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotStyle {
    /// Semi-log when every run has `s = 1` or is not a mean-field run.
    Auto,
    LogLog,
    SemiLog,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

struct Series {
    label: String,
    measured: Vec<(f64, f64)>,
    reference: Vec<(f64, f64)>,
}

fn echo_for(csv: &Path) -> Option<ExperimentConfig> {
    let echo = csv.parent()?.join("config.echo");
    parse_config_file(&echo).ok()
}

fn label_for(csv: &Path, cfg: Option<&ExperimentConfig>) -> String {
    let stem = csv
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| csv.display().to_string());
    match cfg {
        Some(c) => match (c.mode, c.gamma_star) {
            (Mode::Meanfield, Some(g)) if c.s == 1.0 => format!("γ*={g}, A={}", c.amplitude),
            (Mode::Meanfield, Some(g)) => format!("γ*={g}, s={}", c.s),
            (Mode::Particles, Some(g)) => format!("γ*={g}, M={}", c.fourier_cutoff),
            _ => c.run_id.clone(),
        },
        None => stem,
    }
}

fn fitted_window(points: &[(f64, f64)]) -> Option<FitWindow> {
    default_window(points)
        .ok()
        .or_else(|| FitWindow::new(points.first()?.0, points.last()?.0).ok())
}

/// Dotted reference curve sampled at the measured times.
fn reference_curve(rows: &[DiagnosticsRow], cfg: Option<&ExperimentConfig>, log_time: bool) -> Vec<(f64, f64)> {
    let l2: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, r.l2_error)).collect();
    let Some(window) = fitted_window(&l2) else {
        return Vec::new();
    };
    let positive_t: Vec<(f64, f64)> = l2.iter().copied().filter(|p| p.0 > 0.0).collect();

    if let Some(c) = cfg.filter(|c| c.mode == Mode::Meanfield && c.s > 1.0) {
        let entropy: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.t, r.entropy?))).collect();
        let h0 = entropy.first().map(|p| p.1).unwrap_or(0.0);
        if let (Some(gamma), true) = (c.gamma_star, h0 > 0.0) {
            let hw = default_window(&entropy).unwrap_or(window);
            if let Ok(cc) = fit_rate_constant(&entropy, hw, h0, gamma, c.s) {
                let curve = |t: f64| theoretical_rate_curve(h0, gamma, c.s, cc, t).map(f64::sqrt);
                let logs: Vec<f64> = l2
                    .iter()
                    .filter(|p| window.contains(p.0) && p.1 > 0.0)
                    .filter_map(|&(t, v)| Some(v.ln() - curve(t).ok()?.ln()))
                    .collect();
                if !logs.is_empty() {
                    let scale = (logs.iter().sum::<f64>() / logs.len() as f64).exp();
                    return l2
                        .iter()
                        .filter_map(|&(t, _)| Some((t, scale * curve(t).ok()?)))
                        .collect();
                }
            }
        }
    }
    if log_time {
        if let Ok(fit) = fit_decay_exponent(&positive_t, window) {
            return positive_t
                .iter()
                .map(|&(t, _)| (t, (fit.intercept + fit.slope * t.ln()).exp()))
                .collect();
        }
    } else if let Ok(fit) = fit_exponential_rate(&l2, window) {
        return l2
            .iter()
            .map(|&(t, _)| (t, (fit.intercept + fit.slope * t).exp()))
            .collect();
    }
    Vec::new()
}

struct Axis {
    log: bool,
    lo: f64,
    hi: f64,
    pixel_lo: f64,
    pixel_hi: f64,
}

impl Axis {
    fn new(log: bool, values: impl Iterator<Item = f64>, pixel_lo: f64, pixel_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if log {
            lo = lo.floor();
            hi = hi.ceil();
        }
        if hi - lo <= 0.0 {
            hi = lo + 1.0;
        }
        Self { log, lo, hi, pixel_lo, pixel_hi }
    }

    fn map(&self, v: f64) -> f64 {
        let v = if self.log { v.log10() } else { v };
        self.pixel_lo + (v - self.lo) / (self.hi - self.lo) * (self.pixel_hi - self.pixel_lo)
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        if self.log {
            let step = ((self.hi - self.lo) / 8.0).ceil().max(1.0) as i64;
            (self.lo as i64..=self.hi as i64)
                .step_by(step as usize)
                .map(|e| (10f64.powi(e as i32), format!("1e{e}")))
                .collect()
        } else {
            (0..=5)
                .map(|i| {
                    let v = self.lo + (self.hi - self.lo) * i as f64 / 5.0;
                    (v, format!("{v:.3}"))
                })
                .collect()
        }
    }
}

fn polyline(points: &[(f64, f64)], x: &Axis, y: &Axis) -> String {
    let mut s = String::new();
    for (i, &(px, py)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{:.2},{:.2}", x.map(px), y.map(py)).expect("write to string");
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(series: &[Series], log_time: bool) -> String {
    let usable = |p: &&(f64, f64)| p.1 > 0.0 && p.1.is_finite() && (!log_time || p.0 > 0.0);
    let all = || {
        series
            .iter()
            .flat_map(|s| s.measured.iter().chain(&s.reference))
            .filter(usable)
    };
    let x = Axis::new(log_time, all().map(|p| p.0), LEFT, WIDTH - RIGHT);
    let y = Axis::new(true, all().map(|p| p.1), HEIGHT - BOTTOM, TOP);

    let mut svg = String::new();
    let w = &mut svg;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        WIDTH - RIGHT - LEFT,
        HEIGHT - BOTTOM - TOP
    )
    .unwrap();
    for (v, label) in x.ticks() {
        let px = x.map(v);
        writeln!(w, r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#, HEIGHT - BOTTOM, HEIGHT - BOTTOM + 5.0).unwrap();
        writeln!(w, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, HEIGHT - BOTTOM + 20.0).unwrap();
    }
    for (v, label) in y.ticks() {
        let py = y.map(v);
        writeln!(w, r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#, LEFT - 8.0, py + 4.0).unwrap();
    }
    let x_label = if log_time { "t (log scale)" } else { "t" };
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 15.0).unwrap();
    writeln!(w, r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">L2 error</text>"#, (TOP + HEIGHT - BOTTOM) / 2.0, (TOP + HEIGHT - BOTTOM) / 2.0).unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let measured: Vec<_> = s.measured.iter().copied().filter(|p| usable(&p)).collect();
        let reference: Vec<_> = s.reference.iter().copied().filter(|p| usable(&p)).collect();
        writeln!(w, r#"<polyline class="measured" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, polyline(&measured, &x, &y)).unwrap();
        if !reference.is_empty() {
            writeln!(w, r#"<polyline class="reference" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="2,4" points="{}"/>"#, polyline(&reference, &x, &y)).unwrap();
        }
        let ly = TOP + 15.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(w, r#"<line class="legend" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 25.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 32.0, ly + 4.0, escape(&s.label)).unwrap();
    }
    writeln!(w, "</svg>").unwrap();
    svg
}

/// Renders the given diagnostics CSVs into one SVG at `out`. Nothing is
/// written if any input fails to parse.
pub fn emit_plots(csvs: &[PathBuf], out: &Path, style: PlotStyle) -> Result<()> {
    if csvs.is_empty() {
        return Err(Error::InvalidArgument("no CSV files to plot".into()));
    }
    let mut inputs = Vec::with_capacity(csvs.len());
    for path in csvs {
        let rows = read_diagnostics_csv(path)?;
        inputs.push((path, rows, echo_for(path)));
    }
    let log_time = match style {
        PlotStyle::LogLog => true,
        PlotStyle::SemiLog => false,
        PlotStyle::Auto => inputs.iter().any(|(_, _, cfg)| {
            cfg.as_ref().is_none_or(|c| c.mode == Mode::Meanfield && c.s > 1.0)
        }),
    };
    let series: Vec<Series> = inputs
        .iter()
        .map(|(path, rows, cfg)| Series {
            label: label_for(path, cfg.as_ref()),
            measured: rows.iter().map(|r| (r.t, r.l2_error)).collect(),
            reference: reference_curve(rows, cfg.as_ref(), log_time),
        })
        .collect();
    let svg = render(&series, log_time);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    fs::write(out, svg).map_err(|e| Error::io(format!("writing {}", out.display()), e))
}
