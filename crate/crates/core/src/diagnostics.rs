//! Lyapunov quantities of the flow, theoretical rate curves, and decay fits.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{
    sobolev_norm, spectral_gradient, FourierPlan, GridField, SobolevKind,
};

/// Cells with density at or below this value count as empty (`0 log 0 = 0`).
pub const EMPTY_CELL: f64 = 1e-300;

/// Column order of `diagnostics.csv`.
pub const DIAGNOSTICS_HEADER: [&str; 8] = [
    "t",
    "entropy",
    "l2_error",
    "ksd",
    "mass",
    "min_density",
    "max_density",
    "dt",
];

/// Column order of `rates.csv`.
pub const RATES_HEADER: [&str; 8] = [
    "run_id",
    "s",
    "gamma_star",
    "slope",
    "expected_slope",
    "r_squared",
    "window_lo",
    "window_hi",
];

/// One sampled time of a run. Fields that are undefined for a given engine
/// (entropy of an empirical measure, say) are `None` and written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub entropy: Option<f64>,
    pub l2_error: f64,
    pub ksd: Option<f64>,
    pub mass: f64,
    pub min_density: Option<f64>,
    pub max_density: Option<f64>,
    pub dt: f64,
}

/// `H(ρ|π) = ∫ ρ log(ρ/π)`.
///
/// Evaluated as the grid mean of `ρ log(ρ/π) − ρ + π`, which has the same
/// value for densities of equal mass but no cancellation between cells, so
/// entropies far below the mass rounding level stay accurate.
pub fn relative_entropy(rho: &GridField, pi: &GridField) -> Result<f64> {
    rho.ensure_same_shape(pi, "relative_entropy")?;
    let mut sum = 0.0;
    for (i, (&r, &p)) in rho.values().iter().zip(pi.values()).enumerate() {
        if !(p > 0.0) {
            return Err(Error::InvalidInput(format!(
                "target density must be positive, got {p} at cell {i}"
            )));
        }
        sum += if r <= EMPTY_CELL {
            p
        } else {
            r * (r / p).ln() - r + p
        };
    }
    Ok(sum / rho.len() as f64)
}

/// Upper comparison bound `‖ρ − π‖²_{L²} / min π` for the relative entropy.
pub fn entropy_upper_bound(rho: &GridField, pi: &GridField) -> Result<f64> {
    Ok(rho.l2_distance(pi)?.powi(2) / pi.min())
}

/// Lower comparison bound `‖ρ − π‖²_{L²} / (2Λ)` with `Λ = max(max ρ, max π)`.
pub fn entropy_lower_bound(rho: &GridField, pi: &GridField) -> Result<f64> {
    Ok(rho.l2_distance(pi)?.powi(2) / (2.0 * rho.max().max(pi.max())))
}

/// `∇V = −∇π / π`, for callers that only hold the target density.
pub fn potential_gradient_from_target(pi: &GridField) -> Result<Vec<GridField>> {
    let plan = FourierPlan::for_field(pi)?;
    let spec = plan.forward(pi)?;
    spectral_gradient(&spec)
        .iter()
        .map(|g| {
            let grad = plan.inverse(g)?;
            grad.zip_with(pi, |gp, p| -gp / p)
        })
        .collect()
}

/// Kernel Stein discrepancy `I_s(ρ|π) = ‖π∇(σ/π)‖²_{Ḣ^{-s}}`, `σ = ρ − π`.
pub fn ksd(rho: &GridField, pi: &GridField, s: f64) -> Result<f64> {
    if pi.values().iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidInput("target density must be positive".into()));
    }
    let grad_v = potential_gradient_from_target(pi)?;
    ksd_with_gradient(rho, pi, &grad_v, s)
}

/// KSD with a known `∇V`: forms `w = ∇σ + σ∇V` on the grid and sums the
/// `Ḣ^{-s}` norms of its components. The zero mode of `w` is annihilated,
/// as the Riesz kernel has no mean component.
pub fn ksd_with_gradient(
    rho: &GridField,
    pi: &GridField,
    grad_v: &[GridField],
    s: f64,
) -> Result<f64> {
    let plan = FourierPlan::for_field(rho)?;
    ksd_with_plan(&plan, rho, pi, grad_v, s)
}

pub(crate) fn ksd_with_plan(
    plan: &FourierPlan,
    rho: &GridField,
    pi: &GridField,
    grad_v: &[GridField],
    s: f64,
) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(Error::InvalidArgument(format!("s must be >= 1, got {s}")));
    }
    rho.ensure_same_shape(pi, "ksd")?;
    if grad_v.len() != rho.dim() {
        return Err(Error::InvalidArgument(format!(
            "expected {} gradient components, got {}",
            rho.dim(),
            grad_v.len()
        )));
    }
    if let Some(p) = pi.values().iter().find(|p| !(**p > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "target density must be positive, got {p}"
        )));
    }
    let sigma = rho.sub(pi)?;
    let sigma_hat = plan.forward(&sigma)?;
    let grads = spectral_gradient(&sigma_hat);
    let mut total = 0.0;
    for (axis, g) in grads.iter().enumerate() {
        let dsigma = plan.inverse(g)?;
        let w = GridField::from_raw(
            rho.dim(),
            rho.n(),
            dsigma
                .values()
                .iter()
                .zip(sigma.values())
                .zip(grad_v[axis].values())
                .map(|((d, s), v)| d + s * v)
                .collect(),
        );
        let w_hat = plan.forward(&w)?;
        total += sobolev_norm(&w_hat, -s, SobolevKind::Homogeneous).powi(2);
    }
    Ok(total)
}

/// `(H0^{-(s-1)/γ} + t/C)^{-γ/(s-1)}`, the polynomial entropy bound.
pub fn theoretical_rate_curve(h0: f64, gamma: f64, s: f64, c: f64, t: f64) -> Result<f64> {
    if s == 1.0 {
        return Err(Error::Domain(
            "s = 1 decays exponentially; no polynomial curve".into(),
        ));
    }
    if !(s > 1.0 && gamma > 0.0 && c > 0.0 && h0 > 0.0) {
        return Err(Error::Domain(format!(
            "rate curve needs s > 1, gamma > 0, C > 0, H0 > 0 (got s={s}, gamma={gamma}, C={c}, H0={h0})"
        )));
    }
    let p = (s - 1.0) / gamma;
    Ok((h0.powf(-p) + t / c).powf(-1.0 / p))
}

/// Closed interval of times used by a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub lo: f64,
    pub hi: f64,
}

impl FitWindow {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.lo && t <= self.hi
    }
}

/// Least-squares line through transformed samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub window: FitWindow,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl RateFit {
    /// `α` of an exponential fit (`slope = −α`).
    pub fn decay_rate(&self) -> f64 {
        -self.slope
    }
}

/// Window starting where the value first drops to a tenth of its initial
/// value and ending at the last sample.
pub fn default_window(samples: &[(f64, f64)]) -> Result<FitWindow> {
    let (_, v0) = *samples
        .first()
        .ok_or_else(|| Error::Fit("no samples".into()))?;
    let start = samples
        .iter()
        .find(|(_, v)| *v <= v0 / 10.0)
        .ok_or_else(|| Error::Fit("value never dropped by 10x; no tail to fit".into()))?;
    let end = samples.last().expect("non-empty");
    FitWindow::new(start.0, end.0)
}

pub(crate) fn linear_fit(points: &[(f64, f64)], window: FitWindow) -> Result<RateFit> {
    if points.len() < 8 {
        return Err(Error::Fit(format!(
            "need at least 8 samples in [{}, {}], got {}",
            window.lo,
            window.hi,
            points.len()
        )));
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all samples at the same abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    // Constant data is fitted exactly by the flat line.
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * m * (1.0 + my * my) {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        window,
        slope,
        intercept,
        r_squared,
    })
}

fn windowed<'a>(
    samples: &'a [(f64, f64)],
    window: FitWindow,
) -> impl Iterator<Item = &'a (f64, f64)> + 'a {
    samples.iter().filter(move |(t, _)| window.contains(*t))
}

/// Least squares on `(log t, log value)`.
pub fn fit_decay_exponent(samples: &[(f64, f64)], window: FitWindow) -> Result<RateFit> {
    let mut pts = Vec::new();
    for &(t, v) in windowed(samples, window) {
        if !(v > 0.0) || !(t > 0.0) {
            return Err(Error::Fit(format!(
                "log-log fit needs positive samples, got ({t}, {v})"
            )));
        }
        pts.push((t.ln(), v.ln()));
    }
    linear_fit(&pts, window)
}

/// Least squares on `(t, log value)`; the slope is `−α`.
pub fn fit_exponential_rate(samples: &[(f64, f64)], window: FitWindow) -> Result<RateFit> {
    let mut pts = Vec::new();
    for &(t, v) in windowed(samples, window) {
        if !(v > 0.0) {
            return Err(Error::Fit(format!(
                "semi-log fit needs positive values, got {v} at t = {t}"
            )));
        }
        pts.push((t, v.ln()));
    }
    linear_fit(&pts, window)
}

/// Fits the constant `C` of [`theoretical_rate_curve`] to samples in the
/// window by least squares in log space.
pub fn fit_rate_constant(
    samples: &[(f64, f64)],
    window: FitWindow,
    h0: f64,
    gamma: f64,
    s: f64,
) -> Result<f64> {
    let pts: Vec<(f64, f64)> = windowed(samples, window)
        .filter(|(_, v)| *v > 0.0)
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if pts.is_empty() {
        return Err(Error::Fit("no positive samples in window".into()));
    }
    theoretical_rate_curve(h0, gamma, s, 1.0, 0.0)?;
    let cost = |log_c: f64| -> f64 {
        let c = log_c.exp();
        pts.iter()
            .map(|&(t, lv)| {
                let model = theoretical_rate_curve(h0, gamma, s, c, t).expect("validated");
                (model.ln() - lv).powi(2)
            })
            .sum()
    };
    // Coarse scan, then golden-section refinement around the best cell.
    let (lo, hi, steps) = (-60.0f64, 60.0f64, 240);
    let step = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .expect("non-empty scan");
    let (mut a, mut b) = (best - step, best + step);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if cost(x1) <= cost(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    Ok(((a + b) / 2.0).exp())
}

/// Relative residuals `|ΔH/Δt + I| / I` of the dissipation identity, using
/// centred differences at every interior sample with `t >= from`.
pub fn dissipation_residuals(rows: &[DiagnosticsRow], from: f64) -> Vec<(f64, f64)> {
    rows.windows(3)
        .filter(|w| w[1].t >= from)
        .filter_map(|w| {
            let (h0, h2, i1) = (w[0].entropy?, w[2].entropy?, w[1].ksd?);
            if !(i1 > 0.0) || w[2].t <= w[0].t {
                return None;
            }
            let dh = (h2 - h0) / (w[2].t - w[0].t);
            Some((w[1].t, (dh + i1).abs() / i1))
        })
        .collect()
}

/// Median of a non-empty sample; `None` when empty.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

pub fn write_diagnostics_csv(rows: &[DiagnosticsRow], path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(rows.len() * 200 + 64);
    writeln!(out, "{}", DIAGNOSTICS_HEADER.join(",")).expect("write to memory");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_value(r.t),
            fmt_opt(r.entropy),
            fmt_value(r.l2_error),
            fmt_opt(r.ksd),
            fmt_value(r.mass),
            fmt_opt(r.min_density),
            fmt_opt(r.max_density),
            fmt_value(r.dt)
        )
        .expect("write to memory");
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != DIAGNOSTICS_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{}`", DIAGNOSTICS_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| -> Result<Option<f64>> {
            let raw = record.get(i).unwrap_or("").trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|_| {
                parse_err(line, format!("column `{}`: not a number: {raw:?}", DIAGNOSTICS_HEADER[i]))
            })
        };
        let required = |i: usize| -> Result<f64> {
            field(i)?.ok_or_else(|| {
                parse_err(line, format!("column `{}` is empty", DIAGNOSTICS_HEADER[i]))
            })
        };
        rows.push(DiagnosticsRow {
            t: required(0)?,
            entropy: field(1)?,
            l2_error: required(2)?,
            ksd: field(3)?,
            mass: required(4)?,
            min_density: field(5)?,
            max_density: field(6)?,
            dt: required(7)?,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    Ok(rows)
}

/// One line of `rates.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRecord {
    pub run_id: String,
    pub s: f64,
    pub gamma_star: f64,
    pub slope: f64,
    pub expected_slope: Option<f64>,
    pub r_squared: f64,
    pub window_lo: f64,
    pub window_hi: f64,
}

/// Appends records, writing the header when the file is new or empty.
pub fn append_rates_csv(records: &[RateRecord], path: &Path) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut out = Vec::new();
    if fresh {
        writeln!(out, "{}", RATES_HEADER.join(",")).expect("write to memory");
    }
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run_id,
            fmt_value(r.s),
            fmt_value(r.gamma_star),
            fmt_value(r.slope),
            fmt_opt(r.expected_slope),
            fmt_value(r.r_squared),
            fmt_value(r.window_lo),
            fmt_value(r.window_hi)
        )
        .expect("write to memory");
    }
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    file.write_all(&out)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRecord>> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(0, e.to_string()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(0, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<f64> {
            record
                .get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}` is not a number", RATES_HEADER[i])))
        };
        let expected = match record.get(4).unwrap_or("") {
            "" => None,
            _ => Some(num(4)?),
        };
        out.push(RateRecord {
            run_id: record.get(0).unwrap_or("").to_string(),
            s: num(1)?,
            gamma_star: num(2)?,
            slope: num(3)?,
            expected_slope: expected,
            r_squared: num(5)?,
            window_lo: num(6)?,
            window_hi: num(7)?,
        });
    }
    Ok(out)
}
