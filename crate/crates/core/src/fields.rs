//! Random potentials of prescribed Sobolev regularity and the associated
//! Gibbs targets `π = e^{-V} / Z`.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectral::{
    from_spectrum, spectral_gradient, to_spectrum, wavenumber, FourierPlan, GridField, Spectrum,
    MAX_DIM,
};

/// Parameters of a Gaussian random potential.
///
/// Mode `k ≠ 0` is complex Gaussian with standard deviation
/// `amplitude · (1 + |2πk|²)^{-(2γ* + d)/4}`, so the sampled field lies in
/// `H^γ` exactly for `γ < γ*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    pub gamma_star: f64,
    pub amplitude: f64,
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_star > self.dim as f64 / 2.0) || !self.gamma_star.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gamma_star must exceed d/2 = {}, got {}",
                self.dim as f64 / 2.0,
                self.gamma_star
            )));
        }
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    /// Standard deviation of the coefficient at wave vector `k`.
    pub fn mode_std(&self, k: &[i64]) -> f64 {
        let w = wavenumber(k);
        self.amplitude * (1.0 + w * w).powf(-(2.0 * self.gamma_star + self.dim as f64) / 4.0)
    }
}

/// Draws a real, mean-zero potential on the `n^d` grid.
///
/// Pairs `{k, -k}` share one complex draw; self-conjugate modes would sit on
/// a Nyquist slot and are left at zero, so the result is an honest real
/// trigonometric polynomial.
pub fn sample_potential(spec: &PotentialSpec) -> Result<GridField> {
    spec.validate()?;
    let mut spectrum = Spectrum::zeros_grid(spec.dim, spec.n)?;
    if !spec.n.is_power_of_two() {
        return Err(Error::Configuration(format!(
            "grid size {} is not a power of two",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let half = (spec.n / 2) as i64;
    let mut k = [0i64; MAX_DIM];
    let len = spectrum.num_modes();
    for flat in 1..len {
        let neg = spectrum.negated_index(flat);
        if neg <= flat {
            continue;
        }
        spectrum.wavevector(flat, &mut k);
        let k = &k[..spec.dim];
        let std = spec.mode_std(k);
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        if spec.n.is_multiple_of(2) && k.iter().any(|ka| ka.abs() == half) {
            continue;
        }
        let c = Complex64::new(re, im) * (std / std::f64::consts::SQRT_2);
        spectrum.coeffs_mut()[flat] = c;
        spectrum.coeffs_mut()[neg] = c.conj();
    }
    let mut v = from_spectrum(&spectrum)?.into_values();
    // Remove the O(ε) mean left by rounding so the gauge is exact.
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    GridField::new(spec.dim, spec.n, v)
}

/// `π = e^{-V}/Z` with `Z` the grid mean of `e^{-V}`.
pub fn target_from_potential(potential: &GridField) -> Result<GridField> {
    let weights: Vec<f64> = potential.values().iter().map(|v| (-v).exp()).collect();
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w == 0.0) {
        return Err(Error::InvalidInput(format!(
            "e^(-V) not representable at cell {i} (V = {}); amplitude too large",
            potential.values()[i]
        )));
    }
    let z = partition_function_of(&weights);
    if !z.is_finite() {
        return Err(Error::InvalidInput(
            "normalising constant overflowed; amplitude too large".into(),
        ));
    }
    let values = weights.iter().map(|w| w / z).collect();
    GridField::new(potential.dim(), potential.n(), values)
}

fn partition_function_of(weights: &[f64]) -> f64 {
    weights.iter().sum::<f64>() / weights.len() as f64
}

/// Grid quadrature of `∫ e^{-V}`.
pub fn partition_function(potential: &GridField) -> f64 {
    let w: Vec<f64> = potential.values().iter().map(|v| (-v).exp()).collect();
    partition_function_of(&w)
}

/// Spectral gradient of the potential, one field per axis.
pub fn grad_potential(potential: &GridField) -> Result<Vec<GridField>> {
    let plan = FourierPlan::for_field(potential)?;
    let spectrum = plan.forward(potential)?;
    spectral_gradient(&spectrum)
        .iter()
        .map(|c| plan.inverse(c))
        .collect()
}

/// A band-limited potential that can be evaluated off the grid by direct
/// summation of its Fourier series.
#[derive(Debug, Clone)]
pub struct FourierPotential {
    dim: usize,
    /// Half-space modes `(k, V̂_k)`; the conjugate partners are implied.
    modes: Vec<([i64; MAX_DIM], Complex64)>,
    max_freq: usize,
}

impl FourierPotential {
    /// Builds the series from grid samples. Nyquist content is dropped.
    pub fn from_grid(potential: &GridField) -> Result<Self> {
        let spectrum = to_spectrum(potential)?;
        let dim = potential.dim();
        let half = (potential.n() / 2) as i64;
        let mut modes = Vec::new();
        let mut k = [0i64; MAX_DIM];
        let mut max_freq = 0usize;
        for (flat, &c) in spectrum.coeffs().iter().enumerate() {
            let neg = spectrum.negated_index(flat);
            if flat == 0 || neg < flat || c.norm() == 0.0 {
                continue;
            }
            spectrum.wavevector(flat, &mut k);
            if k[..dim].iter().any(|ka| ka.abs() == half) {
                continue;
            }
            for &ka in &k[..dim] {
                max_freq = max_freq.max(ka.unsigned_abs() as usize);
            }
            modes.push((k, c));
        }
        Ok(Self {
            dim,
            modes,
            max_freq,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    /// Phase tables `e^{2πi m x_a}` for `m = 0..=max_freq`.
    fn phases(&self, x: &[f64], table: &mut Vec<Complex64>) {
        let len = self.max_freq + 1;
        table.clear();
        table.resize(self.dim * len, Complex64::new(1.0, 0.0));
        for (axis, &xa) in x.iter().enumerate().take(self.dim) {
            let base = Complex64::cis(2.0 * std::f64::consts::PI * xa);
            let row = &mut table[axis * len..(axis + 1) * len];
            for m in 1..len {
                // Direct evaluation keeps the error independent of m.
                row[m] = if m % 16 == 0 {
                    Complex64::cis(2.0 * std::f64::consts::PI * m as f64 * xa)
                } else {
                    row[m - 1] * base
                };
            }
        }
    }

    fn phase(&self, table: &[Complex64], k: &[i64]) -> Complex64 {
        let len = self.max_freq + 1;
        let mut p = Complex64::new(1.0, 0.0);
        for (axis, &ka) in k.iter().enumerate().take(self.dim) {
            let e = table[axis * len + ka.unsigned_abs() as usize];
            p *= if ka < 0 { e.conj() } else { e };
        }
        p
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut table = Vec::new();
        self.phases(x, &mut table);
        self.modes
            .iter()
            .map(|(k, c)| 2.0 * (c * self.phase(&table, &k[..self.dim])).re)
            .sum()
    }

    /// `∇V(x)` written into `out[..dim]`. `table` is scratch space.
    pub fn gradient_with(&self, x: &[f64], out: &mut [f64], table: &mut Vec<Complex64>) {
        self.phases(x, table);
        out[..self.dim].iter_mut().for_each(|g| *g = 0.0);
        for (k, c) in &self.modes {
            let e = c * self.phase(table, &k[..self.dim]);
            // d/dx_a of 2 Re(c e^{2πik·x}) = -4π k_a Im(c e^{2πik·x})
            for axis in 0..self.dim {
                out[axis] -= 4.0 * std::f64::consts::PI * k[axis] as f64 * e.im;
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.gradient_with(x, &mut out, &mut Vec::new());
        out
    }
}

/// Writes one value per cell, row-major, preceded by a `# dim=.. n=..` line.
pub fn write_grid_csv(field: &GridField, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(field.len() * 24 + 32);
    writeln!(out, "# dim={} n={}", field.dim(), field.n()).expect("write to memory");
    for v in field.values() {
        writeln!(out, "{:.16e}", v).expect("write to memory");
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Reads a grid written by [`write_grid_csv`]. Without a header line the
/// caller must supply `dim`, and the cell count must be a perfect power.
pub fn read_grid_csv(path: &Path, dim: Option<usize>) -> Result<GridField> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line: line as u64,
        message,
    };
    let mut header: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut d = None;
            let mut n = None;
            for tok in rest.split_whitespace() {
                if let Some(v) = tok.strip_prefix("dim=") {
                    d = v.parse().ok();
                } else if let Some(v) = tok.strip_prefix("n=") {
                    n = v.parse().ok();
                }
            }
            if let (Some(d), Some(n)) = (d, n) {
                header = Some((d, n));
            }
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| parse_err(i + 1, format!("not a number: {line:?}")))?;
        values.push(v);
    }
    let (dim, n) = match (header, dim) {
        (Some((d, n)), _) => (d, n),
        (None, Some(d)) => {
            let n = (values.len() as f64).powf(1.0 / d as f64).round() as usize;
            (d, n)
        }
        (None, None) => {
            return Err(parse_err(1, "missing `# dim=.. n=..` header".into()));
        }
    };
    GridField::new(dim, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn spec(gamma_star: f64, seed: u64, dim: usize, n: usize) -> PotentialSpec {
        PotentialSpec {
            gamma_star,
            amplitude: 1.0,
            seed,
            dim,
            n,
        }
    }

    #[test]
    fn sampling_is_deterministic_and_mean_zero() {
        let a = sample_potential(&spec(1.5, 42, 1, 256)).unwrap();
        let b = sample_potential(&spec(1.5, 42, 1, 256)).unwrap();
        assert_eq!(a.values(), b.values());
        assert!(a.mean().abs() <= 1e-12);
        let c = sample_potential(&spec(1.5, 43, 1, 256)).unwrap();
        assert_ne!(a.values(), c.values());
        let d2 = sample_potential(&spec(2.0, 1, 2, 32)).unwrap();
        assert!(d2.mean().abs() <= 1e-12);
    }

    #[test]
    fn rejects_rough_or_degenerate_specs() {
        assert!(sample_potential(&spec(0.5, 0, 1, 64)).is_err());
        assert!(sample_potential(&spec(1.0, 0, 2, 64)).is_err());
        let mut s = spec(1.5, 0, 1, 64);
        s.amplitude = 0.0;
        assert!(sample_potential(&s).is_err());
        assert!(sample_potential(&spec(1.5, 0, 1, 100)).is_err());
    }

    #[test]
    fn variance_decay_slope() {
        // Monte-Carlo oracle: average |V̂_k|² over seeds, regress log-log.
        let n = 2048;
        let gamma_star = 1.5;
        let seeds = 100;
        let kmax = n / 2 - 1;
        let mut power = vec![0.0; kmax + 1];
        for seed in 0..seeds {
            let v = sample_potential(&spec(gamma_star, seed, 1, n)).unwrap();
            let s = to_spectrum(&v).unwrap();
            for (k, p) in power.iter_mut().enumerate().skip(1) {
                *p += s.get(&[k as i64]).unwrap().norm_sqr() / seeds as f64;
            }
        }
        let pts: Vec<(f64, f64)> = (1..=kmax)
            .map(|k| ((k as f64).ln(), power[k].ln()))
            .collect();
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let expected = -(2.0 * gamma_star + 1.0);
        assert!(
            (slope - expected).abs() <= 0.05 * expected.abs(),
            "slope {slope}"
        );
    }

    #[test]
    fn uniform_targets() {
        for c in [0.0, 3.7, -2.0] {
            let pi = target_from_potential(&GridField::constant(1, 16, c).unwrap()).unwrap();
            assert!(pi.values().iter().all(|p| (p - 1.0).abs() < 1e-15));
        }
    }

    #[test]
    fn partition_function_of_cosine_is_bessel_i0() {
        // I₀(1) = Σ_m (1/4)^m / (m!)²
        let mut term: f64 = 1.0;
        let mut i0 = 0.0;
        for m in 0..30 {
            if m > 0 {
                term *= 0.25 / (m as f64 * m as f64);
            }
            i0 += term;
        }
        assert_abs_diff_eq!(i0, 1.2660658777520084, epsilon = 1e-15);
        let v = GridField::from_fn(1, 2048, |x| (2.0 * PI * x[0]).cos()).unwrap();
        assert_abs_diff_eq!(partition_function(&v), i0, epsilon = 1e-10);
        let pi = target_from_potential(&v).unwrap();
        assert_abs_diff_eq!(pi.mean(), 1.0, epsilon = 1e-14);
        assert!(pi.min() > 0.0);
    }

    #[test]
    fn overflowing_potential_is_an_input_error() {
        let v = GridField::from_fn(1, 16, |x| -800.0 * (2.0 * PI * x[0]).cos()).unwrap();
        assert!(matches!(
            target_from_potential(&v),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gradient_of_cosine_potential() {
        let v = GridField::from_fn(1, 128, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let g = &grad_potential(&v).unwrap()[0];
        let expected = GridField::from_fn(1, 128, |x| -2.0 * PI * (2.0 * PI * x[0]).sin()).unwrap();
        assert!(g.l2_distance(&expected).unwrap() < 1e-12);
        let zero = grad_potential(&GridField::constant(2, 8, 4.0).unwrap()).unwrap();
        assert!(zero.iter().all(|c| c.max_abs() == 0.0));
    }

    #[test]
    fn gradient_matches_central_differences() {
        // Second-order finite differences: error ratio ≈ 4 under refinement.
        let v_of = |x: f64| (2.0 * PI * x).sin() + 0.3 * (4.0 * PI * x).cos();
        let mut errs = Vec::new();
        for n in [64usize, 128, 256] {
            let v = GridField::from_fn(1, n, |x| v_of(x[0])).unwrap();
            let g = &grad_potential(&v).unwrap()[0];
            let h = 1.0 / n as f64;
            let vals = v.values();
            let err = (0..n)
                .map(|i| {
                    let fd = (vals[(i + 1) % n] - vals[(i + n - 1) % n]) / (2.0 * h);
                    (fd - g.values()[i]).abs()
                })
                .fold(0.0, f64::max);
            assert!(err <= 200.0 * h * h, "n={n}: {err}");
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5);
    }

    #[test]
    fn series_evaluation_agrees_with_grid() {
        let v = sample_potential(&spec(2.0, 3, 2, 16)).unwrap();
        let series = FourierPotential::from_grid(&v).unwrap();
        let grads = grad_potential(&v).unwrap();
        let mut x = [0.0; 2];
        for flat in [0usize, 17, 100, 255] {
            v.cell_center(flat, &mut x);
            assert_abs_diff_eq!(series.value(&x), v.values()[flat], epsilon = 1e-12);
            let g = series.gradient(&x);
            for a in 0..2 {
                assert_abs_diff_eq!(g[a], grads[a].values()[flat], epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let v = sample_potential(&spec(1.2, 9, 2, 8)).unwrap();
        let path = dir.path().join("potential.csv");
        write_grid_csv(&v, &path).unwrap();
        let back = read_grid_csv(&path, None).unwrap();
        assert_eq!(back, v);
        std::fs::write(&path, "1.0\nabc\n").unwrap();
        match read_grid_csv(&path, Some(1)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
