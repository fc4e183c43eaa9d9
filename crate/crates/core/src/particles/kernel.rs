use crate::diagnostics::{linear_fit, FitWindow};
use crate::error::{Error, Result};
use crate::spectral::{frequency, to_spectrum, GridField, MAX_DIM};

/// Support radius of the Askey kernel.
pub const SUPPORT_RADIUS: f64 = 0.25;

/// Per-coordinate minimum image of `x − y`, each component in `[−1/2, 1/2)`.
pub fn wrap_displacement(x: &[f64], y: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
        let r = a - b;
        *o = r - (r + 0.5).floor();
    }
}

/// `K(r) = (1 − 4|r|)_+^{d+2}` on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AskeyKernel {
    dim: usize,
}

impl AskeyKernel {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "kernel dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn exponent(&self) -> i32 {
        self.dim as i32 + 2
    }

    /// The Riesz order whose spectral decay the kernel shares, `(d + 1)/2`.
    pub fn matching_riesz_order(&self) -> f64 {
        (self.dim as f64 + 1.0) / 2.0
    }

    pub fn value(&self, r: &[f64]) -> f64 {
        let norm = r[..self.dim].iter().map(|x| x * x).sum::<f64>().sqrt();
        let base = 1.0 - 4.0 * norm;
        if base <= 0.0 {
            0.0
        } else {
            base.powi(self.exponent())
        }
    }

    /// `∇K(r)` into `out`; zero at the cusp `r = 0` and outside the support.
    pub fn gradient(&self, r: &[f64], out: &mut [f64]) {
        let norm = r[..self.dim].iter().map(|x| x * x).sum::<f64>().sqrt();
        let base = 1.0 - 4.0 * norm;
        if norm == 0.0 || base <= 0.0 {
            out[..self.dim].iter_mut().for_each(|g| *g = 0.0);
            return;
        }
        let scale = -4.0 * self.exponent() as f64 * base.powi(self.exponent() - 1) / norm;
        for (g, x) in out[..self.dim].iter_mut().zip(r) {
            *g = scale * x;
        }
    }

    /// Value and gradient together; returns `None` outside the support.
    #[inline]
    pub(crate) fn value_and_gradient(&self, r: &[f64], grad: &mut [f64]) -> Option<f64> {
        let norm2 = r[..self.dim].iter().map(|x| x * x).sum::<f64>();
        if norm2 >= SUPPORT_RADIUS * SUPPORT_RADIUS {
            return None;
        }
        let norm = norm2.sqrt();
        let base = 1.0 - 4.0 * norm;
        let p = self.exponent();
        let lower = base.powi(p - 1);
        if norm == 0.0 {
            grad[..self.dim].iter_mut().for_each(|g| *g = 0.0);
        } else {
            let scale = -4.0 * p as f64 * lower / norm;
            for (g, x) in grad[..self.dim].iter_mut().zip(r) {
                *g = scale * x;
            }
        }
        Some(lower * base)
    }
}

/// Result of [`kernel_spectrum_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpectrumFit {
    pub dim: usize,
    pub resolution: usize,
    pub slope: f64,
    pub r_squared: f64,
    pub band: (f64, f64),
    pub min_in_band: f64,
    pub all_positive: bool,
}

impl KernelSpectrumFit {
    /// `−(d + 1)`.
    pub fn expected_slope(&self) -> f64 {
        -(self.dim as f64 + 1.0)
    }
}

/// Samples the kernel on the grid, transforms it, and fits `log|K̂_k|`
/// against `log|k|` over `16 ≤ |k| ≤ N/8`.
pub fn kernel_spectrum_check(dim: usize, resolution: usize) -> Result<KernelSpectrumFit> {
    let kernel = AskeyKernel::new(dim)?;
    let zero = [0.0; MAX_DIM];
    let field = GridField::from_fn(dim, resolution, |x| {
        let mut r = [0.0; MAX_DIM];
        wrap_displacement(x, &zero[..dim], &mut r[..dim]);
        kernel.value(&r[..dim])
    })?;
    let spectrum = to_spectrum(&field)?;
    let lo = 16.0;
    let hi = resolution as f64 / 8.0;
    if hi <= lo {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} leaves no band above |k| = 16"
        )));
    }
    let mut points = Vec::new();
    let mut min_in_band = f64::INFINITY;
    let mut k = [0i64; MAX_DIM];
    for (flat, c) in spectrum.coeffs().iter().enumerate() {
        let mut rest = flat;
        for axis in (0..dim).rev() {
            k[axis] = frequency(rest % resolution, resolution);
            rest /= resolution;
        }
        let radius = k[..dim].iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
        if radius < lo || radius > hi {
            continue;
        }
        min_in_band = min_in_band.min(c.re);
        points.push((radius.ln(), c.norm().ln()));
    }
    let all_positive = min_in_band > 0.0;
    let fit = linear_fit(&points, FitWindow::new(lo, hi)?)?;
    Ok(KernelSpectrumFit {
        dim,
        resolution,
        slope: fit.slope,
        r_squared: fit.r_squared,
        band: (lo, hi),
        min_in_band,
        all_positive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn wrap_cases() {
        let mut out = [0.0];
        wrap_displacement(&[0.1], &[0.9], &mut out);
        assert_abs_diff_eq!(out[0], 0.2, epsilon = 1e-15);
        wrap_displacement(&[0.3], &[0.3], &mut out);
        assert_eq!(out[0], 0.0);
        wrap_displacement(&[0.75], &[0.25], &mut out);
        assert_eq!(out[0], -0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let y = [rng.random::<f64>(), rng.random::<f64>()];
            let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
            wrap_displacement(&x, &y, &mut a);
            wrap_displacement(&y, &x, &mut b);
            for i in 0..2 {
                assert!((-0.5..0.5).contains(&a[i]));
                if a[i] != -0.5 && b[i] != -0.5 {
                    assert_eq!(a[i], -b[i]);
                }
            }
        }
    }

    #[test]
    fn kernel_values() {
        let k2 = AskeyKernel::new(2).unwrap();
        assert_eq!(k2.value(&[0.0, 0.0]), 1.0);
        assert_eq!(k2.value(&[0.25, 0.0]), 0.0);
        assert_eq!(k2.value(&[0.2, 0.2]), 0.0);
        assert_abs_diff_eq!(k2.value(&[0.125, 0.0]), 0.0625, epsilon = 1e-16);
        let k1 = AskeyKernel::new(1).unwrap();
        assert_abs_diff_eq!(k1.value(&[-0.125]), 0.125, epsilon = 1e-16);
        assert!(AskeyKernel::new(0).is_err());
        assert_eq!(k2.matching_riesz_order(), 1.5);
    }

    #[test]
    fn gradient_support_and_antisymmetry() {
        let k = AskeyKernel::new(2).unwrap();
        let mut g = [1.0; 2];
        k.gradient(&[0.3, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
        k.gradient(&[0.0, 0.0], &mut g);
        assert_eq!(g, [0.0, 0.0]);
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        k.gradient(&[0.05, -0.07], &mut a);
        k.gradient(&[-0.05, 0.07], &mut b);
        assert_eq!(a, [-b[0], -b[1]]);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let h = 1e-6;
        for dim in 1..=3 {
            let k = AskeyKernel::new(dim).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                // Stay clear of the cusp and the support edge.
                let mut r = [0.0; MAX_DIM];
                loop {
                    for x in r.iter_mut().take(dim) {
                        *x = rng.random_range(-0.24..0.24);
                    }
                    let n = r[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 0.01 && n < 0.24 {
                        break;
                    }
                }
                let mut g = [0.0; MAX_DIM];
                k.gradient(&r[..dim], &mut g);
                let gnorm = g[..dim].iter().map(|x| x * x).sum::<f64>().sqrt();
                for a in 0..dim {
                    let (mut p, mut m) = (r, r);
                    p[a] += h;
                    m[a] -= h;
                    let fd = (k.value(&p[..dim]) - k.value(&m[..dim])) / (2.0 * h);
                    worst = worst.max((fd - g[a]).abs() / gnorm);
                }
            }
            assert!(worst <= 1e-5, "d={dim}: {worst}");
        }
    }

    #[test]
    fn value_and_gradient_agree_with_separate_calls() {
        let k = AskeyKernel::new(2).unwrap();
        for r in [[0.0, 0.0], [0.1, 0.05], [0.2, 0.2], [-0.01, 0.2]] {
            let mut g1 = [0.0; 2];
            let mut g2 = [0.0; 2];
            k.gradient(&r, &mut g1);
            let v = k.value_and_gradient(&r, &mut g2).unwrap_or(0.0);
            assert_abs_diff_eq!(v, k.value(&r), epsilon = 1e-15);
            if v > 0.0 {
                assert_abs_diff_eq!(g1[0], g2[0], epsilon = 1e-13);
                assert_abs_diff_eq!(g1[1], g2[1], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn small_resolution_is_rejected() {
        assert!(kernel_spectrum_check(1, 64).is_err());
        assert!(kernel_spectrum_check(1, 300).is_err());
    }
}
