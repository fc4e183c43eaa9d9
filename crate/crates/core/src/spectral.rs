//! Discrete Fourier analysis on the unit torus `[0,1)^d`.
//!
//! Fields live on a uniform grid with `n` cells per axis; cell `j` is centred
//! at `x_j = j / n`. The forward transform is normalised by `1/n^d`, so the
//! zero mode of a spectrum is the grid mean of the field:
//!
//! ```text
//! f̂_k = n^{-d} Σ_j f(x_j) exp(-2πi k·x_j),    |k_a| ≤ n/2
//! ```
//!
//! Storage follows the usual FFT layout along every axis. For even lengths
//! the Nyquist index `n/2` represents both `+n/2` and `-n/2` and is treated
//! as self-conjugate.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 3;

const TWO_PI: f64 = 2.0 * PI;

/// Real samples of a periodic function on a uniform `n^d` grid (row-major,
/// axis 0 slowest).
#[derive(Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

impl fmt::Debug for GridField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridField")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("mean", &self.mean())
            .finish()
    }
}

fn check_shape(dim: usize, n: usize) -> Result<usize> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Configuration(format!(
            "dimension {dim} outside supported range 1..={MAX_DIM}"
        )));
    }
    if n == 0 {
        return Err(Error::Configuration("grid needs at least one cell".into()));
    }
    n.checked_pow(dim as u32)
        .ok_or_else(|| Error::Configuration(format!("grid {n}^{dim} too large")))
}

impl GridField {
    pub fn new(dim: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        let len = check_shape(dim, n)?;
        if values.len() != len {
            return Err(Error::InvalidInput(format!(
                "expected {len} samples for a {n}^{dim} grid, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample {} at index {i}",
                values[i]
            )));
        }
        Ok(Self { dim, n, values })
    }

    pub fn constant(dim: usize, n: usize, value: f64) -> Result<Self> {
        let len = check_shape(dim, n)?;
        Self::new(dim, n, vec![value; len])
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(dim: usize, n: usize, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let len = check_shape(dim, n)?;
        let mut x = [0.0; MAX_DIM];
        let values = (0..len)
            .map(|flat| {
                cell_center(dim, n, flat, &mut x[..dim]);
                f(&x[..dim])
            })
            .collect();
        Self::new(dim, n, values)
    }

    /// Construction without the finiteness scan, for internal hot paths that
    /// check finiteness themselves.
    pub(crate) fn from_raw(dim: usize, n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n.pow(dim as u32));
        Self { dim, n, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cell width `1/n`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Coordinates of the centre of cell `flat`.
    pub fn cell_center(&self, flat: usize, out: &mut [f64]) {
        cell_center(self.dim, self.n, flat, out);
    }

    pub fn same_shape(&self, other: &GridField) -> bool {
        self.dim == other.dim && self.n == other.n
    }

    pub(crate) fn ensure_same_shape(&self, other: &GridField, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{what}: grid shapes differ ({}^{} vs {}^{})",
                self.n, self.dim, other.n, other.dim
            )))
        }
    }

    /// Grid mean, i.e. the quadrature of the field over the unit torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sqrt(mean f²)`, the L² norm on the unit torus.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn l2_distance(&self, other: &GridField) -> Result<f64> {
        self.ensure_same_shape(other, "l2_distance")?;
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok((sum / self.values.len() as f64).sqrt())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridField> {
        GridField::new(self.dim, self.n, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.ensure_same_shape(other, "zip_with")?;
        GridField::new(
            self.dim,
            self.n,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn sub(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a * b)
    }
}

fn cell_center(dim: usize, n: usize, mut flat: usize, out: &mut [f64]) {
    for axis in (0..dim).rev() {
        out[axis] = (flat % n) as f64 / n as f64;
        flat /= n;
    }
}

/// Signed frequency stored at FFT index `i` of an axis of length `len`.
#[inline]
pub fn frequency(i: usize, len: usize) -> i64 {
    if i <= len / 2 {
        i as i64
    } else {
        i as i64 - len as i64
    }
}

/// Complex Fourier coefficients on the integer lattice `|k_a| ≤ cutoff`.
#[derive(Clone, PartialEq)]
pub struct Spectrum {
    dim: usize,
    /// Storage length per axis (`n` for grid spectra, `2M+1` for truncated ones).
    len: usize,
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrum")
            .field("dim", &self.dim)
            .field("len", &self.len)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl Spectrum {
    /// Zero spectrum laid out like the transform of an `n^d` grid.
    pub fn zeros_grid(dim: usize, n: usize) -> Result<Self> {
        let total = check_shape(dim, n)?;
        Ok(Self {
            dim,
            len: n,
            cutoff: n / 2,
            coeffs: vec![Complex64::new(0.0, 0.0); total],
        })
    }

    /// Zero spectrum holding the modes `‖k‖_∞ ≤ cutoff`.
    pub fn zeros_truncated(dim: usize, cutoff: usize) -> Result<Self> {
        let len = 2 * cutoff + 1;
        let total = check_shape(dim, len)?;
        Ok(Self {
            dim,
            len,
            cutoff,
            coeffs: vec![Complex64::new(0.0, 0.0); total],
        })
    }

    pub(crate) fn from_grid_coeffs(dim: usize, n: usize, coeffs: Vec<Complex64>) -> Self {
        debug_assert_eq!(coeffs.len(), n.pow(dim as u32));
        Self {
            dim,
            len: n,
            cutoff: n / 2,
            coeffs,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Largest representable `|k_a|`.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Storage length per axis.
    pub fn axis_len(&self) -> usize {
        self.len
    }

    /// Number of stored (distinct) modes.
    pub fn num_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// True when the layout matches the transform of an `n^d` grid.
    pub fn is_grid_layout(&self, n: usize) -> bool {
        self.len == n && self.cutoff == n / 2
    }

    /// Writes the wave vector stored at `flat` into `k[..dim]`.
    pub fn wavevector(&self, mut flat: usize, k: &mut [i64]) {
        for axis in (0..self.dim).rev() {
            k[axis] = frequency(flat % self.len, self.len);
            flat /= self.len;
        }
    }

    /// Storage index of the wave vector `k`, if it is representable.
    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let mut flat = 0usize;
        for &ka in k {
            if ka.unsigned_abs() as usize > self.cutoff {
                return None;
            }
            flat = flat * self.len + ka.rem_euclid(self.len as i64) as usize;
        }
        Some(flat)
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.index_of(k).map(|i| self.coeffs[i])
    }

    pub fn set(&mut self, k: &[i64], value: Complex64) -> Result<()> {
        let i = self.index_of(k).ok_or_else(|| {
            Error::InvalidArgument(format!("mode {k:?} outside cutoff {}", self.cutoff))
        })?;
        self.coeffs[i] = value;
        Ok(())
    }

    /// The zero mode, equal to the grid mean of the source field.
    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Storage index of `-k` for the mode at `flat`.
    pub fn negated_index(&self, mut flat: usize) -> usize {
        let mut out = 0usize;
        let mut stride = 1usize;
        for _ in 0..self.dim {
            let i = flat % self.len;
            flat /= self.len;
            let neg = if i == 0 { 0 } else { self.len - i };
            out += neg * stride;
            stride *= self.len;
        }
        out
    }

    /// True when storage index `i` of an axis is the even-length Nyquist slot.
    #[inline]
    pub fn is_nyquist(&self, i: usize) -> bool {
        self.len.is_multiple_of(2) && i == self.len / 2
    }

    /// Largest deviation from `f̂_{-k} = conj(f̂_k)`, relative to the largest
    /// coefficient modulus.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let worst = (0..self.coeffs.len())
            .map(|i| (self.coeffs[self.negated_index(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max);
        worst / scale
    }

    /// Applies `f(k, coefficient)` to every stored mode.
    pub fn map_modes(&self, f: impl Fn(&[i64], Complex64) -> Complex64) -> Spectrum {
        let mut out = self.clone();
        let mut k = [0i64; MAX_DIM];
        for (flat, c) in out.coeffs.iter_mut().enumerate() {
            self.wavevector(flat, &mut k);
            *c = f(&k[..self.dim], *c);
        }
        out
    }

    /// Zeroes modes with `|k_a| > len/3` on any axis (2/3 rule).
    pub fn dealias_two_thirds(&self) -> Spectrum {
        let limit = (self.len / 3) as i64;
        self.map_modes(|k, c| {
            if k.iter().any(|ka| ka.abs() > limit) {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
    }

    fn ensure_compatible(&self, other: &Spectrum, what: &str) -> Result<()> {
        if self.dim == other.dim && self.len == other.len {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{what}: incompatible spectra (dim {}, len {}) vs (dim {}, len {})",
                self.dim, self.len, other.dim, other.len
            )))
        }
    }

    pub fn add(&self, other: &Spectrum) -> Result<Spectrum> {
        self.ensure_compatible(other, "add")?;
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Spectrum) -> Result<Spectrum> {
        self.ensure_compatible(other, "sub")?;
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Spectrum {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= factor);
        out
    }

    /// Real inner product `Σ_k Re(a_k conj(b_k))`, the L² pairing of the
    /// source fields.
    pub fn inner(&self, other: &Spectrum) -> Result<f64> {
        self.ensure_compatible(other, "inner")?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum())
    }
}

/// `|2πk|` for a wave vector.
#[inline]
pub fn wavenumber(k: &[i64]) -> f64 {
    TWO_PI * (k.iter().map(|&ka| (ka * ka) as f64).sum::<f64>()).sqrt()
}

/// Reusable forward/inverse transforms for `n^d` grids.
#[derive(Clone)]
pub struct FourierPlan {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FourierPlan({}^{})", self.n, self.dim)
    }
}

impl FourierPlan {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        check_shape(dim, n)?;
        if !n.is_power_of_two() {
            return Err(Error::Configuration(format!(
                "grid size {n} is not a power of two"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            dim,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn for_field(field: &GridField) -> Result<Self> {
        Self::new(field.dim, field.n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn transform(&self, fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // Last axis is contiguous; rustfft processes consecutive chunks.
        fft.process_with_scratch(buf, &mut scratch);
        if self.dim == 1 {
            return;
        }
        let total = buf.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut stride = n;
        for _axis in 1..self.dim {
            // Lines along an axis with the given stride.
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (j, v) in line.iter_mut().enumerate() {
                        *v = buf[start + j * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        buf[start + j * stride] = *v;
                    }
                }
            }
            stride *= n;
        }
    }

    /// Normalised forward transform in place.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len());
        self.transform(&self.forward, buf);
        let norm = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|c| *c *= norm);
    }

    /// Unnormalised inverse transform in place (exact inverse of
    /// [`forward_in_place`](Self::forward_in_place)).
    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len());
        self.transform(&self.inverse, buf);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn forward(&self, field: &GridField) -> Result<Spectrum> {
        if field.dim != self.dim || field.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "plan for {}^{} applied to a {}^{} grid",
                self.n, self.dim, field.n, field.dim
            )));
        }
        Ok(Spectrum::from_grid_coeffs(
            self.dim,
            self.n,
            self.forward_real(&field.values),
        ))
    }

    pub fn inverse(&self, spectrum: &Spectrum) -> Result<GridField> {
        if spectrum.dim != self.dim || !spectrum.is_grid_layout(self.n) {
            return Err(Error::InvalidArgument(format!(
                "spectrum (dim {}, axis length {}) does not match a {}^{} grid",
                spectrum.dim, spectrum.len, self.n, self.dim
            )));
        }
        let mut buf = spectrum.coeffs.clone();
        self.inverse_in_place(&mut buf);
        let values: Vec<f64> = buf.iter().map(|c| c.re).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "inverse transform produced non-finite values".into(),
            ));
        }
        Ok(GridField::from_raw(self.dim, self.n, values))
    }
}

pub fn to_spectrum(field: &GridField) -> Result<Spectrum> {
    FourierPlan::for_field(field)?.forward(field)
}

pub fn from_spectrum(spectrum: &Spectrum) -> Result<GridField> {
    if !spectrum.len.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "truncated spectra have no grid layout".into(),
        ));
    }
    FourierPlan::new(spectrum.dim, spectrum.len)?.inverse(spectrum)
}

/// Homogeneous multiplier `D^β`: `|2πk|^β` on `k ≠ 0`, zero mode removed.
pub fn apply_multiplier(spectrum: &Spectrum, beta: f64) -> Spectrum {
    spectrum.map_modes(|k, c| {
        let w = wavenumber(k);
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c * w.powf(beta)
        }
    })
}

/// Convolution with the Riesz kernel of order `s`, i.e. `D^{-2s}`.
pub fn riesz_convolve(spectrum: &Spectrum, s: f64) -> Result<Spectrum> {
    if !(s >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "Riesz order must satisfy s >= 1, got {s}"
        )));
    }
    Ok(apply_multiplier(spectrum, -2.0 * s))
}

/// Components of the spectral gradient, `2πi k_j F̂_k`. Nyquist slots along
/// the differentiated axis are zeroed so derivatives of real fields stay real.
pub fn spectral_gradient(spectrum: &Spectrum) -> Vec<Spectrum> {
    (0..spectrum.dim)
        .map(|axis| {
            let mut out = spectrum.clone();
            let mut k = [0i64; MAX_DIM];
            let stride = spectrum.len.pow((spectrum.dim - 1 - axis) as u32);
            for (flat, c) in out.coeffs.iter_mut().enumerate() {
                let i_axis = (flat / stride) % spectrum.len;
                if spectrum.is_nyquist(i_axis) {
                    *c = Complex64::new(0.0, 0.0);
                    continue;
                }
                spectrum.wavevector(flat, &mut k);
                *c *= Complex64::new(0.0, TWO_PI * k[axis] as f64);
            }
            out
        })
        .collect()
}

/// Spectral divergence `Σ_j 2πi k_j F̂^{(j)}_k`, with the same Nyquist
/// convention as [`spectral_gradient`].
pub fn spectral_divergence(components: &[Spectrum]) -> Result<Spectrum> {
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("divergence of an empty field".into()))?;
    if components.len() != first.dim {
        return Err(Error::InvalidArgument(format!(
            "divergence needs {} components, got {}",
            first.dim,
            components.len()
        )));
    }
    let mut acc = Spectrum {
        coeffs: vec![Complex64::new(0.0, 0.0); first.coeffs.len()],
        ..first.clone()
    };
    for (axis, comp) in components.iter().enumerate() {
        first.ensure_compatible(comp, "divergence")?;
        let g = &spectral_gradient(comp)[axis];
        for (a, b) in acc.coeffs.iter_mut().zip(&g.coeffs) {
            *a += b;
        }
    }
    Ok(acc)
}

/// Which Sobolev weight to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SobolevKind {
    /// `Σ_{k≠0} |2πk|^{2β} |F̂_k|²`
    Homogeneous,
    /// `Σ_k (1 + |2πk|²)^β |F̂_k|²`
    Inhomogeneous,
}

pub fn sobolev_norm(spectrum: &Spectrum, beta: f64, kind: SobolevKind) -> f64 {
    let mut k = [0i64; MAX_DIM];
    let mut sum = 0.0;
    for (flat, c) in spectrum.coeffs.iter().enumerate() {
        spectrum.wavevector(flat, &mut k);
        let w = wavenumber(&k[..spectrum.dim]);
        let weight = match kind {
            SobolevKind::Homogeneous if w == 0.0 => continue,
            SobolevKind::Homogeneous => w.powf(2.0 * beta),
            SobolevKind::Inhomogeneous => (1.0 + w * w).powf(beta),
        };
        sum += weight * c.norm_sqr();
    }
    sum.sqrt()
}

/// `sqrt(Σ_{‖k‖_∞ ≤ M} |Â_k − B̂_k|²)` over the distinct modes of `a`.
pub fn truncated_l2_distance(a: &Spectrum, b: &Spectrum, cutoff: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::InvalidArgument(format!(
            "spectra of dimension {} and {}",
            a.dim, b.dim
        )));
    }
    if cutoff > a.cutoff || cutoff > b.cutoff {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} exceeds available modes ({} and {})",
            a.cutoff, b.cutoff
        )));
    }
    let mut k = [0i64; MAX_DIM];
    let mut sum = 0.0;
    for (flat, ca) in a.coeffs.iter().enumerate() {
        a.wavevector(flat, &mut k);
        let k = &k[..a.dim];
        if k.iter().any(|ka| ka.unsigned_abs() as usize > cutoff) {
            continue;
        }
        let cb = b.get(k).expect("mode within both cutoffs");
        sum += (ca - cb).norm_sqr();
    }
    Ok(sum.sqrt())
}
