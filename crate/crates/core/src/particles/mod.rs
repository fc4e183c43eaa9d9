//! Finite-particle SVGD with the Askey kernel.
//!
//! Each iteration moves every particle by `η φ_i` with
//! `φ_i = −(1/N) Σ_j [K(x_i − x_j)∇V(x_j) + ∇K(x_i − x_j)]`, then wraps back
//! into the unit cell. Forces are accumulated either by the plain pairwise
//! loop or through a cell list that only visits neighbouring cells inside the
//! kernel support; both paths run per particle in a fixed order, so results
//! do not depend on the thread count.

mod kernel;

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::DiagnosticsRow;
use crate::error::{Error, Result};
use crate::fields::FourierPotential;
use crate::spectral::{truncated_l2_distance, Spectrum, MAX_DIM};

pub use kernel::{
    kernel_spectrum_check, wrap_displacement, AskeyKernel, KernelSpectrumFit, SUPPORT_RADIUS,
};

/// Positions of `N` particles in `[0, 1)^d`, stored point after point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    iteration: u64,
    step_size: f64,
}

fn wrap_unit(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, step_size: f64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "particle dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if positions.is_empty() || !positions.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates do not form a non-empty set of {dim}-dimensional points",
                positions.len()
            )));
        }
        if !(step_size > 0.0) || !step_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be positive, got {step_size}"
            )));
        }
        if let Some(x) = positions.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "coordinate {x} lies outside [0, 1)"
            )));
        }
        Ok(Self {
            dim,
            positions,
            iteration: 0,
            step_size,
        })
    }

    /// `count` points drawn uniformly from the unit cell.
    pub fn uniform_random(dim: usize, count: usize, step_size: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..count * dim).map(|_| rng.random::<f64>()).collect();
        Self::new(dim, positions, step_size)
    }

    /// Regular lattice with `m` points per axis at `(j + 1/2)/m`.
    pub fn lattice(dim: usize, m: usize, step_size: f64) -> Result<Self> {
        let count = m.pow(dim as u32);
        let mut positions = Vec::with_capacity(count * dim);
        for flat in 0..count {
            let mut rest = flat;
            let mut point = [0.0; MAX_DIM];
            for axis in (0..dim).rev() {
                point[axis] = ((rest % m) as f64 + 0.5) / m as f64;
                rest /= m;
            }
            positions.extend_from_slice(&point[..dim]);
        }
        Self::new(dim, positions, step_size)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    /// Writes `x0,x1,...` with one row per particle.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        let header: Vec<String> = (0..self.dim).map(|a| format!("x{a}")).collect();
        writeln!(out, "{}", header.join(",")).expect("write to memory");
        for p in self.positions.chunks(self.dim) {
            let row: Vec<String> = p.iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(out, "{}", row.join(",")).expect("write to memory");
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

/// Source of `∇V` at arbitrary points.
pub trait PotentialGradient: Sync {
    fn dim(&self) -> usize;
    fn gradient_at(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<Complex64>);
}

impl PotentialGradient for FourierPotential {
    fn dim(&self) -> usize {
        FourierPotential::dim(self)
    }

    fn gradient_at(&self, x: &[f64], out: &mut [f64], scratch: &mut Vec<Complex64>) {
        self.gradient_with(x, out, scratch);
    }
}

/// `V ≡ 0`.
#[derive(Debug, Clone, Copy)]
pub struct FlatPotential {
    pub dim: usize,
}

impl PotentialGradient for FlatPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gradient_at(&self, _x: &[f64], out: &mut [f64], _scratch: &mut Vec<Complex64>) {
        out[..self.dim].iter_mut().for_each(|g| *g = 0.0);
    }
}

/// How pairwise forces are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForceMethod {
    Naive,
    #[default]
    CellList,
}

/// Cells per axis of the cell list; each cell is `1/8` wide, so the kernel
/// support reaches at most two cells in each direction.
const CELLS_PER_AXIS: usize = 8;
const CELL_REACH: i64 = 2;

struct CellList {
    dim: usize,
    /// Particle indices sorted by cell, ascending within each cell.
    order: Vec<usize>,
    /// `starts[c]..starts[c + 1]` indexes `order` for cell `c`.
    starts: Vec<usize>,
    /// Cell offsets to visit, as flat deltas per axis.
    offsets: Vec<[i64; MAX_DIM]>,
}

impl CellList {
    fn build(ens: &ParticleEnsemble) -> Self {
        let dim = ens.dim;
        let cells = CELLS_PER_AXIS.pow(dim as u32);
        let cell_of: Vec<usize> = (0..ens.len()).map(|i| Self::cell_index(ens.point(i))).collect();
        let mut counts = vec![0usize; cells + 1];
        for &c in &cell_of {
            counts[c + 1] += 1;
        }
        for c in 0..cells {
            counts[c + 1] += counts[c];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut order = vec![0; ens.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            order[fill[c]] = i;
            fill[c] += 1;
        }
        let span = (2 * CELL_REACH + 1) as usize;
        let offsets = (0..span.pow(dim as u32))
            .map(|flat| {
                let mut off = [0i64; MAX_DIM];
                let mut rest = flat;
                for o in off.iter_mut().take(dim) {
                    *o = (rest % span) as i64 - CELL_REACH;
                    rest /= span;
                }
                off
            })
            .collect();
        Self {
            dim,
            order,
            starts,
            offsets,
        }
    }

    fn axis_cell(x: f64) -> usize {
        ((x * CELLS_PER_AXIS as f64) as usize).min(CELLS_PER_AXIS - 1)
    }

    fn cell_index(p: &[f64]) -> usize {
        p.iter().fold(0, |acc, &x| acc * CELLS_PER_AXIS + Self::axis_cell(x))
    }

    fn for_neighbours(&self, p: &[f64], mut f: impl FnMut(usize)) {
        let m = CELLS_PER_AXIS as i64;
        let mut home = [0i64; MAX_DIM];
        for (h, &x) in home.iter_mut().zip(p) {
            *h = Self::axis_cell(x) as i64;
        }
        for off in &self.offsets {
            let cell = (0..self.dim).fold(0usize, |acc, a| {
                acc * CELLS_PER_AXIS + (home[a] + off[a]).rem_euclid(m) as usize
            });
            for &j in &self.order[self.starts[cell]..self.starts[cell + 1]] {
                f(j);
            }
        }
    }
}

/// Per-particle SVGD directions `φ_i`, flattened like the positions.
pub fn svgd_directions(
    ens: &ParticleEnsemble,
    grad_v: &dyn PotentialGradient,
    kernel: &AskeyKernel,
    method: ForceMethod,
) -> Result<Vec<f64>> {
    let dim = ens.dim;
    if grad_v.dim() != dim || kernel.dim() != dim {
        return Err(Error::InvalidArgument(format!(
            "ensemble, potential and kernel dimensions differ ({dim}, {}, {})",
            grad_v.dim(),
            kernel.dim()
        )));
    }
    let n = ens.len();
    let mut grads = vec![0.0; n * dim];
    grads
        .par_chunks_mut(dim)
        .enumerate()
        .for_each_init(Vec::new, |scratch, (i, g)| {
            grad_v.gradient_at(ens.point(i), g, scratch);
        });
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::SolverAbort {
            t: ens.iteration as f64,
            step: ens.iteration,
            reason: format!("non-finite potential gradient at particle {}", bad / dim),
        });
    }
    let cells = (method == ForceMethod::CellList).then(|| CellList::build(ens));
    let inv_n = 1.0 / n as f64;
    let mut phi = vec![0.0; n * dim];
    phi.par_chunks_mut(dim).enumerate().for_each(|(i, out)| {
        let xi = ens.point(i);
        let mut acc = [0.0; MAX_DIM];
        let mut r = [0.0; MAX_DIM];
        let mut gk = [0.0; MAX_DIM];
        let mut visit = |j: usize| {
            wrap_displacement(xi, ens.point(j), &mut r[..dim]);
            if let Some(k) = kernel.value_and_gradient(&r[..dim], &mut gk[..dim]) {
                let gj = &grads[j * dim..(j + 1) * dim];
                for a in 0..dim {
                    acc[a] += k * gj[a] + gk[a];
                }
            }
        };
        match &cells {
            Some(list) => list.for_neighbours(xi, &mut visit),
            None => (0..n).for_each(&mut visit),
        }
        for a in 0..dim {
            out[a] = -inv_n * acc[a];
        }
    });
    Ok(phi)
}

/// One SVGD iteration.
pub fn svgd_step(
    ens: &ParticleEnsemble,
    grad_v: &dyn PotentialGradient,
    kernel: &AskeyKernel,
    method: ForceMethod,
) -> Result<ParticleEnsemble> {
    let phi = svgd_directions(ens, grad_v, kernel, method)?;
    let eta = ens.step_size;
    let positions = ens
        .positions
        .iter()
        .zip(&phi)
        .map(|(x, p)| wrap_unit(x + eta * p))
        .collect();
    Ok(ParticleEnsemble {
        dim: ens.dim,
        positions,
        iteration: ens.iteration + 1,
        step_size: eta,
    })
}

/// `ρ̂_k = (1/N) Σ_j e^{−2πi k·x_j}` for `‖k‖_∞ ≤ M`.
pub fn empirical_spectrum(ens: &ParticleEnsemble, cutoff: usize) -> Result<Spectrum> {
    if cutoff == 0 {
        return Err(Error::InvalidArgument("mode cutoff must be at least 1".into()));
    }
    let dim = ens.dim;
    let mut spectrum = Spectrum::zeros_truncated(dim, cutoff)?;
    let modes = spectrum.num_modes();
    let side = 2 * cutoff + 1;
    let wave: Vec<[i64; MAX_DIM]> = (0..modes)
        .map(|flat| {
            let mut k = [0i64; MAX_DIM];
            spectrum.wavevector(flat, &mut k);
            k
        })
        .collect();
    let mut table = vec![Complex64::new(0.0, 0.0); dim * side];
    let mut acc = vec![Complex64::new(0.0, 0.0); modes];
    for p in ens.positions.chunks(dim) {
        for (axis, &x) in p.iter().enumerate() {
            let row = &mut table[axis * side..(axis + 1) * side];
            for m in 0..=cutoff {
                let e = Complex64::cis(-2.0 * std::f64::consts::PI * m as f64 * x);
                row[cutoff + m] = e;
                row[cutoff - m] = e.conj();
            }
        }
        for (a, k) in acc.iter_mut().zip(&wave) {
            let mut e = Complex64::new(1.0, 0.0);
            for axis in 0..dim {
                e *= table[axis * side + (k[axis] + cutoff as i64) as usize];
            }
            *a += e;
        }
    }
    let inv = 1.0 / ens.len() as f64;
    for (c, a) in spectrum.coeffs_mut().iter_mut().zip(&acc) {
        *c = a * inv;
    }
    Ok(spectrum)
}

/// Parameters of a particle run.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRunConfig {
    pub max_iterations: u64,
    pub sample_every: u64,
    /// Mode cutoff of the reported error.
    pub cutoff: usize,
    /// Further cutoffs tracked alongside the main one.
    pub extra_cutoffs: Vec<usize>,
    pub method: ForceMethod,
}

/// Output of [`run_particles`].
#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub rows: Vec<DiagnosticsRow>,
    /// `(cutoff, rows)` for each extra cutoff.
    pub extra: Vec<(usize, Vec<DiagnosticsRow>)>,
    pub initial: ParticleEnsemble,
    pub final_ensemble: ParticleEnsemble,
}

fn particle_row(ens: &ParticleEnsemble, target: &Spectrum, cutoff: usize) -> Result<DiagnosticsRow> {
    let emp = empirical_spectrum(ens, cutoff)?;
    Ok(DiagnosticsRow {
        t: ens.iteration as f64,
        entropy: None,
        l2_error: truncated_l2_distance(&emp, target, cutoff)?,
        ksd: None,
        mass: emp.mean().re,
        min_density: None,
        max_density: None,
        dt: ens.step_size,
    })
}

/// Iterates [`svgd_step`], recording the truncated `L²` distance between the
/// empirical spectrum and `target` every `sample_every` iterations. The time
/// column holds the iteration count.
pub fn run_particles(
    initial: ParticleEnsemble,
    grad_v: &dyn PotentialGradient,
    target: &Spectrum,
    config: &ParticleRunConfig,
) -> Result<ParticleRun> {
    if config.sample_every == 0 {
        return Err(Error::InvalidArgument("sample_every must be at least 1".into()));
    }
    let kernel = AskeyKernel::new(initial.dim)?;
    let cutoffs: Vec<usize> = std::iter::once(config.cutoff)
        .chain(config.extra_cutoffs.iter().copied())
        .collect();
    let mut tables: Vec<Vec<DiagnosticsRow>> = vec![Vec::new(); cutoffs.len()];
    let record = |ens: &ParticleEnsemble, tables: &mut Vec<Vec<DiagnosticsRow>>| -> Result<()> {
        for (rows, &m) in tables.iter_mut().zip(&cutoffs) {
            rows.push(particle_row(ens, target, m)?);
        }
        Ok(())
    };
    let mut ens = initial.clone();
    record(&ens, &mut tables)?;
    while ens.iteration < config.max_iterations {
        ens = svgd_step(&ens, grad_v, &kernel, config.method)?;
        if ens.iteration.is_multiple_of(config.sample_every) || ens.iteration == config.max_iterations {
            record(&ens, &mut tables)?;
        }
    }
    let mut tables = tables.into_iter();
    let rows = tables.next().expect("main cutoff");
    Ok(ParticleRun {
        rows,
        extra: config.extra_cutoffs.iter().copied().zip(tables).collect(),
        initial,
        final_ensemble: ens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_potential, target_from_potential, PotentialSpec};
    use crate::spectral::to_spectrum;
    use approx::assert_abs_diff_eq;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn potential(dim: usize, seed: u64, amplitude: f64) -> FourierPotential {
        let v = sample_potential(&PotentialSpec { gamma_star: 2.0, amplitude, seed, dim, n: 32 }).unwrap();
        FourierPotential::from_grid(&v).unwrap()
    }

    #[test]
    fn ensemble_validation() {
        assert!(ParticleEnsemble::new(2, vec![0.1, 0.2, 0.3], 0.05).is_err());
        assert!(ParticleEnsemble::new(1, vec![1.0], 0.05).is_err());
        assert!(ParticleEnsemble::new(1, vec![], 0.05).is_err());
        assert!(ParticleEnsemble::new(1, vec![0.5], 0.0).is_err());
        assert_eq!(wrap_unit(-1e-18), 0.0);
        assert_eq!(wrap_unit(1.25), 0.25);
    }

    #[test]
    fn lattice_is_stationary_without_potential() {
        for (dim, m) in [(1usize, 20usize), (2, 10)] {
            let ens = ParticleEnsemble::lattice(dim, m, 0.05).unwrap();
            let k = AskeyKernel::new(dim).unwrap();
            let flat = FlatPotential { dim };
            for method in [ForceMethod::Naive, ForceMethod::CellList] {
                let phi = svgd_directions(&ens, &flat, &k, method).unwrap();
                assert!(phi.iter().all(|p| p.abs() <= 1e-12), "{method:?}");
                let next = svgd_step(&ens, &flat, &k, method).unwrap();
                assert!(max_diff(next.positions(), ens.positions()) <= 1e-12);
                assert_eq!(next.iteration(), 1);
            }
        }
    }

    #[test]
    fn single_particle_does_gradient_descent() {
        let pot = potential(2, 4, 1.0);
        let ens = ParticleEnsemble::new(2, vec![0.3, 0.6], 0.05).unwrap();
        let k = AskeyKernel::new(2).unwrap();
        let phi = svgd_directions(&ens, &pot, &k, ForceMethod::Naive).unwrap();
        let g = pot.gradient(&[0.3, 0.6]);
        assert_abs_diff_eq!(phi[0], -g[0], epsilon = 1e-15);
        assert_abs_diff_eq!(phi[1], -g[1], epsilon = 1e-15);
    }

    #[test]
    fn two_particles_repel() {
        let ens = ParticleEnsemble::new(2, vec![0.4, 0.5, 0.525, 0.5], 0.05).unwrap();
        let k = AskeyKernel::new(2).unwrap();
        let phi = svgd_directions(&ens, &FlatPotential { dim: 2 }, &k, ForceMethod::CellList).unwrap();
        assert!(phi[0] < 0.0 && phi[2] > 0.0);
        assert_abs_diff_eq!(phi[0], -phi[2], epsilon = 1e-16);
        assert_eq!(phi[1], 0.0);
        assert_eq!(phi[3], 0.0);
        // The pair straddling the boundary pushes apart through it.
        let wrapped = ParticleEnsemble::new(1, vec![0.02, 0.98], 0.05).unwrap();
        let k1 = AskeyKernel::new(1).unwrap();
        let phi = svgd_directions(&wrapped, &FlatPotential { dim: 1 }, &k1, ForceMethod::Naive).unwrap();
        assert!(phi[0] > 0.0 && phi[1] < 0.0);
    }

    #[test]
    fn cell_list_matches_naive() {
        for dim in 1..=3 {
            let ens = ParticleEnsemble::uniform_random(dim, 700, 0.05, 11 + dim as u64).unwrap();
            let pot = potential(dim, 2, 3.0);
            let k = AskeyKernel::new(dim).unwrap();
            let a = svgd_directions(&ens, &pot, &k, ForceMethod::Naive).unwrap();
            let b = svgd_directions(&ens, &pot, &k, ForceMethod::CellList).unwrap();
            assert!(max_diff(&a, &b) <= 1e-12, "d={dim}: {}", max_diff(&a, &b));
        }
    }

    #[test]
    fn total_repulsion_vanishes() {
        let ens = ParticleEnsemble::uniform_random(2, 500, 0.05, 8).unwrap();
        let k = AskeyKernel::new(2).unwrap();
        let phi = svgd_directions(&ens, &FlatPotential { dim: 2 }, &k, ForceMethod::CellList).unwrap();
        for a in 0..2 {
            let total: f64 = phi.iter().skip(a).step_by(2).sum();
            assert!(total.abs() <= 1e-12, "{total}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        let ens = ParticleEnsemble::uniform_random(2, 300, 0.05, 21).unwrap();
        let pot = potential(2, 9, 2.0);
        let k = AskeyKernel::new(2).unwrap();
        let n = ens.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let mut permuted = Vec::with_capacity(2 * n);
        for &p in &perm {
            permuted.extend_from_slice(ens.point(p));
        }
        let other = ParticleEnsemble::new(2, permuted, 0.05).unwrap();
        let a = svgd_step(&ens, &pot, &k, ForceMethod::CellList).unwrap();
        let b = svgd_step(&other, &pot, &k, ForceMethod::CellList).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert!(max_diff(b.point(i), a.point(p)) <= 1e-14);
        }
    }

    #[test]
    fn translation_equivariance_without_potential() {
        let ens = ParticleEnsemble::uniform_random(2, 300, 0.05, 5).unwrap();
        let k = AskeyKernel::new(2).unwrap();
        let flat = FlatPotential { dim: 2 };
        let c = [0.3125, 0.6875];
        let shifted: Vec<f64> = ens
            .positions()
            .chunks(2)
            .flat_map(|p| [wrap_unit(p[0] + c[0]), wrap_unit(p[1] + c[1])])
            .collect();
        let other = ParticleEnsemble::new(2, shifted, 0.05).unwrap();
        let a = svgd_step(&ens, &flat, &k, ForceMethod::Naive).unwrap();
        let b = svgd_step(&other, &flat, &k, ForceMethod::Naive).unwrap();
        for i in 0..ens.len() {
            let mut d = [0.0; 2];
            let expected = [wrap_unit(a.point(i)[0] + c[0]), wrap_unit(a.point(i)[1] + c[1])];
            wrap_displacement(b.point(i), &expected, &mut d);
            assert!(d[0].abs().max(d[1].abs()) <= 1e-12);
        }
    }

    #[test]
    fn positions_stay_in_unit_cell() {
        let pot = potential(2, 1, 50.0);
        let mut ens = ParticleEnsemble::uniform_random(2, 200, 0.05, 3).unwrap();
        let k = AskeyKernel::new(2).unwrap();
        for _ in 0..20 {
            ens = svgd_step(&ens, &pot, &k, ForceMethod::CellList).unwrap();
            assert!(ens.positions().iter().all(|x| (0.0..1.0).contains(x)));
        }
    }

    #[test]
    fn empirical_spectrum_cases() {
        let origin = ParticleEnsemble::new(2, vec![0.0, 0.0], 0.05).unwrap();
        let s = empirical_spectrum(&origin, 3).unwrap();
        assert!(s.coeffs().iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() <= 1e-15));

        let lattice = ParticleEnsemble::lattice(2, 12, 0.05).unwrap();
        let s = empirical_spectrum(&lattice, 8).unwrap();
        for (flat, c) in s.coeffs().iter().enumerate() {
            let expected = if flat == s.index_of(&[0, 0]).unwrap() { 1.0 } else { 0.0 };
            assert!((c - Complex64::new(expected, 0.0)).norm() <= 1e-13);
        }

        let random = ParticleEnsemble::uniform_random(2, 100, 0.05, 1).unwrap();
        let s = empirical_spectrum(&random, 5).unwrap();
        assert_eq!(s.hermitian_defect(), 0.0);
        assert_eq!(s.mean(), Complex64::new(1.0, 0.0));
        assert!(empirical_spectrum(&random, 0).is_err());
    }

    #[test]
    fn flat_lattice_run_has_zero_error() {
        let ens = ParticleEnsemble::lattice(2, 20, 0.05).unwrap();
        let target = to_spectrum(&crate::spectral::GridField::constant(2, 32, 1.0).unwrap()).unwrap();
        let cfg = ParticleRunConfig {
            max_iterations: 10,
            sample_every: 2,
            cutoff: 8,
            extra_cutoffs: vec![15],
            method: ForceMethod::CellList,
        };
        let run = run_particles(ens, &FlatPotential { dim: 2 }, &target, &cfg).unwrap();
        assert_eq!(run.rows.len(), 6);
        assert!(run.rows.iter().all(|r| r.l2_error <= 1e-12));
        assert_eq!(run.extra[0].0, 15);
        assert_eq!(run.extra[0].1.len(), 6);
    }

    #[test]
    fn short_run_reduces_error() {
        let v = sample_potential(&PotentialSpec { gamma_star: 2.0, amplitude: 1.0, seed: 7, dim: 2, n: 32 }).unwrap();
        let pot = FourierPotential::from_grid(&v).unwrap();
        let target = to_spectrum(&target_from_potential(&v).unwrap()).unwrap();
        let ens = ParticleEnsemble::uniform_random(2, 400, 0.05, 2).unwrap();
        let cfg = ParticleRunConfig {
            max_iterations: 40,
            sample_every: 10,
            cutoff: 8,
            extra_cutoffs: vec![],
            method: ForceMethod::CellList,
        };
        let run = run_particles(ens.clone(), &pot, &target, &cfg).unwrap();
        let first = run.rows.first().unwrap().l2_error;
        let last = run.rows.last().unwrap().l2_error;
        assert!(last < 0.5 * first, "{first} -> {last}");
        let again = run_particles(ens, &pot, &target, &cfg).unwrap();
        assert_eq!(run.rows, again.rows);
    }
}
