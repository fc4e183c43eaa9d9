//! Mean-field Stein variational gradient flow on the torus.
//!
//! The density is transported by `∂_t ρ + div(ρ v) = 0` with the Riesz
//! velocity
//!
//! ```text
//! v = −∇D^{-2s}(ρ − π) − D^{-2s}((ρ − π)∇V)
//! ```
//!
//! computed spectrally, and advanced with a conservative first-order upwind
//! finite-volume scheme under an adaptive CFL step.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::diagnostics::{ksd_with_plan, relative_entropy, DiagnosticsRow};
use crate::error::{Error, Result};
use crate::spectral::{
    apply_multiplier, frequency, spectral_gradient, wavenumber, FourierPlan, GridField, Spectrum,
    MAX_DIM,
};

/// Tolerated mismatch between the masses of `ρ` and `π`.
pub const MASS_MISMATCH_TOL: f64 = 1e-10;

/// Halvings attempted before a rejected step aborts the run.
const MAX_STEP_HALVINGS: u32 = 60;

/// When diagnostics are recorded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleSchedule {
    /// Every `dt` units of time.
    Every(f64),
    /// `per_decade` log-spaced times per decade, starting at `first`.
    PerDecade { per_decade: u32, first: f64 },
}

impl SampleSchedule {
    /// Sample times in `[0, t_end]`, always including both ends.
    pub fn times(&self, t_end: f64) -> Vec<f64> {
        let mut out = vec![0.0];
        match *self {
            SampleSchedule::Every(every) => {
                let count = (t_end / every).floor() as u64;
                out.extend((1..=count).map(|i| i as f64 * every));
            }
            SampleSchedule::PerDecade { per_decade, first } => {
                let mut j = 0u32;
                loop {
                    let t = first * 10f64.powf(j as f64 / per_decade as f64);
                    if t >= t_end {
                        break;
                    }
                    out.push(t);
                    j += 1;
                }
            }
        }
        let last = *out.last().expect("non-empty");
        if t_end - last > 1e-9 * t_end.max(1.0) {
            out.push(t_end);
        } else if let Some(l) = out.last_mut() {
            *l = t_end;
        }
        out.dedup();
        out
    }
}

/// Time-stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    pub cfl_number: f64,
    pub dt_max: f64,
    pub t_end: f64,
    pub sampling: SampleSchedule,
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl_number > 0.0 && self.cfl_number < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_number must lie in (0, 1), got {}",
                self.cfl_number
            )));
        }
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt_max must be positive, got {}",
                self.dt_max
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        match self.sampling {
            SampleSchedule::Every(e) if !(e > 0.0) => Err(Error::InvalidArgument(format!(
                "sample_every must be positive, got {e}"
            ))),
            SampleSchedule::PerDecade { per_decade, first }
                if per_decade == 0 || !(first > 0.0) =>
            {
                Err(Error::InvalidArgument(
                    "log sampling needs per_decade >= 1 and a positive first time".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// `dt = min(dt_max, cfl · dx / max|v|)`.
pub fn cfl_timestep(velocity: &[GridField], dx: f64, policy: &StepPolicy) -> f64 {
    let vmax = velocity.iter().map(GridField::max_abs).fold(0.0, f64::max);
    cfl_from_max(vmax, dx, policy)
}

fn cfl_from_max(vmax: f64, dx: f64, policy: &StepPolicy) -> f64 {
    if vmax > 0.0 {
        policy.dt_max.min(policy.cfl_number * dx / vmax)
    } else {
        policy.dt_max
    }
}

/// Spectral velocity operator with precomputed symbols and scratch space.
#[derive(Debug, Clone)]
pub struct VelocityOperator {
    plan: FourierPlan,
    dim: usize,
    s: f64,
    /// `|2πk|^{-2s}`, zero at `k = 0`.
    riesz: Vec<f64>,
    /// `2πk_j` per axis, zero on the Nyquist slot of axis `j`.
    deriv: Vec<Vec<f64>>,
    /// Optional 2/3-rule mask.
    keep: Option<Vec<bool>>,
    grad_v: Vec<Vec<f64>>,
    sigma: Vec<f64>,
    sigma_hat: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl VelocityOperator {
    pub fn new(grad_v: &[GridField], s: f64, dealias: bool) -> Result<Self> {
        let first = grad_v
            .first()
            .ok_or_else(|| Error::InvalidArgument("potential gradient has no components".into()))?;
        let dim = first.dim();
        let n = first.n();
        if grad_v.len() != dim || grad_v.iter().any(|g| !g.same_shape(first)) {
            return Err(Error::InvalidArgument(
                "potential gradient must have one grid per axis".into(),
            ));
        }
        if !(s >= 1.0) {
            return Err(Error::InvalidArgument(format!("s must be >= 1, got {s}")));
        }
        let plan = FourierPlan::new(dim, n)?;
        let len = plan.len();
        let mut riesz = vec![0.0; len];
        let mut deriv = vec![vec![0.0; len]; dim];
        let mut keep = dealias.then(|| vec![true; len]);
        let limit = (n / 3) as i64;
        let mut k = [0i64; MAX_DIM];
        for flat in 0..len {
            let mut rest = flat;
            for axis in (0..dim).rev() {
                let i = rest % n;
                rest /= n;
                k[axis] = frequency(i, n);
                deriv[axis][flat] = if n % 2 == 0 && i == n / 2 {
                    0.0
                } else {
                    2.0 * PI * k[axis] as f64
                };
            }
            let w = wavenumber(&k[..dim]);
            riesz[flat] = if w == 0.0 { 0.0 } else { w.powf(-2.0 * s) };
            if let Some(mask) = keep.as_mut() {
                mask[flat] = k[..dim].iter().all(|ka| ka.abs() <= limit);
            }
        }
        let mut grad = grad_v.iter().map(|g| g.values().to_vec()).collect::<Vec<_>>();
        if let Some(mask) = &keep {
            for g in &mut grad {
                let mut hat = plan.forward_real(g);
                apply_mask(&mut hat, mask);
                plan.inverse_in_place(&mut hat);
                g.iter_mut().zip(&hat).for_each(|(x, c)| *x = c.re);
            }
        }
        Ok(Self {
            plan,
            dim,
            s,
            riesz,
            deriv,
            keep,
            grad_v: grad,
            sigma: vec![0.0; len],
            sigma_hat: vec![Complex64::new(0.0, 0.0); len],
            work: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn plan(&self) -> &FourierPlan {
        &self.plan
    }

    /// Velocity components for `σ = ρ − π`, written into `out[axis]`.
    pub fn apply(&mut self, rho: &[f64], pi: &[f64], out: &mut [Vec<f64>]) {
        for ((s, r), p) in self.sigma.iter_mut().zip(rho).zip(pi) {
            *s = r - p;
        }
        for (c, s) in self.sigma_hat.iter_mut().zip(&self.sigma) {
            *c = Complex64::new(*s, 0.0);
        }
        self.plan.forward_in_place(&mut self.sigma_hat);
        if let Some(mask) = &self.keep {
            apply_mask(&mut self.sigma_hat, mask);
            self.work.copy_from_slice(&self.sigma_hat);
            self.plan.inverse_in_place(&mut self.work);
            for (s, c) in self.sigma.iter_mut().zip(&self.work) {
                *s = c.re;
            }
        }
        for axis in 0..self.dim {
            for ((w, s), g) in self.work.iter_mut().zip(&self.sigma).zip(&self.grad_v[axis]) {
                *w = Complex64::new(s * g, 0.0);
            }
            self.plan.forward_in_place(&mut self.work);
            if let Some(mask) = &self.keep {
                apply_mask(&mut self.work, mask);
            }
            let d = &self.deriv[axis];
            for (i, w) in self.work.iter_mut().enumerate() {
                let m = self.riesz[i];
                let sh = self.sigma_hat[i];
                // −(i d m) σ̂ − m P̂
                let grad_term = Complex64::new(-d[i] * sh.im, d[i] * sh.re) * m;
                *w = -(grad_term + *w * m);
            }
            self.plan.inverse_in_place(&mut self.work);
            for (o, w) in out[axis].iter_mut().zip(&self.work) {
                *o = w.re;
            }
        }
    }
}

fn apply_mask(hat: &mut [Complex64], mask: &[bool]) {
    for (c, keep) in hat.iter_mut().zip(mask) {
        if !keep {
            *c = Complex64::new(0.0, 0.0);
        }
    }
}

fn check_masses(rho: &GridField, pi: &GridField) -> Result<()> {
    let (mr, mp) = (rho.mean(), pi.mean());
    if (mr - mp).abs() > MASS_MISMATCH_TOL {
        return Err(Error::StateCorruption(format!(
            "mass of rho ({mr}) and pi ({mp}) differ by more than {MASS_MISMATCH_TOL:e}"
        )));
    }
    Ok(())
}

/// Velocity field in the expanded form `−∇D^{-2s}σ − D^{-2s}(σ∇V)`.
pub fn velocity_field(
    rho: &GridField,
    pi: &GridField,
    grad_v: &[GridField],
    s: f64,
) -> Result<Vec<GridField>> {
    rho.ensure_same_shape(pi, "velocity_field")?;
    check_masses(rho, pi)?;
    let mut op = VelocityOperator::new(grad_v, s, false)?;
    if grad_v[0].dim() != rho.dim() || grad_v[0].n() != rho.n() {
        return Err(Error::InvalidArgument(
            "potential gradient and density live on different grids".into(),
        ));
    }
    let mut out = vec![vec![0.0; rho.len()]; rho.dim()];
    op.apply(rho.values(), pi.values(), &mut out);
    Ok(out
        .into_iter()
        .map(|v| GridField::from_raw(rho.dim(), rho.n(), v))
        .collect())
}

/// Velocity field in the form `−D^{-2s}(π∇(σ/π))`, for cross-checking.
pub fn velocity_field_weighted_form(
    rho: &GridField,
    pi: &GridField,
    s: f64,
) -> Result<Vec<GridField>> {
    rho.ensure_same_shape(pi, "velocity_field_weighted_form")?;
    check_masses(rho, pi)?;
    let plan = FourierPlan::for_field(rho)?;
    let ratio = rho.zip_with(pi, |r, p| (r - p) / p)?;
    spectral_gradient(&plan.forward(&ratio)?)
        .iter()
        .map(|g| {
            let weighted = plan.inverse(g)?.mul(pi)?;
            let conv = apply_multiplier(&plan.forward(&weighted)?, -2.0 * s);
            plan.inverse(&conv.scale(-1.0))
        })
        .collect()
}

/// Exact evolution of the linearisation around the uniform target,
/// `σ̂_k(t) = σ̂_k(0) exp(−|2πk|^{2−2s} t)`.
pub fn linearized_evolution(sigma0: &Spectrum, s: f64, t: f64) -> Result<Spectrum> {
    let scale = sigma0.coeffs().iter().fold(0.0f64, |m, c| m.max(c.norm()));
    if sigma0.mean().norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(
            "linearised evolution needs a zero-mean perturbation".into(),
        ));
    }
    let mut out = sigma0.map_modes(|k, c| {
        let w = wavenumber(k);
        if w == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            c * (-(w.powf(2.0 - 2.0 * s)) * t).exp()
        }
    });
    out.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
    Ok(out)
}

/// Largest outflow fraction of any cell along any axis for step `dt`.
fn outflow_fraction(velocity: &[Vec<f64>], dim: usize, n: usize, dt: f64) -> f64 {
    let ratio = dt * n as f64;
    let mut worst = 0.0f64;
    for (axis, v) in velocity.iter().enumerate().take(dim) {
        let stride = n.pow((dim - 1 - axis) as u32);
        for_each_line(dim, n, axis, |base| {
            for j in 0..n {
                let jp = (j + 1) % n;
                let jm = (j + n - 1) % n;
                let here = v[base + j * stride];
                let right = 0.5 * (here + v[base + jp * stride]);
                let left = 0.5 * (v[base + jm * stride] + here);
                let out = ratio * (right.max(0.0) - left.min(0.0));
                worst = worst.max(out);
            }
        });
    }
    worst
}

/// Calls `f(base)` for the start index of every grid line along `axis`.
fn for_each_line(dim: usize, n: usize, axis: usize, mut f: impl FnMut(usize)) {
    let stride = n.pow((dim - 1 - axis) as u32);
    let block = stride * n;
    let total = n.pow(dim as u32);
    for outer in (0..total).step_by(block) {
        for inner in 0..stride {
            f(outer + inner);
        }
    }
}

fn sweep_axis(rho: &mut [f64], v: &[f64], dim: usize, n: usize, axis: usize, dt: f64, flux: &mut Vec<f64>) {
    let stride = n.pow((dim - 1 - axis) as u32);
    let ratio = dt * n as f64;
    flux.resize(n, 0.0);
    for_each_line(dim, n, axis, |base| {
        for j in 0..n {
            let jp = (j + 1) % n;
            let (ia, ib) = (base + j * stride, base + jp * stride);
            let u = 0.5 * (v[ia] + v[ib]);
            flux[j] = u.max(0.0) * rho[ia] + u.min(0.0) * rho[ib];
        }
        for j in 0..n {
            let jm = (j + n - 1) % n;
            rho[base + j * stride] -= ratio * (flux[j] - flux[jm]);
        }
    });
}

/// Mass-conservative upwind update.
///
/// The step is rejected with [`Error::CflViolation`] if any cell would send
/// out more than its content, which is exactly when positivity could fail.
pub fn upwind_step(rho: &GridField, velocity: &[GridField], dt: f64) -> Result<GridField> {
    if velocity.len() != rho.dim() || velocity.iter().any(|v| !v.same_shape(rho)) {
        return Err(Error::InvalidArgument(
            "velocity needs one component per axis on the density grid".into(),
        ));
    }
    let v: Vec<Vec<f64>> = velocity.iter().map(|c| c.values().to_vec()).collect();
    let mut values = rho.values().to_vec();
    upwind_in_place(&mut values, &v, rho.dim(), rho.n(), dt, false, &mut Vec::new())?;
    GridField::new(rho.dim(), rho.n(), values)
}

fn upwind_in_place(
    rho: &mut [f64],
    v: &[Vec<f64>],
    dim: usize,
    n: usize,
    dt: f64,
    strang: bool,
    flux: &mut Vec<f64>,
) -> Result<()> {
    let worst = outflow_fraction(v, dim, n, dt);
    if worst > 1.0 {
        return Err(Error::CflViolation {
            dt,
            limit: dt / worst,
        });
    }
    if strang && dim > 1 {
        let last = dim - 1;
        for axis in 0..last {
            sweep_axis(rho, &v[axis], dim, n, axis, 0.5 * dt, flux);
        }
        sweep_axis(rho, &v[last], dim, n, last, dt, flux);
        for axis in (0..last).rev() {
            sweep_axis(rho, &v[axis], dim, n, axis, 0.5 * dt, flux);
        }
    } else {
        for (axis, va) in v.iter().enumerate().take(dim) {
            sweep_axis(rho, va, dim, n, axis, dt, flux);
        }
    }
    Ok(())
}

/// Upper bound `M` on the density for `s = 1`.
///
/// At a maximum point `∂_t ρ = −ρ(ρ − π − g)` with
/// `g = div D^{-2}(σ∇V)`. Each coefficient of `g` is bounded by
/// `|2πk|^{-1} ‖∇V‖_∞ ‖σ‖_{L¹}`, and by Pinsker and entropy decay
/// `‖σ‖_{L¹} ≤ sqrt(2 H(ρ̄|π))`. Summing over the grid modes gives a bound on
/// `‖g‖_∞` valid for the whole run, hence `M = max π + that bound`.
pub fn max_principle_bound(pi: &GridField, grad_v: &[GridField], initial_entropy: f64) -> f64 {
    let dim = pi.dim();
    let n = pi.n();
    let grad_sup = (0..pi.len())
        .map(|i| grad_v.iter().map(|g| g.values()[i].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut mode_sum = 0.0;
    let mut k = [0i64; MAX_DIM];
    let half = (n / 2) as i64;
    for flat in 1..pi.len() {
        let mut rest = flat;
        for axis in (0..dim).rev() {
            k[axis] = frequency(rest % n, n);
            rest /= n;
        }
        if n.is_multiple_of(2) && k[..dim].contains(&half) {
            continue;
        }
        mode_sum += 1.0 / wavenumber(&k[..dim]);
    }
    pi.max() + grad_sup * (2.0 * initial_entropy.max(0.0)).sqrt() * mode_sum
}

/// Run-time monitor for the `s = 1` maximum principle.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPrincipleMonitor {
    /// The frozen constant `M`.
    pub bound_m: f64,
    pub initial_max: f64,
    /// Largest density seen over all steps.
    pub observed_max: f64,
    /// Sample times at which `max ρ_t > max(M, max ρ̄)`.
    pub violations: Vec<f64>,
}

impl MaxPrincipleMonitor {
    pub fn ceiling(&self) -> f64 {
        self.bound_m.max(self.initial_max)
    }

    pub fn holds(&self) -> bool {
        self.violations.is_empty() && self.observed_max <= self.ceiling()
    }
}

/// Conservation bookkeeping collected at every step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InvariantReport {
    pub max_mass_deviation: f64,
    pub min_density: f64,
    /// Largest `H(t_{i+1}) − H(t_i)` between consecutive samples.
    pub max_entropy_increase: f64,
    /// Samples where `H(t_{i+1}) > H(t_i) + ENTROPY_TOL`.
    pub entropy_violations: Vec<f64>,
    /// Samples where the comparison bound `H ≤ ‖ρ−π‖²/min π` failed.
    pub entropy_bound_violations: Vec<f64>,
}

pub const MASS_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-13;
pub const ENTROPY_TOL: f64 = 1e-8;

impl InvariantReport {
    pub fn mass_ok(&self) -> bool {
        self.max_mass_deviation <= MASS_TOL
    }

    pub fn positivity_ok(&self) -> bool {
        self.min_density >= -POSITIVITY_TOL
    }

    pub fn entropy_ok(&self) -> bool {
        self.entropy_violations.is_empty()
    }

    pub fn all_ok(&self) -> bool {
        self.mass_ok()
            && self.positivity_ok()
            && self.entropy_ok()
            && self.entropy_bound_violations.is_empty()
    }
}

/// Snapshot of the evolving solution.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub rho: GridField,
    pub t: f64,
    pub step_count: u64,
    pub pi: GridField,
    pub grad_v: Vec<GridField>,
    pub s: f64,
}

/// Everything a mean-field run needs.
#[derive(Debug, Clone)]
pub struct MeanfieldProblem {
    pub rho0: GridField,
    pub pi: GridField,
    pub grad_v: Vec<GridField>,
    pub s: f64,
    pub policy: StepPolicy,
    pub dealias: bool,
    pub strang: bool,
}

/// Output of [`run_meanfield`].
#[derive(Debug, Clone)]
pub struct MeanfieldRun {
    pub rows: Vec<DiagnosticsRow>,
    pub invariants: InvariantReport,
    pub max_principle: Option<MaxPrincipleMonitor>,
    pub final_state: SolverState,
    pub steps: u64,
    pub rejected_steps: u64,
}

/// Stepper holding the state and the velocity operator.
#[derive(Debug)]
pub struct MeanfieldSolver {
    state: SolverState,
    op: VelocityOperator,
    policy: StepPolicy,
    strang: bool,
    velocity: Vec<Vec<f64>>,
    flux: Vec<f64>,
    trial: Vec<f64>,
    last_dt: f64,
    rejected: u64,
    report: InvariantReport,
    observed_max: f64,
}

impl MeanfieldSolver {
    pub fn new(problem: &MeanfieldProblem) -> Result<Self> {
        problem.policy.validate()?;
        let rho = &problem.rho0;
        rho.ensure_same_shape(&problem.pi, "meanfield")?;
        if problem.grad_v.len() != rho.dim() || problem.grad_v.iter().any(|g| !g.same_shape(rho)) {
            return Err(Error::InvalidArgument(
                "potential gradient must match the density grid".into(),
            ));
        }
        if problem.pi.min() <= 0.0 {
            return Err(Error::InvalidInput("target density must be positive".into()));
        }
        check_masses(rho, &problem.pi)?;
        let op = VelocityOperator::new(&problem.grad_v, problem.s, problem.dealias)?;
        let len = rho.len();
        Ok(Self {
            state: SolverState {
                rho: rho.clone(),
                t: 0.0,
                step_count: 0,
                pi: problem.pi.clone(),
                grad_v: problem.grad_v.clone(),
                s: problem.s,
            },
            op,
            policy: problem.policy,
            strang: problem.strang,
            velocity: vec![vec![0.0; len]; rho.dim()],
            flux: Vec::new(),
            trial: vec![0.0; len],
            last_dt: 0.0,
            rejected: 0,
            report: InvariantReport {
                min_density: rho.min(),
                max_mass_deviation: (rho.mean() - problem.pi.mean()).abs(),
                ..Default::default()
            },
            observed_max: rho.max(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn last_dt(&self) -> f64 {
        self.last_dt
    }

    pub fn rejected_steps(&self) -> u64 {
        self.rejected
    }

    pub fn invariants(&self) -> &InvariantReport {
        &self.report
    }

    pub fn observed_max(&self) -> f64 {
        self.observed_max
    }

    fn abort(&self, reason: String) -> Error {
        let rho = self.state.rho.values();
        let bad = rho.iter().position(|v| !v.is_finite());
        let finite = rho.iter().copied().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        Error::SolverAbort {
            t: self.state.t,
            step: self.state.step_count,
            reason: format!(
                "{reason}; dump: last dt {:e}, density range [{lo:e}, {hi:e}], first non-finite cell {bad:?}",
                self.last_dt
            ),
        }
    }

    /// Current velocity components.
    pub fn velocity(&mut self) -> Vec<GridField> {
        self.op.apply(self.state.rho.values(), self.state.pi.values(), &mut self.velocity);
        let (d, n) = (self.state.rho.dim(), self.state.rho.n());
        self.velocity
            .iter()
            .map(|v| GridField::from_raw(d, n, v.clone()))
            .collect()
    }

    /// One adaptive step of at most `dt_cap`; returns the step taken.
    pub fn step(&mut self, dt_cap: f64) -> Result<f64> {
        let (dim, n) = (self.state.rho.dim(), self.state.rho.n());
        self.op.apply(self.state.rho.values(), self.state.pi.values(), &mut self.velocity);
        let vmax = self
            .velocity
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |m, x| if x.is_finite() { m.max(x.abs()) } else { f64::NAN });
        if !vmax.is_finite() {
            return Err(self.abort("non-finite velocity".into()));
        }
        let mut dt = cfl_from_max(vmax, 1.0 / n as f64, &self.policy).min(dt_cap);
        let mut halvings = 0;
        loop {
            self.trial.copy_from_slice(self.state.rho.values());
            match upwind_in_place(&mut self.trial, &self.velocity, dim, n, dt, self.strang, &mut self.flux) {
                Ok(()) => break,
                Err(Error::CflViolation { .. }) if halvings < MAX_STEP_HALVINGS => {
                    dt *= 0.5;
                    halvings += 1;
                    self.rejected += 1;
                }
                Err(e) => return Err(e),
            }
        }
        if self.trial.iter().any(|v| !v.is_finite()) {
            self.state.rho = GridField::from_raw(dim, n, self.trial.clone());
            return Err(self.abort("non-finite density".into()));
        }
        std::mem::swap(&mut self.trial, self.state.rho.values_mut());
        self.state.t += dt;
        self.state.step_count += 1;
        self.last_dt = dt;

        let rho = self.state.rho.values();
        let (mut sum, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for &r in rho {
            sum += r;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let mass = sum / rho.len() as f64;
        self.report.max_mass_deviation = self.report.max_mass_deviation.max((mass - 1.0).abs());
        self.report.min_density = self.report.min_density.min(lo);
        self.observed_max = self.observed_max.max(hi);
        if self.report.max_mass_deviation > 1e3 * MASS_MISMATCH_TOL {
            return Err(self.abort(format!("mass drifted to {mass}")));
        }
        Ok(dt)
    }

    /// Steps until `t == target`, landing exactly on it.
    pub fn advance_to(&mut self, target: f64) -> Result<()> {
        let snap = 1e-12 * target.abs().max(1.0);
        while self.state.t < target - snap {
            self.step(target - self.state.t)?;
        }
        if (self.state.t - target).abs() <= snap {
            self.state.t = target;
        }
        Ok(())
    }

    /// Diagnostics at the current time.
    pub fn diagnostics(&self) -> Result<DiagnosticsRow> {
        let st = &self.state;
        let entropy = relative_entropy(&st.rho, &st.pi)?;
        let ksd = ksd_with_plan(self.op.plan(), &st.rho, &st.pi, &st.grad_v, st.s)?;
        Ok(DiagnosticsRow {
            t: st.t,
            entropy: Some(entropy),
            l2_error: st.rho.l2_distance(&st.pi)?,
            ksd: Some(ksd),
            mass: st.rho.mean(),
            min_density: Some(st.rho.min()),
            max_density: Some(st.rho.max()),
            dt: self.last_dt,
        })
    }
}

/// Advances the problem to `t_end`, sampling diagnostics on the schedule.
pub fn run_meanfield(problem: &MeanfieldProblem) -> Result<MeanfieldRun> {
    let mut solver = MeanfieldSolver::new(problem)?;
    let times = problem.policy.sampling.times(problem.policy.t_end);
    let lambda = problem.pi.min();
    let mut rows = Vec::with_capacity(times.len());
    let first = solver.diagnostics()?;
    let h0 = first.entropy.unwrap_or(0.0);
    rows.push(first);
    for &t in &times[1..] {
        solver.advance_to(t)?;
        rows.push(solver.diagnostics()?);
    }

    let mut report = solver.report.clone();
    for pair in rows.windows(2) {
        let (a, b) = (pair[0].entropy.unwrap_or(0.0), pair[1].entropy.unwrap_or(0.0));
        report.max_entropy_increase = report.max_entropy_increase.max(b - a);
        if b > a + ENTROPY_TOL {
            report.entropy_violations.push(pair[1].t);
        }
    }
    for row in &rows {
        let h = row.entropy.unwrap_or(0.0);
        if h > row.l2_error * row.l2_error / lambda * (1.0 + 1e-10) + 1e-300 {
            report.entropy_bound_violations.push(row.t);
        }
    }

    let max_principle = (problem.s == 1.0).then(|| {
        let bound_m = max_principle_bound(&problem.pi, &problem.grad_v, h0);
        let initial_max = problem.rho0.max();
        let ceiling = bound_m.max(initial_max);
        MaxPrincipleMonitor {
            bound_m,
            initial_max,
            observed_max: solver.observed_max(),
            violations: rows
                .iter()
                .filter(|r| r.max_density.unwrap_or(0.0) > ceiling)
                .map(|r| r.t)
                .collect(),
        }
    });

    Ok(MeanfieldRun {
        rows,
        invariants: report,
        max_principle,
        steps: solver.state.step_count,
        rejected_steps: solver.rejected,
        final_state: solver.state,
    })
}
