//! Quick self-check of the solver invariants on small problems.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{entropy_lower_bound, entropy_upper_bound, ksd, relative_entropy};
use crate::error::Result;
use crate::fields::{
    grad_potential, sample_potential, target_from_potential, FourierPotential, PotentialSpec,
};
use crate::meanfield::{
    run_meanfield, velocity_field, velocity_field_weighted_form, MeanfieldProblem, SampleSchedule,
    StepPolicy,
};
use crate::particles::{
    kernel_spectrum_check, svgd_directions, AskeyKernel, FlatPotential, ForceMethod,
    ParticleEnsemble,
};
use crate::spectral::GridField;

use super::run::{linearized_solver_deviation, single_mode_perturbation, LINEARIZED_TOL};

/// One line of the suite.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &'static str, result: Result<(bool, String)>) -> CheckResult {
    match result {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn target(dim: usize, n: usize, gamma: f64, amplitude: f64, seed: u64) -> Result<(GridField, Vec<GridField>)> {
    let v = sample_potential(&PotentialSpec {
        gamma_star: gamma,
        amplitude,
        seed,
        dim,
        n,
    })?;
    Ok((target_from_potential(&v)?, grad_potential(&v)?))
}

fn conservation() -> Result<(bool, String)> {
    let mut worst_mass: f64 = 0.0;
    let mut worst_min = f64::INFINITY;
    let mut entropy_ok = true;
    let mut monitor_ok = true;
    for (s, gamma) in [(1.0, 1.5), (1.5, 1.0), (2.0, 2.0)] {
        let (pi, grad_v) = target(1, 256, gamma, 1.0, 11)?;
        let run = run_meanfield(&MeanfieldProblem {
            rho0: GridField::constant(1, 256, 1.0)?,
            pi,
            grad_v,
            s,
            policy: StepPolicy {
                cfl_number: 0.4,
                dt_max: 0.1,
                t_end: 5.0,
                sampling: SampleSchedule::Every(0.1),
            },
            dealias: false,
            strang: false,
        })?;
        worst_mass = worst_mass.max(run.invariants.max_mass_deviation);
        worst_min = worst_min.min(run.invariants.min_density);
        entropy_ok &= run.invariants.entropy_ok();
        if let Some(mp) = run.max_principle {
            monitor_ok &= mp.holds();
        }
    }
    Ok((
        worst_mass <= 1e-12 && worst_min >= -1e-13 && entropy_ok && monitor_ok,
        format!(
            "mass deviation {worst_mass:.2e}, min density {worst_min:.3e}, entropy monotone {entropy_ok}, max principle {monitor_ok}"
        ),
    ))
}

fn velocity_forms() -> Result<(bool, String)> {
    let (pi, grad_v) = target(1, 1024, 2.0, 1.0, 3)?;
    let rho = GridField::from_fn(1, 1024, |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin())?;
    let mut worst: f64 = 0.0;
    for s in [1.0, 1.5, 2.0] {
        let a = &velocity_field(&rho, &pi, &grad_v, s)?[0];
        let b = &velocity_field_weighted_form(&rho, &pi, s)?[0];
        worst = worst.max(a.l2_distance(b)? / b.l2_norm());
    }
    Ok((worst <= 1e-8, format!("max relative difference {worst:.2e}")))
}

fn linearized() -> Result<(bool, String)> {
    let sigma0 = single_mode_perturbation(1, 256, 1e-3, 1)?;
    let policy = StepPolicy {
        cfl_number: 0.4,
        dt_max: 0.05,
        t_end: 1.0,
        sampling: SampleSchedule::Every(0.1),
    };
    let dev = linearized_solver_deviation(&sigma0, 2.0, policy)?;
    let worst = dev.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok((worst <= LINEARIZED_TOL, format!("max relative deviation {worst:.2e}")))
}

fn kernel() -> Result<(bool, String)> {
    let a = kernel_spectrum_check(1, 4096)?;
    let b = kernel_spectrum_check(2, 512)?;
    let ok = |f: &crate::particles::KernelSpectrumFit| {
        f.all_positive && ((f.slope - f.expected_slope()) / f.expected_slope()).abs() <= 0.1
    };
    Ok((
        ok(&a) && ok(&b),
        format!("slopes {:.3} (d=1), {:.3} (d=2)", a.slope, b.slope),
    ))
}

fn particles() -> Result<(bool, String)> {
    let lattice = ParticleEnsemble::lattice(2, 20, 0.05)?;
    let k = AskeyKernel::new(2)?;
    let flat = FlatPotential { dim: 2 };
    let still = svgd_directions(&lattice, &flat, &k, ForceMethod::CellList)?
        .iter()
        .fold(0.0f64, |m, p| m.max(p.abs()));
    let v = sample_potential(&PotentialSpec {
        gamma_star: 2.0,
        amplitude: 5.0,
        seed: 1,
        dim: 2,
        n: 32,
    })?;
    let pot = FourierPotential::from_grid(&v)?;
    let ens = ParticleEnsemble::uniform_random(2, 1000, 0.05, 9)?;
    let a = svgd_directions(&ens, &pot, &k, ForceMethod::Naive)?;
    let b = svgd_directions(&ens, &pot, &k, ForceMethod::CellList)?;
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok((
        still <= 1e-12 && diff <= 1e-12,
        format!("lattice drift {still:.1e}, cell list vs naive {diff:.1e}"),
    ))
}

fn entropy_bounds() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for trial in 0..25 {
        let (pi, _) = target(1, 128, 1.5, rng.random_range(0.2..2.0), trial)?;
        let amp: Vec<f64> = (0..4).map(|_| rng.random_range(-0.2..0.2)).collect();
        let raw = GridField::from_fn(1, 128, |x| {
            1.0 + amp
                .iter()
                .enumerate()
                .map(|(m, a)| a * (2.0 * PI * (m + 1) as f64 * x[0]).cos())
                .sum::<f64>()
        })?;
        let rho = raw.map(|r| r / raw.mean())?;
        let h = relative_entropy(&rho, &pi)?;
        let ok = h >= 0.0
            && h <= entropy_upper_bound(&rho, &pi)?
            && h >= entropy_lower_bound(&rho, &pi)?
            && ksd(&rho, &pi, 1.5)? >= 0.0;
        if !ok {
            failures += 1;
        }
    }
    Ok((failures == 0, format!("{failures} of 25 fixtures violated a bound")))
}

/// Runs every check; all should pass on a healthy build.
pub fn run_invariant_suite() -> Vec<CheckResult> {
    vec![
        outcome("conservation", conservation()),
        outcome("velocity forms", velocity_forms()),
        outcome("linearized oracle", linearized()),
        outcome("kernel spectrum", kernel()),
        outcome("particle forces", particles()),
        outcome("entropy bounds", entropy_bounds()),
    ]
}
