use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::{
    append_rates_csv, default_window, fit_decay_exponent, fit_exponential_rate, ksd,
    relative_entropy, write_diagnostics_csv, DiagnosticsRow, FitWindow, RateFit, RateRecord,
};
use crate::error::{Error, Result};
use crate::fields::{
    grad_potential, sample_potential, target_from_potential, write_grid_csv, FourierPotential,
    PotentialSpec,
};
use crate::meanfield::{linearized_evolution, run_meanfield, MeanfieldProblem, StepPolicy};
use crate::particles::{
    kernel_spectrum_check, run_particles, ParticleEnsemble, ParticleRunConfig,
};
use crate::spectral::{from_spectrum, to_spectrum, GridField, Spectrum};

use super::config::{lattice_side, parse_config_file, ExperimentConfig, Mode, ParticleInit};
use super::plot::{emit_plots, PlotStyle};

/// Outcome of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_id: String,
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub rates: Vec<RateRecord>,
    /// Human-readable descriptions of failed invariants.
    pub violations: Vec<String>,
    /// Extra one-line facts about the run.
    pub notes: Vec<String>,
}

impl RunSummary {
    pub fn succeeded(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    }

    fn rates(&mut self, records: &[RateRecord]) -> Result<()> {
        let p = self.path("rates.csv");
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(format!("replacing {}", p.display()), e))?;
        }
        append_rates_csv(records, &p)
    }
}

/// Samples `(t, value)` with `t > 0` for fits on logarithmic axes.
fn series(rows: &[DiagnosticsRow], value: impl Fn(&DiagnosticsRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| Some((r.t, value(r)?))).collect()
}

fn fit_window(config: &ExperimentConfig, samples: &[(f64, f64)]) -> Result<FitWindow> {
    let auto = default_window(samples);
    let last = samples.last().map(|p| p.0).unwrap_or(0.0);
    match (config.fit_window_lo, config.fit_window_hi) {
        (None, None) => auto,
        (lo, hi) => FitWindow::new(
            lo.unwrap_or_else(|| auto.as_ref().map(|w| w.lo).unwrap_or(0.0)),
            hi.unwrap_or(last),
        ),
    }
}

fn rate_record(config: &ExperimentConfig, fit: &RateFit, expected: Option<f64>) -> RateRecord {
    RateRecord {
        run_id: config.run_id.clone(),
        s: config.s,
        gamma_star: config.gamma_star.unwrap_or(f64::NAN),
        slope: fit.slope,
        expected_slope: expected,
        r_squared: fit.r_squared,
        window_lo: fit.window.lo,
        window_hi: fit.window.hi,
    }
}

/// Expected log-log slope of the `L²` error, `−γ*/(2(s − 1))`.
pub fn expected_l2_slope(gamma_star: f64, s: f64) -> f64 {
    -gamma_star / (2.0 * (s - 1.0))
}

/// Rate fit of a mean-field trajectory: log-log on the `L²` error for
/// `s > 1`, semi-log on the entropy for `s = 1`.
pub fn meanfield_rate(config: &ExperimentConfig, rows: &[DiagnosticsRow]) -> Result<RateRecord> {
    if config.s == 1.0 {
        let h = series(rows, |r| r.entropy);
        let fit = fit_exponential_rate(&h, fit_window(config, &h)?)?;
        Ok(rate_record(config, &fit, None))
    } else {
        let l2: Vec<_> = series(rows, |r| Some(r.l2_error))
            .into_iter()
            .filter(|p| p.0 > 0.0)
            .collect();
        let with_origin = series(rows, |r| Some(r.l2_error));
        let fit = fit_decay_exponent(&l2, fit_window(config, &with_origin)?)?;
        let expected = config.gamma_star.map(|g| expected_l2_slope(g, config.s));
        Ok(rate_record(config, &fit, expected))
    }
}

fn potential_spec(config: &ExperimentConfig) -> Result<PotentialSpec> {
    Ok(PotentialSpec {
        gamma_star: config
            .gamma_star
            .ok_or_else(|| Error::config("gamma_star", "is required"))?,
        amplitude: config.amplitude,
        seed: config.seed,
        dim: config.dim,
        n: config.grid_n,
    })
}

/// The sampled potential and the mean-field problem a config describes,
/// started from the uniform density.
pub fn meanfield_problem(config: &ExperimentConfig) -> Result<(GridField, MeanfieldProblem)> {
    let v = sample_potential(&potential_spec(config)?)?;
    let problem = MeanfieldProblem {
        rho0: GridField::constant(config.dim, config.grid_n, 1.0)?,
        pi: target_from_potential(&v)?,
        grad_v: grad_potential(&v)?,
        s: config.s,
        policy: config.step_policy(),
        dealias: config.dealias,
        strang: config.strang_splitting,
    };
    Ok((v, problem))
}

fn run_meanfield_mode(config: &ExperimentConfig, out: &mut Output) -> Result<RunSummary> {
    let (v, problem) = meanfield_problem(config)?;
    if config.write_potential {
        let p = out.path("potential.csv");
        write_grid_csv(&v, &p)?;
    }
    let run = run_meanfield(&problem).map_err(|e| {
        let dump = out.dir.join("abort.txt");
        let _ = fs::write(&dump, format!("{e}\n"));
        e
    })?;
    let csv = out.path("diagnostics.csv");
    write_diagnostics_csv(&run.rows, &csv)?;

    let inv = &run.invariants;
    let mut violations = Vec::new();
    if !inv.mass_ok() {
        violations.push(format!("mass deviation {:e}", inv.max_mass_deviation));
    }
    if !inv.positivity_ok() {
        violations.push(format!("negative density {:e}", inv.min_density));
    }
    for t in &inv.entropy_violations {
        violations.push(format!("entropy increased at t = {t}"));
    }
    for t in &inv.entropy_bound_violations {
        violations.push(format!("entropy exceeds its L2 bound at t = {t}"));
    }
    let mut notes = vec![
        format!("steps {} (rejected {})", run.steps, run.rejected_steps),
        format!("max mass deviation {:e}", inv.max_mass_deviation),
        format!("min density {:e}", inv.min_density),
    ];
    if let Some(mp) = &run.max_principle {
        notes.push(format!(
            "max principle: observed {:.6}, ceiling {:.6}",
            mp.observed_max,
            mp.ceiling()
        ));
        for t in &mp.violations {
            violations.push(format!("maximum principle violated at t = {t}"));
        }
    }
    let rates = match meanfield_rate(config, &run.rows) {
        Ok(r) => vec![r],
        Err(e) => {
            notes.push(format!("no rate fit: {e}"));
            Vec::new()
        }
    };
    out.rates(&rates)?;
    Ok(summary(config, out, rates, violations, notes))
}

fn summary(
    config: &ExperimentConfig,
    out: &mut Output,
    rates: Vec<RateRecord>,
    violations: Vec<String>,
    notes: Vec<String>,
) -> RunSummary {
    RunSummary {
        run_id: config.run_id.clone(),
        output_dir: out.dir.clone(),
        files: std::mem::take(&mut out.files),
        rates,
        violations,
        notes,
    }
}

fn run_particle_mode(config: &ExperimentConfig, out: &mut Output) -> Result<RunSummary> {
    let v = sample_potential(&potential_spec(config)?)?;
    if config.write_potential {
        let p = out.path("potential.csv");
        write_grid_csv(&v, &p)?;
    }
    let target = to_spectrum(&target_from_potential(&v)?)?;
    let potential = FourierPotential::from_grid(&v)?;
    let ensemble = match config.particle_init {
        ParticleInit::Uniform => ParticleEnsemble::uniform_random(
            config.dim,
            config.particles_n,
            config.step_size,
            config.seed.wrapping_add(1),
        )?,
        ParticleInit::Lattice => ParticleEnsemble::lattice(
            config.dim,
            lattice_side(config.particles_n, config.dim),
            config.step_size,
        )?,
    };
    let run_cfg = ParticleRunConfig {
        max_iterations: config.max_iterations.unwrap_or(0),
        sample_every: config.sample_every as u64,
        cutoff: config.fourier_cutoff,
        extra_cutoffs: (config.extra_cutoff > 0 && config.extra_cutoff != config.fourier_cutoff)
            .then_some(config.extra_cutoff)
            .into_iter()
            .collect(),
        method: config.force_method,
    };
    let run = run_particles(ensemble, &potential, &target, &run_cfg)?;
    let p = out.path("diagnostics.csv");
    write_diagnostics_csv(&run.rows, &p)?;
    for (m, rows) in &run.extra {
        let p = out.path(&format!("diagnostics_m{m}.csv"));
        write_diagnostics_csv(rows, &p)?;
    }
    let p = out.path("particles_initial.csv");
    run.initial.write_csv(&p)?;
    let p = out.path("particles_final.csv");
    run.final_ensemble.write_csv(&p)?;

    let first = run.rows.first().map(|r| r.l2_error).unwrap_or(0.0);
    let last = run.rows.last().map(|r| r.l2_error).unwrap_or(0.0);
    let mut notes = vec![format!(
        "truncated L2 error (M = {}) {first:.6e} -> {last:.6e}",
        config.fourier_cutoff
    )];
    for (m, rows) in &run.extra {
        notes.push(format!(
            "truncated L2 error (M = {m}) {:.6e} -> {:.6e}",
            rows.first().map(|r| r.l2_error).unwrap_or(0.0),
            rows.last().map(|r| r.l2_error).unwrap_or(0.0)
        ));
    }
    let l2 = series(&run.rows, |r| Some(r.l2_error));
    let rates = match l2.last() {
        Some(&(t_last, _)) if t_last > 0.0 => match FitWindow::new(0.0, t_last)
            .and_then(|w| fit_exponential_rate(&l2, w))
        {
            Ok(fit) => vec![rate_record(config, &fit, None)],
            Err(e) => {
                notes.push(format!("no rate fit: {e}"));
                Vec::new()
            }
        },
        _ => Vec::new(),
    };
    out.rates(&rates)?;
    Ok(summary(config, out, rates, Vec::new(), notes))
}

/// `√2 ε cos(2πn x₀)` on the grid, a perturbation with `L²` norm `ε`.
pub fn single_mode_perturbation(dim: usize, n: usize, epsilon: f64, mode: u32) -> Result<GridField> {
    let amp = 2f64.sqrt() * epsilon;
    GridField::from_fn(dim, n, |x| amp * (2.0 * PI * mode as f64 * x[0]).cos())
}

/// Closed-form rows for `ρ = 1 + σ(t)` against the uniform target.
pub fn linearized_rows(sigma0: &Spectrum, s: f64, times: &[f64]) -> Result<Vec<DiagnosticsRow>> {
    let plan_dim = sigma0.dim();
    times
        .iter()
        .map(|&t| {
            let sigma = from_spectrum(&linearized_evolution(sigma0, s, t)?)?;
            let rho = sigma.map(|x| 1.0 + x)?;
            let pi = GridField::constant(plan_dim, sigma.n(), 1.0)?;
            Ok(DiagnosticsRow {
                t,
                entropy: Some(relative_entropy(&rho, &pi)?),
                l2_error: sigma.l2_norm(),
                ksd: Some(ksd(&rho, &pi, s)?),
                mass: rho.mean(),
                min_density: Some(rho.min()),
                max_density: Some(rho.max()),
                dt: 0.0,
            })
        })
        .collect()
}

/// Relative `L²` distance between the solver's perturbation spectrum and the
/// closed-form linear evolution, per sample time.
pub fn linearized_solver_deviation(
    sigma0: &GridField,
    s: f64,
    policy: StepPolicy,
) -> Result<Vec<(f64, f64)>> {
    let pi = GridField::constant(sigma0.dim(), sigma0.n(), 1.0)?;
    let problem = MeanfieldProblem {
        rho0: sigma0.map(|x| 1.0 + x)?,
        pi: pi.clone(),
        grad_v: vec![GridField::constant(sigma0.dim(), sigma0.n(), 0.0)?; sigma0.dim()],
        s,
        policy,
        dealias: false,
        strang: false,
    };
    let hat0 = to_spectrum(sigma0)?;
    let mut solver = crate::meanfield::MeanfieldSolver::new(&problem)?;
    let mut out = Vec::new();
    for t in policy.sampling.times(policy.t_end) {
        solver.advance_to(t)?;
        let numeric = to_spectrum(&solver.state().rho.sub(&pi)?)?;
        let exact = linearized_evolution(&hat0, s, t)?;
        let diff = numeric.sub(&exact)?;
        let rel = diff.inner(&diff)?.sqrt() / exact.inner(&exact)?.sqrt();
        out.push((t, rel));
    }
    Ok(out)
}

/// Largest relative deviation tolerated by the linearised comparison.
pub const LINEARIZED_TOL: f64 = 0.02;

fn run_linearized_mode(config: &ExperimentConfig, out: &mut Output) -> Result<RunSummary> {
    let sigma0 = single_mode_perturbation(config.dim, config.grid_n, config.perturbation, config.mode_number)?;
    let policy = config.step_policy();
    let times = policy.sampling.times(policy.t_end);
    let rows = linearized_rows(&to_spectrum(&sigma0)?, config.s, &times)?;
    let p = out.path("diagnostics.csv");
    write_diagnostics_csv(&rows, &p)?;
    let mut violations = Vec::new();
    let mut notes = Vec::new();
    if config.compare_solver {
        let dev = linearized_solver_deviation(&sigma0, config.s, policy)?;
        let mut text = String::from("t,relative_deviation\n");
        for (t, d) in &dev {
            text.push_str(&format!("{t:.16e},{d:.16e}\n"));
        }
        out.write("linearized_compare.csv", text.as_bytes())?;
        let worst = dev.iter().map(|p| p.1).fold(0.0, f64::max);
        notes.push(format!("solver vs closed form: max relative deviation {worst:.3e}"));
        if worst > LINEARIZED_TOL {
            violations.push(format!(
                "solver departs from the linear evolution by {worst:.3e} (> {LINEARIZED_TOL})"
            ));
        }
    }
    out.rates(&[])?;
    Ok(summary(config, out, Vec::new(), violations, notes))
}

fn run_kernel_check_mode(config: &ExperimentConfig, out: &mut Output) -> Result<RunSummary> {
    let fit = kernel_spectrum_check(config.dim, config.grid_n)?;
    let mut violations = Vec::new();
    if !fit.all_positive {
        violations.push(format!(
            "non-positive kernel coefficient {:e} in the fitted band",
            fit.min_in_band
        ));
    }
    let record = RateRecord {
        run_id: config.run_id.clone(),
        s: config.s,
        gamma_star: config.gamma_star.unwrap_or(f64::NAN),
        slope: fit.slope,
        expected_slope: Some(fit.expected_slope()),
        r_squared: fit.r_squared,
        window_lo: fit.band.0,
        window_hi: fit.band.1,
    };
    out.rates(std::slice::from_ref(&record))?;
    let notes = vec![format!(
        "kernel spectrum slope {:.4} (expected {}), min coefficient in band {:e}",
        fit.slope,
        fit.expected_slope(),
        fit.min_in_band
    )];
    Ok(summary(config, out, vec![record], violations, notes))
}

/// Runs one experiment, writing its files into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    let mut out = Output::create(&config.output_dir)?;
    out.write("config.echo", config.to_echo().as_bytes())?;
    match config.mode {
        Mode::Meanfield => run_meanfield_mode(config, &mut out),
        Mode::Particles => run_particle_mode(config, &mut out),
        Mode::Linearized => run_linearized_mode(config, &mut out),
        Mode::KernelCheck => run_kernel_check_mode(config, &mut out),
    }
    .map_err(|e| match e {
        Error::SolverAbort { t, step, reason } => Error::SolverAbort {
            t,
            step,
            reason: format!("{reason} (run `{}`)", config.run_id),
        },
        other => other,
    })
}

/// Result of [`run_sweep`].
#[derive(Debug)]
pub struct SweepSummary {
    pub runs: Vec<(PathBuf, Result<RunSummary>)>,
    pub rates_path: PathBuf,
    pub plots: Vec<PathBuf>,
}

impl SweepSummary {
    pub fn succeeded(&self) -> bool {
        self.runs
            .iter()
            .all(|(_, r)| r.as_ref().map(RunSummary::succeeded).unwrap_or(false))
    }
}

/// Configuration files (`*.cfg`) in a directory, sorted by name.
pub fn sweep_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
            .path();
        if path.extension().is_some_and(|x| x == "cfg") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no .cfg files in {}", dir.display())));
    }
    Ok(paths)
}

/// Runs every config of a directory concurrently. Each member owns its
/// output directory; they must all differ. Rates are gathered into
/// `<out>/rates.csv` and mean-field runs are overlaid per value of `s`.
pub fn run_sweep(dir: &Path, out: &Path) -> Result<SweepSummary> {
    let paths = sweep_configs(dir)?;
    let configs = paths
        .iter()
        .map(|p| parse_config_file(p))
        .collect::<Result<Vec<_>>>()?;
    let mut dirs: Vec<&Path> = configs.iter().map(|c| c.output_dir.as_path()).collect();
    dirs.sort();
    if let Some(w) = dirs.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::config(
            "output_dir",
            format!("`{}` is shared by several sweep members", w[0].display()),
        ));
    }
    let results: Vec<Result<RunSummary>> = configs.par_iter().map(run_experiment).collect();

    fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    let rates_path = out.join("rates.csv");
    if rates_path.exists() {
        fs::remove_file(&rates_path)
            .map_err(|e| Error::io(format!("replacing {}", rates_path.display()), e))?;
    }
    let records: Vec<RateRecord> = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .flat_map(|r| r.rates.iter().cloned())
        .collect();
    append_rates_csv(&records, &rates_path)?;

    let mut groups: Vec<(String, Vec<PathBuf>)> = Vec::new();
    for (cfg, res) in configs.iter().zip(&results) {
        if cfg.mode != Mode::Meanfield || res.is_err() {
            continue;
        }
        let key = format!("s{}", cfg.s);
        let csv = cfg.output_dir.join("diagnostics.csv");
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => g.1.push(csv),
            None => groups.push((key, vec![csv])),
        }
    }
    let mut plots = Vec::new();
    for (key, csvs) in groups {
        let svg = out.join(format!("sweep_{key}.svg"));
        emit_plots(&csvs, &svg, PlotStyle::Auto)?;
        plots.push(svg);
    }
    Ok(SweepSummary {
        runs: paths.into_iter().zip(results).collect(),
        rates_path,
        plots,
    })
}

/// Writes a short plain-text report of a run.
pub fn write_report(summary: &RunSummary, sink: &mut dyn std::io::Write) -> std::io::Result<()> {
    writeln!(sink, "run {}: {}", summary.run_id, if summary.succeeded() { "ok" } else { "FAILED" })?;
    for n in &summary.notes {
        writeln!(sink, "  {n}")?;
    }
    for r in &summary.rates {
        match r.expected_slope {
            Some(e) => writeln!(sink, "  slope {:.4} (expected {e:.4}), R^2 {:.4}", r.slope, r.r_squared)?,
            None => writeln!(sink, "  slope {:.4}, R^2 {:.4}", r.slope, r.r_squared)?,
        }
    }
    for v in &summary.violations {
        writeln!(sink, "  violation: {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::{read_diagnostics_csv, read_rates_csv};
    use crate::experiment::config::parse_config;

    fn cfg(text: &str, dir: &Path) -> ExperimentConfig {
        parse_config(&format!("{text}\noutput_dir = {}\n", dir.display())).unwrap()
    }

    #[test]
    fn linearized_csv_matches_closed_form() {
        let tmp = tempfile::tempdir().unwrap();
        let c = cfg(
            "mode = linearized\ngrid_n = 128\ns = 1.5\nt_end = 2\nsample_every = 0.25\nmode_number = 2\ncompare_solver = false",
            &tmp.path().join("lin"),
        );
        let summary = run_experiment(&c).unwrap();
        assert!(summary.succeeded());
        let rows = read_diagnostics_csv(&tmp.path().join("lin/diagnostics.csv")).unwrap();
        assert_eq!(rows.len(), 9);
        let w = (4.0 * PI).powf(2.0 - 2.0 * 1.5);
        for r in &rows {
            let exact = 1e-3 * (-w * r.t).exp();
            assert!((r.l2_error - exact).abs() <= 1e-12, "t={}", r.t);
            assert!((r.mass - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn meanfield_run_writes_files_and_is_reproducible() {
        let tmp = tempfile::tempdir().unwrap();
        let text = "mode = meanfield\ngrid_n = 128\ns = 1.5\ngamma_star = 1.5\nseed = 4\nt_end = 5\ndt_max = 0.05\nsample_every = 0.1\nfit_window_lo = 0.5";
        let a = run_experiment(&cfg(text, &tmp.path().join("a"))).unwrap();
        assert!(a.succeeded(), "{:?}", a.violations);
        for f in ["config.echo", "potential.csv", "diagnostics.csv", "rates.csv"] {
            assert!(tmp.path().join("a").join(f).exists(), "{f}");
        }
        let echo = fs::read_to_string(tmp.path().join("a/config.echo")).unwrap();
        let b_cfg = parse_config(&echo.replace(&tmp.path().join("a").display().to_string(), &tmp.path().join("b").display().to_string())).unwrap();
        run_experiment(&b_cfg).unwrap();
        let da = fs::read(tmp.path().join("a/diagnostics.csv")).unwrap();
        let db = fs::read(tmp.path().join("b/diagnostics.csv")).unwrap();
        assert_eq!(da, db);
        let rates = read_rates_csv(&tmp.path().join("a/rates.csv")).unwrap();
        assert_eq!(rates.len(), 1);
        assert_eq!(rates[0].run_id, "a");
        run_experiment(&cfg(text, &tmp.path().join("a"))).unwrap();
        assert_eq!(read_rates_csv(&tmp.path().join("a/rates.csv")).unwrap().len(), 1);
    }

    #[test]
    fn sweep_rejects_shared_output_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let body = format!(
            "mode = kernel_check\ngrid_n = 256\noutput_dir = {}\n",
            tmp.path().join("same").display()
        );
        fs::write(tmp.path().join("a.cfg"), &body).unwrap();
        fs::write(tmp.path().join("b.cfg"), &body).unwrap();
        let err = run_sweep(tmp.path(), tmp.path()).unwrap_err();
        assert!(err.to_string().starts_with("output_dir "));
    }

    #[test]
    fn sweep_collects_rates() {
        let tmp = tempfile::tempdir().unwrap();
        let cfgdir = tmp.path().join("cfg");
        fs::create_dir(&cfgdir).unwrap();
        for (name, d, n) in [("k1", 1, 1024), ("k2", 2, 256)] {
            fs::write(
                cfgdir.join(format!("{name}.cfg")),
                format!(
                    "mode = kernel_check\ndim = {d}\ngrid_n = {n}\noutput_dir = {}\n",
                    tmp.path().join(name).display()
                ),
            )
            .unwrap();
        }
        let summary = run_sweep(&cfgdir, &tmp.path().join("sweep")).unwrap();
        assert!(summary.succeeded());
        let rates = read_rates_csv(&summary.rates_path).unwrap();
        assert_eq!(rates.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>(), ["k1", "k2"]);
    }
}
