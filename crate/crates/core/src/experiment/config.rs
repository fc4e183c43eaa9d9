//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Unknown
//! and repeated keys are rejected. [`ExperimentConfig::to_echo`] writes every
//! resolved value back out in a fixed order, and parsing the echo yields the
//! same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::meanfield::{SampleSchedule, StepPolicy};
use crate::particles::ForceMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Meanfield,
    Particles,
    Linearized,
    KernelCheck,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Meanfield => "meanfield",
            Mode::Particles => "particles",
            Mode::Linearized => "linearized",
            Mode::KernelCheck => "kernel_check",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "meanfield" => Ok(Mode::Meanfield),
            "particles" => Ok(Mode::Particles),
            "linearized" => Ok(Mode::Linearized),
            "kernel_check" => Ok(Mode::KernelCheck),
            other => Err(format!(
                "must be one of meanfield, particles, linearized, kernel_check (got `{other}`)"
            )),
        }
    }
}

/// Initial particle layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParticleInit {
    Uniform,
    Lattice,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub run_id: String,
    pub output_dir: PathBuf,
    pub dim: usize,
    pub grid_n: usize,
    pub s: f64,
    pub gamma_star: Option<f64>,
    pub amplitude: f64,
    pub seed: u64,
    pub t_end: Option<f64>,
    pub max_iterations: Option<u64>,
    pub cfl_number: f64,
    pub dt_max: f64,
    pub sample_every: f64,
    pub samples_per_decade: Option<u32>,
    pub first_sample: f64,
    pub dealias: bool,
    pub strang_splitting: bool,
    pub fit_window_lo: Option<f64>,
    pub fit_window_hi: Option<f64>,
    pub particles_n: usize,
    pub step_size: f64,
    pub fourier_cutoff: usize,
    pub extra_cutoff: usize,
    pub force_method: ForceMethod,
    pub particle_init: ParticleInit,
    pub perturbation: f64,
    pub mode_number: u32,
    pub compare_solver: bool,
    pub write_potential: bool,
}

pub const DEFAULT_CFL: f64 = 0.4;
pub const DEFAULT_AMPLITUDE: f64 = 1.0;
pub const DEFAULT_CUTOFF: usize = 8;
pub const DEFAULT_PARTICLES: usize = 2000;
pub const DEFAULT_STEP_SIZE: f64 = 0.05;

const KEYS: &[&str] = &[
    "mode",
    "run_id",
    "output_dir",
    "dim",
    "grid_n",
    "s",
    "gamma_star",
    "amplitude",
    "seed",
    "t_end",
    "max_iterations",
    "cfl_number",
    "dt_max",
    "sample_every",
    "samples_per_decade",
    "first_sample",
    "dealias",
    "strang_splitting",
    "fit_window_lo",
    "fit_window_hi",
    "particles_n",
    "step_size",
    "fourier_cutoff",
    "extra_cutoff",
    "force_method",
    "particle_init",
    "perturbation",
    "mode_number",
    "compare_solver",
    "write_potential",
];

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                Error::config(key, format!("has an invalid value `{raw}`"))
            }),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str, mode: Mode) -> Result<T> {
        self.take(key)?.ok_or_else(|| {
            Error::config(key, format!("is required in {} mode", mode.as_str()))
        })
    }

    fn flag(&mut self, key: &str, default: bool) -> Result<bool> {
        match self.map.remove(key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(other) => Err(Error::config(key, format!("must be true or false, got `{other}`"))),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn split_lines(text: &str, origin: &Path) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: idx as u64 + 1,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::config(key, "is not a recognised key"));
        }
        if map.insert(key.to_string(), value.to_string()).is_some() {
            return Err(Error::config(key, "is given more than once"));
        }
    }
    Ok(map)
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_from(text, Path::new("<config>"))
}

/// Reads and parses a configuration file.
pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_config_from(&text, path)
}

fn parse_config_from(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let mut e = Entries {
        map: split_lines(text, origin)?,
    };
    let mode: Mode = match e.map.remove("mode") {
        None => return Err(Error::config("mode", "is required")),
        Some(raw) => raw.parse().map_err(|m: String| Error::config("mode", m))?,
    };
    let output_dir: PathBuf = e.require("output_dir", mode)?;
    let run_id: String = match e.take::<String>("run_id")? {
        Some(id) => id,
        None => output_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| mode.as_str().to_string()),
    };
    if run_id.is_empty() || run_id.contains(',') || run_id.contains('"') {
        return Err(Error::config("run_id", "must be non-empty without commas or quotes"));
    }

    let default_dim = if mode == Mode::Particles { 2 } else { 1 };
    let dim: usize = e.take("dim")?.unwrap_or(default_dim);
    if dim == 0 || dim > crate::spectral::MAX_DIM {
        return Err(Error::config("dim", format!("must be 1, 2 or 3, got {dim}")));
    }
    let grid_n: usize = match mode {
        Mode::Particles => e.take("grid_n")?.unwrap_or(64),
        _ => e.require("grid_n", mode)?,
    };
    if !grid_n.is_power_of_two() || grid_n < 2 {
        return Err(Error::config("grid_n", "must be a power of two"));
    }

    let s: f64 = match mode {
        Mode::Meanfield | Mode::Linearized => e.require("s", mode)?,
        Mode::Particles | Mode::KernelCheck => e.take("s")?.unwrap_or((dim as f64 + 1.0) / 2.0),
    };
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::config("s", "must be ≥ 1"));
    }

    let gamma_star: Option<f64> = match mode {
        Mode::Meanfield | Mode::Particles => Some(e.require("gamma_star", mode)?),
        _ => e.take("gamma_star")?,
    };
    if let Some(g) = gamma_star {
        if !(g > dim as f64 / 2.0) {
            return Err(Error::config(
                "gamma_star",
                format!("must exceed d/2 = {}, got {g}", dim as f64 / 2.0),
            ));
        }
    }
    let amplitude = positive("amplitude", e.take("amplitude")?.unwrap_or(DEFAULT_AMPLITUDE))?;
    let seed: u64 = match mode {
        Mode::Meanfield | Mode::Particles => e.require("seed", mode)?,
        _ => e.take("seed")?.unwrap_or(0),
    };

    let t_end: Option<f64> = match mode {
        Mode::Meanfield | Mode::Linearized => {
            let t: f64 = e.require("t_end", mode)?;
            Some(positive("t_end", t)?)
        }
        _ => e.take("t_end")?,
    };
    let max_iterations: Option<u64> = match mode {
        Mode::Particles => {
            let m: u64 = e.require("max_iterations", mode)?;
            if m == 0 {
                return Err(Error::config("max_iterations", "must be at least 1"));
            }
            Some(m)
        }
        _ => e.take("max_iterations")?,
    };

    let cfl_number: f64 = e.take("cfl_number")?.unwrap_or(DEFAULT_CFL);
    if !(cfl_number > 0.0 && cfl_number < 1.0) {
        return Err(Error::config("cfl_number", format!("must lie in (0, 1), got {cfl_number}")));
    }
    let dt_max = positive("dt_max", e.take("dt_max")?.unwrap_or(0.1))?;
    let default_every = match mode {
        Mode::Particles => 10.0,
        _ => t_end.unwrap_or(1.0) / 100.0,
    };
    let sample_every = positive("sample_every", e.take("sample_every")?.unwrap_or(default_every))?;
    if mode == Mode::Particles && sample_every.fract() != 0.0 {
        return Err(Error::config("sample_every", "must be a whole number of iterations"));
    }
    let samples_per_decade: Option<u32> = e.take("samples_per_decade")?;
    if samples_per_decade == Some(0) {
        return Err(Error::config("samples_per_decade", "must be at least 1"));
    }
    let first_sample = positive("first_sample", e.take("first_sample")?.unwrap_or(0.01))?;
    let dealias = e.flag("dealias", false)?;
    let strang_splitting = e.flag("strang_splitting", false)?;
    let fit_window_lo: Option<f64> = e.take("fit_window_lo")?;
    let fit_window_hi: Option<f64> = e.take("fit_window_hi")?;
    if let (Some(lo), Some(hi)) = (fit_window_lo, fit_window_hi) {
        if !(lo < hi) {
            return Err(Error::config("fit_window_hi", "must exceed fit_window_lo"));
        }
    }

    let particles_n: usize = e.take("particles_n")?.unwrap_or(DEFAULT_PARTICLES);
    if particles_n == 0 {
        return Err(Error::config("particles_n", "must be at least 1"));
    }
    let step_size = positive("step_size", e.take("step_size")?.unwrap_or(DEFAULT_STEP_SIZE))?;
    let fourier_cutoff: usize = e.take("fourier_cutoff")?.unwrap_or(DEFAULT_CUTOFF);
    let extra_cutoff: usize = e.take("extra_cutoff")?.unwrap_or(16);
    if mode == Mode::Particles {
        if fourier_cutoff == 0 {
            return Err(Error::config("fourier_cutoff", "must be at least 1"));
        }
        for (key, m) in [("fourier_cutoff", fourier_cutoff), ("extra_cutoff", extra_cutoff)] {
            if m >= grid_n / 2 {
                return Err(Error::config(
                    key,
                    format!("must stay below grid_n/2 = {}, got {m}", grid_n / 2),
                ));
            }
        }
    }
    let force_method = match e.map.remove("force_method").as_deref() {
        None | Some("cell_list") => ForceMethod::CellList,
        Some("naive") => ForceMethod::Naive,
        Some(other) => {
            return Err(Error::config(
                "force_method",
                format!("must be cell_list or naive, got `{other}`"),
            ))
        }
    };
    let particle_init = match e.map.remove("particle_init").as_deref() {
        None | Some("uniform") => ParticleInit::Uniform,
        Some("lattice") => ParticleInit::Lattice,
        Some(other) => {
            return Err(Error::config(
                "particle_init",
                format!("must be uniform or lattice, got `{other}`"),
            ))
        }
    };
    if mode == Mode::Particles && particle_init == ParticleInit::Lattice {
        let side = lattice_side(particles_n, dim);
        if side.pow(dim as u32) != particles_n {
            return Err(Error::config(
                "particles_n",
                format!("must be a perfect {dim}-th power for a lattice start"),
            ));
        }
    }
    let perturbation = positive("perturbation", e.take("perturbation")?.unwrap_or(1e-3))?;
    let mode_number: u32 = e.take("mode_number")?.unwrap_or(1);
    if mode == Mode::Linearized && (mode_number == 0 || mode_number as usize >= grid_n / 2) {
        return Err(Error::config(
            "mode_number",
            format!("must lie in 1..{}", grid_n / 2),
        ));
    }
    let compare_solver = e.flag("compare_solver", mode == Mode::Linearized)?;
    let write_potential = e.flag("write_potential", true)?;

    debug_assert!(e.map.is_empty(), "unconsumed keys {:?}", e.map);
    Ok(ExperimentConfig {
        mode,
        run_id,
        output_dir,
        dim,
        grid_n,
        s,
        gamma_star,
        amplitude,
        seed,
        t_end,
        max_iterations,
        cfl_number,
        dt_max,
        sample_every,
        samples_per_decade,
        first_sample,
        dealias,
        strang_splitting,
        fit_window_lo,
        fit_window_hi,
        particles_n,
        step_size,
        fourier_cutoff,
        extra_cutoff,
        force_method,
        particle_init,
        perturbation,
        mode_number,
        compare_solver,
        write_potential,
    })
}

/// Integer `m` with `m^dim` closest to `count` from below.
pub(crate) fn lattice_side(count: usize, dim: usize) -> usize {
    let mut m = (count as f64).powf(1.0 / dim as f64).round() as usize;
    while m > 1 && m.pow(dim as u32) > count {
        m -= 1;
    }
    m
}

impl ExperimentConfig {
    /// Step policy for the mean-field solver.
    pub fn step_policy(&self) -> StepPolicy {
        StepPolicy {
            cfl_number: self.cfl_number,
            dt_max: self.dt_max,
            t_end: self.t_end.unwrap_or(0.0),
            sampling: match self.samples_per_decade {
                Some(per_decade) => SampleSchedule::PerDecade {
                    per_decade,
                    first: self.first_sample,
                },
                None => SampleSchedule::Every(self.sample_every),
            },
        }
    }

    /// The resolved configuration in parseable form.
    pub fn to_echo(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").expect("write to string");
        };
        put("mode", self.mode.as_str().into());
        put("run_id", self.run_id.clone());
        put("output_dir", self.output_dir.display().to_string());
        put("dim", self.dim.to_string());
        put("grid_n", self.grid_n.to_string());
        put("s", self.s.to_string());
        if let Some(g) = self.gamma_star {
            put("gamma_star", g.to_string());
        }
        put("amplitude", self.amplitude.to_string());
        put("seed", self.seed.to_string());
        if let Some(t) = self.t_end {
            put("t_end", t.to_string());
        }
        if let Some(m) = self.max_iterations {
            put("max_iterations", m.to_string());
        }
        put("cfl_number", self.cfl_number.to_string());
        put("dt_max", self.dt_max.to_string());
        put("sample_every", self.sample_every.to_string());
        if let Some(p) = self.samples_per_decade {
            put("samples_per_decade", p.to_string());
        }
        put("first_sample", self.first_sample.to_string());
        put("dealias", self.dealias.to_string());
        put("strang_splitting", self.strang_splitting.to_string());
        if let Some(lo) = self.fit_window_lo {
            put("fit_window_lo", lo.to_string());
        }
        if let Some(hi) = self.fit_window_hi {
            put("fit_window_hi", hi.to_string());
        }
        put("particles_n", self.particles_n.to_string());
        put("step_size", self.step_size.to_string());
        put("fourier_cutoff", self.fourier_cutoff.to_string());
        put("extra_cutoff", self.extra_cutoff.to_string());
        put(
            "force_method",
            match self.force_method {
                ForceMethod::CellList => "cell_list",
                ForceMethod::Naive => "naive",
            }
            .into(),
        );
        put(
            "particle_init",
            match self.particle_init {
                ParticleInit::Uniform => "uniform",
                ParticleInit::Lattice => "lattice",
            }
            .into(),
        );
        put("perturbation", self.perturbation.to_string());
        put("mode_number", self.mode_number.to_string());
        put("compare_solver", self.compare_solver.to_string());
        put("write_potential", self.write_potential.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "mode = meanfield\ngrid_n = 2048\ns = 2\ngamma_star = 1.5\nseed = 7\nt_end = 50\noutput_dir = out/minimal\n";

    #[test]
    fn minimal_meanfield_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Meanfield);
        assert_eq!(c.cfl_number, 0.4);
        assert_eq!(c.amplitude, 1.0);
        assert_eq!(c.fourier_cutoff, 8);
        assert_eq!(c.particles_n, 2000);
        assert_eq!(c.step_size, 0.05);
        assert_eq!(c.dim, 1);
        assert_eq!(c.run_id, "minimal");
        assert_eq!(c.sample_every, 0.5);
    }

    #[test]
    fn constraint_messages_name_the_key() {
        let bad_grid = MINIMAL.replace("grid_n = 2048", "grid_n = 1000");
        assert_eq!(parse_config(&bad_grid).unwrap_err().to_string(), "grid_n must be a power of two");
        let bad_s = MINIMAL.replace("s = 2", "s = 0.5");
        assert_eq!(parse_config(&bad_s).unwrap_err().to_string(), "s must be ≥ 1");
        let missing = MINIMAL.replace("seed = 7\n", "");
        assert!(parse_config(&missing).unwrap_err().to_string().starts_with("seed "));
        let typo = format!("{MINIMAL}cfl = 0.3\n");
        assert!(parse_config(&typo).unwrap_err().to_string().starts_with("cfl "));
        let mismatch = MINIMAL.replace("t_end = 50", "t_end = soon");
        assert!(parse_config(&mismatch).unwrap_err().to_string().starts_with("t_end "));
        let twice = format!("{MINIMAL}seed = 8\n");
        assert!(parse_config(&twice).unwrap_err().to_string().contains("more than once"));
        let gamma = MINIMAL.replace("gamma_star = 1.5", "gamma_star = 0.4");
        assert!(parse_config(&gamma).unwrap_err().to_string().starts_with("gamma_star "));
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = format!("# header\n\n{}", MINIMAL.replace("seed = 7", "seed = 7   # trailing"));
        assert_eq!(parse_config(&text).unwrap().seed, 7);
        let err = parse_config("mode meanfield\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn echo_round_trips() {
        let texts = [
            MINIMAL.to_string(),
            "mode = particles\ngamma_star = 2\nseed = 3\nmax_iterations = 200\noutput_dir = o/p\nextra_cutoff = 0\n".into(),
            "mode = linearized\ngrid_n = 512\ns = 2\nt_end = 1\noutput_dir = o/l\nmode_number = 3\n".into(),
            "mode = kernel_check\ndim = 2\ngrid_n = 512\noutput_dir = o/k\n".into(),
            format!("{MINIMAL}samples_per_decade = 32\nfirst_sample = 0.001\nfit_window_lo = 10\ndealias = true\ns = 1.7\n")
                .replace("s = 2\n", ""),
        ];
        for t in &texts {
            let c = parse_config(t).unwrap();
            let echo = c.to_echo();
            let again = parse_config(&echo).unwrap();
            assert_eq!(again, c);
            assert_eq!(again.to_echo(), echo);
        }
    }

    #[test]
    fn particle_mode_checks() {
        let base = "mode = particles\ngamma_star = 2\nseed = 3\nmax_iterations = 20\noutput_dir = o\n";
        let c = parse_config(base).unwrap();
        assert_eq!((c.dim, c.grid_n, c.s), (2, 64, 1.5));
        assert!(parse_config(&format!("{base}fourier_cutoff = 32\n")).is_err());
        assert!(parse_config(&format!("{base}particle_init = lattice\nparticles_n = 1000\n")).is_err());
        assert!(parse_config(&format!("{base}particle_init = lattice\nparticles_n = 1024\n")).is_ok());
        assert!(parse_config(&format!("{base}sample_every = 2.5\n")).is_err());
        assert_eq!(lattice_side(2000, 2), 44);
        assert_eq!(lattice_side(1000, 3), 10);
    }
}
