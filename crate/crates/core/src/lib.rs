//! Mean-field and particle Stein variational gradient flows on the torus.
//!
//! The crate is organised bottom-up: [`spectral`] holds grids, spectra and
//! Fourier multipliers; [`fields`] samples random potentials and targets;
//! [`meanfield`] evolves densities; [`particles`] runs finite-particle SVGD;
//! [`diagnostics`] measures and fits decay; [`experiment`] drives whole runs
//! from configuration files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod meanfield;
pub mod particles;
pub mod spectral;

pub use diagnostics::{DiagnosticsRow, FitWindow, RateFit, RateRecord};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Mode, RunSummary};
pub use fields::{FourierPotential, PotentialSpec};
pub use particles::{AskeyKernel, ForceMethod, ParticleEnsemble, ParticleRunConfig};
pub use meanfield::{
    MeanfieldProblem, MeanfieldRun, MeanfieldSolver, SampleSchedule, SolverState, StepPolicy,
};
pub use spectral::{FourierPlan, GridField, SobolevKind, Spectrum};
