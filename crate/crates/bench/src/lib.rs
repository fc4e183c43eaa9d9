//! Fixtures shared by the benchmarks.

use svgf_core::fields::{grad_potential, sample_potential, target_from_potential, PotentialSpec};
use svgf_core::spectral::GridField;

/// A sampled target density and its potential gradient.
pub struct Target {
    pub potential: GridField,
    pub pi: GridField,
    pub grad_v: Vec<GridField>,
}

pub fn target(dim: usize, n: usize, gamma_star: f64, amplitude: f64) -> Target {
    let potential = sample_potential(&PotentialSpec {
        gamma_star,
        amplitude,
        seed: 1,
        dim,
        n,
    })
    .expect("potential");
    Target {
        pi: target_from_potential(&potential).expect("target"),
        grad_v: grad_potential(&potential).expect("gradient"),
        potential,
    }
}
