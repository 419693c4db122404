//! Numerical laboratory for planar Coulomb gases at low temperature.
//!
//! The crate is organised around a handful of modules:
//!
//! * [`potential`]: external fields `Q`, their derivatives and droplets.
//! * [`ensemble`]: the Hamiltonian, Metropolis sampling and Fekete points.
//! * [`polyspace`]: weighted polynomial spaces, reproducing kernels and
//!   Lagrange polynomials.
//! * [`limits`]: microscopic rescaling, limiting kernels and special
//!   functions.
//! * [`landau`]: concentration operators and sampling/interpolation
//!   constants.
//! * [`stats`]: spacing, disc counts, densities and lattice order.
//!
//! Area integrals use the normalised measure `dA = dx dy / π` and the
//! Laplacian is `Δ = ∂∂̄ = (∂ₓₓ + ∂ᵧᵧ)/4` throughout.

// negated comparisons are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod landau;
pub mod limits;
pub mod par;
pub mod polyspace;
pub mod potential;
pub mod quad;
pub mod special;
pub mod stats;

pub use num_complex::Complex64 as C64;

pub use ensemble::{ChainDiagnostics, Configuration, FeketeReport, Provenance};
pub use error::{Error, Result};
pub use landau::{ConcentrationSpectrum, MZReport, Region};
pub use limits::{LimitKernel, RescaleMap};
pub use polyspace::{KernelEval, LagrangeBasis, WeightedPolySpace};
pub use potential::{Droplet, DropletKind, Potential, PotentialEval, PotentialKind};
pub use stats::{StatReport, ZoomRule};

/// Resolves the inverse temperature of the low-temperature regime,
/// `β = c·ln n`.
pub fn beta_from_c(c: f64, n: usize) -> f64 {
    c * (n as f64).ln()
}
