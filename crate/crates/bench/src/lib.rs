//! Fixtures shared by the benchmarks.

use coulomb_core::{Configuration, C64};

/// Sunflower spiral of `n` points filling the unit disc evenly.
pub fn spiral(n: usize) -> Vec<C64> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| C64::from_polar(((k as f64 + 0.5) / n as f64).sqrt(), golden * k as f64))
        .collect()
}

pub fn spiral_config(n: usize) -> Configuration {
    Configuration::synthetic(spiral(n)).expect("spiral points are finite and distinct")
}
