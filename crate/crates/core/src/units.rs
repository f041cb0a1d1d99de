//! Output unit conversion.
//!
//! Internally `hbar = k_B = 1`: a frequency is an energy. The only place a
//! physical `hbar` enters is when energies and energy rates are reported.

/// Internal value of the reduced Planck constant.
pub const HBAR: f64 = 1.0;
/// Internal value of the Boltzmann constant.
pub const K_B: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Units {
    pub hbar: f64,
}

impl Default for Units {
    fn default() -> Self {
        Self { hbar: HBAR }
    }
}

impl Units {
    pub fn new(hbar: f64) -> Self {
        Self { hbar }
    }

    /// Converts an internal energy (or energy rate) to output units.
    pub fn energy(&self, internal: f64) -> f64 {
        internal * self.hbar / HBAR
    }
}
