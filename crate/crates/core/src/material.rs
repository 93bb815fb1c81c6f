//! Material constants and unit conversions.
//!
//! Internally every energy is converted once to an angular frequency in
//! rad/ns; magnetic fields stay in Tesla and times in ns.

use crate::error::{Error, Result};

/// Bohr magneton in ueV per Tesla.
pub const MU_B_UEV_PER_T: f64 = 57.8838;
/// Reduced Planck constant in ueV * ns.
pub const HBAR_UEV_NS: f64 = 0.6582119;

/// How the per-nucleus coupling is derived from the total hyperfine energy
/// when far fewer nuclei are simulated than exist physically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// alpha = A_total / n_phys: the physical per-nucleus coupling.
    /// Small simulated baths then decohere far too slowly.
    Literal,
    /// alpha = A_total / sqrt(n_phys * n_bath): preserves the Overhauser
    /// field variance, hence the physical dephasing time, at any bath size.
    VarianceMatched,
}

/// Electron-nuclear coupling parameters of a host material.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    /// Total hyperfine coupling energy, ueV.
    pub a_total_uev: f64,
    /// Physical number of nuclei within the electron envelope.
    pub n_phys: f64,
    /// Electron g-factor (signed).
    pub g_factor: f64,
    /// Nuclear spin quantum number, doubled (so 1 means s = 1/2).
    pub twice_s: u32,
}

impl Material {
    /// GaAs dot: A = 83 ueV over 1.5e6 nuclei, g = -0.44, s = 1/2 default
    /// (the three GaAs species all have s = 3/2, but spin-1/2 baths keep the
    /// exact-diagonalization oracle affordable and the channel form is
    /// identical; s is configurable).
    pub fn gaas() -> Self {
        Material {
            a_total_uev: 83.0,
            n_phys: 1.5e6,
            g_factor: -0.44,
            twice_s: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_total_uev > 0.0) {
            return Err(Error::argument("A_total must be positive"));
        }
        if !(self.n_phys >= 1.0) {
            return Err(Error::argument("n_phys must be at least 1"));
        }
        if self.twice_s == 0 {
            return Err(Error::argument("bath spin must be a positive half-integer"));
        }
        if self.g_factor == 0.0 {
            return Err(Error::argument("g factor must be nonzero"));
        }
        Ok(())
    }

    pub fn s(&self) -> f64 {
        self.twice_s as f64 / 2.0
    }

    /// Per-nucleus coupling in rad/ns for a simulated bath of `n_bath` nuclei.
    pub fn alpha_rad_per_ns(&self, mode: AlphaMode, n_bath: usize) -> f64 {
        let a_uev = match mode {
            AlphaMode::Literal => self.a_total_uev / self.n_phys,
            AlphaMode::VarianceMatched => {
                self.a_total_uev / (self.n_phys * n_bath as f64).sqrt()
            }
        };
        a_uev / HBAR_UEV_NS
    }

    /// Electron Larmor angular frequency, rad/ns, for a field in Tesla.
    pub fn omega_rad_per_ns(&self, b_tesla: f64) -> f64 {
        -self.g_factor * MU_B_UEV_PER_T * b_tesla / HBAR_UEV_NS
    }
}

/// Gaussian dephasing time, ns, of a bath with the given per-nucleus
/// coupling: T2* = sqrt(6 / (s(s+1) n)) / alpha.
pub fn t2_star_ns(twice_s: u32, n_bath: usize, alpha_rad_per_ns: f64) -> f64 {
    let s = twice_s as f64 / 2.0;
    (6.0 / (s * (s + 1.0) * n_bath as f64)).sqrt() / alpha_rad_per_ns
}
