//! Physical constants, species data and the internal unit system.
//!
//! Solvers work in micrometres, milliseconds and multiples of the atomic
//! mass `m`. In these units the reduced Planck constant becomes `ħ/m`
//! expressed in μm²/ms, which is O(1) for heavy lanthanides (about 0.387 for
//! ¹⁶⁴Dy), so every quantity the time stepper touches stays well scaled.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// CODATA 2018 reference values, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub atomic_mass_unit: f64,
    pub bohr_radius_a0: f64,
    pub bohr_magneton_mu_b: f64,
    pub vacuum_permeability_mu0: f64,
}

pub const CODATA: PhysicalConstants = PhysicalConstants {
    hbar: 1.054_571_817e-34,
    atomic_mass_unit: 1.660_539_066_60e-27,
    bohr_radius_a0: 5.291_772_109_03e-11,
    bohr_magneton_mu_b: 9.274_010_078_3e-24,
    vacuum_permeability_mu0: 1.256_637_062_12e-6,
};

/// Atomic species entering the generalized GPE, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeciesParams {
    /// Atomic mass in kg.
    pub mass: f64,
    /// Magnetic moment in J/T.
    pub magnetic_moment: f64,
    /// Three-body loss coefficient in m⁶/s.
    pub loss_l3: f64,
}

impl SpeciesParams {
    /// Builds a species from the mass in atomic mass units and the moment in Bohr magnetons.
    pub fn from_lab_units(mass_u: f64, moment_mu_b: f64, loss_l3: f64) -> Self {
        Self {
            mass: mass_u * CODATA.atomic_mass_unit,
            magnetic_moment: moment_mu_b * CODATA.bohr_magneton_mu_b,
            loss_l3,
        }
    }

    /// ¹⁶⁴Dy: m = 163.93 u, μ = 9.93 μB, L₃ = 1.2e-41 m⁶/s.
    pub fn dysprosium_164() -> Self {
        Self::from_lab_units(163.93, 9.93, 1.2e-41)
    }

    /// Dipolar length `a_dd = m μ0 μ² / (12π ħ²)` in metres.
    pub fn dipolar_length(&self) -> f64 {
        let c = CODATA;
        self.mass * c.vacuum_permeability_mu0 * self.magnetic_moment.powi(2)
            / (12.0 * PI * c.hbar * c.hbar)
    }

    /// Dipolar coupling `g_dd = 4π ħ² a_dd / m` in J·m³.
    pub fn g_dd(&self) -> f64 {
        4.0 * PI * CODATA.hbar.powi(2) * self.dipolar_length() / self.mass
    }

    /// `μ0 μ² / 3`, the same coupling computed without going through `a_dd`.
    pub fn g_dd_from_moment(&self) -> f64 {
        CODATA.vacuum_permeability_mu0 * self.magnetic_moment.powi(2) / 3.0
    }
}

/// Scales of the internal unit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitSystem {
    /// Metres per internal length unit.
    pub length_unit: f64,
    /// Seconds per internal time unit.
    pub time_unit: f64,
    /// Kilograms per internal mass unit.
    pub mass_unit: f64,
}

impl UnitSystem {
    /// Micrometres, milliseconds and the atomic mass of `species`.
    pub fn for_species(species: &SpeciesParams) -> Self {
        Self { length_unit: 1e-6, time_unit: 1e-3, mass_unit: species.mass }
    }

    /// `ħ` in internal units; equals `ħ/m` in μm²/ms when the mass unit is `m`.
    pub fn hbar(&self) -> f64 {
        CODATA.hbar * self.time_unit / (self.mass_unit * self.length_unit.powi(2))
    }

    pub fn length_to_internal(&self, metres: f64) -> f64 {
        metres / self.length_unit
    }

    pub fn length_to_si(&self, value: f64) -> f64 {
        value * self.length_unit
    }

    pub fn time_to_internal(&self, seconds: f64) -> f64 {
        seconds / self.time_unit
    }

    pub fn time_to_si(&self, value: f64) -> f64 {
        value * self.time_unit
    }

    /// Angular frequency, rad/s to rad per internal time unit.
    pub fn frequency_to_internal(&self, rad_per_s: f64) -> f64 {
        rad_per_s * self.time_unit
    }

    pub fn frequency_to_si(&self, value: f64) -> f64 {
        value / self.time_unit
    }

    fn energy_unit(&self) -> f64 {
        self.mass_unit * (self.length_unit / self.time_unit).powi(2)
    }

    pub fn energy_to_internal(&self, joules: f64) -> f64 {
        joules / self.energy_unit()
    }

    pub fn energy_to_si(&self, value: f64) -> f64 {
        value * self.energy_unit()
    }

    /// Coupling constants (energy × volume).
    pub fn coupling_to_internal(&self, joule_m3: f64) -> f64 {
        joule_m3 / (self.energy_unit() * self.length_unit.powi(3))
    }

    pub fn coupling_to_si(&self, value: f64) -> f64 {
        value * self.energy_unit() * self.length_unit.powi(3)
    }

    /// Three-body loss rate coefficient, m⁶/s to internal units.
    pub fn loss_to_internal(&self, m6_per_s: f64) -> f64 {
        m6_per_s * self.time_unit / self.length_unit.powi(6)
    }

    pub fn loss_to_si(&self, value: f64) -> f64 {
        value * self.length_unit.powi(6) / self.time_unit
    }

    /// Scattering lengths are usually quoted in Bohr radii.
    pub fn bohr_to_internal(&self, a0_multiple: f64) -> f64 {
        self.length_to_internal(a0_multiple * CODATA.bohr_radius_a0)
    }

    pub fn internal_to_bohr(&self, value: f64) -> f64 {
        self.length_to_si(value) / CODATA.bohr_radius_a0
    }

    /// Trap frequency given as `f` in Hz (ω = 2π f) to internal rad/ms.
    pub fn hz_to_angular_internal(&self, hz: f64) -> f64 {
        self.frequency_to_internal(2.0 * PI * hz)
    }

    pub fn angular_internal_to_hz(&self, omega: f64) -> f64 {
        self.frequency_to_si(omega) / (2.0 * PI)
    }
}
