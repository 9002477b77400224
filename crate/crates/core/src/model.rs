//! Physical model of the generalized GPE in internal units.

use crate::error::{Error, Result};
use crate::kernel::PolarizationAxis;
use crate::units::{SpeciesParams, UnitSystem};
use std::f64::consts::PI;

/// Interaction strengths at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    /// Contact coupling `g`.
    pub contact: f64,
    /// Quantum-fluctuation (LHY) prefactor `γ_qf`.
    pub quantum_fluctuation: f64,
}

/// Species, atom number and polarization, with derived internal-unit constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    species: SpeciesParams,
    units: UnitSystem,
    atoms: f64,
    polarization: PolarizationAxis,
    hbar: f64,
    dipolar_length: f64,
    g_dd: f64,
    loss_l3: f64,
    quantum_fluctuations: bool,
}

impl ModelParams {
    pub fn new(species: SpeciesParams, atoms: f64, polarization: PolarizationAxis) -> Result<Self> {
        if !(atoms > 0.0) || !atoms.is_finite() {
            return Err(Error::InvalidArgument(format!("atom number must be positive, got {atoms}")));
        }
        let units = UnitSystem::for_species(&species);
        let hbar = units.hbar();
        let dipolar_length = units.length_to_internal(species.dipolar_length());
        Ok(Self {
            species,
            units,
            atoms,
            polarization,
            hbar,
            dipolar_length,
            g_dd: 4.0 * PI * hbar * hbar * dipolar_length,
            loss_l3: units.loss_to_internal(species.loss_l3),
            quantum_fluctuations: true,
        })
    }

    /// ¹⁶⁴Dy polarized along z with `atoms` atoms.
    pub fn dysprosium(atoms: f64) -> Result<Self> {
        Self::new(SpeciesParams::dysprosium_164(), atoms, PolarizationAxis::z())
    }

    pub fn species(&self) -> &SpeciesParams {
        &self.species
    }

    pub fn units(&self) -> &UnitSystem {
        &self.units
    }

    pub fn atoms(&self) -> f64 {
        self.atoms
    }

    /// Same model with a different atom number.
    pub fn with_atoms(&self, atoms: f64) -> Result<Self> {
        Ok(Self { quantum_fluctuations: self.quantum_fluctuations, ..Self::new(self.species, atoms, self.polarization)? })
    }

    /// Same model with the three-body loss switched off.
    pub fn without_loss(&self) -> Self {
        Self { loss_l3: 0.0, ..self.clone() }
    }

    /// Same model without the LHY term.
    pub fn without_quantum_fluctuations(&self) -> Self {
        Self { quantum_fluctuations: false, ..self.clone() }
    }

    pub fn polarization(&self) -> PolarizationAxis {
        self.polarization
    }

    /// `ħ/m` in μm²/ms.
    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Dipolar length in μm.
    pub fn dipolar_length(&self) -> f64 {
        self.dipolar_length
    }

    pub fn g_dd(&self) -> f64 {
        self.g_dd
    }

    /// `L₃` in μm⁶/ms.
    pub fn loss_l3(&self) -> f64 {
        self.loss_l3
    }

    /// `g = 4π a_s ħ²/m` for a scattering length in μm.
    pub fn contact_coupling(&self, a_s: f64) -> f64 {
        4.0 * PI * a_s * self.hbar * self.hbar
    }

    /// `γ_qf = (32/3) g sqrt(a_s³/π) (1 + 3/2 a_dd²/a_s²)`.
    pub fn quantum_fluctuation_coupling(&self, a_s: f64) -> f64 {
        if a_s <= 0.0 || !self.quantum_fluctuations {
            return 0.0;
        }
        let g = self.contact_coupling(a_s);
        let ratio = self.dipolar_length / a_s;
        32.0 / 3.0 * g * (a_s.powi(3) / PI).sqrt() * (1.0 + 1.5 * ratio * ratio)
    }

    /// Both couplings for a scattering length given in Bohr radii.
    pub fn couplings_bohr(&self, a_s_a0: f64) -> Couplings {
        let a_s = self.units.bohr_to_internal(a_s_a0);
        Couplings { contact: self.contact_coupling(a_s), quantum_fluctuation: self.quantum_fluctuation_coupling(a_s) }
    }

    /// Angular frequency in rad/s to internal rad/ms.
    pub fn omega_to_internal(&self, rad_per_s: f64) -> f64 {
        self.units.frequency_to_internal(rad_per_s)
    }
}
