//! Run configuration with unit-suffixed keys, and the run manifest.

use crate::control::{ControlBounds, ControlEndpoints, EndpointFactors};
use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::io::sha256_hex;
use crate::model::ModelParams;
use crate::observables::CylinderRegion;
use crate::optimizer::{Algorithm, DifferenceScheme, OptimizerConfig};
use crate::solver::{step_count, ImaginaryTimeConfig, SolverConfig};
use crate::units::SpeciesParams;
use crate::kernel::PolarizationAxis;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub mass_u: f64,
    pub moment_mu_b: f64,
    #[serde(rename = "L3_m6_per_s")]
    pub l3_m6_per_s: f64,
    #[serde(rename = "N0")]
    pub atoms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct GridConfig {
    pub Lx_um: f64,
    pub Ly_um: f64,
    pub Lz_um: f64,
    pub Jx: usize,
    pub Jy: usize,
    pub Jz: usize,
    /// Points per axis of the `--fine` cross-check discretization.
    pub fine_J: [usize; 3],
    pub fine_dt_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt_ms: f64,
    #[serde(rename = "T_ms")]
    pub horizon_ms: f64,
    pub record_stride: usize,
    pub boundary_warn_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateConfig {
    pub dt_ms: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub energy_every: usize,
    /// Re-centring stride of the self-bound target run.
    pub recenter_every: usize,
    /// Trap used to pre-converge the target before the trap is switched off.
    pub target_trap_hz: f64,
    pub initial_sigma_um: [f64; 3],
    pub target_initial_sigma_um: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlsConfig {
    pub a_s_initial_a0: f64,
    pub a_s_final_a0: f64,
    pub f_rho_initial_hz: f64,
    pub f_rho_final_hz: f64,
    pub f_z_initial_hz: f64,
    pub f_z_final_hz: f64,
    pub a_s_min_a0: f64,
    pub a_s_max_a0: f64,
    pub f_rho_min_hz: f64,
    pub f_rho_max_hz: f64,
    pub f_z_min_hz: f64,
    pub f_z_max_hz: f64,
    /// Finest ladder level of the multilevel run.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub algorithm: Algorithm,
    pub eval_budget: usize,
    pub iters_per_level: usize,
    pub fd_step: f64,
    pub difference: DifferenceScheme,
    pub penalty_weight: Option<f64>,
    pub penalty_samples: usize,
    pub sine_terms: usize,
    pub simplex_edge: f64,
    pub initial_step: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    pub cylinder_radius_um: f64,
    pub cylinder_half_length_um: f64,
    /// Free evolution after `T` with the controls frozen.
    pub hold_ms: f64,
    /// Absolute snapshot times; `None` means `T, T+1, T+2, T+4, T+8`.
    pub snapshot_times_ms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub a_s_initial_factor: f64,
    pub a_s_final_factor: f64,
    pub f_rho_initial_factor: f64,
    pub f_z_initial_factor: f64,
    pub noise_sigma: f64,
    /// Atom number of the perturbed initial state relative to `N0`.
    pub atoms_fraction: f64,
    pub seed: u64,
}

/// Everything a CLI command needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub species: SpeciesConfig,
    pub grid: GridConfig,
    pub solver: SolverSection,
    pub groundstate: GroundStateConfig,
    pub controls: ControlsConfig,
    pub optimizer: OptimizerSection,
    pub observables: ObservablesConfig,
    pub perturbation: PerturbationConfig,
}

impl Default for RunConfig {
    /// Full-scale setup: ¹⁶⁴Dy, 10⁴ atoms, (12, 12, 24) μm on 72×72×64, 400 steps over 2 ms.
    fn default() -> Self {
        let optimizer = OptimizerConfig::default();
        Self {
            species: SpeciesConfig { mass_u: 163.93, moment_mu_b: 9.93, l3_m6_per_s: 1.2e-41, atoms: 1e4 },
            grid: GridConfig { Lx_um: 12.0, Ly_um: 12.0, Lz_um: 24.0, Jx: 72, Jy: 72, Jz: 64, fine_J: [144, 144, 128], fine_dt_ms: 0.0025 },
            solver: SolverSection { dt_ms: 0.005, horizon_ms: 2.0, record_stride: 10, boundary_warn_threshold: 1e-4 },
            groundstate: GroundStateConfig {
                dt_ms: 0.002,
                tol: 1e-9,
                max_steps: 100_000,
                energy_every: 10,
                recenter_every: 100,
                target_trap_hz: 10.0,
                initial_sigma_um: [1.0, 1.0, 2.0],
                target_initial_sigma_um: [0.3, 0.3, 1.5],
            },
            controls: ControlsConfig {
                a_s_initial_a0: 130.0,
                a_s_final_a0: 80.0,
                f_rho_initial_hz: 70.0,
                f_rho_final_hz: 0.0,
                f_z_initial_hz: 52.5,
                f_z_final_hz: 0.0,
                a_s_min_a0: 80.0,
                a_s_max_a0: 130.0,
                f_rho_min_hz: 0.0,
                f_rho_max_hz: 318.3,
                f_z_min_hz: 0.0,
                f_z_max_hz: 318.3,
                levels: 4,
            },
            optimizer: OptimizerSection {
                algorithm: optimizer.algorithm,
                eval_budget: optimizer.eval_budget,
                iters_per_level: optimizer.iters_per_level,
                fd_step: optimizer.fd_step,
                difference: optimizer.difference,
                penalty_weight: optimizer.penalty_weight,
                penalty_samples: optimizer.penalty_samples,
                sine_terms: optimizer.sine_terms,
                simplex_edge: optimizer.simplex_edge,
                initial_step: optimizer.initial_step,
                seed: optimizer.seed,
            },
            observables: ObservablesConfig { cylinder_radius_um: 0.75, cylinder_half_length_um: 7.5, hold_ms: 8.0, snapshot_times_ms: None },
            perturbation: PerturbationConfig {
                a_s_initial_factor: 1.03,
                a_s_final_factor: 0.97,
                f_rho_initial_factor: 1.03,
                f_z_initial_factor: 0.97,
                noise_sigma: 0.03,
                atoms_fraction: 0.9,
                seed: 0,
            },
        }
    }
}

impl RunConfig {
    /// Desk-scale variant: 32³ points on an (8, 8, 16) μm box and a 600-evaluation budget.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.grid = GridConfig { Lx_um: 8.0, Ly_um: 8.0, Lz_um: 16.0, Jx: 32, Jy: 32, Jz: 32, fine_J: [64, 64, 64], fine_dt_ms: 0.0025 };
        c.optimizer.eval_budget = 600;
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
        c.validate()?;
        Ok(c)
    }

    /// Fills defaults that depend on other fields (the snapshot schedule).
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.observables.snapshot_times_ms.is_none() {
            let t = c.solver.horizon_ms;
            c.observables.snapshot_times_ms = Some([0.0, 1.0, 2.0, 4.0, 8.0].iter().map(|d| t + d).collect());
        }
        c
    }

    /// Switches to the fine cross-check discretization.
    pub fn fine(&self) -> Self {
        let mut c = self.clone();
        [c.grid.Jx, c.grid.Jy, c.grid.Jz] = c.grid.fine_J;
        c.solver.dt_ms = c.grid.fine_dt_ms;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.species.atoms > 0.0) || !(self.species.mass_u > 0.0) || !(self.species.l3_m6_per_s >= 0.0) {
            return bad("species: mass and N0 must be positive, L3 non-negative".into());
        }
        self.grid()?;
        step_count(self.solver.horizon_ms, self.solver.dt_ms)?;
        SolverConfig::new(self.solver.dt_ms, self.solver.record_stride)?;
        crate::control::shape_bounds(&self.bounds(), &self.endpoints())?;
        if self.controls.levels == 0 || self.controls.levels > 20 {
            return bad(format!("controls.levels must be in 1..=20, got {}", self.controls.levels));
        }
        self.optimizer_config().validate()?;
        CylinderRegion::new(self.observables.cylinder_radius_um, self.observables.cylinder_half_length_um)?;
        if !(self.observables.hold_ms >= 0.0) {
            return bad("observables.hold_ms must be non-negative".into());
        }
        if !(self.perturbation.atoms_fraction > 0.0) || !(self.perturbation.noise_sigma >= 0.0) {
            return bad("perturbation: atoms_fraction must be positive and noise_sigma non-negative".into());
        }
        if !(self.groundstate.dt_ms > 0.0) || !(self.groundstate.tol > 0.0) || self.groundstate.energy_every == 0 {
            return bad("groundstate: dt_ms, tol and energy_every must be positive".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid3D> {
        let g = &self.grid;
        Grid3D::new([g.Lx_um, g.Ly_um, g.Lz_um], [g.Jx, g.Jy, g.Jz])
    }

    pub fn species_params(&self) -> SpeciesParams {
        SpeciesParams::from_lab_units(self.species.mass_u, self.species.moment_mu_b, self.species.l3_m6_per_s)
    }

    pub fn model(&self) -> Result<ModelParams> {
        ModelParams::new(self.species_params(), self.species.atoms, PolarizationAxis::z())
    }

    pub fn endpoints(&self) -> ControlEndpoints {
        let c = &self.controls;
        ControlEndpoints {
            a_s_initial_a0: c.a_s_initial_a0,
            a_s_final_a0: c.a_s_final_a0,
            omega_rho_initial: hz(c.f_rho_initial_hz),
            omega_rho_final: hz(c.f_rho_final_hz),
            omega_z_initial: hz(c.f_z_initial_hz),
            omega_z_final: hz(c.f_z_final_hz),
        }
    }

    pub fn bounds(&self) -> ControlBounds {
        let c = &self.controls;
        ControlBounds {
            a_s_lower_a0: c.a_s_min_a0,
            a_s_upper_a0: c.a_s_max_a0,
            omega_rho_lower: hz(c.f_rho_min_hz),
            omega_rho_upper: hz(c.f_rho_max_hz),
            omega_z_lower: hz(c.f_z_min_hz),
            omega_z_upper: hz(c.f_z_max_hz),
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let mut s = SolverConfig::new(self.solver.dt_ms, self.solver.record_stride)?;
        s.boundary_warn_threshold = self.solver.boundary_warn_threshold;
        Ok(s)
    }

    pub fn imaginary_time(&self, recenter: bool) -> ImaginaryTimeConfig {
        let g = &self.groundstate;
        ImaginaryTimeConfig {
            dt: g.dt_ms,
            tol: g.tol,
            max_steps: g.max_steps,
            energy_every: g.energy_every,
            recenter_every: recenter.then_some(g.recenter_every).filter(|&n| n > 0),
            ..ImaginaryTimeConfig::default()
        }
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = &self.optimizer;
        OptimizerConfig {
            iters_per_level: o.iters_per_level,
            eval_budget: o.eval_budget,
            fd_step: o.fd_step,
            difference: o.difference,
            algorithm: o.algorithm,
            penalty_weight: o.penalty_weight,
            penalty_samples: o.penalty_samples,
            sine_terms: o.sine_terms,
            simplex_edge: o.simplex_edge,
            initial_step: o.initial_step,
            levels: self.controls.levels,
            gradient_tolerance: 0.0,
            seed: o.seed,
        }
    }

    pub fn region(&self) -> CylinderRegion {
        CylinderRegion { radius: self.observables.cylinder_radius_um, half_length: self.observables.cylinder_half_length_um }
    }

    pub fn endpoint_factors(&self) -> EndpointFactors {
        let p = &self.perturbation;
        EndpointFactors {
            a_s_initial: p.a_s_initial_factor,
            a_s_final: p.a_s_final_factor,
            omega_rho_initial: p.f_rho_initial_factor,
            omega_z_initial: p.f_z_initial_factor,
        }
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.resolved().observables.snapshot_times_ms.unwrap_or_default()
    }
}

/// Immutable record of one command invocation, written before heavy work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub mode: Option<String>,
    pub seeds: Seeds,
    pub code_version: String,
    pub config: RunConfig,
    /// Cache file stem of the kernel multiplier and its SHA-256 when already cached.
    pub kernel_cache: String,
    pub kernel_cache_sha256: Option<String>,
    /// Extra inputs (state and control files) with their hashes.
    pub inputs: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub optimizer: u64,
    pub perturbation: u64,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// First 12 hex digits of the SHA-256 of the manifest JSON.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_json()?)[..12].to_string())
    }
}
