//! Strang-split spectral time stepping of the generalized GPE.
//!
//! One step is a potential half-step, an exact kinetic step in Fourier space
//! and a second potential half-step. Inside a potential half-step the
//! density, the dipolar potential and the loss rate are frozen at the entry
//! state, which turns it into a pointwise complex exponential. Controls are
//! sampled at `t_n` for the first half-step and at `t_{n+1}` for the second.

use crate::control::{ControlSample, ControlSource};
use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::field::{ComplexField, RealField};
use crate::grid::Grid3D;
use crate::kernel::{boundary_density_ratio, DipolarOperator, TruncatedKernelSpectrum, DEFAULT_BOUNDARY_THRESHOLD};
use crate::model::ModelParams;
use num_complex::Complex64;
use std::sync::Arc;

/// Time stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Step size in ms.
    pub dt: f64,
    /// Observers run every `record_stride` steps (and at both ends).
    pub record_stride: usize,
    /// Boundary-to-peak density ratio above which a warning is recorded.
    pub boundary_warn_threshold: f64,
}

impl SolverConfig {
    pub fn new(dt: f64, record_stride: usize) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        if record_stride == 0 {
            return Err(Error::InvalidArgument("record stride must be at least 1".into()));
        }
        Ok(Self { dt, record_stride, boundary_warn_threshold: DEFAULT_BOUNDARY_THRESHOLD })
    }
}

/// Callback invoked on recorded steps.
pub trait Observer {
    fn observe(&mut self, t: f64, step: usize, psi: &ComplexField) -> Result<()>;
}

impl<F: FnMut(f64, usize, &ComplexField) -> Result<()>> Observer for F {
    fn observe(&mut self, t: f64, step: usize, psi: &ComplexField) -> Result<()> {
        self(t, step, psi)
    }
}

/// Bookkeeping of one propagation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// Recorded times in ms.
    pub times: Vec<f64>,
    /// Step indices matching `times`.
    pub steps: Vec<usize>,
    /// `(t, ratio)` for recorded states whose boundary density exceeded the threshold.
    pub boundary_warnings: Vec<(f64, f64)>,
    /// Number of Strang steps taken.
    pub step_count: usize,
}

/// Number of steps `duration / dt`, which must be an integer to 1e-9.
pub fn step_count(duration: f64, dt: f64) -> Result<usize> {
    if duration < 0.0 {
        return Err(Error::InvalidArgument(format!("duration must be non-negative, got {duration}")));
    }
    let n = duration / dt;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(Error::InvalidArgument(format!("duration {duration} is not a multiple of the step {dt}")));
    }
    Ok(rounded as usize)
}

/// Imaginary-time iteration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImaginaryTimeConfig {
    /// Imaginary step size in ms.
    pub dt: f64,
    /// Converged when the relative energy change per step falls below this.
    pub tol: f64,
    pub max_steps: usize,
    /// Energy is evaluated every this many steps.
    pub energy_every: usize,
    /// Re-centres the centre of mass every this many steps, if set.
    pub recenter_every: Option<usize>,
    /// Peak density growth (relative to the start) treated as collapse.
    pub collapse_peak_factor: f64,
}

impl Default for ImaginaryTimeConfig {
    fn default() -> Self {
        Self { dt: 0.005, tol: 1e-10, max_steps: 100_000, energy_every: 10, recenter_every: None, collapse_peak_factor: 1e4 }
    }
}

/// Outcome of an imaginary-time run.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub psi: ComplexField,
    pub energy: f64,
    pub steps: usize,
    /// `(step, energy)` at every energy check.
    pub energies: Vec<(usize, f64)>,
}

/// Time stepper for one grid, kernel and model.
pub struct Propagator {
    model: ModelParams,
    grid: Arc<Grid3D>,
    dipolar: DipolarOperator,
    fft: Fft3,
    k_squared: Vec<f64>,
    /// `x² + y²` and `z²` at every sample.
    radial_sq: Vec<f64>,
    axial_sq: Vec<f64>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator").field("points", &self.grid.points()).field("lengths", &self.grid.lengths()).finish()
    }
}

fn check_finite(psi: &ComplexField, stage: &'static str) -> Result<()> {
    if psi.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericFault { stage })
    }
}

impl Propagator {
    pub fn new(model: ModelParams, kernel: Arc<TruncatedKernelSpectrum>) -> Self {
        let grid = Arc::clone(kernel.grid());
        let dipolar = DipolarOperator::new(kernel, model.polarization(), model.g_dd());
        let fft = Fft3::new(grid.points());
        let k_squared = grid.k_squared();
        let radial_sq = grid.sample(|x, y, _| x * x + y * y);
        let axial_sq = grid.sample(|_, _, z| z * z);
        Self { model, grid, dipolar, fft, k_squared, radial_sq, axial_sq }
    }

    /// Same grid and kernel with a different model.
    pub fn with_model(&self, model: ModelParams) -> Self {
        Self::new(model, Arc::clone(self.dipolar.kernel()))
    }

    pub fn model(&self) -> &ModelParams {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid3D> {
        &self.grid
    }

    pub fn dipolar(&self) -> &DipolarOperator {
        &self.dipolar
    }

    /// `½(ω_ρ²(x²+y²) + ω_z² z²)` (mass unit `m`).
    pub fn trap_potential(&self, sample: &ControlSample) -> RealField {
        let (wr, wz) = (sample.omega_rho * sample.omega_rho, sample.omega_z * sample.omega_z);
        let v = self.radial_sq.iter().zip(&self.axial_sq).map(|(r, z)| 0.5 * (wr * r + wz * z)).collect();
        RealField::from_vec(Arc::clone(&self.grid), v).expect("grid-sized")
    }

    /// `V_eff = V_ext + g|ψ|² + Φ + γ_qf|ψ|³ - i(ħL₃/2)|ψ|⁴`.
    pub fn effective_potential(&self, psi: &ComplexField, sample: &ControlSample) -> Result<ComplexField> {
        self.effective_potential_with_loss(psi, sample, self.model.loss_l3())
    }

    fn effective_potential_with_loss(&self, psi: &ComplexField, sample: &ControlSample, loss: f64) -> Result<ComplexField> {
        if !psi.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let rho: Vec<f64> = psi.values().iter().map(|v| v.norm_sqr()).collect();
        let phi = if self.model.g_dd() != 0.0 && rho.iter().any(|&r| r != 0.0) { self.dipolar.potential_from_density(&rho) } else { vec![0.0; rho.len()] };
        let trap = self.trap_potential(sample);
        let (g, gamma) = (sample.couplings.contact, sample.couplings.quantum_fluctuation);
        let absorb = 0.5 * self.model.hbar() * loss;
        let v = rho
            .iter()
            .zip(&phi)
            .zip(trap.values())
            .map(|((&r, &p), &t)| Complex64::new(t + g * r + p + gamma * r * r.sqrt(), -absorb * r * r))
            .collect();
        ComplexField::from_vec(Arc::clone(&self.grid), v)
    }

    /// Multiplies `ψ` by `exp(-i V dt / ħ)` for a complex step `dt` (real time)
    /// or `exp(-V τ / ħ)` (imaginary time, `dt = -iτ`).
    fn potential_substep(&self, psi: &mut ComplexField, sample: &ControlSample, dt: Complex64, loss: f64) -> Result<()> {
        let v = self.effective_potential_with_loss(psi, sample, loss)?;
        let factor = -Complex64::i() * dt / self.model.hbar();
        for (p, vv) in psi.values_mut().iter_mut().zip(v.values()) {
            *p *= (factor * vv).exp();
        }
        Ok(())
    }

    fn kinetic_step(&self, psi: &mut ComplexField, dt: Complex64) {
        let hbar = self.model.hbar();
        let factor = -Complex64::i() * 0.5 * hbar * dt;
        let data = psi.values_mut();
        self.fft.forward(data);
        for (p, &k2) in data.iter_mut().zip(&self.k_squared) {
            *p *= (factor * k2).exp();
        }
        self.fft.inverse(data);
    }

    fn split_step(&self, psi: &mut ComplexField, first: &ControlSample, second: &ControlSample, dt: Complex64, loss: f64) -> Result<()> {
        self.potential_substep(psi, first, 0.5 * dt, loss)?;
        check_finite(psi, "first potential half-step")?;
        self.kinetic_step(psi, dt);
        check_finite(psi, "kinetic step")?;
        self.potential_substep(psi, second, 0.5 * dt, loss)?;
        check_finite(psi, "second potential half-step")?;
        Ok(())
    }

    /// One real-time Strang step from `t` to `t + dt`.
    pub fn strang_step(&self, psi: &mut ComplexField, t: f64, dt: f64, controls: &dyn ControlSource) -> Result<()> {
        let first = controls.sample(t, &self.model)?;
        let second = controls.sample(t + dt, &self.model)?;
        self.split_step(psi, &first, &second, Complex64::new(dt, 0.0), self.model.loss_l3())
    }

    /// Propagates from `t_start` for `duration` ms, calling `observer` on
    /// recorded steps (every `record_stride`, plus the first and last).
    pub fn propagate(
        &self,
        psi0: &ComplexField,
        controls: &dyn ControlSource,
        t_start: f64,
        duration: f64,
        config: &SolverConfig,
        observer: &mut dyn Observer,
    ) -> Result<(ComplexField, Trajectory)> {
        if !psi0.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let n = step_count(duration, config.dt)?;
        let mut psi = psi0.clone();
        let mut traj = Trajectory::default();
        let time = |k: usize| t_start + k as f64 * config.dt;
        let mut record = |k: usize, psi: &ComplexField, traj: &mut Trajectory| -> Result<()> {
            let t = time(k);
            let ratio = boundary_density_ratio(&psi.density());
            if ratio > config.boundary_warn_threshold {
                traj.boundary_warnings.push((t, ratio));
            }
            traj.times.push(t);
            traj.steps.push(k);
            observer.observe(t, k, psi)
        };
        record(0, &psi, &mut traj)?;
        let mut next = controls.sample(time(0), &self.model)?;
        for k in 0..n {
            let first = next;
            next = controls.sample(time(k + 1), &self.model)?;
            self.split_step(&mut psi, &first, &next, Complex64::new(config.dt, 0.0), self.model.loss_l3())?;
            if (k + 1) % config.record_stride == 0 || k + 1 == n {
                record(k + 1, &psi, &mut traj)?;
            }
        }
        traj.step_count = n;
        if let Some(&(t, r)) = traj.boundary_warnings.first() {
            log::warn!("boundary density reached {r:.2e} of the peak at t = {t} ms ({} recorded warnings)", traj.boundary_warnings.len());
        }
        Ok((psi, traj))
    }

    /// Energy functional (loss ignored):
    /// `∫ ħ²/2|∇ψ|² + V_ext|ψ|² + g/2|ψ|⁴ + ½Φ|ψ|² + 2/5 γ_qf|ψ|⁵ dV`.
    pub fn energy(&self, psi: &ComplexField, sample: &ControlSample) -> Result<f64> {
        if !psi.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        let dv = self.grid.cell_volume();
        let mut spec = psi.values().to_vec();
        self.fft.forward(&mut spec);
        let hbar = self.model.hbar();
        let kinetic = 0.5 * hbar * hbar * spec.iter().zip(&self.k_squared).map(|(c, k2)| c.norm_sqr() * k2).sum::<f64>() * dv / spec.len() as f64;
        let rho: Vec<f64> = psi.values().iter().map(|v| v.norm_sqr()).collect();
        let phi = if self.model.g_dd() != 0.0 && rho.iter().any(|&r| r != 0.0) { self.dipolar.potential_from_density(&rho) } else { vec![0.0; rho.len()] };
        let trap = self.trap_potential(sample);
        let (g, gamma) = (sample.couplings.contact, sample.couplings.quantum_fluctuation);
        let local: f64 = rho
            .iter()
            .zip(&phi)
            .zip(trap.values())
            .map(|((&r, &p), &t)| t * r + 0.5 * g * r * r + 0.5 * p * r + 0.4 * gamma * r * r * r.sqrt())
            .sum::<f64>()
            * dv;
        let e = kinetic + local;
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::NumericFault { stage: "energy" })
        }
    }

    /// Ground state at fixed controls by imaginary-time Strang steps with
    /// renormalization to `atoms` after every step. Loss is switched off.
    pub fn ground_state(
        &self,
        psi_init: &ComplexField,
        sample: &ControlSample,
        atoms: f64,
        config: &ImaginaryTimeConfig,
    ) -> Result<GroundState> {
        if !(config.tol > 0.0) || !(config.dt > 0.0) || config.energy_every == 0 {
            return Err(Error::InvalidArgument("imaginary-time tolerance, step and energy stride must be positive".into()));
        }
        let mut psi = psi_init.normalized_to(atoms)?;
        let dt = Complex64::new(0.0, -config.dt);
        let initial_peak = psi.density().max();
        let mut energies = vec![(0, self.energy(&psi, sample)?)];
        let history = |e: &[(usize, f64)]| e.iter().map(|p| p.1).collect::<Vec<_>>();
        for step in 1..=config.max_steps {
            let faulted = self.split_step(&mut psi, sample, sample, dt, 0.0).and_then(|_| psi.normalize_to(atoms));
            if faulted.is_err() {
                return Err(Error::Collapse { steps: step, energies: history(&energies) });
            }
            if let Some(every) = config.recenter_every {
                if step % every == 0 {
                    self.recenter(&mut psi);
                }
            }
            if step % config.energy_every == 0 {
                let e = self.energy(&psi, sample)?;
                let peak = psi.density().max();
                let (_, last) = *energies.last().expect("seeded");
                energies.push((step, e));
                if peak > config.collapse_peak_factor * initial_peak && e < last {
                    return Err(Error::Collapse { steps: step, energies: history(&energies) });
                }
                let change = (e - last).abs() / e.abs().max(f64::MIN_POSITIVE) / config.energy_every as f64;
                if change < config.tol {
                    return Ok(GroundState { psi, energy: e, steps: step, energies });
                }
            }
        }
        Err(Error::NotConverged { steps: config.max_steps, energies: history(&energies) })
    }

    /// Centre of mass `⟨r⟩ = ∫ r|ψ|² dV / N`.
    pub fn center_of_mass(&self, psi: &ComplexField) -> [f64; 3] {
        let mut acc = [0.0; 3];
        let mut total = 0.0;
        for (idx, v) in psi.values().iter().enumerate() {
            let r = v.norm_sqr();
            let p = self.grid.position(idx);
            for a in 0..3 {
                acc[a] += r * p[a];
            }
            total += r;
        }
        acc.map(|a| a / total)
    }

    /// Shifts `ψ` so that its centre of mass sits at the origin (spectral translation).
    pub fn recenter(&self, psi: &mut ComplexField) {
        let c = self.center_of_mass(psi);
        let data = psi.values_mut();
        self.fft.forward(data);
        let [nx, ny, nz] = self.grid.points();
        let (kx, ky, kz) = (self.grid.wavenumbers(0), self.grid.wavenumbers(1), self.grid.wavenumbers(2));
        for ix in 0..nx {
            for iy in 0..ny {
                for iz in 0..nz {
                    // Nyquist modes are left untouched to keep real fields real.
                    let k = [
                        if 2 * ix == nx { 0.0 } else { kx[ix] },
                        if 2 * iy == ny { 0.0 } else { ky[iy] },
                        if 2 * iz == nz { 0.0 } else { kz[iz] },
                    ];
                    let phase = k[0] * c[0] + k[1] * c[1] + k[2] * c[2];
                    data[(ix * ny + iy) * nz + iz] *= Complex64::from_polar(1.0, phase);
                }
            }
        }
        self.fft.inverse(data);
    }
}

/// Observer that does nothing.
pub fn no_observer() -> impl Observer {
    |_: f64, _: usize, _: &ComplexField| Ok(())
}
