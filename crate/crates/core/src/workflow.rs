//! End-to-end recipes behind the command-line tool: ground states, controlled
//! propagation with a post-horizon hold, optimization, the perturbed rerun and
//! the kernel benchmark. Every command writes its manifest before computing
//! and names its outputs after the manifest hash.

use crate::config::{RunConfig, RunManifest, Seeds};
use crate::control::{perturb_controls, ControlSet, ControlSource, ControlValues};
use crate::error::{Error, Result};
use crate::field::{gaussian_wavefunction, ComplexField};
use crate::grid::Grid3D;
use crate::io::{kernel_cache_stem, load_or_compute_kernel, read_field, sha256_hex, write_field, write_slice};
use crate::kernel::{
    free_space_poisson, free_space_poisson_naive, gaussian_density, gaussian_reference_potential, max_relative_error, oversampling_for,
    KernelOptions, TruncatedKernelSpectrum,
};
use crate::model::ModelParams;
use crate::observables::{density_slice, ObservableSeries, SeriesRecorder, SlicePlane};
use crate::optimizer::{optimize, target_cost, ControlObjective, Mode, OptimizationResult, ProblemSpec};
use crate::solver::{step_count, GroundState, Observer, Propagator, SolverConfig};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

/// Grid, model, kernel and stepper for one configuration.
pub struct Setup {
    pub config: RunConfig,
    pub grid: Arc<Grid3D>,
    pub model: ModelParams,
    pub kernel: Arc<TruncatedKernelSpectrum>,
    pub kernel_sha256: String,
    pub propagator: Arc<Propagator>,
}

impl std::fmt::Debug for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Setup").field("grid", &self.grid.points()).field("kernel_sha256", &self.kernel_sha256).finish()
    }
}

fn cache_dir(out: &Path) -> PathBuf {
    out.join("cache")
}

impl Setup {
    /// Builds everything, loading the kernel multiplier from `cache` when present.
    pub fn new(config: &RunConfig, cache: &Path) -> Result<Self> {
        config.validate()?;
        let grid = Arc::new(config.grid()?);
        let model = config.model()?;
        let (kernel, kernel_sha256) = load_or_compute_kernel(cache, Arc::clone(&grid), KernelOptions::default())?;
        let kernel = Arc::new(kernel);
        let propagator = Arc::new(Propagator::new(model.clone(), Arc::clone(&kernel)));
        Ok(Self { config: config.clone(), grid, model, kernel, kernel_sha256, propagator })
    }

    fn sample(&self, values: ControlValues) -> crate::control::ControlSample {
        crate::control::ControlSample::new(values, &self.model)
    }

    /// Trapped initial state at the initial control values of `endpoints`.
    pub fn initial_state(&self, endpoints: &crate::control::ControlEndpoints, atoms: f64) -> Result<GroundState> {
        let g = &self.config.groundstate;
        let guess = gaussian_wavefunction(Arc::clone(&self.grid), atoms, g.initial_sigma_um, [0.0; 3]);
        self.propagator.ground_state(&guess, &self.sample(endpoints.initial()), atoms, &self.config.imaginary_time(false))
    }

    /// Self-bound target: converged in a weak trap, then with the final controls
    /// (trap off), re-centring the centre of mass periodically.
    pub fn target_state(&self, atoms: f64) -> Result<GroundState> {
        let g = &self.config.groundstate;
        let fin = self.config.endpoints().final_values();
        let weak = 2.0 * PI * g.target_trap_hz;
        let trapped = ControlValues { omega_rho: fin.omega_rho.max(weak), omega_z: fin.omega_z.max(weak), ..fin };
        let cfg = self.config.imaginary_time(true);
        let guess = gaussian_wavefunction(Arc::clone(&self.grid), atoms, g.target_initial_sigma_um, [0.0; 3]);
        let first = self.propagator.ground_state(&guess, &self.sample(trapped), atoms, &cfg)?;
        let second = self.propagator.ground_state(&first.psi, &self.sample(fin), atoms, &cfg)?;
        let mut energies = first.energies;
        let offset = first.steps;
        energies.extend(second.energies.into_iter().map(|(k, e)| (k + offset, e)));
        Ok(GroundState { psi: second.psi, energy: second.energy, steps: offset + second.steps, energies })
    }

    /// Energy of `psi` at fixed control values.
    pub fn energy(&self, psi: &ComplexField, values: ControlValues) -> Result<f64> {
        self.propagator.energy(psi, &self.sample(values))
    }
}

/// The initial and target states.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub psi0: ComplexField,
    pub psi_d: ComplexField,
}

/// Content that determines the ground states; its hash keys the state cache.
#[derive(Serialize)]
struct StateKey<'a> {
    species: &'a crate::config::SpeciesConfig,
    grid: [f64; 3],
    points: [usize; 3],
    groundstate: &'a crate::config::GroundStateConfig,
    initial: ControlValues,
    fin: ControlValues,
}

fn state_key(config: &RunConfig) -> Result<String> {
    let g = config.grid()?;
    let key = StateKey {
        species: &config.species,
        grid: g.lengths(),
        points: g.points(),
        groundstate: &config.groundstate,
        initial: config.endpoints().initial(),
        fin: config.endpoints().final_values(),
    };
    Ok(sha256_hex(&serde_json::to_vec(&key)?)[..12].to_string())
}

fn field_meta(pairs: &[(&str, serde_json::Value)]) -> serde_json::Map<String, serde_json::Value> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// Ground states for `setup`, reusing `cache/states-<key>` when present.
pub fn cached_states(setup: &Setup, cache: &Path) -> Result<StatePair> {
    let key = state_key(&setup.config)?;
    let (s0, sd) = (cache.join(format!("psi0-{key}")), cache.join(format!("psid-{key}")));
    if let (Ok((psi0, _)), Ok((psi_d, _))) = (read_field(&s0, Some(Arc::clone(&setup.grid))), read_field(&sd, Some(Arc::clone(&setup.grid)))) {
        return Ok(StatePair { psi0, psi_d });
    }
    let (pair, _) = compute_states(setup)?;
    write_field(&s0, &pair.psi0, Default::default())?;
    write_field(&sd, &pair.psi_d, Default::default())?;
    Ok(pair)
}

/// Energies, step counts and peak densities of a ground-state pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateSummary {
    pub initial_energy: f64,
    pub initial_steps: usize,
    pub initial_peak_density: f64,
    pub target_energy: f64,
    pub target_steps: usize,
    pub target_peak_density: f64,
    pub seconds: f64,
}

fn compute_states(setup: &Setup) -> Result<(StatePair, GroundStateSummary)> {
    let start = Instant::now();
    let n0 = setup.config.species.atoms;
    let init = setup.initial_state(&setup.config.endpoints(), n0)?;
    log::info!("initial state: E = {:.6e} after {} steps", init.energy, init.steps);
    let target = setup.target_state(n0)?;
    log::info!("target state: E = {:.6e} after {} steps", target.energy, target.steps);
    let summary = GroundStateSummary {
        initial_energy: init.energy,
        initial_steps: init.steps,
        initial_peak_density: init.psi.density().max(),
        target_energy: target.energy,
        target_steps: target.steps,
        target_peak_density: target.psi.density().max(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((StatePair { psi0: init.psi, psi_d: target.psi }, summary))
}

/// Observables of a propagation over `[0, T + hold]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagationReport {
    pub series: ObservableSeries,
    /// Cost `(N₀ - |⟨ψ_d, ψ(T)⟩|)²` and its ratio to the linear-ramp cost.
    pub cost: f64,
    pub normalized_cost: Option<f64>,
    pub atoms_initial: f64,
    pub atoms_at_horizon: f64,
    pub atom_loss_fraction: f64,
    pub atoms_in_region_fraction: f64,
    /// `(max - min) / mean` of the peak density for `t ≥ T`.
    pub peak_fluctuation_after_horizon: f64,
    pub boundary_warnings: usize,
    pub seconds: f64,
}

/// Snapshot images taken during a propagation.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub y0: crate::observables::DensitySlice,
    pub z0: crate::observables::DensitySlice,
}

struct SkipFirst<'a> {
    inner: &'a mut SeriesRecorder,
    skip: bool,
}

impl Observer for SkipFirst<'_> {
    fn observe(&mut self, t: f64, step: usize, psi: &ComplexField) -> Result<()> {
        if self.skip && step == 0 {
            return Ok(());
        }
        self.inner.observe(t, step, psi)
    }
}

/// Propagates `psi0` over `[0, T + hold]` under `controls` (frozen after `T`),
/// recording observables and taking snapshots at `snapshot_times`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_with_hold(
    setup: &Setup,
    psi0: &ComplexField,
    psi_d: &ComplexField,
    controls: &dyn ControlSource,
    solver: &SolverConfig,
    normalization: Option<f64>,
    snapshot_times: &[f64],
) -> Result<(PropagationReport, Vec<Snapshot>)> {
    let start = Instant::now();
    let horizon = controls.horizon();
    let end = horizon + setup.config.observables.hold_ms;
    let mut stops: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t > 0.0 && t <= end + 1e-9).collect();
    stops.extend([horizon, end]);
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    for &t in &stops {
        step_count(t, solver.dt)?;
    }
    let mut recorder = SeriesRecorder::new(setup.config.region());
    let mut psi = psi0.clone();
    let mut t = 0.0;
    let mut snapshots = Vec::new();
    let mut at_horizon = None;
    let mut warnings = 0;
    let take = |t: f64, psi: &ComplexField| Snapshot { time: t, y0: density_slice(psi, SlicePlane::Y0), z0: density_slice(psi, SlicePlane::Z0) };
    if snapshot_times.iter().any(|&s| s.abs() < 1e-9) {
        snapshots.push(take(0.0, &psi));
    }
    for (n, &stop) in stops.iter().enumerate() {
        let mut obs = SkipFirst { inner: &mut recorder, skip: n > 0 };
        let (next, traj) = setup.propagator.propagate(&psi, controls, t, stop - t, solver, &mut obs)?;
        warnings += traj.boundary_warnings.len();
        psi = next;
        t = stop;
        if (t - horizon).abs() < 1e-9 {
            at_horizon = Some(psi.clone());
        }
        if snapshot_times.iter().any(|&s| (s - t).abs() < 1e-9) {
            snapshots.push(take(t, &psi));
        }
    }
    let psi_t = at_horizon.expect("the horizon is always a stop");
    let cost = target_cost(&psi_t, psi_d)?;
    let atoms_initial = psi0.atom_number()?;
    let atoms_at_horizon = psi_t.atom_number()?;
    let region = crate::observables::atoms_in_region(&psi_t, &setup.config.region())?;
    let series = recorder.series;
    let report = PropagationReport {
        cost,
        normalized_cost: normalization.map(|n| cost / n),
        atoms_initial,
        atoms_at_horizon,
        atom_loss_fraction: 1.0 - atoms_at_horizon / atoms_initial,
        atoms_in_region_fraction: region / atoms_at_horizon,
        peak_fluctuation_after_horizon: series.peak_fluctuation_after(horizon),
        series,
        boundary_warnings: warnings,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, snapshots))
}

/// Output directory plus the manifest hash that prefixes every file.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub hash: String,
    pub manifest: PathBuf,
}

impl RunFiles {
    /// `dir/<name>-<hash>.<ext>`.
    pub fn path(&self, name: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{name}-{}.{ext}", self.hash))
    }

    /// `dir/<name>-<hash>`, for files with sidecars.
    pub fn stem(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}-{}", self.hash))
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let p = self.path(name, "json");
        fs::write(&p, serde_json::to_vec_pretty(value)?)?;
        Ok(p)
    }
}

/// Writes the manifest of `command` to `out` and returns the file naming scheme.
pub fn start_run(command: &str, mode: Option<Mode>, config: &RunConfig, out: &Path, inputs: Vec<(String, String)>) -> Result<RunFiles> {
    fs::create_dir_all(out)?;
    let config = config.resolved();
    let grid = config.grid()?;
    let q = oversampling_for(grid.aspect_ratio())?;
    let stem = kernel_cache_stem(&cache_dir(out), &grid, q);
    let mut bin = stem.as_os_str().to_owned();
    bin.push(".bin");
    let kernel_cache_sha256 = fs::read(PathBuf::from(bin)).ok().map(|b| sha256_hex(&b));
    let manifest = RunManifest {
        command: command.into(),
        mode: mode.map(|m| m.to_string()),
        seeds: Seeds { optimizer: config.optimizer.seed, perturbation: config.perturbation.seed },
        code_version: env!("CARGO_PKG_VERSION").into(),
        kernel_cache: stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        kernel_cache_sha256,
        config,
        inputs,
    };
    let hash = manifest.hash()?;
    let path = out.join(format!("manifest-{hash}.json"));
    fs::write(&path, manifest.to_json()?)?;
    log::info!("manifest {}", path.display());
    Ok(RunFiles { dir: out.to_path_buf(), hash, manifest: path })
}

/// Wall times and kernel hash, written after a command finishes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTimings {
    pub kernel_cache_sha256: String,
    pub seconds: Vec<(String, f64)>,
}

/// Computes `ψ₀` and `ψ_d` and stores them as `psi0-<hash>` and `psid-<hash>`.
pub fn cmd_groundstate(config: &RunConfig, out: &Path) -> Result<(RunFiles, GroundStateSummary)> {
    let files = start_run("groundstate", None, config, out, vec![])?;
    let t = Instant::now();
    let setup = Setup::new(config, &cache_dir(out))?;
    let kernel_s = t.elapsed().as_secs_f64();
    let (pair, summary) = compute_states(&setup)?;
    let e = config.endpoints();
    let meta0 = field_meta(&[("energy", summary.initial_energy.into()), ("a_s_a0", e.a_s_initial_a0.into()), ("role", "initial".into())]);
    let metad = field_meta(&[("energy", summary.target_energy.into()), ("a_s_a0", e.a_s_final_a0.into()), ("role", "target".into())]);
    write_field(&files.stem("psi0"), &pair.psi0, meta0.clone())?;
    write_field(&files.stem("psid"), &pair.psi_d, metad.clone())?;
    // Seed the state cache so later commands with the same physics reuse these.
    let key = state_key(config)?;
    write_field(&cache_dir(out).join(format!("psi0-{key}")), &pair.psi0, meta0)?;
    write_field(&cache_dir(out).join(format!("psid-{key}")), &pair.psi_d, metad)?;
    files.write_json("groundstate", &summary)?;
    files.write_json("timings", &RunTimings { kernel_cache_sha256: setup.kernel_sha256.clone(), seconds: vec![("kernel".into(), kernel_s), ("states".into(), summary.seconds)] })?;
    Ok((files, summary))
}

/// Loads states from explicit stems (`.../psi0-<hash>`, `.../psid-<hash>`) or the cache.
pub fn load_states(setup: &Setup, out: &Path, states: Option<(&Path, &Path)>) -> Result<StatePair> {
    match states {
        Some((p0, pd)) => {
            let (psi0, _) = read_field(p0, Some(Arc::clone(&setup.grid)))?;
            let (psi_d, _) = read_field(pd, Some(Arc::clone(&setup.grid)))?;
            Ok(StatePair { psi0, psi_d })
        }
        None => cached_states(setup, &cache_dir(out)),
    }
}

/// Reads a control set written by `optimize` (JSON).
pub fn read_controls(path: &Path) -> Result<ControlSet> {
    let text = fs::read(path)?;
    serde_json::from_slice(&text).map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })
}

fn write_snapshots(files: &RunFiles, snapshots: &[Snapshot]) -> Result<()> {
    for s in snapshots {
        write_slice(&files.stem(&format!("slice-y0-t{:.3}", s.time)), &s.y0, s.time)?;
        write_slice(&files.stem(&format!("slice-z0-t{:.3}", s.time)), &s.z0, s.time)?;
    }
    Ok(())
}

fn write_series(files: &RunFiles, name: &str, series: &ObservableSeries) -> Result<()> {
    series.write_csv(fs::File::create(files.path(name, "csv"))?)
}

fn control_inputs(controls: Option<&Path>) -> Result<Vec<(String, String)>> {
    Ok(match controls {
        Some(p) => vec![(p.display().to_string(), sha256_hex(&fs::read(p)?))],
        None => vec![],
    })
}

/// Propagates `ψ₀` under the given controls (linear ramps if `None`) plus the hold.
pub fn cmd_propagate(config: &RunConfig, out: &Path, controls: Option<&Path>, states: Option<(&Path, &Path)>) -> Result<(RunFiles, PropagationReport)> {
    let files = start_run("propagate", None, config, out, control_inputs(controls)?)?;
    let setup = Setup::new(config, &cache_dir(out))?;
    let pair = load_states(&setup, out, states)?;
    let set = match controls {
        Some(p) => read_controls(p)?,
        None => ControlSet::linear(config.endpoints(), config.solver.horizon_ms)?,
    };
    if (set.horizon - config.solver.horizon_ms).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("controls end at {} ms but the configured horizon is {} ms", set.horizon, config.solver.horizon_ms)));
    }
    let problem = problem_from(&setup, &pair)?;
    let norm = problem.normalization()?;
    let (report, snaps) = propagate_with_hold(&setup, &pair.psi0, &pair.psi_d, &set, &config.solver_config()?, Some(norm), &config.snapshot_times())?;
    write_series(&files, "series", &report.series)?;
    write_snapshots(&files, &snaps)?;
    set.write_csv(fs::File::create(files.path("controls", "csv"))?, 401)?;
    files.write_json("report", &report)?;
    Ok((files, report))
}

fn problem_from(setup: &Setup, pair: &StatePair) -> Result<ProblemSpec> {
    ProblemSpec::new(
        Arc::clone(&setup.propagator),
        pair.psi0.clone(),
        pair.psi_d.clone(),
        setup.config.solver.horizon_ms,
        setup.config.solver_config()?,
        setup.config.endpoints(),
        setup.config.bounds(),
    )
}

/// Builds the optimization problem for `config`, computing or loading states.
pub fn build_problem(config: &RunConfig, out: &Path, states: Option<(&Path, &Path)>) -> Result<(Setup, StatePair, ProblemSpec)> {
    let setup = Setup::new(config, &cache_dir(out))?;
    let pair = load_states(&setup, out, states)?;
    let problem = problem_from(&setup, &pair)?;
    Ok((setup, pair, problem))
}

/// Summary of an optimization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeSummary {
    pub mode: Mode,
    pub evaluations: usize,
    pub normalization: f64,
    pub cost: f64,
    pub normalized_cost: f64,
    pub level: usize,
    pub coefficients: Vec<f64>,
    pub stops: Vec<(usize, crate::optimizer::StopReason)>,
    pub seconds: f64,
}

/// Runs the optimizer in `mode` and writes history, controls and summary.
pub fn cmd_optimize(config: &RunConfig, out: &Path, mode: Mode, states: Option<(&Path, &Path)>) -> Result<(RunFiles, OptimizationResult)> {
    let files = start_run("optimize", Some(mode), config, out, vec![])?;
    let start = Instant::now();
    let (_, _, problem) = build_problem(config, out, states)?;
    let result = optimize(&problem, &config.optimizer_config(), mode)?;
    result.history.write_csv(fs::File::create(files.path("history", "csv"))?)?;
    files.write_json("history", &result.history)?;
    files.write_json("controls", &result.controls)?;
    result.controls.write_csv(fs::File::create(files.path("controls", "csv"))?, 401)?;
    let summary = OptimizeSummary {
        mode,
        evaluations: result.history.len(),
        normalization: result.history.normalization,
        cost: result.cost,
        normalized_cost: result.normalized_cost(),
        level: result.level,
        coefficients: result.coefficients.clone(),
        stops: result.stops.clone(),
        seconds: start.elapsed().as_secs_f64(),
    };
    files.write_json("summary", &summary)?;
    Ok((files, result))
}

/// Report of the perturbed rerun.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbReport {
    pub atoms: f64,
    pub noise_scale: [f64; 3],
    pub propagation: PropagationReport,
}

/// Reruns `controls` with perturbed endpoints, noise and a reduced atom number;
/// the target and normalization stay those of the unperturbed problem.
pub fn cmd_perturb(config: &RunConfig, out: &Path, controls: &Path, states: Option<(&Path, &Path)>) -> Result<(RunFiles, PerturbReport)> {
    let files = start_run("perturb", None, config, out, control_inputs(Some(controls))?)?;
    let (setup, pair, problem) = build_problem(config, out, states)?;
    let set = read_controls(controls)?;
    let report = perturbed_run(&setup, &pair, &problem, &set)?;
    write_series(&files, "series", &report.propagation.series)?;
    files.write_json("report", &report)?;
    Ok((files, report))
}

/// The perturbed experiment without file output.
pub fn perturbed_run(setup: &Setup, pair: &StatePair, problem: &ProblemSpec, set: &ControlSet) -> Result<PerturbReport> {
    let config = &setup.config;
    let p = &config.perturbation;
    let perturbed = perturb_controls(set, config.endpoint_factors(), p.noise_sigma, p.seed, config.solver.dt_ms)?;
    let atoms = p.atoms_fraction * config.species.atoms;
    let unperturbed = p.atoms_fraction == 1.0 && config.endpoint_factors() == crate::control::EndpointFactors::UNIT;
    let psi0 = if unperturbed { pair.psi0.clone() } else { setup.initial_state(&perturbed.base().endpoints, atoms)?.psi };
    let (propagation, _) = propagate_with_hold(setup, &psi0, &pair.psi_d, &perturbed, &config.solver_config()?, Some(problem.normalization()?), &[])?;
    Ok(PerturbReport { atoms, noise_scale: perturbed.noise_scale(), propagation })
}

/// One row of the kernel benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBenchRow {
    pub case: String,
    pub points: [usize; 3],
    pub lengths: [f64; 3],
    pub method: String,
    pub max_relative_error: f64,
    pub seconds: f64,
}

/// Truncated vs naive Poisson solves of Gaussian densities against the erf potential.
pub fn kernel_bench(cases: &[(&str, [f64; 3], f64, Vec<[usize; 3]>)]) -> Result<Vec<KernelBenchRow>> {
    let mut rows = Vec::new();
    for (name, lengths, sigma, grids) in cases {
        for &points in grids {
            let grid = Arc::new(Grid3D::new(*lengths, points)?);
            let rho = gaussian_density(*sigma, 1.0, [0.0; 3], Arc::clone(&grid));
            let exact = gaussian_reference_potential(*sigma, 1.0, [0.0; 3], Arc::clone(&grid))?;
            let t = Instant::now();
            let kernel = TruncatedKernelSpectrum::precompute(Arc::clone(&grid))?;
            let phi = free_space_poisson(&rho, &kernel)?;
            let row = |method: &str, err: f64, s: f64| KernelBenchRow { case: name.to_string(), points, lengths: *lengths, method: method.into(), max_relative_error: err, seconds: s };
            rows.push(row("truncated", max_relative_error(phi.values(), exact.values()), t.elapsed().as_secs_f64()));
            let t = Instant::now();
            let naive = free_space_poisson_naive(&rho)?;
            rows.push(row("naive", max_relative_error(naive.values(), exact.values()), t.elapsed().as_secs_f64()));
        }
    }
    Ok(rows)
}

/// The default benchmark: unit box (σ = 0.04) and the ζ = 2 box (σ = 1).
pub fn default_bench_cases(fine: bool) -> Vec<(&'static str, [f64; 3], f64, Vec<[usize; 3]>)> {
    let mut unit: Vec<[usize; 3]> = [16, 24, 32, 48, 64].iter().map(|&j| [j; 3]).collect();
    let mut tall = vec![[48, 48, 48], [64, 64, 96], [72, 72, 64]];
    if fine {
        unit.push([96; 3]);
        tall.push([144, 144, 128]);
    }
    vec![("unit", [1.0; 3], 0.04, unit), ("aspect-2", [12.0, 12.0, 24.0], 1.0, tall)]
}

pub fn cmd_kernel_bench(config: &RunConfig, out: &Path, fine: bool) -> Result<(RunFiles, Vec<KernelBenchRow>)> {
    let files = start_run("kernel-bench", None, config, out, vec![])?;
    let rows = kernel_bench(&default_bench_cases(fine))?;
    let mut w = csv::Writer::from_writer(fs::File::create(files.path("kernel-bench", "csv"))?);
    w.write_record(["case", "Jx", "Jy", "Jz", "Lx_um", "Ly_um", "Lz_um", "method", "max_rel_error", "seconds"])?;
    for r in &rows {
        w.write_record(&[
            r.case.clone(),
            r.points[0].to_string(),
            r.points[1].to_string(),
            r.points[2].to_string(),
            r.lengths[0].to_string(),
            r.lengths[1].to_string(),
            r.lengths[2].to_string(),
            r.method.clone(),
            format!("{:e}", r.max_relative_error),
            format!("{:.4}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok((files, rows))
}
