//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! The desk-scale study lines re-verify the artifacts under `results/desk`
//! (written by the `dropctl` CLI) by re-propagating the stored controls.
//! The full-scale smoke line runs only with `DROPCTL_FULL_SMOKE=1`, otherwise
//! it reads a stored report from `results/full-smoke` when one exists.
//! With `DROPCTL_ACCEPTANCE_STRICT=1` any FAIL makes the process exit non-zero.

mod common;

use common::AnisotropicGaussian;
use dropctl::bspline::{open_uniform_knots, BSplineCurve};
use dropctl::config::RunConfig;
use dropctl::control::*;
use dropctl::field::{gaussian_wavefunction, ComplexField};
use dropctl::grid::Grid3D;
use dropctl::io::read_field;
use dropctl::kernel::*;
use dropctl::model::ModelParams;
use dropctl::optimizer::*;
use dropctl::solver::{no_observer, ImaginaryTimeConfig, Propagator, SolverConfig};
use dropctl::units::SpeciesParams;
use dropctl::workflow::{perturbed_run, propagate_with_hold, OptimizeSummary, PropagationReport, Setup, StatePair};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime};

type Outcome = Result<(bool, String), String>;

struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn run(&mut self, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
            Ok(Ok((ok, d))) => (ok, d),
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        if ok {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }

    fn skip(&self, name: &str, why: &str) {
        println!("SKIP {name}: {why}");
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

const DY_MASS_U: f64 = 163.929_174_751;

fn non_dipolar(atoms: f64) -> ModelParams {
    ModelParams::new(SpeciesParams::from_lab_units(DY_MASS_U, 0.0, 0.0), atoms, PolarizationAxis::z()).unwrap()
}

fn propagator(points: [usize; 3], lengths: [f64; 3], model: ModelParams) -> Propagator {
    let grid = Arc::new(Grid3D::new(lengths, points).unwrap());
    Propagator::new(model, Arc::new(TruncatedKernelSpectrum::precompute(grid).unwrap()))
}

fn frozen(a_s: f64, f_rho: f64, f_z: f64) -> FrozenControls {
    FrozenControls(ControlValues { a_s_a0: a_s, omega_rho: 2.0 * PI * f_rho, omega_z: 2.0 * PI * f_z })
}

fn unit_box(j: usize) -> Arc<Grid3D> {
    Arc::new(Grid3D::new([1.0; 3], [j; 3]).unwrap())
}

fn poisson_error(grid: Arc<Grid3D>, sigma: f64, naive: bool, options: KernelOptions) -> f64 {
    let rho = gaussian_density(sigma, 1.0, [0.0; 3], Arc::clone(&grid));
    let phi = if naive {
        free_space_poisson_naive(&rho).unwrap()
    } else {
        free_space_poisson(&rho, &TruncatedKernelSpectrum::precompute_with(Arc::clone(&grid), options).unwrap()).unwrap()
    };
    let exact = gaussian_reference_potential(sigma, 1.0, [0.0; 3], grid).unwrap();
    max_relative_error(phi.values(), exact.values())
}

fn kernel_accuracy() -> Outcome {
    let start = Instant::now();
    let errs: Vec<f64> = [32, 48, 64].iter().map(|&j| poisson_error(unit_box(j), 0.04, false, KernelOptions::default())).collect();
    let secs = start.elapsed().as_secs_f64();
    let ok = errs[2] < 1e-9 && errs[1] / errs[0] < 1e-2 && secs < 30.0;
    Ok((ok, format!("err(32,48,64) = {:.2e}, {:.2e}, {:.2e}; ratio {:.2e}; {secs:.1}s", errs[0], errs[1], errs[2], errs[1] / errs[0])))
}

fn naive_order() -> Outcome {
    let pts: Vec<(f64, f64)> = [16usize, 32, 64].iter().map(|&j| ((j as f64).ln(), poisson_error(unit_box(j), 0.04, true, KernelOptions::default()).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    Ok(((slope + 2.0).abs() <= 0.3, format!("log-log slope {slope:.3}")))
}

fn elongated_box() -> Outcome {
    let start = Instant::now();
    let grid = Arc::new(Grid3D::new([12.0, 12.0, 24.0], [72, 72, 64]).map_err(e)?);
    let err = poisson_error(grid, 1.0, false, KernelOptions { oversampling: Some(4), ..Default::default() });
    let secs = start.elapsed().as_secs_f64();
    Ok((err < 1e-8 && secs < 60.0, format!("72x72x64, q = 4: err {err:.2e}; {secs:.1}s")))
}

fn dipolar_oracle() -> Outcome {
    let grid = unit_box(48);
    let kernel = Arc::new(TruncatedKernelSpectrum::precompute(Arc::clone(&grid)).map_err(e)?);
    let gauss = AnisotropicGaussian { sigma: [0.045, 0.05, 0.07] };
    let g_dd = 1.0;
    let axis = PolarizationAxis::z();
    let rho: Vec<f64> = grid.sample(|x, y, z| gauss.density([x, y, z]));
    let phi = DipolarOperator::new(Arc::clone(&kernel), axis, g_dd).potential_from_density(&rho);
    let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let peak = gauss.density([0.0; 3]);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut worst_heat, mut worst_sphere, mut count) = (0.0f64, 0.0f64, 0);
    while count < 20 {
        let idx = rng.gen_range(0..grid.len());
        if rho[idx] < 1e-3 * peak {
            continue;
        }
        count += 1;
        let x = grid.position(idx);
        worst_heat = worst_heat.max((phi[idx] - gauss.potential_heat(x, axis.components(), g_dd)).abs() / scale);
        worst_sphere = worst_sphere.max((phi[idx] - gauss.potential_spherical(x, axis.components(), g_dd, 96)).abs() / scale);
    }
    let iso = gaussian_density(0.05, 1.0, [0.0; 3], unit_box(64));
    let k64 = Arc::new(TruncatedKernelSpectrum::precompute(unit_box(64)).map_err(e)?);
    let phi_iso = DipolarOperator::new(k64, axis, g_dd).potential_from_density(iso.values());
    let c = unit_box(64).flat_index(32, 32, 32);
    let centre = phi_iso[c].abs() / (g_dd * iso.values()[c]);
    let ok = worst_heat < 1e-6 && worst_sphere < 1e-6 && centre < 1e-8;
    Ok((ok, format!("20 probes: heat-kernel {worst_heat:.2e}, spherical quadrature {worst_sphere:.2e}; |Φ(0)|/(g_dd ρ(0)) = {centre:.2e}")))
}

fn l2(a: &ComplexField, b: &ComplexField) -> f64 {
    (a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() * a.grid().cell_volume()).sqrt()
}

fn tssm() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut slowest: f64 = 0.0;

    // Free Gaussian against the closed-form spreading packet.
    let t0 = Instant::now();
    let p = propagator([40, 40, 40], [20.0; 3], non_dipolar(1.0));
    let s0 = [0.8, 0.9, 1.0];
    let psi0 = gaussian_wavefunction(Arc::clone(p.grid()), 1.0, s0, [0.0; 3]);
    let t = 1.0;
    let (psi, _) = p.propagate(&psi0, &frozen(0.0, 0.0, 0.0), 0.0, t, &SolverConfig::new(0.01, 100).unwrap(), &mut no_observer()).map_err(e)?;
    let spread = s0.map(|s| Complex64::new(1.0, p.model().hbar() * t / (2.0 * s * s)));
    let amp = (1.0 / ((2.0 * PI).powf(1.5) * s0.iter().product::<f64>())).sqrt();
    let exact = ComplexField::from_fn(Arc::clone(p.grid()), |x, y, z| {
        let r = [x, y, z];
        (0..3).fold(Complex64::new(amp, 0.0), |acc, a| acc * (-r[a] * r[a] / (4.0 * s0[a] * s0[a] * spread[a])).exp() / spread[a].sqrt())
    });
    let peak = exact.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let free = psi.values().iter().zip(exact.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / peak;
    ok &= free < 1e-8;
    notes.push(format!("free {free:.1e}"));
    slowest = slowest.max(t0.elapsed().as_secs_f64());

    // Displaced oscillator ground state over one period.
    let t0 = Instant::now();
    let p = propagator([64, 8, 8], [20.0, 8.0, 8.0], non_dipolar(1.0));
    let omega = p.model().omega_to_internal(2.0 * PI * 50.0);
    let s = (p.model().hbar() / omega).sqrt() / 2f64.sqrt();
    let x0 = 2.0;
    let psi0 = gaussian_wavefunction(Arc::clone(p.grid()), 1.0, [s; 3], [x0, 0.0, 0.0]);
    let steps = 50_000;
    let dt = 2.0 * PI / omega / steps as f64;
    let mut worst: f64 = 0.0;
    let mut obs = |t: f64, _: usize, psi: &ComplexField| {
        worst = worst.max((p.center_of_mass(psi)[0] - x0 * (omega * t).cos()).abs());
        Ok(())
    };
    p.propagate(&psi0, &frozen(0.0, 50.0, 50.0), 0.0, steps as f64 * dt, &SolverConfig { dt, record_stride: 500, boundary_warn_threshold: 1.0 }, &mut obs).map_err(e)?;
    ok &= worst / x0 < 1e-8;
    notes.push(format!("harmonic {:.1e}", worst / x0));
    slowest = slowest.max(t0.elapsed().as_secs_f64());

    // Norm drift and self-convergence on 48³.
    let t0 = Instant::now();
    let p = propagator([48, 48, 48], [8.0, 8.0, 16.0], ModelParams::dysprosium(1e4).unwrap());
    let lossless = p.with_model(p.model().without_loss());
    let psi0 = gaussian_wavefunction(Arc::clone(p.grid()), 1e4, [0.8, 0.8, 1.8], [0.0; 3]);
    let ramps = ControlSet::linear(ControlEndpoints::default(), 2.0).unwrap();
    let (psi, _) = lossless.propagate(&psi0, &ramps, 0.0, 2.0, &SolverConfig::new(0.005, 400).unwrap(), &mut no_observer()).map_err(e)?;
    let n0 = psi0.atom_number().map_err(e)?;
    let drift = (psi.atom_number().map_err(e)? - n0).abs() / n0;
    ok &= drift < 1e-11;
    notes.push(format!("norm drift {drift:.1e}"));
    slowest = slowest.max(t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let psi0 = gaussian_wavefunction(Arc::clone(p.grid()), 1e4, [0.7, 0.7, 1.6], [0.0; 3]);
    let controls = FrozenControls(ControlEndpoints::default().final_values());
    let run = |h: f64| p.propagate(&psi0, &controls, 0.0, 0.2, &SolverConfig::new(h, usize::MAX).unwrap(), &mut no_observer()).map(|r| r.0);
    let (a, b, c) = (run(0.01).map_err(e)?, run(0.005).map_err(e)?, run(0.0025).map_err(e)?);
    let ratio = l2(&a, &b) / l2(&b, &c);
    ok &= (ratio - 4.0).abs() <= 0.5;
    notes.push(format!("dt-halving ratio {ratio:.3}"));
    slowest = slowest.max(t0.elapsed().as_secs_f64());

    ok &= slowest < 120.0;
    notes.push(format!("slowest {slowest:.1}s"));
    Ok((ok, notes.join("; ")))
}

fn ground_states() -> Outcome {
    let p = propagator([32, 32, 32], [12.0; 3], non_dipolar(1.0));
    let sample = ControlSample::new(frozen(0.0, 50.0, 50.0).0, p.model());
    let init = gaussian_wavefunction(Arc::clone(p.grid()), 1.0, [0.7, 0.8, 0.9], [0.0; 3]);
    let gs = p.ground_state(&init, &sample, 1.0, &ImaginaryTimeConfig { dt: 0.01, tol: 1e-13, ..Default::default() }).map_err(e)?;
    let exact = 1.5 * p.model().hbar() * p.model().omega_to_internal(2.0 * PI * 50.0);
    let ho = (gs.energy / exact - 1.0).abs();

    let atoms = 1e4;
    let p = propagator([32, 32, 32], [8.0, 8.0, 16.0], ModelParams::dysprosium(atoms).unwrap());
    let controls = FrozenControls(ControlEndpoints::default().initial());
    let sample = ControlSample::new(controls.0, p.model());
    let tol = 1e-9;
    let config = ImaginaryTimeConfig { dt: 0.002, tol, ..Default::default() };
    let init = gaussian_wavefunction(Arc::clone(p.grid()), atoms, [1.0, 1.0, 2.0], [0.0; 3]);
    let gs = p.ground_state(&init, &sample, atoms, &config).map_err(e)?;
    let monotone = gs.energies.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12 * w[0].1.abs());
    let mut psi = gs.psi.clone();
    p.with_model(p.model().without_loss()).strang_step(&mut psi, 0.0, config.dt, &controls).map_err(e)?;
    let (r0, r1) = (gs.psi.density(), psi.density());
    let diff: f64 = r0.values().iter().zip(r1.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let residual = diff / r0.values().iter().map(|a| a * a).sum::<f64>().sqrt();
    let ok = ho < 1e-8 && monotone && residual < 10.0 * tol;
    Ok((ok, format!("(3/2)ħωN rel err {ho:.1e}; energy monotone: {monotone}; stationarity {residual:.1e} (< {:.0e})", 10.0 * tol)))
}

fn de_boor(knots: &[f64], coeffs: &[f64], t: f64) -> f64 {
    let p = 3;
    let mut k = p;
    while k + 1 < coeffs.len() && knots[k + 1] <= t {
        k += 1;
    }
    let mut d: Vec<f64> = (0..=p).map(|j| coeffs[j + k - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = j + k - p;
            let a = (t - knots[i]) / (knots[i + p + 1 - r] - knots[i]);
            d[j] = (1.0 - a) * d[j - 1] + a * d[j];
        }
    }
    d[p]
}

fn bspline_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut pou, mut support_ok, mut hull_ok, mut ends, mut refine, mut deboor) = (0.0f64, true, true, 0.0f64, 0.0f64, 0.0f64);
    for level in 1..=4 {
        let kv = open_uniform_knots(level, 2.0).map_err(e)?;
        let u = kv.knots().to_vec();
        let coeffs: Vec<f64> = (0..kv.basis_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let curve = BSplineCurve::new(kv.clone(), coeffs.clone()).map_err(e)?;
        let (lo, hi) = coeffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| (a.min(c), b.max(c)));
        for m in 0..1000 {
            let t = 2.0 * m as f64 / 999.0;
            let mut sum = 0.0;
            for k in 0..kv.basis_count() {
                let v = kv.basis_eval(k, t).map_err(e)?;
                support_ok &= v >= 0.0 && (v == 0.0 || (t >= u[k] && t <= u[k + 4]));
                sum += v;
            }
            pou = pou.max((sum - 1.0).abs());
            let v = curve.eval(t).map_err(e)?;
            hull_ok &= v >= lo - 1e-14 && v <= hi + 1e-14;
            deboor = deboor.max((v - de_boor(&u, &coeffs, t)).abs());
        }
        ends = ends.max((curve.eval(0.0).map_err(e)? - coeffs[0]).abs()).max((curve.eval(2.0).map_err(e)? - coeffs[coeffs.len() - 1]).abs());
        if level < 4 {
            let fine = curve.refine(&open_uniform_knots(level + 1, 2.0).map_err(e)?).map_err(e)?;
            for m in 0..1000 {
                let t = 2.0 * m as f64 / 999.0;
                refine = refine.max((fine.eval(t).map_err(e)? - curve.eval(t).map_err(e)?).abs());
            }
        }
    }
    let dims: Vec<usize> = (1..=4).map(|l| 3 * free_per_control(l)).collect();
    let ok = pou < 1e-14 && support_ok && hull_ok && ends < 1e-15 && refine < 1e-12 && deboor < 1e-13 && dims == [6, 9, 15, 27];
    Ok((ok, format!("unity {pou:.1e}, support {support_ok}, hull {hull_ok}, endpoints {ends:.1e}, refinement {refine:.1e}, de Boor {deboor:.1e}, dims {dims:?}")))
}

fn constraint_soundness() -> Outcome {
    let (bounds, endpoints) = (ControlBounds::default(), ControlEndpoints::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for trial in 0..10_000 {
        let level = 1 + trial % 4;
        let bx = coefficient_bounds(level, &bounds, &endpoints).map_err(e)?;
        let values = (0..bx.dim()).map(|i| rng.gen_range(bx.lower[i]..=bx.upper[i])).collect();
        let set = assemble_controls(&CoefficientVector::new(level, values).map_err(e)?, endpoints, 2.0).map_err(e)?;
        for m in 0..=200 {
            if bounds.violation(&set.values(0.01 * m as f64).map_err(e)?) > 1e-12 {
                violations += 1;
            }
        }
    }
    Ok((violations == 0, format!("{violations} violations in 10^4 vectors x 201 samples")))
}

fn optimizer_units() -> Outcome {
    let centre = [0.4, 1.7, -0.3, -2.5, 0.9];
    let bx = CoefficientBox { lower: vec![-1.0; 5], upper: vec![1.0; 5] };
    let expected = bx.project(&centre);
    let mut f = |x: &[f64]| Evaluation::ok(x.iter().zip(&centre).enumerate().map(|(i, (a, b))| (1.0 + i as f64) * (a - b).powi(2)).sum());
    let mut h = ConvergenceHistory::new(1.0);
    let config = OptimizerConfig { difference: DifferenceScheme::Central, fd_step: 1e-4, gradient_tolerance: 1e-10, ..Default::default() };
    let out = projected_quasi_newton(&mut Session::new(&mut f, &mut h, 1, 100_000), &[0.0; 5], &bx, Some(50), &config);
    let quad = out.x.iter().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let rosen = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
    let run = || {
        let mut f = |x: &[f64]| Evaluation::ok(rosen(x));
        let mut h = ConvergenceHistory::new(1.0);
        let bx = CoefficientBox { lower: vec![-2.0, -1.0], upper: vec![2.0, 3.0] };
        projected_quasi_newton(&mut Session::new(&mut f, &mut h, 1, 200), &[-1.2, 1.0], &bx, None, &OptimizerConfig { fd_step: 1e-7, initial_step: 0.5, ..Default::default() });
        h
    };
    let (h1, h2) = (run(), run());
    let best = h1.best().map(|r| r.cost).unwrap_or(f64::INFINITY);
    let same = h1.records.len() == h2.records.len() && h1.records.iter().zip(&h2.records).all(|(a, b)| a.cost.to_bits() == b.cost.to_bits() && a.coefficients == b.coefficients);
    let ok = quad < 1e-8 && best < 1e-6 && h1.len() <= 200 && same;
    Ok((ok, format!("quadratic {quad:.1e}; Rosenbrock {best:.1e} in {} evaluations; deterministic {same}", h1.len())))
}

fn results_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../results").join(name)
}

/// Newest file in `dir` whose name starts with `prefix` and ends with `suffix`.
fn newest(dir: &Path, prefix: &str, suffix: &str, filter: impl Fn(&Path) -> bool) -> Option<PathBuf> {
    let entries = fs::read_dir(dir).ok()?;
    entries
        .filter_map(|d| d.ok())
        .map(|d| d.path())
        .filter(|p| p.file_name().and_then(|n| n.to_str()).map_or(false, |n| n.starts_with(prefix) && n.ends_with(suffix)))
        .filter(|p| filter(p))
        .max_by_key(|p| fs::metadata(p).and_then(|m| m.modified()).unwrap_or(SystemTime::UNIX_EPOCH))
}

fn stem_of(json: &Path) -> PathBuf {
    json.with_extension("")
}

struct DeskRun {
    summary: OptimizeSummary,
    hash: String,
}

struct Desk {
    dir: PathBuf,
    setup: Setup,
    pair: StatePair,
    normalization: f64,
    runs: Vec<DeskRun>,
}

impl Desk {
    fn load() -> Result<Self, String> {
        let dir = results_dir("desk");
        let config = RunConfig::load(&dir.join("config.json")).map_err(e)?;
        let setup = Setup::new(&config, &dir.join("cache")).map_err(e)?;
        let p0 = newest(&dir, "psi0-", ".json", |_| true).ok_or("no stored initial state")?;
        let pd = newest(&dir, "psid-", ".json", |_| true).ok_or("no stored target state")?;
        let (psi0, _) = read_field(&stem_of(&p0), Some(Arc::clone(&setup.grid))).map_err(e)?;
        let (psi_d, _) = read_field(&stem_of(&pd), Some(Arc::clone(&setup.grid))).map_err(e)?;
        let mut runs = Vec::new();
        for mode in [Mode::Multilevel, Mode::DirectLevel4, Mode::SumOfSines] {
            let is_mode = |p: &Path| fs::read(p).ok().and_then(|b| serde_json::from_slice::<OptimizeSummary>(&b).ok()).map_or(false, |s| s.mode == mode);
            if let Some(path) = newest(&dir, "summary-", ".json", is_mode) {
                let summary: OptimizeSummary = serde_json::from_slice(&fs::read(&path).map_err(e)?).map_err(e)?;
                let name = path.file_name().unwrap().to_string_lossy().into_owned();
                runs.push(DeskRun { summary, hash: name.trim_start_matches("summary-").trim_end_matches(".json").to_string() });
            }
        }
        let pair = StatePair { psi0, psi_d };
        let problem = problem(&setup, &pair)?;
        let normalization = problem.normalization().map_err(e)?;
        Ok(Self { dir, setup, pair, normalization, runs })
    }

    fn run(&self, mode: Mode) -> Option<&DeskRun> {
        self.runs.iter().find(|r| r.summary.mode == mode)
    }

    fn history(&self, run: &DeskRun) -> Result<ConvergenceHistory, String> {
        let f = fs::File::open(self.dir.join(format!("history-{}.csv", run.hash))).map_err(e)?;
        ConvergenceHistory::read_csv(f, run.summary.normalization).map_err(e)
    }

    fn controls(&self, run: &DeskRun) -> Result<ControlSet, String> {
        serde_json::from_slice(&fs::read(self.dir.join(format!("controls-{}.json", run.hash))).map_err(e)?).map_err(e)
    }

    fn propagate(&self, controls: &ControlSet) -> Result<PropagationReport, String> {
        let solver = self.setup.config.solver_config().map_err(e)?;
        propagate_with_hold(&self.setup, &self.pair.psi0, &self.pair.psi_d, controls, &solver, Some(self.normalization), &[]).map(|r| r.0).map_err(e)
    }
}

fn problem(setup: &Setup, pair: &StatePair) -> Result<ProblemSpec, String> {
    let c = &setup.config;
    ProblemSpec::new(Arc::clone(&setup.propagator), pair.psi0.clone(), pair.psi_d.clone(), c.solver.horizon_ms, c.solver_config().map_err(e)?, c.endpoints(), c.bounds()).map_err(e)
}

fn desk_study(desk: &Desk, linear: &PropagationReport, optimized: Option<&PropagationReport>) -> Outcome {
    let ml = desk.run(Mode::Multilevel).ok_or("no multilevel run in results/desk")?;
    let optimized = optimized.ok_or("multilevel controls could not be propagated")?;
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) best-so-far ordering at equal budget.
    let h_ml = desk.history(ml)?;
    let part_a = match desk.run(Mode::DirectLevel4) {
        Some(d) => {
            let h_d = desk.history(d)?;
            let k = h_ml.len().min(h_d.len());
            let (a, b) = (h_ml.best_so_far_normalized().map_err(e)?[k - 1], h_d.best_so_far_normalized().map_err(e)?[k - 1]);
            notes.push(format!("(a) best-so-far at {k}: multilevel {a:.3e} vs direct {b:.3e}"));
            a <= b
        }
        None => {
            notes.push("(a) no direct level-4 run".into());
            false
        }
    };
    ok &= part_a;

    // (b) re-propagated multilevel cost, linear ramps at 1, ordering against sum-of-sines.
    let j_ml = optimized.normalized_cost.unwrap_or(f64::NAN);
    let j_lin = linear.normalized_cost.unwrap_or(f64::NAN);
    let reproduced = (optimized.cost - ml.summary.cost).abs() <= 1e-6 * ml.summary.cost.max(1e-300);
    let sines = desk.run(Mode::SumOfSines).map(|s| s.summary.normalized_cost);
    let part_b = j_ml <= 0.1 && (j_lin - 1.0).abs() < 1e-9 && reproduced && sines.map_or(false, |s| j_ml < s);
    notes.push(format!(
        "(b) multilevel {j_ml:.3e} (stored {:.3e}), linear {j_lin:.3}, sum-of-sines {}",
        ml.summary.normalized_cost,
        sines.map_or("missing".into(), |s| format!("{s:.3e}"))
    ));
    ok &= part_b;

    // (c) atom loss and post-T peak fluctuation.
    let part_c = optimized.atom_loss_fraction <= 0.02 && optimized.peak_fluctuation_after_horizon < 0.05 && linear.peak_fluctuation_after_horizon > 0.2;
    notes.push(format!(
        "(c) loss {:.2}%, fluctuation optimized {:.1}% / linear {:.1}%",
        100.0 * optimized.atom_loss_fraction,
        100.0 * optimized.peak_fluctuation_after_horizon,
        100.0 * linear.peak_fluctuation_after_horizon
    ));
    ok &= part_c;

    // (d) atoms inside Z right after T.
    let part_d = optimized.atoms_in_region_fraction >= 0.95 && linear.atoms_in_region_fraction <= 0.7;
    notes.push(format!("(d) in Z optimized {:.3} / linear {:.3}", optimized.atoms_in_region_fraction, linear.atoms_in_region_fraction));
    ok &= part_d;

    let flags = [part_a, part_b, part_c, part_d].map(|b| if b { "ok" } else { "fail" });
    Ok((ok, format!("{} [a {} b {} c {} d {}]", notes.join("; "), flags[0], flags[1], flags[2], flags[3])))
}

fn perturbation(desk: &Desk) -> Outcome {
    let ml = desk.run(Mode::Multilevel).ok_or("no multilevel run in results/desk")?;
    let controls = desk.controls(ml)?;
    let problem = problem(&desk.setup, &desk.pair)?;
    let r = perturbed_run(&desk.setup, &desk.pair, &problem, &controls).map_err(e)?;
    let j = r.propagation.normalized_cost.unwrap_or(f64::NAN);
    Ok((j < 0.2, format!("{} atoms, noise scale {:.3?}: normalized cost {j:.3e}", r.atoms, r.noise_scale)))
}

fn full_smoke() -> Option<Outcome> {
    if std::env::var("DROPCTL_FULL_SMOKE").as_deref() == Ok("1") {
        return Some(run_full_smoke());
    }
    let dir = results_dir("full-smoke");
    let path = newest(&dir, "report-", ".json", |_| true)?;
    Some((|| {
        let r: PropagationReport = serde_json::from_slice(&fs::read(&path).map_err(e)?).map_err(e)?;
        let ok = r.cost.is_finite() && r.atom_loss_fraction <= 0.02;
        Ok((ok, format!("stored report {}: loss {:.2}%, normalized cost {:.3e}, {:.0}s", path.display(), 100.0 * r.atom_loss_fraction, r.normalized_cost.unwrap_or(f64::NAN), r.seconds)))
    })())
}

fn run_full_smoke() -> Outcome {
    let desk = Desk::load()?;
    let ml = desk.run(Mode::Multilevel).ok_or("no multilevel run in results/desk")?;
    let controls = desk.controls(ml)?;
    let start = Instant::now();
    let config = RunConfig::default();
    let setup = Setup::new(&config, &results_dir("full-smoke").join("cache")).map_err(e)?;
    let psi0 = setup.initial_state(&config.endpoints(), config.species.atoms).map_err(e)?.psi;
    let solver = SolverConfig { record_stride: 400, ..config.solver_config().map_err(e)? };
    let (psi, traj) = setup.propagator.propagate(&psi0, &controls, 0.0, config.solver.horizon_ms, &solver, &mut no_observer()).map_err(e)?;
    let (n0, n1) = (psi0.atom_number().map_err(e)?, psi.atom_number().map_err(e)?);
    let loss = 1.0 - n1 / n0;
    let secs = start.elapsed().as_secs_f64();
    Ok((loss <= 0.02 && secs <= 1800.0, format!("72x72x64, {} steps: loss {:.2}%, {secs:.0}s", traj.step_count, 100.0 * loss)))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // `cargo test -- --list` and filters are not meaningful for this report.
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let mut r = Report { passed: 0, failed: 0 };
    r.run("kernel spectral accuracy", kernel_accuracy);
    r.run("naive kernel order", naive_order);
    r.run("aspect ratio 2", elongated_box);
    r.run("dipolar potential oracle", dipolar_oracle);
    r.run("TSSM order and unitarity", tssm);
    r.run("ground states", ground_states);
    r.run("B-spline suite", bspline_suite);
    r.run("constraint soundness", constraint_soundness);
    r.run("optimizer unit tests", optimizer_units);

    match Desk::load() {
        Ok(desk) => {
            let linear = desk.propagate(&ControlSet::linear(desk.setup.config.endpoints(), desk.setup.config.solver.horizon_ms).unwrap());
            let optimized = desk.run(Mode::Multilevel).map(|m| desk.controls(m).and_then(|c| desk.propagate(&c)));
            match linear {
                Ok(linear) => {
                    let opt = optimized.as_ref().and_then(|o| o.as_ref().ok());
                    r.run("desk-scale droplet study", || desk_study(&desk, &linear, opt));
                }
                Err(err) => r.run("desk-scale droplet study", || Err(err)),
            }
            r.run("perturbation robustness", || perturbation(&desk));
        }
        Err(err) => {
            r.run("desk-scale droplet study", || Err(format!("results/desk unavailable: {err}")));
            r.run("perturbation robustness", || Err(format!("results/desk unavailable: {err}")));
        }
    }
    match full_smoke() {
        Some(outcome) => r.run("full-scale smoke (optional)", || outcome),
        None => r.skip("full-scale smoke (optional)", "set DROPCTL_FULL_SMOKE=1 or store a report in results/full-smoke"),
    }
    println!("acceptance: {} passed, {} failed", r.passed, r.failed);
    if r.failed > 0 && std::env::var("DROPCTL_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
