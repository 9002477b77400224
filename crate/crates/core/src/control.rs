//! Time-dependent control inputs: scattering length and the two trap frequencies.
//!
//! Each physical control `v(t)` is written as `v_i + (v_f - v_i) u(t)` with a
//! normalized shape `u` that runs from 0 to 1. Shapes are cubic B-splines on
//! an open uniform ladder (the optimized parameterization) or a ramp plus a
//! sine series (the baseline).

use crate::bspline::{open_uniform_knots, open_uniform_knots_extended, BSplineCurve, KnotVector, STANDARD_LEVELS};
use crate::error::{Error, Result};
use crate::model::{Couplings, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// Number of physical controls.
pub const CONTROLS: usize = 3;

fn hz(f: f64) -> f64 {
    2.0 * PI * f
}

/// Initial and final values of the three controls. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlEndpoints {
    pub a_s_initial_a0: f64,
    pub a_s_final_a0: f64,
    pub omega_rho_initial: f64,
    pub omega_rho_final: f64,
    pub omega_z_initial: f64,
    pub omega_z_final: f64,
}

impl Default for ControlEndpoints {
    fn default() -> Self {
        Self {
            a_s_initial_a0: 130.0,
            a_s_final_a0: 80.0,
            omega_rho_initial: hz(70.0),
            omega_rho_final: 0.0,
            omega_z_initial: hz(52.5),
            omega_z_final: 0.0,
        }
    }
}

impl ControlEndpoints {
    pub fn initial(&self) -> ControlValues {
        ControlValues { a_s_a0: self.a_s_initial_a0, omega_rho: self.omega_rho_initial, omega_z: self.omega_z_initial }
    }

    pub fn final_values(&self) -> ControlValues {
        ControlValues { a_s_a0: self.a_s_final_a0, omega_rho: self.omega_rho_final, omega_z: self.omega_z_final }
    }

    fn pair(&self, i: usize) -> (f64, f64) {
        (self.initial().as_array()[i], self.final_values().as_array()[i])
    }

    /// Physical value of control `i` for normalized shape value `u`.
    pub fn physical(&self, i: usize, u: f64) -> f64 {
        let (a, b) = self.pair(i);
        a + (b - a) * u
    }

    /// Inverse of [`ControlEndpoints::physical`].
    pub fn normalized(&self, i: usize, v: f64) -> f64 {
        let (a, b) = self.pair(i);
        (v - a) / (b - a)
    }
}

/// Box limits of the physical controls, frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub a_s_lower_a0: f64,
    pub a_s_upper_a0: f64,
    pub omega_rho_lower: f64,
    pub omega_rho_upper: f64,
    pub omega_z_lower: f64,
    pub omega_z_upper: f64,
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            a_s_lower_a0: 80.0,
            a_s_upper_a0: 130.0,
            omega_rho_lower: 0.0,
            omega_rho_upper: hz(318.3),
            omega_z_lower: 0.0,
            omega_z_upper: hz(318.3),
        }
    }
}

impl ControlBounds {
    pub fn lower(&self) -> [f64; 3] {
        [self.a_s_lower_a0, self.omega_rho_lower, self.omega_z_lower]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.a_s_upper_a0, self.omega_rho_upper, self.omega_z_upper]
    }

    /// Largest violation of the bounds by `v`, zero when inside, relative to the bound width.
    pub fn violation(&self, v: &ControlValues) -> f64 {
        let (lo, hi) = (self.lower(), self.upper());
        v.as_array()
            .iter()
            .enumerate()
            .map(|(i, &x)| ((lo[i] - x).max(x - hi[i]).max(0.0)) / (hi[i] - lo[i]))
            .fold(0.0, f64::max)
    }
}

/// Physical control values at one instant; frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlValues {
    pub a_s_a0: f64,
    pub omega_rho: f64,
    pub omega_z: f64,
}

impl ControlValues {
    pub fn as_array(&self) -> [f64; 3] {
        [self.a_s_a0, self.omega_rho, self.omega_z]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self { a_s_a0: v[0], omega_rho: v[1], omega_z: v[2] }
    }
}

/// Everything the Hamiltonian needs at one instant, internal units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub values: ControlValues,
    /// Radial trap frequency in rad/ms.
    pub omega_rho: f64,
    /// Axial trap frequency in rad/ms.
    pub omega_z: f64,
    pub couplings: Couplings,
}

impl ControlSample {
    pub fn new(values: ControlValues, model: &ModelParams) -> Self {
        Self {
            values,
            omega_rho: model.omega_to_internal(values.omega_rho),
            omega_z: model.omega_to_internal(values.omega_z),
            couplings: model.couplings_bohr(values.a_s_a0),
        }
    }
}

/// A time-dependent source of physical control values.
pub trait ControlSource {
    /// End of the controlled interval in ms; values are frozen afterwards.
    fn horizon(&self) -> f64;

    /// Control values at `t` ms. Negative times are an error.
    fn values(&self, t: f64) -> Result<ControlValues>;

    fn sample(&self, t: f64, model: &ModelParams) -> Result<ControlSample> {
        Ok(ControlSample::new(self.values(t)?, model))
    }
}

/// Controls held at fixed values forever.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenControls(pub ControlValues);

impl ControlSource for FrozenControls {
    fn horizon(&self) -> f64 {
        0.0
    }

    fn values(&self, t: f64) -> Result<ControlValues> {
        if t < 0.0 {
            return Err(Error::OutsideHorizon { t, horizon: 0.0 });
        }
        Ok(self.0)
    }
}

/// Shapes `u₁, u₂, u₃` of the three controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Parameterization {
    BSpline { curves: Vec<BSplineCurve> },
    /// `u(t) = t/T + Σ_k c_k sin(kπt/T)`.
    SumOfSines { coeffs: Vec<Vec<f64>> },
}

/// Three control shapes with their endpoints over `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSet {
    pub shape: Parameterization,
    pub endpoints: ControlEndpoints,
    /// Horizon `T` in ms.
    pub horizon: f64,
}

impl ControlSet {
    /// Normalized shape values at `t`, with `t > T` frozen at 1.
    pub fn normalized(&self, t: f64) -> Result<[f64; 3]> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::OutsideHorizon { t, horizon: self.horizon });
        }
        if t >= self.horizon {
            return Ok([1.0; 3]);
        }
        let mut u = [0.0; 3];
        match &self.shape {
            Parameterization::BSpline { curves } => {
                for (ui, c) in u.iter_mut().zip(curves) {
                    *ui = c.eval(t)?;
                }
            }
            Parameterization::SumOfSines { coeffs } => {
                let s = t / self.horizon;
                for (ui, c) in u.iter_mut().zip(coeffs) {
                    *ui = s + c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * PI * s).sin()).sum::<f64>();
                }
            }
        }
        Ok(u)
    }

    /// Exact linear ramps between the endpoints.
    pub fn linear(endpoints: ControlEndpoints, horizon: f64) -> Result<Self> {
        sum_of_sines_controls(&[vec![], vec![], vec![]], endpoints, horizon)
    }

    /// The B-spline curves, if this is a B-spline parameterization.
    pub fn curves(&self) -> Option<&[BSplineCurve]> {
        match &self.shape {
            Parameterization::BSpline { curves } => Some(curves),
            Parameterization::SumOfSines { .. } => None,
        }
    }

    /// Same shapes with different endpoints.
    pub fn with_endpoints(&self, endpoints: ControlEndpoints) -> Self {
        Self { endpoints, ..self.clone() }
    }

    /// Writes `t_ms, a_s_a0, f_rho_hz, f_z_hz` rows at `samples + 1` equally spaced times.
    pub fn write_csv<W: Write>(&self, out: W, samples: usize) -> Result<()> {
        write_controls_csv(self, out, samples)
    }
}

impl ControlSource for ControlSet {
    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn values(&self, t: f64) -> Result<ControlValues> {
        let u = self.normalized(t)?;
        Ok(ControlValues::from_array([0, 1, 2].map(|i| self.endpoints.physical(i, u[i]))))
    }
}

/// Writes a control trajectory as CSV with frequencies in Hz.
pub fn write_controls_csv<W: Write>(source: &dyn ControlSource, out: W, samples: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "a_s_a0", "f_rho_hz", "f_z_hz"])?;
    let horizon = source.horizon();
    for j in 0..=samples.max(1) {
        let t = horizon * j as f64 / samples.max(1) as f64;
        let v = source.values(t)?;
        w.write_record(&[
            format!("{t}"),
            format!("{}", v.a_s_a0),
            format!("{}", v.omega_rho / (2.0 * PI)),
            format!("{}", v.omega_z / (2.0 * PI)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Free interior coefficients of the three shapes, control-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    level: usize,
    values: Vec<f64>,
}

/// Free coefficients per control at ladder `level`.
pub fn free_per_control(level: usize) -> usize {
    (1usize << (level - 1)) + 1
}

fn ladder_knots(level: usize, horizon: f64) -> Result<KnotVector> {
    if level > STANDARD_LEVELS {
        open_uniform_knots_extended(level, horizon)
    } else {
        open_uniform_knots(level, horizon)
    }
}

impl CoefficientVector {
    pub fn new(level: usize, values: Vec<f64>) -> Result<Self> {
        if level == 0 || level > 20 {
            return Err(Error::InvalidArgument(format!("ladder level {level} out of range")));
        }
        let expected = CONTROLS * free_per_control(level);
        if values.len() != expected {
            return Err(Error::LengthMismatch { expected, got: values.len() });
        }
        Ok(Self { level, values })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Coefficients whose shapes are the linear ramps `t/T` (Greville abscissae over `T`).
    pub fn linear_ramps(level: usize) -> Result<Self> {
        let kv = ladder_knots(level, 1.0)?;
        let g = kv.greville_points();
        let interior = &g[1..g.len() - 1];
        let values = (0..CONTROLS).flat_map(|_| interior.iter().copied()).collect();
        Self::new(level, values)
    }

    /// Free coefficients of control `i`.
    pub fn control(&self, i: usize) -> &[f64] {
        let f = free_per_control(self.level);
        &self.values[i * f..(i + 1) * f]
    }
}

/// Builds the B-spline control set: each shape gets coefficient 0 prepended and 1 appended.
pub fn assemble_controls(c: &CoefficientVector, endpoints: ControlEndpoints, horizon: f64) -> Result<ControlSet> {
    let kv = ladder_knots(c.level(), horizon)?;
    let curves = (0..CONTROLS)
        .map(|i| {
            let mut coeffs = Vec::with_capacity(kv.basis_count());
            coeffs.push(0.0);
            coeffs.extend_from_slice(c.control(i));
            coeffs.push(1.0);
            BSplineCurve::new(kv.clone(), coeffs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ControlSet { shape: Parameterization::BSpline { curves }, endpoints, horizon })
}

/// Re-expresses a B-spline control set on `level` and returns its free coefficients.
pub fn refine_coefficients(set: &ControlSet, level: usize) -> Result<CoefficientVector> {
    let curves = set.curves().ok_or_else(|| Error::InvalidArgument("only B-spline controls can be refined".into()))?;
    let target = ladder_knots(level, set.horizon)?;
    let mut values = Vec::new();
    for c in curves {
        let fine = c.refine(&target)?;
        let k = fine.coeffs();
        debug_assert!(k[0].abs() < 1e-12 && (k[k.len() - 1] - 1.0).abs() < 1e-12);
        values.extend_from_slice(&k[1..k.len() - 1]);
    }
    CoefficientVector::new(level, values)
}

/// Per-coefficient box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CoefficientBox {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.iter().zip(&self.lower).zip(&self.upper).all(|((x, l), u)| *x >= *l && *x <= *u)
    }

    pub fn project(&self, c: &[f64]) -> Vec<f64> {
        c.iter().zip(&self.lower).zip(&self.upper).map(|((x, l), u)| x.clamp(*l, *u)).collect()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }
}

/// Normalized-shape intervals `[u_lb, u_ub]` of the three controls.
pub fn shape_bounds(bounds: &ControlBounds, endpoints: &ControlEndpoints) -> Result<[(f64, f64); 3]> {
    let (lo, hi) = (bounds.lower(), bounds.upper());
    let (ini, fin) = (endpoints.initial().as_array(), endpoints.final_values().as_array());
    let mut out = [(0.0, 0.0); 3];
    for i in 0..CONTROLS {
        if !(lo[i] <= hi[i]) {
            return Err(Error::InvalidArgument(format!("control {i}: lower bound exceeds upper bound")));
        }
        for v in [ini[i], fin[i]] {
            if v < lo[i] || v > hi[i] {
                return Err(Error::InvalidArgument(format!("control {i}: endpoint {v} outside bounds [{}, {}]", lo[i], hi[i])));
            }
        }
        if ini[i] == fin[i] {
            return Err(Error::InvalidArgument(format!("control {i}: equal endpoints make the shape map singular")));
        }
        let a = endpoints.normalized(i, lo[i]);
        let b = endpoints.normalized(i, hi[i]);
        out[i] = (a.min(b), a.max(b));
    }
    Ok(out)
}

/// Coefficient box at `level` guaranteeing in-bound trajectories through the convex hull property.
pub fn coefficient_bounds(level: usize, bounds: &ControlBounds, endpoints: &ControlEndpoints) -> Result<CoefficientBox> {
    let shape = shape_bounds(bounds, endpoints)?;
    let f = free_per_control(level);
    let lower = shape.iter().flat_map(|(l, _)| std::iter::repeat(*l).take(f)).collect();
    let upper = shape.iter().flat_map(|(_, u)| std::iter::repeat(*u).take(f)).collect();
    Ok(CoefficientBox { lower, upper })
}

/// Baseline `u(t) = t/T + Σ_k c_k sin(kπt/T)` per control.
pub fn sum_of_sines_controls(coeffs: &[Vec<f64>], endpoints: ControlEndpoints, horizon: f64) -> Result<ControlSet> {
    if coeffs.len() != CONTROLS {
        return Err(Error::LengthMismatch { expected: CONTROLS, got: coeffs.len() });
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(ControlSet { shape: Parameterization::SumOfSines { coeffs: coeffs.to_vec() }, endpoints, horizon })
}

/// Splits a flat `3K` vector into per-control sine coefficients.
pub fn split_sine_coefficients(flat: &[f64]) -> Result<Vec<Vec<f64>>> {
    if flat.len() % CONTROLS != 0 {
        return Err(Error::InvalidArgument(format!("{} sine coefficients do not split over three controls", flat.len())));
    }
    Ok(flat.chunks(flat.len() / CONTROLS).map(|c| c.to_vec()).collect())
}

/// Systematic endpoint scale factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointFactors {
    pub a_s_initial: f64,
    pub a_s_final: f64,
    pub omega_rho_initial: f64,
    pub omega_z_initial: f64,
}

impl EndpointFactors {
    pub const UNIT: Self = Self { a_s_initial: 1.0, a_s_final: 1.0, omega_rho_initial: 1.0, omega_z_initial: 1.0 };

    /// `(1.03, 0.97, 1.03, 0.97)`.
    pub const ROBUSTNESS_STUDY: Self = Self { a_s_initial: 1.03, a_s_final: 0.97, omega_rho_initial: 1.03, omega_z_initial: 0.97 };

    pub fn apply(&self, e: &ControlEndpoints) -> ControlEndpoints {
        ControlEndpoints {
            a_s_initial_a0: e.a_s_initial_a0 * self.a_s_initial,
            a_s_final_a0: e.a_s_final_a0 * self.a_s_final,
            omega_rho_initial: e.omega_rho_initial * self.omega_rho_initial,
            omega_z_initial: e.omega_z_initial * self.omega_z_initial,
            ..*e
        }
    }
}

/// Controls with perturbed endpoints and piecewise-constant Gaussian noise.
///
/// One draw per control and time step, scaled by `σ` times the largest
/// absolute value the perturbed control takes on `[0, T]`. Noise stops at `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedControls {
    base: ControlSet,
    step: f64,
    noise: Vec<[f64; 3]>,
    scale: [f64; 3],
}

/// Dense samples used to find the control maxima.
const MAXIMUM_SAMPLES: usize = 4000;

pub fn perturb_controls(set: &ControlSet, factors: EndpointFactors, sigma: f64, seed: u64, step: f64) -> Result<PerturbedControls> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {sigma}")));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("noise step must be positive, got {step}")));
    }
    let base = set.with_endpoints(factors.apply(&set.endpoints));
    let mut maxima = [0.0f64; 3];
    for j in 0..=MAXIMUM_SAMPLES {
        let v = base.values(base.horizon * j as f64 / MAXIMUM_SAMPLES as f64)?.as_array();
        for i in 0..CONTROLS {
            maxima[i] = maxima[i].max(v[i].abs());
        }
    }
    let steps = (base.horizon / step).ceil() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (0..steps)
        .map(|_| {
            let mut d = [0.0; 3];
            for v in d.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = z;
            }
            d
        })
        .collect();
    Ok(PerturbedControls { base, step, noise, scale: maxima.map(|m| sigma * m) })
}

impl PerturbedControls {
    pub fn base(&self) -> &ControlSet {
        &self.base
    }

    /// Noise amplitude per control.
    pub fn noise_scale(&self) -> [f64; 3] {
        self.scale
    }
}

impl ControlSource for PerturbedControls {
    fn horizon(&self) -> f64 {
        self.base.horizon
    }

    fn values(&self, t: f64) -> Result<ControlValues> {
        let v = self.base.values(t)?;
        if t >= self.base.horizon {
            return Ok(v);
        }
        let idx = ((t / self.step) + 1e-9).floor() as usize;
        let d = self.noise[idx.min(self.noise.len() - 1)];
        let mut out = v.as_array();
        for i in 0..CONTROLS {
            out[i] += self.scale[i] * d[i];
        }
        Ok(ControlValues::from_array(out))
    }
}
