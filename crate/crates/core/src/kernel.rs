//! Free-space Coulomb convolution and the dipolar interaction potential.
//!
//! The Newtonian kernel `1/(4π|r|)` is truncated at the box diagonal `L`.
//! Its Fourier transform `2 (sin(L|s|/2)/|s|)²` is entire, so sampling it on
//! a `q`-fold oversampled frequency grid and transforming back yields an
//! effective real-space kernel whose circular convolution on the doubled box
//! reproduces the free-space potential with spectral accuracy. That kernel is
//! cut down to the doubled box once and its spectrum is reused for every
//! subsequent solve.
//!
//! The dipolar potential follows from the distributional identity
//! `(1 - 3cos²θ)/r³ = -(4π/3) δ - ∂ₙₙ(1/r)`, giving
//! `Φ = -g_dd |ψ|² - 3 g_dd ∂ₙₙ φ` with `Δφ = -|ψ|²`.

use crate::error::{Error, Result};
use crate::fft::{Fft3, PaddedRealConvolver};
use crate::field::{ComplexField, RealField};
use crate::grid::{fft_wavenumbers, Grid3D};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::ops::Range;
use std::sync::Arc;

/// Aspect ratio up to which four-fold oversampling is sufficient.
pub const FOURFOLD_ASPECT_LIMIT: f64 = 2.75;
/// Largest supported aspect ratio (six-fold oversampling).
pub const SIXFOLD_ASPECT_LIMIT: f64 = 4.5;
/// Default ceiling on the precompute working set.
pub const DEFAULT_MEMORY_LIMIT: u64 = 4 << 30;
/// Boundary-to-peak density ratio above which the compact-support assumption is flagged.
pub const DEFAULT_BOUNDARY_THRESHOLD: f64 = 1e-10;

/// Unit polarization direction of the dipoles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationAxis([f64; 3]);

impl PolarizationAxis {
    /// Normalizes `v`; fails on a zero or non-finite vector.
    pub fn new(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument(format!("polarization {v:?} cannot be normalized")));
        }
        Ok(Self(v.map(|c| c / norm)))
    }

    pub fn z() -> Self {
        Self([0.0, 0.0, 1.0])
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }
}

/// Oversampling factor required for a box of the given aspect ratio.
pub fn oversampling_for(aspect_ratio: f64) -> Result<usize> {
    if aspect_ratio <= FOURFOLD_ASPECT_LIMIT {
        Ok(4)
    } else if aspect_ratio <= SIXFOLD_ASPECT_LIMIT {
        Ok(6)
    } else {
        Err(Error::UnsupportedAspectRatio(aspect_ratio))
    }
}

/// `û_L(s) = 2 (sin(L s / 2) / s)²` with its limit `L²/2` at `s = 0`.
pub fn truncated_kernel_hat(l_trunc: f64, s: f64) -> f64 {
    let x = 0.5 * l_trunc * s;
    if x.abs() < 1e-4 {
        // sin(x)/x = 1 - x²/6 + x⁴/120
        let sinc = 1.0 - x * x / 6.0 + x.powi(4) / 120.0;
        0.5 * l_trunc * l_trunc * sinc * sinc
    } else {
        2.0 * (x.sin() / s).powi(2)
    }
}

/// Bytes needed by [`TruncatedKernelSpectrum::precompute`] for `grid` at oversampling `q`.
pub fn precompute_memory_estimate(grid: &Grid3D, q: usize) -> u64 {
    let [nx, ny, nz] = grid.points().map(|n| n as u64);
    let q = q as u64;
    let oversampled = (q * nx) * (q * ny) * (q * nz / 2 + 1) * 16;
    let restricted = 8 * nx * ny * nz * (16 + 8);
    oversampled + restricted
}

/// Runtime Fourier multiplier of the truncated Newtonian kernel on the doubled box.
pub struct TruncatedKernelSpectrum {
    grid: Arc<Grid3D>,
    l_trunc: f64,
    oversampling: usize,
    /// Half spectrum `(2nx, 2ny, nz + 1)` of the real, even multiplier.
    half: Vec<f64>,
    convolver: PaddedRealConvolver,
}

impl std::fmt::Debug for TruncatedKernelSpectrum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TruncatedKernelSpectrum")
            .field("points", &self.grid.points())
            .field("lengths", &self.grid.lengths())
            .field("l_trunc", &self.l_trunc)
            .field("oversampling", &self.oversampling)
            .finish()
    }
}

/// Options for the kernel precompute.
#[derive(Debug, Clone, Copy)]
pub struct KernelOptions {
    /// Forces an oversampling factor instead of deriving it from the aspect ratio.
    pub oversampling: Option<usize>,
    pub memory_limit: u64,
}

impl Default for KernelOptions {
    fn default() -> Self {
        Self { oversampling: None, memory_limit: DEFAULT_MEMORY_LIMIT }
    }
}

/// Displacement index ranges `[0, n)` and `[m - n, m)` of a length-`m` periodic axis.
fn restricted_ranges(n: usize, m: usize) -> [Range<usize>; 2] {
    [0..n, m - n..m]
}

impl TruncatedKernelSpectrum {
    pub fn precompute(grid: Arc<Grid3D>) -> Result<Self> {
        Self::precompute_with(grid, KernelOptions::default())
    }

    pub fn precompute_with(grid: Arc<Grid3D>, options: KernelOptions) -> Result<Self> {
        let zeta = grid.aspect_ratio();
        let required = oversampling_for(zeta)?;
        let q = options.oversampling.unwrap_or(required);
        if q < 2 {
            return Err(Error::InvalidArgument(format!("oversampling factor {q} is too small")));
        }
        let needed = precompute_memory_estimate(&grid, q);
        if needed > options.memory_limit {
            return Err(Error::MemoryEstimate { needed_mib: needed >> 20, limit_mib: options.memory_limit >> 20 });
        }
        let l_trunc = grid.diagonal();
        let restricted = effective_kernel(&grid, q, l_trunc);
        let full = real_even_spectrum(&restricted, grid.points().map(|n| 2 * n));
        let convolver = PaddedRealConvolver::new(grid.points());
        let half = convolver.half_spectrum(&full);
        Ok(Self { grid, l_trunc, oversampling: q, half, convolver })
    }

    /// Rebuilds a spectrum from a stored full multiplier (see [`crate::io`]).
    pub fn from_full_multiplier(grid: Arc<Grid3D>, oversampling: usize, full: &[f64]) -> Result<Self> {
        let convolver = PaddedRealConvolver::new(grid.points());
        let expected: usize = convolver.padded_shape().iter().product();
        if full.len() != expected {
            return Err(Error::InvalidArgument(format!("multiplier has {} entries, expected {expected}", full.len())));
        }
        let half = convolver.half_spectrum(full);
        Ok(Self { l_trunc: grid.diagonal(), grid, oversampling, half, convolver })
    }

    pub fn grid(&self) -> &Arc<Grid3D> {
        &self.grid
    }

    pub fn truncation_radius(&self) -> f64 {
        self.l_trunc
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn padded_shape(&self) -> [usize; 3] {
        self.convolver.padded_shape()
    }

    pub fn half_multiplier(&self) -> &[f64] {
        &self.half
    }

    /// Multiplier at the zero frequency.
    pub fn zero_mode(&self) -> f64 {
        self.half[0]
    }

    /// Full multiplier of shape `(2nx, 2ny, 2nz)` in FFT ordering.
    pub fn full_multiplier(&self) -> Vec<f64> {
        let [p0, p1, p2] = self.convolver.padded_shape();
        let hz = p2 / 2 + 1;
        let mut out = vec![0.0; p0 * p1 * p2];
        for i0 in 0..p0 {
            for i1 in 0..p1 {
                for i2 in 0..p2 {
                    let v = if i2 < hz {
                        self.half[(i0 * p1 + i1) * hz + i2]
                    } else {
                        let (m0, m1, m2) = ((p0 - i0) % p0, (p1 - i1) % p1, p2 - i2);
                        self.half[(m0 * p1 + m1) * hz + m2]
                    };
                    out[(i0 * p1 + i1) * p2 + i2] = v;
                }
            }
        }
        out
    }

    /// Linear convolution of `rho` (on the kernel grid) with the truncated kernel.
    pub(crate) fn apply(&self, rho: &[f64], multiplier: &[f64]) -> Vec<f64> {
        self.convolver.convolve(rho, multiplier)
    }
}

/// Samples `û_L` on the oversampled frequency grid, transforms back and keeps
/// displacements `-(n-1)..=(n-1)` per axis on the doubled box.
fn effective_kernel(grid: &Grid3D, q: usize, l_trunc: f64) -> Vec<f64> {
    let n = grid.points();
    let lengths = grid.lengths();
    let over = n.map(|v| q * v);
    let hz = over[2] / 2 + 1;
    let s: [Vec<f64>; 3] = [0, 1, 2].map(|a| fft_wavenumbers(over[a], q as f64 * lengths[a]));
    let mut spec = vec![Complex64::default(); over[0] * over[1] * hz];
    for i0 in 0..over[0] {
        let s0 = s[0][i0] * s[0][i0];
        for i1 in 0..over[1] {
            let s01 = s0 + s[1][i1] * s[1][i1];
            let base = (i0 * over[1] + i1) * hz;
            for i2 in 0..hz {
                // Along z the half spectrum holds non-negative frequencies only.
                let sz = s[2][i2].abs();
                spec[base + i2] = Complex64::new(truncated_kernel_hat(l_trunc, (s01 + sz * sz).sqrt()), 0.0);
            }
        }
    }

    let mut planner = FftPlanner::new();
    let inv_x = planner.plan_fft_inverse(over[0]);
    let inv_y = planner.plan_fft_inverse(over[1]);
    let shape = [over[0], over[1], hz];
    let (mut buf, mut scratch) = (Vec::new(), Vec::new());
    crate::fft::transform_axis(&mut spec, shape, 0, &*inv_x, [0..over[0], 0..over[1], 0..hz], &mut buf, &mut scratch);
    for r0 in restricted_ranges(n[0], over[0]) {
        crate::fft::transform_axis(&mut spec, shape, 1, &*inv_y, [r0, 0..over[1], 0..hz], &mut buf, &mut scratch);
    }

    let mut real_planner = realfft::RealFftPlanner::<f64>::new();
    let c2r = real_planner.plan_fft_inverse(over[2]);
    let mut line = c2r.make_input_vec();
    let mut out = c2r.make_output_vec();
    let mut rscratch = c2r.make_scratch_vec();
    let scale = 1.0 / (over[0] * over[1] * over[2]) as f64;

    let padded = n.map(|v| 2 * v);
    let mut restricted = vec![0.0; padded.iter().product()];
    // Signed displacement d in -(n-1)..=(n-1) maps to oversampled index d mod (q n)
    // and to doubled-box index d mod 2n; d = -n is left at zero to keep the kernel even.
    let to_padded = |i: usize, a: usize| -> Option<usize> {
        if i < n[a] {
            Some(i)
        } else if i > over[a] - n[a] {
            Some(i + padded[a] - over[a])
        } else {
            None
        }
    };
    for i0 in (0..n[0]).chain(over[0] - n[0] + 1..over[0]) {
        let p0 = to_padded(i0, 0).unwrap();
        for i1 in (0..n[1]).chain(over[1] - n[1] + 1..over[1]) {
            let p1 = to_padded(i1, 1).unwrap();
            let src = (i0 * over[1] + i1) * hz;
            line.copy_from_slice(&spec[src..src + hz]);
            line[0].im = 0.0;
            line[hz - 1].im = 0.0;
            c2r.process_with_scratch(&mut line, &mut out, &mut rscratch).expect("inverse real transform");
            for i2 in (0..n[2]).chain(over[2] - n[2] + 1..over[2]) {
                let p2 = to_padded(i2, 2).unwrap();
                restricted[(p0 * padded[1] + p1) * padded[2] + p2] = out[i2] * scale;
            }
        }
    }
    restricted
}

/// Forward transform of a real, even array; returns the (real) spectrum.
fn real_even_spectrum(data: &[f64], shape: [usize; 3]) -> Vec<f64> {
    let mut spec: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Fft3::new(shape).forward(&mut spec);
    spec.into_iter().map(|c| c.re).collect()
}

/// Largest boundary density relative to the peak density.
pub fn boundary_density_ratio(rho: &RealField) -> f64 {
    let g = rho.grid();
    let [nx, ny, nz] = g.points();
    let v = rho.values();
    let peak = rho.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    let mut edge = 0.0f64;
    for ix in 0..nx {
        for iy in 0..ny {
            let on_xy_face = ix == 0 || ix == nx - 1 || iy == 0 || iy == ny - 1;
            if on_xy_face {
                for iz in 0..nz {
                    edge = edge.max(v[g.flat_index(ix, iy, iz)].abs());
                }
            } else {
                edge = edge.max(v[g.flat_index(ix, iy, 0)].abs()).max(v[g.flat_index(ix, iy, nz - 1)].abs());
            }
        }
    }
    edge / peak
}

fn warn_boundary(rho: &RealField, threshold: f64) {
    let ratio = boundary_density_ratio(rho);
    if ratio > threshold {
        log::warn!("density at the box boundary is {ratio:.3e} of the peak; free-space results may be contaminated");
    }
}

/// Solves `Δφ = -ρ` in free space: pad, transform, multiply, invert, crop.
pub fn free_space_poisson(rho: &RealField, kernel: &TruncatedKernelSpectrum) -> Result<RealField> {
    if !rho.grid().same_as(kernel.grid()) {
        return Err(Error::GridMismatch);
    }
    warn_boundary(rho, DEFAULT_BOUNDARY_THRESHOLD);
    let phi = kernel.apply(rho.values(), kernel.half_multiplier());
    RealField::from_vec(Arc::clone(rho.grid()), phi)
}

/// How the second directional derivative of `φ` is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DerivativeRoute {
    /// `-(n·k)²` folded into the doubled-box multiplier, acting on the smooth density.
    #[default]
    Padded,
    /// `-(n·k)²` applied to the cropped `φ` with two extra transforms on the
    /// computational grid. `φ` is not periodic on the box, so this route
    /// carries boundary-induced errors; kept for comparison.
    Cropped,
}

/// Evaluator of the dipolar potential for a fixed grid, axis and coupling.
pub struct DipolarOperator {
    kernel: Arc<TruncatedKernelSpectrum>,
    axis: PolarizationAxis,
    g_dd: f64,
    route: DerivativeRoute,
    /// Half-spectrum multiplier of `∂ₙₙ` composed with the truncated kernel.
    nn_multiplier: Vec<f64>,
    /// `-(n·k)²` on the computational grid, for the cropped route.
    nn_symbol: Vec<f64>,
    fft: Fft3,
}

impl std::fmt::Debug for DipolarOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DipolarOperator").field("axis", &self.axis).field("g_dd", &self.g_dd).field("route", &self.route).finish()
    }
}

/// `-(n·k)²` on a grid of `shape` and box `lengths`, restricted to `z < z_len`.
fn nn_symbol(shape: [usize; 3], lengths: [f64; 3], z_len: usize, n: [f64; 3]) -> Vec<f64> {
    let k: [Vec<f64>; 3] = [0, 1, 2].map(|a| fft_wavenumbers(shape[a], lengths[a]));
    let mut out = Vec::with_capacity(shape[0] * shape[1] * z_len);
    for &a in &k[0] {
        for &b in &k[1] {
            for i2 in 0..z_len {
                // The half spectrum stores the positive z frequencies, including +Nyquist.
                let c = if z_len == shape[2] { k[2][i2] } else { k[2][i2].abs() };
                let nk = n[0] * a + n[1] * b + n[2] * c;
                out.push(-nk * nk);
            }
        }
    }
    out
}

impl DipolarOperator {
    pub fn new(kernel: Arc<TruncatedKernelSpectrum>, axis: PolarizationAxis, g_dd: f64) -> Self {
        Self::with_route(kernel, axis, g_dd, DerivativeRoute::default())
    }

    pub fn with_route(kernel: Arc<TruncatedKernelSpectrum>, axis: PolarizationAxis, g_dd: f64, route: DerivativeRoute) -> Self {
        let grid = Arc::clone(kernel.grid());
        let padded = kernel.padded_shape();
        let padded_lengths = grid.lengths().map(|l| 2.0 * l);
        let symbol = nn_symbol(padded, padded_lengths, padded[2] / 2 + 1, axis.components());
        let nn_multiplier = symbol.iter().zip(kernel.half_multiplier()).map(|(s, m)| s * m).collect();
        let nn_symbol = match route {
            DerivativeRoute::Cropped => nn_symbol(grid.points(), grid.lengths(), grid.points()[2], axis.components()),
            DerivativeRoute::Padded => Vec::new(),
        };
        let fft = Fft3::new(grid.points());
        Self { kernel, axis, g_dd, route, nn_multiplier, nn_symbol, fft }
    }

    pub fn kernel(&self) -> &Arc<TruncatedKernelSpectrum> {
        &self.kernel
    }

    pub fn axis(&self) -> PolarizationAxis {
        self.axis
    }

    pub fn g_dd(&self) -> f64 {
        self.g_dd
    }

    pub fn route(&self) -> DerivativeRoute {
        self.route
    }

    /// `∂ₙₙ φ` for the density `rho` (flat samples on the kernel grid).
    pub fn second_derivative(&self, rho: &[f64]) -> Vec<f64> {
        match self.route {
            DerivativeRoute::Padded => self.kernel.apply(rho, &self.nn_multiplier),
            DerivativeRoute::Cropped => {
                let phi = self.kernel.apply(rho, self.kernel.half_multiplier());
                let mut spec: Vec<Complex64> = phi.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                self.fft.forward(&mut spec);
                spec.iter_mut().zip(&self.nn_symbol).for_each(|(s, m)| *s *= m);
                self.fft.inverse(&mut spec);
                spec.into_iter().map(|c| c.re).collect()
            }
        }
    }

    /// `Φ = -g_dd ρ - 3 g_dd ∂ₙₙ φ` from a density.
    pub fn potential_from_density(&self, rho: &[f64]) -> Vec<f64> {
        let dnn = self.second_derivative(rho);
        rho.iter().zip(dnn).map(|(r, d)| -self.g_dd * r - 3.0 * self.g_dd * d).collect()
    }

    pub fn potential(&self, psi: &ComplexField) -> Result<RealField> {
        if !psi.grid().same_as(self.kernel.grid()) {
            return Err(Error::GridMismatch);
        }
        let rho = psi.density();
        warn_boundary(&rho, DEFAULT_BOUNDARY_THRESHOLD);
        RealField::from_vec(Arc::clone(psi.grid()), self.potential_from_density(rho.values()))
    }
}

/// One-shot dipolar potential; builds a [`DipolarOperator`] internally.
pub fn dipolar_potential(
    psi: &ComplexField,
    kernel: &Arc<TruncatedKernelSpectrum>,
    axis: PolarizationAxis,
    g_dd: f64,
) -> Result<RealField> {
    DipolarOperator::new(Arc::clone(kernel), axis, g_dd).potential(psi)
}

/// Second-order reference evaluator: the singular kernel sampled on the
/// doubled box with its value at the origin set to zero.
pub struct NaiveKernel {
    grid: Arc<Grid3D>,
    half: Vec<f64>,
    convolver: PaddedRealConvolver,
}

impl NaiveKernel {
    fn build(grid: Arc<Grid3D>, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let n = grid.points();
        let d = grid.spacing();
        let padded = n.map(|v| 2 * v);
        let signed = |i: usize, m: usize| if i < m / 2 { i as f64 } else { i as f64 - m as f64 };
        let mut samples = vec![0.0; padded.iter().product()];
        for i0 in 0..padded[0] {
            for i1 in 0..padded[1] {
                for i2 in 0..padded[2] {
                    if i0 == n[0] || i1 == n[1] || i2 == n[2] || (i0, i1, i2) == (0, 0, 0) {
                        continue;
                    }
                    let (x, y, z) = (signed(i0, padded[0]) * d[0], signed(i1, padded[1]) * d[1], signed(i2, padded[2]) * d[2]);
                    samples[(i0 * padded[1] + i1) * padded[2] + i2] = f(x, y, z) * grid.cell_volume();
                }
            }
        }
        let full = real_even_spectrum(&samples, padded);
        let convolver = PaddedRealConvolver::new(n);
        let half = convolver.half_spectrum(&full);
        Self { grid, half, convolver }
    }

    /// `1/(4π|r|)` with the origin dropped.
    pub fn poisson(grid: Arc<Grid3D>) -> Self {
        Self::build(grid, |x, y, z| 1.0 / (4.0 * PI * (x * x + y * y + z * z).sqrt()))
    }

    /// `(1 - 3cos²θ)/r³` with the origin dropped.
    pub fn dipolar(grid: Arc<Grid3D>, axis: PolarizationAxis) -> Self {
        let n = axis.components();
        Self::build(grid, move |x, y, z| {
            let r2 = x * x + y * y + z * z;
            let c = (n[0] * x + n[1] * y + n[2] * z).powi(2) / r2;
            (1.0 - 3.0 * c) / (r2 * r2.sqrt())
        })
    }

    pub fn convolve(&self, rho: &RealField) -> Result<RealField> {
        if !rho.grid().same_as(&self.grid) {
            return Err(Error::GridMismatch);
        }
        RealField::from_vec(Arc::clone(rho.grid()), self.convolver.convolve(rho.values(), &self.half))
    }
}

/// Free-space Poisson solve with the naive kernel.
pub fn free_space_poisson_naive(rho: &RealField) -> Result<RealField> {
    NaiveKernel::poisson(Arc::clone(rho.grid())).convolve(rho)
}

/// Dipolar potential by direct convolution with the sampled singular kernel.
pub fn dipolar_potential_naive(psi: &ComplexField, axis: PolarizationAxis, g_dd: f64) -> Result<RealField> {
    let rho = psi.density();
    let conv = NaiveKernel::dipolar(Arc::clone(psi.grid()), axis).convolve(&rho)?;
    // μ0 μ² / (4π) = 3 g_dd / (4π)
    Ok(conv.map(|v| 3.0 * g_dd / (4.0 * PI) * v))
}

/// Potential `M erf(r/(√2σ)) / (4πr)` of an isotropic Gaussian of mass `M`.
pub fn gaussian_reference_potential(sigma: f64, mass: f64, center: [f64; 3], grid: Arc<Grid3D>) -> Result<RealField> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    Ok(RealField::from_fn(grid, |x, y, z| {
        let r = ((x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2)).sqrt();
        gaussian_potential_radial(sigma, mass, r)
    }))
}

/// Radial profile of [`gaussian_reference_potential`].
pub fn gaussian_potential_radial(sigma: f64, mass: f64, r: f64) -> f64 {
    let x = r / (std::f64::consts::SQRT_2 * sigma);
    if x < 1e-6 {
        // erf(x)/x → 2/√π (1 - x²/3)
        mass / (4.0 * PI) * (2.0 / PI).sqrt() / sigma * (1.0 - x * x / 3.0)
    } else {
        mass * libm::erf(x) / (4.0 * PI * r)
    }
}

/// Density of an isotropic Gaussian of mass `M`.
pub fn gaussian_density(sigma: f64, mass: f64, center: [f64; 3], grid: Arc<Grid3D>) -> RealField {
    let norm = mass / ((2.0 * PI).powf(1.5) * sigma.powi(3));
    RealField::from_fn(grid, |x, y, z| {
        let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2);
        norm * (-0.5 * r2 / (sigma * sigma)).exp()
    })
}

/// `max |a - b| / max |b|`.
pub fn max_relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = approx.iter().zip(exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    err / scale
}
