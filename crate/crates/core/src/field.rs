use crate::error::{Error, Result};
use crate::grid::Grid3D;
use num_complex::Complex64;
use std::sync::Arc;

/// Samples of a scalar quantity on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Arc<Grid3D>,
    values: Vec<T>,
}

/// Condensate wave function, in units of √atoms per internal volume.
pub type ComplexField = Field<Complex64>;
pub type RealField = Field<f64>;

impl<T: Clone + Default> Field<T> {
    pub fn zeros(grid: Arc<Grid3D>) -> Self {
        let values = vec![T::default(); grid.len()];
        Self { grid, values }
    }
}

impl<T> Field<T> {
    pub fn from_vec(grid: Arc<Grid3D>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid3D>, f: impl FnMut(f64, f64, f64) -> T) -> Self {
        let values = grid.sample(f);
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid3D> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Field<U> {
        Field { grid: Arc::clone(&self.grid), values: self.values.iter().map(f).collect() }
    }

    pub(crate) fn check_same_grid<U>(&self, other: &Field<U>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

impl ComplexField {
    /// `|ψ|²` at every sample.
    pub fn density(&self) -> RealField {
        self.map(|v| v.norm_sqr())
    }

    /// Atom number `Σ|ψ|² dV` (plain Riemann sum).
    pub fn atom_number(&self) -> Result<f64> {
        let n = self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume();
        if n.is_finite() {
            Ok(n)
        } else {
            Err(Error::NumericFault { stage: "atom_number" })
        }
    }

    /// `Σ conj(a)·b dV`.
    pub fn inner_product(&self, other: &ComplexField) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let acc: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum();
        Ok(acc * self.grid.cell_volume())
    }

    /// Rescales to the requested atom number.
    pub fn normalized_to(&self, target: f64) -> Result<ComplexField> {
        let mut out = self.clone();
        out.normalize_to(target)?;
        Ok(out)
    }

    /// In-place variant of [`ComplexField::normalized_to`].
    pub fn normalize_to(&mut self, target: f64) -> Result<()> {
        if !(target > 0.0) {
            return Err(Error::InvalidArgument(format!("target atom number must be positive, got {target}")));
        }
        let n = self.atom_number()?;
        if n <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let scale = (target / n).sqrt();
        self.values.iter_mut().for_each(|v| *v *= scale);
        Ok(())
    }

    pub fn scale(&mut self, s: Complex64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl RealField {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Normalized 3D Gaussian wave function `ψ = sqrt(N ρ_G)` centred at `center`
/// with per-axis density widths `sigma`.
pub fn gaussian_wavefunction(grid: Arc<Grid3D>, atoms: f64, sigma: [f64; 3], center: [f64; 3]) -> ComplexField {
    let norm = atoms / ((2.0 * std::f64::consts::PI).powf(1.5) * sigma[0] * sigma[1] * sigma[2]);
    Field::from_fn(grid, |x, y, z| {
        let e = ((x - center[0]) / sigma[0]).powi(2) + ((y - center[1]) / sigma[1]).powi(2) + ((z - center[2]) / sigma[2]).powi(2);
        Complex64::new((norm * (-0.5 * e).exp()).sqrt(), 0.0)
    })
}
