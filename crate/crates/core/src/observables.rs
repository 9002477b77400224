//! Diagnostics of a condensate state: peak density, atom counts, slices and overlaps.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::solver::Observer;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Maximum of `|ψ|²` over the grid.
pub fn peak_density(psi: &ComplexField) -> f64 {
    psi.values().iter().fold(0.0f64, |m, v| m.max(v.norm_sqr()))
}

/// Cylinder `√(x²+y²) ≤ radius`, `|z| ≤ half_length` about the z axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CylinderRegion {
    pub radius: f64,
    pub half_length: f64,
}

impl Default for CylinderRegion {
    fn default() -> Self {
        Self { radius: 0.75, half_length: 7.5 }
    }
}

impl CylinderRegion {
    pub fn new(radius: f64, half_length: f64) -> Result<Self> {
        if !(radius > 0.0) || !(half_length > 0.0) {
            return Err(Error::InvalidArgument("cylinder radius and half-length must be positive".into()));
        }
        Ok(Self { radius, half_length })
    }

    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        x * x + y * y <= self.radius * self.radius && z.abs() <= self.half_length
    }
}

/// Atoms inside `region` (sharp indicator, whole cells).
pub fn atoms_in_region(psi: &ComplexField, region: &CylinderRegion) -> Result<f64> {
    let g = psi.grid();
    let [lx, ly, lz] = g.lengths();
    if region.radius > 0.5 * lx.min(ly) || region.half_length > 0.5 * lz {
        return Err(Error::InvalidArgument(format!(
            "cylinder (r = {}, h = {}) exceeds the computational box {:?}",
            region.radius,
            region.half_length,
            g.lengths()
        )));
    }
    let sum: f64 = psi
        .values()
        .iter()
        .enumerate()
        .filter(|(idx, _)| {
            let [x, y, z] = g.position(*idx);
            region.contains(x, y, z)
        })
        .map(|(_, v)| v.norm_sqr())
        .sum();
    Ok(sum * g.cell_volume())
}

/// Coordinate plane through the sample nearest the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlicePlane {
    /// `y = 0`, an x-z image.
    Y0,
    /// `z = 0`, an x-y image.
    Z0,
}

/// Density on a coordinate plane, row-major over `(first axis, second axis)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySlice {
    pub plane: SlicePlane,
    /// Grid axes spanning the image, e.g. `[0, 2]` for `y = 0`.
    pub axes: [usize; 2],
    pub shape: [usize; 2],
    /// Coordinate of the first sample and spacing along each image axis.
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    /// Index of the plane along the normal axis and its coordinate.
    pub plane_index: usize,
    pub plane_coordinate: f64,
    pub values: Vec<f64>,
}

pub fn density_slice(psi: &ComplexField, plane: SlicePlane) -> DensitySlice {
    let g = psi.grid();
    let (axes, normal) = match plane {
        SlicePlane::Y0 => ([0, 2], 1),
        SlicePlane::Z0 => ([0, 1], 2),
    };
    let j = g.center_index(normal);
    let p = g.points();
    let mut values = Vec::with_capacity(p[axes[0]] * p[axes[1]]);
    for a in 0..p[axes[0]] {
        for b in 0..p[axes[1]] {
            let idx = match plane {
                SlicePlane::Y0 => g.flat_index(a, j, b),
                SlicePlane::Z0 => g.flat_index(a, b, j),
            };
            values.push(psi.values()[idx].norm_sqr());
        }
    }
    DensitySlice {
        plane,
        axes,
        shape: [p[axes[0]], p[axes[1]]],
        origin: [g.coordinate(axes[0], 0), g.coordinate(axes[1], 0)],
        spacing: [g.spacing()[axes[0]], g.spacing()[axes[1]]],
        plane_index: j,
        plane_coordinate: g.coordinate(normal, j),
        values,
    }
}

impl DensitySlice {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.shape[1] + b]
    }

    /// Extent along each image axis of the region where the density exceeds half its maximum.
    pub fn half_max_extent(&self) -> [f64; 2] {
        let max = self.values.iter().cloned().fold(0.0, f64::max);
        let mut lo = [usize::MAX; 2];
        let mut hi = [0usize; 2];
        for a in 0..self.shape[0] {
            for b in 0..self.shape[1] {
                if self.at(a, b) >= 0.5 * max {
                    lo = [lo[0].min(a), lo[1].min(b)];
                    hi = [hi[0].max(a), hi[1].max(b)];
                }
            }
        }
        [0, 1].map(|i| (hi[i] + 1 - lo[i]) as f64 * self.spacing[i])
    }
}

/// `|⟨ψ_d, ψ⟩|`.
pub fn overlap_with_target(psi: &ComplexField, target: &ComplexField) -> Result<f64> {
    Ok(target.inner_product(psi)?.norm())
}

/// Time series of the standard diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub peak_density: Vec<f64>,
    pub atoms_total: Vec<f64>,
    pub atoms_in_region: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, psi: &ComplexField, region: &CylinderRegion) -> Result<()> {
        self.times.push(t);
        self.peak_density.push(peak_density(psi));
        self.atoms_total.push(psi.atom_number()?);
        self.atoms_in_region.push(atoms_in_region(psi, region)?);
        Ok(())
    }

    /// Appends another series (e.g. a post-horizon hold), skipping a duplicated first time.
    pub fn extend(&mut self, other: &ObservableSeries) {
        let skip = match (self.times.last(), other.times.first()) {
            (Some(a), Some(b)) if (a - b).abs() < 1e-12 => 1,
            _ => 0,
        };
        self.times.extend_from_slice(&other.times[skip..]);
        self.peak_density.extend_from_slice(&other.peak_density[skip..]);
        self.atoms_total.extend_from_slice(&other.atoms_total[skip..]);
        self.atoms_in_region.extend_from_slice(&other.atoms_in_region[skip..]);
    }

    /// `(max - min) / mean` of the peak density for `t ≥ from`.
    pub fn peak_fluctuation_after(&self, from: f64) -> f64 {
        let v: Vec<f64> = self.times.iter().zip(&self.peak_density).filter(|(t, _)| **t >= from - 1e-12).map(|(_, p)| *p).collect();
        if v.is_empty() {
            return 0.0;
        }
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (max - min) / mean
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_ms", "peak_density_um3", "atoms_total", "atoms_in_Z"])?;
        for i in 0..self.len() {
            w.write_record(&[
                format!("{}", self.times[i]),
                format!("{}", self.peak_density[i]),
                format!("{}", self.atoms_total[i]),
                format!("{}", self.atoms_in_region[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut s = Self::default();
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| Error::InvalidArgument("short observable row".into()))?
                    .parse()
                    .map_err(|e| Error::InvalidArgument(format!("bad number in observable row: {e}")))
            };
            s.times.push(f(0)?);
            s.peak_density.push(f(1)?);
            s.atoms_total.push(f(2)?);
            s.atoms_in_region.push(f(3)?);
        }
        Ok(s)
    }
}

/// Observer filling an [`ObservableSeries`].
#[derive(Debug, Clone, Default)]
pub struct SeriesRecorder {
    pub region: CylinderRegion,
    pub series: ObservableSeries,
}

impl SeriesRecorder {
    pub fn new(region: CylinderRegion) -> Self {
        Self { region, series: ObservableSeries::default() }
    }
}

impl Observer for SeriesRecorder {
    fn observe(&mut self, t: f64, _step: usize, psi: &ComplexField) -> Result<()> {
        self.series.push(t, psi, &self.region)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gaussian_wavefunction;
    use crate::grid::Grid3D;
    use num_complex::Complex64;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn grid() -> Arc<Grid3D> {
        Arc::new(Grid3D::new([6.0, 6.0, 16.0], [32, 32, 64]).unwrap())
    }

    #[test]
    fn peak_of_gaussian() {
        let s = [0.5, 0.6, 1.2];
        let psi = gaussian_wavefunction(grid(), 1e4, s, [0.0; 3]);
        let expected = 1e4 / ((2.0 * PI).powf(1.5) * s[0] * s[1] * s[2]);
        assert!((peak_density(&psi) - expected).abs() < 1e-12 * expected);
        assert_eq!(peak_density(&ComplexField::zeros(grid())), 0.0);
        let mut twice = psi.clone();
        twice.scale(Complex64::new(2.0, 0.0));
        assert!((peak_density(&twice) - 4.0 * expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn region_counts() {
        let psi = gaussian_wavefunction(grid(), 1e4, [0.15, 0.15, 1.0], [0.0; 3]);
        let n = psi.atom_number().unwrap();
        let inside = atoms_in_region(&psi, &CylinderRegion::default()).unwrap();
        assert!(inside >= 0.999 * n && inside <= n);
        let everything = CylinderRegion::new(3.0, 8.0).unwrap();
        let off = gaussian_wavefunction(grid(), 1e4, [0.15, 0.15, 0.5], [2.0, 0.0, 0.0]);
        assert!(atoms_in_region(&off, &CylinderRegion::default()).unwrap() < 1e-9);
        let all = atoms_in_region(&off, &everything).unwrap();
        assert!(all <= off.atom_number().unwrap());
        assert!(atoms_in_region(&psi, &CylinderRegion::new(3.5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn slices() {
        let psi = gaussian_wavefunction(grid(), 1e4, [0.5, 0.5, 1.5], [0.0; 3]);
        let s = density_slice(&psi, SlicePlane::Y0);
        assert_eq!(s.shape, [32, 64]);
        assert_eq!(s.plane_coordinate, 0.0);
        // x → -x maps index a to 32 - a.
        for a in 1..32 {
            for b in 0..64 {
                assert!((s.at(a, b) - s.at(32 - a, b)).abs() <= 1e-12 * s.at(16, 32));
            }
        }
        let ext = s.half_max_extent();
        assert!(ext[1] / ext[0] > 2.0);
        let z = density_slice(&psi, SlicePlane::Z0);
        assert_eq!(z.shape, [32, 32]);
        assert_eq!(z.axes, [0, 1]);
    }

    #[test]
    fn overlaps() {
        let a = gaussian_wavefunction(grid(), 1e4, [0.5, 0.5, 1.5], [0.0; 3]);
        let n = a.atom_number().unwrap();
        assert!((overlap_with_target(&a, &a).unwrap() - n).abs() < 1e-12 * n);
        let odd = ComplexField::from_fn(grid(), |x, y, z| Complex64::new(z * (-(x * x + y * y + z * z)).exp(), 0.0));
        assert!(overlap_with_target(&odd, &a).unwrap() < 1e-9);
        let base = overlap_with_target(&a, &odd.map(|v| v + Complex64::new(0.0, 1e-3))).unwrap();
        for theta in [0.1, 0.7, 2.0, 3.1, -1.2] {
            let mut r = a.clone();
            r.scale(Complex64::from_polar(1.0, theta));
            let o = overlap_with_target(&r, &odd.map(|v| v + Complex64::new(0.0, 1e-3))).unwrap();
            assert!((o - base).abs() <= 1e-12 * base.max(1e-300));
        }
    }

    #[test]
    fn series_csv_round_trip() {
        let psi = gaussian_wavefunction(grid(), 1e4, [0.5, 0.5, 1.5], [0.0; 3]);
        let mut s = ObservableSeries::default();
        s.push(0.0, &psi, &CylinderRegion::default()).unwrap();
        s.push(0.125, &psi, &CylinderRegion::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().starts_with("t_ms,peak_density_um3,atoms_total,atoms_in_Z"));
        assert_eq!(ObservableSeries::read_csv(&buf[..]).unwrap(), s);
        assert_eq!(s.peak_fluctuation_after(0.0), 0.0);
    }
}
