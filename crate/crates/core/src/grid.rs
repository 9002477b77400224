use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Angular DFT frequencies `2π j / L` in FFT ordering (`0, 1, …, n/2-1, -n/2, …, -1`).
pub fn fft_wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let signed = if j < n / 2 { j as isize } else { j as isize - n as isize };
            2.0 * PI * signed as f64 / length
        })
        .collect()
}

/// Uniform periodic discretization of the box `[-L/2, L/2)` along each axis.
///
/// Samples are stored x-major: the flat index of `(ix, iy, iz)` is
/// `(ix * ny + iy) * nz + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    lengths: [f64; 3],
    points: [usize; 3],
    spacing: [f64; 3],
    wavenumbers: [Vec<f64>; 3],
}

impl Grid3D {
    pub fn new(lengths: [f64; 3], points: [usize; 3]) -> Result<Self> {
        for (axis, (&l, &n)) in lengths.iter().zip(points.iter()).enumerate() {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::InvalidGrid(format!("side length along axis {axis} must be positive, got {l}")));
            }
            if n < 8 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("points along axis {axis} must be even and >= 8, got {n}")));
            }
        }
        let spacing = [0, 1, 2].map(|a| lengths[a] / points[a] as f64);
        let wavenumbers = [0, 1, 2].map(|a| fft_wavenumbers(points[a], lengths[a]));
        Ok(Self { lengths, points, spacing, wavenumbers })
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn points(&self) -> [usize; 3] {
        self.points
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Wavevector table of one axis in FFT ordering.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.wavenumbers[axis]
    }

    /// Coordinate `-L/2 + j·d` of sample `j` along `axis`.
    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        -0.5 * self.lengths[axis] + j as f64 * self.spacing[axis]
    }

    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|j| self.coordinate(axis, j)).collect()
    }

    /// Index of the sample closest to coordinate zero (exactly zero for even point counts).
    pub fn center_index(&self, axis: usize) -> usize {
        self.points[axis] / 2
    }

    /// `max(L) / min(L)`.
    pub fn aspect_ratio(&self) -> f64 {
        let max = self.lengths.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.lengths.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }

    /// Length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        self.lengths.iter().map(|l| l * l).sum::<f64>().sqrt()
    }

    #[inline]
    pub fn flat_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.points[1] + iy) * self.points[2] + iz
    }

    #[inline]
    pub fn unflatten(&self, idx: usize) -> (usize, usize, usize) {
        let nz = self.points[2];
        let ny = self.points[1];
        (idx / (ny * nz), (idx / nz) % ny, idx % nz)
    }

    /// Position of the sample with flat index `idx`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.unflatten(idx);
        [self.coordinate(0, ix), self.coordinate(1, iy), self.coordinate(2, iz)]
    }

    /// Evaluates `f(x, y, z)` at every sample.
    pub fn sample<T>(&self, mut f: impl FnMut(f64, f64, f64) -> T) -> Vec<T> {
        let [nx, ny, nz] = self.points;
        let mut out = Vec::with_capacity(self.len());
        for ix in 0..nx {
            let x = self.coordinate(0, ix);
            for iy in 0..ny {
                let y = self.coordinate(1, iy);
                for iz in 0..nz {
                    out.push(f(x, y, self.coordinate(2, iz)));
                }
            }
        }
        out
    }

    /// `|k|²` at every Fourier sample.
    pub fn k_squared(&self) -> Vec<f64> {
        let [kx, ky, kz] = [&self.wavenumbers[0], &self.wavenumbers[1], &self.wavenumbers[2]];
        let mut out = Vec::with_capacity(self.len());
        for &a in kx {
            for &b in ky {
                for &c in kz {
                    out.push(a * a + b * b + c * c);
                }
            }
        }
        out
    }

    pub fn same_as(&self, other: &Grid3D) -> bool {
        self.points == other.points && self.lengths == other.lengths
    }
}

/// Plain geometry description used by serialized sidecars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid3DRaw {
    pub lengths: [f64; 3],
    pub points: [usize; 3],
}

impl Grid3DRaw {
    pub fn build(self) -> Result<Grid3D> {
        Grid3D::new(self.lengths, self.points)
    }
}

impl From<&Grid3D> for Grid3DRaw {
    fn from(g: &Grid3D) -> Self {
        Self { lengths: g.lengths, points: g.points }
    }
}
