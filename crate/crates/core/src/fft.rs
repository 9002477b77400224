//! Three-dimensional FFTs on x-major arrays.
//!
//! Convention: forward transforms are unnormalized, inverse transforms carry
//! the `1/N` factor. The zero-padded real convolution skips every 1D
//! transform whose input line is known to be zero and every output line that
//! is cropped away afterwards.

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};
use std::ops::Range;
use std::sync::Arc;

/// Lines gathered per batch when transforming along a strided axis.
const BATCH: usize = 16;

/// Applies `plan` along `axis` of an array with `shape`, restricted to index
/// ranges `ranges` on the two other axes.
pub(crate) fn transform_axis(
    data: &mut [Complex64],
    shape: [usize; 3],
    axis: usize,
    plan: &dyn Fft<f64>,
    ranges: [Range<usize>; 3],
    buf: &mut Vec<Complex64>,
    scratch: &mut Vec<Complex64>,
) {
    let [_, n1, n2] = shape;
    let n = shape[axis];
    let scratch_len = plan.get_inplace_scratch_len();
    if scratch.len() < scratch_len {
        scratch.resize(scratch_len, Complex64::default());
    }
    match axis {
        2 => {
            let r1 = ranges[1].clone();
            for i0 in ranges[0].clone() {
                let start = (i0 * n1 + r1.start) * n2;
                let end = (i0 * n1 + r1.end) * n2;
                if end > start {
                    plan.process_with_scratch(&mut data[start..end], &mut scratch[..scratch_len]);
                }
            }
        }
        1 | 0 => {
            // Stride between consecutive samples of a line, and the set of
            // (outer, inner) starting offsets to visit.
            let (stride, outer, inner_rows): (usize, Range<usize>, Range<usize>) = if axis == 1 {
                (n2, ranges[0].clone(), 0..1)
            } else {
                (n1 * n2, 0..1, ranges[1].clone())
            };
            let cols = ranges[2].clone();
            buf.resize(BATCH * n, Complex64::default());
            for o in outer {
                for row in inner_rows.clone() {
                    let base = if axis == 1 { o * n1 * n2 } else { row * n2 };
                    let mut c = cols.start;
                    while c < cols.end {
                        let width = BATCH.min(cols.end - c);
                        for i in 0..n {
                            let src = base + i * stride + c;
                            for b in 0..width {
                                buf[b * n + i] = data[src + b];
                            }
                        }
                        plan.process_with_scratch(&mut buf[..width * n], &mut scratch[..scratch_len]);
                        for i in 0..n {
                            let dst = base + i * stride + c;
                            for b in 0..width {
                                data[dst + b] = buf[b * n + i];
                            }
                        }
                        c += width;
                    }
                }
            }
        }
        _ => unreachable!("axis out of range"),
    }
}

/// Full complex 3D transform of a fixed shape.
pub struct Fft3 {
    shape: [usize; 3],
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("shape", &self.shape).finish()
    }
}

impl Fft3 {
    pub fn new(shape: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = shape.map(|n| planner.plan_fft_forward(n));
        let inverse = shape.map(|n| planner.plan_fft_inverse(n));
        Self { shape, forward, inverse }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let (mut buf, mut scratch) = (Vec::new(), Vec::new());
        let full = self.shape.map(|n| 0..n);
        for axis in [2, 1, 0] {
            transform_axis(data, self.shape, axis, &*self.forward[axis], full.clone(), &mut buf, &mut scratch);
        }
    }

    /// Inverse transform including the `1/N` factor, in place.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        let (mut buf, mut scratch) = (Vec::new(), Vec::new());
        let full = self.shape.map(|n| 0..n);
        for axis in [0, 1, 2] {
            transform_axis(data, self.shape, axis, &*self.inverse[axis], full.clone(), &mut buf, &mut scratch);
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Real linear convolution of an `n`-shaped array against a kernel given by
/// its spectrum on the `2n` periodic box, with zero padding and cropping
/// folded into pruned real transforms.
pub struct PaddedRealConvolver {
    small: [usize; 3],
    padded: [usize; 3],
    /// Length of the half spectrum along z.
    half_z: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    forward: [Arc<dyn Fft<f64>>; 2],
    inverse: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for PaddedRealConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PaddedRealConvolver").field("small", &self.small).finish()
    }
}

impl PaddedRealConvolver {
    pub fn new(small: [usize; 3]) -> Self {
        let padded = small.map(|n| 2 * n);
        let mut real_planner = RealFftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(padded[2]);
        let c2r = real_planner.plan_fft_inverse(padded[2]);
        let mut planner = FftPlanner::new();
        let forward = [planner.plan_fft_forward(padded[0]), planner.plan_fft_forward(padded[1])];
        let inverse = [planner.plan_fft_inverse(padded[0]), planner.plan_fft_inverse(padded[1])];
        Self { small, padded, half_z: padded[2] / 2 + 1, r2c, c2r, forward, inverse }
    }

    pub fn small_shape(&self) -> [usize; 3] {
        self.small
    }

    pub fn padded_shape(&self) -> [usize; 3] {
        self.padded
    }

    /// Shape of the half spectrum `(2nx, 2ny, nz + 1)`.
    pub fn half_spectrum_shape(&self) -> [usize; 3] {
        [self.padded[0], self.padded[1], self.half_z]
    }

    /// Reduces a full real multiplier of the padded shape to its half spectrum.
    pub fn half_spectrum(&self, full: &[f64]) -> Vec<f64> {
        let [p0, p1, p2] = self.padded;
        assert_eq!(full.len(), p0 * p1 * p2);
        let mut out = Vec::with_capacity(p0 * p1 * self.half_z);
        for i0 in 0..p0 {
            for i1 in 0..p1 {
                let base = (i0 * p1 + i1) * p2;
                out.extend_from_slice(&full[base..base + self.half_z]);
            }
        }
        out
    }

    /// Unnormalized forward transform of the zero-padded input, returned as a half spectrum.
    pub fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        let [n0, n1, n2] = self.small;
        let [p0, p1, p2] = self.padded;
        let hz = self.half_z;
        assert_eq!(input.len(), n0 * n1 * n2);
        let shape = [p0, p1, hz];
        let mut spec = vec![Complex64::default(); p0 * p1 * hz];
        let mut line = self.r2c.make_input_vec();
        let mut out = self.r2c.make_output_vec();
        let mut rscratch = self.r2c.make_scratch_vec();
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let src = (i0 * n1 + i1) * n2;
                line[..n2].copy_from_slice(&input[src..src + n2]);
                line[n2..p2].iter_mut().for_each(|v| *v = 0.0);
                self.r2c
                    .process_with_scratch(&mut line, &mut out, &mut rscratch)
                    .expect("real forward transform");
                let dst = (i0 * p1 + i1) * hz;
                spec[dst..dst + hz].copy_from_slice(&out);
            }
        }
        let (mut buf, mut scratch) = (Vec::new(), Vec::new());
        transform_axis(&mut spec, shape, 1, &*self.forward[1], [0..n0, 0..p1, 0..hz], &mut buf, &mut scratch);
        transform_axis(&mut spec, shape, 0, &*self.forward[0], [0..p0, 0..p1, 0..hz], &mut buf, &mut scratch);
        spec
    }

    /// Inverse transform of a half spectrum, cropped to the small shape, with `1/N` applied.
    pub fn inverse_cropped(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        let [n0, n1, n2] = self.small;
        let [p0, p1, p2] = self.padded;
        let hz = self.half_z;
        let shape = [p0, p1, hz];
        let (mut buf, mut scratch) = (Vec::new(), Vec::new());
        transform_axis(&mut spec, shape, 0, &*self.inverse[0], [0..p0, 0..p1, 0..hz], &mut buf, &mut scratch);
        transform_axis(&mut spec, shape, 1, &*self.inverse[1], [0..n0, 0..p1, 0..hz], &mut buf, &mut scratch);
        let scale = 1.0 / (p0 * p1 * p2) as f64;
        let mut out = vec![0.0; n0 * n1 * n2];
        let mut line = self.c2r.make_input_vec();
        let mut real = self.c2r.make_output_vec();
        let mut rscratch = self.c2r.make_scratch_vec();
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                let src = (i0 * p1 + i1) * hz;
                line.copy_from_slice(&spec[src..src + hz]);
                line[0].im = 0.0;
                line[hz - 1].im = 0.0;
                self.c2r
                    .process_with_scratch(&mut line, &mut real, &mut rscratch)
                    .expect("real inverse transform");
                let dst = (i0 * n1 + i1) * n2;
                for (o, r) in out[dst..dst + n2].iter_mut().zip(&real[..n2]) {
                    *o = r * scale;
                }
            }
        }
        out
    }

    /// Linear convolution with the kernel whose half spectrum is `multiplier`.
    pub fn convolve(&self, input: &[f64], multiplier: &[f64]) -> Vec<f64> {
        let mut spec = self.forward(input);
        assert_eq!(spec.len(), multiplier.len());
        spec.iter_mut().zip(multiplier).for_each(|(s, m)| *s *= m);
        self.inverse_cropped(spec)
    }
}
