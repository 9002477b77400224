//! B-spline bases on open knot vectors and exact refinement between knot ladders.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Cubic degree used by the control ladder.
pub const CUBIC: usize = 3;

/// Highest ladder level available without opting in to extended levels.
pub const STANDARD_LEVELS: usize = 4;

/// Nondecreasing open knot vector of degree `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotVectorRaw", into = "KnotVectorRaw")]
pub struct KnotVector {
    knots: Vec<f64>,
    degree: usize,
}

#[derive(Serialize, Deserialize)]
struct KnotVectorRaw {
    degree: usize,
    knots: Vec<f64>,
}

impl TryFrom<KnotVectorRaw> for KnotVector {
    type Error = Error;

    fn try_from(raw: KnotVectorRaw) -> Result<Self> {
        KnotVector::new(raw.knots, raw.degree)
    }
}

impl From<KnotVector> for KnotVectorRaw {
    fn from(k: KnotVector) -> Self {
        Self { degree: k.degree, knots: k.knots }
    }
}

impl KnotVector {
    pub fn new(knots: Vec<f64>, degree: usize) -> Result<Self> {
        let m = knots.len();
        if m < 2 * (degree + 1) {
            return Err(Error::InvalidArgument(format!("{m} knots cannot carry {} basis functions of degree {degree}", degree + 1)));
        }
        if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("knots must be finite and nondecreasing".into()));
        }
        let (a, b) = (knots[0], knots[m - 1]);
        if !(b > a) {
            return Err(Error::InvalidArgument("knot span has zero length".into()));
        }
        let head = knots.iter().take_while(|&&k| k == a).count();
        let tail = knots.iter().rev().take_while(|&&k| k == b).count();
        if head != degree + 1 || tail != degree + 1 {
            return Err(Error::InvalidArgument(format!("end knots must repeat exactly {} times", degree + 1)));
        }
        Ok(Self { knots, degree })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `K`.
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn check_span(&self, t: f64) -> Result<()> {
        if t >= self.start() && t <= self.end() {
            Ok(())
        } else {
            Err(Error::OutsideSpan { t, start: self.start(), end: self.end() })
        }
    }

    /// Index `i` with `ξ_i ≤ t < ξ_{i+1}`; the last non-empty interval at the right end.
    fn span_index(&self, t: f64) -> usize {
        let k = self.basis_count();
        if t >= self.knots[k] {
            return k - 1;
        }
        // First index whose knot exceeds t, minus one.
        self.knots.partition_point(|&x| x <= t) - 1
    }

    /// The `p + 1` basis functions that can be nonzero at `t`, with the index
    /// of the first one. Triangular form of the Cox-de Boor recursion.
    pub fn nonzero_basis(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.check_span(t)?;
        let p = self.degree;
        let i = self.span_index(t);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[i + 1 - j];
            right[j] = u[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((i - p, n))
    }

    /// `N_{k,p}(t)` with zero-based `k`.
    pub fn basis_eval(&self, k: usize, t: f64) -> Result<f64> {
        let count = self.basis_count();
        if k >= count {
            return Err(Error::InvalidArgument(format!("basis index {k} out of range 0..{count}")));
        }
        let (first, values) = self.nonzero_basis(t)?;
        Ok(if k >= first && k <= first + self.degree { values[k - first] } else { 0.0 })
    }

    /// Greville abscissae `(ξ_{m+1} + … + ξ_{m+p}) / p`, one per basis function.
    pub fn greville_points(&self) -> Vec<f64> {
        let p = self.degree;
        if p == 0 {
            return (0..self.basis_count()).map(|m| 0.5 * (self.knots[m] + self.knots[m + 1])).collect();
        }
        (0..self.basis_count()).map(|m| self.knots[m + 1..=m + p].iter().sum::<f64>() / p as f64).collect()
    }

    /// True when every knot of `self` (with multiplicity) also appears in `finer`.
    pub fn is_nested_in(&self, finer: &KnotVector) -> bool {
        if self.degree != finer.degree || self.start() != finer.start() || self.end() != finer.end() {
            return false;
        }
        let mut j = 0;
        for &k in &self.knots {
            while j < finer.knots.len() && finer.knots[j] < k {
                j += 1;
            }
            if j == finer.knots.len() || finer.knots[j] != k {
                return false;
            }
            j += 1;
        }
        true
    }
}

/// Cubic open uniform knots of ladder level `level` on `[0, horizon]`:
/// `2^(level-1) - 1` equally spaced interior knots. Levels 1 to 4 only.
pub fn open_uniform_knots(level: usize, horizon: f64) -> Result<KnotVector> {
    if !(1..=STANDARD_LEVELS).contains(&level) {
        return Err(Error::InvalidArgument(format!("ladder level {level} outside 1..={STANDARD_LEVELS}")));
    }
    open_uniform_knots_extended(level, horizon)
}

/// Like [`open_uniform_knots`] but accepts levels above 4 (dyadic interior knots).
pub fn open_uniform_knots_extended(level: usize, horizon: f64) -> Result<KnotVector> {
    if level == 0 || level > 20 {
        return Err(Error::InvalidArgument(format!("ladder level {level} out of range")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let segments = 1usize << (level - 1);
    let mut knots = vec![0.0; CUBIC + 1];
    knots.extend((1..segments).map(|j| horizon * j as f64 / segments as f64));
    knots.extend(std::iter::repeat(horizon).take(CUBIC + 1));
    KnotVector::new(knots, CUBIC)
}

/// Scalar spline `Σ c_k N_{k,p}(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRaw", into = "CurveRaw")]
pub struct BSplineCurve {
    knots: KnotVector,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CurveRaw {
    degree: usize,
    knots: Vec<f64>,
    coeffs: Vec<f64>,
}

impl TryFrom<CurveRaw> for BSplineCurve {
    type Error = Error;

    fn try_from(raw: CurveRaw) -> Result<Self> {
        BSplineCurve::new(KnotVector::new(raw.knots, raw.degree)?, raw.coeffs)
    }
}

impl From<BSplineCurve> for CurveRaw {
    fn from(c: BSplineCurve) -> Self {
        Self { degree: c.knots.degree, knots: c.knots.knots, coeffs: c.coeffs }
    }
}

impl BSplineCurve {
    pub fn new(knots: KnotVector, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != knots.basis_count() {
            return Err(Error::LengthMismatch { expected: knots.basis_count(), got: coeffs.len() });
        }
        Ok(Self { knots, coeffs })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (first, values) = self.knots.nonzero_basis(t)?;
        Ok(values.iter().zip(&self.coeffs[first..]).map(|(n, c)| n * c).sum())
    }

    /// Re-expresses the curve on a finer nested knot vector by collocation at
    /// the finer Greville points.
    pub fn refine(&self, target: &KnotVector) -> Result<BSplineCurve> {
        if !self.knots.is_nested_in(target) {
            return Err(Error::NotNested);
        }
        let abscissae = target.greville_points();
        let k = target.basis_count();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for (m, &t) in abscissae.iter().enumerate() {
            let (first, values) = target.nonzero_basis(t)?;
            for (j, v) in values.iter().enumerate() {
                a[(m, first + j)] = *v;
            }
            b[m] = self.eval(t)?;
        }
        let coeffs = a.lu().solve(&b).expect("Greville collocation matrix of a nested ladder is nonsingular");
        BSplineCurve::new(target.clone(), coeffs.iter().copied().collect())
    }
}

/// `Σ c_k N_{k,p}(t)` for a given knot vector and coefficients.
pub fn curve_eval(curve: &BSplineCurve, t: f64) -> Result<f64> {
    curve.eval(t)
}

pub fn refine_curve(curve: &BSplineCurve, target: &KnotVector) -> Result<BSplineCurve> {
    curve.refine(target)
}
