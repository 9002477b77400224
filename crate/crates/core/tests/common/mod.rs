#![allow(dead_code)]

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

pub struct AnisotropicGaussian {
    pub sigma: [f64; 3],
}

impl AnisotropicGaussian {
    pub fn density(&self, r: [f64; 3]) -> f64 {
        let s = self.sigma;
        let norm = 1.0 / ((2.0 * PI).powf(1.5) * s[0] * s[1] * s[2]);
        norm * (-(0..3).map(|a| 0.5 * (r[a] / s[a]).powi(2)).sum::<f64>()).exp()
    }

    /// `∂ₙₙ φ` with `-Δφ = ρ`, from `1/(4πr) = ∫₀^∞ (4πs)^{-3/2} e^{-r²/4s} ds`:
    /// the Poisson solution is a heat-kernel smoothing integral over `s`.
    pub fn second_derivative_heat(&self, r: [f64; 3], n: [f64; 3]) -> f64 {
        let integrand = |s: f64| {
            let v = self.sigma.map(|x| x * x + 2.0 * s);
            let g: f64 = (0..3).map(|a| (-0.5 * r[a] * r[a] / v[a]).exp() / (2.0 * PI * v[a]).sqrt()).product();
            let d = [0, 1, 2].map(|a| -r[a] / v[a]);
            let mut h = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let hij = d[i] * d[j] - if i == j { 1.0 / v[i] } else { 0.0 };
                    h += n[i] * n[j] * hij;
                }
            }
            g * h
        };
        // s = e^y; the integrand decays exponentially at both ends in y.
        let (lo, hi, step) = (-40.0, 25.0, 0.02);
        let count = ((hi - lo) / step) as usize;
        (0..=count)
            .map(|k| {
                let y = lo + k as f64 * step;
                let w = if k == 0 || k == count { 0.5 } else { 1.0 };
                w * integrand(y.exp()) * y.exp()
            })
            .sum::<f64>()
            * step
    }

    pub fn potential_heat(&self, r: [f64; 3], n: [f64; 3], g_dd: f64) -> f64 {
        -g_dd * self.density(r) - 3.0 * g_dd * self.second_derivative_heat(r, n)
    }

    /// Principal value of `(3 g_dd/4π) ∫ (1 - 3cos²θ)/r³ ρ(x - r) d³r` with a
    /// vanishing spherical exclusion: radial Gauss panels over an angular
    /// Gauss-Legendre x trapezoid rule, whose angular mean of `1 - 3cos²θ` is zero.
    pub fn potential_spherical(&self, x: [f64; 3], n: [f64; 3], g_dd: f64, angular: usize) -> f64 {
        let nodes = gauss_legendre(angular);
        let radial = gauss_legendre(16);
        let sigma_min = self.sigma.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma_max = self.sigma.iter().cloned().fold(0.0, f64::max);
        let reach = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() + 12.0 * sigma_max;
        let panel = 0.5 * sigma_min;
        let panels = (reach / panel).ceil() as usize;
        let dirs: Vec<([f64; 3], f64)> = nodes
            .iter()
            .flat_map(|&(c, w)| {
                let s = (1.0 - c * c).sqrt();
                (0..2 * angular).map(move |k| {
                    let ph = PI * k as f64 / angular as f64;
                    ([s * ph.cos(), s * ph.sin(), c], w * PI / angular as f64)
                })
            })
            .map(|(d, w)| {
                let c = d[0] * n[0] + d[1] * n[1] + d[2] * n[2];
                (d, w * (1.0 - 3.0 * c * c))
            })
            .collect();
        let mut total = 0.0;
        for p in 0..panels {
            let (a, b) = (p as f64 * panel, (p + 1) as f64 * panel);
            for &(t, wr) in &radial {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * t;
                let shell: f64 = dirs.iter().map(|(d, w)| w * self.density([x[0] - r * d[0], x[1] - r * d[1], x[2] - r * d[2]])).sum();
                total += 0.5 * (b - a) * wr * shell / r;
            }
        }
        3.0 * g_dd / (4.0 * PI) * total
    }
}
