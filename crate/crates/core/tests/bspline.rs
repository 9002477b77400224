use dropctl::bspline::*;
use dropctl::control::free_per_control;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// de Boor's triangular scheme: evaluates without forming basis functions.
fn de_boor(knots: &[f64], p: usize, coeffs: &[f64], t: f64) -> f64 {
    let n = coeffs.len();
    // Span k with knots[k] <= t < knots[k+1], clamped to the last non-empty span.
    let mut k = p;
    while k + 1 < n && knots[k + 1] <= t {
        k += 1;
    }
    let mut d: Vec<f64> = (0..=p).map(|j| coeffs[j + k - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = j + k - p;
            let denom = knots[i + p + 1 - r] - knots[i];
            let alpha = if denom == 0.0 { 0.0 } else { (t - knots[i]) / denom };
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
        }
    }
    d[p]
}

/// Boehm's single-knot insertion.
fn insert_knot(knots: &[f64], p: usize, coeffs: &[f64], u: f64) -> (Vec<f64>, Vec<f64>) {
    let k = knots.iter().rposition(|&x| x <= u).unwrap();
    let mut out = Vec::with_capacity(coeffs.len() + 1);
    for i in 0..=coeffs.len() {
        let c = if i + p <= k {
            coeffs[i]
        } else if i > k {
            coeffs[i - 1]
        } else {
            let a = (u - knots[i]) / (knots[i + p] - knots[i]);
            (1.0 - a) * coeffs[i - 1] + a * coeffs[i]
        };
        out.push(c);
    }
    let mut nk = knots.to_vec();
    nk.insert(k + 1, u);
    (nk, out)
}

fn random_curve(level: usize, horizon: f64, rng: &mut ChaCha8Rng) -> BSplineCurve {
    let kv = open_uniform_knots(level, horizon).unwrap();
    let coeffs = (0..kv.basis_count()).map(|_| rng.gen_range(-3.0..3.0)).collect();
    BSplineCurve::new(kv, coeffs).unwrap()
}

#[test]
fn evaluation_agrees_with_de_boor() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for level in 1..=4 {
        let c = random_curve(level, 2.0, &mut rng);
        for m in 0..=1000 {
            let t = 2.0 * m as f64 / 1000.0;
            let oracle = de_boor(c.knots().knots(), 3, c.coeffs(), t);
            assert!((c.eval(t).unwrap() - oracle).abs() < 1e-13, "level {level}, t = {t}");
        }
    }
    // A non-uniform knot vector with a repeated interior knot.
    let kv = KnotVector::new(vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.3, 0.7, 1.0, 1.0, 1.0, 1.0], 3).unwrap();
    let coeffs: Vec<f64> = (0..kv.basis_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c = BSplineCurve::new(kv, coeffs).unwrap();
    for m in 0..=500 {
        let t = m as f64 / 500.0;
        assert!((c.eval(t).unwrap() - de_boor(c.knots().knots(), 3, c.coeffs(), t)).abs() < 1e-13);
    }
}

#[test]
fn refinement_matches_knot_insertion() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let horizon = 2.0;
    for level in 1..4 {
        let coarse = random_curve(level, horizon, &mut rng);
        let fine_kv = open_uniform_knots(level + 1, horizon).unwrap();
        let refined = coarse.refine(&fine_kv).unwrap();

        let segments = 1usize << (level - 1);
        let (mut knots, mut coeffs) = (coarse.knots().knots().to_vec(), coarse.coeffs().to_vec());
        for j in 0..segments {
            let u = horizon * (2 * j + 1) as f64 / (2 * segments) as f64;
            (knots, coeffs) = insert_knot(&knots, 3, &coeffs, u);
        }
        assert_eq!(knots, fine_kv.knots());
        for (a, b) in refined.coeffs().iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-12, "level {level}: {a} vs {b}");
        }
        for m in 0..1000 {
            let t = horizon * (m as f64 + 0.5) / 1000.0;
            assert!((refined.eval(t).unwrap() - coarse.eval(t).unwrap()).abs() < 1e-12);
        }
    }
}

#[test]
fn refinement_across_several_levels_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coarse = random_curve(1, 2.0, &mut rng);
    let fine = coarse.refine(&open_uniform_knots(4, 2.0).unwrap()).unwrap();
    for m in 0..1000 {
        let t = 2.0 * m as f64 / 999.0;
        assert!((fine.eval(t).unwrap() - coarse.eval(t).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn endpoints_are_interpolated() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for level in 1..=4 {
        let c = random_curve(level, 2.0, &mut rng);
        let k = c.coeffs();
        assert!((c.eval(0.0).unwrap() - k[0]).abs() < 1e-15);
        assert!((c.eval(2.0).unwrap() - k[k.len() - 1]).abs() < 1e-15);
    }
}

#[test]
fn free_coefficient_dimensions_follow_the_ladder() {
    let dims: Vec<usize> = (1..=4).map(|l| 3 * free_per_control(l)).collect();
    assert_eq!(dims, vec![6, 9, 15, 27]);
    for level in 1..=4 {
        assert_eq!(open_uniform_knots(level, 2.0).unwrap().basis_count(), free_per_control(level) + 2);
    }
}

#[test]
fn nested_ladder() {
    for level in 1..4 {
        let a = open_uniform_knots(level, 2.0).unwrap();
        let b = open_uniform_knots(level + 1, 2.0).unwrap();
        assert!(a.is_nested_in(&b));
        assert!(!b.is_nested_in(&a));
    }
}

proptest! {
    #[test]
    fn basis_is_a_local_partition_of_unity(level in 1usize..=4, t in 0.0f64..=2.0) {
        let kv = open_uniform_knots(level, 2.0).unwrap();
        let u = kv.knots();
        let mut sum = 0.0;
        for k in 0..kv.basis_count() {
            let v = kv.basis_eval(k, t).unwrap();
            prop_assert!(v >= 0.0);
            if t < u[k] || t > u[k + 4] {
                prop_assert_eq!(v, 0.0);
            }
            sum += v;
        }
        prop_assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn values_stay_in_the_coefficient_hull(level in 1usize..=4, seed in any::<u64>(), t in 0.0f64..=2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_curve(level, 2.0, &mut rng);
        let lo = c.coeffs().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.coeffs().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = c.eval(t).unwrap();
        prop_assert!(v >= lo - 1e-14 && v <= hi + 1e-14);
    }

    #[test]
    fn refinement_preserves_the_curve(level in 1usize..=3, seed in any::<u64>(), t in 0.0f64..=2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_curve(level, 2.0, &mut rng);
        let r = c.refine(&open_uniform_knots(level + 1, 2.0).unwrap()).unwrap();
        prop_assert!((r.eval(t).unwrap() - c.eval(t).unwrap()).abs() < 1e-12);
    }
}
