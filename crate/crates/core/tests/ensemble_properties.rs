use nalgebra::DMatrix;
use proptest::prelude::*;

use loggas::ensemble::{AngelescoSpec, EnsembleSpec, Interval, WeightFamily, WeightScaling};

fn spec(theta: u32, varying: bool) -> EnsembleSpec {
    EnsembleSpec::new(
        theta,
        1.0,
        Interval::HALF_LINE,
        WeightFamily::PowerExp { alpha: 0.5, tau: 1.5 },
        if varying { WeightScaling::Varying } else { WeightScaling::Fixed },
    )
    .unwrap()
}

/// `log|det [y_i^k]|` with `y = x^θ`, by LU in a Chebyshev basis on
/// `[min y, max y]`. The monomial matrix is too ill-conditioned for LU at six
/// points; `T_k(t(y))` has leading coefficient `2^{k-1} (2/(b-a))^k` in `y`,
/// which is divided out afterwards.
fn log_vandermonde(x: &[f64], theta: i32) -> f64 {
    let n = x.len();
    let y: Vec<f64> = x.iter().map(|v| v.powi(theta)).collect();
    let (a, b) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let t: Vec<f64> = y.iter().map(|v| (2.0 * v - a - b) / (b - a)).collect();
    let m = DMatrix::from_fn(n, n, |i, k| {
        let (mut prev, mut cur) = (1.0, t[i]);
        if k == 0 {
            return prev;
        }
        for _ in 1..k {
            (prev, cur) = (cur, 2.0 * t[i] * cur - prev);
        }
        cur
    });
    let leading: f64 = (1..n)
        .map(|k| (k as f64 - 1.0) * 2f64.ln() + k as f64 * (2.0 / (b - a)).ln())
        .sum();
    m.determinant().abs().ln() - leading
}

fn distinct_points() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05..4.0f64, 2..7).prop_filter("distinct", |v| {
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        s.windows(2).all(|w| w[1] - w[0] > 1e-3)
    })
}

proptest! {
    #[test]
    fn density_is_permutation_symmetric(
        x in distinct_points(),
        theta in 1u32..4,
        varying in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let s = spec(theta, varying);
        let n = x.len();
        let mut y = x.clone();
        // Fisher–Yates driven by the seed.
        let mut state = seed;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            y.swap(i, (state >> 33) as usize % (i + 1));
        }
        let a = s.log_joint_density_unnormalized(&x, n).unwrap();
        let b = s.log_joint_density_unnormalized(&y, n).unwrap();
        prop_assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()), "{} vs {}", a, b);
    }

    #[test]
    fn density_matches_vandermonde_determinants(x in distinct_points(), theta in 1u32..4) {
        let s = spec(theta, true);
        let n = x.len();
        let one_body: f64 = x.iter().map(|&xi| s.log_weight(xi, n).unwrap()).sum();
        let expected = one_body + log_vandermonde(&x, 1) + log_vandermonde(&x, theta as i32);
        let got = s.log_joint_density_unnormalized(&x, n).unwrap();
        prop_assert!((got - expected).abs() <= 1e-8 * (1.0 + expected.abs()), "{} vs {}", got, expected);
        if theta == 1 {
            let squared = one_body + 2.0 * log_vandermonde(&x, 1);
            prop_assert!((got - squared).abs() <= 1e-8 * (1.0 + squared.abs()));
        }
    }

    #[test]
    fn angelesco_cross_terms_attract_with_unit_power(
        left in prop::collection::vec(-3.0..-0.01f64, 2),
        right in prop::collection::vec(0.01..3.0f64, 2),
    ) {
        prop_assume!((left[0] - left[1]).abs() > 1e-6 && (right[0] - right[1]).abs() > 1e-6);
        let a = AngelescoSpec::new(
            vec![Interval::new(-3.0, 0.0), Interval::new(0.0, 3.0)],
            vec![0.5, 0.5],
            vec![WeightFamily::Constant, WeightFamily::Constant],
        ).unwrap();
        let got = a.log_joint_density_angelesco(&[left.clone(), right.clone()], 4).unwrap();
        // Squared Vandermonde within each species, first power across.
        let within = 2.0 * (left[0] - left[1]).abs().ln() + 2.0 * (right[0] - right[1]).abs().ln();
        let across: f64 = left.iter().flat_map(|x| right.iter().map(move |y| (x - y).abs().ln())).sum();
        prop_assert!((got - within - across).abs() <= 1e-12 * (1.0 + got.abs()));
    }

    #[test]
    fn even_theta_density_is_finite_off_the_diagonal(x in distinct_points(), half in 1u32..3, dup in 0usize..6) {
        let s = spec(2 * half, true);
        let n = x.len();
        prop_assert!(s.log_joint_density_unnormalized(&x, n).unwrap().is_finite());
        let mut y = x.clone();
        let i = dup % n;
        y[(i + 1) % n] = y[i];
        prop_assert_eq!(s.log_joint_density_unnormalized(&y, n).unwrap(), f64::NEG_INFINITY);
        // A zero of the weight: x^α vanishes at the origin.
        let mut z = x.clone();
        z[i] = 0.0;
        prop_assert_eq!(s.log_joint_density_unnormalized(&z, n).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn angelesco_cross_product_keeps_its_sign(
        left in prop::collection::vec(-3.0..0.0f64, 1..4),
        right in prop::collection::vec(0.0..3.0f64, 1..4),
    ) {
        prop_assume!(left.iter().all(|&x| x < 0.0) && right.iter().all(|&y| y > 0.0));
        let sign: f64 = left.iter().flat_map(|x| right.iter().map(move |y| (x - y).signum())).product();
        let expected = if (left.len() * right.len()) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert_eq!(sign, expected);
    }
}
