use proptest::prelude::*;

use loggas::analysis::{bounded_lipschitz, ks_distance, wasserstein1, MeasurePair};
use loggas::measure::AtomicMeasure;

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((-5.0..5.0f64, 0.01..1.0f64), 1..20).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let (atoms, masses): (Vec<f64>, Vec<f64>) = pts.iter().map(|&(x, m)| (x, m / total)).unzip();
        AtomicMeasure::new(atoms, masses).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn distances_are_symmetric_and_satisfy_the_triangle_inequality(
        a in measure(), b in measure(), c in measure(),
    ) {
        let (ab, ba) = (wasserstein1(&a, &b), wasserstein1(&b, &a));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(wasserstein1(&a, &a) <= 1e-12);
        prop_assert!(ab <= wasserstein1(&a, &c) + wasserstein1(&c, &b) + 1e-12);
        let (kab, kba) = (ks_distance(&a, &b), ks_distance(&b, &a));
        prop_assert!((kab - kba).abs() <= 1e-12);
        prop_assert!(kab <= ks_distance(&a, &c) + ks_distance(&c, &b) + 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&kab));
    }

    #[test]
    fn bl_bounds_sandwich(a in measure(), b in measure()) {
        let r = bounded_lipschitz(&MeasurePair::new(&a, &b).unwrap(), 64).unwrap();
        prop_assert!(r.lower >= 0.0);
        prop_assert!(r.lower <= r.upper);
        // Admissible f have |f| ≤ 1 − l_f, so no pair separates by 2 or more.
        prop_assert!(r.upper < 2.0);
        prop_assert!(r.upper <= r.wasserstein1 + 1e-12);
        prop_assert!(r.lower <= r.wasserstein1 + 1e-12);
    }

    #[test]
    fn w1_of_equal_size_uniform_samples_matches_sorted_matching(
        xs in prop::collection::vec(-5.0..5.0f64, 1..30),
        shift in -2.0..2.0f64,
        noise in prop::collection::vec(-1.0..1.0f64, 30),
    ) {
        let ys: Vec<f64> = xs.iter().zip(&noise).map(|(x, e)| x + shift + e).collect();
        let a = AtomicMeasure::uniform(&xs).unwrap();
        let b = AtomicMeasure::uniform(&ys).unwrap();
        let (mut sx, mut sy) = (xs.clone(), ys.clone());
        sx.sort_by(f64::total_cmp);
        sy.sort_by(f64::total_cmp);
        let matched = sx.iter().zip(&sy).map(|(p, q)| (p - q).abs()).sum::<f64>() / xs.len() as f64;
        prop_assert!((wasserstein1(&a, &b) - matched).abs() <= 1e-12);
    }
}
