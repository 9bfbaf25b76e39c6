use proptest::prelude::*;

use loggas::analysis::{quadrature_oracle_with, OracleOptions};
use loggas::ensemble::{EnsembleSpec, Interval, WeightFamily, WeightScaling};
use loggas::equilibrium::{assemble_kernel, directional_derivatives, energy, minimize, truncate_support, Grid};

fn arb_spec() -> impl Strategy<Value = EnsembleSpec> {
    prop_oneof![
        (1u32..4, 0.0..2.0f64, 0.5..3.0f64, 0.5..1.5f64).prop_map(|(theta, alpha, tau, kappa)| {
            EnsembleSpec::new(
                theta,
                kappa,
                Interval::HALF_LINE,
                WeightFamily::PowerExp { alpha, tau },
                WeightScaling::Varying,
            )
            .unwrap()
        }),
        (0.2..2.0f64, 0.5..1.5f64).prop_map(|(tau, kappa)| {
            EnsembleSpec::new(
                1,
                kappa,
                Interval::REAL_LINE,
                WeightFamily::GaussPower { alpha: 0.0, tau },
                WeightScaling::Varying,
            )
            .unwrap()
        }),
        (1u32..4, 0.0..2.0f64, 0.0..2.0f64).prop_map(|(theta, alpha, beta)| {
            EnsembleSpec::new(
                theta,
                1.0,
                Interval::new(0.0, 1.0),
                WeightFamily::JacobiPower { alpha, beta },
                WeightScaling::Varying,
            )
            .unwrap()
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_certificates_hold(spec in arb_spec(), m in 20usize..120) {
        let d = truncate_support(&spec).unwrap();
        let grid = Grid::new(d.lower, d.upper, m).unwrap();
        let k = assemble_kernel(&spec, &grid).unwrap();
        prop_assert!(k.is_symmetric());
        let tol = 1e-9;
        let r = minimize(&k, spec.kappa, tol).unwrap();
        prop_assert!(r.energy_trace.windows(2).all(|t| t[1] <= t[0]));
        let w = &r.measure().weights;
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(directional_derivatives(&k, r.measure(), spec.kappa).iter().all(|&g| g >= -tol));
        let e = energy(&k, r.measure(), spec.kappa).unwrap();
        prop_assert!((e - r.energy_value).abs() <= 1e-10 * (1.0 + e.abs()));
        prop_assert_eq!(r.c_constant, -r.energy_value);
    }

    #[test]
    fn oracle_ignores_axis_order(theta in 1u32..4, alpha in 0.0..1.5f64, order in Just(vec![2usize, 0, 1])) {
        let spec = EnsembleSpec::new(
            theta,
            1.0,
            Interval::HALF_LINE,
            WeightFamily::PowerExp { alpha, tau: 1.0 },
            WeightScaling::Varying,
        )
        .unwrap();
        let base = OracleOptions { resolution: Some(96), ..Default::default() };
        let a = quadrature_oracle_with(&spec, 3, &base).unwrap();
        let b = quadrature_oracle_with(&spec, 3, &OracleOptions { axis_order: Some(order), ..base }).unwrap();
        let err = a.relative_error.max(b.relative_error);
        prop_assert!(((a.log_z - b.log_z).exp() - 1.0).abs() <= err.max(1e-12));
    }
}
