use approx::assert_relative_eq;
use nalgebra::DVector;
use proptest::prelude::*;

use fibrewise::base_flow::wrap4;
use fibrewise::config::FlowParams;
use fibrewise::fiber_metric::{mu, FiberMetric, SpdPowers};
use fibrewise::group_rep::{
    build_blocks, build_representation, c_power, eval_word, parse_word, ExponentTuple, Word,
};
use fibrewise::holonomy::{
    deviation_f, glue_a, glue_a_inv, BoundarySide, DeviationReading, TorusCoord,
};

const GENS: [&str; 13] = [
    "a1", "b1", "theta1", "a2", "b2", "theta2", "a3", "b3", "theta3", "a4", "b4", "theta4", "c",
];

fn word() -> impl Strategy<Value = Word> {
    prop::collection::vec((0..GENS.len(), -3i64..=3), 0..8).prop_map(|letters| {
        let mut w = Word::identity();
        for (g, e) in letters {
            w.push(GENS[g], e);
        }
        w
    })
}

proptest! {
    #[test]
    fn word_times_inverse_is_empty(w in word()) {
        prop_assert!(w.mul(&w.inverse()).is_empty());
        prop_assert!(w.inverse().mul(&w).is_empty());
        prop_assert_eq!(w.inverse().inverse(), w);
    }

    #[test]
    fn words_are_reduced(w in word()) {
        for pair in w.letters().windows(2) {
            prop_assert_ne!(&pair[0].0, &pair[1].0);
        }
        prop_assert!(w.letters().iter().all(|(_, e)| *e != 0));
    }

    #[test]
    fn words_roundtrip_through_text(w in word()) {
        prop_assert_eq!(parse_word(&w.to_string()).unwrap(), w);
    }

    #[test]
    fn evaluation_is_a_homomorphism(u in word(), v in word()) {
        let rep = build_representation(&ExponentTuple::reference(), 4).unwrap();
        let lhs = eval_word(&rep, &u.mul(&v)).unwrap();
        let rhs = eval_word(&rep, &u).unwrap().checked_mul(&eval_word(&rep, &v).unwrap()).unwrap();
        prop_assert_eq!(lhs, rhs);
        let inv = eval_word(&rep, &u.inverse()).unwrap();
        prop_assert!(inv.checked_mul(&eval_word(&rep, &u).unwrap()).unwrap().is_identity());
    }

    #[test]
    fn c_powers_add(s in -8i64..=8, t in -8i64..=8) {
        let lhs = c_power(4, s).unwrap().checked_mul(&c_power(4, t).unwrap()).unwrap();
        prop_assert_eq!(lhs, c_power(4, s + t).unwrap());
    }

    #[test]
    fn gluing_maps_are_inverse(omega in -3.0f64..3.0, theta in -3.0f64..3.0, torus in 2u8..=5) {
        let c = TorusCoord { omega, theta, torus, side: BoundarySide::Outflow };
        let back = glue_a(glue_a_inv(c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
        // A has order four
        let mut p = c;
        for _ in 0..4 {
            p = TorusCoord { side: BoundarySide::Outflow, ..glue_a_inv(p).unwrap() };
        }
        prop_assert_eq!(p, c);
    }

    #[test]
    fn wrap4_is_a_fundamental_domain(w in -50.0f64..50.0) {
        let r = wrap4(w);
        prop_assert!((-1.0..3.0).contains(&r));
        let k = (w - r) / 4.0;
        prop_assert!((k - k.round()).abs() < 1e-9);
        prop_assert_eq!(DeviationReading::Lifted.reduce(w), r);
    }

    #[test]
    fn real_powers_of_c_compose(s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let (c, _) = build_blocks();
        let p = SpdPowers::new(&c).unwrap();
        let lhs = p.power(s) * p.power(t);
        assert_relative_eq!(lhs, p.power(s + t), max_relative = 1e-10, epsilon = 1e-12);
    }

    #[test]
    fn integer_powers_match_exact_matrices(k in -6i64..=6) {
        let (c, _) = build_blocks();
        let p = SpdPowers::new(&c).unwrap();
        let exact = c_power(4, k).unwrap().to_real();
        assert_relative_eq!(p.power(k as f64), exact, max_relative = 1e-10, epsilon = 1e-9);
    }

    #[test]
    fn stable_vectors_scale_by_mu(w in -4.0f64..4.0) {
        let metric = FiberMetric::new(4, 1, 1, -1).unwrap();
        // C = diag(C1, C1^-1); the contracting direction of C1^-1 lies in the second block
        let s5 = 5f64.sqrt();
        let v = DVector::from_vec(vec![0.0, 0.0, 2.0, -1.0 + s5]).normalize();
        let n = metric.norm_at_exponent(w, &v).unwrap();
        assert_relative_eq!(n, mu().powf(w), max_relative = 1e-10);
    }

    #[test]
    fn chart_exponents_are_affine(k in 1u8..=5, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let metric = FiberMetric::new(4, 1, 1, -1).unwrap();
        let ch = metric.chart(k).unwrap();
        let mid = ch.exponent(0.5 * x, 0.5 * y);
        let avg = 0.5 * (ch.exponent(x, y) + ch.exponent(0.0, 0.0));
        assert_relative_eq!(mid, avg, epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn deviation_is_odd_and_antiperiodic(omega in 0.02f64..0.98) {
        let p = FlowParams::default();
        let f = deviation_f(omega, &p).unwrap();
        let tol = 10.0 * p.ode_tol;
        prop_assert!((deviation_f(-omega, &p).unwrap() + f).abs() <= tol);
        prop_assert!((deviation_f(omega + 2.0, &p).unwrap() + f).abs() <= tol);
        prop_assert!(f >= 0.0);
    }
}
