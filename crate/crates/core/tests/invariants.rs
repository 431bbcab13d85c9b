use kanlab::basins::{classify, random_point, ClassifyParams, Fractions, Label};
use kanlab::central::{sigma_bisect, SigmaParams};
use kanlab::config::SystemSpec;
use kanlab::entropy::{audit, separated_count, Space};
use kanlab::output::canonical_json;
use kanlab::ruelle::{solve_equilibrium, DEFAULT_MAX_ITER, DEFAULT_TOL};
use kanlab::seeding::item_rng;
use kanlab::skew::BaseOrbit;
use kanlab::{ExpandingCircleMap, KanSystem, TrigPoly};
use proptest::prelude::*;
use std::sync::OnceLock;

fn strong() -> &'static KanSystem {
    static SYS: OnceLock<KanSystem> = OnceLock::new();
    SYS.get_or_init(|| {
        SystemSpec::from_json(r#"{"base": {"degree": 3}, "epsilon": 0.3}"#)
            .unwrap()
            .build()
            .unwrap()
    })
}

fn params() -> ClassifyParams {
    ClassifyParams { n_max: 20_000, ..ClassifyParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn equilibrium_weights_are_a_probability(a in -0.5f64..0.5, b in -0.5f64..0.5) {
        let base = ExpandingCircleMap::linear(3).unwrap();
        let phi = TrigPoly::new(vec![0.0, a], vec![b]);
        let st = solve_equilibrium(&base, &phi, 1 << 10, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let w = st.measure.weights();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn labels_flip_under_the_involution(seed in any::<u64>()) {
        let (th, t) = random_point(&mut item_rng(seed, 0));
        let sys = strong();
        let a = classify(sys, (th, t), &params());
        let b = classify(sys, ((th + 0.5) % 1.0, 1.0 - t), &params());
        prop_assert_eq!(a.label.flip(), b.label);
        prop_assert_eq!(a.time, b.time);
    }

    #[test]
    fn boundary_points_decide_at_once(th in 0.0f64..1.0) {
        let sys = strong();
        let a = classify(sys, (th, 0.0), &params());
        let b = classify(sys, (th, 1.0), &params());
        prop_assert_eq!((a.label, a.time), (Label::Basin0, Some(0)));
        prop_assert_eq!((b.label, b.time), (Label::Basin1, Some(0)));
    }

    #[test]
    fn fractions_sum_to_one(labels in proptest::collection::vec(0u8..3, 1..200)) {
        let labels: Vec<Label> = labels
            .into_iter()
            .map(|k| [Label::Basin0, Label::Basin1, Label::Undecided][k as usize])
            .collect();
        let f = Fractions::of(&labels);
        prop_assert!((f.basin0 + f.basin1 + f.undecided - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_sets_are_separated(n in 1usize..5, eps in 0.05f64..0.3, seed in any::<u64>()) {
        let sys = strong();
        for space in [Space::Circle(sys.base()), Space::Cylinder(sys)] {
            let est = separated_count(space, n, eps, None).unwrap();
            prop_assert!(est.count >= 1);
            prop_assert_eq!(audit(space, &est, seed).violations, 0);
        }
    }

    #[test]
    fn canonical_json_is_stable(x in any::<f64>(), k in "[a-z]{1,8}") {
        let v = serde_json::json!({ "z": 1, k.clone(): x, "a": [x, -x] });
        let s = canonical_json(&v).unwrap();
        prop_assert_eq!(&s, &canonical_json(&serde_json::from_str::<serde_json::Value>(&s).unwrap()).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn sigma_is_interior_and_symmetric(k in 0u64..(1 << 20)) {
        let th = (2 * k + 1) as f64 / f64::from(1u32 << 22);
        let p = SigmaParams { classify: params(), ..SigmaParams::default() };
        let sys = strong();
        let a = sigma_bisect(sys, &BaseOrbit::Float(th), &p).unwrap();
        let b = sigma_bisect(sys, &BaseOrbit::Float(th + 0.5), &p).unwrap();
        if let (Some(x), Some(y)) = (a.sigma, b.sigma) {
            prop_assert!(x > 0.0 && x < 1.0);
            prop_assert!((x + y - 1.0).abs() <= 2.0 * p.tol);
        }
    }
}
