use proptest::prelude::*;
use sepmarg::bounds::*;
use sepmarg::scenarios::MarginalScenario;

#[test]
fn epsilon_decreases_like_inverse_square() {
    for d in [2, 3, 4] {
        let mut prev = f64::INFINITY;
        for level in 1..=200 {
            let e = epsilon::<f64>(level, d);
            assert!(e > 0.0 && e <= prev + 1e-15, "d={d} L={level}");
            assert!(e * (level * level) as f64 <= 12.0 * d as f64, "d={d} L={level} eps={e}");
            prev = e;
        }
    }
}

#[test]
fn trivial_sites_cost_nothing() {
    assert_eq!(epsilon::<f64>(5, 1), 0.0);
    let s = MarginalScenario::custom(vec![(1, 1), (2, 1)], vec![vec![1, 2]]).unwrap();
    assert_eq!(prop1_bound(&s, 3, &BoundVariant::AllSites).per_set[0].1, 0.0);
}

#[test]
fn skipping_private_sites_tightens() {
    let s = MarginalScenario::star(5, 2).unwrap();
    let all = prop1_bound(&s, 4, &BoundVariant::AllSites);
    let skip = prop1_bound(&s, 4, &BoundVariant::SkipPrivate(vec![Some(2), Some(3), Some(4), Some(5)]));
    for (a, b) in all.per_set.iter().zip(&skip.per_set) {
        assert!(b.1 < a.1);
    }
}

proptest! {
    #[test]
    fn roots_lie_inside_and_vanish(n in 1usize..20, a in 0usize..5, b in 0usize..2) {
        let roots = jacobi_roots(n, a as f64, b as f64);
        prop_assert_eq!(roots.len(), n);
        let lead = jacobi_eval(n, a as f64, b as f64, 1.0).abs();
        for w in roots.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for x in roots {
            prop_assert!(x > -1.0 && x < 1.0);
            prop_assert!(jacobi_eval(n, a as f64, b as f64, x).abs() <= 1e-8 * lead.max(1.0));
        }
    }

    #[test]
    fn single_and_double_precision_agree(level in 1usize..60, d in 2usize..6) {
        let a = epsilon::<f64>(level, d);
        let b = epsilon::<f32>(level, d) as f64;
        prop_assert!((a - b).abs() <= 1e-4 * a.max(1e-3));
    }
}
