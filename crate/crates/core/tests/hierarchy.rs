use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sepmarg::hierarchy::*;
use sepmarg::linalg::{ComplexMatrix, C};
use sepmarg::models::random::{random_density, random_product, random_separable};
use sepmarg::models::{Boundary, Pauli, PauliHamiltonian, Spectrum};
use sepmarg::qops::kron;
use sepmarg::scenarios::MarginalScenario;
use sepmarg::sdp::SdpOptions;

fn opts() -> SdpOptions {
    SdpOptions::default()
}

fn pair() -> MarginalScenario {
    MarginalScenario::custom(vec![(1, 2), (2, 2)], vec![vec![1, 2]]).unwrap()
}

fn singlet() -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let psi = [C::new(0.0, 0.0), C::new(h, 0.0), C::new(-h, 0.0), C::new(0.0, 0.0)];
    Operator::pure(vec![2, 2], &psi).unwrap()
}

fn werner(p: f64) -> Operator {
    singlet()
        .scale(p)
        .add(&Operator::maximally_mixed(vec![2, 2]).unwrap().scale(1.0 - p))
        .unwrap()
}

fn mix(rho: &Operator, v: f64) -> Operator {
    rho.scale(v)
        .add(&Operator::maximally_mixed(rho.dims().to_vec()).unwrap().scale(1.0 - v))
        .unwrap()
}

fn verdict(relax: &Relaxation) -> Verdict {
    check(relax, &opts()).unwrap().verdict
}

#[test]
fn entangled_pair_rejected_with_certified_witness() {
    let e = StateEnsemble::new(pair(), vec![singlet()]).unwrap();
    let report = check(&build_h(&e, &HierarchyOptions::level(1)).unwrap(), &opts()).unwrap();
    let Verdict::Infeasible(w) = report.verdict else { panic!("singlet accepted") };
    assert!(w.certified(1e-6));
    assert!(w.value_on(&e).unwrap() < w.offset - 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let sigma = random_product(&[2, 2], &mut rng);
        assert!(w.value(&[&sigma]) >= w.offset - 1e-6);
    }
}

#[test]
fn werner_threshold_matches_ppt() {
    for (p, sep) in [(0.3, true), (0.32, true), (0.36, false), (0.5, false)] {
        let e = StateEnsemble::new(pair(), vec![werner(p)]).unwrap();
        assert_eq!(verdict(&build_h(&e, &HierarchyOptions::level(1)).unwrap()).is_feasible(), sep, "p = {p}");
    }
}

#[test]
fn feasibility_is_monotone_in_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = MarginalScenario::star(3, 2).unwrap();
    for v in [0.2, 0.35, 0.5] {
        let rho = mix(&random_density(&[2, 2, 2], 8, &mut rng), v);
        let e = StateEnsemble::from_global(s.clone(), &rho).unwrap();
        let l1 = verdict(&build_h(&e, &HierarchyOptions::level(1)).unwrap());
        let l2 = verdict(&build_h(&e, &HierarchyOptions::level(2)).unwrap());
        if l2.is_feasible() {
            assert!(l1.is_feasible(), "v = {v}");
        }
        if l1.is_infeasible() {
            assert!(l2.is_infeasible(), "v = {v}");
        }
    }
}

#[test]
fn h_is_contained_in_hbar() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = MarginalScenario::star(3, 2).unwrap();
    let private = star_private_sites(&s);
    for v in [0.3, 0.5, 0.8] {
        let rho = mix(&random_density(&[2, 2, 2], 2, &mut rng), v);
        let e = StateEnsemble::from_global(s.clone(), &rho).unwrap();
        let o = HierarchyOptions::level(2);
        let h = verdict(&build_h(&e, &o).unwrap());
        let hbar = verdict(&build_hbar(&e, &private, &o).unwrap());
        if h.is_feasible() {
            assert!(hbar.is_feasible(), "v = {v}");
        }
    }
}

#[test]
fn separable_marginals_pass_every_builder() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = [
        (HierarchyKind::H, MarginalScenario::star(3, 2).unwrap()),
        (HierarchyKind::Hbar, MarginalScenario::star(3, 2).unwrap()),
        (HierarchyKind::Line, MarginalScenario::line(4, 2).unwrap()),
        (HierarchyKind::Ring, MarginalScenario::ring(4, 2).unwrap()),
        (HierarchyKind::Completed, MarginalScenario::ring(4, 2).unwrap()),
    ];
    for (kind, s) in cases {
        let rho = random_separable(s.dims(), 4, &mut rng);
        let e = StateEnsemble::from_global(s, &rho).unwrap();
        for level in [1, 2] {
            let v = verdict(&build(kind, &e, &HierarchyOptions::level(level)).unwrap());
            assert!(v.is_feasible(), "{kind} L={level}");
        }
    }
}

#[test]
fn anticorrelated_triangle_is_locally_separable() {
    let s = MarginalScenario::custom(vec![(1, 2), (2, 2), (3, 2)], vec![vec![1, 2], vec![2, 3], vec![1, 3]]).unwrap();
    let m = ComplexMatrix::from_fn(4, 4, |i, j| if i == j && (i == 1 || i == 2) { C::new(0.5, 0.0) } else { C::new(0.0, 0.0) });
    let rho = Operator::new(vec![2, 2], m).unwrap();
    let e = StateEnsemble::new(s, vec![rho.clone(), rho.clone(), rho]).unwrap();
    for level in 1..=3 {
        assert!(verdict(&build_h(&e, &HierarchyOptions::level(level)).unwrap()).is_feasible(), "L={level}");
    }
}

#[test]
fn line_block_sizes_do_not_grow_with_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let dims: Vec<Vec<usize>> = [4, 8, 16]
        .into_iter()
        .map(|n| {
            let s = MarginalScenario::line(n, 2).unwrap();
            let states = (1..n).map(|_| random_product(&[2, 2], &mut rng)).collect();
            let e = StateEnsemble::with_tolerance(s, states, f64::INFINITY).unwrap();
            let mut d = build_line(&e, &HierarchyOptions::level(2)).unwrap().extension_dims();
            d.sort_unstable();
            d.dedup();
            d
        })
        .collect();
    assert!(dims.windows(2).all(|w| w[0] == w[1]), "{dims:?}");
}

#[test]
fn cold_xy_chain_is_entangled_on_a_line() {
    let h = PauliHamiltonian::xy_chain(8, Boundary::Open).unwrap().matrix().unwrap();
    let sp = Spectrum::new(&h).unwrap();
    let s = MarginalScenario::line(8, 2).unwrap();
    let cold = sp.marginals(50.0, &s).unwrap();
    let report = check(&build_line(&cold, &HierarchyOptions::level(2)).unwrap(), &opts()).unwrap();
    let Verdict::Infeasible(w) = report.verdict else { panic!("ground space accepted") };
    assert!(w.certified(1e-6));
    let hot = sp.marginals(0.2, &s).unwrap();
    assert!(verdict(&build_line(&hot, &HierarchyOptions::level(2)).unwrap()).is_feasible());
}

#[test]
fn ring_accepts_mixed_and_rejects_cold_chain() {
    let s = MarginalScenario::ring(4, 2).unwrap();
    let mm = Operator::maximally_mixed(vec![2; 4]).unwrap();
    let e = StateEnsemble::from_global(s.clone(), &mm).unwrap();
    assert!(verdict(&build_ring(&e, &HierarchyOptions::level(2)).unwrap()).is_feasible());
    let h = PauliHamiltonian::heisenberg(4, Boundary::Periodic).unwrap().matrix().unwrap();
    let cold = Spectrum::new(&h).unwrap().marginals(10.0, &s).unwrap();
    assert!(verdict(&build_ring(&cold, &HierarchyOptions::level(1)).unwrap()).is_infeasible());
}

#[test]
fn translation_invariant_chain() {
    let zero = Operator::pure(vec![2], &[C::new(1.0, 0.0), C::new(0.0, 0.0)]).unwrap();
    let product = kron(&zero, &zero);
    for level in 1..=3 {
        assert!(verdict(&build_ti1d(&product, &HierarchyOptions::level(level)).unwrap()).is_feasible());
    }
    // |01> has different one-site marginals
    let m = ComplexMatrix::from_fn(4, 4, |i, j| if i == j && i == 1 { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) });
    let shifted = Operator::new(vec![2, 2], m).unwrap();
    assert!(verdict(&build_ti1d(&shifted, &HierarchyOptions::level(1)).unwrap()).is_infeasible());
}

fn ghz_diagonal(v: f64) -> Operator {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut psi = vec![C::new(0.0, 0.0); 16];
    psi[0] = C::new(h, 0.0);
    psi[15] = C::new(h, 0.0);
    mix(&Operator::pure(vec![2; 4], &psi).unwrap(), v)
}

#[test]
fn reflected_plaquette() {
    let o = HierarchyOptions::level(1);
    assert!(verdict(&build_ti2d_reflect(&ghz_diagonal(0.9), 2, &o).unwrap()).is_infeasible());
    let mm = Operator::maximally_mixed(vec![2; 4]).unwrap();
    assert!(verdict(&build_ti2d_reflect(&mm, 2, &o).unwrap()).is_feasible());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let asym = random_density(&[2; 4], 3, &mut rng);
    assert!(matches!(build_ti2d_reflect(&asym, 2, &o), Err(HierarchyError::NotReflectionSymmetric(_))));
}

#[test]
fn trivial_plaquette_in_one_dimension() {
    let o = HierarchyOptions::level(1);
    let ent = plaquette_trivial_test(&werner(0.4), 1, &o, &opts()).unwrap();
    assert!(matches!(ent, PlaquetteVerdict::Infeasible(_)));
    let sep = plaquette_trivial_test(&werner(0.3), 1, &o, &opts()).unwrap();
    assert!(matches!(sep, PlaquetteVerdict::Feasible));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let asym = random_density(&[2, 2], 4, &mut rng);
    assert!(matches!(plaquette_trivial_test(&asym, 1, &o, &opts()).unwrap(), PlaquetteVerdict::Asymmetric { axis: 0, .. }));
}

#[test]
fn witness_needs_infeasible_solution() {
    let e = StateEnsemble::new(pair(), vec![werner(0.1)]).unwrap();
    let relax = build_h(&e, &HierarchyOptions::level(1)).unwrap();
    let sol = relax.solve(&opts()).unwrap();
    assert!(matches!(extract_witness(&relax, &sol), Err(HierarchyError::WrongStatus(_))));
}

fn pauli_pair(p: Pauli) -> Operator {
    let one = Operator::new(vec![2], p.matrix()).unwrap();
    kron(&one, &one)
}

#[test]
fn star_energies() {
    let s = MarginalScenario::star(4, 2).unwrap();
    let terms: Vec<ObjectiveTerm> = [(2, Pauli::X), (3, Pauli::Y), (4, Pauli::Z)]
        .into_iter()
        .map(|(j, p)| ObjectiveTerm { set: vec![1, j], op: pauli_pair(p) })
        .collect();
    let hbar = minimize(&build_energy(HierarchyKind::Hbar, &s, &terms, &HierarchyOptions::level(2)).unwrap(), &opts()).unwrap();
    assert!((hbar.value + 3f64.sqrt()).abs() < 1e-4, "{}", hbar.value);
    let h1 = minimize(&build_energy(HierarchyKind::H, &s, &terms, &HierarchyOptions::level(1)).unwrap(), &opts()).unwrap();
    assert!((h1.value + 3.0).abs() < 1e-4, "{}", h1.value);
}

#[test]
fn kind_names_round_trip() {
    for k in [HierarchyKind::H, HierarchyKind::Hbar, HierarchyKind::Line, HierarchyKind::Ring, HierarchyKind::Completed, HierarchyKind::Ti1d, HierarchyKind::Ti2d] {
        assert_eq!(k.to_string().parse::<HierarchyKind>().unwrap(), k);
    }
    assert!("bogus".parse::<HierarchyKind>().is_err());
}
