use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sepmarg::linalg::{sym_eigvals, RealMatrix};
use sepmarg::sdp::{
    extract_farkas, solve, write_sdpa, EqRow, LmiBlock, SdpError, SdpInstance, SdpOptions, SdpStatus, SparseSym,
    StandardSdp, StdEntry,
};

fn opts() -> SdpOptions {
    SdpOptions::default()
}

fn random_sym(n: usize, rng: &mut ChaCha8Rng) -> RealMatrix<f64> {
    let mut m = RealMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.gen_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn dense_entries(block: usize, m: &RealMatrix<f64>) -> Vec<StdEntry> {
    let mut out = Vec::new();
    for i in 0..m.rows() {
        for j in i..m.cols() {
            if m[(i, j)] != 0.0 {
                out.push(StdEntry::new(block, i, j, m[(i, j)]));
            }
        }
    }
    out
}

fn min_eig(m: &RealMatrix<f64>) -> f64 {
    sym_eigvals(m).unwrap()[0]
}

fn trace_one(sdp: &mut StandardSdp, block: usize, dim: usize) {
    sdp.add_constraint((0..dim).map(|i| StdEntry::new(block, i, i, 1.0)).collect(), 1.0);
}

#[test]
fn two_by_two_lmi() {
    // min x  s.t. [[x, 1], [1, x]] PSD
    let mut inst = SdpInstance::new(1);
    inst.objective[0] = 1.0;
    let mut blk = LmiBlock::new(2);
    blk.constant = SparseSym::from_entries(2, [(0, 1, -1.0)]);
    blk.add_term(0, SparseSym::from_entries(2, [(0, 0, 1.0), (1, 1, 1.0)]));
    inst.blocks.push(blk);
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!((sol.x[0] - 1.0).abs() < 1e-7, "{}", sol.x[0]);
    assert!((sol.dual_objective - 1.0).abs() < 1e-7);
}

#[test]
fn largest_eigenvalue_matches_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [1, 3, 6] {
        let a = random_sym(n, &mut rng);
        // min t  s.t.  t I - A PSD
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 1.0;
        let mut blk = LmiBlock::new(n);
        blk.constant = SparseSym::from_entries(n, (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).map(|(i, j)| (i, j, a[(i, j)])));
        blk.add_term(0, SparseSym::from_entries(n, (0..n).map(|i| (i, i, 1.0))));
        inst.blocks.push(blk);
        let sol = solve(&inst, &opts()).unwrap();
        let lmax = *sym_eigvals(&a).unwrap().last().unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.x[0] - lmax).abs() < 1e-7, "n={n}: {} vs {lmax}", sol.x[0]);
    }
}

#[test]
fn standard_form_min_eigenvalue_and_dual_slack() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = random_sym(4, &mut rng);
    let mut sdp = StandardSdp::new(vec![4]);
    sdp.objective = dense_entries(0, &c);
    trace_one(&mut sdp, 0, 4);
    let inst = sdp.to_instance().unwrap();
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    let lmin = min_eig(&c);
    assert!((sol.primal_objective - lmin).abs() < 1e-7);
    assert!((sol.y[0] - lmin).abs() < 1e-7);
    let x = &sdp.primal_blocks(&sol.x)[0];
    assert!((x.trace() - 1.0).abs() < 1e-8);
    assert!(min_eig(x) > -1e-8);
    let z = &sdp.dual_slack(&sol.y)[0];
    assert!(min_eig(z) > -1e-7);
    // the slack computed from y agrees with the solver's dual block
    assert!((z - &sol.dual_blocks[0]).max_abs() < 1e-7);
}

fn infeasible_trace_problem(scale: f64) -> StandardSdp {
    // tr X = 1 and tr(diag(1, -1) X) = 2 cannot both hold for PSD X
    let mut sdp = StandardSdp::new(vec![2]);
    sdp.add_constraint(vec![StdEntry::new(0, 0, 0, scale), StdEntry::new(0, 1, 1, scale)], scale);
    sdp.add_constraint(vec![StdEntry::new(0, 0, 0, scale), StdEntry::new(0, 1, 1, -scale)], 2.0 * scale);
    sdp
}

#[test]
fn detects_infeasibility_with_valid_certificate() {
    for scale in [1.0, 10.0, 0.1] {
        let sdp = infeasible_trace_problem(scale);
        let inst = sdp.to_instance().unwrap();
        let sol = solve(&inst, &opts()).unwrap();
        assert_eq!(sol.status, SdpStatus::PrimalInfeasible, "scale {scale}");
        let ray = extract_farkas(&sol, &inst).unwrap();
        let check = ray.check(&inst);
        assert!(check.holds(1e-6), "scale {scale}: {check:?}");
        // the same certificate in standard-form terms: -sum y_i A_i PSD, b^T y > 0
        let w = &sdp.farkas_matrix(&sol)[0];
        assert!(min_eig(w) > -1e-6 * w.max_abs().max(1.0));
        let by: f64 = sdp.constraints.iter().zip(&ray.y).map(|((_, b), y)| b * y).sum();
        assert!((by - 1.0).abs() < 1e-9);
    }
}

#[test]
fn inconsistent_equalities_are_certified() {
    let mut inst = SdpInstance::new(2);
    let mut blk = LmiBlock::new(2);
    blk.add_term(0, SparseSym::from_entries(2, [(0, 0, 1.0)]));
    blk.add_term(1, SparseSym::from_entries(2, [(1, 1, 1.0)]));
    inst.blocks.push(blk);
    inst.rows.push(EqRow { coeffs: vec![(0, 1.0), (1, 1.0)], rhs: 1.0 });
    inst.rows.push(EqRow { coeffs: vec![(0, 2.0), (1, 2.0)], rhs: 3.0 });
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::PrimalInfeasible);
    let ray = extract_farkas(&sol, &inst).unwrap();
    assert!(ray.check(&inst).holds(1e-9));
}

#[test]
fn dependent_consistent_rows_are_dropped() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = random_sym(3, &mut rng);
    let mut sdp = StandardSdp::new(vec![3]);
    sdp.objective = dense_entries(0, &c);
    trace_one(&mut sdp, 0, 3);
    let row: Vec<StdEntry> = (0..3).map(|i| StdEntry::new(0, i, i, 2.0)).collect();
    sdp.add_constraint(row, 2.0);
    let inst = sdp.to_instance().unwrap();
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_eq!(sol.dropped_rows, vec![1]);
    assert!((sol.primal_objective - min_eig(&c)).abs() < 1e-7);
}

#[test]
fn unbounded_problem_is_dual_infeasible() {
    // min -x  s.t.  x >= 0
    let mut inst = SdpInstance::new(1);
    inst.objective[0] = -1.0;
    let mut blk = LmiBlock::new(1);
    blk.add_term(0, SparseSym::from_entries(1, [(0, 0, 1.0)]));
    inst.blocks.push(blk);
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::DualInfeasible);
    assert!((inst.objective_value(&sol.x) + 1.0).abs() < 1e-12);
}

#[test]
fn farkas_on_optimal_solution_is_wrong_status() {
    let mut sdp = StandardSdp::new(vec![2]);
    trace_one(&mut sdp, 0, 2);
    let inst = sdp.to_instance().unwrap();
    let sol = solve(&inst, &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_eq!(extract_farkas(&sol, &inst).unwrap_err(), SdpError::WrongStatus(SdpStatus::Optimal));
}

#[test]
fn ill_formed_instances_are_rejected() {
    let mut inst = SdpInstance::new(2);
    let mut blk = LmiBlock::new(2);
    blk.add_term(0, SparseSym::from_entries(2, [(0, 0, 1.0)]));
    inst.blocks.push(blk);
    assert!(matches!(solve(&inst, &opts()), Err(SdpError::IllFormed(_))));
    inst.blocks[0].add_term(1, SparseSym::from_entries(2, [(0, 2, 1.0)]));
    assert!(matches!(solve(&inst, &opts()), Err(SdpError::IllFormed(_))));
}

/// A chain of small blocks coupled by equalities, once with separate blocks
/// and once as a single block-diagonal matrix variable.
fn chain_problem(k: usize, merged: bool, seed: u64) -> (StandardSdp, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cs: Vec<RealMatrix<f64>> = (0..k).map(|_| random_sym(2, &mut rng)).collect();
    let dims = if merged { vec![2 * k] } else { vec![2; k] };
    let loc = |b: usize, i: usize| if merged { (0, 2 * b + i) } else { (b, i) };
    let mut sdp = StandardSdp::new(dims);
    for (b, c) in cs.iter().enumerate() {
        for i in 0..2 {
            for j in i..2 {
                let (blk, p) = loc(b, i);
                let (_, q) = loc(b, j);
                sdp.objective.push(StdEntry::new(blk, p, q, c[(i, j)]));
            }
        }
        let (blk, p0) = loc(b, 0);
        let (_, p1) = loc(b, 1);
        sdp.add_constraint(vec![StdEntry::new(blk, p0, p0, 1.0), StdEntry::new(blk, p1, p1, 1.0)], 1.0);
        if b + 1 < k {
            let (nb, q1) = loc(b + 1, 1);
            sdp.add_constraint(vec![StdEntry::new(blk, p0, p0, 1.0), StdEntry::new(nb, q1, q1, -1.0)], 0.0);
        }
    }
    let sol = solve(&sdp.to_instance().unwrap(), &opts()).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    (sdp, sol.primal_objective)
}

#[test]
fn split_blocks_match_merged_block() {
    for seed in 0..3 {
        let (_, split) = chain_problem(6, false, seed);
        let (_, merged) = chain_problem(6, true, seed);
        assert!((split - merged).abs() < 1e-6, "seed {seed}: {split} vs {merged}");
    }
}

#[test]
fn solves_are_deterministic() {
    let inst = chain_problem(5, false, 42).0.to_instance().unwrap();
    let a = solve(&inst, &opts()).unwrap();
    let b = solve(&inst, &opts()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.y, b.y);
    assert_eq!(a.iterations, b.iterations);
}

#[test]
fn dump_lists_every_coefficient() {
    let inst = infeasible_trace_problem(1.0).to_instance().unwrap();
    let mut buf = Vec::new();
    write_sdpa(&inst, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("3"));
    assert_eq!(lines.next(), Some("2"));
    assert_eq!(lines.next(), Some("2 -4"));
    let entries: Vec<Vec<f64>> = lines.skip(1).map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect()).collect();
    assert!(entries.iter().all(|e| e.len() == 5));
    // 3 unit matrices, 2 right-hand sides and 4 coefficients, each row twice
    assert_eq!(entries.len(), 3 + 2 * (2 + 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duality_gap_closes_and_iterates_are_feasible(seed in 0u64..10_000, n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_sym(n, &mut rng);
        let a = random_sym(n, &mut rng);
        // min <C, X>  s.t.  tr X = 1, <A, X> = t with t strictly inside the numerical range
        let ev = sym_eigvals(&a).unwrap();
        let t = 0.3 * ev[0] + 0.7 * ev[n - 1];
        let mut sdp = StandardSdp::new(vec![n]);
        sdp.objective = dense_entries(0, &c);
        trace_one(&mut sdp, 0, n);
        sdp.add_constraint(dense_entries(0, &a), t);
        let inst = sdp.to_instance().unwrap();
        let sol = solve(&inst, &opts()).unwrap();
        prop_assert_eq!(sol.status, SdpStatus::Optimal);
        let x = &sdp.primal_blocks(&sol.x)[0];
        let z = &sdp.dual_slack(&sol.y)[0];
        prop_assert!(min_eig(x) > -1e-7);
        prop_assert!(min_eig(z) > -1e-6);
        prop_assert!(sol.primal_objective - sol.dual_objective > -1e-7);
        prop_assert!(sol.gap < 1e-6);
        // the optimum is no worse than a random feasible point built from eigenvectors
        prop_assert!(sol.primal_objective <= x.dot(&c) + 1e-7);
        prop_assert!(sol.primal_objective >= min_eig(&c) - 1e-7);
    }
}
