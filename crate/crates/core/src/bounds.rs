//! Convergence radii of the hierarchies from the extreme roots of Jacobi
//! polynomials.

use serde::{Deserialize, Serialize};

use crate::linalg::{tridiag_eig, Real};
use crate::scenarios::MarginalScenario;

/// Jacobi matrix (diagonal, off-diagonal) of `P^{(a,b)}_n`, whose
/// eigenvalues are the polynomial's roots.
pub fn jacobi_matrix<T: Real>(n: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    let one = T::one();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let diag = (0..n)
        .map(|k| {
            let s = two * T::of_usize(k) + a + b;
            if k == 0 {
                (b - a) / (a + b + two)
            } else {
                (b * b - a * a) / (s * (s + two))
            }
        })
        .collect();
    let off = (1..n)
        .map(|k| {
            let k = T::of_usize(k);
            let s = two * k + a + b;
            (four * k * (k + a) * (k + b) * (k + a + b) / (s * s * (s + one) * (s - one))).sqrt()
        })
        .collect();
    (diag, off)
}

/// Roots of `P^{(a,b)}_n`, ascending.
pub fn jacobi_roots<T: Real>(n: usize, a: T, b: T) -> Vec<T> {
    if n == 0 {
        return Vec::new();
    }
    let (d, e) = jacobi_matrix(n, a, b);
    tridiag_eig(&d, &e, false).expect("symmetric tridiagonal eigenproblem converges").values
}

/// `P^{(a,b)}_n(x)` by the three-term recurrence.
pub fn jacobi_eval<T: Real>(n: usize, a: T, b: T, x: T) -> T {
    let one = T::one();
    let two = T::lit(2.0);
    let mut p0 = one;
    if n == 0 {
        return p0;
    }
    let mut p1 = (a + one) + (a + b + two) * (x - one) / two;
    for k in 2..=n {
        let k = T::of_usize(k);
        let s = two * k + a + b;
        let c1 = two * k * (k + a + b) * (s - two);
        let c2 = (s - one) * (s * (s - two) * x + a * a - b * b);
        let c3 = two * (k + a - one) * (k + b - one) * s;
        let p2 = (c2 * p1 - c3 * p0) / c1;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// `min (1 - x)` over the roots `x` of `P^{(d-2, L mod 2)}_{⌊L/2⌋+1}`.
pub fn jacobi_min_root_gap<T: Real>(level: usize, d: usize) -> T {
    assert!(level >= 1 && d >= 2, "needs L >= 1 and d >= 2");
    let roots = jacobi_roots(level / 2 + 1, T::of_usize(d - 2), T::of_usize(level % 2));
    T::one() - *roots.last().expect("degree at least 1")
}

/// `ε(L, d) = d / (2(d-1)) * min(1 - x)`; zero for `d = 1`.
pub fn epsilon<T: Real>(level: usize, d: usize) -> T {
    if d == 1 {
        return T::zero();
    }
    T::of_usize(d) / (T::lit(2.0) * T::of_usize(d - 1)) * jacobi_min_root_gap::<T>(level, d)
}

/// Trace-distance radius per set of the scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBound {
    pub level: usize,
    pub per_set: Vec<(Vec<usize>, f64)>,
}

/// Which sites enter the product of the trace-distance bound.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundVariant {
    /// Every site of `I` is extended (hierarchy 𝗛).
    AllSites,
    /// The listed private site of each set is skipped (hierarchy 𝗛̄).
    SkipPrivate(Vec<Option<usize>>),
}

/// `2 (1 - Π_α (1 - ε(L, d_α)))` for every set `I`, the product running over
/// the extended sites of `I`.
pub fn prop1_bound(s: &MarginalScenario, level: usize, variant: &BoundVariant) -> ConvergenceBound {
    let per_set = s
        .sets()
        .iter()
        .enumerate()
        .map(|(k, set)| {
            let skip = match variant {
                BoundVariant::AllSites => None,
                BoundVariant::SkipPrivate(p) => p.get(k).copied().flatten(),
            };
            let prod: f64 = set
                .iter()
                .filter(|&&a| Some(a) != skip)
                .map(|&a| 1.0 - epsilon::<f64>(level, s.dim_of(a).expect("validated site")))
                .product();
            (set.clone(), (2.0 * (1.0 - prod)).clamp(0.0, 2.0))
        })
        .collect();
    ConvergenceBound { level, per_set }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_values() {
        assert!((epsilon::<f64>(1, 2) - 2.0 / 3.0).abs() < 1e-14);
        assert!((epsilon::<f64>(2, 2) - (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-14);
        assert!((epsilon::<f32>(2, 2) - (1.0 - 1.0 / 3f32.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn recurrence_matches_legendre() {
        // P_3(x) = (5x^3 - 3x) / 2
        for x in [-0.9f64, -0.2, 0.4, 1.0] {
            assert!((jacobi_eval(3, 0.0, 0.0, x) - (5.0 * x * x * x - 3.0 * x) / 2.0).abs() < 1e-14);
        }
        // P^{(0,1)}_1(x) = (3x - 1) / 2
        assert!((jacobi_eval(1, 0.0, 1.0, 0.5f64) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn roots_vanish_under_recurrence() {
        for n in 1..8 {
            for (a, b) in [(0.0f64, 0.0), (1.0, 0.0), (2.0, 1.0), (3.0, 1.0)] {
                for x in jacobi_roots(n, a, b) {
                    assert!(x > -1.0 && x < 1.0);
                    assert!(jacobi_eval(n, a, b, x).abs() < 1e-10, "n={n} a={a} b={b} x={x}");
                }
            }
        }
    }

    #[test]
    fn prop1_variants() {
        let s = MarginalScenario::star(3, 2).unwrap();
        let e = epsilon::<f64>(2, 2);
        let all = prop1_bound(&s, 2, &BoundVariant::AllSites);
        assert!((all.per_set[0].1 - 2.0 * (1.0 - (1.0 - e).powi(2))).abs() < 1e-14);
        let skip = prop1_bound(&s, 2, &BoundVariant::SkipPrivate(vec![Some(2), Some(3)]));
        assert!((skip.per_set[1].1 - 2.0 * e).abs() < 1e-14);
        let high = prop1_bound(&s, 1, &BoundVariant::AllSites);
        assert!(high.per_set.iter().all(|p| p.1 <= 2.0));
    }
}
