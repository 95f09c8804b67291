//! Random states for sampling oracles and synthetic ensembles.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::hierarchy::Operator;
use crate::linalg::{ComplexMatrix, C};
use crate::qops::kron;

fn gaussian(rng: &mut impl Rng) -> C<f64> {
    C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random unit vector in `C^d`.
pub fn random_pure(d: usize, rng: &mut impl Rng) -> Vec<C<f64>> {
    let v: Vec<C<f64>> = (0..d).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// Haar-random real unit vector in `R^d`.
pub fn random_real_pure(d: usize, rng: &mut impl Rng) -> Vec<C<f64>> {
    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| C::new(x / norm, 0.0)).collect()
}

/// `G G^† / tr(G G^†)` for a `d x rank` complex Ginibre matrix `G`.
pub fn random_density(dims: &[usize], rank: usize, rng: &mut impl Rng) -> Operator {
    let d: usize = dims.iter().product();
    let g = ComplexMatrix::from_fn(d, rank.max(1), |_, _| gaussian(rng));
    let m = g.matmul(&g.adjoint());
    let tr = m.trace().re;
    Operator::new(dims.to_vec(), m.scale(1.0 / tr).hermitian_part()).expect("Gram matrices are Hermitian")
}

/// Pure product state with Haar-random factors.
pub fn random_product(dims: &[usize], rng: &mut impl Rng) -> Operator {
    dims.iter()
        .map(|&d| Operator::pure(vec![d], &random_pure(d, rng)).expect("unit vector"))
        .reduce(|a, b| kron(&a, &b))
        .expect("at least one subsystem")
}

/// Uniformly weighted mixture of `terms` random product states.
pub fn random_separable(dims: &[usize], terms: usize, rng: &mut impl Rng) -> Operator {
    let w: Vec<f64> = (0..terms.max(1)).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.iter()
        .map(|&p| random_product(dims, rng).scale(p / total))
        .reduce(|a, b| a.add(&b).expect("same shape"))
        .expect("at least one term")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::partial_transpose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_are_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for rho in [random_density(&[2, 3], 6, &mut rng), random_product(&[2, 3], &mut rng), random_separable(&[2, 2], 4, &mut rng)] {
            assert!((rho.trace() - 1.0).abs() < 1e-12);
            assert!(rho.min_eigenvalue().unwrap() > -1e-12);
        }
    }

    #[test]
    fn separable_samples_are_ppt() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let rho = random_separable(&[2, 2], 3, &mut rng);
            assert!(partial_transpose(&rho, &[1]).unwrap().min_eigenvalue().unwrap() > -1e-12);
        }
    }
}
