use crate::hierarchy::{Operator, StateEnsemble};
use crate::linalg::{herm_eig, ComplexMatrix, C};
use crate::scenarios::MarginalScenario;

use super::{ModelError, Result, MAX_SITES};

/// Boltzmann weights below this fraction of the ground-state weight are dropped.
const WEIGHT_CUTOFF: f64 = 1e-18;

/// Eigendecomposition of a Hamiltonian, reused across inverse temperatures.
#[derive(Clone, Debug)]
pub struct Spectrum {
    dims: Vec<usize>,
    values: Vec<f64>,
    vectors: ComplexMatrix<f64>,
}

impl Spectrum {
    pub fn new(h: &Operator) -> Result<Self> {
        if h.dims().len() > MAX_SITES {
            return Err(ModelError::TooLarge {
                sites: h.dims().len(),
                max: MAX_SITES,
            });
        }
        let e = herm_eig(h.matrix())?;
        Ok(Self {
            dims: h.dims().to_vec(),
            values: e.values,
            vectors: e.vectors,
        })
    }

    pub fn ground_energy(&self) -> f64 {
        self.values[0]
    }

    /// Normalised weights `e^{-β(E_k - E_0)} / Z`, truncated.
    fn weights(&self, beta: f64) -> Vec<(usize, f64)> {
        let e0 = self.values[0];
        let w: Vec<(usize, f64)> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &e)| (k, (-beta * (e - e0)).exp()))
            .filter(|&(_, w)| w > WEIGHT_CUTOFF)
            .collect();
        let z: f64 = w.iter().map(|p| p.1).sum();
        w.into_iter().map(|(k, x)| (k, x / z)).collect()
    }

    /// Full thermal state `e^{-βH} / Z`.
    pub fn thermal_state(&self, beta: f64) -> Operator {
        let keep: Vec<usize> = (0..self.dims.len()).collect();
        self.reduced(beta, &keep)
    }

    /// Thermal marginal on subsystem positions `keep` (ascending), computed
    /// eigenvector by eigenvector without forming the global state.
    pub fn reduced(&self, beta: f64, keep: &[usize]) -> Operator {
        let n = self.dims.len();
        let total: usize = self.dims.iter().product();
        let kept_dims: Vec<usize> = keep.iter().map(|&p| self.dims[p]).collect();
        let dk: usize = kept_dims.iter().product();
        // split each flat index into (kept index, rest index)
        let mut split = vec![(0usize, 0usize); total];
        let mut digits = vec![0usize; n];
        for slot in split.iter_mut() {
            let (mut a, mut r) = (0, 0);
            for p in 0..n {
                if keep.contains(&p) {
                    a = a * self.dims[p] + digits[p];
                } else {
                    r = r * self.dims[p] + digits[p];
                }
            }
            *slot = (a, r);
            for p in (0..n).rev() {
                digits[p] += 1;
                if digits[p] < self.dims[p] {
                    break;
                }
                digits[p] = 0;
            }
        }
        let dr = total / dk;
        let mut rho = ComplexMatrix::zeros(dk, dk);
        let mut m = vec![C::new(0.0, 0.0); dk * dr];
        for (k, w) in self.weights(beta) {
            for (i, &(a, r)) in split.iter().enumerate() {
                m[a * dr + r] = self.vectors[(i, k)];
            }
            for a in 0..dk {
                for b in a..dk {
                    let s: C<f64> = (0..dr).map(|r| m[a * dr + r] * m[b * dr + r].conj()).sum();
                    rho[(a, b)] += s * w;
                }
            }
        }
        for a in 0..dk {
            rho[(a, a)].im = 0.0;
            for b in a + 1..dk {
                rho[(b, a)] = rho[(a, b)].conj();
            }
        }
        Operator::new(kept_dims, rho).expect("Hermitian by construction")
    }

    /// Thermal marginals on every set of `s`; sites map to subsystems in scenario order.
    pub fn marginals(&self, beta: f64, s: &MarginalScenario) -> Result<StateEnsemble> {
        if s.num_sites() != self.dims.len() {
            return Err(ModelError::Invalid(format!(
                "scenario has {} sites, Hamiltonian {}",
                s.num_sites(),
                self.dims.len()
            )));
        }
        let states = s
            .sets()
            .iter()
            .map(|set| {
                let mut keep: Vec<usize> = set.iter().map(|&a| s.position(a).expect("validated set")).collect();
                keep.sort_unstable();
                self.reduced(beta, &keep)
            })
            .collect();
        Ok(StateEnsemble::new(s.clone(), states)?)
    }
}

/// Marginals of `e^{-βH} / Z` on the sets of `s`.
pub fn thermal_marginals(h: &Operator, beta: f64, s: &MarginalScenario) -> Result<StateEnsemble> {
    Spectrum::new(h)?.marginals(beta, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Boundary, PauliHamiltonian};
    use crate::qops::partial_trace;

    #[test]
    fn infinite_temperature_is_maximally_mixed() {
        let h = PauliHamiltonian::xy_chain(4, Boundary::Periodic).unwrap().matrix().unwrap();
        let e = thermal_marginals(&h, 0.0, &MarginalScenario::ring(4, 2).unwrap()).unwrap();
        for rho in e.states() {
            let mm = Operator::maximally_mixed(vec![2, 2]).unwrap();
            assert!((rho.matrix() - mm.matrix()).max_abs() < 1e-14);
        }
    }

    #[test]
    fn heisenberg_singlet_weight() {
        let h = PauliHamiltonian::heisenberg(2, Boundary::Open).unwrap().matrix().unwrap();
        let sp = Spectrum::new(&h).unwrap();
        assert!((sp.ground_energy() + 3.0).abs() < 1e-12);
        let beta = 0.4f64;
        let rho = sp.thermal_state(beta);
        let h = 0.5f64.sqrt();
        let singlet = Operator::pure(vec![2, 2], &[C::new(0.0, 0.0), C::new(h, 0.0), C::new(-h, 0.0), C::new(0.0, 0.0)]).unwrap();
        let expect = (3.0 * beta).exp() / ((3.0 * beta).exp() + 3.0 * (-beta).exp());
        assert!((rho.expectation(&singlet) - expect).abs() < 1e-12);
    }

    #[test]
    fn reduced_matches_partial_trace_of_full_state() {
        let h = PauliHamiltonian::heisenberg(4, Boundary::Open).unwrap().matrix().unwrap();
        let sp = Spectrum::new(&h).unwrap();
        let full = sp.thermal_state(0.7);
        for keep in [vec![0, 2], vec![1, 2, 3], vec![3]] {
            let a = sp.reduced(0.7, &keep);
            let b = partial_trace(&full, &keep).unwrap();
            assert!((a.matrix() - b.matrix()).max_abs() < 1e-13);
        }
    }
}
