use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hierarchy::{build, check, HierarchyKind, HierarchyOptions, Operator, Verdict};
use crate::scenarios::MarginalScenario;
use crate::sdp::SdpOptions;

use super::{ModelError, Result, Spectrum};

#[derive(Clone, Debug)]
pub struct ScanSettings {
    pub kind: HierarchyKind,
    pub hierarchy: HierarchyOptions,
    pub sdp: SdpOptions,
    /// Inclusive `β` interval.
    pub range: (f64, f64),
    /// Number of grid points, endpoints included.
    pub grid: usize,
    /// Bisection stops once a bracket is this narrow.
    pub resolution: f64,
}

impl ScanSettings {
    pub fn new(kind: HierarchyKind, level: usize, range: (f64, f64), grid: usize) -> Self {
        Self {
            kind,
            hierarchy: HierarchyOptions::level(level),
            sdp: SdpOptions::default(),
            range,
            grid,
            resolution: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanVerdict {
    Feasible,
    Infeasible,
    Inconclusive,
}

impl ScanVerdict {
    fn conclusive(self) -> bool {
        self != Self::Inconclusive
    }
}

/// Verdict changes between `lo` and `hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lo: f64,
    pub hi: f64,
    pub below: ScanVerdict,
    pub above: ScanVerdict,
    /// False when bisection hit an inconclusive solve before reaching the resolution.
    pub resolved: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BetaScanResult {
    pub level: usize,
    pub kind: HierarchyKind,
    pub grid: Vec<(f64, ScanVerdict)>,
    pub transitions: Vec<Transition>,
}

fn verdict_at(sp: &Spectrum, s: &MarginalScenario, beta: f64, set: &ScanSettings) -> Result<ScanVerdict> {
    let e = sp.marginals(beta, s)?;
    let relax = build(set.kind, &e, &set.hierarchy)?;
    Ok(match check(&relax, &set.sdp)?.verdict {
        Verdict::Feasible => ScanVerdict::Feasible,
        Verdict::Infeasible(_) => ScanVerdict::Infeasible,
        Verdict::Inconclusive => ScanVerdict::Inconclusive,
    })
}

fn refine(sp: &Spectrum, s: &MarginalScenario, set: &ScanSettings, mut t: Transition) -> Result<Transition> {
    while t.hi - t.lo > set.resolution {
        let mid = 0.5 * (t.lo + t.hi);
        match verdict_at(sp, s, mid, set)? {
            v if v == t.below => t.lo = mid,
            v if v == t.above => t.hi = mid,
            _ => {
                t.resolved = false;
                return Ok(t);
            }
        }
    }
    t.resolved = true;
    Ok(t)
}

/// Separability verdict of the thermal marginals on a `β` grid, with every
/// change of verdict between neighbouring conclusive grid points bisected
/// down to `resolution`. Grid points and brackets are solved in parallel.
pub fn critical_beta_scan(h: &Operator, s: &MarginalScenario, set: &ScanSettings) -> Result<BetaScanResult> {
    let (lo, hi) = set.range;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) || set.grid < 2 || !(set.resolution > 0.0) {
        return Err(ModelError::Invalid(format!(
            "scan needs 0 <= lo < hi, at least 2 grid points and a positive resolution; got {:?}, {}, {}",
            set.range, set.grid, set.resolution
        )));
    }
    let sp = Spectrum::new(h)?;
    let step = (hi - lo) / (set.grid - 1) as f64;
    let betas: Vec<f64> = (0..set.grid).map(|i| if i + 1 == set.grid { hi } else { lo + i as f64 * step }).collect();
    let verdicts = betas
        .par_iter()
        .map(|&b| verdict_at(&sp, s, b, set))
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<(f64, ScanVerdict)> = betas.into_iter().zip(verdicts).collect();
    let conclusive: Vec<&(f64, ScanVerdict)> = grid.iter().filter(|p| p.1.conclusive()).collect();
    let brackets: Vec<Transition> = conclusive
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| Transition {
            lo: w[0].0,
            hi: w[1].0,
            below: w[0].1,
            above: w[1].1,
            resolved: false,
        })
        .collect();
    let transitions = brackets
        .into_par_iter()
        .map(|t| refine(&sp, s, set, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(BetaScanResult {
        level: set.hierarchy.level,
        kind: set.kind,
        grid,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Boundary, PauliHamiltonian};

    #[test]
    fn two_qubit_heisenberg_has_one_transition() {
        let h = PauliHamiltonian::heisenberg(2, Boundary::Open).unwrap().matrix().unwrap();
        let s = MarginalScenario::custom(vec![(1, 2), (2, 2)], vec![vec![1, 2]]).unwrap();
        let r = critical_beta_scan(&h, &s, &ScanSettings::new(HierarchyKind::H, 1, (0.0, 1.0), 11)).unwrap();
        assert_eq!(r.grid[0].1, ScanVerdict::Feasible);
        assert_eq!(r.transitions.len(), 1);
        let t = r.transitions[0];
        assert!(t.resolved && t.hi - t.lo <= 1e-3);
        let exact = 3f64.ln() / 4.0;
        assert!(t.lo <= exact + 1e-6 && exact - 1e-6 <= t.hi, "{t:?}");
    }

    #[test]
    fn rejects_bad_ranges() {
        let h = PauliHamiltonian::heisenberg(2, Boundary::Open).unwrap().matrix().unwrap();
        let s = MarginalScenario::custom(vec![(1, 2), (2, 2)], vec![vec![1, 2]]).unwrap();
        assert!(critical_beta_scan(&h, &s, &ScanSettings::new(HierarchyKind::H, 1, (1.0, 0.5), 5)).is_err());
    }
}
