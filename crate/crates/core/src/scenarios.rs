//! Marginal scenarios and the chordal-graph layer: dependency graphs,
//! chordality tests, maximal cliques in running-intersection order and
//! chordal completions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("translation-invariant scenarios have no finite dependency graph")]
    InfiniteScenario,
    #[error("graph is not chordal")]
    NotChordal,
    #[error("set {0} is empty")]
    EmptySet(usize),
    #[error("unknown site label {0}")]
    UnknownSite(usize),
    #[error("site label {0} listed twice")]
    DuplicateSite(usize),
    #[error("site {0} belongs to no set")]
    SiteNotCovered(usize),
    #[error("site {0} has dimension 0")]
    ZeroDimension(usize),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScenarioKind {
    Custom,
    Star,
    Line,
    Ring,
    /// Window of `k` consecutive sites of an infinite chain.
    Ti1d { k: usize },
    /// `2 x l` plaquette of an infinite square lattice with reflection symmetry.
    Ti2dReflect { l: usize },
}

impl ScenarioKind {
    pub fn is_finite(&self) -> bool {
        !matches!(self, Self::Ti1d { .. } | Self::Ti2dReflect { .. })
    }
}

/// Sites with local dimensions and the family of index sets whose marginals
/// are given. Sets are stored with labels in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarginalScenario {
    sites: Vec<usize>,
    dims: Vec<usize>,
    sets: Vec<Vec<usize>>,
    kind: ScenarioKind,
}

impl MarginalScenario {
    pub fn new(sites: Vec<(usize, usize)>, sets: Vec<Vec<usize>>, kind: ScenarioKind) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &(label, d) in &sites {
            if !seen.insert(label) {
                return Err(ScenarioError::DuplicateSite(label));
            }
            if d == 0 {
                return Err(ScenarioError::ZeroDimension(label));
            }
        }
        let mut covered = BTreeSet::new();
        let mut norm_sets = Vec::with_capacity(sets.len());
        for (i, set) in sets.into_iter().enumerate() {
            if set.is_empty() {
                return Err(ScenarioError::EmptySet(i));
            }
            let mut s = set;
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(ScenarioError::Invalid(format!("set {i} repeats a site")));
            }
            for &a in &s {
                if !seen.contains(&a) {
                    return Err(ScenarioError::UnknownSite(a));
                }
                covered.insert(a);
            }
            norm_sets.push(s);
        }
        if let Some(&(label, _)) = sites.iter().find(|(l, _)| !covered.contains(l)) {
            return Err(ScenarioError::SiteNotCovered(label));
        }
        let (labels, dims) = sites.into_iter().unzip();
        Ok(Self {
            sites: labels,
            dims,
            sets: norm_sets,
            kind,
        })
    }

    pub fn custom(sites: Vec<(usize, usize)>, sets: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(sites, sets, ScenarioKind::Custom)
    }

    fn uniform(n: usize, d: usize) -> Vec<(usize, usize)> {
        (1..=n).map(|a| (a, d)).collect()
    }

    /// Site 1 paired with each of sites 2..n.
    pub fn star(n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(ScenarioError::Invalid("a star needs at least 2 sites".into()));
        }
        Self::new(Self::uniform(n, d), (2..=n).map(|j| vec![1, j]).collect(), ScenarioKind::Star)
    }

    /// Nearest-neighbour pairs `{j, j+1}` of an open chain.
    pub fn line(n: usize, d: usize) -> Result<Self> {
        if n < 2 {
            return Err(ScenarioError::Invalid("a line needs at least 2 sites".into()));
        }
        Self::new(Self::uniform(n, d), (1..n).map(|j| vec![j, j + 1]).collect(), ScenarioKind::Line)
    }

    /// Nearest-neighbour pairs of a closed chain, ending with `{1, n}`.
    pub fn ring(n: usize, d: usize) -> Result<Self> {
        if n < 3 {
            return Err(ScenarioError::Invalid("a ring needs at least 3 sites".into()));
        }
        let sets = (1..=n).map(|j| vec![j, j % n + 1]).collect();
        Self::new(Self::uniform(n, d), sets, ScenarioKind::Ring)
    }

    /// Window `{1..k}` of a translation-invariant chain.
    pub fn ti1d(k: usize, d: usize) -> Result<Self> {
        if k < 1 {
            return Err(ScenarioError::Invalid("window needs at least 1 site".into()));
        }
        Self::new(Self::uniform(k, d), vec![(1..=k).collect()], ScenarioKind::Ti1d { k })
    }

    /// `2 x l` plaquette; site `(x, y)`, `x in {1, 2}`, `y in 1..=l`, has label `2(y-1) + x`.
    pub fn ti2d_reflect(l: usize, d: usize) -> Result<Self> {
        if l < 1 {
            return Err(ScenarioError::Invalid("plaquette needs at least 1 column".into()));
        }
        Self::new(Self::uniform(2 * l, d), vec![(1..=2 * l).collect()], ScenarioKind::Ti2dReflect { l })
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn position(&self, label: usize) -> Option<usize> {
        self.sites.iter().position(|&s| s == label)
    }

    pub fn dim_of(&self, label: usize) -> Option<usize> {
        self.position(label).map(|p| self.dims[p])
    }

    /// Local dimensions of the sites of `set`, in set order.
    pub fn set_dims(&self, set: &[usize]) -> Result<Vec<usize>> {
        set.iter().map(|&a| self.dim_of(a).ok_or(ScenarioError::UnknownSite(a))).collect()
    }

    /// Index of `set` (any order) in the family.
    pub fn set_index(&self, set: &[usize]) -> Option<usize> {
        let mut s = set.to_vec();
        s.sort_unstable();
        self.sets.iter().position(|t| *t == s)
    }
}

/// Undirected simple graph on labelled vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyGraph {
    vertices: Vec<usize>,
    adj: Vec<BTreeSet<usize>>,
}

impl DependencyGraph {
    pub fn new(vertices: Vec<usize>) -> Self {
        let n = vertices.len();
        Self {
            vertices,
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    fn idx(&self, label: usize) -> usize {
        self.vertices
            .iter()
            .position(|&v| v == label)
            .unwrap_or_else(|| panic!("vertex {label} not in graph"))
    }

    /// Adds edge `{a, b}`; returns false if it was already present or `a == b`.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let (i, j) = (self.idx(a), self.idx(b));
        let fresh = self.adj[i].insert(j);
        self.adj[j].insert(i);
        fresh
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[self.idx(a)].contains(&self.idx(b))
    }

    pub fn neighbors(&self, a: usize) -> Vec<usize> {
        self.adj[self.idx(a)].iter().map(|&j| self.vertices[j]).collect()
    }

    /// Edges `(a, b)` by vertex position, `pos(a) < pos(b)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.adj.iter().enumerate() {
            for &j in nb.range(i + 1..) {
                out.push((self.vertices[i], self.vertices[j]));
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(|s| s.len()).sum::<usize>() / 2
    }

    pub fn is_clique(&self, set: &[usize]) -> bool {
        set.iter().enumerate().all(|(k, &a)| set[k + 1..].iter().all(|&b| self.has_edge(a, b)))
    }

    /// Position order in which ties are broken: lowest label first.
    fn label_rank(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| self.vertices[i]);
        let mut rank = vec![0; self.len()];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r;
        }
        rank
    }
}

pub fn build_graph(s: &MarginalScenario) -> Result<DependencyGraph> {
    if !s.kind.is_finite() {
        return Err(ScenarioError::InfiniteScenario);
    }
    let mut g = DependencyGraph::new(s.sites.clone());
    for set in &s.sets {
        for (k, &a) in set.iter().enumerate() {
            for &b in &set[k + 1..] {
                g.add_edge(a, b);
            }
        }
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChordalTest {
    pub chordal: bool,
    /// Perfect elimination ordering (vertex labels) when chordal.
    pub peo: Option<Vec<usize>>,
}

/// Maximum cardinality search visiting order (ties: lowest label).
fn mcs_order(g: &DependencyGraph) -> Vec<usize> {
    let n = g.len();
    let rank = g.label_rank();
    let mut weight = vec![0usize; n];
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&i| !done[i])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(rank[b].cmp(&rank[a])))
            .expect("unvisited vertex remains");
        done[v] = true;
        order.push(v);
        for &u in &g.adj[v] {
            if !done[u] {
                weight[u] += 1;
            }
        }
    }
    order
}

/// Whether `peo` (positions) is a perfect elimination ordering of `g`.
fn is_peo(g: &DependencyGraph, peo: &[usize]) -> bool {
    let mut pos = vec![0; g.len()];
    for (k, &v) in peo.iter().enumerate() {
        pos[v] = k;
    }
    for &v in peo {
        let later: Vec<usize> = g.adj[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
        if let Some(&first) = later.iter().min_by_key(|&&u| pos[u]) {
            if later.iter().any(|&u| u != first && !g.adj[first].contains(&u)) {
                return false;
            }
        }
    }
    true
}

pub fn is_chordal(g: &DependencyGraph) -> ChordalTest {
    let mut order = mcs_order(g);
    order.reverse();
    if is_peo(g, &order) {
        ChordalTest {
            chordal: true,
            peo: Some(order.iter().map(|&i| g.vertices[i]).collect()),
        }
    } else {
        ChordalTest {
            chordal: false,
            peo: None,
        }
    }
}

/// Each clique's intersection with the union of its predecessors lies inside
/// one predecessor.
pub fn running_intersection_holds(cliques: &[Vec<usize>]) -> bool {
    let mut union: BTreeSet<usize> = BTreeSet::new();
    for (k, c) in cliques.iter().enumerate() {
        if k > 0 {
            let sep: Vec<usize> = c.iter().copied().filter(|a| union.contains(a)).collect();
            if !cliques[..k].iter().any(|p| sep.iter().all(|a| p.contains(a))) {
                return false;
            }
        }
        union.extend(c.iter().copied());
    }
    true
}

/// Maximal cliques of a chordal graph in running-intersection order, each
/// sorted by label.
pub fn maximal_cliques_chordal(g: &DependencyGraph, peo: &[usize]) -> Result<Vec<Vec<usize>>> {
    if peo.len() != g.len() {
        return Err(ScenarioError::NotChordal);
    }
    let order: Vec<usize> = peo.iter().map(|&a| g.idx(a)).collect();
    if !is_peo(g, &order) {
        return Err(ScenarioError::NotChordal);
    }
    let mut pos = vec![0; g.len()];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    let candidates: Vec<BTreeSet<usize>> = order
        .iter()
        .map(|&v| {
            let mut c: BTreeSet<usize> = g.adj[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
            c.insert(v);
            c
        })
        .collect();
    let mut cliques = Vec::new();
    // reverse elimination order gives the running-intersection order
    for (k, c) in candidates.iter().enumerate().rev() {
        let dominated = candidates
            .iter()
            .enumerate()
            .any(|(j, d)| j != k && d.len() > c.len() && c.is_subset(d));
        let repeated = candidates[k + 1..].iter().any(|d| d == c);
        if !dominated && !repeated {
            let mut labels: Vec<usize> = c.iter().map(|&i| g.vertices[i]).collect();
            labels.sort_unstable();
            cliques.push(labels);
        }
    }
    debug_assert!(running_intersection_holds(&cliques));
    Ok(cliques)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completion {
    pub graph: DependencyGraph,
    pub added_edges: Vec<(usize, usize)>,
    /// Maximal cliques of the completed graph in running-intersection order.
    pub cliques: Vec<Vec<usize>>,
    /// For each set of the scenario, the index of a clique containing it.
    pub clique_of_set: Vec<usize>,
}

/// Greedy min-fill elimination; ties broken by lowest label.
fn min_fill(g: &DependencyGraph) -> Vec<(usize, usize)> {
    let n = g.len();
    let rank = g.label_rank();
    let mut adj = g.adj.clone();
    let mut alive = vec![true; n];
    let mut added = Vec::new();
    for _ in 0..n {
        let fill = |v: usize, adj: &[BTreeSet<usize>]| -> usize {
            let nb: Vec<usize> = adj[v].iter().copied().collect();
            let mut f = 0;
            for (k, &a) in nb.iter().enumerate() {
                for &b in &nb[k + 1..] {
                    if !adj[a].contains(&b) {
                        f += 1;
                    }
                }
            }
            f
        };
        let v = (0..n)
            .filter(|&i| alive[i])
            .min_by_key(|&i| (fill(i, &adj), rank[i]))
            .expect("vertex remains");
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        for (k, &a) in nb.iter().enumerate() {
            for &b in &nb[k + 1..] {
                if adj[a].insert(b) {
                    adj[b].insert(a);
                    added.push((g.vertices[a], g.vertices[b]));
                }
            }
        }
        alive[v] = false;
        for &u in &nb {
            adj[u].remove(&v);
        }
    }
    added
}

/// Chordal supergraph of the dependency graph. Rings are completed by the
/// fan from their first site; other scenarios by greedy min-fill.
pub fn chordal_complete(s: &MarginalScenario) -> Result<Completion> {
    let mut graph = build_graph(s)?;
    let fill = if s.kind == ScenarioKind::Ring {
        let hub = s.sites[0];
        let n = s.sites.len();
        (2..n - 1).map(|j| (hub, s.sites[j])).collect()
    } else {
        min_fill(&graph)
    };
    let mut added_edges = Vec::new();
    for (a, b) in fill {
        if graph.add_edge(a, b) {
            added_edges.push((a, b));
        }
    }
    let test = is_chordal(&graph);
    let peo = test.peo.ok_or(ScenarioError::NotChordal)?;
    let cliques = maximal_cliques_chordal(&graph, &peo)?;
    let clique_of_set = s
        .sets
        .iter()
        .map(|set| {
            cliques
                .iter()
                .position(|c| set.iter().all(|a| c.contains(a)))
                .expect("every set is a clique of the dependency graph")
        })
        .collect();
    Ok(Completion {
        graph,
        added_edges,
        cliques,
        clique_of_set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> DependencyGraph {
        let mut g = DependencyGraph::new((1..=n).collect());
        for j in 1..=n {
            g.add_edge(j, j % n + 1);
        }
        g
    }

    #[test]
    fn star_graph_is_a_star() {
        let g = build_graph(&MarginalScenario::star(4, 2).unwrap()).unwrap();
        assert_eq!(g.edges(), vec![(1, 2), (1, 3), (1, 4)]);
    }

    #[test]
    fn ring_graph_is_a_cycle() {
        let g = build_graph(&MarginalScenario::ring(5, 2).unwrap()).unwrap();
        assert_eq!(g, cycle(5));
    }

    #[test]
    fn ti_scenarios_have_no_graph() {
        let s = MarginalScenario::ti1d(2, 2).unwrap();
        assert_eq!(build_graph(&s), Err(ScenarioError::InfiniteScenario));
    }

    #[test]
    fn cycle_is_not_chordal_and_path_is() {
        assert!(!is_chordal(&cycle(4)).chordal);
        let p = build_graph(&MarginalScenario::line(4, 2).unwrap()).unwrap();
        let t = is_chordal(&p);
        assert!(t.chordal);
        assert_eq!(maximal_cliques_chordal(&p, &t.peo.unwrap()).unwrap(), vec![vec![1, 2], vec![2, 3], vec![3, 4]]);
    }

    #[test]
    fn complete_graph_has_one_clique() {
        let mut g = DependencyGraph::new(vec![1, 2, 3, 4]);
        for a in 1..=4 {
            for b in a + 1..=4 {
                g.add_edge(a, b);
            }
        }
        let peo = is_chordal(&g).peo.unwrap();
        assert_eq!(maximal_cliques_chordal(&g, &peo).unwrap(), vec![vec![1, 2, 3, 4]]);
    }

    #[test]
    fn non_peo_is_rejected() {
        let g = cycle(4);
        assert_eq!(maximal_cliques_chordal(&g, &[1, 2, 3, 4]), Err(ScenarioError::NotChordal));
    }

    #[test]
    fn four_cycle_gets_one_diagonal() {
        let s = MarginalScenario::custom((1..=4).map(|a| (a, 2)).collect(), vec![vec![1, 2], vec![2, 3], vec![3, 4], vec![1, 4]])
            .unwrap();
        let c = chordal_complete(&s).unwrap();
        assert_eq!(c.added_edges, vec![(2, 4)]);
        assert_eq!(c.cliques.len(), 2);
        assert!(c.cliques.iter().all(|q| q.len() == 3));
    }

    #[test]
    fn scenario_validation() {
        assert_eq!(
            MarginalScenario::custom(vec![(1, 2), (2, 2)], vec![vec![1]]),
            Err(ScenarioError::SiteNotCovered(2))
        );
        assert_eq!(MarginalScenario::custom(vec![(1, 2)], vec![vec![3]]), Err(ScenarioError::UnknownSite(3)));
        assert_eq!(MarginalScenario::custom(vec![(1, 2), (1, 3)], vec![vec![1]]), Err(ScenarioError::DuplicateSite(1)));
    }
}
