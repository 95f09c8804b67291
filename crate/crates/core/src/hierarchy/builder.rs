//! Assembly of a relaxation from extension blocks, marginal targets,
//! consistency conditions and partial-transpose cuts.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::linalg::{ComplexMatrix, C};
use crate::sdp::{EqRow, LmiBlock, SdpInstance, SparseSym};

use super::space::{images, BlockMap, BlockSpace, CopyMarginal, Cut, HermParams, Identity, Image, PermutationDefect, SiteSpace, SiteTrace};
use super::{BlockTag, HierarchyError, Operator, Relaxation, Result, RowTag, Target};

pub(crate) struct BlockSpec {
    /// `(label, d, copies)`, sorted by label.
    pub sites: Vec<(usize, usize, usize)>,
}

pub(crate) enum TargetData {
    State(Operator),
    Cost(Operator),
}

pub(crate) struct TargetSpec {
    pub block: usize,
    pub set: Vec<usize>,
    pub data: TargetData,
}

pub(crate) enum ExtraSpec {
    /// Trace of `a` equals trace of `b`, remaining sites matched in order.
    Shift { block: usize, a: Vec<usize>, b: Vec<usize> },
    /// Invariance under a permutation of the block's sites (positions).
    Symmetry { block: usize, perm: Vec<usize> },
}

pub(crate) struct Spec {
    pub level: usize,
    pub real: bool,
    pub blocks: Vec<BlockSpec>,
    pub targets: Vec<TargetSpec>,
    pub extras: Vec<ExtraSpec>,
    /// Per block, cut vectors `k` (copies transposed per site).
    pub cuts: Vec<Vec<Vec<usize>>>,
}

/// Cut vectors with one or two transposed sites, up to complement, excluding
/// the trivial ones.
pub(crate) fn canonical_cuts(copies: &[usize], pairs: bool) -> Vec<Vec<usize>> {
    let n = copies.len();
    let mut candidates = Vec::new();
    for a in 0..n {
        for ka in 1..=copies[a] {
            let mut k = vec![0; n];
            k[a] = ka;
            candidates.push(k.clone());
            if pairs {
                for b in a + 1..n {
                    for kb in 1..=copies[b] {
                        let mut kk = k.clone();
                        kk[b] = kb;
                        candidates.push(kk);
                    }
                }
            }
        }
    }
    candidates.sort_by_key(|k| k.iter().sum::<usize>());
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for k in candidates {
        let comp: Vec<usize> = k.iter().zip(copies).map(|(k, c)| c - k).collect();
        if comp.iter().all(|&c| c == 0) {
            continue;
        }
        let key = if comp < k { comp } else { k.clone() };
        if seen.insert(key) {
            out.push(k);
        }
    }
    out
}

struct Assembled {
    space: BlockSpace,
    params: HermParams,
    offset: usize,
}

#[derive(Default)]
struct Rows {
    rows: Vec<EqRow>,
    tags: Vec<RowTag>,
    seen: HashSet<Vec<(usize, u64)>>,
}

impl Rows {
    /// Pushes a homogeneous row unless it repeats an earlier one up to sign.
    fn push_homogeneous(&mut self, coeffs: Vec<(usize, f64)>, tag: RowTag) {
        let coeffs = normalize(coeffs);
        if coeffs.is_empty() {
            return;
        }
        let sign = coeffs[0].1.signum();
        let key = coeffs.iter().map(|&(i, v)| (i, (sign * v).to_bits())).collect();
        if self.seen.insert(key) {
            self.rows.push(EqRow { coeffs, rhs: 0.0 });
            self.tags.push(tag);
        }
    }
}

fn normalize(mut coeffs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.sort_by_key(|c| c.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
    for (i, v) in coeffs {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out.retain(|c| c.1.abs() > 1e-15);
    out
}

/// Component `(i, j, imaginary)` of the image to the coefficients producing it.
type ComponentRows = BTreeMap<(usize, usize, bool), Vec<(usize, f64)>>;

fn component_rows(imgs: &[Image], offset: usize, sign: f64, into: &mut ComponentRows) {
    for (p, img) in imgs.iter().enumerate() {
        for &(i, j, re, im) in img {
            if re != 0.0 {
                into.entry((i, j, false)).or_default().push((offset + p, sign * re));
            }
            if im != 0.0 {
                into.entry((i, j, true)).or_default().push((offset + p, sign * im));
            }
        }
    }
}

fn lmi_matrix(img: &Image, dim: usize, real: bool) -> SparseSym {
    if real {
        return SparseSym::from_entries(dim, img.iter().map(|&(i, j, re, _)| (i, j, re)));
    }
    let mut e = Vec::with_capacity(4 * img.len());
    for &(i, j, re, im) in img {
        e.push((i, j, re));
        e.push((i + dim, j + dim, re));
        if i != j {
            e.push((i, j + dim, -im));
            e.push((j, i + dim, im));
        }
    }
    SparseSym::from_entries(2 * dim, e)
}

fn lmi_block(map: &dyn BlockMap, a: &Assembled, real: bool) -> LmiBlock {
    let dim = map.out_dim();
    let mut blk = LmiBlock::new(if real { dim } else { 2 * dim });
    for (p, img) in images(map, &a.params).iter().enumerate() {
        blk.add_term(a.offset + p, lmi_matrix(img, dim, real));
    }
    blk
}

/// Blocks joined by overlap conditions, skipping pairs already implied by
/// conditions on larger overlaps.
fn overlap_pairs(labels: &[Vec<usize>]) -> Vec<(usize, usize, Vec<usize>)> {
    let mut pairs = Vec::new();
    for p in 0..labels.len() {
        for q in p + 1..labels.len() {
            let common: Vec<usize> = labels[p].iter().copied().filter(|a| labels[q].contains(a)).collect();
            if !common.is_empty() {
                pairs.push((p, q, common));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.len().cmp(&a.2.len()).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut imposed: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for (p, q, common) in pairs {
        // search a path p -> q through imposed edges whose overlap contains `common`
        let mut seen = vec![false; labels.len()];
        let mut queue = VecDeque::from([p]);
        seen[p] = true;
        while let Some(u) = queue.pop_front() {
            for (a, b, k) in &imposed {
                if !common.iter().all(|c| k.contains(c)) {
                    continue;
                }
                let v = if *a == u {
                    *b
                } else if *b == u {
                    *a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if !seen[q] {
            imposed.push((p, q, common));
        }
    }
    imposed.sort_by_key(|a| (a.0, a.1));
    imposed
}

pub(crate) fn assemble(spec: Spec) -> Result<Relaxation> {
    let real = spec.real;
    let mut blocks = Vec::with_capacity(spec.blocks.len());
    let mut offset = 0;
    for b in &spec.blocks {
        let space = BlockSpace::new(b.sites.iter().map(|&(l, d, c)| SiteSpace::new(l, d, c)).collect());
        let params = HermParams::new(space.dim, real);
        let n = params.len();
        blocks.push(Assembled { space, params, offset });
        offset += n;
    }
    let mut inst = SdpInstance::new(offset);
    let mut block_tags = Vec::new();
    let mut rows = Rows::default();
    let mut targets = Vec::with_capacity(spec.targets.len());

    for (k, a) in blocks.iter().enumerate() {
        inst.blocks.push(lmi_block(&Identity(a.space.dim), a, real));
        block_tags.push(BlockTag::Extension {
            block: k,
            sites: a.space.labels(),
        });
        for cut in &spec.cuts[k] {
            inst.blocks.push(lmi_block(
                &Cut {
                    space: &a.space,
                    k: cut.clone(),
                },
                a,
                real,
            ));
            block_tags.push(BlockTag::Cut {
                block: k,
                cut: a.space.labels().into_iter().zip(cut.iter().copied()).filter(|c| c.1 > 0).collect(),
            });
        }
    }

    let mut has_cost = false;
    for (t, target) in spec.targets.iter().enumerate() {
        let a = &blocks[target.block];
        let mut keep = vec![false; a.space.sites.len()];
        for &l in &target.set {
            let pos = a.space.position(l).ok_or_else(|| HierarchyError::Invalid(format!("site {l} not in block {}", target.block)))?;
            keep[pos] = true;
        }
        let map = CopyMarginal { space: &a.space, keep };
        let op = match &target.data {
            TargetData::State(op) | TargetData::Cost(op) => op,
        };
        if op.dim() != map.out_dim() {
            return Err(HierarchyError::ShapeMismatch(format!(
                "operator of dimension {} on set {:?} of dimension {}",
                op.dim(),
                target.set,
                map.out_dim()
            )));
        }
        let imgs = images(&map, &a.params);
        match &target.data {
            TargetData::State(rho) => {
                let mut comps = ComponentRows::new();
                component_rows(&imgs, a.offset, 1.0, &mut comps);
                let m = rho.matrix();
                for i in 0..m.rows() {
                    for j in i..m.rows() {
                        for imag in [false, true] {
                            if imag && (i == j || real) {
                                continue;
                            }
                            let rhs = if imag { m[(i, j)].im } else { m[(i, j)].re };
                            let coeffs = normalize(comps.remove(&(i, j, imag)).unwrap_or_default());
                            if coeffs.is_empty() {
                                if rhs.abs() > 1e-12 {
                                    return Err(HierarchyError::Invalid(format!("target {t} entry ({i},{j}) is unreachable")));
                                }
                                continue;
                            }
                            rows.rows.push(EqRow { coeffs, rhs });
                            rows.tags.push(RowTag::Marginal { target: t, i, j, imag });
                        }
                    }
                }
            }
            TargetData::Cost(h) => {
                has_cost = true;
                let m = h.matrix();
                for (p, img) in imgs.iter().enumerate() {
                    let mut c = 0.0;
                    for &(i, j, re, im) in img {
                        c += if i == j { m[(i, i)].re * re } else { 2.0 * (m[(i, j)].re * re + m[(i, j)].im * im) };
                    }
                    inst.objective[a.offset + p] += c;
                }
            }
        }
        targets.push(Target {
            set: target.set.clone(),
            block: target.block,
            state: match &target.data {
                TargetData::State(rho) => Some(rho.clone()),
                TargetData::Cost(_) => None,
            },
        });
    }

    if has_cost {
        for (k, a) in blocks.iter().enumerate() {
            let coeffs = a
                .params
                .params
                .iter()
                .enumerate()
                .filter(|(_, p)| p.0 == p.1)
                .map(|(i, _)| (a.offset + i, 1.0))
                .collect();
            rows.rows.push(EqRow { coeffs, rhs: 1.0 });
            rows.tags.push(RowTag::Trace { block: k });
        }
    }

    let labels: Vec<Vec<usize>> = blocks.iter().map(|a| a.space.labels()).collect();
    for (p, q, common) in overlap_pairs(&labels) {
        let mut comps = ComponentRows::new();
        for (blk, sign) in [(p, 1.0), (q, -1.0)] {
            let a = &blocks[blk];
            let keep: Vec<bool> = a.space.labels().iter().map(|l| common.contains(l)).collect();
            let map = SiteTrace {
                dims: a.space.sym_dims(),
                keep,
            };
            component_rows(&images(&map, &a.params), a.offset, sign, &mut comps);
        }
        for coeffs in comps.into_values() {
            rows.push_homogeneous(coeffs, RowTag::Overlap { blocks: (p, q) });
        }
    }

    for extra in &spec.extras {
        match extra {
            ExtraSpec::Shift { block, a: sa, b: sb } => {
                let a = &blocks[*block];
                let mut comps = ComponentRows::new();
                for (traced, sign) in [(sa, 1.0), (sb, -1.0)] {
                    let keep: Vec<bool> = a.space.labels().iter().map(|l| !traced.contains(l)).collect();
                    let map = SiteTrace {
                        dims: a.space.sym_dims(),
                        keep,
                    };
                    component_rows(&images(&map, &a.params), a.offset, sign, &mut comps);
                }
                for coeffs in comps.into_values() {
                    rows.push_homogeneous(coeffs, RowTag::Shift { block: *block });
                }
            }
            ExtraSpec::Symmetry { block, perm } => {
                let a = &blocks[*block];
                let map = PermutationDefect {
                    dims: a.space.sym_dims(),
                    perm: perm.clone(),
                };
                let mut comps = ComponentRows::new();
                component_rows(&images(&map, &a.params), a.offset, 1.0, &mut comps);
                for coeffs in comps.into_values() {
                    rows.push_homogeneous(coeffs, RowTag::Symmetry { block: *block });
                }
            }
        }
    }

    // order rows by the blocks they touch so the Schur complement stays banded on chains
    let block_of = |v: usize| blocks.partition_point(|a| a.offset <= v) - 1;
    let mut order: Vec<usize> = (0..rows.rows.len()).collect();
    let keys: Vec<(usize, usize)> = rows
        .rows
        .iter()
        .map(|r| {
            let lo = r.coeffs.iter().map(|c| block_of(c.0)).min().unwrap_or(0);
            let hi = r.coeffs.iter().map(|c| block_of(c.0)).max().unwrap_or(0);
            (hi, lo)
        })
        .collect();
    order.sort_by_key(|&r| keys[r]);
    let mut slots: Vec<Option<(EqRow, RowTag)>> = rows.rows.into_iter().zip(rows.tags).map(Some).collect();
    let (sorted_rows, row_tags): (Vec<EqRow>, Vec<RowTag>) = order.iter().map(|&r| slots[r].take().expect("row used once")).unzip();
    inst.rows = sorted_rows;
    Ok(Relaxation {
        instance: inst,
        row_tags,
        block_tags,
        level: spec.level,
        real,
        targets,
        spaces: blocks.into_iter().map(|a| (a.space, a.params, a.offset)).collect(),
    })
}

/// Value of a block's compressed extension at `x`.
pub(crate) fn extension_value(params: &HermParams, x: &[f64], offset: usize) -> ComplexMatrix<f64> {
    let m = params.assemble(&x[offset..offset + params.len()]);
    ComplexMatrix::from_fn(params.dim, params.dim, |i, j| C::new(m[i][j].0, m[i][j].1))
}

/// Copy-one marginal of a block on `set` at `x`.
pub(crate) fn marginal_value(space: &BlockSpace, params: &HermParams, x: &[f64], offset: usize, set: &[usize]) -> ComplexMatrix<f64> {
    let keep: Vec<bool> = space.labels().iter().map(|l| set.contains(l)).collect();
    let map = CopyMarginal { space, keep };
    let dim = map.out_dim();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for (img, &v) in images(&map, params).iter().zip(&x[offset..offset + params.len()]) {
        for &(i, j, re, im) in img {
            out[(i, j)] += C::new(re * v, im * v);
            if i != j {
                out[(j, i)] += C::new(re * v, -im * v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_cuts_for_two_sites() {
        assert_eq!(canonical_cuts(&[1, 1], true), vec![vec![1, 0]]);
        let c = canonical_cuts(&[2, 2], true);
        assert_eq!(c, vec![vec![1, 0], vec![0, 1], vec![1, 1], vec![2, 0]]);
        // a private site (one copy) next to a doubly extended one
        assert_eq!(canonical_cuts(&[2, 1], true), vec![vec![1, 0], vec![0, 1]]);
        assert!(canonical_cuts(&[2], true).len() == 1);
        assert!(canonical_cuts(&[1], true).is_empty());
    }

    #[test]
    fn overlap_reduction_skips_implied_pairs() {
        // star: all pairs meet at site 1, a spanning tree suffices
        let sets = vec![vec![1, 2], vec![1, 3], vec![1, 4]];
        let pairs = overlap_pairs(&sets);
        assert_eq!(pairs.len(), 2);
        // chain: consecutive overlaps only
        let sets = vec![vec![1, 2], vec![2, 3], vec![3, 4]];
        assert_eq!(overlap_pairs(&sets).len(), 2);
        // triangle of cliques sharing different sites needs all three
        let sets = vec![vec![1, 2], vec![2, 3], vec![1, 3]];
        assert_eq!(overlap_pairs(&sets).len(), 3);
        // the weaker single-site condition follows from the pair overlap
        let sets = vec![vec![1, 2, 3], vec![1, 2, 4], vec![1, 5]];
        let pairs = overlap_pairs(&sets);
        assert_eq!(pairs, vec![(0, 1, vec![1, 2]), (0, 2, vec![1])]);
    }
}
