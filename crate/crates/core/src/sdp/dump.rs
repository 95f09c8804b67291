//! Plain-text instance dump in SDPA sparse format.
//!
//! Layout (1-based indices):
//!
//! ```text
//! m                       number of variables
//! nBlocks
//! d1 d2 ... [-2p]         block sizes; a negative size is a diagonal block
//! c1 c2 ... cm            objective
//! k blk i j value         entry (i, j), i <= j, of F_{blk,k}; k = 0 is F_0
//! ```
//!
//! The represented problem is `min c^T x` subject to
//! `sum_k x_k F_k - F_0` PSD, which is the LMI form used by the solver.
//! Equality rows `a^T x = b` are written as a trailing diagonal block of
//! size `2p` holding `a^T x - b >= 0` and `b - a^T x >= 0`.

use std::io::{self, Write};

use super::SdpInstance;

pub fn write_sdpa<W: Write>(inst: &SdpInstance, mut out: W) -> io::Result<()> {
    let p = inst.rows.len();
    let nblocks = inst.blocks.len() + usize::from(p > 0);
    writeln!(out, "{}", inst.num_vars)?;
    writeln!(out, "{nblocks}")?;
    let mut sizes: Vec<String> = inst.blocks.iter().map(|b| b.dim.to_string()).collect();
    if p > 0 {
        sizes.push(format!("-{}", 2 * p));
    }
    writeln!(out, "{}", sizes.join(" "))?;
    let c: Vec<String> = inst.objective.iter().map(|v| format!("{v:.17e}")).collect();
    writeln!(out, "{}", c.join(" "))?;
    for (k, blk) in inst.blocks.iter().enumerate() {
        for &(i, j, v) in blk.constant.entries() {
            writeln!(out, "0 {} {} {} {v:.17e}", k + 1, i + 1, j + 1)?;
        }
        for (var, f) in &blk.terms {
            for &(i, j, v) in f.entries() {
                writeln!(out, "{} {} {} {} {v:.17e}", var + 1, k + 1, i + 1, j + 1)?;
            }
        }
    }
    let lp = inst.blocks.len() + 1;
    for (r, row) in inst.rows.iter().enumerate() {
        let (pos, neg) = (r + 1, p + r + 1);
        if row.rhs != 0.0 {
            writeln!(out, "0 {lp} {pos} {pos} {:.17e}", row.rhs)?;
            writeln!(out, "0 {lp} {neg} {neg} {:.17e}", -row.rhs)?;
        }
        for &(var, a) in &row.coeffs {
            writeln!(out, "{} {lp} {pos} {pos} {a:.17e}", var + 1)?;
            writeln!(out, "{} {lp} {neg} {neg} {:.17e}", var + 1, -a)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::{EqRow, LmiBlock, SparseSym};

    #[test]
    fn writes_header_and_entries() {
        let mut inst = SdpInstance::new(1);
        inst.objective[0] = 1.0;
        let mut blk = LmiBlock::new(2);
        blk.constant = SparseSym::from_entries(2, [(0, 1, -1.0)]);
        blk.add_term(0, SparseSym::from_entries(2, [(0, 0, 1.0), (1, 1, 1.0)]));
        inst.blocks.push(blk);
        inst.rows.push(EqRow {
            coeffs: vec![(0, 1.0)],
            rhs: 2.0,
        });
        let mut buf = Vec::new();
        write_sdpa(&inst, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "1");
        assert_eq!(lines[1], "2");
        assert_eq!(lines[2], "2 -2");
        assert!(lines[4].starts_with("0 1 1 2 "));
        assert_eq!(lines.len(), 4 + 1 + 2 + 4);
    }
}
