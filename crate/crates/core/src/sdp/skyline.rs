//! Envelope (skyline) Cholesky for symmetric matrices whose rows have a
//! contiguous nonzero profile to the left of the diagonal.

#[derive(Clone)]
pub(crate) struct Skyline {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
    dropped: Vec<bool>,
}

impl Skyline {
    /// `first[i]` is the leftmost stored column of row `i` (`first[i] <= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut off = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope must end at the diagonal");
            start.push(off);
            off += i - f + 1;
        }
        start.push(off);
        let n = first.len();
        Self {
            first,
            start,
            data: vec![0.0; off],
            dropped: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn first(&self, i: usize) -> usize {
        self.first[i]
    }

    pub fn dropped(&self) -> &[bool] {
        &self.dropped
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i], "({i},{j}) outside envelope");
        self.start[i] + j - self.first[i]
    }

    /// Accumulate into entry `(i, j)`, `j <= i`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j < self.first[i] {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn max_diag(&self) -> f64 {
        (0..self.len()).map(|i| self.get(i, i).abs()).fold(0.0, f64::max)
    }

    pub fn add_to_diag(&mut self, v: f64) {
        for i in 0..self.len() {
            self.add(i, i, v);
        }
    }

    /// Row `i` of the factor restricted to columns `lo..hi`.
    fn seg(&self, i: usize, lo: usize, hi: usize) -> &[f64] {
        let s = self.start[i] + lo - self.first[i];
        &self.data[s..s + hi - lo]
    }

    /// In-place factorization `A = L L^T`. On a nonpositive pivot returns its
    /// row, unless `drop_rel` is given: then rows whose pivot falls below
    /// `drop_rel * A_ii` are marked dependent and replaced by unit rows.
    pub fn factor(&mut self, drop_rel: Option<f64>) -> Result<(), usize> {
        let n = self.len();
        for i in 0..n {
            let fi = self.first[i];
            let orig_diag = self.get(i, i);
            for j in fi..i {
                let kij = self.idx(i, j);
                if self.dropped[j] {
                    self.data[kij] = 0.0;
                    continue;
                }
                let lo = fi.max(self.first[j]);
                let dot: f64 = self.seg(i, lo, j).iter().zip(self.seg(j, lo, j)).map(|(a, b)| a * b).sum();
                let ljj = self.data[self.idx(j, j)];
                self.data[kij] = (self.data[kij] - dot) / ljj;
            }
            let sq: f64 = self.seg(i, fi, i).iter().map(|v| v * v).sum();
            let d = orig_diag - sq;
            let kii = self.idx(i, i);
            match drop_rel {
                Some(rel) if d <= rel * orig_diag.abs() || orig_diag == 0.0 => {
                    self.dropped[i] = true;
                    // keep the computed multipliers for the caller's
                    // consistency check, then turn the row into a unit row
                    self.data[kii] = 1.0;
                }
                _ => {
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(i);
                    }
                    self.data[kii] = d.sqrt();
                }
            }
        }
        Ok(())
    }

    /// Multipliers `L_ij` of row `i` (columns `first(i)..i`).
    pub fn row_multipliers(&self, i: usize) -> &[f64] {
        self.seg(i, self.first[i], i)
    }

    pub fn forward(&self, b: &mut [f64]) {
        for i in 0..self.len() {
            if self.dropped[i] {
                continue;
            }
            let fi = self.first[i];
            let dot: f64 = self.seg(i, fi, i).iter().zip(&b[fi..i]).map(|(a, x)| a * x).sum();
            b[i] = (b[i] - dot) / self.data[self.idx(i, i)];
        }
    }

    /// Solve `L^T x = b` on the leading `len` rows.
    pub fn backward_prefix(&self, b: &mut [f64], len: usize) {
        for i in (0..len).rev() {
            if self.dropped[i] {
                b[i] = 0.0;
                continue;
            }
            b[i] /= self.data[self.idx(i, i)];
            let xi = b[i];
            let fi = self.first[i];
            for (bj, l) in b[fi..i].iter_mut().zip(self.seg(i, fi, i)) {
                *bj -= l * xi;
            }
        }
    }

    /// Solve `A x = b` in place; entries of dropped rows come back as zero.
    pub fn solve(&self, b: &mut [f64]) {
        for (bi, &d) in b.iter_mut().zip(&self.dropped) {
            if d {
                *bi = 0.0;
            }
        }
        self.forward(b);
        self.backward_prefix(b, self.len());
    }
}
