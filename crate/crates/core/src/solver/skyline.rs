//! Symmetric positive-definite matrices in profile (skyline) storage.
//!
//! Row `i` stores columns `first[i]..=i` of the lower triangle. Cholesky
//! fill-in never leaves the profile, so the factor reuses the same layout.
//! Time-ordered pose graphs are banded apart from loop-closure rows, which
//! makes this layout a good fit.

#[derive(Clone, Debug)]
pub struct SkylineMatrix {
    n: usize,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

/// Failure to factor: the pivot at `index` was not safely positive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotPositiveDefinite {
    pub index: usize,
}

impl SkylineMatrix {
    /// `first[i]` is the leftmost stored column of row `i` (`<= i`).
    pub fn new(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "profile start {f} beyond diagonal {i}");
            offsets.push(acc);
            acc += i - f + 1;
        }
        offsets.push(acc);
        Self {
            n,
            first,
            offsets,
            values: vec![0.0; acc],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stored(&self) -> usize {
        self.values.len()
    }

    pub fn first(&self, row: usize) -> usize {
        self.first[row]
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        debug_assert!(col <= row && col >= self.first[row]);
        self.offsets[row] + (col - self.first[row])
    }

    /// Lower-triangle entry; zero outside the profile.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (r, c) = if col > row { (col, row) } else { (row, col) };
        if c < self.first[r] {
            0.0
        } else {
            self.values[self.idx(r, c)]
        }
    }

    /// Adds to the symmetric pair `(row, col)`/`(col, row)`; only the lower
    /// triangle is stored, so callers add each off-diagonal pair once.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let (r, c) = if col > row { (col, row) } else { (row, col) };
        let k = self.idx(r, c);
        self.values[k] += value;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.values[self.idx(i, i)]).collect()
    }

    pub fn add_to_diagonal(&mut self, row: usize, value: f64) {
        let k = self.idx(row, row);
        self.values[k] += value;
    }

    /// Decouples variable `index`: its row and column are cleared and the
    /// diagonal set to one.
    pub fn pin(&mut self, index: usize) {
        let (o, f) = (self.offsets[index], self.first[index]);
        self.values[o..=o + (index - f)].iter_mut().for_each(|v| *v = 0.0);
        self.values[o + (index - f)] = 1.0;
        for row in index + 1..self.n {
            if self.first[row] <= index {
                let k = self.idx(row, index);
                self.values[k] = 0.0;
            }
        }
    }

    /// In-place Cholesky `A = L·Lᵀ`. A pivot is rejected when it falls below
    /// `rel_tol` times the original diagonal entry.
    pub fn cholesky(mut self, rel_tol: f64) -> Result<SkylineCholesky, NotPositiveDefinite> {
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offsets[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offsets[j];
                let start = fi.max(fj);
                let mut s = self.values[oi + (j - fi)];
                let ri = &self.values[oi + (start - fi)..oi + (j - fi)];
                let rj = &self.values[oj + (start - fj)..oj + (j - fj)];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                let ljj = self.values[oj + (j - fj)];
                self.values[oi + (j - fi)] = s / ljj;
            }
            let diag_k = oi + (i - fi);
            let original = self.values[diag_k];
            let row = &self.values[oi..diag_k];
            let pivot = original - row.iter().map(|v| v * v).sum::<f64>();
            if !(pivot > rel_tol * original.abs()) || !pivot.is_finite() {
                return Err(NotPositiveDefinite { index: i });
            }
            self.values[diag_k] = pivot.sqrt();
        }
        Ok(SkylineCholesky { factor: self })
    }
}

#[derive(Clone, Debug)]
pub struct SkylineCholesky {
    factor: SkylineMatrix,
}

impl SkylineCholesky {
    pub fn dim(&self) -> usize {
        self.factor.n
    }

    /// Solves `A·x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let f = &self.factor;
        assert_eq!(x.len(), f.n);
        // L·y = b
        for i in 0..f.n {
            let fi = f.first[i];
            let oi = f.offsets[i];
            let row = &f.values[oi..oi + (i - fi)];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / f.values[oi + (i - fi)];
        }
        // Lᵀ·x = y
        for i in (0..f.n).rev() {
            let fi = f.first[i];
            let oi = f.offsets[i];
            x[i] /= f.values[oi + (i - fi)];
            let xi = x[i];
            let row = &f.values[oi..oi + (i - fi)];
            for (xk, l) in x[fi..i].iter_mut().zip(row) {
                *xk -= l * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Columns `cols` of `A⁻¹`, restricted to rows `cols` (a dense sub-block).
    pub fn inverse_block(&self, cols: &[usize]) -> nalgebra::DMatrix<f64> {
        let m = cols.len();
        let mut out = nalgebra::DMatrix::zeros(m, m);
        let mut e = vec![0.0; self.dim()];
        for (c, &col) in cols.iter().enumerate() {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[col] = 1.0;
            self.solve_in_place(&mut e);
            for (r, &row) in cols.iter().enumerate() {
                out[(r, c)] = e[row];
            }
        }
        out
    }
}
