use rayon::prelude::*;

/// Row count above which sparse products are split across threads.
const PARALLEL_ROWS: usize = 4096;

/// Square compressed-sparse-row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Callers guarantee `offsets` is monotone with `offsets[n] == cols.len()`
    /// and that columns are sorted within each row.
    pub(crate) fn from_parts(n: usize, offsets: Vec<usize>, cols: Vec<u32>, vals: Vec<f64>) -> Self {
        debug_assert_eq!(offsets.len(), n + 1);
        debug_assert_eq!(cols.len(), vals.len());
        debug_assert_eq!(offsets[n], cols.len());
        Self { n, offsets, cols, vals }
    }

    /// Builds from per-row `(column, value)` lists; each list is sorted here.
    pub(crate) fn from_rows(rows: Vec<Vec<(u32, f64)>>) -> Self {
        let n = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        Self { n, offsets, cols, vals }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn cols(&self) -> &[u32] {
        &self.cols
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Stored value at `(i, j)`, zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut vals = Vec::with_capacity(self.vals.len());
        for i in 0..self.n {
            let (cols, v) = self.row(i);
            vals.extend(cols.iter().zip(v).map(|(&j, &x)| f(i, j as usize, x)));
        }
        Self { n: self.n, offsets: self.offsets.clone(), cols: self.cols.clone(), vals }
    }

    /// `out = self * x`. Each output entry is accumulated by a single thread
    /// in column order, so results do not depend on the thread count.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        let row_dot = |i: usize| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| v * x[j as usize]).sum::<f64>()
        };
        if self.n >= PARALLEL_ROWS {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = row_dot(i));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| *o = row_dot(i));
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j as usize] = v;
            }
        }
        dense
    }
}
