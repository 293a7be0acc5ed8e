//! Mutual-kNN affinity matrix, sub-graph truncation and the graph file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::csr::CsrMatrix;
use crate::graph::knn::KnnLists;

const MAGIC: &[u8; 4] = b"MRGR";
const VERSION: u32 = 1;
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Symmetric sparse affinity matrix with positive entries and empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity {
    matrix: CsrMatrix,
}

impl SparseAffinity {
    /// Builds from undirected edges `(i, j, w)`. Each pair may appear once in
    /// either orientation.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::input(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::input(format!("self-loop at node {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::input(format!("edge ({i}, {j}) has non-positive weight {w}")));
            }
            rows[i].push((j as u32, w));
            rows[j].push((i as u32, w));
        }
        let matrix = CsrMatrix::from_rows(rows);
        for i in 0..n {
            if matrix.row(i).0.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::input(format!("duplicate edge at node {i}")));
            }
        }
        Ok(Self { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Number of stored entries; each undirected edge counts twice.
    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn edge_count(&self) -> usize {
        self.nnz() / 2
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        self.matrix.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.matrix.row_sums()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::input("scale factor must be positive"));
        }
        Ok(Self { matrix: self.matrix.map_values(|_, _, v| v * c) })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.matrix.to_dense()
    }

    /// Checks symmetry, positivity and the absence of self-loops.
    pub fn validate(matrix: &CsrMatrix) -> std::result::Result<(), String> {
        for i in 0..matrix.n() {
            let (cols, vals) = matrix.row(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!("row {i} columns are not strictly increasing"));
            }
            for (&j, &v) in cols.iter().zip(vals) {
                let j = j as usize;
                if j >= matrix.n() {
                    return Err(format!("row {i} references column {j} out of range"));
                }
                if j == i {
                    return Err(format!("diagonal entry at row {i}"));
                }
                if !(v > 0.0) || !v.is_finite() {
                    return Err(format!("non-positive value at ({i}, {j})"));
                }
                let (tcols, tvals) = matrix.row(j);
                match tcols.binary_search(&(i as u32)) {
                    Ok(p) if (tvals[p] - v).abs() <= SYMMETRY_TOLERANCE => {}
                    _ => return Err(format!("entry ({i}, {j}) has no symmetric counterpart")),
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut r = reader;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::format("truncated graph header"))?;
        if &magic != MAGIC {
            return Err(Error::format("bad magic, expected \"MRGR\""));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported graph format version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let nnz = read_u64(&mut r)? as usize;
        let mut offsets = Vec::with_capacity(n.min(1 << 28) + 1);
        for _ in 0..=n {
            offsets.push(read_u64(&mut r)? as usize);
        }
        if offsets[0] != 0 || offsets[n] != nnz || offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("row offsets are inconsistent with nnz"));
        }
        let mut cols = Vec::with_capacity(nnz.min(1 << 28));
        for _ in 0..nnz {
            cols.push(read_u32(&mut r)?);
        }
        let mut vals = Vec::with_capacity(nnz.min(1 << 28));
        let mut b = [0u8; 8];
        for _ in 0..nnz {
            r.read_exact(&mut b).map_err(|_| Error::format("graph values truncated"))?;
            vals.push(f64::from_le_bytes(b));
        }
        let matrix = CsrMatrix::from_parts(n, offsets, cols, vals);
        Self::validate(&matrix).map_err(Error::Format)?;
        Ok(Self { matrix })
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = writer;
        let m = &self.matrix;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(m.n() as u64).to_le_bytes())?;
        w.write_all(&(m.nnz() as u64).to_le_bytes())?;
        for &o in m.offsets() {
            w.write_all(&(o as u64).to_le_bytes())?;
        }
        for &c in m.cols() {
            w.write_all(&c.to_le_bytes())?;
        }
        for &v in m.vals() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format("graph file truncated"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::format("graph file truncated"))?;
    Ok(u64::from_le_bytes(b))
}

/// Keeps edge `(i, j)` iff each node lists the other; the weight is the
/// smaller of the two listed similarities. Zero similarities are dropped.
pub fn build_affinity(lists: &KnnLists) -> SparseAffinity {
    let n = lists.len();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (i, row) in rows.iter_mut().enumerate() {
        for nb in lists.neighbors(i) {
            let j = nb.index as usize;
            if let Some(back) = lists.neighbors(j).iter().find(|b| b.index as usize == i) {
                let w = nb.similarity.min(back.similarity);
                if w > 0.0 {
                    row.push((j as u32, w));
                }
            }
        }
    }
    SparseAffinity { matrix: CsrMatrix::from_rows(rows) }
}

/// Induced sub-graph on a node subset, re-indexed in ascending original order.
#[derive(Debug, Clone, PartialEq)]
pub struct Truncated {
    pub affinity: SparseAffinity,
    /// `original[i]` is the node id in the full graph of sub-graph node `i`.
    pub original: Vec<usize>,
}

pub fn truncate(a: &SparseAffinity, keep: &[usize]) -> Result<Truncated> {
    if keep.is_empty() {
        return Err(Error::input("truncation keep set is empty"));
    }
    let n = a.n();
    let mut original = keep.to_vec();
    original.sort_unstable();
    original.dedup();
    if let Some(&bad) = original.last().filter(|&&x| x >= n) {
        return Err(Error::input(format!("keep index {bad} out of range for n={n}")));
    }
    let mut position = vec![u32::MAX; n];
    for (new, &old) in original.iter().enumerate() {
        position[old] = new as u32;
    }
    let rows = original
        .iter()
        .map(|&old| {
            let (cols, vals) = a.row(old);
            cols.iter()
                .zip(vals)
                .filter_map(|(&j, &v)| {
                    let p = position[j as usize];
                    (p != u32::MAX).then_some((p, v))
                })
                .collect()
        })
        .collect();
    Ok(Truncated { affinity: SparseAffinity { matrix: CsrMatrix::from_rows(rows) }, original })
}
