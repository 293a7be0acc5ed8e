use crate::error::{Error, Result};
use crate::graph::affinity::SparseAffinity;
use crate::graph::csr::CsrMatrix;

/// Symmetrically normalized operator `S = D^{-1/2} A D^{-1/2}` with the
/// diffusion parameter. Isolated nodes keep zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGraph {
    s: CsrMatrix,
    degrees: Vec<f64>,
    alpha: f64,
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("alpha={alpha} must lie strictly inside (0, 1)")))
    }
}

pub fn normalize(a: &SparseAffinity, alpha: f64) -> Result<NormalizedGraph> {
    check_alpha(alpha)?;
    let degrees = a.degrees();
    let s = a.matrix().map_values(|i, j, v| v / (degrees[i] * degrees[j]).sqrt());
    Ok(NormalizedGraph { s, degrees, alpha })
}

impl NormalizedGraph {
    pub fn n(&self) -> usize {
        self.s.n()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn s_matrix(&self) -> &CsrMatrix {
        &self.s
    }

    /// Same operator with a different diffusion parameter.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { s: self.s.clone(), degrees: self.degrees.clone(), alpha })
    }

    /// `out = (I - alpha S) v`.
    pub fn apply_system(&self, v: &[f64], out: &mut [f64]) {
        self.s.mul_vec(v, out);
        for (o, &x) in out.iter_mut().zip(v) {
            *o = x - self.alpha * *o;
        }
    }

    /// Dense `I - alpha S`, row-major.
    pub fn dense_system(&self) -> Vec<f64> {
        let n = self.n();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
            let (cols, vals) = self.s.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[i * n + j as usize] -= self.alpha * v;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn unit_degrees() {
        let a = SparseAffinity::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let g = normalize(&a, 0.5).unwrap();
        assert_eq!(g.s_matrix().to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn scale_cancels() {
        let a = SparseAffinity::from_edges(2, &[(0, 1, 2.0)]).unwrap();
        let g = normalize(&a, 0.5).unwrap();
        assert_eq!(g.s_matrix().to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(g.degrees(), &[2.0, 2.0]);
    }

    #[test]
    fn alpha_bounds() {
        let a = SparseAffinity::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normalize(&a, bad).is_err());
        }
    }

    #[test]
    fn isolated_nodes_get_zero_rows() {
        let a = SparseAffinity::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        let g = normalize(&a, 0.9).unwrap();
        assert_eq!(g.s_matrix().row(2).0.len(), 0);
        assert_eq!(g.degrees()[2], 0.0);
    }

    #[test]
    fn dense_spectrum_within_unit_interval() {
        // Complete weighted graph on 6 nodes with deterministic positive weights.
        let mut edges = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                edges.push((i, j, 0.1 + ((i * 7 + j * 3) % 5) as f64 * 0.37));
            }
        }
        let a = SparseAffinity::from_edges(6, &edges).unwrap();
        let g = normalize(&a, 0.99).unwrap();
        let dense = g.s_matrix().to_dense();
        let m = DMatrix::from_fn(6, 6, |i, j| dense[i][j]);
        let eig = m.symmetric_eigenvalues();
        let max_abs = eig.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
        assert!(max_abs <= 1.0 + 1e-12, "{max_abs}");
        // The top eigenvalue of a connected normalized affinity is exactly 1.
        assert!((eig.max() - 1.0).abs() < 1e-12);
    }
}
