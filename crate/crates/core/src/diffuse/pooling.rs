use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptors::{dot, DescriptorSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    Sum,
    Gmp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolingSpec {
    pub mode: PoolingMode,
    /// Ridge regularizer of generalized max pooling.
    pub lambda: f64,
}

impl Default for PoolingSpec {
    fn default() -> Self {
        Self { mode: PoolingMode::Gmp, lambda: 1.0 }
    }
}

impl PoolingSpec {
    pub fn sum() -> Self {
        Self { mode: PoolingMode::Sum, lambda: 0.0 }
    }

    pub fn gmp(lambda: f64) -> Self {
        Self { mode: PoolingMode::Gmp, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PoolingMode::Sum if self.lambda >= 0.0 => Ok(()),
            PoolingMode::Gmp if self.lambda > 0.0 && self.lambda.is_finite() => Ok(()),
            _ => Err(Error::input(format!("invalid pooling lambda {}", self.lambda))),
        }
    }
}

/// Generalized max pooling weights `w = (ΦΦᵀ + λI)^{-1} 1` for an `m×d`
/// row-major region matrix. Weights may be negative.
pub fn gmp_weights(regions: &[f64], d: usize, lambda: f64) -> Result<Vec<f64>> {
    if d == 0 || regions.is_empty() || !regions.len().is_multiple_of(d) {
        return Err(Error::input("region matrix must be a nonempty m×d buffer"));
    }
    if !(lambda > 0.0) {
        return Err(Error::input(format!("lambda={lambda} must be positive")));
    }
    let m = regions.len() / d;
    let rows: Vec<&[f64]> = regions.chunks_exact(d).collect();
    let gram = DMatrix::from_fn(m, m, |i, j| dot(rows[i], rows[j]) + if i == j { lambda } else { 0.0 });
    let ones = DVector::from_element(m, 1.0);
    let w = gram
        .cholesky()
        .ok_or_else(|| Error::input("regularized Gram matrix is not positive definite"))?
        .solve(&ones);
    Ok(w.iter().copied().collect())
}

/// One pooling weight per descriptor row.
pub fn region_weights(ds: &DescriptorSet, spec: &PoolingSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut weights = vec![1.0; ds.len()];
    if spec.mode == PoolingMode::Gmp {
        for item in ds.items() {
            let w = gmp_weights(&ds.item_matrix(item), ds.dim(), spec.lambda)?;
            for (&row, wj) in item.rows.iter().zip(w) {
                weights[row] = wj;
            }
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn single_region_half() {
        let w = gmp_weights(&[0.6, 0.8], 2, 1.0).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orthonormal_rows_unit_weights() {
        let phi = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let w = gmp_weights(&phi, 3, 1e-12).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0).abs() < 1e-9), "{w:?}");
    }

    #[test]
    fn random_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi: Vec<f64> = (0..32).map(|_| rng.sample(StandardNormal)).collect();
        let w = gmp_weights(&phi, 8, 1.0).unwrap();
        let rows: Vec<&[f64]> = phi.chunks_exact(8).collect();
        for i in 0..4 {
            let lhs: f64 = (0..4).map(|j| (dot(rows[i], rows[j]) + if i == j { 1.0 } else { 0.0 }) * w[j]).sum();
            assert!((lhs - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn duplicated_regions_share_weight() {
        // Two identical rows and one orthogonal row: the duplicates split what
        // a single region would get.
        let phi = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        let w = gmp_weights(&phi, 2, 1.0).unwrap();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn lambda_validation() {
        assert!(gmp_weights(&[1.0, 0.0], 2, 0.0).is_err());
        assert!(PoolingSpec::gmp(0.0).validate().is_err());
        assert!(PoolingSpec::sum().validate().is_ok());
    }
}
