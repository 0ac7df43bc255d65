//! Exact second-order algebra for zero-mean jointly Gaussian vectors.
//!
//! Everything downstream (equilibria, rate-distortion points, audits) is
//! reduced to three operations on a covariance matrix: conditioning
//! ([`conditional`]), mutual information ([`mutual_information`]) and
//! covariances of linear combinations ([`lincomb_cov`]).
//!
//! Positive definiteness is decided by a Cholesky factorization that rejects
//! any pivot at or below `1e-12` times the corresponding diagonal entry. A
//! pivot is the conditional variance of a variable given the ones before it,
//! so the test reads "no variable is (numerically) a linear function of the
//! others". Nothing is regularized.

mod model;

pub use model::{
    follower_response, validate_model, DistortionPair, FollowerResponse, ModelParams, SideInfo,
    THETA, W, X,
};

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// Relative pivot threshold used by every Cholesky factorization.
pub const PIVOT_RTOL: f64 = 1e-12;

const SYMMETRY_RTOL: f64 = 1e-12;

/// A symmetric covariance matrix with nonnegative diagonal.
///
/// Construction checks symmetry and the diagonal only; positive
/// definiteness is checked by the operations that need it.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    m: DMatrix<f64>,
}

impl CovMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let n = m.nrows();
        for i in 0..n {
            let d = m[(i, i)];
            if !d.is_finite() || d < 0.0 {
                return Err(Error::NonpositiveVariance {
                    name: "diagonal entry",
                    value: d,
                });
            }
            for j in 0..i {
                let (a, b) = (m[(i, j)], m[(j, i)]);
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::Domain(format!(
                        "non-finite covariance at ({i}, {j})"
                    )));
                }
                let scale = (m[(i, i)] * m[(j, j)])
                    .sqrt()
                    .max(a.abs())
                    .max(f64::MIN_POSITIVE);
                if (a - b).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::Domain(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        // Store the exactly symmetric part.
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.m[(i, i)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }

    /// `uᵀ Σ v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        let u = DVector::from_column_slice(u);
        let v = DVector::from_column_slice(v);
        Ok(u.dot(&(&self.m * v)))
    }

    /// `vᵀ Σ v`.
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        self.bilinear(v, v)
    }

    /// Principal sub-matrix on `idx` (in the given order).
    pub fn sub(&self, idx: &[usize]) -> Result<CovMatrix> {
        for &i in idx {
            self.check_index(i)?;
        }
        Ok(Self {
            m: DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.m[(idx[a], idx[b])]),
        })
    }

    /// Lower-triangular Cholesky factor, rejecting near-singular pivots.
    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        cholesky(&self.m)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.cholesky().is_ok()
    }

    /// Natural log of the determinant; requires positive definiteness.
    pub fn ln_det(&self) -> Result<f64> {
        let l = self.cholesky()?;
        Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        Ok(())
    }
}

impl Serialize for CovMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > PIVOT_RTOL * a[(j, j)]) {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let d = pivot.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor `L`.
fn cholesky_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Result of conditioning one variable on a set of others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Conditional {
    /// `E[target | given] = Σ coefficients[k] · given[k]`.
    pub coefficients: Vec<f64>,
    /// `Var(target | given)`, the Schur complement.
    pub residual_variance: f64,
}

/// MMSE coefficients and residual variance of `target` given `given`.
pub fn conditional(cov: &CovMatrix, target: usize, given: &[usize]) -> Result<Conditional> {
    cov.check_index(target)?;
    if given.is_empty() {
        return Ok(Conditional {
            coefficients: Vec::new(),
            residual_variance: cov.variance(target),
        });
    }
    let block = cov.sub(given)?;
    let l = cholesky(&block.m).map_err(|_| Error::SingularConditioningBlock)?;
    let cross = DVector::from_iterator(given.len(), given.iter().map(|&g| cov.get(g, target)));
    let c = cholesky_solve(&l, &cross);
    let residual = cov.variance(target) - c.dot(&cross);
    Ok(Conditional {
        coefficients: c.iter().copied().collect(),
        residual_variance: residual.max(0.0),
    })
}

fn check_disjoint(a: &[usize], b: &[usize]) -> Result<()> {
    if a.iter().any(|i| b.contains(i)) {
        return Err(Error::OverlappingSets);
    }
    Ok(())
}

fn block_ln_det(cov: &CovMatrix, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    cov.sub(idx)?.ln_det().map_err(|_| Error::SingularBlock)
}

/// `I(A; B)` in bits for disjoint index sets.
pub fn mutual_information(cov: &CovMatrix, set_a: &[usize], set_b: &[usize]) -> Result<f64> {
    check_disjoint(set_a, set_b)?;
    let union: Vec<usize> = set_a.iter().chain(set_b).copied().collect();
    let nats =
        0.5 * (block_ln_det(cov, set_a)? + block_ln_det(cov, set_b)? - block_ln_det(cov, &union)?);
    Ok((nats / std::f64::consts::LN_2).max(0.0))
}

/// `I(A; B | C)` in bits for pairwise disjoint index sets.
pub fn conditional_mutual_information(
    cov: &CovMatrix,
    set_a: &[usize],
    set_b: &[usize],
    set_c: &[usize],
) -> Result<f64> {
    check_disjoint(set_a, set_b)?;
    check_disjoint(set_a, set_c)?;
    check_disjoint(set_b, set_c)?;
    let ac: Vec<usize> = set_a.iter().chain(set_c).copied().collect();
    let bc: Vec<usize> = set_b.iter().chain(set_c).copied().collect();
    let abc: Vec<usize> = set_a.iter().chain(&bc).copied().collect();
    let nats = 0.5
        * (block_ln_det(cov, &ac)? + block_ln_det(cov, &bc)?
            - block_ln_det(cov, set_c)?
            - block_ln_det(cov, &abc)?);
    Ok((nats / std::f64::consts::LN_2).max(0.0))
}

/// Covariance of the linear combinations `vᵢᵀ·Z`, i.e. `out[i][j] = vᵢᵀ Σ vⱼ`.
pub fn lincomb_cov<V: AsRef<[f64]>>(cov: &CovMatrix, vectors: &[V]) -> Result<CovMatrix> {
    let mut cols = Vec::with_capacity(vectors.len());
    for v in vectors {
        let v = v.as_ref();
        cov.check_len(v.len())?;
        cols.push(DVector::from_column_slice(v));
    }
    let k = cols.len();
    let mut out = DMatrix::zeros(k, k);
    let projected: Vec<DVector<f64>> = cols.iter().map(|v| &cov.m * v).collect();
    for i in 0..k {
        for j in i..k {
            let x = cols[i].dot(&projected[j]);
            out[(i, j)] = x;
            out[(j, i)] = x;
        }
    }
    CovMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conditioning_on_nothing_returns_the_marginal() {
        let cov = CovMatrix::from_rows(&[&[2.0, 0.3], &[0.3, 1.0]]).unwrap();
        let c = conditional(&cov, 0, &[]).unwrap();
        assert!(c.coefficients.is_empty());
        assert_eq!(c.residual_variance, 2.0);
    }

    #[test]
    fn conditional_hand_example() {
        let cov = CovMatrix::from_rows(&[&[1.0, 0.5], &[0.5, 2.0]]).unwrap();
        let c = conditional(&cov, 0, &[1]).unwrap();
        assert_relative_eq!(c.coefficients[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(c.residual_variance, 0.875, epsilon = 1e-15);
    }

    #[test]
    fn conditional_independent() {
        let cov = CovMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let c = conditional(&cov, 0, &[1]).unwrap();
        assert_eq!(c.coefficients, vec![0.0]);
        assert_eq!(c.residual_variance, 1.0);
    }

    #[test]
    fn singular_conditioning_block_is_rejected() {
        let cov =
            CovMatrix::from_rows(&[&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], &[1.0, 1.0, 2.0]]).unwrap();
        assert_eq!(
            conditional(&cov, 2, &[0, 1]),
            Err(Error::SingularConditioningBlock)
        );
    }

    #[test]
    fn mutual_information_examples() {
        let ind = CovMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 3.0]]).unwrap();
        assert_eq!(mutual_information(&ind, &[0], &[1]).unwrap(), 0.0);

        let cov = CovMatrix::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap();
        let expected = 0.5 * (1.0f64 / 0.75).log2();
        assert_relative_eq!(
            mutual_information(&cov, &[0], &[1]).unwrap(),
            expected,
            epsilon = 1e-14
        );
        assert_relative_eq!(expected, 0.207_518_749_639_422, epsilon = 1e-12);
    }

    #[test]
    fn mutual_information_errors() {
        let cov = CovMatrix::from_rows(&[&[1.0, 0.5], &[0.5, 1.0]]).unwrap();
        assert_eq!(
            mutual_information(&cov, &[0], &[0, 1]),
            Err(Error::OverlappingSets)
        );
        let sing = CovMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert_eq!(
            mutual_information(&sing, &[0], &[1]),
            Err(Error::SingularBlock)
        );
    }

    #[test]
    fn lincomb_examples() {
        let id = CovMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let sum = lincomb_cov(&id, &[[1.0, 1.0]]).unwrap();
        assert_eq!(sum.get(0, 0), 2.0);

        let cov = CovMatrix::from_rows(&[&[1.0, 0.2], &[0.2, 3.0]]).unwrap();
        let same = lincomb_cov(&cov, &[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(same, cov);

        let alpha = 0.618034;
        let yx = lincomb_cov(&id, &[[1.0, alpha], [1.0, 0.0]]).unwrap();
        assert_relative_eq!(yx.get(0, 0), 1.0 + alpha * alpha, epsilon = 1e-15);
        assert_relative_eq!(yx.get(0, 0), 1.381966, epsilon = 1e-6);
        assert_eq!(yx.get(0, 1), 1.0);

        assert_eq!(
            lincomb_cov(&id, &[vec![1.0, 2.0, 3.0]]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn cholesky_rejects_near_singular_and_accepts_scaled() {
        let near = CovMatrix::from_rows(&[&[1.0, 1.0 - 1e-14], &[1.0 - 1e-14, 1.0]]).unwrap();
        assert!(!near.is_positive_definite());
        // Badly scaled but well conditioned in correlation terms.
        let scaled = CovMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1e12]]).unwrap();
        assert!(scaled.is_positive_definite());
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        assert!(CovMatrix::from_rows(&[&[1.0, 0.5], &[0.4, 1.0]]).is_err());
    }
}
