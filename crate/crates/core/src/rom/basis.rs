use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SymSparseMatrix;

/// Relative size of the orthogonal remainder below which a candidate is
/// considered to lie in the current span.
pub const REJECTION_TOLERANCE: f64 = 1e-10;

pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisRole {
    Primal,
    Dual,
}

/// `X_ref`-orthonormal FE vectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    vectors: DMatrix<f64>,
    role: BasisRole,
}

impl ReducedBasis {
    pub fn empty(dim: usize, role: BasisRole) -> Self {
        Self {
            vectors: DMatrix::zeros(dim, 0),
            role,
        }
    }

    /// Wraps columns that are already orthonormal, checking the Gram matrix.
    pub fn from_orthonormal(xref: &SymSparseMatrix, vectors: DMatrix<f64>, role: BasisRole) -> Result<Self> {
        if vectors.nrows() != xref.dim() {
            return Err(Error::DimensionMismatch {
                expected: xref.dim(),
                found: vectors.nrows(),
            });
        }
        let basis = Self { vectors, role };
        let n = basis.len();
        let defect = (basis.gram(xref) - DMatrix::identity(n, n)).amax();
        if defect > ORTHONORMALITY_TOLERANCE {
            return Err(Error::BasisDegenerate(defect));
        }
        Ok(basis)
    }

    pub fn role(&self) -> BasisRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// `ζᵀ X_ref ζ`.
    pub fn gram(&self, xref: &SymSparseMatrix) -> DMatrix<f64> {
        self.vectors.tr_mul(&xref.mul_mat(&self.vectors))
    }

    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: n,
            });
        }
        Ok(Self {
            vectors: self.vectors.columns(0, n).into_owned(),
            role: self.role,
        })
    }

    /// Coefficients of the `X_ref`-orthogonal projection of `v`.
    pub fn coefficients(&self, xref: &SymSparseMatrix, v: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(&xref.mul_vec(v))
    }

    pub fn reconstruct(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.vectors * c
    }

    pub fn project(&self, xref: &SymSparseMatrix, v: &DVector<f64>) -> DVector<f64> {
        self.reconstruct(&self.coefficients(xref, v))
    }

    /// Gram-Schmidt in `X_ref` with one re-orthogonalization pass.
    pub fn push(&mut self, xref: &SymSparseMatrix, candidate: &DVector<f64>) -> Result<()> {
        if candidate.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: candidate.len(),
            });
        }
        let original = xref.quad_form(candidate).max(0.0).sqrt();
        if !(original > 0.0) {
            return Err(Error::BasisDegenerate(0.0));
        }
        let mut v = candidate.clone();
        for _ in 0..2 {
            let c = self.coefficients(xref, &v);
            v -= &self.vectors * c;
        }
        let remainder = xref.quad_form(&v).max(0.0).sqrt();
        if remainder < REJECTION_TOLERANCE * original {
            return Err(Error::BasisDegenerate(remainder / original));
        }
        v /= remainder;
        let n = self.len();
        let vectors = std::mem::replace(&mut self.vectors, DMatrix::zeros(0, 0));
        self.vectors = vectors.resize_horizontally(n + 1, 0.0);
        self.vectors.set_column(n, &v);
        Ok(())
    }
}

/// Returns `basis ⊕ span{candidate}`.
pub fn extend_basis(basis: &ReducedBasis, candidate: &DVector<f64>, xref: &SymSparseMatrix) -> Result<ReducedBasis> {
    let mut out = basis.clone();
    out.push(xref, candidate)?;
    Ok(out)
}
