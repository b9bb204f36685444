//! Sparse symmetric storage, direct and iterative solvers, and the dense
//! symmetric eigensolver used by the snapshot decompositions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::ops::serial::spsolve_csc_lower_triangular;
use nalgebra_sparse::ops::Op;
use nalgebra_sparse::CscMatrix;

use crate::error::{Error, Result};

/// Default relative residual tolerance for iterative solves.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// Compressed-row sparsity pattern with sorted column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from an unordered list of (row, col) positions.
    /// The pattern is symmetrized and always contains the diagonal.
    pub fn from_positions(n: usize, positions: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, j) in positions {
            rows[i].push(j);
            rows[j].push(i);
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(&row);
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    fn locate(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }
}

/// Symmetric sparse matrix over a shared pattern. Full (both triangles)
/// storage, so products need no transposition logic.
#[derive(Debug, Clone)]
pub struct SymSparseMatrix {
    pattern: Arc<SparsePattern>,
    values: Vec<f64>,
}

impl SymSparseMatrix {
    pub fn zeros(pattern: Arc<SparsePattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn identity(n: usize) -> Self {
        let pattern = Arc::new(SparsePattern::from_positions(n, std::iter::empty()));
        Self {
            values: vec![1.0; n],
            pattern,
        }
    }

    /// Builds a matrix from triplets; duplicates are summed and the pattern is
    /// symmetrized. The caller is responsible for providing symmetric values.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let pattern = Arc::new(SparsePattern::from_positions(
            n,
            triplets.iter().map(|&(i, j, _)| (i, j)),
        ));
        let mut m = Self::zeros(pattern);
        for &(i, j, v) in triplets {
            m.add_to(i, j, v);
        }
        m
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(n, &triplets)
    }

    /// Adds `v` at `(i, j)`. Panics if the position is outside the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .pattern
            .locate(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) outside sparsity pattern"));
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.locate(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shares_pattern(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern
    }

    /// Iterates stored entries as `(row, col, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &self.pattern;
        (0..p.n).flat_map(move |i| (p.row_ptr[i]..p.row_ptr[i + 1]).map(move |k| (i, p.col_idx[k], self.values[k])))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.dim(), "vector length does not match matrix");
        let p = &self.pattern;
        DVector::from_iterator(
            p.n,
            (0..p.n).map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[p.col_idx[k]])
                    .sum::<f64>()
            }),
        )
    }

    /// Product with every column of a dense matrix.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let y = self.mul_vec(&col.into_owned());
            out.set_column(j, &y);
        }
        out
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                x[i] * (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k] * y[p.col_idx[k]])
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        self.bilinear(x, x)
    }

    pub fn row_sums(&self) -> DVector<f64> {
        self.mul_vec(&DVector::from_element(self.dim(), 1.0))
    }

    /// Linear combination `Σ cᵢ Aᵢ` of matrices on a common pattern.
    pub fn combine(terms: &[(f64, &SymSparseMatrix)]) -> Result<Self> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        let mut values = vec![0.0; first.nnz()];
        for (c, m) in terms {
            if !first.shares_pattern(m) {
                return Err(Error::InvalidInput(
                    "linear combination of matrices with different patterns".into(),
                ));
            }
            if *c == 0.0 {
                continue;
            }
            for (v, mv) in values.iter_mut().zip(&m.values) {
                *v += c * mv;
            }
        }
        Ok(Self {
            pattern: first.pattern.clone(),
            values,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Largest `|a_ij - a_ji|` over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.entries() {
            a[(i, j)] = v;
        }
        a
    }

    fn to_csc(&self) -> CscMatrix<f64> {
        // Full symmetric storage: the CSR arrays of A are the CSC arrays of Aᵀ = A.
        let p = &self.pattern;
        CscMatrix::try_from_csc_data(p.n, p.n, p.row_ptr.clone(), p.col_idx.clone(), self.values.clone())
            .expect("valid compressed storage")
    }
}

/// Sparse Cholesky factorization `A = L Lᵀ` (natural ordering).
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    factor: CscCholesky<f64>,
    dim: usize,
}

impl SparseCholesky {
    pub fn factor(a: &SymSparseMatrix) -> Result<Self> {
        let factor = CscCholesky::factor(&a.to_csc()).map_err(|_| Error::NotPositiveDefinite)?;
        Ok(Self { factor, dim: a.dim() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.dim, "right-hand side length mismatch");
        let mut x = DMatrix::from_column_slice(self.dim, 1, rhs.as_slice());
        self.factor.solve_mut(&mut x);
        DVector::from_column_slice(x.as_slice())
    }

    pub fn solve_mat(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    /// `L⁻¹ f`. For `A = X`, `‖L⁻¹ f‖₂` is the `X`-dual norm of the functional `f`.
    pub fn whiten(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut y = DMatrix::from_column_slice(self.dim, 1, f.as_slice());
        spsolve_csc_lower_triangular(Op::NoOp(self.factor.l()), &mut y).expect("factor has a positive diagonal");
        DVector::from_column_slice(y.as_slice())
    }

    /// `L⁻ᵀ w`, the inverse of [`Self::whiten`]'s adjoint.
    pub fn unwhiten(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut y = DMatrix::from_column_slice(self.dim, 1, w.as_slice());
        spsolve_csc_lower_triangular(Op::Transpose(self.factor.l()), &mut y).expect("factor has a positive diagonal");
        DVector::from_column_slice(y.as_slice())
    }

    /// `Lᵀ x`.
    pub fn apply_lt(&self, x: &DVector<f64>) -> DVector<f64> {
        let l = self.factor.l();
        let mut out = DVector::zeros(self.dim);
        for (j, col) in (0..self.dim).map(|j| (j, l.col(j))) {
            out[j] = col.row_indices().iter().zip(col.values()).map(|(&i, v)| v * x[i]).sum();
        }
        out
    }
}

/// Solver selection for [`sparse_solve_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Cholesky,
    ConjugateGradient,
}

/// Solves an SPD system by sparse Cholesky.
pub fn sparse_solve(a: &SymSparseMatrix, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    sparse_solve_with(a, rhs, SolveMethod::Cholesky)
}

pub fn sparse_solve_with(a: &SymSparseMatrix, rhs: &DVector<f64>, method: SolveMethod) -> Result<DVector<f64>> {
    if rhs.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: rhs.len(),
        });
    }
    match method {
        SolveMethod::Cholesky => Ok(SparseCholesky::factor(a)?.solve(rhs)),
        SolveMethod::ConjugateGradient => conjugate_gradient(a, rhs, SOLVER_TOLERANCE, 10 * a.dim().max(10)),
    }
}

/// Unpreconditioned conjugate gradients with a relative residual stopping rule.
/// Detects loss of positive definiteness through a non-positive curvature.
pub fn conjugate_gradient(a: &SymSparseMatrix, b: &DVector<f64>, tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let b_norm = b.norm();
    let mut x = DVector::zeros(b.len());
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    for _ in 0..max_iter {
        let ap = a.mul_vec(&p);
        let curvature = p.dot(&ap);
        if curvature <= 0.0 {
            return Err(Error::NotPositiveDefinite);
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.dot(&r);
        if rr_new.sqrt() <= tol * b_norm {
            return Ok(x);
        }
        p = &r + (rr_new / rr) * &p;
        rr = rr_new;
    }
    // Recurrence residual can drift from the true one; report the latter.
    let residual = (b - a.mul_vec(&x)).norm() / b_norm;
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Eigen-decomposition of a dense symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct DenseSpectrum {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored column-wise, in the order of `values`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eig(a: &DMatrix<f64>) -> Result<DenseSpectrum> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(DenseSpectrum { values, vectors })
}

/// Sweep limit for [`jacobi_svd`]; convergence is quadratic, so a handful
/// of sweeps is typical.
const JACOBI_MAX_SWEEPS: usize = 60;

/// Singular values (descending) and right singular vectors of `a` by
/// one-sided Jacobi rotations of its columns. Small singular values are
/// resolved to high relative accuracy.
pub fn jacobi_svd(mut a: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = m.max(1) as f64 * f64::EPSILON;
    // Columns below this squared norm are numerically null; rotating them
    // against each other only shuffles rounding noise.
    let floor = (f64::EPSILON * a.norm()).powi(2);
    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (cp, cq) = (a.column(p), a.column(q));
                let alpha = cp.norm_squared();
                let beta = cq.norm_squared();
                let gamma = cp.dot(&cq);
                if alpha <= floor || beta <= floor || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                iterations: sweeps,
                residual: f64::NAN,
            });
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| norms[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| v.column(i).into_owned()).collect::<Vec<_>>());
    Ok((values, vectors))
}

fn rotate_columns(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * x - s * y;
        a[(i, q)] = s * x + c * y;
    }
}

/// Singular values (descending, `min(rows, cols)` of them) and the matching
/// left singular vectors of `w`, given as `wᵀ`. A Householder QR `wᵀ = Q R`
/// reduces the problem to [`jacobi_svd`] of the small factor `R`, whose right
/// singular vectors are the left singular vectors of `w`.
pub fn left_singular_pairs(wt: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = wt.nrows().min(wt.ncols());
    let r = wt.qr().r();
    let (mut values, mut vectors) = jacobi_svd(r)?;
    values.truncate(k);
    vectors = vectors.columns(0, k).into_owned();
    Ok((values, vectors))
}

/// Flips the sign of `v` so that its entry of largest magnitude is positive.
pub fn fix_sign(v: &mut DVector<f64>) {
    if v.is_empty() {
        return;
    }
    if v[v.iamax()] < 0.0 {
        v.neg_mut();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &b * b.transpose() + DMatrix::identity(n, n) * (n as f64) * 0.1
    }

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        b.qr().q()
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let a = SymSparseMatrix::identity(7);
        let rhs = DVector::from_fn(7, |i, _| i as f64 - 3.0);
        let x = sparse_solve(&a, &rhs).unwrap();
        assert!((x - &rhs).amax() < 1e-15);
        let x = sparse_solve_with(&a, &rhs, SolveMethod::ConjugateGradient).unwrap();
        assert!((x - rhs).amax() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = SymSparseMatrix::from_dense(&random_spd(10, &mut rng));
        let x = sparse_solve(&a, &DVector::zeros(10)).unwrap();
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn solves_match_dense_lu_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [3usize, 11, 29, 50] {
            let dense = random_spd(n, &mut rng);
            let a = SymSparseMatrix::from_dense(&dense);
            let rhs = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let oracle = dense.clone().lu().solve(&rhs).unwrap();
            for method in [SolveMethod::Cholesky, SolveMethod::ConjugateGradient] {
                let x = sparse_solve_with(&a, &rhs, method).unwrap();
                let rel = (&x - &oracle).norm() / oracle.norm();
                assert!(rel < 1e-10, "n={n} {method:?}: rel err {rel:e}");
            }
        }
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = SymSparseMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]);
        let rhs = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(sparse_solve(&a, &rhs), Err(Error::NotPositiveDefinite)));
        assert!(matches!(
            sparse_solve_with(&a, &rhs, SolveMethod::ConjugateGradient),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn whitening_gives_dual_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = random_spd(12, &mut rng);
        let chol = SparseCholesky::factor(&SymSparseMatrix::from_dense(&dense)).unwrap();
        let f = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        let r = chol.solve(&f);
        let w = chol.whiten(&f);
        assert!((w.norm_squared() - f.dot(&r)).abs() < 1e-12 * f.dot(&r));
        let back = chol.unwhiten(&w);
        assert!((back - r).amax() < 1e-12);
        let x = DVector::from_fn(12, |_, _| rng.random_range(-1.0..1.0));
        assert!((chol.apply_lt(&x).norm_squared() - x.dot(&(&dense * &x))).abs() < 1e-10);
    }

    #[test]
    fn eig_of_diagonal_is_sorted() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let s = sym_eig(&a).unwrap();
        assert_eq!(s.values.as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn eig_recovers_constructed_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let q = random_orthogonal(n, &mut rng);
        let mut d: Vec<f64> = (0..n).map(|i| 10.0 - i as f64 * 0.37).collect();
        let a = &q * DMatrix::from_diagonal(&DVector::from_vec(d.clone())) * q.transpose();
        let s = sym_eig(&a).unwrap();
        d.sort_by(|x, y| y.total_cmp(x));
        for (got, want) in s.values.iter().zip(&d) {
            assert!((got - want).abs() < 1e-10);
        }
        let gram = s.vectors.transpose() * &s.vectors;
        assert!((gram - DMatrix::identity(n, n)).amax() < 1e-10);
        let recon = &s.vectors * DMatrix::from_diagonal(&s.values) * s.vectors.transpose();
        assert!((recon - &a).amax() < 1e-10 * a.amax());
    }

    #[test]
    fn eig_of_identity() {
        let s = sym_eig(&DMatrix::identity(5, 5)).unwrap();
        assert!(s.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!((s.vectors.transpose() * &s.vectors - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn jacobi_svd_of_constructed_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u, v) = (random_orthogonal(7, &mut rng), random_orthogonal(5, &mut rng));
        let sigma = [4.0, 2.5, 1.0, 1e-6, 1e-11];
        let mut s = DMatrix::zeros(7, 5);
        for (i, x) in sigma.iter().enumerate() {
            s[(i, i)] = *x;
        }
        let (values, vectors) = jacobi_svd(&u * s * v.transpose()).unwrap();
        for (got, want) in values.iter().zip(sigma) {
            // Forming U S Vᵀ already perturbs entries by about 1e-15.
            assert!((got - want).abs() <= 1e-9 * want + 1e-14, "{got:e} {want:e}");
        }
        assert!((vectors.tr_mul(&vectors) - DMatrix::identity(5, 5)).amax() < 1e-13);
        for j in 0..3 {
            assert!((vectors.column(j).dot(&v.column(j)).abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn left_pairs_of_rank_one_matrix() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = DVector::from_fn(30, |i, _| (i as f64).sqrt());
        let w = &x * y.transpose();
        let (values, vectors) = left_singular_pairs(w.transpose()).unwrap();
        assert_eq!(values.len(), 4);
        assert!((values[0] - x.norm() * y.norm()).abs() <= 1e-13 * values[0]);
        assert!(values[1] <= 1e-14 * values[0]);
        assert!((vectors.column(0).dot(&x).abs() - x.norm()).abs() < 1e-12);
    }

    #[test]
    fn left_pairs_match_dense_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (rows, cols) in [(6, 40), (9, 4)] {
            let w = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let (values, vectors) = left_singular_pairs(w.transpose()).unwrap();
            let mut dense: Vec<f64> = w.singular_values().iter().copied().collect();
            dense.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in values.iter().zip(&dense) {
                assert!((a - b).abs() < 1e-12 * dense[0]);
            }
            // W Wᵀ u = s² u.
            let g = &w * w.transpose();
            for (j, s) in values.iter().enumerate() {
                let u = vectors.column(j);
                assert!((&g * u - u * (s * s)).amax() < 1e-11 * dense[0] * dense[0]);
            }
        }
    }

    #[test]
    fn combine_requires_common_pattern() {
        let a = SymSparseMatrix::identity(3);
        let b = SymSparseMatrix::from_triplets(3, &[(0, 1, 1.0), (1, 0, 1.0)]);
        assert!(SymSparseMatrix::combine(&[(1.0, &a), (2.0, &b)]).is_err());
        let c = SymSparseMatrix::combine(&[(1.0, &a), (2.0, &a)]).unwrap();
        assert_eq!(c.get(1, 1), 3.0);
    }

    proptest::proptest! {
        #[test]
        fn solve_then_apply_is_identity(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..25usize);
            let a = SymSparseMatrix::from_dense(&random_spd(n, &mut rng));
            let rhs = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let x = sparse_solve(&a, &rhs).unwrap();
            let rel = (a.mul_vec(&x) - &rhs).norm() / rhs.norm();
            proptest::prop_assert!(rel <= 1e-12);
        }
    }
}
