//! Residual dual norms. Each residual component functional `f_j` is whitened,
//! `w_j = L⁻¹ f_j` with `X_ref = L Lᵀ`, so that `‖Σ z_j f_j‖_{X'} = ‖W z‖₂`.
//! The whitened columns are compressed to `W = Q R`; online only `R` is
//! needed and the norm is evaluated as `‖R z‖₂`, which keeps full relative
//! accuracy where the Gram form `zᵀRᵀRz` would lose half the digits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SparseCholesky;
use crate::rom::basis::ReducedBasis;
use crate::solvers::AffineModel;

/// Columns whose orthogonal remainder falls below this fraction of their
/// norm add no new direction.
const RANK_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct RieszFactor {
    r: DMatrix<f64>,
}

impl RieszFactor {
    pub fn empty() -> Self {
        Self {
            r: DMatrix::zeros(0, 0),
        }
    }

    pub fn from_matrix(r: DMatrix<f64>) -> Self {
        Self { r }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    pub fn rank(&self) -> usize {
        self.r.nrows()
    }

    /// Inner products of all representers, `Rᵀ R`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.r.tr_mul(&self.r)
    }

    /// Leading `ncols` columns.
    pub fn truncated(&self, ncols: usize) -> Result<Self> {
        if ncols > self.ncols() {
            return Err(Error::DimensionMismatch {
                expected: self.ncols(),
                found: ncols,
            });
        }
        Ok(Self {
            r: self.r.columns(0, ncols).into_owned(),
        })
    }

    /// `‖Σ z_j f_j‖_{X'_ref}`.
    pub fn norm(&self, z: &DVector<f64>) -> f64 {
        (&self.r * z).norm()
    }
}

/// Offline side of a [`RieszFactor`], holding the orthonormal `Q`.
#[derive(Debug, Clone)]
pub struct RieszAccumulator {
    q: DMatrix<f64>,
    factor: RieszFactor,
}

impl RieszAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            q: DMatrix::zeros(dim, 0),
            factor: RieszFactor::empty(),
        }
    }

    pub fn factor(&self) -> &RieszFactor {
        &self.factor
    }

    /// Appends the whitened column `w` (classical Gram-Schmidt, twice).
    pub fn push(&mut self, w: &DVector<f64>) {
        let rank = self.q.ncols();
        let ncols = self.factor.ncols();
        let mut v = w.clone();
        let mut h = DVector::zeros(rank);
        for _ in 0..2 {
            let c = self.q.tr_mul(&v);
            v -= &self.q * &c;
            h += c;
        }
        let rho = v.norm();
        let grows = rho > RANK_TOLERANCE * w.norm();
        let new_rank = if grows { rank + 1 } else { rank };
        let r = std::mem::replace(&mut self.factor.r, DMatrix::zeros(0, 0));
        let mut r = r.resize(new_rank, ncols + 1, 0.0);
        r.view_mut((0, ncols), (rank, 1)).copy_from(&h);
        if grows {
            r[(rank, ncols)] = rho;
            let q = std::mem::replace(&mut self.q, DMatrix::zeros(0, 0));
            self.q = q.resize_horizontally(rank + 1, 0.0);
            self.q.set_column(rank, &(v / rho));
        }
        self.factor.r = r;
    }

    /// Representers `X_ref⁻¹ f_j` as columns (offline diagnostics).
    pub fn representers(&self, xref: &SparseCholesky) -> DMatrix<f64> {
        let w = &self.q * &self.factor.r;
        let mut out = DMatrix::zeros(w.nrows(), w.ncols());
        for j in 0..w.ncols() {
            out.set_column(j, &xref.unwhiten(&w.column(j).into_owned()));
        }
        out
    }
}

/// Residual data for both problems. Primal columns are
/// `[b_1 … b_Qb | M ζ_1, A_1 ζ_1 … A_Qa ζ_1 | …]`, dual columns
/// `[M ζ̃_1, A_1 ζ̃_1 … A_Qa ζ̃_1 | …]`. `final_condition[ñ-1]` holds the
/// final-condition estimator for the leading `ñ` dual vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszData {
    pub primal: RieszFactor,
    pub dual: Option<RieszFactor>,
    pub final_condition: Vec<f64>,
}

impl RieszData {
    pub fn truncated(&self, num_a: usize, num_b: usize, n: usize, nd: usize) -> Result<Self> {
        let dual = match (&self.dual, nd) {
            (Some(d), nd) if nd > 0 => Some(d.truncated(nd * (num_a + 1))?),
            _ => None,
        };
        if nd > self.final_condition.len() {
            return Err(Error::MissingDual);
        }
        Ok(Self {
            primal: self.primal.truncated(num_b + n * (num_a + 1))?,
            dual,
            final_condition: self.final_condition[..nd].to_vec(),
        })
    }
}

/// Offline builder for [`RieszData`] that grows with the bases.
#[derive(Debug, Clone)]
pub struct RieszBuilder {
    primal: RieszAccumulator,
    dual: Option<RieszAccumulator>,
    final_condition: Vec<f64>,
}

impl RieszBuilder {
    pub fn new(model: &AffineModel, with_dual: bool) -> Self {
        let mut primal = RieszAccumulator::new(model.dim());
        for b in &model.b_components {
            primal.push(&model.xref_factor.whiten(b));
        }
        Self {
            primal,
            dual: with_dual.then(|| RieszAccumulator::new(model.dim())),
            final_condition: Vec::new(),
        }
    }

    fn push_vector(acc: &mut RieszAccumulator, model: &AffineModel, z: &DVector<f64>) {
        acc.push(&model.xref_factor.whiten(&model.mass.mul_vec(z)));
        for aq in &model.a_components {
            acc.push(&model.xref_factor.whiten(&aq.mul_vec(z)));
        }
    }

    pub fn push_primal(&mut self, model: &AffineModel, z: &DVector<f64>) {
        Self::push_vector(&mut self.primal, model, z);
    }

    /// Registers the last vector of `dual`.
    pub fn push_dual(&mut self, model: &AffineModel, dual: &ReducedBasis) -> Result<()> {
        let acc = self.dual.as_mut().ok_or(Error::MissingDual)?;
        let z = dual.vector(dual.len() - 1);
        Self::push_vector(acc, model, &z);
        self.final_condition.push(final_condition_estimate(model, dual)?);
        Ok(())
    }

    pub fn primal(&self) -> &RieszAccumulator {
        &self.primal
    }

    pub fn dual(&self) -> Option<&RieszAccumulator> {
        self.dual.as_ref()
    }

    pub fn data(&self) -> RieszData {
        RieszData {
            primal: self.primal.factor().clone(),
            dual: self.dual.as_ref().map(|d| d.factor().clone()),
            final_condition: self.final_condition.clone(),
        }
    }
}

/// `sup_v (l(v) − (v, ψ_Ñ^K)) / ‖v‖_{L²} = ‖ψ_h^K − ψ_Ñ^K‖_{L²}`, with
/// `ψ_Ñ^K` the `L²` projection of `ψ_h^K` onto the dual space.
pub fn final_condition_estimate(model: &AffineModel, dual: &ReducedBasis) -> Result<f64> {
    let z = dual.vectors();
    let gram = z.tr_mul(&model.mass.mul_mat(z));
    let y = gram
        .cholesky()
        .ok_or(Error::SingularReducedSystem)?
        .solve(&z.tr_mul(&model.output));
    let e = model.dual_final_state() - z * y;
    Ok(model.mass.quad_form(&e).max(0.0).sqrt())
}

pub fn compute_riesz_data(
    model: &AffineModel,
    primal: &ReducedBasis,
    dual: Option<&ReducedBasis>,
) -> Result<RieszData> {
    let mut builder = RieszBuilder::new(model, dual.is_some());
    for i in 0..primal.len() {
        builder.push_primal(model, &primal.vector(i));
    }
    if let Some(d) = dual {
        for i in 1..=d.len() {
            builder.push_dual(model, &d.truncated(i)?)?;
        }
    }
    Ok(builder.data())
}
