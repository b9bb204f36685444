use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::construction::SnapshotSet;
use crate::error::{Error, Result};
use crate::linalg::{fix_sign, left_singular_pairs, sym_eig};
use crate::rom::{BasisRole, ReducedBasis};
use crate::solvers::AffineModel;

/// Memory guard on `M·K` for [`pod_reference`].
pub const MAX_POD_SNAPSHOTS: usize = 100_000;

/// Dominant POD mode of a trajectory (columns), unit in `X_ref`, with its
/// largest-magnitude entry positive. Uses the method of snapshots.
pub fn pod1(model: &AffineModel, trajectory: &DMatrix<f64>) -> Result<DVector<f64>> {
    if trajectory.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: trajectory.nrows(),
        });
    }
    let xe = model.xref.mul_mat(trajectory);
    let mut gram = trajectory.tr_mul(&xe);
    gram = (&gram + gram.transpose()) * 0.5;
    if !(gram.diagonal().max() > 0.0) {
        return Err(Error::ZeroTrajectory);
    }
    let spec = sym_eig(&gram)?;
    let mut mode = trajectory * spec.vectors.column(0);
    let norm = model.xref.quad_form(&mode).max(0.0).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroTrajectory);
    }
    mode /= norm;
    fix_sign(&mut mode);
    Ok(mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodResult {
    /// `X_ref`-orthonormal modes as columns.
    pub modes: DMatrix<f64>,
    /// All eigenvalues `σ_1 ≥ σ_2 ≥ … ≥ 0`.
    pub eigenvalues: Vec<f64>,
    pub num_samples: usize,
    pub steps: usize,
}

impl PodResult {
    pub fn num_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// `Σ_{l>n} σ_l`.
    pub fn tail(&self, n: usize) -> f64 {
        self.eigenvalues.iter().skip(n).rev().sum()
    }

    pub fn basis(&self, model: &AffineModel, n: usize) -> Result<ReducedBasis> {
        if n > self.num_modes() {
            return Err(Error::DimensionMismatch {
                expected: self.num_modes(),
                found: n,
            });
        }
        ReducedBasis::from_orthonormal(&model.xref, self.modes.columns(0, n).into_owned(), BasisRole::Primal)
    }

    /// `index,sigma` rows, 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,sigma")?;
        for (i, s) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{},{:e}", i + 1, s)?;
        }
        Ok(())
    }
}

/// Reference POD of the primal snapshots `k = 1..K` with weight `Δt/M`.
///
/// The eigenproblem of the snapshot Gram matrix is solved through the SVD of
/// the whitened snapshot matrix `W = (Δt/M)^½ Lᵀ S` (`X_ref = L Lᵀ`): `WᵀW` is
/// the Gram matrix, so `σ_l = s_l²`, and the left singular vectors give the
/// modes as `χ_l = L⁻ᵀ U_l`. This keeps small eigenvalues accurate relative
/// to their own size instead of to `σ_1`. Eigenvalues beyond the rank of `W`
/// are reported as zero, so `eigenvalues` always has `M·K` entries.
pub fn pod_reference(model: &AffineModel, snaps: &SnapshotSet, n_max: usize) -> Result<PodResult> {
    snaps.check(model)?;
    let m = snaps.len();
    let k = model.steps;
    if m * k > MAX_POD_SNAPSHOTS {
        return Err(Error::InvalidInput(format!(
            "{} snapshots exceed the POD limit of {MAX_POD_SNAPSHOTS}",
            m * k
        )));
    }
    let scale = (model.dt / m as f64).sqrt();
    let n = model.dim();
    let columns: Vec<DVector<f64>> = snaps
        .primal
        .par_iter()
        .flat_map_iter(|u| (1..=k).map(move |j| model.xref_factor.apply_lt(&u.state(j)) * scale))
        .collect();
    let wt = DMatrix::from_fn(columns.len(), n, |r, c| columns[r][c]);
    drop(columns);
    let (singular, u) = left_singular_pairs(wt)?;
    let mut eigenvalues: Vec<f64> = singular.iter().map(|s| s * s).collect();
    eigenvalues.resize(m * k, 0.0);
    let keep = n_max.min(singular.len());
    let mut modes = DMatrix::zeros(n, keep);
    for c in 0..keep {
        let mut chi = model.xref_factor.unwhiten(&u.column(c).into_owned());
        fix_sign(&mut chi);
        modes.set_column(c, &chi);
    }
    Ok(PodResult {
        modes,
        eigenvalues,
        num_samples: m,
        steps: k,
    })
}

/// `(Δt/M) Σ_i Σ_{k=1..K} |||u^k_i − P u^k_i|||²` for the `X_ref`-orthogonal
/// projection onto the orthonormal columns of `basis`, computed directly.
pub fn mean_square_projection_error(model: &AffineModel, basis: &DMatrix<f64>, snaps: &SnapshotSet) -> Result<f64> {
    snaps.check(model)?;
    if basis.nrows() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: basis.nrows(),
        });
    }
    let per_sample: Vec<f64> = snaps
        .primal
        .par_iter()
        .map(|u| {
            let s = u.states.columns(1, model.steps).into_owned();
            let e = &s - basis * basis.tr_mul(&model.xref.mul_mat(&s));
            let xe = model.xref.mul_mat(&e);
            e.component_mul(&xe).sum()
        })
        .collect();
    Ok(model.dt / snaps.len() as f64 * per_sample.iter().sum::<f64>())
}

pub fn pod_projection_error(model: &AffineModel, pod: &PodResult, snaps: &SnapshotSet, n: usize) -> Result<f64> {
    if n > pod.num_modes() {
        return Err(Error::DimensionMismatch {
            expected: pod.num_modes(),
            found: n,
        });
    }
    mean_square_projection_error(model, &pod.modes.columns(0, n).into_owned(), snaps)
}
