use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::construction::SnapshotSet;
use crate::error::{Error, Result};
use crate::rom::{
    corrected_output, reduced_output, solve_reduced_dual, solve_reduced_primal, ReducedBasis, ReducedModel,
    ReducedOperators,
};
use crate::solvers::AffineModel;

/// How the approximation `u_N^k(ξ)` of a snapshot is produced.
#[derive(Debug, Clone, Copy)]
pub enum SolutionProducer<'a> {
    /// Reduced Galerkin solution on the leading vectors of `basis`.
    Galerkin {
        basis: &'a ReducedBasis,
        ops: &'a ReducedOperators,
    },
    /// `X_ref`-orthogonal projection onto the leading columns of `modes`.
    Projection { modes: &'a DMatrix<f64> },
}

impl SolutionProducer<'_> {
    fn available(&self) -> usize {
        match self {
            SolutionProducer::Galerkin { basis, ops } => basis.len().min(ops.num_primal()),
            SolutionProducer::Projection { modes } => modes.ncols(),
        }
    }
}

/// `(Ê[Δt Σ_{k=1..K} |||u_h^k − u_N^k|||²_ref])^½` over the snapshot set.
pub fn mc_rms_solution_error(
    model: &AffineModel,
    producer: SolutionProducer,
    snaps: &SnapshotSet,
    n: usize,
) -> Result<f64> {
    snaps.check(model)?;
    if n > producer.available() {
        return Err(Error::DimensionMismatch {
            expected: producer.available(),
            found: n,
        });
    }
    let k = model.steps;
    let truncated = match producer {
        SolutionProducer::Galerkin { basis, ops } => {
            Some((basis.vectors().columns(0, n).into_owned(), ops.truncated(n, 0)?))
        }
        SolutionProducer::Projection { .. } => None,
    };
    let per_sample: Vec<f64> = snaps
        .samples
        .par_iter()
        .zip(&snaps.primal)
        .map(|(xi, u)| {
            let s = u.states.columns(1, k).into_owned();
            let approx = match (&truncated, producer) {
                (Some((z, ops)), _) => {
                    let c = solve_reduced_primal(ops, xi)?.coefficients;
                    z * c.columns(1, k)
                }
                (None, SolutionProducer::Projection { modes }) => {
                    let chi = modes.columns(0, n);
                    chi.clone() * chi.tr_mul(&model.xref.mul_mat(&s))
                }
                (None, SolutionProducer::Galerkin { .. }) => unreachable!("truncated above"),
            };
            let e = s - approx;
            Ok(e.component_mul(&model.xref.mul_mat(&e)).sum())
        })
        .collect::<Result<_>>()?;
    let mean = per_sample.iter().sum::<f64>() / snaps.len() as f64;
    Ok((model.dt * mean).max(0.0).sqrt())
}

/// [`mc_rms_solution_error`] for `N = 1..=n_max`.
pub fn mc_rms_column(
    model: &AffineModel,
    producer: SolutionProducer,
    snaps: &SnapshotSet,
    n_max: usize,
) -> Result<Vec<f64>> {
    (1..=n_max)
        .map(|n| mc_rms_solution_error(model, producer, snaps, n))
        .collect()
}

fn check_outputs(rom: &ReducedModel, snaps: &SnapshotSet) -> Result<()> {
    if snaps.outputs.len() != snaps.len() || snaps.is_empty() {
        return Err(Error::CacheMismatch("snapshot outputs missing".into()));
    }
    if snaps
        .samples
        .iter()
        .any(|x| x.xi_out.len() != rom.ops.theta.num_terms())
    {
        return Err(Error::CacheMismatch("sample dimension differs from the model".into()));
    }
    Ok(())
}

/// `Ê[|s_h − s_N|]` with the corrected output on `n` primal and `nd` dual
/// vectors.
pub fn mc_abs_output_error(rom: &ReducedModel, snaps: &SnapshotSet, n: usize, nd: usize) -> Result<f64> {
    check_outputs(rom, snaps)?;
    let ops = rom.ops.truncated(n, nd)?;
    if ops.dual.is_none() {
        return Err(Error::MissingDual);
    }
    let errs: Vec<f64> = snaps
        .samples
        .par_iter()
        .zip(&snaps.outputs)
        .map(|(xi, s)| {
            let u = solve_reduced_primal(&ops, xi)?;
            let y = solve_reduced_dual(&ops, xi)?;
            Ok((s - corrected_output(&ops, xi, &u, &y)?).abs())
        })
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// `Ê[|s_h − l(u_N^K)|]` without the dual correction.
pub fn mc_abs_output_error_uncorrected(rom: &ReducedModel, snaps: &SnapshotSet, n: usize) -> Result<f64> {
    check_outputs(rom, snaps)?;
    let ops = rom.ops.truncated(n, 0)?;
    let errs: Vec<f64> = snaps
        .samples
        .par_iter()
        .zip(&snaps.outputs)
        .map(|(xi, s)| Ok((s - reduced_output(&ops, &solve_reduced_primal(&ops, xi)?)).abs()))
        .collect::<Result<_>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}
