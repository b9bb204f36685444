use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rom::operators::{ReducedOperators, ReducedTrajectory};
use crate::rom::riesz::{RieszData, RieszFactor};
use crate::stochastics::ParameterSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateBundle {
    /// `Δ_N^u`.
    pub primal: f64,
    /// `Δ_Ñ^ψ`, including the final-condition part.
    pub dual: Option<f64>,
    /// `Δ^s = Δ_N^u Δ_Ñ^ψ`.
    pub output: Option<f64>,
    /// `Δ^{ψ,fc}`.
    pub final_condition: Option<f64>,
    /// Joint density at `ξ`.
    pub density: f64,
    pub weighted_primal: f64,
    pub weighted_output: Option<f64>,
}

/// Per-ξ contraction of a residual factor with the affine coefficients: the
/// columns belonging to basis vector `n` collapse to `T_M[:, n]` (mass) and
/// `T_A[:, n] = Σ_q θ_q R_{A_q n}`.
struct Contracted {
    load: DVector<f64>,
    mass: DMatrix<f64>,
    stiff: DMatrix<f64>,
}

fn contract(factor: &RieszFactor, offset: usize, theta_a: &[f64], n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let qa = theta_a.len();
    let expected = offset + n * (qa + 1);
    if factor.ncols() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: factor.ncols(),
        });
    }
    let r = factor.matrix();
    let rank = r.nrows();
    let mut mass = DMatrix::zeros(rank, n);
    let mut stiff = DMatrix::zeros(rank, n);
    for j in 0..n {
        let base = offset + j * (qa + 1);
        mass.set_column(j, &r.column(base));
        let mut col = stiff.column_mut(j);
        for (q, t) in theta_a.iter().enumerate() {
            col.axpy(*t, &r.column(base + 1 + q), 1.0);
        }
    }
    Ok((mass, stiff))
}

fn contract_primal(factor: &RieszFactor, ops: &ReducedOperators, xi: &ParameterSample) -> Result<Contracted> {
    let tb = ops.theta.theta_b(xi)?;
    let ta = ops.theta.theta_a(xi)?;
    let (mass, stiff) = contract(factor, tb.len(), &ta, ops.num_primal())?;
    let r = factor.matrix();
    let load = r.columns(0, tb.len()) * DVector::from_vec(tb);
    Ok(Contracted { load, mass, stiff })
}

/// `‖r^k‖_{X'_ref}` for `k = 1..K` (entry `k - 1`).
pub fn primal_residual_norms(
    riesz: &RieszData,
    ops: &ReducedOperators,
    xi: &ParameterSample,
    primal: &ReducedTrajectory,
) -> Result<Vec<f64>> {
    let t = contract_primal(&riesz.primal, ops, xi)?;
    Ok((1..=ops.steps)
        .map(|k| {
            let c = primal.state(k);
            let d = (&c - primal.state(k - 1)) / ops.dt;
            (&t.load - &t.mass * d - &t.stiff * c).norm()
        })
        .collect())
}

/// Dual residual `r^k(v) = (v, ψ^{k+1} − ψ^k)/Δt − a(v, ψ^k)` norms for
/// `k = 0..K-1`.
pub fn dual_residual_norms(
    riesz: &RieszData,
    ops: &ReducedOperators,
    xi: &ParameterSample,
    dual: &ReducedTrajectory,
) -> Result<Vec<f64>> {
    let factor = riesz.dual.as_ref().ok_or(Error::MissingDual)?;
    let ta = ops.theta.theta_a(xi)?;
    let (mass, stiff) = contract(factor, 0, &ta, ops.num_dual())?;
    Ok((0..ops.steps)
        .map(|k| {
            let y = dual.state(k);
            let d = (dual.state(k + 1) - &y) / ops.dt;
            (&mass * d - &stiff * y).norm()
        })
        .collect())
}

fn time_sum(dt: f64, alpha: f64, norms: &[f64]) -> f64 {
    dt / alpha * norms.iter().map(|r| r * r).sum::<f64>()
}

/// `Δ_N^u = (Δt/ᾱ Σ_k ‖r^k‖²)^½`.
pub fn primal_estimate(
    riesz: &RieszData,
    ops: &ReducedOperators,
    xi: &ParameterSample,
    primal: &ReducedTrajectory,
) -> Result<f64> {
    let norms = primal_residual_norms(riesz, ops, xi, primal)?;
    Ok(time_sum(ops.dt, ops.alpha_bar, &norms).sqrt())
}

pub fn estimate(
    riesz: &RieszData,
    ops: &ReducedOperators,
    xi: &ParameterSample,
    primal: &ReducedTrajectory,
    dual: Option<&ReducedTrajectory>,
) -> Result<EstimateBundle> {
    let du = primal_estimate(riesz, ops, xi, primal)?;
    let (dual_est, fc) = match dual {
        Some(y) => {
            let nd = ops.num_dual();
            let fc = *riesz
                .final_condition
                .get(nd.wrapping_sub(1))
                .ok_or(Error::MissingDual)?;
            let norms = dual_residual_norms(riesz, ops, xi, y)?;
            let total = fc * fc + time_sum(ops.dt, ops.alpha_bar, &norms);
            (Some(total.sqrt()), Some(fc))
        }
        None => (None, None),
    };
    let output = dual_est.map(|d| du * d);
    let density = ops.density.joint_pdf(xi);
    Ok(EstimateBundle {
        primal: du,
        dual: dual_est,
        output,
        final_condition: fc,
        density,
        weighted_primal: du * density,
        weighted_output: output.map(|s| s * density),
    })
}
