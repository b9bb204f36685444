use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rom::basis::ReducedBasis;
use crate::solvers::{AffineModel, Direction, ThetaMap, Trajectory};
use crate::stochastics::{DensityModel, ParameterSample};

/// Dual-space blocks and the primal/dual cross blocks used by the output
/// correction.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBlocks {
    /// `ζ̃ᵀ A_q ζ̃`.
    pub a: Vec<DMatrix<f64>>,
    pub mass: DMatrix<f64>,
    pub output: DVector<f64>,
    /// `ζ̃ᵀ b_q`.
    pub load: Vec<DVector<f64>>,
    /// `ζ̃ᵀ M ζ`, Ñ × N.
    pub cross_mass: DMatrix<f64>,
    /// `ζ̃ᵀ A_q ζ`, Ñ × N.
    pub cross_a: Vec<DMatrix<f64>>,
}

/// Galerkin images of the affine components together with the parameter map
/// and time grid, i.e. everything the online stage needs apart from the
/// residual data.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedOperators {
    pub theta: ThetaMap,
    pub density: DensityModel,
    pub dt: f64,
    pub steps: usize,
    pub alpha_bar: f64,
    /// `ζᵀ A_q ζ`.
    pub a: Vec<DMatrix<f64>>,
    pub mass: DMatrix<f64>,
    /// `ζᵀ b_q`.
    pub load: Vec<DVector<f64>>,
    pub output: DVector<f64>,
    pub dual: Option<DualBlocks>,
}

fn project_pair(model: &AffineModel, left: &DMatrix<f64>, right: &DMatrix<f64>) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let mass = left.tr_mul(&model.mass.mul_mat(right));
    let a = model
        .a_components
        .iter()
        .map(|aq| left.tr_mul(&aq.mul_mat(right)))
        .collect();
    (mass, a)
}

fn check_basis(model: &AffineModel, basis: &ReducedBasis) -> Result<()> {
    if basis.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: basis.dim(),
        });
    }
    Ok(())
}

pub fn project_operators(
    model: &AffineModel,
    primal: &ReducedBasis,
    dual: Option<&ReducedBasis>,
) -> Result<ReducedOperators> {
    check_basis(model, primal)?;
    let z = primal.vectors();
    let (mass, a) = project_pair(model, z, z);
    let dual = match dual {
        Some(d) => {
            check_basis(model, d)?;
            Some(project_dual(model, z, d.vectors()))
        }
        None => None,
    };
    Ok(ReducedOperators {
        theta: model.theta.clone(),
        density: model.density,
        dt: model.dt,
        steps: model.steps,
        alpha_bar: model.alpha_bar,
        a,
        mass,
        load: model.b_components.iter().map(|b| z.tr_mul(b)).collect(),
        output: z.tr_mul(&model.output),
        dual,
    })
}

fn project_dual(model: &AffineModel, z: &DMatrix<f64>, zd: &DMatrix<f64>) -> DualBlocks {
    let (mass, a) = project_pair(model, zd, zd);
    let (cross_mass, cross_a) = project_pair(model, zd, z);
    DualBlocks {
        a,
        mass,
        output: zd.tr_mul(&model.output),
        load: model.b_components.iter().map(|b| zd.tr_mul(b)).collect(),
        cross_mass,
        cross_a,
    }
}

/// Appends the row and column `v` (length n + 1, last entry diagonal).
fn grow_square(m: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut out = m.clone().resize(n + 1, n + 1, 0.0);
    for i in 0..=n {
        out[(i, n)] = v[i];
        out[(n, i)] = v[i];
    }
    out
}

fn push_entry(v: &DVector<f64>, x: f64) -> DVector<f64> {
    let n = v.len();
    let mut out = v.clone().resize_vertically(n + 1, 0.0);
    out[n] = x;
    out
}

impl ReducedOperators {
    pub fn num_primal(&self) -> usize {
        self.mass.nrows()
    }

    pub fn num_dual(&self) -> usize {
        self.dual.as_ref().map_or(0, |d| d.mass.nrows())
    }

    /// Incremental update after the last primal basis vector was appended.
    pub fn append_primal(
        &mut self,
        model: &AffineModel,
        primal: &ReducedBasis,
        dual: Option<&ReducedBasis>,
    ) -> Result<()> {
        let n = self.num_primal();
        if primal.len() != n + 1 {
            return Err(Error::DimensionMismatch {
                expected: n + 1,
                found: primal.len(),
            });
        }
        let z = primal.vectors();
        let new = primal.vector(n);
        let mz = model.mass.mul_vec(&new);
        self.mass = grow_square(&self.mass, &z.tr_mul(&mz));
        let mut az = Vec::with_capacity(self.a.len());
        for (aq, comp) in self.a.iter_mut().zip(&model.a_components) {
            let v = comp.mul_vec(&new);
            *aq = grow_square(aq, &z.tr_mul(&v));
            az.push(v);
        }
        for (lq, b) in self.load.iter_mut().zip(&model.b_components) {
            *lq = push_entry(lq, b.dot(&new));
        }
        self.output = push_entry(&self.output, model.output.dot(&new));
        if let Some(blocks) = self.dual.as_mut() {
            let d = dual.ok_or(Error::MissingDual)?;
            let zd = d.vectors();
            let grow_col = |m: &DMatrix<f64>, col: DVector<f64>| {
                let mut out = m.clone().resize_horizontally(n + 1, 0.0);
                out.set_column(n, &col);
                out
            };
            blocks.cross_mass = grow_col(&blocks.cross_mass, zd.tr_mul(&mz));
            for (c, v) in blocks.cross_a.iter_mut().zip(&az) {
                *c = grow_col(c, zd.tr_mul(v));
            }
        }
        Ok(())
    }

    /// Incremental update after the last dual basis vector was appended.
    pub fn append_dual(&mut self, model: &AffineModel, primal: &ReducedBasis, dual: &ReducedBasis) -> Result<()> {
        let nd = self.num_dual();
        if dual.len() != nd + 1 {
            return Err(Error::DimensionMismatch {
                expected: nd + 1,
                found: dual.len(),
            });
        }
        let Some(blocks) = self.dual.as_mut() else {
            self.dual = Some(project_dual(model, primal.vectors(), dual.vectors()));
            return Ok(());
        };
        let z = primal.vectors();
        let zd = dual.vectors();
        let new = dual.vector(nd);
        let mv = model.mass.mul_vec(&new);
        blocks.mass = grow_square(&blocks.mass, &zd.tr_mul(&mv));
        let grow_row = |m: &DMatrix<f64>, row: DVector<f64>| {
            let mut out = m.clone().resize_vertically(nd + 1, 0.0);
            out.set_row(nd, &row.transpose());
            out
        };
        blocks.cross_mass = grow_row(&blocks.cross_mass, z.tr_mul(&mv));
        for ((aq, cq), comp) in blocks
            .a
            .iter_mut()
            .zip(blocks.cross_a.iter_mut())
            .zip(&model.a_components)
        {
            let v = comp.mul_vec(&new);
            *aq = grow_square(aq, &zd.tr_mul(&v));
            *cq = grow_row(cq, z.tr_mul(&v));
        }
        for (lq, b) in blocks.load.iter_mut().zip(&model.b_components) {
            *lq = push_entry(lq, b.dot(&new));
        }
        blocks.output = push_entry(&blocks.output, model.output.dot(&new));
        Ok(())
    }

    /// Leading `n × n` primal and `nd × nd` dual blocks (`nd = 0` drops the
    /// dual part).
    pub fn truncated(&self, n: usize, nd: usize) -> Result<Self> {
        if n == 0 || n > self.num_primal() || nd > self.num_dual() {
            return Err(Error::DimensionMismatch {
                expected: self.num_primal(),
                found: n,
            });
        }
        let sq = |m: &DMatrix<f64>, k: usize| m.view((0, 0), (k, k)).into_owned();
        let head = |v: &DVector<f64>, k: usize| v.rows(0, k).into_owned();
        let dual = match (&self.dual, nd) {
            (Some(b), nd) if nd > 0 => Some(DualBlocks {
                a: b.a.iter().map(|m| sq(m, nd)).collect(),
                mass: sq(&b.mass, nd),
                output: head(&b.output, nd),
                load: b.load.iter().map(|v| head(v, nd)).collect(),
                cross_mass: b.cross_mass.view((0, 0), (nd, n)).into_owned(),
                cross_a: b.cross_a.iter().map(|m| m.view((0, 0), (nd, n)).into_owned()).collect(),
            }),
            _ => None,
        };
        Ok(Self {
            theta: self.theta.clone(),
            density: self.density,
            dt: self.dt,
            steps: self.steps,
            alpha_bar: self.alpha_bar,
            a: self.a.iter().map(|m| sq(m, n)).collect(),
            mass: sq(&self.mass, n),
            load: self.load.iter().map(|v| head(v, n)).collect(),
            output: head(&self.output, n),
            dual,
        })
    }

    /// `A_N(ξ) = Σ θ^a_q ζᵀA_qζ`.
    pub fn operator(&self, xi: &ParameterSample) -> Result<DMatrix<f64>> {
        combine(&self.theta.theta_a(xi)?, &self.a)
    }

    pub fn load_vector(&self, xi: &ParameterSample) -> Result<DVector<f64>> {
        combine_vec(&self.theta.theta_b(xi)?, &self.load, self.num_primal())
    }

    /// Primal residual `b(ζ_j) − (d, ζ_j) − a(c, ζ_j)` at every basis vector
    /// for step `k ≥ 1`; vanishes for the Galerkin solution.
    pub fn galerkin_residual(&self, xi: &ParameterSample, red: &ReducedTrajectory, k: usize) -> Result<DVector<f64>> {
        let c = red.state(k);
        let d = (&c - red.state(k - 1)) / self.dt;
        Ok(self.load_vector(xi)? - &self.mass * d - self.operator(xi)? * c)
    }

    /// Largest extent of any stored array; independent of the FE dimension.
    pub fn max_extent(&self) -> usize {
        let mut m = self.mass.nrows().max(self.theta.num_a());
        if let Some(d) = &self.dual {
            m = m.max(d.mass.nrows());
        }
        m
    }
}

fn combine(theta: &[f64], mats: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let (r, c) = mats.first().map_or((0, 0), |m| m.shape());
    let mut out = DMatrix::zeros(r, c);
    for (t, m) in theta.iter().zip(mats) {
        out.zip_apply(m, |o, v| *o += t * v);
    }
    Ok(out)
}

fn combine_vec(theta: &[f64], vecs: &[DVector<f64>], n: usize) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(n);
    for (t, v) in theta.iter().zip(vecs) {
        out.axpy(*t, v, 1.0);
    }
    Ok(out)
}

/// Reduced coefficients `c^k` for `k = 0..K`, one column per time index.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub coefficients: DMatrix<f64>,
    pub direction: Direction,
}

impl ReducedTrajectory {
    pub fn steps(&self) -> usize {
        self.coefficients.ncols() - 1
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.coefficients.column(k).into_owned()
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.state(self.steps())
    }

    /// Lifts the coefficients to FE space (offline use only).
    pub fn reconstruct(&self, basis: &ReducedBasis) -> Trajectory {
        Trajectory {
            states: basis.vectors() * &self.coefficients,
            direction: self.direction,
        }
    }
}

fn factor(system: DMatrix<f64>) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = system.lu();
    if !lu.is_invertible() {
        return Err(Error::SingularReducedSystem);
    }
    Ok(lu)
}

fn solve(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let x = lu.solve(rhs).ok_or(Error::SingularReducedSystem)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularReducedSystem)
    }
}

/// Implicit Euler in the primal space from zero initial data.
pub fn solve_reduced_primal(ops: &ReducedOperators, xi: &ParameterSample) -> Result<ReducedTrajectory> {
    let n = ops.num_primal();
    let system = &ops.mass + ops.dt * ops.operator(xi)?;
    let lu = factor(system)?;
    let rhs = ops.dt * ops.load_vector(xi)?;
    let mut coefficients = DMatrix::zeros(n, ops.steps + 1);
    let mut prev = DVector::zeros(n);
    for k in 1..=ops.steps {
        let next = solve(&lu, &(&ops.mass * &prev + &rhs))?;
        coefficients.set_column(k, &next);
        prev = next;
    }
    Ok(ReducedTrajectory {
        coefficients,
        direction: Direction::Forward,
    })
}

/// Final condition `(v, ψ^K) = l(v)` on the dual space, then the backward sweep.
pub fn solve_reduced_dual(ops: &ReducedOperators, xi: &ParameterSample) -> Result<ReducedTrajectory> {
    let d = ops.dual.as_ref().ok_or(Error::MissingDual)?;
    let nd = d.mass.nrows();
    let theta = ops.theta.theta_a(xi)?;
    let system = &d.mass + ops.dt * combine(&theta, &d.a)?;
    let lu = factor(system)?;
    let mut coefficients = DMatrix::zeros(nd, ops.steps + 1);
    let mut next = solve(&factor(d.mass.clone())?, &d.output)?;
    coefficients.set_column(ops.steps, &next);
    for k in (0..ops.steps).rev() {
        let cur = solve(&lu, &(&d.mass * &next))?;
        coefficients.set_column(k, &cur);
        next = cur;
    }
    Ok(ReducedTrajectory {
        coefficients,
        direction: Direction::Backward,
    })
}

/// `l(u_N^K)`.
pub fn reduced_output(ops: &ReducedOperators, primal: &ReducedTrajectory) -> f64 {
    ops.output.dot(&primal.final_state())
}

/// `Δt Σ_{k=1..K} r^k(ψ_Ñ^{k-1})`, evaluated with the cross blocks.
pub fn output_correction(
    ops: &ReducedOperators,
    xi: &ParameterSample,
    primal: &ReducedTrajectory,
    dual: &ReducedTrajectory,
) -> Result<f64> {
    let d = ops.dual.as_ref().ok_or(Error::MissingDual)?;
    let tb = ops.theta.theta_b(xi)?;
    let ta = ops.theta.theta_a(xi)?;
    let load = combine_vec(&tb, &d.load, d.mass.nrows())?;
    let cross_a = combine(&ta, &d.cross_a)?;
    let mut total = 0.0;
    for k in 1..=ops.steps {
        let c = primal.state(k);
        let dc = (&c - primal.state(k - 1)) / ops.dt;
        let y = dual.state(k - 1);
        let r = &load - &d.cross_mass * dc - &cross_a * c;
        total += y.dot(&r);
    }
    Ok(ops.dt * total)
}

/// `s_N = l(u_N^K) + Δt Σ_k r^k(ψ_Ñ^{k-1})`.
pub fn corrected_output(
    ops: &ReducedOperators,
    xi: &ParameterSample,
    primal: &ReducedTrajectory,
    dual: &ReducedTrajectory,
) -> Result<f64> {
    Ok(reduced_output(ops, primal) + output_correction(ops, xi, primal, dual)?)
}
