//! Parameter-separable detailed model and the implicit-Euler primal/dual sweeps.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_boundary_load, assemble_boundary_mass, assemble_mass, assemble_output_vector, assemble_stiffness,
};
use crate::linalg::{sym_eig, SparseCholesky, SymSparseMatrix};
use crate::mesh::{BoundaryTag, TriMesh};
use crate::stochastics::{DensityModel, KlField, ParameterSample};

/// Uniform coercivity lower bound with respect to the reference energy norm.
pub const COERCIVITY_LOWER_BOUND: f64 = 1.0;

/// Maps `ξ` to the affine coefficients. With `Q` KL terms:
/// `θ^a = (1, 1, √λ_1 ξ_1, …, √λ_Q ξ_Q, ξ_in)` and
/// `θ^b = (1, √λ_1 ξ_1, …, √λ_Q ξ_Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMap {
    pub sqrt_lambda: Vec<f64>,
}

impl ThetaMap {
    pub fn num_terms(&self) -> usize {
        self.sqrt_lambda.len()
    }

    pub fn num_a(&self) -> usize {
        self.num_terms() + 3
    }

    pub fn num_b(&self) -> usize {
        self.num_terms() + 1
    }

    fn check(&self, xi: &ParameterSample) -> Result<()> {
        if xi.xi_out.len() != self.num_terms() {
            return Err(Error::DimensionMismatch {
                expected: self.num_terms(),
                found: xi.xi_out.len(),
            });
        }
        Ok(())
    }

    pub fn theta_a(&self, xi: &ParameterSample) -> Result<Vec<f64>> {
        self.check(xi)?;
        let mut t = Vec::with_capacity(self.num_a());
        t.extend([1.0, 1.0]);
        t.extend(self.sqrt_lambda.iter().zip(&xi.xi_out).map(|(s, x)| s * x));
        t.push(xi.xi_in);
        Ok(t)
    }

    pub fn theta_b(&self, xi: &ParameterSample) -> Result<Vec<f64>> {
        self.check(xi)?;
        let mut t = Vec::with_capacity(self.num_b());
        t.push(1.0);
        t.extend(self.sqrt_lambda.iter().zip(&xi.xi_out).map(|(s, x)| s * x));
        Ok(t)
    }
}

#[derive(Debug, Clone)]
pub struct AffineModel {
    /// Stiffness, mean OUT mass, one OUT mass per KL mode, IN mass.
    pub a_components: Vec<SymSparseMatrix>,
    /// Mean OUT load, one OUT load per KL mode.
    pub b_components: Vec<DVector<f64>>,
    pub mass: SymSparseMatrix,
    pub output: DVector<f64>,
    /// Reference inner product `a(·,·; ξ_ref)`.
    pub xref: SymSparseMatrix,
    pub theta: ThetaMap,
    pub dt: f64,
    pub steps: usize,
    pub alpha_bar: f64,
    /// Distribution of `ξ`, used for weighted estimators.
    pub density: DensityModel,
    pub mass_factor: SparseCholesky,
    pub xref_factor: SparseCholesky,
}

/// Builds the benchmark operators for time step `dt` and `steps` steps.
pub fn build_affine_model(mesh: &TriMesh, kl: &KlField, dt: f64, steps: usize) -> Result<AffineModel> {
    if !(dt > 0.0) || steps == 0 {
        return Err(Error::InvalidInput(format!(
            "need dt > 0 and K ≥ 1 (dt = {dt}, K = {steps})"
        )));
    }
    let n = mesh.num_nodes();
    if kl.boundary_nodes.iter().any(|&i| i >= n) || kl.mode_on_mesh(0).len() != n {
        return Err(Error::InvalidInput("KL field was built on a different mesh".into()));
    }
    let out_nodes = mesh.tagged_nodes(BoundaryTag::Out);
    let mut kl_nodes = kl.boundary_nodes.clone();
    kl_nodes.sort_unstable();
    if kl_nodes != out_nodes {
        return Err(Error::InvalidInput("KL field was built on a different mesh".into()));
    }

    let mean = vec![kl.mean_value; n];
    let ones = vec![1.0; n];
    let stiffness = assemble_stiffness(mesh);
    let out_mean = assemble_boundary_mass(mesh, BoundaryTag::Out, &mean)?;
    let inner = assemble_boundary_mass(mesh, BoundaryTag::In, &ones)?;

    let mut a_components = vec![stiffness.clone(), out_mean];
    let mut b_components = vec![assemble_boundary_load(mesh, BoundaryTag::Out, &mean)?];
    for l in 0..kl.num_terms() {
        let mode = kl.mode_on_mesh(l);
        a_components.push(assemble_boundary_mass(mesh, BoundaryTag::Out, &mode)?);
        b_components.push(assemble_boundary_load(mesh, BoundaryTag::Out, &mode)?);
    }
    a_components.push(inner.clone());

    // (w, v)_ref = ∫∇w·∇v + 10 ∫_out w v + 0.1 ∫_in w v
    let xi_ref = ParameterSample::reference(kl.num_terms());
    let out_unit = assemble_boundary_mass(mesh, BoundaryTag::Out, &ones)?;
    let xref = SymSparseMatrix::combine(&[(1.0, &stiffness), (kl.mean_value, &out_unit), (xi_ref.xi_in, &inner)])?;

    let mass = assemble_mass(mesh);
    let mass_factor = SparseCholesky::factor(&mass)?;
    let xref_factor = SparseCholesky::factor(&xref)?;
    Ok(AffineModel {
        a_components,
        b_components,
        output: assemble_output_vector(mesh),
        mass,
        xref,
        theta: ThetaMap {
            sqrt_lambda: kl.eigenvalues.iter().map(|l| l.sqrt()).collect(),
        },
        dt,
        steps,
        alpha_bar: COERCIVITY_LOWER_BOUND,
        density: DensityModel::default(),
        mass_factor,
        xref_factor,
    })
}

impl AffineModel {
    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn reference_parameter(&self) -> ParameterSample {
        ParameterSample::reference(self.theta.num_terms())
    }

    pub fn operator(&self, xi: &ParameterSample) -> Result<SymSparseMatrix> {
        let theta = self.theta.theta_a(xi)?;
        let terms: Vec<_> = theta.iter().copied().zip(&self.a_components).collect();
        SymSparseMatrix::combine(&terms)
    }

    pub fn load(&self, xi: &ParameterSample) -> Result<DVector<f64>> {
        let theta = self.theta.theta_b(xi)?;
        let mut b = DVector::zeros(self.dim());
        for (t, bq) in theta.iter().zip(&self.b_components) {
            b.axpy(*t, bq, 1.0);
        }
        Ok(b)
    }

    /// Implicit-Euler system `(M + Δt A(ξ), Δt b(ξ))`.
    pub fn assemble_system(&self, xi: &ParameterSample) -> Result<(SymSparseMatrix, DVector<f64>)> {
        let a = self.operator(xi)?;
        let system = SymSparseMatrix::combine(&[(1.0, &self.mass), (self.dt, &a)])?;
        Ok((system, self.dt * self.load(xi)?))
    }

    /// Dual final state `ψ^K = M⁻¹ℓ`, independent of `ξ`.
    pub fn dual_final_state(&self) -> DVector<f64> {
        self.mass_factor.solve(&self.output)
    }

    pub fn solve_primal(&self, xi: &ParameterSample) -> Result<Trajectory> {
        let (system, rhs) = self.assemble_system(xi)?;
        let factor = SparseCholesky::factor(&system)?;
        Ok(self.primal_sweep(&factor, &rhs))
    }

    pub fn solve_dual(&self, xi: &ParameterSample) -> Result<Trajectory> {
        let (system, _) = self.assemble_system(xi)?;
        let factor = SparseCholesky::factor(&system)?;
        Ok(self.dual_sweep(&factor))
    }

    /// Primal and dual trajectories from one factorization.
    pub fn solve_both(&self, xi: &ParameterSample) -> Result<(Trajectory, Trajectory)> {
        let (system, rhs) = self.assemble_system(xi)?;
        let factor = SparseCholesky::factor(&system)?;
        Ok((self.primal_sweep(&factor, &rhs), self.dual_sweep(&factor)))
    }

    fn primal_sweep(&self, factor: &SparseCholesky, rhs: &DVector<f64>) -> Trajectory {
        let n = self.dim();
        let mut states = DMatrix::zeros(n, self.steps + 1);
        let mut prev = DVector::zeros(n);
        for k in 1..=self.steps {
            let next = factor.solve(&(self.mass.mul_vec(&prev) + rhs));
            states.set_column(k, &next);
            prev = next;
        }
        Trajectory {
            states,
            direction: Direction::Forward,
        }
    }

    fn dual_sweep(&self, factor: &SparseCholesky) -> Trajectory {
        let n = self.dim();
        let mut states = DMatrix::zeros(n, self.steps + 1);
        let mut next = self.dual_final_state();
        states.set_column(self.steps, &next);
        for k in (0..self.steps).rev() {
            let cur = factor.solve(&self.mass.mul_vec(&next));
            states.set_column(k, &cur);
            next = cur;
        }
        Trajectory {
            states,
            direction: Direction::Backward,
        }
    }

    /// `s_h = ℓᵀ u^K`.
    pub fn detailed_output(&self, primal: &Trajectory) -> f64 {
        self.output.dot(&primal.final_state())
    }

    /// `√a(v, v; ξ)`.
    pub fn energy_norm(&self, v: &DVector<f64>, xi: &ParameterSample) -> Result<f64> {
        checked_sqrt(self.operator(xi)?.quad_form(v))
    }

    /// `√a(v, v; ξ_ref)`.
    pub fn reference_norm(&self, v: &DVector<f64>) -> Result<f64> {
        checked_sqrt(self.xref.quad_form(v))
    }

    /// `(‖v^K‖² + Δt Σ_{k=1..K} a(v^k, v^k; ξ))^½` for forward trajectories,
    /// `(‖v^0‖² + Δt Σ_{k=0..K-1} a(v^k, v^k; ξ))^½` for backward ones.
    pub fn space_time_norm(&self, v: &Trajectory, xi: &ParameterSample) -> Result<f64> {
        let a = self.operator(xi)?;
        let k_max = self.steps;
        let (end, range) = match v.direction {
            Direction::Forward => (k_max, 1..=k_max),
            Direction::Backward => (0, 0..=k_max - 1),
        };
        let end_state = v.state(end);
        let mut total = self.mass.quad_form(&end_state);
        for k in range {
            total += self.dt * a.quad_form(&v.state(k));
        }
        checked_sqrt(total)
    }

    /// Smallest generalized Rayleigh quotient `a(v,v;ξ)/a(v,v;ξ_ref)` over the
    /// samples, by dense eigen-decomposition (small meshes only).
    pub fn coercivity_check(&self, samples: &[ParameterSample]) -> Result<f64> {
        let x = self.xref.to_dense();
        let l = x.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
        let l_inv = l.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let mut min = f64::INFINITY;
        for xi in samples {
            let a = self.operator(xi)?.to_dense();
            let mut reduced = &l_inv * a * l_inv.transpose();
            reduced = (&reduced + reduced.transpose()) * 0.5;
            let spec = sym_eig(&reduced)?;
            min = min.min(spec.values[spec.values.len() - 1]);
        }
        Ok(min)
    }
}

fn checked_sqrt(v: f64) -> Result<f64> {
    if v < -1e-12 {
        Err(Error::NegativeQuadraticForm(v))
    } else {
        Ok(v.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Primal, marched from `k = 0`.
    Forward,
    /// Dual, marched from `k = K`.
    Backward,
}

/// States `k = 0..=K` stored as matrix columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub direction: Direction,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.ncols() - 1
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.column(k).into_owned()
    }

    pub fn final_state(&self) -> DVector<f64> {
        self.state(self.steps())
    }

    /// Plain-text dump, one row per time index.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for k in 0..=self.steps() {
            let row: Vec<String> = self.states.column(k).iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_benchmark_mesh;
    use crate::stochastics::{kl_eigenpairs, seeded_rng, DensityModel};

    const H: f64 = 1.0 / 3.0;

    fn model(h: f64, dt: f64, steps: usize) -> AffineModel {
        let mesh = build_benchmark_mesh(h).unwrap();
        let q = mesh.tagged_nodes(BoundaryTag::Out).len().min(10);
        let kl = kl_eigenpairs(&mesh, 2.0, q).unwrap();
        build_affine_model(&mesh, &kl, dt, steps).unwrap()
    }

    fn samples(m: &AffineModel, n: usize, seed: u64) -> Vec<ParameterSample> {
        let mut rng = seeded_rng(seed, 0);
        let q = m.theta.num_terms();
        (0..n).map(|_| DensityModel::default().sample(&mut rng, q)).collect()
    }

    #[test]
    fn component_counts_and_reference_theta() {
        let m = model(H, 0.2, 10);
        assert_eq!(m.a_components.len(), 13);
        assert_eq!(m.b_components.len(), 11);
        let theta = m.theta.theta_a(&m.reference_parameter()).unwrap();
        let mut want = vec![1.0, 1.0];
        want.extend([0.0; 10]);
        want.push(0.1);
        assert_eq!(theta, want);
    }

    #[test]
    fn reference_operator_is_xref() {
        let m = model(H, 0.2, 10);
        let a = m.operator(&m.reference_parameter()).unwrap();
        let diff = a
            .values()
            .iter()
            .zip(m.xref.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
        let (sys, _) = m.assemble_system(&m.reference_parameter()).unwrap();
        let want = SymSparseMatrix::combine(&[(1.0, &m.mass), (0.2, &m.xref)]).unwrap();
        assert!(sys
            .values()
            .iter()
            .zip(want.values())
            .all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn mean_load_when_fluctuations_vanish() {
        let m = model(H, 0.2, 10);
        let xi = ParameterSample::new(vec![0.0; 10], 3.0);
        assert!((m.load(&xi).unwrap() - &m.b_components[0]).amax() == 0.0);
        assert!((m.b_components[0].sum() - 40.0).abs() < 1e-12);
    }

    #[test]
    fn operator_matches_direct_assembly() {
        let mesh = build_benchmark_mesh(H).unwrap();
        let kl = kl_eigenpairs(&mesh, 2.0, 10).unwrap();
        let m = build_affine_model(&mesh, &kl, 0.2, 10).unwrap();
        let xi = samples(&m, 1, 3).remove(0);
        let field = kl.realize(&xi.xi_out);
        let mut weight = vec![0.0; mesh.num_nodes()];
        for (&i, &f) in kl.boundary_nodes.iter().zip(field.iter()) {
            weight[i] = f;
        }
        let direct = SymSparseMatrix::combine(&[
            (1.0, &assemble_stiffness(&mesh)),
            (1.0, &assemble_boundary_mass(&mesh, BoundaryTag::Out, &weight).unwrap()),
            (
                xi.xi_in,
                &assemble_boundary_mass(&mesh, BoundaryTag::In, &vec![1.0; mesh.num_nodes()]).unwrap(),
            ),
        ])
        .unwrap();
        let a = m.operator(&xi).unwrap();
        for (x, y) in a.values().iter().zip(direct.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn system_is_affine_in_xi() {
        let m = model(H, 0.2, 10);
        let s = samples(&m, 2, 4);
        let mid = ParameterSample::new(
            s[0].xi_out
                .iter()
                .zip(&s[1].xi_out)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
            0.5 * (s[0].xi_in + s[1].xi_in),
        );
        let (a, _) = m.assemble_system(&s[0]).unwrap();
        let (b, _) = m.assemble_system(&s[1]).unwrap();
        let (c, _) = m.assemble_system(&mid).unwrap();
        let d = SymSparseMatrix::combine(&[(1.0, &a), (1.0, &b), (-2.0, &c)]).unwrap();
        assert!(d.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn systems_are_spd_over_gamma() {
        let m = model(H, 0.2, 10);
        for xi in samples(&m, 100, 5) {
            let (sys, _) = m.assemble_system(&xi).unwrap();
            assert_eq!(sys.max_asymmetry(), 0.0);
            SparseCholesky::factor(&sys).unwrap();
        }
    }

    #[test]
    fn pure_inflow_approaches_unit_steady_state() {
        // Diffusion across the 10-unit channel is slow: at t = 20 the far end
        // is still cold, so the horizon here is t = 400.
        let m = model(H, 2.0, 200);
        let xi = ParameterSample::new(vec![0.0; 10], 0.0);
        let u = m.solve_primal(&xi).unwrap();
        assert_eq!(u.state(0).amax(), 0.0);
        let uk = u.final_state();
        assert!(uk.iter().all(|&x| (x - 1.0).abs() < 0.2), "{}", uk.min());
        assert!(uk.max() <= 1.0 + 1e-12);
        let early = u.state(10);
        assert!(early.max() > 0.9 && early.min() < 0.8);
        // Monotone increase in time at every node.
        for k in 1..=m.steps {
            assert!((u.state(k) - u.state(k - 1)).min() > -1e-12);
        }
    }

    #[test]
    fn zero_load_gives_zero_trajectory() {
        let mut m = model(H, 0.2, 10);
        for b in &mut m.b_components {
            b.fill(0.0);
        }
        let u = m.solve_primal(&samples(&m, 1, 6)[0]).unwrap();
        assert_eq!(u.states.amax(), 0.0);
    }

    #[test]
    fn primal_is_reproducible() {
        let m = model(H, 0.2, 10);
        let xi = samples(&m, 1, 7).remove(0);
        assert_eq!(m.solve_primal(&xi).unwrap(), m.solve_primal(&xi).unwrap());
    }

    #[test]
    fn primal_steps_satisfy_the_scheme() {
        let m = model(H, 0.2, 20);
        let xi = samples(&m, 1, 8).remove(0);
        let u = m.solve_primal(&xi).unwrap();
        let a = m.operator(&xi).unwrap();
        let b = m.load(&xi).unwrap();
        for k in 1..=m.steps {
            let lhs = m.mass.mul_vec(&(u.state(k) - u.state(k - 1))) + m.dt * a.mul_vec(&u.state(k));
            let rhs = m.dt * &b;
            assert!((&lhs - &rhs).norm() <= 1e-10 * rhs.norm());
        }
    }

    #[test]
    fn dual_final_state_is_constant_average() {
        let m = model(H, 0.2, 10);
        let psi = m.dual_final_state();
        assert!(psi.iter().all(|&v| (v - 1.0 / 28.0).abs() < 1e-12));
        let s = samples(&m, 2, 9);
        let d0 = m.solve_dual(&s[0]).unwrap();
        let d1 = m.solve_dual(&s[1]).unwrap();
        assert_eq!(d0.final_state(), d1.final_state());
    }

    #[test]
    fn dual_is_bounded_and_nonnegative() {
        let m = model(H, 0.2, 20);
        for xi in samples(&m, 5, 10) {
            let (u, psi) = m.solve_both(&xi).unwrap();
            assert_eq!(u, m.solve_primal(&xi).unwrap());
            assert!(psi.states.min() > -1e-8);
            assert!(psi.states.max() <= 1.0 / 28.0 + 1e-8);
        }
    }

    #[test]
    fn outputs() {
        let m = model(H, 0.2, 20);
        let zero = Trajectory {
            states: DMatrix::zeros(m.dim(), m.steps + 1),
            direction: Direction::Forward,
        };
        assert_eq!(m.detailed_output(&zero), 0.0);
        let mut one = zero.clone();
        one.states.column_mut(m.steps).fill(1.0);
        assert!((m.detailed_output(&one) - 1.0).abs() < 1e-12);
        for xi in samples(&m, 20, 11) {
            let s = m.detailed_output(&m.solve_primal(&xi).unwrap());
            assert!(s > 0.0 && s < 1.0, "{s}");
        }
    }

    #[test]
    fn norms() {
        let m = model(H, 0.2, 10);
        let xi = samples(&m, 1, 12).remove(0);
        let zero = DVector::zeros(m.dim());
        assert_eq!(m.energy_norm(&zero, &xi).unwrap(), 0.0);
        let v = DVector::from_fn(m.dim(), |i, _| (i as f64 * 0.3).sin());
        let r = m.reference_norm(&v).unwrap();
        assert!((m.energy_norm(&v, &m.reference_parameter()).unwrap() - r).abs() < 1e-12 * r);
        assert!((m.energy_norm(&(2.0 * &v), &xi).unwrap() - 2.0 * m.energy_norm(&v, &xi).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn space_time_norm_two_ways() {
        let m = model(H, 0.2, 10);
        let xi = samples(&m, 1, 13).remove(0);
        let u = m.solve_primal(&xi).unwrap();
        let a = m.operator(&xi).unwrap().to_dense();
        let mm = m.mass.to_dense();
        let uk = u.final_state();
        let mut want = (uk.transpose() * &mm * &uk)[(0, 0)];
        for k in 1..=m.steps {
            let v = u.state(k);
            want += m.dt * (v.transpose() * &a * &v)[(0, 0)];
        }
        let got = m.space_time_norm(&u, &xi).unwrap().powi(2);
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn coercivity_is_reported() {
        let m = model(1.0, 0.2, 10);
        let q = m.coercivity_check(&[m.reference_parameter()]).unwrap();
        assert!((q - 1.0).abs() < 1e-10);
    }

    #[test]
    fn trajectory_text_has_one_row_per_step() {
        let m = model(1.0, 0.2, 4);
        let u = m.solve_primal(&samples(&m, 1, 1)[0]).unwrap();
        let mut buf = Vec::new();
        u.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }
}
