use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::construction::pod::pod1;
use crate::error::{Error, Result};
use crate::rom::{estimate, primal_estimate, ReducedBasis, ReducedModel, RomBuilder};
use crate::solvers::{AffineModel, Trajectory};
use crate::stochastics::{DensityModel, ParameterSample};

pub const DEFAULT_MAX_BASIS: usize = 30;

/// Trajectories whose projection error stays below this fraction of the
/// trajectory itself are treated as already represented.
const REPRESENTED_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyMode {
    /// Primal space only, driven by `Δ_N^u`.
    Primal,
    /// Primal and dual spaces, driven by `Δ^s`.
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    Pdf,
}

/// How the two spaces grow in output mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthPolicy {
    /// One primal and one dual vector per iteration.
    Both,
    /// The smaller space grows (primal on ties).
    Alternate,
}

/// Density multiplying the estimator under [`Weighting::Pdf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Model(DensityModel),
    Constant(f64),
}

impl Density {
    pub fn eval(&self, xi: &ParameterSample) -> f64 {
        match self {
            Density::Model(d) => d.joint_pdf(xi),
            Density::Constant(c) => *c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    pub mode: GreedyMode,
    pub weighting: Weighting,
    pub policy: GrowthPolicy,
    pub training: Vec<ParameterSample>,
    pub tolerance: Option<f64>,
    pub max_basis: Option<usize>,
    pub density: Density,
}

impl GreedyConfig {
    pub fn new(mode: GreedyMode, weighting: Weighting, training: Vec<ParameterSample>) -> Self {
        Self {
            mode,
            weighting,
            policy: GrowthPolicy::Both,
            training,
            tolerance: None,
            max_basis: Some(DEFAULT_MAX_BASIS),
            density: Density::Model(DensityModel::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if self.tolerance.is_none() && self.max_basis.is_none() {
            return Err(Error::InvalidInput("no stopping rule set".into()));
        }
        if self.max_basis == Some(0) {
            return Err(Error::InvalidInput("maximal basis size must be positive".into()));
        }
        if self.tolerance.is_some_and(|t| !(t >= 0.0)) {
            return Err(Error::InvalidInput("tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One row per evaluated basis size.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub iteration: usize,
    pub primal_dim: usize,
    pub dual_dim: usize,
    /// `ε_N = max over the training set`.
    pub estimator_max: f64,
    /// Training index attaining `ε_N`.
    pub selected_index: usize,
    pub selected: ParameterSample,
    /// Candidates skipped because their trajectories were already represented.
    pub rejected: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    /// `iter,N,Ntilde,estimator_max,xi_in_selected,seconds`. Without
    /// `timings` the last column is written as `0` so that reruns are
    /// byte-identical.
    pub fn write_csv<W: Write>(&self, mut w: W, timings: bool) -> Result<()> {
        writeln!(w, "iter,N,Ntilde,estimator_max,xi_in_selected,seconds")?;
        for s in &self.steps {
            let secs = if timings { s.seconds } else { 0.0 };
            writeln!(
                w,
                "{},{},{},{:e},{:?},{}",
                s.iteration, s.primal_dim, s.dual_dim, s.estimator_max, s.selected.xi_in, secs
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub primal: ReducedBasis,
    pub dual: Option<ReducedBasis>,
    pub rom: ReducedModel,
    pub trace: GreedyTrace,
}

/// Lowest index among the maximal values.
pub fn argmax(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn criterion(rom: &ReducedModel, config: &GreedyConfig, xi: &ParameterSample) -> Result<f64> {
    let u = rom.solve_primal(xi)?;
    let value = match config.mode {
        GreedyMode::Primal => primal_estimate(&rom.riesz, &rom.ops, xi, &u)?,
        GreedyMode::Output => {
            let y = rom.solve_dual(xi)?;
            estimate(&rom.riesz, &rom.ops, xi, &u, Some(&y))?
                .output
                .ok_or(Error::MissingDual)?
        }
    };
    Ok(match config.weighting {
        Weighting::Uniform => value,
        Weighting::Pdf => value * config.density.eval(xi),
    })
}

/// Configured estimator at every training parameter, in training order.
pub fn estimator_sweep(rom: &ReducedModel, config: &GreedyConfig) -> Result<Vec<f64>> {
    let values: Vec<f64> = config
        .training
        .par_iter()
        .map(|xi| criterion(rom, config, xi))
        .collect::<Result<_>>()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "estimator is not finite at training index {i}"
        )));
    }
    Ok(values)
}

/// Projection errors `v^k − P v^k`, or `None` if the trajectory is already
/// represented by `basis`.
fn projection_errors(model: &AffineModel, basis: &ReducedBasis, traj: &Trajectory) -> Option<DMatrix<f64>> {
    let s = &traj.states;
    let e = s - basis.vectors() * basis.vectors().tr_mul(&model.xref.mul_mat(s));
    let col_max = |m: &DMatrix<f64>| {
        let xm = model.xref.mul_mat(m);
        m.component_mul(&xm).row_sum().max()
    };
    let (err, size) = (col_max(&e), col_max(s));
    (err.max(0.0).sqrt() > REPRESENTED_TOLERANCE * size.max(0.0).sqrt()).then_some(e)
}

fn grows(config: &GreedyConfig, n: usize, nd: usize) -> (bool, bool) {
    match (config.mode, config.policy) {
        (GreedyMode::Primal, _) => (true, false),
        (GreedyMode::Output, GrowthPolicy::Both) => (true, true),
        (GreedyMode::Output, GrowthPolicy::Alternate) => {
            let cap = config.max_basis.unwrap_or(usize::MAX);
            if n >= cap {
                (false, true)
            } else if nd >= cap {
                (true, false)
            } else {
                (n <= nd, n > nd)
            }
        }
    }
}

fn finished(config: &GreedyConfig, eps: f64, n: usize, nd: usize, dim: usize) -> bool {
    if config.tolerance.is_some_and(|t| eps <= t) {
        return true;
    }
    let cap = config.max_basis.unwrap_or(usize::MAX).min(dim);
    match (config.mode, config.policy) {
        (GreedyMode::Output, GrowthPolicy::Alternate) => n >= cap && nd >= cap,
        _ => n >= cap,
    }
}

fn try_extend(builder: &mut RomBuilder, config: &GreedyConfig, xi: &ParameterSample) -> Result<()> {
    let model = builder.model();
    let n = builder.primal().len();
    let nd = builder.dual().map_or(0, |d| d.len());
    let (grow_primal, grow_dual) = grows(config, n, nd);
    let (u, psi) = if grow_dual {
        let (u, p) = model.solve_both(xi)?;
        (Some(u), Some(p))
    } else {
        (Some(model.solve_primal(xi)?), None)
    };
    let primal_mode = match (grow_primal, &u) {
        (true, Some(u)) => {
            let e = projection_errors(model, builder.primal(), u).ok_or(Error::ZeroTrajectory)?;
            Some(pod1(model, &e)?)
        }
        _ => None,
    };
    let dual_mode = match (&psi, builder.dual()) {
        (Some(p), Some(d)) => {
            let e = projection_errors(model, d, p).ok_or(Error::ZeroTrajectory)?;
            Some(pod1(model, &e)?)
        }
        _ => None,
    };
    builder.extend(primal_mode.as_ref(), dual_mode.as_ref())
}

/// POD-greedy. The primal space starts from `u_h^K` at the training parameter
/// with the largest `ξ_in`; in output mode the dual space starts from `ψ_h^K`.
/// Each iteration evaluates the configured estimator over the training set,
/// records the maximum and extends at the maximizer with the first POD mode
/// of the projection-error trajectory. A maximizer whose trajectory is already
/// represented is skipped in favour of the next largest value.
pub fn pod_greedy(model: &AffineModel, config: &GreedyConfig) -> Result<GreedyOutcome> {
    config.validate()?;
    let q = model.theta.num_terms();
    if let Some(bad) = config.training.iter().find(|x| x.xi_out.len() != q) {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: bad.xi_out.len(),
        });
    }
    let in_values: Vec<f64> = config.training.iter().map(|x| x.xi_in).collect();
    let (start, _) = argmax(&in_values).expect("training set is nonempty");
    let first = model.solve_primal(&config.training[start])?.final_state();
    let dual_start = (config.mode == GreedyMode::Output).then(|| model.dual_final_state());
    let mut builder = RomBuilder::new(model, &first, dual_start.as_ref())?;

    let mut trace = GreedyTrace::default();
    for iteration in 1.. {
        let clock = Instant::now();
        let rom = builder.reduced_model();
        let values = estimator_sweep(&rom, config)?;
        let (best, eps) = argmax(&values).expect("training set is nonempty");
        let (n, nd) = (rom.num_primal(), rom.num_dual());
        let done = finished(config, eps, n, nd, model.dim());
        let mut rejected = Vec::new();
        let mut exhausted = false;
        if !done {
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
            exhausted = true;
            for cand in order {
                match try_extend(&mut builder, config, &config.training[cand]) {
                    Ok(()) => {
                        exhausted = false;
                        break;
                    }
                    Err(Error::ZeroTrajectory | Error::BasisDegenerate(_)) => rejected.push(cand),
                    Err(e) => return Err(e),
                }
            }
        }
        trace.steps.push(GreedyStep {
            iteration,
            primal_dim: n,
            dual_dim: nd,
            estimator_max: eps,
            selected_index: best,
            selected: config.training[best].clone(),
            rejected,
            seconds: clock.elapsed().as_secs_f64(),
        });
        if done || exhausted {
            break;
        }
    }
    Ok(GreedyOutcome {
        primal: builder.primal().clone(),
        dual: builder.dual().cloned(),
        rom: builder.reduced_model(),
        trace,
    })
}
