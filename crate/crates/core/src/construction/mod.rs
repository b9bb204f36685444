//! Offline construction of reduced spaces: POD-greedy (weighted or not), the
//! reference POD and Monte Carlo error statistics.

mod greedy;
mod pod;
mod stats;

use rayon::prelude::*;

pub use greedy::{
    argmax, estimator_sweep, pod_greedy, Density, GreedyConfig, GreedyMode, GreedyOutcome, GreedyStep, GreedyTrace,
    GrowthPolicy, Weighting, DEFAULT_MAX_BASIS,
};
pub use pod::{mean_square_projection_error, pod1, pod_projection_error, pod_reference, PodResult, MAX_POD_SNAPSHOTS};
pub use stats::{
    mc_abs_output_error, mc_abs_output_error_uncorrected, mc_rms_column, mc_rms_solution_error, SolutionProducer,
};

use crate::error::{Error, Result};
use crate::solvers::{AffineModel, Trajectory};
use crate::stochastics::ParameterSample;

/// Detailed trajectories and outputs for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub samples: Vec<ParameterSample>,
    pub primal: Vec<Trajectory>,
    /// Empty unless dual trajectories were requested.
    pub dual: Vec<Trajectory>,
    pub outputs: Vec<f64>,
}

impl SnapshotSet {
    pub fn compute(model: &AffineModel, samples: Vec<ParameterSample>, with_dual: bool) -> Result<Self> {
        let solved: Vec<(Trajectory, Option<Trajectory>)> = samples
            .par_iter()
            .map(|xi| {
                if with_dual {
                    model.solve_both(xi).map(|(u, p)| (u, Some(p)))
                } else {
                    model.solve_primal(xi).map(|u| (u, None))
                }
            })
            .collect::<Result<_>>()?;
        let mut primal = Vec::with_capacity(samples.len());
        let mut dual = Vec::new();
        for (u, p) in solved {
            primal.push(u);
            dual.extend(p);
        }
        let outputs = primal.iter().map(|u| model.detailed_output(u)).collect();
        Ok(Self {
            samples,
            primal,
            dual,
            outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn has_dual(&self) -> bool {
        !self.dual.is_empty()
    }

    /// Checks that the set was produced by a model with this grid and size.
    pub fn check(&self, model: &AffineModel) -> Result<()> {
        let consistent = self.primal.len() == self.samples.len()
            && self.outputs.len() == self.samples.len()
            && (self.dual.is_empty() || self.dual.len() == self.samples.len())
            && self
                .primal
                .iter()
                .chain(&self.dual)
                .all(|t| t.steps() == model.steps && t.states.nrows() == model.dim());
        if !consistent || self.is_empty() {
            return Err(Error::CacheMismatch(
                "snapshot set does not match the model or is empty".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
