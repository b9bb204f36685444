//! Reduced bases, projected operators, online solves and error estimators.
//!
//! The offline side ([`RomBuilder`]) holds FE-dimension data; the online
//! [`ReducedModel`] holds only small dense blocks and can be persisted.

mod basis;
mod container;
mod estimate;
mod operators;
mod riesz;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

pub use basis::{extend_basis, BasisRole, ReducedBasis, ORTHONORMALITY_TOLERANCE, REJECTION_TOLERANCE};
pub use estimate::{dual_residual_norms, estimate, primal_estimate, primal_residual_norms, EstimateBundle};
pub use operators::{
    corrected_output, output_correction, project_operators, reduced_output, solve_reduced_dual, solve_reduced_primal,
    DualBlocks, ReducedOperators, ReducedTrajectory,
};
pub use riesz::{compute_riesz_data, final_condition_estimate, RieszAccumulator, RieszBuilder, RieszData, RieszFactor};

use crate::error::{Error, Result};
use crate::solvers::AffineModel;
use crate::stochastics::ParameterSample;

/// Everything the online stage needs; no array scales with the FE dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub ops: ReducedOperators,
    pub riesz: RieszData,
}

/// Result of one online query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineReport {
    pub output: f64,
    pub corrected_output: Option<f64>,
    pub estimates: EstimateBundle,
    pub in_gamma: bool,
}

impl ReducedModel {
    pub fn num_primal(&self) -> usize {
        self.ops.num_primal()
    }

    pub fn num_dual(&self) -> usize {
        self.ops.num_dual()
    }

    pub fn has_dual(&self) -> bool {
        self.ops.dual.is_some()
    }

    pub fn solve_primal(&self, xi: &ParameterSample) -> Result<ReducedTrajectory> {
        solve_reduced_primal(&self.ops, xi)
    }

    pub fn solve_dual(&self, xi: &ParameterSample) -> Result<ReducedTrajectory> {
        solve_reduced_dual(&self.ops, xi)
    }

    /// `Δ_N^u(ξ)` only, skipping the dual solve.
    pub fn primal_estimate(&self, xi: &ParameterSample) -> Result<f64> {
        let u = self.solve_primal(xi)?;
        primal_estimate(&self.riesz, &self.ops, xi, &u)
    }

    pub fn report(&self, xi: &ParameterSample) -> Result<OnlineReport> {
        let u = self.solve_primal(xi)?;
        let output = reduced_output(&self.ops, &u);
        let (corrected, estimates) = if self.has_dual() {
            let y = self.solve_dual(xi)?;
            (
                Some(corrected_output(&self.ops, xi, &u, &y)?),
                estimate(&self.riesz, &self.ops, xi, &u, Some(&y))?,
            )
        } else {
            (None, estimate(&self.riesz, &self.ops, xi, &u, None)?)
        };
        Ok(OnlineReport {
            output,
            corrected_output: corrected,
            estimates,
            in_gamma: self.ops.density.contains(xi),
        })
    }

    /// Nested sub-model on the leading `n` primal and `nd` dual vectors.
    pub fn truncated(&self, n: usize, nd: usize) -> Result<Self> {
        let ops = self.ops.truncated(n, nd)?;
        let riesz = self
            .riesz
            .truncated(self.ops.theta.num_a(), self.ops.theta.num_b(), n, nd)?;
        Ok(Self { ops, riesz })
    }

    /// Largest dimension of any stored array.
    pub fn max_array_extent(&self) -> usize {
        let mut m = self.ops.max_extent().max(self.riesz.primal.matrix().nrows());
        m = m.max(self.riesz.primal.ncols());
        if let Some(d) = &self.riesz.dual {
            m = m.max(d.rank()).max(d.ncols());
        }
        m.max(self.riesz.final_condition.len())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        container::write(self, None, w)
    }

    /// Writes the model followed by the bases it was built from.
    pub fn write_with_bases<W: Write>(&self, primal: &ReducedBasis, dual: Option<&ReducedBasis>, w: W) -> Result<()> {
        container::write(self, Some((primal, dual)), w)
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        container::read(r)
    }

    /// Primal and (if stored) dual basis matrices of a container.
    pub fn read_bases<R: BufRead>(r: R) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        container::read_bases(r)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn save_with_bases(&self, path: &Path, primal: &ReducedBasis, dual: Option<&ReducedBasis>) -> Result<()> {
        self.write_with_bases(primal, dual, BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Offline state: the bases, residual accumulators and incrementally updated
/// reduced operators.
#[derive(Debug, Clone)]
pub struct RomBuilder<'a> {
    model: &'a AffineModel,
    primal: ReducedBasis,
    dual: Option<ReducedBasis>,
    riesz: RieszBuilder,
    ops: ReducedOperators,
}

impl<'a> RomBuilder<'a> {
    /// Starts from `span{first_primal}` and, if given, `span{first_dual}`.
    pub fn new(model: &'a AffineModel, first_primal: &DVector<f64>, first_dual: Option<&DVector<f64>>) -> Result<Self> {
        let primal = extend_basis(
            &ReducedBasis::empty(model.dim(), BasisRole::Primal),
            first_primal,
            &model.xref,
        )?;
        let dual = first_dual
            .map(|v| extend_basis(&ReducedBasis::empty(model.dim(), BasisRole::Dual), v, &model.xref))
            .transpose()?;
        let mut riesz = RieszBuilder::new(model, dual.is_some());
        riesz.push_primal(model, &primal.vector(0));
        if let Some(d) = &dual {
            riesz.push_dual(model, d)?;
        }
        let ops = project_operators(model, &primal, dual.as_ref())?;
        Ok(Self {
            model,
            primal,
            dual,
            riesz,
            ops,
        })
    }

    pub fn model(&self) -> &'a AffineModel {
        self.model
    }

    pub fn primal(&self) -> &ReducedBasis {
        &self.primal
    }

    pub fn dual(&self) -> Option<&ReducedBasis> {
        self.dual.as_ref()
    }

    pub fn riesz(&self) -> &RieszBuilder {
        &self.riesz
    }

    /// Extends the primal and/or dual space. Both candidates are
    /// orthogonalized first; if either is rejected nothing changes.
    pub fn extend(&mut self, primal: Option<&DVector<f64>>, dual: Option<&DVector<f64>>) -> Result<()> {
        let new_primal = primal
            .map(|v| extend_basis(&self.primal, v, &self.model.xref))
            .transpose()?;
        let new_dual = match dual {
            Some(v) => {
                let d = self.dual.as_ref().ok_or(Error::MissingDual)?;
                Some(extend_basis(d, v, &self.model.xref)?)
            }
            None => None,
        };
        if let Some(p) = new_primal {
            self.primal = p;
            self.riesz
                .push_primal(self.model, &self.primal.vector(self.primal.len() - 1));
            self.ops.append_primal(self.model, &self.primal, self.dual.as_ref())?;
        }
        if let Some(d) = new_dual {
            self.dual = Some(d);
            let d = self.dual.as_ref().expect("dual basis just set");
            self.riesz.push_dual(self.model, d)?;
            self.ops.append_dual(self.model, &self.primal, d)?;
        }
        Ok(())
    }

    pub fn reduced_model(&self) -> ReducedModel {
        ReducedModel {
            ops: self.ops.clone(),
            riesz: self.riesz.data(),
        }
    }
}
