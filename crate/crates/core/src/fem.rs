//! P1 finite-element assembly on [`TriMesh`]. Every matrix is assembled on the
//! mesh's node-adjacency pattern so that affine combinations reduce to
//! value-array arithmetic.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::SymSparseMatrix;
use crate::mesh::{BoundaryTag, TriMesh};

pub fn assemble_mass(mesh: &TriMesh) -> SymSparseMatrix {
    let mut m = SymSparseMatrix::zeros(mesh.pattern().clone());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let c = mesh.signed_area(t) / 12.0;
        for a in 0..3 {
            for b in 0..3 {
                m.add_to(tri[a], tri[b], if a == b { 2.0 * c } else { c });
            }
        }
    }
    m
}

pub fn assemble_stiffness(mesh: &TriMesh) -> SymSparseMatrix {
    let mut k = SymSparseMatrix::zeros(mesh.pattern().clone());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let area = mesh.signed_area(t);
        let p = tri.map(|i| mesh.nodes[i]);
        // ∇φ_a = (y_b - y_c, x_c - x_b) / (2|T|) with (a, b, c) cyclic.
        let grad: [[f64; 2]; 3] = std::array::from_fn(|a| {
            let b = (a + 1) % 3;
            let c = (a + 2) % 3;
            [(p[b][1] - p[c][1]) / (2.0 * area), (p[c][0] - p[b][0]) / (2.0 * area)]
        });
        for a in 0..3 {
            for b in 0..3 {
                let g = grad[a][0] * grad[b][0] + grad[a][1] * grad[b][1];
                k.add_to(tri[a], tri[b], area * g);
            }
        }
    }
    k
}

fn check_weight(mesh: &TriMesh, tag: BoundaryTag, weight: &[f64]) -> Result<()> {
    if tag == BoundaryTag::Insulated {
        return Err(Error::InvalidInput(
            "boundary terms are only defined on OUT and IN segments".into(),
        ));
    }
    if weight.len() != mesh.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_nodes(),
            found: weight.len(),
        });
    }
    if let Some(i) = mesh.tagged_nodes(tag).into_iter().find(|&i| !weight[i].is_finite()) {
        return Err(Error::InvalidInput(format!(
            "boundary weight missing on {tag} node {i}"
        )));
    }
    Ok(())
}

/// `∫_Γ w φ_i φ_j` over the edges of `tag`, with `w` the P1 interpolant of the
/// nodal `weight` (indexed by mesh node; entries off the segment are ignored).
pub fn assemble_boundary_mass(mesh: &TriMesh, tag: BoundaryTag, weight: &[f64]) -> Result<SymSparseMatrix> {
    check_weight(mesh, tag, weight)?;
    let mut m = SymSparseMatrix::zeros(mesh.pattern().clone());
    for e in mesh.edges_with_tag(tag) {
        let len = mesh.edge_length(e);
        let [a, b] = e.nodes;
        let (wa, wb) = (weight[a], weight[b]);
        // Exact for a linear weight times two linear hat functions.
        m.add_to(a, a, len * (3.0 * wa + wb) / 12.0);
        m.add_to(b, b, len * (wa + 3.0 * wb) / 12.0);
        let off = len * (wa + wb) / 12.0;
        m.add_to(a, b, off);
        m.add_to(b, a, off);
    }
    Ok(m)
}

/// `∫_Γ w φ_i` over the edges of `tag`.
pub fn assemble_boundary_load(mesh: &TriMesh, tag: BoundaryTag, weight: &[f64]) -> Result<DVector<f64>> {
    check_weight(mesh, tag, weight)?;
    let mut f = DVector::zeros(mesh.num_nodes());
    for e in mesh.edges_with_tag(tag) {
        let len = mesh.edge_length(e);
        let [a, b] = e.nodes;
        f[a] += len * (2.0 * weight[a] + weight[b]) / 6.0;
        f[b] += len * (weight[a] + 2.0 * weight[b]) / 6.0;
    }
    Ok(f)
}

/// Coefficients `ℓ` with `ℓᵀv = |Ω|⁻¹ ∫_Ω v_h`.
pub fn assemble_output_vector(mesh: &TriMesh) -> DVector<f64> {
    assemble_mass(mesh).row_sums() / mesh.area()
}
