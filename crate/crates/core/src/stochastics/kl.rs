use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{fix_sign, sym_eig};
use crate::mesh::{BoundaryTag, TriMesh};

/// Mean inflow value of the boundary field.
pub const KL_MEAN: f64 = 10.0;
pub const KL_CORRELATION_LENGTH: f64 = 2.0;

/// Covariance `exp(-|x - y| / a)` between points at arc-length distance `d`.
pub fn exponential_kernel(d: f64, a: f64) -> f64 {
    (-d.abs() / a).exp()
}

const GAUSS2: [f64; 2] = [-0.577_350_269_189_625_8, 0.577_350_269_189_625_8];

/// Truncated KL expansion `f(x) = μ̄ + Σ √λ_l φ_l(x) ξ_l` on the OUT boundary.
#[derive(Debug, Clone)]
pub struct KlField {
    pub mean_value: f64,
    pub correlation_length: f64,
    /// Descending, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Mesh indices of the OUT nodes, in arc-length order.
    pub boundary_nodes: Vec<usize>,
    /// Arc-length coordinate of each boundary node.
    pub arc_length: Vec<f64>,
    /// Eigenfunction values at `boundary_nodes`, one vector per mode.
    pub traces: Vec<DVector<f64>>,
    num_mesh_nodes: usize,
}

impl KlField {
    pub fn num_terms(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Mode `l` as a nodal vector on the whole mesh (zero off the OUT boundary).
    pub fn mode_on_mesh(&self, l: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.num_mesh_nodes];
        for (&i, &v) in self.boundary_nodes.iter().zip(self.traces[l].iter()) {
            w[i] = v;
        }
        w
    }

    /// Field realization at the boundary nodes.
    pub fn realize(&self, xi_out: &[f64]) -> DVector<f64> {
        let mut f = DVector::from_element(self.boundary_nodes.len(), self.mean_value);
        for ((lam, phi), x) in self.eigenvalues.iter().zip(&self.traces).zip(xi_out) {
            f.axpy(lam.sqrt() * x, phi, 1.0);
        }
        f
    }

    /// 1D P1 mass matrix of the boundary trace space.
    pub fn boundary_mass(&self) -> DMatrix<f64> {
        polyline_mass(&self.arc_length)
    }

    /// Eigenvalues on the first line, then one trace vector per line.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let line = |v: &mut dyn Iterator<Item = &f64>| v.map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(w, "{}", line(&mut self.eigenvalues.iter()))?;
        for t in &self.traces {
            writeln!(w, "{}", line(&mut t.iter()))?;
        }
        Ok(())
    }
}

fn polyline_mass(s: &[f64]) -> DMatrix<f64> {
    let n = s.len();
    let mut m = DMatrix::zeros(n, n);
    for e in 0..n - 1 {
        let len = s[e + 1] - s[e];
        m[(e, e)] += len / 3.0;
        m[(e + 1, e + 1)] += len / 3.0;
        m[(e, e + 1)] += len / 6.0;
        m[(e + 1, e)] += len / 6.0;
    }
    m
}

/// Orders the OUT nodes along the boundary chain and returns
/// `(node indices, arc-length coordinates)`.
fn out_chain(mesh: &TriMesh) -> Result<(Vec<usize>, Vec<f64>)> {
    let edges: Vec<[usize; 2]> = mesh.edges_with_tag(BoundaryTag::Out).map(|e| e.nodes).collect();
    if edges.is_empty() {
        return Err(Error::InvalidInput("mesh has no OUT boundary".into()));
    }
    let mut neighbours: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for [a, b] in &edges {
        neighbours.entry(*a).or_default().push(*b);
        neighbours.entry(*b).or_default().push(*a);
    }
    let start = neighbours
        .iter()
        .filter(|(_, nb)| nb.len() == 1)
        .map(|(&i, _)| i)
        .min_by(|&i, &j| mesh.nodes[i][1].total_cmp(&mesh.nodes[j][1]))
        .ok_or_else(|| Error::InvalidInput("OUT boundary is not an open chain".into()))?;
    let mut order = vec![start];
    let mut s = vec![0.0];
    let mut prev = usize::MAX;
    let mut cur = start;
    while let Some(&next) = neighbours[&cur].iter().find(|&&n| n != prev) {
        let (p, q) = (mesh.nodes[cur], mesh.nodes[next]);
        s.push(s.last().unwrap() + ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
        order.push(next);
        prev = cur;
        cur = next;
    }
    if order.len() != neighbours.len() {
        return Err(Error::InvalidInput("OUT boundary is not a single chain".into()));
    }
    Ok((order, s))
}

/// Galerkin eigenpairs of the covariance operator with kernel
/// `exp(-|x - y| / a)` on the OUT boundary of `mesh`.
pub fn kl_eigenpairs(mesh: &TriMesh, a: f64, q: usize) -> Result<KlField> {
    let (nodes, s) = out_chain(mesh)?;
    let (eigenvalues, traces) = kl_on_polyline(&s, a, q)?;
    Ok(KlField {
        mean_value: KL_MEAN,
        correlation_length: a,
        eigenvalues,
        boundary_nodes: nodes,
        arc_length: s,
        traces,
        num_mesh_nodes: mesh.num_nodes(),
    })
}

/// Solves `C v = λ M v` on the P1 space of a polyline with increasing
/// arc-length coordinates `s`. Returns the `q` largest eigenvalues and
/// `M`-orthonormal eigenvectors with their largest-magnitude entry positive.
pub fn kl_on_polyline(s: &[f64], a: f64, q: usize) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!("correlation length {a} must be positive")));
    }
    let n = s.len();
    if n < 2 {
        return Err(Error::InvalidInput("KL needs at least one boundary edge".into()));
    }
    if q > n {
        return Err(Error::InvalidInput(format!(
            "requested {q} KL modes but only {n} boundary nodes are available"
        )));
    }
    // Gauss points per edge: (edge, position, weight, hat value at left node).
    let points: Vec<(usize, f64, f64, f64)> = (0..n - 1)
        .flat_map(|e| {
            let (l, r) = (s[e], s[e + 1]);
            let len = r - l;
            GAUSS2.map(move |g| {
                let t = 0.5 * (g + 1.0);
                (e, l + t * len, 0.5 * len, 1.0 - t)
            })
        })
        .collect();
    let mut c = DMatrix::zeros(n, n);
    for &(e, x, wx, hx) in &points {
        for &(f, y, wy, hy) in &points {
            let k = wx * wy * exponential_kernel(x - y, a);
            let (hx, hy) = ([hx, 1.0 - hx], [hy, 1.0 - hy]);
            for i in 0..2 {
                for j in 0..2 {
                    c[(e + i, f + j)] += k * hx[i] * hy[j];
                }
            }
        }
    }
    let m = polyline_mass(s);
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let mut reduced = &l_inv * &c * l_inv.transpose();
    reduced = (&reduced + reduced.transpose()) * 0.5;
    let spec = sym_eig(&reduced)?;
    let mut values = Vec::with_capacity(q);
    let mut vectors = Vec::with_capacity(q);
    for k in 0..q {
        let mut v = l_inv.transpose() * spec.vectors.column(k);
        fix_sign(&mut v);
        values.push(spec.values[k].max(0.0));
        vectors.push(v);
    }
    Ok((values, vectors))
}
