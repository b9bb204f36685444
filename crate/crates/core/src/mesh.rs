//! Structured triangulation of the benchmark domain
//! `[0,10]×[0,4]` minus the open squares `(1,3)×(1,3)`, `(4,6)×(1,3)`, `(7,9)×(1,3)`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::SparsePattern;

pub const DOMAIN_WIDTH: f64 = 10.0;
pub const DOMAIN_HEIGHT: f64 = 4.0;
/// Lower-left corners of the unit-aligned 2×2 holes.
pub const HOLE_CORNERS: [(f64, f64); 3] = [(1.0, 1.0), (4.0, 1.0), (7.0, 1.0)];
pub const HOLE_SIZE: f64 = 2.0;

/// Boundary segment classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Left edge `x = 0`, carrying the random inflow.
    Out,
    /// Perimeters of the three holes.
    In,
    /// Top, bottom and right edges.
    Insulated,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryTag::Out => "OUT",
            BoundaryTag::In => "IN",
            BoundaryTag::Insulated => "INSULATED",
        })
    }
}

impl FromStr for BoundaryTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OUT" => Ok(BoundaryTag::Out),
            "IN" => Ok(BoundaryTag::In),
            "INSULATED" => Ok(BoundaryTag::Insulated),
            other => Err(Error::Format(format!("unknown boundary tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub mesh_size_h: f64,
    pattern: Arc<SparsePattern>,
}

impl TriMesh {
    /// Assembles a mesh from raw parts, validating orientation and indices.
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        mesh_size_h: f64,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} has an out-of-range node")));
            }
        }
        for e in &boundary_edges {
            if e.nodes.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh("boundary edge has an out-of-range node".into()));
            }
        }
        let pattern = Arc::new(SparsePattern::from_positions(
            n,
            triangles
                .iter()
                .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]),
        ));
        let mesh = Self {
            nodes,
            triangles,
            boundary_edges,
            mesh_size_h,
            pattern,
        };
        if let Some(t) = (0..mesh.triangles.len()).find(|&t| mesh.signed_area(t) <= 0.0) {
            return Err(Error::InvalidMesh(format!("triangle {t} has non-positive signed area")));
        }
        Ok(mesh)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node-adjacency pattern shared by every assembled FE matrix.
    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        let [p, q] = e.nodes.map(|i| self.nodes[i]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        self.edges_with_tag(tag).map(|e| self.edge_length(e)).sum()
    }

    /// Sorted, deduplicated node indices touched by edges of `tag`.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self.edges_with_tag(tag).flat_map(|e| e.nodes).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} nodes {} triangles {} boundary_edges",
            self.nodes.len(),
            self.triangles.len(),
            self.boundary_edges.len()
        )?;
        for p in &self.nodes {
            writeln!(w, "{:?} {:?}", p[0], p[1])?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {}", e.nodes[0], e.nodes[1], e.tag)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::Format(format!("unexpected end of mesh file reading {what}")))
        };
        let header = next("header")?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 6 || tok[1] != "nodes" || tok[3] != "triangles" || tok[5] != "boundary_edges" {
            return Err(Error::Format(format!("bad mesh header {header:?}")));
        }
        let count = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad count {s:?}")))
        };
        let (nn, nt, nb) = (count(tok[0])?, count(tok[2])?, count(tok[4])?);
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
        let mut nodes = Vec::with_capacity(nn);
        for _ in 0..nn {
            let l = next("node")?;
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != 2 {
                return Err(Error::Format(format!("bad node line {l:?}")));
            }
            nodes.push([parse_f(v[0])?, parse_f(v[1])?]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = next("triangle")?;
            let v = l.split_whitespace().map(count).collect::<Result<Vec<_>>>()?;
            if v.len() != 3 {
                return Err(Error::Format(format!("bad triangle line {l:?}")));
            }
            triangles.push([v[0], v[1], v[2]]);
        }
        let mut boundary_edges = Vec::with_capacity(nb);
        for _ in 0..nb {
            let l = next("boundary edge")?;
            let v: Vec<&str> = l.split_whitespace().collect();
            if v.len() != 3 {
                return Err(Error::Format(format!("bad boundary edge line {l:?}")));
            }
            boundary_edges.push(BoundaryEdge {
                nodes: [count(v[0])?, count(v[1])?],
                tag: v[2].parse()?,
            });
        }
        // Shortest boundary edge equals the grid spacing for the structured meshes.
        let h = boundary_edges
            .iter()
            .map(|e| {
                let [p, q] = e.nodes.map(|i: usize| nodes.get(i).copied().unwrap_or([0.0; 2]));
                ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        Self::from_parts(nodes, triangles, boundary_edges, h)
    }
}

fn inside_hole(x: f64, y: f64) -> bool {
    HOLE_CORNERS
        .iter()
        .any(|&(cx, cy)| x > cx && x < cx + HOLE_SIZE && y > cy && y < cy + HOLE_SIZE)
}

fn on_hole_perimeter(x: f64, y: f64) -> bool {
    const EPS: f64 = 1e-9;
    HOLE_CORNERS.iter().any(|&(cx, cy)| {
        let within_x = x >= cx - EPS && x <= cx + HOLE_SIZE + EPS;
        let within_y = y >= cy - EPS && y <= cy + HOLE_SIZE + EPS;
        let on_vertical = ((x - cx).abs() < EPS || (x - cx - HOLE_SIZE).abs() < EPS) && within_y;
        let on_horizontal = ((y - cy).abs() < EPS || (y - cy - HOLE_SIZE).abs() < EPS) && within_x;
        on_vertical || on_horizontal
    })
}

/// Number of grid cells per unit length for a requested spacing `h`.
pub fn subdivisions_for(h: f64) -> Result<usize> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidMesh(format!("mesh size h = {h} must lie in (0, 1]")));
    }
    let m = (1.0 / h).round();
    if ((1.0 / h) - m).abs() > 1e-9 * m {
        return Err(Error::InvalidMesh(format!(
            "1/h = {} is not an integer; the grid would not resolve the hole corners",
            1.0 / h
        )));
    }
    Ok(m as usize)
}

/// Structured right-triangle mesh with spacing `h` (`1/h` must be an integer).
///
/// Nodes are numbered column by column (x outer, y inner), which keeps the
/// matrix bandwidth at roughly `4/h` and the Cholesky fill small.
pub fn build_benchmark_mesh(h: f64) -> Result<TriMesh> {
    let m = subdivisions_for(h)?;
    let nx = 10 * m;
    let ny = 4 * m;
    let hh = 1.0 / m as f64;
    let coord = |i: usize, j: usize| [i as f64 * hh, j as f64 * hh];
    let cell_kept = |i: usize, j: usize| {
        let c = coord(i, j);
        !inside_hole(c[0] + 0.5 * hh, c[1] + 0.5 * hh)
    };

    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let grid = |i: usize, j: usize| i * (ny + 1) + j;
    for i in 0..nx {
        for j in 0..ny {
            if cell_kept(i, j) {
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    used[grid(i + di, j + dj)] = true;
                }
            }
        }
    }
    let mut index = vec![usize::MAX; used.len()];
    let mut nodes = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            if used[grid(i, j)] {
                index[grid(i, j)] = nodes.len();
                nodes.push(coord(i, j));
            }
        }
    }

    let mut triangles = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            if !cell_kept(i, j) {
                continue;
            }
            let p00 = index[grid(i, j)];
            let p10 = index[grid(i + 1, j)];
            let p01 = index[grid(i, j + 1)];
            let p11 = index[grid(i + 1, j + 1)];
            triangles.push([p00, p10, p11]);
            triangles.push([p00, p11, p01]);
        }
    }

    let mut edge_count: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
    for t in &triangles {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let key = (a.min(b), a.max(b));
            edge_count.entry(key).or_insert((0, [a, b])).0 += 1;
        }
    }
    let mut boundary: Vec<[usize; 2]> = edge_count
        .into_values()
        .filter(|(c, _)| *c == 1)
        .map(|(_, e)| e)
        .collect();
    boundary.sort_unstable();
    let boundary_edges = boundary
        .into_iter()
        .map(|[a, b]| {
            let (p, q) = (nodes[a], nodes[b]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let tag = if p[0] == 0.0 && q[0] == 0.0 {
                BoundaryTag::Out
            } else if on_hole_perimeter(mid[0], mid[1]) {
                BoundaryTag::In
            } else {
                BoundaryTag::Insulated
            };
            BoundaryEdge { nodes: [a, b], tag }
        })
        .collect();

    TriMesh::from_parts(nodes, triangles, boundary_edges, hh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn geometry_is_exact() {
        for h in [1.0, 0.5, 1.0 / 3.0, 0.25] {
            let mesh = build_benchmark_mesh(h).unwrap();
            assert!(rel(mesh.area(), 28.0) < 1e-10);
            assert!(rel(mesh.boundary_length(BoundaryTag::Out), 4.0) < 1e-10);
            assert!(rel(mesh.boundary_length(BoundaryTag::In), 24.0) < 1e-10);
            assert!(rel(mesh.boundary_length(BoundaryTag::Insulated), 24.0) < 1e-10);
            assert!((0..mesh.triangles.len()).all(|t| mesh.signed_area(t) > 0.0));
        }
    }

    #[test]
    fn unit_mesh_nodes_are_integer() {
        let mesh = build_benchmark_mesh(1.0).unwrap();
        assert!(mesh.nodes.iter().all(|p| p[0].fract() == 0.0 && p[1].fract() == 0.0));
        // 11×5 grid minus the centre node of each hole.
        assert_eq!(mesh.num_nodes(), 55 - 3);
    }

    #[test]
    fn fine_profile_node_count() {
        let mesh = build_benchmark_mesh(1.0 / 6.0).unwrap();
        assert!((1000..=1300).contains(&mesh.num_nodes()), "{}", mesh.num_nodes());
    }

    #[test]
    fn rejects_misaligned_h() {
        assert!(build_benchmark_mesh(0.3).is_err());
        assert!(build_benchmark_mesh(1.5).is_err());
        assert!(build_benchmark_mesh(0.0).is_err());
    }

    #[test]
    fn boundary_edges_have_one_tag_each() {
        let mesh = build_benchmark_mesh(0.5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for e in &mesh.boundary_edges {
            let key = (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1]));
            assert!(seen.insert(key), "edge {key:?} listed twice");
        }
        // 8 unit-length OUT edges at h = 0.5, 48 on the hole perimeters.
        assert_eq!(mesh.edges_with_tag(BoundaryTag::Out).count(), 8);
        assert_eq!(mesh.edges_with_tag(BoundaryTag::In).count(), 48);
    }

    #[test]
    fn text_round_trip() {
        let mesh = build_benchmark_mesh(0.5).unwrap();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let back = TriMesh::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.nodes, mesh.nodes);
        assert_eq!(back.triangles, mesh.triangles);
        assert_eq!(back.boundary_edges, mesh.boundary_edges);
        assert_eq!(back.mesh_size_h, mesh.mesh_size_h);
    }

    #[test]
    fn read_rejects_bad_header() {
        assert!(TriMesh::read_text("3 nodes 1 triangle".as_bytes()).is_err());
    }
}
