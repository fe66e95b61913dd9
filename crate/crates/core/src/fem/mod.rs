//! Taylor–Hood (P2/P1) mixed spaces on a [`CompositeMesh`].

pub mod assemble;
pub mod convection;
pub mod interface;
pub mod norms;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::{BoundaryTag, CompositeMesh, Region};

pub use assemble::{assemble, AssembledForms, InterfaceForms, RegionForms};

#[derive(Debug, thiserror::Error)]
pub enum FemError {
    #[error("degenerate cell {cell} (measure {measure:e})")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("unsupported space options: {0}")]
    Unsupported(String),
    #[error("tensor dimension {tensor} does not match mesh dimension {mesh}")]
    Dimension { tensor: usize, mesh: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("malformed field file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PressureMode {
    #[default]
    Continuous,
    /// Continuous within each region, with interface values duplicated.
    Broken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Homogeneous (or prescribed) velocity on all of the outer boundary.
    #[default]
    Full,
    /// Velocity prescribed only on Dirichlet-tagged outer facets.
    DirichletTagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Gauge {
    /// Zero mean over the whole domain.
    Total,
    /// Zero mean over the cells touching the outer boundary.
    #[default]
    Collar,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SpaceOptions {
    pub pressure: PressureMode,
    pub constraint: Constraint,
    pub gauge: Gauge,
}

/// Local vertex pairs of a simplex with `n` vertices, in lexicographic order.
pub fn local_edges(n: usize) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            e.push((p, q));
        }
    }
    e
}

/// P2 shape values at barycentric point `l`: vertices first, then edges.
pub fn p2_values(l: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = l.iter().map(|&x| x * (2.0 * x - 1.0)).collect();
    for (p, q) in local_edges(l.len()) {
        v.push(4.0 * l[p] * l[q]);
    }
    v
}

/// P2 shape gradients given barycentric gradients `gl[k][d]`.
pub fn p2_gradients(l: &[f64], gl: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut g: Vec<[f64; 3]> = (0..l.len()).map(|k| {
        let s = 4.0 * l[k] - 1.0;
        [s * gl[k][0], s * gl[k][1], s * gl[k][2]]
    }).collect();
    for (p, q) in local_edges(l.len()) {
        g.push([
            4.0 * (l[q] * gl[p][0] + l[p] * gl[q][0]),
            4.0 * (l[q] * gl[p][1] + l[p] * gl[q][1]),
            4.0 * (l[q] * gl[p][2] + l[p] * gl[q][2]),
        ]);
    }
    g
}

/// Affine geometry of one simplex.
#[derive(Clone, Debug)]
pub struct CellGeometry {
    pub measure: f64,
    /// Gradients of the barycentric coordinates.
    pub grad_bary: Vec<[f64; 3]>,
    pub corners: Vec<[f64; 3]>,
}

impl CellGeometry {
    pub fn new(mesh: &CompositeMesh, c: usize) -> Result<Self, FemError> {
        let dim = mesh.dim;
        let corners: Vec<[f64; 3]> = mesh.cells[c].iter().map(|&v| mesh.vertices[v]).collect();
        let mut j = nalgebra::DMatrix::zeros(dim, dim);
        for k in 0..dim {
            for d in 0..dim {
                j[(d, k)] = corners[k + 1][d] - corners[0][d];
            }
        }
        let det = j.determinant();
        let fact: f64 = (1..=dim).map(|k| k as f64).product();
        let measure = det.abs() / fact;
        let scale = mesh.half_width.powi(dim as i32) * 1e-14;
        if !(measure > scale) {
            return Err(FemError::DegenerateCell { cell: c, measure });
        }
        let inv = j.try_inverse().ok_or(FemError::DegenerateCell { cell: c, measure })?;
        let mut grad_bary = vec![[0.0; 3]; dim + 1];
        for k in 0..dim {
            for d in 0..dim {
                grad_bary[k + 1][d] = inv[(k, d)];
                grad_bary[0][d] -= inv[(k, d)];
            }
        }
        Ok(CellGeometry { measure, grad_bary, corners })
    }

    pub fn point(&self, l: &[f64]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (k, c) in self.corners.iter().enumerate() {
            for d in 0..3 {
                x[d] += l[k] * c[d];
            }
        }
        x
    }
}

/// Mixed velocity/pressure space with DOF maps.
///
/// Velocity DOF of node `p`, component `c` is `p * dim + c`; nodes are mesh
/// vertices followed by edge midpoints.
#[derive(Clone, Debug)]
pub struct MixedSpace {
    pub mesh: Arc<CompositeMesh>,
    pub opts: SpaceOptions,
    pub dim: usize,
    pub edges: Vec<[usize; 2]>,
    pub edge_index: HashMap<(usize, usize), usize>,
    pub node_x: Vec<[f64; 3]>,
    pub cell_nodes: Vec<Vec<usize>>,
    pub cell_pdofs: Vec<Vec<usize>>,
    pub n_pres: usize,
    /// Region owning each pressure DOF (`None` when shared by both regions).
    pub pdof_region: Vec<Option<Region>>,
    /// Velocity DOFs fixed by the outer-boundary constraint.
    pub constrained: Vec<bool>,
    /// Nodes on the outer boundary, with the strongest tag among their facets
    /// (Dirichlet wins over Neumann).
    pub outer_node_tag: Vec<Option<BoundaryTag>>,
    /// P2 nodes on the interface, sorted; trace DOF = index * dim + c.
    pub interface_nodes: Vec<usize>,
    pub trace_of_node: Vec<Option<usize>>,
    pub interface_facet_nodes: Vec<Vec<usize>>,
    pub outer_facet_nodes: Vec<Vec<usize>>,
    /// Whether each node touches an inner / outer cell.
    pub node_in_region: Vec<[bool; 2]>,
}

fn region_slot(r: Region) -> usize {
    match r {
        Region::Inner => 0,
        Region::Outer => 1,
    }
}

impl MixedSpace {
    pub fn new(mesh: Arc<CompositeMesh>, opts: SpaceOptions) -> Result<Self, FemError> {
        let dim = mesh.dim;
        let nv = mesh.num_vertices();
        let mut edges = Vec::new();
        let mut edge_index = HashMap::new();
        let mut cell_nodes = Vec::with_capacity(mesh.num_cells());
        for cell in &mesh.cells {
            let mut nodes = cell.clone();
            for (p, q) in local_edges(cell.len()) {
                let key = (cell[p].min(cell[q]), cell[p].max(cell[q]));
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edges.len() - 1
                });
                nodes.push(nv + id);
            }
            cell_nodes.push(nodes);
        }
        let n_nodes = nv + edges.len();
        let mut node_x = mesh.vertices.clone();
        for e in &edges {
            let (a, b) = (mesh.vertices[e[0]], mesh.vertices[e[1]]);
            node_x.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]);
        }
        let mut node_in_region = vec![[false; 2]; n_nodes];
        for (c, nodes) in cell_nodes.iter().enumerate() {
            for &n in nodes {
                node_in_region[n][region_slot(mesh.regions[c])] = true;
            }
        }
        let facet_nodes = |verts: &[usize]| -> Vec<usize> {
            let mut nodes = verts.to_vec();
            for (p, q) in local_edges(verts.len()) {
                let key = (verts[p].min(verts[q]), verts[p].max(verts[q]));
                nodes.push(nv + edge_index[&key]);
            }
            nodes
        };
        let interface_facet_nodes: Vec<Vec<usize>> = mesh.interface_facets.iter().map(|f| facet_nodes(&f.vertices)).collect();
        let outer_facet_nodes: Vec<Vec<usize>> = mesh.outer_facets.iter().map(|f| facet_nodes(&f.vertices)).collect();
        let mut interface_nodes: Vec<usize> = interface_facet_nodes.iter().flatten().copied().collect();
        interface_nodes.sort_unstable();
        interface_nodes.dedup();
        let mut trace_of_node = vec![None; n_nodes];
        for (k, &n) in interface_nodes.iter().enumerate() {
            trace_of_node[n] = Some(k);
        }
        let mut outer_node_tag: Vec<Option<BoundaryTag>> = vec![None; n_nodes];
        for (f, nodes) in mesh.outer_facets.iter().zip(&outer_facet_nodes) {
            for &n in nodes {
                outer_node_tag[n] = match (outer_node_tag[n], f.tag) {
                    (Some(BoundaryTag::Dirichlet), _) | (_, BoundaryTag::Dirichlet) => Some(BoundaryTag::Dirichlet),
                    _ => Some(BoundaryTag::Neumann),
                };
            }
        }
        let mut constrained = vec![false; n_nodes * dim];
        for n in 0..n_nodes {
            let fixed = match (opts.constraint, outer_node_tag[n]) {
                (Constraint::Full, Some(_)) => true,
                (Constraint::DirichletTagged, Some(BoundaryTag::Dirichlet)) => true,
                _ => false,
            };
            if fixed {
                for c in 0..dim {
                    constrained[n * dim + c] = true;
                }
            }
        }
        if opts.constraint == Constraint::DirichletTagged && !constrained.iter().any(|&b| b) {
            return Err(FemError::Unsupported("no Dirichlet-tagged facets: velocity is not determined".into()));
        }
        // Pressure numbering: vertices in order; broken mode appends outer copies
        // of interface vertices.
        let iface_vertex: Vec<bool> = {
            let mut v = vec![false; nv];
            for f in &mesh.interface_facets {
                for &x in &f.vertices {
                    v[x] = true;
                }
            }
            v
        };
        let mut base = vec![usize::MAX; nv];
        let mut n_pres = 0;
        for cell in &mesh.cells {
            for &v in cell {
                if base[v] == usize::MAX {
                    base[v] = n_pres;
                    n_pres += 1;
                }
            }
        }
        let mut pdof_region: Vec<Option<Region>> = vec![None; n_pres];
        let mut outer_copy = vec![usize::MAX; nv];
        if opts.pressure == PressureMode::Broken {
            for cell in &mesh.cells {
                for &v in cell {
                    if iface_vertex[v] && outer_copy[v] == usize::MAX {
                        outer_copy[v] = n_pres;
                        n_pres += 1;
                        pdof_region.push(Some(Region::Outer));
                    }
                }
            }
        }
        let mut cell_pdofs = Vec::with_capacity(mesh.num_cells());
        let mut seen_region: Vec<[bool; 2]> = vec![[false; 2]; n_pres];
        for (c, cell) in mesh.cells.iter().enumerate() {
            let r = mesh.regions[c];
            let dofs: Vec<usize> = cell
                .iter()
                .map(|&v| if opts.pressure == PressureMode::Broken && iface_vertex[v] && r == Region::Outer { outer_copy[v] } else { base[v] })
                .collect();
            for &d in &dofs {
                seen_region[d][region_slot(r)] = true;
            }
            cell_pdofs.push(dofs);
        }
        for d in 0..n_pres {
            pdof_region[d] = match seen_region[d] {
                [true, false] => Some(Region::Inner),
                [false, true] => Some(Region::Outer),
                _ => None,
            };
        }
        Ok(MixedSpace {
            mesh,
            opts,
            dim,
            edges,
            edge_index,
            node_x,
            cell_nodes,
            cell_pdofs,
            n_pres,
            pdof_region,
            constrained,
            outer_node_tag,
            interface_nodes,
            trace_of_node,
            interface_facet_nodes,
            outer_facet_nodes,
            node_in_region,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_x.len()
    }

    pub fn n_vel(&self) -> usize {
        self.node_x.len() * self.dim
    }

    pub fn n_trace(&self) -> usize {
        self.interface_nodes.len() * self.dim
    }

    pub fn num_interface_pressure_nodes(&self) -> usize {
        let mut v: Vec<usize> = self.mesh.interface_facets.iter().flat_map(|f| f.vertices.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    /// Free velocity DOFs (not fixed by the outer constraint).
    pub fn free_mask(&self) -> Vec<bool> {
        self.constrained.iter().map(|c| !c).collect()
    }

    /// Velocity DOFs touching the given region.
    pub fn region_vel_mask(&self, r: Region) -> Vec<bool> {
        let s = region_slot(r);
        (0..self.n_vel()).map(|d| self.node_in_region[d / self.dim][s]).collect()
    }

    /// Pressure DOFs touching the given region.
    pub fn region_pres_mask(&self, r: Region) -> Vec<bool> {
        let mut m = vec![false; self.n_pres];
        for (c, dofs) in self.cell_pdofs.iter().enumerate() {
            if self.mesh.regions[c] == r {
                for &d in dofs {
                    m[d] = true;
                }
            }
        }
        m
    }

    pub fn interface_vel_mask(&self) -> Vec<bool> {
        (0..self.n_vel()).map(|d| self.trace_of_node[d / self.dim].is_some()).collect()
    }

    /// Trace DOF index -> velocity DOF index.
    pub fn trace_to_vel(&self, k: usize) -> usize {
        self.interface_nodes[k / self.dim] * self.dim + k % self.dim
    }

    /// Nodal interpolation of a vector function.
    pub fn interpolate(&self, f: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let mut u = vec![0.0; self.n_vel()];
        for (n, x) in self.node_x.iter().enumerate() {
            let v = f(&x[..self.dim]);
            u[n * self.dim..(n + 1) * self.dim].copy_from_slice(&v[..self.dim]);
        }
        u
    }

    /// Nodal interpolation restricted to nodes touching `region`.
    pub fn interpolate_region(&self, region: Region, f: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
        let s = region_slot(region);
        let mut u = self.interpolate(f);
        for n in 0..self.n_nodes() {
            if !self.node_in_region[n][s] {
                for c in 0..self.dim {
                    u[n * self.dim + c] = 0.0;
                }
            }
        }
        u
    }

    /// Interpolation of a scalar function into the pressure space, using the
    /// owning region of each DOF (shared DOFs take the inner value).
    pub fn interpolate_pressure(&self, f: &dyn Fn(&[f64], Region) -> f64) -> Vec<f64> {
        let mut p = vec![0.0; self.n_pres];
        let mut done = vec![false; self.n_pres];
        for (c, cell) in self.mesh.cells.iter().enumerate() {
            let r = self.mesh.regions[c];
            for (k, &v) in cell.iter().enumerate() {
                let d = self.cell_pdofs[c][k];
                if !done[d] || r == Region::Inner {
                    p[d] = f(self.mesh.x(v), r);
                    done[d] = true;
                }
            }
        }
        p
    }

    /// Pressure indicator of a region (1 on its DOFs).
    pub fn pressure_indicator(&self, r: Region) -> Vec<f64> {
        self.region_pres_mask(r).iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Trace of a velocity vector on the interface.
    pub fn trace(&self, u: &[f64]) -> Vec<f64> {
        (0..self.n_trace()).map(|k| u[self.trace_to_vel(k)]).collect()
    }

    /// Default lifting: the velocity vector equal to `phi` at interface nodes
    /// and zero elsewhere (support in one cell layer around the interface).
    pub fn nodal_lifting(&self, phi: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_vel()];
        for (k, v) in phi.iter().enumerate() {
            u[self.trace_to_vel(k)] = *v;
        }
        u
    }

    /// Restriction of a functional on velocity to trace DOFs (transpose of the nodal lifting).
    pub fn restrict_to_trace(&self, r: &[f64]) -> Vec<f64> {
        (0..self.n_trace()).map(|k| r[self.trace_to_vel(k)]).collect()
    }

    /// Cells contained in the collar used for the pressure gauge.
    pub fn collar_cells(&self) -> Vec<usize> {
        self.mesh.outer_collar_cells()
    }
}

/// Velocity/pressure pair on the composite domain whose velocity may jump
/// across the interface: `inner` is read on inner cells, `outer` on outer cells.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoSided {
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl TwoSided {
    pub fn zeros(space: &MixedSpace) -> Self {
        TwoSided { inner: vec![0.0; space.n_vel()], outer: vec![0.0; space.n_vel()], pressure: vec![0.0; space.n_pres] }
    }

    pub fn continuous(u: Vec<f64>, pressure: Vec<f64>) -> Self {
        TwoSided { inner: u.clone(), outer: u, pressure }
    }

    pub fn side(&self, r: Region) -> &[f64] {
        match r {
            Region::Inner => &self.inner,
            Region::Outer => &self.outer,
        }
    }

    pub fn axpy(&mut self, a: f64, x: &TwoSided) {
        crate::sparse::axpy(a, &x.inner, &mut self.inner);
        crate::sparse::axpy(a, &x.outer, &mut self.outer);
        crate::sparse::axpy(a, &x.pressure, &mut self.pressure);
    }

    pub fn scaled(&self, a: f64) -> TwoSided {
        TwoSided {
            inner: crate::sparse::scaled(a, &self.inner),
            outer: crate::sparse::scaled(a, &self.outer),
            pressure: crate::sparse::scaled(a, &self.pressure),
        }
    }

    /// Trace jump `gamma_+ u_+ - gamma_- u_-`.
    pub fn trace_jump(&self, space: &MixedSpace) -> Vec<f64> {
        crate::sparse::sub(&space.trace(&self.inner), &space.trace(&self.outer))
    }
}

/// Writes a vector in the columnar `index value` format.
pub fn write_vector(w: &mut impl Write, v: &[f64]) -> Result<(), FemError> {
    writeln!(w, "# index value ({} entries)", v.len())?;
    for (i, x) in v.iter().enumerate() {
        writeln!(w, "{i} {x:?}")?;
    }
    Ok(())
}

pub fn read_vector(r: impl BufRead, len: usize) -> Result<Vec<f64>, FemError> {
    let mut v = vec![0.0; len];
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let perr = |msg: &str| FemError::Parse { line: ln + 1, msg: msg.into() };
        let mut it = t.split_whitespace();
        let i: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr("bad index"))?;
        let x: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| perr("bad value"))?;
        if i >= len {
            return Err(perr("index out of range"));
        }
        v[i] = x;
    }
    Ok(v)
}
