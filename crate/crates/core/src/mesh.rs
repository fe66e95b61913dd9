//! Interface-conforming simplicial meshes of the truncated composite domain:
//! an inner square/cube `Omega_+` surrounded by an outer annulus/shell whose
//! outer boundary is a (polygonal) ball or a box of radius `R`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Inner,
    Outer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("unsupported dimension {0}")]
    Dimension(usize),
    #[error("truncation radius {radius} does not enclose the inner shape (circumradius {inner})")]
    RadiusTooSmall { radius: f64, inner: f64 },
    #[error("mesh size {h} cannot resolve the interface of half-width {half_width} (need h <= half-width)")]
    TooCoarse { h: f64, half_width: f64 },
    #[error("degenerate cell {cell} (measure {measure:e})")]
    DegenerateCell { cell: usize, measure: f64 },
    #[error("facet {0:?} is not an interface facet")]
    NotInterface(usize),
    #[error("malformed mesh file at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("bad half-space rule {0:?} (expected e.g. \"x>0\")")]
    Rule(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterShape {
    Ball,
    Box,
}

/// Selects boundary facets whose centroid lies in an open half-space `x_axis > 0` or `< 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HalfSpace {
    pub axis: usize,
    pub positive: bool,
}

impl HalfSpace {
    pub fn parse(s: &str) -> Result<Self, MeshError> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (axis, rest) = match t.chars().next() {
            Some('x') => (0, &t[1..]),
            Some('y') => (1, &t[1..]),
            Some('z') => (2, &t[1..]),
            _ => return Err(MeshError::Rule(s.to_string())),
        };
        match rest {
            ">0" => Ok(HalfSpace { axis, positive: true }),
            "<0" => Ok(HalfSpace { axis, positive: false }),
            _ => Err(MeshError::Rule(s.to_string())),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if self.positive {
            x[self.axis] > 0.0
        } else {
            x[self.axis] < 0.0
        }
    }
}

/// Parameters of [`build_composite`].
#[derive(Clone, Debug)]
pub struct MeshSpec {
    pub dim: usize,
    /// Half side length of the inner square/cube (0.5 for the unit square).
    pub half_width: f64,
    pub radius: f64,
    pub h: f64,
    pub outer_shape: OuterShape,
    /// Outer facets in this half-space are tagged Neumann, the rest Dirichlet.
    pub neumann: Option<HalfSpace>,
    /// Interface facets in this half-space form the Neumann part of the
    /// interface when the mixed problem is posed on `Omega_-`.
    pub interface_neumann: Option<HalfSpace>,
}

impl MeshSpec {
    pub fn new(dim: usize, radius: f64, h: f64) -> Self {
        MeshSpec {
            dim,
            half_width: 0.5,
            radius,
            h,
            outer_shape: OuterShape::Ball,
            neumann: None,
            interface_neumann: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct InterfaceFacet {
    pub vertices: Vec<usize>,
    pub inner_cell: usize,
    pub outer_cell: usize,
    /// Tag used only by the interface-placed mixed problem.
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug)]
pub struct OuterFacet {
    pub vertices: Vec<usize>,
    pub cell: usize,
    pub tag: BoundaryTag,
}

/// Simplicial mesh of `Omega^0 = Omega_+ u dOmega u Omega_-^0`.
#[derive(Clone, Debug)]
pub struct CompositeMesh {
    pub dim: usize,
    pub vertices: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub regions: Vec<Region>,
    pub interface_facets: Vec<InterfaceFacet>,
    pub outer_facets: Vec<OuterFacet>,
    pub truncation_radius: f64,
    pub half_width: f64,
    pub level: usize,
}

fn blend(spec: &MeshSpec, s: f64, d: &[f64]) -> [f64; 3] {
    let r = spec.radius;
    let tau = match spec.outer_shape {
        OuterShape::Box => 0.0,
        OuterShape::Ball => ((s - 0.5 * r) / (0.5 * r)).clamp(0.0, 1.0),
    };
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = [0.0; 3];
    for (k, dk) in d.iter().enumerate() {
        out[k] = s * ((1.0 - tau) * dk + tau * dk / norm);
    }
    out
}

/// Radii of the layers between the interface (`a`) and the outer boundary
/// (`R`): geometric growth keeping cells roughly isotropic.
fn ring_radii(a: f64, r: f64, h: f64) -> Vec<f64> {
    let q = 1.0 + h / a;
    let mut s = vec![a];
    loop {
        let last = *s.last().unwrap();
        let next = last * q;
        if next >= r {
            if s.len() > 1 && r - last < 0.5 * (q - 1.0) * last {
                *s.last_mut().unwrap() = r;
            } else {
                s.push(r);
            }
            break;
        }
        s.push(next);
    }
    s
}

pub fn build_composite(spec: &MeshSpec) -> Result<CompositeMesh, MeshError> {
    let dim = spec.dim;
    if dim != 2 && dim != 3 {
        return Err(MeshError::Dimension(dim));
    }
    let a = spec.half_width;
    let circum = match spec.outer_shape {
        OuterShape::Ball => a * (dim as f64).sqrt(),
        OuterShape::Box => a,
    };
    if !(spec.radius > circum) {
        return Err(MeshError::RadiusTooSmall { radius: spec.radius, inner: circum });
    }
    if !(spec.h > 0.0) || spec.h > a {
        return Err(MeshError::TooCoarse { h: spec.h, half_width: a });
    }
    let n = ((2.0 * a / spec.h).round() as usize).max(2);
    let h = 2.0 * a / n as f64;
    let radii = ring_radii(a, spec.radius, h);
    let mut mesh = if dim == 2 { build_2d(spec, n, &radii) } else { build_3d(spec, n, &radii) };
    let rule = spec.neumann;
    mesh.finalize(|c| match rule {
        Some(r) if r.contains(c) => BoundaryTag::Neumann,
        _ => BoundaryTag::Dirichlet,
    })?;
    if let Some(rule) = spec.interface_neumann {
        mesh.tag_interface(|c| if rule.contains(c) { BoundaryTag::Neumann } else { BoundaryTag::Dirichlet });
    }
    mesh.check_cells()?;
    Ok(mesh)
}

fn build_2d(spec: &MeshSpec, n: usize, radii: &[f64]) -> CompositeMesh {
    let a = spec.half_width;
    let mut vertices = Vec::new();
    let id = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([-a + 2.0 * a * i as f64 / n as f64, -a + 2.0 * a * j as f64 / n as f64, 0.0]);
        }
    }
    let mut cells = Vec::new();
    let mut regions = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push(vec![v00, v10, v11]);
            cells.push(vec![v00, v11, v01]);
            regions.extend([Region::Inner, Region::Inner]);
        }
    }
    // Perimeter of the inner grid, counter-clockwise.
    let mut perim = Vec::new();
    for i in 0..n {
        perim.push(id(i, 0));
    }
    for j in 0..n {
        perim.push(id(n, j));
    }
    for i in (1..=n).rev() {
        perim.push(id(i, n));
    }
    for j in (1..=n).rev() {
        perim.push(id(0, j));
    }
    let p = perim.len();
    let dirs: Vec<[f64; 2]> = perim.iter().map(|&v| [vertices[v][0] / a, vertices[v][1] / a]).collect();
    let mut prev = perim.clone();
    for &s in &radii[1..] {
        let ring: Vec<usize> = dirs
            .iter()
            .map(|d| {
                vertices.push(blend(spec, s, d));
                vertices.len() - 1
            })
            .collect();
        for k in 0..p {
            let k1 = (k + 1) % p;
            cells.push(vec![prev[k], prev[k1], ring[k1]]);
            cells.push(vec![prev[k], ring[k1], ring[k]]);
            regions.extend([Region::Outer, Region::Outer]);
        }
        prev = ring;
    }
    CompositeMesh {
        dim: 2,
        vertices,
        cells,
        regions,
        interface_facets: Vec::new(),
        outer_facets: Vec::new(),
        truncation_radius: spec.radius,
        half_width: a,
        level: 0,
    }
}

/// Splits a hexahedron into 24 tetrahedra through its face centres and its
/// centre; neighbouring hexahedra share face centres, so the result conforms.
fn split_hex(
    corners: [usize; 8],
    vertices: &mut Vec<[f64; 3]>,
    face_centres: &mut HashMap<[usize; 4], usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let [b0, b1, b2, b3, t0, t1, t2, t3] = corners;
    let faces = [
        [b0, b1, b2, b3],
        [t0, t1, t2, t3],
        [b0, b1, t1, t0],
        [b1, b2, t2, t1],
        [b2, b3, t3, t2],
        [b3, b0, t0, t3],
    ];
    let mut centre = [0.0; 3];
    for &c in &corners {
        for k in 0..3 {
            centre[k] += vertices[c][k] / 8.0;
        }
    }
    vertices.push(centre);
    let cc = vertices.len() - 1;
    for f in faces {
        let mut key = f;
        key.sort_unstable();
        let fc = *face_centres.entry(key).or_insert_with(|| {
            let mut x = [0.0; 3];
            for &c in &f {
                for k in 0..3 {
                    x[k] += vertices[c][k] / 4.0;
                }
            }
            vertices.push(x);
            vertices.len() - 1
        });
        for m in 0..4 {
            out.push(vec![f[m], f[(m + 1) % 4], fc, cc]);
        }
    }
}

fn build_3d(spec: &MeshSpec, n: usize, radii: &[f64]) -> CompositeMesh {
    let a = spec.half_width;
    let mut vertices = Vec::new();
    let id = |i: usize, j: usize, k: usize| (k * (n + 1) + j) * (n + 1) + i;
    for k in 0..=n {
        for j in 0..=n {
            for i in 0..=n {
                let c = |t: usize| -a + 2.0 * a * t as f64 / n as f64;
                vertices.push([c(i), c(j), c(k)]);
            }
        }
    }
    let mut face_centres = HashMap::new();
    let mut cells = Vec::new();
    let mut regions = Vec::new();
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let corners = [
                    id(i, j, k),
                    id(i + 1, j, k),
                    id(i + 1, j + 1, k),
                    id(i, j + 1, k),
                    id(i, j, k + 1),
                    id(i + 1, j, k + 1),
                    id(i + 1, j + 1, k + 1),
                    id(i, j + 1, k + 1),
                ];
                let before = cells.len();
                split_hex(corners, &mut vertices, &mut face_centres, &mut cells);
                regions.extend(std::iter::repeat(Region::Inner).take(cells.len() - before));
            }
        }
    }
    // Surface quads of the inner cube, each listed once with consistent corners.
    let mut quads: Vec<[usize; 4]> = Vec::new();
    for t in 0..n {
        for u in 0..n {
            quads.push([id(t, u, 0), id(t + 1, u, 0), id(t + 1, u + 1, 0), id(t, u + 1, 0)]);
            quads.push([id(t, u, n), id(t + 1, u, n), id(t + 1, u + 1, n), id(t, u + 1, n)]);
            quads.push([id(t, 0, u), id(t + 1, 0, u), id(t + 1, 0, u + 1), id(t, 0, u + 1)]);
            quads.push([id(t, n, u), id(t + 1, n, u), id(t + 1, n, u + 1), id(t, n, u + 1)]);
            quads.push([id(0, t, u), id(0, t + 1, u), id(0, t + 1, u + 1), id(0, t, u + 1)]);
            quads.push([id(n, t, u), id(n, t + 1, u), id(n, t + 1, u + 1), id(n, t, u + 1)]);
        }
    }
    let surface: BTreeSet<usize> = quads.iter().flatten().copied().collect();
    let mut prev: HashMap<usize, usize> = surface.iter().map(|&v| (v, v)).collect();
    for &s in &radii[1..] {
        let ring: HashMap<usize, usize> = surface
            .iter()
            .map(|&v| {
                let d = [vertices[v][0] / a, vertices[v][1] / a, vertices[v][2] / a];
                vertices.push(blend(spec, s, &d));
                (v, vertices.len() - 1)
            })
            .collect();
        for q in &quads {
            let corners = [prev[&q[0]], prev[&q[1]], prev[&q[2]], prev[&q[3]], ring[&q[0]], ring[&q[1]], ring[&q[2]], ring[&q[3]]];
            let before = cells.len();
            split_hex(corners, &mut vertices, &mut face_centres, &mut cells);
            regions.extend(std::iter::repeat(Region::Outer).take(cells.len() - before));
        }
        prev = ring;
    }
    CompositeMesh {
        dim: 3,
        vertices,
        cells,
        regions,
        interface_facets: Vec::new(),
        outer_facets: Vec::new(),
        truncation_radius: spec.radius,
        half_width: a,
        level: 0,
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

impl CompositeMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn x(&self, v: usize) -> &[f64] {
        &self.vertices[v][..self.dim]
    }

    /// Facets (vertex subsets of size `dim`) of a cell, in local order.
    pub fn cell_facets(&self, c: usize) -> Vec<Vec<usize>> {
        let cell = &self.cells[c];
        (0..cell.len())
            .map(|skip| cell.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, &v)| v).collect())
            .collect()
    }

    /// Rebuilds interface and outer facet lists from cell adjacency; outer
    /// facet tags come from `tag_of(centroid)`.
    fn finalize(&mut self, tag_of: impl Fn(&[f64]) -> BoundaryTag) -> Result<(), MeshError> {
        let mut owners: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for c in 0..self.cells.len() {
            for f in self.cell_facets(c) {
                owners.entry(sorted(&f)).or_default().push(c);
            }
        }
        self.interface_facets.clear();
        self.outer_facets.clear();
        for (f, cs) in owners {
            match cs.as_slice() {
                [c] => {
                    let tag = tag_of(&self.centroid(&f));
                    self.outer_facets.push(OuterFacet { vertices: f, cell: *c, tag });
                }
                [c0, c1] => {
                    let (r0, r1) = (self.regions[*c0], self.regions[*c1]);
                    if r0 != r1 {
                        let (inner_cell, outer_cell) = if r0 == Region::Inner { (*c0, *c1) } else { (*c1, *c0) };
                        self.interface_facets.push(InterfaceFacet {
                            vertices: f,
                            inner_cell,
                            outer_cell,
                            tag: BoundaryTag::Dirichlet,
                        });
                    }
                }
                _ => return Err(MeshError::Invalid(format!("facet {f:?} shared by {} cells", cs.len()))),
            }
        }
        Ok(())
    }

    fn tag_interface(&mut self, tag_of: impl Fn(&[f64]) -> BoundaryTag) {
        for k in 0..self.interface_facets.len() {
            let c = self.centroid(&self.interface_facets[k].vertices);
            self.interface_facets[k].tag = tag_of(&c);
        }
    }

    fn check_cells(&self) -> Result<(), MeshError> {
        let scale = self.half_width.powi(self.dim as i32) * 1e-14;
        for c in 0..self.cells.len() {
            let m = self.cell_measure(c);
            if !(m > scale) {
                return Err(MeshError::DegenerateCell { cell: c, measure: m });
            }
        }
        Ok(())
    }

    pub fn centroid(&self, verts: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for &v in verts {
            for k in 0..self.dim {
                c[k] += self.vertices[v][k] / verts.len() as f64;
            }
        }
        c
    }

    /// Signed measure of a cell (positive for positively oriented simplices).
    pub fn signed_cell_measure(&self, c: usize) -> f64 {
        let cell = &self.cells[c];
        let x0 = self.vertices[cell[0]];
        let e = |k: usize, d: usize| self.vertices[cell[k]][d] - x0[d];
        if self.dim == 2 {
            0.5 * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0))
        } else {
            let det = e(1, 0) * (e(2, 1) * e(3, 2) - e(2, 2) * e(3, 1)) - e(1, 1) * (e(2, 0) * e(3, 2) - e(2, 2) * e(3, 0))
                + e(1, 2) * (e(2, 0) * e(3, 1) - e(2, 1) * e(3, 0));
            det / 6.0
        }
    }

    pub fn cell_measure(&self, c: usize) -> f64 {
        self.signed_cell_measure(c).abs()
    }

    /// Area (3D) or length (2D) of a facet and its unnormalized normal.
    fn facet_geometry(&self, verts: &[usize]) -> (f64, Vec<f64>) {
        let p = |k: usize| self.vertices[verts[k]];
        if self.dim == 2 {
            let t = [p(1)[0] - p(0)[0], p(1)[1] - p(0)[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            (len, vec![t[1] / len, -t[0] / len])
        } else {
            let u = [p(1)[0] - p(0)[0], p(1)[1] - p(0)[1], p(1)[2] - p(0)[2]];
            let w = [p(2)[0] - p(0)[0], p(2)[1] - p(0)[1], p(2)[2] - p(0)[2]];
            let c = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
            let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            (0.5 * norm, c.iter().map(|v| v / norm).collect())
        }
    }

    pub fn facet_measure(&self, verts: &[usize]) -> f64 {
        self.facet_geometry(verts).0
    }

    /// Unit normal of a facet pointing away from `cell`.
    pub fn facet_normal_from(&self, verts: &[usize], cell: usize) -> Vec<f64> {
        let (_, mut nu) = self.facet_geometry(verts);
        let fc = self.centroid(verts);
        let cc = self.centroid(&self.cells[cell]);
        let s: f64 = (0..self.dim).map(|k| nu[k] * (fc[k] - cc[k])).sum();
        if s < 0.0 {
            nu.iter_mut().for_each(|v| *v = -*v);
        }
        nu
    }

    /// Unit normal on interface facet `k`, pointing from `Omega_+` into `Omega_-`.
    pub fn interface_normal(&self, k: usize) -> Result<Vec<f64>, MeshError> {
        let f = self.interface_facets.get(k).ok_or(MeshError::NotInterface(k))?;
        Ok(self.facet_normal_from(&f.vertices, f.inner_cell))
    }

    /// Outward unit normal on outer facet `k`.
    pub fn outer_normal(&self, k: usize) -> Vec<f64> {
        let f = &self.outer_facets[k];
        self.facet_normal_from(&f.vertices, f.cell)
    }

    pub fn region_measure(&self, region: Region) -> f64 {
        (0..self.cells.len()).filter(|&c| self.regions[c] == region).map(|c| self.cell_measure(c)).sum()
    }

    pub fn measure(&self) -> f64 {
        (0..self.cells.len()).map(|c| self.cell_measure(c)).sum()
    }

    pub fn interface_measure(&self) -> f64 {
        self.interface_facets.iter().map(|f| self.facet_measure(&f.vertices)).sum()
    }

    /// Vertices on the outer boundary `dOmega^0`.
    pub fn outer_boundary_vertices(&self) -> BTreeSet<usize> {
        self.outer_facets.iter().flat_map(|f| f.vertices.iter().copied()).collect()
    }

    pub fn interface_vertices(&self) -> BTreeSet<usize> {
        self.interface_facets.iter().flat_map(|f| f.vertices.iter().copied()).collect()
    }

    /// Cells touching the outer boundary (the pressure-gauge collar).
    pub fn outer_collar_cells(&self) -> Vec<usize> {
        let b = self.outer_boundary_vertices();
        (0..self.cells.len()).filter(|&c| self.cells[c].iter().any(|v| b.contains(v))).collect()
    }

    /// Largest cell diameter.
    pub fn max_diameter(&self) -> f64 {
        self.diameters().into_iter().fold(0.0, f64::max)
    }

    /// Largest diameter among cells adjacent to the interface.
    pub fn interface_h(&self) -> f64 {
        let iv = self.interface_vertices();
        let d = self.diameters();
        (0..self.cells.len())
            .filter(|&c| self.cells[c].iter().any(|v| iv.contains(v)))
            .map(|c| d[c])
            .fold(0.0, f64::max)
    }

    fn diameters(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|cell| {
                let mut m: f64 = 0.0;
                for (i, &p) in cell.iter().enumerate() {
                    for &q in &cell[i + 1..] {
                        let d: f64 = (0..self.dim).map(|k| (self.vertices[p][k] - self.vertices[q][k]).powi(2)).sum();
                        m = m.max(d.sqrt());
                    }
                }
                m
            })
            .collect()
    }

    /// Uniform red refinement; regions, facet tags and the interface are
    /// inherited, and the coarse vertices keep their indices.
    pub fn refine(&self) -> CompositeMesh {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |p: usize, q: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
            let key = (p.min(q), p.max(q));
            *mid.entry(key).or_insert_with(|| {
                let (a, b) = (vertices[p], vertices[q]);
                vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]);
                vertices.len() - 1
            })
        };
        let mut cells = Vec::with_capacity(self.cells.len() << self.dim);
        let mut regions = Vec::with_capacity(cells.capacity());
        for (c, cell) in self.cells.iter().enumerate() {
            let children: Vec<Vec<usize>> = if self.dim == 2 {
                let (v0, v1, v2) = (cell[0], cell[1], cell[2]);
                let m01 = midpoint(v0, v1, &mut vertices);
                let m12 = midpoint(v1, v2, &mut vertices);
                let m02 = midpoint(v0, v2, &mut vertices);
                vec![vec![v0, m01, m02], vec![m01, v1, m12], vec![m02, m12, v2], vec![m01, m12, m02]]
            } else {
                let (v0, v1, v2, v3) = (cell[0], cell[1], cell[2], cell[3]);
                let m01 = midpoint(v0, v1, &mut vertices);
                let m02 = midpoint(v0, v2, &mut vertices);
                let m03 = midpoint(v0, v3, &mut vertices);
                let m12 = midpoint(v1, v2, &mut vertices);
                let m13 = midpoint(v1, v3, &mut vertices);
                let m23 = midpoint(v2, v3, &mut vertices);
                let mut ch = vec![
                    vec![v0, m01, m02, m03],
                    vec![m01, v1, m12, m13],
                    vec![m02, m12, v2, m23],
                    vec![m03, m13, m23, v3],
                ];
                // Octahedron: split along its shortest diagonal.
                let diags = [(m01, m23, m02, m03, m13, m12), (m02, m13, m01, m03, m23, m12), (m03, m12, m01, m02, m23, m13)];
                let len = |p: usize, q: usize| (0..3).map(|k| (vertices[p][k] - vertices[q][k]).powi(2)).sum::<f64>();
                let mut best = 0;
                for d in 1..3 {
                    if len(diags[d].0, diags[d].1) < len(diags[best].0, diags[best].1) - 1e-14 {
                        best = d;
                    }
                }
                let (p, q, e0, e1, e2, e3) = diags[best];
                let ring = [e0, e1, e2, e3];
                for k in 0..4 {
                    ch.push(vec![p, q, ring[k], ring[(k + 1) % 4]]);
                }
                ch
            };
            let r = self.regions[c];
            for ch in children {
                cells.push(ch);
                regions.push(r);
            }
        }
        let child_facets = |verts: &[usize], vertices: &mut Vec<[f64; 3]>, midpoint: &mut dyn FnMut(usize, usize, &mut Vec<[f64; 3]>) -> usize| -> Vec<Vec<usize>> {
            if verts.len() == 2 {
                let m = midpoint(verts[0], verts[1], vertices);
                vec![sorted(&[verts[0], m]), sorted(&[m, verts[1]])]
            } else {
                let (a, b, c) = (verts[0], verts[1], verts[2]);
                let (ab, bc, ac) = (midpoint(a, b, vertices), midpoint(b, c, vertices), midpoint(a, c, vertices));
                vec![sorted(&[a, ab, ac]), sorted(&[ab, b, bc]), sorted(&[ac, bc, c]), sorted(&[ab, bc, ac])]
            }
        };
        let mut outer_tags: HashMap<Vec<usize>, BoundaryTag> = HashMap::new();
        for f in &self.outer_facets {
            for ch in child_facets(&f.vertices, &mut vertices, &mut midpoint) {
                outer_tags.insert(ch, f.tag);
            }
        }
        let mut iface_tags: HashMap<Vec<usize>, BoundaryTag> = HashMap::new();
        for f in &self.interface_facets {
            for ch in child_facets(&f.vertices, &mut vertices, &mut midpoint) {
                iface_tags.insert(ch, f.tag);
            }
        }
        let mut out = CompositeMesh {
            dim: self.dim,
            vertices,
            cells,
            regions,
            interface_facets: Vec::new(),
            outer_facets: Vec::new(),
            truncation_radius: self.truncation_radius,
            half_width: self.half_width,
            level: self.level + 1,
        };
        out.finalize(|_| BoundaryTag::Dirichlet).expect("refinement preserves conformity");
        for f in out.outer_facets.iter_mut() {
            f.tag = outer_tags[&f.vertices];
        }
        for f in out.interface_facets.iter_mut() {
            f.tag = iface_tags[&f.vertices];
        }
        out
    }

    /// Writes the ASCII `amesh 1` format.
    pub fn write_amesh(&self, w: &mut impl Write) -> Result<(), MeshError> {
        writeln!(
            w,
            "amesh 1 dim {} radius {} halfwidth {} level {}",
            self.dim, self.truncation_radius, self.half_width, self.level
        )?;
        writeln!(w, "{} {} {} {}", self.vertices.len(), self.cells.len(), self.interface_facets.len(), self.outer_facets.len())?;
        for v in &self.vertices {
            let coords: Vec<String> = v[..self.dim].iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}", coords.join(" "))?;
        }
        for (c, r) in self.cells.iter().zip(&self.regions) {
            let ids: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let tag = if *r == Region::Inner { "inner" } else { "outer" };
            writeln!(w, "{} {tag}", ids.join(" "))?;
        }
        for f in &self.interface_facets {
            let ids: Vec<String> = f.vertices.iter().map(|v| v.to_string()).collect();
            let tag = if f.tag == BoundaryTag::Neumann { "interface_neumann" } else { "interface" };
            writeln!(w, "{} {tag}", ids.join(" "))?;
        }
        for f in &self.outer_facets {
            let ids: Vec<String> = f.vertices.iter().map(|v| v.to_string()).collect();
            let tag = if f.tag == BoundaryTag::Neumann { "neumann" } else { "dirichlet" };
            writeln!(w, "{} {tag}", ids.join(" "))?;
        }
        Ok(())
    }

    /// Reads the ASCII `amesh 1` format; adjacency is recomputed and the
    /// listed facets are checked against it.
    pub fn read_amesh(r: impl BufRead) -> Result<CompositeMesh, MeshError> {
        let lines: Vec<String> = r.lines().collect::<Result<_, _>>()?;
        let perr = |line: usize, msg: &str| MeshError::Parse { line: line + 1, msg: msg.to_string() };
        let header: Vec<&str> = lines.first().ok_or_else(|| perr(0, "empty file"))?.split_whitespace().collect();
        if header.len() < 2 || header[0] != "amesh" || header[1] != "1" {
            return Err(perr(0, "expected header 'amesh 1'"));
        }
        let mut dim = 0;
        let mut radius = f64::NAN;
        let mut half_width = 0.5;
        let mut level = 0;
        for kv in header[2..].chunks(2) {
            let [k, v] = kv else { return Err(perr(0, "odd header fields")) };
            let bad = |_| perr(0, "bad header value");
            match *k {
                "dim" => dim = v.parse().map_err(bad)?,
                "radius" => radius = v.parse().map_err(|_| perr(0, "bad radius"))?,
                "halfwidth" => half_width = v.parse().map_err(|_| perr(0, "bad halfwidth"))?,
                "level" => level = v.parse().map_err(|_| perr(0, "bad level"))?,
                _ => return Err(perr(0, &format!("unknown header key {k}"))),
            }
        }
        if dim != 2 && dim != 3 {
            return Err(MeshError::Dimension(dim));
        }
        let counts: Vec<usize> = lines
            .get(1)
            .ok_or_else(|| perr(1, "missing counts"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(1, "bad count")))
            .collect::<Result<_, _>>()?;
        let [nv, nc, nfi, nfo] = counts[..] else { return Err(perr(1, "expected 4 counts")) };
        if lines.len() < 2 + nv + nc + nfi + nfo {
            return Err(perr(lines.len(), "file truncated"));
        }
        let mut vertices = Vec::with_capacity(nv);
        for l in 2..2 + nv {
            let x: Vec<f64> =
                lines[l].split_whitespace().map(|t| t.parse().map_err(|_| perr(l, "bad coordinate"))).collect::<Result<_, _>>()?;
            if x.len() != dim {
                return Err(perr(l, "wrong coordinate count"));
            }
            let mut p = [0.0; 3];
            p[..dim].copy_from_slice(&x);
            vertices.push(p);
        }
        let parse_ids = |l: usize, count: usize| -> Result<(Vec<usize>, String), MeshError> {
            let toks: Vec<&str> = lines[l].split_whitespace().collect();
            if toks.len() != count + 1 {
                return Err(perr(l, "wrong field count"));
            }
            let ids = toks[..count]
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| perr(l, "bad vertex id")).and_then(|v| if v < nv { Ok(v) } else { Err(perr(l, "vertex id out of range")) }))
                .collect::<Result<_, _>>()?;
            Ok((ids, toks[count].to_string()))
        };
        let mut cells = Vec::with_capacity(nc);
        let mut regions = Vec::with_capacity(nc);
        let base = 2 + nv;
        for l in base..base + nc {
            let (ids, tag) = parse_ids(l, dim + 1)?;
            regions.push(match tag.as_str() {
                "inner" => Region::Inner,
                "outer" => Region::Outer,
                _ => return Err(perr(l, "region tag must be inner|outer")),
            });
            cells.push(ids);
        }
        let mut listed_iface = HashMap::new();
        let base = base + nc;
        for l in base..base + nfi {
            let (ids, tag) = parse_ids(l, dim)?;
            let t = match tag.as_str() {
                "interface" => BoundaryTag::Dirichlet,
                "interface_neumann" => BoundaryTag::Neumann,
                _ => return Err(perr(l, "interface facet tag must be interface|interface_neumann")),
            };
            listed_iface.insert(sorted(&ids), t);
        }
        let mut listed_outer = HashMap::new();
        let base = base + nfi;
        for l in base..base + nfo {
            let (ids, tag) = parse_ids(l, dim)?;
            let t = match tag.as_str() {
                "dirichlet" => BoundaryTag::Dirichlet,
                "neumann" => BoundaryTag::Neumann,
                _ => return Err(perr(l, "outer facet tag must be dirichlet|neumann")),
            };
            listed_outer.insert(sorted(&ids), t);
        }
        let mut mesh = CompositeMesh {
            dim,
            vertices,
            cells,
            regions,
            interface_facets: Vec::new(),
            outer_facets: Vec::new(),
            truncation_radius: radius,
            half_width,
            level,
        };
        mesh.finalize(|_| BoundaryTag::Dirichlet)?;
        if mesh.interface_facets.len() != listed_iface.len() || mesh.outer_facets.len() != listed_outer.len() {
            return Err(MeshError::Invalid("listed facets do not match cell adjacency".into()));
        }
        for f in mesh.interface_facets.iter_mut() {
            f.tag = *listed_iface.get(&f.vertices).ok_or_else(|| MeshError::Invalid(format!("interface facet {:?} missing", f.vertices)))?;
        }
        for f in mesh.outer_facets.iter_mut() {
            f.tag = *listed_outer.get(&f.vertices).ok_or_else(|| MeshError::Invalid(format!("outer facet {:?} missing", f.vertices)))?;
        }
        mesh.check_cells()?;
        Ok(mesh)
    }
}

/// Affine field `x -> b + B x` with skew-symmetric `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub translation: Vec<f64>,
    /// Row-major skew-symmetric matrix.
    pub rotation: Vec<f64>,
}

impl RigidMotion {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.translation.len();
        (0..n).map(|i| self.translation[i] + (0..n).map(|j| self.rotation[i * n + j] * x[j]).sum::<f64>()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct RigidMotionBasis {
    pub dim: usize,
    pub fields: Vec<RigidMotion>,
}

/// Translations followed by infinitesimal rotations; `(1,0), (0,1), (-y,x)` in 2D.
pub fn rigid_motion_basis(dim: usize) -> RigidMotionBasis {
    let mut fields = Vec::new();
    for k in 0..dim {
        let mut b = vec![0.0; dim];
        b[k] = 1.0;
        fields.push(RigidMotion { translation: b, rotation: vec![0.0; dim * dim] });
    }
    let pairs: &[(usize, usize)] = if dim == 2 { &[(0, 1)] } else { &[(0, 1), (1, 2), (2, 0)] };
    for &(i, j) in pairs {
        let mut r = vec![0.0; dim * dim];
        r[i * dim + j] = -1.0;
        r[j * dim + i] = 1.0;
        fields.push(RigidMotion { translation: vec![0.0; dim], rotation: r });
    }
    RigidMotionBasis { dim, fields }
}
