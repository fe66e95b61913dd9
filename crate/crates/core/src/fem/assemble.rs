//! Assembly of the bilinear forms per region and of interface matrices.

use rayon::prelude::*;

use super::{local_edges, p2_gradients, p2_values, CellGeometry, FemError, MixedSpace};
use crate::mesh::Region;
use crate::quadrature;
use crate::sparse::Csr;
use crate::tensor::CoeffTensor;

/// Matrices of one region. `a[i][j] = a(phi_j, phi_i)`, `b[q][j] = -(div phi_j, psi_q)`.
#[derive(Clone, Debug)]
pub struct RegionForms {
    pub a: Csr,
    pub b: Csr,
    /// Gradient seminorm `(grad phi_j, grad phi_i)`.
    pub grad: Csr,
    pub mass: Csr,
    pub pmass: Csr,
}

/// Interface matrices on trace DOFs.
#[derive(Clone, Debug)]
pub struct InterfaceForms {
    pub mass: Csr,
    /// Laplace–Beltrami stiffness.
    pub stiffness: Csr,
    /// The normal as a trace density: `nu[k] = int Phi_k . nu`.
    pub nu: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AssembledForms {
    pub inner: RegionForms,
    pub outer: RegionForms,
    pub a: Csr,
    pub b: Csr,
    pub grad: Csr,
    pub mass: Csr,
    pub pmass: Csr,
    pub interface: InterfaceForms,
}

impl AssembledForms {
    pub fn region(&self, r: Region) -> &RegionForms {
        match r {
            Region::Inner => &self.inner,
            Region::Outer => &self.outer,
        }
    }
}

type Trip = Vec<(usize, usize, f64)>;

struct CellContrib {
    a: Trip,
    b: Trip,
    grad: Trip,
    mass: Trip,
    pmass: Trip,
}

fn cell_contrib(space: &MixedSpace, tensor: &CoeffTensor, rule: &quadrature::Rule, c: usize) -> Result<CellContrib, FemError> {
    let mesh = &space.mesh;
    let dim = space.dim;
    let geo = CellGeometry::new(mesh, c)?;
    let region = mesh.regions[c];
    let nodes = &space.cell_nodes[c];
    let pd = &space.cell_pdofs[c];
    let nn = nodes.len();
    let np = pd.len();
    let nd = nn * dim;
    let mut a = vec![0.0; nd * nd];
    let mut b = vec![0.0; np * nd];
    let mut g = vec![0.0; nn * nn];
    let mut m = vec![0.0; nn * nn];
    let mut pm = vec![0.0; np * np];
    let constant = tensor.is_piecewise_constant().then(|| tensor.at(&geo.point(&rule.points[0])[..dim], region));
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let wq = w * geo.measure;
        let phi = p2_values(l);
        let dphi = p2_gradients(l, &geo.grad_bary);
        let owned;
        let e = match &constant {
            Some(e) => e,
            None => {
                owned = tensor.at(&geo.point(l)[..dim], region);
                &owned
            }
        };
        // a: test (p,i), trial (q,j): a_ij^{ab} d_a phi_p d_b phi_q
        for p in 0..nn {
            for q in 0..nn {
                for i in 0..dim {
                    for j in 0..dim {
                        let mut s = 0.0;
                        for al in 0..dim {
                            let ga = dphi[p][al];
                            if ga == 0.0 {
                                continue;
                            }
                            for be in 0..dim {
                                s += e.get(i, j, al, be) * ga * dphi[q][be];
                            }
                        }
                        a[(p * dim + i) * nd + q * dim + j] += wq * s;
                    }
                }
                let gg: f64 = (0..dim).map(|d| dphi[p][d] * dphi[q][d]).sum();
                g[p * nn + q] += wq * gg;
                m[p * nn + q] += wq * phi[p] * phi[q];
            }
        }
        for r in 0..np {
            for q in 0..nn {
                for j in 0..dim {
                    b[r * nd + q * dim + j] -= wq * l[r] * dphi[q][j];
                }
            }
            for s in 0..np {
                pm[r * np + s] += wq * l[r] * l[s];
            }
        }
    }
    let vd = |k: usize| nodes[k / dim] * dim + k % dim;
    let mut out = CellContrib { a: Vec::with_capacity(nd * nd), b: Vec::with_capacity(np * nd), grad: Vec::new(), mass: Vec::new(), pmass: Vec::new() };
    for r in 0..nd {
        for s in 0..nd {
            out.a.push((vd(r), vd(s), a[r * nd + s]));
        }
    }
    for r in 0..np {
        for s in 0..nd {
            out.b.push((pd[r], vd(s), b[r * nd + s]));
        }
        for s in 0..np {
            out.pmass.push((pd[r], pd[s], pm[r * np + s]));
        }
    }
    for p in 0..nn {
        for q in 0..nn {
            for d in 0..dim {
                out.grad.push((nodes[p] * dim + d, nodes[q] * dim + d, g[p * nn + q]));
                out.mass.push((nodes[p] * dim + d, nodes[q] * dim + d, m[p * nn + q]));
            }
        }
    }
    Ok(out)
}

/// Facet geometry: measure, tangential gradients of facet barycentrics.
pub(crate) fn facet_geometry(space: &MixedSpace, verts: &[usize]) -> (f64, Vec<[f64; 3]>) {
    let mesh = &space.mesh;
    let dim = space.dim;
    let k = verts.len() - 1;
    let x: Vec<[f64; 3]> = verts.iter().map(|&v| mesh.vertices[v]).collect();
    let mut j = nalgebra::DMatrix::zeros(dim, k);
    for c in 0..k {
        for d in 0..dim {
            j[(d, c)] = x[c + 1][d] - x[0][d];
        }
    }
    let gram = j.transpose() * &j;
    let fact: f64 = (1..=k).map(|v| v as f64).product();
    let measure = gram.determinant().sqrt() / fact;
    let ginv = gram.try_inverse().expect("non-degenerate facet");
    // Columns of J G^{-1} are the tangential gradients of l_1..l_k.
    let t = &j * ginv;
    let mut grads = vec![[0.0; 3]; k + 1];
    for c in 0..k {
        for d in 0..dim {
            grads[c + 1][d] = t[(d, c)];
            grads[0][d] -= t[(d, c)];
        }
    }
    (measure, grads)
}

fn interface_forms(space: &MixedSpace) -> InterfaceForms {
    let mesh = &space.mesh;
    let dim = space.dim;
    let nt = space.n_trace();
    let rule = quadrature::simplex(dim - 1);
    let mut mt = Vec::new();
    let mut kt = Vec::new();
    let mut nu = vec![0.0; nt];
    for (fi, f) in mesh.interface_facets.iter().enumerate() {
        let (measure, gl) = facet_geometry(space, &f.vertices);
        let normal = mesh.interface_normal(fi).expect("interface facet");
        let nodes = &space.interface_facet_nodes[fi];
        let tn: Vec<usize> = nodes.iter().map(|&n| space.trace_of_node[n].unwrap()).collect();
        let nn = nodes.len();
        debug_assert_eq!(nn, local_edges(dim).len() + dim);
        let mut m = vec![0.0; nn * nn];
        let mut s = vec![0.0; nn * nn];
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let wq = w * measure;
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &gl);
            for p in 0..nn {
                for c in 0..dim {
                    nu[tn[p] * dim + c] += wq * phi[p] * normal[c];
                }
                for q in 0..nn {
                    m[p * nn + q] += wq * phi[p] * phi[q];
                    s[p * nn + q] += wq * (0..dim).map(|d| dphi[p][d] * dphi[q][d]).sum::<f64>();
                }
            }
        }
        for p in 0..nn {
            for q in 0..nn {
                for c in 0..dim {
                    mt.push((tn[p] * dim + c, tn[q] * dim + c, m[p * nn + q]));
                    kt.push((tn[p] * dim + c, tn[q] * dim + c, s[p * nn + q]));
                }
            }
        }
    }
    InterfaceForms { mass: Csr::from_triplets(nt, nt, mt), stiffness: Csr::from_triplets(nt, nt, kt), nu }
}

/// Assembles all forms of `tensor` on `space`; cells are processed in
/// parallel and reduced in cell order, so results are bit-reproducible.
pub fn assemble(tensor: &CoeffTensor, space: &MixedSpace) -> Result<AssembledForms, FemError> {
    if tensor.dim() != space.dim {
        return Err(FemError::Dimension { tensor: tensor.dim(), mesh: space.dim });
    }
    let rule = quadrature::simplex(space.dim);
    let contribs: Vec<CellContrib> = (0..space.mesh.num_cells())
        .into_par_iter()
        .map(|c| cell_contrib(space, tensor, &rule, c))
        .collect::<Result<_, _>>()?;
    let (nv, np) = (space.n_vel(), space.n_pres);
    let build = |r: Region| {
        let cells = || contribs.iter().enumerate().filter(|(c, _)| space.mesh.regions[*c] == r).map(|(_, x)| x);
        RegionForms {
            a: Csr::from_triplets(nv, nv, cells().flat_map(|x| x.a.iter().copied()).collect()),
            b: Csr::from_triplets(np, nv, cells().flat_map(|x| x.b.iter().copied()).collect()),
            grad: Csr::from_triplets(nv, nv, cells().flat_map(|x| x.grad.iter().copied()).collect()),
            mass: Csr::from_triplets(nv, nv, cells().flat_map(|x| x.mass.iter().copied()).collect()),
            pmass: Csr::from_triplets(np, np, cells().flat_map(|x| x.pmass.iter().copied()).collect()),
        }
    };
    let inner = build(Region::Inner);
    let outer = build(Region::Outer);
    Ok(AssembledForms {
        a: inner.a.add(&outer.a),
        b: inner.b.add(&outer.b),
        grad: inner.grad.add(&outer.grad),
        mass: inner.mass.add(&outer.mass),
        pmass: inner.pmass.add(&outer.pmass),
        interface: interface_forms(space),
        inner,
        outer,
    })
}

/// `int f . phi_i` over the cells of `region` (all cells when `None`).
pub fn load_vector(space: &MixedSpace, region: Option<Region>, f: &dyn Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut out = vec![0.0; space.n_vel()];
    for c in 0..space.mesh.num_cells() {
        if region.is_some_and(|r| space.mesh.regions[c] != r) {
            continue;
        }
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(&geo.point(l)[..dim]);
            let phi = p2_values(l);
            for (k, &n) in space.cell_nodes[c].iter().enumerate() {
                for d in 0..dim {
                    out[n * dim + d] += w * geo.measure * fx[d] * phi[k];
                }
            }
        }
    }
    out
}

/// `int g psi_q` over the cells of `region` (all cells when `None`).
pub fn pressure_load(space: &MixedSpace, region: Option<Region>, g: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut out = vec![0.0; space.n_pres];
    for c in 0..space.mesh.num_cells() {
        if region.is_some_and(|r| space.mesh.regions[c] != r) {
            continue;
        }
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let gx = g(&geo.point(l)[..dim]);
            for (k, &d) in space.cell_pdofs[c].iter().enumerate() {
                out[d] += w * geo.measure * gx * l[k];
            }
        }
    }
    out
}

/// Pressure functional of the mean over a set of cells: `int_cells psi_q`.
pub fn cell_mean_weights(space: &MixedSpace, cells: &[usize]) -> Vec<f64> {
    let mut w = vec![0.0; space.n_pres];
    let np = space.dim + 1;
    for &c in cells {
        let m = space.mesh.cell_measure(c);
        for &d in &space.cell_pdofs[c] {
            w[d] += m / np as f64;
        }
    }
    w
}

/// `int_{facets} t . Phi_i` over outer facets satisfying `select`, where
/// `t(x, n)` receives the outward normal.
pub fn outer_boundary_load(
    space: &MixedSpace,
    select: &dyn Fn(usize) -> bool,
    t: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim - 1);
    let mut out = vec![0.0; space.n_vel()];
    for (fi, f) in space.mesh.outer_facets.iter().enumerate() {
        if !select(fi) {
            continue;
        }
        let (measure, _) = facet_geometry(space, &f.vertices);
        let n = space.mesh.outer_normal(fi);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for (k, &v) in f.vertices.iter().enumerate() {
                for d in 0..dim {
                    x[d] += l[k] * space.mesh.vertices[v][d];
                }
            }
            let tx = t(&x[..dim], &n);
            let phi = p2_values(l);
            for (k, &node) in space.outer_facet_nodes[fi].iter().enumerate() {
                for d in 0..dim {
                    out[node * dim + d] += w * measure * tx[d] * phi[k];
                }
            }
        }
    }
    out
}

/// `int_{interface} t . Phi_k` as a trace density, with `t(x, nu)`.
pub fn interface_density(space: &MixedSpace, t: &dyn Fn(&[f64], &[f64]) -> Vec<f64>) -> Vec<f64> {
    interface_density_on(space, &|_| true, t)
}

/// [`interface_density`] restricted to the interface facets satisfying `select`.
pub fn interface_density_on(
    space: &MixedSpace,
    select: &dyn Fn(usize) -> bool,
    t: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim - 1);
    let mut out = vec![0.0; space.n_trace()];
    for (fi, f) in space.mesh.interface_facets.iter().enumerate() {
        if !select(fi) {
            continue;
        }
        let (measure, _) = facet_geometry(space, &f.vertices);
        let nu = space.mesh.interface_normal(fi).expect("interface facet");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for (k, &v) in f.vertices.iter().enumerate() {
                for d in 0..dim {
                    x[d] += l[k] * space.mesh.vertices[v][d];
                }
            }
            let tx = t(&x[..dim], &nu);
            let phi = p2_values(l);
            for (k, &node) in space.interface_facet_nodes[fi].iter().enumerate() {
                let tk = space.trace_of_node[node].unwrap();
                for d in 0..dim {
                    out[tk * dim + d] += w * measure * tx[d] * phi[k];
                }
            }
        }
    }
    out
}
