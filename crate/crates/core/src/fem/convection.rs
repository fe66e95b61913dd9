//! Convective loads `v -> <(w . grad) u, v>` and L4 quantities.

use rayon::prelude::*;

use super::{p2_gradients, p2_values, CellGeometry, MixedSpace};
use crate::mesh::Region;
use crate::quadrature;

/// Values and gradients of a P2 vector field at a barycentric point.
fn eval(space: &MixedSpace, c: usize, u: &[f64], phi: &[f64], dphi: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
    let dim = space.dim;
    let mut val = [0.0; 3];
    let mut grad = [[0.0; 3]; 3];
    for (k, &n) in space.cell_nodes[c].iter().enumerate() {
        for i in 0..dim {
            let x = u[n * dim + i];
            val[i] += x * phi[k];
            for d in 0..dim {
                grad[i][d] += x * dphi[k][d];
            }
        }
    }
    (val, grad)
}

fn cells_of(space: &MixedSpace, region: Option<Region>) -> Vec<usize> {
    (0..space.mesh.num_cells()).filter(|&c| region.is_none_or(|r| space.mesh.regions[c] == r)).collect()
}

/// The functional `v -> int ((w . grad) u) . v` over `region` (all cells when `None`).
pub fn convection_load(space: &MixedSpace, w: &[f64], u: &[f64], region: Option<Region>) -> Vec<f64> {
    assemble_convection(space, w, u, region, false)
}

/// Skew-symmetrized convection `v -> int ((w . grad) u) . v + 1/2 (div w) u . v`,
/// which vanishes at `v = u` for any `w` with zero trace.
pub fn skew_convection_load(space: &MixedSpace, w: &[f64], u: &[f64], region: Option<Region>) -> Vec<f64> {
    assemble_convection(space, w, u, region, true)
}

fn assemble_convection(space: &MixedSpace, w: &[f64], u: &[f64], region: Option<Region>, skew: bool) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let parts: Vec<(usize, Vec<f64>)> = cells_of(space, region)
        .into_par_iter()
        .map(|c| {
            let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
            let nn = space.cell_nodes[c].len();
            let mut loc = vec![0.0; nn * dim];
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let phi = p2_values(l);
                let dphi = p2_gradients(l, &geo.grad_bary);
                let (wv, gw) = eval(space, c, w, &phi, &dphi);
                let (uv, gu) = eval(space, c, u, &phi, &dphi);
                let half_div = if skew { 0.5 * (0..dim).map(|d| gw[d][d]).sum::<f64>() } else { 0.0 };
                for i in 0..dim {
                    let conv: f64 = (0..dim).map(|d| wv[d] * gu[i][d]).sum::<f64>() + half_div * uv[i];
                    for k in 0..nn {
                        loc[k * dim + i] += wq * geo.measure * conv * phi[k];
                    }
                }
            }
            (c, loc)
        })
        .collect();
    let mut out = vec![0.0; space.n_vel()];
    for (c, loc) in parts {
        for (k, &n) in space.cell_nodes[c].iter().enumerate() {
            for i in 0..dim {
                out[n * dim + i] += loc[k * dim + i];
            }
        }
    }
    out
}

/// `int |u|^2 u . phi_i`: gradient (up to a factor 4) of `||u||_{L4}^4`.
pub fn cubic_load(space: &MixedSpace, u: &[f64]) -> Vec<f64> {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut out = vec![0.0; space.n_vel()];
    for c in 0..space.mesh.num_cells() {
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, wq) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &geo.grad_bary);
            let (v, _) = eval(space, c, u, &phi, &dphi);
            let s: f64 = v.iter().map(|x| x * x).sum();
            for (k, &n) in space.cell_nodes[c].iter().enumerate() {
                for i in 0..dim {
                    out[n * dim + i] += wq * geo.measure * s * v[i] * phi[k];
                }
            }
        }
    }
    out
}

/// `||u||_{L4}` over the whole mesh.
pub fn l4_norm(space: &MixedSpace, u: &[f64]) -> f64 {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut s = 0.0;
    for c in 0..space.mesh.num_cells() {
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, wq) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &geo.grad_bary);
            let (v, _) = eval(space, c, u, &phi, &dphi);
            let q: f64 = v.iter().map(|x| x * x).sum();
            s += wq * geo.measure * q * q;
        }
    }
    s.powf(0.25)
}

/// `||div u||_{L2}` over the whole mesh.
pub fn div_norm(space: &MixedSpace, u: &[f64]) -> f64 {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut s = 0.0;
    for c in 0..space.mesh.num_cells() {
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, wq) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &geo.grad_bary);
            let (_, g) = eval(space, c, u, &phi, &dphi);
            let d: f64 = (0..dim).map(|i| g[i][i]).sum();
            s += wq * geo.measure * d * d;
        }
    }
    s.sqrt()
}
