//! Error norms, the composite rigid-motion norm and the Korn check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{p2_gradients, p2_values, AssembledForms, CellGeometry, MixedSpace, TwoSided};
use crate::mesh::{rigid_motion_basis, Region};
use crate::quadrature;
use crate::sparse;

pub type VecFn<'a> = &'a dyn Fn(&[f64]) -> Vec<f64>;

/// Squared H1 error components `(||u_h - u||^2, ||grad(u_h - u)||^2)` over
/// the cells of `region`, where `grad(x)` is row-major `d_j u_i`.
pub fn h1_error_sq(space: &MixedSpace, uh: &[f64], region: Option<Region>, u: VecFn, grad: VecFn) -> (f64, f64) {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let (mut l2, mut h1) = (0.0, 0.0);
    for c in 0..space.mesh.num_cells() {
        if region.is_some_and(|r| space.mesh.regions[c] != r) {
            continue;
        }
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = geo.point(l);
            let (ue, ge) = (u(&x[..dim]), grad(&x[..dim]));
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &geo.grad_bary);
            for i in 0..dim {
                let mut v = -ue[i];
                let mut g = [0.0; 3];
                for d in 0..dim {
                    g[d] = -ge[i * dim + d];
                }
                for (k, &n) in space.cell_nodes[c].iter().enumerate() {
                    let x = uh[n * dim + i];
                    v += x * phi[k];
                    for d in 0..dim {
                        g[d] += x * dphi[k][d];
                    }
                }
                l2 += w * geo.measure * v * v;
                h1 += w * geo.measure * g.iter().map(|t| t * t).sum::<f64>();
            }
        }
    }
    (l2, h1)
}

/// `||u||_{H1}` over a set of cells.
pub fn h1_norm_on_cells(space: &MixedSpace, u: &[f64], cells: &[usize]) -> f64 {
    let dim = space.dim;
    let rule = if dim == 2 { quadrature::triangle(4) } else { quadrature::tetrahedron(5) };
    let mut s = 0.0;
    for &c in cells {
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let phi = p2_values(l);
            let dphi = p2_gradients(l, &geo.grad_bary);
            for i in 0..dim {
                let mut v = 0.0;
                let mut g = [0.0; 3];
                for (k, &n) in space.cell_nodes[c].iter().enumerate() {
                    let x = u[n * dim + i];
                    v += x * phi[k];
                    for d in 0..dim {
                        g[d] += x * dphi[k][d];
                    }
                }
                s += w * geo.measure * (v * v + g.iter().map(|t| t * t).sum::<f64>());
            }
        }
    }
    s.sqrt()
}

/// `||p_h - p||_{L2}^2` over the cells of `region`.
pub fn pressure_error_sq(space: &MixedSpace, ph: &[f64], region: Option<Region>, p: &dyn Fn(&[f64]) -> f64) -> f64 {
    let dim = space.dim;
    let rule = quadrature::simplex(dim);
    let mut s = 0.0;
    for c in 0..space.mesh.num_cells() {
        if region.is_some_and(|r| space.mesh.regions[c] != r) {
            continue;
        }
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = geo.point(l);
            let v: f64 = space.cell_pdofs[c].iter().enumerate().map(|(k, &d)| ph[d] * l[k]).sum::<f64>() - p(&x[..dim]);
            s += w * geo.measure * v * v;
        }
    }
    s
}

/// `||E(u)||^2_{L2}` over the cells of `region`.
pub fn strain_sq(space: &MixedSpace, u: &[f64], region: Option<Region>) -> f64 {
    let dim = space.dim;
    // The integrand is quadratic.
    let rule = if dim == 2 { quadrature::triangle(2) } else { quadrature::tetrahedron(2) };
    let mut s = 0.0;
    for c in 0..space.mesh.num_cells() {
        if region.is_some_and(|r| space.mesh.regions[c] != r) {
            continue;
        }
        let geo = CellGeometry::new(&space.mesh, c).expect("valid cell");
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let dphi = p2_gradients(l, &geo.grad_bary);
            let mut g = [[0.0; 3]; 3];
            for (k, &n) in space.cell_nodes[c].iter().enumerate() {
                for i in 0..dim {
                    for d in 0..dim {
                        g[i][d] += u[n * dim + i] * dphi[k][d];
                    }
                }
            }
            let mut e2 = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let e = 0.5 * (g[i][j] + g[j][i]);
                    e2 += e * e;
                }
            }
            s += w * geo.measure * e2;
        }
    }
    s
}

/// `(||E(w_+)||^2 + ||E(w_-)||^2 + sum_j |int [gamma w] . r_j|^2)^{1/2}`.
pub fn composite_rigid_norm(space: &MixedSpace, forms: &AssembledForms, w: &TwoSided) -> f64 {
    let basis = rigid_motion_basis(space.dim);
    let jump = w.trace_jump(space);
    let mut s = strain_sq(space, &w.inner, Some(Region::Inner)) + strain_sq(space, &w.outer, Some(Region::Outer));
    for r in &basis.fields {
        let tr = space.trace(&space.interpolate(&|x| r.eval(x)));
        let m = forms.interface.mass.form(&jump, &tr);
        s += m * m;
    }
    s.sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct KornReport {
    pub samples: usize,
    /// Largest `||grad v||^2 / ||E(v)||^2` observed.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Samples random constrained fields and checks `||grad v||^2 <= 2 ||E(v)||^2`.
pub fn korn_check(space: &MixedSpace, forms: &AssembledForms, samples: usize, seed: u64) -> KornReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    for _ in 0..samples {
        let v: Vec<f64> = space.constrained.iter().map(|&c| if c { 0.0 } else { rng.random::<f64>() - 0.5 }).collect();
        let g = forms.grad.form(&v, &v);
        let e = strain_sq(space, &v, None);
        if e > 0.0 {
            max_ratio = max_ratio.max(g / e);
        }
    }
    KornReport { samples, max_ratio, pass: max_ratio <= 2.0 + 1e-10 }
}

/// `sqrt(u^T G u)` with the gradient seminorm matrix.
pub fn grad_norm(forms: &AssembledForms, u: &[f64]) -> f64 {
    forms.grad.form(u, u).max(0.0).sqrt()
}

/// Discrete H1 norm `sqrt(u^T (G + M) u)` of a two-sided field, per region summed.
pub fn h1_two_sided(forms: &AssembledForms, w: &TwoSided) -> f64 {
    let q = |r: &super::RegionForms, u: &[f64]| r.grad.form(u, u) + r.mass.form(u, u);
    (q(&forms.inner, &w.inner) + q(&forms.outer, &w.outer)).max(0.0).sqrt()
}

/// H1 norm of the difference of two two-sided fields.
pub fn h1_two_sided_diff(forms: &AssembledForms, a: &TwoSided, b: &TwoSided) -> f64 {
    let d = TwoSided {
        inner: sparse::sub(&a.inner, &b.inner),
        outer: sparse::sub(&a.outer, &b.outer),
        pressure: sparse::sub(&a.pressure, &b.pressure),
    };
    h1_two_sided(forms, &d)
}

/// L2 norm of a pressure vector restricted to a region.
pub fn pressure_l2(forms: &AssembledForms, p: &[f64], region: Option<Region>) -> f64 {
    let m = match region {
        None => &forms.pmass,
        Some(r) => &forms.region(r).pmass,
    };
    m.form(p, p).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, SpaceOptions};
    use crate::mesh::{build_composite, MeshSpec};
    use crate::tensor::{make_isotropic, SamplePoint, ScalarField};
    use std::sync::Arc;

    fn setup() -> (MixedSpace, AssembledForms) {
        let mesh = Arc::new(build_composite(&MeshSpec::new(2, 2.0, 0.25)).unwrap());
        let sp = MixedSpace::new(mesh, SpaceOptions::default()).unwrap();
        let t = make_isotropic(2, ScalarField::Constant(1.0), ScalarField::Constant(0.0), &[SamplePoint::new(&[0.0, 0.0], Region::Inner)]).unwrap();
        let f = assemble(&t, &sp).unwrap();
        (sp, f)
    }

    #[test]
    fn rigid_state_has_zero_composite_norm() {
        let (sp, f) = setup();
        let r = rigid_motion_basis(2);
        let u = sp.interpolate(&|x| {
            let (a, b) = (r.fields[0].eval(x), r.fields[2].eval(x));
            vec![a[0] + 0.5 * b[0], a[1] + 0.5 * b[1]]
        });
        let w = TwoSided::continuous(u.clone(), vec![0.0; sp.n_pres]);
        assert!(composite_rigid_norm(&sp, &f, &w) < 1e-12);
        let jumped = TwoSided { inner: crate::sparse::scaled(-1.0, &u), outer: vec![0.0; sp.n_vel()], pressure: vec![0.0; sp.n_pres] };
        assert!(composite_rigid_norm(&sp, &f, &jumped) > 1e-3);
    }

    #[test]
    fn random_fields_have_positive_composite_norm() {
        let (sp, f) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let mut r = || -> Vec<f64> { (0..sp.n_vel()).map(|_| rng.random::<f64>() - 0.5).collect() };
            let w = TwoSided { inner: r(), outer: r(), pressure: vec![0.0; sp.n_pres] };
            assert!(composite_rigid_norm(&sp, &f, &w) > 0.0);
        }
    }

    #[test]
    fn korn_ratio_bounded_by_two() {
        let (sp, f) = setup();
        let rep = korn_check(&sp, &f, 100, 1);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_ratio > 1.0);
    }

    #[test]
    fn interpolated_quadratic_is_exact() {
        let (sp, _) = setup();
        let u = sp.interpolate(&|x| vec![x[0] * x[1], x[1] * x[1] - x[0]]);
        let (l2, h1) = h1_error_sq(&sp, &u, None, &|x| vec![x[0] * x[1], x[1] * x[1] - x[0]], &|x| vec![x[1], x[0], -1.0, 2.0 * x[1]]);
        assert!(l2 < 1e-24 && h1 < 1e-24);
    }
}
