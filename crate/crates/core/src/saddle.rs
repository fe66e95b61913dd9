//! Mixed saddle-point systems, inf-sup / coercivity estimates and the
//! Brezzi a-priori bounds.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fem::assemble::cell_mean_weights;
use crate::fem::{AssembledForms, Constraint, Gauge, MixedSpace};
use crate::mesh::Region;
use crate::sparse::{self, Csr, SparseLu};

#[derive(Debug, thiserror::Error)]
pub enum SaddleError {
    #[error("singular saddle system: {0}")]
    Singular(String),
    #[error("residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("negative Schur eigenvalue {0:e} beyond round-off")]
    NegativeEigenvalue(f64),
    #[error("length mismatch: {0}")]
    Length(String),
}

/// Factorized system
/// `[[A_ff, B_pf^T, 0], [B_pf, 0, G], [0, G^T, 0]]` on free velocity DOFs
/// `f`, active pressure DOFs `p` and gauge multipliers.
pub struct SaddleSystem {
    n_vel: usize,
    n_pres: usize,
    vfree: Vec<usize>,
    pact: Vec<usize>,
    n_gauge: usize,
    a: Csr,
    b: Csr,
    gauges: Vec<Vec<f64>>,
    /// Optional `-eps M` pressure block (regularization).
    c: Option<Csr>,
    lu: SparseLu,
    pub rtol: f64,
}

impl std::fmt::Debug for SaddleSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SaddleSystem(free={}, pressures={}, gauges={})", self.vfree.len(), self.pact.len(), self.n_gauge)
    }
}

#[derive(Clone, Debug)]
pub struct SaddleSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    /// Gauge multipliers (nonzero when the data violate the compatibility
    /// condition; they then act as a sink on the gauge support).
    pub multipliers: Vec<f64>,
    pub residual_velocity: f64,
    pub residual_pressure: f64,
}

fn local_map(mask: &[bool]) -> (Vec<usize>, Vec<Option<usize>>) {
    let mut list = Vec::new();
    let mut map = vec![None; mask.len()];
    for (i, &m) in mask.iter().enumerate() {
        if m {
            map[i] = Some(list.len());
            list.push(i);
        }
    }
    (list, map)
}

impl SaddleSystem {
    pub fn new(a: &Csr, b: &Csr, vfree: &[bool], pact: &[bool], gauges: Vec<Vec<f64>>) -> Result<Self, SaddleError> {
        Self::with_pressure_block(a, b, vfree, pact, gauges, None)
    }

    pub fn with_pressure_block(
        a: &Csr,
        b: &Csr,
        vfree: &[bool],
        pact: &[bool],
        gauges: Vec<Vec<f64>>,
        c: Option<Csr>,
    ) -> Result<Self, SaddleError> {
        let (n_vel, n_pres) = (a.nrows, b.nrows);
        if vfree.len() != n_vel || pact.len() != n_pres || b.ncols != n_vel {
            return Err(SaddleError::Length("masks do not match matrix sizes".into()));
        }
        let (vl, vm) = local_map(vfree);
        let (pl, pm) = local_map(pact);
        let (nf, np, ng) = (vl.len(), pl.len(), gauges.len());
        let mut t = Vec::new();
        for (i, j, v) in a.select(&vm, nf, &vm, nf).triplets() {
            t.push((i, j, v));
        }
        for (q, j, v) in b.select(&pm, np, &vm, nf).triplets() {
            t.push((nf + q, j, v));
            t.push((j, nf + q, v));
        }
        if let Some(c) = &c {
            for (q, r, v) in c.select(&pm, np, &pm, np).triplets() {
                t.push((nf + q, nf + r, v));
            }
        }
        for (k, g) in gauges.iter().enumerate() {
            for (q, gq) in pl.iter().map(|&q| g[q]).enumerate() {
                if gq != 0.0 {
                    t.push((nf + q, nf + np + k, gq));
                    t.push((nf + np + k, nf + q, gq));
                }
            }
        }
        let n = nf + np + ng;
        for i in 0..n {
            t.push((i, i, 0.0));
        }
        let k = Csr::from_triplets(n, n, t);
        let lu = SparseLu::new(&k).map_err(|e| SaddleError::Singular(e.to_string()))?;
        Ok(SaddleSystem { n_vel, n_pres, vfree: vl, pact: pl, n_gauge: ng, a: a.clone(), b: b.clone(), gauges, c, lu, rtol: 1e-8 })
    }

    pub fn n_free(&self) -> usize {
        self.vfree.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.vfree
    }

    pub fn active_pressures(&self) -> &[usize] {
        &self.pact
    }

    /// Solves `A u + B^T p = f` on free rows and `B u + G lambda = g` on
    /// active rows with `u = ud` on the remaining DOFs. With `transpose` the
    /// velocity block is `A^T` (the adjoint problem).
    pub fn solve(&self, f: &[f64], g: &[f64], ud: Option<&[f64]>, transpose: bool) -> Result<SaddleSolution, SaddleError> {
        if f.len() != self.n_vel || g.len() != self.n_pres {
            return Err(SaddleError::Length(format!("rhs lengths {} / {}", f.len(), g.len())));
        }
        let (nf, np) = (self.vfree.len(), self.pact.len());
        let mut fr = f.to_vec();
        let mut gr = g.to_vec();
        let mut ud_full = vec![0.0; self.n_vel];
        if let Some(ud) = ud {
            for (i, v) in ud.iter().enumerate() {
                ud_full[i] = *v;
            }
            for &i in &self.vfree {
                ud_full[i] = 0.0;
            }
            let au = if transpose { self.a.matvec_transpose(&ud_full) } else { self.a.matvec(&ud_full) };
            sparse::axpy(-1.0, &au, &mut fr);
            sparse::axpy(-1.0, &self.b.matvec(&ud_full), &mut gr);
        }
        let mut rhs = vec![0.0; nf + np + self.n_gauge];
        for (k, &i) in self.vfree.iter().enumerate() {
            rhs[k] = fr[i];
        }
        for (k, &q) in self.pact.iter().enumerate() {
            rhs[nf + k] = gr[q];
        }
        let x = if transpose { self.lu.solve_transpose(&rhs) } else { self.lu.solve(&rhs) };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SaddleError::Singular("non-finite solution (near-null pressure mode?)".into()));
        }
        let mut u = ud_full;
        for (k, &i) in self.vfree.iter().enumerate() {
            u[i] = x[k];
        }
        let mut p = vec![0.0; self.n_pres];
        for (k, &q) in self.pact.iter().enumerate() {
            p[q] = x[nf + k];
        }
        let multipliers = x[nf + np..].to_vec();
        let (rv, rp) = self.residuals(&u, &p, &multipliers, f, g, transpose);
        let scale = sparse::max_abs(f).max(sparse::max_abs(g)).max(sparse::max_abs(&u) * self.a_scale()).max(1e-300);
        let tol = self.rtol * scale;
        if rv > tol || rp > tol {
            return Err(SaddleError::Residual { residual: rv.max(rp) / scale, tol: self.rtol });
        }
        Ok(SaddleSolution { u, p, multipliers, residual_velocity: rv, residual_pressure: rp })
    }

    fn a_scale(&self) -> f64 {
        sparse::max_abs(&self.a.data)
    }

    /// Max-norm residuals of both block rows.
    pub fn residuals(&self, u: &[f64], p: &[f64], lambda: &[f64], f: &[f64], g: &[f64], transpose: bool) -> (f64, f64) {
        let mut r1 = if transpose { self.a.matvec_transpose(u) } else { self.a.matvec(u) };
        sparse::axpy(1.0, &self.b.matvec_transpose(p), &mut r1);
        let rv = self.vfree.iter().map(|&i| (r1[i] - f[i]).abs()).fold(0.0, f64::max);
        let mut r2 = self.b.matvec(u);
        if let Some(c) = &self.c {
            sparse::axpy(1.0, &c.matvec(p), &mut r2);
        }
        for (k, gv) in self.gauges.iter().enumerate() {
            sparse::axpy(lambda[k], gv, &mut r2);
        }
        let rp = self.pact.iter().map(|&q| (r2[q] - g[q]).abs()).fold(0.0, f64::max);
        (rv, rp)
    }
}

/// Gauge functionals for a gauge kind on the given pressure DOFs.
pub fn gauge_vectors(space: &MixedSpace, forms: &AssembledForms, gauge: Gauge, active: &[bool]) -> Vec<Vec<f64>> {
    match gauge {
        Gauge::None => Vec::new(),
        Gauge::Total => {
            let ones: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            let mut w = forms.pmass.matvec(&ones);
            w.iter_mut().zip(active).for_each(|(v, &a)| if !a { *v = 0.0 });
            vec![w]
        }
        Gauge::Collar => vec![cell_mean_weights(space, &space.collar_cells())],
    }
}

/// The composite-domain system of `space` (velocity constrained per space
/// options, all pressures active, gauge per options).
pub fn composite_system(space: &MixedSpace, forms: &AssembledForms) -> Result<SaddleSystem, SaddleError> {
    let pact = vec![true; space.n_pres];
    let gauges = gauge_vectors(space, forms, space.opts.gauge, &pact);
    SaddleSystem::new(&forms.a, &forms.b, &space.free_mask(), &pact, gauges)
}

/// A single-region system with Dirichlet data on the interface (and on the
/// constrained outer boundary for the outer region).
pub fn region_system(space: &MixedSpace, forms: &AssembledForms, region: Region, gauge: Gauge) -> Result<SaddleSystem, SaddleError> {
    let rv = space.region_vel_mask(region);
    let iface = space.interface_vel_mask();
    let free: Vec<bool> = (0..space.n_vel()).map(|d| rv[d] && !iface[d] && !space.constrained[d]).collect();
    let pact = space.region_pres_mask(region);
    let rf = forms.region(region);
    let gauges = match gauge {
        Gauge::Total => {
            let ones: Vec<f64> = pact.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
            vec![rf.pmass.matvec(&ones)]
        }
        Gauge::Collar => {
            let cells: Vec<usize> = space.collar_cells().into_iter().filter(|&c| space.mesh.regions[c] == region).collect();
            vec![cell_mean_weights(space, &cells)]
        }
        Gauge::None => Vec::new(),
    };
    SaddleSystem::new(&rf.a, &rf.b, &free, &pact, gauges)
}

/// Whether the pressure space of `space` contains constants in the kernel of `B^T`.
pub fn has_constant_kernel(space: &MixedSpace) -> bool {
    space.opts.constraint == Constraint::Full
}

/// Lowest eigenpairs of the pencil `(S, M)` from a subspace iteration.
struct Pencil<'a> {
    /// Applies `(S + shift M)^{-1} M` (restricted to the relevant subspace).
    inv: &'a dyn Fn(&[f64]) -> Vec<f64>,
    s: &'a dyn Fn(&[f64]) -> Vec<f64>,
    m: &'a dyn Fn(&[f64]) -> Vec<f64>,
    project: &'a dyn Fn(&mut Vec<f64>),
}

/// Ritz values and coefficient vectors of `(S, M)` on the span of `y`, given
/// the images `sy = S y` and `my = M y`.
fn rayleigh_ritz(y: &[Vec<f64>], sy: &[Vec<f64>], my: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let k = y.len();
    let mut hs = DMatrix::zeros(k, k);
    let mut hm = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            hs[(i, j)] = sparse::dot(&y[i], &sy[j]);
            hm[(i, j)] = sparse::dot(&y[i], &my[j]);
        }
    }
    let hs = (&hs + hs.transpose()) * 0.5;
    let hm = (&hm + hm.transpose()) * 0.5;
    // Orthonormalize against M through its eigendecomposition (robust to near-dependence).
    let em = SymmetricEigen::new(hm);
    let top = em.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let keep: Vec<usize> = (0..k).filter(|&i| em.eigenvalues[i] > 1e-12 * top).collect();
    let mut w = DMatrix::zeros(k, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let s = 1.0 / em.eigenvalues[i].sqrt();
        for r in 0..k {
            w[(r, c)] = em.eigenvectors[(r, i)] * s;
        }
    }
    let red = w.transpose() * hs * &w;
    let es = SymmetricEigen::new((&red + red.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&a, &b| es.eigenvalues[a].partial_cmp(&es.eigenvalues[b]).unwrap());
    let coeffs = &w * &es.eigenvectors;
    let vals = order.iter().map(|&i| es.eigenvalues[i]).collect();
    let sorted = DMatrix::from_fn(k, order.len(), |r, c| coeffs[(r, order[c])]);
    (vals, sorted)
}

/// Lowest eigenpairs of the pencil by a block Krylov method on `inv` with
/// thick restarts: the basis grows by `inv` applied to the newest block,
/// Rayleigh–Ritz runs on the whole basis, and after `max_dim` vectors the
/// basis collapses to the lowest `block` Ritz vectors. Stops when the
/// relative residual of the lowest Ritz pair falls below `1e-10`.
fn subspace_iteration(p: &Pencil, n: usize, block: usize, restarts: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let max_dim = (block * 12).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut sb: Vec<Vec<f64>> = Vec::new();
    let mut mb: Vec<Vec<f64>> = Vec::new();
    let mut frontier: Vec<Vec<f64>> = (0..block)
        .map(|_| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            (p.project)(&mut v);
            v
        })
        .collect();
    let mut out = (Vec::new(), Vec::new());
    for _ in 0..restarts.max(1) {
        loop {
            let mut added = Vec::new();
            for mut w in frontier.drain(..) {
                // Two passes of M-orthogonalization against the basis.
                for _ in 0..2 {
                    for (b, mbv) in basis.iter().zip(&mb) {
                        let c = sparse::dot(mbv, &w) / sparse::dot(b, mbv);
                        sparse::axpy(-c, b, &mut w);
                    }
                    (p.project)(&mut w);
                }
                let mw = (p.m)(&w);
                let nrm = sparse::dot(&w, &mw).max(0.0).sqrt();
                let scale = basis.first().map_or(nrm, |b: &Vec<f64>| sparse::dot(b, &mb[0]).sqrt());
                if !(nrm > 1e-10 * scale.max(1e-300)) {
                    continue;
                }
                w.iter_mut().for_each(|x| *x /= nrm);
                sb.push((p.s)(&w));
                mb.push((p.m)(&w));
                basis.push(w.clone());
                added.push(w);
            }
            let (vals, c) = rayleigh_ritz(&basis, &sb, &mb);
            let ritz = |col: usize, src: &[Vec<f64>]| -> Vec<f64> {
                let mut v = vec![0.0; n];
                for (r, b) in src.iter().enumerate() {
                    sparse::axpy(c[(r, col)], b, &mut v);
                }
                v
            };
            let (sy0, my0) = (ritz(0, &sb), ritz(0, &mb));
            let mut r = sy0.clone();
            sparse::axpy(-vals[0], &my0, &mut r);
            let res = sparse::norm(&r) / (sparse::norm(&sy0).max(vals[0].abs() * sparse::norm(&my0))).max(1e-300);
            let k = block.min(vals.len());
            out = (vals[..k].to_vec(), (0..k).map(|j| ritz(j, &basis)).collect());
            if res <= 1e-10 || added.is_empty() || basis.len() >= n {
                return out;
            }
            if basis.len() + added.len() > max_dim {
                // Thick restart on the lowest Ritz vectors.
                let nb: Vec<Vec<f64>> = (0..k).map(|j| ritz(j, &basis)).collect();
                let ns: Vec<Vec<f64>> = (0..k).map(|j| ritz(j, &sb)).collect();
                let nm: Vec<Vec<f64>> = (0..k).map(|j| ritz(j, &mb)).collect();
                frontier = added
                    .iter()
                    .map(|v| {
                        let mut z = (p.inv)(v);
                        (p.project)(&mut z);
                        z
                    })
                    .collect();
                basis = nb;
                sb = ns;
                mb = nm;
                break;
            }
            frontier = added
                .iter()
                .map(|v| {
                    let mut z = (p.inv)(v);
                    (p.project)(&mut z);
                    z
                })
                .collect();
        }
    }
    out
}

/// Velocity norm matrix restricted to free DOFs, with its factorization.
pub struct VelocityNorm {
    pub free: Vec<usize>,
    map: Vec<Option<usize>>,
    pub x: Csr,
    lu: SparseLu,
}

impl VelocityNorm {
    /// Gradient seminorm on the free DOFs of `space`.
    pub fn new(space: &MixedSpace, forms: &AssembledForms) -> Result<Self, SaddleError> {
        let (free, map) = local_map(&space.free_mask());
        let x = forms.grad.select(&map, free.len(), &map, free.len());
        let lu = SparseLu::new(&x).map_err(|e| SaddleError::Singular(e.to_string()))?;
        Ok(VelocityNorm { free, map, x, lu })
    }

    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| v[i]).collect()
    }

    fn extend(&self, v: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, &i) in self.free.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    /// Riesz representative `X^{-1} f` of a functional (constrained rows ignored).
    pub fn riesz(&self, f: &[f64]) -> Vec<f64> {
        self.extend(&self.lu.solve(&self.restrict(f)), f.len())
    }

    /// Dual norm `sqrt(f^T X^{-1} f)` over the free DOFs.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        let fr = self.restrict(f);
        sparse::dot(&fr, &self.lu.solve(&fr)).max(0.0).sqrt()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        let ur = self.restrict(u);
        self.x.form(&ur, &ur).max(0.0).sqrt()
    }

    pub fn local_of(&self, d: usize) -> Option<usize> {
        self.map[d]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InfSupReport {
    pub beta: f64,
    /// Lowest Ritz values `beta^2` found.
    pub eigenvalues: Vec<f64>,
    pub quotient: bool,
    pub n_pressure: usize,
}

/// Discrete inf-sup constant `beta_h = sqrt(lambda_min(B X^{-1} B^T, M_p))`.
///
/// With `quotient` the minimum is taken over pressures `M`-orthogonal to
/// constants (the space `L2 / R`); otherwise constants stay in the space.
pub fn infsup_estimate(space: &MixedSpace, forms: &AssembledForms, quotient: bool) -> Result<InfSupReport, SaddleError> {
    let np = space.n_pres;
    let xn = VelocityNorm::new(space, forms)?;
    let pact = vec![true; np];
    let ones = vec![1.0; np];
    let m1 = forms.pmass.matvec(&ones);
    let m_total: f64 = m1.iter().sum();
    let eps = if quotient { 0.0 } else { 1e-6 };
    let sys = if quotient {
        SaddleSystem::new(&forms.grad, &forms.b, &space.free_mask(), &pact, vec![m1.clone()])?
    } else {
        SaddleSystem::with_pressure_block(&forms.grad, &forms.b, &space.free_mask(), &pact, Vec::new(), Some(forms.pmass.scale(-eps)))?
    };
    let zero_v = vec![0.0; space.n_vel()];
    let inv = |x: &[f64]| -> Vec<f64> {
        let mx = forms.pmass.matvec(x);
        match sys.solve(&zero_v, &mx, None, false) {
            Ok(s) => sparse::scaled(-1.0, &s.p),
            Err(_) => vec![f64::NAN; np],
        }
    };
    let s_apply = |y: &[f64]| -> Vec<f64> {
        let bty = forms.b.matvec_transpose(y);
        let w = xn.riesz(&bty);
        forms.b.matvec(&w)
    };
    let m_apply = |y: &[f64]| forms.pmass.matvec(y);
    let project = |v: &mut Vec<f64>| {
        if quotient {
            let c = sparse::dot(&m1, v) / m_total;
            v.iter_mut().for_each(|x| *x -= c);
        }
    };
    let pencil = Pencil { inv: &inv, s: &s_apply, m: &m_apply, project: &project };
    let (vals, _) = subspace_iteration(&pencil, np, 4.min(np), 50, 17);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::Singular("inf-sup iteration produced non-finite values".into()));
    }
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vals[0] < -1e-10 * top.max(1.0) {
        return Err(SaddleError::NegativeEigenvalue(vals[0]));
    }
    Ok(InfSupReport { beta: vals[0].max(0.0).sqrt(), eigenvalues: vals, quotient, n_pressure: np })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub alpha: f64,
    pub eigenvalues: Vec<f64>,
}

/// Smallest Rayleigh quotient of the symmetric part of `A` against the
/// gradient seminorm over discretely divergence-free fields.
pub fn coercivity_on_kernel(space: &MixedSpace, forms: &AssembledForms) -> Result<CoercivityReport, SaddleError> {
    let a_s = forms.a.add(&forms.a.transpose()).scale(0.5);
    let pact = vec![true; space.n_pres];
    let gauges = if has_constant_kernel(space) { gauge_vectors(space, forms, Gauge::Total, &pact) } else { Vec::new() };
    let sys = SaddleSystem::new(&a_s, &forms.b, &space.free_mask(), &pact, gauges)?;
    let zero_p = vec![0.0; space.n_pres];
    let n = space.n_vel();
    let inv = |x: &[f64]| -> Vec<f64> {
        let xx = forms.grad.matvec(x);
        match sys.solve(&xx, &zero_p, Some(&vec![0.0; n]), false) {
            Ok(s) => s.u,
            Err(_) => vec![f64::NAN; n],
        }
    };
    let s_apply = |y: &[f64]| a_s.matvec(y);
    let m_apply = |y: &[f64]| forms.grad.matvec(y);
    let constrained = space.constrained.clone();
    let project = |v: &mut Vec<f64>| {
        for (x, &c) in v.iter_mut().zip(&constrained) {
            if c {
                *x = 0.0;
            }
        }
    };
    let pencil = Pencil { inv: &inv, s: &s_apply, m: &m_apply, project: &project };
    let (vals, _) = subspace_iteration(&pencil, n, 4, 50, 23);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(SaddleError::Singular("coercivity iteration produced non-finite values".into()));
    }
    Ok(CoercivityReport { alpha: vals[0], eigenvalues: vals })
}

/// `||a|| = sup a(u,v) / (|u|_X |v|_X)` by power iteration on `X^{-1} A^T X^{-1} A`.
pub fn form_norm(space: &MixedSpace, forms: &AssembledForms, iters: usize) -> Result<f64, SaddleError> {
    let xn = VelocityNorm::new(space, forms)?;
    let n = space.n_vel();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut v: Vec<f64> = (0..n).map(|k| if space.constrained[k] { 0.0 } else { rng.random::<f64>() - 0.5 }).collect();
    let mut est = 0.0;
    for _ in 0..iters {
        let nv = xn.norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let w = xn.riesz(&forms.a.matvec(&v));
        let z = xn.riesz(&forms.a.matvec_transpose(&w));
        let new = sparse::dot(&z, &forms.grad.matvec(&v)).max(0.0).sqrt();
        v = z;
        if (new - est).abs() <= 1e-10 * new {
            est = new;
            break;
        }
        est = new;
    }
    Ok(est)
}

#[derive(Clone, Debug, Serialize)]
pub struct BrezziConstants {
    pub alpha: f64,
    pub beta: f64,
    pub a_norm: f64,
}

impl BrezziConstants {
    pub fn estimate(space: &MixedSpace, forms: &AssembledForms) -> Result<Self, SaddleError> {
        let q = has_constant_kernel(space);
        Ok(BrezziConstants {
            alpha: coercivity_on_kernel(space, forms)?.alpha,
            beta: infsup_estimate(space, forms, q)?.beta,
            a_norm: form_norm(space, forms, 200)?,
        })
    }

    pub fn c_a(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn c_b(&self) -> f64 {
        1.0 / self.beta
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BrezziCheck {
    pub u_norm: f64,
    pub u_bound: f64,
    pub p_norm: f64,
    pub p_bound: f64,
    pub pass: bool,
}

/// Checks `|u|_X <= C_a |f| + C_b (1 + |a| C_a) |g|` and
/// `|p| <= C_b (1 + |a| C_a) |f| + |a| C_b^2 (1 + |a| C_a) |g|`
/// for a solution of `A u + B^T p = f`, `B u = g` (pressure norm modulo
/// constants when constants are in the kernel).
pub fn brezzi_bound_check(
    space: &MixedSpace,
    forms: &AssembledForms,
    k: &BrezziConstants,
    f: &[f64],
    g: &[f64],
    sol: &SaddleSolution,
) -> Result<BrezziCheck, SaddleError> {
    let xn = VelocityNorm::new(space, forms)?;
    let f_norm = xn.dual_norm(f);
    let pm_lu = SparseLu::new(&forms.pmass).map_err(|e| SaddleError::Singular(e.to_string()))?;
    let g_norm = sparse::dot(g, &pm_lu.solve(g)).max(0.0).sqrt();
    let mut p = sol.p.clone();
    if has_constant_kernel(space) {
        let ones = vec![1.0; space.n_pres];
        let m1 = forms.pmass.matvec(&ones);
        let c = sparse::dot(&m1, &p) / m1.iter().sum::<f64>();
        p.iter_mut().for_each(|x| *x -= c);
    }
    let u_norm = xn.norm(&sol.u);
    let p_norm = forms.pmass.form(&p, &p).max(0.0).sqrt();
    let (ca, cb, an) = (k.c_a(), k.c_b(), k.a_norm);
    let u_bound = ca * f_norm + cb * (1.0 + an * ca) * g_norm;
    let p_bound = cb * (1.0 + an * ca) * f_norm + an * cb * cb * (1.0 + an * ca) * g_norm;
    let slack = 1e-10 * (1.0 + u_bound.max(p_bound));
    Ok(BrezziCheck { u_norm, u_bound, p_norm, p_bound, pass: u_norm <= u_bound + slack && p_norm <= p_bound + slack })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, PressureMode, SpaceOptions};
    use crate::mesh::{build_composite, MeshSpec};
    use crate::tensor::{make_isotropic, CoeffTensor, Entries, SamplePoint, ScalarField};
    use std::sync::Arc;

    fn iso(mu: f64) -> CoeffTensor {
        make_isotropic(2, ScalarField::Constant(mu), ScalarField::Constant(0.0), &[SamplePoint::new(&[0.0, 0.0], Region::Inner)]).unwrap()
    }

    fn setup(h: f64, opts: SpaceOptions, t: &CoeffTensor) -> (MixedSpace, AssembledForms) {
        let mesh = Arc::new(build_composite(&MeshSpec::new(2, 1.5, h)).unwrap());
        let sp = MixedSpace::new(mesh, opts).unwrap();
        let f = assemble(t, &sp).unwrap();
        (sp, f)
    }

    /// Dense oracle: generalized eigenvalues of (B X^{-1} B^T, M_p), ascending.
    fn dense_schur_eigs(sp: &MixedSpace, f: &AssembledForms) -> Vec<f64> {
        let xn = VelocityNorm::new(sp, f).unwrap();
        let x = xn.x.to_dense();
        let (_, map) = local_map(&sp.free_mask());
        let rows: Vec<Option<usize>> = (0..sp.n_pres).map(Some).collect();
        let b = f.b.select(&rows, sp.n_pres, &map, xn.free.len()).to_dense();
        let s = &b * x.clone().try_inverse().unwrap() * b.transpose();
        let m = f.pmass.to_dense();
        let l = m.clone().cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let c = &li * s * li.transpose();
        let mut e: Vec<f64> = SymmetricEigen::new((&c + c.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let (sp, f) = setup(0.5, SpaceOptions::default(), &iso(1.0));
        let sys = composite_system(&sp, &f).unwrap();
        let s = sys.solve(&vec![0.0; sp.n_vel()], &vec![0.0; sp.n_pres], None, false).unwrap();
        assert_eq!(sparse::max_abs(&s.u), 0.0);
        assert_eq!(sparse::max_abs(&s.p), 0.0);
    }

    #[test]
    fn solution_is_linear() {
        let (sp, f) = setup(0.5, SpaceOptions::default(), &iso(1.0));
        let sys = composite_system(&sp, &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fv: Vec<f64> = (0..sp.n_vel()).map(|_| rng.random::<f64>()).collect();
        let mut gv: Vec<f64> = (0..sp.n_pres).map(|_| rng.random::<f64>()).collect();
        let mean = gv.iter().sum::<f64>() / gv.len() as f64;
        gv.iter_mut().for_each(|x| *x -= mean);
        let s1 = sys.solve(&fv, &gv, None, false).unwrap();
        let s2 = sys.solve(&sparse::scaled(2.0, &fv), &sparse::scaled(2.0, &gv), None, false).unwrap();
        assert!(sparse::max_abs(&sparse::sub(&sparse::scaled(0.5, &s2.u), &s1.u)) < 1e-10 * sparse::max_abs(&s1.u));
        assert!(s1.multipliers[0].abs() < 1e-10);
    }

    #[test]
    fn infsup_matches_dense_oracle() {
        let (sp, f) = setup(0.5, SpaceOptions::default(), &iso(1.0));
        let rep = infsup_estimate(&sp, &f, true).unwrap();
        let e = dense_schur_eigs(&sp, &f);
        assert!(e[0].abs() < 1e-10, "constants in kernel: {}", e[0]);
        assert!((rep.beta - e[1].sqrt()).abs() < 1e-8, "{} vs {}", rep.beta, e[1].sqrt());
        let un = infsup_estimate(&sp, &f, false).unwrap();
        // Square root of a round-off eigenvalue.
        assert!(un.beta < 1e-6, "{}", un.beta);
    }

    #[test]
    fn sampled_ratios_bound_beta_from_above() {
        let (sp, f) = setup(0.5, SpaceOptions::default(), &iso(1.0));
        let rep = infsup_estimate(&sp, &f, true).unwrap();
        let xn = VelocityNorm::new(&sp, &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m1 = f.pmass.matvec(&vec![1.0; sp.n_pres]);
        for _ in 0..200 {
            let mut q: Vec<f64> = (0..sp.n_pres).map(|_| rng.random::<f64>() - 0.5).collect();
            let c = sparse::dot(&m1, &q) / m1.iter().sum::<f64>();
            q.iter_mut().for_each(|x| *x -= c);
            let ratio = xn.dual_norm(&f.b.matvec_transpose(&q)) / f.pmass.form(&q, &q).sqrt();
            assert!(ratio >= rep.beta * (1.0 - 1e-8));
        }
    }

    #[test]
    fn coercivity_isotropic_and_scaling() {
        let (sp, f) = setup(0.5, SpaceOptions::default(), &iso(1.0));
        let a1 = coercivity_on_kernel(&sp, &f).unwrap().alpha;
        assert!(a1 >= 0.5 - 1e-8, "{a1}");
        let (sp10, f10) = setup(0.5, SpaceOptions::default(), &iso(10.0));
        let a10 = coercivity_on_kernel(&sp10, &f10).unwrap().alpha;
        assert!((a10 / a1 - 10.0).abs() < 1e-6);
    }

    #[test]
    fn brezzi_bounds_hold_for_random_data() {
        let mut e = Entries::isotropic(2, 1.0, 0.5);
        e.add_symmetric(0, 0, 0, 1, 0.2);
        let t = CoeffTensor::constant(e, "aniso");
        let (sp, f) = setup(0.5, SpaceOptions::default(), &t);
        let k = BrezziConstants::estimate(&sp, &f).unwrap();
        let sys = composite_system(&sp, &f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let fv: Vec<f64> = (0..sp.n_vel()).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut gv: Vec<f64> = (0..sp.n_pres).map(|_| rng.random::<f64>() - 0.5).collect();
            let m = gv.iter().sum::<f64>() / gv.len() as f64;
            gv.iter_mut().for_each(|x| *x -= m);
            let s = sys.solve(&fv, &gv, None, false).unwrap();
            let c = brezzi_bound_check(&sp, &f, &k, &fv, &gv, &s).unwrap();
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn broken_mode_infsup_positive() {
        let opts = SpaceOptions { pressure: PressureMode::Broken, ..Default::default() };
        let (sp, f) = setup(0.5, opts, &iso(1.0));
        let rep = infsup_estimate(&sp, &f, true).unwrap();
        let e = dense_schur_eigs(&sp, &f);
        assert!((rep.beta - e[1].sqrt()).abs() < 1e-8);
        assert!(rep.beta > 0.0);
    }
}
