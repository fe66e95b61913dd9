//! Trace liftings and generalized conormal derivatives on the interface.

use super::{AssembledForms, FemError, MixedSpace, TwoSided};
use crate::mesh::Region;
use crate::sparse::{self, Csr, SparseLu};

/// Right inverse of the trace used to test conormal derivatives.
pub enum Lifting {
    /// Interface nodal values, zero elsewhere: support is one cell layer.
    Nodal,
    /// Discrete harmonic extension into one side (zero on the outer boundary).
    Harmonic(Box<HarmonicLifting>),
}

impl std::fmt::Debug for Lifting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Lifting::Nodal => write!(f, "Nodal"),
            Lifting::Harmonic(h) => write!(f, "Harmonic({:?})", h.side),
        }
    }
}

pub struct HarmonicLifting {
    pub side: Region,
    interior: Vec<usize>,
    lu: SparseLu,
    /// Interior rows x trace columns of the side gradient matrix.
    x_it: Csr,
}

impl HarmonicLifting {
    pub fn new(space: &MixedSpace, forms: &AssembledForms, side: Region) -> Result<Self, FemError> {
        let region = space.region_vel_mask(side);
        let iface = space.interface_vel_mask();
        let mut local = vec![None; space.n_vel()];
        let mut interior = Vec::new();
        for d in 0..space.n_vel() {
            if region[d] && !iface[d] && space.outer_node_tag[d / space.dim].is_none() {
                local[d] = Some(interior.len());
                interior.push(d);
            }
        }
        let mut tcol = vec![None; space.n_vel()];
        for k in 0..space.n_trace() {
            tcol[space.trace_to_vel(k)] = Some(k);
        }
        let g = &forms.region(side).grad;
        let x_ii = g.select(&local, interior.len(), &local, interior.len());
        let x_it = g.select(&local, interior.len(), &tcol, space.n_trace());
        Ok(HarmonicLifting { side, interior, lu: SparseLu::new(&x_ii)?, x_it })
    }

    pub fn lift(&self, space: &MixedSpace, phi: &[f64]) -> Vec<f64> {
        let rhs = sparse::scaled(-1.0, &self.x_it.matvec(phi));
        let xi = self.lu.solve(&rhs);
        let mut u = space.nodal_lifting(phi);
        for (k, &d) in self.interior.iter().enumerate() {
            u[d] = xi[k];
        }
        u
    }

    /// `L^T r = r_G - X_GI X_II^{-1} r_I`.
    pub fn transpose(&self, space: &MixedSpace, r: &[f64]) -> Vec<f64> {
        let ri: Vec<f64> = self.interior.iter().map(|&d| r[d]).collect();
        let y = self.lu.solve(&ri);
        sparse::sub(&space.restrict_to_trace(r), &self.x_it.matvec_transpose(&y))
    }
}

impl Lifting {
    pub fn lift(&self, space: &MixedSpace, phi: &[f64]) -> Vec<f64> {
        match self {
            Lifting::Nodal => space.nodal_lifting(phi),
            Lifting::Harmonic(h) => h.lift(space, phi),
        }
    }

    pub fn transpose(&self, space: &MixedSpace, r: &[f64]) -> Vec<f64> {
        match self {
            Lifting::Nodal => space.restrict_to_trace(r),
            Lifting::Harmonic(h) => h.transpose(space, r),
        }
    }
}

/// Residual functional `v -> a_side(u, v) - (p, div v)_side + <load, v>`;
/// with `adjoint` the velocity block is transposed (adjoint tensor).
pub fn side_residual(forms: &AssembledForms, side: Region, u: &[f64], p: &[f64], load: &[f64], adjoint: bool) -> Vec<f64> {
    let rf = forms.region(side);
    let mut r = if adjoint { rf.a.matvec_transpose(u) } else { rf.a.matvec(u) };
    sparse::axpy(1.0, &rf.b.matvec_transpose(p), &mut r);
    sparse::axpy(1.0, load, &mut r);
    r
}

/// Generalized conormal derivative `t^+` (inner side) or `t^-` (outer side)
/// as a trace density, for a load supported on that side.
pub fn conormal(
    space: &MixedSpace,
    forms: &AssembledForms,
    side: Region,
    u: &[f64],
    p: &[f64],
    load: &[f64],
    lifting: &Lifting,
    adjoint: bool,
) -> Vec<f64> {
    let r = side_residual(forms, side, u, p, load, adjoint);
    let t = lifting.transpose(space, &r);
    match side {
        Region::Inner => t,
        Region::Outer => sparse::scaled(-1.0, &t),
    }
}

/// Both one-sided conormal derivatives of a two-sided state.
pub fn conormals(
    space: &MixedSpace,
    forms: &AssembledForms,
    w: &TwoSided,
    load_inner: &[f64],
    load_outer: &[f64],
    adjoint: bool,
) -> (Vec<f64>, Vec<f64>) {
    let tp = conormal(space, forms, Region::Inner, &w.inner, &w.pressure, load_inner, &Lifting::Nodal, adjoint);
    let tm = conormal(space, forms, Region::Outer, &w.outer, &w.pressure, load_outer, &Lifting::Nodal, adjoint);
    (tp, tm)
}

/// Conormal jump `t^+ - t^-`.
pub fn conormal_jump(
    space: &MixedSpace,
    forms: &AssembledForms,
    w: &TwoSided,
    load_inner: &[f64],
    load_outer: &[f64],
    adjoint: bool,
) -> Vec<f64> {
    let (tp, tm) = conormals(space, forms, w, load_inner, load_outer, adjoint);
    sparse::sub(&tp, &tm)
}

/// Surrogate `H^{1/2}` / `H^{-1/2}` norms on the interface from `T = M + K`
/// (trace mass plus Laplace–Beltrami stiffness).
pub struct TraceNorms {
    t: Csr,
    lu: SparseLu,
    mass_lu: SparseLu,
}

impl TraceNorms {
    pub fn new(forms: &AssembledForms) -> Result<Self, FemError> {
        let t = forms.interface.mass.add(&forms.interface.stiffness);
        let lu = SparseLu::new(&t)?;
        let mass_lu = SparseLu::new(&forms.interface.mass)?;
        Ok(TraceNorms { t, lu, mass_lu })
    }

    pub fn half(&self, phi: &[f64]) -> f64 {
        self.t.form(phi, phi).max(0.0).sqrt()
    }

    pub fn minus_half(&self, psi: &[f64]) -> f64 {
        sparse::dot(psi, &self.lu.solve(psi)).max(0.0).sqrt()
    }

    /// Trace field representing a density in `L2(interface)`: `M^{-1} psi`.
    pub fn riesz_l2(&self, psi: &[f64]) -> Vec<f64> {
        self.mass_lu.solve(psi)
    }
}
