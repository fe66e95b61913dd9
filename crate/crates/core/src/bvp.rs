//! Linear boundary-value problems: transmission, Dirichlet, Neumann and
//! mixed problems, each with a direct variational path and, where
//! available, a path through the potentials.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::fem::assemble::{interface_density, interface_density_on};
use crate::fem::interface::{conormal, HarmonicLifting, Lifting};
use crate::fem::norms::h1_norm_on_cells;
use crate::fem::{AssembledForms, Gauge, MixedSpace, PressureMode, TwoSided};
use crate::mesh::{build_composite, BoundaryTag, MeshSpec, Region};
use crate::potentials::{PotentialContext, PotentialError};
use crate::saddle::{region_system, SaddleError, SaddleSystem};
use crate::sparse;
use crate::tensor::CoeffTensor;

#[derive(Debug, thiserror::Error)]
pub enum BvpError {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Fem(#[from] crate::fem::FemError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error("incompatible data: divergence total {total:e} differs from the boundary flux {flux:e}")]
    Incompatible { total: f64, flux: f64 },
    #[error("mixed problem needs a Dirichlet part of positive measure")]
    EmptyDirichlet,
    #[error("{0}")]
    Invalid(String),
}

/// Relative compatibility tolerance for divergence data.
const COMPAT_TOL: f64 = 1e-10;

fn check_compat(total: f64, flux: f64, scale: f64) -> Result<(), BvpError> {
    if (total - flux).abs() > COMPAT_TOL * scale.max(1e-300) {
        return Err(BvpError::Incompatible { total, flux });
    }
    Ok(())
}

/// Data of the two-sided problem: loads on each side, divergence datum,
/// trace jump `phi` and conormal jump `psi`.
#[derive(Clone, Debug)]
pub struct TransmissionData {
    pub load_inner: Vec<f64>,
    pub load_outer: Vec<f64>,
    pub g: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl TransmissionData {
    pub fn zeros(space: &MixedSpace) -> Self {
        TransmissionData {
            load_inner: vec![0.0; space.n_vel()],
            load_outer: vec![0.0; space.n_vel()],
            g: vec![0.0; space.n_pres],
            phi: vec![0.0; space.n_trace()],
            psi: vec![0.0; space.n_trace()],
        }
    }

    /// Net flux that the divergence datum must carry: `<phi, nu>`.
    pub fn required_total(&self, forms: &AssembledForms) -> f64 {
        sparse::dot(&forms.interface.nu, &self.phi)
    }

    /// Shifts `g` by a multiple of the pressure-mass row sums so that the
    /// compatibility condition holds.
    pub fn make_compatible(&mut self, space: &MixedSpace, forms: &AssembledForms) {
        let w = forms.pmass.matvec(&vec![1.0; space.n_pres]);
        let wt: f64 = w.iter().sum();
        let c = (self.required_total(forms) - self.g.iter().sum::<f64>()) / wt;
        sparse::axpy(c, &w, &mut self.g);
    }

    fn check(&self, forms: &AssembledForms) -> Result<(), BvpError> {
        let scale = self.g.iter().map(|v| v.abs()).sum::<f64>() + sparse::norm(&forms.interface.nu) * sparse::norm(&self.phi);
        check_compat(self.g.iter().sum(), self.required_total(forms), scale)
    }
}

/// Direct path: `u = d + l` with `l = (0, -H phi)` the harmonic extension of
/// the trace jump into the outer region and `d` continuous.
pub fn solve_transmission_direct(ctx: &PotentialContext, data: &TransmissionData) -> Result<TwoSided, BvpError> {
    let (sp, forms) = (&ctx.space, &ctx.forms);
    data.check(forms)?;
    let h = HarmonicLifting::new(sp, forms, Region::Outer)?;
    let l_out = sparse::scaled(-1.0, &h.lift(sp, &data.phi));
    let mut rhs_v = sparse::scaled(-1.0, &sparse::add(&data.load_inner, &data.load_outer));
    sparse::axpy(1.0, &sp.nodal_lifting(&data.psi), &mut rhs_v);
    sparse::axpy(-1.0, &forms.outer.a.matvec(&l_out), &mut rhs_v);
    let mut rhs_p = sparse::scaled(-1.0, &data.g);
    sparse::axpy(-1.0, &forms.outer.b.matvec(&l_out), &mut rhs_p);
    let s = ctx.system().solve(&rhs_v, &rhs_p, None, false)?;
    Ok(TwoSided { inner: s.u.clone(), outer: sparse::add(&s.u, &l_out), pressure: s.p })
}

/// Potential path: `-W phi + V psi + N f + G g`.
pub fn solve_transmission_potentials(ctx: &PotentialContext, data: &TransmissionData) -> Result<TwoSided, BvpError> {
    data.check(&ctx.forms)?;
    let f = sparse::add(&data.load_inner, &data.load_outer);
    Ok(ctx.represent(&data.phi, &data.psi, &f, &data.g)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirichletDomain {
    /// Truncated exterior region with homogeneous outer Dirichlet data.
    Exterior,
    /// Bounded inner region.
    Interior,
}

impl DirichletDomain {
    pub fn region(self) -> Region {
        match self {
            DirichletDomain::Exterior => Region::Outer,
            DirichletDomain::Interior => Region::Inner,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DirichletData {
    /// Velocity functional supported on the region.
    pub load: Vec<f64>,
    /// Pressure functional supported on the region.
    pub g: Vec<f64>,
    /// Interface trace datum.
    pub phi: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftingChoice {
    Nodal,
    Harmonic,
}

#[derive(Clone, Debug, Serialize)]
pub struct DirichletSolution {
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub p: Vec<f64>,
    pub multiplier: f64,
    /// `(|u|_H1 + |p|_L2) / (|f|_* + |g|_* + |phi|_1/2)`: the measured stability ratio.
    pub stability_ratio: f64,
}

/// Solves the Dirichlet problem on one region through the reduction
/// `u = d + lifting(phi)` with a selectable right inverse of the trace.
pub fn solve_dirichlet(
    space: &MixedSpace,
    forms: &AssembledForms,
    domain: DirichletDomain,
    data: &DirichletData,
    lifting: LiftingChoice,
) -> Result<DirichletSolution, BvpError> {
    let region = domain.region();
    let gauge = match domain {
        DirichletDomain::Exterior => Gauge::Collar,
        DirichletDomain::Interior => Gauge::Total,
    };
    let sys = region_system(space, forms, region, gauge)?;
    let rf = forms.region(region);
    let flux = sparse::dot(&forms.interface.nu, &data.phi);
    let flux = if region == Region::Inner { flux } else { -flux };
    let total: f64 = data.g.iter().sum();
    check_compat(total, flux, data.g.iter().map(|v| v.abs()).sum::<f64>() + sparse::norm(&forms.interface.nu) * sparse::norm(&data.phi))?;
    let l = match lifting {
        LiftingChoice::Nodal => space.nodal_lifting(&data.phi),
        LiftingChoice::Harmonic => HarmonicLifting::new(space, forms, region)?.lift(space, &data.phi),
    };
    let mut rhs_v = sparse::scaled(-1.0, &data.load);
    sparse::axpy(-1.0, &rf.a.matvec(&l), &mut rhs_v);
    let mut rhs_p = sparse::scaled(-1.0, &data.g);
    sparse::axpy(-1.0, &rf.b.matvec(&l), &mut rhs_p);
    let s = sys.solve(&rhs_v, &rhs_p, None, false)?;
    let u = sparse::add(&s.u, &l);
    let norms = crate::fem::interface::TraceNorms::new(forms)?;
    let un = (rf.grad.form(&u, &u) + rf.mass.form(&u, &u)).max(0.0).sqrt();
    let pn = rf.pmass.form(&s.p, &s.p).max(0.0).sqrt();
    let dn = sparse::norm(&data.load) + sparse::norm(&data.g) + norms.half(&data.phi);
    let stability_ratio = if dn > 0.0 { (un + pn) / dn } else { 0.0 };
    Ok(DirichletSolution { u, p: s.p, multiplier: s.multipliers.first().copied().unwrap_or(0.0), stability_ratio })
}

/// Exterior Dirichlet problem through `N f + G g + V S^{-1}(phi - gamma N f - gamma G g)`
/// with the loads extended by zero; exact agreement with the direct path
/// requires the broken pressure mode.
pub fn solve_dirichlet_by_potentials(ctx: &PotentialContext, data: &DirichletData) -> Result<TwoSided, BvpError> {
    let phi = ctx.admit_normal_orthogonal(&data.phi)?;
    let n = ctx.newtonian(&data.load)?;
    let g = ctx.compressibility(&data.g)?;
    let mut rest = phi;
    sparse::axpy(-1.0, &ctx.space.trace(&n.state.inner), &mut rest);
    sparse::axpy(-1.0, &ctx.space.trace(&g.state.inner), &mut rest);
    let (psi, _) = ctx.invert_sl(&rest)?;
    let mut u = ctx.single_layer(&psi)?.state;
    u.axpy(1.0, &n.state);
    u.axpy(1.0, &g.state);
    Ok(u)
}

#[derive(Clone, Debug, Serialize)]
pub struct NeumannSolution {
    #[serde(skip)]
    pub state: TwoSided,
    #[serde(skip)]
    pub phi: Vec<f64>,
    /// `|t^-(u) - psi|_{-1/2} / |psi|_{-1/2}`.
    pub boundary_residual: f64,
    pub inversion_residual: f64,
}

/// Exterior Neumann problem `u = W(D^{-1} psi)` for a density annihilating rigid traces.
pub fn solve_neumann_by_potentials(ctx: &PotentialContext, psi: &[f64]) -> Result<NeumannSolution, BvpError> {
    let psi = ctx.admit_rigid_orthogonal(psi)?;
    let (phi, inversion_residual) = ctx.invert_hypersingular(&psi)?;
    let w = ctx.double_layer(&phi)?;
    let zero = vec![0.0; ctx.space.n_vel()];
    let tm = conormal(&ctx.space, &ctx.forms, Region::Outer, &w.state.outer, &w.state.pressure, &zero, &Lifting::Nodal, false);
    let scale = ctx.norms.minus_half(&psi);
    let r = ctx.norms.minus_half(&sparse::sub(&tm, &psi));
    let boundary_residual = if scale > 0.0 { r / scale } else { r };
    Ok(NeumannSolution { state: w.state, phi, boundary_residual, inversion_residual })
}

/// Where the Dirichlet / Neumann split of the mixed problem lives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedPlacement {
    /// Split of the outer boundary of the composite domain (both regions solved).
    #[default]
    OuterBoundary,
    /// Split of the interface; the outer region is solved with homogeneous
    /// data on the truncation boundary.
    Interface,
}

#[derive(Clone, Debug)]
pub struct MixedData {
    pub load: Vec<f64>,
    pub g: Vec<f64>,
    /// Dirichlet values at constrained velocity DOFs.
    pub dirichlet: Vec<f64>,
    /// Neumann functional (already integrated against velocity basis functions).
    pub neumann: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct MixedSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub free: Vec<bool>,
}

/// Velocity DOF mask of the unknowns for a placement; `false` entries carry Dirichlet values.
pub fn mixed_free_mask(space: &MixedSpace, placement: MixedPlacement) -> Vec<bool> {
    match placement {
        MixedPlacement::OuterBoundary => space.free_mask(),
        MixedPlacement::Interface => {
            let region = space.region_vel_mask(Region::Outer);
            let mut free: Vec<bool> = (0..space.n_vel()).map(|d| region[d] && !space.constrained[d]).collect();
            for (fi, f) in space.mesh.interface_facets.iter().enumerate() {
                if f.tag == BoundaryTag::Dirichlet {
                    for &n in &space.interface_facet_nodes[fi] {
                        for i in 0..space.dim {
                            free[n * space.dim + i] = false;
                        }
                    }
                }
            }
            free
        }
    }
}

/// Neumann functional for a placement from a traction `t(x, n)`; for the
/// interface placement `n` is the interface normal (pointing into the outer
/// region) and the functional enters with the sign of the outer conormal.
pub fn mixed_neumann_load(space: &MixedSpace, placement: MixedPlacement, t: &dyn Fn(&[f64], &[f64]) -> Vec<f64>) -> Vec<f64> {
    match placement {
        MixedPlacement::OuterBoundary => crate::fem::assemble::outer_boundary_load(
            space,
            &|fi| space.mesh.outer_facets[fi].tag == BoundaryTag::Neumann,
            t,
        ),
        MixedPlacement::Interface => {
            let d = interface_density_on(space, &|fi| space.mesh.interface_facets[fi].tag == BoundaryTag::Neumann, t);
            sparse::scaled(-1.0, &space.nodal_lifting(&d))
        }
    }
}

/// Mixed Dirichlet–Neumann problem. The space for the outer-boundary
/// placement must use the Dirichlet-tagged constraint.
pub fn solve_mixed(space: &MixedSpace, forms: &AssembledForms, placement: MixedPlacement, data: &MixedData) -> Result<MixedSolution, BvpError> {
    let free = mixed_free_mask(space, placement);
    let (a, b, pact) = match placement {
        MixedPlacement::OuterBoundary => (&forms.a, &forms.b, vec![true; space.n_pres]),
        MixedPlacement::Interface => (&forms.outer.a, &forms.outer.b, space.region_pres_mask(Region::Outer)),
    };
    let has_dirichlet = match placement {
        MixedPlacement::OuterBoundary => space.mesh.outer_facets.iter().any(|f| f.tag == BoundaryTag::Dirichlet),
        MixedPlacement::Interface => space.mesh.interface_facets.iter().any(|f| f.tag == BoundaryTag::Dirichlet),
    };
    if !has_dirichlet {
        return Err(BvpError::EmptyDirichlet);
    }
    if placement == MixedPlacement::OuterBoundary && space.opts.constraint != crate::fem::Constraint::DirichletTagged {
        return Err(BvpError::Invalid("outer-boundary mixed problem needs the Dirichlet-tagged constraint".into()));
    }
    let sys = SaddleSystem::new(a, b, &free, &pact, Vec::new())?;
    let mut rhs_v = sparse::scaled(-1.0, &data.load);
    sparse::axpy(1.0, &data.neumann, &mut rhs_v);
    let s = sys.solve(&rhs_v, &sparse::scaled(-1.0, &data.g), Some(&data.dirichlet), false)?;
    Ok(MixedSolution { u: s.u, p: s.p, free })
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationReport {
    pub radii: Vec<f64>,
    /// `|u_{R_{k+1}} - u_{R_k}|_{H1(collar)}`.
    pub differences: Vec<f64>,
    pub collar_cells: usize,
    pub strictly_decreasing: bool,
}

fn node_key(x: &[f64]) -> [i64; 3] {
    let mut k = [0i64; 3];
    for (d, v) in x.iter().enumerate() {
        k[d] = (v * 1e9).round() as i64;
    }
    k
}

/// Single layer potentials of the density `t(x, nu)` on meshes of growing
/// truncation radius with identical resolution near the interface; the
/// velocity is compared on the cells within max-norm distance `collar` of the origin.
pub fn truncation_study(
    tensor: &CoeffTensor,
    base: &MeshSpec,
    radii: &[f64],
    collar: f64,
    t: &dyn Fn(&[f64], &[f64]) -> Vec<f64>,
) -> Result<TruncationReport, BvpError> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BvpError::Invalid("radii must be increasing with at least two entries".into()));
    }
    let mut sols = Vec::new();
    for &r in radii {
        let spec = MeshSpec { radius: r, ..base.clone() };
        let mesh = Arc::new(build_composite(&spec)?);
        let ctx = PotentialContext::new(tensor, mesh, PressureMode::Continuous)?;
        let psi = interface_density(&ctx.space, t);
        let v = ctx.single_layer(&psi)?;
        sols.push((ctx, v.state.inner));
    }
    let mut differences = Vec::new();
    let mut collar_cells = 0;
    for k in 0..sols.len() - 1 {
        let (ca, ua) = &sols[k];
        let (cb, ub) = &sols[k + 1];
        let (sa, sb) = (&ca.space, &cb.space);
        let inside = |x: &[f64]| x.iter().all(|v| v.abs() <= collar + 1e-12);
        let cells: Vec<usize> = (0..sa.mesh.num_cells())
            .filter(|&c| sa.mesh.cells[c].iter().all(|&v| inside(sa.mesh.x(v))))
            .collect();
        collar_cells = cells.len();
        let index: HashMap<[i64; 3], usize> = (0..sb.n_nodes()).map(|n| (node_key(&sb.node_x[n][..sb.dim]), n)).collect();
        let dim = sa.dim;
        let mut diff = vec![0.0; sa.n_vel()];
        for &c in &cells {
            for &n in &sa.cell_nodes[c] {
                let m = *index
                    .get(&node_key(&sa.node_x[n][..dim]))
                    .ok_or_else(|| BvpError::Invalid("collar nodes do not coincide across radii".into()))?;
                for i in 0..dim {
                    diff[n * dim + i] = ua[n * dim + i] - ub[m * dim + i];
                }
            }
        }
        differences.push(h1_norm_on_cells(sa, &diff, &cells));
    }
    let strictly_decreasing = differences.windows(2).all(|w| w[1] < w[0]);
    Ok(TruncationReport { radii: radii.to_vec(), differences, collar_cells, strictly_decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::norms::h1_two_sided_diff;
    use crate::fem::{Constraint, SpaceOptions};
    use crate::mesh::rigid_motion_basis;
    use crate::potentials::random_trace;
    use crate::tensor::Entries;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn aniso() -> CoeffTensor {
        let mut e = Entries::isotropic(2, 1.0, 0.3);
        e.add_symmetric(0, 0, 0, 1, 0.25);
        CoeffTensor::constant(e, "aniso")
    }

    fn ctx(mode: PressureMode) -> PotentialContext {
        let mesh = Arc::new(build_composite(&MeshSpec::new(2, 2.0, 0.25)).unwrap());
        PotentialContext::new(&aniso(), mesh, mode).unwrap()
    }

    fn random_data(c: &PotentialContext, seed: u64) -> TransmissionData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = &c.space;
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() - 0.5).collect() };
        let mut load_inner = r(sp.n_vel());
        let mut load_outer = r(sp.n_vel());
        let inner = sp.region_vel_mask(Region::Inner);
        let outer = sp.region_vel_mask(Region::Outer);
        for d in 0..sp.n_vel() {
            if !inner[d] {
                load_inner[d] = 0.0;
            }
            if !outer[d] {
                load_outer[d] = 0.0;
            }
        }
        let mut data = TransmissionData { load_inner, load_outer, g: r(sp.n_pres), phi: r(sp.n_trace()), psi: r(sp.n_trace()) };
        data.make_compatible(sp, &c.forms);
        data
    }

    #[test]
    fn transmission_paths_agree() {
        let c = ctx(PressureMode::Continuous);
        let data = random_data(&c, 1);
        let a = solve_transmission_direct(&c, &data).unwrap();
        let b = solve_transmission_potentials(&c, &data).unwrap();
        let scale = h1_two_sided_diff(&c.forms, &a, &TwoSided::zeros(&c.space));
        assert!(h1_two_sided_diff(&c.forms, &a, &b) < 1e-9 * scale);
        assert!(sparse::max_abs(&sparse::sub(&a.trace_jump(&c.space), &data.phi)) < 1e-12);
    }

    #[test]
    fn rigid_jump_gives_piecewise_rigid_state() {
        let c = ctx(PressureMode::Continuous);
        let mut data = TransmissionData::zeros(&c.space);
        data.phi = c.rigid_traces[2].clone();
        let u = solve_transmission_direct(&c, &data).unwrap();
        let r = rigid_motion_basis(2);
        let rv = c.space.interpolate(&|x| r.fields[2].eval(x));
        let want = TwoSided { inner: rv, outer: vec![0.0; c.space.n_vel()], pressure: vec![0.0; c.space.n_pres] };
        assert!(h1_two_sided_diff(&c.forms, &u, &want) < 1e-10);
    }

    #[test]
    fn incompatible_transmission_data_rejected() {
        let c = ctx(PressureMode::Continuous);
        let mut data = random_data(&c, 2);
        data.g[0] += 1.0;
        assert!(matches!(solve_transmission_direct(&c, &data), Err(BvpError::Incompatible { .. })));
    }

    #[test]
    fn exterior_dirichlet_paths_agree_in_broken_mode() {
        let c = ctx(PressureMode::Broken);
        let sp = &c.space;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let outer = sp.region_vel_mask(Region::Outer);
        let load: Vec<f64> = (0..sp.n_vel()).map(|d| if outer[d] && !sp.interface_vel_mask()[d] { rng.random::<f64>() - 0.5 } else { 0.0 }).collect();
        let pm = sp.region_pres_mask(Region::Outer);
        let mut g: Vec<f64> = (0..sp.n_pres).map(|q| if pm[q] { rng.random::<f64>() - 0.5 } else { 0.0 }).collect();
        let w = c.forms.outer.pmass.matvec(&vec![1.0; sp.n_pres]);
        let shift = g.iter().sum::<f64>() / w.iter().sum::<f64>();
        sparse::axpy(-shift, &w, &mut g);
        let phi = c.admit_normal_orthogonal(&c.sl_operator(&random_trace(sp.n_trace(), &mut rng)).unwrap()).unwrap();
        let data = DirichletData { load, g, phi };
        let a = solve_dirichlet(sp, &c.forms, DirichletDomain::Exterior, &data, LiftingChoice::Nodal).unwrap();
        let b = solve_dirichlet(sp, &c.forms, DirichletDomain::Exterior, &data, LiftingChoice::Harmonic).unwrap();
        let d = sparse::sub(&a.u, &b.u);
        let of = &c.forms.outer;
        let norm = |v: &[f64]| (of.grad.form(v, v) + of.mass.form(v, v)).sqrt();
        assert!(norm(&d) < 1e-10 * norm(&a.u));
        let p = solve_dirichlet_by_potentials(&c, &data).unwrap();
        let d = sparse::sub(&a.u, &p.outer);
        assert!(norm(&d) < 1e-7 * norm(&a.u), "{}", norm(&d) / norm(&a.u));
    }

    #[test]
    fn neumann_reproduces_datum() {
        let c = ctx(PressureMode::Continuous);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = random_trace(c.n_trace(), &mut rng);
        let f = c.density_to_field(&raw);
        // Remove rigid components in L2.
        let k = c.rigid_traces.len();
        let m = &c.forms.interface.mass;
        let gram = nalgebra::DMatrix::from_fn(k, k, |i, j| m.form(&c.rigid_traces[i], &c.rigid_traces[j]));
        let rhs = nalgebra::DVector::from_fn(k, |i, _| m.form(&c.rigid_traces[i], &f));
        let co = gram.lu().solve(&rhs).unwrap();
        let mut ff = f.clone();
        for j in 0..k {
            sparse::axpy(-co[j], &c.rigid_traces[j], &mut ff);
        }
        let psi = c.field_to_density(&ff);
        let s = solve_neumann_by_potentials(&c, &psi).unwrap();
        assert!(s.boundary_residual < 1e-8, "{}", s.boundary_residual);
    }

    #[test]
    fn mixed_rejects_empty_dirichlet_part() {
        let mut mesh = build_composite(&MeshSpec::new(2, 1.5, 0.5)).unwrap();
        mesh.outer_facets.iter_mut().for_each(|f| f.tag = BoundaryTag::Neumann);
        mesh.interface_facets.iter_mut().for_each(|f| f.tag = BoundaryTag::Neumann);
        let mesh = Arc::new(mesh);
        let tagged = SpaceOptions { constraint: Constraint::DirichletTagged, gauge: Gauge::None, ..Default::default() };
        assert!(MixedSpace::new(mesh.clone(), tagged).is_err());
        let sp = MixedSpace::new(mesh, SpaceOptions { gauge: Gauge::None, ..Default::default() }).unwrap();
        let forms = crate::fem::assemble(&aniso(), &sp).unwrap();
        let data = MixedData { load: vec![0.0; sp.n_vel()], g: vec![0.0; sp.n_pres], dirichlet: vec![0.0; sp.n_vel()], neumann: vec![0.0; sp.n_vel()] };
        assert!(matches!(solve_mixed(&sp, &forms, MixedPlacement::Interface, &data), Err(BvpError::EmptyDirichlet)));
    }
}
