//! Volume and layer potentials on the truncated domain, realized as
//! solutions of variational transmission problems that all share one
//! factorized saddle operator, together with the boundary operators and the
//! identity suites they satisfy.

use std::sync::{Arc, OnceLock};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::fem::assemble::cell_mean_weights;
use crate::fem::interface::{conormal, conormals, Lifting, TraceNorms};
use crate::fem::norms::{h1_two_sided_diff, pressure_l2};
use crate::fem::{assemble, AssembledForms, Constraint, FemError, Gauge, MixedSpace, PressureMode, SpaceOptions, TwoSided};
use crate::mesh::{rigid_motion_basis, CompositeMesh, Region};
use crate::saddle::{composite_system, infsup_estimate, SaddleError, SaddleSolution, SaddleSystem};
use crate::sparse::{self, SparseLu};
use crate::tensor::CoeffTensor;

/// Smallest inf-sup constant accepted before the broken-pressure mode is enabled.
pub const BROKEN_MODE_BETA_FLOOR: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum PotentialError {
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error("divergence datum incompatible with the velocity constraint: total {total:e} (relative {relative:e})")]
    Incompatible { total: f64, relative: f64 },
    #[error("{what}: relative component {measure:e} exceeds {limit:e}")]
    NotAdmissible { what: &'static str, measure: f64, limit: f64 },
    #[error("broken pressure mode rejected: inf-sup estimate {beta:e} below floor {floor}")]
    BrokenModeUnstable { beta: f64, floor: f64 },
    #[error("input state is not a discrete solution: {0}")]
    Inconsistent(String),
    #[error("singular bordered boundary operator: {0}")]
    Singular(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Newtonian,
    Compressibility,
    SingleLayer,
    DoubleLayer,
    AdjointSingleLayer,
}

#[derive(Clone, Debug)]
pub struct PotentialPair {
    pub state: TwoSided,
    /// Gauge multiplier: nonzero only when the data carry net flux through
    /// the truncation boundary.
    pub multiplier: f64,
    pub kind: PotentialKind,
}

/// Thresholds on the relative component of a datum along a forbidden subspace.
#[derive(Clone, Copy, Debug)]
pub struct Admissibility {
    pub accept: f64,
    pub project: f64,
}

impl Default for Admissibility {
    fn default() -> Self {
        Admissibility { accept: 1e-8, project: 1e-6 }
    }
}

/// Shared state for all potentials: space (full outer Dirichlet constraint,
/// collar-mean pressure gauge), forms and the factorized saddle operator.
pub struct PotentialContext {
    pub tensor: CoeffTensor,
    pub space: MixedSpace,
    pub forms: AssembledForms,
    sys: SaddleSystem,
    /// Normal density `Phi -> int Phi . nu`.
    pub nu: Vec<f64>,
    /// Traces of the rigid-motion basis fields.
    pub rigid_traces: Vec<Vec<f64>>,
    pub norms: TraceNorms,
    trace_mass_lu: SparseLu,
    pub admissibility: Admissibility,
    /// Inf-sup estimate computed when the broken mode was requested.
    pub beta: Option<f64>,
    sl_bordered: OnceLock<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    hs_bordered: OnceLock<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

impl std::fmt::Debug for PotentialContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PotentialContext({:?}, traces={})", self.sys, self.space.n_trace())
    }
}

fn field_norm(m: &crate::sparse::Csr, x: &[f64]) -> f64 {
    m.form(x, x).max(0.0).sqrt()
}

impl PotentialContext {
    pub fn new(tensor: &CoeffTensor, mesh: Arc<CompositeMesh>, pressure: PressureMode) -> Result<Self, PotentialError> {
        let opts = SpaceOptions { pressure, constraint: Constraint::Full, gauge: Gauge::Collar };
        let space = MixedSpace::new(mesh, opts)?;
        let forms = assemble(tensor, &space)?;
        let beta = if pressure == PressureMode::Broken {
            let b = infsup_estimate(&space, &forms, true)?.beta;
            if b < BROKEN_MODE_BETA_FLOOR {
                return Err(PotentialError::BrokenModeUnstable { beta: b, floor: BROKEN_MODE_BETA_FLOOR });
            }
            Some(b)
        } else {
            None
        };
        let sys = composite_system(&space, &forms)?;
        let nu = forms.interface.nu.clone();
        let rigid_traces =
            rigid_motion_basis(space.dim).fields.iter().map(|r| space.trace(&space.interpolate(&|x| r.eval(x)))).collect();
        let norms = TraceNorms::new(&forms)?;
        let trace_mass_lu = SparseLu::new(&forms.interface.mass).map_err(FemError::from)?;
        Ok(PotentialContext {
            tensor: tensor.clone(),
            space,
            forms,
            sys,
            nu,
            rigid_traces,
            norms,
            trace_mass_lu,
            admissibility: Admissibility::default(),
            beta,
            sl_bordered: OnceLock::new(),
            hs_bordered: OnceLock::new(),
        })
    }

    pub fn n_trace(&self) -> usize {
        self.space.n_trace()
    }

    /// The shared factorized composite operator.
    pub fn system(&self) -> &SaddleSystem {
        &self.sys
    }

    /// Solves `A u + B^T p = rhs_v`, `B u + G lambda = rhs_p` (transposed
    /// velocity block for adjoint problems).
    fn solve_raw(&self, rhs_v: &[f64], rhs_p: &[f64], adjoint: bool) -> Result<SaddleSolution, PotentialError> {
        Ok(self.sys.solve(rhs_v, rhs_p, None, adjoint)?)
    }

    fn pair(&self, s: SaddleSolution, kind: PotentialKind) -> PotentialPair {
        PotentialPair { state: TwoSided::continuous(s.u, s.p), multiplier: s.multipliers.first().copied().unwrap_or(0.0), kind }
    }

    /// `(N f, Q f)`: solves `L(u, pi) = f`, `div u = 0` for a velocity functional `f`.
    pub fn newtonian(&self, f: &[f64]) -> Result<PotentialPair, PotentialError> {
        let s = self.solve_raw(&sparse::scaled(-1.0, f), &vec![0.0; self.space.n_pres], false)?;
        Ok(self.pair(s, PotentialKind::Newtonian))
    }

    /// `(G g, G0 g)`: solves `L(u, pi) = 0`, `div u = g` for a pressure functional `g`.
    pub fn compressibility(&self, g: &[f64]) -> Result<PotentialPair, PotentialError> {
        let total: f64 = g.iter().sum();
        let scale: f64 = g.iter().map(|v| v.abs()).sum();
        let relative = if scale > 0.0 { total.abs() / scale } else { 0.0 };
        if relative > 1e-10 {
            return Err(PotentialError::Incompatible { total, relative });
        }
        self.compressibility_unchecked(g)
    }

    fn compressibility_unchecked(&self, g: &[f64]) -> Result<PotentialPair, PotentialError> {
        let s = self.solve_raw(&vec![0.0; self.space.n_vel()], &sparse::scaled(-1.0, g), false)?;
        Ok(self.pair(s, PotentialKind::Compressibility))
    }

    /// `(V psi, Q^s psi)`: continuous velocity whose conormal jump is `psi`.
    pub fn single_layer(&self, psi: &[f64]) -> Result<PotentialPair, PotentialError> {
        let s = self.solve_raw(&self.space.nodal_lifting(psi), &vec![0.0; self.space.n_pres], false)?;
        Ok(self.pair(s, PotentialKind::SingleLayer))
    }

    /// Single layer potential of the adjoint system.
    pub fn adjoint_single_layer(&self, psi: &[f64]) -> Result<PotentialPair, PotentialError> {
        let s = self.solve_raw(&self.space.nodal_lifting(psi), &vec![0.0; self.space.n_pres], true)?;
        Ok(self.pair(s, PotentialKind::AdjointSingleLayer))
    }

    /// `(W phi, Q^d phi)`: velocity with trace jump `-phi` and no conormal jump.
    ///
    /// The jump is carried by `w = -lifting(phi)` on the inner side; the
    /// continuous remainder absorbs the rest.
    pub fn double_layer(&self, phi: &[f64]) -> Result<PotentialPair, PotentialError> {
        let w = sparse::scaled(-1.0, &self.space.nodal_lifting(phi));
        let inner = &self.forms.inner;
        let rhs_v = sparse::scaled(-1.0, &inner.a.matvec(&w));
        let rhs_p = sparse::scaled(-1.0, &inner.b.matvec(&w));
        let s = self.solve_raw(&rhs_v, &rhs_p, false)?;
        let multiplier = s.multipliers.first().copied().unwrap_or(0.0);
        let inner_u = sparse::add(&s.u, &w);
        Ok(PotentialPair { state: TwoSided { inner: inner_u, outer: s.u, pressure: s.p }, multiplier, kind: PotentialKind::DoubleLayer })
    }

    /// One-sided conormal derivatives `(t+, t-)` of an unloaded state.
    pub fn conormals(&self, state: &TwoSided, adjoint: bool) -> (Vec<f64>, Vec<f64>) {
        let z = vec![0.0; self.space.n_vel()];
        conormals(&self.space, &self.forms, state, &z, &z, adjoint)
    }

    /// One-sided traces `(gamma_+, gamma_-)`.
    pub fn traces(&self, state: &TwoSided) -> (Vec<f64>, Vec<f64>) {
        (self.space.trace(&state.inner), self.space.trace(&state.outer))
    }

    /// Single layer boundary operator `gamma V psi`.
    pub fn sl_operator(&self, psi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        Ok(self.space.trace(&self.single_layer(psi)?.state.inner))
    }

    pub fn adjoint_sl_operator(&self, psi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        Ok(self.space.trace(&self.adjoint_single_layer(psi)?.state.inner))
    }

    /// Average conormal derivative of the single layer potential.
    pub fn sl_average_conormal(&self, psi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let v = self.single_layer(psi)?;
        let (tp, tm) = self.conormals(&v.state, false);
        Ok(sparse::scaled(0.5, &sparse::add(&tp, &tm)))
    }

    pub fn adjoint_sl_average_conormal(&self, psi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let v = self.adjoint_single_layer(psi)?;
        let (tp, tm) = self.conormals(&v.state, true);
        Ok(sparse::scaled(0.5, &sparse::add(&tp, &tm)))
    }

    /// Average trace of the double layer potential.
    pub fn dl_average_trace(&self, phi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let w = self.double_layer(phi)?;
        let (gp, gm) = self.traces(&w.state);
        Ok(sparse::scaled(0.5, &sparse::add(&gp, &gm)))
    }

    /// Hypersingular operator: inner conormal derivative of the double layer potential.
    pub fn hypersingular(&self, phi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let w = self.double_layer(phi)?;
        Ok(self.conormals(&w.state, false).0)
    }

    /// Columns `op(e_k)` assembled in parallel.
    fn dense<F>(&self, op: F) -> Result<DMatrix<f64>, PotentialError>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>, PotentialError> + Sync,
    {
        let n = self.n_trace();
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                op(&e)
            })
            .collect::<Result<_, _>>()?;
        Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
    }

    pub fn sl_matrix(&self) -> Result<DMatrix<f64>, PotentialError> {
        self.dense(|e| self.sl_operator(e))
    }

    pub fn hypersingular_matrix(&self) -> Result<DMatrix<f64>, PotentialError> {
        self.dense(|e| self.hypersingular(e))
    }

    /// Trace field representing a density in `L2`: `M^{-1} psi`.
    pub fn density_to_field(&self, psi: &[f64]) -> Vec<f64> {
        self.trace_mass_lu.solve(psi)
    }

    pub fn field_to_density(&self, phi: &[f64]) -> Vec<f64> {
        self.forms.interface.mass.matvec(phi)
    }

    /// Removes the `L2`-orthogonal projection of `x` onto span(`basis`) and
    /// returns the relative size of the removed part.
    fn project_out(&self, x: &[f64], basis: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let m = &self.forms.interface.mass;
        let k = basis.len();
        let gram = DMatrix::from_fn(k, k, |i, j| m.form(&basis[i], &basis[j]));
        let rhs = DVector::from_fn(k, |i, _| m.form(&basis[i], x));
        let c = gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(k));
        let mut comp = vec![0.0; x.len()];
        for (i, b) in basis.iter().enumerate() {
            sparse::axpy(c[i], b, &mut comp);
        }
        let nx = field_norm(m, x);
        let rel = if nx > 0.0 { field_norm(m, &comp) / nx } else { 0.0 };
        (rel, sparse::sub(x, &comp))
    }

    fn admit(&self, what: &'static str, rel: f64, original: Vec<f64>, projected: Vec<f64>) -> Result<Vec<f64>, PotentialError> {
        let a = self.admissibility;
        if rel <= a.accept {
            Ok(original)
        } else if rel <= a.project {
            warn!("{what}: projecting away relative component {rel:e}");
            Ok(projected)
        } else {
            Err(PotentialError::NotAdmissible { what, measure: rel, limit: a.project })
        }
    }

    /// Checks (and if nearly so, enforces) `<phi, nu> = 0` for a trace field.
    pub fn admit_normal_orthogonal(&self, phi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let nf = self.density_to_field(&self.nu);
        let (rel, proj) = self.project_out(phi, &[nf]);
        self.admit("trace datum must have zero flux against the interface normal", rel, phi.to_vec(), proj)
    }

    /// Checks (and if nearly so, enforces) orthogonality of a density to rigid traces.
    pub fn admit_rigid_orthogonal(&self, psi: &[f64]) -> Result<Vec<f64>, PotentialError> {
        let f = self.density_to_field(psi);
        let (rel, proj) = self.project_out(&f, &self.rigid_traces);
        self.admit("density must annihilate rigid-motion traces", rel, psi.to_vec(), self.field_to_density(&proj))
    }

    /// Solves `gamma V psi = phi` for `psi` normalized to be `L2`-orthogonal to
    /// `nu`; `phi` must have zero flux.
    pub fn invert_sl(&self, phi: &[f64]) -> Result<(Vec<f64>, f64), PotentialError> {
        let phi = self.admit_normal_orthogonal(phi)?;
        let n = self.n_trace();
        let lu = match self.sl_bordered.get() {
            Some(lu) => lu,
            None => {
                let v = self.sl_matrix()?;
                let nf = self.density_to_field(&self.nu);
                let mut k = DMatrix::zeros(n + 1, n + 1);
                k.view_mut((0, 0), (n, n)).copy_from(&v);
                for i in 0..n {
                    k[(i, n)] = nf[i];
                    k[(n, i)] = nf[i];
                }
                let _ = self.sl_bordered.set(k.lu());
                self.sl_bordered.get().unwrap()
            }
        };
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from_slice(&phi);
        let x = lu.solve(&rhs).ok_or(PotentialError::Singular("single layer"))?;
        let psi: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let res = sparse::sub(&self.sl_operator(&psi)?, &phi);
        Ok((psi, self.norms.half(&res)))
    }

    /// Solves `D phi = psi` for `phi` `L2`-orthogonal to rigid traces; `psi`
    /// must annihilate rigid traces.
    pub fn invert_hypersingular(&self, psi: &[f64]) -> Result<(Vec<f64>, f64), PotentialError> {
        let psi = self.admit_rigid_orthogonal(psi)?;
        let n = self.n_trace();
        let k = self.rigid_traces.len();
        let lu = match self.hs_bordered.get() {
            Some(lu) => lu,
            None => {
                let d = self.hypersingular_matrix()?;
                let mut m = DMatrix::zeros(n + k, n + k);
                m.view_mut((0, 0), (n, n)).copy_from(&d);
                for (j, r) in self.rigid_traces.iter().enumerate() {
                    let mr = self.field_to_density(r);
                    for i in 0..n {
                        m[(i, n + j)] = mr[i];
                        m[(n + j, i)] = mr[i];
                    }
                }
                let _ = self.hs_bordered.set(m.lu());
                self.hs_bordered.get().unwrap()
            }
        };
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from_slice(&psi);
        let x = lu.solve(&rhs).ok_or(PotentialError::Singular("hypersingular"))?;
        let phi: Vec<f64> = x.rows(0, n).iter().copied().collect();
        let res = sparse::sub(&self.hypersingular(&phi)?, &psi);
        Ok((phi, self.norms.minus_half(&res)))
    }

    /// `-W phi + V psi + N f + G g`: the two-sided state with trace jump `phi`,
    /// conormal jump `psi` (loads included), load `f` and divergence `g`.
    pub fn represent(&self, phi: &[f64], psi: &[f64], f: &[f64], g: &[f64]) -> Result<TwoSided, PotentialError> {
        let mut u = self.double_layer(phi)?.state.scaled(-1.0);
        u.axpy(1.0, &self.single_layer(psi)?.state);
        u.axpy(1.0, &self.newtonian(f)?.state);
        // The flux of `phi` and the total of `g` cancel for consistent data;
        // the individual potentials need not be compatible on their own.
        u.axpy(1.0, &self.compressibility_unchecked(g)?.state);
        Ok(u)
    }

    /// Collar-gauge shift of a pressure vector.
    pub fn gauge_pressure(&self, p: &[f64]) -> Vec<f64> {
        let w = cell_mean_weights(&self.space, &self.space.collar_cells());
        let ones = vec![1.0; p.len()];
        let c = sparse::dot(&w, p) / sparse::dot(&w, &ones);
        p.iter().map(|v| v - c).collect()
    }

    /// Reconstructs a discrete two-sided solution from its own jumps, loads
    /// and divergence via the third Green identity.
    pub fn green_representation(
        &self,
        state: &TwoSided,
        load_inner: &[f64],
        load_outer: &[f64],
        g: &[f64],
        rtol: f64,
    ) -> Result<GreenReport, PotentialError> {
        let sp = &self.space;
        let f = sparse::add(load_inner, load_outer);
        // Interior residual (away from the interface and the outer boundary).
        let mut r = self.forms.inner.a.matvec(&state.inner);
        sparse::axpy(1.0, &self.forms.outer.a.matvec(&state.outer), &mut r);
        sparse::axpy(1.0, &self.forms.b.matvec_transpose(&state.pressure), &mut r);
        sparse::axpy(1.0, &f, &mut r);
        let iface = sp.interface_vel_mask();
        let rv = (0..sp.n_vel()).filter(|&d| !iface[d] && !sp.constrained[d]).map(|d| r[d].abs()).fold(0.0, f64::max);
        let mut rp = self.forms.inner.b.matvec(&state.inner);
        sparse::axpy(1.0, &self.forms.outer.b.matvec(&state.outer), &mut rp);
        sparse::axpy(1.0, g, &mut rp);
        let rpm = sparse::max_abs(&rp);
        let scale = sparse::max_abs(&f).max(sparse::max_abs(g)).max(sparse::max_abs(&state.inner)).max(sparse::max_abs(&state.outer)).max(1e-300);
        if rv.max(rpm) > rtol * scale {
            return Err(PotentialError::Inconsistent(format!("residual {:e} relative to data scale {scale:e}", rv.max(rpm))));
        }
        let phi = state.trace_jump(sp);
        let (tp, tm) = conormals(sp, &self.forms, state, load_inner, load_outer, false);
        let psi = sparse::sub(&tp, &tm);
        let rec = self.represent(&phi, &psi, &f, g)?;
        let mut shifted = state.clone();
        shifted.pressure = self.gauge_pressure(&state.pressure);
        Ok(GreenReport::compare(self, &shifted, rec))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenReport {
    #[serde(skip)]
    pub reconstruction: TwoSided,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    pub state_h1: f64,
    pub relative: f64,
}

impl GreenReport {
    pub fn compare(ctx: &PotentialContext, state: &TwoSided, rec: TwoSided) -> GreenReport {
        let zero = TwoSided::zeros(&ctx.space);
        let velocity_h1 = h1_two_sided_diff(&ctx.forms, state, &rec);
        let pressure_l2 = pressure_l2(&ctx.forms, &sparse::sub(&state.pressure, &rec.pressure), None);
        let state_h1 = h1_two_sided_diff(&ctx.forms, state, &zero);
        let relative = if state_h1 > 0.0 { velocity_h1 / state_h1 } else { velocity_h1 };
        GreenReport { reconstruction: rec, velocity_h1, pressure_l2, state_h1, relative }
    }
}

/// One measured identity.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityRecord {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityRecord {
    pub fn new(name: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        IdentityRecord { name: name.into(), measured, tolerance, pass: measured.is_finite() && measured <= tolerance }
    }
}

fn rel(diff: &[f64], scale: f64) -> f64 {
    let d = sparse::norm(diff);
    if scale > 0.0 {
        d / scale
    } else {
        d
    }
}

/// The six jump / one-sided identities for a density `psi` and a trace `phi`,
/// each as a relative Euclidean residual.
pub fn jump_identities(ctx: &PotentialContext, psi: &[f64], phi: &[f64]) -> Result<[f64; 6], PotentialError> {
    let v = ctx.single_layer(psi)?;
    let (vp, vm) = ctx.traces(&v.state);
    let (tp, tm) = ctx.conormals(&v.state, false);
    let kpsi = sparse::scaled(0.5, &sparse::add(&tp, &tm));
    let w = ctx.double_layer(phi)?;
    let (wp, wm) = ctx.traces(&w.state);
    let (sp, sm) = ctx.conormals(&w.state, false);
    let kphi = sparse::scaled(0.5, &sparse::add(&wp, &wm));
    let npsi = sparse::norm(psi).max(sparse::norm(&tp)).max(sparse::norm(&tm));
    let nphi = sparse::norm(phi).max(sparse::norm(&wp)).max(sparse::norm(&wm));
    let nsig = sparse::norm(&sp).max(sparse::norm(&sm)).max(1e-300);
    let half = |x: &[f64], s: f64| sparse::scaled(s * 0.5, x);
    Ok([
        rel(&sparse::sub(&vp, &vm), sparse::norm(&vp).max(1e-300)),
        rel(&sparse::sub(&sparse::sub(&tp, &tm), psi), npsi),
        rel(&sparse::add(&sparse::sub(&wp, &wm), phi), nphi),
        rel(&sparse::sub(&sp, &sm), nsig),
        rel(&sparse::sub(&tp, &sparse::add(&half(psi, 1.0), &kpsi)), npsi)
            .max(rel(&sparse::sub(&tm, &sparse::add(&half(psi, -1.0), &kpsi)), npsi)),
        rel(&sparse::sub(&wp, &sparse::add(&half(phi, -1.0), &kphi)), nphi)
            .max(rel(&sparse::sub(&wm, &sparse::add(&half(phi, 1.0), &kphi)), nphi)),
    ])
}

pub const JUMP_IDENTITY_NAMES: [&str; 6] = [
    "single layer trace jump vanishes",
    "single layer conormal jump equals density",
    "double layer trace jump equals minus trace",
    "double layer conormal jump vanishes",
    "single layer one-sided conormals from average",
    "double layer one-sided traces from average",
];

/// Random smooth-ish trace vector (componentwise noise).
pub fn random_trace(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub samples: usize,
    pub single_layer_max: f64,
    pub double_layer_max: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `<psi, V* psi*> = <psi*, V psi>` and `<psi*, K phi> = <K* psi*, phi>` on
/// random samples; residuals relative to the Cauchy–Schwarz scale.
pub fn duality_checks(ctx: &PotentialContext, samples: usize, seed: u64, tolerance: f64) -> Result<DualityReport, PotentialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ctx.n_trace();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let psi = random_trace(n, &mut rng);
        let psis = random_trace(n, &mut rng);
        let phi = random_trace(n, &mut rng);
        let vs = ctx.adjoint_sl_operator(&psis)?;
        let v = ctx.sl_operator(&psi)?;
        let (l, r) = (sparse::dot(&psi, &vs), sparse::dot(&psis, &v));
        let scale = sparse::norm(&psi) * sparse::norm(&vs) + sparse::norm(&psis) * sparse::norm(&v);
        s1 = s1.max((l - r).abs() / scale.max(1e-300));
        let k = ctx.dl_average_trace(&phi)?;
        let ks = ctx.adjoint_sl_average_conormal(&psis)?;
        let (l, r) = (sparse::dot(&psis, &k), sparse::dot(&ks, &phi));
        let scale = sparse::norm(&psis) * sparse::norm(&k) + sparse::norm(&ks) * sparse::norm(&phi);
        s2 = s2.max((l - r).abs() / scale.max(1e-300));
    }
    Ok(DualityReport { samples, single_layer_max: s1, double_layer_max: s2, tolerance, pass: s1 <= tolerance && s2 <= tolerance })
}

/// Kernel identities: `V nu = 0`, `Q^s nu = -chi_inner`, `D(gamma r) = 0`,
/// `W(gamma r) = (-r, 0)`, each as a relative residual.
#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub sl_normal_velocity: f64,
    pub sl_normal_trace_half_norm: f64,
    pub sl_normal_pressure: f64,
    pub hypersingular_rigid: f64,
    pub dl_rigid_state: f64,
}

pub fn kernel_checks(ctx: &PotentialContext) -> Result<KernelReport, PotentialError> {
    let sp = &ctx.space;
    let v = ctx.single_layer(&ctx.nu)?;
    let chi = sp.pressure_indicator(Region::Inner);
    let nu_scale = ctx.norms.minus_half(&ctx.nu);
    let sl_normal_velocity = h1_two_sided_diff(&ctx.forms, &v.state, &TwoSided::zeros(sp)) / nu_scale;
    let sl_normal_trace_half_norm = ctx.norms.half(&sp.trace(&v.state.inner)) / nu_scale;
    let p_err = pressure_l2(&ctx.forms, &sparse::add(&v.state.pressure, &chi), None);
    let sl_normal_pressure = p_err / pressure_l2(&ctx.forms, &chi, None);
    let (mut hs, mut dl) = (0.0f64, 0.0f64);
    for (j, r) in rigid_motion_basis(sp.dim).fields.iter().enumerate() {
        let tr = &ctx.rigid_traces[j];
        let rv = sp.interpolate(&|x| r.eval(x));
        let w = ctx.double_layer(tr)?;
        let d = ctx.conormals(&w.state, false).0;
        let scale = ctx.norms.half(tr);
        hs = hs.max(ctx.norms.minus_half(&d) / scale);
        let want = TwoSided { inner: sparse::scaled(-1.0, &rv), outer: vec![0.0; sp.n_vel()], pressure: vec![0.0; sp.n_pres] };
        let denom = h1_two_sided_diff(&ctx.forms, &want, &TwoSided::zeros(sp));
        let perr = pressure_l2(&ctx.forms, &w.state.pressure, None);
        dl = dl.max((h1_two_sided_diff(&ctx.forms, &w.state, &want) + perr) / denom);
    }
    Ok(KernelReport { sl_normal_velocity, sl_normal_trace_half_norm, sl_normal_pressure, hypersingular_rigid: hs, dl_rigid_state: dl })
}

/// Conormal derivative of one side of a state with a load and a chosen lifting.
pub fn side_conormal(ctx: &PotentialContext, state: &TwoSided, side: Region, load: &[f64], lifting: &Lifting) -> Vec<f64> {
    conormal(&ctx.space, &ctx.forms, side, state.side(side), &state.pressure, load, lifting, false)
}
