//! Steady anisotropic Navier–Stokes on the bounded composite domain by
//! Picard iteration on the frozen-convection Stokes operator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fem::convection::{convection_load, cubic_load, div_norm, l4_norm, skew_convection_load};
use crate::fem::interface::conormals;
use crate::fem::interface::TraceNorms;
use crate::fem::{AssembledForms, Constraint, FemError, Gauge, MixedSpace, TwoSided};
use crate::mesh::Region;
use crate::saddle::{gauge_vectors, infsup_estimate, SaddleError, SaddleSystem, VelocityNorm};
use crate::sparse;
use crate::tensor::{ellipticity_constant, CoeffTensor, SamplePoint, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum NsError {
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("tensor is not elliptic on the samples")]
    NotElliptic,
    #[error("space must constrain the whole outer boundary")]
    Constraint,
    #[error("Picard iteration did not converge in {iterations} steps; last step {last_step:e}, ratios {ratios:?}")]
    Diverged { iterations: usize, last_step: f64, ratios: Vec<f64> },
}

/// The Navier–Stokes problem on a fixed discretization: the saddle operator
/// is factorized once and reused by every Picard step.
pub struct NsProblem<'a> {
    pub space: &'a MixedSpace,
    pub forms: &'a AssembledForms,
    sys: SaddleSystem,
    xn: VelocityNorm,
    /// Ellipticity reciprocal of the tensor.
    pub c_a: f64,
    /// `max |a_ij^{ab}|` over the sampled tensor.
    pub tensor_sup: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub maxit: usize,
    pub theta: f64,
    /// Halve `theta` whenever the step grows.
    pub auto_damp: bool,
    /// Skew-symmetrized convection, outside the analysed scheme; for robustness studies only.
    pub skew: bool,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tol: 1e-12, maxit: 200, theta: 1.0, auto_damp: true, skew: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    /// `|grad(u_{k+1} - u_k)|` per step.
    pub steps: Vec<f64>,
    /// Successive step ratios.
    pub ratios: Vec<f64>,
    pub theta: f64,
}

#[derive(Clone, Debug)]
pub struct NsSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub report: PicardReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbeddingReport {
    /// Best ratio `|v|_L4 / |grad v|` found (a lower bound on the embedding constant).
    pub c: f64,
    pub starts: usize,
    /// In 3D: `K_S |Omega|^{1/12}` from the sharp Sobolev constant and Hölder.
    pub analytic_bound: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NsBounds {
    pub f_norm: f64,
    pub c_a: f64,
    pub c: f64,
    pub beta: f64,
    pub margin: f64,
    pub unique: bool,
    pub grad_u: f64,
    pub energy_bound: f64,
    pub energy_ok: bool,
    pub pressure_norm: f64,
    pub pressure_bound: f64,
    pub pressure_ok: bool,
    /// The embedding constant is estimated from below, so a margin below one
    /// is necessary but not sufficient for the uniqueness condition.
    pub margin_is_lower_estimate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureRecovery {
    /// Max-norm of `A u + B^T p + C(u) u - F` on free rows, relative to data.
    pub full_residual: f64,
    /// Largest `|<F - A u - C(u) u, v>| / |grad v|` over sampled discretely
    /// divergence-free `v`, relative to `|||F|||`.
    pub kernel_residual: f64,
    /// Same functional tested on unconstrained random `v` (generally nonzero).
    pub unconstrained_residual: f64,
}

impl<'a> NsProblem<'a> {
    /// Constants taken from the tensor sampled at `samples`.
    pub fn from_tensor(space: &'a MixedSpace, forms: &'a AssembledForms, tensor: &CoeffTensor, samples: &[SamplePoint]) -> Result<Self, NsError> {
        let ell = ellipticity_constant(tensor, samples)?;
        if !ell.elliptic {
            return Err(NsError::NotElliptic);
        }
        Self::new(space, forms, ell.c_a(), tensor.norm(samples))
    }

    pub fn new(space: &'a MixedSpace, forms: &'a AssembledForms, c_a: f64, tensor_sup: f64) -> Result<Self, NsError> {
        if space.opts.constraint != Constraint::Full {
            return Err(NsError::Constraint);
        }
        let pact = vec![true; space.n_pres];
        let gauges = gauge_vectors(space, forms, Gauge::Total, &pact);
        let sys = SaddleSystem::new(&forms.a, &forms.b, &space.free_mask(), &pact, gauges)?;
        let xn = VelocityNorm::new(space, forms)?;
        Ok(NsProblem { space, forms, sys, xn, c_a, tensor_sup })
    }

    /// `|||F||| = sqrt(F^T X^{-1} F)`.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        self.xn.dual_norm(f)
    }

    pub fn grad_norm(&self, u: &[f64]) -> f64 {
        self.xn.norm(u)
    }

    /// One undamped application of the Picard map: the Stokes solution with
    /// load `F - (w . grad) w`.
    pub fn picard_map(&self, f: &[f64], w: &[f64], skew: bool) -> Result<(Vec<f64>, Vec<f64>), NsError> {
        let conv = if skew { skew_convection_load(self.space, w, w, None) } else { convection_load(self.space, w, w, None) };
        let mut rhs = f.to_vec();
        sparse::axpy(-1.0, &conv, &mut rhs);
        let s = self.sys.solve(&rhs, &vec![0.0; self.space.n_pres], None, false)?;
        Ok((s.u, s.p))
    }

    /// Damped Picard step `u <- (1 - theta) w + theta U(w)`.
    pub fn picard_step(&self, f: &[f64], w: &[f64], pw: &[f64], theta: f64, skew: bool) -> Result<(Vec<f64>, Vec<f64>), NsError> {
        let (u, p) = self.picard_map(f, w, skew)?;
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - theta) * x + theta * y).collect::<Vec<_>>();
        Ok((mix(w, &u), mix(pw, &p)))
    }

    pub fn solve(&self, f: &[f64], u0: Option<&[f64]>, opts: &PicardOptions) -> Result<NsSolution, NsError> {
        let mut u = u0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; self.space.n_vel()]);
        let mut p = vec![0.0; self.space.n_pres];
        let mut theta = opts.theta;
        let mut steps: Vec<f64> = Vec::new();
        let mut ratios = Vec::new();
        for k in 0..opts.maxit {
            let (un, pn) = self.picard_step(f, &u, &p, theta, opts.skew)?;
            let step = self.grad_norm(&sparse::sub(&un, &u));
            if let Some(&prev) = steps.last() {
                ratios.push(if prev > 0.0 { step / prev } else { 0.0 });
                if opts.auto_damp && step > prev && theta > 1.0 / 64.0 {
                    theta *= 0.5;
                }
            }
            steps.push(step);
            u = un;
            p = pn;
            if step <= opts.tol * (1.0 + self.grad_norm(&u)) {
                return Ok(NsSolution { u, p, report: PicardReport { iterations: k + 1, steps, ratios, theta } });
            }
        }
        Err(NsError::Diverged { iterations: opts.maxit, last_step: *steps.last().unwrap_or(&f64::NAN), ratios })
    }

    /// Lower estimate of the best constant in `|v|_L4 <= c |grad v|` by
    /// nonlinear power iteration `v <- X^{-1} (|v|^2 v)` from several starts.
    pub fn embedding_constant(&self, starts: usize, iters: usize, seed: u64) -> EmbeddingReport {
        let sp = self.space;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best: f64 = 0.0;
        for s in 0..starts {
            let mut v: Vec<f64> = if s == 0 {
                // Smooth start: the Riesz representative of a constant body force.
                let ones: Vec<f64> = (0..sp.n_vel()).map(|d| if d % sp.dim == 0 { 1.0 } else { 0.5 }).collect();
                self.xn.riesz(&self.forms.mass.matvec(&ones))
            } else {
                sp.constrained.iter().map(|&c| if c { 0.0 } else { rng.random::<f64>() - 0.5 }).collect()
            };
            for _ in 0..iters {
                let n = self.grad_norm(&v);
                if n == 0.0 {
                    break;
                }
                v.iter_mut().for_each(|x| *x /= n);
                best = best.max(l4_norm(sp, &v));
                v = self.xn.riesz(&cubic_load(sp, &v));
            }
            let n = self.grad_norm(&v);
            if n > 0.0 {
                best = best.max(l4_norm(sp, &v) / n);
            }
        }
        let analytic_bound = (sp.dim == 3).then(|| {
            let k_s = 1.0 / (3f64.sqrt() * (std::f64::consts::PI / 2.0).powf(2.0 / 3.0));
            k_s * sp.mesh.measure().powf(1.0 / 12.0)
        });
        EmbeddingReport { c: best, starts, analytic_bound }
    }

    /// `4 c_A^2 c^2 |||F|||`.
    pub fn uniqueness_margin(&self, c: f64, f: &[f64]) -> f64 {
        4.0 * self.c_a * self.c_a * c * c * self.dual_norm(f)
    }

    /// Energy and pressure bounds with the computed constants.
    pub fn bounds(&self, f: &[f64], sol: &NsSolution, c: f64) -> Result<NsBounds, NsError> {
        let n = self.space.dim as f64;
        let f_norm = self.dual_norm(f);
        let beta = infsup_estimate(self.space, self.forms, true)?.beta;
        let c_omega = 1.0 / beta;
        let kappa = if self.space.dim == 3 { 4.0 / 3.0 * self.space.mesh.measure().powf(1.0 / 6.0) } else { c * c };
        let c1 = c_omega * (1.0 + 2.0 * self.c_a * n.powi(4) * self.tensor_sup);
        let c2 = 4.0 * c_omega * self.c_a * self.c_a * kappa;
        let grad_u = self.grad_norm(&sol.u);
        let energy_bound = 2.0 * self.c_a * f_norm;
        let pressure_norm = quotient_l2(self.space, self.forms, &sol.p);
        let pressure_bound = c1 * f_norm + c2 * f_norm * f_norm;
        let margin = self.uniqueness_margin(c, f);
        Ok(NsBounds {
            f_norm,
            c_a: self.c_a,
            c,
            beta,
            margin,
            unique: margin < 1.0,
            grad_u,
            energy_bound,
            energy_ok: grad_u <= energy_bound + 1e-10,
            pressure_norm,
            pressure_bound,
            pressure_ok: pressure_norm <= pressure_bound + 1e-10,
            margin_is_lower_estimate: true,
        })
    }

    /// Checks that the pressure recovers the momentum residual and that the
    /// pressure-free residual annihilates discretely divergence-free fields.
    pub fn pressure_recovery_check(&self, f: &[f64], u: &[f64], p: &[f64], samples: usize, seed: u64) -> Result<PressureRecovery, NsError> {
        let sp = self.space;
        let mut r0 = f.to_vec();
        sparse::axpy(-1.0, &self.forms.a.matvec(u), &mut r0);
        sparse::axpy(-1.0, &convection_load(sp, u, u, None), &mut r0);
        let bp = self.forms.b.matvec_transpose(p);
        let free = sp.free_mask();
        let full = (0..sp.n_vel()).filter(|&d| free[d]).map(|d| (r0[d] - bp[d]).abs()).fold(0.0, f64::max);
        let scale = sparse::max_abs(f).max(1e-300);
        let fnorm = self.dual_norm(f).max(1e-300);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ker, mut unc) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let g: Vec<f64> = (0..sp.n_vel()).map(|d| if free[d] { rng.random::<f64>() - 0.5 } else { 0.0 }).collect();
            // Discretely divergence-free sample: velocity of a Stokes-type solve.
            let v = self.sys.solve(&g, &vec![0.0; sp.n_pres], None, false)?.u;
            let restrict = |x: &[f64]| -> f64 { (0..sp.n_vel()).filter(|&d| free[d]).map(|d| x[d] * r0[d]).sum() };
            ker = ker.max(restrict(&v).abs() / self.grad_norm(&v).max(1e-300) / fnorm);
            unc = unc.max(restrict(&g).abs() / self.grad_norm(&g).max(1e-300) / fnorm);
        }
        Ok(PressureRecovery { full_residual: full / scale, kernel_residual: ker, unconstrained_residual: unc })
    }

    /// `|<(u . grad) u, u>|` and the divergence residual `|div u|`.
    pub fn energy_defect(&self, u: &[f64]) -> (f64, f64) {
        let c = sparse::dot(&convection_load(self.space, u, u, None), u).abs();
        (c, div_norm(self.space, u))
    }
}

/// `|p|_{L2 / R}`.
pub fn quotient_l2(space: &MixedSpace, forms: &AssembledForms, p: &[f64]) -> f64 {
    let w = forms.pmass.matvec(&vec![1.0; space.n_pres]);
    let c = sparse::dot(&w, p) / w.iter().sum::<f64>();
    let q: Vec<f64> = p.iter().map(|v| v - c).collect();
    forms.pmass.form(&q, &q).max(0.0).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct NsTransmissionReport {
    pub trace_jump: f64,
    /// `|[t] - psi|_{-1/2} / |psi|_{-1/2}` with convective loads included.
    pub conormal_jump_residual: f64,
}

/// Load `F = -(f_+ + f_-) + gamma^* psi` of the two-sided problem.
pub fn transmission_load(space: &MixedSpace, load_inner: &[f64], load_outer: &[f64], psi: &[f64]) -> Vec<f64> {
    let mut f = sparse::scaled(-1.0, &sparse::add(load_inner, load_outer));
    sparse::axpy(1.0, &space.nodal_lifting(psi), &mut f);
    f
}

/// Two-sided Navier–Stokes problem with loads `f_+`, `f_-` and conormal jump `psi`.
pub fn solve_ns_transmission(
    problem: &NsProblem,
    load_inner: &[f64],
    load_outer: &[f64],
    psi: &[f64],
    opts: &PicardOptions,
) -> Result<(NsSolution, NsTransmissionReport), NsError> {
    let f = transmission_load(problem.space, load_inner, load_outer, psi);
    let sol = problem.solve(&f, None, opts)?;
    let rep = check_transmission(problem, &sol, load_inner, load_outer, psi)?;
    Ok((sol, rep))
}

/// Post-hoc transmission conditions of a Navier–Stokes solution.
pub fn check_transmission(
    problem: &NsProblem,
    sol: &NsSolution,
    load_inner: &[f64],
    load_outer: &[f64],
    psi: &[f64],
) -> Result<NsTransmissionReport, NsError> {
    let sp = problem.space;
    let state = TwoSided::continuous(sol.u.clone(), sol.p.clone());
    let trace_jump = sparse::max_abs(&state.trace_jump(sp));
    let li = sparse::add(load_inner, &convection_load(sp, &sol.u, &sol.u, Some(Region::Inner)));
    let lo = sparse::add(load_outer, &convection_load(sp, &sol.u, &sol.u, Some(Region::Outer)));
    let (tp, tm) = conormals(sp, problem.forms, &state, &li, &lo, false);
    let norms = TraceNorms::new(problem.forms)?;
    let r = norms.minus_half(&sparse::sub(&sparse::sub(&tp, &tm), psi));
    let s = norms.minus_half(psi);
    Ok(NsTransmissionReport { trace_jump, conormal_jump_residual: if s > 0.0 { r / s } else { r } })
}
