//! Invariants as property tests, plus the sampling and rescaling oracles.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anisostokes::expr::Expr;
use anisostokes::fem::assemble::load_vector;
use anisostokes::fem::convection::{convection_load, div_norm, l4_norm};
use anisostokes::fem::{assemble, AssembledForms, Gauge, MixedSpace, PressureMode, SpaceOptions};
use anisostokes::mesh::{build_composite, MeshSpec, Region};
use anisostokes::nstokes::{NsProblem, PicardOptions};
use anisostokes::potentials::PotentialContext;
use anisostokes::sparse;
use anisostokes::tensor::{CoeffTensor, Entries, SamplePoint};

fn skewed() -> CoeffTensor {
    let mut e = Entries::isotropic(2, 1.0, 0.3);
    e.add_symmetric(0, 0, 0, 1, 0.25);
    CoeffTensor::constant(e, "skewed")
}

fn ctx() -> &'static PotentialContext {
    static CTX: OnceLock<PotentialContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let mesh = Arc::new(build_composite(&MeshSpec::new(2, 1.5, 0.3)).unwrap());
        PotentialContext::new(&skewed(), mesh, PressureMode::Continuous).unwrap()
    })
}

fn ns() -> &'static (MixedSpace, AssembledForms) {
    static NS: OnceLock<(MixedSpace, AssembledForms)> = OnceLock::new();
    NS.get_or_init(|| {
        let mesh = Arc::new(build_composite(&MeshSpec::new(2, 1.5, 0.3)).unwrap());
        let sp = MixedSpace::new(mesh, SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
        let f = assemble(&CoeffTensor::constant(Entries::isotropic(2, 1.0, 0.0), "iso"), &sp).unwrap();
        (sp, f)
    })
}

fn trace_from(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>() - 0.5).collect()
}

fn entries_from(dim: usize, vals: &[f64]) -> Entries {
    let mut e = Entries::zeros(dim);
    let n = dim.pow(4);
    for (k, v) in vals.iter().take(n).enumerate() {
        let (i, j, a, b) = (k / dim.pow(3), (k / dim.pow(2)) % dim, (k / dim) % dim, k % dim);
        e.set(i, j, a, b, *v);
    }
    e
}

proptest! {
    #[test]
    fn adjoint_is_an_involution(vals in prop::collection::vec(-3.0f64..3.0, 81), dim in 2usize..=3) {
        let e = entries_from(dim, &vals);
        prop_assert_eq!(e.adjoint().adjoint(), e);
    }

    #[test]
    fn symmetric_additions_keep_symmetry(adds in prop::collection::vec((0usize..3, 0usize..3, 0usize..3, 0usize..3, -1.0f64..1.0), 1..12)) {
        let mut e = Entries::isotropic(3, 1.0, 0.5);
        for (i, j, a, b, v) in adds {
            e.add_symmetric(i, j, a, b, v);
        }
        prop_assert!(e.symmetry_violation() <= 1e-14);
    }

    #[test]
    fn expression_display_round_trips(a in -5.0f64..5.0, b in -5.0f64..5.0, k in 0i32..4, x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let src = format!("{a}*x^{k} - sin({b}*y) + exp(x*y)/(2 + y^2)");
        let e = Expr::parse(&src).unwrap();
        let again = Expr::parse(&e.to_string()).unwrap();
        let p = [x, y];
        prop_assert!((e.eval(&p) - again.eval(&p)).abs() <= 1e-12 * (1.0 + e.eval(&p).abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn single_layer_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let c = ctx();
        let (p1, p2) = (trace_from(s1, c.n_trace()), trace_from(s2, c.n_trace()));
        let mut comb = sparse::scaled(a, &p1);
        sparse::axpy(b, &p2, &mut comb);
        let lhs = c.sl_operator(&comb).unwrap();
        let mut rhs = sparse::scaled(a, &c.sl_operator(&p1).unwrap());
        sparse::axpy(b, &c.sl_operator(&p2).unwrap(), &mut rhs);
        prop_assert!(sparse::max_abs(&sparse::sub(&lhs, &rhs)) <= 1e-10 * sparse::max_abs(&rhs).max(1e-300));
    }

    #[test]
    fn trace_inverts_nodal_lifting(seed in any::<u64>()) {
        let c = ctx();
        let phi = trace_from(seed, c.n_trace());
        prop_assert_eq!(c.space.trace(&c.space.nodal_lifting(&phi)), phi);
    }

    #[test]
    fn double_layer_jump_is_minus_density(seed in any::<u64>()) {
        let c = ctx();
        let phi = trace_from(seed, c.n_trace());
        let w = c.double_layer(&phi).unwrap();
        let jump = w.state.trace_jump(&c.space);
        prop_assert!(sparse::max_abs(&sparse::add(&jump, &phi)) <= 1e-12 * sparse::max_abs(&phi));
    }

    #[test]
    fn margin_is_homogeneous(s in 0.01f64..10.0) {
        let (sp, f) = ns();
        let p = NsProblem::new(sp, f, 0.5, 2.0).unwrap();
        let load = load_vector(sp, None, &|x| vec![x[1], 1.0 - x[0]]);
        let m1 = p.uniqueness_margin(0.4, &load);
        let ms = p.uniqueness_margin(0.4, &sparse::scaled(s, &load));
        prop_assert!((ms - s * m1).abs() <= 1e-12 * ms);
    }
}

#[test]
fn dual_norm_dominates_sampled_quotients() {
    let (sp, f) = ns();
    let p = NsProblem::new(sp, f, 0.5, 2.0).unwrap();
    let load = load_vector(sp, None, &|x| vec![(2.0 * x[0]).sin(), x[0] * x[1]]);
    let dual = p.dual_norm(&load);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut best: f64 = 0.0;
    for _ in 0..1000 {
        let v: Vec<f64> = sp.constrained.iter().map(|&c| if c { 0.0 } else { rng.random::<f64>() - 0.5 }).collect();
        best = best.max(sparse::dot(&load, &v).abs() / p.grad_norm(&v));
    }
    assert!(best <= dual * (1.0 + 1e-12), "{best} > {dual}");
    // The supremum is attained at the Riesz representative.
    let solver = anisostokes::saddle::VelocityNorm::new(sp, f).unwrap();
    let r = solver.riesz(&load);
    let attained = sparse::dot(&load, &r) / p.grad_norm(&r);
    assert!((attained - dual).abs() <= 1e-10 * dual);
}

#[test]
fn embedding_constant_scales_with_the_domain() {
    let mesh = build_composite(&MeshSpec::new(2, 1.5, 0.3)).unwrap();
    let iso = CoeffTensor::constant(Entries::isotropic(2, 1.0, 0.0), "iso");
    let estimate = |s: f64| {
        let mut m = mesh.clone();
        m.vertices.iter_mut().for_each(|v| v.iter_mut().for_each(|x| *x *= s));
        let sp = MixedSpace::new(Arc::new(m), SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
        let f = assemble(&iso, &sp).unwrap();
        NsProblem::new(&sp, &f, 0.5, 2.0).unwrap().embedding_constant(3, 25, 5).c
    };
    let (c1, c2) = (estimate(1.0), estimate(2.0));
    // |v|_L4 / |grad v| scales like s^(1 - n/4) under x -> s x.
    let want = 2f64.powf(1.0 - 2.0 / 4.0);
    assert!((c2 / c1 - want).abs() <= 1e-8 * want, "{} vs {want}", c2 / c1);
}

#[test]
fn convective_energy_defect_is_controlled_by_divergence() {
    let (sp, f) = ns();
    let p = NsProblem::new(sp, f, 0.5, 2.0).unwrap();
    let load = sparse::scaled(5.0, &load_vector(sp, None, &|x| vec![1.0 - x[1] * x[1], x[0]]));
    let s = p.solve(&load, None, &PicardOptions::default()).unwrap();
    let defect = sparse::dot(&convection_load(sp, &s.u, &s.u, None), &s.u).abs();
    // <(u.grad)u, u> = -1/2 int div(u) |u|^2 for zero-trace u.
    let bound = 0.5 * div_norm(sp, &s.u) * l4_norm(sp, &s.u).powi(2);
    assert!(defect <= bound * (1.0 + 1e-10) + 1e-14, "{defect} > {bound}");
    let (d, div) = p.energy_defect(&s.u);
    assert_eq!(d, defect);
    assert!(div > 0.0);
}

#[test]
fn pressure_recovery_ignores_constant_shifts() {
    let (sp, f) = ns();
    let samples = [SamplePoint::new(&[0.0, 0.0], Region::Inner)];
    let iso = CoeffTensor::constant(Entries::isotropic(2, 1.0, 0.0), "iso");
    let p = NsProblem::from_tensor(sp, f, &iso, &samples).unwrap();
    let load = load_vector(sp, None, &|x| vec![x[1], -x[0]]);
    let s = p.solve(&load, None, &PicardOptions::default()).unwrap();
    let a = p.pressure_recovery_check(&load, &s.u, &s.p, 2, 1).unwrap();
    let shifted: Vec<f64> = s.p.iter().map(|v| v + 3.0).collect();
    let b = p.pressure_recovery_check(&load, &s.u, &shifted, 2, 1).unwrap();
    assert!(a.full_residual <= 1e-9 && (a.full_residual - b.full_residual).abs() <= 1e-9);
    let zero = vec![0.0; sp.n_vel()];
    let z = p.pressure_recovery_check(&zero, &zero, &vec![0.0; sp.n_pres], 2, 1).unwrap();
    assert_eq!(z.full_residual, 0.0);
}
