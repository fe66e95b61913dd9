//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line with the measured quantities.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anisostokes::bvp::{
    mixed_neumann_load, solve_dirichlet, solve_dirichlet_by_potentials, solve_mixed, solve_neumann_by_potentials,
    solve_transmission_direct, solve_transmission_potentials, truncation_study, DirichletData, DirichletDomain,
    LiftingChoice, MixedData, MixedPlacement, TransmissionData,
};
use anisostokes::fem::assemble::{interface_density, load_vector, pressure_load};
use anisostokes::fem::interface::{conormal, HarmonicLifting, Lifting, TraceNorms};
use anisostokes::fem::norms::{h1_error_sq, h1_two_sided_diff};
use anisostokes::fem::{assemble, Constraint, Gauge, MixedSpace, PressureMode, SpaceOptions, TwoSided};
use anisostokes::manufactured::Manufactured;
use anisostokes::mesh::{build_composite, CompositeMesh, HalfSpace, MeshSpec, Region};
use anisostokes::nstokes::{NsProblem, PicardOptions};
use anisostokes::potentials::{
    duality_checks, jump_identities, kernel_checks, random_trace, PotentialContext, BROKEN_MODE_BETA_FLOOR,
};
use anisostokes::saddle::infsup_estimate;
use anisostokes::sparse;
use anisostokes::tensor::{
    adn_ellipticity_check, adn_symbol, ellipticity_constant, make_isotropic, CoeffTensor, Entries, SamplePoint,
    ScalarField,
};

/// Written to the raw stdout handle so the line survives test output capture.
fn verdict(n: usize, title: &str, pass: bool, detail: &str, t0: Instant) -> bool {
    let line = format!(
        "criterion {n}: {} [{title}] {detail} ({:.1} s)\n",
        if pass { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    std::io::stdout().lock().write_all(line.as_bytes()).expect("stdout");
    pass
}

fn coarse_mesh() -> Arc<CompositeMesh> {
    Arc::new(build_composite(&MeshSpec::new(2, 2.0, 0.25)).unwrap())
}

/// Three nested levels of the coarse 2D mesh.
fn levels(spec: &MeshSpec) -> Vec<Arc<CompositeMesh>> {
    let m0 = build_composite(spec).unwrap();
    let m1 = m0.refine();
    let m2 = m1.refine();
    vec![Arc::new(m0), Arc::new(m1), Arc::new(m2)]
}

fn isotropic(dim: usize, mu: f64, lambda: f64) -> CoeffTensor {
    CoeffTensor::constant(Entries::isotropic(dim, mu, lambda), "iso")
}

/// Elliptic, symmetric, but not self-adjoint (`a_ij^{ab} != a_ji^{ba}`).
fn skewed() -> CoeffTensor {
    let mut e = Entries::isotropic(2, 1.0, 0.3);
    e.add_symmetric(0, 0, 0, 1, 0.25);
    CoeffTensor::constant(e, "skewed")
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn rates(e: &[f64]) -> Vec<f64> {
    e.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

fn random_masked(rng: &mut ChaCha8Rng, mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { rng.random::<f64>() - 0.5 } else { 0.0 }).collect()
}

fn random_unit_trace_free(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = rng.random::<f64>() * 2.0 - 1.0;
            z[i * n + j] = v;
            z[j * n + i] = v;
        }
    }
    let tr = (0..n).map(|i| z[i * n + i]).sum::<f64>() / n as f64;
    (0..n).for_each(|i| z[i * n + i] -= tr);
    let r = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter().map(|v| v / r).collect()
}

/// Quadratic form `a_ij^{ab} z_{jb} z_{ia}` evaluated entry by entry.
fn quad_form(e: &Entries, z: &[f64]) -> f64 {
    let n = e.dim();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    s += e.get(i, j, a, b) * z[j * n + b] * z[i * n + a];
                }
            }
        }
    }
    s
}

#[test]
fn criterion_01_ellipticity_oracle() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut worst_iso: f64 = 0.0;
    for dim in [2, 3] {
        for (mu, lambda) in [(1.0, 0.0), (0.37, 2.5), (4.0, -1.0)] {
            let t = isotropic(dim, mu, lambda);
            let r = ellipticity_constant(&t, &[SamplePoint::new(&vec![0.0; dim], Region::Inner)]).unwrap();
            worst_iso = worst_iso.max((r.c_inv - 2.0 * mu).abs());
        }
    }
    ok &= worst_iso <= 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..6 {
        let dim = if trial < 3 { 2 } else { 3 };
        let mut e = Entries::isotropic(dim, 1.0, 0.5);
        for _ in 0..6 {
            let idx: Vec<usize> = (0..4).map(|_| rng.random_range(0..dim)).collect();
            e.add_symmetric(idx[0], idx[1], idx[2], idx[3], 0.15 * (rng.random::<f64>() - 0.5));
        }
        let t = CoeffTensor::constant(e.clone(), "random");
        let r = ellipticity_constant(&t, &[SamplePoint::new(&vec![0.0; dim], Region::Inner)]).unwrap();
        let brute = (0..100_000).map(|_| quad_form(&e, &random_unit_trace_free(dim, &mut rng))).fold(f64::INFINITY, f64::min);
        // The sampled minimum can only sit above the true one.
        ok &= brute >= r.min_eigenvalue - 1e-12;
        worst_gap = worst_gap.max(brute - r.min_eigenvalue);
    }
    ok &= worst_gap <= 1e-3;
    let pass = verdict(1, "ellipticity", ok, &format!("iso err {worst_iso:.1e}, brute-force gap {worst_gap:.1e}"), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 10.0);
}

/// Determinant by cofactor expansion along the first row.
fn cofactor_det(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<f64>> = m[1..].iter().map(|r| r.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| *v).collect()).collect();
            let s = if c % 2 == 0 { 1.0 } else { -1.0 };
            s * m[0][c] * cofactor_det(&minor)
        })
        .sum()
}

#[test]
fn criterion_02_adn_suite() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let points: Vec<SamplePoint> = (0..10)
        .map(|k| SamplePoint::new(&[rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5], if k % 2 == 0 { Region::Inner } else { Region::Outer }))
        .collect();
    let mut ok = true;
    let mut min_det = f64::INFINITY;
    for t in [isotropic(2, 1.0, 0.0), skewed(), isotropic(2, 0.5, 3.0)] {
        let r = adn_ellipticity_check(&t, &points, 1000, 3);
        ok &= r.pass && r.failures == 0 && r.directions_tested >= 1000;
        min_det = min_det.min(r.min_scaled_det);
    }
    let iso3 = isotropic(3, 1.0, 0.0);
    let at = SamplePoint::new(&[0.0, 0.0, 0.0], Region::Inner);
    let sym = adn_symbol(&iso3, &at, &[1.0, 0.0, 0.0]).unwrap();
    // Independent assembly of the bordered symbol and its cofactor determinant.
    let e = Entries::isotropic(3, 1.0, 0.0);
    let mut m = vec![vec![0.0; 4]; 4];
    for l in 0..3 {
        for j in 0..3 {
            m[l][j] = e.get(l, j, 0, 0);
        }
    }
    m[0][3] = -1.0;
    m[3][0] = -1.0;
    let cof = cofactor_det(&m);
    let det = sym.determinant();
    ok &= (det + 1.0).abs() < 1e-12 && (cof + 1.0).abs() < 1e-12;
    let zero_mu = isotropic(2, 0.0, 0.0);
    ok &= make_isotropic(2, ScalarField::Constant(0.0), ScalarField::Constant(0.0), &points).is_err();
    let z = adn_ellipticity_check(&zero_mu, &points, 1000, 3);
    ok &= !z.pass && z.failures == z.directions_tested;
    let pass = verdict(2, "ADN symbol", ok, &format!("min scaled det {min_det:.3e}, det(e1) {det:.12}, cofactor {cof}, mu=0 failures {}/{}", z.failures, z.directions_tested), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn criterion_03_layer_potential_jumps() {
    let t0 = Instant::now();
    let ctx = PotentialContext::new(&skewed(), coarse_mesh(), PressureMode::Continuous).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 6];
    for _ in 0..20 {
        let psi = random_trace(ctx.n_trace(), &mut rng);
        let phi = random_trace(ctx.n_trace(), &mut rng);
        let r = jump_identities(&ctx, &psi, &phi).unwrap();
        for k in 0..6 {
            worst[k] = worst[k].max(r[k]);
        }
    }
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let pass = verdict(3, "jump identities", max <= 1e-10, &format!("worst relative residuals {}", sci(&worst)), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn criterion_04_kernels() {
    let t0 = Instant::now();
    let t = isotropic(2, 1.0, 0.0);
    let ctx = PotentialContext::new(&t, coarse_mesh(), PressureMode::Broken).unwrap();
    let k = kernel_checks(&ctx).unwrap();
    let tol = 1e-8;
    let mut ok = k.sl_normal_velocity <= tol && k.sl_normal_pressure <= tol && k.hypersingular_rigid <= tol && k.dl_rigid_state <= tol;
    let mut seq = Vec::new();
    for mesh in levels(&MeshSpec::new(2, 2.0, 0.25)) {
        let c = PotentialContext::new(&t, mesh, PressureMode::Continuous).unwrap();
        seq.push(kernel_checks(&c).unwrap().sl_normal_trace_half_norm);
    }
    ok &= seq.windows(2).all(|w| w[1] < w[0]);
    let pass = verdict(
        4,
        "kernels",
        ok,
        &format!(
            "broken: V nu {:.1e}, pressure {:.1e}, D(rigid) {:.1e}, W(rigid) {:.1e}; continuous |V nu| {}",
            k.sl_normal_velocity, k.sl_normal_pressure, k.hypersingular_rigid, k.dl_rigid_state, sci(&seq)
        ),
        t0,
    );
    assert!(pass && t0.elapsed().as_secs_f64() < 180.0);
}

#[test]
fn criterion_05_duality() {
    let t0 = Instant::now();
    let mesh = coarse_mesh();
    let mut ok = true;
    let mut detail = String::new();
    for t in [isotropic(2, 1.0, 0.5), skewed()] {
        let ctx = PotentialContext::new(&t, mesh.clone(), PressureMode::Continuous).unwrap();
        let r = duality_checks(&ctx, 20, 11, 1e-9).unwrap();
        ok &= r.pass;
        detail += &format!("{}: V {:.1e}, K {:.1e}; ", t.label, r.single_layer_max, r.double_layer_max);
    }
    let pass = verdict(5, "duality", ok, &detail, t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 90.0);
}

fn random_transmission(ctx: &PotentialContext, seed: u64) -> TransmissionData {
    let sp = &ctx.space;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let load_inner = random_masked(&mut rng, &sp.region_vel_mask(Region::Inner));
    let load_outer = random_masked(&mut rng, &sp.region_vel_mask(Region::Outer));
    let mut data = TransmissionData {
        load_inner,
        load_outer,
        g: random_masked(&mut rng, &vec![true; sp.n_pres]),
        phi: random_trace(sp.n_trace(), &mut rng),
        psi: random_trace(sp.n_trace(), &mut rng),
    };
    data.make_compatible(sp, &ctx.forms);
    data
}

/// Smooth inner state whose pressure vanishes on the interface `|x|_inf = 1/2`.
fn inner_state(tensor: Entries) -> Manufactured {
    Manufactured::parse(tensor, &["sin(x)*cos(y) + x*y", "exp(0.5*x)*y - x^2"], "(x^2 - 0.25)*(y^2 - 0.25)*(1 + x)").unwrap()
}

#[test]
fn criterion_06_green_identity() {
    let t0 = Instant::now();
    let t = skewed();
    let ctx = PotentialContext::new(&t, coarse_mesh(), PressureMode::Continuous).unwrap();
    let data = random_transmission(&ctx, 5);
    let state = solve_transmission_direct(&ctx, &data).unwrap();
    let g = ctx.green_representation(&state, &data.load_inner, &data.load_outer, &data.g, 1e-8).unwrap();
    let mut ok = g.relative <= 1e-8;

    let e = t.at(&[0.0, 0.0], Region::Inner);
    let m = inner_state(e);
    let mut errors = Vec::new();
    for mesh in levels(&MeshSpec::new(2, 2.0, 0.25)) {
        let c = PotentialContext::new(&t, mesh, PressureMode::Continuous).unwrap();
        let sp = &c.space;
        let mut d = TransmissionData::zeros(sp);
        d.load_inner = load_vector(sp, Some(Region::Inner), &|x| m.load(x));
        d.g = pressure_load(sp, Some(Region::Inner), &|x| m.divergence(x));
        d.phi = sp.trace(&sp.interpolate(&|x| m.velocity(x)));
        d.psi = interface_density(sp, &|x, nu| m.traction(x, nu));
        d.make_compatible(sp, &c.forms);
        let rec = solve_transmission_potentials(&c, &d).unwrap();
        let (l2i, h1i) = h1_error_sq(sp, &rec.inner, Some(Region::Inner), &|x| m.velocity(x), &|x| m.gradient(x));
        let zero = |_: &[f64]| vec![0.0; 4];
        let (l2o, h1o) = h1_error_sq(sp, &rec.outer, Some(Region::Outer), &zero, &zero);
        errors.push((l2i + h1i + l2o + h1o).sqrt());
    }
    let r = rates(&errors);
    ok &= r.iter().all(|&v| v >= 1.5);
    let pass = verdict(6, "third Green identity", ok, &format!("discrete reproduction {:.1e}; manufactured H1 errors {}, rates {r:.2?}", g.relative, sci(&errors)), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 300.0);
}

/// `min eig(B X^{-1} B^T, M)` on pressures `M`-orthogonal to constants, from dense matrices.
fn dense_infsup(space: &MixedSpace, forms: &anisostokes::fem::AssembledForms) -> f64 {
    let free: Vec<usize> = (0..space.n_vel()).filter(|&d| !space.constrained[d]).collect();
    let mut pos = vec![usize::MAX; space.n_vel()];
    for (k, &d) in free.iter().enumerate() {
        pos[d] = k;
    }
    let nf = free.len();
    let np = space.n_pres;
    let mut x = DMatrix::<f64>::zeros(nf, nf);
    for (r, c, v) in forms.grad.triplets() {
        if pos[r] != usize::MAX && pos[c] != usize::MAX {
            x[(pos[r], pos[c])] += v;
        }
    }
    let mut bt = DMatrix::<f64>::zeros(nf, np);
    for (q, d, v) in forms.b.triplets() {
        if pos[d] != usize::MAX {
            bt[(pos[d], q)] += v;
        }
    }
    let y = x.cholesky().expect("SPD gradient matrix").solve(&bt);
    let s = bt.transpose() * y;
    let mut mp = DMatrix::<f64>::zeros(np, np);
    for (r, c, v) in forms.pmass.triplets() {
        mp[(r, c)] += v;
    }
    let l = mp.cholesky().expect("SPD pressure mass").l();
    let li = l.clone().try_inverse().unwrap();
    let c = &li * s * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().cloned().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // The first eigenvalue belongs to the constants.
    ev[1].sqrt()
}

#[test]
fn criterion_07_infsup() {
    let t0 = Instant::now();
    let t = isotropic(2, 1.0, 0.0);
    let mut betas = Vec::new();
    let mut dense = 0.0;
    for (k, mesh) in levels(&MeshSpec::new(2, 2.0, 0.25)).into_iter().enumerate() {
        let sp = MixedSpace::new(mesh, SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
        let f = assemble(&t, &sp).unwrap();
        betas.push(infsup_estimate(&sp, &f, true).unwrap().beta);
        if k == 0 {
            dense = dense_infsup(&sp, &f);
        }
    }
    let mut ok = betas.iter().all(|&b| b > 0.0) && betas.windows(2).all(|w| w[1] >= 0.5 * w[0]);
    let agree = (betas[0] - dense).abs() / dense;
    ok &= agree <= 1e-8;
    // Broken pressure mode is admitted exactly when its beta clears the floor.
    let mesh = coarse_mesh();
    let sp = MixedSpace::new(mesh.clone(), SpaceOptions { pressure: PressureMode::Broken, gauge: Gauge::Total, ..Default::default() }).unwrap();
    let f = assemble(&t, &sp).unwrap();
    let beta_broken = infsup_estimate(&sp, &f, true).unwrap().beta;
    let admitted = PotentialContext::new(&t, mesh, PressureMode::Broken).is_ok();
    ok &= admitted == (beta_broken >= BROKEN_MODE_BETA_FLOOR);
    let pass = verdict(7, "inf-sup", ok, &format!("beta_h {betas:.5?}, dense {dense:.10}, agreement {agree:.1e}, broken beta {beta_broken:.4} admitted {admitted}"), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 120.0);
}

#[test]
fn criterion_08_bvp_cross_method() {
    let t0 = Instant::now();
    let t = skewed();
    let mesh = coarse_mesh();
    let ctx = PotentialContext::new(&t, mesh.clone(), PressureMode::Continuous).unwrap();
    let sp = &ctx.space;
    let mut worst_tr: f64 = 0.0;
    for seed in 0..3 {
        let data = random_transmission(&ctx, 100 + seed);
        let a = solve_transmission_direct(&ctx, &data).unwrap();
        let b = solve_transmission_potentials(&ctx, &data).unwrap();
        worst_tr = worst_tr.max(h1_two_sided_diff(&ctx.forms, &a, &b) / h1_two_sided_diff(&ctx.forms, &a, &TwoSided::zeros(sp)));
    }
    let mut ok = worst_tr <= 1e-7;

    // Exterior Dirichlet: direct vs potentials (broken pressure makes the paths coincide).
    let bctx = PotentialContext::new(&t, mesh, PressureMode::Broken).unwrap();
    let bs = &bctx.space;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inside: Vec<bool> = {
        let outer = bs.region_vel_mask(Region::Outer);
        let iface = bs.interface_vel_mask();
        (0..bs.n_vel()).map(|d| outer[d] && !iface[d]).collect()
    };
    let load = random_masked(&mut rng, &inside);
    let mut g = random_masked(&mut rng, &bs.region_pres_mask(Region::Outer));
    let w = bctx.forms.outer.pmass.matvec(&vec![1.0; bs.n_pres]);
    let shift = g.iter().sum::<f64>() / w.iter().sum::<f64>();
    sparse::axpy(-shift, &w, &mut g);
    let phi = bctx.admit_normal_orthogonal(&bctx.sl_operator(&random_trace(bs.n_trace(), &mut rng)).unwrap()).unwrap();
    let dd = DirichletData { load, g, phi };
    let direct = solve_dirichlet(bs, &bctx.forms, DirichletDomain::Exterior, &dd, LiftingChoice::Nodal).unwrap();
    let pot = solve_dirichlet_by_potentials(&bctx, &dd).unwrap();
    let of = &bctx.forms.outer;
    let norm = |v: &[f64]| (of.grad.form(v, v) + of.mass.form(v, v)).sqrt();
    let dir_err = norm(&sparse::sub(&direct.u, &pot.outer)) / norm(&direct.u);
    ok &= dir_err <= 1e-7;

    // Neumann through the hypersingular inverse.
    let raw = random_trace(ctx.n_trace(), &mut rng);
    // Rigid components removed in L2 so the density is admissible.
    let f = ctx.density_to_field(&raw);
    let mi = &ctx.forms.interface.mass;
    let k = ctx.rigid_traces.len();
    let gram = DMatrix::from_fn(k, k, |i, j| mi.form(&ctx.rigid_traces[i], &ctx.rigid_traces[j]));
    let rhs = nalgebra::DVector::from_fn(k, |i, _| mi.form(&ctx.rigid_traces[i], &f));
    let co = gram.lu().solve(&rhs).unwrap();
    let mut ff = f.clone();
    for j in 0..k {
        sparse::axpy(-co[j], &ctx.rigid_traces[j], &mut ff);
    }
    let psi = ctx.field_to_density(&ff);
    let neu = solve_neumann_by_potentials(&ctx, &psi).unwrap();
    ok &= neu.boundary_residual <= 1e-8;

    // Mixed problem on the outer boundary with a manufactured solution.
    let m = Manufactured::parse(t.at(&[0.0, 0.0], Region::Inner), &["sin(x)*cos(y)", "x*y^2 - cos(x)"], "x - y + x*y").unwrap();
    let mut spec = MeshSpec::new(2, 1.5, 0.3);
    spec.neumann = Some(HalfSpace::parse("x>0").unwrap());
    let mut errors = Vec::new();
    for mesh in levels(&spec) {
        let sp = MixedSpace::new(mesh, SpaceOptions { constraint: Constraint::DirichletTagged, gauge: Gauge::None, ..Default::default() }).unwrap();
        let f = assemble(&t, &sp).unwrap();
        let exact = sp.interpolate(&|x| m.velocity(x));
        let dirichlet: Vec<f64> = (0..sp.n_vel()).map(|d| if sp.constrained[d] { exact[d] } else { 0.0 }).collect();
        let data = MixedData {
            load: load_vector(&sp, None, &|x| m.load(x)),
            g: pressure_load(&sp, None, &|x| m.divergence(x)),
            dirichlet,
            neumann: mixed_neumann_load(&sp, MixedPlacement::OuterBoundary, &|x, n| m.traction(x, n)),
        };
        let s = solve_mixed(&sp, &f, MixedPlacement::OuterBoundary, &data).unwrap();
        let (l2, h1) = h1_error_sq(&sp, &s.u, None, &|x| m.velocity(x), &|x| m.gradient(x));
        errors.push((l2 + h1).sqrt());
    }
    ok &= errors.windows(2).all(|w| w[1] < w[0]);
    let pass = verdict(
        8,
        "BVP cross-method",
        ok,
        &format!(
            "transmission {worst_tr:.1e}, exterior Dirichlet {dir_err:.1e}, Neumann datum {:.1e}, mixed H1 errors {} rates {:.2?}",
            neu.boundary_residual,
            sci(&errors),
            rates(&errors)
        ),
        t0,
    );
    assert!(pass && t0.elapsed().as_secs_f64() < 300.0);
}

#[test]
fn criterion_09_navier_stokes_small_data() {
    let t0 = Instant::now();
    let t = isotropic(2, 1.0, 0.0);
    let mesh = Arc::new(build_composite(&MeshSpec::new(2, 1.5, 0.2)).unwrap());
    let sp = MixedSpace::new(mesh, SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
    let forms = assemble(&t, &sp).unwrap();
    let samples = [SamplePoint::new(&[0.0, 0.0], Region::Inner), SamplePoint::new(&[1.0, 0.0], Region::Outer)];
    let p = NsProblem::from_tensor(&sp, &forms, &t, &samples).unwrap();
    let emb = p.embedding_constant(4, 30, 9);
    let base = load_vector(&sp, None, &|x| vec![(3.0 * x[1]).sin() + 1.0, x[0] * x[0] - x[1]]);
    let m0 = p.uniqueness_margin(emb.c, &base);
    let load = sparse::scaled(0.45 / m0, &base);
    let margin = p.uniqueness_margin(emb.c, &load);
    let opts = PicardOptions::default();
    let a = p.solve(&load, None, &opts).unwrap();
    let stokes = p.picard_map(&load, &vec![0.0; sp.n_vel()], false).unwrap().0;
    let b = p.solve(&load, Some(&sparse::scaled(2.0, &stokes)), &opts).unwrap();
    let bounds = p.bounds(&load, &a, emb.c).unwrap();
    let diff = p.grad_norm(&sparse::sub(&a.u, &b.u));
    let max_ratio = a.report.ratios.iter().chain(&b.report.ratios).cloned().fold(0.0, f64::max);
    let mut ok = margin <= 0.5 && max_ratio < 1.0 && bounds.energy_ok && bounds.pressure_ok && diff <= 1e-8;

    // Coarse 3D run: embedding estimate against the Sobolev/Hölder bound, and the a priori bounds.
    let t3 = isotropic(3, 1.0, 0.0);
    let mesh3 = Arc::new(build_composite(&MeshSpec::new(3, 1.0, 0.5)).unwrap());
    let sp3 = MixedSpace::new(mesh3, SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
    let f3 = assemble(&t3, &sp3).unwrap();
    let p3 = NsProblem::from_tensor(&sp3, &f3, &t3, &[SamplePoint::new(&[0.0, 0.0, 0.0], Region::Inner)]).unwrap();
    let emb3 = p3.embedding_constant(3, 20, 4);
    let analytic = emb3.analytic_bound.unwrap();
    let base3 = load_vector(&sp3, None, &|x| vec![1.0 + x[1], x[2] - x[0], 0.5]);
    let load3 = sparse::scaled(0.45 / p3.uniqueness_margin(emb3.c, &base3), &base3);
    let s3 = p3.solve(&load3, None, &opts).unwrap();
    let b3 = p3.bounds(&load3, &s3, emb3.c).unwrap();
    ok &= emb3.c <= analytic && b3.energy_ok && b3.pressure_ok && s3.report.ratios.iter().all(|&r| r < 1.0);
    let pass = verdict(
        9,
        "Navier-Stokes small data",
        ok,
        &format!(
            "c {:.4}, margin {margin:.3}, steps {}/{}, max ratio {max_ratio:.3}, |grad u| {:.4e} <= {:.4e}, |p| {:.4e} <= {:.4e}, guess diff {diff:.1e}; 3D: c {:.4} <= {:.4}, |grad u| {:.3e} <= {:.3e}, |p| {:.3e} <= {:.3e}",
            emb.c, a.report.iterations, b.report.iterations, bounds.grad_u, bounds.energy_bound, bounds.pressure_norm, bounds.pressure_bound,
            emb3.c, analytic, b3.grad_u, b3.energy_bound, b3.pressure_norm, b3.pressure_bound
        ),
        t0,
    );
    assert!(pass && t0.elapsed().as_secs_f64() < 300.0);
}

#[test]
fn criterion_10_truncation() {
    let t0 = Instant::now();
    let t = isotropic(2, 1.0, 0.0);
    let base = MeshSpec::new(2, 4.0, 0.25);
    // Zero net force: a density with a nonzero resultant has no decaying 2D extension.
    let r = truncation_study(&t, &base, &[4.0, 8.0, 16.0], 1.0, &|x, _nu| vec![x[0], -x[1]]).unwrap();
    let pass = verdict(10, "truncation", r.strictly_decreasing, &format!("collar differences {} over {} cells", sci(&r.differences), r.collar_cells), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 600.0);
}

#[test]
fn criterion_11_conormal_consistency() {
    let t0 = Instant::now();
    let t = skewed();
    let m = Manufactured::parse(t.at(&[0.0, 0.0], Region::Inner), &["sin(x + 0.3)*cos(y)", "x*y^2 + exp(0.5*y)"], "x*y + x^3").unwrap();
    let mut errors = Vec::new();
    let mut invariance: f64 = 0.0;
    for mesh in levels(&MeshSpec::new(2, 1.5, 0.25)) {
        let sp = MixedSpace::new(mesh, SpaceOptions { gauge: Gauge::Total, ..Default::default() }).unwrap();
        let f = assemble(&t, &sp).unwrap();
        let load = load_vector(&sp, Some(Region::Inner), &|x| m.load(x));
        let mut g = pressure_load(&sp, Some(Region::Inner), &|x| m.divergence(x));
        let phi = sp.trace(&sp.interpolate(&|x| m.velocity(x)));
        let w = f.inner.pmass.matvec(&vec![1.0; sp.n_pres]);
        let c = (sparse::dot(&f.interface.nu, &phi) - g.iter().sum::<f64>()) / w.iter().sum::<f64>();
        sparse::axpy(c, &w, &mut g);
        let s = solve_dirichlet(&sp, &f, DirichletDomain::Interior, &DirichletData { load: load.clone(), g, phi }, LiftingChoice::Nodal).unwrap();
        let th = conormal(&sp, &f, Region::Inner, &s.u, &s.p, &load, &Lifting::Nodal, false);
        let harmonic = Lifting::Harmonic(Box::new(HarmonicLifting::new(&sp, &f, Region::Inner).unwrap()));
        let th2 = conormal(&sp, &f, Region::Inner, &s.u, &s.p, &load, &harmonic, false);
        invariance = invariance.max(sparse::max_abs(&sparse::sub(&th, &th2)) / sparse::max_abs(&th));
        let exact = interface_density(&sp, &|x, nu| m.traction(x, nu));
        let norms = TraceNorms::new(&f).unwrap();
        errors.push(norms.minus_half(&sparse::sub(&th, &exact)));
    }
    let r = rates(&errors);
    let ok = r.iter().all(|&v| v >= 1.0) && invariance <= 1e-10;
    let pass = verdict(11, "conormal consistency", ok, &format!("trace-dual errors {}, rates {r:.2?}, lifting invariance {invariance:.1e}", sci(&errors)), t0);
    assert!(pass && t0.elapsed().as_secs_f64() < 180.0);
}
