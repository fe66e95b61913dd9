//! Viscosity coefficient tensors `a_ij^{ab}(x)`: construction, symmetry and
//! ellipticity diagnostics, adjoints, and the principal symbol of the Stokes
//! system.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::Region;

/// Absolute tolerance for the index-swap symmetry identities.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    Dimension(usize),
    #[error("non-positive viscosity {value} at {at}")]
    NonPositiveViscosity { value: f64, at: String },
    #[error("tensor violates the index-swap symmetry by {violation:e} at {at}")]
    NotSymmetric { violation: f64, at: String },
    #[error("non-finite tensor entry at {0}")]
    NotFinite(String),
    #[error("direction must be nonzero")]
    ZeroDirection,
    #[error("no sample points given")]
    NoSamples,
    #[error("tensor table entry {0:?} has an index outside 1..=dim")]
    BadIndex([usize; 4]),
}

/// Constant coefficient array `a_ij^{ab}` for one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Entries {
    dim: usize,
    data: Vec<f64>,
}

impl Entries {
    pub fn zeros(dim: usize) -> Self {
        Entries { dim, data: vec![0.0; dim.pow(4)] }
    }

    /// `a_ij^{ab} = lambda d_ia d_jb + mu (d_aj d_bi + d_ab d_ij)`.
    pub fn isotropic(dim: usize, mu: f64, lambda: f64) -> Self {
        let mut e = Entries::zeros(dim);
        let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
        for i in 0..dim {
            for j in 0..dim {
                for a in 0..dim {
                    for b in 0..dim {
                        let v = lambda * d(i, a) * d(j, b) + mu * (d(a, j) * d(b, i) + d(a, b) * d(i, j));
                        e.set(i, j, a, b, v);
                    }
                }
            }
        }
        e
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, a: usize, b: usize) -> usize {
        ((i * self.dim + j) * self.dim + a) * self.dim + b
    }

    /// Entry `a_ij^{ab}` (zero-based indices).
    #[inline]
    pub fn get(&self, i: usize, j: usize, a: usize, b: usize) -> f64 {
        self.data[self.idx(i, j, a, b)]
    }

    pub fn set(&mut self, i: usize, j: usize, a: usize, b: usize, v: f64) {
        let k = self.idx(i, j, a, b);
        self.data[k] = v;
    }

    /// Adds `v` to `a_ij^{ab}` and to every distinct entry reached from it by
    /// the swaps `i <-> a` and `j <-> b`, so a symmetric tensor stays symmetric.
    pub fn add_symmetric(&mut self, i: usize, j: usize, a: usize, b: usize, v: f64) {
        let mut orbit = vec![[i, j, a, b], [a, j, i, b], [i, b, a, j], [a, b, i, j]];
        orbit.sort_unstable();
        orbit.dedup();
        for [p, q, r, s] in orbit {
            let k = self.idx(p, q, r, s);
            self.data[k] += v;
        }
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `a*_ij^{ab} = a_ji^{ba}`.
    pub fn adjoint(&self) -> Entries {
        let n = self.dim;
        let mut out = Entries::zeros(n);
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        out.set(i, j, a, b, self.get(j, i, b, a));
                    }
                }
            }
        }
        out
    }

    /// Largest deviation from `a_ij^{ab} = a_aj^{ib} = a_ib^{aj}`.
    pub fn symmetry_violation(&self) -> f64 {
        let n = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for a in 0..n {
                    for b in 0..n {
                        let v = self.get(i, j, a, b);
                        worst = worst.max((v - self.get(a, j, i, b)).abs());
                        worst = worst.max((v - self.get(i, b, a, j)).abs());
                    }
                }
            }
        }
        worst
    }

    /// `a_ij^{ab} x_{ia} y_{jb}` for row-major `n x n` matrices.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for a in 0..n {
                let xi = x[i * n + a];
                if xi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    for b in 0..n {
                        s += self.get(i, j, a, b) * xi * y[j * n + b];
                    }
                }
            }
        }
        s
    }

    /// The same form evaluated through the swapped index order `a_aj^{ib}`.
    pub fn bilinear_swapped(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for a in 0..n {
                for j in 0..n {
                    for b in 0..n {
                        s += self.get(a, j, i, b) * x[i * n + a] * y[j * n + b];
                    }
                }
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Scalar coefficient used to build isotropic tensors.
#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    PerRegion { inner: f64, outer: f64 },
    Function(Arc<dyn Fn(&[f64], Region) -> f64 + Send + Sync>),
}

impl ScalarField {
    pub fn at(&self, x: &[f64], region: Region) -> f64 {
        match self {
            ScalarField::Constant(v) => *v,
            ScalarField::PerRegion { inner, outer } => match region {
                Region::Inner => *inner,
                Region::Outer => *outer,
            },
            ScalarField::Function(f) => f(x, region),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant(v) => write!(f, "Constant({v})"),
            ScalarField::PerRegion { inner, outer } => write!(f, "PerRegion({inner}, {outer})"),
            ScalarField::Function(_) => write!(f, "Function(..)"),
        }
    }
}

#[derive(Clone)]
enum Kind {
    Constant(Entries),
    PerRegion { inner: Entries, outer: Entries },
    Function(Arc<dyn Fn(&[f64], Region) -> Entries + Send + Sync>),
}

/// A point at which tensor properties are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub region: Region,
}

impl SamplePoint {
    pub fn new(x: &[f64], region: Region) -> Self {
        SamplePoint { x: x.to_vec(), region }
    }
}

impl fmt::Display for SamplePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} ({:?})", self.x, self.region)
    }
}

/// Viscosity coefficient tensor on the composite domain.
#[derive(Clone)]
pub struct CoeffTensor {
    dim: usize,
    kind: Kind,
    pub label: String,
}

impl fmt::Debug for CoeffTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Constant(_) => "constant",
            Kind::PerRegion { .. } => "per_region",
            Kind::Function(_) => "function",
        };
        write!(f, "CoeffTensor {{ dim: {}, kind: {kind}, label: {:?} }}", self.dim, self.label)
    }
}

impl CoeffTensor {
    /// Wraps fixed entries without validation (used e.g. for degenerate test tensors).
    pub fn constant(entries: Entries, label: &str) -> Self {
        CoeffTensor { dim: entries.dim, kind: Kind::Constant(entries), label: label.to_string() }
    }

    pub fn per_region(inner: Entries, outer: Entries, label: &str) -> Self {
        assert_eq!(inner.dim, outer.dim, "region tensors must share a dimension");
        CoeffTensor { dim: inner.dim, kind: Kind::PerRegion { inner, outer }, label: label.to_string() }
    }

    pub fn function(
        dim: usize,
        f: impl Fn(&[f64], Region) -> Entries + Send + Sync + 'static,
        label: &str,
    ) -> Self {
        CoeffTensor { dim, kind: Kind::Function(Arc::new(f)), label: label.to_string() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entries at a point of the given region.
    pub fn at(&self, x: &[f64], region: Region) -> Entries {
        match &self.kind {
            Kind::Constant(e) => e.clone(),
            Kind::PerRegion { inner, outer } => match region {
                Region::Inner => inner.clone(),
                Region::Outer => outer.clone(),
            },
            Kind::Function(f) => f(x, region),
        }
    }

    /// True when the entries do not depend on position within a region.
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self.kind, Kind::Function(_))
    }

    /// The adjoint tensor `a*_ij^{ab} = a_ji^{ba}`.
    pub fn adjoint(&self) -> CoeffTensor {
        let kind = match &self.kind {
            Kind::Constant(e) => Kind::Constant(e.adjoint()),
            Kind::PerRegion { inner, outer } => {
                Kind::PerRegion { inner: inner.adjoint(), outer: outer.adjoint() }
            }
            Kind::Function(f) => {
                let f = f.clone();
                Kind::Function(Arc::new(move |x: &[f64], r| f(x, r).adjoint()))
            }
        };
        CoeffTensor { dim: self.dim, kind, label: format!("adjoint({})", self.label) }
    }

    /// Scales every entry by `s`.
    pub fn scaled(&self, s: f64) -> CoeffTensor {
        let sc = |e: &Entries| Entries { dim: e.dim, data: e.data.iter().map(|v| v * s).collect() };
        let kind = match &self.kind {
            Kind::Constant(e) => Kind::Constant(sc(e)),
            Kind::PerRegion { inner, outer } => Kind::PerRegion { inner: sc(inner), outer: sc(outer) },
            Kind::Function(f) => {
                let f = f.clone();
                Kind::Function(Arc::new(move |x: &[f64], r| {
                    let e = f(x, r);
                    Entries { dim: e.dim, data: e.data.iter().map(|v| v * s).collect() }
                }))
            }
        };
        CoeffTensor { dim: self.dim, kind, label: format!("{}*{s}", self.label) }
    }

    /// `max |a_ij^{ab}|` over the samples (the L-infinity norm surrogate).
    pub fn norm(&self, samples: &[SamplePoint]) -> f64 {
        samples.iter().fold(0.0, |m, s| m.max(self.at(&s.x, s.region).max_abs()))
    }

    /// True when `a_ij^{ab} = a_ji^{ba}` at every sample.
    pub fn is_self_adjoint(&self, samples: &[SamplePoint]) -> bool {
        samples.iter().all(|s| {
            let e = self.at(&s.x, s.region);
            let d = e.adjoint();
            e.data.iter().zip(&d.data).all(|(a, b)| (a - b).abs() <= SYMMETRY_TOL)
        })
    }
}

/// Builds the isotropic tensor; `mu` must be positive at every sample (and
/// everywhere, for constant and per-region coefficients).
pub fn make_isotropic(
    dim: usize,
    mu: ScalarField,
    lambda: ScalarField,
    samples: &[SamplePoint],
) -> Result<CoeffTensor, TensorError> {
    if dim != 2 && dim != 3 {
        return Err(TensorError::Dimension(dim));
    }
    let check = |v: f64, at: String| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(TensorError::NonPositiveViscosity { value: v, at })
        }
    };
    match &mu {
        ScalarField::Constant(v) => check(*v, "everywhere".into())?,
        ScalarField::PerRegion { inner, outer } => {
            check(*inner, "inner region".into())?;
            check(*outer, "outer region".into())?;
        }
        ScalarField::Function(f) => {
            for s in samples {
                check(f(&s.x, s.region), s.to_string())?;
            }
        }
    }
    let label = format!("isotropic(mu={mu:?}, lambda={lambda:?})");
    Ok(match (&mu, &lambda) {
        (ScalarField::Constant(m), ScalarField::Constant(l)) => {
            CoeffTensor::constant(Entries::isotropic(dim, *m, *l), &label)
        }
        (ScalarField::Function(_), _) | (_, ScalarField::Function(_)) => CoeffTensor::function(
            dim,
            move |x, r| Entries::isotropic(dim, mu.at(x, r), lambda.at(x, r)),
            &label,
        ),
        _ => {
            let probe = [0.0; 3];
            CoeffTensor::per_region(
                Entries::isotropic(dim, mu.at(&probe, Region::Inner), lambda.at(&probe, Region::Inner)),
                Entries::isotropic(dim, mu.at(&probe, Region::Outer), lambda.at(&probe, Region::Outer)),
                &label,
            )
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    pub symmetric: bool,
    pub max_violation: f64,
    pub worst_point: Option<SamplePoint>,
}

pub fn check_symmetry(tensor: &CoeffTensor, samples: &[SamplePoint]) -> Result<SymmetryReport, TensorError> {
    if samples.is_empty() {
        return Err(TensorError::NoSamples);
    }
    let mut worst = 0.0;
    let mut worst_point = None;
    for s in samples {
        let e = tensor.at(&s.x, s.region);
        if !e.is_finite() {
            return Err(TensorError::NotFinite(s.to_string()));
        }
        let v = e.symmetry_violation();
        if v > worst || worst_point.is_none() {
            worst = v.max(worst);
            worst_point = Some(s.clone());
        }
    }
    Ok(SymmetryReport { symmetric: worst <= SYMMETRY_TOL, max_violation: worst, worst_point })
}

/// Orthonormal basis (Frobenius inner product) of symmetric trace-free
/// `n x n` matrices, row-major: normalized off-diagonal pairs first, then the
/// Helmert-type diagonal combinations.
pub fn trace_free_basis(dim: usize) -> Vec<Vec<f64>> {
    let mut basis = Vec::new();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..dim {
        for j in (i + 1)..dim {
            let mut m = vec![0.0; dim * dim];
            m[i * dim + j] = s;
            m[j * dim + i] = s;
            basis.push(m);
        }
    }
    for k in 1..dim {
        let norm = ((k * (k + 1)) as f64).sqrt();
        let mut m = vec![0.0; dim * dim];
        for l in 0..k {
            m[l * dim + l] = 1.0 / norm;
        }
        m[k * dim + k] = -(k as f64) / norm;
        basis.push(m);
    }
    basis
}

#[derive(Clone, Debug, Serialize)]
pub struct EllipticityReport {
    /// Best sampled constant `c_A^{-1}` (clamped at zero).
    pub c_inv: f64,
    /// Smallest eigenvalue before clamping.
    pub min_eigenvalue: f64,
    pub worst_point: SamplePoint,
    /// Row-major symmetric trace-free unit matrix attaining the minimum.
    pub worst_direction: Vec<f64>,
    pub elliptic: bool,
}

impl EllipticityReport {
    /// `c_A = 1 / c_inv` (infinite when not elliptic).
    pub fn c_a(&self) -> f64 {
        if self.c_inv > 0.0 {
            1.0 / self.c_inv
        } else {
            f64::INFINITY
        }
    }
}

/// Smallest eigenvalue of the symmetric part of the quadratic form restricted
/// to symmetric trace-free matrices, at one point. Returns (eigenvalue, unit direction).
pub fn pointwise_ellipticity(e: &Entries) -> (f64, Vec<f64>) {
    let n = e.dim();
    let basis = trace_free_basis(n);
    let m = basis.len();
    let mut g = DMatrix::<f64>::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            g[(p, q)] = e.bilinear(&basis[p], &basis[q]);
        }
    }
    let gs = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gs);
    let (k, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let mut dir = vec![0.0; n * n];
    for p in 0..m {
        let c = eig.eigenvectors[(p, k)];
        for (d, b) in dir.iter_mut().zip(&basis[p]) {
            *d += c * b;
        }
    }
    (lmin, dir)
}

pub fn ellipticity_constant(
    tensor: &CoeffTensor,
    samples: &[SamplePoint],
) -> Result<EllipticityReport, TensorError> {
    let sym = check_symmetry(tensor, samples)?;
    if !sym.symmetric {
        return Err(TensorError::NotSymmetric {
            violation: sym.max_violation,
            at: sym.worst_point.map(|p| p.to_string()).unwrap_or_default(),
        });
    }
    let mut best: Option<(f64, Vec<f64>, SamplePoint)> = None;
    for s in samples {
        let (l, d) = pointwise_ellipticity(&tensor.at(&s.x, s.region));
        if best.as_ref().map_or(true, |b| l < b.0) {
            best = Some((l, d, s.clone()));
        }
    }
    let (l, d, p) = best.expect("samples checked nonempty");
    let c_inv = l.max(0.0);
    Ok(EllipticityReport { c_inv, min_eigenvalue: l, worst_point: p, worst_direction: d, elliptic: c_inv > 0.0 })
}

/// Modified (real) principal symbol of the Stokes system.
#[derive(Clone, Debug)]
pub struct AdnSymbol {
    /// `(n+1) x (n+1)` matrix.
    pub matrix: DMatrix<f64>,
    pub point: SamplePoint,
    pub direction: Vec<f64>,
}

impl AdnSymbol {
    pub fn determinant(&self) -> f64 {
        self.matrix.clone().lu().determinant()
    }
}

pub fn adn_symbol(tensor: &CoeffTensor, at: &SamplePoint, xi: &[f64]) -> Result<AdnSymbol, TensorError> {
    let n = tensor.dim();
    if xi.len() != n {
        return Err(TensorError::Dimension(xi.len()));
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Err(TensorError::ZeroDirection);
    }
    let e = tensor.at(&at.x, at.region);
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    for l in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += xi[a] * e.get(l, j, a, b) * xi[b];
                }
            }
            m[(l, j)] = s;
        }
        m[(l, n)] = -xi[l];
        m[(n, l)] = -xi[l];
    }
    Ok(AdnSymbol { matrix: m, point: at.clone(), direction: xi.to_vec() })
}

#[derive(Clone, Debug, Serialize)]
pub struct AdnReport {
    pub pass: bool,
    pub directions_tested: usize,
    pub failures: usize,
    /// Minimum of `|det| / scale` over all tested (point, direction) pairs.
    pub min_scaled_det: f64,
    pub worst_point: Option<SamplePoint>,
    pub worst_direction: Vec<f64>,
}

/// Uniformly distributed unit vectors from a seeded generator.
pub fn random_unit_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr_normal();
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if r > 1e-8 {
                break v.into_iter().map(|x| x / r).collect();
            }
        })
        .collect()
}

// Box-Muller normal sampler; avoids an extra distribution crate for one use.
fn rand_distr_normal() -> impl Fn(&mut ChaCha8Rng) -> f64 {
    |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Checks nonsingularity of the symbol at every sample for `n_directions`
/// random unit directions: `|det| > 1e-10 * scale`, `scale = max|a|^(n-1)`.
pub fn adn_ellipticity_check(
    tensor: &CoeffTensor,
    samples: &[SamplePoint],
    n_directions: usize,
    seed: u64,
) -> AdnReport {
    let n = tensor.dim();
    let dirs = random_unit_vectors(n, n_directions.max(1), seed);
    let mut failures = 0;
    let mut min_scaled = f64::INFINITY;
    let mut worst_point = None;
    let mut worst_direction = Vec::new();
    for s in samples {
        let scale = tensor.at(&s.x, s.region).max_abs().powi(n as i32 - 1);
        for xi in &dirs {
            let sym = adn_symbol(tensor, s, xi).expect("unit direction");
            let det = sym.determinant().abs();
            let scaled = if scale > 0.0 { det / scale } else { 0.0 };
            if !(scaled > 1e-10) {
                failures += 1;
            }
            if scaled < min_scaled {
                min_scaled = scaled;
                worst_point = Some(s.clone());
                worst_direction = xi.clone();
            }
        }
    }
    AdnReport {
        pass: failures == 0 && !samples.is_empty(),
        directions_tested: dirs.len() * samples.len(),
        failures,
        min_scaled_det: min_scaled,
        worst_point,
        worst_direction,
    }
}

/// Declarative tensor description used by configuration files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub kind: TensorKindSpec,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub mu_inner: Option<f64>,
    #[serde(default)]
    pub mu_outer: Option<f64>,
    #[serde(default)]
    pub lambda_inner: Option<f64>,
    #[serde(default)]
    pub lambda_outer: Option<f64>,
    /// `[i, j, a, b, value]` with one-based indices; for `table` these are
    /// added (with their symmetry mates) on top of the isotropic base given by
    /// `mu`/`lambda` (zero when absent).
    #[serde(default)]
    pub entries: Vec<[f64; 5]>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum TensorKindSpec {
    Isotropic,
    PerRegion,
    Table,
}

impl TensorSpec {
    pub fn isotropic(mu: f64, lambda: f64) -> Self {
        TensorSpec {
            kind: TensorKindSpec::Isotropic,
            mu: Some(mu),
            lambda: Some(lambda),
            mu_inner: None,
            mu_outer: None,
            lambda_inner: None,
            lambda_outer: None,
            entries: Vec::new(),
        }
    }

    pub fn build(&self, dim: usize) -> Result<CoeffTensor, TensorError> {
        match self.kind {
            TensorKindSpec::Isotropic => make_isotropic(
                dim,
                ScalarField::Constant(self.mu.unwrap_or(1.0)),
                ScalarField::Constant(self.lambda.unwrap_or(0.0)),
                &[],
            ),
            TensorKindSpec::PerRegion => {
                let mu = self.mu.unwrap_or(1.0);
                let lambda = self.lambda.unwrap_or(0.0);
                make_isotropic(
                    dim,
                    ScalarField::PerRegion {
                        inner: self.mu_inner.unwrap_or(mu),
                        outer: self.mu_outer.unwrap_or(mu),
                    },
                    ScalarField::PerRegion {
                        inner: self.lambda_inner.unwrap_or(lambda),
                        outer: self.lambda_outer.unwrap_or(lambda),
                    },
                    &[],
                )
            }
            TensorKindSpec::Table => {
                if dim != 2 && dim != 3 {
                    return Err(TensorError::Dimension(dim));
                }
                let mut e = Entries::isotropic(dim, self.mu.unwrap_or(0.0), self.lambda.unwrap_or(0.0));
                for row in &self.entries {
                    let idx = [row[0], row[1], row[2], row[3]].map(|v| v as usize);
                    if idx.iter().zip(&row[..4]).any(|(&i, &r)| i < 1 || i > dim || r.fract() != 0.0) {
                        return Err(TensorError::BadIndex(idx));
                    }
                    e.add_symmetric(idx[0] - 1, idx[1] - 1, idx[2] - 1, idx[3] - 1, row[4]);
                }
                Ok(CoeffTensor::constant(e, "table"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin(dim: usize) -> Vec<SamplePoint> {
        vec![SamplePoint::new(&vec![0.0; dim], Region::Inner), SamplePoint::new(&vec![2.0; dim], Region::Outer)]
    }

    #[test]
    fn isotropic_entries() {
        let e = Entries::isotropic(3, 1.0, 0.0);
        assert_eq!(e.get(0, 0, 0, 0), 2.0);
        // (i, alpha) = (1, 2), (j, beta) = (1, 2) and (2, 1), one-based
        assert_eq!(e.get(0, 0, 1, 1), 1.0);
        assert_eq!(e.get(0, 1, 1, 0), 1.0);
        assert_eq!(e.get(0, 1, 0, 1), 0.0);
        assert_eq!(e.symmetry_violation(), 0.0);
    }

    #[test]
    fn basis_is_orthonormal_and_trace_free() {
        for dim in [2, 3] {
            let b = trace_free_basis(dim);
            assert_eq!(b.len(), dim * (dim + 1) / 2 - 1);
            for (p, bp) in b.iter().enumerate() {
                let tr: f64 = (0..dim).map(|i| bp[i * dim + i]).sum();
                assert!(tr.abs() < 1e-15);
                for (q, bq) in b.iter().enumerate() {
                    let ip: f64 = bp.iter().zip(bq).map(|(x, y)| x * y).sum();
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn isotropic_ellipticity_is_two_mu() {
        for dim in [2, 3] {
            let t = make_isotropic(dim, ScalarField::Constant(0.7), ScalarField::Constant(5.0), &[]).unwrap();
            let r = ellipticity_constant(&t, &origin(dim)).unwrap();
            assert!((r.c_inv - 1.4).abs() < 1e-10);
            assert!(r.elliptic);
        }
    }

    #[test]
    fn zero_mu_is_not_elliptic() {
        let t = CoeffTensor::constant(Entries::isotropic(3, 0.0, 0.0), "zero");
        let r = ellipticity_constant(&t, &origin(3)).unwrap();
        assert_eq!(r.c_inv, 0.0);
        assert!(!r.elliptic);
    }

    #[test]
    fn non_positive_mu_rejected() {
        let err = make_isotropic(2, ScalarField::PerRegion { inner: 1.0, outer: -1.0 }, ScalarField::Constant(0.0), &[]);
        assert!(matches!(err, Err(TensorError::NonPositiveViscosity { .. })));
    }

    #[test]
    fn perturbed_entry_breaks_symmetry() {
        let mut e = Entries::isotropic(2, 1.0, 0.0);
        e.set(0, 1, 0, 0, e.get(0, 1, 0, 0) + 0.1);
        let t = CoeffTensor::constant(e, "bad");
        let r = check_symmetry(&t, &origin(2)).unwrap();
        assert!(!r.symmetric);
        assert!(matches!(ellipticity_constant(&t, &origin(2)), Err(TensorError::NotSymmetric { .. })));
    }

    #[test]
    fn per_region_isotropic_is_symmetric() {
        let t = make_isotropic(2, ScalarField::PerRegion { inner: 1.0, outer: 3.0 }, ScalarField::Constant(0.0), &[])
            .unwrap();
        let r = check_symmetry(&t, &origin(2)).unwrap();
        assert!(r.symmetric && r.max_violation == 0.0);
        let ell = ellipticity_constant(&t, &origin(2)).unwrap();
        assert!((ell.c_inv - 2.0).abs() < 1e-12);
        assert_eq!(ell.worst_point.region, Region::Inner);
    }

    #[test]
    fn adjoint_involution_and_isotropic_fixed_point() {
        let mut e = Entries::isotropic(2, 1.0, 0.3);
        e.add_symmetric(0, 0, 0, 1, 0.2);
        let t = CoeffTensor::constant(e.clone(), "ns");
        let tt = t.adjoint().adjoint();
        assert_eq!(tt.at(&[0.0, 0.0], Region::Inner), e);
        let iso = Entries::isotropic(3, 2.0, 1.0);
        assert_eq!(iso.adjoint(), iso);
        assert!(!t.is_self_adjoint(&origin(2)));
    }

    #[test]
    fn adn_symbol_isotropic_e1() {
        let t = make_isotropic(3, ScalarField::Constant(1.0), ScalarField::Constant(0.0), &[]).unwrap();
        let s = adn_symbol(&t, &origin(3)[0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.matrix[(0, 0)], 2.0);
        assert_eq!(s.matrix[(1, 1)], 1.0);
        assert_eq!(s.matrix[(2, 2)], 1.0);
        assert_eq!(s.matrix[(0, 3)], -1.0);
        assert!((s.determinant() + 1.0).abs() < 1e-12);
        assert!(matches!(adn_symbol(&t, &origin(3)[0], &[0.0; 3]), Err(TensorError::ZeroDirection)));
    }

    #[test]
    fn table_spec_adds_symmetry_mates() {
        let spec = TensorSpec {
            kind: TensorKindSpec::Table,
            mu: Some(1.0),
            lambda: Some(0.0),
            entries: vec![[1.0, 1.0, 1.0, 2.0, 0.25]],
            ..TensorSpec::isotropic(1.0, 0.0)
        };
        let t = spec.build(2).unwrap();
        let e = t.at(&[0.0, 0.0], Region::Inner);
        assert_eq!(e.get(0, 0, 0, 1), 0.25);
        assert_eq!(e.get(0, 1, 0, 0), 0.25);
        assert_eq!(e.get(0, 0, 1, 0), 0.0);
        assert_eq!(e.symmetry_violation(), 0.0);
    }
}
