//! Conforming P1 elements on the unit half disk and Rayleigh-quotient
//! minimisation for the trace, Hardy and boundary Hardy constants.
//!
//! Weights depend on `y` only. Element integrals are taken slice by slice in
//! `y`: pieces that touch `Σ` use Gauss–Jacobi rules carrying the singular
//! power, the others a Gauss–Legendre rule in `log y`. Power weights are thus
//! integrated exactly up to rounding.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use sprs::{CsMat, FillInReduction, TriMat};
use sprs_ldl::{Ldl, LdlNumeric};
use thiserror::Error;

use crate::assembly::DiscreteField;
use crate::quadrature::{gauss_jacobi_left, gauss_legendre};
use crate::report::Table;
use crate::special::{self, PotentialKind, SpecialError, WeightFamily};

pub const EIGEN_TOL: f64 = 1e-10;
pub const RESIDUAL_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 50_000;
const RULE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("mesh size must lie in (0, 1/2], got {0}")]
    Mesh(f64),
    #[error("weight y^{power} is not integrable against the element basis")]
    NonIntegrable { power: f64 },
    #[error("boundary mass is singular: the start vector has zero trace")]
    SingularMass,
    #[error("inverse iteration stopped after {iterations} steps with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("factorisation failed: {0}")]
    Factorization(String),
    #[error("point ({0}, {1}) lies outside the mesh")]
    Outside(f64, f64),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

type Smooth = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A weight `scale · y^power · s(y)` with `s` bounded and positive near `y = 0`.
#[derive(Clone)]
pub struct Profile {
    pub label: String,
    pub scale: f64,
    pub power: f64,
    smooth: Option<Smooth>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Profile({})", self.label)
    }
}

impl Profile {
    pub fn power(p: f64) -> Self {
        Self {
            label: format!("y^{p}"),
            scale: 1.0,
            power: p,
            smooth: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            label: format!("{c}"),
            scale: c,
            power: 0.0,
            smooth: None,
        }
    }

    pub fn custom(label: impl Into<String>, power: f64, s: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            scale: 1.0,
            power,
            smooth: Some(Arc::new(s)),
        }
    }

    /// `ρ_ε^a`.
    pub fn rho(family: WeightFamily) -> Self {
        let label = format!("rho(a={},eps={})", family.a, family.eps);
        if family.eps == 0.0 {
            let scale = family.rho(1.0).unwrap_or(1.0);
            return Self {
                label,
                scale,
                power: family.a,
                smooth: None,
            };
        }
        Self::custom(label, 0.0, move |y| family.rho(y).unwrap_or(f64::NAN))
    }

    /// `ω_ε^a`.
    pub fn omega(family: WeightFamily) -> Self {
        let label = format!("omega(a={},eps={})", family.a, family.eps);
        if family.eps == 0.0 {
            let scale = family.omega(1.0).unwrap_or(1.0);
            return Self {
                label,
                scale,
                power: 2.0 - family.a,
                smooth: None,
            };
        }
        Self::custom(label, 2.0, move |y| family.omega(y).unwrap_or(f64::NAN) / (y * y))
    }

    /// `(ω_ε^a)^{-1}`.
    pub fn omega_inverse(family: WeightFamily) -> Self {
        let o = Self::omega(family);
        Self {
            label: format!("1/{}", o.label),
            scale: 1.0 / o.scale,
            power: -o.power,
            smooth: o.smooth.map(|s| Arc::new(move |y: f64| 1.0 / s(y)) as Smooth),
        }
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self.label = format!("{c}*{}", self.label);
        self
    }

    /// The profile times `y^q`.
    pub fn times_power(mut self, q: f64) -> Self {
        self.power += q;
        self.label = format!("{}*y^{q}", self.label);
        self
    }

    pub fn eval(&self, y: f64) -> f64 {
        let s = self.smooth.as_ref().map_or(1.0, |s| s(y));
        self.scale * y.powf(self.power) * s
    }

    fn smooth_at(&self, y: f64) -> f64 {
        self.smooth.as_ref().map_or(1.0, |s| s(y))
    }
}

/// `∫_{y0}^{y1} g(y) f(y) dy`; when `y0 = 0` the integrand is `g(y) y^m · (f(y)/y^m)`
/// and `f` is assumed to vanish to order `m` there.
fn piece<const N: usize>(g: &Profile, y0: f64, y1: f64, m: i32, f: impl Fn(f64) -> [f64; N]) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    if y1 <= y0 {
        return Ok(out);
    }
    if y0 == 0.0 {
        let beta = g.power + m as f64;
        if beta <= -1.0 {
            return Err(SpectralError::NonIntegrable { power: g.power });
        }
        let (t, w) = gauss_jacobi_left(RULE, beta);
        let c = g.scale * y1.powf(beta + 1.0);
        for (t, w) in t.iter().zip(&w) {
            let y = y1 * t;
            let v = f(y);
            let k = c * w * g.smooth_at(y) / y.powi(m);
            for (o, v) in out.iter_mut().zip(v) {
                *o += k * v;
            }
        }
    } else {
        let (s, w) = gl();
        let len = (y1 / y0).ln();
        for (s, w) in s.iter().zip(w) {
            let y = y0 * (0.5 * len * (1.0 + s)).exp();
            let v = f(y);
            let k = 0.5 * len * w * g.eval(y) * y;
            for (o, v) in out.iter_mut().zip(v) {
                *o += k * v;
            }
        }
    }
    Ok(out)
}

fn gl() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE_GL: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE_GL.get_or_init(|| gauss_legendre(RULE))
}

/// Polar P1 mesh of `{x² + y² ≤ 1, y ≥ 0}`: `rings` circles of nodes and a
/// fan of triangles at the origin.
#[derive(Debug, Clone)]
pub struct HalfDiskMesh {
    pub h: f64,
    pub rings: usize,
    pub sectors: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Chords of the outer arc.
    pub arc_edges: Vec<[usize; 2]>,
    pub on_sigma: Vec<bool>,
    pub on_arc: Vec<bool>,
}

impl HalfDiskMesh {
    /// Radial spacing `h` and `3/h` angular sectors, so outer elements are close to square.
    pub fn polar(h: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 0.5) {
            return Err(SpectralError::Mesh(h));
        }
        let rings = (1.0 / h).round() as usize;
        let sectors = 3 * rings;
        let dt = std::f64::consts::PI / sectors as f64;
        let mut nodes = vec![[0.0, 0.0]];
        let mut on_sigma = vec![true];
        let mut on_arc = vec![false];
        for i in 1..=rings {
            let r = i as f64 / rings as f64;
            for j in 0..=sectors {
                let t = j as f64 * dt;
                let y = if j == 0 || j == sectors { 0.0 } else { r * t.sin() };
                let x = if j == 0 {
                    r
                } else if j == sectors {
                    -r
                } else {
                    r * t.cos()
                };
                nodes.push([x, y]);
                on_sigma.push(j == 0 || j == sectors);
                on_arc.push(i == rings);
            }
        }
        let id = |i: usize, j: usize| if i == 0 { 0 } else { 1 + (i - 1) * (sectors + 1) + j };
        let mut triangles = Vec::with_capacity(2 * rings * sectors);
        for j in 0..sectors {
            triangles.push([0, id(1, j), id(1, j + 1)]);
        }
        for i in 1..rings {
            for j in 0..sectors {
                let (a, b, c, d) = (id(i, j), id(i, j + 1), id(i + 1, j), id(i + 1, j + 1));
                triangles.push([a, c, d]);
                triangles.push([a, d, b]);
            }
        }
        let arc_edges = (0..sectors).map(|j| [id(rings, j), id(rings, j + 1)]).collect();
        Ok(Self {
            h: 1.0 / rings as f64,
            rings,
            sectors,
            nodes,
            triangles,
            arc_edges,
            on_sigma,
            on_arc,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn id(&self, i: usize, j: usize) -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * (self.sectors + 1) + j
        }
    }

    /// Triangle containing `(x, y)` and its barycentric coordinates; points
    /// between a chord and the arc are extrapolated from the nearest element.
    pub fn locate(&self, x: f64, y: f64) -> Result<([usize; 3], [f64; 3])> {
        let r = x.hypot(y);
        if y < -1e-12 || r > 1.0 + 1e-9 {
            return Err(SpectralError::Outside(x, y));
        }
        let t = y.max(0.0).atan2(x);
        let i = ((r * self.rings as f64).floor() as usize).min(self.rings - 1);
        let j = ((t / std::f64::consts::PI * self.sectors as f64).floor() as usize).min(self.sectors - 1);
        let cands: Vec<[usize; 3]> = if i == 0 {
            vec![[0, self.id(1, j), self.id(1, j + 1)]]
        } else {
            let (a, b, c, d) = (self.id(i, j), self.id(i, j + 1), self.id(i + 1, j), self.id(i + 1, j + 1));
            vec![[a, c, d], [a, d, b]]
        };
        let mut best: Option<([usize; 3], [f64; 3], f64)> = None;
        for tri in cands {
            let l = self.barycentric(tri, x, y);
            let m = l.iter().cloned().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((tri, l, m));
            }
        }
        let (tri, l, _) = best.expect("candidate triangles");
        Ok((tri, l))
    }

    fn barycentric(&self, tri: [usize; 3], x: f64, y: f64) -> [f64; 3] {
        let [p0, p1, p2] = tri.map(|k| self.nodes[k]);
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let l1 = ((x - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (y - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (y - p0[1]) - (x - p0[0]) * (p1[1] - p0[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }
}

struct Element {
    p: [[f64; 2]; 3],
    grad: [[f64; 2]; 3],
    order: [usize; 3],
}

impl Element {
    fn new(p: [[f64; 2]; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grad = [[0.0; 2]; 3];
        for k in 0..3 {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            grad[k] = [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
        }
        let mut order = [0, 1, 2];
        order.sort_by(|&u, &v| p[u][1].total_cmp(&p[v][1]));
        Self { p, grad, order }
    }

    fn phi(&self, k: usize, x: f64, y: f64) -> f64 {
        1.0 + self.grad[k][0] * (x - self.p[k][0]) + self.grad[k][1] * (y - self.p[k][1])
    }

    fn edge_x(&self, u: usize, v: usize, y: f64) -> f64 {
        let (a, b) = (self.p[u], self.p[v]);
        a[0] + (b[0] - a[0]) * (y - a[1]) / (b[1] - a[1])
    }

    /// Horizontal slice `[x_l, x_r]` at height `y` within piece `lower`.
    fn slice(&self, y: f64, lower: bool) -> (f64, f64) {
        let [a, b, c] = self.order;
        let long = self.edge_x(a, c, y);
        let short = if lower { self.edge_x(a, b, y) } else { self.edge_x(b, c, y) };
        (long.min(short), long.max(short))
    }

    fn pieces(&self) -> [(f64, f64, bool); 2] {
        let [a, b, c] = self.order;
        [(self.p[a][1], self.p[b][1], true), (self.p[b][1], self.p[c][1], false)]
    }

    fn weighted_area(&self, g: &Profile) -> Result<f64> {
        let mut total = 0.0;
        for (y0, y1, lower) in self.pieces() {
            let [v] = piece(g, y0, y1, 0, |y| {
                let (l, r) = self.slice(y, lower);
                [r - l]
            })?;
            total += v;
        }
        Ok(total)
    }

    /// `∫ g φ_i φ_j`; with `m = 2` only pairs of nodes off `Σ` are meaningful.
    fn weighted_mass(&self, g: &Profile, m: i32) -> Result<[f64; 9]> {
        let mut total = [0.0; 9];
        for (y0, y1, lower) in self.pieces() {
            let v = piece(g, y0, y1, if y0 == 0.0 { m } else { 0 }, |y| {
                let (l, r) = self.slice(y, lower);
                let xm = 0.5 * (l + r);
                let mut out = [0.0; 9];
                let pl = [0, 1, 2].map(|k| self.phi(k, l, y));
                let pm = [0, 1, 2].map(|k| self.phi(k, xm, y));
                let pr = [0, 1, 2].map(|k| self.phi(k, r, y));
                for i in 0..3 {
                    for j in 0..3 {
                        out[3 * i + j] = (r - l) / 6.0 * (pl[i] * pl[j] + 4.0 * pm[i] * pm[j] + pr[i] * pr[j]);
                    }
                }
                out
            })?;
            for (t, v) in total.iter_mut().zip(v) {
                *t += v;
            }
        }
        Ok(total)
    }
}

/// Entries in full node numbering.
type Triplets = Vec<(usize, usize, f64)>;

fn stiffness(mesh: &HalfDiskMesh, g: &Profile) -> Result<Triplets> {
    let parts: Vec<Triplets> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let e = Element::new(tri.map(|k| mesh.nodes[k]));
            let w = e.weighted_area(g)?;
            let mut out = Vec::with_capacity(9);
            for i in 0..3 {
                for j in 0..3 {
                    let d = e.grad[i][0] * e.grad[j][0] + e.grad[i][1] * e.grad[j][1];
                    out.push((tri[i], tri[j], w * d));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

fn singular(g: &Profile) -> bool {
    g.power <= -1.0
}

fn volume_mass(mesh: &HalfDiskMesh, g: &Profile) -> Result<Triplets> {
    let m = if singular(g) { 2 } else { 0 };
    let parts: Vec<Triplets> = mesh
        .triangles
        .par_iter()
        .map(|tri| {
            let e = Element::new(tri.map(|k| mesh.nodes[k]));
            let v = e.weighted_mass(g, m)?;
            let mut out = Vec::with_capacity(9);
            for i in 0..3 {
                for j in 0..3 {
                    if m > 0 && (mesh.on_sigma[tri[i]] || mesh.on_sigma[tri[j]]) {
                        continue;
                    }
                    out.push((tri[i], tri[j], v[3 * i + j]));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(parts.concat())
}

/// `∫_{arc} g φ_i φ_j` along the chords.
fn arc_mass(mesh: &HalfDiskMesh, g: &Profile) -> Result<Triplets> {
    let mut out = Vec::with_capacity(4 * mesh.arc_edges.len());
    let (s, w) = gl();
    for &[p, q] in &mesh.arc_edges {
        let (a, b) = (mesh.nodes[p], mesh.nodes[q]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let sp = mesh.on_sigma[p];
        let sq = mesh.on_sigma[q];
        if sp || sq {
            // only the free end carries a basis function that matters
            let (free, yf) = if sp { (q, b[1]) } else { (p, a[1]) };
            let beta = g.power + 2.0;
            if beta <= -1.0 {
                return Err(SpectralError::NonIntegrable { power: g.power });
            }
            let (t, wt) = gauss_jacobi_left(RULE, beta);
            let mut v = 0.0;
            for (t, wt) in t.iter().zip(&wt) {
                v += wt * g.smooth_at(yf * t);
            }
            out.push((free, free, len * g.scale * yf.powf(g.power) * v));
            if !singular(g) {
                // products with the Σ end, integrable here
                let mut c = 0.0;
                let mut d = 0.0;
                let (t, wt) = gauss_jacobi_left(RULE, g.power);
                for (t, wt) in t.iter().zip(&wt) {
                    let k = wt * g.smooth_at(yf * t);
                    c += k * t * (1.0 - t);
                    d += k * (1.0 - t) * (1.0 - t);
                }
                let f = len * g.scale * yf.powf(g.power);
                let s_end = if sp { p } else { q };
                out.push((free, s_end, f * c));
                out.push((s_end, free, f * c));
                out.push((s_end, s_end, f * d));
            }
            continue;
        }
        let mut m = [0.0; 3];
        for (s, w) in s.iter().zip(w) {
            let t = 0.5 * (1.0 + s);
            let y = a[1] + (b[1] - a[1]) * t;
            let k = 0.5 * w * len * g.eval(y);
            m[0] += k * (1.0 - t) * (1.0 - t);
            m[1] += k * t * (1.0 - t);
            m[2] += k * t * t;
        }
        out.extend([(p, p, m[0]), (p, q, m[1]), (q, p, m[1]), (q, q, m[2])]);
    }
    Ok(out)
}

/// Index map from full node numbering onto the unknowns selected by `keep`.
struct Dofs {
    index: Vec<Option<usize>>,
    nodes: Vec<usize>,
}

impl Dofs {
    fn new(mesh: &HalfDiskMesh, keep: impl Fn(usize) -> bool) -> Self {
        let mut index = vec![None; mesh.len()];
        let mut nodes = Vec::new();
        for (k, slot) in index.iter_mut().enumerate() {
            if keep(k) {
                *slot = Some(nodes.len());
                nodes.push(k);
            }
        }
        Self { index, nodes }
    }

    fn matrix(&self, parts: &[&Triplets]) -> CsMat<f64> {
        let n = self.nodes.len();
        let mut t = TriMat::new((n, n));
        for part in parts {
            for &(i, j, v) in part.iter() {
                if let (Some(a), Some(b)) = (self.index[i], self.index[j]) {
                    t.add_triplet(a, b, v);
                }
            }
        }
        t.to_csc()
    }
}

fn factor(k: &CsMat<f64>) -> Result<LdlNumeric<f64, usize>> {
    Ldl::new()
        .fill_in_reduction(FillInReduction::ReverseCuthillMcKee)
        .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
        .numeric(k.view())
        .map_err(|e| SpectralError::Factorization(e.to_string()))
}

fn spmv(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    sprs::prod::mul_acc_mat_vec_csc(a.view(), x, &mut y[..]);
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A piecewise linear field on a [`HalfDiskMesh`].
#[derive(Debug, Clone)]
pub struct NodalField {
    pub mesh: Arc<HalfDiskMesh>,
    pub values: Vec<f64>,
}

impl NodalField {
    pub fn sample(mesh: &Arc<HalfDiskMesh>, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            mesh: mesh.clone(),
            values: mesh.nodes.iter().map(|p| f(p[0], p[1])).collect(),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let (tri, l) = self.mesh.locate(x, y)?;
        Ok((0..3).map(|k| l[k] * self.values[tri[k]]).sum())
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "y", "value"]).meta("h", self.mesh.h).meta("nodes", self.mesh.len());
        for (p, v) in self.mesh.nodes.iter().zip(&self.values) {
            t.push_numbers(&[p[0], p[1], *v]);
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    pub a: f64,
    pub eps_or_r: f64,
    pub grid_h: f64,
    pub eigenvector: NodalField,
    pub quotient_id: String,
    /// `‖K v − λ M v‖ / ‖K v‖`.
    pub residual: f64,
    pub iterations: usize,
}

/// Numerator of a quotient.
#[derive(Debug, Clone)]
pub enum Energy {
    /// `∫ g |∇u|²`.
    Direct(Profile),
    /// The flattened form `∫ |∇v|² + V v² + ∫_{arc} W v²` of the given kind.
    Flat { kind: PotentialKind, a: f64, eps: f64 },
}

/// Denominator of a quotient.
#[derive(Debug, Clone)]
pub enum Norm {
    Volume(Profile),
    Arc(Profile),
}

fn potential_profiles(kind: PotentialKind, a: f64, eps: f64) -> Result<(Profile, Profile)> {
    // validate once so that closures never see a domain error
    special::potentials(kind, a, eps, 0.5)?;
    let v = Profile::custom(format!("y^2 V[{kind:?}](a={a},eps={eps})"), -2.0, move |y| {
        y * y * special::potentials(kind, a, eps, y).map_or(f64::NAN, |p| p.0)
    });
    let w = Profile::custom(format!("W[{kind:?}](a={a},eps={eps})"), 0.0, move |y| {
        if y <= 0.0 {
            return 0.0;
        }
        special::potentials(kind, a, eps, y).map_or(f64::NAN, |p| p.1)
    });
    Ok((v, w))
}

fn energy_parts(mesh: &HalfDiskMesh, energy: &Energy) -> Result<Vec<Triplets>> {
    match energy {
        Energy::Direct(g) => Ok(vec![stiffness(mesh, g)?]),
        Energy::Flat { kind, a, eps } => {
            let (v, w) = potential_profiles(*kind, *a, *eps)?;
            let v = if *eps == 0.0 {
                // exact power law: keep the constant so Gauss–Jacobi stays exact
                let c = v.smooth_at(1.0);
                Profile::power(-2.0).scaled(c)
            } else {
                v
            };
            Ok(vec![stiffness(mesh, &Profile::constant(1.0))?, volume_mass(mesh, &v)?, arc_mass(mesh, &w)?])
        }
    }
}

/// Smallest `λ` with `K v = λ M v` over nodal functions vanishing on `Σ`.
pub fn minimize(mesh: &Arc<HalfDiskMesh>, energy: &Energy, norm: &Norm) -> Result<(f64, NodalField, f64, usize)> {
    let dofs = Dofs::new(mesh, |k| !mesh.on_sigma[k]);
    let parts = energy_parts(mesh, energy)?;
    let k = dofs.matrix(&parts.iter().collect::<Vec<_>>());
    let m_parts = match norm {
        Norm::Volume(g) => volume_mass(mesh, g)?,
        Norm::Arc(g) => arc_mass(mesh, g)?,
    };
    let m = dofs.matrix(&[&m_parts]);
    let ldl = factor(&k)?;
    let n = dofs.nodes.len();
    let mut x = vec![1.0; n];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let mx = spmv(&m, &x);
        let mn = dot(&x, &mx);
        if !(mn > 0.0) {
            return Err(SpectralError::SingularMass);
        }
        let mut y = ldl.solve(&mx);
        let s = dot(&y, &spmv(&m, &y)).sqrt();
        if !(s > 0.0) || !s.is_finite() {
            return Err(SpectralError::SingularMass);
        }
        y.iter_mut().for_each(|v| *v /= s);
        x = y;
        let kx = spmv(&k, &x);
        let mx = spmv(&m, &x);
        lambda = dot(&x, &kx) / dot(&x, &mx);
        let r: Vec<f64> = kx.iter().zip(&mx).map(|(k, m)| k - lambda * m).collect();
        residual = l2(&r) / l2(&kx);
        iterations = it;
        let settled = (lambda - last).abs() <= EIGEN_TOL * lambda.abs();
        if residual <= RESIDUAL_TOL || (settled && residual <= 1e-8) {
            break;
        }
        last = lambda;
    }
    if residual > 1e-8 {
        return Err(SpectralError::NoConvergence { iterations, residual });
    }
    // deterministic sign: positive sum
    if x.iter().sum::<f64>() < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    let mut values = vec![0.0; mesh.len()];
    for (d, &node) in dofs.nodes.iter().enumerate() {
        values[node] = x[d];
    }
    Ok((lambda, NodalField { mesh: mesh.clone(), values }, residual, iterations))
}

fn result(mesh: &Arc<HalfDiskMesh>, energy: Energy, norm: Norm, id: String, a: f64, eps_or_r: f64) -> Result<EigenResult> {
    let (lambda, eigenvector, residual, iterations) = minimize(mesh, &energy, &norm)?;
    Ok(EigenResult {
        lambda,
        a,
        eps_or_r,
        grid_h: mesh.h,
        eigenvector,
        quotient_id: id,
        residual,
        iterations,
    })
}

/// `min ∫ ρ_ε^b |∇u|² / ∫_{arc} ρ_ε^b u²` with `u = 0` on `Σ`. For `b ≤ -1`
/// the weight is not integrable and the flattened form in `v = (ρ_ε^b)^{1/2} u` is used.
pub fn trace_eigen(b: f64, eps: f64, h: f64) -> Result<EigenResult> {
    if b >= 1.0 {
        return Err(SpectralError::Domain(format!("weight exponent must be < 1, got {b}")));
    }
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    trace_eigen_on(&mesh, b, eps)
}

pub fn trace_eigen_on(mesh: &Arc<HalfDiskMesh>, b: f64, eps: f64) -> Result<EigenResult> {
    let fam = WeightFamily::new(b, eps);
    let (energy, norm, id) = if b <= -1.0 {
        (
            Energy::Flat {
                kind: PotentialKind::Rho,
                a: b,
                eps,
            },
            Norm::Arc(Profile::constant(1.0)),
            "trace_flat",
        )
    } else {
        (Energy::Direct(Profile::rho(fam)), Norm::Arc(Profile::rho(fam)), "trace")
    };
    result(mesh, energy, norm, id.into(), b, eps)
}

/// `min ∫ ω^{-1} |∇u|² / ∫_{arc} ω^{-1} u²` in flattened form; tends to `3 - a`.
pub fn trace_eigen_omega(a: f64, eps: f64, h: f64) -> Result<EigenResult> {
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    trace_eigen_omega_on(&mesh, a, eps)
}

pub fn trace_eigen_omega_on(mesh: &Arc<HalfDiskMesh>, a: f64, eps: f64) -> Result<EigenResult> {
    result(
        mesh,
        Energy::Flat {
            kind: PotentialKind::OmegaInverse,
            a,
            eps,
        },
        Norm::Arc(Profile::constant(1.0)),
        "trace_omega".into(),
        a,
        eps,
    )
}

/// `min ∫ w |∇u|² / ∫ (w/y²) u²` with `u = 0` on `Σ` only.
pub fn hardy_quotient(weight: &Profile, h: f64) -> Result<EigenResult> {
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    hardy_quotient_on(&mesh, weight)
}

pub fn hardy_quotient_on(mesh: &Arc<HalfDiskMesh>, weight: &Profile) -> Result<EigenResult> {
    result(
        mesh,
        Energy::Direct(weight.clone()),
        Norm::Volume(weight.clone().times_power(-2.0)),
        format!("hardy[{}]", weight.label),
        weight.power,
        f64::NAN,
    )
}

/// `min ∫ w |∇v|² / ∫_{arc} (w/y) v²`.
pub fn boundary_hardy_quotient(weight: &Profile, h: f64) -> Result<EigenResult> {
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    result(
        &mesh,
        Energy::Direct(weight.clone()),
        Norm::Arc(weight.clone().times_power(-1.0)),
        format!("boundary_hardy[{}]", weight.label),
        weight.power,
        f64::NAN,
    )
}

/// The boundary Hardy quotient for `w = ρ_ε^a`; flattened when `a ≤ -1`.
pub fn boundary_hardy_rho(a: f64, eps: f64, h: f64) -> Result<EigenResult> {
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    let fam = WeightFamily::new(a, eps);
    if a > -1.0 {
        return result(
            &mesh,
            Energy::Direct(Profile::rho(fam)),
            Norm::Arc(Profile::rho(fam).times_power(-1.0)),
            "boundary_hardy_rho".into(),
            a,
            eps,
        );
    }
    result(
        &mesh,
        Energy::Flat {
            kind: PotentialKind::Rho,
            a,
            eps,
        },
        Norm::Arc(Profile::power(-1.0)),
        "boundary_hardy_rho_flat".into(),
        a,
        eps,
    )
}

/// The boundary Hardy quotient for `w = (ω_ε^a)^{-1}`, in the variable `v = ω^{-1/2} u`.
pub fn boundary_hardy_omega_inverse(a: f64, eps: f64, h: f64) -> Result<EigenResult> {
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    result(
        &mesh,
        Energy::Flat {
            kind: PotentialKind::OmegaInverse,
            a,
            eps,
        },
        Norm::Arc(Profile::power(-1.0)),
        "boundary_hardy_omega_inverse".into(),
        a,
        eps,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepForm {
    /// Weight `(1/r² + y²)^{a/2}`, limit `1 - a`.
    Rho,
    /// Weight `(ω_{1/r}^a)^{-1}`, limit `3 - a`.
    OmegaInverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub lambda: f64,
    pub residual: f64,
}

/// `λ_r` along increasing `r`, with `ε = 1/r`.
pub fn eigen_stability_sweep(a: f64, r_list: &[f64], form: SweepForm, h: f64) -> Result<Vec<SweepRow>> {
    if r_list.windows(2).any(|w| w[1] <= w[0]) || r_list.iter().any(|r| !(*r > 0.0)) {
        return Err(SpectralError::Domain("r_list must be positive and increasing".into()));
    }
    if form == SweepForm::Rho && !(a > -1.0 && a < 1.0) {
        return Err(SpectralError::Domain(format!("rho sweep needs a in (-1, 1), got {a}")));
    }
    let mesh = Arc::new(HalfDiskMesh::polar(h)?);
    r_list
        .par_iter()
        .map(|&r| {
            let e = match form {
                SweepForm::Rho => trace_eigen_on(&mesh, a, 1.0 / r)?,
                SweepForm::OmegaInverse => trace_eigen_omega_on(&mesh, a, 1.0 / r)?,
            };
            Ok(SweepRow {
                r,
                lambda: e.lambda,
                residual: e.residual,
            })
        })
        .collect()
}

/// The CSV layout shared by all eigenvalue tables.
pub fn eigen_table(rows: &[EigenResult]) -> Table {
    let mut t = Table::new(&["quotient_id", "a", "eps_or_r", "h", "lambda", "residual"]);
    for e in rows {
        t.push(vec![
            e.quotient_id.clone(),
            crate::report::sig(e.a),
            crate::report::sig(e.eps_or_r),
            crate::report::sig(e.grid_h),
            crate::report::sig(e.lambda),
            crate::report::sig(e.residual),
        ]);
    }
    t
}

/// Solves `-div(g ∇u) = 0` in the half disk with `u = trace` on the arc and on `Σ`.
pub fn solve_dirichlet(mesh: &Arc<HalfDiskMesh>, g: &Profile, trace: impl Fn(f64, f64) -> f64) -> Result<NodalField> {
    let boundary = |k: usize| mesh.on_sigma[k] || mesh.on_arc[k];
    let dofs = Dofs::new(mesh, |k| !boundary(k));
    let parts = stiffness(mesh, g)?;
    let k = dofs.matrix(&[&parts]);
    let mut values: Vec<f64> = mesh
        .nodes
        .iter()
        .enumerate()
        .map(|(i, p)| if boundary(i) { trace(p[0], p[1]) } else { 0.0 })
        .collect();
    let mut rhs = vec![0.0; dofs.nodes.len()];
    for &(i, j, v) in &parts {
        if let (Some(a), None) = (dofs.index[i], dofs.index[j]) {
            rhs[a] -= v * values[j];
        }
    }
    let x = factor(&k)?.solve(&rhs);
    for (d, &node) in dofs.nodes.iter().enumerate() {
        values[node] = x[d];
    }
    Ok(NodalField { mesh: mesh.clone(), values })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRow {
    pub r: f64,
    pub h: f64,
    pub normalized: f64,
}

/// `H(r) = r^{-(n+a)} ∫_{∂B_r ∩ {y>0}} y^a u²` by the trapezoid rule in the
/// angle, and `H(r) / r^{2(1-a)}`, for `n = 1`.
pub fn growth_monitor(u: impl Fn(f64, f64) -> Result<f64>, a: f64, r_list: &[f64], samples: usize) -> Result<Vec<GrowthRow>> {
    let samples = samples.max(8);
    let dt = std::f64::consts::PI / samples as f64;
    r_list
        .iter()
        .map(|&r| {
            let mut s = 0.0;
            // end points lie on Σ where u vanishes
            for k in 1..samples {
                let t = k as f64 * dt;
                let (x, y) = (r * t.cos(), r * t.sin());
                let v = u(x, y)?;
                s += y.powf(a) * v * v;
            }
            let h = r.powf(-(1.0 + a)) * s * r * dt;
            Ok(GrowthRow {
                r,
                h,
                normalized: h / r.powf(2.0 * (1.0 - a)),
            })
        })
        .collect()
}

/// Largest relative drop of the normalised column between consecutive radii.
pub fn growth_worst_drop(rows: &[GrowthRow]) -> f64 {
    rows.windows(2)
        .map(|w| (w[0].normalized - w[1].normalized) / w[0].normalized.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

/// Largest relative deviation of the normalised column from its first entry.
pub fn growth_spread(rows: &[GrowthRow]) -> f64 {
    let first = rows.first().map_or(1.0, |r| r.normalized);
    rows.iter()
        .map(|r| ((r.normalized - first) / first).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    ToFlat,
    FromFlat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsometryKind {
    /// `v = ρ^{1/2} u`.
    Rho,
    /// `v = ω^{-1/2} u`.
    OmegaInverse,
}

fn isometry_factor(family: &WeightFamily, kind: IsometryKind, y: f64) -> Result<f64> {
    let y = y.abs();
    let f = match kind {
        IsometryKind::Rho => family.rho(y)?.sqrt(),
        IsometryKind::OmegaInverse => family.omega(y)?.powf(-0.5),
    };
    if !f.is_finite() || f <= 0.0 {
        return Err(SpectralError::Domain(format!("isometry factor is singular at y = {y}")));
    }
    Ok(f)
}

/// Pointwise `v = ρ^{1/2} u` (or its inverse) at cell centres.
pub fn isometry_transform(u: &DiscreteField, family: &WeightFamily, kind: IsometryKind, direction: Direction) -> Result<DiscreteField> {
    let grid = &u.grid;
    let values = (0..grid.len())
        .map(|c| {
            let f = isometry_factor(family, kind, grid.y(c))?;
            Ok(match direction {
                Direction::ToFlat => u.values[c] * f,
                Direction::FromFlat => u.values[c] / f,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiscreteField {
        grid: grid.clone(),
        values,
        parity: u.parity,
    })
}

/// `(∫ ρ |∇u|², Q_ρ(ρ^{1/2} u))` for the nodal interpolant of `u`.
pub fn energy_identity(mesh: &Arc<HalfDiskMesh>, family: WeightFamily, u: impl Fn(f64, f64) -> f64) -> Result<(f64, f64)> {
    let all = Dofs::new(mesh, |_| true);
    let un: Vec<f64> = mesh.nodes.iter().map(|p| u(p[0], p[1])).collect();
    let k = all.matrix(&[&stiffness(mesh, &Profile::rho(family))?]);
    let direct = dot(&un, &spmv(&k, &un));
    let vn: Vec<f64> = mesh
        .nodes
        .iter()
        .zip(&un)
        .map(|(p, u)| {
            if p[1] <= 0.0 && family.eps == 0.0 {
                Ok(0.0)
            } else {
                Ok(u * isometry_factor(&family, IsometryKind::Rho, p[1])?)
            }
        })
        .collect::<Result<_>>()?;
    let parts = energy_parts(
        mesh,
        &Energy::Flat {
            kind: PotentialKind::Rho,
            a: family.a,
            eps: family.eps,
        },
    )?;
    let q = all.matrix(&parts.iter().collect::<Vec<_>>());
    let flat = dot(&vn, &spmv(&q, &vn));
    Ok((direct, flat))
}
