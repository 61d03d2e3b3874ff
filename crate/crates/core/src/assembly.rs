//! Cell-centred finite volumes for `-div(w A ∇u) - w b·∇u + w c u = w f + div(w F)`.
//!
//! Fluxes use a two-point stencil. In `y` the face transmissibility is the
//! continuous harmonic mean `h / ∫ ds / w` along the segment joining the two
//! cell centres, so profiles with constant weighted flux are reproduced
//! exactly. Even problems instead sample the weight at the face, which keeps
//! smooth even profiles second order next to `Σ`. Cell masses are `∫ w` over
//! the cell, and in `x` the weight enters through the harmonic mean of the two
//! cell averages. Off-diagonal entries of `A` use averaged centred differences.
//!
//! Boundary closure on `Σ = {y = 0}`:
//! * odd: `u = 0` on `Σ`, flux through the half segment `[0, h/2]`;
//! * even: zero weighted flux;
//! * none: Dirichlet data on `Σ` as on the outer boundary.
//!
//! Outer faces carry Dirichlet data through the ghost value `2g - u_P`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use sprs::CsMat;
use thiserror::Error;

use crate::field::Sampler;
use crate::geometry::HalfGrid;
use crate::linalg::{self, Method, SolveError};
use crate::quadrature::{self, Tolerance};
use crate::report::{Table, sig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("weight is not finite and positive at {at:?}")]
    NonFiniteWeight { at: Vec<f64> },
    #[error("coefficient matrix is not positive definite at {at:?}")]
    Ellipticity { at: Vec<f64> },
    #[error("exact solution does not have the requested parity")]
    ParityMismatch,
    #[error("right-hand side is not finite at cell {cell}")]
    NonFiniteRhs { cell: usize },
    #[error("field lives on a different grid")]
    GridMismatch,
    #[error(transparent)]
    Solve(#[from] SolveError),
}

pub type Result<T> = std::result::Result<T, AssemblyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
    None,
}

impl fmt::Display for Parity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parity::Odd => "odd",
            Parity::Even => "even",
            Parity::None => "none",
        })
    }
}

type MatrixFn = Arc<dyn Fn(&[f64], f64) -> [[f64; 2]; 2] + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64], f64) -> [f64; 3] + Send + Sync>;

/// An `n×n` symmetric matrix field; `None` is the identity.
#[derive(Clone, Default)]
pub struct MatrixField(Option<MatrixFn>);

impl MatrixField {
    pub fn identity() -> Self {
        Self(None)
    }

    pub fn new(f: impl Fn(&[f64], f64) -> [[f64; 2]; 2] + Send + Sync + 'static) -> Self {
        Self(Some(Arc::new(f)))
    }

    pub fn eval(&self, x: &[f64], y: f64) -> [[f64; 2]; 2] {
        match &self.0 {
            Some(f) => f(x, y),
            None => [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_none()
    }
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_none() { "I" } else { "MatrixField" })
    }
}

/// A vector field with up to three components; `None` is zero.
#[derive(Clone, Default)]
pub struct VectorField(Option<VectorFn>);

impl VectorField {
    pub fn zero() -> Self {
        Self(None)
    }

    pub fn new(f: impl Fn(&[f64], f64) -> [f64; 3] + Send + Sync + 'static) -> Self {
        Self(Some(Arc::new(f)))
    }

    pub fn eval(&self, x: &[f64], y: f64) -> [f64; 3] {
        match &self.0 {
            Some(f) => f(x, y),
            None => [0.0; 3],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(if self.0.is_none() { "0" } else { "VectorField" })
    }
}

/// `A = μ [[B̃, T], [Tᵀ, 1]]` with `μ`, `B̃` even and `T` odd in `y`.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub mu: Sampler,
    pub b_tilde: MatrixField,
    /// First `n` components are used.
    pub t: VectorField,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        Self::identity()
    }
}

impl OperatorSpec {
    pub fn identity() -> Self {
        Self {
            mu: Sampler::constant(1.0),
            b_tilde: MatrixField::identity(),
            t: VectorField::zero(),
        }
    }

    pub fn with_mu(mu: Sampler) -> Self {
        Self {
            mu,
            ..Self::identity()
        }
    }

    /// The full `(n+1)×(n+1)` matrix, `y` last, extended to `y < 0` by `A(x,y) = J A(x,-y) J`.
    pub fn matrix(&self, n: usize, x: &[f64], y: f64) -> [[f64; 3]; 3] {
        let yy = y.abs();
        let mu = self.mu.eval(x, yy);
        let b = self.b_tilde.eval(x, yy);
        let t = self.t.eval(x, yy);
        let sg = if y < 0.0 { -1.0 } else { 1.0 };
        let mut a = [[0.0; 3]; 3];
        for k in 0..n {
            for l in 0..n {
                a[k][l] = mu * b[k][l];
            }
            a[k][n] = mu * sg * t[k];
            a[n][k] = mu * sg * t[k];
        }
        a[n][n] = mu;
        a
    }

    pub fn is_diagonal(&self, n: usize) -> bool {
        self.t.is_zero() && (n == 1 || self.b_tilde.is_identity())
    }

    /// Smallest and largest eigenvalue of `A` over deterministic sample points and directions.
    pub fn ellipticity(&self, n: usize, points: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for k in 0..points {
            let p = halton(k + 1);
            let x = [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0];
            let y = p[2];
            let a = self.matrix(n, &x[..n], y);
            for d in 0..10 {
                let th = std::f64::consts::PI * d as f64 / 10.0;
                let ph = 0.5 * std::f64::consts::PI * (d as f64 + 0.5) / 10.0;
                let mut xi = [0.0; 3];
                if n == 1 {
                    xi[0] = th.cos();
                    xi[1] = th.sin();
                } else {
                    xi = [th.cos() * ph.cos(), th.sin() * ph.cos(), ph.sin()];
                }
                let mut q = 0.0;
                for i in 0..=n {
                    for j in 0..=n {
                        q += a[i][j] * xi[i] * xi[j];
                    }
                }
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
        (lo, hi)
    }

    /// `max |T(x, 0)|` over sample points; zero when `A e_y = μ e_y` on `Σ`.
    pub fn sigma_invariance_defect(&self, n: usize, points: usize) -> f64 {
        (0..points)
            .map(|k| {
                let p = halton(k + 1);
                let x = [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0];
                let t = self.t.eval(&x[..n], 0.0);
                t[..n].iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max)
    }
}

fn halton(i: usize) -> [f64; 3] {
    let radical = |mut i: usize, b: usize| {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= b as f64;
            r += f * (i % b) as f64;
            i /= b;
        }
        r
    };
    [radical(i, 2), radical(i, 3), radical(i, 5)]
}

/// Values at cell centres with a parity tag for the reflected extension.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub grid: Arc<HalfGrid>,
    pub values: Vec<f64>,
    pub parity: Parity,
}

impl DiscreteField {
    pub fn sample(grid: &Arc<HalfGrid>, f: &Sampler, parity: Parity) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|c| f.eval(grid.x(c), grid.y(c)))
            .collect();
        Self {
            grid: grid.clone(),
            values,
            parity,
        }
    }

    /// Value at the mirror image of cell `c` across `Σ`.
    pub fn reflected(&self, c: usize) -> f64 {
        match self.parity {
            Parity::Odd => -self.values[c],
            _ => self.values[c],
        }
    }

    pub fn max_abs_diff(&self, other: &Self, keep: impl Fn(&[f64], f64) -> bool) -> f64 {
        (0..self.values.len())
            .filter(|&c| keep(self.grid.x(c), self.grid.y(c)))
            .map(|c| (self.values[c] - other.values[c]).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `x[,x2],y,value`.
    pub fn to_table(&self, meta: &[(&str, String)]) -> Table {
        let n = self.grid.n;
        let mut cols = vec!["x"];
        if n == 2 {
            cols.push("x2");
        }
        cols.extend(["y", "value"]);
        let mut t = Table::new(&cols).meta("grid", self.grid.describe()).meta("parity", self.parity);
        for (k, v) in meta {
            t = t.meta(k, v);
        }
        for c in 0..self.values.len() {
            let mut row: Vec<f64> = self.grid.x(c).to_vec();
            row.push(self.grid.y(c));
            row.push(self.values[c]);
            t.push_numbers(&row);
        }
        t
    }
}

/// A cell value or ghost value as `Σ coef·u + Σ coef·g(point)`.
#[derive(Default)]
struct Lin {
    cells: Vec<(usize, f64)>,
    data: Vec<(f64, [f64; 3])>,
}

/// Assembled operator with everything needed to build loads for any data.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub matrix: CsMat<f64>,
    pub grid: Arc<HalfGrid>,
    pub parity: Parity,
    pub symmetric: bool,
    pub weight_id: String,
    /// `w_P · |cell|`.
    pub mass: Vec<f64>,
    /// Effective face weights of the upper `y` face of every cell.
    face_weight_y: Vec<f64>,
    /// Effective face weight of the `Σ` face of bottom cells (odd / none).
    sigma_weight: Vec<f64>,
    boundary: Vec<(usize, f64, [f64; 3])>,
    weight: Sampler,
}

impl Assembled {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.matrix, u)
    }

    /// Right-hand side for `f`, `F` and boundary data `g`.
    pub fn load(&self, f: &Sampler, big_f: &VectorField, trace: &Sampler) -> Result<Vec<f64>> {
        let g = &self.grid;
        let n = g.n;
        let h = g.h;
        let area = g.face_area();
        let mut rhs: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|c| self.mass[c] * f.eval(g.x(c), g.y(c)))
            .collect();
        for &(row, coef, p) in &self.boundary {
            rhs[row] += coef * trace.eval(&p[..n], p[n]);
        }
        if !big_f.is_zero() {
            for c in 0..g.len() {
                let ctr = g.centers[c];
                let mut div = 0.0;
                for axis in 0..=n {
                    for side in [-1i8, 1] {
                        let mut mid = ctr;
                        mid[axis] += side as f64 * 0.5 * h;
                        let nb = g.neighbor(c, axis, side);
                        let w = if axis == n {
                            if side > 0 {
                                self.face_weight_y[c]
                            } else if let Some(b) = nb {
                                self.face_weight_y[b]
                            } else {
                                if self.parity == Parity::Even {
                                    continue;
                                }
                                mid[n] = 0.0;
                                self.sigma_weight[c]
                            }
                        } else {
                            match nb {
                                Some(b) => harmonic(self.mass[c], self.mass[b]) / g.volume(),
                                None => self.weight.eval(&mid[..n], mid[n]),
                            }
                        };
                        let fv = big_f.eval(&mid[..n], mid[n])[axis];
                        if fv != 0.0 {
                            div += side as f64 * area * w * fv;
                        }
                    }
                }
                rhs[c] += div;
            }
        }
        if let Some(c) = rhs.iter().position(|v| !v.is_finite()) {
            return Err(AssemblyError::NonFiniteRhs { cell: c });
        }
        Ok(rhs)
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Builder for [`Assembled`].
#[derive(Debug, Clone)]
pub struct Assembler {
    pub weight: Sampler,
    pub spec: OperatorSpec,
    pub parity: Parity,
    pub drift: VectorField,
    pub zero_order: Option<Sampler>,
}

const SEGMENT_TOL: f64 = 1e-10;

impl Assembler {
    pub fn new(weight: Sampler, spec: OperatorSpec, parity: Parity) -> Self {
        Self {
            weight,
            spec,
            parity,
            drift: VectorField::zero(),
            zero_order: None,
        }
    }

    pub fn drift(mut self, b: VectorField) -> Self {
        self.drift = b;
        self
    }

    pub fn zero_order(mut self, c: Sampler) -> Self {
        self.zero_order = Some(c);
        self
    }

    /// `∫_{y0}^{y1} ds / w(x, s)`.
    fn resistance(&self, x: &[f64], y0: f64, y1: f64) -> Result<f64> {
        if let Some(c) = self.weight.as_constant() {
            return Ok((y1 - y0) / c);
        }
        let w = &self.weight;
        let r = quadrature::integrate(|s| 1.0 / w.eval(x, s), y0, y1, Tolerance::relative(SEGMENT_TOL))
            .map_err(|_| AssemblyError::NonFiniteWeight {
                at: x.iter().copied().chain([y0]).collect(),
            })?;
        if !(r.value > 0.0) || !r.value.is_finite() {
            return Err(AssemblyError::NonFiniteWeight {
                at: x.iter().copied().chain([y0]).collect(),
            });
        }
        Ok(r.value)
    }

    pub fn build(&self, grid: &Arc<HalfGrid>) -> Result<Assembled> {
        let g = grid.as_ref();
        let n = g.n;
        let h = g.h;
        let vol = g.volume();
        let area = g.face_area();
        let cells = g.len();

        let wc: Vec<f64> = (0..cells).into_par_iter().map(|c| self.weight.eval(g.x(c), g.y(c))).collect();
        if let Some(c) = wc.iter().position(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(AssemblyError::NonFiniteWeight {
                at: g.centers[c][..=n].to_vec(),
            });
        }
        // cell masses `∫ w` over the cell in y, centre rule where w is not integrable
        let mass: Vec<f64> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let y = g.y(c);
                if self.weight.as_constant().is_some() {
                    return wc[c] * vol;
                }
                let w = &self.weight;
                let x = g.x(c);
                match quadrature::integrate(|s| w.eval(x, s), y - 0.5 * h, y + 0.5 * h, Tolerance::relative(SEGMENT_TOL)) {
                    Ok(r) if r.value.is_finite() && r.value > 0.0 => r.value * vol / h,
                    _ => wc[c] * vol,
                }
            })
            .collect();
        let wavg: Vec<f64> = mass.iter().map(|m| m / vol).collect();
        // effective weights on y faces, `h / ∫ ds/w` between centres (or to the face)
        let even = self.parity == Parity::Even;
        let face_weight_y: Vec<f64> = (0..cells)
            .into_par_iter()
            .map(|c| {
                let y = g.y(c);
                match g.neighbor(c, n, 1) {
                    Some(_) if even => Ok(self.weight.eval(g.x(c), y + 0.5 * h)),
                    Some(_) => self.resistance(g.x(c), y, y + h).map(|r| h / r),
                    None => self.resistance(g.x(c), y, y + 0.5 * h).map(|r| 0.5 * h / r),
                }
            })
            .collect::<Result<_>>()?;
        let needs_sigma = self.parity != Parity::Even;
        let sigma_weight: Vec<f64> = (0..cells)
            .into_par_iter()
            .map(|c| {
                if needs_sigma && g.neighbor(c, n, -1).is_none() {
                    self.resistance(g.x(c), 0.0, g.y(c)).map(|r| g.y(c) / r)
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<_>>()?;

        let diagonal_only = self.spec.is_diagonal(n);
        let rows: Vec<(Vec<(usize, f64)>, Vec<(f64, [f64; 3])>)> = (0..cells)
            .into_par_iter()
            .map(|c| self.row(g, c, &wavg, &face_weight_y, &sigma_weight, diagonal_only))
            .collect::<Result<_>>()?;

        let mut triplets = Vec::with_capacity(cells * (2 * n + 3));
        let mut boundary = Vec::new();
        for (c, (entries, data)) in rows.into_iter().enumerate() {
            for (j, v) in entries {
                triplets.push((c, j, v));
            }
            for (coef, p) in data {
                boundary.push((c, coef, p));
            }
        }
        let matrix = linalg::csr_from_triplets(cells, cells, &triplets);
        let symmetric = self.drift.is_zero() && linalg::asymmetry(&matrix) < 1e-12;
        let _ = area;
        Ok(Assembled {
            matrix,
            grid: grid.clone(),
            parity: self.parity,
            symmetric,
            weight_id: self.weight.label().to_string(),
            mass,
            face_weight_y,
            sigma_weight,
            boundary,
            weight: self.weight.clone(),
        })
    }

    /// Neighbour value or its ghost across the face `(axis, side)`.
    fn resolve(&self, g: &HalfGrid, c: usize, axis: usize, side: i8) -> Lin {
        let n = g.n;
        if let Some(b) = g.neighbor(c, axis, side) {
            return Lin {
                cells: vec![(b, 1.0)],
                data: vec![],
            };
        }
        let mut mid = g.centers[c];
        mid[axis] += side as f64 * 0.5 * g.h;
        let sigma = axis == n && side < 0;
        match (sigma, self.parity) {
            (true, Parity::Odd) => Lin {
                cells: vec![(c, -1.0)],
                data: vec![],
            },
            (true, Parity::Even) => Lin {
                cells: vec![(c, 1.0)],
                data: vec![],
            },
            _ => {
                if sigma {
                    mid[n] = 0.0;
                }
                Lin {
                    cells: vec![(c, -1.0)],
                    data: vec![(2.0, mid)],
                }
            }
        }
    }

    #[allow(clippy::type_complexity)]
    fn row(
        &self,
        g: &HalfGrid,
        c: usize,
        wavg: &[f64],
        fwy: &[f64],
        sigw: &[f64],
        diagonal_only: bool,
    ) -> Result<(Vec<(usize, f64)>, Vec<(f64, [f64; 3])>)> {
        let n = g.n;
        let h = g.h;
        let area = g.face_area();
        let vol = g.volume();
        let ctr = g.centers[c];
        let mut e: Vec<(usize, f64)> = Vec::with_capacity(16);
        let mut d: Vec<(f64, [f64; 3])> = Vec::new();
        let a_c = self.spec.matrix(n, &ctr[..n], ctr[n]);
        if !positive_definite(&a_c, n + 1) {
            return Err(AssemblyError::Ellipticity { at: ctr[..=n].to_vec() });
        }
        let add = |e: &mut Vec<(usize, f64)>, d: &mut Vec<(f64, [f64; 3])>, lin: &Lin, coef: f64| {
            for &(j, v) in &lin.cells {
                e.push((j, coef * v));
            }
            for &(v, p) in &lin.data {
                // data moves to the right-hand side
                d.push((-coef * v, p));
            }
        };
        for axis in 0..=n {
            for side in [-1i8, 1] {
                let mut mid = ctr;
                mid[axis] += side as f64 * 0.5 * h;
                let nb = g.neighbor(c, axis, side);
                let sigma = axis == n && side < 0 && nb.is_none();
                if sigma {
                    mid[n] = 0.0;
                }
                let a_f = self.spec.matrix(n, &mid[..n], mid[n]);
                // effective face weight and centre-to-centre (or centre-to-face) distance
                let (w_f, dist) = match (axis == n, nb) {
                    (true, Some(b)) => (if side > 0 { fwy[c] } else { fwy[b] }, h),
                    (true, None) if sigma => (sigw[c], ctr[n]),
                    (true, None) => (fwy[c], 0.5 * h),
                    (false, Some(b)) => (harmonic(wavg[c], wavg[b]), h),
                    (false, None) => (wavg[c], 0.5 * h),
                };
                if sigma && self.parity == Parity::Even {
                    continue;
                }
                let tau = a_f[axis][axis] * w_f * area / dist;
                e.push((c, tau));
                match nb {
                    Some(b) => e.push((b, -tau)),
                    None => {
                        if !(sigma && self.parity == Parity::Odd) {
                            d.push((tau, mid));
                        }
                    }
                }
                if diagonal_only || sigma {
                    continue;
                }
                // tangential derivative terms of the flux
                for m in 0..=n {
                    if m == axis {
                        continue;
                    }
                    let akm = a_f[axis][m];
                    if akm == 0.0 {
                        continue;
                    }
                    let coef = -(side as f64) * area * w_f * akm;
                    match nb {
                        Some(b) => {
                            let q = coef * 0.25 / h;
                            for &(cell, s) in &[(c, 1.0), (b, 1.0)] {
                                let plus = self.resolve(g, cell, m, 1);
                                let minus = self.resolve(g, cell, m, -1);
                                add(&mut e, &mut d, &plus, q * s);
                                add(&mut e, &mut d, &minus, -q * s);
                            }
                        }
                        None => {
                            let mut p = mid;
                            let mut q = mid;
                            p[m] += h;
                            q[m] -= h;
                            let k = coef / (2.0 * h);
                            d.push((-k, p));
                            d.push((k, q));
                        }
                    }
                }
            }
        }
        let b = self.drift.eval(&ctr[..n], ctr[n]);
        for axis in 0..=n {
            if b[axis] == 0.0 {
                continue;
            }
            let k = -wavg[c] * vol * b[axis] / (2.0 * h);
            let plus = self.resolve(g, c, axis, 1);
            let minus = self.resolve(g, c, axis, -1);
            add(&mut e, &mut d, &plus, k);
            add(&mut e, &mut d, &minus, -k);
        }
        if let Some(z) = &self.zero_order {
            let cv = z.eval(&ctr[..n], ctr[n]);
            e.push((c, wavg[c] * vol * cv));
        }
        Ok((e, d))
    }
}

fn positive_definite(a: &[[f64; 3]; 3], m: usize) -> bool {
    // leading principal minors
    let d1 = a[0][0];
    let d2 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if m == 2 {
        return d1 > 0.0 && d2 > 0.0;
    }
    let d3 = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    d1 > 0.0 && d2 > 0.0 && d3 > 0.0
}

/// Free-function form of [`Assembler::build`].
pub fn assemble(
    grid: &Arc<HalfGrid>,
    weight: &Sampler,
    spec: &OperatorSpec,
    parity: Parity,
    drift: Option<&VectorField>,
) -> Result<Assembled> {
    let mut a = Assembler::new(weight.clone(), spec.clone(), parity);
    if let Some(b) = drift {
        a = a.drift(b.clone());
    }
    a.build(grid)
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub field: DiscreteField,
    pub relative_residual: f64,
    pub iterations: usize,
    pub method: Method,
    pub assembly_weight_id: String,
    pub tol: f64,
    pub max_iterations: usize,
}

pub fn solve_linear(op: &Assembled, rhs: &[f64], tol: f64) -> Result<SolveReport> {
    let s = linalg::solve(&op.matrix, rhs, op.symmetric, tol)?;
    Ok(SolveReport {
        field: DiscreteField {
            grid: op.grid.clone(),
            values: s.x,
            parity: op.parity,
        },
        relative_residual: s.relative_residual,
        iterations: s.iterations,
        method: s.method,
        assembly_weight_id: op.weight_id.clone(),
        tol,
        max_iterations: linalg::MAX_ITERATIONS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// `rhs = K u_exact`: the solver must recover the samples exactly.
    Discrete,
    /// `rhs` from the analytic `f`, `F` and the trace of `u_exact`.
    Continuum,
}

/// A method-of-manufactured-solutions problem.
#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub u_exact: Sampler,
    pub f: Sampler,
    pub big_f: VectorField,
    pub assembler: Assembler,
}

impl ManufacturedProblem {
    pub fn new(u_exact: Sampler, f: Sampler, assembler: Assembler) -> Self {
        Self {
            u_exact,
            f,
            big_f: VectorField::zero(),
            assembler,
        }
    }

    fn check_parity(&self) -> Result<()> {
        let sign = match self.assembler.parity {
            Parity::Odd => -1.0,
            Parity::Even => 1.0,
            Parity::None => return Ok(()),
        };
        for k in 1..=16 {
            let p = halton(k);
            let x = [2.0 * p[0] - 1.0, 2.0 * p[1] - 1.0];
            let y = 0.05 + 0.9 * p[2];
            for n in [1usize, 2] {
                let up = self.u_exact.eval(&x[..n], y);
                let um = self.u_exact.eval(&x[..n], -y);
                if (um - sign * up).abs() > 1e-12 * up.abs().max(1.0) {
                    return Err(AssemblyError::ParityMismatch);
                }
            }
        }
        Ok(())
    }
}

/// Assembles the problem and returns `(operator, rhs, exact field)`.
pub fn manufactured_problem(
    problem: &ManufacturedProblem,
    grid: &Arc<HalfGrid>,
    mode: RhsMode,
) -> Result<(Assembled, Vec<f64>, DiscreteField)> {
    problem.check_parity()?;
    let op = problem.assembler.build(grid)?;
    let exact = DiscreteField::sample(grid, &problem.u_exact, problem.assembler.parity);
    let rhs = match mode {
        RhsMode::Discrete => op.apply(&exact.values),
        RhsMode::Continuum => op.load(&problem.f, &problem.big_f, &problem.u_exact)?,
    };
    Ok((op, rhs, exact))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub max_error: f64,
    pub order: Option<f64>,
    /// Error at rounding level, so no order is meaningful.
    pub exact: bool,
}

/// Max-norm errors over cells with `y ≥ y_min` for each spacing, with observed orders.
pub fn convergence_study(
    problem: &ManufacturedProblem,
    n: usize,
    shape: crate::geometry::Shape,
    h_list: &[f64],
    y_min: f64,
) -> Result<Vec<ConvergenceRow>> {
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &h in h_list {
        let grid = Arc::new(HalfGrid::build(n, shape, h).map_err(|_| AssemblyError::GridMismatch)?);
        let (op, rhs, exact) = manufactured_problem(problem, &grid, RhsMode::Continuum)?;
        let sol = solve_linear(&op, &rhs, linalg::DEFAULT_TOL)?;
        let err = sol.field.max_abs_diff(&exact, |_, y| y >= y_min);
        let scale = exact.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let is_exact = err <= 1e-9 * scale;
        let order = rows.last().and_then(|prev| {
            if is_exact || prev.exact {
                None
            } else {
                Some((prev.max_error / err).ln() / (prev.h / h).ln())
            }
        });
        rows.push(ConvergenceRow {
            h,
            max_error: err,
            order,
            exact: is_exact,
        });
    }
    Ok(rows)
}

pub fn convergence_table(rows: &[ConvergenceRow]) -> Table {
    let mut t = Table::new(&["h", "max_error", "order", "exact"]);
    for r in rows {
        t.push(vec![
            sig(r.h),
            sig(r.max_error),
            r.order.map(sig).unwrap_or_else(|| "NA".into()),
            r.exact.to_string(),
        ]);
    }
    t
}
