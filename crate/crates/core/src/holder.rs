//! Discrete Hölder seminorms, exponent fits near `Σ`, and `ε`-sweeps of the
//! ratio `u_ε / v_ε`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{self, Assembler, AssemblyError, DiscreteField, OperatorSpec, Parity, VectorField};
use crate::field::Sampler;
use crate::geometry::{chart_jacobian_fd, fermi_mu, EmbeddedCurve, GeometryError, HalfGrid, Shape};
use crate::report::{sig, Table};
use crate::special::{CharacteristicSolution, SpecialError, WeightFamily};
use crate::transform::{self, effective_dimension, effective_dimension_aux, TransformError};

/// Pairs closer than this are all visited.
pub const NEAR_PAIRS: f64 = 0.25;
pub const DEFAULT_PAIR_BUDGET: usize = 20_000;
/// Below this many pairs the seminorm is exact.
pub const EXHAUSTIVE_PAIRS: usize = 50_000_000;
pub const DEFAULT_TAU: f64 = 3.0;
pub const DEFAULT_SLOPE_TOL: f64 = 0.1;
pub const DEFAULT_EPS: [f64; 6] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.0];
const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HolderError {
    #[error("region {0} contains no cells")]
    EmptyRegion(Region),
    #[error("region {0} is too thin for difference stencils")]
    ThinRegion(Region),
    #[error("{0}")]
    Config(String),
    #[error("zero denominator in the Moser ratio")]
    ZeroDenominator,
    #[error("solve failed at eps = {eps}: {message}")]
    Solve { eps: f64, message: String, partial: Vec<EpsRow> },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, HolderError>;

/// `|x_k| ≤ x_max` for every `k` and `y_min ≤ y ≤ y_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self {
            x_max: 0.5,
            y_min: 0.0,
            y_max: 0.5,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|x|<={} {}<=y<={}", self.x_max, self.y_min, self.y_max)
    }
}

impl Region {
    pub fn contains(&self, x: &[f64], y: f64) -> bool {
        y >= self.y_min && y <= self.y_max && x.iter().all(|v| v.abs() <= self.x_max)
    }

    pub fn with_y_min(self, y_min: f64) -> Self {
        Self { y_min, ..self }
    }
}

/// Values at scattered points, coordinates `x` then `y`.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub points: Vec<[f64; 3]>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl PointSet {
    pub fn from_field(u: &DiscreteField, region: &Region) -> Self {
        let g = &u.grid;
        let mut points = Vec::new();
        let mut values = Vec::new();
        for c in 0..g.len() {
            if region.contains(g.x(c), g.y(c)) {
                points.push(g.centers[c]);
                values.push(u.values[c]);
            }
        }
        Self {
            points,
            values,
            dim: g.n + 1,
        }
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        let (p, q) = (self.points[i], self.points[j]);
        (0..self.dim).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>().sqrt()
    }

    fn quotient(&self, i: usize, j: usize, alpha: f64) -> f64 {
        let d = self.dist(i, j);
        if d > 0.0 {
            (self.values[i] - self.values[j]).abs() / d.powf(alpha)
        } else {
            0.0
        }
    }

    /// Largest `|u(z1) - u(z2)| / |z1 - z2|^α`. Every pair is visited when there
    /// are at most [`EXHAUSTIVE_PAIRS`]; otherwise all pairs closer than
    /// [`NEAR_PAIRS`] and all pairs among an evenly strided subset of about
    /// `√(2 budget)` points.
    pub fn seminorm(&self, alpha: f64, budget: usize) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        if n * (n - 1) / 2 <= EXHAUSTIVE_PAIRS {
            return (0..n)
                .into_par_iter()
                .map(|i| (i + 1..n).map(|j| self.quotient(i, j, alpha)).fold(0.0, f64::max))
                .reduce(|| 0.0, f64::max);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| self.points[i][0].total_cmp(&self.points[j][0]));
        let near = (0..n)
            .into_par_iter()
            .map(|k| {
                let i = order[k];
                let mut m: f64 = 0.0;
                for &j in &order[k + 1..] {
                    if self.points[j][0] - self.points[i][0] > NEAR_PAIRS {
                        break;
                    }
                    if self.dist(i, j) <= NEAR_PAIRS {
                        m = m.max(self.quotient(i, j, alpha));
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        let m = ((2.0 * budget as f64).sqrt().ceil() as usize).clamp(2, n);
        let subset: Vec<usize> = (0..m).map(|k| k * (n - 1) / (m - 1)).collect();
        let far = (0..m)
            .into_par_iter()
            .map(|k| {
                subset[k + 1..]
                    .iter()
                    .map(|&j| self.quotient(subset[k], j, alpha))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        near.max(far)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn holder_seminorm(u: &DiscreteField, alpha: f64, region: &Region, pair_budget: usize) -> Result<f64> {
    let p = PointSet::from_field(u, region);
    if p.points.is_empty() {
        return Err(HolderError::EmptyRegion(*region));
    }
    Ok(p.seminorm(alpha, pair_budget))
}

/// Centred-difference gradient at cells of `region` whose stencil is complete.
/// On the bottom row the `y`-difference uses the reflected value for odd or
/// even fields and a one-sided difference otherwise.
pub fn gradient(u: &DiscreteField, region: &Region) -> Result<Vec<PointSet>> {
    let g = &u.grid;
    let n = g.n;
    let h = g.h;
    let mut comps: Vec<PointSet> = (0..=n)
        .map(|_| PointSet {
            points: Vec::new(),
            values: Vec::new(),
            dim: n + 1,
        })
        .collect();
    'cells: for c in 0..g.len() {
        if !region.contains(g.x(c), g.y(c)) {
            continue;
        }
        let mut grad = [0.0; 3];
        for (axis, slot) in grad.iter_mut().enumerate().take(n + 1) {
            let up = g.neighbor(c, axis, 1);
            let dn = g.neighbor(c, axis, -1);
            *slot = match (dn, up) {
                (Some(d), Some(p)) => (u.values[p] - u.values[d]) / (2.0 * h),
                (None, Some(p)) if axis == n => match u.parity {
                    Parity::Odd => (u.values[p] + u.values[c]) / (2.0 * h),
                    Parity::Even => (u.values[p] - u.values[c]) / (2.0 * h),
                    Parity::None => (u.values[p] - u.values[c]) / h,
                },
                _ => continue 'cells,
            };
        }
        for (k, comp) in comps.iter_mut().enumerate() {
            comp.points.push(g.centers[c]);
            comp.values.push(grad[k]);
        }
    }
    if comps[0].points.len() < 2 {
        return Err(HolderError::ThinRegion(*region));
    }
    Ok(comps)
}

/// `(sup |∇u|, max_k [∂_k u]_α)` on `region`.
pub fn c1alpha_seminorm(u: &DiscreteField, alpha: f64, region: &Region) -> Result<(f64, f64)> {
    let comps = gradient(u, region)?;
    let m = comps[0].points.len();
    let sup = (0..m)
        .map(|i| comps.iter().map(|c| c.values[i].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let semi = comps
        .iter()
        .map(|c| c.seminorm(alpha, DEFAULT_PAIR_BUDGET))
        .fold(0.0, f64::max);
    Ok((sup, semi))
}

/// Bilinear interpolation of a cell field in the `(x_1, y)` plane, using
/// the parity of the field below the first row.
pub fn interpolant(u: &DiscreteField) -> impl Fn(&[f64], f64) -> f64 + '_ {
    let g = &u.grid;
    let h = g.h;
    move |x: &[f64], y: f64| {
        let fx = ((x[0] + 1.0) / h - 0.5).clamp(0.0, (g.dims[0] - 1) as f64);
        let fy = (y / h - 0.5).min((g.dims[g.n] - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.dims[0].saturating_sub(2));
        let tx = fx - i0 as f64;
        let k = if g.n == 2 {
            (((x[1] + 1.0) / h - 0.5).round().clamp(0.0, (g.dims[1] - 1) as f64)) as usize
        } else {
            0
        };
        let at = |i: usize, j: isize| -> f64 {
            if j < 0 {
                let v = g.cell_at([i, k, 0]).map_or(0.0, |c| u.values[c]);
                return match u.parity {
                    Parity::Odd => -v,
                    _ => v,
                };
            }
            g.cell_at([i, k, j as usize]).map_or(f64::NAN, |c| u.values[c])
        };
        let j0 = fy.floor() as isize;
        let ty = fy - j0 as f64;
        let v00 = at(i0, j0);
        let v10 = at(i0 + 1, j0);
        let v01 = at(i0, j0 + 1);
        let v11 = at(i0 + 1, j0 + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentEstimate {
    /// The fitted slope capped at 1.
    pub alpha_hat: f64,
    pub slope: f64,
    /// Oscillation below the noise floor at every radius.
    pub smooth: bool,
    pub osc: Vec<(f64, f64)>,
}

pub const DYADIC_RADII: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];

/// Least-squares slope of `log osc(r)` against `log r` on the half annuli
/// `r/2 ≤ |z - c| ≤ r`, `y ≥ 0`, in the `(x_1, y)` plane through `center`.
pub fn exponent_estimate(u: impl Fn(&[f64], f64) -> f64, center: &[f64]) -> ExponentEstimate {
    let mut osc = Vec::new();
    for &r in &DYADIC_RADII {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=16 {
            let rr = r * (0.5 + 0.5 * i as f64 / 16.0);
            for j in 0..=64 {
                let t = std::f64::consts::PI * j as f64 / 64.0;
                let mut x = center.to_vec();
                x[0] += rr * t.cos();
                let v = u(&x, rr * t.sin());
                if v.is_finite() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        osc.push((r, hi - lo));
    }
    if osc.iter().all(|(_, o)| *o < NOISE_FLOOR) {
        return ExponentEstimate {
            alpha_hat: 1.0,
            slope: f64::INFINITY,
            smooth: true,
            osc,
        };
    }
    let pts: Vec<(f64, f64)> = osc
        .iter()
        .filter(|(_, o)| *o >= NOISE_FLOOR)
        .map(|(r, o)| (r.ln(), o.ln()))
        .collect();
    let slope = ls_slope(&pts);
    ExponentEstimate {
        alpha_hat: slope.min(1.0),
        slope,
        smooth: false,
        osc,
    }
}

fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    if m < 2.0 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Largest admissible `α` for the ratio estimates, from `d̄ = n + 3 + (-a)⁺`:
/// `min(2 - d̄/p1, 1 - d̄/p2)` clipped to `(0, 1]`.
pub fn alpha_window_ratio(n: usize, a: f64, p1: f64, p2: f64) -> f64 {
    let d = effective_dimension_aux(n, a);
    (2.0 - d / p1).min(1.0 - d / p2).min(1.0)
}

/// Largest admissible `α` for odd solutions themselves, from `d = n + 1 + a⁺`;
/// also capped by `1 - a` when `a > 0`.
pub fn alpha_window_direct(n: usize, a: f64, p1: f64, p2: f64) -> f64 {
    let d = effective_dimension(n, a);
    let cap = if a > 0.0 { 1.0 - a } else { 1.0 };
    (2.0 - d / p1).min(1.0 - d / p2).min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// `[u_ε / v_ε]_{C^{0,α}}`.
    RatioC0,
    /// `max_k [∂_k (u_ε / v_ε)]_{C^{0,α}}`.
    RatioC1,
    /// `[u_ε]_{C^{0,α}}`, for `a ∈ (-1, 1)`.
    OddDirectC0,
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepMode::RatioC0 => "ratio_c0",
            SweepMode::RatioC1 => "ratio_c1",
            SweepMode::OddDirectC0 => "odd_direct_c0",
        })
    }
}

impl std::str::FromStr for SweepMode {
    type Err = HolderError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio_c0" => Ok(SweepMode::RatioC0),
            "ratio_c1" => Ok(SweepMode::RatioC1),
            "odd_direct_c0" => Ok(SweepMode::OddDirectC0),
            _ => Err(HolderError::Config(format!("unknown sweep mode {s}"))),
        }
    }
}

/// Denominator used for the ratio.
#[derive(Debug, Clone)]
pub enum RatioDenominator {
    /// `v_ε^a` built from the `μ` of the operator.
    Characteristic,
    /// `v` for `μ ≡ 1`, a constant multiple of `χ_ε^a`.
    Chi,
}

/// Right-hand side `f` of a family.
#[derive(Debug, Clone)]
pub enum Load {
    /// The same `f` for every `ε`.
    Fixed(Sampler),
    /// `f_ε = v_ε g`, so that `f_ε / v_ε = g` for every `ε`.
    Characteristic(Sampler),
}

/// `-div(ρ_ε^a A ∇u) = ρ_ε^a J f + div(ρ_ε^a F)` on the half rectangle,
/// odd in `y`.
#[derive(Debug, Clone)]
pub struct ProblemFamily {
    pub label: String,
    pub n: usize,
    pub a: f64,
    pub spec: OperatorSpec,
    pub f: Load,
    /// Volume factor multiplying `f`; `1` except in curved charts.
    pub jacobian: Sampler,
    pub big_f: VectorField,
    pub trace: Sampler,
    pub denominator: RatioDenominator,
}

impl ProblemFamily {
    /// `μ ≡ 1` or `μ = 1 + c x²`, `f_ε = v_ε cos(πx)`, zero Dirichlet data.
    /// At `ε = 0` and `μ ≡ 1` the load is `y|y|^{-a} cos(πx)`.
    pub fn standard(a: f64, mu_x2: f64) -> Self {
        let spec = if mu_x2 == 0.0 {
            OperatorSpec::identity()
        } else {
            OperatorSpec::with_mu(Sampler::new(format!("1+{mu_x2}x^2"), move |x, _| 1.0 + mu_x2 * x[0] * x[0]))
        };
        Self {
            label: format!("standard(a={a},mu=1+{mu_x2}x^2)"),
            n: 1,
            a,
            spec,
            f: Load::Characteristic(Sampler::new("cos(pi x)", |x, _| (std::f64::consts::PI * x[0]).cos())),
            jacobian: Sampler::constant(1.0),
            big_f: VectorField::zero(),
            trace: Sampler::zero(),
            denominator: RatioDenominator::Characteristic,
        }
    }

    /// The problem written in Fermi coordinates `(s, d)` of `curve`: `μ` is the
    /// area factor and `B̃ = μ^{-2}` restores the tangential metric.
    pub fn fermi(curve: &EmbeddedCurve, a: f64) -> Self {
        let c1 = curve.clone();
        let c2 = curve.clone();
        let c3 = curve.clone();
        let mu = Sampler::new(format!("fermi_mu[{}]", curve.label), move |x, y| {
            fermi_mu(&c1, x[0], y).unwrap_or(f64::NAN)
        });
        let b = crate::assembly::MatrixField::new(move |x, y| {
            let m = fermi_mu(&c2, x[0], y).unwrap_or(f64::NAN);
            let mut out = [[0.0; 2]; 2];
            out[0][0] = 1.0 / (m * m);
            out[1][1] = 1.0;
            out
        });
        let spec = OperatorSpec {
            mu,
            b_tilde: b,
            t: VectorField::zero(),
        };
        Self {
            label: format!("fermi[{}](a={a})", curve.label),
            n: 1,
            a,
            spec,
            f: Load::Characteristic(Sampler::new("cos(pi s)", |x, _| (std::f64::consts::PI * x[0]).cos())),
            jacobian: Sampler::new("J", move |x, y| fermi_mu(&c3, x[0], y).unwrap_or(f64::NAN)),
            big_f: VectorField::zero(),
            trace: Sampler::zero(),
            denominator: RatioDenominator::Chi,
        }
    }
}

/// One solved member of a family.
#[derive(Debug, Clone)]
pub struct Solved {
    pub eps: f64,
    pub u: DiscreteField,
    pub ratio: DiscreteField,
    /// Cell masses of `ρ_ε^a`.
    pub mass: Vec<f64>,
    /// Cell masses of `ρ_ε^a v_ε²`.
    pub omega_mass: Vec<f64>,
    pub f_values: Vec<f64>,
    /// `f / v_ε` at the cell centres.
    pub f_over_v: Vec<f64>,
    pub relative_residual: f64,
}

fn denominator(family: &ProblemFamily, fam: WeightFamily) -> CharacteristicSolution {
    match family.denominator {
        RatioDenominator::Characteristic if family.spec.mu.as_constant().is_none() => {
            CharacteristicSolution::from_mu(fam, &family.spec.mu)
        }
        _ => CharacteristicSolution::flat(fam),
    }
}

pub fn solve_member(family: &ProblemFamily, eps: f64, grid: &Arc<HalfGrid>, tol: f64) -> Result<Solved> {
    let fam = WeightFamily::new(family.a, eps);
    let rho = Sampler::new(format!("rho(a={},eps={eps})", family.a), move |_, y| fam.rho(y).unwrap_or(f64::NAN));
    let op = Assembler::new(rho, family.spec.clone(), Parity::Odd).build(grid)?;
    let sol = denominator(family, fam);
    let j = family.jacobian.clone();
    let load = match &family.f {
        Load::Fixed(f) => {
            let f = f.clone();
            Sampler::new("J f", move |x, y| j.eval(x, y) * f.eval(x, y))
        }
        Load::Characteristic(g) => {
            let g = g.clone();
            let sol = sol.clone();
            Sampler::new("J v g", move |x, y| j.eval(x, y) * sol.value(x, y).unwrap_or(f64::NAN) * g.eval(x, y))
        }
    };
    let rhs = op.load(&load, &family.big_f, &family.trace)?;
    let s = assembly::solve_linear(&op, &rhs, tol)?;
    let ratio = transform::ratio_field(&s.field, &sol)?;
    let mut f_values = Vec::with_capacity(grid.len());
    let mut f_over_v = Vec::with_capacity(grid.len());
    let mut omega_mass = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        let (x, y) = (grid.x(c), grid.y(c));
        let v = sol.value(x, y)?;
        let f = load.eval(x, y);
        f_values.push(f);
        f_over_v.push(f / v);
        omega_mass.push(op.mass[c] * v * v);
    }
    Ok(Solved {
        eps,
        u: s.field,
        ratio,
        mass: op.mass.clone(),
        omega_mass,
        f_values,
        f_over_v,
        relative_residual: s.relative_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsRow {
    pub eps: f64,
    pub seminorm: f64,
    pub sup_norm: f64,
    /// `‖w_ε‖_{L^β(ω_ε^a)}` over the whole grid.
    pub u_norm: f64,
    /// `‖f / v_ε‖_{L^{p1}(ω_ε^a)}` over the whole grid.
    pub data_norm: f64,
    /// `seminorm / (u_norm + data_norm)`.
    pub normalized: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub alpha: f64,
    pub h: f64,
    pub region: Region,
    /// Measure on `y ≥ max(region.y_min, √ε)`.
    pub restrict_sqrt_eps: bool,
    pub tau: f64,
    pub slope_tol: f64,
    pub tol: f64,
    /// Integrability exponents `(p1, p2)` of `f` and `F`.
    pub p: (f64, f64),
    pub beta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            h: 1.0 / 64.0,
            region: Region::default(),
            restrict_sqrt_eps: false,
            tau: DEFAULT_TAU,
            slope_tol: DEFAULT_SLOPE_TOL,
            tol: 1e-10,
            p: (f64::INFINITY, f64::INFINITY),
            beta: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub family: String,
    pub mode: SweepMode,
    pub alpha: f64,
    pub region: Region,
    pub per_eps: Vec<EpsRow>,
    /// `max / min` seminorm over the list.
    pub uniformity_ratio: f64,
    /// Slope of `log seminorm` against `log(1/ε)` over `ε > 0`; positive means growth as `ε → 0`.
    pub trend_slope: f64,
    pub alpha_window: f64,
    pub window_ok: bool,
    pub tau: f64,
    pub slope_tol: f64,
    pub pass: bool,
    /// `ε` whose restricted region `y ≥ √ε` misses the measuring region.
    pub skipped: Vec<f64>,
}

impl StabilityReport {
    pub fn to_table(&self) -> Table {
        let skipped: Vec<String> = self.skipped.iter().map(|e| sig(*e)).collect();
        let mut t = Table::new(&["eps", "seminorm", "sup_norm", "ratio_norm", "data_norm", "normalized"])
            .meta("family", &self.family)
            .meta("mode", self.mode)
            .meta("alpha", sig(self.alpha))
            .meta("region", self.region)
            .meta("tau", sig(self.tau))
            .meta("slope_tol", sig(self.slope_tol))
            .meta("uniformity_ratio", sig(self.uniformity_ratio))
            .meta("trend_slope", sig(self.trend_slope))
            .meta("alpha_window", sig(self.alpha_window))
            .meta("skipped_eps", skipped.join(" "));
        for r in &self.per_eps {
            t.push_numbers(&[r.eps, r.seminorm, r.sup_norm, r.u_norm, r.data_norm, r.normalized]);
        }
        t
    }

    pub fn verdict(&self) -> String {
        format!(
            "family={} mode={} alpha={} uniformity_ratio={} trend_slope={} alpha_window={} window_ok={} pass={}",
            self.family,
            self.mode,
            sig(self.alpha),
            sig(self.uniformity_ratio),
            sig(self.trend_slope),
            sig(self.alpha_window),
            self.window_ok,
            self.pass
        )
    }

    /// Two columns `eps seminorm`, gnuplot-readable.
    pub fn plot_data(&self) -> String {
        let mut s = format!("# {}\n", self.verdict());
        for r in &self.per_eps {
            s.push_str(&format!("{} {}\n", sig(r.eps), sig(r.seminorm)));
        }
        s
    }
}

fn validate_eps(eps_list: &[f64]) -> Result<()> {
    if !eps_list.contains(&0.0) {
        return Err(HolderError::Config("eps list must include 0".into()));
    }
    let pos: Vec<f64> = eps_list.iter().cloned().filter(|e| *e > 0.0).collect();
    let (lo, hi) = pos
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    if pos.is_empty() || hi / lo < 100.0 - 1e-9 {
        return Err(HolderError::Config("positive eps values must span at least two decades".into()));
    }
    if eps_list.iter().any(|e| *e < 0.0 || !e.is_finite()) {
        return Err(HolderError::Config("eps values must be finite and non-negative".into()));
    }
    Ok(())
}

pub fn measure(s: &Solved, mode: SweepMode, alpha: f64, region: &Region) -> Result<(f64, f64)> {
    Ok(match mode {
        SweepMode::RatioC0 => {
            let p = PointSet::from_field(&s.ratio, region);
            if p.points.is_empty() {
                return Err(HolderError::EmptyRegion(*region));
            }
            (p.seminorm(alpha, DEFAULT_PAIR_BUDGET), p.sup())
        }
        SweepMode::RatioC1 => {
            let (sup, semi) = c1alpha_seminorm(&s.ratio, alpha, region)?;
            (semi, sup)
        }
        SweepMode::OddDirectC0 => {
            let p = PointSet::from_field(&s.u, region);
            if p.points.is_empty() {
                return Err(HolderError::EmptyRegion(*region));
            }
            (p.seminorm(alpha, DEFAULT_PAIR_BUDGET), p.sup())
        }
    })
}

pub fn epsilon_sweep(family: &ProblemFamily, eps_list: &[f64], mode: SweepMode, cfg: &SweepConfig) -> Result<StabilityReport> {
    validate_eps(eps_list)?;
    if mode == SweepMode::OddDirectC0 && !(family.a > -1.0 && family.a < 1.0) {
        return Err(HolderError::Config(format!("odd_direct_c0 needs a in (-1, 1), got {}", family.a)));
    }
    let grid = Arc::new(HalfGrid::build(family.n, Shape::HalfRectangle, cfg.h)?);
    let solved: Vec<std::result::Result<Solved, (f64, String)>> = eps_list
        .par_iter()
        .map(|&eps| solve_member(family, eps, &grid, cfg.tol).map_err(|e| (eps, e.to_string())))
        .collect();
    let mut per_eps = Vec::with_capacity(eps_list.len());
    let mut skipped = Vec::new();
    for s in solved {
        match s {
            Ok(s) => {
                let region = if cfg.restrict_sqrt_eps {
                    cfg.region.with_y_min(cfg.region.y_min.max(s.eps.sqrt()))
                } else {
                    cfg.region
                };
                let (seminorm, sup_norm) = match measure(&s, mode, cfg.alpha, &region) {
                    Ok(m) => m,
                    Err(HolderError::EmptyRegion(_) | HolderError::ThinRegion(_)) if cfg.restrict_sqrt_eps => {
                        skipped.push(s.eps);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let u_norm = weighted_lp(&s.ratio.values, &s.omega_mass, cfg.beta);
                let data_norm = weighted_lp(&s.f_over_v, &s.omega_mass, cfg.p.0);
                per_eps.push(EpsRow {
                    eps: s.eps,
                    seminorm,
                    sup_norm,
                    u_norm,
                    data_norm,
                    normalized: seminorm / (u_norm + data_norm),
                });
            }
            Err((eps, message)) => {
                return Err(HolderError::Solve {
                    eps,
                    message,
                    partial: per_eps,
                })
            }
        }
    }
    let mut report = stability_report(family, mode, cfg, per_eps);
    report.skipped = skipped;
    Ok(report)
}

pub fn stability_report(family: &ProblemFamily, mode: SweepMode, cfg: &SweepConfig, per_eps: Vec<EpsRow>) -> StabilityReport {
    let lo = per_eps.iter().map(|r| r.seminorm).fold(f64::INFINITY, f64::min);
    let hi = per_eps.iter().map(|r| r.seminorm).fold(0.0, f64::max);
    let uniformity_ratio = if hi == 0.0 { 1.0 } else { hi / lo };
    let pts: Vec<(f64, f64)> = per_eps
        .iter()
        .filter(|r| r.eps > 0.0 && r.seminorm > 0.0)
        .map(|r| ((1.0 / r.eps).ln(), r.seminorm.ln()))
        .collect();
    let trend_slope = ls_slope(&pts);
    let alpha_window = match mode {
        SweepMode::OddDirectC0 => alpha_window_direct(family.n, family.a, cfg.p.0, cfg.p.1),
        _ => alpha_window_ratio(family.n, family.a, cfg.p.0, cfg.p.1),
    };
    let window_ok = cfg.alpha > 0.0 && cfg.alpha <= alpha_window;
    StabilityReport {
        family: family.label.clone(),
        mode,
        alpha: cfg.alpha,
        region: cfg.region,
        per_eps,
        uniformity_ratio,
        trend_slope,
        alpha_window,
        window_ok,
        tau: cfg.tau,
        slope_tol: cfg.slope_tol,
        pass: uniformity_ratio <= cfg.tau && trend_slope <= cfg.slope_tol,
        skipped: Vec::new(),
    }
}

#[derive(Debug, Clone)]
pub struct FermiDemo {
    /// Largest `|fermi_mu - |det DZ||` over the sampled chart points.
    pub jacobian_defect: f64,
    pub c0: StabilityReport,
    pub c1_restricted: StabilityReport,
    pub c1_unrestricted: StabilityReport,
}

impl FermiDemo {
    pub const JACOBIAN_TOL: f64 = 1e-6;

    /// The restricted-region `C^{1,α}` verdict; the unrestricted one is reported only.
    pub fn pass(&self) -> bool {
        self.jacobian_defect <= Self::JACOBIAN_TOL && self.c0.pass && self.c1_restricted.pass
    }
}

/// Degenerate problem near a circle of radius `radius`, solved in its Fermi chart
/// and divided by `χ_ε^a ∘ d_Σ`.
pub fn fermi_demo(radius: f64, a: f64, eps_list: &[f64], cfg: &SweepConfig) -> Result<FermiDemo> {
    let curve = EmbeddedCurve::circle([0.0, 0.0], radius, true);
    let mut jacobian_defect: f64 = 0.0;
    for i in 0..=20 {
        for j in 0..=10 {
            let s = -1.0 + 0.1 * i as f64;
            let y = 0.1 * j as f64;
            let exact = fermi_mu(&curve, s, y)?;
            jacobian_defect = jacobian_defect.max((exact - chart_jacobian_fd(&curve, s, y, 1e-5)).abs());
        }
    }
    let family = ProblemFamily::fermi(&curve, a);
    let unrestricted = SweepConfig {
        restrict_sqrt_eps: false,
        ..cfg.clone()
    };
    let restricted = SweepConfig {
        restrict_sqrt_eps: true,
        ..cfg.clone()
    };
    Ok(FermiDemo {
        jacobian_defect,
        c0: epsilon_sweep(&family, eps_list, SweepMode::RatioC0, &unrestricted)?,
        c1_restricted: epsilon_sweep(&family, eps_list, SweepMode::RatioC1, &restricted)?,
        c1_unrestricted: epsilon_sweep(&family, eps_list, SweepMode::RatioC1, &unrestricted)?,
    })
}

/// Norms entering the Moser bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoserNorms {
    pub beta: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Default for MoserNorms {
    fn default() -> Self {
        Self {
            beta: 2.0,
            p1: 10.0,
            p2: 10.0,
        }
    }
}

fn weighted_lp(values: &[f64], mass: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    values
        .iter()
        .zip(mass)
        .map(|(v, m)| m * v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// `sup_{region} |u| / (‖u‖_{L^β} + ‖f‖_{L^{p1}} + ‖F‖_{L^{p2}})`, all norms
/// weighted by the cell masses.
pub fn moser_ratio(u: &DiscreteField, mass: &[f64], f: &[f64], big_f: &[f64], region: &Region, norms: MoserNorms) -> Result<f64> {
    let p = PointSet::from_field(u, region);
    if p.points.is_empty() {
        return Err(HolderError::EmptyRegion(*region));
    }
    let den = weighted_lp(&u.values, mass, norms.beta) + weighted_lp(f, mass, norms.p1) + weighted_lp(big_f, mass, norms.p2);
    if !(den > 0.0) {
        return Err(HolderError::ZeroDenominator);
    }
    Ok(p.sup() / den)
}

/// Median of the ratios and whether all lie within `3×` of it.
pub fn moser_bound_check(ratios: &[f64]) -> (f64, bool) {
    let mut s = ratios.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m == 0 {
        return (0.0, false);
    }
    let med = if m % 2 == 1 { s[m / 2] } else { 0.5 * (s[m / 2 - 1] + s[m / 2]) };
    let ok = s.iter().all(|r| *r <= 3.0 * med && *r >= med / 3.0);
    (med, ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: f64) -> Arc<HalfGrid> {
        Arc::new(HalfGrid::build(1, Shape::HalfRectangle, h).unwrap())
    }

    fn field(g: &Arc<HalfGrid>, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, parity: Parity) -> DiscreteField {
        DiscreteField::sample(g, &Sampler::new("f", move |x, y| f(x[0], y)), parity)
    }

    #[test]
    fn constant_has_zero_seminorm() {
        let g = grid(1.0 / 16.0);
        let u = field(&g, |_, _| 3.0, Parity::Even);
        assert_eq!(holder_seminorm(&u, 0.5, &Region::default(), 100).unwrap(), 0.0);
    }

    #[test]
    fn linear_in_y_is_lipschitz_one() {
        let g = grid(1.0 / 16.0);
        let u = field(&g, |_, y| y, Parity::Odd);
        let r = Region {
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        };
        let s = holder_seminorm(&u, 1.0, &r, 1000).unwrap();
        assert!((s - 1.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn sampled_path_matches_lipschitz_constant() {
        let m = 120;
        let mut points = Vec::new();
        let mut values = Vec::new();
        for i in 0..m {
            for j in 0..m {
                let (x, y) = (-1.0 + 2.0 * i as f64 / m as f64, j as f64 / m as f64);
                points.push([x, y, 0.0]);
                values.push(2.0 * y);
            }
        }
        let p = PointSet { points, values, dim: 2 };
        assert!(m * m * (m * m - 1) / 2 > EXHAUSTIVE_PAIRS);
        let s = p.seminorm(1.0, 1000);
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn empty_region_is_an_error() {
        let g = grid(0.25);
        let u = field(&g, |_, y| y, Parity::Odd);
        let r = Region {
            x_max: 0.01,
            y_min: 0.0,
            y_max: 0.01,
        };
        assert!(matches!(holder_seminorm(&u, 0.5, &r, 10), Err(HolderError::EmptyRegion(_))));
    }

    #[test]
    fn windows() {
        assert!((alpha_window_ratio(1, 0.5, 10.0, f64::INFINITY) - 1.0).abs() < 1e-15);
        assert!((2.0 - effective_dimension_aux(1, 0.5) / 10.0 - 1.6).abs() < 1e-15);
        assert!((alpha_window_direct(1, 0.5, f64::INFINITY, f64::INFINITY) - 0.5).abs() < 1e-15);
        assert!((alpha_window_ratio(1, -1.0, 20.0, 10.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_flag_for_constants() {
        let e = exponent_estimate(|_, _| 1.0, &[0.0]);
        assert!(e.smooth);
    }

    #[test]
    fn moser_median() {
        let (m, ok) = moser_bound_check(&[1.0, 2.0, 4.0]);
        assert_eq!(m, 2.0);
        assert!(ok);
        assert!(!moser_bound_check(&[1.0, 1.0, 10.0]).1);
    }

    #[test]
    fn eps_list_validation() {
        assert!(validate_eps(&DEFAULT_EPS).is_ok());
        assert!(validate_eps(&[1.0, 0.1]).is_err());
        assert!(validate_eps(&[1.0, 0.5, 0.0]).is_err());
    }
}
