//! The ratio `w = u / v` and its auxiliary equation.
//!
//! For `-div(ρ A ∇u) = ρ f + div(ρ F)` with `u` odd, the quotient by the
//! characteristic solution solves
//!
//! ```text
//! -div(ρv² A ∇w) = ρv² (f̄ + V w - F̄·∇v / v) + div(ρv² F̄),   f̄ = f/v,  F̄ = F/v,
//! ```
//!
//! with `V = div(ρ A ∇v) / (ρ v)`. Since `ρ μ ∂_y v = 1 - a` is constant in `y`,
//!
//! ```text
//! V = div_x(μ B̃ ∇_x v) / v + [(1-a) div_x T + ∂_y(ρ μ T·∇_x v)] / (ρ v).
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{
    self, Assembled, Assembler, AssemblyError, DiscreteField, OperatorSpec, Parity, VectorField,
};
use crate::field::Sampler;
use crate::geometry::HalfGrid;
use crate::special::{CharacteristicSolution, SpecialError};

/// `v` below this magnitude is treated as zero.
pub const DIVISION_GUARD: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("characteristic solution vanishes at cell {cell} (|v| = {value:e})")]
    Division { cell: usize, value: f64 },
    #[error("T(x, 0) = {defect:e} is not zero, so T/(ρ v) is singular on Σ")]
    SingularTbar { defect: f64 },
    #[error("expected a field of parity {expected}")]
    Parity { expected: Parity },
    #[error(transparent)]
    Special(#[from] SpecialError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
}

pub type Result<T> = std::result::Result<T, TransformError>;

/// `d = n + 1 + a⁺`, the effective dimension of `ρ^a`.
pub fn effective_dimension(n: usize, a: f64) -> f64 {
    n as f64 + 1.0 + a.max(0.0)
}

/// `d̄ = n + 3 + (-a)⁺`, the effective dimension of `ω^a`.
pub fn effective_dimension_aux(n: usize, a: f64) -> f64 {
    n as f64 + 3.0 + (-a).max(0.0)
}

fn v_at(sol: &CharacteristicSolution, grid: &HalfGrid) -> Result<Vec<f64>> {
    (0..grid.len())
        .into_par_iter()
        .map(|c| sol.value(grid.x(c), grid.y(c)).map_err(TransformError::from))
        .collect()
}

/// `w = u / v` at cell centres.
pub fn ratio_field(u: &DiscreteField, sol: &CharacteristicSolution) -> Result<DiscreteField> {
    if u.parity != Parity::Odd {
        return Err(TransformError::Parity { expected: Parity::Odd });
    }
    let v = v_at(sol, &u.grid)?;
    let mut values = Vec::with_capacity(v.len());
    for (c, (&uc, &vc)) in u.values.iter().zip(&v).enumerate() {
        if vc.abs() < DIVISION_GUARD {
            return Err(TransformError::Division { cell: c, value: vc });
        }
        values.push(uc / vc);
    }
    Ok(DiscreteField {
        grid: u.grid.clone(),
        values,
        parity: Parity::Even,
    })
}

/// `u = w v` at cell centres.
pub fn reconstruct(w: &DiscreteField, sol: &CharacteristicSolution) -> Result<DiscreteField> {
    if w.parity != Parity::Even {
        return Err(TransformError::Parity { expected: Parity::Even });
    }
    let v = v_at(sol, &w.grid)?;
    Ok(DiscreteField {
        grid: w.grid.clone(),
        values: w.values.iter().zip(&v).map(|(w, v)| w * v).collect(),
        parity: Parity::Odd,
    })
}

/// `ρ v²`, the weight of the auxiliary equation.
pub fn auxiliary_weight(sol: &CharacteristicSolution) -> Sampler {
    let s = sol.clone();
    Sampler::new(format!("rho*v^2(a={},eps={})", sol.family.a, sol.family.eps), move |x, y| {
        let v = s.value(x, y).unwrap_or(f64::NAN);
        s.family.rho(y).unwrap_or(f64::NAN) * v * v
    })
}

/// Coefficients of the auxiliary equation, as fields.
#[derive(Debug, Clone)]
pub struct AuxiliaryBundle {
    pub f_bar: Sampler,
    pub big_f_bar: VectorField,
    /// `μ B̃ ∇_x v / v`.
    pub b_tilde_a: VectorField,
    /// `∇_x v / v`.
    pub b_identity: VectorField,
    /// `T / (ρ v)`.
    pub t_bar: VectorField,
    /// The zero-order coefficient `V`.
    pub v_term: Sampler,
    /// `f̄ - F̄·∇v / v`, the scalar load of the auxiliary equation.
    pub load: Sampler,
}

fn grad_x(sol: &CharacteristicSolution, n: usize, x: &[f64], y: f64) -> [f64; 2] {
    let mut g = [0.0; 2];
    for (k, gk) in g.iter_mut().enumerate().take(n) {
        *gk = sol.grad_x(x, y, k).unwrap_or(f64::NAN);
    }
    g
}

/// Builds the coefficient bundle for `n`-dimensional `x`.
pub fn auxiliary_rhs(
    n: usize,
    spec: &OperatorSpec,
    sol: &CharacteristicSolution,
    f: &Sampler,
    big_f: &VectorField,
) -> Result<AuxiliaryBundle> {
    let a = sol.family.a;
    if a >= 1.0 {
        return Err(SpecialError::Domain(format!("auxiliary equation requires a < 1, got {a}")).into());
    }
    let defect = spec.sigma_invariance_defect(n, 64);
    if defect > 1e-12 {
        return Err(TransformError::SingularTbar { defect });
    }
    let mu_const = sol.mu_inverse.as_constant().is_some();
    let spec_x_free = spec.mu.as_constant().is_some() && spec.b_tilde.is_identity();

    let s = sol.clone();
    let ff = f.clone();
    let f_bar = Sampler::new("f/v", move |x, y| ff.eval(x, y) / s.value(x, y).unwrap_or(f64::NAN));

    let big_f_bar = if big_f.is_zero() {
        VectorField::zero()
    } else {
        let s = sol.clone();
        let bf = big_f.clone();
        VectorField::new(move |x, y| {
            let v = s.value(x, y).unwrap_or(f64::NAN);
            let q = bf.eval(x, y);
            [q[0] / v, q[1] / v, q[2] / v]
        })
    };

    let b_identity = if mu_const {
        VectorField::zero()
    } else {
        let s = sol.clone();
        VectorField::new(move |x, y| {
            let v = s.value(x, y).unwrap_or(f64::NAN);
            let g = grad_x(&s, n, x, y);
            [g[0] / v, g[1] / v, 0.0]
        })
    };

    let b_tilde_a = if mu_const {
        VectorField::zero()
    } else {
        let s = sol.clone();
        let sp = spec.clone();
        VectorField::new(move |x, y| {
            let v = s.value(x, y).unwrap_or(f64::NAN);
            let g = grad_x(&s, n, x, y);
            let m = sp.mu.eval(x, y);
            let b = sp.b_tilde.eval(x, y);
            let mut out = [0.0; 3];
            for k in 0..n {
                for l in 0..n {
                    out[k] += m * b[k][l] * g[l] / v;
                }
            }
            out
        })
    };

    let t_bar = if spec.t.is_zero() {
        VectorField::zero()
    } else {
        let s = sol.clone();
        let sp = spec.clone();
        VectorField::new(move |x, y| {
            let v = s.value(x, y).unwrap_or(f64::NAN);
            let r = s.family.rho(y).unwrap_or(f64::NAN);
            let t = sp.t.eval(x, y);
            [t[0] / (r * v), t[1] / (r * v), 0.0]
        })
    };

    let v_term = if mu_const && spec.t.is_zero() {
        Sampler::zero()
    } else {
        let s = sol.clone();
        let sp = spec.clone();
        Sampler::new("V", move |x, y| v_term(&s, &sp, n, x, y, spec_x_free))
    };

    let load = if big_f.is_zero() {
        f_bar.clone()
    } else {
        let s = sol.clone();
        let fb = f_bar.clone();
        let bf = big_f.clone();
        Sampler::new("f/v - F.grad v/v^2", move |x, y| {
            let v = s.value(x, y).unwrap_or(f64::NAN);
            let g = grad_x(&s, n, x, y);
            let dy = s.dy(x, y).unwrap_or(f64::NAN);
            let q = bf.eval(x, y);
            let mut dot = q[n] * dy;
            for k in 0..n {
                dot += q[k] * g[k];
            }
            fb.eval(x, y) - dot / (v * v)
        })
    };

    Ok(AuxiliaryBundle {
        f_bar,
        big_f_bar,
        b_tilde_a,
        b_identity,
        t_bar,
        v_term,
        load,
    })
}

fn v_term(sol: &CharacteristicSolution, spec: &OperatorSpec, n: usize, x: &[f64], y: f64, spec_x_free: bool) -> f64 {
    let a = sol.family.a;
    let v = match sol.value(x, y) {
        Ok(v) => v,
        Err(_) => return f64::NAN,
    };
    let g = grad_x(sol, n, x, y);
    let mu = spec.mu.eval(x, y);
    let b = spec.b_tilde.eval(x, y);
    let mut div = 0.0;
    for k in 0..n {
        for l in 0..n {
            let hkl = sol.hess_x(x, y, k, l).unwrap_or(f64::NAN);
            div += mu * b[k][l] * hkl;
            if !spec_x_free {
                // ∂_k (μ B̃_kl)
                let step = crate::field::FD_STEP * x[k].abs().max(1.0);
                let mut xp = [0.0; 2];
                let mut xm = [0.0; 2];
                xp[..n].copy_from_slice(x);
                xm[..n].copy_from_slice(x);
                xp[k] += step;
                xm[k] -= step;
                let mb = |p: &[f64]| spec.mu.eval(p, y) * spec.b_tilde.eval(p, y)[k][l];
                div += (mb(&xp[..n]) - mb(&xm[..n])) / (2.0 * step) * g[l];
            }
        }
    }
    let mut out = div / v;
    if !spec.t.is_zero() {
        let rho = sol.family.rho(y).unwrap_or(f64::NAN);
        let mut div_t = 0.0;
        for k in 0..n {
            let step = crate::field::FD_STEP * x[k].abs().max(1.0);
            let mut xp = [0.0; 2];
            let mut xm = [0.0; 2];
            xp[..n].copy_from_slice(x);
            xm[..n].copy_from_slice(x);
            xp[k] += step;
            xm[k] -= step;
            div_t += (spec.t.eval(&xp[..n], y)[k] - spec.t.eval(&xm[..n], y)[k]) / (2.0 * step);
        }
        let flux = |yy: f64| {
            let r = sol.family.rho(yy).unwrap_or(f64::NAN);
            let m = spec.mu.eval(x, yy);
            let t = spec.t.eval(x, yy);
            let gg = grad_x(sol, n, x, yy);
            let mut d = 0.0;
            for k in 0..n {
                d += t[k] * gg[k];
            }
            r * m * d
        };
        let hy = 1e-5 * y.abs().max(1e-3);
        let dflux = (flux(y + hy) - flux(y - hy)) / (2.0 * hy);
        out += ((1.0 - a) * div_t + dflux) / (rho * v);
    }
    out
}

/// Data for a ratio-equation check on a half rectangle.
#[derive(Debug, Clone)]
pub struct RatioProblem {
    pub sol: CharacteristicSolution,
    pub spec: OperatorSpec,
    pub f: Sampler,
    pub big_f: VectorField,
    /// Dirichlet data for `u` on the outer boundary.
    pub u_trace: Sampler,
    /// The exact odd solution, when known.
    pub u_exact: Option<Sampler>,
    /// Residuals are measured on cells with `|x|_∞ ≤ r` and `y ≤ r`.
    pub region: f64,
}

#[derive(Debug, Clone)]
pub struct RatioCheck {
    pub h: f64,
    /// Residual of `u_exact / v` in the discrete auxiliary equation, or of
    /// `u_h / v` when no exact solution is given.
    pub residual_norm: f64,
    /// Residual of `u_h / v`.
    pub discrete_residual_norm: f64,
    pub truncation_estimate: f64,
    pub odd_relative_residual: f64,
    pub pass: bool,
    pub ratio: DiscreteField,
}

/// The operator of the auxiliary equation on `grid`.
pub fn auxiliary_operator(
    grid: &Arc<HalfGrid>,
    spec: &OperatorSpec,
    sol: &CharacteristicSolution,
    bundle: &AuxiliaryBundle,
) -> Result<Assembled> {
    let mut asm = Assembler::new(auxiliary_weight(sol), spec.clone(), Parity::Even);
    if bundle.v_term.as_constant() != Some(0.0) {
        let v = bundle.v_term.clone();
        asm = asm.zero_order(Sampler::new("-V", move |x, y| -v.eval(x, y)));
    }
    Ok(asm.build(grid)?)
}

fn interior_residual(op: &Assembled, w: &[f64], b: &[f64], r: f64) -> f64 {
    let grid = &op.grid;
    let kw = op.apply(w);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..grid.len() {
        let inside = grid.y(c) <= r && grid.x(c).iter().all(|v| v.abs() <= r);
        if !inside {
            continue;
        }
        let m = op.mass[c];
        let density = (kw[c] - b[c]) / m;
        num += m * density * density;
        den += m;
    }
    (num / den).sqrt()
}

/// Solves the odd problem, forms `w = u_h / v` and measures the residual of
/// `w` against the auxiliary equation in the `ρv²`-weighted `L²` norm.
pub fn verify_ratio_equation(problem: &RatioProblem, grid: &Arc<HalfGrid>, tol: f64) -> Result<RatioCheck> {
    let n = grid.n;
    let fam = problem.sol.family;
    let rho = Sampler::new(format!("rho(a={},eps={})", fam.a, fam.eps), move |_, y| fam.rho(y).unwrap_or(f64::NAN));
    let odd = Assembler::new(rho, problem.spec.clone(), Parity::Odd).build(grid)?;
    let rhs = odd.load(&problem.f, &problem.big_f, &problem.u_trace)?;
    let u = assembly::solve_linear(&odd, &rhs, tol)?;
    let w = ratio_field(&u.field, &problem.sol)?;

    let bundle = auxiliary_rhs(n, &problem.spec, &problem.sol, &problem.f, &problem.big_f)?;
    let aux = auxiliary_operator(grid, &problem.spec, &problem.sol, &bundle)?;
    let s = problem.sol.clone();
    let ut = problem.u_trace.clone();
    let w_trace = Sampler::new("u/v", move |x, y| ut.eval(x, y) / s.value(x, y).unwrap_or(f64::NAN));
    let b = aux.load(&bundle.load, &bundle.big_f_bar, &w_trace)?;
    let discrete_residual_norm = interior_residual(&aux, &w.values, &b, problem.region);
    let residual_norm = match &problem.u_exact {
        Some(ue) => {
            let exact = ratio_field(&DiscreteField::sample(grid, ue, Parity::Odd), &problem.sol)?;
            interior_residual(&aux, &exact.values, &b, problem.region)
        }
        None => discrete_residual_norm,
    };
    let scale = 1.0 + w.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let truncation_estimate = scale * grid.h * grid.h;
    Ok(RatioCheck {
        h: grid.h,
        residual_norm,
        discrete_residual_norm,
        truncation_estimate,
        odd_relative_residual: u.relative_residual,
        pass: residual_norm <= 10.0 * (tol + truncation_estimate),
        ratio: w,
    })
}
