//! Error-controlled minimisation with certificates.
//!
//! A domain is covered by cells, each sampled at its corners and centre. A
//! cell's lower bound is `min(samples) - safety · L · r`, where `L` is the
//! largest slope observed between its samples (or inherited from its parent)
//! and `r` is the centre-to-corner radius. Cells whose bound does not clear
//! the threshold are split in rounds until the question is decided or the
//! sample budget runs out.
//!
//! This is numerical certification with an empirical Lipschitz constant, not
//! interval arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::report::sig;
use crate::special::{self, SpecialError};

pub const SAFETY: f64 = 2.0;
pub const MIN_BUDGET: usize = 1000;

pub const METHOD: &str = "adaptive sampling, empirical Lipschitz bound with safety factor 2 (not interval arithmetic)";

/// The paper's rectangle for the large-`|a|` regime, as `(a, t)`.
pub const GAMMA_RECTANGLE: Domain = Domain::Rectangle {
    x: (-43.3272, -2.96767),
    y: (1.0, 5.1),
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("function is not finite at {at:?}")]
    NonFinite { at: Vec<f64> },
    #[error("budget {budget} is below the minimum {MIN_BUDGET}")]
    Budget { budget: usize },
    #[error("invalid domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Interval(f64, f64),
    Rectangle { x: (f64, f64), y: (f64, f64) },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval(..) => 1,
            Domain::Rectangle { .. } => 2,
        }
    }

    fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Domain::Interval(a, b) => ([a, 0.0], [b, 0.0]),
            Domain::Rectangle { x, y } => ([x.0, y.0], [x.1, y.1]),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Domain::Interval(a, b) => write!(f, "[{},{}]", sig(a), sig(b)),
            Domain::Rectangle { x, y } => {
                write!(f, "[{},{}]x[{},{}]", sig(x.0), sig(x.1), sig(y.0), sig(y.1))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Undecided,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Undecided => "undecided",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub target_id: String,
    pub domain: Domain,
    pub certified_infimum_lower_bound: f64,
    pub threshold: f64,
    pub samples_used: usize,
    pub lipschitz_estimate: f64,
    pub pass: bool,
    pub status: Status,
    pub min_sample: f64,
    pub argmin: Vec<f64>,
    pub method: String,
}

impl CertificationReport {
    /// One tab-separated line: id, domain, bound, threshold, status.
    pub fn record(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.target_id,
            self.domain,
            sig(self.certified_infimum_lower_bound),
            sig(self.threshold),
            self.status
        )
    }
}

#[derive(Debug, Clone)]
struct Cell {
    lo: [f64; 2],
    hi: [f64; 2],
    lipschitz: f64,
    bound: f64,
}

type Key = [u64; 2];

fn key(p: &[f64; 2]) -> Key {
    [p[0].to_bits(), p[1].to_bits()]
}

struct Sampler<'f, F> {
    f: &'f F,
    dim: usize,
    cache: BTreeMap<Key, f64>,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Sampler<'_, F> {
    fn points(&self, cell: &Cell) -> Vec<[f64; 2]> {
        let c = centre(cell);
        if self.dim == 1 {
            vec![[cell.lo[0], 0.0], [cell.hi[0], 0.0], c]
        } else {
            vec![
                cell.lo,
                [cell.hi[0], cell.lo[1]],
                [cell.lo[0], cell.hi[1]],
                cell.hi,
                c,
            ]
        }
    }

    /// Evaluates every missing sample point of `cells` in parallel.
    fn fill(&mut self, cells: &[Cell]) -> Result<(), CertifyError> {
        let mut missing: Vec<[f64; 2]> = Vec::new();
        let mut seen = BTreeMap::new();
        for cell in cells {
            for p in self.points(cell) {
                let k = key(&p);
                if !self.cache.contains_key(&k) && seen.insert(k, ()).is_none() {
                    missing.push(p);
                }
            }
        }
        let dim = self.dim;
        let f = self.f;
        let values: Vec<f64> = missing.par_iter().map(|p| f(&p[..dim])).collect();
        for (p, v) in missing.iter().zip(values) {
            if !v.is_finite() {
                return Err(CertifyError::NonFinite { at: p[..dim].to_vec() });
            }
            self.cache.insert(key(p), v);
        }
        Ok(())
    }

    fn value(&self, p: &[f64; 2]) -> f64 {
        self.cache[&key(p)]
    }

    /// Sets the slope estimate and lower bound of a freshly sampled cell.
    fn evaluate(&self, cell: &mut Cell, parent: Option<&Cell>) {
        let pts = self.points(cell);
        let vals: Vec<f64> = pts.iter().map(|p| self.value(p)).collect();
        let mut lip: f64 = 0.0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = dist(&pts[i], &pts[j]);
                if d > 0.0 {
                    lip = lip.max((vals[i] - vals[j]).abs() / d);
                }
            }
        }
        if let Some(p) = parent {
            lip = lip.max(p.lipschitz);
        }
        let fmin = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let radius = 0.5 * dist(&cell.lo, &cell.hi);
        let own = if self.dim == 1 {
            // samples every half cell: any point is within a quarter cell of one
            fmin - SAFETY * lip * 0.5 * radius
        } else {
            fmin - SAFETY * lip * radius
        };
        cell.lipschitz = lip;
        cell.bound = match parent {
            Some(p) => own.max(p.bound),
            None => own,
        };
    }
}

fn centre(cell: &Cell) -> [f64; 2] {
    [0.5 * (cell.lo[0] + cell.hi[0]), 0.5 * (cell.lo[1] + cell.hi[1])]
}

fn dist(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn split(cell: &Cell, dim: usize) -> Vec<Cell> {
    let c = centre(cell);
    let mk = |lo: [f64; 2], hi: [f64; 2]| Cell {
        lo,
        hi,
        lipschitz: 0.0,
        bound: f64::NEG_INFINITY,
    };
    if dim == 1 {
        vec![mk(cell.lo, [c[0], 0.0]), mk([c[0], 0.0], cell.hi)]
    } else {
        vec![
            mk(cell.lo, c),
            mk([c[0], cell.lo[1]], [cell.hi[0], c[1]]),
            mk([cell.lo[0], c[1]], [c[0], cell.hi[1]]),
            mk(c, cell.hi),
        ]
    }
}

/// Which cells get split in the next round.
#[derive(Clone, Copy)]
enum Goal {
    /// Stop as soon as the comparison with the threshold is settled.
    Decide(f64),
    /// Spend the whole budget tightening the bound.
    Tighten,
}

fn run<F: Fn(&[f64]) -> f64 + Sync>(
    target_id: &str,
    f: &F,
    domain: Domain,
    goal: Goal,
    budget: usize,
) -> Result<CertificationReport, CertifyError> {
    if budget < MIN_BUDGET {
        return Err(CertifyError::Budget { budget });
    }
    let dim = domain.dim();
    let (lo, hi) = domain.bounds();
    if (0..dim).any(|k| !(lo[k] < hi[k]) || !lo[k].is_finite() || !hi[k].is_finite()) {
        return Err(CertifyError::Domain(domain.to_string()));
    }
    let mut sampler = Sampler {
        f,
        dim,
        cache: BTreeMap::new(),
    };
    // initial uniform cover using about a tenth of the budget
    let per_axis = if dim == 1 {
        (budget / 20).clamp(8, 512)
    } else {
        ((budget as f64 / 20.0).sqrt() as usize).clamp(4, 64)
    };
    let mut cells = Vec::new();
    let ny = if dim == 1 { 1 } else { per_axis };
    for j in 0..ny {
        for i in 0..per_axis {
            let fx = |i: usize| lo[0] + (hi[0] - lo[0]) * i as f64 / per_axis as f64;
            let fy = |j: usize| {
                if dim == 1 {
                    0.0
                } else {
                    lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64
                }
            };
            cells.push(Cell {
                lo: [fx(i), fy(j)],
                hi: [fx(i + 1), if dim == 1 { 0.0 } else { fy(j + 1) }],
                lipschitz: 0.0,
                bound: f64::NEG_INFINITY,
            });
        }
    }
    sampler.fill(&cells)?;
    for cell in cells.iter_mut() {
        sampler.evaluate(cell, None);
    }
    let threshold = match goal {
        Goal::Decide(t) => t,
        Goal::Tighten => f64::NAN,
    };
    loop {
        let (min_sample, _) = min_sample(&sampler);
        let bound = cells.iter().map(|c| c.bound).fold(f64::INFINITY, f64::min);
        let target = match goal {
            Goal::Decide(t) => {
                if min_sample <= t || bound > t {
                    break;
                }
                t
            }
            Goal::Tighten => min_sample,
        };
        let (refine, keep): (Vec<Cell>, Vec<Cell>) = match goal {
            Goal::Decide(_) => cells.into_iter().partition(|c| c.bound <= target),
            Goal::Tighten => cells.into_iter().partition(|c| c.bound < target),
        };
        let per_child = if dim == 1 { 2 } else { 8 };
        let cost = refine.len() * per_child;
        if refine.is_empty() || sampler.cache.len() + cost > budget {
            cells = keep.into_iter().chain(refine).collect();
            break;
        }
        let mut children: Vec<(Cell, usize)> = Vec::with_capacity(refine.len() * 4);
        for (pi, parent) in refine.iter().enumerate() {
            for ch in split(parent, dim) {
                children.push((ch, pi));
            }
        }
        let plain: Vec<Cell> = children.iter().map(|(c, _)| c.clone()).collect();
        sampler.fill(&plain)?;
        cells = keep;
        for (mut ch, pi) in children {
            sampler.evaluate(&mut ch, Some(&refine[pi]));
            cells.push(ch);
        }
        cells.sort_by(|p, q| {
            p.lo[1]
                .total_cmp(&q.lo[1])
                .then(p.lo[0].total_cmp(&q.lo[0]))
        });
    }
    let (min_sample, argmin) = min_sample(&sampler);
    let bound = cells
        .iter()
        .map(|c| c.bound)
        .fold(f64::INFINITY, f64::min)
        .min(min_sample);
    let lipschitz = cells.iter().map(|c| c.lipschitz).fold(0.0, f64::max);
    let status = match goal {
        Goal::Decide(t) if bound > t => Status::Pass,
        Goal::Decide(t) if min_sample <= t => Status::Fail,
        _ => Status::Undecided,
    };
    Ok(CertificationReport {
        target_id: target_id.to_string(),
        domain,
        certified_infimum_lower_bound: bound,
        threshold,
        samples_used: sampler.cache.len(),
        lipschitz_estimate: lipschitz,
        pass: status == Status::Pass,
        status,
        min_sample,
        argmin: argmin[..dim].to_vec(),
        method: METHOD.to_string(),
    })
}

fn min_sample<F>(s: &Sampler<'_, F>) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0; 2]);
    for (k, &v) in &s.cache {
        if v < best.0 {
            best = (v, [f64::from_bits(k[0]), f64::from_bits(k[1])]);
        }
    }
    best
}

/// Decides whether `inf f > threshold` on `domain` within `budget` samples.
pub fn certify_infimum<F: Fn(&[f64]) -> f64 + Sync>(
    target_id: &str,
    f: F,
    domain: Domain,
    threshold: f64,
    budget: usize,
) -> Result<CertificationReport, CertifyError> {
    run(target_id, &f, domain, Goal::Decide(threshold), budget)
}

/// Spends the full budget on the tightest lower bound for `inf f`.
pub fn lower_bound<F: Fn(&[f64]) -> f64 + Sync>(
    target_id: &str,
    f: F,
    domain: Domain,
    budget: usize,
) -> Result<CertificationReport, CertifyError> {
    run(target_id, &f, domain, Goal::Tighten, budget)
}

/// Truncation of the half line used for `Φ_a`.
pub const PHI_T_MIN: f64 = 1e-4;
pub const PHI_T_MAX: f64 = 1e6;
pub const PHI_BUDGET: usize = 20_000;

/// Lower bound for `Φ_a` on one tail, valid when `Φ_a` is monotone on the
/// guard band: then the tail lies between the band edge value and the limit.
fn phi_tail(a: f64, inner: f64, outer: f64, limit: f64) -> Result<Option<f64>, SpecialError> {
    let n = 32;
    let mut prev = special::phi_big(a, inner)?;
    let mut sign = 0.0;
    for k in 1..=n {
        let t = inner * (outer / inner).powf(k as f64 / n as f64);
        let v = special::phi_big(a, t)?;
        let s = (v - prev).signum();
        if s != 0.0 {
            if sign != 0.0 && s != sign {
                return Ok(None);
            }
            sign = s;
        }
        prev = v;
    }
    let edge = special::phi_big(a, inner)?;
    Ok(Some(edge.min(limit)))
}

/// Certifies `inf_{t>0} Φ_a(t) > -1/4` for each sample `a < 1`.
pub fn verify_phi_bound(a_samples: &[f64]) -> Result<Vec<CertificationReport>, CertifyError> {
    a_samples.iter().map(|&a| verify_phi_one(a)).collect()
}

fn verify_phi_one(a: f64) -> Result<CertificationReport, CertifyError> {
    if a >= 1.0 {
        return Err(CertifyError::Domain(format!("a = {a} must be < 1")));
    }
    let threshold = -0.25;
    let (s0, s1) = (PHI_T_MIN.ln(), PHI_T_MAX.ln());
    // the outer 5% of the log range on each side is the guard band
    let band = 0.05 * (s1 - s0);
    let f = |p: &[f64]| special::phi_big(a, p[0].exp()).unwrap_or(f64::NAN);
    let mut report = certify_infimum(
        &format!("phi_bound(a={})", sig(a)),
        f,
        Domain::Interval(s0, s1),
        threshold,
        PHI_BUDGET,
    )?;
    let low = phi_tail(a, (s0 + band).exp(), PHI_T_MIN, 2.0)?;
    let inf_limit = (2.0 - a) * (4.0 - a) / 4.0;
    let high = phi_tail(a, (s1 - band).exp(), PHI_T_MAX, inf_limit)?;
    report.domain = Domain::Interval(0.0, f64::INFINITY);
    match (low, high) {
        (Some(l), Some(h)) => {
            report.certified_infimum_lower_bound = report.certified_infimum_lower_bound.min(l).min(h);
        }
        _ => report.status = Status::Undecided,
    }
    if report.status == Status::Pass && report.certified_infimum_lower_bound <= threshold {
        report.status = Status::Undecided;
    }
    report.pass = report.status == Status::Pass;
    report.method = format!("{METHOD}; t = exp(s), tails from monotone guard bands and the limits at 0 and infinity");
    Ok(report)
}

pub const V_BUDGET: usize = 4_000;

/// Certifies `v(t) > 1 - 2/t²` on `[√2, √6]`.
pub fn verify_v_inequality() -> Result<CertificationReport, CertifyError> {
    let f = |p: &[f64]| special::v_limit(p[0]).map(|v| v - (1.0 - 2.0 / (p[0] * p[0]))).unwrap_or(f64::NAN);
    certify_infimum(
        "v_inequality",
        f,
        Domain::Interval(2f64.sqrt(), 6f64.sqrt()),
        0.0,
        V_BUDGET,
    )
}

pub const GAMMA_BUDGET: usize = 200_000;

/// Certifies positivity of the `v`-based lower bound for `γ_a(t)` on the paper's rectangle.
pub fn verify_gamma_rectangle() -> Result<CertificationReport, CertifyError> {
    let f = |p: &[f64]| special::gamma_lower_bound(p[0], p[1]).unwrap_or(f64::NAN);
    certify_infimum("gamma_rectangle_v_bound", f, GAMMA_RECTANGLE, 0.0, GAMMA_BUDGET)
}

/// Certifies positivity of `γ_a(t)` itself, with `w_a` in place of `v`, on the same rectangle.
pub fn verify_gamma_rectangle_exact() -> Result<CertificationReport, CertifyError> {
    let f = |p: &[f64]| special::gamma_small(p[0], p[1]).unwrap_or(f64::NAN);
    certify_infimum("gamma_rectangle_exact", f, GAMMA_RECTANGLE, 0.0, GAMMA_BUDGET)
}

/// Location and value of the global minimum of `v` on `(0, ∞)`, from the root of `v'`.
pub fn v_minimum() -> Result<(f64, f64), SpecialError> {
    let (mut lo, mut hi) = (1.0, 4.0);
    let dlo = special::v_limit_derivative(lo)?;
    debug_assert!(dlo < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if special::v_limit_derivative(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Ok((t, special::v_limit(t)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_passes() {
        let r = certify_infimum("t2", |p| p[0] * p[0], Domain::Interval(-1.0, 1.0), -0.1, 2000).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert!(r.certified_infimum_lower_bound >= -0.1 && r.certified_infimum_lower_bound <= 0.0);
        assert!(r.certified_infimum_lower_bound <= r.min_sample);
    }

    #[test]
    fn sine_passes_near_minus_one() {
        let tau = std::f64::consts::TAU;
        let r = certify_infimum("sin", |p| p[0].sin(), Domain::Interval(0.0, tau), -1.5, 2000).unwrap();
        assert!(r.pass);
        assert!((r.certified_infimum_lower_bound + 1.0).abs() < 0.5);
    }

    #[test]
    fn below_threshold_fails() {
        let r = certify_infimum("t2", |p| p[0] * p[0] - 1.0, Domain::Interval(-1.0, 1.0), -0.5, 2000).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!(!r.pass);
    }

    #[test]
    fn tiny_margin_is_undecided() {
        let r = certify_infimum("t2", |p| p[0] * p[0], Domain::Interval(-1.0, 1.0), -1e-14, 1000).unwrap();
        assert_eq!(r.status, Status::Undecided);
    }

    #[test]
    fn small_budget_rejected() {
        assert!(matches!(
            certify_infimum("x", |p| p[0], Domain::Interval(0.0, 1.0), 0.0, 10),
            Err(CertifyError::Budget { .. })
        ));
    }

    #[test]
    fn rectangle_paraboloid() {
        let dom = Domain::Rectangle { x: (-1.0, 2.0), y: (-1.0, 1.0) };
        let f = |p: &[f64]| (p[0] - 0.3).powi(2) + (p[1] + 0.2).powi(2) + 0.5;
        let r = certify_infimum("bowl", f, dom, 0.4, 5000).unwrap();
        assert!(r.pass, "{r:?}");
        let t = lower_bound("bowl", f, dom, 20_000).unwrap();
        assert!(t.certified_infimum_lower_bound <= 0.5 && t.certified_infimum_lower_bound > 0.45);
    }

    #[test]
    fn v_inequality_margin_at_left_end() {
        let t = 2f64.sqrt();
        let m = special::v_limit(t).unwrap() - (1.0 - 2.0 / (t * t));
        assert!(m > 0.7);
    }

    #[test]
    fn record_is_one_line() {
        let r = certify_infimum("t2", |p| p[0] * p[0], Domain::Interval(-1.0, 1.0), -0.1, 2000).unwrap();
        let line = r.record();
        assert_eq!(line.lines().count(), 1);
        assert!(line.starts_with("t2\t[") && line.ends_with("\tpass"));
    }
}
