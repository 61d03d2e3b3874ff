//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use harnack_core::assembly::{Assembler, DiscreteField, ManufacturedProblem, OperatorSpec, Parity};
use harnack_core::geometry::{HalfGrid, Shape};
use harnack_core::holder::{self, ProblemFamily};
use harnack_core::Sampler;

pub fn grid(h: f64) -> Arc<HalfGrid> {
    Arc::new(HalfGrid::build(1, Shape::HalfRectangle, h).expect("grid"))
}

/// Odd manufactured problem `u = sin(pi x) y|y|^-a` with weight `|y|^a`.
pub fn odd_problem(a: f64) -> ManufacturedProblem {
    let weight = Sampler::new("|y|^a", move |_, y: f64| y.abs().powf(a));
    let u = Sampler::new("u", move |x, y: f64| (PI * x[0]).sin() * y.signum() * y.abs().powf(1.0 - a));
    let f = Sampler::new("f", move |x, y: f64| PI * PI * (PI * x[0]).sin() * y.signum() * y.abs().powf(1.0 - a));
    ManufacturedProblem::new(u, f, Assembler::new(weight, OperatorSpec::identity(), Parity::Odd))
}

/// Ratio field of the standard family at `a`, `eps` on a grid of spacing `h`.
pub fn ratio_field(a: f64, eps: f64, h: f64) -> DiscreteField {
    let fam = ProblemFamily::standard(a, 0.1);
    holder::solve_member(&fam, eps, &grid(h), 1e-10).expect("solve").ratio
}
