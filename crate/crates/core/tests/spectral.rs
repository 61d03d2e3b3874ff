use std::sync::Arc;

use harnack_core::assembly::{DiscreteField, Parity};
use harnack_core::geometry::{HalfGrid, Shape};
use harnack_core::spectral::*;
use harnack_core::{Sampler, WeightFamily};

const H64: f64 = 1.0 / 64.0;

#[test]
fn trace_eigenvalue_examples() {
    let e = trace_eigen(0.0, 0.0, 1.0 / 32.0).unwrap();
    assert!((e.lambda - 1.0).abs() < 1e-3, "{}", e.lambda);
    let e = trace_eigen(0.5, 0.0, 1.0 / 32.0).unwrap();
    assert!((e.lambda - 0.5).abs() < 0.05, "{}", e.lambda);
    // exponent a - 2 with a = 1/2
    let e = trace_eigen(-1.5, 0.0, 1.0 / 32.0).unwrap();
    assert!((e.lambda - 2.5).abs() < 0.01, "{}", e.lambda);
    assert_eq!(e.quotient_id, "trace_flat");
}

#[test]
fn trace_eigenvector_is_close_to_y_for_a_zero() {
    let e = trace_eigen(0.0, 0.0, 1.0 / 32.0).unwrap();
    let v = &e.eigenvector;
    let scale = v.eval(0.0, 1.0).unwrap();
    for (x, y) in [(0.2, 0.3), (-0.5, 0.5), (0.0, 0.9)] {
        assert!((v.eval(x, y).unwrap() / scale - y).abs() < 5e-3);
    }
}

#[test]
fn linearity_in_a() {
    let coarse: Vec<f64> = [-0.5, 0.0, 0.5]
        .iter()
        .map(|&a| (trace_eigen(a, 0.0, 1.0 / 32.0).unwrap().lambda - (1.0 - a)).abs())
        .collect();
    let fine: Vec<f64> = [-0.5, 0.0, 0.5]
        .iter()
        .map(|&a| (trace_eigen(a, 0.0, H64).unwrap().lambda - (1.0 - a)).abs())
        .collect();
    for (c, f) in coarse.iter().zip(&fine) {
        assert!(*f <= 0.05 && f < c, "{coarse:?} {fine:?}");
    }
}

#[test]
fn omega_form_tends_to_three_minus_a() {
    for a in [0.5, -1.0] {
        let e = trace_eigen_omega(a, 0.0, 1.0 / 32.0).unwrap();
        assert!((e.lambda - (3.0 - a)).abs() < 0.01, "{a} {}", e.lambda);
    }
}

#[test]
fn eigen_residuals_are_small() {
    let all = [
        trace_eigen(0.3, 0.0, 1.0 / 16.0).unwrap(),
        trace_eigen(0.3, 0.2, 1.0 / 16.0).unwrap(),
        trace_eigen_omega(-0.5, 0.1, 1.0 / 16.0).unwrap(),
        hardy_quotient(&Profile::constant(1.0), 1.0 / 16.0).unwrap(),
        boundary_hardy_quotient(&Profile::constant(1.0), 1.0 / 16.0).unwrap(),
    ];
    for e in &all {
        assert!(e.residual <= 1e-8, "{} {}", e.quotient_id, e.residual);
    }
    let t = eigen_table(&all).to_csv();
    assert!(t.contains("quotient_id,a,eps_or_r,h,lambda,residual"));
}

#[test]
fn hardy_constant_window_and_monotone() {
    let w = Profile::constant(1.0);
    let l: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0, H64]
        .iter()
        .map(|&h| hardy_quotient(&w, h).unwrap().lambda)
        .collect();
    assert!(l[2] >= 0.25 && l[2] <= 0.40, "{l:?}");
    assert!(l.windows(2).all(|p| p[1] <= p[0] + 1e-8), "{l:?}");
}

#[test]
fn hardy_weighted_is_stable_in_eps() {
    let l: Vec<f64> = [0.0, 0.1, 1.0]
        .iter()
        .map(|&eps| hardy_quotient(&Profile::rho(WeightFamily::new(0.5, eps)), 1.0 / 32.0).unwrap().lambda)
        .collect();
    let lo = l.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = l.iter().cloned().fold(0.0, f64::max);
    assert!(lo > 0.05 && hi / lo < 3.0, "{l:?}");
}

#[test]
fn boundary_hardy_examples() {
    let w = Profile::constant(1.0);
    let c = boundary_hardy_quotient(&w, 1.0 / 32.0).unwrap().lambda;
    let f = boundary_hardy_quotient(&w, H64).unwrap().lambda;
    assert!(c > 0.0 && f > 0.0 && (c - f).abs() / f < 0.1, "{c} {f}");

    let l: Vec<f64> = [0.0, 0.1, 1.0]
        .iter()
        .map(|&eps| boundary_hardy_rho(-1.0, eps, 1.0 / 32.0).unwrap().lambda)
        .collect();
    assert!(l.iter().all(|v| *v > 0.05), "{l:?}");

    let o = boundary_hardy_omega_inverse(0.5, 0.1, 1.0 / 32.0).unwrap();
    assert!(o.lambda > 0.0, "{}", o.lambda);
}

#[test]
fn scale_invariance() {
    let fam = WeightFamily::new(0.4, 0.0);
    let base = hardy_quotient(&Profile::rho(fam), 1.0 / 16.0).unwrap().lambda;
    let scaled = hardy_quotient(&Profile::rho(fam).scaled(7.3), 1.0 / 16.0).unwrap().lambda;
    assert!((base - scaled).abs() <= 1e-12 * base, "{base} {scaled}");
    let a = boundary_hardy_quotient(&Profile::power(0.3), 1.0 / 16.0).unwrap().lambda;
    let b = boundary_hardy_quotient(&Profile::power(0.3).scaled(0.01), 1.0 / 16.0).unwrap().lambda;
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn refinement_never_raises_the_minimum() {
    let hs = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let seqs: Vec<Vec<f64>> = vec![
        hs.iter().map(|&h| trace_eigen(0.0, 0.0, h).unwrap().lambda).collect(),
        hs.iter().map(|&h| trace_eigen(0.5, 0.0, h).unwrap().lambda).collect(),
        hs.iter().map(|&h| hardy_quotient(&Profile::constant(1.0), h).unwrap().lambda).collect(),
    ];
    for s in &seqs {
        assert!(s.windows(2).all(|p| p[1] <= p[0] + 1e-8), "{s:?}");
    }
}

#[test]
fn sweep_a_zero_is_flat() {
    let rows = eigen_stability_sweep(0.0, &[1.0, 4.0, 16.0], SweepForm::Rho, 1.0 / 16.0).unwrap();
    for r in &rows {
        assert!((r.lambda - rows[0].lambda).abs() < 1e-10);
    }
}

#[test]
fn sweep_converges_to_sharp_constants() {
    let rows = eigen_stability_sweep(0.5, &[1.0, 4.0, 16.0, 64.0], SweepForm::Rho, H64).unwrap();
    let gap = |k: usize| (rows[k].lambda - 0.5).abs();
    assert!(gap(3) < gap(0) && gap(3) <= 0.05, "{rows:?}");

    let rows = eigen_stability_sweep(-1.0, &[1.0, 16.0, 256.0], SweepForm::OmegaInverse, 1.0 / 32.0).unwrap();
    let last = rows.last().unwrap().lambda;
    assert!((last - 4.0).abs() < (rows[0].lambda - 4.0).abs() && (last - 4.0).abs() < 0.05, "{rows:?}");
}

#[test]
fn sweep_rejects_bad_input() {
    assert!(eigen_stability_sweep(0.5, &[4.0, 1.0], SweepForm::Rho, 0.25).is_err());
    assert!(eigen_stability_sweep(-1.5, &[1.0], SweepForm::Rho, 0.25).is_err());
}

#[test]
fn growth_of_homogeneous_solution_is_constant() {
    let a = 0.5;
    let rows = growth_monitor(|_, y| Ok(y.powf(1.0 - a)), a, &[0.25, 0.5, 0.75, 1.0], 400).unwrap();
    assert!(growth_spread(&rows) < 1e-12);
    let zero = growth_monitor(|_, _| Ok(0.0), a, &[0.5, 1.0], 100).unwrap();
    assert!(zero.iter().all(|r| r.h == 0.0));
}

#[test]
fn growth_of_perturbed_solution_is_nondecreasing() {
    for a in [-0.5, 0.5] {
        let mesh = Arc::new(HalfDiskMesh::polar(H64).unwrap());
        let u = solve_dirichlet(&mesh, &Profile::power(a), |x, y| y.powf(1.0 - a) * (1.0 + 0.1 * x + 0.1 * (x * x - y * y / (3.0 - a)))).unwrap();
        let rows = growth_monitor(|x, y| u.eval(x, y), a, &[0.25, 0.5, 0.75, 1.0], 600).unwrap();
        assert!(growth_worst_drop(&rows) <= 0.02, "{a} {rows:?}");
    }
}

#[test]
fn dirichlet_solution_reproduces_homogeneous_profile() {
    let a = 0.5;
    let err = |h: f64| {
        let mesh = Arc::new(HalfDiskMesh::polar(h).unwrap());
        let u = solve_dirichlet(&mesh, &Profile::power(a), |_, y| y.powf(1.0 - a)).unwrap();
        [(0.1, 0.5), (-0.3, 0.2)]
            .iter()
            .map(|&(x, y)| (u.eval(x, y).unwrap() - y.powf(1.0 - a)).abs())
            .fold(0.0, f64::max)
    };
    let (c, f) = (err(1.0 / 16.0), err(1.0 / 32.0));
    assert!(f < c && f < 0.02, "{c} {f}");
}

#[test]
fn energy_identity_for_bump() {
    let mesh = Arc::new(HalfDiskMesh::polar(H64).unwrap());
    let bump = |x: f64, y: f64| {
        let r2 = x * x + (y - 0.4) * (y - 0.4);
        (1.0 - r2 / 0.25).max(0.0).powi(3)
    };
    let (d, q) = energy_identity(&mesh, WeightFamily::new(0.5, 1.0), bump).unwrap();
    assert!((d - q).abs() / d <= 0.02, "{d} {q}");
    let (d0, q0) = energy_identity(&mesh, WeightFamily::new(0.0, 1.0), bump).unwrap();
    assert!((d0 - q0).abs() <= 1e-10 * d0);
}

#[test]
fn isometry_round_trip() {
    let g = Arc::new(HalfGrid::build(1, Shape::HalfDisk, 1.0 / 16.0).unwrap());
    let u = DiscreteField::sample(&g, &Sampler::new("s", |x, y| (3.0 * x[0]).sin() + y), Parity::None);
    for kind in [IsometryKind::Rho, IsometryKind::OmegaInverse] {
        let fam = WeightFamily::new(0.5, 0.1);
        let v = isometry_transform(&u, &fam, kind, Direction::ToFlat).unwrap();
        let back = isometry_transform(&v, &fam, kind, Direction::FromFlat).unwrap();
        assert!(back.max_abs_diff(&u, |_, _| true) < 1e-12);
    }
    let same = isometry_transform(&u, &WeightFamily::new(0.0, 0.0), IsometryKind::Rho, Direction::ToFlat).unwrap();
    assert_eq!(same.values, u.values);
}
