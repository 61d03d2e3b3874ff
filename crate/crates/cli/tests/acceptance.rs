//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use harnack_core::assembly::{OperatorSpec, VectorField};
use harnack_core::certify;
use harnack_core::geometry::{HalfGrid, Shape};
use harnack_core::holder::{self, FermiDemo, ProblemFamily, SweepConfig, SweepMode, DEFAULT_EPS};
use harnack_core::special::{self, CharacteristicSolution, WeightFamily};
use harnack_core::spectral::{self, HalfDiskMesh, Profile};
use harnack_core::transform::{self, RatioProblem};
use harnack_core::Sampler;

type Outcome = Result<(bool, String), String>;

fn trace_eigenvalue() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [-0.5, 0.0, 0.5] {
        let mut errs = Vec::new();
        for h in [1.0 / 64.0, 1.0 / 128.0] {
            let t = Instant::now();
            let e = spectral::trace_eigen(a, 0.0, h).map_err(|e| e.to_string())?;
            let secs = t.elapsed().as_secs_f64();
            ok &= secs <= 60.0;
            errs.push((e.lambda - (1.0 - a)).abs());
            notes.push(format!("a={a} h=1/{} lambda={:.5} {secs:.1}s", (1.0 / h) as u32, e.lambda));
        }
        ok &= errs[0] <= 0.05 && errs[1] < errs[0];
    }
    Ok((ok, notes.join("; ")))
}

fn auxiliary_eigenvalue() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [0.5, -1.0] {
        let e = spectral::trace_eigen_omega(a, 0.0, 1.0 / 64.0).map_err(|e| e.to_string())?;
        ok &= (e.lambda - (3.0 - a)).abs() <= 0.1;
        notes.push(format!("a={a} mu={:.5} target={}", e.lambda, 3.0 - a));
    }
    Ok((ok, notes.join("; ")))
}

fn hardy_constant() -> Outcome {
    let w = Profile::constant(1.0);
    let mut l = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        l.push(spectral::hardy_quotient(&w, h).map_err(|e| e.to_string())?.lambda);
    }
    let ok = (0.25..=0.40).contains(&l[2]) && l.windows(2).all(|p| p[1] <= p[0]);
    Ok((ok, format!("lambda(h=1/16,1/32,1/64) = {:.5}, {:.5}, {:.5}", l[0], l[1], l[2])))
}

fn landmarks() -> Outcome {
    let t = Instant::now();
    let e = |e: &dyn std::fmt::Display| e.to_string();
    let v = special::v_limit(5.1).map_err(|x| e(&x))?;
    let dv = special::v_limit_derivative(5.1).map_err(|x| e(&x))?;
    let (_, vmin) = certify::v_minimum().map_err(|x| e(&x))?;
    let phi = certify::verify_phi_bound(&[0.9, 0.5, 0.0, -1.0, -3.0, -10.0]).map_err(|x| e(&x))?;
    let gamma = certify::verify_gamma_rectangle().map_err(|x| e(&x))?;
    let secs = t.elapsed().as_secs_f64();
    let checks = [
        ("v(5.1)", (v - 0.95774).abs() <= 1e-4),
        ("v'(5.1)", (dv - 0.001860).abs() <= 1e-4),
        ("min v", (vmin - 0.77836).abs() <= 1e-4),
        ("phi", phi.iter().all(|r| r.pass)),
        ("gamma", gamma.pass),
        ("runtime", secs <= 120.0),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok((
        failed.is_empty(),
        format!(
            "v={v:.6} v'={dv:.6} min={vmin:.6} gamma_lower={:.4} {secs:.1}s failed=[{}]",
            gamma.certified_infimum_lower_bound,
            failed.join(",")
        ),
    ))
}

fn psi_bounds() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [-2.0, -0.5, 0.5] {
        let (lo, hi) = special::psi_extrema(a, 1e-8, 1e12, 10_000).map_err(|e| e.to_string())?;
        ok &= (hi - f64::max(1.0, 1.0 - a)).abs() <= 1e-4 && (lo - f64::min(1.0, 1.0 - a)).abs() <= 1e-4;
        notes.push(format!("a={a} inf={lo:.6} sup={hi:.6}"));
    }
    Ok((ok, notes.join("; ")))
}

fn ratio_residual(a: f64, h: f64) -> Result<f64, String> {
    let u = Sampler::new("u", move |x, y: f64| y.signum() * y.abs().powf(1.0 - a) * x[0].cos() * (1.0 + y * y));
    let f = Sampler::new("f", move |x, y: f64| {
        y.signum() * y.abs().powf(1.0 - a) * x[0].cos() * ((1.0 + y * y) - 2.0 * (3.0 - a))
    });
    let p = RatioProblem {
        sol: CharacteristicSolution::flat(WeightFamily::new(a, 0.0)),
        spec: OperatorSpec::identity(),
        f,
        big_f: VectorField::zero(),
        u_trace: u.clone(),
        u_exact: Some(u),
        region: 0.5,
    };
    let g = Arc::new(HalfGrid::build(1, Shape::HalfRectangle, h).map_err(|e| e.to_string())?);
    Ok(transform::verify_ratio_equation(&p, &g, 1e-12).map_err(|e| e.to_string())?.residual_norm)
}

fn ratio_equation() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in [0.5, -1.5] {
        let q = ratio_residual(a, 1.0 / 32.0)? / ratio_residual(a, 1.0 / 64.0)?;
        ok &= q >= 3.0;
        notes.push(format!("a={a} reduction={q:.3}"));
    }
    Ok((ok, notes.join("; ")))
}

fn stability_sweeps() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    let cfg = SweepConfig::default();
    for a in [0.5, -1.5] {
        for mu in [0.0, 0.1] {
            let t = Instant::now();
            let fam = ProblemFamily::standard(a, mu);
            for mode in [SweepMode::RatioC0, SweepMode::RatioC1] {
                let r = holder::epsilon_sweep(&fam, &DEFAULT_EPS, mode, &cfg).map_err(|e| e.to_string())?;
                ok &= r.pass;
                notes.push(format!(
                    "a={a} mu_x2={mu} {mode}: ratio={:.3} slope={:.3}",
                    r.uniformity_ratio, r.trend_slope
                ));
            }
            ok &= t.elapsed().as_secs_f64() <= 600.0;
        }
    }
    Ok((ok, notes.join("; ")))
}

fn holder_exponent() -> Outcome {
    let half = holder::exponent_estimate(|_, y| y.signum() * y.abs().powf(0.5), &[0.0]);
    let smooth = holder::exponent_estimate(|_, y| y.signum() * y.abs().powf(1.5), &[0.0]);
    let ok = (half.alpha_hat - 0.5).abs() <= 0.05 && smooth.alpha_hat >= 0.95;
    Ok((ok, format!("a=0.5: {:.4}; a=-0.5: {:.4}", half.alpha_hat, smooth.alpha_hat)))
}

fn growth_monotonicity() -> Outcome {
    let radii = [0.25, 0.5, 0.75, 1.0];
    let a = 0.5;
    let exact = spectral::growth_monitor(|_, y| Ok(y.powf(1.0 - a)), a, &radii, 400).map_err(|e| e.to_string())?;
    let spread = spectral::growth_spread(&exact);
    let mesh = Arc::new(HalfDiskMesh::polar(1.0 / 64.0).map_err(|e| e.to_string())?);
    let u = spectral::solve_dirichlet(&mesh, &Profile::power(a), |x, y| {
        y.powf(1.0 - a) * (1.0 + 0.1 * x + 0.1 * (x * x - y * y / (3.0 - a)))
    })
    .map_err(|e| e.to_string())?;
    let rows = spectral::growth_monitor(|x, y| u.eval(x, y), a, &radii, 600).map_err(|e| e.to_string())?;
    let drop = spectral::growth_worst_drop(&rows);
    Ok((spread <= 0.02 && drop <= 0.02, format!("exact spread={spread:.2e} perturbed worst drop={drop:.2e}")))
}

fn fermi() -> Outcome {
    let d = holder::fermi_demo(2.0, 0.5, &DEFAULT_EPS, &SweepConfig::default()).map_err(|e| e.to_string())?;
    Ok((
        d.pass(),
        format!(
            "jacobian defect={:.2e} (tol {:e}) c0 ratio={:.3} c1 restricted ratio={:.3} slope={:.3}",
            d.jacobian_defect,
            FermiDemo::JACOBIAN_TOL,
            d.c0.uniformity_ratio,
            d.c1_restricted.uniformity_ratio,
            d.c1_restricted.trend_slope
        ),
    ))
}

const SUITE: &[(&str, &[&str])] = &[
    ("trace", &["eigen", "--a", "-0.5,0,0.5"]),
    ("omega", &["eigen", "--quotient", "trace_omega", "--a", "0.5,-1"]),
    ("hardy", &["eigen", "--quotient", "hardy"]),
    ("c1", &["sweep", "--h", "1/32", "--mode", "ratio_c1", "--a", "-1.5", "--mu-x2", "0.1"]),
    ("all", &["sweep", "--h", "1/32"]),
    ("all", &["certify"]),
    ("all", &["solve"]),
    ("all", &["fermi-demo", "--h", "1/32"]),
    ("all", &["report"]),
];

fn run_suite(out: &Path) -> Result<(), String> {
    for (dir, args) in SUITE {
        let o = Command::new(env!("CARGO_BIN_EXE_harnack"))
            .args(*args)
            .arg("--out")
            .arg(out.join(dir))
            .output()
            .map_err(|e| e.to_string())?;
        if o.status.code() == Some(2) {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    Ok(())
}

fn csv_files(dir: &Path, base: &Path, acc: &mut Vec<std::path::PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    for e in entries.flatten() {
        let p = e.path();
        if p.is_dir() {
            csv_files(&p, base, acc);
        } else if p.extension().is_some_and(|x| x == "csv") {
            acc.push(p.strip_prefix(base).unwrap().to_path_buf());
        }
    }
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_suite(a.path())?;
    run_suite(b.path())?;
    let mut files = Vec::new();
    csv_files(a.path(), a.path(), &mut files);
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.path().join(f)).ok() != std::fs::read(b.path().join(f)).ok())
        .map(|f| f.display().to_string())
        .collect();
    Ok((
        !files.is_empty() && differing.is_empty(),
        format!("{} csv files compared, differing: {:?}", files.len(), differing),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("trace eigenvalue 1-a", trace_eigenvalue),
        ("auxiliary eigenvalue 3-a", auxiliary_eigenvalue),
        ("Hardy constant", hardy_constant),
        ("v landmarks and certificates", landmarks),
        ("psi bounds", psi_bounds),
        ("ratio equation residual", ratio_equation),
        ("epsilon stability sweeps", stability_sweeps),
        ("Hölder exponent", holder_exponent),
        ("growth monotonicity", growth_monotonicity),
        ("Fermi demo", fermi),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {:>2} {:<30} {} ({:.1}s) {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
