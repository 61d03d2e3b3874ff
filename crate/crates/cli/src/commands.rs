//! Subcommand implementations.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use harnack_core::assembly::{self, Assembler, ManufacturedProblem, OperatorSpec, Parity, RhsMode};
use harnack_core::certify::{self, CertificationReport};
use harnack_core::geometry::{EmbeddedCurve, HalfGrid, Shape};
use harnack_core::holder::{self, HolderError, ProblemFamily, Region, StabilityReport, SweepConfig, SweepMode};
use harnack_core::report::{sig, Table};
use harnack_core::spectral::{self, EigenResult, Profile, SpectralError, SweepForm};
use harnack_core::Sampler;

use crate::config::Config;
use crate::{write, CliError, Outcome};

pub fn dispatch(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    match cfg.command.as_str() {
        "eigen" => eigen(cfg, out),
        "sweep" => sweep(cfg, out),
        "certify" => certify_cmd(cfg, out),
        "solve" => solve(cfg, out),
        "fermi-demo" => fermi(cfg, out),
        "report" => report(out),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

fn spectral_err(e: SpectralError) -> CliError {
    match e {
        SpectralError::Domain(m) => CliError::Usage(m),
        e => CliError::Failed(e.to_string()),
    }
}

fn holder_err(e: HolderError) -> CliError {
    match e {
        HolderError::Config(m) => CliError::Usage(m),
        HolderError::Solve { eps, message, partial } => CliError::Failed(format!(
            "solve failed at eps = {eps}: {message} (completed eps: {:?})",
            partial.iter().map(|r| r.eps).collect::<Vec<_>>()
        )),
        e => CliError::Failed(e.to_string()),
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Provenance header shared by every artefact.
fn stamp(t: Table, cfg: &Config, grid: &str, tolerances: &str, pass: Option<bool>) -> Table {
    let has_grid = t.meta.iter().any(|(k, _)| k == "grid");
    let mut t = t.meta("command", &cfg.command).meta("config_hash", cfg.hash());
    if !has_grid {
        t = t.meta("grid", grid);
    }
    let t = t.meta("tolerances", tolerances);
    match pass {
        Some(p) => t.meta("pass", p),
        None => t,
    }
}

fn text_header(cfg: &Config, grid: &str, tolerances: &str, pass: bool) -> String {
    stamp(Table::default(), cfg, grid, tolerances, Some(pass))
        .to_csv()
        .lines()
        .filter(|l| l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn eigen(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let quotient = cfg.str("quotient").to_string();
    let h = cfg.num("h")?;
    let eps = cfg.num("eps")?;
    let a_list = cfg.list("a")?;
    let residual_tol = cfg.num("residual_tol")?;
    let mut results: Vec<EigenResult> = Vec::new();
    let mut checks: Vec<String> = Vec::new();
    let mut table = spectral::eigen_table(&[]);
    match quotient.as_str() {
        "trace" | "trace_omega" => {
            let (tol, shift) = if quotient == "trace" {
                (cfg.num("trace_tol")?, 1.0)
            } else {
                (cfg.num("omega_tol")?, 3.0)
            };
            for &a in &a_list {
                let e = if quotient == "trace" {
                    spectral::trace_eigen(a, eps, h)
                } else {
                    spectral::trace_eigen_omega(a, eps, h)
                }
                .map_err(spectral_err)?;
                if eps == 0.0 && (e.lambda - (shift - a)).abs() > tol {
                    checks.push(format!("a={a}: lambda={} differs from {} by more than {tol}", sig(e.lambda), shift - a));
                }
                results.push(e);
            }
        }
        "hardy" | "boundary_hardy" => {
            let p = cfg.num("weight_power")?;
            let w = Profile::power(p);
            let e = if quotient == "hardy" {
                spectral::hardy_quotient(&w, h)
            } else {
                spectral::boundary_hardy_quotient(&w, h)
            }
            .map_err(spectral_err)?;
            if quotient == "hardy" && p == 0.0 {
                let (lo, hi) = (cfg.num("hardy_min")?, cfg.num("hardy_max")?);
                if !(e.lambda >= lo && e.lambda <= hi) {
                    checks.push(format!("lambda={} outside [{lo}, {hi}]", sig(e.lambda)));
                }
            }
            results.push(e);
        }
        "sweep" => {
            let form = match cfg.str("form") {
                "rho" => SweepForm::Rho,
                "omega_inverse" => SweepForm::OmegaInverse,
                f => return Err(CliError::Usage(format!("form must be rho or omega_inverse, got {f}"))),
            };
            let r = cfg.list("r")?;
            for &a in &a_list {
                for row in spectral::eigen_stability_sweep(a, &r, form, h).map_err(spectral_err)? {
                    if row.residual > residual_tol {
                        checks.push(format!("a={a} r={}: residual {}", row.r, sig(row.residual)));
                    }
                    table.push(vec![
                        format!("sweep_{}", cfg.str("form")),
                        sig(a),
                        sig(row.r),
                        sig(h),
                        sig(row.lambda),
                        sig(row.residual),
                    ]);
                }
            }
        }
        q => return Err(CliError::Usage(format!("unknown quotient {q}"))),
    }
    for e in &results {
        if e.residual > residual_tol {
            checks.push(format!("{} a={}: residual {}", e.quotient_id, e.a, sig(e.residual)));
        }
    }
    table.rows.extend(spectral::eigen_table(&results).rows);
    let pass = checks.is_empty();
    let tol = format!("residual<={residual_tol} eigen_tol={} stop_residual={}", spectral::EIGEN_TOL, spectral::RESIDUAL_TOL);
    let t = stamp(table, cfg, &format!("polar half disk h={}", sig(h)), &tol, Some(pass));
    let file = write(out, "eigen.csv", &t.to_csv())?;
    let mut summary = format!("eigen quotient={quotient}: {} rows", t.rows.len());
    for c in &checks {
        summary.push_str(&format!("\n  failed: {c}"));
    }
    Ok(Outcome {
        pass,
        files: vec![file],
        summary,
    })
}

fn sweep_config(cfg: &Config) -> Result<SweepConfig, CliError> {
    Ok(SweepConfig {
        alpha: cfg.num("alpha")?,
        h: cfg.num("h")?,
        region: Region {
            x_max: cfg.num("x_max")?,
            y_min: cfg.num("y_min")?,
            y_max: cfg.num("y_max")?,
        },
        restrict_sqrt_eps: cfg.flag("restrict")?,
        tau: cfg.num("tau")?,
        slope_tol: cfg.num("slope_tol")?,
        tol: cfg.num("solver_tol")?,
        p: (cfg.num("p1")?, cfg.num("p2")?),
        beta: cfg.num("beta")?,
    })
}

fn sweep_tolerances(c: &SweepConfig) -> String {
    format!("tau={} slope_tol={} solver_tol={}", c.tau, c.slope_tol, c.tol)
}

fn verdict_block(r: &StabilityReport) -> String {
    let mut s = format!("{}\n", r.verdict());
    if !r.window_ok {
        s.push_str(&format!(
            "alpha window violated: alpha={} exceeds the admissible {}\n",
            sig(r.alpha),
            sig(r.alpha_window)
        ));
    }
    if !r.skipped.is_empty() {
        s.push_str(&format!("skipped eps (restricted region empty): {:?}\n", r.skipped));
    }
    s
}

fn sweep(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let a = cfg.num("a")?;
    let family = match cfg.str("family") {
        "standard" => ProblemFamily::standard(a, cfg.num("mu_x2")?),
        "fermi" => ProblemFamily::fermi(&EmbeddedCurve::circle([0.0, 0.0], cfg.num("radius")?, true), a),
        f => return Err(CliError::Usage(format!("family must be standard or fermi, got {f}"))),
    };
    let mode: SweepMode = cfg.str("mode").parse().map_err(holder_err)?;
    let sc = sweep_config(cfg)?;
    let eps = cfg.list("eps")?;
    let r = holder::epsilon_sweep(&family, &eps, mode, &sc).map_err(holder_err)?;
    let pass = r.pass && r.window_ok;
    let grid = HalfGrid::build(family.n, Shape::HalfRectangle, sc.h).map_err(failed)?.describe();
    let tol = sweep_tolerances(&sc);
    let csv = stamp(r.to_table(), cfg, &grid, &tol, Some(pass)).to_csv();
    let files = vec![
        write(out, "sweep.csv", &csv)?,
        write(out, "verdict.txt", &format!("{}{}", text_header(cfg, &grid, &tol, pass), verdict_block(&r)))?,
        write(out, "sweep.dat", &r.plot_data())?,
    ];
    Ok(Outcome {
        pass,
        files,
        summary: verdict_block(&r).trim_end().to_string(),
    })
}

fn certify_cmd(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let phi = certify::verify_phi_bound(&cfg.list("phi_a")?).map_err(failed)?;
    let v = certify::verify_v_inequality().map_err(failed)?;
    let g = certify::verify_gamma_rectangle().map_err(failed)?;
    let exact = certify::verify_gamma_rectangle_exact().map_err(failed)?;
    let judged: Vec<&CertificationReport> = phi.iter().chain([&v, &g]).collect();
    let pass = judged.iter().all(|r| r.pass);
    let mut body = String::from("target\tdomain\tlower_bound\tthreshold\tstatus\n");
    for r in &judged {
        body.push_str(&r.record());
        body.push('\n');
    }
    body.push_str(&format!("# supplementary\n{}\n", exact.record()));
    let tol = format!("safety={} budgets=phi:{} v:{} gamma:{}", certify::SAFETY, certify::PHI_BUDGET, certify::V_BUDGET, certify::GAMMA_BUDGET);
    let header = text_header(cfg, "none", &tol, pass);
    let text = format!("{header}# method={}\n{body}", certify::METHOD);
    let file = write(out, "certify.txt", &text)?;
    Ok(Outcome {
        pass,
        files: vec![file],
        summary: body.trim_end().to_string(),
    })
}

fn solve(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let a = cfg.num("a")?;
    if a >= 1.0 {
        return Err(CliError::Usage(format!("a must be < 1, got {a}")));
    }
    let h_list = cfg.list("h")?;
    if h_list.is_empty() || h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Usage("h must be a decreasing list".into()));
    }
    let y_min = cfg.num("y_min")?;
    let min_order = cfg.num("min_order")?;
    let weight = Sampler::new(format!("|y|^{a}"), move |_, y: f64| y.abs().powf(a));
    let asm = Assembler::new(weight, OperatorSpec::identity(), Parity::Odd);
    let u = Sampler::new("sin(pi x) y|y|^-a", move |x, y: f64| (PI * x[0]).sin() * y.signum() * y.abs().powf(1.0 - a));
    let f = Sampler::new("pi^2 u", move |x, y: f64| PI * PI * (PI * x[0]).sin() * y.signum() * y.abs().powf(1.0 - a));
    let p = ManufacturedProblem::new(u, f, asm);
    let rows = assembly::convergence_study(&p, 1, Shape::HalfRectangle, &h_list, y_min).map_err(failed)?;
    let pass = rows[1..].iter().all(|r| r.exact || r.order.is_some_and(|o| o >= min_order));
    let finest = *h_list.last().unwrap_or(&0.0);
    let grid = Arc::new(HalfGrid::build(1, Shape::HalfRectangle, finest).map_err(failed)?);
    let (op, rhs, _) = assembly::manufactured_problem(&p, &grid, RhsMode::Continuum).map_err(failed)?;
    let sol = assembly::solve_linear(&op, &rhs, 1e-12).map_err(failed)?;
    let tol = format!("solver_tol=1e-12 min_order={min_order} y_min={y_min}");
    let orders = stamp(assembly::convergence_table(&rows), cfg, &format!("half rectangle h={h_list:?}"), &tol, Some(pass));
    let field = stamp(sol.field.to_table(&[("u_exact", "sin(pi x) y|y|^-a".into())]), cfg, &grid.describe(), &tol, None);
    let files = vec![write(out, "solve.csv", &orders.to_csv())?, write(out, "field.csv", &field.to_csv())?];
    let summary = rows
        .iter()
        .map(|r| format!("h={} error={} order={}", sig(r.h), sig(r.max_error), r.order.map(sig).unwrap_or_else(|| "NA".into())))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome { pass, files, summary })
}

fn fermi(cfg: &Config, out: &Path) -> Result<Outcome, CliError> {
    let sc = SweepConfig {
        alpha: cfg.num("alpha")?,
        h: cfg.num("h")?,
        tau: cfg.num("tau")?,
        slope_tol: cfg.num("slope_tol")?,
        tol: cfg.num("solver_tol")?,
        ..SweepConfig::default()
    };
    let d = holder::fermi_demo(cfg.num("radius")?, cfg.num("a")?, &cfg.list("eps")?, &sc).map_err(holder_err)?;
    let pass = d.pass();
    let grid = HalfGrid::build(1, Shape::HalfRectangle, sc.h).map_err(failed)?.describe();
    let tol = format!("{} jacobian_tol={}", sweep_tolerances(&sc), holder::FermiDemo::JACOBIAN_TOL);
    let table = |r: &StabilityReport, judged: bool| {
        stamp(r.to_table(), cfg, &grid, &tol, judged.then_some(r.pass)).meta("judged", judged).to_csv()
    };
    let verdict = format!(
        "jacobian_defect={}\nc0: {}c1 restricted (y >= sqrt(eps)): {}c1 unrestricted (reported only): {}",
        sig(d.jacobian_defect),
        verdict_block(&d.c0),
        verdict_block(&d.c1_restricted),
        verdict_block(&d.c1_unrestricted)
    );
    let files = vec![
        write(out, "fermi_c0.csv", &table(&d.c0, true))?,
        write(out, "fermi_c1_restricted.csv", &table(&d.c1_restricted, true))?,
        write(out, "fermi_c1_unrestricted.csv", &table(&d.c1_unrestricted, false))?,
        write(out, "fermi_verdict.txt", &format!("{}{verdict}", text_header(cfg, &grid, &tol, pass)))?,
    ];
    Ok(Outcome {
        pass,
        files,
        summary: verdict.trim_end().to_string(),
    })
}

/// `(command, config_hash, pass)` from the comment header of an artefact.
fn read_header(text: &str) -> (String, String, Option<bool>) {
    let mut command = String::new();
    let mut hash = String::new();
    let mut pass = None;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once('=') {
            match k {
                "command" => command = v.to_string(),
                "config_hash" => hash = v.to_string(),
                "pass" => pass = v.parse().ok(),
                _ => {}
            }
        }
    }
    (command, hash, pass)
}

fn report(out: &Path) -> Result<Outcome, CliError> {
    let entries = std::fs::read_dir(out).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", out.display())))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| (n.ends_with(".csv") || n.ends_with(".txt")) && n != "summary.csv")
        .collect();
    names.sort();
    let mut t = Table::new(&["file", "command", "config_hash", "pass"]);
    let mut overall = true;
    let mut judged = 0;
    for n in &names {
        let text = std::fs::read_to_string(out.join(n)).map_err(|source| CliError::Io {
            path: out.join(n),
            source,
        })?;
        let (command, hash, pass) = read_header(&text);
        if let Some(p) = pass {
            judged += 1;
            overall &= p;
            t.push(vec![n.clone(), command, hash, p.to_string()]);
        }
    }
    if judged == 0 {
        return Err(CliError::Usage(format!("no judged artefacts in {}", out.display())));
    }
    let t = t.meta("command", "report").meta("artefacts", judged).meta("pass", overall);
    let summary = t
        .rows
        .iter()
        .map(|r| format!("{:<28} {:<11} {}", r[0], r[1], if r[3] == "true" { "pass" } else { "FAIL" }))
        .collect::<Vec<_>>()
        .join("\n");
    let file = write(out, "summary.csv", &t.to_csv())?;
    Ok(Outcome {
        pass: overall,
        files: vec![file],
        summary,
    })
}
