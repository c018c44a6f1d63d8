use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use curvopt::optimize::{
    check_compatibility, optimize as run_optimizer, quadratic_growth_probe, Compatibility,
    ControlProblem,
};
use curvopt::solver::{solve_adjoint as adjoint, solve_state as state};
use curvopt::verify::{
    adjoint_convergence_study, control_convergence_study, interior_tracking_error,
    interpolation_check, state_convergence_study, ConvergenceTable,
};
use curvopt::vtk::{vtk_string, write_atomic};
use curvopt::{Mesh, P1Function, QuadratureSamples};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{CliError, CliResult, RunConfig};
use crate::Study;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn prepare_out(cfg: &RunConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))
}

fn write(cfg: &RunConfig, name: &str, contents: &str) -> CliResult<()> {
    let path = cfg.out.join(name);
    write_atomic(&path, contents.as_bytes()).map_err(|e| io_err(&path, e))
}

fn write_fields(
    cfg: &RunConfig,
    name: &str,
    mesh: &Mesh,
    fields: &[(&str, &P1Function)],
) -> CliResult<()> {
    let text = vtk_string(mesh, fields, cfg.as_surface.as_deref())
        .map_err(|e| CliError::Config(e.to_string()))?;
    write(cfg, name, &text)
}

fn write_manifest(cfg: &RunConfig, command: &str, results: Value) -> CliResult<()> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_json(),
        "results": results,
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write(cfg, "manifest.json", &text)
}

fn compatibility_json(c: &Compatibility) -> Value {
    json!({ "integral": c.integral, "perimeter": c.perimeter, "compatible": c.compatible })
}

fn warn_if_incompatible(c: &Compatibility) {
    if !c.compatible {
        eprintln!(
            "warning: |∫u| = {:.6} is not below the boundary length {:.6}; no graph solution exists",
            c.integral, c.perimeter
        );
    }
}

fn e10(x: f64) -> String {
    format!("{x:.10e}")
}

pub fn solve_state(cfg: &RunConfig) -> CliResult<()> {
    prepare_out(cfg)?;
    let mesh = cfg.mesh.build()?;
    let u = P1Function::interpolate_field(&mesh, &cfg.u);
    let v = P1Function::interpolate_field(&mesh, &cfg.params.v);
    let compat = check_compatibility(&mesh, &u)?;
    warn_if_incompatible(&compat);
    let newton = &cfg.params.newton;
    let (y, report) = state(&mesh, &u, &v, newton.tol, newton.max_iter)?;
    let mut csv = String::from("iteration,residual\n");
    for (k, r) in report.residual_history.iter().enumerate() {
        writeln!(csv, "{k},{}", e10(*r)).unwrap();
    }
    write(cfg, "newton.csv", &csv)?;
    write_fields(cfg, "state.vtk", &mesh, &[("y", &y), ("u", &u)])?;
    write_manifest(
        cfg,
        "solve-state",
        json!({
            "newton_iterations": report.iterations,
            "converged": report.converged,
            "final_residual": report.final_residual(),
            "max_grad_inf": report.max_grad_inf,
            "compatibility": compatibility_json(&compat),
        }),
    )?;
    println!(
        "state: {} Newton iterations, residual {:.3e}, max |grad y| {:.4}",
        report.iterations,
        report.final_residual(),
        report.max_grad_inf
    );
    Ok(())
}

pub fn solve_adjoint(cfg: &RunConfig) -> CliResult<()> {
    prepare_out(cfg)?;
    let mesh = cfg.mesh.build()?;
    let u = P1Function::interpolate_field(&mesh, &cfg.u);
    let v = P1Function::interpolate_field(&mesh, &cfg.params.v);
    let compat = check_compatibility(&mesh, &u)?;
    warn_if_incompatible(&compat);
    let newton = &cfg.params.newton;
    let (y, report) = state(&mesh, &u, &v, newton.tol, newton.max_iter)?;
    let samples = QuadratureSamples::from_field(&mesh, 4, &cfg.params.y_d)?;
    let phi = adjoint(&mesh, &y, &samples, newton.linear_tol)?;
    let y_d = P1Function::interpolate_field(&mesh, &cfg.params.y_d);
    write_fields(
        cfg,
        "adjoint.vtk",
        &mesh,
        &[("y", &y), ("u", &u), ("phi", &phi), ("y_d", &y_d)],
    )?;
    write_manifest(
        cfg,
        "solve-adjoint",
        json!({
            "newton_iterations": report.iterations,
            "final_residual": report.final_residual(),
            "adjoint_max": phi.max_abs(),
            "compatibility": compatibility_json(&compat),
        }),
    )?;
    println!("adjoint: max |phi| {:.6e}", phi.max_abs());
    Ok(())
}

pub fn optimize(cfg: &RunConfig, growth_probe: Option<usize>) -> CliResult<()> {
    prepare_out(cfg)?;
    let mesh = cfg.mesh.build()?;
    let problem = ControlProblem::new(mesh.clone(), cfg.params.clone())?;
    let start = Instant::now();
    let out = match run_optimizer(&problem, &problem.zero_control()) {
        Ok(out) => out,
        Err(curvopt::Error::OptimizerFailure { reason, report }) => {
            write(cfg, "history.csv", &history_csv(&report))?;
            return Err(CliError::Core(curvopt::Error::OptimizerFailure {
                reason,
                report,
            }));
        }
        Err(e) => return Err(e.into()),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let report = &out.report;
    write(cfg, "history.csv", &history_csv(report))?;

    let u = out.control.to_nodal(&mesh);
    let y_d = P1Function::interpolate_field(&mesh, &cfg.params.y_d);
    write_fields(
        cfg,
        "solution.vtk",
        &mesh,
        &[
            ("y", &out.state),
            ("u", &u),
            ("phi", &out.adjoint),
            ("y_d", &y_d),
        ],
    )?;

    let (interior_err, interior_norm) =
        interior_tracking_error(&mesh, &out.state, &cfg.params.y_d, 0.2)?;
    let mut results = json!({
        "iterations": report.iterations,
        "state_solves": report.state_solves,
        "converged": report.converged,
        "kkt_residual": report.kkt_residual,
        "cost": report.cost_history.last(),
        "control_lp_norm": problem.lp_norm(&out.control),
        "control_l2_norm": problem.l2_norm(&out.control),
        "state_max_abs": out.state.max_abs(),
        "interior_tracking_error": interior_err,
        "interior_target_norm": interior_norm,
        "elapsed_seconds": elapsed,
    });
    if let Some(count) = growth_probe {
        let seed = curvopt::seed_from_env(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dirs = (0..count)
            .map(|_| {
                problem.control(
                    (0..problem.dim())
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                )
            })
            .collect::<curvopt::Result<Vec<_>>>()?;
        let worst = quadratic_growth_probe(&problem, &out.control, &dirs, &[1e-3, 2e-3, 4e-3])?;
        results["growth_probe"] =
            json!({ "seed": seed, "directions": count, "min_increase": worst });
        println!("growth probe: min J(u + t d) - J(u) = {worst:.3e}");
    }
    write_manifest(cfg, "optimize", results)?;
    println!(
        "optimize: {} iterations, converged {}, J = {:.6e}, ||u||_Lp = {:.6}, KKT {:.3e}",
        report.iterations,
        report.converged,
        report.cost_history.last().copied().unwrap_or(f64::NAN),
        problem.lp_norm(&out.control),
        report.kkt_residual
    );
    Ok(())
}

fn history_csv(report: &curvopt::OptimizeReport) -> String {
    let mut csv = String::from("iteration,cost,gradient_norm,control_lp_norm,step\n");
    for k in 0..report.cost_history.len() {
        let step = if k == 0 {
            String::new()
        } else {
            e10(report.step_history[k - 1])
        };
        writeln!(
            csv,
            "{k},{},{},{},{step}",
            e10(report.cost_history[k]),
            e10(report.gradient_norm_history[k]),
            e10(report.control_lp_norm_history[k])
        )
        .unwrap();
    }
    csv
}

pub fn convergence(cfg: &RunConfig, study: Study) -> CliResult<()> {
    prepare_out(cfg)?;
    let (name, table, extra): (&str, ConvergenceTable, Value) = match study {
        Study::State => (
            "state",
            state_convergence_study(cfg.levels.unwrap_or(4))?,
            Value::Null,
        ),
        Study::Adjoint => (
            "adjoint",
            adjoint_convergence_study(cfg.levels.unwrap_or(4))?,
            Value::Null,
        ),
        Study::Interp => (
            "interp",
            interpolation_check(&cfg.params.y_d, cfg.levels.unwrap_or(4))?,
            Value::Null,
        ),
        Study::Control => {
            let s = control_convergence_study(cfg.levels.unwrap_or(3), &cfg.params)?;
            let levels: Vec<Value> = s
                .levels
                .iter()
                .map(|l| {
                    json!({
                        "n": l.n,
                        "control_lp_norm": l.lp_norm,
                        "iterations": l.report.iterations,
                        "converged": l.report.converged,
                        "kkt_residual": l.report.kkt_residual,
                    })
                })
                .collect();
            ("control", s.table, Value::from(levels))
        }
    };
    let csv = table.to_csv();
    write(cfg, &format!("convergence_{name}.csv"), &csv)?;
    let eoc: serde_json::Map<String, Value> = table
        .metrics
        .iter()
        .map(|m| (m.clone(), json!(table.finest_eoc(m))))
        .collect();
    write_manifest(
        cfg,
        &format!("convergence {name}"),
        json!({ "finest_eoc": eoc, "levels": extra }),
    )?;
    print!("{csv}");
    Ok(())
}

pub fn mesh(cfg: &RunConfig) -> CliResult<()> {
    prepare_out(cfg)?;
    let mesh = cfg.mesh.build()?;
    write(cfg, "mesh.txt", &mesh.to_ascii())?;
    write_fields(cfg, "mesh.vtk", &mesh, &[])?;
    write_manifest(
        cfg,
        "mesh",
        json!({
            "vertices": mesh.num_vertices(),
            "triangles": mesh.num_triangles(),
            "h_max": mesh.h_max(),
            "area": mesh.area(),
            "perimeter": mesh.perimeter(),
        }),
    )?;
    println!(
        "mesh {}: {} vertices, {} triangles, h_max {:.6}",
        cfg.mesh,
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.h_max()
    );
    Ok(())
}
