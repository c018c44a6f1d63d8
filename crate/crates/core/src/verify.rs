//! Convergence studies and error measures used to validate the discretization.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::assembly::{lp_norm, P1Function, QuadratureSamples};
use crate::error::{invalid, Result};
use crate::fields::Field;
use crate::mesh::{refine_uniform, unit_square_mesh, Mesh, Point};
use crate::optimize::{optimize, ControlProblem, OptimizeReport, ProblemParams};
use crate::quadrature::quadrature;
use crate::solver::{solve_adjoint, solve_state};

const CAVEAT: &str =
    "# rates are order h up to logarithmic factors; |log h|^4 is not resolvable at these mesh sizes";

/// Experimental order of convergence `log₂(e_coarse / e_fine)` for a halved
/// mesh size.
pub fn eoc(e_coarse: f64, e_fine: f64) -> Result<f64> {
    if !(e_coarse > 0.0 && e_fine > 0.0) {
        return Err(invalid(format!(
            "errors must be positive, got {e_coarse} and {e_fine}"
        )));
    }
    Ok((e_coarse / e_fine).log2())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub errors: Vec<f64>,
    /// Rate against the previous row; `None` on the first row or when an
    /// error vanishes.
    pub eoc: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub label: String,
    /// Short names of the error columns, e.g. `w1inf`.
    pub metrics: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn new(label: impl Into<String>, metrics: &[&str]) -> Self {
        ConvergenceTable {
            label: label.into(),
            metrics: metrics.iter().map(|m| m.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row. `h` must halve the previous row's mesh size.
    pub fn push(&mut self, h: f64, errors: Vec<f64>) -> Result<()> {
        if errors.len() != self.metrics.len() {
            return Err(invalid("row does not match the table columns"));
        }
        if errors.iter().any(|e| !(*e >= 0.0)) {
            return Err(invalid("errors must be finite and nonnegative"));
        }
        let eoc = match self.rows.last() {
            None => vec![None; errors.len()],
            Some(prev) => {
                let ratio = prev.h / h;
                if (ratio - 2.0).abs() > 1e-9 {
                    return Err(invalid(format!("mesh size must halve, ratio was {ratio}")));
                }
                prev.errors
                    .iter()
                    .zip(&errors)
                    .map(|(&c, &f)| eoc(c, f).ok())
                    .collect()
            }
        };
        self.rows.push(ConvergenceRow { h, errors, eoc });
        Ok(())
    }

    /// Rate of the named metric between the last two rows.
    pub fn finest_eoc(&self, metric: &str) -> Option<f64> {
        let col = self.metrics.iter().position(|m| m == metric)?;
        self.rows.last()?.eoc[col]
    }

    pub fn column(&self, metric: &str) -> Option<Vec<f64>> {
        let col = self.metrics.iter().position(|m| m == metric)?;
        Some(self.rows.iter().map(|r| r.errors[col]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h");
        for m in &self.metrics {
            write!(out, ",err_{m}").unwrap();
        }
        for m in &self.metrics {
            write!(out, ",eoc_{m}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&sig6(row.h));
            for e in &row.errors {
                write!(out, ",{}", sig6(*e)).unwrap();
            }
            for r in &row.eoc {
                out.push(',');
                if let Some(r) = r {
                    out.push_str(&sig6(*r));
                }
            }
            out.push('\n');
        }
        writeln!(out, "# {}", self.label).unwrap();
        out.push_str(CAVEAT);
        out.push('\n');
        out
    }
}

/// Six significant digits in scientific notation.
fn sig6(x: f64) -> String {
    format!("{x:.5e}")
}

fn check_levels(levels: usize, max: usize) -> Result<()> {
    if levels < 2 || levels > max {
        return Err(invalid(format!(
            "levels must lie in [2, {max}], got {levels}"
        )));
    }
    Ok(())
}

/// `max_K |∇f_h|_K − ∇f(x_K)|` over triangle barycentres.
pub fn w1inf_error_at_barycenters(mesh: &Mesh, f: &P1Function, exact: &Field) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| {
            let g = f.gradient(mesh, t);
            let e = exact.gradient(mesh.centroid(t));
            (g[0] - e[0]).hypot(g[1] - e[1])
        })
        .fold(0.0, f64::max)
}

/// `max |∇f_h − ∇f|` sampled at the degree-4 quadrature points.
pub fn w1inf_error(mesh: &Mesh, f: &P1Function, exact: &Field) -> f64 {
    let rule = quadrature(4).expect("degree 4 is tabulated");
    let mut err = 0.0_f64;
    for t in 0..mesh.num_triangles() {
        let g = f.gradient(mesh, t);
        for b in &rule.points {
            let e = exact.gradient(mesh.map_point(t, *b));
            err = err.max((g[0] - e[0]).hypot(g[1] - e[1]));
        }
    }
    err
}

/// `‖∇(f_h − f)‖_{L²}` by degree-4 quadrature.
pub fn h1_seminorm_error(mesh: &Mesh, f: &P1Function, exact: &Field) -> f64 {
    let rule = quadrature(4).expect("degree 4 is tabulated");
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let g = f.gradient(mesh, t);
        let area = mesh.geometry()[t].area;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let e = exact.gradient(mesh.map_point(t, *b));
            sum += area * w * ((g[0] - e[0]).powi(2) + (g[1] - e[1]).powi(2));
        }
    }
    sum.sqrt()
}

pub fn l2_error(mesh: &Mesh, f: &P1Function, exact: &Field) -> Result<f64> {
    let samples = QuadratureSamples::from_field(mesh, 4, exact)?;
    crate::assembly::l2_distance(mesh, f, &samples)
}

pub fn nodal_max_error(mesh: &Mesh, f: &P1Function, exact: &Field) -> f64 {
    mesh.vertices()
        .iter()
        .zip(f.values())
        .map(|(&p, v)| (v - exact.value(p)).abs())
        .fold(0.0, f64::max)
}

/// Spherical cap of radius 2 solved with `u ≡ 1` and its own trace as boundary
/// data on `unit_square_mesh(8·2^k)`. Columns: `w1inf` at barycentres, `l2`,
/// and the nodal `max` error.
pub fn state_convergence_study(levels: usize) -> Result<ConvergenceTable> {
    check_levels(levels, 6)?;
    let cap = Field::SphericalCap(2.0);
    let mut table = ConvergenceTable::new("state: spherical cap R=2, u=1", &["w1inf", "l2", "max"]);
    for k in 0..levels {
        let mesh = unit_square_mesh(8 << k)?;
        let u = P1Function::interpolate(&mesh, |_| 1.0);
        let v = P1Function::interpolate_field(&mesh, &cap);
        let (y, _) = solve_state(&mesh, &u, &v, 1e-11, 50)?;
        table.push(
            mesh.h_max(),
            vec![
                w1inf_error_at_barycenters(&mesh, &y, &cap),
                l2_error(&mesh, &y, &cap)?,
                nodal_max_error(&mesh, &y, &cap),
            ],
        )?;
    }
    Ok(table)
}

/// Adjoint at the flat state `y = 0` with `y_d = −2π² sin(πx) sin(πy)`, whose
/// exact solution is `sin(πx) sin(πy)`. Columns: `h1` seminorm and `l2`.
pub fn adjoint_convergence_study(levels: usize) -> Result<ConvergenceTable> {
    check_levels(levels, 6)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let target = Field::SineMode(-2.0 * pi2);
    let exact = Field::SineMode(1.0);
    let mut table = ConvergenceTable::new(
        "adjoint: y=0, y_d=-2pi^2 sin(pi x) sin(pi y)",
        &["h1", "l2"],
    );
    for k in 0..levels {
        let mesh = unit_square_mesh(8 << k)?;
        let y = P1Function::zeros(&mesh);
        let samples = QuadratureSamples::from_field(&mesh, 4, &target)?;
        let phi = solve_adjoint(&mesh, &y, &samples, 1e-12)?;
        table.push(
            mesh.h_max(),
            vec![
                h1_seminorm_error(&mesh, &phi, &exact),
                l2_error(&mesh, &phi, &exact)?,
            ],
        )?;
    }
    Ok(table)
}

/// Nodal interpolation error of `field` on `unit_square_mesh(8·2^k)`.
/// Columns: `w1inf` and `l2`.
pub fn interpolation_check(field: &Field, levels: usize) -> Result<ConvergenceTable> {
    check_levels(levels, 7)?;
    let mut table = ConvergenceTable::new(format!("interpolation: {field}"), &["w1inf", "l2"]);
    for k in 0..levels {
        let mesh = unit_square_mesh(8 << k)?;
        let f = P1Function::interpolate_field(&mesh, field);
        table.push(
            mesh.h_max(),
            vec![w1inf_error(&mesh, &f, field), l2_error(&mesh, &f, field)?],
        )?;
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct ControlLevel {
    pub n: usize,
    pub lp_norm: f64,
    pub l2_norm: f64,
    pub state_max: f64,
    pub report: OptimizeReport,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct ControlStudy {
    /// One row per level except the finest, which serves as reference.
    /// Column `l2` is `‖ū_h − ū_ref‖_{L²}` on the finest mesh.
    pub table: ConvergenceTable,
    pub levels: Vec<ControlLevel>,
}

/// Optimizes on `unit_square_mesh(16)` and its uniform refinements and
/// measures the controls against the finest one after prolongation.
pub fn control_convergence_study(levels: usize, params: &ProblemParams) -> Result<ControlStudy> {
    check_levels(levels, 4)?;
    let mut meshes = vec![unit_square_mesh(16)?];
    let mut refinements = Vec::new();
    for _ in 1..levels {
        let r = refine_uniform(meshes.last().expect("nonempty"));
        meshes.push(r.mesh.clone());
        refinements.push(r);
    }
    let mut controls = Vec::new();
    let mut out = Vec::new();
    for (k, mesh) in meshes.iter().enumerate() {
        let problem = ControlProblem::new(mesh.clone(), params.clone())?;
        let start = Instant::now();
        let result = optimize(&problem, &problem.zero_control())?;
        out.push(ControlLevel {
            n: 16 << k,
            lp_norm: problem.lp_norm(&result.control),
            l2_norm: problem.l2_norm(&result.control),
            state_max: result.state.max_abs(),
            report: result.report,
            elapsed: start.elapsed(),
        });
        controls.push(result.control.to_nodal(mesh).into_values());
    }
    let finest = meshes.last().expect("nonempty");
    let reference = controls.last().expect("nonempty");
    let mut table = ConvergenceTable::new(
        "control: self-convergence against the finest level",
        &["l2"],
    );
    for (k, coarse) in controls.iter().enumerate().take(levels - 1) {
        let mut values = coarse.clone();
        for r in &refinements[k..] {
            values = r.prolongate(&values);
        }
        values.iter_mut().zip(reference).for_each(|(a, b)| *a -= b);
        let diff = P1Function::from_values(finest, values)?;
        table.push(meshes[k].h_max(), vec![lp_norm(finest, &diff, 2.0)?])?;
    }
    Ok(ControlStudy { table, levels: out })
}

/// `(‖y_h − y_d‖_{L²(Ω')}, ‖y_d‖_{L²(Ω')})` on the inset
/// `Ω' = {x : dist(x, ∂Ω) ≥ inset}`, sampled at degree-4 quadrature points.
pub fn interior_tracking_error(
    mesh: &Mesh,
    y: &P1Function,
    y_d: &Field,
    inset: f64,
) -> Result<(f64, f64)> {
    if y.len() != mesh.num_vertices() {
        return Err(invalid("state does not match the mesh"));
    }
    let rule = quadrature(4)?;
    let (mut err, mut norm) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let area = mesh.geometry()[t].area;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x: Point = mesh.map_point(t, *b);
            if mesh.distance_to_boundary(x) < inset {
                continue;
            }
            let d = y_d.value(x);
            err += area * w * (y.eval_bary(mesh, t, *b) - d).powi(2);
            norm += area * w * d * d;
        }
    }
    Ok((err.sqrt(), norm.sqrt()))
}
