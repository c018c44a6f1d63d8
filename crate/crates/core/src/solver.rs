//! Damped Newton solver for the discrete state equation and the linear
//! solver for the discrete adjoint equation.

use crate::assembly::{
    assemble_jacobian, assemble_laplacian, max_gradient, p1_load, state_residual_with_load, Dofs,
    P1Function, QuadratureSamples,
};
use crate::error::{invalid, Error, Result};
use crate::mesh::Mesh;
use crate::sparse::{solve_spd, solve_spd_relaxed, SparseSymMatrix};

/// Largest relative linear residual accepted when the requested tolerance is
/// out of reach for an ill-conditioned Jacobian.
const LINEAR_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    /// Stopping tolerance on `‖F‖₂` over the free vertices.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub linear_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 30,
            linear_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    /// `‖F‖₂` of the initial guess and of every accepted iterate.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Largest element gradient of the last iterate.
    pub max_grad_inf: f64,
}

impl NewtonReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }
}

/// Converged state together with the Jacobian assembled at it. The adjoint
/// solve reuses this matrix.
#[derive(Clone, Debug)]
pub struct StateSolution {
    pub y: P1Function,
    pub report: NewtonReport,
    pub jacobian: SparseSymMatrix,
}

#[derive(Clone, Copy, Debug)]
pub enum InitialGuess<'a> {
    /// Solution of the equation linearized at `y = 0` (a Poisson problem).
    Linearized,
    /// Interior values of the given function, boundary values from the data.
    From(&'a P1Function),
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn with_boundary(mesh: &Mesh, interior: &P1Function, boundary: &P1Function) -> P1Function {
    let mut y = interior.clone();
    for (i, v) in y.values_mut().iter_mut().enumerate() {
        if mesh.is_boundary(i) {
            *v = boundary.values()[i];
        }
    }
    y
}

/// Solves `−Δy = u` with `y = v` on the boundary, given `load_i = ∫ u ζ_i`.
pub fn poisson_initial_guess(
    mesh: &Mesh,
    load: &[f64],
    v: &P1Function,
    linear_tol: f64,
) -> Result<P1Function> {
    let dofs = Dofs::interior(mesh);
    let lifted = with_boundary(mesh, &P1Function::zeros(mesh), v);
    let full = assemble_laplacian(mesh, &Dofs::all(mesh));
    let mut rhs: Vec<f64> = load
        .iter()
        .zip(full.mul_vec(lifted.values()))
        .map(|(l, k)| l - k)
        .collect();
    dofs.restrict(&mut rhs);
    let k = assemble_laplacian(mesh, &dofs);
    let delta = solve_spd(&k, &rhs, linear_tol)?;
    let mut y = lifted;
    for (a, d) in y.values_mut().iter_mut().zip(delta) {
        *a += d;
    }
    Ok(y)
}

/// Newton iteration for `F(y) = 0` with the load vector `load_i = ∫ u ζ_i`
/// and Dirichlet data `v` (only boundary values are read).
pub fn solve_state_with_load(
    mesh: &Mesh,
    load: &[f64],
    v: &P1Function,
    opts: &NewtonOptions,
    guess: InitialGuess<'_>,
) -> Result<StateSolution> {
    if load.len() != mesh.num_vertices() || v.len() != mesh.num_vertices() {
        return Err(invalid("state data does not match the mesh"));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid(format!(
            "Newton tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if load.iter().any(|l| !l.is_finite()) {
        return Err(invalid("control must be finite"));
    }
    let dofs = Dofs::interior(mesh);
    let mut y = match guess {
        InitialGuess::Linearized => poisson_initial_guess(mesh, load, v, opts.linear_tol)?,
        InitialGuess::From(start) => {
            if start.len() != mesh.num_vertices() {
                return Err(invalid("initial guess does not match the mesh"));
            }
            with_boundary(mesh, start, v)
        }
    };
    let mut report = NewtonReport::default();
    let mut f = state_residual_with_load(mesh, &y, load, &dofs);
    let mut norm = norm2(&f);
    report.residual_history.push(norm);
    let fail = |mut report: NewtonReport, y: &P1Function| {
        report.max_grad_inf = max_gradient(mesh, y);
        Err(Error::NewtonNonconvergence(Box::new(report)))
    };
    if !norm.is_finite() {
        return fail(report, &y);
    }
    while norm > opts.tol {
        if report.iterations >= opts.max_iter {
            return fail(report, &y);
        }
        let jac = assemble_jacobian(mesh, &y, &dofs)?;
        let rhs: Vec<f64> = f.iter().map(|r| -r).collect();
        let delta = match solve_spd_relaxed(&jac, &rhs, opts.linear_tol, LINEAR_FLOOR) {
            Ok(d) => d,
            Err(Error::SolverFailure { .. }) => return fail(report, &y),
            Err(e) => return Err(e),
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial_values = y
                .values()
                .iter()
                .zip(&delta)
                .map(|(a, d)| a + step * d)
                .collect();
            let trial = P1Function::from_values(mesh, trial_values)?;
            let ft = state_residual_with_load(mesh, &trial, load, &dofs);
            let nt = norm2(&ft);
            if nt < norm {
                accepted = Some((trial, ft, nt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, nt)) = accepted else {
            return fail(report, &y);
        };
        y = trial;
        f = ft;
        norm = nt;
        report.iterations += 1;
        report.residual_history.push(norm);
    }
    report.converged = true;
    report.max_grad_inf = max_gradient(mesh, &y);
    let jacobian = assemble_jacobian(mesh, &y, &dofs)?;
    Ok(StateSolution {
        y,
        report,
        jacobian,
    })
}

/// Solves the discrete state equation for a P1 control `u` and boundary
/// interpolant `v_samples`, starting from the linearization at zero.
pub fn solve_state(
    mesh: &Mesh,
    u: &P1Function,
    v_samples: &P1Function,
    tol: f64,
    max_iter: usize,
) -> Result<(P1Function, NewtonReport)> {
    let load = p1_load(mesh, u)?;
    let opts = NewtonOptions {
        tol,
        max_iter,
        ..NewtonOptions::default()
    };
    let sol = solve_state_with_load(mesh, &load, v_samples, &opts, InitialGuess::Linearized)?;
    Ok((sol.y, sol.report))
}

/// `load_i = ∫ (y_h − y_d) ζ_i` on interior vertices, with `y_d` given at the
/// quadrature points.
pub fn adjoint_load(mesh: &Mesh, y: &P1Function, y_d: &QuadratureSamples) -> Result<Vec<f64>> {
    y_d.check(mesh)?;
    if y.len() != mesh.num_vertices() {
        return Err(invalid("state does not match the mesh"));
    }
    let nq = y_d.rule.len();
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.geometry()[t].area;
        for (q, (b, w)) in y_d.rule.points.iter().zip(&y_d.rule.weights).enumerate() {
            let misfit = y.eval_bary(mesh, t, *b) - y_d.values[t * nq + q];
            for a in 0..3 {
                load[tri[a]] += area * w * misfit * b[a];
            }
        }
    }
    Dofs::interior(mesh).restrict(&mut load);
    Ok(load)
}

/// Solves the adjoint system with an already assembled state Jacobian.
pub fn solve_adjoint_with(
    mesh: &Mesh,
    jacobian: &SparseSymMatrix,
    load: &[f64],
    rel_tol: f64,
) -> Result<P1Function> {
    let phi = solve_spd_relaxed(jacobian, load, rel_tol, LINEAR_FLOOR)?;
    P1Function::from_values(mesh, phi)
}

/// Adjoint state `φ_h` with zero boundary values and
/// `∫ ∇zᵀ A[y] ∇φ_h = ∫ (y_h − y_d) z` for all interior test functions.
pub fn solve_adjoint(
    mesh: &Mesh,
    y: &P1Function,
    y_d_samples: &QuadratureSamples,
    rel_tol: f64,
) -> Result<P1Function> {
    let load = adjoint_load(mesh, y, y_d_samples)?;
    let jacobian = assemble_jacobian(mesh, y, &Dofs::interior(mesh))?;
    solve_adjoint_with(mesh, &jacobian, &load, rel_tol)
}
