//! Reduced-space optimization of the control: cost, adjoint-based gradient,
//! radial scaling onto the `L^p` ball, projected gradient descent with an
//! Armijo line search, and first-order optimality diagnostics.

use std::fmt;
use std::str::FromStr;

use crate::assembly::{
    assemble_mass, l2_distance, lp_norm, p0_load, p0_lp_norm, p1_load, P1Function,
    QuadratureSamples,
};
use crate::error::{invalid, Error, Result};
use crate::fields::Field;
use crate::mesh::Mesh;
use crate::solver::{
    adjoint_load, solve_adjoint_with, solve_state_with_load, InitialGuess, NewtonOptions,
    StateSolution,
};
use crate::sparse::SparseSymMatrix;

/// Discrete space of the control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ControlBasis {
    /// Continuous piecewise linear, nodal coefficients.
    #[default]
    P1,
    /// Elementwise constant, one coefficient per triangle.
    P0,
}

impl fmt::Display for ControlBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControlBasis::P1 => "p1",
            ControlBasis::P0 => "p0",
        })
    }
}

impl FromStr for ControlBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p1" => Ok(ControlBasis::P1),
            "p0" => Ok(ControlBasis::P0),
            _ => Err(invalid(format!(
                "unknown control basis '{s}' (expected p1 or p0)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerOptions {
    /// Stop when `‖u_{k+1} − u_k‖ / max(1, ‖u_k‖) ≤ tol` (`L²` norms).
    pub tol: f64,
    /// Also stop once `kkt_residual ≤ kkt_tol · min(r₀, max(1, ‖u‖))`, where
    /// `r₀` is the residual at the initial control.
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub max_halvings: usize,
    /// Upper bound on the trial step; the first trial of each iteration is
    /// `min(1/α, max_step)`.
    pub max_step: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            tol: 1e-6,
            kkt_tol: 1e-2,
            max_iter: 2000,
            armijo: 1e-4,
            max_halvings: 40,
            max_step: 1e6,
        }
    }
}

/// Parameters of the optimal control problem on a given mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemParams {
    pub alpha: f64,
    pub p: f64,
    pub theta: f64,
    pub y_d: Field,
    pub v: Field,
    pub basis: ControlBasis,
    pub newton: NewtonOptions,
    pub optimizer: OptimizerOptions,
}

impl Default for ProblemParams {
    fn default() -> Self {
        ProblemParams {
            alpha: 1e-6,
            p: 2.5,
            theta: 20.0,
            y_d: Field::SineSquare,
            v: Field::Constant(0.0),
            basis: ControlBasis::P1,
            newton: NewtonOptions::default(),
            optimizer: OptimizerOptions::default(),
        }
    }
}

/// Validated problem together with the data derived from the mesh.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    mesh: Mesh,
    params: ProblemParams,
    v_h: P1Function,
    y_d_samples: QuadratureSamples,
    mass: SparseSymMatrix,
}

/// Coefficients of a control in the problem's basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Control {
    pub basis: ControlBasis,
    pub values: Vec<f64>,
}

impl Control {
    pub fn p1(f: P1Function) -> Self {
        Control {
            basis: ControlBasis::P1,
            values: f.into_values(),
        }
    }

    fn axpy(&self, a: f64, x: &Control) -> Control {
        Control {
            basis: self.basis,
            values: self
                .values
                .iter()
                .zip(&x.values)
                .map(|(u, d)| u + a * d)
                .collect(),
        }
    }

    fn scaled(&self, s: f64) -> Control {
        Control {
            basis: self.basis,
            values: self.values.iter().map(|u| u * s).collect(),
        }
    }

    /// Nodal representation: P1 as is, P0 by area-weighted vertex averages.
    pub fn to_nodal(&self, mesh: &Mesh) -> P1Function {
        match self.basis {
            ControlBasis::P1 => {
                P1Function::from_values(mesh, self.values.clone()).expect("control matches mesh")
            }
            ControlBasis::P0 => {
                let mut sum = vec![0.0; mesh.num_vertices()];
                let mut weight = vec![0.0; mesh.num_vertices()];
                for (t, tri) in mesh.triangles().iter().enumerate() {
                    let a = mesh.geometry()[t].area;
                    for &i in tri {
                        sum[i] += a * self.values[t];
                        weight[i] += a;
                    }
                }
                let vals = sum.iter().zip(&weight).map(|(s, w)| s / w).collect();
                P1Function::from_values(mesh, vals).expect("vertex count matches")
            }
        }
    }
}

fn validate(params: &ProblemParams) -> Result<()> {
    if !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(invalid(format!(
            "alpha must be positive, got {}",
            params.alpha
        )));
    }
    if !(params.p > 2.0 && params.p.is_finite()) {
        return Err(invalid(format!("p must exceed 2, got {}", params.p)));
    }
    if !(params.theta > 0.0 && params.theta.is_finite()) {
        return Err(invalid(format!(
            "theta must be positive, got {}",
            params.theta
        )));
    }
    if !(params.newton.tol > 0.0)
        || !(params.optimizer.tol > 0.0)
        || !(params.optimizer.kkt_tol >= 0.0)
    {
        return Err(invalid("tolerances must be positive"));
    }
    Ok(())
}

/// Cost value and the state it was computed from.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cost: f64,
    pub state: StateSolution,
}

impl ControlProblem {
    pub fn new(mesh: Mesh, params: ProblemParams) -> Result<Self> {
        validate(&params)?;
        let v_h = P1Function::interpolate_field(&mesh, &params.v);
        let y_d_samples = QuadratureSamples::from_field(&mesh, 4, &params.y_d)?;
        let mass = assemble_mass(&mesh, 2)?;
        Ok(ControlProblem {
            mesh,
            params,
            v_h,
            y_d_samples,
            mass,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn params(&self) -> &ProblemParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    pub fn boundary_data(&self) -> &P1Function {
        &self.v_h
    }

    pub fn target_samples(&self) -> &QuadratureSamples {
        &self.y_d_samples
    }

    pub fn dim(&self) -> usize {
        match self.params.basis {
            ControlBasis::P1 => self.mesh.num_vertices(),
            ControlBasis::P0 => self.mesh.num_triangles(),
        }
    }

    pub fn zero_control(&self) -> Control {
        Control {
            basis: self.params.basis,
            values: vec![0.0; self.dim()],
        }
    }

    /// Wraps raw coefficients after checking basis and length.
    pub fn control(&self, values: Vec<f64>) -> Result<Control> {
        if values.len() != self.dim() {
            return Err(invalid(format!(
                "control has {} coefficients, the {} space has {}",
                values.len(),
                self.params.basis,
                self.dim()
            )));
        }
        Ok(Control {
            basis: self.params.basis,
            values,
        })
    }

    fn check(&self, u: &Control) -> Result<()> {
        if u.basis != self.params.basis || u.values.len() != self.dim() {
            return Err(invalid(
                "control does not belong to this problem's control space",
            ));
        }
        Ok(())
    }

    /// `∫ u ζ_i` for every vertex.
    pub fn load(&self, u: &Control) -> Result<Vec<f64>> {
        self.check(u)?;
        match u.basis {
            ControlBasis::P1 => p1_load(&self.mesh, &u.to_nodal(&self.mesh)),
            ControlBasis::P0 => p0_load(&self.mesh, &u.values),
        }
    }

    /// `L²` inner product in the control space.
    pub fn inner(&self, a: &Control, b: &Control) -> f64 {
        match self.params.basis {
            ControlBasis::P1 => self.mass.inner(&a.values, &b.values),
            ControlBasis::P0 => a
                .values
                .iter()
                .zip(&b.values)
                .zip(self.mesh.geometry())
                .map(|((x, y), g)| g.area * x * y)
                .sum(),
        }
    }

    pub fn l2_norm(&self, u: &Control) -> f64 {
        self.inner(u, u).max(0.0).sqrt()
    }

    pub fn lp_norm(&self, u: &Control) -> f64 {
        let p = self.params.p;
        match u.basis {
            ControlBasis::P1 => lp_norm(&self.mesh, &u.to_nodal(&self.mesh), p),
            ControlBasis::P0 => p0_lp_norm(&self.mesh, &u.values, p),
        }
        .expect("p validated at construction")
    }

    /// Radial scaling onto `{‖u‖_p ≤ θ}`.
    pub fn project(&self, u: &Control) -> Control {
        let norm = self.lp_norm(u);
        match radial_factor(norm, self.params.theta) {
            Some(s) => u.scaled(s),
            None => u.clone(),
        }
    }

    pub fn state(&self, u: &Control, guess: InitialGuess<'_>) -> Result<StateSolution> {
        let load = self.load(u)?;
        solve_state_with_load(&self.mesh, &load, &self.v_h, &self.params.newton, guess)
    }

    /// `½‖y_h − y_d‖² + (α/2)‖u_h‖²`
    pub fn cost_of(&self, u: &Control, y: &P1Function) -> f64 {
        let track = l2_distance(&self.mesh, y, &self.y_d_samples).expect("state matches mesh");
        0.5 * track * track + 0.5 * self.params.alpha * self.inner(u, u)
    }

    pub fn evaluate(&self, u: &Control, guess: InitialGuess<'_>) -> Result<Evaluation> {
        let state = self.state(u, guess)?;
        Ok(Evaluation {
            cost: self.cost_of(u, &state.y),
            state,
        })
    }

    pub fn adjoint(&self, state: &StateSolution) -> Result<P1Function> {
        let load = adjoint_load(&self.mesh, &state.y, &self.y_d_samples)?;
        solve_adjoint_with(
            &self.mesh,
            &state.jacobian,
            &load,
            self.params.newton.linear_tol,
        )
    }

    /// `L²` Riesz representative of `φ_h` in the control space.
    pub fn represent(&self, phi: &P1Function) -> Control {
        match self.params.basis {
            ControlBasis::P1 => Control::p1(phi.clone()),
            ControlBasis::P0 => Control {
                basis: ControlBasis::P0,
                values: self
                    .mesh
                    .triangles()
                    .iter()
                    .map(|tri| tri.iter().map(|&i| phi.values()[i]).sum::<f64>() / 3.0)
                    .collect(),
            },
        }
    }

    /// Gradient `φ_h + αu` given the adjoint at `u`.
    pub fn gradient_from_adjoint(&self, u: &Control, phi: &P1Function) -> Control {
        self.represent(phi).axpy(self.params.alpha, u)
    }
}

/// Factor that maps a function of norm `norm` into the ball of radius
/// `theta`, or `None` when it already lies inside. Points within a few ulps
/// of the sphere count as inside, which makes the projection idempotent.
fn radial_factor(norm: f64, theta: f64) -> Option<f64> {
    (norm > theta * (1.0 + 1e-14)).then(|| theta / norm)
}

/// Reduced cost `J(u)`, solving the state from the linearized initial guess.
pub fn reduced_cost(problem: &ControlProblem, u: &Control) -> Result<f64> {
    Ok(problem.evaluate(u, InitialGuess::Linearized)?.cost)
}

/// Reduced gradient `J'(u) = φ_h + αu` as an element of the control space.
pub fn reduced_gradient(problem: &ControlProblem, u: &Control) -> Result<Control> {
    let state = problem.state(u, InitialGuess::Linearized)?;
    let phi = problem.adjoint(&state)?;
    Ok(problem.gradient_from_adjoint(u, &phi))
}

/// Radial scaling of a P1 function onto the `L^p` ball of radius `theta`.
pub fn project_lp_ball(mesh: &Mesh, u: &P1Function, p: f64, theta: f64) -> Result<P1Function> {
    if !(p > 2.0) || !(theta > 0.0) {
        return Err(invalid("projection needs p > 2 and theta > 0"));
    }
    let norm = lp_norm(mesh, u, p)?;
    Ok(match radial_factor(norm, theta) {
        Some(s) => P1Function::from_values(mesh, u.values().iter().map(|v| v * s).collect())?,
        None => u.clone(),
    })
}

/// First-order optimality residual. Inside the ball it is `‖φ + αu‖`, on the
/// sphere the fixed-point residual `‖u − P(−φ/α)‖`.
pub fn kkt_residual(problem: &ControlProblem, u: &Control, phi: &Control) -> f64 {
    let theta = problem.params.theta;
    let alpha = problem.params.alpha;
    if problem.lp_norm(u) < theta * (1.0 - 1e-8) {
        problem.l2_norm(&phi.axpy(alpha, u))
    } else {
        let target = problem.project(&phi.scaled(-1.0 / alpha));
        problem.l2_norm(&u.axpy(-1.0, &target))
    }
}

/// Smallest `J(P(ū + t d)) − J(ū)` over the given directions (normalized in
/// `L²`) and step lengths. Negative values indicate `ū` is not a local
/// minimizer at the probed scale.
pub fn quadratic_growth_probe(
    problem: &ControlProblem,
    u_bar: &Control,
    directions: &[Control],
    steps: &[f64],
) -> Result<f64> {
    problem.check(u_bar)?;
    let base = problem.evaluate(u_bar, InitialGuess::Linearized)?;
    let mut worst = f64::INFINITY;
    for d in directions {
        problem.check(d)?;
        let norm = problem.l2_norm(d);
        if norm == 0.0 {
            continue;
        }
        for &t in steps {
            let trial = problem.project(&u_bar.axpy(t / norm, d));
            let cost = problem
                .evaluate(&trial, InitialGuess::From(&base.state.y))?
                .cost;
            worst = worst.min(cost - base.cost);
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Compatibility {
    pub integral: f64,
    pub perimeter: f64,
    /// `false` means `|∫u| ≥ |∂Ω|`, in which case no graph solution exists.
    pub compatible: bool,
}

pub fn check_compatibility(mesh: &Mesh, u: &P1Function) -> Result<Compatibility> {
    let integral = p1_load(mesh, u)?.iter().sum::<f64>().abs();
    let perimeter = mesh.perimeter();
    Ok(Compatibility {
        integral,
        perimeter,
        compatible: integral < perimeter,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizeReport {
    pub cost_history: Vec<f64>,
    pub gradient_norm_history: Vec<f64>,
    pub control_lp_norm_history: Vec<f64>,
    pub step_history: Vec<f64>,
    pub iterations: usize,
    pub state_solves: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub control: Control,
    pub state: P1Function,
    pub adjoint: P1Function,
    pub report: OptimizeReport,
}

/// Projected gradient descent with Armijo backtracking.
///
/// A trial `u⁺ = P(u − s g)` is accepted when
/// `J(u⁺) ≤ J(u) − (c/s)‖u⁺ − u‖²`, which reduces to `J(u) − c s ‖g‖²`
/// whenever the projection is inactive. A state solve that fails at a trial
/// point counts as a rejection.
pub fn optimize(problem: &ControlProblem, u0: &Control) -> Result<OptimizeOutcome> {
    problem.check(u0)?;
    let opts = &problem.params.optimizer;
    let mut report = OptimizeReport::default();
    let mut u = problem.project(u0);
    let mut current = problem.evaluate(&u, InitialGuess::Linearized)?;
    report.state_solves += 1;
    let mut phi = problem.adjoint(&current.state)?;
    let mut grad = problem.gradient_from_adjoint(&u, &phi);
    let record = |report: &mut OptimizeReport, cost: f64, grad: &Control, u: &Control| {
        report.cost_history.push(cost);
        report.gradient_norm_history.push(problem.l2_norm(grad));
        report.control_lp_norm_history.push(problem.lp_norm(u));
    };
    record(&mut report, current.cost, &grad, &u);
    let initial_step = (1.0 / problem.params.alpha).min(opts.max_step);
    let kkt0 = kkt_residual(problem, &u, &problem.represent(&phi));

    let finish = |report: &mut OptimizeReport, u: &Control, phi: &P1Function| {
        report.converged = true;
        report.kkt_residual = kkt_residual(problem, u, &problem.represent(phi));
    };

    if grad.values.iter().all(|&g| g == 0.0) {
        finish(&mut report, &u, &phi);
        return Ok(OptimizeOutcome {
            control: u,
            state: current.state.y,
            adjoint: phi,
            report,
        });
    }

    let mut trial_step = initial_step;
    while report.iterations < opts.max_iter {
        let u_norm = problem.l2_norm(&u).max(1.0);
        let mut step = trial_step;
        let mut accepted = None;
        let mut last_change = f64::INFINITY;
        for _ in 0..=opts.max_halvings {
            let trial = problem.project(&u.axpy(-step, &grad));
            let change = problem.l2_norm(&trial.axpy(-1.0, &u));
            last_change = change;
            report.state_solves += 1;
            match problem.evaluate(&trial, InitialGuess::From(&current.state.y)) {
                Ok(eval) if eval.cost <= current.cost - opts.armijo / step * change * change => {
                    accepted = Some((trial, eval, change));
                    break;
                }
                Ok(_) | Err(Error::NewtonNonconvergence(_)) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        let Some((trial, eval, change)) = accepted else {
            if last_change / u_norm <= opts.tol {
                // No measurable decrease is left along the projected arc.
                finish(&mut report, &u, &phi);
                return Ok(OptimizeOutcome {
                    control: u,
                    state: current.state.y,
                    adjoint: phi,
                    report,
                });
            }
            report.kkt_residual = kkt_residual(problem, &u, &problem.represent(&phi));
            return Err(Error::OptimizerFailure {
                reason: "line search exhausted without sufficient decrease".into(),
                report: Box::new(report),
            });
        };
        let new_phi = problem.adjoint(&eval.state)?;
        let new_grad = problem.gradient_from_adjoint(&trial, &new_phi);
        // Adaptive Barzilai-Borwein estimate for the next trial step.
        let du = trial.axpy(-1.0, &u);
        let dg = new_grad.axpy(-1.0, &grad);
        let curvature = problem.inner(&du, &dg);
        trial_step = if curvature > 0.0 {
            let bb1 = problem.inner(&du, &du) / curvature;
            let bb2 = curvature / problem.inner(&dg, &dg);
            (if bb2 < 0.5 * bb1 { bb2 } else { bb1 }).min(initial_step)
        } else {
            initial_step
        };
        u = trial;
        current = eval;
        phi = new_phi;
        grad = new_grad;
        report.iterations += 1;
        report.step_history.push(step);
        record(&mut report, current.cost, &grad, &u);
        let kkt = kkt_residual(problem, &u, &problem.represent(&phi));
        if change / u_norm <= opts.tol
            || kkt <= opts.kkt_tol * kkt0.min(problem.l2_norm(&u).max(1.0))
        {
            finish(&mut report, &u, &phi);
            return Ok(OptimizeOutcome {
                control: u,
                state: current.state.y,
                adjoint: phi,
                report,
            });
        }
    }
    report.kkt_residual = kkt_residual(problem, &u, &problem.represent(&phi));
    Ok(OptimizeOutcome {
        control: u,
        state: current.state.y,
        adjoint: phi,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::unit_square_mesh;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn problem(n: usize, params: ProblemParams) -> ControlProblem {
        ControlProblem::new(unit_square_mesh(n).unwrap(), params).unwrap()
    }

    fn tight(params: ProblemParams) -> ProblemParams {
        let mut params = params;
        params.newton.tol = 1e-13;
        params
    }

    fn nodal(prob: &ControlProblem, f: impl Fn(f64, f64) -> f64) -> Control {
        Control::p1(P1Function::interpolate(prob.mesh(), |[x, y]| f(x, y)))
    }

    #[test]
    fn rejects_invalid_parameters() {
        let mesh = unit_square_mesh(2).unwrap();
        for params in [
            ProblemParams {
                alpha: 0.0,
                ..Default::default()
            },
            ProblemParams {
                p: 2.0,
                ..Default::default()
            },
            ProblemParams {
                theta: -1.0,
                ..Default::default()
            },
        ] {
            assert!(ControlProblem::new(mesh.clone(), params).is_err());
        }
        let prob = problem(2, ProblemParams::default());
        assert!(prob.control(vec![0.0; 3]).is_err());
        assert_eq!("p0".parse::<ControlBasis>().unwrap(), ControlBasis::P0);
        assert!("p2".parse::<ControlBasis>().is_err());
    }

    #[test]
    fn cost_examples() {
        let zero = ProblemParams {
            y_d: Field::Constant(0.0),
            ..Default::default()
        };
        let prob = problem(8, zero);
        assert_eq!(reduced_cost(&prob, &prob.zero_control()).unwrap(), 0.0);

        let c = 0.7;
        let prob = problem(
            8,
            ProblemParams {
                y_d: Field::Constant(c),
                ..Default::default()
            },
        );
        assert_relative_eq!(
            reduced_cost(&prob, &prob.zero_control()).unwrap(),
            0.5 * c * c,
            max_relative = 1e-12
        );

        let prob = problem(64, ProblemParams::default());
        let j = reduced_cost(&prob, &prob.zero_control()).unwrap();
        assert!((j - 0.125).abs() <= 1e-3, "J = {j}");
    }

    #[test]
    fn regularization_term_uses_exact_mass() {
        let prob = problem(
            4,
            ProblemParams {
                y_d: Field::Constant(0.0),
                alpha: 0.5,
                ..Default::default()
            },
        );
        let u = nodal(&prob, |x, y| 0.3 * x * y);
        let eval = prob.evaluate(&u, InitialGuess::Linearized).unwrap();
        let track = l2_distance(prob.mesh(), &eval.state.y, prob.target_samples()).unwrap();
        // ∫ (0.3xy)² = 0.09/9 is exact for the bilinear interpolant only up to
        // O(h²); compare with the mass form instead.
        let mass_form = assemble_mass(prob.mesh(), 2)
            .unwrap()
            .inner(&u.values, &u.values);
        assert_relative_eq!(
            eval.cost,
            0.5 * track * track + 0.25 * mass_form,
            max_relative = 1e-14
        );
    }

    #[test]
    fn gradient_vanishes_when_linear_target_is_tracked() {
        let field = Field::Linear(0.2, -0.5, 0.3);
        let prob = problem(
            8,
            ProblemParams {
                y_d: field,
                v: field,
                ..Default::default()
            },
        );
        let g = reduced_gradient(&prob, &prob.zero_control()).unwrap();
        assert!(prob.l2_norm(&g) < 1e-12);
        let out = optimize(&prob, &prob.zero_control()).unwrap();
        assert_eq!(out.report.iterations, 0);
    }

    #[test]
    fn gradient_reduces_to_poisson_adjoint() {
        let params = ProblemParams {
            y_d: Field::SineMode(-2.0 * PI * PI),
            ..Default::default()
        };
        let prob = problem(32, params);
        let g = reduced_gradient(&prob, &prob.zero_control()).unwrap();
        let err = prob
            .mesh()
            .vertices()
            .iter()
            .zip(&g.values)
            .map(|(&[x, y], gi)| (gi - (PI * x).sin() * (PI * y).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 5e-3, "max nodal error {err}");
    }

    fn random_control(prob: &ControlProblem, rng: &mut ChaCha8Rng, scale: f64) -> Control {
        let values = (0..prob.dim())
            .map(|_| scale * rng.gen_range(-1.0..1.0))
            .collect();
        prob.control(values).unwrap()
    }

    fn central_difference_check(basis: ControlBasis, seed: u64) {
        let params = tight(ProblemParams {
            basis,
            ..Default::default()
        });
        let prob = problem(8, params);
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed_from_env(seed));
        let eps = 1e-5;
        for _ in 0..3 {
            let u = prob.project(&random_control(&prob, &mut rng, 2.0));
            let g = reduced_gradient(&prob, &u).unwrap();
            for _ in 0..4 {
                let d = random_control(&prob, &mut rng, 1.0);
                let plus = reduced_cost(&prob, &u.axpy(eps, &d)).unwrap();
                let minus = reduced_cost(&prob, &u.axpy(-eps, &d)).unwrap();
                let fd = (plus - minus) / (2.0 * eps);
                let exact = prob.inner(&g, &d);
                assert_relative_eq!(fd, exact, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences_p1() {
        central_difference_check(ControlBasis::P1, 11);
    }

    #[test]
    fn gradient_matches_central_differences_p0() {
        central_difference_check(ControlBasis::P0, 12);
    }

    #[test]
    fn projection_examples() {
        let prob = problem(
            8,
            ProblemParams {
                theta: 2.0,
                ..Default::default()
            },
        );
        let inside = nodal(&prob, |_, _| 1.0);
        assert_eq!(prob.project(&inside), inside);

        let four = nodal(&prob, |_, _| 4.0);
        let projected = prob.project(&four);
        for v in &projected.values {
            assert_relative_eq!(*v, 2.0, max_relative = 1e-12);
        }
        assert_relative_eq!(prob.lp_norm(&projected), 2.0, max_relative = 1e-12);

        let f = P1Function::interpolate(prob.mesh(), |[x, _]| 40.0 * x);
        let p = project_lp_ball(prob.mesh(), &f, 2.5, 2.0).unwrap();
        assert_relative_eq!(
            lp_norm(prob.mesh(), &p, 2.5).unwrap(),
            2.0,
            max_relative = 1e-12
        );
        assert!(project_lp_ball(prob.mesh(), &f, 2.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_homogeneous(
            seed in any::<u64>(),
            theta in 0.1f64..10.0,
            scale in 0.01f64..50.0,
            c in 0.01f64..=1.0,
        ) {
            let prob = problem(4, ProblemParams { theta, ..Default::default() });
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_control(&prob, &mut rng, scale);
            let once = prob.project(&u);
            prop_assert_eq!(&prob.project(&once), &once);
            prop_assert!(prob.lp_norm(&once) <= theta * (1.0 + 1e-12));
            let on_sphere = prob.project(&u.scaled(1e3 * theta / prob.lp_norm(&u)));
            let shrunk = on_sphere.scaled(c);
            prop_assert_eq!(prob.project(&shrunk), prob.project(&on_sphere).scaled(c));
        }
    }

    #[test]
    fn kkt_residual_examples() {
        let prob = problem(8, ProblemParams::default());
        let u = nodal(&prob, |x, y| x - y);
        let phi = u.scaled(-prob.alpha());
        assert!(kkt_residual(&prob, &u, &phi) < 1e-20);

        let prob = problem(
            8,
            ProblemParams {
                theta: 0.5,
                ..Default::default()
            },
        );
        let phi = nodal(&prob, |x, y| (x * y).sin());
        let u = prob.project(&phi.scaled(-1.0 / prob.alpha()));
        assert!(prob.lp_norm(&u) >= 0.5 * (1.0 - 1e-12));
        assert_eq!(kkt_residual(&prob, &u, &phi), 0.0);
        // Off the fixed point the residual is positive.
        assert!(kkt_residual(&prob, &u.scaled(0.5), &phi) > 0.1);
    }

    #[test]
    fn compatibility_examples() {
        let mesh = unit_square_mesh(16).unwrap();
        let c = check_compatibility(&mesh, &P1Function::interpolate(&mesh, |_| 1.0)).unwrap();
        assert_relative_eq!(c.integral, 1.0, max_relative = 1e-12);
        assert_relative_eq!(c.perimeter, 4.0, max_relative = 1e-14);
        assert!(c.compatible);
        let c = check_compatibility(&mesh, &P1Function::interpolate(&mesh, |_| 5.0)).unwrap();
        assert_relative_eq!(c.integral, 5.0, max_relative = 1e-12);
        assert!(!c.compatible);
        let sine = P1Function::interpolate_field(&mesh, &Field::SineSquare);
        let c = check_compatibility(&mesh, &sine).unwrap();
        assert!(c.integral < 1e-12 && c.compatible);
    }

    #[test]
    fn zero_target_is_stationary() {
        let prob = problem(
            8,
            ProblemParams {
                y_d: Field::Constant(0.0),
                ..Default::default()
            },
        );
        let out = optimize(&prob, &prob.zero_control()).unwrap();
        assert_eq!(out.report.iterations, 0);
        assert!(out.report.converged);
        assert!(out.control.values.iter().all(|&u| u == 0.0));
        assert_eq!(out.report.kkt_residual, 0.0);
    }

    fn assert_descent_and_feasibility(report: &OptimizeReport, theta: f64) {
        for w in report.cost_history.windows(2) {
            assert!(w[1] <= w[0], "cost increased: {} -> {}", w[0], w[1]);
        }
        for &n in &report.control_lp_norm_history {
            assert!(n <= theta * (1.0 + 1e-12), "infeasible iterate {n}");
        }
    }

    #[test]
    fn optimizer_descends_and_stays_feasible() {
        for (theta, basis) in [
            (20.0, ControlBasis::P1),
            (2.0, ControlBasis::P1),
            (2.0, ControlBasis::P0),
        ] {
            let prob = problem(
                8,
                ProblemParams {
                    theta,
                    basis,
                    ..Default::default()
                },
            );
            let u0 = prob.control(vec![3.0; prob.dim()]).unwrap();
            let out = optimize(&prob, &u0).unwrap();
            let r = &out.report;
            assert!(r.converged, "theta {theta} {basis}: {r:?}");
            assert_descent_and_feasibility(r, theta);
            assert!(r.cost_history.last().unwrap() < &r.cost_history[0]);
            assert!(
                r.kkt_residual <= 1e-2 * prob.l2_norm(&out.control).max(1.0),
                "{theta} {basis} {} {} {}",
                r.kkt_residual,
                r.iterations,
                prob.l2_norm(&out.control)
            );
            assert_eq!(r.cost_history.len(), r.iterations + 1);
        }
    }

    #[test]
    fn small_radius_makes_constraint_active() {
        let prob = problem(
            8,
            ProblemParams {
                theta: 2.0,
                ..Default::default()
            },
        );
        let out = optimize(&prob, &prob.zero_control()).unwrap();
        assert_relative_eq!(prob.lp_norm(&out.control), 2.0, max_relative = 1e-6);
    }

    #[test]
    fn optimum_passes_quadratic_growth_probe() {
        let mut params = ProblemParams {
            y_d: Field::GaussianBump,
            ..Default::default()
        };
        params.optimizer.kkt_tol = 1e-9;
        params.optimizer.tol = 1e-12;
        params.optimizer.max_iter = 20_000;
        let prob = problem(8, params);
        let out = optimize(&prob, &prob.zero_control()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed_from_env(5));
        let dirs: Vec<Control> = (0..4)
            .map(|_| random_control(&prob, &mut rng, 1.0))
            .collect();
        let worst =
            quadratic_growth_probe(&prob, &out.control, &dirs, &[1e-3, 2e-3, 4e-3]).unwrap();
        assert!(worst.is_finite());
        assert!(worst >= -1e-10, "cost decreased by {worst}");
    }

    #[test]
    fn p0_controls_average_to_vertices() {
        let prob = problem(
            2,
            ProblemParams {
                basis: ControlBasis::P0,
                ..Default::default()
            },
        );
        let u = prob.control(vec![3.0; prob.dim()]).unwrap();
        assert!(u
            .to_nodal(prob.mesh())
            .values()
            .iter()
            .all(|&v| (v - 3.0).abs() < 1e-15));
        assert_relative_eq!(prob.lp_norm(&u), 3.0, max_relative = 1e-14);
        assert_relative_eq!(prob.l2_norm(&u), 3.0, max_relative = 1e-14);
    }
}
