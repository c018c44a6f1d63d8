//! P1 finite-element kernels: nodal functions, the prescribed mean curvature
//! residual, its Jacobian, mass matrices and `L^p` norms.
//!
//! P1 gradients are constant on each triangle, so the surface measure
//! `Q = √(1 + |∇y|²)` and the linearized coefficient
//! `A = (I − ∇y ∇yᵀ / Q²) / Q` are evaluated once per element and the
//! principal part of every form is integrated exactly.

use crate::error::{invalid, Result};
use crate::fields::Field;
use crate::mesh::{Mesh, Point};
use crate::quadrature::{quadrature, QuadratureRule};
use crate::sparse::SparseSymMatrix;

/// Continuous piecewise-linear function given by its nodal values.
#[derive(Clone, Debug, PartialEq)]
pub struct P1Function {
    values: Vec<f64>,
}

impl P1Function {
    pub fn zeros(mesh: &Mesh) -> Self {
        P1Function {
            values: vec![0.0; mesh.num_vertices()],
        }
    }

    pub fn from_values(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(invalid(format!(
                "{} nodal values for a mesh with {} vertices",
                values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(P1Function { values })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Self {
        P1Function {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn interpolate_field(mesh: &Mesh, field: &Field) -> Self {
        Self::interpolate(mesh, |p| field.value(p))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Gradient on triangle `t`.
    pub fn gradient(&self, mesh: &Mesh, t: usize) -> [f64; 2] {
        let tri = mesh.triangles()[t];
        let g = &mesh.geometry()[t].grads;
        let mut out = [0.0; 2];
        for a in 0..3 {
            let v = self.values[tri[a]];
            out[0] += v * g[a][0];
            out[1] += v * g[a][1];
        }
        out
    }

    pub fn eval_bary(&self, mesh: &Mesh, t: usize, bary: [f64; 3]) -> f64 {
        let tri = mesh.triangles()[t];
        (0..3).map(|a| bary[a] * self.values[tri[a]]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check(&self, mesh: &Mesh, what: &str) -> Result<()> {
        if self.values.len() != mesh.num_vertices() {
            return Err(invalid(format!(
                "{what} has {} values, mesh has {} vertices",
                self.values.len(),
                mesh.num_vertices()
            )));
        }
        Ok(())
    }
}

/// Marks which vertices carry unknowns; the rest are eliminated with identity
/// rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dofs {
    free: Vec<bool>,
}

impl Dofs {
    /// Interior vertices are free; boundary values are prescribed.
    pub fn interior(mesh: &Mesh) -> Self {
        Dofs {
            free: mesh.boundary_flags().iter().map(|b| !b).collect(),
        }
    }

    /// No elimination.
    pub fn all(mesh: &Mesh) -> Self {
        Dofs {
            free: vec![true; mesh.num_vertices()],
        }
    }

    pub fn from_free(free: Vec<bool>) -> Self {
        Dofs { free }
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.free[i]
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn num_free(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Zeroes the entries of `v` at eliminated vertices.
    pub fn restrict(&self, v: &mut [f64]) {
        for (x, &f) in v.iter_mut().zip(&self.free) {
            if !f {
                *x = 0.0;
            }
        }
    }
}

pub fn eval_q(grad_y: [f64; 2]) -> f64 {
    (1.0 + grad_y[0] * grad_y[0] + grad_y[1] * grad_y[1]).sqrt()
}

pub fn eval_a(grad_y: [f64; 2]) -> [[f64; 2]; 2] {
    let q = eval_q(grad_y);
    let [gx, gy] = grad_y;
    let q2 = q * q;
    let off = -gx * gy / (q2 * q);
    [
        [(1.0 - gx * gx / q2) / q, off],
        [off, (1.0 - gy * gy / q2) / q],
    ]
}

/// Per-element data of the linearized operator at a state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElementCoeff {
    pub grad: [f64; 2],
    pub q: f64,
    pub a: [[f64; 2]; 2],
}

impl ElementCoeff {
    pub fn new(grad: [f64; 2]) -> Self {
        ElementCoeff {
            grad,
            q: eval_q(grad),
            a: eval_a(grad),
        }
    }
}

pub fn element_coefficients(mesh: &Mesh, y: &P1Function) -> Vec<ElementCoeff> {
    (0..mesh.num_triangles())
        .map(|t| ElementCoeff::new(y.gradient(mesh, t)))
        .collect()
}

/// Largest element gradient magnitude of `y`.
pub fn max_gradient(mesh: &Mesh, y: &P1Function) -> f64 {
    (0..mesh.num_triangles())
        .map(|t| {
            let g = y.gradient(mesh, t);
            g[0].hypot(g[1])
        })
        .fold(0.0, f64::max)
}

/// Values of a function at the quadrature points of every triangle, laid out
/// triangle-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureSamples {
    pub rule: QuadratureRule,
    pub values: Vec<f64>,
}

impl QuadratureSamples {
    pub fn from_fn(mesh: &Mesh, degree: u32, f: impl Fn(Point) -> f64) -> Result<Self> {
        let rule = quadrature(degree)?;
        let mut values = Vec::with_capacity(mesh.num_triangles() * rule.len());
        for t in 0..mesh.num_triangles() {
            for b in &rule.points {
                values.push(f(mesh.map_point(t, *b)));
            }
        }
        Ok(QuadratureSamples { rule, values })
    }

    pub fn from_field(mesh: &Mesh, degree: u32, field: &Field) -> Result<Self> {
        Self::from_fn(mesh, degree, |p| field.value(p))
    }

    /// Samples a P1 function at the quadrature points.
    pub fn from_p1(mesh: &Mesh, degree: u32, f: &P1Function) -> Result<Self> {
        let rule = quadrature(degree)?;
        let mut values = Vec::with_capacity(mesh.num_triangles() * rule.len());
        for t in 0..mesh.num_triangles() {
            for b in &rule.points {
                values.push(f.eval_bary(mesh, t, *b));
            }
        }
        Ok(QuadratureSamples { rule, values })
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.num_triangles() * self.rule.len() {
            return Err(invalid("quadrature samples do not match the mesh"));
        }
        Ok(())
    }
}

/// `∫ u ζ_i` for every vertex, with the edge-midpoint rule (exact for P1 `u`).
pub fn p1_load(mesh: &Mesh, u: &P1Function) -> Result<Vec<f64>> {
    u.check(mesh, "control")?;
    let rule = quadrature(2)?;
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.geometry()[t].area;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let uq = u.eval_bary(mesh, t, *b);
            for a in 0..3 {
                load[tri[a]] += w * area * uq * b[a];
            }
        }
    }
    Ok(load)
}

/// `∫ u ζ_i` for an elementwise constant `u`.
pub fn p0_load(mesh: &Mesh, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != mesh.num_triangles() {
        return Err(invalid("P0 control length must equal the triangle count"));
    }
    let mut load = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let share = u[t] * mesh.geometry()[t].area / 3.0;
        for &i in tri {
            load[i] += share;
        }
    }
    Ok(load)
}

/// Discrete residual `F_i = ∫ ∇y·∇ζ_i / Q(y) − ∫ u ζ_i` on free vertices.
pub fn assemble_state_residual(
    mesh: &Mesh,
    y: &P1Function,
    u: &P1Function,
    dofs: &Dofs,
) -> Result<Vec<f64>> {
    y.check(mesh, "state")?;
    if dofs.len() != mesh.num_vertices() {
        return Err(invalid("dof map does not match the mesh"));
    }
    let load = p1_load(mesh, u)?;
    Ok(state_residual_with_load(mesh, y, &load, dofs))
}

pub(crate) fn state_residual_with_load(
    mesh: &Mesh,
    y: &P1Function,
    load: &[f64],
    dofs: &Dofs,
) -> Vec<f64> {
    let mut res: Vec<f64> = load.iter().map(|l| -l).collect();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = &mesh.geometry()[t];
        let g = y.gradient(mesh, t);
        let scale = geo.area / eval_q(g);
        for a in 0..3 {
            res[tri[a]] += scale * (g[0] * geo.grads[a][0] + g[1] * geo.grads[a][1]);
        }
    }
    dofs.restrict(&mut res);
    res
}

/// Assembles `K_ij = Σ_K ∇ζ_jᵀ C_K ∇ζ_i |K|` with identity rows at eliminated
/// vertices. Local matrices are filled symmetrically, so the result is
/// exactly symmetric.
pub fn assemble_stiffness(
    mesh: &Mesh,
    dofs: &Dofs,
    coeff: impl Fn(usize) -> [[f64; 2]; 2],
) -> SparseSymMatrix {
    let pattern = mesh.pattern();
    let mut values = vec![0.0; pattern.cols.len()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geo = &mesh.geometry()[t];
        let c = coeff(t);
        let slots = &pattern.slots[t];
        for a in 0..3 {
            let ga = geo.grads[a];
            let ca = [
                c[0][0] * ga[0] + c[0][1] * ga[1],
                c[1][0] * ga[0] + c[1][1] * ga[1],
            ];
            for b in a..3 {
                let gb = geo.grads[b];
                let k = geo.area * (gb[0] * ca[0] + gb[1] * ca[1]);
                if !(dofs.is_free(tri[a]) && dofs.is_free(tri[b])) {
                    continue;
                }
                values[slots[a][b]] += k;
                if a != b {
                    values[slots[b][a]] += k;
                }
            }
        }
    }
    let n = mesh.num_vertices();
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(pattern.cols.len());
    let mut vals = Vec::with_capacity(pattern.cols.len());
    row_offsets.push(0);
    for i in 0..n {
        for k in pattern.row_offsets[i]..pattern.row_offsets[i + 1] {
            let j = pattern.cols[k];
            if dofs.is_free(i) && dofs.is_free(j) {
                cols.push(j);
                vals.push(values[k]);
            } else if i == j {
                cols.push(j);
                vals.push(1.0);
            }
        }
        row_offsets.push(cols.len());
    }
    SparseSymMatrix::from_csr(n, row_offsets, cols, vals, true)
}

/// Jacobian of the state residual at `y`: the stiffness matrix with
/// coefficient `A(∇y)` on every element.
pub fn assemble_jacobian(mesh: &Mesh, y: &P1Function, dofs: &Dofs) -> Result<SparseSymMatrix> {
    y.check(mesh, "state")?;
    if dofs.len() != mesh.num_vertices() {
        return Err(invalid("dof map does not match the mesh"));
    }
    Ok(assemble_stiffness(mesh, dofs, |t| {
        eval_a(y.gradient(mesh, t))
    }))
}

pub fn assemble_laplacian(mesh: &Mesh, dofs: &Dofs) -> SparseSymMatrix {
    assemble_stiffness(mesh, dofs, |_| [[1.0, 0.0], [0.0, 1.0]])
}

/// Consistent mass matrix `M_ij = ∫ ζ_i ζ_j`.
pub fn assemble_mass(mesh: &Mesh, degree: u32) -> Result<SparseSymMatrix> {
    if degree < 2 {
        return Err(invalid("mass matrix needs a rule of degree >= 2"));
    }
    let rule = quadrature(degree)?;
    let pattern = mesh.pattern();
    let mut values = vec![0.0; pattern.cols.len()];
    for t in 0..mesh.num_triangles() {
        let area = mesh.geometry()[t].area;
        let slots = &pattern.slots[t];
        for a in 0..3 {
            for b in a..3 {
                let m: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[a] * p[b])
                    .sum::<f64>()
                    * area;
                values[slots[a][b]] += m;
                if a != b {
                    values[slots[b][a]] += m;
                }
            }
        }
    }
    Ok(SparseSymMatrix::from_csr(
        mesh.num_vertices(),
        pattern.row_offsets.clone(),
        pattern.cols.clone(),
        values,
        true,
    ))
}

/// `(∫ |f|^p)^(1/p)` with the degree-4 rule on every triangle.
pub fn lp_norm(mesh: &Mesh, f: &P1Function, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("L^p norm needs finite p >= 1, got {p}")));
    }
    f.check(mesh, "function")?;
    let rule = quadrature(4)?;
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let area = mesh.geometry()[t].area;
        let local: f64 = rule
            .points
            .iter()
            .zip(&rule.weights)
            .map(|(b, w)| w * f.eval_bary(mesh, t, *b).abs().powf(p))
            .sum();
        sum += area * local;
    }
    Ok(sum.powf(1.0 / p))
}

/// `(∫ |f|^p)^(1/p)` for an elementwise constant `f`.
pub fn p0_lp_norm(mesh: &Mesh, f: &[f64], p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("L^p norm needs finite p >= 1, got {p}")));
    }
    if f.len() != mesh.num_triangles() {
        return Err(invalid("P0 function length must equal the triangle count"));
    }
    let sum: f64 = f
        .iter()
        .zip(mesh.geometry())
        .map(|(v, g)| g.area * v.abs().powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// `L²` norm of `f_h − g` with `g` sampled at the quadrature points.
pub fn l2_distance(mesh: &Mesh, f: &P1Function, g: &QuadratureSamples) -> Result<f64> {
    f.check(mesh, "function")?;
    g.check(mesh)?;
    let nq = g.rule.len();
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let area = mesh.geometry()[t].area;
        for (q, (b, w)) in g.rule.points.iter().zip(&g.rule.weights).enumerate() {
            let d = f.eval_bary(mesh, t, *b) - g.values[t * nq + q];
            sum += area * w * d * d;
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{clover_mesh, unit_square_mesh, CloverShape};
    use crate::sparse::solve_spd;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn q_examples() {
        assert_eq!(eval_q([0.0, 0.0]), 1.0);
        assert_relative_eq!(eval_q([3.0, 4.0]), 26f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(eval_q([1.0, 0.0]), 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn a_examples() {
        assert_eq!(eval_a([0.0, 0.0]), [[1.0, 0.0], [0.0, 1.0]]);
        let a = eval_a([1.0, 0.0]);
        assert_abs_diff_eq!(a[0][0], 1.0 / (2.0 * 2f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(a[1][1], 1.0 / 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a[0][1], 0.0);

        let a = eval_a([3.0, 4.0]);
        let eig = nalgebra::Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1]).symmetric_eigen();
        let (lo, hi) = if eig.eigenvalues[0] < eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        assert_abs_diff_eq!(eig.eigenvalues[lo], 26f64.powf(-1.5), epsilon = 1e-12);
        assert_abs_diff_eq!(eig.eigenvalues[hi], 26f64.powf(-0.5), epsilon = 1e-12);
        let v = eig.eigenvectors.column(lo);
        // Parallel to (3, 4): the 2-D cross product vanishes.
        assert_abs_diff_eq!(v[0] * 4.0 - v[1] * 3.0, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn a_spectrum_and_positivity(gx in -7.0..7.0f64, gy in -7.0..7.0f64,
                                     bx in -10.0..10.0f64, by in -10.0..10.0f64) {
            let g = [gx, gy];
            let q = eval_q(g);
            let a = eval_a(g);
            prop_assert!(q >= 1.0);
            prop_assert!((a[0][1] - a[1][0]).abs() <= 1e-15);
            let tr = a[0][0] + a[1][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
            prop_assert!((lo - q.powi(-3)).abs() <= 1e-12);
            prop_assert!((hi - 1.0 / q).abs() <= 1e-12);
            prop_assert!(lo > 0.0 && hi <= 1.0);
            let b2 = bx * bx + by * by;
            let gb = gx * bx + gy * by;
            prop_assert!(q * q * b2 - gb * gb >= b2 * (1.0 - 1e-12));
        }
    }

    #[test]
    fn p1_gradient_is_exact_for_linears() {
        let mesh = clover_mesh(3, 16).unwrap();
        let f = P1Function::interpolate(&mesh, |p| 2.0 - 3.0 * p[0] + 0.5 * p[1]);
        for t in 0..mesh.num_triangles() {
            let g = f.gradient(&mesh, t);
            assert_abs_diff_eq!(g[0], -3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(g[1], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_examples() {
        let mesh = unit_square_mesh(2).unwrap();
        let dofs = Dofs::interior(&mesh);
        let zero = P1Function::zeros(&mesh);
        let r = assemble_state_residual(&mesh, &zero, &zero, &dofs).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));

        let one = P1Function::interpolate(&mesh, |_| 1.0);
        let r = assemble_state_residual(&mesh, &zero, &one, &dofs).unwrap();
        assert_abs_diff_eq!(r[4], -0.25, epsilon = 1e-15);
        assert!(r.iter().enumerate().all(|(i, &v)| i == 4 || v == 0.0));

        let mesh = unit_square_mesh(6).unwrap();
        let dofs = Dofs::interior(&mesh);
        let x = P1Function::interpolate(&mesh, |p| p[0]);
        let r = assemble_state_residual(&mesh, &x, &P1Function::zeros(&mesh), &dofs).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-14), "{r:?}");
    }

    #[test]
    fn residual_dimension_mismatch() {
        let mesh = unit_square_mesh(2).unwrap();
        let other = unit_square_mesh(3).unwrap();
        let bad = P1Function::zeros(&other);
        let ok = P1Function::zeros(&mesh);
        assert!(assemble_state_residual(&mesh, &bad, &ok, &Dofs::interior(&mesh)).is_err());
        assert!(assemble_state_residual(&mesh, &ok, &bad, &Dofs::interior(&mesh)).is_err());
    }

    #[test]
    fn two_triangle_laplacian() {
        let mesh = unit_square_mesh(1).unwrap();
        let k = assemble_jacobian(&mesh, &P1Function::zeros(&mesh), &Dofs::all(&mesh)).unwrap();
        // Hand-derived matrix in counterclockwise vertex order around the square.
        let expected = [
            [1.0, -0.5, 0.0, -0.5],
            [-0.5, 1.0, -0.5, 0.0],
            [0.0, -0.5, 1.0, -0.5],
            [-0.5, 0.0, -0.5, 1.0],
        ];
        let ccw = [0, 1, 3, 2];
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(k.get(ccw[i], ccw[j]), expected[i][j], epsilon = 1e-14);
            }
        }
        assert!(k.is_symmetric());
    }

    /// Dense stiffness with one constant coefficient, written independently of
    /// the sparse assembly path.
    fn dense_constant_stiffness(mesh: &Mesh, c: [[f64; 2]; 2]) -> Vec<Vec<f64>> {
        let n = mesh.num_vertices();
        let mut k = vec![vec![0.0; n]; n];
        for tri in mesh.triangles() {
            let p = tri.map(|i| mesh.vertices()[i]);
            let (x, y) = (p.map(|q| q[0]), p.map(|q| q[1]));
            let det = (x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]);
            let grads = [
                [(y[1] - y[2]) / det, (x[2] - x[1]) / det],
                [(y[2] - y[0]) / det, (x[0] - x[2]) / det],
                [(y[0] - y[1]) / det, (x[1] - x[0]) / det],
            ];
            for a in 0..3 {
                for b in 0..3 {
                    let cg = [
                        c[0][0] * grads[b][0] + c[0][1] * grads[b][1],
                        c[1][0] * grads[b][0] + c[1][1] * grads[b][1],
                    ];
                    k[tri[a]][tri[b]] += 0.5 * det * (grads[a][0] * cg[0] + grads[a][1] * cg[1]);
                }
            }
        }
        k
    }

    #[test]
    fn jacobian_matches_constant_coefficient_oracle() {
        for mesh in [unit_square_mesh(5).unwrap(), clover_mesh(3, 16).unwrap()] {
            let dofs = Dofs::all(&mesh);
            let k0 = assemble_jacobian(&mesh, &P1Function::zeros(&mesh), &dofs).unwrap();
            let d0 = dense_constant_stiffness(&mesh, [[1.0, 0.0], [0.0, 1.0]]);
            let x = P1Function::interpolate(&mesh, |p| p[0]);
            let kx = assemble_jacobian(&mesh, &x, &dofs).unwrap();
            let s = 2f64.sqrt();
            let dx = dense_constant_stiffness(&mesh, [[1.0 / (2.0 * s), 0.0], [0.0, 1.0 / s]]);
            for i in 0..mesh.num_vertices() {
                for j in 0..mesh.num_vertices() {
                    assert_abs_diff_eq!(k0.get(i, j), d0[i][j], epsilon = 1e-12);
                    assert_abs_diff_eq!(kx.get(i, j), dx[i][j], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for mesh in [unit_square_mesh(1).unwrap(), unit_square_mesh(4).unwrap()] {
            let dofs = Dofs::all(&mesh);
            let y = P1Function::interpolate(&mesh, |p| (3.0 * p[0]).sin() + p[0] * p[1] * p[1]);
            let u = P1Function::zeros(&mesh);
            let k = assemble_jacobian(&mesh, &y, &dofs).unwrap();
            let eps = 1e-6;
            for _ in 0..20 {
                let d: Vec<f64> = (0..mesh.num_vertices())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                let shifted = |s: f64| {
                    let v = y.values().iter().zip(&d).map(|(a, b)| a + s * b).collect();
                    let f = P1Function::from_values(&mesh, v).unwrap();
                    assemble_state_residual(&mesh, &f, &u, &dofs).unwrap()
                };
                let (rp, rm) = (shifted(eps), shifted(-eps));
                let kd = k.mul_vec(&d);
                for i in 0..mesh.num_vertices() {
                    assert_abs_diff_eq!((rp[i] - rm[i]) / (2.0 * eps), kd[i], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn eliminated_jacobian_is_spd() {
        let mesh = unit_square_mesh(6).unwrap();
        let dofs = Dofs::interior(&mesh);
        let y = P1Function::interpolate(&mesh, |p| 3.0 * (2.0 * PI * p[0]).sin() * p[1]);
        let k = assemble_jacobian(&mesh, &y, &dofs).unwrap();
        assert!(k.is_symmetric());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..mesh.num_vertices() {
            assert!(k.get(i, i) > 0.0);
            if !dofs.is_free(i) {
                assert_eq!(k.row(i).collect::<Vec<_>>(), vec![(i, 1.0)]);
            }
        }
        for _ in 0..50 {
            let x: Vec<f64> = (0..mesh.num_vertices())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            assert!(k.inner(&x, &x) > 0.0);
        }
    }

    #[test]
    fn mass_examples() {
        let tri = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let m = assemble_mass(&tri, 2).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 } else { 1.0 } * 0.5 / 12.0;
                assert_abs_diff_eq!(m.get(i, j), e, epsilon = 1e-15);
            }
        }
        assert_eq!(assemble_mass(&tri, 4).unwrap().to_dense().len(), 3);
        assert!(assemble_mass(&tri, 1).is_err());

        let mesh = unit_square_mesh(7).unwrap();
        let m = assemble_mass(&mesh, 2).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let rows = m.mul_vec(&ones);
        let load = p1_load(&mesh, &P1Function::interpolate(&mesh, |_| 1.0)).unwrap();
        for (r, l) in rows.iter().zip(&load) {
            assert_abs_diff_eq!(r, l, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(rows.iter().sum::<f64>(), 1.0, epsilon = 1e-13);

        let clover = clover_mesh(4, 32).unwrap();
        let m = assemble_mass(&clover, 2).unwrap();
        let ones = vec![1.0; clover.num_vertices()];
        let total = m.inner(&ones, &ones);
        assert_relative_eq!(total, clover.area(), max_relative = 1e-12);
        let exact = CloverShape::default().exact_area();
        assert_abs_diff_eq!(exact, PI * 0.35 * 0.35 * 1.045, epsilon = 1e-15);
        assert!(
            (total - exact).abs() / exact < 0.02,
            "area {total} vs {exact}"
        );
    }

    #[test]
    fn lp_norm_examples() {
        let mesh = unit_square_mesh(8).unwrap();
        let c = P1Function::interpolate(&mesh, |_| -1.7);
        for p in [1.0, 2.0, 2.5, 7.0] {
            assert_relative_eq!(lp_norm(&mesh, &c, p).unwrap(), 1.7, max_relative = 1e-13);
        }
        let x = P1Function::interpolate(&mesh, |p| p[0]);
        // ∫ x^2.5 = 1/3.5
        let expected = (1.0f64 / 3.5).powf(1.0 / 2.5);
        assert_relative_eq!(
            lp_norm(&mesh, &x, 2.5).unwrap(),
            expected,
            max_relative = 1e-5
        );
        assert!(lp_norm(&mesh, &x, 0.5).is_err());

        let fine = unit_square_mesh(64).unwrap();
        let s = P1Function::interpolate(&fine, |p| (PI * p[0]).sin() * (PI * p[1]).sin());
        assert_abs_diff_eq!(lp_norm(&fine, &s, 2.0).unwrap(), 0.5, epsilon = 1e-3);
    }

    proptest! {
        #[test]
        fn l2_norm_matches_mass_form(seed in 0u64..1000) {
            let mesh = unit_square_mesh(4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f = P1Function::from_values(&mesh, v.clone()).unwrap();
            let m = assemble_mass(&mesh, 2).unwrap();
            let n = lp_norm(&mesh, &f, 2.0).unwrap();
            prop_assert!((n * n - m.inner(&v, &v)).abs() <= 1e-12 * m.inner(&v, &v).max(1.0));
        }
    }

    #[test]
    fn solve_after_elimination() {
        let mesh = unit_square_mesh(1).unwrap();
        // Free only the upper-right corner (1, 1).
        let dofs = Dofs::from_free(vec![false, false, false, true]);
        let k = assemble_jacobian(&mesh, &P1Function::zeros(&mesh), &dofs).unwrap();
        let x = solve_spd(&k, &[0.0, 0.0, 0.0, 1.0], 1e-12).unwrap();
        assert_abs_diff_eq!(x[3], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn poisson_solution_accuracy() {
        let mesh = unit_square_mesh(32).unwrap();
        let dofs = Dofs::interior(&mesh);
        let k = assemble_laplacian(&mesh, &dofs);
        let m = assemble_mass(&mesh, 2).unwrap();
        let src = P1Function::interpolate(&mesh, |p| {
            2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin()
        });
        let mut rhs = m.mul_vec(src.values());
        dofs.restrict(&mut rhs);
        let x = solve_spd(&k, &rhs, 1e-12).unwrap();
        let err = mesh
            .vertices()
            .iter()
            .zip(&x)
            .map(|(p, v)| (v - (PI * p[0]).sin() * (PI * p[1]).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 5e-3, "max nodal error {err}");
    }
}
