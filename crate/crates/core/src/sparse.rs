//! Compressed sparse symmetric matrices and a direct SPD solver.
//!
//! The solver reorders the unknowns with reverse Cuthill–McKee and factors
//! the envelope of the permuted matrix. Structured triangulations have small
//! bandwidth after reordering, so this is fast at the mesh sizes used here.

use std::collections::VecDeque;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseSymMatrix {
    pub(crate) fn from_csr(
        dim: usize,
        row_offsets: Vec<usize>,
        cols: Vec<usize>,
        values: Vec<f64>,
        symmetric: bool,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), dim + 1);
        debug_assert_eq!(cols.len(), values.len());
        SparseSymMatrix {
            dim,
            row_offsets,
            cols,
            values,
            symmetric,
        }
    }

    pub fn identity(dim: usize) -> Self {
        SparseSymMatrix {
            dim,
            row_offsets: (0..=dim).collect(),
            cols: (0..dim).collect(),
            values: vec![1.0; dim],
            symmetric: true,
        }
    }

    /// Builds a matrix from a dense row-major array, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        let mut row_offsets = vec![0];
        let mut cols = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            assert_eq!(row.len(), dim, "dense matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(cols.len());
        }
        let mut m = SparseSymMatrix {
            dim,
            row_offsets,
            cols,
            values,
            symmetric: false,
        };
        m.symmetric = m.is_symmetric();
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `xᵀ M y`
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Exact entrywise symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn factor(&self) -> Result<EnvelopeCholesky> {
        EnvelopeCholesky::new(self)
    }
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored row-wise over the envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    /// `perm[new] = old`
    perm: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

fn reverse_cuthill_mckee(m: &SparseSymMatrix) -> Vec<usize> {
    let n = m.dim;
    let degree: Vec<usize> = (0..n)
        .map(|i| m.row(i).filter(|&(j, _)| j != i).count())
        .collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut Vec<bool>, order: &mut Vec<usize>| -> usize {
        // Returns the last node reached, a good pseudo-peripheral candidate.
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = m.row(v).map(|(j, _)| j).filter(|&j| !visited[j]).collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                queue.push_back(j);
            }
        }
        *order.last().expect("bfs visits its start node")
    };
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        if degree[seed] == 0 {
            visited[seed] = true;
            order.push(seed);
            continue;
        }
        // Two sweeps: the second starts from the far end of the first.
        let mut scratch = visited.clone();
        let mut probe = Vec::new();
        let far = bfs(seed, &mut scratch, &mut probe);
        let begin = order.len();
        bfs(far, &mut visited, &mut order);
        order[begin..].reverse();
    }
    order
}

impl EnvelopeCholesky {
    pub fn new(m: &SparseSymMatrix) -> Result<Self> {
        if !m.symmetric {
            return Err(invalid("Cholesky factorization needs a symmetric matrix"));
        }
        let n = m.dim;
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in m.row(old) {
                first[new] = first[new].min(inv[j]);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; offsets[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in m.row(old) {
                let col = inv[j];
                if col <= new {
                    values[offsets[new] + col - first[new]] = v;
                }
            }
        }
        for i in 0..n {
            let (fi, oi) = (first[i], offsets[i]);
            for j in fi..i {
                let (fj, oj) = (first[j], offsets[j]);
                let k0 = fi.max(fj);
                let mut s = values[oi + j - fi];
                let li = &values[oi + k0 - fi..oi + j - fi];
                let lj = &values[oj + k0 - fj..oj + j - fj];
                s -= li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>();
                values[oi + j - fi] = s / values[oj + j - fj];
            }
            let row = &values[oi..oi + i - fi];
            let d = values[oi + i - fi] - row.iter().map(|a| a * a).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SolverFailure {
                    residual: f64::NAN,
                    reason: format!(
                        "matrix is not positive definite (pivot {d:e} at row {})",
                        perm[i]
                    ),
                });
            }
            values[oi + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            offsets,
            values,
        })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        assert_eq!(rhs.len(), n);
        let mut z: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        for i in 0..n {
            let (fi, oi) = (self.first[i], self.offsets[i]);
            let row = &self.values[oi..oi + i - fi];
            let s: f64 = row.iter().zip(&z[fi..i]).map(|(a, b)| a * b).sum();
            z[i] = (z[i] - s) / self.values[oi + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, oi) = (self.first[i], self.offsets[i]);
            z[i] /= self.values[oi + i - fi];
            let xi = z[i];
            for (zj, l) in z[fi..i].iter_mut().zip(&self.values[oi..oi + i - fi]) {
                *zj -= l * xi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = z[new];
        }
        x
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Solves `M x = rhs` for SPD `M` with `‖Mx − rhs‖₂ ≤ rel_tol ‖rhs‖₂`.
pub fn solve_spd(matrix: &SparseSymMatrix, rhs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let factor = matrix.factor()?;
    solve_factored(matrix, &factor, rhs, rel_tol)
}

/// Like [`solve_spd`] with a precomputed factorization of `matrix`.
pub fn solve_factored(
    matrix: &SparseSymMatrix,
    factor: &EnvelopeCholesky,
    rhs: &[f64],
    rel_tol: f64,
) -> Result<Vec<f64>> {
    if !(rel_tol > 0.0 && rel_tol <= 1e-6) {
        return Err(invalid(format!(
            "rel_tol must lie in (0, 1e-6], got {rel_tol}"
        )));
    }
    if rhs.len() != matrix.dim {
        return Err(invalid(format!(
            "right-hand side has length {}, matrix dimension is {}",
            rhs.len(),
            matrix.dim
        )));
    }
    let (x, residual) = refine(matrix, factor, rhs, rel_tol);
    if residual <= rel_tol {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            residual,
            reason: "iterative refinement did not reach the tolerance".into(),
        })
    }
}

/// Solves with `rel_tol` as the target but accepts any solution whose relative
/// residual is at most `floor`. Ill-conditioned Jacobians stall slightly above
/// tight targets in double precision.
pub(crate) fn solve_spd_relaxed(
    matrix: &SparseSymMatrix,
    rhs: &[f64],
    rel_tol: f64,
    floor: f64,
) -> Result<Vec<f64>> {
    if rhs.len() != matrix.dim {
        return Err(invalid("right-hand side does not match the matrix"));
    }
    let factor = matrix.factor()?;
    let (x, residual) = refine(matrix, &factor, rhs, rel_tol);
    if residual <= floor.max(rel_tol) {
        Ok(x)
    } else {
        Err(Error::SolverFailure {
            residual,
            reason: "iterative refinement stalled above the accepted floor".into(),
        })
    }
}

/// Iterative refinement in working precision; returns the iterate with the
/// smallest relative residual.
fn refine(
    matrix: &SparseSymMatrix,
    factor: &EnvelopeCholesky,
    rhs: &[f64],
    rel_tol: f64,
) -> (Vec<f64>, f64) {
    let scale = norm2(rhs);
    if scale == 0.0 {
        return (vec![0.0; rhs.len()], 0.0);
    }
    let mut x = factor.solve(rhs);
    let mut best = (x.clone(), f64::INFINITY);
    for _ in 0..5 {
        let r: Vec<f64> = rhs
            .iter()
            .zip(matrix.mul_vec(&x))
            .map(|(b, ax)| b - ax)
            .collect();
        let residual = norm2(&r) / scale;
        if residual < best.1 {
            best = (x.clone(), residual);
        }
        if residual <= rel_tol {
            break;
        }
        let dx = factor.solve(&r);
        x.iter_mut().zip(dx).for_each(|(a, d)| *a += d);
    }
    best
}
