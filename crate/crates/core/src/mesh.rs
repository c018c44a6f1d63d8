//! Conforming triangulations of the unit square and of a four-leaf clover.
//!
//! Every mesh is immutable after construction. Element geometry (areas and
//! basis-function gradients) is computed once in [`Mesh::new`]; the sparse
//! matrix pattern used by the assembly routines is built lazily on first use.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 2];

/// Area and constant P1 basis gradients of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

/// An undirected mesh edge with the number of incident triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub triangles: usize,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles == 1
    }
}

/// CSR adjacency of the vertex graph (diagonal included) together with the
/// CSR slot of each local (row, col) pair of every triangle.
#[derive(Debug)]
pub(crate) struct Pattern {
    pub row_offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub slots: Vec<[[usize; 3]; 3]>,
}

#[derive(Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    h_max: f64,
    edges: Vec<Edge>,
    geometry: Vec<ElementGeometry>,
    pattern: OnceLock<Pattern>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary: self.boundary.clone(),
            h_max: self.h_max,
            edges: self.edges.clone(),
            geometry: self.geometry.clone(),
            pattern: OnceLock::new(),
        }
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn collect_edges(nv: usize, triangles: &[[usize; 3]]) -> Result<Vec<Edge>> {
    let mut half: Vec<(usize, usize)> = Vec::with_capacity(3 * triangles.len());
    for tri in triangles {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if a >= nv || b >= nv {
                return Err(invalid(format!(
                    "triangle {tri:?} references a missing vertex"
                )));
            }
            if a == b {
                return Err(invalid(format!("degenerate triangle {tri:?}")));
            }
            half.push((a.min(b), a.max(b)));
        }
    }
    half.sort_unstable();
    let mut edges: Vec<Edge> = Vec::with_capacity(half.len() / 2 + 1);
    for (a, b) in half {
        match edges.last_mut() {
            Some(e) if e.vertices == [a, b] => e.triangles += 1,
            _ => edges.push(Edge {
                vertices: [a, b],
                triangles: 1,
            }),
        }
    }
    if let Some(e) = edges.iter().find(|e| e.triangles > 2) {
        return Err(invalid(format!(
            "edge {:?} is shared by {} triangles",
            e.vertices, e.triangles
        )));
    }
    Ok(edges)
}

impl Mesh {
    /// Builds a mesh from coordinates and counterclockwise triangles. Boundary
    /// flags and `h_max` are derived from the topology.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Mesh> {
        if triangles.is_empty() {
            return Err(invalid("mesh has no triangles"));
        }
        let edges = collect_edges(vertices.len(), &triangles)?;
        let mut boundary = vec![false; vertices.len()];
        let mut h_max: f64 = 0.0;
        for e in &edges {
            let [a, b] = e.vertices;
            if e.is_boundary() {
                boundary[a] = true;
                boundary[b] = true;
            }
            h_max = h_max.max(distance(vertices[a], vertices[b]));
        }
        let mut geometry = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let [p0, p1, p2] = tri.map(|i| vertices[i]);
            let area = signed_area(p0, p1, p2);
            if !(area > 0.0) {
                return Err(invalid(format!(
                    "triangle {t} {tri:?} has non-positive signed area {area:e}"
                )));
            }
            let s = 1.0 / (2.0 * area);
            let grads = [
                [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
            ];
            geometry.push(ElementGeometry { area, grads });
        }
        Ok(Mesh {
            vertices,
            triangles,
            boundary,
            h_max,
            edges,
            geometry,
            pattern: OnceLock::new(),
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, vertex: usize) -> bool {
        self.boundary[vertex]
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn geometry(&self) -> &[ElementGeometry] {
        &self.geometry
    }

    pub fn area(&self) -> f64 {
        self.geometry.iter().map(|g| g.area).sum()
    }

    /// Length of the polygonal boundary.
    pub fn perimeter(&self) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.is_boundary())
            .map(|e| distance(self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]))
            .sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Maps barycentric coordinates on triangle `t` to physical coordinates.
    pub fn map_point(&self, t: usize, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Euclidean distance from `x` to the closest boundary edge.
    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        self.edges
            .iter()
            .filter(|e| e.is_boundary())
            .map(|e| {
                let a = self.vertices[e.vertices[0]];
                let b = self.vertices[e.vertices[1]];
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let s = (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
                distance(x, [a[0] + s * d[0], a[1] + s * d[1]])
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn pattern(&self) -> &Pattern {
        self.pattern.get_or_init(|| {
            let nv = self.vertices.len();
            let mut neighbors: Vec<Vec<usize>> = (0..nv).map(|i| vec![i]).collect();
            for e in &self.edges {
                let [a, b] = e.vertices;
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
            let mut row_offsets = Vec::with_capacity(nv + 1);
            let mut cols = Vec::new();
            row_offsets.push(0);
            for row in &mut neighbors {
                row.sort_unstable();
                cols.extend_from_slice(row);
                row_offsets.push(cols.len());
            }
            let slot = |r: usize, c: usize| {
                let range = row_offsets[r]..row_offsets[r + 1];
                range.start + cols[range].binary_search(&c).expect("edge in pattern")
            };
            let slots = self
                .triangles
                .iter()
                .map(|tri| {
                    let mut s = [[0; 3]; 3];
                    for a in 0..3 {
                        for b in 0..3 {
                            s[a][b] = slot(tri[a], tri[b]);
                        }
                    }
                    s
                })
                .collect();
            Pattern {
                row_offsets,
                cols,
                slots,
            }
        })
    }

    /// Re-checks every structural invariant by walking the edge table.
    pub fn validate(&self) -> Result<()> {
        let edges = collect_edges(self.vertices.len(), &self.triangles)?;
        let mut on_boundary = vec![false; self.vertices.len()];
        let mut h: f64 = 0.0;
        for e in &edges {
            if e.triangles == 0 || e.triangles > 2 {
                return Err(invalid(format!("edge {:?} is not manifold", e.vertices)));
            }
            if e.is_boundary() {
                on_boundary[e.vertices[0]] = true;
                on_boundary[e.vertices[1]] = true;
            }
            h = h.max(distance(
                self.vertices[e.vertices[0]],
                self.vertices[e.vertices[1]],
            ));
        }
        if on_boundary != self.boundary {
            return Err(invalid("boundary flags disagree with the edge table"));
        }
        if h != self.h_max {
            return Err(invalid("h_max disagrees with the longest edge"));
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            if !(signed_area(a, b, c) > 0.0) {
                return Err(invalid(format!("triangle {t} is not counterclockwise")));
            }
        }
        // Every vertex must be used by some triangle.
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for &i in tri {
                used[i] = true;
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(invalid(format!("vertex {i} is not part of any triangle")));
        }
        Ok(())
    }

    /// Serializes into the `ntri-mesh 1` ASCII format.
    pub fn to_ascii(&self) -> String {
        let mut out = String::new();
        out.push_str("ntri-mesh 1\n");
        let _ = writeln!(out, "{} {}", self.vertices.len(), self.triangles.len());
        for (p, &b) in self.vertices.iter().zip(&self.boundary) {
            let _ = writeln!(out, "{} {} {}", p[0], p[1], u8::from(b));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn from_ascii(text: &str) -> Result<Mesh> {
        let mut lines = text.lines();
        let bad = |msg: &str| Error::Parse(msg.to_string());
        if lines.next() != Some("ntri-mesh 1") {
            return Err(bad("missing 'ntri-mesh 1' header"));
        }
        let counts: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing counts line"))?
            .split(' ')
            .map(|s| s.parse().map_err(|_| bad("bad count")))
            .collect::<Result<_>>()?;
        let [nv, nt] = counts[..] else {
            return Err(bad("counts line must be 'V T'"));
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("truncated vertex block"))?;
            let f: Vec<&str> = line.split(' ').collect();
            let [x, y, b] = f[..] else {
                return Err(bad("vertex line must be 'x y b'"));
            };
            let x: f64 = x.parse().map_err(|_| bad("bad x coordinate"))?;
            let y: f64 = y.parse().map_err(|_| bad("bad y coordinate"))?;
            let b = match b {
                "0" => false,
                "1" => true,
                _ => return Err(bad("boundary flag must be 0 or 1")),
            };
            vertices.push([x, y]);
            flags.push(b);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines
                .next()
                .ok_or_else(|| bad("truncated triangle block"))?;
            let idx: Vec<usize> = line
                .split(' ')
                .map(|s| s.parse().map_err(|_| bad("bad vertex index")))
                .collect::<Result<_>>()?;
            let [i, j, k] = idx[..] else {
                return Err(bad("triangle line must be 'i j k'"));
            };
            triangles.push([i, j, k]);
        }
        if lines.any(|l| !l.is_empty()) {
            return Err(bad("trailing content after triangle block"));
        }
        let mesh = Mesh::new(vertices, triangles)?;
        if mesh.boundary != flags {
            return Err(bad("boundary flags do not match the mesh topology"));
        }
        Ok(mesh)
    }
}

/// Uniform triangulation of `[0,1]^2` with `n` cells per side, each cell cut
/// along its lower-left to upper-right diagonal.
pub fn unit_square_mesh(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(invalid("unit square mesh needs n >= 1"));
    }
    let m = n + 1;
    let mut vertices = Vec::with_capacity(m * m);
    for j in 0..m {
        for i in 0..m {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let v00 = j * m + i;
            let v10 = v00 + 1;
            let v01 = v00 + m;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Star-shaped clover outline `r(t) = radius * (1 + amplitude * cos(lobes * t))`
/// around `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloverShape {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
    pub lobes: u32,
}

impl Default for CloverShape {
    fn default() -> Self {
        CloverShape {
            center: [0.5, 0.5],
            radius: 0.35,
            amplitude: 0.3,
            lobes: 4,
        }
    }
}

impl CloverShape {
    pub fn boundary_radius(&self, t: f64) -> f64 {
        self.radius * (1.0 + self.amplitude * (self.lobes as f64 * t).cos())
    }

    /// Area enclosed by the smooth curve, `∫ r(t)^2 / 2 dt`.
    pub fn exact_area(&self) -> f64 {
        PI * self.radius * self.radius * (1.0 + 0.5 * self.amplitude * self.amplitude)
    }
}

/// Polar mesh of the default clover: a central fan followed by `rings - 1`
/// quadrilateral bands, each split into two triangles.
pub fn clover_mesh(rings: usize, sectors: usize) -> Result<Mesh> {
    clover_mesh_with(CloverShape::default(), rings, sectors)
}

pub fn clover_mesh_with(shape: CloverShape, rings: usize, sectors: usize) -> Result<Mesh> {
    if rings == 0 {
        return Err(invalid("clover mesh needs rings >= 1"));
    }
    if sectors < 8 || sectors % 4 != 0 {
        return Err(invalid(format!(
            "clover mesh needs sectors >= 8 and divisible by 4, got {sectors}"
        )));
    }
    if !(shape.radius > 0.0 && shape.amplitude.abs() < 1.0) {
        return Err(invalid(
            "clover outline must have positive radius everywhere",
        ));
    }
    let [cx, cy] = shape.center;
    let mut vertices = Vec::with_capacity(1 + rings * sectors);
    vertices.push(shape.center);
    for r in 1..=rings {
        let frac = r as f64 / rings as f64;
        for j in 0..sectors {
            let t = 2.0 * PI * j as f64 / sectors as f64;
            let rho = frac * shape.boundary_radius(t);
            vertices.push([cx + rho * t.cos(), cy + rho * t.sin()]);
        }
    }
    let ring = |r: usize, j: usize| 1 + (r - 1) * sectors + j % sectors;
    let mut triangles = Vec::with_capacity(sectors * (2 * rings - 1));
    for j in 0..sectors {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for r in 1..rings {
        for j in 0..sectors {
            let (i0, i1) = (ring(r, j), ring(r, j + 1));
            let (o0, o1) = (ring(r + 1, j), ring(r + 1, j + 1));
            triangles.push([i0, o0, o1]);
            triangles.push([i0, o1, i1]);
        }
    }
    Mesh::new(vertices, triangles)
}

/// Result of a uniform red refinement: the fine mesh plus, for every new
/// vertex, the coarse edge it bisects.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub mesh: Mesh,
    pub coarse_vertices: usize,
    pub midpoint_parents: Vec<[usize; 2]>,
}

impl Refinement {
    /// Transfers nodal values from the coarse mesh (exact for P1 functions).
    pub fn prolongate(&self, coarse: &[f64]) -> Vec<f64> {
        assert_eq!(coarse.len(), self.coarse_vertices);
        let mut fine = coarse.to_vec();
        fine.extend(
            self.midpoint_parents
                .iter()
                .map(|&[a, b]| 0.5 * (coarse[a] + coarse[b])),
        );
        fine
    }
}

/// Splits every triangle into four through its edge midpoints. Boundary
/// midpoints stay on the polygonal boundary.
pub fn refine_uniform(mesh: &Mesh) -> Refinement {
    let nv = mesh.num_vertices();
    let mut vertices = mesh.vertices.clone();
    let mut midpoint_parents = Vec::with_capacity(mesh.edges.len());
    for e in &mesh.edges {
        let [a, b] = e.vertices;
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        midpoint_parents.push([a, b]);
    }
    let mid = |a: usize, b: usize| {
        let key = [a.min(b), a.max(b)];
        nv + mesh
            .edges
            .binary_search_by(|e| e.vertices.cmp(&key))
            .expect("edge of an existing triangle")
    };
    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for &[a, b, c] in &mesh.triangles {
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mesh = Mesh::new(vertices, triangles).expect("refinement of a valid mesh is valid");
    Refinement {
        mesh,
        coarse_vertices: nv,
        midpoint_parents,
    }
}
