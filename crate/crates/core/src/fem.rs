//! Piecewise-linear finite elements for the Neumann Laplacian on `φ(source)`.
//!
//! The source domain is triangulated with a structured mesh, the vertices
//! are pushed through the map, and the weak problem
//! `∫ ∇u·∇v = μ ∫ u v` is discretized with P1 elements. The smallest
//! eigenvalues of the resulting generalized problem `S v = μ M v` converge
//! to the Neumann spectrum as the mesh is refined.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::maps::{Family, MapError, PlanarMap, Source};
use crate::sparse::{CsrMatrix, EnvelopeCholesky};

/// Largest system solved with the dense eigensolver.
pub const DENSE_LIMIT: usize = 1000;
/// Residual bound `‖Sv − μMv‖ / ‖Mv‖` enforced on every returned pair.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;
/// Extra meshes tried one level finer when a pushed mesh folds.
pub const FOLD_RETRIES: u32 = 2;
const MAX_ITERATIONS: usize = 400;
const GUARD_VECTORS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("triangle {index} has non-positive area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("image triangle {index} is folded (signed area {area:e})")]
    FoldedTriangle { index: usize, area: f64 },
    #[error("edge ({a}, {b}) is shared by {count} triangles")]
    NonManifoldEdge { a: usize, b: usize, count: usize },
    #[error("triangle {index} references vertex {vertex} out of range")]
    BadIndex { index: usize, vertex: usize },
    #[error("eigensolver stagnated: residual {residual:e} after {iterations} iterations")]
    SolverStagnation { residual: f64, iterations: usize },
    #[error("stiffness matrix is singular beyond the constant mode (pivot {0:e})")]
    SingularStiffness(f64),
    #[error("at least {0} eigenpairs are required")]
    TooFewPairs(usize),
    #[error("levels {0:?} do not contain two refinements")]
    InvalidLevels(RangeInclusive<u32>),
    #[error("mesh format error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

impl From<io::Error> for FemError {
    fn from(e: io::Error) -> Self {
        FemError::Io(e.to_string())
    }
}

// ---------------------------------------------------------------------------
// Meshes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub source: Source,
    pub level: u32,
    /// Description of the map pushed through, if any.
    pub map: Option<String>,
    /// Whether the mesh was refined around a cusp preimage.
    pub graded: bool,
}

/// Triangle mesh with counter-clockwise triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// Smallest interior angle, in degrees.
    pub min_angle: f64,
    pub provenance: Provenance,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn triangle_min_angle(p: [[f64; 2]; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b, c) = (p[i], p[(i + 1) % 3], p[(i + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cross = u[0] * v[1] - u[1] * v[0];
            let dot = u[0] * v[0] + u[1] * v[1];
            cross.abs().atan2(dot).to_degrees()
        })
        .fold(f64::INFINITY, f64::min)
}

impl TriMesh {
    fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
        provenance: Provenance,
    ) -> Self {
        let mut mesh = TriMesh {
            vertices,
            triangles,
            boundary,
            min_angle: 0.0,
            provenance,
        };
        mesh.min_angle = mesh.compute_min_angle();
        mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        let areas: Vec<f64> = (0..self.triangle_count())
            .map(|t| self.signed_area(t))
            .collect();
        crate::quadrature::pairwise_sum(&areas)
    }

    fn compute_min_angle(&self) -> f64 {
        (0..self.triangle_count())
            .map(|t| triangle_min_angle(self.corners(t)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks indices, positive orientation and that every edge borders one
    /// triangle (boundary) or two (interior), with boundary flags matching.
    pub fn validate(&self) -> Result<(), FemError> {
        let n = self.vertex_count();
        for (index, tri) in self.triangles.iter().enumerate() {
            if let Some(&vertex) = tri.iter().find(|&&v| v >= n) {
                return Err(FemError::BadIndex { index, vertex });
            }
            let area = self.signed_area(index);
            if !(area > 0.0) {
                return Err(FemError::DegenerateTriangle { index, area });
            }
        }
        let mut on_boundary = vec![false; n];
        for ((a, b), count) in self.edge_counts() {
            match count {
                1 => {
                    on_boundary[a] = true;
                    on_boundary[b] = true;
                }
                2 => {}
                _ => return Err(FemError::NonManifoldEdge { a, b, count }),
            }
        }
        if let Some(v) = (0..n).find(|&v| on_boundary[v] != self.boundary[v]) {
            return Err(FemError::Parse {
                line: 0,
                message: format!("boundary flag of vertex {v} disagrees with the edge structure"),
            });
        }
        Ok(())
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for tri in &self.triangles {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Writes the plain-text mesh format: a header line
    /// `VERTICES n / TRIANGLES m`, `n` lines `x y flag`, then `m` lines
    /// `i j k` with 0-based indices.
    pub fn write_text(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(
            out,
            "VERTICES {} / TRIANGLES {}",
            self.vertex_count(),
            self.triangle_count()
        )?;
        for (v, b) in self.vertices.iter().zip(&self.boundary) {
            writeln!(out, "{} {} {}", v[0], v[1], u8::from(*b))?;
        }
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads the format written by [`TriMesh::write_text`]. Provenance is not
    /// part of the format; the caller supplies it.
    pub fn read_text(input: impl BufRead, provenance: Provenance) -> Result<Self, FemError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), FemError> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(FemError::Parse {
                    line: 0,
                    message: format!("unexpected end of input, expected {what}"),
                }),
            }
        };
        let bad = |line: usize, message: String| FemError::Parse { line, message };

        let (ln, header) = next("header")?;
        let words: Vec<&str> = header.split_whitespace().collect();
        let (nv, nt) = match words.as_slice() {
            ["VERTICES", n, "/", "TRIANGLES", m] => (
                n.parse::<usize>().map_err(|e| bad(ln, e.to_string()))?,
                m.parse::<usize>().map_err(|e| bad(ln, e.to_string()))?,
            ),
            _ => return Err(bad(ln, format!("bad header {header:?}"))),
        };
        let mut vertices = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, line) = next("vertex")?;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(ln, "expected `x y flag`".into()));
            }
            let x = f[0].parse::<f64>().map_err(|e| bad(ln, e.to_string()))?;
            let y = f[1].parse::<f64>().map_err(|e| bad(ln, e.to_string()))?;
            let flag = match f[2] {
                "0" => false,
                "1" => true,
                other => return Err(bad(ln, format!("bad boundary flag {other:?}"))),
            };
            vertices.push([x, y]);
            boundary.push(flag);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, line) = next("triangle")?;
            let idx: Result<Vec<usize>, _> = line.split_whitespace().map(str::parse).collect();
            match idx.map_err(|e| bad(ln, e.to_string()))?.as_slice() {
                &[i, j, k] if i < nv && j < nv && k < nv => triangles.push([i, j, k]),
                &[_, _, _] => return Err(bad(ln, format!("vertex index out of range 0..{nv}"))),
                _ => return Err(bad(ln, "expected `i j k`".into())),
            }
        }
        let mesh = TriMesh::new(vertices, triangles, boundary, provenance);
        mesh.validate()?;
        Ok(mesh)
    }
}

/// Rings (disc) or cells per side (square) at a refinement level.
pub fn divisions(level: u32) -> usize {
    1usize << (level + 2)
}

/// Structured triangulation of the source domain.
///
/// The disc uses `N = 2^(level+2)` concentric rings with `6i` vertices on
/// ring `i`, stitched into `6N²` triangles around a central hexagon. The
/// square uses `N × N` cells each split by both diagonals.
pub fn build_source_mesh(source: Source, level: u32) -> TriMesh {
    let provenance = Provenance {
        source,
        level,
        map: None,
        graded: false,
    };
    let n = divisions(level);
    match source {
        Source::UnitDisc => disc_mesh(n, provenance),
        Source::CenteredSquare => square_mesh(n, provenance),
    }
}

fn disc_mesh(n: usize, provenance: Provenance) -> TriMesh {
    let ring_start = |i: usize| if i == 0 { 0 } else { 1 + 3 * i * (i - 1) };
    let mut vertices = vec![[0.0, 0.0]];
    let mut boundary = vec![n == 0];
    for i in 1..=n {
        let r = i as f64 / n as f64;
        let m = 6 * i;
        for j in 0..m {
            let t = 2.0 * PI * j as f64 / m as f64;
            vertices.push(if i == n {
                [t.cos(), t.sin()]
            } else {
                [r * t.cos(), r * t.sin()]
            });
            boundary.push(i == n);
        }
    }
    let mut triangles = Vec::with_capacity(6 * n * n);
    for i in 1..=n {
        let inner = |s: usize, j: usize| {
            if i == 1 {
                0
            } else {
                ring_start(i - 1) + (s * (i - 1) + j) % (6 * (i - 1))
            }
        };
        let outer = |s: usize, j: usize| ring_start(i) + (s * i + j) % (6 * i);
        for s in 0..6 {
            for j in 0..i {
                triangles.push([outer(s, j), outer(s, j + 1), inner(s, j)]);
                if j + 1 < i {
                    triangles.push([inner(s, j), outer(s, j + 1), inner(s, j + 1)]);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles, boundary, provenance)
}

fn square_mesh(n: usize, provenance: Provenance) -> TriMesh {
    let a = Source::SQUARE_HALF_SIDE;
    let h = 2.0 * a / n as f64;
    let corner = |i: usize, j: usize| i * (n + 1) + j;
    let center = |i: usize, j: usize| (n + 1) * (n + 1) + i * n + j;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    let mut boundary = Vec::with_capacity(vertices.capacity());
    for i in 0..=n {
        for j in 0..=n {
            vertices.push([-a + j as f64 * h, -a + i as f64 * h]);
            boundary.push(i == 0 || j == 0 || i == n || j == n);
        }
    }
    for i in 0..n {
        for j in 0..n {
            vertices.push([-a + (j as f64 + 0.5) * h, -a + (i as f64 + 0.5) * h]);
            boundary.push(false);
        }
    }
    let mut triangles = Vec::with_capacity(4 * n * n);
    for i in 0..n {
        for j in 0..n {
            let c = center(i, j);
            let (sw, se) = (corner(i, j), corner(i, j + 1));
            let (nw, ne) = (corner(i + 1, j), corner(i + 1, j + 1));
            triangles.extend([[sw, se, c], [se, ne, c], [ne, nw, c], [nw, sw, c]]);
        }
    }
    TriMesh::new(vertices, triangles, boundary, provenance)
}

/// Red-green refinement of every triangle with a vertex within `radius` of
/// `center`. Red triangles split into four; neighbours with one split edge
/// are bisected, those with two or more are turned red. On the disc, new
/// boundary vertices are projected onto the circle.
pub fn refine_near(mesh: &TriMesh, center: [f64; 2], radius: f64) -> TriMesh {
    let near = |v: usize| {
        let p = mesh.vertices[v];
        (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
    };
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut red: Vec<bool> = mesh
        .triangles
        .iter()
        .map(|t| t.iter().any(|&v| near(v)))
        .collect();
    let mut split: HashMap<(usize, usize), usize> = HashMap::new();
    loop {
        split.clear();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if red[t] {
                for i in 0..3 {
                    split.insert(key(tri[i], tri[(i + 1) % 3]), usize::MAX);
                }
            }
        }
        let mut changed = false;
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if !red[t] {
                let hanging = (0..3)
                    .filter(|&i| split.contains_key(&key(tri[i], tri[(i + 1) % 3])))
                    .count();
                if hanging >= 2 {
                    red[t] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let edge_counts = mesh.edge_counts();
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut edges: Vec<(usize, usize)> = split.keys().copied().collect();
    edges.sort_unstable();
    for (a, b) in edges {
        let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
        let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        let on_boundary = edge_counts[&(a, b)] == 1;
        if on_boundary && mesh.provenance.source == Source::UnitDisc {
            let r = m[0].hypot(m[1]);
            m = [m[0] / r, m[1] / r];
        }
        split.insert((a, b), vertices.len());
        vertices.push(m);
        boundary.push(on_boundary);
    }

    let mut triangles = Vec::with_capacity(mesh.triangle_count() + 3 * split.len());
    for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
        let mid = |x: usize, y: usize| split.get(&key(x, y)).copied();
        if red[t] {
            let (ab, bc, ca) = (mid(a, b).unwrap(), mid(b, c).unwrap(), mid(c, a).unwrap());
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        } else if let Some(m) = mid(a, b) {
            triangles.extend([[a, m, c], [m, b, c]]);
        } else if let Some(m) = mid(b, c) {
            triangles.extend([[b, m, a], [m, c, a]]);
        } else if let Some(m) = mid(c, a) {
            triangles.extend([[c, m, b], [m, a, b]]);
        } else {
            triangles.push([a, b, c]);
        }
    }
    let provenance = Provenance {
        graded: true,
        ..mesh.provenance.clone()
    };
    TriMesh::new(vertices, triangles, boundary, provenance)
}

/// Image of `mesh` under `map`, vertex by vertex. Fails on the first
/// triangle whose image has non-positive signed area.
pub fn push_mesh(mesh: &TriMesh, map: &PlanarMap) -> Result<TriMesh, FemError> {
    let vertices: Vec<[f64; 2]> = mesh
        .vertices
        .par_iter()
        .map(|v| {
            map.evaluate(Complex64::new(v[0], v[1]))
                .map(|w| [w.re, w.im])
        })
        .collect::<Result<_, _>>()?;
    let image = TriMesh {
        vertices,
        triangles: mesh.triangles.clone(),
        boundary: mesh.boundary.clone(),
        min_angle: 0.0,
        provenance: Provenance {
            map: Some(map.describe()),
            ..mesh.provenance.clone()
        },
    };
    for t in 0..image.triangle_count() {
        let area = image.signed_area(t);
        if !(area > 0.0) {
            return Err(FemError::FoldedTriangle { index: t, area });
        }
    }
    let min_angle = image.compute_min_angle();
    Ok(TriMesh { min_angle, ..image })
}

/// Moves source vertices by `v ↦ |v|^(1/k - 1) v` so that a cardioid power
/// sees the vertices of the `k = 1` mesh. The image domain does not depend
/// on `k`, but the radial stretch of `|z|^(k-1) z` near the cusp folds
/// linear triangles once `k` exceeds about 3.4, at every level.
fn prewarp(mesh: &mut TriMesh, map: &PlanarMap) {
    if let Family::CardioidPower { k } = map.family() {
        if *k == 1.0 {
            return;
        }
        let e = 1.0 / k - 1.0;
        for v in &mut mesh.vertices {
            let r = v[0].hypot(v[1]);
            if r > 0.0 {
                let scale = r.powf(e);
                *v = [v[0] * scale, v[1] * scale];
            }
        }
    }
}

/// Source mesh at `level`, graded around the map's cusp preimage if it has
/// one, and pushed through the map. A folded image triggers a retry one
/// level finer, at most [`FOLD_RETRIES`] times.
pub fn mesh_for(map: &PlanarMap, level: u32) -> Result<TriMesh, FemError> {
    let mut last = None;
    for l in level..=level + FOLD_RETRIES {
        let mut source = build_source_mesh(map.source(), l);
        if let Some(c) = map.cusp_preimage() {
            source = refine_near(&source, [c.re, c.im], 2.0 / divisions(l) as f64);
        }
        prewarp(&mut source, map);
        match push_mesh(&source, map) {
            Ok(mesh) => return Ok(mesh),
            Err(e @ FemError::FoldedTriangle { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Element stiffness and mass matrices of a P1 triangle.
pub fn element_matrices(p: [[f64; 2]; 3]) -> Result<([[f64; 3]; 3], [[f64; 3]; 3]), f64> {
    let area = signed_area(p[0], p[1], p[2]);
    if !(area > 0.0) {
        return Err(area);
    }
    let b = [p[1][1] - p[2][1], p[2][1] - p[0][1], p[0][1] - p[1][1]];
    let c = [p[2][0] - p[1][0], p[0][0] - p[2][0], p[1][0] - p[0][0]];
    let scale = 1.0 / (4.0 * area);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = scale * (b[i] * b[j] + c[i] * c[j]);
            m[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    Ok((k, m))
}

/// Global stiffness and consistent mass matrices. Element matrices are
/// computed in parallel and summed in triangle order.
pub fn assemble(mesh: &TriMesh) -> Result<(CsrMatrix, CsrMatrix), FemError> {
    let locals: Vec<_> = (0..mesh.triangle_count())
        .into_par_iter()
        .map(|t| {
            element_matrices(mesh.corners(t))
                .map_err(|area| FemError::DegenerateTriangle { index: t, area })
        })
        .collect::<Result<_, _>>()?;
    let n = mesh.vertex_count();
    let mut ks = Vec::with_capacity(9 * locals.len());
    let mut ms = Vec::with_capacity(9 * locals.len());
    for (tri, (k, m)) in mesh.triangles.iter().zip(&locals) {
        for i in 0..3 {
            for j in 0..3 {
                ks.push((tri[i], tri[j], k[i][j]));
                ms.push((tri[i], tri[j], m[i][j]));
            }
        }
    }
    Ok((
        CsrMatrix::from_triplets(n, ks),
        CsrMatrix::from_triplets(n, ms),
    ))
}

// ---------------------------------------------------------------------------
// Eigenproblem
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Dense,
    SubspaceIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvergenceStatus {
    /// One level only; nothing to extrapolate.
    SingleLevel,
    Converged,
    /// Observed order outside `[1.5, 2.5]`; the finest raw value is used.
    NonMonotoneConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extrapolation {
    pub value: f64,
    /// `|finest − extrapolated|`.
    pub error: f64,
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: u32,
    pub dof: usize,
    pub triangles: usize,
    pub area: f64,
    pub min_angle: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub solver: SolverKind,
}

/// Smallest Neumann eigenvalues on one mesh, plus the extrapolation when
/// produced by [`converged_mu1`]. The eigenvalue fields describe the finest
/// level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    pub eigenvalues: Vec<f64>,
    pub dof: usize,
    pub mesh_level: u32,
    pub residuals: Vec<f64>,
    pub solver: SolverKind,
    pub extrapolated_mu1: Option<Extrapolation>,
    pub status: ConvergenceStatus,
    pub levels: Vec<LevelSummary>,
    #[serde(skip)]
    pub eigenvectors: Vec<Vec<f64>>,
}

impl SpectrumEstimate {
    pub fn mu0(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn mu1(&self) -> f64 {
        self.eigenvalues[1]
    }

    /// Value used in comparisons: the extrapolation when the observed order
    /// is acceptable, otherwise the finest raw `μ₁`.
    pub fn best_mu1(&self) -> f64 {
        match (&self.extrapolated_mu1, self.status) {
            (Some(e), ConvergenceStatus::Converged) => e.value,
            _ => self.mu1(),
        }
    }

    /// Uncertainty attached to [`SpectrumEstimate::best_mu1`].
    pub fn error_estimate(&self) -> f64 {
        match (&self.extrapolated_mu1, self.status) {
            (Some(e), ConvergenceStatus::Converged) => e.error,
            _ => self
                .levels
                .iter()
                .rev()
                .nth(1)
                .map_or(f64::INFINITY, |prev| (prev.mu1 - self.mu1()).abs()),
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `‖S v − μ M v‖ / ‖M v‖`.
pub fn residual(s: &CsrMatrix, m: &CsrMatrix, mu: f64, v: &[f64]) -> f64 {
    let sv = s.mul_vec(v);
    let mv = m.mul_vec(v);
    let r: Vec<f64> = sv.iter().zip(&mv).map(|(a, b)| a - mu * b).collect();
    norm(&r) / norm(&mv)
}

/// The `count` smallest eigenpairs of `S v = μ M v` for a Neumann stiffness
/// `S` (constants in its kernel) and a mass matrix `M`.
///
/// Systems of at most [`DENSE_LIMIT`] unknowns are solved densely. Larger
/// ones use subspace iteration with `S` pinned at its last unknown, applied
/// on the `M`-orthogonal complement of the constants, followed by a
/// Rayleigh–Ritz step. The constant pair is returned as `μ₀`, clamped at 0.
pub fn neumann_eigs(
    s: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
) -> Result<SpectrumEstimate, FemError> {
    if count < 2 {
        return Err(FemError::TooFewPairs(2));
    }
    let n = s.dim();
    let count = count.min(n);
    let (mut values, vectors, solver) = if n <= DENSE_LIMIT {
        // Dense eigenvectors are accurate to roundoff in the transformed
        // problem only; a few refinement sweeps bring the residual down.
        let block = (count - 1 + GUARD_VECTORS).min(n - 1);
        let (_, start) = dense_eigs(s, m, block + 1)?;
        let (v, x) = subspace_eigs(s, m, count, Some(start.into_iter().skip(1).collect()))?;
        (v, x, SolverKind::Dense)
    } else {
        let (v, x) = subspace_eigs(s, m, count, None)?;
        (v, x, SolverKind::SubspaceIteration)
    };
    values[0] = values[0].max(0.0);
    let residuals: Vec<f64> = values
        .iter()
        .zip(&vectors)
        .map(|(&mu, v)| residual(s, m, mu, v))
        .collect();
    if let Some(&worst) = residuals.iter().find(|&&r| !(r < RESIDUAL_TOLERANCE)) {
        return Err(FemError::SolverStagnation {
            residual: worst,
            iterations: MAX_ITERATIONS,
        });
    }
    Ok(SpectrumEstimate {
        eigenvalues: values,
        dof: n,
        mesh_level: 0,
        residuals,
        solver,
        extrapolated_mu1: None,
        status: ConvergenceStatus::SingleLevel,
        levels: Vec::new(),
        eigenvectors: vectors,
    })
}

fn dense_eigs(
    s: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), FemError> {
    let (sd, md) = (s.to_dense(), m.to_dense());
    let chol = md.cholesky().ok_or(FemError::SingularStiffness(0.0))?;
    let l = chol.l();
    // C = L⁻¹ S L⁻ᵀ
    let y = l.solve_lower_triangular(&sd).expect("nonsingular factor");
    let c = l
        .solve_lower_triangular(&y.transpose())
        .expect("nonsingular factor");
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lt = l.transpose();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for &i in order.iter().take(count) {
        let x = lt
            .solve_upper_triangular(&eig.eigenvectors.column(i).into_owned())
            .expect("nonsingular factor");
        let x: Vec<f64> = x.iter().copied().collect();
        // Polish with the Rayleigh quotient of the recovered vector.
        values.push(s.bilinear(&x, &x) / m.bilinear(&x, &x));
        vectors.push(x);
    }
    let mut pairs: Vec<_> = values.into_iter().zip(vectors).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn subspace_eigs(
    s: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
    start: Option<Vec<Vec<f64>>>,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), FemError> {
    let n = s.dim();
    let pinned = s.without(n - 1);
    let chol =
        EnvelopeCholesky::factor(&pinned).map_err(|e| FemError::SingularStiffness(e.pivot))?;

    let ones = vec![1.0; n];
    let scale = 1.0 / m.bilinear(&ones, &ones).sqrt();
    let constant: Vec<f64> = ones.iter().map(|v| v * scale).collect();
    let m_constant = m.mul_vec(&constant);
    let deflate = |x: &mut Vec<f64>| {
        let c = dot(&m_constant, x);
        for (xi, ci) in x.iter_mut().zip(&constant) {
            *xi -= c * ci;
        }
    };
    // x = S⁺ M b on the M-complement of the constants.
    let apply = |b: &[f64]| -> Vec<f64> {
        let rhs = m.mul_vec(b);
        let mut x = chol.solve(&rhs[..n - 1]);
        x.push(0.0);
        deflate(&mut x);
        x
    };

    let wanted = count - 1;
    let p = (wanted + GUARD_VECTORS).min(n - 1);
    let mut block: Vec<Vec<f64>> = match start {
        Some(mut block) => {
            block.iter_mut().for_each(|x| deflate(x));
            block
        }
        None => (0..p)
            .map(|j| {
                let mut x: Vec<f64> = (0..n)
                    .map(|i| {
                        let t = (i as f64 + 1.0) * (j as f64 + 1.0) * 0.618_033_988_749_895;
                        (t - t.floor()) - 0.5
                    })
                    .collect();
                deflate(&mut x);
                x
            })
            .collect(),
    };

    let mut worst = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let images: Vec<Vec<f64>> = block.iter().map(|x| apply(x)).collect();
        let (values, ritz) = rayleigh_ritz(s, m, &images);
        block = ritz;
        let previous = worst;
        worst = values
            .iter()
            .zip(&block)
            .take(wanted)
            .map(|(&mu, v)| residual(s, m, mu, v))
            .fold(0.0, f64::max);
        // Stop well below the tolerance, or below it once roundoff stalls
        // further progress.
        let stalled = worst < RESIDUAL_TOLERANCE && worst > 0.5 * previous;
        if worst < 0.01 * RESIDUAL_TOLERANCE || stalled {
            let mu0 = s.bilinear(&constant, &constant);
            let mut all_values = vec![mu0];
            all_values.extend_from_slice(&values[..wanted]);
            let mut all_vectors = vec![constant.clone()];
            all_vectors.extend(block.into_iter().take(wanted));
            return Ok((all_values, all_vectors));
        }
    }
    Err(FemError::SolverStagnation {
        residual: worst,
        iterations: MAX_ITERATIONS,
    })
}

/// Rayleigh–Ritz on the span of `basis`: ascending Ritz values and
/// `M`-normalized Ritz vectors.
fn rayleigh_ritz(s: &CsrMatrix, m: &CsrMatrix, basis: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = basis.len();
    let sb: Vec<Vec<f64>> = basis.iter().map(|x| s.mul_vec(x)).collect();
    let mb: Vec<Vec<f64>> = basis.iter().map(|x| m.mul_vec(x)).collect();
    let a = DMatrix::from_fn(p, p, |i, j| {
        0.5 * (dot(&basis[i], &sb[j]) + dot(&basis[j], &sb[i]))
    });
    let b = DMatrix::from_fn(p, p, |i, j| {
        0.5 * (dot(&basis[i], &mb[j]) + dot(&basis[j], &mb[i]))
    });
    // Orthonormalize through the eigendecomposition of B, which tolerates
    // nearly dependent columns.
    let be = SymmetricEigen::new(b);
    let bmax = be.eigenvalues.max();
    let keep: Vec<usize> = (0..p)
        .filter(|&i| be.eigenvalues[i] > 1e-14 * bmax)
        .collect();
    let w = DMatrix::from_fn(p, keep.len(), |r, c| {
        be.eigenvectors[(r, keep[c])] / be.eigenvalues[keep[c]].sqrt()
    });
    let reduced = w.transpose() * a * &w;
    let reduced = 0.5 * (&reduced + reduced.transpose());
    let eig = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let coeffs = w * &eig.eigenvectors;
    let n = basis[0].len();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; n];
            for (j, x) in basis.iter().enumerate() {
                let f = coeffs[(j, c)];
                for (vi, xi) in v.iter_mut().zip(x) {
                    *vi += f * xi;
                }
            }
            v
        })
        .collect();
    (values, vectors)
}

/// Eigenvalues of `φ(source)` on one mesh level.
pub fn spectrum_at_level(
    map: &PlanarMap,
    level: u32,
    count: usize,
) -> Result<(TriMesh, SpectrumEstimate), FemError> {
    let mesh = mesh_for(map, level)?;
    let (s, m) = assemble(&mesh)?;
    let mut est = neumann_eigs(&s, &m, count)?;
    est.mesh_level = mesh.provenance.level;
    est.levels.push(LevelSummary {
        level: mesh.provenance.level,
        dof: est.dof,
        triangles: mesh.triangle_count(),
        area: mesh.area(),
        min_angle: mesh.min_angle,
        mu0: est.mu0(),
        mu1: est.mu1(),
        solver: est.solver,
    });
    Ok((mesh, est))
}

/// Runs the oracle on every level in `levels` and Richardson-extrapolates
/// `μ₁` from the two finest, assuming `O(h²)` convergence. With three or more
/// levels the observed order is checked against `[1.5, 2.5]`.
pub fn converged_mu1(
    map: &PlanarMap,
    levels: RangeInclusive<u32>,
) -> Result<SpectrumEstimate, FemError> {
    if levels.is_empty() || levels.start() == levels.end() {
        return Err(FemError::InvalidLevels(levels));
    }
    let runs: Vec<SpectrumEstimate> = levels
        .clone()
        .into_par_iter()
        .map(|l| spectrum_at_level(map, l, 4).map(|(_, est)| est))
        .collect::<Result<_, _>>()?;
    let summaries: Vec<LevelSummary> = runs.iter().flat_map(|r| r.levels.clone()).collect();
    let mut finest = runs.into_iter().last().expect("two levels");
    let (extrapolation, status) = richardson(&summaries);
    finest.levels = summaries;
    finest.extrapolated_mu1 = Some(extrapolation);
    finest.status = status;
    Ok(finest)
}

/// Richardson extrapolation of the two finest levels. Mesh width halves per
/// level, so a level gap `d` means a width ratio `2^d`.
pub fn richardson(levels: &[LevelSummary]) -> (Extrapolation, ConvergenceStatus) {
    let n = levels.len();
    assert!(n >= 2);
    let (c, f) = (&levels[n - 2], &levels[n - 1]);
    let r2 = 4f64.powi((f.level - c.level) as i32);
    let value = (r2 * f.mu1 - c.mu1) / (r2 - 1.0);
    let mut observed_order = None;
    let mut status = ConvergenceStatus::Converged;
    if n >= 3 {
        let a = &levels[n - 3];
        let consecutive = c.level == a.level + 1 && f.level == c.level + 1;
        let ratio = (a.mu1 - c.mu1) / (c.mu1 - f.mu1);
        let order = ratio.log2();
        if consecutive && order.is_finite() {
            observed_order = Some(order);
        }
        if !(consecutive && (1.5..=2.5).contains(&order)) {
            status = ConvergenceStatus::NonMonotoneConvergence;
        }
    }
    let error = (f.mu1 - value).abs();
    (
        Extrapolation {
            value,
            error,
            observed_order,
        },
        status,
    )
}

/// Per-level table for human-readable output, 6 significant digits.
pub fn level_table(est: &SpectrumEstimate) -> String {
    let mut out =
        String::from("level      dof  triangles         area    min_angle          mu1\n");
    for l in &est.levels {
        let _ = writeln!(
            out,
            "{:>5} {:>8} {:>10} {:>12.6} {:>12.4} {:>12.6}",
            l.level, l.dof, l.triangles, l.area, l.min_angle, l.mu1
        );
    }
    out
}
