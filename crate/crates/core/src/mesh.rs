//! Conforming simplicial meshes over piecewise-affine mode regions.
//!
//! Generation is 2D: each convex region is fan-triangulated from the point of
//! its boundary loop nearest the origin (or from the origin itself when it is
//! interior), then longest-edge bisection refines until every triangle meets
//! the size field. Region boundaries are subdivided once and shared, so the
//! mesh conforms across switching surfaces, and the origin is always a vertex.

use crate::geom::{self, Point2};
use crate::model::{Finding, PwaSystem, Severity};
use crate::{TOL_DET, TOL_GEO};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed mesh file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("simplex {0} is degenerate (scaled volume below threshold)")]
    Degenerate(usize),
    #[error("facet shared by more than two simplexes near vertex {0}")]
    NonManifold(usize),
    #[error("scaled size field {rho:.6} fell below the minimum {rho_min:.6}")]
    MinimumSize { rho: f64, rho_min: f64 },
    #[error("refinement produced more than {0} simplexes")]
    TooFine(usize),
    #[error("mesh generation is implemented for 2D systems, got n = {0}")]
    NotTwoD(usize),
    #[error("{0}")]
    Invalid(String),
}

/// Target edge length over the domain. Constant for now; callers evaluate it
/// at simplex centroids so a spatially varying field can slot in later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeField {
    pub value: f64,
}

impl SizeField {
    pub fn constant(value: f64) -> Self {
        Self { value }
    }

    pub fn eval(&self, _x: &[f64]) -> f64 {
        self.value
    }

    pub fn min_value(&self) -> f64 {
        self.value
    }

    pub fn scaled(&self, gamma: f64) -> Self {
        Self { value: self.value * gamma }
    }
}

/// One simplex: vertex ids (origin first when the origin is a vertex), the
/// active mode, and the cached shape matrix `X_i` with rows `x_j - x_0`.
#[derive(Debug, Clone)]
pub struct Simplex {
    pub vertices: Vec<usize>,
    pub mode: usize,
    pub shape: DMatrix<f64>,
    pub shape_inv: DMatrix<f64>,
}

/// Facets lying on the switching surface between two modes.
#[derive(Debug, Clone)]
pub struct ConstraintSurface {
    pub modes: (usize, usize),
    /// Pairs `(simplex, local facet)`, the facet being opposite that local vertex.
    pub facets: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    pub dim: usize,
    pub vertices: Vec<DVector<f64>>,
    pub simplexes: Vec<Simplex>,
    /// Id of the origin vertex, when the origin is part of the mesh.
    pub origin_vertex: Option<usize>,
    /// Per simplex, per local facet: the simplex across it.
    pub neighbors: Vec<Vec<Option<usize>>>,
    pub boundary_vertex: Vec<bool>,
    pub constraint_surfaces: Vec<ConstraintSurface>,
    /// Size field the mesh was generated under; absent for imported meshes.
    pub size: Option<SizeField>,
    locator: Option<GridIndex>,
}

#[derive(Debug, Clone)]
struct GridIndex {
    min: Point2,
    inv_cell: Point2,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Triangulation {
    /// Builds a mesh from raw vertex/simplex data, canonicalizing origin-first
    /// vertex order and deriving adjacency, boundary flags, and surfaces.
    pub fn from_parts(
        vertices: Vec<DVector<f64>>,
        simplexes: Vec<(Vec<usize>, usize)>,
    ) -> Result<Self, MeshError> {
        if vertices.is_empty() || simplexes.is_empty() {
            return Err(MeshError::Invalid("mesh needs vertices and simplexes".into()));
        }
        let dim = vertices[0].len();
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(MeshError::Invalid("vertices have mixed dimensions".into()));
        }
        let origin_vertex = vertices.iter().position(|v| v.norm() <= TOL_GEO);

        let mut sims = Vec::with_capacity(simplexes.len());
        for (k, (mut ids, mode)) in simplexes.into_iter().enumerate() {
            if ids.len() != dim + 1 {
                return Err(MeshError::Invalid(format!("simplex {k} has {} vertices", ids.len())));
            }
            if ids.iter().any(|&v| v >= vertices.len()) {
                return Err(MeshError::Invalid(format!("simplex {k} references a missing vertex")));
            }
            if let Some(o) = origin_vertex {
                if let Some(pos) = ids.iter().position(|&v| v == o) {
                    // Cyclic rotation keeps 2D orientation while making the
                    // origin local vertex 0.
                    ids.rotate_left(pos);
                }
            }
            let (shape, shape_inv) = shape_matrices(&vertices, &ids, k)?;
            sims.push(Simplex { vertices: ids, mode, shape, shape_inv });
        }

        let neighbors = build_neighbors(&sims, dim)?;
        let boundary_vertex = build_boundary_flags(&sims, &neighbors, vertices.len(), dim);
        let constraint_surfaces = build_surfaces(&sims, &neighbors, dim);
        let locator = if dim == 2 { Some(GridIndex::build(&vertices, &sims)) } else { None };
        Ok(Self {
            dim,
            vertices,
            simplexes: sims,
            origin_vertex,
            neighbors,
            boundary_vertex,
            constraint_surfaces,
            size: None,
            locator,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_simplexes(&self) -> usize {
        self.simplexes.len()
    }

    pub fn centroid(&self, i: usize) -> DVector<f64> {
        let ids = &self.simplexes[i].vertices;
        let mut c = DVector::zeros(self.dim);
        for &v in ids {
            c += &self.vertices[v];
        }
        c / (ids.len() as f64)
    }

    pub fn simplex_volume(&self, i: usize) -> f64 {
        let det = self.simplexes[i].shape.determinant();
        let mut fact = 1.0;
        for k in 2..=self.dim {
            fact *= k as f64;
        }
        det.abs() / fact
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.simplexes.len()).map(|i| self.simplex_volume(i)).sum()
    }

    pub fn max_edge(&self, i: usize) -> f64 {
        let ids = &self.simplexes[i].vertices;
        let mut best = 0.0_f64;
        for a in 0..ids.len() {
            for b in (a + 1)..ids.len() {
                best = best.max((&self.vertices[ids[a]] - &self.vertices[ids[b]]).norm());
            }
        }
        best
    }

    /// Barycentric coordinates of `x` in simplex `i`, leading coordinate first.
    pub fn barycentric(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let s = &self.simplexes[i];
        let x0 = &self.vertices[s.vertices[0]];
        let rhs = x - x0;
        let lam_rest = s.shape_inv.transpose() * rhs;
        let mut lam = DVector::zeros(self.dim + 1);
        let mut sum = 0.0;
        for j in 0..self.dim {
            lam[j + 1] = lam_rest[j];
            sum += lam_rest[j];
        }
        lam[0] = 1.0 - sum;
        lam
    }

    fn simplex_contains(&self, i: usize, x: &DVector<f64>) -> bool {
        if self.dim == 2 {
            // Hand-rolled 2x2 solve to keep the hot locate path allocation-free.
            let s = &self.simplexes[i];
            let x0 = &self.vertices[s.vertices[0]];
            let r0 = x[0] - x0[0];
            let r1 = x[1] - x0[1];
            let inv = &s.shape_inv;
            let l1 = inv[(0, 0)] * r0 + inv[(1, 0)] * r1;
            let l2 = inv[(0, 1)] * r0 + inv[(1, 1)] * r1;
            let l0 = 1.0 - l1 - l2;
            let lo = -TOL_GEO;
            let hi = 1.0 + TOL_GEO;
            l0 >= lo && l0 <= hi && l1 >= lo && l1 <= hi && l2 >= lo && l2 <= hi
        } else {
            let lam = self.barycentric(i, x);
            lam.iter().all(|&l| (-TOL_GEO..=1.0 + TOL_GEO).contains(&l))
        }
    }

    /// Every simplex whose closed set contains `x`, ascending by index.
    pub fn locate(&self, x: &DVector<f64>) -> Vec<usize> {
        match (&self.locator, self.dim) {
            (Some(grid), 2) => {
                let mut out: Vec<usize> =
                    grid.candidates([x[0], x[1]])
                        .iter()
                        .copied()
                        .filter(|&i| self.simplex_contains(i, x))
                        .collect();
                out.sort_unstable();
                out.dedup();
                out
            }
            _ => (0..self.simplexes.len()).filter(|&i| self.simplex_contains(i, x)).collect(),
        }
    }

    pub fn boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.boundary_vertex[v]).collect()
    }

    /// 2D triangle as a ccw point list, for clipping and plotting.
    pub fn triangle_polygon(&self, i: usize) -> Vec<Point2> {
        assert_eq!(self.dim, 2);
        let ids = &self.simplexes[i].vertices;
        let mut poly: Vec<Point2> =
            ids.iter().map(|&v| [self.vertices[v][0], self.vertices[v][1]]).collect();
        if geom::polygon_signed_area(&poly) < 0.0 {
            poly.reverse();
        }
        poly
    }
}

fn shape_matrices(
    vertices: &[DVector<f64>],
    ids: &[usize],
    which: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>), MeshError> {
    let dim = vertices[ids[0]].len();
    let x0 = &vertices[ids[0]];
    let mut shape = DMatrix::zeros(dim, dim);
    let mut scale = 1.0;
    for j in 1..=dim {
        let edge = &vertices[ids[j]] - x0;
        scale *= edge.norm();
        shape.row_mut(j - 1).copy_from(&edge.transpose());
    }
    let det = shape.determinant();
    if scale <= 0.0 || det.abs() / scale <= TOL_DET {
        return Err(MeshError::Degenerate(which));
    }
    let shape_inv = shape
        .clone()
        .try_inverse()
        .ok_or(MeshError::Degenerate(which))?;
    Ok((shape, shape_inv))
}

fn facet_key(ids: &[usize], skip: usize) -> Vec<usize> {
    let mut key: Vec<usize> =
        ids.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, &v)| v).collect();
    key.sort_unstable();
    key
}

fn build_neighbors(sims: &[Simplex], dim: usize) -> Result<Vec<Vec<Option<usize>>>, MeshError> {
    let mut by_facet: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
    for (i, s) in sims.iter().enumerate() {
        for j in 0..=dim {
            by_facet.entry(facet_key(&s.vertices, j)).or_default().push((i, j));
        }
    }
    let mut neighbors = vec![vec![None; dim + 1]; sims.len()];
    for (key, incident) in &by_facet {
        match incident.as_slice() {
            [_] => {}
            [(i, ji), (k, jk)] => {
                neighbors[*i][*ji] = Some(*k);
                neighbors[*k][*jk] = Some(*i);
            }
            _ => return Err(MeshError::NonManifold(key[0])),
        }
    }
    Ok(neighbors)
}

fn build_boundary_flags(
    sims: &[Simplex],
    neighbors: &[Vec<Option<usize>>],
    num_vertices: usize,
    dim: usize,
) -> Vec<bool> {
    let mut flags = vec![false; num_vertices];
    for (i, s) in sims.iter().enumerate() {
        for j in 0..=dim {
            if neighbors[i][j].is_none() {
                for (k, &v) in s.vertices.iter().enumerate() {
                    if k != j {
                        flags[v] = true;
                    }
                }
            }
        }
    }
    flags
}

fn build_surfaces(
    sims: &[Simplex],
    neighbors: &[Vec<Option<usize>>],
    dim: usize,
) -> Vec<ConstraintSurface> {
    let mut by_pair: Vec<((usize, usize), Vec<(usize, usize)>)> = Vec::new();
    for (i, s) in sims.iter().enumerate() {
        for j in 0..=dim {
            if let Some(k) = neighbors[i][j] {
                let other = sims[k].mode;
                // Record each switching facet once, from the lower-mode side.
                if s.mode < other {
                    let pair = (s.mode, other);
                    match by_pair.iter_mut().find(|(p, _)| *p == pair) {
                        Some((_, facets)) => facets.push((i, j)),
                        None => by_pair.push((pair, vec![(i, j)])),
                    }
                }
            }
        }
    }
    by_pair.sort_by_key(|(p, _)| *p);
    by_pair
        .into_iter()
        .map(|(modes, facets)| ConstraintSurface { modes, facets })
        .collect()
}

impl GridIndex {
    fn build(vertices: &[DVector<f64>], sims: &[Simplex]) -> Self {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for v in vertices {
            for d in 0..2 {
                min[d] = min[d].min(v[d]);
                max[d] = max[d].max(v[d]);
            }
        }
        let side = (sims.len() as f64).sqrt().ceil() as usize;
        let nx = side.clamp(1, 128);
        let ny = side.clamp(1, 128);
        let w = (max[0] - min[0]).max(1e-12);
        let h = (max[1] - min[1]).max(1e-12);
        let inv_cell = [nx as f64 / w, ny as f64 / h];
        let mut buckets = vec![Vec::new(); nx * ny];
        let pad = 1e-6;
        for (i, s) in sims.iter().enumerate() {
            let mut bmin = [f64::INFINITY; 2];
            let mut bmax = [f64::NEG_INFINITY; 2];
            for &v in &s.vertices {
                for d in 0..2 {
                    bmin[d] = bmin[d].min(vertices[v][d]);
                    bmax[d] = bmax[d].max(vertices[v][d]);
                }
            }
            let to_cell = |x: f64, d: usize, n: usize| -> usize {
                (((x - min[d]) * inv_cell[d]).floor().max(0.0) as usize).min(n - 1)
            };
            let cx0 = to_cell(bmin[0] - pad, 0, nx);
            let cx1 = to_cell(bmax[0] + pad, 0, nx);
            let cy0 = to_cell(bmin[1] - pad, 1, ny);
            let cy1 = to_cell(bmax[1] + pad, 1, ny);
            for cx in cx0..=cx1 {
                for cy in cy0..=cy1 {
                    buckets[cy * nx + cx].push(i);
                }
            }
        }
        Self { min, inv_cell, nx, ny, buckets }
    }

    fn candidates(&self, p: Point2) -> &[usize] {
        let cx = (((p[0] - self.min[0]) * self.inv_cell[0]).floor().max(0.0) as usize)
            .min(self.nx - 1);
        let cy = (((p[1] - self.min[1]) * self.inv_cell[1]).floor().max(0.0) as usize)
            .min(self.ny - 1);
        &self.buckets[cy * self.nx + cx]
    }
}

// Editable triangle soup used by generation and local refinement.
struct EditMesh {
    verts: Vec<Point2>,
    vert_ids: HashMap<(u64, u64), usize>,
    tris: Vec<EditTri>,
    edge_map: HashMap<(usize, usize), Vec<usize>>,
}

#[derive(Clone, Copy)]
struct EditTri {
    v: [usize; 3],
    mode: usize,
    alive: bool,
}

fn point_key(p: Point2) -> (u64, u64) {
    let norm = |x: f64| if x == 0.0 { 0.0_f64 } else { x };
    (norm(p[0]).to_bits(), norm(p[1]).to_bits())
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl EditMesh {
    fn new() -> Self {
        Self {
            verts: Vec::new(),
            vert_ids: HashMap::new(),
            tris: Vec::new(),
            edge_map: HashMap::new(),
        }
    }

    fn add_vertex(&mut self, p: Point2) -> usize {
        let key = point_key(p);
        if let Some(&id) = self.vert_ids.get(&key) {
            return id;
        }
        let id = self.verts.len();
        self.verts.push(p);
        self.vert_ids.insert(key, id);
        id
    }

    fn add_triangle(&mut self, mut v: [usize; 3], mode: usize) -> usize {
        let poly = [self.verts[v[0]], self.verts[v[1]], self.verts[v[2]]];
        if geom::polygon_signed_area(&poly) < 0.0 {
            v.swap(1, 2);
        }
        let id = self.tris.len();
        self.tris.push(EditTri { v, mode, alive: true });
        for k in 0..3 {
            let e = edge_key(v[k], v[(k + 1) % 3]);
            self.edge_map.entry(e).or_default().push(id);
        }
        id
    }

    fn kill(&mut self, t: usize) {
        let v = self.tris[t].v;
        for k in 0..3 {
            let e = edge_key(v[k], v[(k + 1) % 3]);
            if let Some(list) = self.edge_map.get_mut(&e) {
                list.retain(|&x| x != t);
            }
        }
        self.tris[t].alive = false;
    }

    fn edge_len2(&self, a: usize, b: usize) -> f64 {
        let (a, b) = edge_key(a, b);
        let pa = self.verts[a];
        let pb = self.verts[b];
        let dx = pa[0] - pb[0];
        let dy = pa[1] - pb[1];
        dx * dx + dy * dy
    }

    /// Longest edge with a tie-break on vertex ids, so both triangles sharing
    /// an edge agree on whether it is their longest.
    fn longest_edge(&self, t: usize) -> (usize, usize) {
        let v = self.tris[t].v;
        let mut best = edge_key(v[0], v[1]);
        let mut best_len = self.edge_len2(v[0], v[1]);
        for &(a, b) in &[(v[1], v[2]), (v[2], v[0])] {
            let e = edge_key(a, b);
            let len = self.edge_len2(a, b);
            if len > best_len || (len == best_len && e > best) {
                best = e;
                best_len = len;
            }
        }
        best
    }

    fn neighbor_across(&self, t: usize, e: (usize, usize)) -> Option<usize> {
        self.edge_map
            .get(&e)?
            .iter()
            .copied()
            .find(|&u| u != t && self.tris[u].alive)
    }

    fn split_at(&mut self, t: usize, e: (usize, usize), mid: usize) {
        let EditTri { v, mode, .. } = self.tris[t];
        let apex = *v
            .iter()
            .find(|&&x| x != e.0 && x != e.1)
            .expect("edge does not belong to triangle");
        self.kill(t);
        self.add_triangle([apex, e.0, mid], mode);
        self.add_triangle([apex, mid, e.1], mode);
    }

    /// Longest-edge bisection of `t` with neighbor propagation until the mesh
    /// is conforming again.
    fn bisect(&mut self, t: usize) -> Result<(), MeshError> {
        let mut stack = vec![t];
        let mut guard = 0usize;
        while let Some(&top) = stack.last() {
            guard += 1;
            if guard > 100_000 {
                return Err(MeshError::Invalid("bisection propagation did not terminate".into()));
            }
            if !self.tris[top].alive {
                stack.pop();
                continue;
            }
            let e = self.longest_edge(top);
            match self.neighbor_across(top, e) {
                Some(u) if self.longest_edge(u) != e => stack.push(u),
                nbr => {
                    let mid_point = {
                        let pa = self.verts[e.0];
                        let pb = self.verts[e.1];
                        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
                    };
                    let mid = self.add_vertex(mid_point);
                    self.split_at(top, e, mid);
                    if let Some(u) = nbr {
                        self.split_at(u, e, mid);
                    }
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    fn into_triangulation(self) -> Result<Triangulation, MeshError> {
        let vertices: Vec<DVector<f64>> =
            self.verts.iter().map(|p| DVector::from_vec(vec![p[0], p[1]])).collect();
        let simplexes: Vec<(Vec<usize>, usize)> = self
            .tris
            .iter()
            .filter(|t| t.alive)
            .map(|t| (t.v.to_vec(), t.mode))
            .collect();
        Triangulation::from_parts(vertices, simplexes)
    }
}

/// Generates a conforming triangulation of every mode region of a 2D system.
pub fn triangulate(sys: &PwaSystem, field: &SizeField) -> Result<Triangulation, MeshError> {
    if sys.n != 2 {
        return Err(MeshError::NotTwoD(sys.n));
    }
    if field.min_value() <= 0.0 {
        return Err(MeshError::Invalid("size field must be positive".into()));
    }
    let mut regions: Vec<Vec<Point2>> = Vec::with_capacity(sys.modes.len());
    for (s, mode) in sys.modes.iter().enumerate() {
        let poly = mode
            .region
            .polygon
            .clone()
            .ok_or_else(|| MeshError::Invalid(format!("mode {s} region has no polygon")))?;
        if geom::polygon_signed_area(&poly) <= 0.0 {
            return Err(MeshError::Invalid(format!("mode {s} region polygon is not ccw")));
        }
        regions.push(poly);
    }

    let mut mesh = EditMesh::new();
    let origin = [0.0, 0.0];
    // Boundary points every region must honor: all region corners plus the
    // origin, so shared edges subdivide identically on both sides.
    let mut mandatory: Vec<Point2> = regions.iter().flatten().copied().collect();
    mandatory.push(origin);
    let mandatory = geom::dedup_points(mandatory, TOL_GEO);

    for (mode_idx, poly) in regions.iter().enumerate() {
        let loop_pts = boundary_loop(poly, &mandatory);
        let origin_interior = geom::point_in_convex(poly, origin, -TOL_GEO);
        let apex = if origin_interior {
            origin
        } else if let Some(p) = loop_pts.iter().find(|p| geom::dist(**p, origin) <= TOL_GEO) {
            *p
        } else {
            *loop_pts
                .iter()
                .min_by(|p, q| {
                    (geom::dist(**p, origin), (*p)[0], (*p)[1])
                        .partial_cmp(&(geom::dist(**q, origin), (*q)[0], (*q)[1]))
                        .unwrap()
                })
                .expect("region loop is nonempty")
        };
        let apex_id = mesh.add_vertex(apex);
        let n = loop_pts.len();
        for k in 0..n {
            let p = loop_pts[k];
            let q = loop_pts[(k + 1) % n];
            if geom::cross(apex, p, q).abs() < 1e-12 {
                continue;
            }
            let pid = mesh.add_vertex(p);
            let qid = mesh.add_vertex(q);
            mesh.add_triangle([apex_id, pid, qid], mode_idx);
        }
    }

    // Refine to the size field. Children are re-checked when popped, so the
    // queue converges without rescanning the whole mesh.
    let needs_split = |mesh: &EditMesh, t: usize| -> bool {
        let v = mesh.tris[t].v;
        let c = [
            (mesh.verts[v[0]][0] + mesh.verts[v[1]][0] + mesh.verts[v[2]][0]) / 3.0,
            (mesh.verts[v[0]][1] + mesh.verts[v[1]][1] + mesh.verts[v[2]][1]) / 3.0,
        ];
        let limit = field.eval(&c);
        let longest = mesh
            .edge_len2(v[0], v[1])
            .max(mesh.edge_len2(v[1], v[2]))
            .max(mesh.edge_len2(v[2], v[0]));
        longest.sqrt() > limit * (1.0 + 1e-12)
    };
    let mut cursor = 0;
    while cursor < mesh.tris.len() {
        if mesh.tris.len() > 500_000 {
            return Err(MeshError::TooFine(500_000));
        }
        if mesh.tris[cursor].alive && needs_split(&mesh, cursor) {
            mesh.bisect(cursor)?;
        }
        cursor += 1;
    }
    let mut tri = mesh.into_triangulation()?;
    tri.size = Some(*field);
    Ok(tri)
}

/// Ordered ccw boundary loop of `poly` with every mandatory point lying on an
/// edge inserted as a subdivision point.
fn boundary_loop(poly: &[Point2], mandatory: &[Point2]) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::new();
    for k in 0..n {
        let p = poly[k];
        let q = poly[(k + 1) % n];
        out.push(p);
        let mut on_edge: Vec<(f64, Point2)> = Vec::new();
        let len = geom::dist(p, q);
        for &m in mandatory {
            if geom::dist(m, p) <= TOL_GEO || geom::dist(m, q) <= TOL_GEO {
                continue;
            }
            if geom::segment_point_distance(p, q, m) <= TOL_GEO {
                let t = geom::dot(geom::sub(m, p), geom::sub(q, p)) / (len * len);
                on_edge.push((t, m));
            }
        }
        on_edge.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out.extend(on_edge.into_iter().map(|(_, m)| m));
    }
    out
}

/// Regenerates the mesh with its stored size field scaled by `gamma`.
pub fn refine_global(
    tri: &Triangulation,
    sys: &PwaSystem,
    gamma: f64,
    rho_min: f64,
) -> Result<Triangulation, MeshError> {
    let field = tri
        .size
        .ok_or_else(|| MeshError::Invalid("mesh has no size field to scale".into()))?;
    let scaled = field.scaled(gamma);
    if scaled.min_value() < rho_min {
        return Err(MeshError::MinimumSize { rho: scaled.min_value(), rho_min });
    }
    triangulate(sys, &scaled)
}

/// Bisects every marked simplex (longest-edge, with neighbor propagation) and
/// returns the refined mesh. Unmarked simplexes away from the marked set are
/// untouched.
pub fn refine_local(tri: &Triangulation, marked: &[usize]) -> Result<Triangulation, MeshError> {
    if tri.dim != 2 {
        return Err(MeshError::NotTwoD(tri.dim));
    }
    let mut mesh = EditMesh::new();
    for v in &tri.vertices {
        mesh.add_vertex([v[0], v[1]]);
    }
    for s in &tri.simplexes {
        mesh.add_triangle([s.vertices[0], s.vertices[1], s.vertices[2]], s.mode);
    }
    let mut order: Vec<usize> = marked.to_vec();
    order.sort_unstable();
    order.dedup();
    for t in order {
        if t >= tri.simplexes.len() {
            return Err(MeshError::Invalid(format!("marked simplex {t} does not exist")));
        }
        if mesh.tris[t].alive {
            mesh.bisect(t)?;
        }
    }
    let mut out = mesh.into_triangulation()?;
    out.size = tri.size;
    Ok(out)
}

/// Structural checks on a mesh against its system: conformity, coverage,
/// degeneracy, mode assignment, origin handling, and switching surfaces.
pub fn validate_mesh(tri: &Triangulation, sys: &PwaSystem) -> Vec<Finding> {
    let mut findings = Vec::new();
    let err = |findings: &mut Vec<Finding>, msg: String| {
        findings.push(Finding { severity: Severity::Error, message: msg });
    };

    if tri.dim != sys.n {
        err(&mut findings, format!("mesh dimension {} != system dimension {}", tri.dim, sys.n));
        return findings;
    }

    // Distinct vertices: shared-vertex conformity analysis relies on ids.
    let mut order: Vec<usize> = (0..tri.vertices.len()).collect();
    order.sort_by(|&a, &b| tri.vertices[a][0].partial_cmp(&tri.vertices[b][0]).unwrap());
    for w in 0..order.len() {
        for u in (w + 1)..order.len() {
            let (a, b) = (order[w], order[u]);
            if tri.vertices[b][0] - tri.vertices[a][0] > 1e-9 {
                break;
            }
            if (&tri.vertices[a] - &tri.vertices[b]).norm() <= 1e-9 {
                err(&mut findings, format!("vertices {a} and {b} coincide"));
            }
        }
    }

    for (i, s) in tri.simplexes.iter().enumerate() {
        if s.mode >= sys.modes.len() {
            err(&mut findings, format!("simplex {i} references missing mode {}", s.mode));
            continue;
        }
        let region = &sys.modes[s.mode].region;
        for &v in &s.vertices {
            if !region.contains(&tri.vertices[v], 1e-7) {
                err(
                    &mut findings,
                    format!("simplex {i} leaves region of mode {} (vertex {v})", s.mode),
                );
                break;
            }
        }
        let c = tri.centroid(i);
        match sys.mode_at(&c) {
            Ok(at) if at.contains(&s.mode) => {}
            Ok(at) => err(
                &mut findings,
                format!("simplex {i} is assigned mode {} but its centroid lies in {:?}", s.mode, at),
            ),
            Err(_) => err(&mut findings, format!("simplex {i} centroid is outside the domain")),
        }
    }

    match tri.origin_vertex {
        None => err(&mut findings, "origin is not a mesh vertex".into()),
        Some(o) => {
            for (i, s) in tri.simplexes.iter().enumerate() {
                if s.vertices.contains(&o) && s.vertices[0] != o {
                    err(&mut findings, format!("simplex {i} contains the origin but not first"));
                }
            }
        }
    }

    if tri.dim == 2 {
        validate_2d(tri, sys, &mut findings);
    }
    findings
}

fn validate_2d(tri: &Triangulation, sys: &PwaSystem, findings: &mut Vec<Finding>) {
    let err = |findings: &mut Vec<Finding>, msg: String| {
        findings.push(Finding { severity: Severity::Error, message: msg });
    };

    let region_total: f64 = sys
        .modes
        .iter()
        .filter_map(|m| m.region.polygon.as_ref())
        .map(|p| geom::polygon_area(p))
        .sum();
    let mesh_total = tri.total_volume();
    if (mesh_total - region_total).abs() > 1e-8 * region_total.max(1.0) {
        err(
            findings,
            format!("mesh area {mesh_total:.12} != total region area {region_total:.12}"),
        );
    }

    // Pairwise conformity: any two triangles must intersect in exactly the
    // simplex spanned by their shared vertices.
    let polys: Vec<Vec<Point2>> =
        (0..tri.num_simplexes()).map(|i| tri.triangle_polygon(i)).collect();
    let boxes: Vec<(Point2, Point2)> = polys
        .iter()
        .map(|p| {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for v in p {
                for d in 0..2 {
                    lo[d] = lo[d].min(v[d]);
                    hi[d] = hi[d].max(v[d]);
                }
            }
            (lo, hi)
        })
        .collect();
    let m = tri.num_simplexes();
    for i in 0..m {
        for k in (i + 1)..m {
            let (la, ha) = boxes[i];
            let (lb, hb) = boxes[k];
            if la[0] > hb[0] + 1e-9 || lb[0] > ha[0] + 1e-9 || la[1] > hb[1] + 1e-9
                || lb[1] > ha[1] + 1e-9
            {
                continue;
            }
            let shared: Vec<usize> = tri.simplexes[i]
                .vertices
                .iter()
                .filter(|v| tri.simplexes[k].vertices.contains(v))
                .copied()
                .collect();
            let isect = geom::clip_convex(&polys[i], &polys[k]);
            let area = geom::polygon_area(&isect);
            match shared.len() {
                3 => err(findings, format!("simplexes {i} and {k} are duplicates")),
                2 => {
                    if area > 1e-10 {
                        err(findings, format!("simplexes {i} and {k} overlap beyond an edge"));
                    } else {
                        let a = [tri.vertices[shared[0]][0], tri.vertices[shared[0]][1]];
                        let b = [tri.vertices[shared[1]][0], tri.vertices[shared[1]][1]];
                        let off = isect
                            .iter()
                            .map(|p| geom::segment_point_distance(a, b, *p))
                            .fold(0.0_f64, f64::max);
                        if off > 1e-9 {
                            err(
                                findings,
                                format!("simplexes {i} and {k} meet outside their shared edge"),
                            );
                        }
                    }
                }
                1 => {
                    if area > 1e-10 {
                        err(findings, format!("simplexes {i} and {k} overlap beyond a vertex"));
                    } else {
                        let a = [tri.vertices[shared[0]][0], tri.vertices[shared[0]][1]];
                        let off = isect
                            .iter()
                            .map(|p| geom::dist(a, *p))
                            .fold(0.0_f64, f64::max);
                        if off > 1e-9 {
                            err(
                                findings,
                                format!("simplexes {i} and {k} meet outside their shared vertex"),
                            );
                        }
                    }
                }
                0 => {
                    if area > 1e-10 {
                        err(
                            findings,
                            format!("simplexes {i} and {k} overlap without shared vertices"),
                        );
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // Switching surfaces must be exactly covered by interior mesh facets.
    for s1 in 0..sys.modes.len() {
        for s2 in (s1 + 1)..sys.modes.len() {
            let (p1, p2) = match (&sys.modes[s1].region.polygon, &sys.modes[s2].region.polygon) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            let shared = geom::clip_convex(p1, p2);
            let mut expected = 0.0_f64;
            for a in 0..shared.len() {
                for b in (a + 1)..shared.len() {
                    expected = expected.max(geom::dist(shared[a], shared[b]));
                }
            }
            if expected <= TOL_GEO {
                continue;
            }
            let covered: f64 = tri
                .constraint_surfaces
                .iter()
                .filter(|cs| cs.modes == (s1, s2))
                .flat_map(|cs| cs.facets.iter())
                .map(|&(i, j)| {
                    let ids: Vec<usize> = tri.simplexes[i]
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != j)
                        .map(|(_, &v)| v)
                        .collect();
                    (&tri.vertices[ids[0]] - &tri.vertices[ids[1]]).norm()
                })
                .sum();
            if (covered - expected).abs() > 1e-8 * expected {
                err(
                    findings,
                    format!(
                        "switching surface between modes {s1} and {s2} covered {covered:.12} of {expected:.12}"
                    ),
                );
            }
        }
    }
}

/// Serialized form of a mesh: vertex coordinates plus per-simplex vertex ids
/// and mode. Derived structure is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<Vec<f64>>,
    pub simplexes: Vec<MeshFileSimplex>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFileSimplex {
    pub v: Vec<usize>,
    pub mode: usize,
}

impl MeshFile {
    pub fn from_triangulation(tri: &Triangulation) -> Self {
        MeshFile {
            vertices: tri.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
            simplexes: tri
                .simplexes
                .iter()
                .map(|s| MeshFileSimplex { v: s.vertices.clone(), mode: s.mode })
                .collect(),
        }
    }

    pub fn into_triangulation(self) -> Result<Triangulation, MeshError> {
        let vertices = self.vertices.into_iter().map(DVector::from_vec).collect();
        let simplexes = self.simplexes.into_iter().map(|s| (s.v, s.mode)).collect();
        Triangulation::from_parts(vertices, simplexes)
    }
}

pub fn mesh_to_json(tri: &Triangulation) -> String {
    serde_json::to_string_pretty(&MeshFile::from_triangulation(tri))
        .expect("mesh serialization cannot fail")
}

pub fn mesh_from_json(text: &str) -> Result<Triangulation, MeshError> {
    let file: MeshFile = serde_json::from_str(text)?;
    file.into_triangulation()
}

pub fn save_mesh(path: &Path, tri: &Triangulation) -> Result<(), MeshError> {
    std::fs::write(path, mesh_to_json(tri)).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_mesh(path: &Path) -> Result<Triangulation, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.display().to_string(),
        source,
    })?;
    mesh_from_json(&text)
}
