//! Calculus of continuous piecewise-affine functions on a triangulation:
//! interpolation, per-simplex gradients, directional decay rates along the
//! closed-loop field, and exact sublevel-set geometry.
//!
//! A scalar field is determined by its vertex values; on simplex `i` the
//! gradient solves `X_i g = W_bar` where row `j-1` of `X_i` is
//! `x_{i,j} - x_{i,0}` and entry `j-1` of `W_bar` is `W_{x_{i,j}} - W_{x_{i,0}}`.

use crate::geom::{self, Point2};
use crate::mesh::Triangulation;
use crate::model::PwaSystem;
use crate::{EPS_R, TOL_GEO};
use nalgebra::DVector;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum CpaError {
    #[error("field has {got} values but the mesh has {want} vertices")]
    WrongLength { got: usize, want: usize },
    #[error("fields live on different meshes")]
    MeshMismatch,
    #[error("state [{0}] lies outside the mesh")]
    OutOfMesh(String),
    #[error("V is not positive at nonzero vertex {0}")]
    NonPositive(usize),
    #[error("simplex {0} references mode {1} beyond the system")]
    ModeOutOfRange(usize, usize),
    #[error("sublevel geometry is implemented for 2D meshes, got n = {0}")]
    NotTwoD(usize),
    #[error("sublevel radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invariant level is degenerate: {0}")]
    DegenerateLevel(String),
}

/// Scalar CPA field with cached per-simplex gradients.
#[derive(Debug, Clone)]
pub struct ScalarField {
    pub mesh: Arc<Triangulation>,
    pub values: Vec<f64>,
    grads: Vec<DVector<f64>>,
}

impl ScalarField {
    pub fn new(mesh: Arc<Triangulation>, values: Vec<f64>) -> Result<Self, CpaError> {
        if values.len() != mesh.num_vertices() {
            return Err(CpaError::WrongLength { got: values.len(), want: mesh.num_vertices() });
        }
        let grads = (0..mesh.num_simplexes())
            .map(|i| {
                let s = &mesh.simplexes[i];
                let w0 = values[s.vertices[0]];
                let wbar =
                    DVector::from_iterator(mesh.dim, s.vertices[1..].iter().map(|&v| values[v] - w0));
                &s.shape_inv * wbar
            })
            .collect();
        Ok(Self { mesh, values, grads })
    }

    /// Gradient of the affine piece on simplex `i`.
    pub fn gradient(&self, i: usize) -> &DVector<f64> {
        &self.grads[i]
    }

    pub fn eval_on(&self, i: usize, x: &DVector<f64>) -> f64 {
        let s = &self.mesh.simplexes[i];
        let x0 = &self.mesh.vertices[s.vertices[0]];
        self.values[s.vertices[0]] + self.grads[i].dot(&(x - x0))
    }

    /// Interpolated value at `x`; any containing simplex gives the same result.
    pub fn eval(&self, x: &DVector<f64>) -> Result<f64, CpaError> {
        let hits = self.mesh.locate(x);
        match hits.first() {
            Some(&i) => Ok(self.eval_on(i, x)),
            None => Err(CpaError::OutOfMesh(fmt_state(x))),
        }
    }
}

/// Vector-valued CPA field (one value per vertex, interpolated barycentrically).
#[derive(Debug, Clone)]
pub struct VectorField {
    pub mesh: Arc<Triangulation>,
    pub values: Vec<DVector<f64>>,
    pub width: usize,
}

impl VectorField {
    pub fn new(
        mesh: Arc<Triangulation>,
        values: Vec<DVector<f64>>,
        width: usize,
    ) -> Result<Self, CpaError> {
        if values.len() != mesh.num_vertices() {
            return Err(CpaError::WrongLength { got: values.len(), want: mesh.num_vertices() });
        }
        if values.iter().any(|v| v.len() != width) {
            return Err(CpaError::WrongLength { got: 0, want: width });
        }
        Ok(Self { mesh, values, width })
    }

    pub fn eval_on(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let lam = self.mesh.barycentric(i, x);
        let ids = &self.mesh.simplexes[i].vertices;
        let mut out = DVector::zeros(self.width);
        for (j, &v) in ids.iter().enumerate() {
            out += lam[j] * &self.values[v];
        }
        out
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>, CpaError> {
        let hits = self.mesh.locate(x);
        match hits.first() {
            Some(&i) => Ok(self.eval_on(i, x)),
            None => Err(CpaError::OutOfMesh(fmt_state(x))),
        }
    }
}

fn fmt_state(x: &DVector<f64>) -> String {
    x.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(", ")
}

fn check_pair(v: &ScalarField, u: &VectorField) -> Result<(), CpaError> {
    if !Arc::ptr_eq(&v.mesh, &u.mesh) {
        return Err(CpaError::MeshMismatch);
    }
    Ok(())
}

/// Upper Dini derivative of `V` along the closed-loop field at vertex `j` of
/// simplex `i`:
/// `(A_s x + e_s)' grad V_i + u_x' B_s' grad V_i` with `s` the simplex mode.
pub fn dini(
    v: &ScalarField,
    u: &VectorField,
    sys: &PwaSystem,
    i: usize,
    j: usize,
) -> Result<f64, CpaError> {
    check_pair(v, u)?;
    let mesh = &v.mesh;
    let s = &mesh.simplexes[i];
    if s.mode >= sys.modes.len() {
        return Err(CpaError::ModeOutOfRange(i, s.mode));
    }
    let mode = &sys.modes[s.mode];
    let x = &mesh.vertices[s.vertices[j]];
    let ux = &u.values[s.vertices[j]];
    let g = v.gradient(i);
    let drift = &mode.a * x + &mode.e;
    Ok(drift.dot(g) + ux.dot(&(mode.b.transpose() * g)))
}

fn is_origin_vertex(mesh: &Triangulation, vid: usize) -> bool {
    match mesh.origin_vertex {
        Some(o) => vid == o,
        None => mesh.vertices[vid].norm() <= TOL_GEO,
    }
}

/// Largest decay rate the pair `(V, U)` certifies:
/// `min over (i, j), x_{i,j} != 0 of -dini / V_{x_{i,j}}`.
pub fn largest_b2(v: &ScalarField, u: &VectorField, sys: &PwaSystem) -> Result<f64, CpaError> {
    check_pair(v, u)?;
    let mesh = v.mesh.clone();
    let mut best = f64::INFINITY;
    for i in 0..mesh.num_simplexes() {
        for j in 0..=mesh.dim {
            let vid = mesh.simplexes[i].vertices[j];
            if is_origin_vertex(&mesh, vid) {
                continue;
            }
            let val = v.values[vid];
            if val <= 0.0 {
                return Err(CpaError::NonPositive(vid));
            }
            best = best.min(-dini(v, u, sys, i, j)? / val);
        }
    }
    Ok(best)
}

/// Simplexes on which `V` strictly decreases at every nonzero vertex, plus the
/// largest rate certified on that subset (`None` when the subset is empty).
pub fn decrease_subset(
    v: &ScalarField,
    u: &VectorField,
    sys: &PwaSystem,
) -> Result<(Vec<usize>, Option<f64>), CpaError> {
    check_pair(v, u)?;
    let mesh = v.mesh.clone();
    let mut included = Vec::new();
    let mut best = f64::INFINITY;
    for i in 0..mesh.num_simplexes() {
        let mut ok = true;
        let mut local = f64::INFINITY;
        for j in 0..=mesh.dim {
            let vid = mesh.simplexes[i].vertices[j];
            if is_origin_vertex(&mesh, vid) {
                continue;
            }
            let val = v.values[vid];
            if val <= 0.0 {
                return Err(CpaError::NonPositive(vid));
            }
            let d = dini(v, u, sys, i, j)?;
            if d < 0.0 {
                local = local.min(-d / val);
            } else {
                ok = false;
                break;
            }
        }
        if ok {
            included.push(i);
            best = best.min(local);
        }
    }
    let rate = if included.is_empty() { None } else { Some(best) };
    Ok((included, rate))
}

/// One connected piece bookkeeping entry of a sublevel set.
#[derive(Debug, Clone)]
pub struct SublevelPiece {
    pub simplex: usize,
    pub polygon: Vec<Point2>,
}

/// Exact polygonal decomposition of `{x : V(x) <= r}`.
#[derive(Debug, Clone)]
pub struct SublevelSet {
    pub r: f64,
    pub pieces: Vec<SublevelPiece>,
    /// Piece indices grouped by facet-adjacency connectivity.
    pub components: Vec<Vec<usize>>,
    pub volume: f64,
}

impl SublevelSet {
    pub fn is_connected(&self) -> bool {
        self.components.len() == 1
    }
}

/// Clips `{V <= r}` simplex by simplex. Within each simplex the set is the cut
/// of an affine function, so the polygon clip is exact.
pub fn sublevel(v: &ScalarField, r: f64) -> Result<SublevelSet, CpaError> {
    if v.mesh.dim != 2 {
        return Err(CpaError::NotTwoD(v.mesh.dim));
    }
    if r <= 0.0 {
        return Err(CpaError::NonPositiveRadius(r));
    }
    let mesh = &v.mesh;
    let mut pieces = Vec::new();
    let mut piece_of = vec![usize::MAX; mesh.num_simplexes()];
    for i in 0..mesh.num_simplexes() {
        let tri = mesh.triangle_polygon(i);
        let g = v.gradient(i);
        let s = &mesh.simplexes[i];
        let x0 = &mesh.vertices[s.vertices[0]];
        // V(x) <= r  <=>  g . x <= r - V(x0) + g . x0
        let offset = r - v.values[s.vertices[0]] + g[0] * x0[0] + g[1] * x0[1];
        let clip = geom::clip_halfplane(&tri, [g[0], g[1]], offset);
        if clip.len() >= 3 && geom::polygon_area(&clip) > 0.0 {
            piece_of[i] = pieces.len();
            pieces.push(SublevelPiece { simplex: i, polygon: clip });
        }
    }

    let mut uf = UnionFind::new(pieces.len());
    for (pi, piece) in pieces.iter().enumerate() {
        let i = piece.simplex;
        for j in 0..=mesh.dim {
            if let Some(k) = mesh.neighbors[i][j] {
                if k < i || piece_of[k] == usize::MAX {
                    continue;
                }
                // The shared facet carries an affine V; the clipped portion is
                // a sub-segment whose length follows from the endpoint values.
                let ids: Vec<usize> = mesh.simplexes[i]
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|(l, _)| *l != j)
                    .map(|(_, &vid)| vid)
                    .collect();
                let (va, vb) = (v.values[ids[0]], v.values[ids[1]]);
                let len = (&mesh.vertices[ids[0]] - &mesh.vertices[ids[1]]).norm();
                let frac = clipped_fraction(va, vb, r);
                if len * frac > 1e-12 {
                    uf.union(pi, piece_of[k]);
                }
            }
        }
    }
    let components = uf.components();
    let volume = pieces.iter().map(|p| geom::polygon_area(&p.polygon)).sum();
    Ok(SublevelSet { r, pieces, components, volume })
}

/// Fraction of a segment with endpoint values `va`, `vb` on which the affine
/// interpolant is `<= r`.
fn clipped_fraction(va: f64, vb: f64, r: f64) -> f64 {
    let (lo, hi) = if va <= vb { (va, vb) } else { (vb, va) };
    if hi <= r {
        1.0
    } else if lo >= r {
        0.0
    } else {
        (r - lo) / (hi - lo)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }

    fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for a in 0..n {
            let r = self.find(a);
            match groups.iter_mut().find(|(root, _)| *root == r) {
                Some((_, list)) => list.push(a),
                None => groups.push((r, vec![a])),
            }
        }
        groups.into_iter().map(|(_, list)| list).collect()
    }
}

/// Largest level below the boundary cap whose every sublevel preimage is
/// connected, together with the region at that level.
///
/// The cap is `(1 - eps_r) * min boundary-vertex V`. Connectivity of the piece
/// graph changes only at simplex and facet minimum values, so the first
/// disconnection threshold is found exactly by an ascending sweep over those
/// critical values; the cap is returned when no disconnection occurs below it.
pub fn max_invariant_level(v: &ScalarField) -> Result<(f64, SublevelSet), CpaError> {
    if v.mesh.dim != 2 {
        return Err(CpaError::NotTwoD(v.mesh.dim));
    }
    let mesh = &v.mesh;
    let boundary = mesh.boundary_vertices();
    if boundary.is_empty() {
        return Err(CpaError::DegenerateLevel("mesh has no boundary vertices".into()));
    }
    let cap = (1.0 - EPS_R)
        * boundary.iter().map(|&b| v.values[b]).fold(f64::INFINITY, f64::min);
    if cap <= 0.0 {
        return Err(CpaError::DegenerateLevel(format!(
            "boundary cap {cap:.3e} is not positive"
        )));
    }

    #[derive(PartialEq)]
    enum Event {
        Node(usize),
        Link(usize, usize),
    }
    let mut events: Vec<(f64, u8, Event)> = Vec::new();
    for i in 0..mesh.num_simplexes() {
        let f = mesh.simplexes[i]
            .vertices
            .iter()
            .map(|&vid| v.values[vid])
            .fold(f64::INFINITY, f64::min);
        events.push((f, 0, Event::Node(i)));
        for j in 0..=mesh.dim {
            if let Some(k) = mesh.neighbors[i][j] {
                if k > i {
                    let g = mesh.simplexes[i]
                        .vertices
                        .iter()
                        .enumerate()
                        .filter(|(l, _)| *l != j)
                        .map(|(_, &vid)| v.values[vid])
                        .fold(f64::INFINITY, f64::min);
                    events.push((g, 1, Event::Link(i, k)));
                }
            }
        }
    }
    events.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());

    let mut uf = UnionFind::new(mesh.num_simplexes());
    let mut active = vec![false; mesh.num_simplexes()];
    let mut comp = 0usize;
    let mut level = cap;
    let mut idx = 0;
    'sweep: while idx < events.len() {
        let value = events[idx].0;
        if value >= cap {
            break;
        }
        while idx < events.len() && events[idx].0 == value {
            match events[idx].2 {
                Event::Node(i) => {
                    if !active[i] {
                        active[i] = true;
                        comp += 1;
                    }
                }
                Event::Link(i, k) => {
                    if active[i] && active[k] && uf.union(i, k) {
                        comp -= 1;
                    }
                }
            }
            idx += 1;
        }
        if comp > 1 {
            level = value;
            break 'sweep;
        }
    }
    if level <= 0.0 {
        return Err(CpaError::DegenerateLevel(
            "V vanishes away from the origin; no positive connected level exists".into(),
        ));
    }
    let region = sublevel(v, level)?;
    Ok((level, region))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{triangulate, SizeField};
    use crate::model::{PwaMode, PwaSystem, Polytope};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strip(lo: f64, hi: f64) -> Polytope {
        Polytope::from_polygon(vec![[lo, -2.0], [hi, -2.0], [hi, 2.0], [lo, 2.0]])
    }

    fn three_modes() -> PwaSystem {
        let mode = |p: f64, e2: f64, region: Polytope| PwaMode {
            a: DMatrix::from_row_slice(2, 2, &[0.1, 1.1, p, -1.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            e: DVector::from_vec(vec![0.0, e2]),
            region,
        };
        let modes = vec![
            mode(0.1, 1.0, strip(-3.0, -1.0)),
            mode(-0.9, 0.0, strip(-1.0, 1.0)),
            mode(-1.9, 1.0, strip(1.0, 3.0)),
        ];
        let input = Polytope::from_halfspaces(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![2.0, 2.0]),
        );
        PwaSystem::new(modes, input, strip(-3.0, 3.0)).unwrap()
    }

    fn mesh(rho: f64) -> Arc<Triangulation> {
        Arc::new(triangulate(&three_modes(), &SizeField::constant(rho)).unwrap())
    }

    #[test]
    fn affine_functions_are_reproduced_exactly() {
        let mesh = mesh(2.0);
        let (c1, c2, d) = (3.0, -2.0, 0.7);
        let values: Vec<f64> =
            mesh.vertices.iter().map(|p| c1 * p[0] + c2 * p[1] + d).collect();
        let field = ScalarField::new(mesh.clone(), values).unwrap();
        for i in 0..mesh.num_simplexes() {
            let g = field.gradient(i);
            assert!((g[0] - c1).abs() < 1e-12 && (g[1] - c2).abs() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = DVector::from_vec(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0)]);
            let want = c1 * x[0] + c2 * x[1] + d;
            assert!((field.eval(&x).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_agrees_across_simplexes_sharing_the_point() {
        let mesh = mesh(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.0..5.0)).collect();
        let field = ScalarField::new(mesh.clone(), values).unwrap();
        for v in 0..mesh.num_vertices() {
            let x = mesh.vertices[v].clone();
            let hits = mesh.locate(&x);
            for &i in &hits {
                assert!((field.eval_on(i, &x) - field.values[v]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dini_matches_an_independent_gradient_solve() {
        let sys = three_modes();
        let mesh = mesh(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let values: Vec<f64> = (0..mesh.num_vertices()).map(|_| rng.gen_range(0.1..4.0)).collect();
        let inputs: Vec<DVector<f64>> = (0..mesh.num_vertices())
            .map(|_| DVector::from_vec(vec![rng.gen_range(-2.0..2.0)]))
            .collect();
        let v = ScalarField::new(mesh.clone(), values.clone()).unwrap();
        let u = VectorField::new(mesh.clone(), inputs.clone(), 1).unwrap();
        for i in 0..mesh.num_simplexes() {
            let ids = &mesh.simplexes[i].vertices;
            let x0 = &mesh.vertices[ids[0]];
            let edges = DMatrix::from_columns(&[
                &mesh.vertices[ids[1]] - x0,
                &mesh.vertices[ids[2]] - x0,
            ]);
            let rhs = DVector::from_vec(vec![
                values[ids[1]] - values[ids[0]],
                values[ids[2]] - values[ids[0]],
            ]);
            let g = edges.transpose().lu().solve(&rhs).unwrap();
            let mode = &sys.modes[mesh.simplexes[i].mode];
            for j in 0..3 {
                let x = &mesh.vertices[ids[j]];
                let manual = (&mode.a * x + &mode.e).dot(&g)
                    + inputs[ids[j]].dot(&(mode.b.transpose() * &g));
                let got = dini(&v, &u, &sys, i, j).unwrap();
                assert!((got - manual).abs() < 1e-12, "simplex {i} vertex {j}");
            }
        }
    }

    /// Square `[-1, 1]^2` cut along both axes and both diagonals, so the
    /// one-norm is affine on every triangle.
    fn octant_mesh() -> Arc<Triangulation> {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [-1.0, 1.0],
            [-1.0, 0.0],
            [-1.0, -1.0],
            [0.0, -1.0],
            [1.0, -1.0],
        ];
        let vertices = pts.iter().map(|p| DVector::from_vec(vec![p[0], p[1]])).collect();
        let simplexes = (0..8)
            .map(|k| (vec![0, 1 + k, 1 + (k + 1) % 8], 0))
            .collect();
        Arc::new(Triangulation::from_parts(vertices, simplexes).unwrap())
    }

    #[test]
    fn sublevel_of_the_one_norm_is_a_diamond() {
        let mesh = octant_mesh();
        let values: Vec<f64> = mesh.vertices.iter().map(|p| p[0].abs() + p[1].abs()).collect();
        let field = ScalarField::new(mesh.clone(), values).unwrap();
        let set = sublevel(&field, 0.5).unwrap();
        assert!((set.volume - 0.5).abs() < 1e-12);
        assert!(set.is_connected());
        for piece in &set.pieces {
            for p in &piece.polygon {
                assert!(p[0].abs() + p[1].abs() <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn invariant_level_caps_at_the_boundary_minimum() {
        let mesh = octant_mesh();
        let values: Vec<f64> = mesh.vertices.iter().map(|p| p[0].abs() + p[1].abs()).collect();
        let field = ScalarField::new(mesh.clone(), values).unwrap();
        let (level, set) = max_invariant_level(&field).unwrap();
        assert!((level - (1.0 - EPS_R)).abs() < 1e-12);
        assert!(set.is_connected());
        assert!((set.volume - 2.0 * level * level).abs() < 1e-9);
    }

    #[test]
    fn invariant_level_stops_at_the_first_disconnection() {
        let mesh = mesh(2.0);
        let mut values = vec![10.0; mesh.num_vertices()];
        let find = |x: f64, y: f64| {
            (0..mesh.num_vertices())
                .find(|&v| (mesh.vertices[v][0] - x).abs() < 1e-9
                    && (mesh.vertices[v][1] - y).abs() < 1e-9)
                .unwrap()
        };
        values[find(0.0, 0.0)] = 0.0;
        values[find(-2.0, 0.0)] = 0.1;
        values[find(2.0, 0.0)] = 0.15;
        let field = ScalarField::new(mesh.clone(), values).unwrap();
        let (level, _) = max_invariant_level(&field).unwrap();
        assert_eq!(level, 0.1);
    }

    #[test]
    fn nonpositive_vertex_values_are_rejected_by_largest_b2() {
        let sys = three_modes();
        let mesh = mesh(4.0);
        let mut values = vec![1.0; mesh.num_vertices()];
        let origin = (0..mesh.num_vertices())
            .find(|&v| mesh.vertices[v].norm() < 1e-9)
            .unwrap();
        values[origin] = 0.0;
        values[(origin + 1) % mesh.num_vertices()] = -0.5;
        let v = ScalarField::new(mesh.clone(), values).unwrap();
        let u = VectorField::new(
            mesh.clone(),
            vec![DVector::zeros(1); mesh.num_vertices()],
            1,
        )
        .unwrap();
        assert!(matches!(largest_b2(&v, &u, &sys), Err(CpaError::NonPositive(_))));
    }

    #[test]
    fn wrong_value_lengths_are_rejected() {
        let mesh = mesh(4.0);
        assert!(matches!(
            ScalarField::new(mesh.clone(), vec![0.0; 3]),
            Err(CpaError::WrongLength { .. })
        ));
        assert!(matches!(
            VectorField::new(mesh.clone(), vec![DVector::zeros(2); mesh.num_vertices()], 1),
            Err(CpaError::WrongLength { .. })
        ));
        let field = ScalarField::new(mesh.clone(), vec![1.0; mesh.num_vertices()]).unwrap();
        assert!(matches!(sublevel(&field, 0.0), Err(CpaError::NonPositiveRadius(_))));
    }
}
