//! Planar geometry helpers: convex polygons, half-plane clipping, and
//! conversions between vertex and half-space representations.

use nalgebra::{DMatrix, DVector};

/// A point in the plane.
pub type Point2 = [f64; 2];

const CLIP_EPS: f64 = 1e-12;

#[inline]
pub fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dot(a: Point2, b: Point2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm(a: Point2) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist(a: Point2, b: Point2) -> f64 {
    norm(sub(a, b))
}

/// z-component of (a - o) x (b - o).
#[inline]
pub fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Signed area of a polygon, positive for counter-clockwise orientation.
pub fn polygon_signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        acc += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * acc
}

pub fn polygon_area(poly: &[Point2]) -> f64 {
    polygon_signed_area(poly).abs()
}

/// Area centroid; falls back to the vertex mean for degenerate polygons.
pub fn polygon_centroid(poly: &[Point2]) -> Point2 {
    let a = polygon_signed_area(poly);
    let n = poly.len();
    if n == 0 {
        return [0.0, 0.0];
    }
    if a.abs() < 1e-14 {
        let mut c = [0.0, 0.0];
        for p in poly {
            c[0] += p[0];
            c[1] += p[1];
        }
        return [c[0] / n as f64, c[1] / n as f64];
    }
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let w = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * w;
        cy += (p[1] + q[1]) * w;
    }
    [cx / (6.0 * a), cy / (6.0 * a)]
}

/// Clips a convex polygon against the half-plane `normal . x <= offset`.
pub fn clip_halfplane(poly: &[Point2], normal: Point2, offset: f64) -> Vec<Point2> {
    let n = poly.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let cur = poly[i];
        let nxt = poly[(i + 1) % n];
        let dc = dot(normal, cur) - offset;
        let dn = dot(normal, nxt) - offset;
        if dc <= CLIP_EPS {
            out.push(cur);
        }
        if (dc < -CLIP_EPS && dn > CLIP_EPS) || (dc > CLIP_EPS && dn < -CLIP_EPS) {
            let t = dc / (dc - dn);
            out.push([cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])]);
        }
    }
    out
}

/// Intersection of two convex polygons; `clip` must be counter-clockwise.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut poly = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if poly.is_empty() {
            break;
        }
        let p = clip[i];
        let q = clip[(i + 1) % n];
        // Interior of a ccw polygon lies left of each edge.
        let normal = [q[1] - p[1], -(q[0] - p[0])];
        let offset = dot(normal, p);
        poly = clip_halfplane(&poly, normal, offset);
    }
    poly
}

/// True when `p` is inside the convex ccw polygon within signed distance `tol`.
pub fn point_in_convex(poly: &[Point2], p: Point2, tol: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let len = dist(a, b);
        if len < 1e-15 {
            continue;
        }
        if cross(a, b, p) / len < -tol {
            return false;
        }
    }
    true
}

/// Half-space form of a ccw convex polygon with unit-norm rows.
pub fn polygon_to_halfspaces(poly: &[Point2]) -> (DMatrix<f64>, DVector<f64>) {
    let n = poly.len();
    let mut a = DMatrix::zeros(n, 2);
    let mut b = DVector::zeros(n);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let raw = [q[1] - p[1], -(q[0] - p[0])];
        let len = norm(raw);
        let normal = [raw[0] / len, raw[1] / len];
        a[(i, 0)] = normal[0];
        a[(i, 1)] = normal[1];
        b[i] = dot(normal, p);
    }
    (a, b)
}

/// Vertex form of a bounded 2D half-space intersection `{x : A x <= b}`.
///
/// Returns the ccw polygon, or an empty vector when the set has no interior.
pub fn halfspaces_to_polygon(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Vec<Point2> {
    assert_eq!(a.ncols(), 2, "halfspaces_to_polygon is 2D only");
    let rows = a.nrows();
    let mut candidates: Vec<Point2> = Vec::new();
    for i in 0..rows {
        for j in (i + 1)..rows {
            let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
            let scale = (a.row(i).norm() * a.row(j).norm()).max(1e-30);
            if det.abs() < 1e-12 * scale {
                continue;
            }
            let x = (b[i] * a[(j, 1)] - a[(i, 1)] * b[j]) / det;
            let y = (a[(i, 0)] * b[j] - b[i] * a[(j, 0)]) / det;
            let p = [x, y];
            let feasible = (0..rows).all(|k| {
                let rn = a.row(k).norm().max(1e-30);
                a[(k, 0)] * x + a[(k, 1)] * y - b[k] <= tol * rn.max(1.0)
            });
            if feasible {
                candidates.push(p);
            }
        }
    }
    let mut pts = dedup_points(candidates, 1e-9);
    if pts.len() < 3 {
        return Vec::new();
    }
    let c = {
        let mut m = [0.0, 0.0];
        for p in &pts {
            m[0] += p[0];
            m[1] += p[1];
        }
        [m[0] / pts.len() as f64, m[1] / pts.len() as f64]
    };
    pts.sort_by(|p, q| {
        let ap = (p[1] - c[1]).atan2(p[0] - c[0]);
        let aq = (q[1] - c[1]).atan2(q[0] - c[0]);
        ap.partial_cmp(&aq).unwrap()
    });
    pts
}

/// Removes near-duplicate points, keeping first occurrences.
pub fn dedup_points(pts: Vec<Point2>, tol: f64) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(pts.len());
    for p in pts {
        if out.iter().all(|q| dist(p, *q) > tol) {
            out.push(p);
        }
    }
    out
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn segment_point_distance(a: Point2, b: Point2, p: Point2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    if len2 < 1e-30 {
        return dist(a, p);
    }
    let t = (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> Vec<Point2> {
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
    }

    #[test]
    fn area_and_centroid_of_square() {
        let sq = unit_square();
        assert!((polygon_signed_area(&sq) - 1.0).abs() < 1e-14);
        let c = polygon_centroid(&sq);
        assert!((c[0] - 0.5).abs() < 1e-14 && (c[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn halfplane_clip_splits_square() {
        let sq = unit_square();
        let half = clip_halfplane(&sq, [1.0, 0.0], 0.5);
        assert!((polygon_area(&half) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn convex_clip_of_offset_squares() {
        let a = unit_square();
        let b: Vec<Point2> = a.iter().map(|p| [p[0] + 0.5, p[1] + 0.5]).collect();
        let isect = clip_convex(&a, &b);
        assert!((polygon_area(&isect) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn halfspace_round_trip() {
        let sq = unit_square();
        let (a, b) = polygon_to_halfspaces(&sq);
        let back = halfspaces_to_polygon(&a, &b, 1e-9);
        assert_eq!(back.len(), 4);
        assert!((polygon_area(&back) - 1.0).abs() < 1e-12);
        assert!(point_in_convex(&back, [0.5, 0.5], 1e-9));
        assert!(!point_in_convex(&back, [1.5, 0.5], 1e-9));
    }

    #[test]
    fn degenerate_clip_is_empty() {
        let sq = unit_square();
        let gone = clip_halfplane(&sq, [1.0, 0.0], -1.0);
        assert!(polygon_area(&gone) < 1e-12);
    }
}
