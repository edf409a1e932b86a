//! Constrained piecewise-affine plant descriptions.
//!
//! A system is a list of affine modes `x' = A_s x + B_s u + e_s`, each active
//! on a convex polytopic region, an input polytope `{u : H u <= h}`, and an
//! admissible state polytope that the mode regions partition.

use crate::geom::{self, Point2};
use crate::{TOL_GEO, TOL_STATE};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed problem file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("state [{0}] lies outside the synthesis domain")]
    OutOfDomain(String),
}

/// Convex polytope `{x : A x <= b}` with an optional ccw vertex list in 2D.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub polygon: Option<Vec<Point2>>,
}

impl Polytope {
    pub fn from_polygon(polygon: Vec<Point2>) -> Self {
        let (a, b) = geom::polygon_to_halfspaces(&polygon);
        Self { a, b, polygon: Some(polygon) }
    }

    /// Builds from half-space data, deriving the vertex list in 2D.
    pub fn from_halfspaces(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let polygon = if a.ncols() == 2 {
            let poly = geom::halfspaces_to_polygon(&a, &b, TOL_GEO);
            if poly.len() >= 3 {
                Some(poly)
            } else {
                None
            }
        } else {
            None
        };
        Self { a, b, polygon }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Membership of the closed set, with `tol` measured against unit-norm rows.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        for i in 0..self.a.nrows() {
            let row = self.a.row(i);
            let scale = row.norm().max(1.0);
            if row.dot(&x.transpose()) - self.b[i] > tol * scale {
                return false;
            }
        }
        true
    }
}

/// One affine mode together with the region where it is active.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DVector<f64>,
    pub region: Polytope,
}

/// Piecewise-affine system on a polytopic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaSystem {
    pub n: usize,
    pub m: usize,
    pub modes: Vec<PwaMode>,
    /// Input polytope `{u : H u <= h}`.
    pub input: Polytope,
    /// Admissible state polytope containing the union of mode regions.
    pub domain: Polytope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding; `validate` returns every finding it can detect.
#[derive(Debug, Clone)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn error(message: String) -> Self {
        Self { severity: Severity::Error, message }
    }

    fn warning(message: String) -> Self {
        Self { severity: Severity::Warning, message }
    }
}

impl PwaSystem {
    pub fn new(
        modes: Vec<PwaMode>,
        input: Polytope,
        domain: Polytope,
    ) -> Result<Self, ModelError> {
        if modes.is_empty() {
            return Err(ModelError::Invalid("system has no modes".into()));
        }
        let n = modes[0].a.nrows();
        let m = modes[0].b.ncols();
        for (s, mode) in modes.iter().enumerate() {
            if mode.a.nrows() != n || mode.a.ncols() != n {
                return Err(ModelError::Dimension(format!("mode {s}: A must be {n}x{n}")));
            }
            if mode.b.nrows() != n || mode.b.ncols() != m {
                return Err(ModelError::Dimension(format!("mode {s}: B must be {n}x{m}")));
            }
            if mode.e.len() != n {
                return Err(ModelError::Dimension(format!("mode {s}: e must have length {n}")));
            }
            if mode.region.dim() != n {
                return Err(ModelError::Dimension(format!("mode {s}: region dimension != {n}")));
            }
        }
        if input.dim() != m {
            return Err(ModelError::Dimension(format!("input polytope dimension != {m}")));
        }
        if domain.dim() != n {
            return Err(ModelError::Dimension(format!("domain dimension != {n}")));
        }
        Ok(Self { n, m, modes, input, domain })
    }

    /// Indices of every mode whose closed region contains `x`, ascending.
    pub fn mode_at(&self, x: &DVector<f64>) -> Result<Vec<usize>, ModelError> {
        let mut found = Vec::new();
        for (s, mode) in self.modes.iter().enumerate() {
            if mode.region.contains(x, TOL_GEO) {
                found.push(s);
            }
        }
        if found.is_empty() {
            let coords: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
            return Err(ModelError::OutOfDomain(coords.join(", ")));
        }
        Ok(found)
    }

    /// Lowest-index mode active at `x`; the tie-breaking rule on switching
    /// surfaces used throughout simulation.
    pub fn active_mode(&self, x: &DVector<f64>) -> Result<usize, ModelError> {
        Ok(self.mode_at(x)?[0])
    }

    pub fn origin(&self) -> DVector<f64> {
        DVector::zeros(self.n)
    }

    /// Structural and geometric checks; errors make synthesis refuse to run,
    /// warnings are reported and tolerated.
    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        let origin = self.origin();

        match self.mode_at(&origin) {
            Ok(at_origin) => {
                for s in at_origin {
                    let e = &self.modes[s].e;
                    if e.norm() > TOL_STATE {
                        findings.push(Finding::error(format!(
                            "mode {s} contains the origin but has e != 0 (|e| = {:.3e})",
                            e.norm()
                        )));
                    }
                }
            }
            Err(_) => findings.push(Finding::error("origin lies outside every mode region".into())),
        }

        for i in 0..self.input.b.len() {
            if self.input.b[i] < -TOL_STATE {
                findings.push(Finding::error(format!(
                    "u = 0 violates input constraint row {i} (h[{i}] = {})",
                    self.input.b[i]
                )));
            }
        }

        if self.n == 2 {
            self.validate_geometry_2d(&mut findings);
        } else {
            findings.push(Finding::warning(format!(
                "geometric region checks are implemented for n = 2 only (n = {})",
                self.n
            )));
        }
        findings
    }

    fn validate_geometry_2d(&self, findings: &mut Vec<Finding>) {
        let polys: Vec<Option<&Vec<Point2>>> =
            self.modes.iter().map(|m| m.region.polygon.as_ref()).collect();
        for (s, p) in polys.iter().enumerate() {
            if p.is_none() {
                findings.push(Finding::error(format!(
                    "mode {s}: region has no 2D vertex representation"
                )));
            }
        }
        let domain_poly = match &self.domain.polygon {
            Some(p) => p,
            None => {
                findings.push(Finding::error("domain has no 2D vertex representation".into()));
                return;
            }
        };
        if polys.iter().any(|p| p.is_none()) {
            return;
        }
        let domain_area = geom::polygon_area(domain_poly);

        let mut total = 0.0;
        for (s, poly) in polys.iter().enumerate() {
            let poly = poly.unwrap();
            let area = geom::polygon_area(poly);
            total += area;
            let inside = geom::polygon_area(&geom::clip_convex(poly, domain_poly));
            if (inside - area).abs() > 1e-8 * domain_area.max(1.0) {
                findings.push(Finding::error(format!(
                    "mode {s}: region is not contained in the domain"
                )));
            }
        }
        if (total - domain_area).abs() > 1e-8 * domain_area.max(1.0) {
            findings.push(Finding::error(format!(
                "mode regions cover area {total:.12} but the domain has area {domain_area:.12}"
            )));
        }

        for s1 in 0..self.modes.len() {
            for s2 in (s1 + 1)..self.modes.len() {
                let p1 = polys[s1].unwrap();
                let p2 = polys[s2].unwrap();
                let overlap = geom::clip_convex(p1, p2);
                let overlap_area = geom::polygon_area(&overlap);
                if overlap_area > 1e-8 * domain_area.max(1.0) {
                    findings.push(Finding::error(format!(
                        "regions of modes {s1} and {s2} overlap with area {overlap_area:.3e}"
                    )));
                } else if overlap.len() >= 2 {
                    self.check_facet_continuity(s1, s2, &overlap, findings);
                }
            }
        }
    }

    /// Warns when the vector fields of two adjacent modes disagree on their
    /// shared boundary; such systems are accepted but the closed loop is a
    /// differential inclusion there.
    fn check_facet_continuity(
        &self,
        s1: usize,
        s2: usize,
        shared: &[Point2],
        findings: &mut Vec<Finding>,
    ) {
        let far = shared
            .iter()
            .flat_map(|p| shared.iter().map(move |q| (geom::dist(*p, *q), *p, *q)))
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let (len, p, q) = match far {
            Some(v) => v,
            None => return,
        };
        if len < TOL_GEO {
            return;
        }
        let m1 = &self.modes[s1];
        let m2 = &self.modes[s2];
        let db = (&m1.b - &m2.b).norm();
        let mut mismatch: f64 = if db > TOL_STATE { db } else { 0.0 };
        for t in [0.0, 0.5, 1.0] {
            let x = DVector::from_vec(vec![p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            let d = (&m1.a * &x + &m1.e) - (&m2.a * &x + &m2.e);
            mismatch = mismatch.max(d.norm());
        }
        if mismatch > TOL_STATE {
            findings.push(Finding::warning(format!(
                "modes {s1} and {s2} disagree on their shared boundary (max field gap {mismatch:.3e})"
            )));
        }
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Synthesis options carried in the problem file and overridable from the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthOptions {
    pub seed: u64,
    pub b2_target: f64,
    pub gamma: f64,
    pub rho0: f64,
    pub rho_min: f64,
    pub init: InitKind,
    pub cost: CostKind,
    pub max_iters_phase1: usize,
    pub max_iters_phase2: usize,
    pub tol_stag: f64,
    pub k_stag: usize,
    /// Norm exponent `a` used by random initialization.
    pub a_init: f64,
    /// Coefficient `b1` used by random initialization.
    pub b1_init: f64,
    /// LQR initialization state weight `Q = lqr_q I`.
    pub lqr_q: f64,
    /// LQR initialization input weight `R = lqr_r I`.
    pub lqr_r: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            b2_target: 0.5,
            gamma: 0.5,
            rho0: 4.0,
            rho_min: 0.5,
            init: InitKind::Lqr,
            cost: CostKind::U2,
            max_iters_phase1: 100,
            max_iters_phase2: 40,
            tol_stag: 1e-4,
            k_stag: 3,
            a_init: 2.0,
            b1_init: 0.1,
            lqr_q: 2.0,
            lqr_r: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Random,
    Lqr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// Sum of squared vertex inputs.
    U2,
    /// Sum of vertex input 1-norms.
    U1,
    /// Negated positivity coefficient, `-b1`.
    B1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    m: usize,
    modes: Vec<ModeFile>,
    input: InputFile,
    domain: DomainFile,
    #[serde(default)]
    options: SynthOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModeFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    e: Vec<f64>,
    region: RegionFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegionFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    halfspaces: Option<HalfspaceFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    polygon: Option<Vec<Point2>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HalfspaceFile {
    #[serde(rename = "Hx")]
    hx: Vec<Vec<f64>>,
    #[serde(rename = "hx")]
    rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct InputFile {
    #[serde(rename = "H")]
    h_mat: Vec<Vec<f64>>,
    h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DomainFile {
    polygon: Vec<Point2>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::Dimension(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(ModelError::Dimension(format!("{what}: ragged rows")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn region_from_file(file: &RegionFile, n: usize) -> Result<Polytope, ModelError> {
    match (&file.halfspaces, &file.polygon) {
        (Some(hs), polygon) => {
            let a = rows_to_matrix(&hs.hx, "region Hx")?;
            if a.ncols() != n {
                return Err(ModelError::Dimension(format!(
                    "region Hx has {} columns, expected {n}",
                    a.ncols()
                )));
            }
            if hs.rhs.len() != a.nrows() {
                return Err(ModelError::Dimension("region hx length != Hx rows".into()));
            }
            let b = DVector::from_vec(hs.rhs.clone());
            let mut poly = Polytope::from_halfspaces(a, b);
            if let Some(p) = polygon {
                for v in p {
                    let x = DVector::from_vec(vec![v[0], v[1]]);
                    if !poly.contains(&x, 1e-6) {
                        return Err(ModelError::Invalid(
                            "region polygon vertex violates its half-space form".into(),
                        ));
                    }
                }
                poly.polygon = Some(p.clone());
            }
            Ok(poly)
        }
        (None, Some(p)) => {
            if n != 2 {
                return Err(ModelError::Dimension(
                    "polygon-only regions are supported for n = 2 only".into(),
                ));
            }
            Ok(Polytope::from_polygon(p.clone()))
        }
        (None, None) => Err(ModelError::Invalid("region needs halfspaces or a polygon".into())),
    }
}

/// Loads a problem file, returning the system and its synthesis options.
pub fn load_problem(path: &Path) -> Result<(PwaSystem, SynthOptions), ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    problem_from_json(&text)
}

pub fn problem_from_json(text: &str) -> Result<(PwaSystem, SynthOptions), ModelError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let mut modes = Vec::with_capacity(file.modes.len());
    for (s, mode) in file.modes.iter().enumerate() {
        let a = rows_to_matrix(&mode.a, &format!("mode {s} A"))?;
        let b = rows_to_matrix(&mode.b, &format!("mode {s} B"))?;
        if mode.e.len() != file.n {
            return Err(ModelError::Dimension(format!("mode {s}: e length != n")));
        }
        let e = DVector::from_vec(mode.e.clone());
        let region = region_from_file(&mode.region, file.n)?;
        modes.push(PwaMode { a, b, e, region });
    }
    let input_a = rows_to_matrix(&file.input.h_mat, "input H")?;
    if input_a.ncols() != file.m {
        return Err(ModelError::Dimension("input H columns != m".into()));
    }
    if file.input.h.len() != input_a.nrows() {
        return Err(ModelError::Dimension("input h length != H rows".into()));
    }
    let input = Polytope::from_halfspaces(input_a, DVector::from_vec(file.input.h.clone()));
    let domain = Polytope::from_polygon(file.domain.polygon.clone());
    let sys = PwaSystem::new(modes, input, domain)?;
    if sys.n != file.n || sys.m != file.m {
        return Err(ModelError::Dimension("declared n/m disagree with matrix shapes".into()));
    }
    Ok((sys, file.options))
}

/// Serializes a system and options back to the problem-file schema.
pub fn problem_to_json(sys: &PwaSystem, options: &SynthOptions) -> Result<String, ModelError> {
    let modes = sys
        .modes
        .iter()
        .map(|m| ModeFile {
            a: matrix_to_rows(&m.a),
            b: matrix_to_rows(&m.b),
            e: m.e.iter().copied().collect(),
            region: RegionFile {
                halfspaces: Some(HalfspaceFile {
                    hx: matrix_to_rows(&m.region.a),
                    rhs: m.region.b.iter().copied().collect(),
                }),
                polygon: m.region.polygon.clone(),
            },
        })
        .collect();
    let domain_polygon = sys
        .domain
        .polygon
        .clone()
        .ok_or_else(|| ModelError::Invalid("domain has no polygon representation".into()))?;
    let file = ProblemFile {
        n: sys.n,
        m: sys.m,
        modes,
        input: InputFile {
            h_mat: matrix_to_rows(&sys.input.a),
            h: sys.input.b.iter().copied().collect(),
        },
        domain: DomainFile { polygon: domain_polygon },
        options: options.clone(),
    };
    Ok(serde_json::to_string_pretty(&file).expect("problem serialization cannot fail"))
}

pub fn save_problem(
    path: &Path,
    sys: &PwaSystem,
    options: &SynthOptions,
) -> Result<(), ModelError> {
    let text = problem_to_json(sys, options)?;
    std::fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}
