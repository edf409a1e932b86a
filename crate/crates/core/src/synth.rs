//! Controller and Lyapunov function synthesis.
//!
//! The decision object is a CPA pair `(V, U)` on a fixed triangulation plus
//! scalars `(a, b1, b2)`. Each step linearizes the bilinear decrease
//! constraints about the incumbent, pads the two bilinear cross terms with
//! quadratic blocks, and solves the resulting cone program; any solution of
//! the padded step also satisfies the exact constraints, so feasibility is
//! preserved while the phase objective never worsens. Phase 1 drives the
//! certified decay rate `b2` up; phase 2 freezes `b2` and minimizes a control
//! cost. On failure the mesh is regenerated at a scaled size field and the
//! whole loop retries until the minimum size is reached.

use crate::conic::{AffExpr, ConicProgram, LinSense, Objective, SolveStatus};
use crate::cpa::{self, ScalarField, SublevelSet, VectorField};
use crate::mesh::{self, MeshFile, SizeField, Triangulation};
use crate::model::{CostKind, InitKind, ModelError, PwaSystem, SynthOptions};
use crate::{EPS_POS, TOL_CERT, TOL_STATE};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mesh(#[from] mesh::MeshError),
    #[error(transparent)]
    Cpa(#[from] cpa::CpaError),
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
    #[error("no mode with e = 0 and a stabilizable (A, B) contains the origin")]
    NoOriginMode,
    #[error("the mesh has no origin vertex")]
    NoOriginVertex,
    #[error("(A, B) is not stabilizable: {0}")]
    NotStabilizable(String),
    #[error("Riccati residual {0:.3e} exceeds tolerance")]
    CareResidual(f64),
    #[error("{0}")]
    Invalid(String),
}

/// One synthesis iterate: the CPA pair and the certificate scalars.
#[derive(Debug, Clone)]
pub struct SynthState {
    pub mesh: Arc<Triangulation>,
    pub v: ScalarField,
    pub u: VectorField,
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SynthState,
    pub accepted: bool,
    pub status: SolveStatus,
    pub objective_before: f64,
    pub objective_after: f64,
    pub max_cert_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub b2: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub wall_ms: f64,
    pub status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    B2Target,
    Stagnation,
    CostTarget,
    RefinementExhausted,
}

/// Outcome of one mesh round inside the refinement loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub rho: f64,
    pub simplexes: usize,
    pub b2: f64,
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct SynthResult {
    pub state: SynthState,
    /// Invariant sublevel `(r, region)`; absent when synthesis failed.
    pub roa: Option<(f64, SublevelSet)>,
    pub history: Vec<HistoryRecord>,
    pub termination: TerminationReason,
    pub rounds: Vec<RoundRecord>,
    pub cert: CertReport,
}

impl SynthResult {
    pub fn success(&self) -> bool {
        matches!(self.termination, TerminationReason::B2Target | TerminationReason::CostTarget)
    }

    pub fn roa_level(&self) -> f64 {
        self.roa.as_ref().map(|(r, _)| *r).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct CertEntry {
    pub name: &'static str,
    pub violation: f64,
    /// Worst (simplex, local vertex) pair for the decrease constraints.
    pub pair: Option<(usize, usize)>,
}

/// Direct re-evaluation of every certificate constraint, solver-free.
#[derive(Debug, Clone)]
pub struct CertReport {
    pub ok: bool,
    pub max_violation: f64,
    pub entries: Vec<CertEntry>,
}

/// Re-checks `V0 = 0`, `u0 = 0`, `a >= 1`, `b1 >= eps`, `b1 |x|^a <= V`,
/// `H u <= h`, and the decrease constraint at every (simplex, vertex) pair.
pub fn verify_certificate(state: &SynthState, sys: &PwaSystem, tol: f64) -> CertReport {
    let mesh = &state.mesh;
    let mut entries = Vec::new();

    let origin = mesh.origin_vertex;
    let v0 = origin.map(|o| state.v.values[o].abs()).unwrap_or(f64::INFINITY);
    entries.push(CertEntry { name: "V0 = 0", violation: v0, pair: None });
    let u0 = origin
        .map(|o| state.u.values[o].amax())
        .unwrap_or(f64::INFINITY);
    entries.push(CertEntry { name: "u0 = 0", violation: u0, pair: None });
    entries.push(CertEntry { name: "a >= 1", violation: 1.0 - state.a, pair: None });
    entries.push(CertEntry { name: "b1 >= eps", violation: EPS_POS - state.b1, pair: None });

    let mut lower = f64::NEG_INFINITY;
    for (vid, x) in mesh.vertices.iter().enumerate() {
        if Some(vid) == origin {
            continue;
        }
        lower = lower.max(state.b1 * x.norm().powf(state.a) - state.v.values[vid]);
    }
    entries.push(CertEntry { name: "b1 |x|^a <= V", violation: lower, pair: None });

    let mut input = f64::NEG_INFINITY;
    for u in &state.u.values {
        let slack = &sys.input.a * u - &sys.input.b;
        input = input.max(slack.max());
    }
    entries.push(CertEntry { name: "H u <= h", violation: input, pair: None });

    let mut dini_worst = f64::NEG_INFINITY;
    let mut worst_pair = None;
    for i in 0..mesh.num_simplexes() {
        for j in 0..=mesh.dim {
            let vid = mesh.simplexes[i].vertices[j];
            if Some(vid) == origin {
                continue;
            }
            let d = cpa::dini(&state.v, &state.u, sys, i, j).unwrap_or(f64::INFINITY)
                + state.b2 * state.v.values[vid];
            if d > dini_worst {
                dini_worst = d;
                worst_pair = Some((i, j));
            }
        }
    }
    entries.push(CertEntry { name: "D+V <= -b2 V", violation: dini_worst, pair: worst_pair });

    let max_violation = entries.iter().map(|e| e.violation).fold(f64::NEG_INFINITY, f64::max);
    CertReport { ok: max_violation <= tol, max_violation, entries }
}

/// Solves `A'P + PA - P B R^-1 B' P + Q = 0` through the matrix sign of the
/// Hamiltonian, with determinant scaling for conditioning.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthError> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| SynthError::Invalid("R is singular".into()))?;
    let g = b * &r_inv * b.transpose();

    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h;
    let mut converged = false;
    for _ in 0..100 {
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| SynthError::NotStabilizable("Hamiltonian sign iteration broke down".into()))?;
        let det = z.determinant().abs().max(f64::MIN_POSITIVE);
        let c = det.powf(1.0 / (2.0 * n as f64));
        let z_new = 0.5 * (&z / c + c * z_inv);
        let delta = (&z_new - &z).norm();
        z = z_new;
        if delta <= 1e-13 * z.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SynthError::NotStabilizable("sign iteration did not converge".into()));
    }

    // Range of (I - sign(H)) / 2 is the stable invariant subspace.
    let projector = 0.5 * (DMatrix::identity(2 * n, 2 * n) - &z);
    let qr = projector.clone().col_piv_qr();
    let r_diag = qr.r();
    let lead = r_diag[(0, 0)].abs().max(f64::MIN_POSITIVE);
    let rank = (0..2 * n).take_while(|&k| r_diag[(k, k)].abs() > 1e-9 * lead).count();
    if rank != n {
        return Err(SynthError::NotStabilizable(format!(
            "stable subspace has dimension {rank}, expected {n}"
        )));
    }
    let basis = qr.q();
    let u1 = DMatrix::from(basis.view((0, 0), (n, n)));
    let u2 = DMatrix::from(basis.view((n, 0), (n, n)));
    let u1_inv = u1
        .try_inverse()
        .ok_or_else(|| SynthError::NotStabilizable("stable subspace basis is degenerate".into()))?;
    let x = u2 * u1_inv;
    let p = 0.5 * (&x + &x.transpose());

    let residual = (a.transpose() * &p + &p * a - &p * &g * &p + q).norm();
    if residual > 1e-8 {
        return Err(SynthError::CareResidual(residual));
    }
    Ok(p)
}

fn require_origin(mesh: &Triangulation) -> Result<usize, SynthError> {
    mesh.origin_vertex.ok_or(SynthError::NoOriginVertex)
}

/// `V = b1 |x|^a`, inputs drawn uniformly from the input polytope by
/// hit-and-run (50 steps per vertex, seeded), `b2` set to the largest
/// certified rate of the drawn pair.
pub fn init_random(
    mesh: &Arc<Triangulation>,
    sys: &PwaSystem,
    a: f64,
    b1: f64,
    seed: u64,
) -> Result<SynthState, SynthError> {
    if a <= 0.0 || b1 <= 0.0 {
        return Err(SynthError::Invalid("random init needs a > 0 and b1 > 0".into()));
    }
    let origin = require_origin(mesh)?;
    let values: Vec<f64> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(vid, x)| if vid == origin { 0.0 } else { b1 * x.norm().powf(a) })
        .collect();
    let v = ScalarField::new(mesh.clone(), values)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(mesh.num_vertices());
    for vid in 0..mesh.num_vertices() {
        if vid == origin {
            inputs.push(DVector::zeros(sys.m));
            continue;
        }
        inputs.push(hit_and_run(&sys.input.a, &sys.input.b, sys.m, 50, &mut rng));
    }
    let u = VectorField::new(mesh.clone(), inputs, sys.m)?;
    let b2 = cpa::largest_b2(&v, &u, sys)?;
    Ok(SynthState { mesh: mesh.clone(), v, u, a, b1, b2 })
}

fn hit_and_run(
    h: &DMatrix<f64>,
    rhs: &DVector<f64>,
    m: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let mut u = DVector::zeros(m);
    for _ in 0..steps {
        let mut d = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let norm = d.norm();
        if norm < 1e-12 {
            continue;
        }
        d /= norm;
        let hd = h * &d;
        let slack = rhs - h * &u;
        let mut lo = -1e3_f64;
        let mut hi = 1e3_f64;
        for row in 0..h.nrows() {
            let c = hd[row];
            if c > 1e-12 {
                hi = hi.min(slack[row] / c);
            } else if c < -1e-12 {
                lo = lo.max(slack[row] / c);
            } else if slack[row] < -1e-9 {
                return DVector::zeros(m);
            }
        }
        if hi <= lo {
            continue;
        }
        let t = rng.gen_range(lo..hi);
        u += t * d;
    }
    u
}

/// LQR initialization about the origin mode: `V = x' P x` from the Riccati
/// solution, the linear feedback sampled at vertices and uniformly scaled into
/// the input polytope.
pub fn init_lqr(
    mesh: &Arc<Triangulation>,
    sys: &PwaSystem,
    opts: &SynthOptions,
) -> Result<SynthState, SynthError> {
    let origin = require_origin(mesh)?;
    let at_origin = sys.mode_at(&sys.origin())?;
    let q = DMatrix::identity(sys.n, sys.n) * opts.lqr_q;
    let r = DMatrix::identity(sys.m, sys.m) * opts.lqr_r;

    let mut solved = None;
    for &s in &at_origin {
        let mode = &sys.modes[s];
        if mode.e.norm() > TOL_STATE {
            continue;
        }
        if let Ok(p) = solve_care(&mode.a, &mode.b, &q, &r) {
            solved = Some((s, p));
            break;
        }
    }
    let (s, p) = solved.ok_or(SynthError::NoOriginMode)?;
    let mode = &sys.modes[s];

    let values: Vec<f64> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(vid, x)| if vid == origin { 0.0 } else { (x.transpose() * &p * x)[0] })
        .collect();
    let v = ScalarField::new(mesh.clone(), values)?;
    let b1 = nalgebra::SymmetricEigen::new(p.clone())
        .eigenvalues
        .min();

    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| SynthError::Invalid("R is singular".into()))?;
    let gain = -(&r_inv * mode.b.transpose() * &p);
    let mut inputs: Vec<DVector<f64>> = mesh.vertices.iter().map(|x| &gain * x).collect();
    inputs[origin] = DVector::zeros(sys.m);

    // Smallest kappa >= 1 bringing every vertex input inside the polytope.
    let mut kappa = 1.0_f64;
    for u in &inputs {
        let hu = &sys.input.a * u;
        for row in 0..hu.len() {
            if hu[row] > 0.0 && sys.input.b[row] > 0.0 {
                kappa = kappa.max(hu[row] / sys.input.b[row]);
            }
        }
    }
    for u in inputs.iter_mut() {
        *u /= kappa;
    }
    if inputs.iter().any(|u| {
        let slack = &sys.input.a * u - &sys.input.b;
        slack.max() > 1e-9
    }) {
        for u in inputs.iter_mut() {
            u.fill(0.0);
        }
    }

    let u = VectorField::new(mesh.clone(), inputs, sys.m)?;
    let b2 = cpa::largest_b2(&v, &u, sys)?;
    Ok(SynthState { mesh: mesh.clone(), v, u, a: 2.0, b1, b2 })
}

/// Objective of one convex step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepObjective {
    /// Phase 1: minimize `-delta b2`.
    MaxB2,
    /// Phase 2: minimize the named control cost at the new iterate.
    Cost(CostKind),
}

fn cost_value(state: &SynthState, kind: CostKind) -> f64 {
    match kind {
        CostKind::U2 => state.u.values.iter().map(|u| u.norm_squared()).sum(),
        CostKind::U1 => state.u.values.iter().map(|u| u.iter().map(|c| c.abs()).sum::<f64>()).sum(),
        CostKind::B1 => -state.b1,
    }
}

fn objective_value(state: &SynthState, objective: StepObjective) -> f64 {
    match objective {
        StepObjective::MaxB2 => -state.b2,
        StepObjective::Cost(kind) => cost_value(state, kind),
    }
}

/// One convexified step about `state`. Variables are the increments
/// (per-vertex dV, per-vertex du, db1, and db2 unless frozen); the returned
/// state is the incumbent plus the optimal increment, or the incumbent
/// unchanged when the solve or the certificate check fails.
pub fn sdp_step(
    state: &SynthState,
    sys: &PwaSystem,
    objective: StepObjective,
    freeze_b2: bool,
) -> Result<StepResult, SynthError> {
    let mesh = &state.mesh;
    let origin = require_origin(mesh)?;
    let nv = mesh.num_vertices();
    let m = sys.m;
    let n = mesh.dim;

    let idx_dv = |vid: usize| vid;
    let idx_du = |vid: usize, c: usize| nv + vid * m + c;
    let idx_db1 = nv * (1 + m);
    let idx_db2 = nv * (1 + m) + 1;
    let base_vars = if freeze_b2 { idx_db1 + 1 } else { idx_db2 + 1 };

    let num_vars = match objective {
        StepObjective::Cost(CostKind::U1) => base_vars + nv * m,
        _ => base_vars,
    };
    let mut prog = ConicProgram::new(num_vars);

    let mut pin = AffExpr::var(idx_dv(origin));
    pin.constant = 0.0;
    prog.add_linear(pin, LinSense::Eq);
    for c in 0..m {
        prog.add_linear(AffExpr::var(idx_du(origin, c)), LinSense::Eq);
    }

    let mut floor = AffExpr::constant(EPS_POS - state.b1);
    floor.push(idx_db1, -1.0);
    prog.add_linear(floor, LinSense::Le);

    for (vid, x) in mesh.vertices.iter().enumerate() {
        if vid == origin {
            continue;
        }
        let pow = x.norm().powf(state.a);
        let mut row = AffExpr::constant(pow * state.b1 - state.v.values[vid]);
        row.push(idx_db1, pow);
        row.push(idx_dv(vid), -1.0);
        prog.add_linear(row, LinSense::Le);
    }

    for (vid, u) in state.u.values.iter().enumerate() {
        let hu = &sys.input.a * u;
        for r in 0..sys.input.a.nrows() {
            let mut row = AffExpr::constant(hu[r] - sys.input.b[r]);
            for c in 0..m {
                row.push(idx_du(vid, c), sys.input.a[(r, c)]);
            }
            prog.add_linear(row, LinSense::Le);
        }
    }

    for i in 0..mesh.num_simplexes() {
        let s = &mesh.simplexes[i];
        let mode = &sys.modes[s.mode];
        let gv = state.v.gradient(i);
        let btg = mode.b.transpose() * gv;
        // delta grad V_i, component k, as an affine expression in the dV vars.
        let dgrad: Vec<AffExpr> = (0..n)
            .map(|k| {
                let mut e = AffExpr::default();
                let mut v0_coef = 0.0;
                for jj in 0..n {
                    let coef = s.shape_inv[(k, jj)];
                    e.push(idx_dv(s.vertices[jj + 1]), coef);
                    v0_coef -= coef;
                }
                e.push(idx_dv(s.vertices[0]), v0_coef);
                e
            })
            .collect();

        for j in 0..=n {
            let vid = s.vertices[j];
            let x = &mesh.vertices[vid];
            let f = &mode.a * x + &mode.b * &state.u.values[vid] + &mode.e;
            let vx = state.v.values[vid];

            let mut phi = AffExpr::constant(gv.dot(&f) + state.b2 * vx);
            for k in 0..n {
                let fk = f[k];
                if fk != 0.0 {
                    for &(var, coef) in &dgrad[k].terms {
                        phi.push(var, fk * coef);
                    }
                }
            }
            for c in 0..m {
                phi.push(idx_du(vid, c), btg[c]);
            }
            phi.push(idx_dv(vid), state.b2);
            if !freeze_b2 {
                phi.push(idx_db2, vx);
            }

            if vid == origin {
                prog.add_linear(phi, LinSense::Le);
                continue;
            }

            let bdu: Vec<AffExpr> = (0..n)
                .map(|k| {
                    let mut e = AffExpr::default();
                    for c in 0..m {
                        e.push(idx_du(vid, c), mode.b[(k, c)]);
                    }
                    e
                })
                .collect();
            let mut vectors = vec![dgrad.clone(), bdu, vec![AffExpr::var(idx_dv(vid))]];
            if !freeze_b2 {
                vectors.push(vec![AffExpr::var(idx_db2)]);
            }
            prog.add_block(phi, vectors);
        }
    }

    let objective_before = objective_value(state, objective);
    match objective {
        StepObjective::MaxB2 => {
            prog.objective = Objective {
                constant: -state.b2,
                linear: vec![(idx_db2, -1.0)],
                quadratic: Vec::new(),
            };
        }
        StepObjective::Cost(CostKind::U2) => {
            let mut linear = Vec::new();
            let mut quadratic = Vec::new();
            let mut constant = 0.0;
            for (vid, u) in state.u.values.iter().enumerate() {
                for c in 0..m {
                    constant += u[c] * u[c];
                    linear.push((idx_du(vid, c), 2.0 * u[c]));
                    quadratic.push((idx_du(vid, c), idx_du(vid, c), 1.0));
                }
            }
            prog.objective = Objective { constant, linear, quadratic };
        }
        StepObjective::Cost(CostKind::U1) => {
            let mut linear = Vec::new();
            for (vid, u) in state.u.values.iter().enumerate() {
                for c in 0..m {
                    let t = base_vars + vid * m + c;
                    linear.push((t, 1.0));
                    let mut upper = AffExpr::constant(u[c]);
                    upper.push(idx_du(vid, c), 1.0);
                    upper.push(t, -1.0);
                    prog.add_linear(upper, LinSense::Le);
                    let mut lower = AffExpr::constant(-u[c]);
                    lower.push(idx_du(vid, c), -1.0);
                    lower.push(t, -1.0);
                    prog.add_linear(lower, LinSense::Le);
                }
            }
            prog.objective = Objective { constant: 0.0, linear, quadratic: Vec::new() };
        }
        StepObjective::Cost(CostKind::B1) => {
            prog.objective = Objective {
                constant: -state.b1,
                linear: vec![(idx_db1, -1.0)],
                quadratic: Vec::new(),
            };
        }
    }

    let sol = prog.solve()?;
    if sol.status != SolveStatus::Optimal {
        return Ok(StepResult {
            state: state.clone(),
            accepted: false,
            status: sol.status,
            objective_before,
            objective_after: objective_before,
            max_cert_residual: f64::NAN,
        });
    }

    let mut values = state.v.values.clone();
    for vid in 0..nv {
        values[vid] += sol.x[idx_dv(vid)];
    }
    values[origin] = 0.0;
    let mut inputs = state.u.values.clone();
    for (vid, u) in inputs.iter_mut().enumerate() {
        for c in 0..m {
            u[c] += sol.x[idx_du(vid, c)];
        }
    }
    inputs[origin].fill(0.0);
    let new_state = SynthState {
        mesh: mesh.clone(),
        v: ScalarField::new(mesh.clone(), values)?,
        u: VectorField::new(mesh.clone(), inputs, m)?,
        a: state.a,
        b1: state.b1 + sol.x[idx_db1],
        b2: if freeze_b2 { state.b2 } else { state.b2 + sol.x[idx_db2] },
    };

    let cert = verify_certificate(&new_state, sys, TOL_CERT);
    if !cert.ok {
        return Ok(StepResult {
            state: state.clone(),
            accepted: false,
            status: SolveStatus::NumericalFailure,
            objective_before,
            objective_after: objective_before,
            max_cert_residual: cert.max_violation,
        });
    }
    let objective_after = objective_value(&new_state, objective);
    Ok(StepResult {
        state: new_state,
        accepted: true,
        status: sol.status,
        objective_before,
        objective_after,
        max_cert_residual: cert.max_violation,
    })
}

/// Largest `b1` valid for the state's `V`: the vertex-wise minimum of
/// `V / |x|^a`. Vertex satisfaction extends to the whole domain because
/// `|x|^a` is convex for `a >= 1`. The step programs leave `b1` free in the
/// objective's nullspace, so it is re-tightened after the phases.
fn tighten_b1(state: &SynthState) -> f64 {
    let origin = state.mesh.origin_vertex;
    let mut best = f64::INFINITY;
    for (vid, x) in state.mesh.vertices.iter().enumerate() {
        if Some(vid) == origin {
            continue;
        }
        best = best.min(state.v.values[vid] / x.norm().powf(state.a));
    }
    if best.is_finite() {
        best.max(state.b1)
    } else {
        state.b1
    }
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::IterationLimit => "iteration-limit",
        SolveStatus::NumericalFailure => "numerical-failure",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PhaseEnd {
    ReachedTarget,
    Stagnated,
    MaxIters,
    SolverFailed,
}

fn phase1(
    mut state: SynthState,
    sys: &PwaSystem,
    opts: &SynthOptions,
    history: &mut Vec<HistoryRecord>,
) -> Result<(SynthState, PhaseEnd), SynthError> {
    let mut stagnant = 0usize;
    for _ in 0..opts.max_iters_phase1 {
        if state.b2 >= opts.b2_target {
            return Ok((state, PhaseEnd::ReachedTarget));
        }
        let clock = Instant::now();
        let step = sdp_step(&state, sys, StepObjective::MaxB2, false)?;
        history.push(HistoryRecord {
            iter: history.len() + 1,
            b2: step.state.b2,
            j: -step.state.b2,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            status: status_name(step.status).into(),
        });
        if !step.accepted {
            return Ok((state, PhaseEnd::SolverFailed));
        }
        let delta = step.state.b2 - state.b2;
        state = step.state;
        if delta.abs() < opts.tol_stag * state.b2.abs().max(1.0) {
            stagnant += 1;
            if stagnant >= opts.k_stag {
                return Ok((state, PhaseEnd::Stagnated));
            }
        } else {
            stagnant = 0;
        }
    }
    if state.b2 >= opts.b2_target {
        return Ok((state, PhaseEnd::ReachedTarget));
    }
    Ok((state, PhaseEnd::MaxIters))
}

fn phase2(
    mut state: SynthState,
    sys: &PwaSystem,
    opts: &SynthOptions,
    history: &mut Vec<HistoryRecord>,
) -> Result<(SynthState, PhaseEnd), SynthError> {
    let mut stagnant = 0usize;
    for _ in 0..opts.max_iters_phase2 {
        let clock = Instant::now();
        let step = sdp_step(&state, sys, StepObjective::Cost(opts.cost), true)?;
        history.push(HistoryRecord {
            iter: history.len() + 1,
            b2: step.state.b2,
            j: step.objective_after,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            status: status_name(step.status).into(),
        });
        if !step.accepted {
            return Ok((state, PhaseEnd::SolverFailed));
        }
        let delta = step.objective_after - step.objective_before;
        state = step.state;
        if delta.abs() < opts.tol_stag * step.objective_after.abs().max(1.0) {
            stagnant += 1;
            if stagnant >= opts.k_stag {
                return Ok((state, PhaseEnd::Stagnated));
            }
        } else {
            stagnant = 0;
        }
    }
    Ok((state, PhaseEnd::MaxIters))
}

/// Two-phase synthesis on a fixed mesh: raise `b2`, then (when positive)
/// freeze it and minimize the configured cost; finally extract the largest
/// connected invariant sublevel set.
pub fn synthesize(
    sys: &PwaSystem,
    mesh: Arc<Triangulation>,
    opts: &SynthOptions,
) -> Result<SynthResult, SynthError> {
    let init = match opts.init {
        InitKind::Random => init_random(&mesh, sys, opts.a_init, opts.b1_init, opts.seed)?,
        InitKind::Lqr => init_lqr(&mesh, sys, opts)?,
    };
    let mut history = Vec::new();
    let (state, end1) = phase1(init, sys, opts, &mut history)?;

    if state.b2 <= 0.0 {
        let cert = verify_certificate(&state, sys, TOL_CERT);
        return Ok(SynthResult {
            state,
            roa: None,
            history,
            termination: TerminationReason::Stagnation,
            rounds: Vec::new(),
            cert,
        });
    }

    let run_phase2 = opts.max_iters_phase2 > 0 && end1 != PhaseEnd::SolverFailed;
    let mut state = if run_phase2 {
        phase2(state, sys, opts, &mut history)?.0
    } else {
        state
    };
    state.b1 = tighten_b1(&state);

    let cert = verify_certificate(&state, sys, TOL_CERT);
    if !cert.ok {
        return Ok(SynthResult {
            state,
            roa: None,
            history,
            termination: TerminationReason::Stagnation,
            rounds: Vec::new(),
            cert,
        });
    }
    let (r, region) = cpa::max_invariant_level(&state.v)?;
    let termination =
        if run_phase2 { TerminationReason::CostTarget } else { TerminationReason::B2Target };
    Ok(SynthResult {
        state,
        roa: Some((r, region)),
        history,
        termination,
        rounds: Vec::new(),
        cert,
    })
}

/// Outer refinement loop: retry synthesis on meshes regenerated at
/// geometrically shrinking size fields until success or the minimum size.
pub fn synthesize_with_refinement(
    sys: &PwaSystem,
    opts: &SynthOptions,
) -> Result<SynthResult, SynthError> {
    if !(0.0 < opts.gamma && opts.gamma < 1.0) {
        return Err(SynthError::Invalid(format!("gamma must be in (0, 1), got {}", opts.gamma)));
    }
    let mut rho = opts.rho0;
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut history: Vec<HistoryRecord> = Vec::new();
    loop {
        let field = SizeField::constant(rho);
        let tri = mesh::triangulate(sys, &field)?;
        let mut result = synthesize(sys, Arc::new(tri), opts)?;
        for mut record in result.history.drain(..) {
            record.iter = history.len() + 1;
            history.push(record);
        }
        rounds.push(RoundRecord {
            rho,
            simplexes: result.state.mesh.num_simplexes(),
            b2: result.state.b2,
            certified: result.success(),
        });
        result.history = std::mem::take(&mut history);
        result.rounds = std::mem::take(&mut rounds);
        if result.success() {
            return Ok(result);
        }
        let next = rho * opts.gamma;
        if next < opts.rho_min {
            result.termination = TerminationReason::RefinementExhausted;
            return Ok(result);
        }
        history = result.history;
        rounds = result.rounds;
        rho = next;
    }
}

/// Simplexes violating the decrease constraint at some nonzero vertex, the
/// candidates for local refinement. Ties at zero are included; a negative
/// incumbent `b2` is clamped to zero for the check.
pub fn mark_for_local_refinement(state: &SynthState, sys: &PwaSystem) -> Vec<usize> {
    let mesh = &state.mesh;
    let b2 = state.b2.max(0.0);
    let origin = mesh.origin_vertex;
    let mut marked = Vec::new();
    for i in 0..mesh.num_simplexes() {
        let mut bad = false;
        for j in 0..=mesh.dim {
            let vid = mesh.simplexes[i].vertices[j];
            if Some(vid) == origin {
                continue;
            }
            let d = cpa::dini(&state.v, &state.u, sys, i, j).unwrap_or(f64::INFINITY);
            if d + b2 * state.v.values[vid] >= 0.0 {
                bad = true;
                break;
            }
        }
        if bad {
            marked.push(i);
        }
    }
    marked
}

/// History entry as stored in result files. Wall time is kept out so reruns
/// with identical inputs serialize bit-identically; timings live in the
/// history CSV log instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistoryFileRecord {
    pub iter: usize,
    pub b2: f64,
    #[serde(rename = "J")]
    pub j: f64,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ResultFile {
    a: f64,
    b1: f64,
    b2: f64,
    r: f64,
    vertices: Vec<Vec<f64>>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    mesh: MeshFile,
    history: Vec<HistoryFileRecord>,
    termination: TerminationReason,
}

/// A result reloaded from disk: enough to evaluate, verify, and simulate the
/// controller without re-solving.
#[derive(Debug, Clone)]
pub struct SavedResult {
    pub state: SynthState,
    pub r: f64,
    pub history: Vec<HistoryFileRecord>,
    pub termination: TerminationReason,
}

pub fn result_to_json(result: &SynthResult) -> String {
    let state = &result.state;
    let file = ResultFile {
        a: state.a,
        b1: state.b1,
        b2: state.b2,
        r: result.roa_level(),
        vertices: state.mesh.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        v: state.v.values.clone(),
        u: state.u.values.iter().map(|u| u.iter().copied().collect()).collect(),
        mesh: MeshFile::from_triangulation(&state.mesh),
        history: result
            .history
            .iter()
            .map(|h| HistoryFileRecord { iter: h.iter, b2: h.b2, j: h.j, status: h.status.clone() })
            .collect(),
        termination: result.termination,
    };
    serde_json::to_string_pretty(&file).expect("result serialization cannot fail")
}

pub fn result_from_json(text: &str) -> Result<SavedResult, SynthError> {
    let file: ResultFile =
        serde_json::from_str(text).map_err(|e| SynthError::Invalid(format!("result file: {e}")))?;
    let tri = file.mesh.into_triangulation()?;
    let mesh = Arc::new(tri);
    let width = file.u.first().map(|u| u.len()).unwrap_or(0);
    let v = ScalarField::new(mesh.clone(), file.v)?;
    let u = VectorField::new(
        mesh.clone(),
        file.u.into_iter().map(DVector::from_vec).collect(),
        width,
    )?;
    Ok(SavedResult {
        state: SynthState { mesh, v, u, a: file.a, b1: file.b1, b2: file.b2 },
        r: file.r,
        history: file.history,
        termination: file.termination,
    })
}
