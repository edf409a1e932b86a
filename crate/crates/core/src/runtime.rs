//! Online controller evaluation and closed-loop simulation.
//!
//! Two controllers share one interface: direct interpolation of the
//! synthesized CPA input field, and a pointwise min-norm program that keeps
//! only the certified decrease inequalities as constraints and picks the
//! cheapest admissible input. Simulation integrates the closed loop with
//! fixed-step RK4, re-resolving the active mode and the input at every stage.

use crate::conic::{AffExpr, ConicProgram, LinSense, Objective, SolveStatus};
use crate::cpa::{CpaError, ScalarField, SublevelSet, VectorField};
use crate::model::{ModelError, PwaSystem};
use crate::{RK4_H, TOL_GEO};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Cpa(#[from] CpaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Conic(#[from] crate::conic::ConicError),
    #[error("min-norm program infeasible at [{0}]")]
    Infeasible(String),
    #[error("min-norm solve failed at [{0}]: {1}")]
    SolveFailed(String, &'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Pointwise controller.
#[derive(Debug, Clone)]
pub enum Controller {
    /// Interpolates the synthesized CPA input field.
    Cpa(VectorField),
    /// Minimizes `u' H u + h' u` subject to the certified decrease
    /// inequalities of every simplex containing `x` plus the input polytope.
    MinNorm {
        v: ScalarField,
        b2: f64,
        cost_h: DMatrix<f64>,
        cost_lin: DVector<f64>,
    },
}

impl Controller {
    /// Min-norm controller with the default cost `u' u`.
    pub fn min_norm(v: ScalarField, b2: f64, m: usize) -> Self {
        Controller::MinNorm {
            v,
            b2,
            cost_h: DMatrix::identity(m, m),
            cost_lin: DVector::zeros(m),
        }
    }

    pub fn eval(&self, sys: &PwaSystem, x: &DVector<f64>) -> Result<DVector<f64>, RuntimeError> {
        match self {
            Controller::Cpa(u) => Ok(u.eval(x)?),
            Controller::MinNorm { v, b2, cost_h, cost_lin } => {
                min_norm_input(v, *b2, cost_h, cost_lin, sys, x)
            }
        }
    }
}

/// Decrease rows `(B' gV_i)' u <= -gV_i . (A x + e) - b2 V(x)` for every
/// simplex containing `x`, stacked over the input polytope rows.
fn decrease_rows(
    v: &ScalarField,
    b2: f64,
    sys: &PwaSystem,
    x: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>), RuntimeError> {
    let hits = v.mesh.locate(x);
    if hits.is_empty() {
        return Err(RuntimeError::Cpa(CpaError::OutOfMesh(fmt_state(x))));
    }
    let vx = v.eval_on(hits[0], x);
    let m = sys.m;
    let p = sys.input.a.nrows();
    let mut a = DMatrix::zeros(p + hits.len(), m);
    let mut b = DVector::zeros(p + hits.len());
    a.view_mut((0, 0), (p, m)).copy_from(&sys.input.a);
    b.rows_mut(0, p).copy_from(&sys.input.b);
    for (k, &i) in hits.iter().enumerate() {
        let g = v.gradient(i);
        let mode = &sys.modes[v.mesh.simplexes[i].mode];
        let row = (mode.b.transpose() * g).transpose();
        a.row_mut(p + k).copy_from(&row);
        b[p + k] = -g.dot(&(&mode.a * x + &mode.e)) - b2 * vx;
    }
    Ok((a, b))
}

fn fmt_state(x: &DVector<f64>) -> String {
    x.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(", ")
}

fn min_norm_input(
    v: &ScalarField,
    b2: f64,
    cost_h: &DMatrix<f64>,
    cost_lin: &DVector<f64>,
    sys: &PwaSystem,
    x: &DVector<f64>,
) -> Result<DVector<f64>, RuntimeError> {
    // At a numerically zero state the certificate pins the input to zero, and
    // the decrease rows of adjacent simplexes degenerate to conflicting
    // roundoff-scale bounds; short-circuit before building them.
    if x.norm() <= 10.0 * TOL_GEO {
        return Ok(DVector::zeros(sys.m));
    }
    let (a, b) = decrease_rows(v, b2, sys, x)?;
    let m = sys.m;
    if m == 1 {
        // Scalar input: the feasible set is an interval and the quadratic
        // cost is minimized by clamping its vertex into it.
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for r in 0..a.nrows() {
            let c = a[(r, 0)];
            if c > TOL_GEO {
                hi = hi.min(b[r] / c);
            } else if c < -TOL_GEO {
                lo = lo.max(b[r] / c);
            } else if b[r] < -1e-7 * (1.0 + b[r].abs()) {
                return Err(RuntimeError::Infeasible(fmt_state(x)));
            }
        }
        if lo > hi {
            // Rows gathered from simplexes that contain x only within the
            // locate tolerance can conflict at roundoff scale even though
            // each admits the certified input; collapse such slivers.
            let slack = 1e-7 * lo.abs().max(hi.abs()).max(1.0);
            if lo > hi + slack {
                return Err(RuntimeError::Infeasible(fmt_state(x)));
            }
            let mid = 0.5 * (lo + hi);
            lo = mid;
            hi = mid;
        }
        let vertex = if cost_h[(0, 0)] > 0.0 { -cost_lin[0] / (2.0 * cost_h[(0, 0)]) } else { 0.0 };
        return Ok(DVector::from_element(1, vertex.clamp(lo, hi)));
    }

    let mut prog = ConicProgram::new(m);
    let mut quadratic = Vec::new();
    for i in 0..m {
        for j in i..m {
            let coef = if i == j { cost_h[(i, i)] } else { cost_h[(i, j)] + cost_h[(j, i)] };
            if coef != 0.0 {
                quadratic.push((i, j, coef));
            }
        }
    }
    prog.objective = Objective {
        constant: 0.0,
        linear: (0..m).filter(|&i| cost_lin[i] != 0.0).map(|i| (i, cost_lin[i])).collect(),
        quadratic,
    };
    for r in 0..a.nrows() {
        let mut row = AffExpr::constant(-b[r]);
        for c in 0..m {
            row.push(c, a[(r, c)]);
        }
        prog.add_linear(row, LinSense::Le);
    }
    let sol = prog.solve()?;
    match sol.status {
        SolveStatus::Optimal => Ok(DVector::from_vec(sol.x)),
        SolveStatus::Infeasible => Err(RuntimeError::Infeasible(fmt_state(x))),
        SolveStatus::IterationLimit => Err(RuntimeError::SolveFailed(fmt_state(x), "iteration limit")),
        SolveStatus::NumericalFailure => {
            Err(RuntimeError::SolveFailed(fmt_state(x), "numerical failure"))
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// RK4 step size.
    pub h: f64,
    pub t_max: f64,
    /// Settling ball radius; settling latches when the state stays inside
    /// through the end of the horizon.
    pub settle_radius: f64,
    /// Optional certified early stop: end the run as settled once
    /// `V(x) <= stop_v`, valid when `stop_v <= b1 * settle_radius^a`.
    pub stop_v: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { h: RK4_H, t_max: 20.0, settle_radius: 0.01, stop_v: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimOutcome {
    /// Ended inside the settling ball (directly or by certified early stop).
    Settled,
    EscapedDomain,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// `V` along the run when a Lyapunov function was supplied.
    pub v_values: Option<Vec<f64>>,
    pub settling_time: Option<f64>,
    pub outcome: SimOutcome,
}

fn vector_field(
    sys: &PwaSystem,
    ctrl: &Controller,
    x: &DVector<f64>,
) -> Result<DVector<f64>, RuntimeError> {
    let s = sys.active_mode(x)?;
    let mode = &sys.modes[s];
    let u = ctrl.eval(sys, x)?;
    Ok(&mode.a * x + &mode.b * &u + &mode.e)
}

/// Fixed-step RK4 closed-loop run from `x0`. The mode and input are resolved
/// at every integration stage; leaving the domain or the mesh ends the run.
pub fn simulate(
    sys: &PwaSystem,
    ctrl: &Controller,
    v: Option<&ScalarField>,
    x0: &DVector<f64>,
    opts: &SimOptions,
) -> Result<Trajectory, RuntimeError> {
    let steps = (opts.t_max / opts.h).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps + 1);
    let mut v_values = v.map(|_| Vec::with_capacity(steps + 1));

    let mut x = x0.clone();
    let mut outcome = SimOutcome::TimeLimit;
    let mut stopped_at = None;
    for k in 0..=steps {
        let t = k as f64 * opts.h;
        let u = match ctrl.eval(sys, &x) {
            Ok(u) => u,
            Err(RuntimeError::Cpa(CpaError::OutOfMesh(_))) | Err(RuntimeError::Model(ModelError::OutOfDomain(_))) => {
                outcome = SimOutcome::EscapedDomain;
                break;
            }
            Err(e) => return Err(e),
        };
        times.push(t);
        states.push(x.clone());
        inputs.push(u);
        let vx = match v {
            Some(vf) => Some(vf.eval(&x)?),
            None => None,
        };
        if let Some(val) = vx {
            v_values.as_mut().expect("allocated with v").push(val);
            if opts.stop_v.is_some_and(|stop| val <= stop) {
                outcome = SimOutcome::Settled;
                stopped_at = Some(t);
                break;
            }
        }
        if k == steps {
            break;
        }
        let step = rk4_step(sys, ctrl, &x, opts.h);
        match step {
            Ok(next) => x = next,
            Err(RuntimeError::Cpa(CpaError::OutOfMesh(_))) | Err(RuntimeError::Model(ModelError::OutOfDomain(_))) => {
                outcome = SimOutcome::EscapedDomain;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let settling_time = match outcome {
        SimOutcome::EscapedDomain => None,
        SimOutcome::Settled => stopped_at,
        SimOutcome::TimeLimit => {
            // Longest suffix staying inside the ball; its first sample is the
            // settling instant.
            let mut first = None;
            for (k, s) in states.iter().enumerate().rev() {
                if s.norm() <= opts.settle_radius {
                    first = Some(k);
                } else {
                    break;
                }
            }
            first.map(|k| times[k])
        }
    };
    if settling_time.is_some() && outcome == SimOutcome::TimeLimit {
        outcome = SimOutcome::Settled;
    }
    Ok(Trajectory { times, states, inputs, v_values, settling_time, outcome })
}

fn rk4_step(
    sys: &PwaSystem,
    ctrl: &Controller,
    x: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>, RuntimeError> {
    let k1 = vector_field(sys, ctrl, x)?;
    let k2 = vector_field(sys, ctrl, &(x + 0.5 * h * &k1))?;
    let k3 = vector_field(sys, ctrl, &(x + 0.5 * h * &k2))?;
    let k4 = vector_field(sys, ctrl, &(x + h * &k3))?;
    Ok(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Certified decay data of a synthesis result, for envelope checks.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    /// Invariant sublevel radius the samples are drawn from.
    pub r: f64,
}

impl Envelope {
    /// Certified bound on `|x(t)|` for a run started at `V(x0) = v0`.
    pub fn bound(&self, v0: f64, t: f64) -> f64 {
        (v0 / self.b1).powf(1.0 / self.a) * (-(self.b2 / self.a) * t).exp()
    }
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub n: usize,
    pub settled: usize,
    pub escaped_roa: usize,
    pub escaped_domain: usize,
    /// Worst `|x(t)|` over the certified envelope bound across all runs.
    pub max_envelope_ratio: f64,
    /// Worst one-step increase of `V` (positive means `V` rose).
    pub max_v_increase: f64,
    /// Worst violation of the per-step certified decay
    /// `V_next <= V exp(-b2 h)`.
    pub max_decay_violation: f64,
}

/// Simulates `n` closed-loop runs from states sampled uniformly in the
/// invariant sublevel set and checks settling, invariance, and the decay
/// envelope on every run.
pub fn monte_carlo_invariance(
    sys: &PwaSystem,
    ctrl: &Controller,
    v: &ScalarField,
    roa: &SublevelSet,
    env: &Envelope,
    n: usize,
    seed: u64,
    opts: &SimOptions,
) -> Result<McReport, RuntimeError> {
    let mut bbox = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for piece in &roa.pieces {
        for p in &piece.polygon {
            bbox[0] = bbox[0].min(p[0]);
            bbox[1] = bbox[1].min(p[1]);
            bbox[2] = bbox[2].max(p[0]);
            bbox[3] = bbox[3].max(p[1]);
        }
    }
    if !bbox.iter().all(|c| c.is_finite()) {
        return Err(RuntimeError::Invalid("invariant region is empty".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = McReport {
        n,
        settled: 0,
        escaped_roa: 0,
        escaped_domain: 0,
        max_envelope_ratio: 0.0,
        max_v_increase: f64::NEG_INFINITY,
        max_decay_violation: f64::NEG_INFINITY,
    };
    let margin = roa.r * (1.0 - 1e-6);
    let mut opts = opts.clone();
    opts.stop_v = Some(env.b1 * opts.settle_radius.powf(env.a));

    for _ in 0..n {
        let x0 = loop {
            let cand = DVector::from_vec(vec![
                rng.gen_range(bbox[0]..bbox[2]),
                rng.gen_range(bbox[1]..bbox[3]),
            ]);
            if v.mesh.locate(&cand).is_empty() {
                continue;
            }
            if v.eval(&cand)? <= margin {
                break cand;
            }
        };
        let traj = simulate(sys, ctrl, Some(v), &x0, &opts)?;
        match traj.outcome {
            SimOutcome::Settled => report.settled += 1,
            SimOutcome::EscapedDomain => report.escaped_domain += 1,
            SimOutcome::TimeLimit => {}
        }
        let vals = traj.v_values.as_ref().expect("V supplied to every run");
        let v0 = vals[0];
        if vals.iter().any(|&val| val > roa.r + 1e-9 * roa.r.max(1.0)) {
            report.escaped_roa += 1;
        }
        for (k, s) in traj.states.iter().enumerate() {
            let bound = env.bound(v0, traj.times[k]);
            if bound > 0.0 {
                report.max_envelope_ratio = report.max_envelope_ratio.max(s.norm() / bound);
            }
        }
        let decay = (-env.b2 * opts.h).exp();
        for w in vals.windows(2) {
            report.max_v_increase = report.max_v_increase.max(w[1] - w[0]);
            report.max_decay_violation = report.max_decay_violation.max(w[1] - w[0] * decay);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
pub struct RoaMetrics {
    pub area: f64,
    pub domain_area: f64,
    pub ratio: f64,
}

/// Area of the invariant region against the domain area.
pub fn roa_metrics(roa: &SublevelSet, sys: &PwaSystem) -> Result<RoaMetrics, RuntimeError> {
    let polygon = sys
        .domain
        .polygon
        .as_ref()
        .ok_or_else(|| RuntimeError::Invalid("domain has no polygon description".into()))?;
    let domain_area = crate::geom::polygon_area(polygon);
    if domain_area <= 0.0 {
        return Err(RuntimeError::Invalid("domain polygon area is not positive".into()));
    }
    Ok(RoaMetrics { area: roa.volume, domain_area, ratio: roa.volume / domain_area })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpa::sublevel;
    use crate::mesh::Triangulation;
    use crate::model::{PwaMode, Polytope};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn square_system(a_diag: f64) -> PwaSystem {
        let region = Polytope::from_polygon(vec![
            [-1.0, -1.0],
            [1.0, -1.0],
            [1.0, 1.0],
            [-1.0, 1.0],
        ]);
        let mode = PwaMode {
            a: DMatrix::identity(2, 2) * a_diag,
            b: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            e: DVector::zeros(2),
            region: region.clone(),
        };
        let input = Polytope::from_halfspaces(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        );
        PwaSystem::new(vec![mode], input, region).unwrap()
    }

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
        let simplexes = (0..8).map(|k| (vec![0, 1 + k, 1 + (k + 1) % 8], 0)).collect();
        Arc::new(Triangulation::from_parts(vertices, simplexes).unwrap())
    }

    fn one_norm_field(mesh: &Arc<Triangulation>) -> ScalarField {
        let values = mesh.vertices.iter().map(|p| p[0].abs() + p[1].abs()).collect();
        ScalarField::new(mesh.clone(), values).unwrap()
    }

    fn zero_inputs(mesh: &Arc<Triangulation>) -> VectorField {
        VectorField::new(mesh.clone(), vec![DVector::zeros(1); mesh.num_vertices()], 1).unwrap()
    }

    #[test]
    fn min_norm_picks_zero_when_zero_is_feasible() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let ctrl = Controller::min_norm(one_norm_field(&mesh), 1.0, 1);
        for xy in [[0.4, 0.3], [-0.7, 0.2], [0.1, -0.8]] {
            let u = ctrl.eval(&sys, &DVector::from_vec(xy.to_vec())).unwrap();
            assert!(u[0].abs() < 1e-9, "u = {} at {xy:?}", u[0]);
        }
    }

    #[test]
    fn min_norm_clamps_a_shifted_cost_vertex() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let v = one_norm_field(&mesh);
        let ctrl = Controller::MinNorm {
            v,
            b2: 0.5,
            cost_h: DMatrix::identity(1, 1),
            cost_lin: DVector::from_vec(vec![-2.0]),
        };
        // In the first quadrant the decrease row is u <= 0.5 V(x); the free
        // cost vertex sits at u = 1, so the row is active.
        let x = DVector::from_vec(vec![0.5, 0.25]);
        let u = ctrl.eval(&sys, &x).unwrap();
        assert!((u[0] - 0.375).abs() < 1e-9);
    }

    #[test]
    fn min_norm_is_zero_at_the_origin() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let ctrl = Controller::min_norm(one_norm_field(&mesh), 1.0, 1);
        let u = ctrl.eval(&sys, &DVector::from_vec(vec![1e-12, -1e-12])).unwrap();
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn rk4_tracks_the_linear_flow() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let ctrl = Controller::Cpa(zero_inputs(&mesh));
        let x0 = DVector::from_vec(vec![0.5, 0.25]);
        let opts = SimOptions { t_max: 1.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, None, &x0, &opts).unwrap();
        let last = traj.states.last().unwrap();
        let decay = (-1.0_f64).exp();
        assert!((last[0] - 0.5 * decay).abs() < 1e-10);
        assert!((last[1] - 0.25 * decay).abs() < 1e-10);
        assert_eq!(traj.times.len(), traj.states.len());
        assert_eq!(traj.inputs.len(), traj.states.len());
    }

    #[test]
    fn settling_is_found_by_the_trailing_suffix() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let ctrl = Controller::Cpa(zero_inputs(&mesh));
        let x0 = DVector::from_vec(vec![0.5, 0.25]);
        let opts = SimOptions { t_max: 8.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, None, &x0, &opts).unwrap();
        assert_eq!(traj.outcome, SimOutcome::Settled);
        let expect = (x0.norm() / 0.01).ln();
        assert!((traj.settling_time.unwrap() - expect).abs() < 1e-2);
    }

    #[test]
    fn certified_stop_ends_the_run_early() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let v = one_norm_field(&mesh);
        let ctrl = Controller::Cpa(zero_inputs(&mesh));
        let x0 = DVector::from_vec(vec![0.5, 0.25]);
        let opts = SimOptions { t_max: 8.0, stop_v: Some(0.01), ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, Some(&v), &x0, &opts).unwrap();
        assert_eq!(traj.outcome, SimOutcome::Settled);
        // V = 0.75 exp(-t) crosses 0.01 at ln 75.
        let expect = 75.0_f64.ln();
        assert!((traj.settling_time.unwrap() - expect).abs() < 1e-2);
        assert!(traj.times.last().unwrap() < &(expect + 0.1));
    }

    #[test]
    fn unstable_flow_escapes_the_domain() {
        let sys = square_system(1.0);
        let mesh = octant_mesh();
        let ctrl = Controller::Cpa(zero_inputs(&mesh));
        let x0 = DVector::from_vec(vec![0.9, 0.9]);
        let opts = SimOptions { t_max: 5.0, ..SimOptions::default() };
        let traj = simulate(&sys, &ctrl, None, &x0, &opts).unwrap();
        assert_eq!(traj.outcome, SimOutcome::EscapedDomain);
        assert_eq!(traj.settling_time, None);
        assert!(traj.times.last().unwrap() < &1.0);
    }

    #[test]
    fn envelope_bound_formula() {
        let env = Envelope { a: 2.0, b1: 4.0, b2: 2.0, r: 1.0 };
        assert!((env.bound(1.0, 0.0) - 0.5).abs() < 1e-12);
        let t = 2.0_f64.ln();
        assert!((env.bound(1.0, t) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_confirms_the_crafted_certificate() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let v = one_norm_field(&mesh);
        let ctrl = Controller::Cpa(zero_inputs(&mesh));
        let roa = sublevel(&v, 0.9).unwrap();
        let env = Envelope { a: 1.0, b1: 1.0, b2: 1.0, r: 0.9 };
        let opts = SimOptions { t_max: 12.0, ..SimOptions::default() };
        let report =
            monte_carlo_invariance(&sys, &ctrl, &v, &roa, &env, 10, 1, &opts).unwrap();
        assert_eq!(report.settled, 10);
        assert_eq!(report.escaped_roa, 0);
        assert_eq!(report.escaped_domain, 0);
        assert!(report.max_envelope_ratio <= 1.0 + 1e-9);
        assert!(report.max_v_increase <= 0.0);
        assert!(report.max_decay_violation <= 1e-9);
    }

    #[test]
    fn roa_metrics_relate_area_to_the_domain() {
        let sys = square_system(-1.0);
        let mesh = octant_mesh();
        let v = one_norm_field(&mesh);
        let roa = sublevel(&v, 0.5).unwrap();
        let metrics = roa_metrics(&roa, &sys).unwrap();
        assert!((metrics.area - 0.5).abs() < 1e-12);
        assert!((metrics.domain_area - 4.0).abs() < 1e-12);
        assert!((metrics.ratio - 0.125).abs() < 1e-12);
    }
}
