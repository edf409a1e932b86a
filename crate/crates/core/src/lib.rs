//! Offline synthesis of continuous piecewise-affine (CPA) Lyapunov functions
//! and stabilizing controllers for constrained piecewise-affine plants, plus
//! the runtime pieces that consume the certificates: a min-norm controller and
//! closed-loop simulation utilities.
//!
//! Pipeline: describe the plant ([`model`]), triangulate its domain ([`mesh`]),
//! iterate convexified synthesis steps ([`conic`], [`synth`]) that grow a
//! certified decay rate, extract an invariant sublevel region ([`cpa`]), and
//! run or filter controllers online ([`runtime`]).

pub mod conic;
pub mod cpa;
pub mod geom;
pub mod mesh;
pub mod model;
pub mod runtime;
pub mod synth;

/// Geometric membership tolerance (barycentric coordinates, half-space slack).
pub const TOL_GEO: f64 = 1e-9;
/// Scaled determinant threshold below which a simplex counts as degenerate.
pub const TOL_DET: f64 = 1e-12;
/// Target accuracy requested from the cone solver.
pub const TOL_SOLVER: f64 = 1e-8;
/// Tolerance for certificate residual checks on synthesized states.
pub const TOL_CERT: f64 = 1e-6;
/// Margin that replaces strict positivity constraints (`b1 >= EPS_POS`).
pub const EPS_POS: f64 = 1e-6;
/// Safety factor keeping invariant levels away from the mesh boundary.
pub const EPS_R: f64 = 1e-6;
/// Tolerance on state-space residuals (field gaps, constraint slack).
pub const TOL_STATE: f64 = 1e-9;
/// Default RK4 integration step for closed-loop simulation.
pub const RK4_H: f64 = 1e-3;
/// Default RNG seed for reproducible sampling.
pub const DEFAULT_SEED: u64 = 0;
