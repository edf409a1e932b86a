//! Convex cone programs assembled by the synthesis step: a linear or convex
//! quadratic objective, linear rows, and "quadratic padding" blocks
//! `phi + 0.5 * sum_k ||v_k||^2 <= 0` with `phi` and every component of the
//! `v_k` affine in the decision variables.
//!
//! Each block is the rotated-cone face `0.5 ||v||^2 <= -phi`, embedded as the
//! second-order cone `(1 - phi, -1 - phi, sqrt(2) v) in SOC`. Solutions are
//! re-verified here from the raw program data, independently of the solver.

use crate::TOL_SOLVER;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("program references variable {var} but only {num_vars} exist")]
    BadVariable { var: usize, num_vars: usize },
    #[error("cone solver setup failed: {0}")]
    Setup(String),
}

/// Affine expression `constant + sum coef * x_var`.
#[derive(Debug, Clone, Default)]
pub struct AffExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl AffExpr {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn var(v: usize) -> Self {
        Self { constant: 0.0, terms: vec![(v, 1.0)] }
    }

    pub fn term(v: usize, coef: f64) -> Self {
        Self { constant: 0.0, terms: vec![(v, coef)] }
    }

    pub fn push(&mut self, v: usize, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().fold(self.constant, |acc, &(v, c)| acc + c * x[v])
    }

    /// Terms with duplicate variables merged, zeros dropped.
    fn compacted(&self) -> Vec<(usize, f64)> {
        let mut terms = self.terms.clone();
        terms.sort_by_key(|&(v, _)| v);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (v, c) in terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinSense {
    /// `expr <= 0`.
    Le,
    /// `expr == 0`.
    Eq,
}

#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub expr: AffExpr,
    pub sense: LinSense,
}

/// Quadratic padding block `scalar + 0.5 * sum_k ||vectors_k||^2 <= 0`.
#[derive(Debug, Clone)]
pub struct QuadBlock {
    pub scalar: AffExpr,
    pub vectors: Vec<Vec<AffExpr>>,
}

/// Objective `constant + sum linear + sum_{i<=j} coef * x_i * x_j`, minimized.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl Objective {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(v, c)| c * x[v]).sum();
        let quad: f64 = self.quadratic.iter().map(|&(i, j, c)| c * x[i] * x[j]).sum();
        self.constant + lin + quad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Objective of this program at `x`, constant included.
    pub objective: f64,
    /// Worst constraint violation at `x`, re-evaluated from the program data;
    /// NaN when the solver returned no usable point.
    pub max_primal_residual: f64,
    pub iterations: u32,
}

/// Residual report from re-evaluating every constraint at a candidate point.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub ok: bool,
    pub max_violation: f64,
    pub worst: String,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Objective,
    pub linear: Vec<LinearConstraint>,
    pub blocks: Vec<QuadBlock>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, ..Default::default() }
    }

    pub fn add_linear(&mut self, expr: AffExpr, sense: LinSense) {
        self.linear.push(LinearConstraint { expr, sense });
    }

    pub fn add_block(&mut self, scalar: AffExpr, vectors: Vec<Vec<AffExpr>>) {
        self.blocks.push(QuadBlock { scalar, vectors });
    }

    fn check_vars(&self) -> Result<(), ConicError> {
        let bad = |terms: &[(usize, f64)]| {
            terms.iter().find(|&&(v, _)| v >= self.num_vars).map(|&(v, _)| v)
        };
        for c in &self.linear {
            if let Some(var) = bad(&c.expr.terms) {
                return Err(ConicError::BadVariable { var, num_vars: self.num_vars });
            }
        }
        for b in &self.blocks {
            let exprs = std::iter::once(&b.scalar).chain(b.vectors.iter().flatten());
            for e in exprs {
                if let Some(var) = bad(&e.terms) {
                    return Err(ConicError::BadVariable { var, num_vars: self.num_vars });
                }
            }
        }
        for &(v, _) in &self.objective.linear {
            if v >= self.num_vars {
                return Err(ConicError::BadVariable { var: v, num_vars: self.num_vars });
            }
        }
        for &(i, j, _) in &self.objective.quadratic {
            if i >= self.num_vars || j >= self.num_vars {
                return Err(ConicError::BadVariable { var: i.max(j), num_vars: self.num_vars });
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<Solution, ConicError> {
        self.check_vars()?;
        if self.num_vars == 0 {
            return Ok(Solution {
                status: SolveStatus::Optimal,
                x: Vec::new(),
                objective: self.objective.constant,
                max_primal_residual: 0.0,
                iterations: 0,
            });
        }

        // Rows are laid out as [equalities | inequalities | SOC blocks].
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let push_expr = |triplets: &mut Vec<(usize, usize, f64)>,
                             rhs: &mut Vec<f64>,
                             row: &mut usize,
                             expr: &AffExpr,
                             scale: f64,
                             shift: f64| {
            // Encodes s_row = shift - scale * expr(x) by emitting
            // A[row, v] = scale * coef and b[row] = shift - scale * constant.
            for (v, c) in expr.compacted() {
                triplets.push((*row, v, scale * c));
            }
            rhs.push(shift - scale * expr.constant);
            *row += 1;
        };

        let n_eq = self.linear.iter().filter(|c| c.sense == LinSense::Eq).count();
        if n_eq > 0 {
            for c in self.linear.iter().filter(|c| c.sense == LinSense::Eq) {
                push_expr(&mut triplets, &mut rhs, &mut row, &c.expr, 1.0, 0.0);
            }
            cones.push(SupportedConeT::ZeroConeT(n_eq));
        }
        let n_le = self.linear.len() - n_eq;
        if n_le > 0 {
            for c in self.linear.iter().filter(|c| c.sense == LinSense::Le) {
                push_expr(&mut triplets, &mut rhs, &mut row, &c.expr, 1.0, 0.0);
            }
            cones.push(SupportedConeT::NonnegativeConeT(n_le));
        }
        for b in &self.blocks {
            let vec_len: usize = b.vectors.iter().map(|v| v.len()).sum();
            // (1 - phi, -1 - phi, sqrt(2) v) in SOC of dimension 2 + vec_len.
            push_expr(&mut triplets, &mut rhs, &mut row, &b.scalar, 1.0, 1.0);
            push_expr(&mut triplets, &mut rhs, &mut row, &b.scalar, 1.0, -1.0);
            let sqrt2 = std::f64::consts::SQRT_2;
            for comp in b.vectors.iter().flatten() {
                push_expr(&mut triplets, &mut rhs, &mut row, comp, -sqrt2, 0.0);
            }
            cones.push(SupportedConeT::SecondOrderConeT(2 + vec_len));
        }

        let a = csc_from_triplets(row, self.num_vars, &triplets);
        let p = self.build_p();
        let mut q = vec![0.0; self.num_vars];
        for &(v, c) in &self.objective.linear {
            q[v] += c;
        }

        let mut settings = DefaultSettings::default();
        settings.verbose = false;
        settings.max_iter = 10_000;
        settings.tol_feas = TOL_SOLVER;
        settings.tol_gap_abs = TOL_SOLVER;
        settings.tol_gap_rel = TOL_SOLVER;
        let mut solver = DefaultSolver::new(&p, &q, &a, &rhs, &cones, settings)
            .map_err(|e| ConicError::Setup(format!("{e:?}")))?;
        solver.solve();

        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::MaxIterations => SolveStatus::IterationLimit,
            _ => SolveStatus::NumericalFailure,
        };
        let x = solver.solution.x.clone();
        let (objective, max_primal_residual) = if x.len() == self.num_vars {
            (self.objective.eval(&x), self.verify_solution(&x, 0.0).max_violation)
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(Solution {
            status,
            x,
            objective,
            max_primal_residual,
            iterations: solver.solution.iterations,
        })
    }

    /// Upper-triangular CSC of `P` with `0.5 x' P x` matching the quadratic
    /// objective terms.
    fn build_p(&self) -> CscMatrix<f64> {
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        for &(i, j, c) in &self.objective.quadratic {
            let (r, col) = if i <= j { (i, j) } else { (j, i) };
            let v = if r == col { 2.0 * c } else { c };
            triplets.push((r, col, v));
        }
        csc_from_triplets(self.num_vars, self.num_vars, &triplets)
    }

    /// Recomputes every constraint residual at `x` from the program data.
    pub fn verify_solution(&self, x: &[f64], tol: f64) -> VerifyReport {
        let mut max_violation = 0.0_f64;
        let mut worst = String::from("feasible");
        let note = |violation: f64, what: String, max_violation: &mut f64, worst: &mut String| {
            if violation > *max_violation {
                *max_violation = violation;
                *worst = what;
            }
        };
        for (k, c) in self.linear.iter().enumerate() {
            let val = c.expr.eval(x);
            let violation = match c.sense {
                LinSense::Le => val,
                LinSense::Eq => val.abs(),
            };
            note(violation, format!("linear row {k}"), &mut max_violation, &mut worst);
        }
        for (k, b) in self.blocks.iter().enumerate() {
            let mut q = b.scalar.eval(x);
            for comp in b.vectors.iter().flatten() {
                let w = comp.eval(x);
                q += 0.5 * w * w;
            }
            note(q, format!("quad block {k}"), &mut max_violation, &mut worst);
        }
        VerifyReport { ok: max_violation <= tol, max_violation, worst }
    }

    /// Plain-text listing of the whole program for debugging.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let fmt_expr = |expr: &AffExpr| {
            let mut s = format!("{:.6}", expr.constant);
            for (v, c) in expr.compacted() {
                let _ = write!(s, " {} {:.6} x{}", if c < 0.0 { "-" } else { "+" }, c.abs(), v);
            }
            s
        };
        let mut out = format!("vars {}\n", self.num_vars);
        let _ = writeln!(out, "min {:.6}", self.objective.constant);
        for &(v, c) in &self.objective.linear {
            let _ = writeln!(out, "  + {c:.6} x{v}");
        }
        for &(i, j, c) in &self.objective.quadratic {
            let _ = writeln!(out, "  + {c:.6} x{i} x{j}");
        }
        for c in &self.linear {
            let sense = match c.sense {
                LinSense::Le => "<= 0",
                LinSense::Eq => "= 0",
            };
            let _ = writeln!(out, "lin: {} {}", fmt_expr(&c.expr), sense);
        }
        for b in &self.blocks {
            let _ = writeln!(out, "quad: {}", fmt_expr(&b.scalar));
            for (k, vec) in b.vectors.iter().enumerate() {
                for comp in vec {
                    let _ = writeln!(out, "  v{k}: {}", fmt_expr(comp));
                }
            }
        }
        out
    }
}

fn csc_from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> CscMatrix<f64> {
    let mut entries: Vec<(usize, usize, f64)> = triplets.to_vec();
    entries.sort_by_key(|&(r, c, _)| (c, r));
    let mut rowval: Vec<usize> = Vec::with_capacity(entries.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(entries.len());
    let mut colcount = vec![0usize; ncols];
    let mut k = 0;
    while k < entries.len() {
        let (r, c, mut v) = entries[k];
        let mut k2 = k + 1;
        while k2 < entries.len() && entries[k2].0 == r && entries[k2].1 == c {
            v += entries[k2].2;
            k2 += 1;
        }
        rowval.push(r);
        nzval.push(v);
        colcount[c] += 1;
        k = k2;
    }
    let mut colptr = vec![0usize; ncols + 1];
    for c in 0..ncols {
        colptr[c + 1] = colptr[c] + colcount[c];
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}
