//! Interior-point back end.
//!
//! Problems are handed to Clarabel in its `s = b - A x in K` form; the
//! returned point is then re-checked against the original constraint rows
//! before it is reported feasible.

use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    SupportedConeT::{NonnegativeConeT, PSDTriangleConeT, SecondOrderConeT, ZeroConeT},
};
use nalgebra::{DMatrix, DVector};

use super::lift::{lift_hermitian, unlift_complex};
use super::problem::{AffineExpr, ConicProblem, PsdConstraint, Sense};
use crate::linalg::{CMatrix, CVector};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const MAX_ITERATIONS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    Inaccurate,
    Error,
}

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub status: SolveStatus,
    /// Full primal point; empty unless a point was returned.
    pub x: DVector<f64>,
    pub w_lift: DVector<f64>,
    /// Lifted Omega, when the problem has one.
    pub omega_lift: Option<DMatrix<f64>>,
    /// Largest scaled constraint violation at `x`, computed from the rows.
    pub residuals: f64,
    pub objective: f64,
    pub solve_time: Duration,
    pub iterations: u32,
}

impl SolverResult {
    fn failed(status: SolveStatus, started: Instant) -> Self {
        SolverResult {
            status,
            x: DVector::zeros(0),
            w_lift: DVector::zeros(0),
            omega_lift: None,
            residuals: f64::INFINITY,
            objective: f64::NAN,
            solve_time: started.elapsed(),
            iterations: 0,
        }
    }

    pub fn w(&self) -> CVector {
        unlift_complex(&self.w_lift)
    }

    pub fn omega(&self) -> Option<CMatrix> {
        self.omega_lift.as_ref().map(super::lift::unlift_hermitian)
    }
}

struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    /// Appends the row `s = e(x)`, i.e. `A = -coef`, `b = constant`.
    fn push(&mut self, e: &AffineExpr, scale: f64) {
        let r = self.b.len();
        for &(col, c) in &e.terms {
            self.i.push(r);
            self.j.push(col);
            self.v.push(-c * scale);
        }
        self.b.push(e.constant * scale);
    }
}

fn assemble(p: &ConicProblem) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let mut rows = Rows {
        i: Vec::new(),
        j: Vec::new(),
        v: Vec::new(),
        b: Vec::new(),
    };
    let mut cones = Vec::new();
    let slack = |c: &super::problem::LinearConstraint| {
        // s = rhs - expr
        let mut e = c.expr.scaled(-1.0);
        e.constant += c.rhs;
        e
    };
    let eq: Vec<_> = p.linear.iter().filter(|c| c.sense == Sense::Eq).collect();
    let mut nonneg: Vec<AffineExpr> = p.linear.iter().filter(|c| c.sense == Sense::Le).map(slack).collect();
    let mut socs = Vec::new();
    for c in &p.soc {
        if c.rows.len() == 1 {
            nonneg.push(c.rows[0].clone());
        } else {
            socs.push(c);
        }
    }
    if !eq.is_empty() {
        eq.iter().for_each(|c| rows.push(&slack(c), 1.0));
        cones.push(ZeroConeT(eq.len()));
    }
    if !nonneg.is_empty() {
        nonneg.iter().for_each(|e| rows.push(e, 1.0));
        cones.push(NonnegativeConeT(nonneg.len()));
    }
    for c in socs {
        c.rows.iter().for_each(|e| rows.push(e, 1.0));
        cones.push(SecondOrderConeT(c.rows.len()));
    }
    let sqrt2 = std::f64::consts::SQRT_2;
    for c in &p.psd {
        for j in 0..c.dim {
            for i in 0..=j {
                let scale = if i == j { 1.0 } else { sqrt2 };
                rows.push(&c.upper[PsdConstraint::index(i, j)], scale);
            }
        }
        cones.push(PSDTriangleConeT(c.dim));
    }
    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, p.n_vars, rows.i, rows.j, rows.v);
    (a, rows.b, cones)
}

/// One interior-point run and its verdict.
struct Run {
    status: SolveStatus,
    x: Option<DVector<f64>>,
    residuals: f64,
    iterations: u32,
    /// Gave up within the first few iterations.
    stalled_at_start: bool,
}

const EARLY_STALL: u32 = 3;

/// KKT diagonal shift; the solver default (1e-8) stalls on a few of the
/// relaxations at very small target levels.
const STATIC_REGULARIZATION: f64 = 1e-6;

impl Run {
    fn solve(
        p: &ConicProblem,
        a: &CscMatrix<f64>,
        b: &[f64],
        q: &[f64],
        cones: &[SupportedConeT<f64>],
        tol: f64,
        equilibrate: bool,
    ) -> Run {
        let n = p.n_vars;
        let feasibility_only = p.objective.is_none();
        let pm = CscMatrix::<f64>::zeros((n, n));
        let settings = DefaultSettings {
            max_iter: MAX_ITERATIONS,
            tol_feas: tol,
            tol_gap_abs: tol,
            tol_gap_rel: tol,
            tol_infeas_abs: tol,
            tol_infeas_rel: tol,
            equilibrate_enable: equilibrate,
            static_regularization_constant: STATIC_REGULARIZATION,
            verbose: false,
            ..DefaultSettings::default()
        };
        let failed = |status| Run {
            status,
            x: None,
            residuals: f64::INFINITY,
            iterations: 0,
            stalled_at_start: false,
        };
        let Ok(mut solver) = DefaultSolver::new(&pm, q, a, b, cones, settings) else {
            return failed(SolveStatus::Error);
        };
        solver.solve();
        let sol = &solver.solution;
        let iterations = sol.iterations;
        let converged = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => true,
            SolverStatus::PrimalInfeasible => {
                return Run {
                    iterations,
                    ..failed(SolveStatus::Infeasible)
                }
            }
            SolverStatus::AlmostPrimalInfeasible
            | SolverStatus::MaxIterations
            | SolverStatus::MaxTime
            | SolverStatus::NumericalError
            | SolverStatus::InsufficientProgress => false,
            _ => {
                return Run {
                    iterations,
                    ..failed(SolveStatus::Error)
                }
            }
        };
        if sol.x.iter().any(|v| !v.is_finite()) {
            return Run {
                iterations,
                stalled_at_start: iterations <= EARLY_STALL,
                ..failed(SolveStatus::Inaccurate)
            };
        }
        let x = DVector::from_column_slice(&sol.x);
        let residuals = p.residuals(&x).max();
        // without an objective, a point within tolerance of every row settles
        // the question whatever the solver's own stopping verdict
        let status = if (converged || feasibility_only) && residuals <= tol {
            SolveStatus::Feasible
        } else {
            SolveStatus::Inaccurate
        };
        Run {
            status,
            x: Some(x),
            residuals,
            iterations,
            stalled_at_start: status == SolveStatus::Inaccurate && iterations <= EARLY_STALL,
        }
    }
}

/// Decides the conic system to tolerance `tol`.
///
/// `Feasible` is reported only when the solver (nearly) converged and the
/// independent row check at the returned point stays within `tol`.
pub fn solve_feasibility(p: &ConicProblem, tol: f64) -> SolverResult {
    let started = Instant::now();
    if p.check().is_err() {
        return SolverResult::failed(SolveStatus::Error, started);
    }
    let (a, b, cones) = assemble(p);
    let mut q = vec![0.0; p.n_vars];
    if let Some(obj) = &p.objective {
        for &(i, c) in &obj.terms {
            q[i] += c;
        }
    }
    let mut run = Run::solve(p, &a, &b, &q, &cones, tol, true);
    if run.stalled_at_start || (run.status == SolveStatus::Inaccurate && p.objective.is_none()) {
        // equilibration occasionally hurts these systems; retry without
        let retry = Run::solve(p, &a, &b, &q, &cones, tol, false);
        if retry.status != SolveStatus::Error {
            run = Run {
                iterations: run.iterations + retry.iterations,
                ..retry
            };
        }
    }
    let Some(x) = run.x else {
        let mut r = SolverResult::failed(run.status, started);
        r.iterations = run.iterations;
        return r;
    };
    let status = run.status;
    let iterations = run.iterations;
    let residuals = run.residuals;
    let l = p.layout;
    let w_lift = x.rows(l.w_offset, 2 * l.n_relays).into_owned();
    let omega_lift = l.omega_offset.map(|_| {
        let n = l.n_relays;
        let omega = CMatrix::from_fn(n, n, |a, b| {
            let (re, im) = l.omega_entry(a, b).expect("omega present");
            num_complex::Complex64::new(re.eval(&x), im.eval(&x))
        });
        lift_hermitian(&omega)
    });
    let objective = p.objective.as_ref().map_or(0.0, |o| o.eval(&x));
    SolverResult {
        status,
        x,
        w_lift,
        omega_lift,
        residuals,
        objective,
        solve_time: started.elapsed(),
        iterations,
    }
}
