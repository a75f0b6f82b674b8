//! Bisection over the max-min level.
//!
//! Each probe solves the relaxed conic problem at the midpoint and accepts it
//! only if the returned beamformer passes [`post_verify`] on the original
//! constraints. When the relaxation is feasible but its beamformer is not,
//! a phase-restricted inner problem is searched over the phase of
//! `k_S^H w`; any point it returns is again verified before acceptance.
//! Below a level where the relaxation was already feasible the relaxed solve
//! is skipped and the phase search runs directly; above it, each pair is
//! first solved on its own, which certifies many infeasible levels cheaply.

use std::time::Duration;

use num_complex::Complex64;

use crate::conic::build::margin_index;
use crate::conic::{
    build_perfect, build_phase_restricted, build_robust, build_screen, solve_feasibility, RobustInputs, Screen, SolveStatus,
    SolverResult,
};
use crate::error::{Error, Result};
use crate::feasibility::gamma_upper_bound;
use crate::linalg::{align_phase, hermitian_eigen, mix_seed, CVector};
use crate::metrics::{objective, relay_powers, BeamformingSolution};
use crate::model::{derive, DerivedQuantities, NetworkConfig, UncertaintyModel};
use crate::robust::{sample_uncertainty, worst_case_relay_powers, worst_case_sinr, RobustConstants};

/// Relative SINR slack granted by [`post_verify`].
pub const SINR_SLACK: f64 = 1e-6;
/// Relative relay-power slack granted by [`post_verify`].
pub const POWER_SLACK: f64 = 1e-8;
/// `lambda_2 / lambda_1` below which Omega counts as rank one.
pub const RANK_ONE_RATIO: f64 = 1e-6;

const PHASE_GRID: usize = 12;
const GOLDEN_STEPS: usize = 10;

/// Width target of the bisection interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// Fraction of the initial upper bound.
    Relative(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionConfig {
    pub tol: Tolerance,
    pub max_iters: usize,
    pub solver_tol: f64,
}

impl Default for BisectionConfig {
    fn default() -> Self {
        BisectionConfig {
            tol: Tolerance::Relative(1e-3),
            max_iters: 60,
            solver_tol: crate::conic::solver::DEFAULT_TOL,
        }
    }
}

impl BisectionConfig {
    pub fn tol_gamma(&self, gamma_up: f64) -> f64 {
        match self.tol {
            Tolerance::Relative(r) => r * gamma_up,
            Tolerance::Absolute(a) => a,
        }
    }

    /// `ceil(log2(gamma_up / tol))`, the halvings needed to reach `tol`.
    pub fn iterations_needed(gamma_up: f64, tol: f64) -> usize {
        if gamma_up <= tol {
            0
        } else {
            (gamma_up / tol).log2().ceil() as usize
        }
    }

    pub fn validate(&self, gamma_up: f64) -> Result<()> {
        let tol = self.tol_gamma(gamma_up);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidConfig(format!("bisection tolerance must be positive, got {tol}")));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidConfig("solver tolerance must be positive".into()));
        }
        let needed = Self::iterations_needed(gamma_up, tol);
        if self.max_iters < needed {
            return Err(Error::InvalidConfig(format!(
                "max_iters {} cannot reach tolerance {tol} from {gamma_up} ({needed} needed)",
                self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Perfect,
    /// `dq` passed alongside must be derived from `uncertainty.estimates`.
    Robust {
        constants: &'a RobustConstants,
        uncertainty: &'a UncertaintyModel,
        verify_samples: usize,
        verify_seed: u64,
    },
}

impl<'a> Mode<'a> {
    pub fn robust(constants: &'a RobustConstants, uncertainty: &'a UncertaintyModel) -> Self {
        Mode::Robust {
            constants,
            uncertainty,
            verify_samples: 200,
            verify_seed: 0,
        }
    }

    fn inputs(&self) -> Option<RobustInputs<'a>> {
        match *self {
            Mode::Perfect => None,
            Mode::Robust {
                constants, uncertainty, ..
            } => Some(RobustInputs { constants, uncertainty }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Outcome {
    #[default]
    Optimal,
    /// The upper bound was zero; nothing to optimise.
    Degenerate,
    /// No probed level could be verified.
    NoFeasiblePoint,
}

/// Counts of probe verdicts over one optimisation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub feasible: usize,
    pub infeasible: usize,
    pub inaccurate: usize,
    pub errors: usize,
    /// Relaxation feasible but its beamformer failed verification.
    pub unverified: usize,
    /// Probes accepted through the phase-restricted search.
    pub recovered: usize,
    /// Accepted probes whose Omega was numerically rank one.
    pub rank_one: usize,
    pub solves: usize,
    pub solve_time: Duration,
    pub outcome: Outcome,
}

impl Diagnostics {
    /// Short status word for tabular output.
    pub fn status(&self) -> &'static str {
        match self.outcome {
            Outcome::Optimal if self.recovered > 0 => "recovered",
            Outcome::Optimal => "optimal",
            Outcome::Degenerate => "degenerate",
            Outcome::NoFeasiblePoint => "infeasible",
        }
    }
}

/// The complex beamformer of a solver point, rotated so that `k^H w >= 0`,
/// and whether Omega is numerically rank one (`true` when there is none).
pub fn extract_beamformer(res: &SolverResult, k_p: &CVector) -> (CVector, bool) {
    let w = align_phase(&res.w(), k_p);
    let rank_one = match res.omega() {
        None => true,
        Some(omega) => {
            let (vals, _) = hermitian_eigen(&omega);
            let n = vals.len();
            if n < 2 {
                true
            } else {
                let (l1, l2) = (vals[n - 1], vals[n - 2]);
                l2.max(0.0) <= RANK_ONE_RATIO * l1.max(0.0)
            }
        }
    };
    (w, rank_one)
}

fn caps_ok(powers: &[f64], config: &NetworkConfig) -> bool {
    powers.iter().zip(&config.p_relay_max).all(|(p, cap)| *p <= cap * (1.0 + POWER_SLACK))
}

/// Checks `w` against the original constraints at level `gamma`.
///
/// Robust mode checks the closed-form worst case and, independently, the
/// exact SINRs and relay powers under sampled channel errors.
pub fn post_verify(w: &CVector, dq: &DerivedQuantities, config: &NetworkConfig, gamma: f64, mode: &Mode<'_>) -> bool {
    if w.len() != dq.n_relays() {
        return false;
    }
    let target = gamma * (1.0 - SINR_SLACK);
    match *mode {
        Mode::Perfect => {
            let Ok(powers) = relay_powers(w, dq) else { return false };
            caps_ok(&powers, config) && objective(w, dq, config) >= target
        }
        Mode::Robust {
            constants,
            uncertainty,
            verify_samples,
            verify_seed,
        } => {
            if !caps_ok(&worst_case_relay_powers(w, constants), config) {
                return false;
            }
            let users: &[crate::User] = if config.has_secondaries() {
                &crate::User::ALL
            } else {
                &crate::User::ALL[..2]
            };
            for &u in users {
                let scale = if u.is_primary() { 1.0 } else { config.mu };
                if scale * worst_case_sinr(w, dq, constants, uncertainty, config, u) < target {
                    return false;
                }
            }
            (0..verify_samples).all(|k| {
                let sample = sample_uncertainty(uncertainty, mix_seed(&[verify_seed, k as u64]));
                let Ok(dq_s) = derive(config, &sample) else { return false };
                let Ok(powers) = relay_powers(w, &dq_s) else { return false };
                caps_ok(&powers, config) && objective(w, &dq_s, config) >= target
            })
        }
    }
}

struct Search<'a> {
    dq: &'a DerivedQuantities,
    config: &'a NetworkConfig,
    mode: Mode<'a>,
    tol: f64,
    diag: Diagnostics,
    /// Largest level at which the relaxation was found feasible; it stays
    /// feasible below, so it is not re-solved there.
    relaxed_level: f64,
    /// Phases of `k_S^H w` worth trying first.
    hints: Vec<f64>,
}

impl Search<'_> {
    fn solve(&mut self, p: &crate::conic::ConicProblem) -> SolverResult {
        let res = solve_feasibility(p, self.tol);
        self.diag.solves += 1;
        self.diag.solve_time += res.solve_time;
        res
    }

    fn verified(&self, w: &CVector, gamma: f64) -> bool {
        post_verify(w, self.dq, self.config, gamma, &self.mode)
    }

    /// `w` scaled down until no relay exceeds its cap, absorbing the
    /// solver's feasibility tolerance.
    fn onto_caps(&self, w: CVector) -> CVector {
        let powers = match self.mode {
            Mode::Perfect => match relay_powers(&w, self.dq) {
                Ok(p) => p,
                Err(_) => return w,
            },
            Mode::Robust { constants, .. } => worst_case_relay_powers(&w, constants),
        };
        let scale = powers
            .iter()
            .zip(&self.config.p_relay_max)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, cap)| cap / p)
            .fold(1.0, f64::min);
        if scale < 1.0 {
            w.scale(scale.sqrt())
        } else {
            w
        }
    }

    /// Largest margin of the phase-restricted problem, with its beamformer.
    fn restricted(&mut self, gamma: f64, phi: f64) -> Option<(f64, CVector)> {
        let p = build_phase_restricted(self.dq, self.config, self.mode.inputs(), gamma, phi).ok()?;
        let res = self.solve(&p);
        if !matches!(res.status, SolveStatus::Feasible | SolveStatus::Inaccurate) {
            return None;
        }
        Some((res.x[margin_index(&p)], self.onto_caps(align_phase(&res.w(), &self.dq.k_p1p2))))
    }

    fn try_phase(&mut self, gamma: f64, phi: f64) -> (f64, Option<CVector>) {
        match self.restricted(gamma, phi) {
            Some((m, w)) if m >= 0.0 && self.verified(&w, gamma) => (m, Some(w)),
            Some((m, _)) => (m, None),
            None => (f64::NEG_INFINITY, None),
        }
    }

    /// Phases suggested by a relaxed solution: its w-block and the principal
    /// direction of Omega.
    fn relaxed_hints(&self, res: &SolverResult) -> Vec<f64> {
        let k_s = &self.dq.k_s1s2;
        let k_p = &self.dq.k_p1p2;
        let mut hints = Vec::new();
        if res.w_lift.len() == 2 * self.dq.n_relays() {
            hints.push(k_s.dotc(&align_phase(&res.w(), k_p)));
        }
        if let Some(omega) = res.omega() {
            let (vals, vecs) = hermitian_eigen(&omega);
            if let Some(&top) = vals.last() {
                let v = vecs.column(vals.len() - 1).into_owned() * Complex64::new(top.max(0.0).sqrt(), 0.0);
                hints.push(k_s.dotc(&align_phase(&v, k_p)));
            }
        }
        hints.into_iter().filter(|z| z.norm() > 0.0).map(|z| z.arg()).collect()
    }

    fn recover(&mut self, gamma: f64) -> Option<CVector> {
        if !self.config.has_secondaries() {
            return None;
        }
        for phi in self.hints.clone() {
            if let (_, Some(w)) = self.try_phase(gamma, phi) {
                return Some(w);
            }
        }

        let step = std::f64::consts::TAU / PHASE_GRID as f64;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for g in 0..PHASE_GRID {
            let phi = g as f64 * step;
            match self.try_phase(gamma, phi) {
                (_, Some(w)) => return Some(w),
                (m, None) if m > best.0 => best = (m, phi),
                _ => {}
            }
        }
        if best.0 == f64::NEG_INFINITY {
            return None;
        }

        // golden-section refinement of the margin around the best grid phase
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (best.1 - step, best.1 + step);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let (mut fc, wc) = self.try_phase(gamma, c);
        if wc.is_some() {
            return wc;
        }
        let (mut fd, wd) = self.try_phase(gamma, d);
        if wd.is_some() {
            return wd;
        }
        for _ in 0..GOLDEN_STEPS {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - ratio * (b - a);
                let (f, w) = self.try_phase(gamma, c);
                if w.is_some() {
                    return w;
                }
                fc = f;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + ratio * (b - a);
                let (f, w) = self.try_phase(gamma, d);
                if w.is_some() {
                    return w;
                }
                fd = f;
            }
        }
        None
    }

    /// A verified beamformer at `gamma`, with its rank-one flag.
    fn probe(&mut self, gamma: f64) -> Result<Option<(CVector, bool)>> {
        let found = if self.config.has_secondaries() && gamma < self.relaxed_level {
            self.recover(gamma).map(|w| (w, false))
        } else {
            self.probe_relaxed(gamma)?
        };
        if let Some((w, _)) = &found {
            let z = self.dq.k_s1s2.dotc(w);
            if z.norm() > 0.0 {
                self.hints.retain(|&h| h != z.arg());
                self.hints.insert(0, z.arg());
                self.hints.truncate(3);
            }
        }
        Ok(found)
    }

    /// Whether either pair alone is certified infeasible at `gamma`.
    fn screened_out(&mut self, gamma: f64) -> Result<bool> {
        for screen in [Screen::Primary, Screen::Secondary] {
            let p = build_screen(self.dq, self.config, self.mode.inputs(), gamma, screen)?;
            if self.solve(&p).status == SolveStatus::Infeasible {
                self.diag.infeasible += 1;
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn probe_relaxed(&mut self, gamma: f64) -> Result<Option<(CVector, bool)>> {
        if self.config.has_secondaries() && self.screened_out(gamma)? {
            return Ok(None);
        }
        let p = match self.mode.inputs() {
            None => build_perfect(self.dq, self.config, gamma)?,
            Some(r) => build_robust(self.dq, self.config, r, gamma)?,
        };
        let res = self.solve(&p);
        match res.status {
            SolveStatus::Infeasible => {
                self.diag.infeasible += 1;
                return Ok(None);
            }
            SolveStatus::Error => {
                self.diag.errors += 1;
                return Ok(None);
            }
            SolveStatus::Inaccurate => {
                self.diag.inaccurate += 1;
                return Ok(None);
            }
            SolveStatus::Feasible => self.diag.feasible += 1,
        }
        self.relaxed_level = self.relaxed_level.max(gamma);
        let (w, rank_one) = extract_beamformer(&res, &self.dq.k_p1p2);
        let w = self.onto_caps(w);
        if self.verified(&w, gamma) {
            return Ok(Some((w, rank_one)));
        }
        self.diag.unverified += 1;
        let mut hints = self.relaxed_hints(&res);
        hints.extend(self.hints.iter().copied());
        self.hints = hints;
        Ok(self.recover(gamma).map(|w| {
            self.diag.recovered += 1;
            (w, false)
        }))
    }
}

/// Max-min beamformer by bisection on `[0, gamma_up]`.
///
/// The returned `gamma` is the largest verified level, so the returned `w`
/// always attains it.
pub fn optimize(
    dq: &DerivedQuantities,
    config: &NetworkConfig,
    mode: Mode<'_>,
    bc: &BisectionConfig,
) -> Result<BeamformingSolution> {
    config.validate()?;
    let gamma_up = gamma_upper_bound(dq, config)?;
    let n = dq.n_relays();
    if !(gamma_up > 0.0) {
        let mut sol = BeamformingSolution::evaluate(CVector::zeros(n), 0.0, dq, config);
        sol.diagnostics.outcome = Outcome::Degenerate;
        return Ok(sol);
    }
    bc.validate(gamma_up)?;
    let tol = bc.tol_gamma(gamma_up);
    let mut search = Search {
        dq,
        config,
        mode,
        tol: bc.solver_tol,
        diag: Diagnostics::default(),
        relaxed_level: 0.0,
        hints: Vec::new(),
    };
    let (mut lo, mut hi) = (0.0, gamma_up);
    let mut best: Option<(CVector, bool)> = None;
    let mut iterations = 0;
    while hi - lo > tol && iterations < bc.max_iters {
        let mid = 0.5 * (lo + hi);
        iterations += 1;
        match search.probe(mid)? {
            Some(found) => {
                lo = mid;
                best = Some(found);
            }
            None => hi = mid,
        }
    }
    let mut diag = search.diag;
    let (w, rank_one_ok) = match best {
        Some(b) => b,
        None => {
            diag.outcome = Outcome::NoFeasiblePoint;
            (CVector::zeros(n), false)
        }
    };
    if rank_one_ok {
        diag.rank_one += 1;
    }
    let mut sol = BeamformingSolution::evaluate(w, lo, dq, config);
    sol.gamma_upper = gamma_up;
    sol.rank_one_ok = rank_one_ok;
    sol.iterations = iterations;
    sol.diagnostics = diag;
    Ok(sol)
}
