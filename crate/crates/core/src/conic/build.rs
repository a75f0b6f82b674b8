//! Real-lifted feasibility problems for a fixed max-min level `gamma`.
//!
//! Variables: `Re w`, `Im w`, then (when the secondary pair is present and
//! the relaxation is used) the `N^2` real parameters of Hermitian Omega, then
//! auxiliaries. Primary constraints are exact cones after fixing the phase of
//! `k_P^H w`; secondary constraints are relaxed through Omega with
//! `[[Omega, w], [w^H, 1]] >= 0`, or restricted to a fixed phase of
//! `k_S^H w` in [`build_phase_restricted`].

use num_complex::Complex64;

use super::problem::{AffineExpr, ConicProblem, Layout, Sense};
use crate::error::{Error, Result};
use crate::linalg::{gram_factor, hadamard, CMatrix, CVector};
use crate::metrics::User;
use crate::model::{DerivedQuantities, NetworkConfig, UncertaintyModel};
use crate::robust::RobustConstants;

/// Worst-case data for the robust variants.
#[derive(Debug, Clone, Copy)]
pub struct RobustInputs<'a> {
    pub constants: &'a RobustConstants,
    pub uncertainty: &'a UncertaintyModel,
}

#[derive(Debug, Clone, Copy)]
enum SecondaryForm {
    Relaxed,
    Phase(f64),
    Omitted,
}

/// One pair on its own: an exact necessary condition for the full problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Screen {
    Primary,
    /// Secondaries only, with the phase of `k_S^H w` fixed instead.
    Secondary,
}

struct Builder<'a> {
    dq: &'a DerivedQuantities,
    config: &'a NetworkConfig,
    robust: Option<RobustInputs<'a>>,
    gamma: f64,
    users: Vec<User>,
    layout: Layout,
    margin: Option<usize>,
    p: ConicProblem,
}

/// `(Re, Im)` of `sum_j a_j w_j`.
fn linear_form(layout: &Layout, a: impl Iterator<Item = Complex64>) -> (AffineExpr, AffineExpr) {
    let mut re = AffineExpr::default();
    let mut im = AffineExpr::default();
    for (j, c) in a.enumerate() {
        re.add_term(layout.w_re(j), c.re).add_term(layout.w_im(j), -c.im);
        im.add_term(layout.w_re(j), c.im).add_term(layout.w_im(j), c.re);
    }
    (re, im)
}

/// `(Re, Im)` of `c^H w`.
fn inner(layout: &Layout, c: &CVector) -> (AffineExpr, AffineExpr) {
    linear_form(layout, c.iter().map(|z| z.conj()))
}

/// Real and imaginary parts of every entry of `G w`, interleaved.
fn matrix_rows(layout: &Layout, g: &CMatrix) -> Vec<AffineExpr> {
    let mut rows = Vec::with_capacity(2 * g.nrows());
    for r in 0..g.nrows() {
        let (re, im) = linear_form(layout, g.row(r).iter().copied());
        rows.push(re);
        rows.push(im);
    }
    rows
}

impl<'a> Builder<'a> {
    fn new(
        dq: &'a DerivedQuantities,
        config: &'a NetworkConfig,
        robust: Option<RobustInputs<'a>>,
        gamma: f64,
        secondary: SecondaryForm,
        margin: bool,
    ) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::NonPositiveGamma(gamma));
        }
        let n = config.n_relays;
        if dq.n_relays() != n {
            return Err(Error::dim("derived quantities", n, dq.n_relays()));
        }
        if let Some(r) = &robust {
            r.uncertainty.estimates.check_dims(config)?;
            if r.constants.kappa_r.len() != n {
                return Err(Error::dim("relay constants", n, r.constants.kappa_r.len()));
            }
            if r.uncertainty.radii.interferer.len() != config.n_interferers {
                return Err(Error::dim("interferer radii", config.n_interferers, r.uncertainty.radii.interferer.len()));
            }
        }
        let users: Vec<User> = if config.has_secondaries() {
            User::ALL.to_vec()
        } else {
            vec![User::P1, User::P2]
        };
        let omega = config.has_secondaries() && matches!(secondary, SecondaryForm::Relaxed);
        let mut next = 2 * n;
        let omega_offset = omega.then(|| {
            let o = next;
            next += n * n;
            o
        });
        let aux_offset = next;
        if robust.is_some() {
            next += users.len() * (1 + config.n_interferers);
        }
        let margin = margin.then(|| {
            next += 1;
            next - 1
        });
        let layout = Layout {
            w_offset: 0,
            n_relays: n,
            omega_offset,
            aux_offset,
            aux_count: next - aux_offset,
        };
        Ok(Builder {
            dq,
            config,
            robust,
            gamma,
            users,
            layout,
            margin,
            p: ConicProblem::new(next, layout),
        })
    }

    fn user_slot(&self, user: User) -> usize {
        self.users.iter().position(|&u| u == user).expect("user present")
    }

    fn rho(&self, user: User) -> usize {
        self.layout.aux_offset + self.user_slot(user) * (1 + self.config.n_interferers)
    }

    fn varrho(&self, user: User, l: usize) -> usize {
        self.rho(user) + 1 + l
    }

    /// The interference rows of `user` (cone entries whose squared norm is
    /// the interference-plus-noise power) and the constant term.
    fn interference_rows(&self, user: User) -> (Vec<AffineExpr>, f64) {
        let i = user.index();
        let s2 = self.config.noise_var;
        match &self.robust {
            None => {
                let (q, zeta) = if user.is_primary() {
                    (&self.dq.q_p[i], self.dq.zeta_p[i])
                } else {
                    (&self.dq.q_s[i], self.dq.zeta_s[i])
                };
                (matrix_rows(&self.layout, &gram_factor(q)), (zeta + s2).sqrt())
            }
            Some(r) => {
                let (t, kappa) = if user.is_primary() {
                    (&self.dq.t_p[i], r.constants.kappa_p[i])
                } else {
                    (&self.dq.t_s[i], r.constants.kappa_s[i])
                };
                let radii = &r.uncertainty.radii.interferer;
                let mut rows: Vec<AffineExpr> = (0..self.config.n_interferers)
                    .map(|l| {
                        let scale = self.config.p_interferer[l].sqrt();
                        let mut e = AffineExpr::default();
                        e.add_term(self.varrho(user, l), scale).add_term(self.rho(user), scale * radii[l]);
                        e
                    })
                    .collect();
                rows.extend(matrix_rows(&self.layout, &gram_factor(t)));
                (rows, (kappa + s2).sqrt())
            }
        }
    }

    fn signal_power(&self, user: User) -> f64 {
        let i = user.index();
        if user.is_primary() {
            self.config.p_primary[1 - i]
        } else {
            self.config.mu * self.config.p_secondary[1 - i]
        }
    }

    /// `||[interference; c]|| + margin <= sqrt(P / gamma) * re`.
    fn phase_fixed_cone(&mut self, label: String, user: User, re: &AffineExpr) {
        let (rows, c) = self.interference_rows(user);
        let mut t = re.scaled((self.signal_power(user) / self.gamma).sqrt());
        if let Some(s) = self.margin {
            t.add_term(s, -c.max(1.0));
        }
        let mut all = vec![t];
        all.extend(rows);
        all.push(AffineExpr::constant(c));
        self.p.add_soc(label, all);
    }

    fn primary(&mut self) {
        let (re, im) = inner(&self.layout, &self.dq.k_p1p2);
        self.p.add_linear("primary-phase", im, Sense::Eq, 0.0);
        for user in [User::P1, User::P2] {
            self.phase_fixed_cone(format!("sinr-{user:?}"), user, &re);
        }
    }

    /// `Re(k^H Omega k)` as an affine expression of the Omega variables.
    fn omega_quadratic(&self, k: &CVector) -> AffineExpr {
        let n = self.layout.n_relays;
        let mut e = AffineExpr::default();
        for a in 0..n {
            for b in 0..n {
                let c = k[a].conj() * k[b];
                let (re, im) = self.layout.omega_entry(a, b).expect("omega present");
                e.add_scaled(&re, c.re).add_scaled(&im, -c.im);
            }
        }
        e.compact()
    }

    fn secondary(&mut self, form: SecondaryForm) {
        if !self.config.has_secondaries() {
            return;
        }
        match form {
            SecondaryForm::Omitted => {}
            SecondaryForm::Phase(phi) => {
                let (re, im) = inner(&self.layout, &self.dq.k_s1s2);
                // Re(e^{-j phi} k^H w)
                let mut rot = re.scaled(phi.cos());
                rot.add_scaled(&im, phi.sin());
                for user in [User::S1, User::S2] {
                    self.phase_fixed_cone(format!("sinr-{user:?}"), user, &rot);
                }
            }
            SecondaryForm::Relaxed => {
                let quad = self.omega_quadratic(&self.dq.k_s1s2);
                self.p.add_linear("trace-coupling", quad.scaled(-1.0), Sense::Le, 0.0);
                for user in [User::S1, User::S2] {
                    let (rows, c) = self.interference_rows(user);
                    // ||u||^2 <= beta  <=>  ||[1 - beta; 2u]|| <= 1 + beta
                    let mut beta = quad.scaled(self.signal_power(user) / self.gamma);
                    beta.constant -= c * c;
                    let mut t = beta.clone();
                    t.constant += 1.0;
                    let mut first = beta.scaled(-1.0);
                    first.constant += 1.0;
                    let mut all = vec![t, first];
                    all.extend(rows.iter().map(|r| r.scaled(2.0)));
                    self.p.add_soc(format!("sinr-{user:?}"), all);
                }
            }
        }
    }

    fn relay_scale(&self, j: usize) -> f64 {
        match &self.robust {
            Some(r) => r.constants.kappa_r[j],
            None => self.dq.xi_r[j],
        }
    }

    fn relay_caps(&mut self) {
        for j in 0..self.layout.n_relays {
            let k = self.relay_scale(j);
            let cap = self.config.p_relay_max[j];
            let (re, im) = (self.layout.w_re(j), self.layout.w_im(j));
            self.p.add_soc(
                format!("relay-cap-{j}"),
                vec![
                    AffineExpr::constant(cap.sqrt()),
                    AffineExpr::var(re).scaled(k.sqrt()),
                    AffineExpr::var(im).scaled(k.sqrt()),
                ],
            );
            if let Some((d, _)) = self.layout.omega_entry(j, j) {
                self.p.add_linear(format!("relay-power-cut-{j}"), d.scaled(k), Sense::Le, cap);
            }
        }
    }

    fn robust_auxiliaries(&mut self) {
        let Some(r) = self.robust else { return };
        let ch = &r.uncertainty.estimates;
        for user in self.users.clone() {
            let f = if user.is_primary() { &ch.f_p[user.index()] } else { &ch.f_s[user.index()] };
            let mut rows = vec![AffineExpr::var(self.rho(user))];
            for (j, c) in f.iter().enumerate() {
                let (wr, wi) = (self.layout.w_re(j), self.layout.w_im(j));
                let mut re = AffineExpr::default();
                re.add_term(wr, c.re).add_term(wi, -c.im);
                let mut im = AffineExpr::default();
                im.add_term(wr, c.im).add_term(wi, c.re);
                rows.push(re);
                rows.push(im);
            }
            self.p.add_soc(format!("spread-{user:?}"), rows);
            for (l, h) in ch.h_i.iter().enumerate() {
                let (re, im) = inner(&self.layout, &hadamard(f, h));
                self.p.add_soc(
                    format!("relayed-{user:?}-{l}"),
                    vec![AffineExpr::var(self.varrho(user, l)), re, im],
                );
            }
        }
    }

    fn schur_block(&mut self) {
        let Some(_) = self.layout.omega_offset else { return };
        let n = self.layout.n_relays;
        let layout = self.layout;
        // Hermitian H = [[Omega, w], [w^H, 1]] of size n + 1
        let h = move |a: usize, b: usize| -> (AffineExpr, AffineExpr) {
            match (a < n, b < n) {
                (true, true) => layout.omega_entry(a, b).expect("omega present"),
                (true, false) => (AffineExpr::var(layout.w_re(a)), AffineExpr::var(layout.w_im(a))),
                (false, true) => (AffineExpr::var(layout.w_re(b)), AffineExpr::var(layout.w_im(b)).scaled(-1.0)),
                (false, false) => (AffineExpr::constant(1.0), AffineExpr::default()),
            }
        };
        let m = n + 1;
        self.p.add_psd("schur-psd", 2 * m, |i, j| {
            let (bi, bj) = (i / m, j / m);
            let (re, im) = h(i % m, j % m);
            match (bi, bj) {
                (0, 0) | (1, 1) => re,
                (0, 1) => im.scaled(-1.0),
                _ => im,
            }
        });
    }

    /// The restriction maximises its margin; relaxations stay pure
    /// feasibility problems, whose central solutions keep the solver
    /// well-conditioned.
    fn objective(&mut self) {
        if let Some(s) = self.margin {
            self.p.add_linear("margin-bound", AffineExpr::var(s), Sense::Le, 1.0);
            self.p.objective = Some(AffineExpr::var(s).scaled(-1.0));
        }
    }

    fn finish(mut self, form: SecondaryForm) -> ConicProblem {
        self.primary();
        self.finish_rest(form)
    }

    fn finish_rest(mut self, form: SecondaryForm) -> ConicProblem {
        self.secondary(form);
        self.relay_caps();
        self.robust_auxiliaries();
        self.schur_block();
        self.objective();
        self.p
    }
}

/// Relaxed feasibility problem under exact CSI.
pub fn build_perfect(dq: &DerivedQuantities, config: &NetworkConfig, gamma: f64) -> Result<ConicProblem> {
    Ok(Builder::new(dq, config, None, gamma, SecondaryForm::Relaxed, false)?.finish(SecondaryForm::Relaxed))
}

/// Relaxed feasibility problem enforcing every constraint over the whole
/// uncertainty set; `dq_hat` must be derived from the estimates.
pub fn build_robust(
    dq_hat: &DerivedQuantities,
    config: &NetworkConfig,
    robust: RobustInputs<'_>,
    gamma: f64,
) -> Result<ConicProblem> {
    Ok(Builder::new(dq_hat, config, Some(robust), gamma, SecondaryForm::Relaxed, false)?
        .finish(SecondaryForm::Relaxed))
}

/// Convex inner restriction: the secondary constraints use
/// `Re(e^{-j phi} k_S^H w)` in place of `|k_S^H w|`, and a margin variable
/// `s <= 1` is maximised. Any point with `s >= 0` satisfies the original
/// (non-relaxed) constraints at `gamma`.
pub fn build_phase_restricted(
    dq: &DerivedQuantities,
    config: &NetworkConfig,
    robust: Option<RobustInputs<'_>>,
    gamma: f64,
    phi: f64,
) -> Result<ConicProblem> {
    let form = SecondaryForm::Phase(phi);
    Ok(Builder::new(dq, config, robust, gamma, form, true)?.finish(form))
}

/// Exact problem for a single pair (relay caps included); if it is
/// infeasible at `gamma`, so is the full problem.
pub fn build_screen(
    dq: &DerivedQuantities,
    config: &NetworkConfig,
    robust: Option<RobustInputs<'_>>,
    gamma: f64,
    screen: Screen,
) -> Result<ConicProblem> {
    match screen {
        Screen::Primary => {
            let form = SecondaryForm::Omitted;
            Ok(Builder::new(dq, config, robust, gamma, form, false)?.finish(form))
        }
        Screen::Secondary => {
            let form = SecondaryForm::Phase(0.0);
            let mut b = Builder::new(dq, config, robust, gamma, form, false)?;
            let (_, im) = inner(&b.layout, &dq.k_s1s2);
            b.p.add_linear("secondary-phase", im, Sense::Eq, 0.0);
            Ok(b.finish_rest(form))
        }
    }
}

/// Index of the margin variable of a [`build_phase_restricted`] problem.
pub fn margin_index(p: &ConicProblem) -> usize {
    p.n_vars - 1
}
