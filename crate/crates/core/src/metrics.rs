//! SINR, relay power and rate evaluation for a given beamforming vector.
//!
//! [`sinr`] and [`relay_powers`] use the closed-form quadratic expressions;
//! [`empirical_sinr`] replays the two-phase transmission symbol by symbol and
//! serves as an independent cross-check of both.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, hadamard, mix_seed, quad_form, unit_phase, CVector};
use crate::model::{ChannelSet, DerivedQuantities, NetworkConfig};
use crate::optimizer::Diagnostics;

/// One of the four transceivers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    P1,
    P2,
    S1,
    S2,
}

impl User {
    pub const ALL: [User; 4] = [User::P1, User::P2, User::S1, User::S2];

    pub fn is_primary(self) -> bool {
        matches!(self, User::P1 | User::P2)
    }

    /// 0 for the first transceiver of a pair, 1 for the second.
    pub fn index(self) -> usize {
        match self {
            User::P1 | User::S1 => 0,
            User::P2 | User::S2 => 1,
        }
    }
}

/// Result of one optimisation: the beamformer and its verified metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub w: CVector,
    /// Verified max-min level.
    pub gamma: f64,
    /// Per-constraint upper bound the search started from.
    pub gamma_upper: f64,
    pub sinr_p: [f64; 2],
    pub sinr_s: [f64; 2],
    pub relay_power: Vec<f64>,
    /// Whether the relaxation's matrix variable was numerically rank one at
    /// the accepted level.
    pub rank_one_ok: bool,
    pub iterations: usize,
    pub diagnostics: Diagnostics,
}

impl BeamformingSolution {
    /// Recomputes every metric of `w` from the derived quantities.
    pub fn evaluate(w: CVector, gamma: f64, dq: &DerivedQuantities, config: &NetworkConfig) -> Self {
        let sinr_p = [sinr(&w, dq, User::P1, config), sinr(&w, dq, User::P2, config)];
        let sinr_s = [sinr(&w, dq, User::S1, config), sinr(&w, dq, User::S2, config)];
        let relay_power = dq.xi_r.iter().zip(w.iter()).map(|(xi, wj)| xi * wj.norm_sqr()).collect();
        BeamformingSolution {
            w,
            gamma,
            gamma_upper: 0.0,
            sinr_p,
            sinr_s,
            relay_power,
            rank_one_ok: false,
            iterations: 0,
            diagnostics: Diagnostics::default(),
        }
    }
}

/// Transmit power of each relay, `xi_j |w_j|^2`.
pub fn relay_powers(w: &CVector, dq: &DerivedQuantities) -> Result<Vec<f64>> {
    if w.len() != dq.n_relays() {
        return Err(Error::dim("beamforming vector", dq.n_relays(), w.len()));
    }
    Ok(dq.xi_r.iter().zip(w.iter()).map(|(xi, wj)| xi * wj.norm_sqr()).collect())
}

/// Analytic SINR of `user` under beamformer `w`.
pub fn sinr(w: &CVector, dq: &DerivedQuantities, user: User, config: &NetworkConfig) -> f64 {
    let i = user.index();
    let (p_other, k, q, zeta) = if user.is_primary() {
        (config.p_primary[1 - i], &dq.k_p1p2, &dq.q_p[i], dq.zeta_p[i])
    } else {
        (config.p_secondary[1 - i], &dq.k_s1s2, &dq.q_s[i], dq.zeta_s[i])
    };
    let signal = p_other * k.dotc(w).norm_sqr();
    signal / (quad_form(q, w).max(0.0) + zeta + config.noise_var)
}

/// `min{SINR_P1, SINR_P2, mu SINR_S1, mu SINR_S2}`; secondary terms are
/// omitted when the secondary pair is absent.
pub fn objective(w: &CVector, dq: &DerivedQuantities, config: &NetworkConfig) -> f64 {
    let primary = sinr(w, dq, User::P1, config).min(sinr(w, dq, User::P2, config));
    if !config.has_secondaries() {
        return primary;
    }
    let secondary = sinr(w, dq, User::S1, config).min(sinr(w, dq, User::S2, config));
    primary.min(config.mu * secondary)
}

/// Achievable rate `log2(1 + sinr)` in bit/s/Hz.
pub fn rate(sinr: f64) -> Result<f64> {
    if sinr.is_nan() || sinr < 0.0 {
        return Err(Error::NegativeSinr(sinr));
    }
    Ok((1.0 + sinr).log2())
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrEstimate {
    pub sinr: Estimate,
    pub desired_power: f64,
    pub interference_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    /// Indexed like [`User::ALL`].
    pub users: [SinrEstimate; 4],
    /// Mean `|t_j|^2` per relay.
    pub relay_power: Vec<Estimate>,
    pub n_symbols: usize,
}

impl EmpiricalReport {
    pub fn user(&self, user: User) -> &SinrEstimate {
        &self.users[User::ALL.iter().position(|&u| u == user).unwrap()]
    }
}

pub const MIN_SYMBOLS: usize = 1000;
const SHARDS: usize = 16;

#[derive(Debug, Clone, Default)]
struct Moments {
    d: f64,
    e: f64,
    dd: f64,
    ee: f64,
    de: f64,
}

impl Moments {
    fn push(&mut self, d: f64, e: f64) {
        self.d += d;
        self.e += e;
        self.dd += d * d;
        self.ee += e * e;
        self.de += d * e;
    }

    fn merge(&mut self, o: &Moments) {
        self.d += o.d;
        self.e += o.e;
        self.dd += o.dd;
        self.ee += o.ee;
        self.de += o.de;
    }

    /// Ratio `mean(d) / mean(e)` with a delta-method standard error.
    fn ratio(&self, n: f64) -> SinrEstimate {
        let (md, me) = (self.d / n, self.e / n);
        let var_d = (self.dd / n - md * md).max(0.0);
        let var_e = (self.ee / n - me * me).max(0.0);
        let cov = self.de / n - md * me;
        let r = if me > 0.0 { md / me } else { 0.0 };
        let var_r = if me > 0.0 {
            (var_d / (me * me) + md * md * var_e / me.powi(4) - 2.0 * md * cov / me.powi(3)).max(0.0) / n
        } else {
            0.0
        };
        SinrEstimate {
            sinr: Estimate {
                value: r,
                std_err: var_r.sqrt(),
            },
            desired_power: md,
            interference_power: me,
        }
    }
}

#[derive(Debug, Clone)]
struct ShardStats {
    users: [Moments; 4],
    relay: Vec<(f64, f64)>,
}

/// Symbol-level simulation of both MABC phases.
///
/// Phase 1: all four transceivers and the interferers transmit, the relays
/// receive `r`. Phase 2: relay `j` sends `conj(w_j) r_j`, the interferers send
/// fresh symbols, and each transceiver removes its own echo. The SINR
/// estimate is the power of the partner's term over the power of everything
/// else left in the residual.
pub fn empirical_sinr(
    w: &CVector,
    channels: &ChannelSet,
    config: &NetworkConfig,
    n_symbols: usize,
    seed: u64,
) -> Result<EmpiricalReport> {
    if n_symbols < MIN_SYMBOLS {
        return Err(Error::TooFewSymbols {
            min: MIN_SYMBOLS,
            got: n_symbols,
        });
    }
    config.validate()?;
    channels.check_dims(config)?;
    if w.len() != config.n_relays {
        return Err(Error::dim("beamforming vector", config.n_relays, w.len()));
    }
    let nr = config.n_relays;
    let ni = config.n_interferers;
    let sigma = config.noise_var.sqrt();

    // Effective phase-2 gains: g[u][v] = w^H F_u f_v for receiver u, source v.
    let rx: [&CVector; 4] = [&channels.f_p[0], &channels.f_p[1], &channels.f_s[0], &channels.f_s[1]];
    let direct: [&CVector; 4] = [&channels.h_p[0], &channels.h_p[1], &channels.h_s[0], &channels.h_s[1]];
    let p_tx = [config.p_primary[0], config.p_primary[1], config.p_secondary[0], config.p_secondary[1]];
    let partner = [1usize, 0, 3, 2];

    let shard_len = n_symbols.div_ceil(SHARDS);
    let shards: Vec<ShardStats> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = shard_len.min(n_symbols.saturating_sub(shard * shard_len));
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, shard as u64]));
            let mut stats = ShardStats {
                users: Default::default(),
                relay: vec![(0.0, 0.0); nr],
            };
            let mut r = CVector::zeros(nr);
            let mut x1 = vec![Complex64::new(0.0, 0.0); ni];
            let mut x2 = vec![Complex64::new(0.0, 0.0); ni];
            for _ in 0..count {
                let x: [Complex64; 4] = std::array::from_fn(|_| unit_phase(&mut rng));
                x1.iter_mut().for_each(|s| *s = unit_phase(&mut rng));
                x2.iter_mut().for_each(|s| *s = unit_phase(&mut rng));

                for j in 0..nr {
                    let mut acc = complex_gaussian(&mut rng) * sigma;
                    for v in 0..4 {
                        acc += rx[v][j] * x[v] * p_tx[v].sqrt();
                    }
                    for l in 0..ni {
                        acc += channels.h_i[l][j] * x1[l] * config.p_interferer[l].sqrt();
                    }
                    r[j] = acc;
                }
                // t = W^H r
                let t = w.map(|c| c.conj()).component_mul(&r);
                for (j, tj) in t.iter().enumerate() {
                    let p = tj.norm_sqr();
                    stats.relay[j].0 += p;
                    stats.relay[j].1 += p * p;
                }
                for u in 0..4 {
                    let mut y = complex_gaussian(&mut rng) * sigma;
                    for j in 0..nr {
                        y += rx[u][j] * t[j];
                    }
                    for l in 0..ni {
                        y += direct[u][l] * x2[l] * config.p_interferer[l].sqrt();
                    }
                    let echo = w.dotc(&hadamard(rx[u], rx[u])) * x[u] * p_tx[u].sqrt();
                    let v = partner[u];
                    let desired = w.dotc(&hadamard(rx[u], rx[v])) * x[v] * p_tx[v].sqrt();
                    let residual = y - echo;
                    stats.users[u].push(desired.norm_sqr(), (residual - desired).norm_sqr());
                }
            }
            stats
        })
        .collect();

    let mut users: [Moments; 4] = Default::default();
    let mut relay = vec![(0.0, 0.0); nr];
    for s in &shards {
        for u in 0..4 {
            users[u].merge(&s.users[u]);
        }
        for j in 0..nr {
            relay[j].0 += s.relay[j].0;
            relay[j].1 += s.relay[j].1;
        }
    }
    let n = n_symbols as f64;
    Ok(EmpiricalReport {
        users: std::array::from_fn(|u| users[u].ratio(n)),
        relay_power: relay
            .iter()
            .map(|&(s, ss)| {
                let m = s / n;
                Estimate {
                    value: m,
                    std_err: ((ss / n - m * m).max(0.0) / n).sqrt(),
                }
            })
            .collect(),
        n_symbols,
    })
}
