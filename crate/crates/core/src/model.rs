//! Network parameters, channel state and the derived quadratic-form data.
//!
//! Index conventions: `[0]` and `[1]` address transceiver 1 and 2 of a pair;
//! `ī` ("the other one") of index `i` is `1 - i`. All powers are linear.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian_vector, hadamard, hermitian_part, outer, uniform_in_ball, CMatrix, CVector};

/// Scalar parameters of one network instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_relays: usize,
    pub n_interferers: usize,
    /// Transmit power of the primary transceivers.
    pub p_primary: [f64; 2],
    /// Transmit power of the secondary transceivers. Both zero means the
    /// secondary pair is absent and its constraints are dropped.
    pub p_secondary: [f64; 2],
    pub p_interferer: Vec<f64>,
    pub noise_var: f64,
    /// Priority weight of the primaries over the secondaries (`mu >= 1`).
    pub mu: f64,
    /// Per-relay transmit power cap.
    pub p_relay_max: Vec<f64>,
    pub eps_primary: [f64; 2],
    pub eps_secondary: [f64; 2],
    pub eps_interferer: Vec<f64>,
}

impl NetworkConfig {
    /// Identical transceiver powers, identical interferers and identical
    /// relay caps; all uncertainty radii zero.
    pub fn uniform(
        n_relays: usize,
        n_interferers: usize,
        p_transceiver: f64,
        p_interferer: f64,
        noise_var: f64,
        mu: f64,
        p_relay_max: f64,
    ) -> Self {
        NetworkConfig {
            n_relays,
            n_interferers,
            p_primary: [p_transceiver; 2],
            p_secondary: [p_transceiver; 2],
            p_interferer: vec![p_interferer; n_interferers],
            noise_var,
            mu,
            p_relay_max: vec![p_relay_max; n_relays],
            eps_primary: [0.0; 2],
            eps_secondary: [0.0; 2],
            eps_interferer: vec![0.0; n_interferers],
        }
    }

    pub fn has_secondaries(&self) -> bool {
        self.p_secondary.iter().any(|&p| p > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_relays == 0 {
            return bad("at least one relay is required".into());
        }
        if self.p_interferer.len() != self.n_interferers {
            return Err(Error::dim("p_interferer", self.n_interferers, self.p_interferer.len()));
        }
        if self.eps_interferer.len() != self.n_interferers {
            return Err(Error::dim("eps_interferer", self.n_interferers, self.eps_interferer.len()));
        }
        if self.p_relay_max.len() != self.n_relays {
            return Err(Error::dim("p_relay_max", self.n_relays, self.p_relay_max.len()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !self.p_primary.iter().all(|&p| positive(p)) {
            return bad(format!("primary powers must be positive: {:?}", self.p_primary));
        }
        let secondaries_absent = self.p_secondary.iter().all(|&p| p == 0.0);
        if !secondaries_absent && !self.p_secondary.iter().all(|&p| positive(p)) {
            return bad(format!(
                "secondary powers must both be positive or both zero: {:?}",
                self.p_secondary
            ));
        }
        if !self.p_interferer.iter().all(|&p| p.is_finite() && p >= 0.0) {
            return bad("interferer powers must be nonnegative".into());
        }
        if !positive(self.noise_var) {
            return bad(format!("noise variance must be positive, got {}", self.noise_var));
        }
        if !(self.mu.is_finite() && self.mu >= 1.0) {
            return bad(format!("mu must be at least 1, got {}", self.mu));
        }
        if !self.p_relay_max.iter().all(|&p| positive(p)) {
            return bad("relay power caps must be positive".into());
        }
        let radii = self.eps_primary.iter().chain(&self.eps_secondary).chain(&self.eps_interferer);
        if !radii.into_iter().all(|&e| e.is_finite() && e >= 0.0) {
            return bad("uncertainty radii must be nonnegative".into());
        }
        Ok(())
    }

    /// Copy of the config with the uncertainty radii replaced.
    pub fn with_radii(&self, radii: &UncertaintyRadii) -> Self {
        NetworkConfig {
            eps_primary: radii.primary,
            eps_secondary: radii.secondary,
            eps_interferer: radii.interferer.clone(),
            ..self.clone()
        }
    }
}

/// All channel vectors of one realisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    /// Primary transceiver `i` to the relays (length `N_r`).
    pub f_p: [CVector; 2],
    /// Secondary transceiver `i` to the relays (length `N_r`).
    pub f_s: [CVector; 2],
    /// Interferers to primary transceiver `i` (length `N_I`).
    pub h_p: [CVector; 2],
    /// Interferers to secondary transceiver `i` (length `N_I`).
    pub h_s: [CVector; 2],
    /// Interferer `l` to the relays (length `N_r`), one per interferer.
    pub h_i: Vec<CVector>,
}

impl ChannelSet {
    pub fn zeros(n_relays: usize, n_interferers: usize) -> Self {
        let r = || CVector::zeros(n_relays);
        let i = || CVector::zeros(n_interferers);
        ChannelSet {
            f_p: [r(), r()],
            f_s: [r(), r()],
            h_p: [i(), i()],
            h_s: [i(), i()],
            h_i: (0..n_interferers).map(|_| r()).collect(),
        }
    }

    pub fn check_dims(&self, config: &NetworkConfig) -> Result<()> {
        let (nr, ni) = (config.n_relays, config.n_interferers);
        for f in self.f_p.iter().chain(&self.f_s) {
            if f.len() != nr {
                return Err(Error::dim("relay channel", nr, f.len()));
            }
        }
        for h in self.h_p.iter().chain(&self.h_s) {
            if h.len() != ni {
                return Err(Error::dim("interferer-to-transceiver channel", ni, h.len()));
            }
        }
        if self.h_i.len() != ni {
            return Err(Error::dim("interferer count", ni, self.h_i.len()));
        }
        for h in &self.h_i {
            if h.len() != nr {
                return Err(Error::dim("interferer-to-relay channel", nr, h.len()));
            }
        }
        Ok(())
    }

    /// The interferer-side vectors in a fixed order: `h_p[0..2]`, `h_s[0..2]`,
    /// then `h_i[..]`.
    pub fn interferer_side(&self) -> impl Iterator<Item = &CVector> {
        self.h_p.iter().chain(&self.h_s).chain(&self.h_i)
    }

    fn interferer_side_mut(&mut self) -> impl Iterator<Item = &mut CVector> {
        self.h_p.iter_mut().chain(self.h_s.iter_mut()).chain(self.h_i.iter_mut())
    }
}

/// Draws every channel coefficient i.i.d. `CN(0, 1)`.
pub fn generate_channels(config: &NetworkConfig, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nr, ni) = (config.n_relays, config.n_interferers);
    let mut draw = |n| complex_gaussian_vector(&mut rng, n);
    let f_p = [draw(nr), draw(nr)];
    let f_s = [draw(nr), draw(nr)];
    let h_p = [draw(ni), draw(ni)];
    let h_s = [draw(ni), draw(ni)];
    let h_i = (0..ni).map(|_| draw(nr)).collect();
    ChannelSet { f_p, f_s, h_p, h_s, h_i }
}

/// Radii of the uncertainty balls around the interferer-side estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRadii {
    pub primary: [f64; 2],
    pub secondary: [f64; 2],
    pub interferer: Vec<f64>,
}

impl UncertaintyRadii {
    pub fn from_config(config: &NetworkConfig) -> Self {
        UncertaintyRadii {
            primary: config.eps_primary,
            secondary: config.eps_secondary,
            interferer: config.eps_interferer.clone(),
        }
    }

    /// Radii in the order of [`ChannelSet::interferer_side`].
    pub fn ordered(&self) -> Vec<f64> {
        self.primary.iter().chain(&self.secondary).chain(&self.interferer).copied().collect()
    }

    fn from_ordered(v: &[f64]) -> Self {
        UncertaintyRadii {
            primary: [v[0], v[1]],
            secondary: [v[2], v[3]],
            interferer: v[4..].to_vec(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ordered().iter().all(|&e| e == 0.0)
    }
}

/// Estimated interferer CSI with its error radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyModel {
    /// Estimates of the interferer-side vectors; relay channels are exact.
    pub estimates: ChannelSet,
    pub radii: UncertaintyRadii,
    /// Ground truth, kept only for validation runs.
    pub truth: Option<ChannelSet>,
}

impl UncertaintyModel {
    /// Perfect knowledge: estimates equal the channels, all radii zero.
    pub fn exact(channels: &ChannelSet) -> Self {
        let ni = channels.h_i.len();
        UncertaintyModel {
            estimates: channels.clone(),
            radii: UncertaintyRadii {
                primary: [0.0; 2],
                secondary: [0.0; 2],
                interferer: vec![0.0; ni],
            },
            truth: Some(channels.clone()),
        }
    }
}

/// How the estimation error radii are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UncertaintyMode {
    /// `eps = rho * ||h_hat||` for every interferer-side vector, `0 <= rho < 1`.
    Fractional(f64),
    /// Radii taken from the `eps_*` fields of the config.
    Absolute,
}

const MAX_FRACTIONAL_REDRAWS: usize = 1000;

/// Produces estimates `h_hat = h - dh` with `dh` uniform in the error ball.
pub fn make_uncertainty(
    truth: &ChannelSet,
    config: &NetworkConfig,
    mode: UncertaintyMode,
    seed: u64,
) -> Result<UncertaintyModel> {
    truth.check_dims(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates = truth.clone();
    let radii = match mode {
        UncertaintyMode::Absolute => {
            let radii = UncertaintyRadii::from_config(config);
            for (h, eps) in estimates.interferer_side_mut().zip(radii.ordered()) {
                let dh = uniform_in_ball(&mut rng, h.len(), eps);
                *h -= dh;
            }
            radii
        }
        UncertaintyMode::Fractional(rho) => {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::InvalidRatio(rho));
            }
            let mut eps_all = Vec::new();
            for h in estimates.interferer_side_mut() {
                let reach = rho * h.norm() / (1.0 - rho);
                let mut accepted = None;
                for _ in 0..MAX_FRACTIONAL_REDRAWS {
                    let dh = uniform_in_ball(&mut rng, h.len(), reach);
                    let est = &*h - &dh;
                    let eps = rho * est.norm();
                    if dh.norm() <= eps {
                        accepted = Some((est, eps));
                        break;
                    }
                }
                // Shrinking toward zero always ends inside the ball.
                let (est, eps) = accepted.unwrap_or_else(|| {
                    let mut dh = uniform_in_ball(&mut rng, h.len(), reach);
                    loop {
                        let est = &*h - &dh;
                        let eps = rho * est.norm();
                        if dh.norm() <= eps {
                            break (est, eps);
                        }
                        dh.scale_mut(0.5);
                    }
                });
                *h = est;
                eps_all.push(eps);
            }
            UncertaintyRadii::from_ordered(&eps_all)
        }
    };
    Ok(UncertaintyModel {
        estimates,
        radii,
        truth: Some(truth.clone()),
    })
}

/// Everything the SINR, power and constraint expressions need.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities {
    /// `diag(f_P1) f_P2`.
    pub k_p1p2: CVector,
    /// `diag(f_S1) f_S2`.
    pub k_s1s2: CVector,
    /// `k_sp[i][j] = diag(f_Si) f_Pj`.
    pub k_sp: [[CVector; 2]; 2],
    /// Interference-plus-noise matrices seen by the primaries.
    pub q_p: [CMatrix; 2],
    pub q_s: [CMatrix; 2],
    /// `q_*` without the relayed-interferer terms.
    pub t_p: [CMatrix; 2],
    pub t_s: [CMatrix; 2],
    /// Direct interference power at each transceiver.
    pub zeta_p: [f64; 2],
    pub zeta_s: [f64; 2],
    /// Received power per relay; relay `j` spends `xi_r[j] |w_j|^2`.
    pub xi_r: Vec<f64>,
    /// `xi_r` without the interferer terms.
    pub chi_r: Vec<f64>,
    /// Interferer powers (diagonal of `P_I`).
    pub p_i_diag: Vec<f64>,
}

impl DerivedQuantities {
    pub fn n_relays(&self) -> usize {
        self.xi_r.len()
    }
}

fn relayed_interference(config: &NetworkConfig, f: &CVector, h_i: &[CVector]) -> CMatrix {
    let n = f.len();
    h_i.iter()
        .zip(&config.p_interferer)
        .fold(CMatrix::zeros(n, n), |acc, (h, &p)| acc + outer(&hadamard(f, h)).scale(p))
}

/// Precomputes the k-vectors, Q/T matrices and the zeta/xi/chi constants.
pub fn derive(config: &NetworkConfig, channels: &ChannelSet) -> Result<DerivedQuantities> {
    config.validate()?;
    channels.check_dims(config)?;
    let n = config.n_relays;
    let s2 = config.noise_var;
    let ch = channels;

    let k_p1p2 = hadamard(&ch.f_p[0], &ch.f_p[1]);
    let k_s1s2 = hadamard(&ch.f_s[0], &ch.f_s[1]);
    let k_sp = [0, 1].map(|i| [0, 1].map(|j| hadamard(&ch.f_s[i], &ch.f_p[j])));

    let noise_term = |f: &CVector| CMatrix::from_diagonal(&f.map(|x| (x.norm_sqr() * s2).into()));

    let t_p = [0, 1].map(|j| {
        let mut t = noise_term(&ch.f_p[j]);
        for i in 0..2 {
            t += outer(&k_sp[i][j]).scale(config.p_secondary[i]);
        }
        hermitian_part(&t)
    });
    let t_s = [0, 1].map(|j| {
        let mut t = noise_term(&ch.f_s[j]);
        for i in 0..2 {
            t += outer(&k_sp[j][i]).scale(config.p_primary[i]);
        }
        hermitian_part(&t)
    });
    let q_p = [0, 1].map(|j| hermitian_part(&(&t_p[j] + relayed_interference(config, &ch.f_p[j], &ch.h_i))));
    let q_s = [0, 1].map(|j| hermitian_part(&(&t_s[j] + relayed_interference(config, &ch.f_s[j], &ch.h_i))));

    let direct = |h: &CVector| h.iter().zip(&config.p_interferer).map(|(x, &p)| p * x.norm_sqr()).sum::<f64>();
    let zeta_p = [direct(&ch.h_p[0]), direct(&ch.h_p[1])];
    let zeta_s = [direct(&ch.h_s[0]), direct(&ch.h_s[1])];

    let chi_r: Vec<f64> = (0..n)
        .map(|j| {
            (0..2)
                .map(|i| {
                    config.p_primary[i] * ch.f_p[i][j].norm_sqr() + config.p_secondary[i] * ch.f_s[i][j].norm_sqr()
                })
                .sum::<f64>()
                + s2
        })
        .collect();
    let xi_r = (0..n)
        .map(|j| {
            chi_r[j]
                + ch.h_i.iter().zip(&config.p_interferer).map(|(h, &p)| p * h[j].norm_sqr()).sum::<f64>()
        })
        .collect();

    Ok(DerivedQuantities {
        k_p1p2,
        k_s1s2,
        k_sp,
        q_p,
        q_s,
        t_p,
        t_s,
        zeta_p,
        zeta_s,
        xi_r,
        chi_r,
        p_i_diag: config.p_interferer.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eigen;
    use num_complex::Complex64;

    fn config(nr: usize, ni: usize) -> NetworkConfig {
        NetworkConfig::uniform(nr, ni, 1.0, 0.8, 0.1, 3.0, 1.25)
    }

    #[test]
    fn channels_are_deterministic_per_seed() {
        let c = config(10, 2);
        assert_eq!(generate_channels(&c, 7), generate_channels(&c, 7));
        assert_ne!(generate_channels(&c, 1), generate_channels(&c, 2));
    }

    #[test]
    fn channel_entries_have_unit_variance() {
        let c = config(10, 2);
        // 10 relays x 4 relay vectors + 2 x 4 + 2 x 10 = 68 entries per draw
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        let mut seed = 7;
        while count < 100_000 {
            let ch = generate_channels(&c, seed);
            for v in ch.f_p.iter().chain(&ch.f_s).chain(&ch.h_p).chain(&ch.h_s).chain(&ch.h_i) {
                for x in v.iter() {
                    let p = x.norm_sqr();
                    sum += p;
                    sum_sq += p * p;
                    count += 1;
                }
            }
            seed += 1;
        }
        let mean = sum / count as f64;
        // |x|^2 is Exp(1): standard deviation of the mean is 1/sqrt(n)
        let sd = ((sum_sq / count as f64 - mean * mean) / count as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd, "mean {mean}, sd {sd}");
    }

    #[test]
    fn unit_basis_k_vector() {
        let c = config(3, 0);
        let mut ch = ChannelSet::zeros(3, 0);
        let e1 = CVector::from_fn(3, |i, _| if i == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        ch.f_p = [e1.clone(), e1.clone()];
        let dq = derive(&c, &ch).unwrap();
        assert_eq!(dq.k_p1p2, e1);
    }

    #[test]
    fn zero_channels_leave_only_noise() {
        let c = config(4, 2);
        let dq = derive(&c, &ChannelSet::zeros(4, 2)).unwrap();
        assert!(dq.xi_r.iter().all(|&x| x == c.noise_var));
        assert_eq!(dq.zeta_p, [0.0, 0.0]);
        assert_eq!(dq.zeta_s, [0.0, 0.0]);
        assert!(dq.q_p.iter().chain(&dq.q_s).all(|q| q.norm() == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c = config(4, 2);
        let ch = generate_channels(&config(3, 2), 1);
        assert!(matches!(derive(&c, &ch), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn derived_matrices_are_hermitian_psd() {
        let c = config(6, 2);
        let dq = derive(&c, &generate_channels(&c, 11)).unwrap();
        for m in dq.q_p.iter().chain(&dq.q_s).chain(&dq.t_p).chain(&dq.t_s) {
            assert_eq!(m, &m.adjoint());
            assert!(hermitian_eigen(m).0[0] >= -1e-10);
        }
        for j in 0..6 {
            assert!(dq.xi_r[j] >= c.noise_var && dq.chi_r[j] >= c.noise_var);
        }
    }

    #[test]
    fn fractional_uncertainty_rejects_ratio_of_one() {
        let c = config(4, 2);
        let ch = generate_channels(&c, 1);
        assert!(matches!(
            make_uncertainty(&ch, &c, UncertaintyMode::Fractional(1.0), 0),
            Err(Error::InvalidRatio(_))
        ));
    }

    #[test]
    fn zero_ratio_reproduces_truth() {
        let c = config(4, 2);
        let ch = generate_channels(&c, 1);
        let um = make_uncertainty(&ch, &c, UncertaintyMode::Fractional(0.0), 3).unwrap();
        assert_eq!(um.estimates, ch);
        assert!(um.radii.is_zero());
    }

    #[test]
    fn absolute_mode_uses_config_radii() {
        let mut c = config(4, 2);
        c.eps_interferer = vec![0.2, 0.3];
        c.eps_primary = [0.1, 0.1];
        let ch = generate_channels(&c, 1);
        let um = make_uncertainty(&ch, &c, UncertaintyMode::Absolute, 3).unwrap();
        for ((t, e), eps) in ch.interferer_side().zip(um.estimates.interferer_side()).zip(um.radii.ordered()) {
            assert!((t - e).norm() <= eps + 1e-15);
        }
        assert_eq!(um.estimates.f_p, ch.f_p);
    }
}
