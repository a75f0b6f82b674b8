//! Seeded Monte Carlo sweeps and their CSV/JSON output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::mix_seed;
use crate::metrics::{rate, BeamformingSolution};
use crate::model::{derive, generate_channels, make_uncertainty, NetworkConfig, UncertaintyMode};
use crate::optimizer::{optimize, BisectionConfig, Mode, Tolerance};
use crate::robust::robust_constants;

pub const DEFAULT_TRIALS: usize = 500;

/// Upper limit on relays and interferers accepted from a spec file.
pub const MAX_NODES: usize = 1024;

/// `10^(x / 10)`.
pub fn dbm_to_linear(x_dbm: f64) -> f64 {
    10f64.powf(x_dbm / 10.0)
}

fn default_true() -> bool {
    true
}

fn default_mu() -> f64 {
    1.0
}

/// Network parameters with powers in dBm; every transmitter of a class
/// shares one power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub n_relays: usize,
    pub n_interferers: usize,
    pub p_primary_dbm: f64,
    pub p_secondary_dbm: f64,
    #[serde(default = "default_true")]
    pub secondaries: bool,
    pub p_interferer_dbm: f64,
    pub noise_dbm: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub relay_cap_dbm: f64,
    /// CSI error radius as a percentage of each estimate's norm (robust mode).
    #[serde(default)]
    pub imperfection_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sweep {
    NoiseDbm(Vec<f64>),
    InterfererPowerDbm(Vec<f64>),
    RelayCapDbm(Vec<f64>),
    ImperfectionPct(Vec<f64>),
}

impl Sweep {
    pub fn values(&self) -> &[f64] {
        match self {
            Sweep::NoiseDbm(v) | Sweep::InterfererPowerDbm(v) | Sweep::RelayCapDbm(v) | Sweep::ImperfectionPct(v) => v,
        }
    }

    fn apply(&self, base: &BaseSpec, value: f64) -> BaseSpec {
        let mut b = base.clone();
        match self {
            Sweep::NoiseDbm(_) => b.noise_dbm = value,
            Sweep::InterfererPowerDbm(_) => b.p_interferer_dbm = value,
            Sweep::RelayCapDbm(_) => b.relay_cap_dbm = value,
            Sweep::ImperfectionPct(_) => b.imperfection_pct = value,
        }
        b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Perfect,
    Robust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub path: String,
    #[serde(default)]
    pub format: Format,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_tol() -> f64 {
    1e-3
}

fn default_verify() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub base: BaseSpec,
    pub sweep: Sweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: RunMode,
    pub outputs: Option<Outputs>,
    /// Bisection width as a fraction of the per-instance upper bound.
    #[serde(default = "default_tol")]
    pub bisection_tol_rel: f64,
    /// Sampled channel errors checked per accepted robust level.
    #[serde(default = "default_verify")]
    pub verify_samples: usize,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.base.n_relays > MAX_NODES || self.base.n_interferers > MAX_NODES {
            return bad("too many relays or interferers");
        }
        if self.sweep.values().is_empty() {
            return bad("sweep must list at least one value");
        }
        if self.sweep.values().iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        if !(self.bisection_tol_rel > 0.0 && self.bisection_tol_rel < 1.0) {
            return bad("bisection_tol_rel must lie in (0, 1)");
        }
        for &v in self.sweep.values() {
            let b = self.sweep.apply(&self.base, v);
            if !(0.0..100.0).contains(&b.imperfection_pct) {
                return bad("imperfection_pct must lie in [0, 100)");
            }
            network_config(&b)?;
        }
        Ok(())
    }

    fn bisection(&self) -> BisectionConfig {
        BisectionConfig {
            tol: Tolerance::Relative(self.bisection_tol_rel),
            ..BisectionConfig::default()
        }
    }
}

/// Linear-power network configuration of one sweep point.
pub fn network_config(b: &BaseSpec) -> Result<NetworkConfig> {
    let mut c = NetworkConfig::uniform(
        b.n_relays,
        b.n_interferers,
        dbm_to_linear(b.p_primary_dbm),
        dbm_to_linear(b.p_interferer_dbm),
        dbm_to_linear(b.noise_dbm),
        b.mu,
        dbm_to_linear(b.relay_cap_dbm),
    );
    c.p_secondary = if b.secondaries {
        [dbm_to_linear(b.p_secondary_dbm); 2]
    } else {
        [0.0; 2]
    };
    c.validate()?;
    Ok(c)
}

/// One optimised instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub point: usize,
    pub sweep_value: f64,
    pub trial: usize,
    pub gamma: f64,
    pub gamma_upper: f64,
    pub sinr_p1: f64,
    pub sinr_p2: f64,
    pub sinr_s1: f64,
    pub sinr_s2: f64,
    pub rate_p_min: f64,
    pub rate_s1: f64,
    pub rate_s2: f64,
    /// Secondary rate guaranteed by the max-min level, `log2(1 + gamma/mu)`.
    pub rate_s_allowed: f64,
    pub rank_one_ok: bool,
    pub iterations: usize,
    pub status: String,
    pub relay_power: Vec<f64>,
}

/// Mean and standard error of the numeric columns at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub point: usize,
    pub sweep_value: f64,
    pub trials: usize,
    pub mean: [f64; COLUMNS],
    pub se: [f64; COLUMNS],
}

/// Numeric CSV columns, in [`CSV_HEADER`] order after `trial`.
pub const COLUMNS: usize = 10;

pub const CSV_HEADER: &str =
    "sweep_value,trial,gamma,sinr_p1,sinr_p2,sinr_s1,sinr_s2,rate_p_min,rate_s1,rate_s2,rank_one_ok,iterations,status";

impl TrialRecord {
    fn numeric(&self) -> [f64; COLUMNS] {
        [
            self.gamma,
            self.sinr_p1,
            self.sinr_p2,
            self.sinr_s1,
            self.sinr_s2,
            self.rate_p_min,
            self.rate_s1,
            self.rate_s2,
            if self.rank_one_ok { 1.0 } else { 0.0 },
            self.iterations as f64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub spec: ExperimentSpec,
    pub rows: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ResultTable {
    pub fn aggregate(&self, point: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.point == point)
    }
}

fn safe_rate(sinr: f64) -> f64 {
    rate(sinr).unwrap_or(0.0)
}

fn run_trial(spec: &ExperimentSpec, point: usize, value: f64, trial: usize) -> TrialRecord {
    let base = spec.sweep.apply(&spec.base, value);
    let seed = mix_seed(&[spec.seed, point as u64, trial as u64]);
    let outcome = (|| -> Result<(BeamformingSolution, NetworkConfig)> {
        let config = network_config(&base)?;
        let truth = generate_channels(&config, seed);
        let bc = spec.bisection();
        match spec.mode {
            RunMode::Perfect => {
                let dq = derive(&config, &truth)?;
                Ok((optimize(&dq, &config, Mode::Perfect, &bc)?, config))
            }
            RunMode::Robust => {
                let ratio = base.imperfection_pct / 100.0;
                let um = make_uncertainty(&truth, &config, UncertaintyMode::Fractional(ratio), mix_seed(&[seed, 1]))?;
                let dq_hat = derive(&config, &um.estimates)?;
                let rc = robust_constants(&um, &config, &dq_hat)?;
                let mode = Mode::Robust {
                    constants: &rc,
                    uncertainty: &um,
                    verify_samples: spec.verify_samples,
                    verify_seed: mix_seed(&[seed, 2]),
                };
                let sol = optimize(&dq_hat, &config, mode, &bc)?;
                // report what the design achieves on the actual channels
                let dq = derive(&config, &truth)?;
                let mut on_truth = BeamformingSolution::evaluate(sol.w.clone(), sol.gamma, &dq, &config);
                on_truth.gamma_upper = sol.gamma_upper;
                on_truth.rank_one_ok = sol.rank_one_ok;
                on_truth.iterations = sol.iterations;
                on_truth.diagnostics = sol.diagnostics;
                Ok((on_truth, config))
            }
        }
    })();
    match outcome {
        Ok((sol, config)) => {
            let secondaries = config.has_secondaries();
            let s = |v: f64| if secondaries { v } else { 0.0 };
            TrialRecord {
                point,
                sweep_value: value,
                trial,
                gamma: sol.gamma,
                gamma_upper: sol.gamma_upper,
                sinr_p1: sol.sinr_p[0],
                sinr_p2: sol.sinr_p[1],
                sinr_s1: s(sol.sinr_s[0]),
                sinr_s2: s(sol.sinr_s[1]),
                rate_p_min: safe_rate(sol.sinr_p[0].min(sol.sinr_p[1])),
                rate_s1: s(safe_rate(sol.sinr_s[0])),
                rate_s2: s(safe_rate(sol.sinr_s[1])),
                rate_s_allowed: s(safe_rate(sol.gamma / config.mu)),
                rank_one_ok: sol.rank_one_ok,
                iterations: sol.iterations,
                status: sol.diagnostics.status().to_string(),
                relay_power: sol.relay_power,
            }
        }
        Err(_) => TrialRecord {
            point,
            sweep_value: value,
            trial,
            gamma: 0.0,
            gamma_upper: 0.0,
            sinr_p1: 0.0,
            sinr_p2: 0.0,
            sinr_s1: 0.0,
            sinr_s2: 0.0,
            rate_p_min: 0.0,
            rate_s1: 0.0,
            rate_s2: 0.0,
            rate_s_allowed: 0.0,
            rank_one_ok: false,
            iterations: 0,
            status: "error".to_string(),
            relay_power: Vec::new(),
        },
    }
}

fn aggregate(point: usize, value: f64, rows: &[TrialRecord]) -> Aggregate {
    let n = rows.len() as f64;
    let mut mean = [0.0; COLUMNS];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r.numeric()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut se = [0.0; COLUMNS];
    if rows.len() > 1 {
        for r in rows {
            for ((s, v), m) in se.iter_mut().zip(r.numeric()).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        se.iter_mut().for_each(|s| *s = (*s / (n - 1.0) / n).sqrt());
    }
    Aggregate {
        point,
        sweep_value: value,
        trials: rows.len(),
        mean,
        se,
    }
}

/// Runs every (point, trial) pair on `threads` workers (all cores when
/// `None`). Output order and content depend only on the spec.
pub fn run(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ResultTable> {
    spec.validate()?;
    let jobs: Vec<(usize, f64, usize)> = spec
        .sweep
        .values()
        .iter()
        .enumerate()
        .flat_map(|(p, &v)| (0..spec.trials).map(move |t| (p, v, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let rows: Vec<TrialRecord> =
        pool.install(|| jobs.par_iter().map(|&(p, v, t)| run_trial(spec, p, v, t)).collect());
    let aggregates = spec
        .sweep
        .values()
        .iter()
        .enumerate()
        .map(|(p, &v)| aggregate(p, v, &rows[p * spec.trials..(p + 1) * spec.trials]))
        .collect();
    Ok(ResultTable {
        spec: spec.clone(),
        rows,
        aggregates,
    })
}

pub fn write_csv(table: &ResultTable, mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &table.rows {
        let v = r.numeric();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.sweep_value, r.trial, v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], r.rank_one_ok, r.iterations, r.status
        )?;
    }
    for a in &table.aggregates {
        for (tag, vals) in [("mean", &a.mean), ("se", &a.se)] {
            write!(out, "{},{tag}", a.sweep_value)?;
            for v in vals.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{tag}")?;
        }
    }
    Ok(())
}

pub fn write_json(table: &ResultTable, mut out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, table)?;
    writeln!(out)?;
    Ok(())
}

pub fn write(table: &ResultTable, format: Format, out: impl Write) -> Result<()> {
    match format {
        Format::Csv => write_csv(table, out),
        Format::Json => write_json(table, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_spec() -> ExperimentSpec {
        ExperimentSpec::from_json(
            r#"{
                "base": {"n_relays": 3, "n_interferers": 1, "p_primary_dbm": 0, "p_secondary_dbm": 0,
                         "p_interferer_dbm": -1, "noise_dbm": -10, "mu": 3, "relay_cap_dbm": 1},
                "sweep": {"noise_dbm": [-10, 0]},
                "trials": 2,
                "seed": 7
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn dbm_values() {
        assert_eq!(dbm_to_linear(0.0), 1.0);
        assert!((dbm_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((dbm_to_linear(-20.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn spec_defaults_and_rejections() {
        let s = small_spec();
        assert_eq!(s.mode, RunMode::Perfect);
        assert_eq!(s.bisection_tol_rel, 1e-3);
        let mut bad = s.clone();
        bad.trials = 0;
        assert!(bad.validate().is_err());
        bad = s.clone();
        bad.sweep = Sweep::NoiseDbm(vec![]);
        assert!(bad.validate().is_err());
        assert!(ExperimentSpec::from_json(r#"{"base": {}}"#).is_err());
    }

    #[test]
    fn csv_shape_and_aggregates() {
        let s = small_spec();
        let t = run(&s, Some(1)).unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 1 + 4 + 4);
        let cols = CSV_HEADER.split(',').count();
        assert!(lines.iter().all(|l| l.split(',').count() == cols));
        let mean0 = (t.rows[0].gamma + t.rows[1].gamma) / 2.0;
        assert!((t.aggregates[0].mean[0] - mean0).abs() <= 1e-12 * mean0.max(1.0));
    }
}
