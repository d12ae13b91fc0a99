//! Batch front-end shared by the binary: configuration, distance sweeps and
//! curve output.
//!
//! CSV output has the fixed header
//! `distance_km,duration_s,fidelity,alpha1_sq,beta1_sq,gamma1_sq,feasible`.
//! Infeasible points and probabilities a protocol does not use are empty.
//! JSON output is one object:
//!
//! ```text
//! {
//!   "protocol": "hybrid-repeater",
//!   "target_fidelity": 0.99,
//!   "rows": [ { "distance_km": 100.0, "duration_s": 0.1, "fidelity": 0.99,
//!               "alpha1_sq": 0.02, "beta1_sq": 0.001, "gamma1_sq": 0.001,
//!               "feasible": true }, ... ]
//! }
//! ```
//!
//! with `null` where CSV leaves a field empty.

pub mod config;

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{Config, ConfigError};

use crate::error::{Error, Result};
use crate::links::OracleConfig;
use crate::optimize::{optimize_direct, optimize_hybrid, OptimizerSettings};
use crate::swaps::SwapTopology;
use crate::timing::{ProtocolVariant, ScenarioConfig};

/// Reference configuration for the protocol comparison, as shipped.
pub const BASELINE_PRESET: &str = include_str!("../../presets/baseline.toml");

pub const CSV_COLUMNS: [&str; 7] = [
    "distance_km",
    "duration_s",
    "fidelity",
    "alpha1_sq",
    "beta1_sq",
    "gamma1_sq",
    "feasible",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub protocol: ProtocolVariant,
    pub distances_km: Vec<f64>,
    pub scenario: ScenarioConfig,
    pub optimizer: OptimizerSettings,
    pub oracle: OracleConfig,
}

impl SweepSpec {
    pub fn from_config(cfg: &Config, protocol: ProtocolVariant) -> Self {
        Self {
            protocol,
            distances_km: cfg.distances_km.clone(),
            scenario: cfg.scenario.clone(),
            optimizer: cfg.optimizer.clone(),
            oracle: cfg.oracle,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        config::check_distances(&self.distances_km)?;
        config::check_scenario(&self.scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub duration_s: Option<f64>,
    pub fidelity: Option<f64>,
    pub alpha1_sq: Option<f64>,
    pub beta1_sq: Option<f64>,
    pub gamma1_sq: Option<f64>,
    pub feasible: bool,
}

impl SweepRow {
    fn infeasible(distance_km: f64) -> Self {
        Self {
            distance_km,
            duration_s: None,
            fidelity: None,
            alpha1_sq: None,
            beta1_sq: None,
            gamma1_sq: None,
            feasible: false,
        }
    }
}

/// Scenario for one point of a sweep of `protocol`.
pub fn scenario_at(template: &ScenarioConfig, protocol: ProtocolVariant, distance_km: f64) -> ScenarioConfig {
    ScenarioConfig {
        distance_km,
        topology: protocol.topology().unwrap_or(SwapTopology::WithRepeater),
        ..template.clone()
    }
}

/// Optimizes one protocol at one distance.
pub fn optimize_point(
    protocol: ProtocolVariant,
    scenario: &ScenarioConfig,
    optimizer: &OptimizerSettings,
    oracle: &OracleConfig,
) -> Result<SweepRow> {
    let row = match protocol {
        ProtocolVariant::Direct | ProtocolVariant::DirectIonRepeater => {
            optimize_direct(scenario, protocol == ProtocolVariant::DirectIonRepeater, oracle).map(|e| SweepRow {
                distance_km: scenario.distance_km,
                duration_s: Some(e.duration),
                fidelity: Some(e.fidelity),
                alpha1_sq: Some(e.alpha1_sq),
                beta1_sq: None,
                gamma1_sq: None,
                feasible: true,
            })
        }
        ProtocolVariant::Hybrid | ProtocolVariant::HybridRepeater => {
            optimize_hybrid(scenario, oracle, optimizer).map(|o| SweepRow {
                distance_km: scenario.distance_km,
                duration_s: Some(o.result.t_total),
                fidelity: Some(o.result.fidelity),
                alpha1_sq: Some(o.result.probabilities.alpha1_sq),
                beta1_sq: Some(o.result.probabilities.beta1_sq),
                gamma1_sq: Some(o.result.probabilities.gamma1_sq),
                feasible: true,
            })
        }
    };
    match row {
        Err(Error::Infeasible(_)) => Ok(SweepRow::infeasible(scenario.distance_km)),
        other => other,
    }
}

/// Optimizes every distance of the sweep on a pool of `threads` workers
/// (all available cores when `None`). Rows follow the distance order.
pub fn run_sweep(spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        spec.distances_km
            .par_iter()
            .map(|&d| {
                let scenario = scenario_at(&spec.scenario, spec.protocol, d);
                optimize_point(spec.protocol, &scenario, &spec.optimizer, &spec.oracle)
            })
            .collect()
    })
}

#[derive(Serialize)]
struct CurveDocument<'a> {
    protocol: &'a str,
    target_fidelity: f64,
    rows: &'a [SweepRow],
}

pub fn write_rows(
    rows: &[SweepRow],
    format: OutputFormat,
    protocol: ProtocolVariant,
    target_fidelity: f64,
    mut out: impl Write,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            if rows.is_empty() {
                w.write_record(CSV_COLUMNS)?;
            }
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()
        }
        OutputFormat::Json => {
            let doc = CurveDocument {
                protocol: protocol.name(),
                target_fidelity,
                rows,
            };
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_matches_baseline() {
        let cfg = Config::parse(BASELINE_PRESET).unwrap();
        assert_eq!(cfg.scenario, ScenarioConfig::baseline(0.0, SwapTopology::WithRepeater));
        assert_eq!(cfg.optimizer, OptimizerSettings::default());
        assert_eq!(cfg.oracle, OracleConfig::default());
        assert_eq!(cfg.distances_km.len(), 30);
    }

    #[test]
    fn csv_schema() {
        let rows = vec![
            SweepRow {
                distance_km: 50.0,
                duration_s: Some(0.5),
                fidelity: Some(0.99),
                alpha1_sq: Some(0.01),
                beta1_sq: None,
                gamma1_sq: None,
                feasible: true,
            },
            SweepRow::infeasible(300.0),
        ];
        let mut buf = Vec::new();
        write_rows(&rows, OutputFormat::Csv, ProtocolVariant::Direct, 0.99, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "50.0,0.5,0.99,0.01,,,true");
        assert_eq!(lines.next().unwrap(), "300.0,,,,,,false");
    }

    #[test]
    fn json_schema() {
        let rows = vec![SweepRow::infeasible(10.0)];
        let mut buf = Vec::new();
        write_rows(&rows, OutputFormat::Json, ProtocolVariant::Hybrid, 0.9, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["protocol"], "hybrid");
        assert_eq!(v["rows"][0]["duration_s"], serde_json::Value::Null);
        assert_eq!(v["rows"][0]["feasible"], false);
        let keys: Vec<&str> = v["rows"][0].as_object().unwrap().keys().map(|k| k.as_str()).collect();
        let mut expected = CSV_COLUMNS.to_vec();
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn sweep_rejects_bad_distances() {
        let cfg = Config::default();
        let mut spec = SweepSpec::from_config(&cfg, ProtocolVariant::Direct);
        assert!(run_sweep(&spec, Some(1)).is_err());
        spec.distances_km = vec![20.0, 10.0];
        assert!(run_sweep(&spec, Some(1)).is_err());
    }
}
