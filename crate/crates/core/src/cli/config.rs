use serde::Deserialize;

use crate::links::OracleConfig;
use crate::optimize::OptimizerSettings;
use crate::swaps::SwapTopology;
use crate::timing::{ProtocolVariant, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {message}")]
    Read { path: String, message: String },
    #[error("{}{message}", location(.line, .field))]
    Invalid {
        line: Option<usize>,
        field: Option<String>,
        message: String,
    },
}

fn location(line: &Option<usize>, field: &Option<String>) -> String {
    match (line, field) {
        (Some(l), Some(f)) => format!("line {l}, field `{f}`: "),
        (Some(l), None) => format!("line {l}: "),
        (None, Some(f)) => format!("field `{f}`: "),
        (None, None) => String::new(),
    }
}

impl ConfigError {
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        Self::Invalid {
            line: None,
            field: Some(field.to_string()),
            message: message.into(),
        }
    }

    /// Attaches the line of `field` in `text` when the error has none yet.
    fn located(self, text: &str) -> Self {
        match self {
            Self::Invalid {
                line: None,
                field: Some(field),
                message,
            } => Self::Invalid {
                line: line_of_key(text, &field),
                field: Some(field),
                message,
            },
            other => other,
        }
    }
}

/// Line (1-based) of the first assignment to the last segment of a dotted
/// key, searched inside its table.
fn line_of_key(text: &str, dotted: &str) -> Option<usize> {
    let (table, key) = match dotted.rsplit_once('.') {
        Some((t, k)) => (t, k),
        None => ("", dotted),
    };
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            current = header.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == table {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySection {
    pub eta: Option<f64>,
    pub eta0_prime: Option<f64>,
    pub eta_fc: Option<f64>,
    pub eta_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_bb: Option<u32>,
    pub attenuation_db_per_km: Option<f64>,
    pub fiber_light_speed_km_s: Option<f64>,
    pub ion_pulse_duration_s: Option<f64>,
    pub bin_duration_s: Option<f64>,
    pub correlation_time_s: Option<f64>,
    pub detector_resolution_s: Option<f64>,
    pub dark_count_rate_hz: Option<f64>,
    pub target_fidelity: Option<f64>,
    pub en_reset_time_s: Option<f64>,
    pub efficiencies: Option<EfficiencySection>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub starts: Option<usize>,
    pub rel_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub penalty_weights: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub cutoff: Option<usize>,
}

/// Raw contents of a configuration file; every field is optional and falls
/// back to the baseline scenario.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub protocol: Option<String>,
    pub distances_km: Option<Vec<f64>>,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

/// Configuration with defaults filled in and every value checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub protocol: Option<ProtocolVariant>,
    pub distances_km: Vec<f64>,
    /// Scenario template; distance and topology are set per point.
    pub scenario: ScenarioConfig,
    pub optimizer: OptimizerSettings,
    pub oracle: OracleConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            protocol: None,
            distances_km: Vec::new(),
            scenario: ScenarioConfig::baseline(0.0, SwapTopology::WithRepeater),
            optimizer: OptimizerSettings::default(),
            oracle: OracleConfig::default(),
        }
    }
}

const SCENARIO_KEYS: [&str; 14] = [
    "n_bb",
    "attenuation_db_per_km",
    "fiber_light_speed_km_s",
    "ion_pulse_duration_s",
    "bin_duration_s",
    "correlation_time_s",
    "detector_resolution_s",
    "dark_count_rate_hz",
    "target_fidelity",
    "en_reset_time_s",
    "eta",
    "eta0_prime",
    "eta_fc",
    "eta_m",
];

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| {
            let span = e.span();
            let line = span.as_ref().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            let field = span
                .and_then(|s| text.get(s))
                .map(|k| k.trim().trim_matches('"').to_string())
                .filter(|k| !k.is_empty() && !k.contains(['\n', '=', '[']));
            ConfigError::Invalid {
                line,
                field,
                message: e.message().to_string(),
            }
        })?;
        file.resolve().map_err(|e| e.located(text))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }
}

impl ConfigFile {
    pub fn resolve(&self) -> Result<Config, ConfigError> {
        let mut cfg = Config::default();
        if let Some(p) = &self.protocol {
            cfg.protocol = Some(p.parse().map_err(|e: crate::Error| ConfigError::field("protocol", e.to_string()))?);
        }
        if let Some(d) = &self.distances_km {
            check_distances(d)?;
            cfg.distances_km = d.clone();
        }
        let s = &self.scenario;
        let sc = &mut cfg.scenario;
        macro_rules! take {
            ($src:expr, $dst:expr, $($f:ident),+) => {
                $( if let Some(v) = $src.$f { $dst.$f = v; } )+
            };
        }
        take!(
            s,
            sc,
            n_bb,
            attenuation_db_per_km,
            fiber_light_speed_km_s,
            ion_pulse_duration_s,
            bin_duration_s,
            correlation_time_s,
            detector_resolution_s,
            dark_count_rate_hz,
            target_fidelity,
            en_reset_time_s
        );
        if let Some(e) = &s.efficiencies {
            take!(e, sc.efficiencies, eta, eta0_prime, eta_fc, eta_m);
        }
        check_scenario(sc)?;

        let o = &self.optimizer;
        take!(o, cfg.optimizer, starts, rel_tol, max_iterations, seed);
        if let Some(w) = &o.penalty_weights {
            cfg.optimizer.penalty_weights = w.clone();
        }
        cfg.optimizer
            .validate()
            .map_err(|e| ConfigError::field(optimizer_field(o), e.to_string()))?;
        if let Some(c) = self.oracle.cutoff {
            if c == 0 {
                return Err(ConfigError::field("oracle.cutoff", "cutoff must be at least 1"));
            }
            cfg.oracle.cutoff = c;
        }
        Ok(cfg)
    }
}

fn optimizer_field(o: &OptimizerSection) -> &'static str {
    if o.starts == Some(0) {
        "optimizer.starts"
    } else if o.max_iterations == Some(0) {
        "optimizer.max_iterations"
    } else if o.rel_tol.is_some_and(|t| !(t > 0.0)) {
        "optimizer.rel_tol"
    } else {
        "optimizer.penalty_weights"
    }
}

pub fn check_distances(d: &[f64]) -> Result<(), ConfigError> {
    if d.is_empty() {
        return Err(ConfigError::field("distances_km", "distance list is empty"));
    }
    if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(ConfigError::field("distances_km", "distances must be positive"));
    }
    if d.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::field("distances_km", "distances must be strictly increasing"));
    }
    Ok(())
}

/// Validates the scenario template, naming the offending field.
pub fn check_scenario(sc: &ScenarioConfig) -> Result<(), ConfigError> {
    sc.validate().map_err(|e| {
        let message = e.to_string();
        let field = SCENARIO_KEYS
            .iter()
            .filter(|k| message.contains(*k))
            .max_by_key(|k| k.len())
            .map(|k| match *k {
                "eta" | "eta0_prime" | "eta_fc" | "eta_m" => format!("scenario.efficiencies.{k}"),
                k => format!("scenario.{k}"),
            });
        ConfigError::Invalid {
            line: None,
            field,
            message,
        }
    })
}
