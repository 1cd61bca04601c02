use crate::calibration::Method;
use crate::error::{Error, Result};
use crate::simulation::{PModel, ScenarioConfig, YModel, DEFAULT_SEED};
use serde::Deserialize;
use std::path::Path;

/// Entry shared by `[[scenario]]` and `[[comparison]]` tables. Give either a
/// common shift `b`, the `mixed` pattern, or explicit means `m`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    table: Option<String>,
    n1: usize,
    #[serde(default)]
    n0: Option<usize>,
    p: Option<usize>,
    #[serde(default)]
    b: Option<f64>,
    #[serde(default)]
    mixed: bool,
    #[serde(default)]
    m: Option<Vec<f64>>,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    sigma_eps: Option<f64>,
    #[serde(default = "linear")]
    y_model: YModel,
    #[serde(default = "normal")]
    p_model: PModel,
    #[serde(default)]
    n_runs: Option<usize>,
    #[serde(default)]
    bootstrap_replicates: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    // comparison only
    #[serde(default)]
    methods: Option<Vec<String>>,
    #[serde(default)]
    d: Option<f64>,
}

fn linear() -> YModel {
    YModel::Linear
}

fn normal() -> PModel {
    PModel::Normal
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    scenario: Vec<RawScenario>,
    #[serde(default)]
    comparison: Vec<RawScenario>,
}

/// A three-way method comparison on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSpec {
    pub table: String,
    pub config: ScenarioConfig,
    pub methods: Vec<Method>,
    /// Stable-weight tolerance, broadcast to every covariate.
    pub d: f64,
}

/// Parsed scenario file; scenarios keep their table label for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenarios: Vec<(String, ScenarioConfig)>,
    pub comparisons: Vec<ComparisonSpec>,
}

/// Table label, config, and the comparison-only `methods` and `d`.
type ParsedEntry = (String, ScenarioConfig, Option<Vec<String>>, Option<f64>);

impl RawScenario {
    fn into_config(self, seed: u64, comparison: bool) -> Result<ParsedEntry> {
        let m = match (self.m, self.b, self.p) {
            (Some(m), None, p) if p.is_none_or(|p| p == m.len()) => m,
            (None, Some(_), Some(_)) if self.mixed => {
                return Err(Error::parse(None, format!("scenario n1={}: 'mixed' fixes the means; drop 'b'", self.n1)));
            }
            (None, Some(b), Some(p)) => vec![b; p],
            (None, None, Some(p)) if self.mixed => {
                ScenarioConfig::mixed(self.n1, p, self.y_model, self.p_model).m
            }
            _ => {
                return Err(Error::parse(
                    None,
                    format!("scenario n1={}: give 'm', or 'p' with 'b' or 'mixed = true'", self.n1),
                ))
            }
        };
        let defaults = ScenarioConfig::shifted(self.n1, 0.0, m.len(), self.y_model, self.p_model);
        let n_runs = self.n_runs.unwrap_or(if comparison { 1000 } else { defaults.n_runs });
        if n_runs == 0 {
            return Err(Error::parse(None, format!("scenario n1={}: n_runs must be at least 1", self.n1)));
        }
        let label = if self.mixed {
            format!("n1={},mixed,p={}", self.n1, m.len())
        } else {
            format!("n1={},b={},p={}", self.n1, m[0], m.len())
        };
        let config = ScenarioConfig {
            name: self
                .name
                .unwrap_or_else(|| format!("{label},{},{}", self.y_model.label(), self.p_model.label())),
            n1: self.n1,
            n0: self.n0.unwrap_or(defaults.n0),
            m,
            beta: self.beta.unwrap_or(defaults.beta),
            sigma_eps: self.sigma_eps.unwrap_or(defaults.sigma_eps),
            y_model: self.y_model,
            p_model: self.p_model,
            n_runs,
            bootstrap_replicates: self
                .bootstrap_replicates
                .unwrap_or(if comparison { 0 } else { defaults.bootstrap_replicates }),
            seed: self.seed.unwrap_or(seed),
        };
        config
            .validate()
            .map_err(|e| Error::parse(None, format!("scenario '{}': {e}", config.name)))?;
        let table = self
            .table
            .unwrap_or_else(|| if comparison { "comparison" } else { "table" }.to_string());
        Ok((table, config, self.methods, self.d))
    }
}

impl ScenarioFile {
    /// Parse TOML, or JSON when `json` is set. `seed` overrides the file-level
    /// seed; a scenario's own seed overrides both.
    pub fn parse(text: &str, json: bool, seed: Option<u64>) -> Result<Self> {
        let raw: RawFile = if json {
            serde_json::from_str(text).map_err(|e| Error::parse(Some(e.line()), e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| {
                let line = e.span().map(|s| text[..s.start].lines().count().max(1));
                Error::parse(line, e.message().to_string())
            })?
        };
        let seed = seed.or(raw.seed).unwrap_or(DEFAULT_SEED);
        if raw.scenario.is_empty() && raw.comparison.is_empty() {
            return Err(Error::parse(None, "scenario file defines no [[scenario]] or [[comparison]]"));
        }

        let mut scenarios = Vec::new();
        for s in raw.scenario {
            if s.methods.is_some() || s.d.is_some() {
                return Err(Error::parse(None, "'methods' and 'd' belong to [[comparison]] entries"));
            }
            let (table, config, _, _) = s.into_config(seed, false)?;
            scenarios.push((table, config));
        }
        let mut comparisons = Vec::new();
        for s in raw.comparison {
            let (table, config, methods, d) = s.into_config(seed, true)?;
            let methods = match methods {
                Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Method>>>()?,
                None => Method::ALL.to_vec(),
            };
            let d = d.unwrap_or(0.005);
            if !(d >= 0.0) {
                return Err(Error::parse(None, "comparison tolerance d must be nonnegative"));
            }
            comparisons.push(ComparisonSpec {
                table,
                config,
                methods,
                d,
            });
        }
        Ok(ScenarioFile {
            scenarios,
            comparisons,
        })
    }
}

/// Read a scenario file; `.json` files are JSON, anything else TOML.
pub fn read_scenario_file(path: &Path, seed: Option<u64>) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path)?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    ScenarioFile::parse(&text, json, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_grammar() {
        let text = r#"
seed = 7

[[scenario]]
table = "table1"
n1 = 500
b = 0.5
p = 3

[[scenario]]
table = "table2"
n1 = 200
p = 5
mixed = true
y_model = "threshold"
seed = 11

[[comparison]]
n1 = 200
b = 0.5
p = 7
y_model = "threshold"
methods = ["maic", "sbw", "el"]
"#;
        let file = ScenarioFile::parse(text, false, None).unwrap();
        assert_eq!(file.scenarios.len(), 2);
        let (t1, c1) = &file.scenarios[0];
        assert_eq!(t1, "table1");
        assert_eq!(c1.m, vec![0.5; 3]);
        assert_eq!(c1.seed, 7);
        assert_eq!(c1.n_runs, 2000);
        let (_, c2) = &file.scenarios[1];
        assert_eq!(c2.m, vec![0.5, 0.5, 0.25, 0.25, 0.25]);
        assert_eq!(c2.seed, 11);
        assert_eq!(c2.sigma_eps, 0.0);
        let cmp = &file.comparisons[0];
        assert_eq!(cmp.methods, Method::ALL.to_vec());
        assert_eq!(cmp.config.n_runs, 1000);
        assert_eq!(cmp.d, 0.005);

        let overridden = ScenarioFile::parse(text, false, Some(99)).unwrap();
        assert_eq!(overridden.scenarios[0].1.seed, 99);
        assert_eq!(overridden.scenarios[1].1.seed, 11);
    }

    #[test]
    fn json_grammar() {
        let text = r#"{"scenario": [{"n1": 100, "m": [0.1, 0.2], "n_runs": 3, "bootstrap_replicates": 0}]}"#;
        let file = ScenarioFile::parse(text, true, None).unwrap();
        assert_eq!(file.scenarios[0].1.m, vec![0.1, 0.2]);
        assert_eq!(file.scenarios[0].1.seed, DEFAULT_SEED);
    }

    #[test]
    fn rejected_inputs() {
        let zero = "[[scenario]]\nn1 = 100\nb = 0.5\np = 3\nn_runs = 0\n";
        assert_eq!(ScenarioFile::parse(zero, false, None).unwrap_err().exit_code(), 3);
        let bad_enum = "[[scenario]]\nn1 = 100\nb = 0.5\np = 3\ny_model = \"quadratic\"\n";
        let err = ScenarioFile::parse(bad_enum, false, None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(5), .. }), "{err:?}");
        let no_means = "[[scenario]]\nn1 = 100\np = 3\n";
        assert!(ScenarioFile::parse(no_means, false, None).is_err());
        let bad_method = "[[comparison]]\nn1 = 100\nb = 0.5\np = 3\nmethods = [\"ipw\"]\n";
        assert_eq!(ScenarioFile::parse(bad_method, false, None).unwrap_err().exit_code(), 3);
        assert!(ScenarioFile::parse("", false, None).is_err());
    }
}
