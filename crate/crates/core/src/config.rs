//! Experiment configuration: JSON documents, dotted-path overrides, and the
//! built-in presets reproducing the benchmark tables.
//!
//! Every field is validated during deserialization, so `serde_json` reports
//! semantic problems with the line and column of the offending object.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{check_checkpoints, Divisor};
use crate::noise::{NoiseKind, PairingMode};
use crate::objective::Direction;
use crate::schedules::{DecreasingGain, FixedGain, Gain};
use crate::{Error, Result};

/// Which stochastic representation to optimize.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveSelector {
    /// `(θ − x)² + 1{x ≤ θ}`.
    #[default]
    Benchmark,
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RunConfigFields")]
pub struct RunConfig {
    pub id: String,
    pub objective: ObjectiveSelector,
    pub noise: NoiseKind,
    pub pairing: PairingMode,
    pub scheme: Gain,
    pub divisor: Divisor,
    pub direction: Direction,
    pub theta0: f64,
    pub n_paths: usize,
    pub n_steps: u64,
    pub checkpoints: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(u64, u64)>,
    pub master_seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFields {
    id: String,
    #[serde(default)]
    objective: ObjectiveSelector,
    noise: NoiseKind,
    pairing: PairingMode,
    scheme: Gain,
    #[serde(default)]
    divisor: Divisor,
    #[serde(default)]
    direction: Direction,
    theta0: f64,
    n_paths: usize,
    n_steps: u64,
    checkpoints: Vec<u64>,
    #[serde(default)]
    fit_window: Option<(u64, u64)>,
    master_seed: u64,
}

impl TryFrom<RunConfigFields> for RunConfig {
    type Error = Error;

    fn try_from(f: RunConfigFields) -> Result<Self> {
        let cfg = RunConfig {
            id: f.id,
            objective: f.objective,
            noise: f.noise,
            pairing: f.pairing,
            scheme: f.scheme,
            divisor: f.divisor,
            direction: f.direction,
            theta0: f.theta0,
            n_paths: f.n_paths,
            n_steps: f.n_steps,
            checkpoints: f.checkpoints,
            fit_window: f.fit_window,
            master_seed: f.master_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::Config(format!("experiment '{}': {msg}", self.id));
        if self.id.is_empty()
            || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
            || self.id.starts_with('.')
        {
            return Err(ctx("id must be non-empty and use only [A-Za-z0-9._-]".into()));
        }
        self.noise.validate().map_err(|e| ctx(e.to_string()))?;
        if self.pairing == PairingMode::Independent && !self.noise.is_iid() {
            return Err(ctx("independent pairing requires i.i.d. noise; use identical or consecutive".into()));
        }
        let report = self.scheme.validate();
        if !report.is_ok() {
            return Err(ctx(format!("scheme: {report}")));
        }
        if !self.theta0.is_finite() {
            return Err(ctx("theta0 must be finite".into()));
        }
        if self.n_paths == 0 {
            return Err(ctx("n_paths must be >= 1".into()));
        }
        if self.checkpoints.is_empty() {
            return Err(ctx("checkpoints must not be empty".into()));
        }
        check_checkpoints(&self.checkpoints, self.n_steps).map_err(|e| ctx(e.to_string()))?;
        if let Some((lo, hi)) = self.fit_window {
            if !self.checkpoints.contains(&lo) || !self.checkpoints.contains(&hi) {
                return Err(ctx(format!("fit_window [{lo}, {hi}] endpoints must be checkpoints")));
            }
            let inside = self.checkpoints.iter().filter(|&&k| k >= lo && k <= hi && k > 0).count();
            if inside < 3 {
                return Err(ctx(format!("fit_window [{lo}, {hi}] holds {inside} positive checkpoints; need 3")));
            }
        }
        Ok(())
    }

    /// Copy with fewer paths and steps; checkpoints beyond `n_steps` are
    /// dropped and the fit window is clipped to the last remaining one.
    pub fn scaled(&self, n_paths: usize, n_steps: u64) -> Self {
        let mut cfg = self.clone();
        cfg.n_paths = n_paths;
        cfg.n_steps = n_steps;
        cfg.checkpoints.retain(|&k| k <= n_steps);
        let last = cfg.checkpoints.last().copied().unwrap_or(0);
        cfg.fit_window = cfg.fit_window.map(|(lo, hi)| (lo.min(last), hi.min(last)));
        cfg
    }

    /// Compact JSON echo; parsing it back yields an identical configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RunConfig serializes")
    }
}

fn default_true() -> bool {
    true
}

/// A config document: output location, format flags, and experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Also emit log-log plot data and a gnuplot script per experiment.
    #[serde(default = "default_true")]
    pub plot: bool,
    pub experiments: Vec<RunConfig>,
}

/// A config problem with its position in the (effective) JSON text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
    /// The text was regenerated after applying `--set` overrides.
    pub after_overrides: bool,
}

impl fmt::Display for ConfigDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)?;
        if self.after_overrides {
            f.write_str(" (position refers to the config with --set overrides applied)")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigDiagnostic {}

fn diagnostic(e: serde_json::Error, after_overrides: bool) -> ConfigDiagnostic {
    // serde_json appends " at line L column C"; keep only the message
    let full = e.to_string();
    let message = match full.rfind(" at line ") {
        Some(i) => full[..i].to_string(),
        None => full,
    };
    ConfigDiagnostic { line: e.line(), column: e.column(), message, after_overrides }
}

impl ExperimentFile {
    pub fn single(cfg: RunConfig) -> Self {
        Self { output_dir: None, plot: true, experiments: vec![cfg] }
    }

    /// Parses a config document and applies `key=value` overrides. Keys
    /// `output_dir`, `plot` and `experiments.…` address the document; any
    /// other key is applied to every experiment (e.g. `scheme.gamma=0.2`).
    ///
    /// A document holding a single run config (such as the `config` column of
    /// a summary CSV) is accepted as a one-experiment file.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> std::result::Result<Self, ConfigDiagnostic> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| diagnostic(e, false))?;
        let single = doc.as_object().is_some_and(|m| !m.contains_key("experiments") && m.contains_key("id"));
        let file: ExperimentFile = if overrides.is_empty() {
            if single {
                ExperimentFile::single(serde_json::from_str(text).map_err(|e| diagnostic(e, false))?)
            } else {
                serde_json::from_str(text).map_err(|e| diagnostic(e, false))?
            }
        } else {
            if single {
                doc = serde_json::json!({ "experiments": [doc] });
            }
            for (k, v) in overrides {
                apply_override(&mut doc, k, v).map_err(|message| ConfigDiagnostic {
                    line: 0,
                    column: 0,
                    message,
                    after_overrides: true,
                })?;
            }
            let effective = serde_json::to_string_pretty(&doc).expect("JSON value serializes");
            serde_json::from_str(&effective).map_err(|e| diagnostic(e, true))?
        };
        file.check_ids().map_err(|message| ConfigDiagnostic { line: 0, column: 0, message, after_overrides: false })?;
        Ok(file)
    }

    fn check_ids(&self) -> std::result::Result<(), String> {
        if self.experiments.is_empty() {
            return Err("config lists no experiments".into());
        }
        let mut seen = std::collections::HashSet::new();
        for e in &self.experiments {
            if !seen.insert(e.id.as_str()) {
                return Err(format!("duplicate experiment id '{}'", e.id));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("ExperimentFile serializes")
    }
}

/// Parses `key=value`; the value is JSON when it parses as JSON, else a string.
pub fn parse_override(arg: &str) -> std::result::Result<(String, String), String> {
    match arg.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(format!("override '{arg}' is not of the form key=value")),
    }
}

fn override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies one dotted-path override to a config document.
pub fn apply_override(doc: &mut Value, key: &str, raw: &str) -> std::result::Result<(), String> {
    let value = override_value(raw);
    let first = key.split('.').next().unwrap_or("");
    if matches!(first, "output_dir" | "plot" | "experiments") {
        return set_path(doc, key, value);
    }
    let experiments = doc
        .get_mut("experiments")
        .and_then(Value::as_array_mut)
        .ok_or_else(|| "config has no 'experiments' array to override".to_string())?;
    for e in experiments {
        set_path(e, key, value.clone())?;
    }
    Ok(())
}

fn set_path(root: &mut Value, key: &str, value: Value) -> std::result::Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| format!("'{part}' in '{key}' is not an array index"))?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| format!("index {idx} out of range ({len}) in '{key}'"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("cannot descend into '{part}' of '{key}'")),
        };
    }
    Err(format!("empty override key '{key}'"))
}

/// Powers of two `2^lo ..= 2^hi`.
pub fn pow2_checkpoints(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|j| 1u64 << j).collect()
}

const PRESET_SEED: u64 = 20_240_519;

/// Built-in experiments.
///
/// The eight rate-table cells run at full scale: 10⁴ paths, 2²⁰ steps,
/// checkpoints 2⁸..2²⁰, fit on [2¹³, 2²⁰], `λ₀ = c₀ = 1`, `γ = 1/5`,
/// `k₀ = 10⁴`, and the `/c` difference quotient. The last two are the
/// fixed-gain runs behind the plateau comparison (`c = a^(1/5)`, `/2c`).
pub fn presets() -> Vec<RunConfig> {
    let scheme = Gain::Decreasing(DecreasingGain { lambda0: 1.0, c0: 1.0, gamma: 0.2, k0: 10_000 });
    let cell = |id: &str, noise: NoiseKind, pairing: PairingMode, theta0: f64| RunConfig {
        id: id.to_string(),
        objective: ObjectiveSelector::Benchmark,
        noise,
        pairing,
        scheme,
        divisor: Divisor::C,
        direction: Direction::Minimize,
        theta0,
        n_paths: 10_000,
        n_steps: 1 << 20,
        checkpoints: pow2_checkpoints(8, 20),
        fit_window: Some((1 << 13, 1 << 20)),
        master_seed: PRESET_SEED,
    };
    let fixed = |id: &str, a: f64| RunConfig {
        id: id.to_string(),
        objective: ObjectiveSelector::Benchmark,
        noise: NoiseKind::standard_normal(),
        pairing: PairingMode::Identical,
        scheme: Gain::Fixed(FixedGain::coupled(a).expect("positive gain")),
        divisor: Divisor::TwoC,
        direction: Direction::Minimize,
        theta0: -0.1,
        n_paths: 500,
        n_steps: 1 << 15,
        checkpoints: pow2_checkpoints(0, 15),
        fit_window: None,
        master_seed: PRESET_SEED,
    };
    let normal = NoiseKind::standard_normal();
    let ar1 = NoiseKind::Ar1 { kappa: 0.75, innovation_sd: 1.0 };
    use PairingMode::*;
    vec![
        cell("table1-normal-independent", normal, Independent, -0.1),
        cell("table1-normal-crn", normal, Identical, -0.1),
        cell("table1-uniform-independent", NoiseKind::Uniform01, Independent, 1.0),
        cell("table1-uniform-crn", NoiseKind::Uniform01, Identical, 1.0),
        cell("table1-beta-independent", NoiseKind::Beta22, Independent, 1.0),
        cell("table1-beta-crn", NoiseKind::Beta22, Identical, 1.0),
        cell("table2-ar1-consecutive", ar1, Consecutive, 0.0),
        cell("table2-ar1-crn", ar1, Identical, 0.0),
        fixed("fixed-gain-normal-crn-a1e-2", 1e-2),
        fixed("fixed-gain-normal-crn-a1e-3", 1e-3),
    ]
}

pub fn preset(id: &str) -> Option<RunConfig> {
    presets().into_iter().find(|p| p.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_doc() -> String {
        serde_json::json!({
            "output_dir": "out",
            "experiments": [{
                "id": "demo",
                "noise": {"model": "normal", "mean": 0.0, "sd": 1.0},
                "pairing": "identical",
                "scheme": {"kind": "decreasing", "lambda0": 1.0, "c0": 1.0, "gamma": 0.2, "k0": 100},
                "theta0": -0.1,
                "n_paths": 8,
                "n_steps": 1024,
                "checkpoints": [256, 512, 1024],
                "fit_window": [256, 1024],
                "master_seed": 7
            }]
        })
        .to_string()
    }

    #[test]
    fn preset_listing() {
        let p = presets();
        assert_eq!(p.len(), 10);
        assert!(preset("table1-uniform-independent").is_some());
        assert!(preset("table1-normal-crn").is_some());
        assert!(preset("table2-ar1-consecutive").is_some());
    }

    #[test]
    fn presets_round_trip_through_parser() {
        for p in presets() {
            let back: RunConfig = serde_json::from_str(&p.to_json()).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn defaults_fill_in() {
        let f = ExperimentFile::parse(&sample_doc(), &[]).unwrap();
        let e = &f.experiments[0];
        assert_eq!(e.divisor, Divisor::TwoC);
        assert_eq!(e.direction, Direction::Minimize);
        assert!(f.plot);
    }

    #[test]
    fn missing_seed_is_an_error() {
        let doc = sample_doc().replace(",\"master_seed\":7", "");
        assert!(!doc.contains("master_seed"));
        let err = ExperimentFile::parse(&doc, &[]).unwrap_err();
        assert!(err.message.contains("master_seed"), "{err}");
    }

    #[test]
    fn semantic_errors_carry_line_numbers() {
        let mut v: Value = serde_json::from_str(&sample_doc()).unwrap();
        v["experiments"][0]["scheme"]["gamma"] = Value::from(0.4);
        let text = serde_json::to_string_pretty(&v).unwrap();
        let err = ExperimentFile::parse(&text, &[]).unwrap_err();
        assert!(err.line > 1, "{err}");
        assert!(err.message.contains("gamma outside (0,1/3)"), "{err}");
    }

    #[test]
    fn cross_field_checks() {
        let mut v: Value = serde_json::from_str(&sample_doc()).unwrap();
        v["experiments"][0]["fit_window"] = serde_json::json!([300, 1024]);
        assert!(ExperimentFile::parse(&v.to_string(), &[]).is_err());

        let mut v: Value = serde_json::from_str(&sample_doc()).unwrap();
        v["experiments"][0]["checkpoints"] = serde_json::json!([256, 2048]);
        assert!(ExperimentFile::parse(&v.to_string(), &[]).is_err());

        let mut v: Value = serde_json::from_str(&sample_doc()).unwrap();
        v["experiments"][0]["noise"] = serde_json::json!({"model": "ar1", "kappa": 0.5, "innovation_sd": 1.0});
        v["experiments"][0]["pairing"] = Value::from("independent");
        let err = ExperimentFile::parse(&v.to_string(), &[]).unwrap_err();
        assert!(err.message.contains("independent"), "{err}");

        let mut v: Value = serde_json::from_str(&sample_doc()).unwrap();
        v["experiments"][0]["bogus"] = Value::from(1);
        assert!(ExperimentFile::parse(&v.to_string(), &[]).is_err());
    }

    #[test]
    fn overrides_apply_to_every_experiment() {
        let ov = vec![
            parse_override("scheme.gamma=0.25").unwrap(),
            parse_override("n_paths=3").unwrap(),
            parse_override("output_dir=elsewhere").unwrap(),
        ];
        let f = ExperimentFile::parse(&sample_doc(), &ov).unwrap();
        let e = &f.experiments[0];
        assert_eq!(e.n_paths, 3);
        assert_eq!(f.output_dir.as_deref(), Some("elsewhere"));
        match e.scheme {
            Gain::Decreasing(g) => assert_eq!(g.gamma, 0.25),
            _ => panic!(),
        }
        let f = ExperimentFile::parse(&sample_doc(), &[parse_override("experiments.0.theta0=0.5").unwrap()]).unwrap();
        assert_eq!(f.experiments[0].theta0, 0.5);

        let err = ExperimentFile::parse(&sample_doc(), &[parse_override("scheme.gamma=0.5").unwrap()]).unwrap_err();
        assert!(err.after_overrides);
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn scaled_clips_checkpoints_and_window() {
        let p = preset("table1-normal-crn").unwrap().scaled(100, 1 << 16);
        assert_eq!(*p.checkpoints.last().unwrap(), 1 << 16);
        assert_eq!(p.fit_window, Some((1 << 13, 1 << 16)));
        p.validate().unwrap();
    }

    #[test]
    fn single_config_document_is_accepted() {
        let cfg = preset("table1-normal-crn").unwrap().scaled(4, 1 << 15);
        let file = ExperimentFile::parse(&cfg.to_json(), &[]).unwrap();
        assert_eq!(file.experiments, vec![cfg.clone()]);
        let file = ExperimentFile::parse(&cfg.to_json(), &[("n_paths".into(), "9".into())]).unwrap();
        assert_eq!(file.experiments[0].n_paths, 9);
    }
}
