//! Scenario files: one JSON object naming a workload, machine and policies.

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tiersim_core::workload::TraceError;
use tiersim_core::{generate, read_trace, AccessEvent, Policy, PolicyConfig, SimParams, TraceSpec};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Policy for `run`.
    #[serde(default)]
    pub policy: Option<Policy>,
    /// Policies for `sweep`; all four when empty and `policy` is unset.
    #[serde(default)]
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub policy_config: PolicyConfig,
    /// Synthetic workload. Exactly one of `trace` and `trace_path` is set.
    #[serde(default)]
    pub trace: Option<TraceSpec>,
    /// Binary trace file, relative paths resolved against the scenario file.
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub memory: SimParams,
    /// Seeds both the profiler and the trace generator when set.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(skip)]
    base_dir: PathBuf,
}

/// A scenario with overrides applied and its trace loaded.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub cfg: PolicyConfig,
    pub params: SimParams,
    pub events: Vec<AccessEvent>,
    pub seed: u64,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut sc: Scenario = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        sc.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("scenario name {:?} must be non-empty and use only [A-Za-z0-9._-]", self.name));
        }
        match (&self.trace, &self.trace_path) {
            (Some(_), Some(_)) => return bad("set only one of `trace` and `trace_path`".into()),
            (None, None) => return bad("one of `trace` or `trace_path` is required".into()),
            (Some(spec), None) => spec.validate().map_err(|e| CliError::Config(e.to_string()))?,
            (None, Some(_)) => {}
        }
        self.policy_config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let m = &self.memory;
        if m.fast_frames == 0 || m.slow_frames == 0 {
            return bad("memory.fast_frames and memory.slow_frames must be positive".into());
        }
        if !(m.contention_pct >= 0.0 && m.contention_pct.is_finite()) {
            return bad(format!("contention_pct {} must be a non-negative percentage", m.contention_pct));
        }
        if m.fast_peak_bytes == 0 || m.slow_peak_bytes == 0 {
            return bad("peak bandwidths must be positive".into());
        }
        Ok(())
    }

    pub fn resolved_trace_path(&self) -> Option<PathBuf> {
        self.trace_path.as_ref().map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
    }

    /// Policy for a single run: the explicit one, else the first listed,
    /// else TierBpf.
    pub fn run_policy(&self) -> Policy {
        self.policy.or_else(|| self.policies.first().copied()).unwrap_or(Policy::TierBpf)
    }

    pub fn sweep_policies(&self) -> Vec<Policy> {
        if !self.policies.is_empty() {
            self.policies.clone()
        } else if let Some(p) = self.policy {
            vec![p]
        } else {
            Policy::ALL.to_vec()
        }
    }

    pub fn prepare(&self, seed: Option<u64>, contention: Option<f64>) -> Result<Prepared, CliError> {
        let mut cfg = self.policy_config.clone();
        let mut params = self.memory.clone();
        let seed = seed.or(self.seed);
        if let Some(s) = seed {
            cfg.rng_seed = s;
        }
        if let Some(c) = contention {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(CliError::Config(format!("contention {c} must be a non-negative percentage")));
            }
            params.contention_pct = c;
        }
        let events = match (&self.trace, self.resolved_trace_path()) {
            (Some(spec), _) => {
                let mut spec = spec.clone();
                if let Some(s) = seed {
                    spec.seed = s;
                }
                generate(&spec).map_err(|e| CliError::Config(e.to_string()))?
            }
            (None, Some(path)) => load_trace(&path)?,
            (None, None) => unreachable!("validated"),
        };
        Ok(Prepared { name: self.name.clone(), seed: cfg.rng_seed, cfg, params, events })
    }
}

pub fn load_trace(path: &Path) -> Result<Vec<AccessEvent>, CliError> {
    read_trace(path).map_err(|e| match e {
        TraceError::Io(io) if io.kind() == ErrorKind::NotFound => {
            CliError::Config(format!("trace file not found: {}", path.display()))
        }
        other => CliError::Config(format!("cannot read trace {}: {other}", path.display())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{"name":"t","trace":{"kind":"uniform","n_events":10,"region_bytes":2097152}}"#;

    #[test]
    fn minimal_scenario_defaults() {
        let sc = Scenario::from_json(MIN).unwrap();
        assert_eq!(sc.run_policy(), Policy::TierBpf);
        assert_eq!(sc.sweep_policies(), Policy::ALL.to_vec());
        let p = sc.prepare(Some(9), Some(50.0)).unwrap();
        assert_eq!((p.seed, p.params.contention_pct, p.events.len()), (9, 50.0, 10));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Scenario::from_json(r#"{"name":"t"}"#).is_err());
        assert!(Scenario::from_json(r#"{"name":"a b","trace_path":"x"}"#).is_err());
        assert!(Scenario::from_json(r#"{"name":"t","trace_path":"x","bogus":1}"#).is_err());
        let bad_cfg = r#"{"name":"t","trace_path":"x","policy_config":{"tau_h":0}}"#;
        assert!(Scenario::from_json(bad_cfg).is_err());
    }

    #[test]
    fn missing_trace_names_path() {
        let sc = Scenario::from_json(r#"{"name":"t","trace_path":"/nonexistent/w.trc"}"#).unwrap();
        let err = sc.prepare(None, None).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("/nonexistent/w.trc"));
    }
}
