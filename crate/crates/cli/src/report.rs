//! Run configuration and the report value every subcommand produces.
//!
//! A report has a deterministic body (operation name, digests, verdicts,
//! findings) and a runtime field outside the body: identical
//! configuration and inputs yield byte-identical JSON bodies, while the
//! runtime may vary run to run. The human text rendering is derived from
//! the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Output rendering for reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Text,
}

/// The resolved run configuration: command-line flags override the
/// config file, which overrides the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    /// Cumulative stage bounding outer-model and witness searches.
    pub stage_budget: u32,
    /// Rank cap for forcing-name spaces.
    pub rank_cap: u32,
    /// Depth cap for proof search.
    pub proof_depth: u32,
    /// Level cap for constructible towers.
    pub level_cap: u32,
    /// Default sentence-pool file for pool-driven subcommands.
    pub pool: Option<String>,
    /// Report rendering.
    pub format: OutputFormat,
    /// Seed for generated corpora; equal seeds give identical corpora.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            stage_budget: 4,
            rank_cap: 1,
            proof_depth: 4,
            level_cap: 6,
            pool: None,
            format: OutputFormat::Text,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Caps must be positive; the stage budget must leave room for the
    /// least closed model.
    pub fn validate(&self) -> Result<(), String> {
        if self.stage_budget < 3 {
            return Err(format!(
                "stage budget {} is too small (the least model needs stage 3)",
                self.stage_budget
            ));
        }
        if self.proof_depth == 0 {
            return Err("proof depth cap must be positive".into());
        }
        if self.level_cap == 0 {
            return Err("level cap must be positive".into());
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Optional config-file shape; any subset of fields may appear.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub stage_budget: Option<u32>,
    pub rank_cap: Option<u32>,
    pub proof_depth: Option<u32>,
    pub level_cap: Option<u32>,
    pub pool: Option<String>,
    pub format: Option<OutputFormat>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn apply(self, config: &mut RunConfig) {
        if let Some(v) = self.stage_budget {
            config.stage_budget = v;
        }
        if let Some(v) = self.rank_cap {
            config.rank_cap = v;
        }
        if let Some(v) = self.proof_depth {
            config.proof_depth = v;
        }
        if let Some(v) = self.level_cap {
            config.level_cap = v;
        }
        if let Some(v) = self.pool {
            config.pool = Some(v);
        }
        if let Some(v) = self.format {
            config.format = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
    }
}

/// One itemized observation inside a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub label: String,
    pub detail: String,
}

/// The digest-relevant part of a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportBody {
    pub operation: String,
    pub artifact_version: String,
    pub config_digest: String,
    pub inputs_digest: String,
    pub verdicts: BTreeMap<String, String>,
    pub findings: Vec<Finding>,
}

/// A full report: deterministic body plus wall-clock runtime.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub body: ReportBody,
    pub runtime_ms: u128,
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            OutputFormat::Text => self.render_text(),
        }
    }

    /// The canonical bytes of the body alone.
    pub fn body_json(&self) -> String {
        serde_json::to_string(&self.body).expect("report body serializes")
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        let b = &self.body;
        let _ = writeln!(out, "operation: {}", b.operation);
        let _ = writeln!(out, "version:   {}", b.artifact_version);
        let _ = writeln!(out, "config:    sha256:{}", b.config_digest);
        let _ = writeln!(out, "inputs:    sha256:{}", b.inputs_digest);
        for (k, v) in &b.verdicts {
            let _ = writeln!(out, "  {k}: {v}");
        }
        for f in &b.findings {
            if f.detail.contains('\n') {
                let _ = writeln!(out, "  - {}:", f.label);
                for line in f.detail.lines() {
                    let _ = writeln!(out, "      {line}");
                }
            } else {
                let _ = writeln!(out, "  - {}: {}", f.label, f.detail);
            }
        }
        let _ = writeln!(out, "runtime:   {} ms", self.runtime_ms);
        out
    }
}

/// Records the inputs of one operation as they are loaded, in order, and
/// digests them together with the operation name.
pub struct InputRecorder {
    operation: String,
    entries: Vec<(String, Vec<u8>)>,
}

impl InputRecorder {
    pub fn new(operation: impl Into<String>) -> InputRecorder {
        InputRecorder {
            operation: operation.into(),
            entries: Vec::new(),
        }
    }

    pub fn operation(&self) -> &str {
        &self.operation
    }

    /// Records an inline argument.
    pub fn arg(&mut self, name: &str, value: impl AsRef<[u8]>) {
        self.entries
            .push((name.to_string(), value.as_ref().to_vec()));
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.operation.as_bytes());
        for (name, bytes) in &self.entries {
            hasher.update([0u8]);
            hasher.update(name.as_bytes());
            hasher.update([1u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        }
        hex(&hasher.finalize())
    }

    /// Assembles the deterministic report body.
    pub fn body(
        &self,
        config: &RunConfig,
        verdicts: BTreeMap<String, String>,
        findings: Vec<Finding>,
    ) -> ReportBody {
        ReportBody {
            operation: self.operation.clone(),
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: config.digest(),
            inputs_digest: self.digest(),
            verdicts,
            findings,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_digest_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn input_digests_distinguish_name_and_content_boundaries() {
        let mut a = InputRecorder::new("op");
        a.arg("x", "ab");
        a.arg("y", "c");
        let mut b = InputRecorder::new("op");
        b.arg("x", "a");
        b.arg("y", "bc");
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn body_json_excludes_runtime() {
        let rec = InputRecorder::new("op");
        let body = rec.body(&RunConfig::default(), BTreeMap::new(), Vec::new());
        let fast = Report {
            body: body.clone(),
            runtime_ms: 1,
        };
        let slow = Report {
            body,
            runtime_ms: 99,
        };
        assert_eq!(fast.body_json(), slow.body_json());
        assert_ne!(
            fast.render(OutputFormat::Json),
            slow.render(OutputFormat::Json)
        );
    }

    #[test]
    fn validation_names_the_offending_cap() {
        let mut c = RunConfig {
            stage_budget: 2,
            ..RunConfig::default()
        };
        assert!(c.validate().unwrap_err().contains("stage budget"));
        c.stage_budget = 4;
        c.level_cap = 0;
        assert!(c.validate().unwrap_err().contains("level cap"));
    }
}
