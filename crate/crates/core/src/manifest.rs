//! Run manifest: what ran, on which inputs, what it warned about and how long it took.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{sha256_file, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Input file name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub timings_ms: Vec<StageTiming>,
    pub error: Option<RunError>,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            timings_ms: Vec::new(),
            error: None,
        }
    }

    /// Records the checksum of an input file.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sum = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.outputs.push(name);
    }

    /// Adds a warning unless the identical message is already recorded.
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    pub fn warn_all<I: IntoIterator<Item = S>, S: Into<String>>(&mut self, msgs: I) {
        for m in msgs {
            self.warn(m);
        }
    }

    /// Runs `f` and records its wall time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.timings_ms.push(StageTiming {
            stage: stage.to_string(),
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out
    }

    pub fn fail(&mut self, err: &Error) {
        self.error = Some(RunError {
            kind: error_kind(err),
            message: err.to_string(),
            exit_code: err.exit_code(),
        });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

fn error_kind(err: &Error) -> String {
    let dbg = format!("{err:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warnings_are_recorded_once() {
        let mut m = RunManifest::new("extract", &serde_json::json!({"k": 2}));
        m.warn("a");
        m.warn_all(["b", "a", "c"]);
        assert_eq!(m.warnings, vec!["a", "b", "c"]);
    }

    #[test]
    fn failure_records_kind_and_exit_code() {
        let mut m = RunManifest::new("extract", &());
        m.fail(&Error::ZeroCorrelation);
        let e = m.error.unwrap();
        assert_eq!(e.kind, "ZeroCorrelation");
        assert_eq!(e.exit_code, 3);
        let mut m = RunManifest::new("extract", &());
        m.fail(&Error::MissingMetadata("x".into()));
        assert_eq!(m.error.unwrap().kind, "MissingMetadata");
    }

    #[test]
    fn timings_follow_stage_order() {
        let mut m = RunManifest::new("phantom", &());
        let v = m.time("first", |_| 3);
        m.time("second", |m| m.warn("inside"));
        assert_eq!(v, 3);
        let stages: Vec<_> = m.timings_ms.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["first", "second"]);
        assert!(m.timings_ms.iter().all(|t| t.ms >= 0.0));
    }
}
