use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::SequenceSpec;
use crate::error::{Error, Result};

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub iter: u64,
    pub loss: BTreeMap<&'static str, f64>,
    #[serde(rename = "N")]
    pub n: usize,
    /// Continuous diffusion time of the primary model.
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<u32>,
}

/// Receives progress from an optimization loop.
pub trait Observer {
    fn iteration(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    fn checkpoint(&mut self, _iteration: u64, _spec: &SequenceSpec) -> Result<()> {
        Ok(())
    }
}

/// Ignores everything.
#[derive(Clone, Copy, Debug, Default)]
pub struct Silent;

impl Observer for Silent {}

impl Observer for Vec<MetricsRecord> {
    fn iteration(&mut self, record: &MetricsRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Appends JSON lines to a metrics file and writes periodic checkpoints to a directory.
#[derive(Debug)]
pub struct RunRecorder {
    metrics: std::io::BufWriter<std::fs::File>,
    checkpoints: PathBuf,
    prefix: String,
}

impl RunRecorder {
    pub fn new(dir: &Path, prefix: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join(format!("{prefix}_metrics.jsonl")))?;
        Ok(Self {
            metrics: std::io::BufWriter::new(file),
            checkpoints: dir.to_path_buf(),
            prefix: prefix.to_string(),
        })
    }
}

impl Observer for RunRecorder {
    fn iteration(&mut self, record: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(self.metrics, "{line}")?;
        Ok(())
    }

    fn checkpoint(&mut self, iteration: u64, spec: &SequenceSpec) -> Result<()> {
        self.metrics.flush()?;
        spec.save(&self.checkpoints.join(format!("{}_{iteration:06}.ckpt", self.prefix)))
    }
}

impl Drop for RunRecorder {
    fn drop(&mut self) {
        let _ = self.metrics.flush();
    }
}
