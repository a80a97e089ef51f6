use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogEntry {
    pub epoch: u64,
    pub step: u64,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
    pub seconds: f64,
}

/// Append-only CSV log of per-epoch losses.
#[derive(Debug)]
pub struct TrainLog {
    path: PathBuf,
    pub entries: Vec<TrainLogEntry>,
}

pub fn read_log(path: &Path) -> Result<Vec<TrainLogEntry>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

impl TrainLog {
    /// Opens the log at `path`, keeping rows up to `completed_epochs` and
    /// discarding any later rows left by an interrupted run.
    pub fn open(path: &Path, completed_epochs: u64) -> Result<Self> {
        let mut entries = if path.exists() { read_log(path)? } else { Vec::new() };
        entries.retain(|e| e.epoch <= completed_epochs);
        let mut w = csv::Writer::from_path(path)?;
        if entries.is_empty() {
            w.write_record(["epoch", "step", "train_mse", "val_mse", "lr", "seconds"])?;
        }
        for e in &entries {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn append(&mut self, entry: TrainLogEntry) -> Result<()> {
        if let Some(prev) = self.entries.last() {
            if entry.epoch <= prev.epoch || entry.step <= prev.step {
                return Err(Error::Data(format!(
                    "log entries must increase: epoch {} step {} after epoch {} step {}",
                    entry.epoch, entry.step, prev.epoch, prev.step
                )));
            }
        }
        let file = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        w.serialize(&entry)?;
        w.flush().map_err(|e| Error::io(&self.path, e))?;
        self.entries.push(entry);
        Ok(())
    }
}
