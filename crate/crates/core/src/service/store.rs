//! Append-only session files: `<id>.jsonl` event logs and `<id>.json`
//! archives.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{FeasibilityConstraints, Mode, SessionRecord, StimulusParams, TrialOutcome};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum StoreEvent {
    Created {
        session_id: String,
        mode: Mode,
        seed: u64,
        constraints: FeasibilityConstraints,
        phantoms: Vec<TrialOutcome>,
        created_at: String,
        #[serde(default)]
        client_token: Option<String>,
    },
    Outcome {
        outcome: TrialOutcome,
        #[serde(default)]
        next: Option<StimulusParams>,
    },
    Closed,
}

#[derive(Clone, Debug)]
pub struct SessionStore {
    dir: PathBuf,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Storage(format!("{}: {e}", path.display()))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Error::InvalidInput(format!("invalid session id {id:?}")));
    }
    Ok(())
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    pub fn archive_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Appends one event and syncs it to disk before returning.
    pub fn append(&self, id: &str, event: &StoreEvent) -> Result<()> {
        check_id(id)?;
        let path = self.log_path(id);
        let mut line = serde_json::to_string(event).map_err(|e| io_err(&path, e))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| io_err(&path, e))?;
        f.sync_data().map_err(|e| io_err(&path, e))
    }

    pub fn read_events(&self, id: &str) -> Result<Vec<StoreEvent>> {
        check_id(id)?;
        let path = self.log_path(id);
        let f = File::open(&path).map_err(|_| Error::NotFound(format!("no log for session {id}")))?;
        let mut out = Vec::new();
        for (n, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| io_err(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            // a torn final line from a crash is dropped
            match serde_json::from_str(&line) {
                Ok(ev) => out.push(ev),
                Err(e) => {
                    tracing::warn!(session = id, line = n + 1, "skipping unreadable event: {e}");
                }
            }
        }
        Ok(out)
    }

    /// Writes the archive through a temporary file and a rename.
    pub fn write_archive(&self, record: &SessionRecord) -> Result<PathBuf> {
        check_id(&record.session_id)?;
        let path = self.archive_path(&record.session_id);
        let tmp = path.with_extension("json.tmp");
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| io_err(&path, e))?;
        let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    pub fn read_archive(&self, id: &str) -> Result<SessionRecord> {
        check_id(id)?;
        read_record(&self.archive_path(id))
    }

    /// Session ids that have an event log.
    pub fn session_ids(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(|e| io_err(&self.dir, e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".jsonl").map(str::to_owned)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

pub fn read_record(path: &Path) -> Result<SessionRecord> {
    let bytes = fs::read(path).map_err(|_| Error::NotFound(format!("no archive at {}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}
