//! Append-only job log plus a content-addressed blob directory.
//!
//! `jobs.log` holds one JSON event per line. Replaying the events rebuilds
//! every record; a torn final line from a crash is skipped. Blobs live in
//! `blobs/<sha256>` and are written through a temporary file and a rename.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tools::Tool;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("job {id} cannot go from {from:?} to {to:?}")]
    Transition { id: String, from: JobState, to: JobState },
    #[error("unknown job {0}")]
    UnknownJob(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub name: String,
    pub sha256: String,
    pub size: u64,
    pub media_type: String,
    /// Client-side file name of an upload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filename: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub tool: Tool,
    pub state: JobState,
    pub inputs: Vec<ArtifactRef>,
    /// Empty unless the job is done.
    pub results: Vec<ArtifactRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The alignment job a re-alignment started from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    /// Seconds since the Unix epoch.
    pub created: f64,
    pub updated: f64,
}

impl JobRecord {
    pub fn input(&self, name: &str) -> Option<&ArtifactRef> {
        self.inputs.iter().find(|a| a.name == name)
    }

    pub fn result(&self, name: &str) -> Option<&ArtifactRef> {
        self.results.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event {
    Submitted { job: JobRecord },
    Running { id: String, at: f64 },
    Done { id: String, at: f64, results: Vec<ArtifactRef> },
    Failed { id: String, at: f64, error: String },
}

pub fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Single writer; callers serialize access (the service keeps it behind a
/// mutex).
pub struct JobStore {
    root: PathBuf,
    log: File,
    jobs: HashMap<String, JobRecord>,
    order: Vec<String>,
}

impl JobStore {
    /// Opens or creates the store. Jobs left running by a previous process
    /// are marked failed. Returns the store and the ids still queued, in
    /// submission order.
    pub fn open(root: impl AsRef<Path>) -> Result<(JobStore, Vec<String>), StoreError> {
        let root = root.as_ref().to_path_buf();
        let blobs = root.join("blobs");
        fs::create_dir_all(&blobs).map_err(io_err(&blobs))?;
        let path = root.join("jobs.log");
        let mut jobs: HashMap<String, JobRecord> = HashMap::new();
        let mut order = Vec::new();
        if path.exists() {
            let f = File::open(&path).map_err(io_err(&path))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(io_err(&path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev: Event = match serde_json::from_str(&line) {
                    Ok(ev) => ev,
                    Err(e) => {
                        tracing::warn!("jobs.log line {}: skipped ({e})", i + 1);
                        continue;
                    }
                };
                match ev {
                    Event::Submitted { job } => {
                        order.push(job.id.clone());
                        jobs.insert(job.id.clone(), job);
                    }
                    Event::Running { id, at } => {
                        if let Some(j) = jobs.get_mut(&id) {
                            j.state = JobState::Running;
                            j.updated = at;
                        }
                    }
                    Event::Done { id, at, results } => {
                        if let Some(j) = jobs.get_mut(&id) {
                            j.state = JobState::Done;
                            j.updated = at;
                            j.results = results;
                        }
                    }
                    Event::Failed { id, at, error } => {
                        if let Some(j) = jobs.get_mut(&id) {
                            j.state = JobState::Failed;
                            j.updated = at;
                            j.error = Some(error);
                        }
                    }
                }
            }
        }
        let mut log = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        // finish a torn line so the next event starts cleanly
        let len = log.metadata().map_err(io_err(&path))?.len();
        if len > 0 {
            let mut last = [0u8];
            let mut f = File::open(&path).map_err(io_err(&path))?;
            f.seek(SeekFrom::Start(len - 1)).map_err(io_err(&path))?;
            f.read_exact(&mut last).map_err(io_err(&path))?;
            if last[0] != b'\n' {
                log.write_all(b"\n").map_err(io_err(&path))?;
            }
        }
        let mut store = JobStore { root, log, jobs, order };
        let interrupted: Vec<String> = store.order.iter().filter(|id| store.jobs[*id].state == JobState::Running).cloned().collect();
        for id in interrupted {
            store.fail(&id, "interrupted by a service restart")?;
        }
        let queued = store.order.iter().filter(|id| store.jobs[*id].state == JobState::Queued).cloned().collect();
        Ok((store, queued))
    }

    fn append(&mut self, ev: &Event) -> Result<(), StoreError> {
        let path = self.root.join("jobs.log");
        let mut line = serde_json::to_string(ev).expect("events serialize");
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.log.sync_data().map_err(io_err(&path))
    }

    pub fn blob_path(&self, sha256: &str) -> PathBuf {
        self.root.join("blobs").join(sha256)
    }

    pub fn put_blob(&self, name: &str, media_type: &str, bytes: &[u8]) -> Result<ArtifactRef, StoreError> {
        let sha = sha256_hex(bytes);
        let path = self.blob_path(&sha);
        if !path.exists() {
            let dir = self.root.join("blobs");
            let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(&dir))?;
            tmp.write_all(bytes).map_err(io_err(&path))?;
            tmp.as_file().sync_data().map_err(io_err(&path))?;
            tmp.persist(&path).map_err(|e| io_err(&path)(e.error))?;
        }
        Ok(ArtifactRef {
            name: name.to_string(),
            sha256: sha,
            size: bytes.len() as u64,
            media_type: media_type.to_string(),
            filename: None,
        })
    }

    pub fn read_blob(&self, a: &ArtifactRef) -> Result<Vec<u8>, StoreError> {
        let path = self.blob_path(&a.sha256);
        fs::read(&path).map_err(io_err(&path))
    }

    pub fn get(&self, id: &str) -> Option<&JobRecord> {
        self.jobs.get(id)
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }

    pub fn submit(&mut self, tool: Tool, inputs: Vec<ArtifactRef>, parent: Option<String>) -> Result<JobRecord, StoreError> {
        let mut id;
        loop {
            id = format!("{:032x}", rand::thread_rng().gen::<u128>());
            if !self.jobs.contains_key(&id) {
                break;
            }
        }
        let t = now();
        let job = JobRecord {
            id: id.clone(),
            tool,
            state: JobState::Queued,
            inputs,
            results: Vec::new(),
            error: None,
            parent,
            created: t,
            updated: t,
        };
        self.append(&Event::Submitted { job: job.clone() })?;
        self.order.push(id.clone());
        self.jobs.insert(id, job.clone());
        Ok(job)
    }

    fn transition(&mut self, id: &str, from: &[JobState], to: JobState) -> Result<(), StoreError> {
        let j = self.jobs.get(id).ok_or_else(|| StoreError::UnknownJob(id.to_string()))?;
        if !from.contains(&j.state) {
            return Err(StoreError::Transition {
                id: id.to_string(),
                from: j.state,
                to,
            });
        }
        Ok(())
    }

    pub fn start(&mut self, id: &str) -> Result<JobRecord, StoreError> {
        self.transition(id, &[JobState::Queued], JobState::Running)?;
        let at = now();
        self.append(&Event::Running { id: id.to_string(), at })?;
        let j = self.jobs.get_mut(id).expect("checked above");
        j.state = JobState::Running;
        j.updated = at;
        Ok(j.clone())
    }

    pub fn finish(&mut self, id: &str, results: Vec<ArtifactRef>) -> Result<(), StoreError> {
        self.transition(id, &[JobState::Running], JobState::Done)?;
        let at = now();
        self.append(&Event::Done {
            id: id.to_string(),
            at,
            results: results.clone(),
        })?;
        let j = self.jobs.get_mut(id).expect("checked above");
        j.state = JobState::Done;
        j.updated = at;
        j.results = results;
        Ok(())
    }

    pub fn fail(&mut self, id: &str, error: &str) -> Result<(), StoreError> {
        self.transition(id, &[JobState::Running], JobState::Failed)?;
        let at = now();
        self.append(&Event::Failed {
            id: id.to_string(),
            at,
            error: error.to_string(),
        })?;
        let j = self.jobs.get_mut(id).expect("checked above");
        j.state = JobState::Failed;
        j.updated = at;
        j.error = Some(error.to_string());
        Ok(())
    }
}
