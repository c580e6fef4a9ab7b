//! Durable, append-only trajectory files: one JSON event per line, one file
//! per `(run, task)` under `<root>/<run>/trajectories/<task>.jsonl`.
//!
//! An append returns only after the line reached the file (and, with `sync`
//! on, the disk). A writer killed mid-line leaves a torn tail, which loading
//! ignores and the next append truncates.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use taskloom_core::trajectory::{TrajectoryEvent, TrajectorySink};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("sequence gap for {run}/{task}: expected seq {expected}, got {got}")]
    SequenceGap {
        run: String,
        task: String,
        expected: u64,
        got: u64,
    },
    #[error("no trajectory for {run}/{task}")]
    UnknownTrajectory { run: String, task: String },
    #[error("`{0}` is not a valid run or task id")]
    InvalidId(String),
    #[error("corrupt line {line} in {path}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Ids become path components, so they are kept to a safe alphabet.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id.len() <= 200
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn check_id(id: &str) -> Result<(), StoreError> {
    if valid_id(id) {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

pub struct TrajectoryStore {
    root: PathBuf,
    sync: bool,
    /// Next expected seq per (run, task), each behind its own lock so
    /// different tasks append concurrently.
    cursors: Mutex<HashMap<(String, String), Arc<Mutex<Option<u64>>>>>,
}

impl TrajectoryStore {
    pub fn new(root: impl Into<PathBuf>, sync: bool) -> Self {
        TrajectoryStore {
            root: root.into(),
            sync,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn path(&self, run: &str, task: &str) -> PathBuf {
        self.root.join(run).join("trajectories").join(format!("{task}.jsonl"))
    }

    /// Scans an existing file: drops a torn tail and returns the next seq.
    fn recover(path: &Path) -> Result<u64, StoreError> {
        let mut file = match OpenOptions::new().read(true).write(true).open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(e.into()),
        };
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if keep < bytes.len() {
            file.set_len(keep as u64)?;
            file.seek(SeekFrom::End(0))?;
            file.sync_all()?;
        }
        let text = String::from_utf8_lossy(&bytes[..keep]);
        match text.lines().last() {
            None => Ok(0),
            Some(line) => {
                let e: TrajectoryEvent = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                    path: path.display().to_string(),
                    line: text.lines().count(),
                    message: e.to_string(),
                })?;
                Ok(e.seq + 1)
            }
        }
    }

    pub fn append(&self, event: &TrajectoryEvent) -> Result<(), StoreError> {
        check_id(&event.run_id)?;
        check_id(&event.task_id)?;
        let key = (event.run_id.clone(), event.task_id.clone());
        let cursor = self.cursors.lock().expect("cursor map").entry(key).or_default().clone();
        let mut next = cursor.lock().expect("cursor");
        let path = self.path(&event.run_id, &event.task_id);
        let expected = match *next {
            Some(n) => n,
            None => Self::recover(&path)?,
        };
        *next = Some(expected);
        if event.seq != expected {
            return Err(StoreError::SequenceGap {
                run: event.run_id.clone(),
                task: event.task_id.clone(),
                expected,
                got: event.seq,
            });
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut line = serde_json::to_vec(event).expect("events serialize");
        line.push(b'\n');
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        file.write_all(&line)?;
        if self.sync {
            file.sync_data()?;
        }
        *next = Some(expected + 1);
        Ok(())
    }

    /// Every complete line of the trajectory, in order.
    pub fn load(&self, run: &str, task: &str) -> Result<Vec<TrajectoryEvent>, StoreError> {
        check_id(run)?;
        check_id(task)?;
        let path = self.path(run, task);
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownTrajectory {
                    run: run.into(),
                    task: task.into(),
                })
            }
            Err(e) => return Err(e.into()),
        };
        let mut reader = BufReader::new(file);
        let mut events = Vec::new();
        let mut buf = Vec::new();
        let mut n = 0;
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            n += 1;
            if buf.last() != Some(&b'\n') {
                break; // torn tail from an interrupted writer
            }
            let e = serde_json::from_slice(&buf).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                line: n,
                message: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(events)
    }

    /// Task ids with a trajectory file in `run`.
    pub fn tasks(&self, run: &str) -> Vec<String> {
        let Ok(dir) = fs::read_dir(self.root.join(run).join("trajectories")) else {
            return Vec::new();
        };
        let mut out: Vec<String> = dir
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".jsonl")).map(str::to_string))
            .collect();
        out.sort();
        out
    }
}

impl TrajectorySink for TrajectoryStore {
    fn append(&self, event: &TrajectoryEvent) -> Result<(), String> {
        TrajectoryStore::append(self, event).map_err(|e| e.to_string())
    }
}

/// Post-hoc check that a loaded stream belongs to one `(run, task)` and is
/// numbered `0, 1, 2, ...` without gaps.
pub fn audit(events: &[TrajectoryEvent], run: &str, task: &str) -> Result<(), String> {
    for (i, e) in events.iter().enumerate() {
        if e.run_id != run || e.task_id != task {
            return Err(format!("event {i} belongs to {}/{}", e.run_id, e.task_id));
        }
        if e.seq != i as u64 {
            return Err(format!("event {i} has seq {}", e.seq));
        }
    }
    Ok(())
}
