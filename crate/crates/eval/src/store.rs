//! Run catalogue on disk: `<root>/<run>/run.json`, plus the per-task scripts
//! a scripted run was driven by (`<root>/<run>/scripts/<task>.json`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use taskloom_core::reasoner::Script;

use crate::record::RunRecord;
use crate::trajectory_store::{valid_id, StoreError};

/// Writes through a temporary file and a rename so readers never see a
/// half-written document.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        std::io::Write::write_all(&mut f, bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub struct RunStore {
    root: Option<PathBuf>,
    runs: RwLock<BTreeMap<String, RunRecord>>,
}

impl RunStore {
    pub fn in_memory() -> Self {
        RunStore {
            root: None,
            runs: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens `root`, loading every `*/run.json` beneath it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut runs = BTreeMap::new();
        for entry in fs::read_dir(&root)? {
            let path = entry?.path().join("run.json");
            if !path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&path)?;
            let run: RunRecord = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            runs.insert(run.run_id.clone(), run);
        }
        Ok(RunStore {
            root: Some(root),
            runs: RwLock::new(runs),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn save(&self, run: RunRecord) -> Result<(), StoreError> {
        if !valid_id(&run.run_id) {
            return Err(StoreError::InvalidId(run.run_id));
        }
        if let Some(root) = &self.root {
            let text = serde_json::to_vec_pretty(&run).expect("runs serialize");
            write_atomic(&root.join(&run.run_id).join("run.json"), &text)?;
        }
        self.runs.write().expect("runs lock").insert(run.run_id.clone(), run);
        Ok(())
    }

    pub fn get(&self, run_id: &str) -> Option<RunRecord> {
        self.runs.read().expect("runs lock").get(run_id).cloned()
    }

    pub fn contains(&self, run_id: &str) -> bool {
        self.runs.read().expect("runs lock").contains_key(run_id)
    }

    /// Runs ordered by start time, then id.
    pub fn list(&self) -> Vec<RunRecord> {
        let mut v: Vec<RunRecord> = self.runs.read().expect("runs lock").values().cloned().collect();
        v.sort_by(|a, b| a.started_at.cmp(&b.started_at).then(a.run_id.cmp(&b.run_id)));
        v
    }

    fn script_path(&self, run: &str, task: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(run).join("scripts").join(format!("{task}.json")))
    }

    pub fn save_script(&self, run: &str, task: &str, script: &Script) -> Result<(), StoreError> {
        if !valid_id(run) || !valid_id(task) {
            return Err(StoreError::InvalidId(format!("{run}/{task}")));
        }
        if let Some(path) = self.script_path(run, task) {
            write_atomic(&path, script.to_json().as_bytes())?;
        }
        Ok(())
    }

    pub fn load_script(&self, run: &str, task: &str) -> Result<Option<Script>, StoreError> {
        if !valid_id(run) || !valid_id(task) {
            return Err(StoreError::InvalidId(format!("{run}/{task}")));
        }
        let Some(path) = self.script_path(run, task) else { return Ok(None) };
        match fs::read_to_string(&path) {
            Ok(text) => Script::from_json(&text).map(Some).map_err(|e| StoreError::Corrupt {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
