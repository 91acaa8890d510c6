//! Directory-backed document store.
//!
//! ```text
//! <root>/jobs/<id>.json      job documents
//! <root>/reports/<id>.json   solution reports
//! <root>/results/<id>.json   trial distributions
//! <root>/eval/<case>.json    evaluations (+ .csv)
//! ```
//!
//! Writes go through one lock and land via rename, so readers always see a
//! complete document without locking.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::job::Job;

pub const RESTART_NOTICE: &str = "interrupted by a service restart; submit the job again to rerun it";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Corrupt { path: PathBuf, source: serde_json::Error },
    #[error("document id {0:?} is not a plain name")]
    BadId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collection {
    Jobs,
    Reports,
    Results,
    Eval,
}

impl Collection {
    fn dir(self) -> &'static str {
        match self {
            Self::Jobs => "jobs",
            Self::Reports => "reports",
            Self::Results => "results",
            Self::Eval => "eval",
        }
    }
}

pub struct Store {
    root: PathBuf,
    write: Mutex<HashMap<String, String>>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::BadId(id.to_string()))
    }
}

impl Store {
    /// Opens (creating if needed) a store and fails any job a previous
    /// process left queued or running.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for c in [Collection::Jobs, Collection::Reports, Collection::Results, Collection::Eval] {
            let d = root.join(c.dir());
            std::fs::create_dir_all(&d).map_err(io(&d))?;
        }
        let store = Self { root, write: Mutex::new(HashMap::new()) };
        let mut keys = HashMap::new();
        for mut job in store.list_jobs()? {
            if !job.state.is_terminal() {
                log::warn!("job {} was {:?} at startup; marking failed", job.id, job.state);
                job.fail(RESTART_NOTICE.to_string()).expect("non-terminal job can fail");
                store.put(Collection::Jobs, &job.id, &job)?;
            }
            if let Some(k) = &job.request.idempotency_key {
                keys.insert(k.clone(), job.id.clone());
            }
        }
        *store.write.lock().unwrap() = keys;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, c: Collection) -> PathBuf {
        self.root.join(c.dir())
    }

    fn path(&self, c: Collection, id: &str) -> Result<PathBuf, StoreError> {
        check_id(id)?;
        Ok(self.dir(c).join(format!("{id}.json")))
    }

    pub fn get<T: DeserializeOwned>(&self, c: Collection, id: &str) -> Result<Option<T>, StoreError> {
        let path = match self.path(c, id) {
            Ok(p) => p,
            Err(StoreError::BadId(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map(Some).map_err(|source| StoreError::Corrupt { path, source }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(StoreError::Io { path, source: e }),
        }
    }

    fn put_unlocked<T: Serialize>(&self, c: Collection, id: &str, doc: &T) -> Result<(), StoreError> {
        let path = self.path(c, id)?;
        let tmp = path.with_extension("json.tmp");
        let mut text = serde_json::to_string_pretty(doc).expect("documents serialize");
        text.push('\n');
        std::fs::write(&tmp, text).map_err(io(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io(&path))
    }

    pub fn put<T: Serialize>(&self, c: Collection, id: &str, doc: &T) -> Result<(), StoreError> {
        let _guard = self.write.lock().unwrap();
        self.put_unlocked(c, id, doc)
    }

    /// Read-modify-write of a job under the write lock.
    pub fn update_job(&self, id: &str, f: impl FnOnce(&mut Job)) -> Result<Option<Job>, StoreError> {
        let _guard = self.write.lock().unwrap();
        let Some(mut job) = self.get::<Job>(Collection::Jobs, id)? else {
            return Ok(None);
        };
        f(&mut job);
        self.put_unlocked(Collection::Jobs, id, &job)?;
        Ok(Some(job))
    }

    /// Stores a new job unless `key` already names one; returns the job that
    /// now owns the key and whether it was created by this call.
    pub fn insert_job(&self, job: Job, key: Option<&str>) -> Result<(Job, bool), StoreError> {
        let mut keys = self.write.lock().unwrap();
        if let Some(k) = key {
            if let Some(existing) = keys.get(k) {
                if let Some(j) = self.get::<Job>(Collection::Jobs, existing)? {
                    return Ok((j, false));
                }
            }
            keys.insert(k.to_string(), job.id.clone());
        }
        self.put_unlocked(Collection::Jobs, &job.id, &job)?;
        Ok((job, true))
    }

    pub fn list_jobs(&self) -> Result<Vec<Job>, StoreError> {
        let dir = self.dir(Collection::Jobs);
        let mut jobs = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let text = std::fs::read_to_string(&path).map_err(io(&path))?;
                let job: Job =
                    serde_json::from_str(&text).map_err(|source| StoreError::Corrupt { path: path.clone(), source })?;
                jobs.push(job);
            }
        }
        jobs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        Ok(jobs)
    }
}
