//! Append-only JSON-lines transcripts of model exchanges.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, GatewayError, GenerationRequest};

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub digest: String,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Role and opening text of each message, for human review only; the
    /// digest is the lookup key.
    pub request_preview: Vec<String>,
    pub response: String,
    pub recorded_at: String,
}

impl TranscriptEntry {
    pub fn new(digest: String, model_id: &str, request: &GenerationRequest, response: &str) -> Self {
        Self {
            digest,
            model_id: model_id.to_string(),
            seed: request.seed,
            request_preview: request.messages.iter().map(preview).collect(),
            response: response.to_string(),
            recorded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

const PREVIEW_CHARS: usize = 120;

fn preview(m: &ChatMessage) -> String {
    let role = serde_json::to_value(m.role).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let flat: String = m.content.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut head: String = flat.chars().take(PREVIEW_CHARS).collect();
    if head.len() < flat.len() {
        head.push_str("...");
    }
    format!("{role}: {head}")
}

#[derive(Default)]
struct Index {
    responses: HashMap<String, Vec<String>>,
    cursors: HashMap<String, usize>,
}

/// Transcript store. Recording appends to a single file; replay reads any
/// number of files.
///
/// A digest recorded more than once replays its responses in recorded order
/// and then wraps around.
pub struct Transcript {
    writer: Option<Mutex<File>>,
    path: Option<PathBuf>,
    index: Mutex<Index>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::TranscriptIo(format!("{}: {e}", path.display()))
}

impl Transcript {
    pub fn in_memory(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let t = Self { writer: None, path: None, index: Mutex::new(Index::default()) };
        for e in entries {
            t.insert(e.digest, e.response);
        }
        t
    }

    pub fn open_for_append(path: PathBuf) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| io_err(&path, e))?;
        Ok(Self { writer: Some(Mutex::new(file)), path: Some(path), index: Mutex::new(Index::default()) })
    }

    /// Loads every `*.jsonl` file in `dir`, in file-name order.
    pub fn load_dir(dir: PathBuf) -> Result<Self, GatewayError> {
        let listing = std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        let mut files: Vec<PathBuf> = listing
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        let mut entries = Vec::new();
        for f in &files {
            entries.extend(read_entries(f)?);
        }
        let mut t = Self::in_memory(entries);
        t.path = Some(dir);
        Ok(t)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.lock_index().responses.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lock_index(&self) -> std::sync::MutexGuard<'_, Index> {
        self.index.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn insert(&self, digest: String, response: String) {
        self.lock_index().responses.entry(digest).or_default().push(response);
    }

    pub fn contains(&self, digest: &str) -> bool {
        self.lock_index().responses.contains_key(digest)
    }

    pub fn replay(&self, digest: &str) -> Option<String> {
        let mut idx = self.lock_index();
        let n = idx.responses.get(digest)?.len();
        let cursor = idx.cursors.entry(digest.to_string()).or_insert(0);
        let at = *cursor % n;
        *cursor += 1;
        Some(idx.responses[digest][at].clone())
    }

    pub fn append(&self, entry: TranscriptEntry) -> Result<(), GatewayError> {
        if let Some(w) = &self.writer {
            let mut line = serde_json::to_string(&entry).map_err(|e| GatewayError::TranscriptIo(e.to_string()))?;
            line.push('\n');
            let mut f = w.lock().unwrap_or_else(|e| e.into_inner());
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| io_err(self.path.as_deref().unwrap_or(Path::new("?")), e))?;
        }
        self.insert(entry.digest, entry.response);
        Ok(())
    }
}

pub fn read_entries(path: &Path) -> Result<Vec<TranscriptEntry>, GatewayError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", n + 1)))?;
        out.push(entry);
    }
    Ok(out)
}
