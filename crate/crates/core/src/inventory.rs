//! Append-only runtime inventories (product, service, resource, intent).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::canonical::to_canonical_string;
use crate::catalog::CatalogGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum InventoryKind {
    Product,
    Service,
    Resource,
    Intent,
}

/// A stored revision. Revisions of one id form a chain through
/// `previous_revision`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InventoryRecord {
    pub id: String,
    pub revision: u32,
    pub previous_revision: Option<u32>,
    pub kind: InventoryKind,
    pub source_spec_id: String,
    pub state: String,
    pub created_at: u64,
    pub catalog_version: String,
    pub payload: serde_json::Value,
}

/// What a caller submits; the store assigns revision, timestamp and version.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub id: String,
    pub kind: InventoryKind,
    pub source_spec_id: String,
    pub state: String,
    pub payload: serde_json::Value,
    /// Must name the latest revision when `id` already exists.
    pub supersedes: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("inventory id `{id}` already exists; a new revision must supersede revision {latest}")]
    DuplicateId { id: String, latest: u32 },
    #[error("record `{id}` supersedes revision {given} but the latest is {latest:?}")]
    StaleRevision { id: String, given: u32, latest: Option<u32> },
    #[error("record `{id}` references `{source_spec_id}` which is not in catalog {catalog_version}")]
    DanglingSource { id: String, source_spec_id: String, catalog_version: String },
    #[error("inventory file: {0}")]
    Io(#[from] std::io::Error),
    #[error("inventory file line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Default)]
struct Inner {
    lines: Vec<String>,
    records: Vec<InventoryRecord>,
    by_id: HashMap<String, Vec<usize>>,
    clock: u64,
}

/// Single-writer, many-reader inventory store, optionally mirrored to an
/// NDJSON file.
pub struct InventoryStore {
    catalog: Arc<CatalogGraph>,
    inner: RwLock<Inner>,
    file: Option<Mutex<File>>,
}

impl InventoryStore {
    pub fn in_memory(catalog: Arc<CatalogGraph>) -> Self {
        InventoryStore { catalog, inner: RwLock::new(Inner::default()), file: None }
    }

    /// Opens (or creates) an NDJSON inventory file, replaying existing records.
    pub fn open(path: impl AsRef<Path>, catalog: Arc<CatalogGraph>) -> Result<Self, InventoryError> {
        let path = path.as_ref();
        let mut inner = Inner::default();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: InventoryRecord = serde_json::from_str(&line)
                    .map_err(|e| InventoryError::Corrupt { line: n + 1, message: e.to_string() })?;
                inner.clock = inner.clock.max(rec.created_at);
                inner.by_id.entry(rec.id.clone()).or_default().push(inner.records.len());
                inner.records.push(rec);
                inner.lines.push(line);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(InventoryStore { catalog, inner: RwLock::new(inner), file: Some(Mutex::new(file)) })
    }

    pub fn catalog(&self) -> &CatalogGraph {
        &self.catalog
    }

    /// Appends a record (or a new revision of an existing one) and returns its id.
    pub fn record(&self, new: NewRecord) -> Result<String, InventoryError> {
        if !self.catalog.contains(&new.source_spec_id) {
            return Err(InventoryError::DanglingSource {
                id: new.id,
                source_spec_id: new.source_spec_id,
                catalog_version: self.catalog.version.clone(),
            });
        }
        let mut inner = self.inner.write().expect("inventory lock");
        let latest = inner.by_id.get(&new.id).and_then(|v| v.last()).map(|&i| inner.records[i].revision);
        let revision = match (latest, new.supersedes) {
            (None, None) => 1,
            (Some(l), None) => return Err(InventoryError::DuplicateId { id: new.id, latest: l }),
            (Some(l), Some(s)) if s == l => l + 1,
            (l, Some(s)) => return Err(InventoryError::StaleRevision { id: new.id, given: s, latest: l }),
        };
        inner.clock += 1;
        let rec = InventoryRecord {
            id: new.id.clone(),
            revision,
            previous_revision: new.supersedes,
            kind: new.kind,
            source_spec_id: new.source_spec_id,
            state: new.state,
            created_at: inner.clock,
            catalog_version: self.catalog.version.clone(),
            payload: new.payload,
        };
        let line = to_canonical_string(&rec);
        if let Some(file) = &self.file {
            let mut f = file.lock().expect("inventory file lock");
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        let idx = inner.records.len();
        inner.by_id.entry(new.id.clone()).or_default().push(idx);
        inner.records.push(rec);
        inner.lines.push(line);
        Ok(new.id)
    }

    pub fn latest(&self, id: &str) -> Option<InventoryRecord> {
        let inner = self.inner.read().expect("inventory lock");
        inner.by_id.get(id).and_then(|v| v.last()).map(|&i| inner.records[i].clone())
    }

    pub fn revisions(&self, id: &str) -> Vec<InventoryRecord> {
        let inner = self.inner.read().expect("inventory lock");
        inner.by_id.get(id).map(|v| v.iter().map(|&i| inner.records[i].clone()).collect()).unwrap_or_default()
    }

    /// Canonical stored bytes of one revision.
    pub fn raw(&self, id: &str, revision: u32) -> Option<String> {
        let inner = self.inner.read().expect("inventory lock");
        inner.by_id.get(id)?.iter().find(|&&i| inner.records[i].revision == revision).map(|&i| inner.lines[i].clone())
    }

    pub fn len(&self) -> usize {
        self.inner.read().expect("inventory lock").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Convenience wrapper matching the store's append contract.
pub fn record_inventory(store: &InventoryStore, record: NewRecord) -> Result<String, InventoryError> {
    store.record(record)
}
