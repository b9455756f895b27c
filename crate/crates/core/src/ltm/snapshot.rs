//! Snapshot file format, version 1.
//!
//! ```text
//! LARP-LTM 1 records=<n> next_id=<id> crc32=<8 lowercase hex digits>
//! <record line> x n
//! ```
//!
//! Each record line is a JSON object with the fields `id`, `character_id`, `kind`,
//! `content`, `question` (string or null), `embedding`, `importance`,
//! `retrieval_count`, `created_at`, `last_retrieved_at`, `provenance`,
//! `distortion_count` and `parent_id` (integer or null). Floating-point values are
//! written as the 16-digit hex of their IEEE-754 bits (`embedding` concatenates
//! one such group per dimension), so a load reproduces them bit for bit. The
//! checksum is the CRC-32 of every byte after the header line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LtmError, MemoryKind, MemoryRecord, MemoryStore, Provenance};
use crate::hex;

pub const SNAPSHOT_MAGIC: &str = "LARP-LTM";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: u64,
    character_id: String,
    kind: MemoryKind,
    content: String,
    question: Option<String>,
    embedding: String,
    importance: String,
    retrieval_count: u32,
    created_at: u64,
    last_retrieved_at: u64,
    provenance: Provenance,
    distortion_count: u32,
    parent_id: Option<u64>,
}

fn corrupt(message: impl Into<String>) -> LtmError {
    LtmError::CorruptSnapshot(message.into())
}

impl MemoryStore {
    /// Serialises the store to snapshot text.
    pub fn to_snapshot(&self) -> String {
        let mut body = String::new();
        for r in &self.records {
            let line = RecordLine {
                id: r.id,
                character_id: r.character_id.clone(),
                kind: r.kind,
                content: r.content.clone(),
                question: r.question.clone(),
                embedding: hex::encode_vec(&r.embedding),
                importance: hex::encode_f64(r.importance),
                retrieval_count: r.retrieval_count,
                created_at: r.created_at,
                last_retrieved_at: r.last_retrieved_at,
                provenance: r.provenance,
                distortion_count: r.distortion_count,
                parent_id: r.parent_id,
            };
            body.push_str(&serde_json::to_string(&line).expect("record line serialises"));
            body.push('\n');
        }
        format!(
            "{SNAPSHOT_MAGIC} {SNAPSHOT_VERSION} records={} next_id={} crc32={:08x}\n{body}",
            self.records.len(),
            self.next_id,
            crc32fast::hash(body.as_bytes())
        )
    }

    /// Parses snapshot text, keeping this store's embedder.
    pub fn from_snapshot(text: &str) -> Result<Self, LtmError> {
        let (header, body) = text
            .split_once('\n')
            .ok_or_else(|| corrupt("missing header line"))?;
        let mut fields = header.split(' ');
        if fields.next() != Some(SNAPSHOT_MAGIC) {
            return Err(corrupt(format!("bad magic in header `{header}`")));
        }
        let version: u32 = fields
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| corrupt("missing snapshot version"))?;
        if version != SNAPSHOT_VERSION {
            return Err(corrupt(format!(
                "snapshot version {version}, this build reads version {SNAPSHOT_VERSION}"
            )));
        }
        let mut tag = |name: &str| -> Result<&str, LtmError> {
            fields
                .next()
                .and_then(|f| f.strip_prefix(name)?.strip_prefix('='))
                .ok_or_else(|| corrupt(format!("header field `{name}` missing")))
        };
        let count: usize = tag("records")?
            .parse()
            .map_err(|_| corrupt("bad record count"))?;
        let next_id: u64 = tag("next_id")?
            .parse()
            .map_err(|_| corrupt("bad next_id"))?;
        let crc =
            u32::from_str_radix(tag("crc32")?, 16).map_err(|_| corrupt("bad checksum field"))?;
        if crc32fast::hash(body.as_bytes()) != crc {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let mut store = MemoryStore::new();
        for (n, line) in body.lines().enumerate() {
            let raw: RecordLine = serde_json::from_str(line)
                .map_err(|e| corrupt(format!("record line {}: {e}", n + 1)))?;
            let embedding = hex::decode_vec(&raw.embedding)
                .ok_or_else(|| corrupt(format!("record {}: bad embedding", raw.id)))?;
            let importance = hex::decode_f64(&raw.importance)
                .ok_or_else(|| corrupt(format!("record {}: bad importance", raw.id)))?;
            if store.records.last().is_some_and(|last| last.id >= raw.id) {
                return Err(corrupt(format!("record ids not increasing at {}", raw.id)));
            }
            store.records.push(MemoryRecord {
                id: raw.id,
                character_id: raw.character_id,
                kind: raw.kind,
                content: raw.content,
                question: raw.question,
                embedding,
                importance,
                retrieval_count: raw.retrieval_count,
                created_at: raw.created_at,
                last_retrieved_at: raw.last_retrieved_at,
                provenance: raw.provenance,
                distortion_count: raw.distortion_count,
                parent_id: raw.parent_id,
            });
        }
        if store.records.len() != count {
            return Err(corrupt(format!(
                "header announces {count} records, found {}",
                store.records.len()
            )));
        }
        if store.records.last().is_some_and(|r| r.id >= next_id) {
            return Err(corrupt("next_id does not exceed the largest record id"));
        }
        store.next_id = next_id;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), LtmError> {
        std::fs::write(path, self.to_snapshot()).map_err(|source| LtmError::IoFailure {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LtmError> {
        let text = std::fs::read_to_string(path).map_err(|source| LtmError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_snapshot(&text)
    }
}
