//! Long-term memory: an append-only record store with three retrieval indexes.
//!
//! Records are never removed. Forgetting (see [`decay`]) only filters what a
//! retrieval returns, and reconstruction appends a child record instead of
//! rewriting its parent.

pub mod decay;
mod snapshot;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decay::{decay_probability, forget_filter, DecayParams, ForgetSampler, RetrievalMode};
pub use snapshot::{SNAPSHOT_MAGIC, SNAPSHOT_VERSION};

use crate::embed::{cosine, is_zero, EmbeddingProvider, TrigramEmbedder};
use crate::logicql;
use crate::Tick;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    EpisodicNl,
    EpisodicQa,
    SemanticFact,
}

impl MemoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::EpisodicNl => "episodic_nl",
            MemoryKind::EpisodicQa => "episodic_qa",
            MemoryKind::SemanticFact => "semantic_fact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Observed,
    Reflected,
    Reconstructed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub character_id: String,
    pub kind: MemoryKind,
    /// For QA records, the answer.
    pub content: String,
    pub question: Option<String>,
    pub embedding: Vec<f64>,
    /// Importance in `[0, 1]`.
    pub importance: f64,
    pub retrieval_count: u32,
    pub created_at: Tick,
    pub last_retrieved_at: Tick,
    pub provenance: Provenance,
    pub distortion_count: u32,
    pub parent_id: Option<u64>,
}

impl MemoryRecord {
    /// The text the record's embedding was computed from.
    pub fn key_text(&self) -> &str {
        match self.kind {
            MemoryKind::EpisodicQa => self.question.as_deref().unwrap_or(""),
            _ => &self.content,
        }
    }
}

impl fmt::Display for MemoryRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#{} [{}] λ={:.2} N={} t0={} tr={}",
            self.id,
            self.kind.as_str(),
            self.importance,
            self.retrieval_count,
            self.created_at,
            self.last_retrieved_at
        )?;
        if let Some(parent) = self.parent_id {
            write!(f, " parent=#{parent} distortion={}", self.distortion_count)?;
        }
        match &self.question {
            Some(q) => write!(f, " Q: {q} A: {}", self.content),
            None => write!(f, " {}", self.content),
        }
    }
}

/// Fields supplied by the caller when storing a record.
#[derive(Debug, Clone, PartialEq)]
pub struct NewRecord {
    pub character_id: String,
    pub kind: MemoryKind,
    pub content: String,
    pub question: Option<String>,
    pub importance: f64,
    pub created_at: Tick,
    pub provenance: Provenance,
}

impl NewRecord {
    pub fn episodic(
        character_id: &str,
        content: impl Into<String>,
        importance: f64,
        now: Tick,
    ) -> Self {
        Self {
            character_id: character_id.to_string(),
            kind: MemoryKind::EpisodicNl,
            content: content.into(),
            question: None,
            importance,
            created_at: now,
            provenance: Provenance::Observed,
        }
    }

    pub fn qa(
        character_id: &str,
        question: impl Into<String>,
        answer: impl Into<String>,
        importance: f64,
        now: Tick,
    ) -> Self {
        Self {
            character_id: character_id.to_string(),
            kind: MemoryKind::EpisodicQa,
            content: answer.into(),
            question: Some(question.into()),
            importance,
            created_at: now,
            provenance: Provenance::Observed,
        }
    }

    pub fn fact(character_id: &str, text: impl Into<String>, importance: f64, now: Tick) -> Self {
        Self {
            character_id: character_id.to_string(),
            kind: MemoryKind::SemanticFact,
            content: text.into(),
            question: None,
            importance,
            created_at: now,
            provenance: Provenance::Observed,
        }
    }

    pub fn reflected(mut self) -> Self {
        self.provenance = Provenance::Reflected;
        self
    }
}

#[derive(Debug, Error)]
pub enum LtmError {
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unknown memory id {0}")]
    UnknownId(u64),
    #[error("clock regression: record {id} last retrieved at {last}, asked to touch at {now}")]
    ClockRegression { id: u64, last: Tick, now: Tick },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// A ranked retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub record: MemoryRecord,
    pub score: f64,
}

/// Score descending, then newer first, then lower id.
pub fn rank_order(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.record.created_at.cmp(&a.record.created_at))
        .then_with(|| a.record.id.cmp(&b.record.id))
}

#[derive(Clone)]
pub struct MemoryStore {
    records: Vec<MemoryRecord>,
    next_id: u64,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryStore")
            .field("records", &self.records.len())
            .field("next_id", &self.next_id)
            .field("embedder", &self.embedder)
            .finish()
    }
}

impl PartialEq for MemoryStore {
    fn eq(&self, other: &Self) -> bool {
        self.next_id == other.next_id
            && self.records.len() == other.records.len()
            && self
                .records
                .iter()
                .zip(&other.records)
                .all(|(a, b)| records_identical(a, b))
    }
}

/// Field-by-field equality with floats compared by bit pattern.
pub fn records_identical(a: &MemoryRecord, b: &MemoryRecord) -> bool {
    a.id == b.id
        && a.character_id == b.character_id
        && a.kind == b.kind
        && a.content == b.content
        && a.question == b.question
        && a.embedding.len() == b.embedding.len()
        && a.embedding
            .iter()
            .zip(&b.embedding)
            .all(|(x, y)| x.to_bits() == y.to_bits())
        && a.importance.to_bits() == b.importance.to_bits()
        && a.retrieval_count == b.retrieval_count
        && a.created_at == b.created_at
        && a.last_retrieved_at == b.last_retrieved_at
        && a.provenance == b.provenance
        && a.distortion_count == b.distortion_count
        && a.parent_id == b.parent_id
}

impl Default for MemoryStore {
    fn default() -> Self {
        Self::new()
    }
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::with_embedder(Arc::new(TrigramEmbedder::default()))
    }

    pub fn with_embedder(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            records: Vec::new(),
            next_id: 1,
            embedder,
        }
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        self.embedder.embed(text)
    }

    pub fn embedder(&self) -> &Arc<dyn EmbeddingProvider> {
        &self.embedder
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&MemoryRecord> {
        // ids are assigned in increasing order, so the vector is sorted by id
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    pub fn store(&mut self, new: NewRecord) -> Result<u64, LtmError> {
        if new.character_id.trim().is_empty() {
            return Err(LtmError::InvalidRecord(
                "character_id must not be empty".into(),
            ));
        }
        if !(0.0..=1.0).contains(&new.importance) {
            return Err(LtmError::InvalidRecord(format!(
                "importance {} outside [0, 1]",
                new.importance
            )));
        }
        if new.provenance == Provenance::Reconstructed {
            return Err(LtmError::InvalidRecord(
                "reconstructed records need a parent; use store_reconstruction".into(),
            ));
        }
        match new.kind {
            MemoryKind::EpisodicQa
                if new.question.as_deref().is_none_or(|q| q.trim().is_empty()) =>
            {
                return Err(LtmError::InvalidRecord(
                    "episodic_qa records need a question".into(),
                ));
            }
            MemoryKind::EpisodicNl | MemoryKind::SemanticFact if new.question.is_some() => {
                return Err(LtmError::InvalidRecord(format!(
                    "{} records carry no question",
                    new.kind.as_str()
                )));
            }
            MemoryKind::SemanticFact => {
                let clauses = logicql::parse_program(&new.content).map_err(|e| {
                    LtmError::InvalidRecord(format!("semantic fact does not parse: {e}"))
                })?;
                if clauses.is_empty() {
                    return Err(LtmError::InvalidRecord("semantic fact is empty".into()));
                }
            }
            _ => {}
        }
        let embedding = match new.kind {
            MemoryKind::EpisodicQa => self.embed(new.question.as_deref().unwrap_or("")),
            _ => self.embed(&new.content),
        };
        Ok(self.append(MemoryRecord {
            id: 0,
            character_id: new.character_id,
            kind: new.kind,
            content: new.content,
            question: new.question,
            embedding,
            importance: new.importance,
            retrieval_count: 0,
            created_at: new.created_at,
            last_retrieved_at: new.created_at,
            provenance: new.provenance,
            distortion_count: 0,
            parent_id: None,
        }))
    }

    /// Appends a rewritten version of an episodic record. The parent is untouched.
    pub fn store_reconstruction(
        &mut self,
        parent_id: u64,
        content: impl Into<String>,
        now: Tick,
    ) -> Result<u64, LtmError> {
        let parent = self.get(parent_id).ok_or(LtmError::UnknownId(parent_id))?;
        if parent.kind != MemoryKind::EpisodicNl {
            return Err(LtmError::InvalidRecord(format!(
                "only episodic_nl records can be reconstructed, #{parent_id} is {}",
                parent.kind.as_str()
            )));
        }
        let content = content.into();
        let record = MemoryRecord {
            id: 0,
            character_id: parent.character_id.clone(),
            kind: MemoryKind::EpisodicNl,
            embedding: self.embed(&content),
            content,
            question: None,
            importance: parent.importance,
            retrieval_count: 0,
            created_at: now.max(parent.created_at),
            last_retrieved_at: now.max(parent.created_at),
            provenance: Provenance::Reconstructed,
            distortion_count: parent.distortion_count + 1,
            parent_id: Some(parent_id),
        };
        Ok(self.append(record))
    }

    fn append(&mut self, mut record: MemoryRecord) -> u64 {
        record.id = self.next_id;
        self.next_id += 1;
        let id = record.id;
        self.records.push(record);
        id
    }

    /// Records one retrieval of `id` at `now`.
    pub fn touch(&mut self, id: u64, now: Tick) -> Result<&MemoryRecord, LtmError> {
        let index = self
            .records
            .binary_search_by_key(&id, |r| r.id)
            .map_err(|_| LtmError::UnknownId(id))?;
        let record = &mut self.records[index];
        if now < record.last_retrieved_at {
            return Err(LtmError::ClockRegression {
                id,
                last: record.last_retrieved_at,
                now,
            });
        }
        record.retrieval_count += 1;
        record.last_retrieved_at = now;
        Ok(record)
    }

    /// Exact top-`k` by cosine similarity among `character_id`'s records of the given kinds.
    pub fn vector_search(
        &self,
        query: &[f64],
        character_id: &str,
        kinds: &[MemoryKind],
        k: usize,
    ) -> Vec<Scored> {
        if k == 0 || is_zero(query) {
            return Vec::new();
        }
        let mut hits: Vec<Scored> = self
            .records
            .iter()
            .filter(|r| {
                r.character_id == character_id && kinds.contains(&r.kind) && !is_zero(&r.embedding)
            })
            .map(|r| Scored {
                score: cosine(query, &r.embedding),
                record: r.clone(),
            })
            .collect();
        top_k(&mut hits, k);
        hits
    }

    /// Episodic NL records ranked by how many distinct keywords they contain as whole words.
    pub fn keyword_search(&self, keywords: &[String], character_id: &str, k: usize) -> Vec<Scored> {
        let mut phrases: Vec<Vec<String>> = Vec::new();
        for keyword in keywords {
            let words = words(keyword);
            if !words.is_empty() && !phrases.contains(&words) {
                phrases.push(words);
            }
        }
        if k == 0 || phrases.is_empty() {
            return Vec::new();
        }
        let mut hits: Vec<Scored> = self
            .records
            .iter()
            .filter(|r| r.character_id == character_id && r.kind == MemoryKind::EpisodicNl)
            .filter_map(|r| {
                let content = words(&r.content);
                let score = phrases
                    .iter()
                    .filter(|p| contains_phrase(&content, p))
                    .count();
                (score > 0).then(|| Scored {
                    record: r.clone(),
                    score: score as f64,
                })
            })
            .collect();
        top_k(&mut hits, k);
        hits
    }

    /// QA records ranked by similarity of their question to `question`.
    pub fn qa_search(&self, question: &str, character_id: &str, k: usize) -> Vec<Scored> {
        self.vector_search(
            &self.embed(question),
            character_id,
            &[MemoryKind::EpisodicQa],
            k,
        )
    }
}

fn top_k(hits: &mut Vec<Scored>, k: usize) {
    hits.sort_by(rank_order);
    hits.truncate(k);
}

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_phrase(haystack: &[String], phrase: &[String]) -> bool {
    phrase.len() <= haystack.len() && haystack.windows(phrase.len()).any(|w| w == phrase)
}
