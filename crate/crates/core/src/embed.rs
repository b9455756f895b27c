//! Deterministic text embeddings.
//!
//! The default provider hashes lowercased character trigrams into a fixed number of
//! buckets and L2-normalises the counts. It needs no model and gives identical
//! vectors on every platform.

/// Something that turns text into fixed-length vectors.
pub trait EmbeddingProvider: Send + Sync + std::fmt::Debug {
    fn dimension(&self) -> usize;

    /// Must return a vector of `dimension()` entries: unit-norm for text with any
    /// non-whitespace character, all-zero otherwise.
    fn embed(&self, text: &str) -> Vec<f64>;
}

pub const DEFAULT_DIMENSION: usize = 256;
const NGRAM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramEmbedder {
    dimension: usize,
}

impl Default for TrigramEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl TrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    /// Bucket a gram hashes to.
    pub fn bucket(&self, gram: &str) -> usize {
        (fnv1a(gram.as_bytes()) % self.dimension as u64) as usize
    }
}

/// The character n-grams embedded for `text`: trigrams of the lowercased text, or
/// the whole text when it is shorter than three characters.
pub fn trigrams(text: &str) -> Vec<String> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    if chars.len() < NGRAM {
        return vec![chars.into_iter().collect()];
    }
    chars.windows(NGRAM).map(|w| w.iter().collect()).collect()
}

impl EmbeddingProvider for TrigramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut vector = vec![0.0; self.dimension];
        for gram in trigrams(text) {
            vector[self.bucket(&gram)] += 1.0;
        }
        normalize(&mut vector);
        vector
    }
}

/// Convenience wrapper over the default provider.
pub fn embed(text: &str) -> Vec<f64> {
    TrigramEmbedder::default().embed(text)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn normalize(vector: &mut [f64]) {
    let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        vector.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Cosine similarity; zero when either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub fn is_zero(vector: &[f64]) -> bool {
    vector.iter().all(|x| *x == 0.0)
}
