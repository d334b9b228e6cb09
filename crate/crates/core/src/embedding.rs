//! Text embeddings and cosine similarity.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::taxonomy::normalize;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("non-finite component at index {0}")]
    NonFinite(usize),
    #[error("empty vector")]
    Empty,
    #[error("embedding backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },
}

/// A finite, non-empty vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(components: Vec<f64>) -> Result<Self, EmbeddingError> {
        if components.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if let Some(i) = components.iter().position(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite(i));
        }
        Ok(Embedding(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &Embedding, v: &Embedding) -> Result<f64, EmbeddingError> {
    if u.dim() != v.dim() {
        return Err(EmbeddingError::DimensionMismatch(u.dim(), v.dim()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    let dot: f64 = u.0.iter().zip(&v.0).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Maps text to a vector. Implementations must be deterministic within a
/// process and tolerate concurrent calls.
pub trait EmbeddingBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

impl<B: EmbeddingBackend + ?Sized> EmbeddingBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        (**self).embed(text)
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

pub const HASH_EMBEDDER_DIM: usize = 256;

/// Nonzero entries each feature contributes.
const FEATURE_NNZ: usize = 8;

/// Deterministic offline embedder.
///
/// The normalized text is split into word tokens; every token and each of
/// its boundary-marked character trigrams (`<he`, `hea`, ..., `rt>`) is a
/// feature. A feature hashes to a sparse pseudo-random unit vector with
/// [`FEATURE_NNZ`] signed entries; feature vectors are summed and the result
/// renormalized. Texts that share words or word stems come out similar.
#[derive(Clone, Debug)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder {
            dim: HASH_EMBEDDER_DIM,
        }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(
            dim >= FEATURE_NNZ,
            "dimension must be at least {FEATURE_NNZ}"
        );
        HashEmbedder { dim }
    }

    fn add_feature(&self, acc: &mut [f64], kind: u8, feature: &str) {
        let mut state = fnv1a(kind, feature.as_bytes());
        let scale = 1.0 / (FEATURE_NNZ as f64).sqrt();
        for _ in 0..FEATURE_NNZ {
            state = splitmix64(state);
            let idx = (state % self.dim as u64) as usize;
            let sign = if (state >> 63) == 1 { -1.0 } else { 1.0 };
            acc[idx] += sign * scale;
        }
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let norm = normalize(text);
        let mut acc = vec![0.0; self.dim];
        for token in norm.split(' ').filter(|t| !t.is_empty()) {
            self.add_feature(&mut acc, b'w', token);
            let marked: Vec<char> = std::iter::once('<')
                .chain(token.chars())
                .chain(std::iter::once('>'))
                .collect();
            for gram in marked.windows(3) {
                let gram: String = gram.iter().collect();
                self.add_feature(&mut acc, b'g', &gram);
            }
        }
        let len = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            // Empty text, or features cancelled out exactly.
            return Err(EmbeddingError::ZeroVector);
        }
        acc.iter_mut().for_each(|x| *x /= len);
        Embedding::new(acc)
    }
}

fn fnv1a(kind: u8, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in std::iter::once(&kind).chain(bytes) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Memoizes another backend by normalized text.
pub struct CachedEmbedder<B> {
    inner: B,
    cache: RwLock<HashMap<String, Embedding>>,
}

impl<B: EmbeddingBackend> CachedEmbedder<B> {
    pub fn new(inner: B) -> Self {
        CachedEmbedder {
            inner,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}

impl<B: EmbeddingBackend> EmbeddingBackend for CachedEmbedder<B> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbeddingError> {
        let key = normalize(text);
        if let Some(v) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        self.cache
            .write()
            .expect("cache lock")
            .entry(key)
            .or_insert_with(|| v.clone());
        Ok(v)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbeddingError> {
        let keys: Vec<String> = texts.iter().map(|t| normalize(t)).collect();
        let missing: Vec<&str> = {
            let cache = self.cache.read().expect("cache lock");
            let mut seen = std::collections::HashSet::new();
            texts
                .iter()
                .zip(&keys)
                .filter(|(_, k)| !cache.contains_key(*k) && seen.insert(k.as_str()))
                .map(|(t, _)| *t)
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut cache = self.cache.write().expect("cache lock");
            for (t, v) in missing.iter().zip(fresh) {
                cache.entry(normalize(t)).or_insert(v);
            }
        }
        let cache = self.cache.read().expect("cache lock");
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }
}
