//! Word vectors and SIF-weighted sentence embeddings.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Smoothing constant of the SIF weight `a / (a + p(w))`.
pub const SIF_SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    File,
    Hashed { seed: u64 },
}

/// Token to vector lookup.
///
/// File-backed tables resolve out-of-vocabulary tokens to `None` (treated as the
/// zero vector). Hashed tables derive a unit vector for every token from
/// `(token, dim, seed)` alone.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    source: EmbeddingSource,
}

impl EmbeddingTable {
    pub fn from_vectors(vectors: HashMap<String, Vec<f64>>) -> Result<Self> {
        let mut dims = vectors.values().map(Vec::len);
        let dim = dims.next().ok_or(Error::NoVectors)?;
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional vectors"));
        }
        if let Some(bad) = dims.find(|&d| d != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad,
            });
        }
        Ok(Self {
            dim,
            vectors,
            source: EmbeddingSource::File,
        })
    }

    /// Deterministic pseudo-random unit vectors, one per token.
    pub fn hashed(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            vectors: HashMap::new(),
            source: EmbeddingSource::Hashed { seed },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    /// Precompute hashed vectors for `words` so later lookups skip the generator.
    /// No effect on file-backed tables.
    pub fn materialize<'w>(&mut self, words: impl IntoIterator<Item = &'w str>) {
        if let EmbeddingSource::Hashed { seed } = self.source {
            for w in words {
                if !self.vectors.contains_key(w) {
                    let v = hashed_vector(w, self.dim, seed);
                    self.vectors.insert(w.to_owned(), v);
                }
            }
        }
    }

    /// Number of stored vectors (cached ones, for hashed tables).
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Vector for `w`, or `None` when the word is out of vocabulary.
    pub fn get(&self, w: &str) -> Option<Cow<'_, [f64]>> {
        match self.source {
            EmbeddingSource::File => self.vectors.get(w).map(|v| Cow::Borrowed(v.as_slice())),
            EmbeddingSource::Hashed { seed } => Some(match self.vectors.get(w) {
                Some(v) => Cow::Borrowed(v.as_slice()),
                None => Cow::Owned(hashed_vector(w, self.dim, seed)),
            }),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn hashed_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let key = fnv1a(token.as_bytes()) ^ seed.rotate_left(32) ^ (dim as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Parse `token v1 ... vd` lines. A leading `count dim` header line is skipped.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut vectors: HashMap<String, Vec<f64>> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if idx == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.is_empty() {
            return Err(Error::parse(idx + 1, format!("token `{token}` has no components")));
        }
        let values = rest
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(idx + 1, format!("unparsable number `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: values.len(),
                })
            }
            Some(_) => {}
        }
        vectors.entry(token.to_string()).or_insert(values);
    }
    EmbeddingTable::from_vectors(vectors)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}

/// SIF weight of a word with unigram probability `p`; always in (0, 1].
pub fn sif_weight(p: f64) -> f64 {
    SIF_SMOOTHING / (SIF_SMOOTHING + p)
}

/// `(1/|e|) Σ_w a/(a + p(w)) · emb(w)` over the tokens of `sentence`.
///
/// Out-of-vocabulary tokens contribute nothing but still count in `|e|`.
pub fn sif_sentence_embedding(table: &EmbeddingTable, corpus: &Corpus, sentence: &[String]) -> Result<Vec<f64>> {
    if sentence.is_empty() {
        return Err(Error::invalid("empty sentence"));
    }
    let mut acc = vec![0.0; table.dim()];
    for w in sentence {
        if let Some(v) = table.get(w) {
            let weight = sif_weight(corpus.unigram_probability(w));
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += weight * x;
            }
        }
    }
    let n = sentence.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let (mut dot, mut xx, mut yy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    if xx == 0.0 || yy == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (xx.sqrt() * yy.sqrt())).clamp(-1.0, 1.0))
}
