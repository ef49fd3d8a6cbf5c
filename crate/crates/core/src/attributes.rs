//! The five per-sample conversational complexity attributes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DialogueSample};
use crate::embeddings::{cosine, sif_sentence_embedding, EmbeddingTable};
use crate::error::{Error, Result};

/// One of the five curriculum attributes. The discriminant is the scheduler's action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Specificity = 0,
    Repetitiveness = 1,
    QueryRelatedness = 2,
    Continuity = 3,
    ModelConfidence = 4,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Specificity,
        Attribute::Repetitiveness,
        Attribute::QueryRelatedness,
        Attribute::Continuity,
        Attribute::ModelConfidence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Attribute> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Specificity => "specificity",
            Attribute::Repetitiveness => "repetitiveness",
            Attribute::QueryRelatedness => "query_relatedness",
            Attribute::Continuity => "continuity",
            Attribute::ModelConfidence => "model_confidence",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('_', "-") == s)
            .ok_or_else(|| Error::invalid(format!("unknown attribute `{s}`")))
    }
}

/// Per-sample attribute scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub id: usize,
    pub specificity: f64,
    pub repetitiveness: f64,
    pub query_relatedness: f64,
    pub continuity: Option<f64>,
    pub model_confidence: f64,
}

impl AttributeScores {
    pub fn get(&self, attribute: Attribute) -> Option<f64> {
        match attribute {
            Attribute::Specificity => Some(self.specificity),
            Attribute::Repetitiveness => Some(self.repetitiveness),
            Attribute::QueryRelatedness => Some(self.query_relatedness),
            Attribute::Continuity => self.continuity,
            Attribute::ModelConfidence => Some(self.model_confidence),
        }
    }
}

/// Normalized inverse document frequency of a response word.
///
/// Errors for words absent from every response. A corpus whose words all share
/// the same IDF yields 0.
pub fn nidf(corpus: &Corpus, w: &str) -> Result<f64> {
    let df = corpus.response_doc_freq(w);
    if df == 0 {
        return Err(Error::UnknownWord(w.to_string()));
    }
    let (lo, hi) = corpus.idf_range();
    if hi <= lo {
        return Ok(0.0);
    }
    let idf = (corpus.n_responses() as f64 / df as f64).ln();
    Ok(((idf - lo) / (hi - lo)).clamp(0.0, 1.0))
}

/// Mean NIDF over the response tokens. Words never seen in a response count as 1.
pub fn specificity(corpus: &Corpus, response: &[String]) -> Result<f64> {
    if response.is_empty() {
        return Err(Error::invalid("empty response"));
    }
    let total: f64 = response.iter().map(|w| nidf(corpus, w).unwrap_or(1.0)).sum();
    Ok(total / response.len() as f64)
}

/// Fraction of tokens that already occurred earlier in the response.
pub fn repetitiveness(response: &[String]) -> Result<f64> {
    if response.is_empty() {
        return Err(Error::invalid("empty response"));
    }
    let mut seen = std::collections::HashSet::with_capacity(response.len());
    let repeats = response.iter().filter(|w| !seen.insert(w.as_str())).count();
    Ok(repeats as f64 / response.len() as f64)
}

/// Cosine between the SIF embeddings of two non-empty token lists.
pub fn sentence_similarity(table: &EmbeddingTable, corpus: &Corpus, a: &[String], b: &[String]) -> Result<f64> {
    let ea = sif_sentence_embedding(table, corpus, a)?;
    let eb = sif_sentence_embedding(table, corpus, b)?;
    cosine(&ea, &eb)
}

pub fn query_relatedness(
    table: &EmbeddingTable,
    corpus: &Corpus,
    query: &[String],
    response: &[String],
) -> Result<f64> {
    sentence_similarity(table, corpus, query, response)
}

pub fn continuity(
    table: &EmbeddingTable,
    corpus: &Corpus,
    response: &[String],
    next_utterance: Option<&[String]>,
) -> Result<f64> {
    let next = next_utterance.ok_or_else(|| Error::invalid("missing next utterance"))?;
    sentence_similarity(table, corpus, response, next)
}

/// Add-one smoothed bigram language model over corpus responses.
#[derive(Debug, Clone)]
pub struct BigramModel {
    ids: HashMap<String, u32>,
    pair_counts: HashMap<(u32, u32), u32>,
    context_counts: HashMap<u32, u32>,
    vocab_size: usize,
}

impl BigramModel {
    const BOS: u32 = u32::MAX;
    const UNK: u32 = u32::MAX - 1;

    pub fn train(corpus: &Corpus) -> Self {
        let mut ids: HashMap<String, u32> = HashMap::new();
        for s in corpus.samples() {
            for w in &s.response {
                let next = ids.len() as u32;
                ids.entry(w.clone()).or_insert(next);
            }
        }
        let mut model = BigramModel {
            vocab_size: ids.len() + 1,
            ids,
            pair_counts: HashMap::new(),
            context_counts: HashMap::new(),
        };
        for s in corpus.samples() {
            let mut prev = Self::BOS;
            for w in &s.response {
                let cur = model.id(w);
                *model.pair_counts.entry((prev, cur)).or_default() += 1;
                *model.context_counts.entry(prev).or_default() += 1;
                prev = cur;
            }
        }
        model
    }

    fn id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(Self::UNK)
    }

    /// Conditional probability of `w` after `prev` (`None` for sentence start).
    pub fn probability(&self, prev: Option<&str>, w: &str) -> f64 {
        let prev = prev.map_or(Self::BOS, |p| self.id(p));
        self.prob_ids(prev, self.id(w))
    }

    fn prob_ids(&self, prev: u32, cur: u32) -> f64 {
        let pair = self.pair_counts.get(&(prev, cur)).copied().unwrap_or(0);
        let ctx = self.context_counts.get(&prev).copied().unwrap_or(0);
        (f64::from(pair) + 1.0) / (f64::from(ctx) + self.vocab_size as f64)
    }

    /// Mean per-token negative log-likelihood of a response.
    pub fn mean_nll(&self, response: &[String]) -> Result<f64> {
        if response.is_empty() {
            return Err(Error::invalid("empty response"));
        }
        let mut prev = Self::BOS;
        let mut nll = 0.0;
        for w in response {
            let cur = self.id(w);
            nll -= self.prob_ids(prev, cur).ln();
            prev = cur;
        }
        Ok(nll / response.len() as f64)
    }
}

/// Where the per-sample loss behind model confidence comes from.
#[derive(Debug, Clone)]
pub enum ConfidenceProvider {
    /// Losses keyed by sample id, produced by an external model.
    External(BTreeMap<usize, f64>),
    /// Built-in bigram proxy trained on the corpus responses.
    Bigram(BigramModel),
}

impl ConfidenceProvider {
    pub fn builtin(corpus: &Corpus) -> Self {
        ConfidenceProvider::Bigram(BigramModel::train(corpus))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(ConfidenceProvider::External(parse_confidence(&text)?))
    }
}

/// Parse `id, loss` lines. Blank lines, `#` comments and an `id,loss` header are ignored.
pub fn parse_confidence(text: &str) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(Error::parse(idx + 1, "expected `id, loss`"));
        }
        if out.is_empty() && fields[0].eq_ignore_ascii_case("id") {
            continue;
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(idx + 1, format!("bad sample id `{}`", fields[0])))?;
        let loss: f64 = fields[1]
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| Error::parse(idx + 1, format!("bad loss `{}`", fields[1])))?;
        out.insert(id, loss);
    }
    Ok(out)
}

/// Negative loss of the sample; higher means easier.
pub fn model_confidence(provider: &ConfidenceProvider, sample: &DialogueSample) -> Result<f64> {
    match provider {
        ConfidenceProvider::External(losses) => losses
            .get(&sample.id)
            .map(|l| -l)
            .ok_or(Error::MissingConfidence(sample.id)),
        ConfidenceProvider::Bigram(model) => Ok(-model.mean_nll(&sample.response)?),
    }
}

fn score_sample(
    corpus: &Corpus,
    table: &EmbeddingTable,
    provider: &ConfidenceProvider,
    sample: &DialogueSample,
) -> Result<AttributeScores> {
    // an empty query has no embedding; score it as unrelated
    let query_relatedness = if sample.query.is_empty() {
        0.0
    } else {
        query_relatedness(table, corpus, &sample.query, &sample.response)?
    };
    let continuity = match &sample.next_utterance {
        Some(u) => Some(continuity(table, corpus, &sample.response, Some(u))?),
        None => None,
    };
    Ok(AttributeScores {
        id: sample.id,
        specificity: specificity(corpus, &sample.response)?,
        repetitiveness: repetitiveness(&sample.response)?,
        query_relatedness,
        continuity,
        model_confidence: model_confidence(provider, sample)?,
    })
}

/// Score every sample. Evaluation runs on the rayon pool; output is ordered by sample id.
pub fn score_corpus(
    corpus: &Corpus,
    table: &EmbeddingTable,
    provider: &ConfidenceProvider,
) -> Result<Vec<AttributeScores>> {
    corpus
        .samples()
        .par_iter()
        .map(|s| score_sample(corpus, table, provider, s))
        .collect()
}

pub fn write_scores_csv<W: Write>(scores: &[AttributeScores], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in scores {
        w.serialize(s).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))
}

pub fn write_scores_jsonl<W: Write>(scores: &[AttributeScores], mut writer: W) -> Result<()> {
    for s in scores {
        let line = serde_json::to_string(s).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<scores>", e))?;
    }
    Ok(())
}

/// Read a score CSV as written by [`write_scores_csv`].
pub fn read_scores_csv<R: Read>(reader: R) -> Result<Vec<AttributeScores>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<AttributeScores>().enumerate() {
        let rec = rec.map_err(|e| Error::parse(i + 2, e.to_string()))?;
        let finite = [
            Some(rec.specificity),
            Some(rec.repetitiveness),
            Some(rec.query_relatedness),
            rec.continuity,
            Some(rec.model_confidence),
        ]
        .into_iter()
        .flatten()
        .all(f64::is_finite);
        if !finite {
            return Err(Error::parse(i + 2, "non-finite score"));
        }
        out.push(rec);
    }
    Ok(out)
}
