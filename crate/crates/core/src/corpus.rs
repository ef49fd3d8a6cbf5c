//! Dialogue corpus loading, tokenization and word statistics.
//!
//! A [`Corpus`] is immutable once built. It carries the response document
//! frequencies used by the specificity scorer and the unigram probabilities
//! used by SIF sentence embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercase `text`, split ASCII punctuation into standalone tokens and split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
        } else if ch.is_ascii_punctuation() {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            tokens.push(ch.to_string());
        } else {
            current.extend(ch.to_lowercase());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// One (query, response, next utterance) training triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueSample {
    pub id: usize,
    pub query: Vec<String>,
    pub response: Vec<String>,
    pub next_utterance: Option<Vec<String>>,
    pub raw_query: String,
    pub raw_response: String,
}

/// Input file layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Jsonl,
}

impl Format {
    /// Guess from the file extension; anything that is not `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => Format::Jsonl,
            _ => Format::Tsv,
        }
    }
}

/// Which side of the training pairs feeds the unigram model p(w).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbabilitySource {
    #[default]
    QueriesAndResponses,
    ResponsesOnly,
}

/// A record as it appears in the input file, before tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawRecord {
    pub query: String,
    pub response: String,
    pub next_utterance: Option<String>,
    pub conv_id: Option<String>,
}

#[derive(Deserialize)]
struct JsonRecord {
    query: String,
    response: String,
    #[serde(default)]
    next_utterance: Option<String>,
    #[serde(default)]
    conv_id: Option<serde_json::Value>,
}

/// Parse `query<TAB>response[<TAB>next_utterance]` lines. Blank lines are skipped.
pub fn parse_tsv(text: &str) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let record = match fields.as_slice() {
            [query, response] => RawRecord {
                query: query.to_string(),
                response: response.to_string(),
                ..Default::default()
            },
            [query, response, next] => RawRecord {
                query: query.to_string(),
                response: response.to_string(),
                next_utterance: (!next.trim().is_empty()).then(|| next.to_string()),
                conv_id: None,
            },
            _ => {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
                ))
            }
        };
        records.push(record);
    }
    Ok(records)
}

/// Parse one JSON object per line with `query`, `response`, optional
/// `next_utterance` and optional `conv_id`.
pub fn parse_jsonl(text: &str) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        let conv_id = match rec.conv_id {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) => Some(s),
            Some(other) => Some(other.to_string()),
        };
        records.push(RawRecord {
            query: rec.query,
            response: rec.response,
            next_utterance: rec.next_utterance,
            conv_id,
        });
    }
    Ok(records)
}

/// Load and index a corpus file.
pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus> {
    load_corpus_with(path, format, ProbabilitySource::default())
}

pub fn load_corpus_with(path: impl AsRef<Path>, format: Format, source: ProbabilitySource) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = match format {
        Format::Tsv => parse_tsv(&text)?,
        Format::Jsonl => parse_jsonl(&text)?,
    };
    Corpus::from_records(records, source)
}

/// A tokenized, indexed dialogue corpus with the word statistics every scorer needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    samples: Vec<DialogueSample>,
    vocab: BTreeMap<String, u32>,
    response_doc_freq: BTreeMap<String, usize>,
    n_responses: usize,
    unigram_prob: BTreeMap<String, f64>,
    idf_min: f64,
    idf_max: f64,
    dropped: usize,
    probability_source: ProbabilitySource,
}

impl Corpus {
    /// Tokenize and index raw records.
    ///
    /// Records whose response tokenizes to nothing are dropped and counted.
    /// When a record has no explicit next utterance but carries a `conv_id`, the
    /// response of the next record in the same conversation is used.
    pub fn from_records(records: Vec<RawRecord>, source: ProbabilitySource) -> Result<Corpus> {
        let mut next_in_conv: Vec<Option<usize>> = vec![None; records.len()];
        let mut last_seen: HashMap<&str, usize> = HashMap::new();
        for (i, rec) in records.iter().enumerate().rev() {
            if let Some(conv) = rec.conv_id.as_deref() {
                next_in_conv[i] = last_seen.get(conv).copied();
                last_seen.insert(conv, i);
            }
        }

        let mut samples = Vec::with_capacity(records.len());
        let mut dropped = 0;
        for (i, rec) in records.iter().enumerate() {
            let response = tokenize(&rec.response);
            if response.is_empty() {
                dropped += 1;
                continue;
            }
            let next_text = match &rec.next_utterance {
                Some(text) => Some(text.as_str()),
                None => next_in_conv[i].map(|j| records[j].response.as_str()),
            };
            let next_utterance = next_text.map(tokenize).filter(|t| !t.is_empty());
            samples.push(DialogueSample {
                id: samples.len(),
                query: tokenize(&rec.query),
                response,
                next_utterance,
                raw_query: rec.query.clone(),
                raw_response: rec.response.clone(),
            });
        }
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::index(samples, dropped, source))
    }

    /// Build a corpus directly from already tokenized samples. Ids are reassigned densely.
    pub fn from_samples(samples: Vec<DialogueSample>, source: ProbabilitySource) -> Result<Corpus> {
        let samples: Vec<DialogueSample> = samples
            .into_iter()
            .filter(|s| !s.response.is_empty())
            .enumerate()
            .map(|(id, s)| DialogueSample { id, ..s })
            .collect();
        if samples.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::index(samples, 0, source))
    }

    fn index(samples: Vec<DialogueSample>, dropped: usize, source: ProbabilitySource) -> Corpus {
        let mut vocab = BTreeMap::new();
        let mut next_id = 0u32;
        let mut intern = |tok: &str| {
            if !vocab.contains_key(tok) {
                vocab.insert(tok.to_string(), next_id);
                next_id += 1;
            }
        };
        for s in &samples {
            s.query
                .iter()
                .chain(&s.response)
                .chain(s.next_utterance.iter().flatten())
                .for_each(|t| intern(t));
        }

        let mut response_doc_freq: BTreeMap<String, usize> = BTreeMap::new();
        for s in &samples {
            let mut seen: Vec<&String> = s.response.iter().collect();
            seen.sort();
            seen.dedup();
            for tok in seen {
                *response_doc_freq.entry(tok.clone()).or_default() += 1;
            }
        }
        let n_responses = samples.len();

        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut total = 0u64;
        for s in &samples {
            let texts: &[&Vec<String>] = match source {
                ProbabilitySource::QueriesAndResponses => &[&s.query, &s.response],
                ProbabilitySource::ResponsesOnly => &[&s.response],
            };
            for tok in texts.iter().flat_map(|t| t.iter()) {
                *counts.entry(tok.as_str()).or_default() += 1;
                total += 1;
            }
        }
        let unigram_prob = counts
            .into_iter()
            .map(|(tok, c)| (tok.to_string(), c as f64 / total as f64))
            .collect();

        let (mut idf_min, mut idf_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &df in response_doc_freq.values() {
            let idf = (n_responses as f64 / df as f64).ln();
            idf_min = idf_min.min(idf);
            idf_max = idf_max.max(idf);
        }

        Corpus {
            samples,
            vocab,
            response_doc_freq,
            n_responses,
            unigram_prob,
            idf_min,
            idf_max,
            dropped,
            probability_source: source,
        }
    }

    pub fn samples(&self) -> &[DialogueSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Token to integer id over every token of queries, responses and next utterances.
    pub fn vocab(&self) -> &BTreeMap<String, u32> {
        &self.vocab
    }

    /// Number of responses (N_r).
    pub fn n_responses(&self) -> usize {
        self.n_responses
    }

    /// Number of responses containing `w` (N_w); zero when unseen.
    pub fn response_doc_freq(&self, w: &str) -> usize {
        self.response_doc_freq.get(w).copied().unwrap_or(0)
    }

    pub fn response_doc_freqs(&self) -> &BTreeMap<String, usize> {
        &self.response_doc_freq
    }

    /// Minimum and maximum IDF over the response vocabulary.
    pub fn idf_range(&self) -> (f64, f64) {
        (self.idf_min, self.idf_max)
    }

    pub fn unigram_probs(&self) -> &BTreeMap<String, f64> {
        &self.unigram_prob
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn probability_source(&self) -> ProbabilitySource {
        self.probability_source
    }

    /// Maximum-likelihood unigram probability of `w`; zero for unseen tokens.
    pub fn unigram_probability(&self, w: &str) -> f64 {
        self.unigram_prob.get(w).copied().unwrap_or(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(rows: &[(&str, &str, Option<&str>)]) -> Result<Corpus> {
        let records = rows
            .iter()
            .map(|(q, r, u)| RawRecord {
                query: q.to_string(),
                response: r.to_string(),
                next_utterance: u.map(str::to_string),
                conv_id: None,
            })
            .collect();
        Corpus::from_records(records, ProbabilitySource::default())
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Hello, world!"), vec!["hello", ",", "world", "!"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("A a"), vec!["a", "a"]);
        assert_eq!(tokenize("  I'd\tgo...  "), vec!["i", "'", "d", "go", ".", ".", "."]);
    }

    #[test]
    fn response_document_frequency() {
        let c = corpus(&[("hi", "hello there", Some("how are you")), ("a b", "b c", None)]).unwrap();
        assert_eq!(c.n_responses(), 2);
        assert_eq!(c.response_doc_freq("b"), 1);
        assert_eq!(c.response_doc_freq("hello"), 1);
        // "b" appears in the second response only; queries do not count
        assert_eq!(c.response_doc_freq("a"), 0);
        assert!(c.samples()[1].next_utterance.is_none());
    }

    #[test]
    fn doc_freq_counts_each_response_once() {
        let c = corpus(&[("q", "b b", None), ("q", "b c", None)]).unwrap();
        assert_eq!(c.response_doc_freq("b"), 2);
        assert_eq!(c.response_doc_freq("c"), 1);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(
            parse_tsv("").map(|r| Corpus::from_records(r, Default::default())),
            Ok(Err(Error::EmptyCorpus))
        ));
        let c = corpus(&[("q", "", None), ("q", "ok", None)]).unwrap();
        assert_eq!(c.n_responses(), 1);
        assert_eq!(c.dropped(), 1);
        assert_eq!(c.samples()[0].id, 0);
    }

    #[test]
    fn unigram_probability_examples() {
        let c = corpus(&[("a", "a b", None)]).unwrap();
        assert!((c.unigram_probability("a") - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.unigram_probability("zzz"), 0.0);
        let single = corpus(&[("", "a", None)]).unwrap();
        assert_eq!(single.unigram_probability("a"), 1.0);
    }

    #[test]
    fn responses_only_probability() {
        let records = vec![RawRecord {
            query: "x x".into(),
            response: "a b".into(),
            ..Default::default()
        }];
        let c = Corpus::from_records(records, ProbabilitySource::ResponsesOnly).unwrap();
        assert_eq!(c.unigram_probability("x"), 0.0);
        assert_eq!(c.unigram_probability("a"), 0.5);
    }

    #[test]
    fn tsv_errors_carry_line_numbers() {
        let err = parse_tsv("a\tb\nonly one field\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_tsv("a\tb\tc\td\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn jsonl_conversation_fills_next_utterance() {
        let text = r#"{"query":"hi","response":"hello","conv_id":1}
{"query":"x","response":"unrelated","conv_id":2}
{"query":"hello","response":"how are you","conv_id":1}
{"query":"y","response":"explicit","next_utterance":"given","conv_id":1}
"#;
        let c = Corpus::from_records(parse_jsonl(text).unwrap(), Default::default()).unwrap();
        let s = c.samples();
        assert_eq!(
            s[0].next_utterance.as_deref(),
            Some(&["how".to_string(), "are".into(), "you".into()][..])
        );
        assert!(s[1].next_utterance.is_none());
        assert_eq!(s[2].next_utterance.as_ref().unwrap(), &vec!["explicit".to_string()]);
        assert_eq!(s[3].next_utterance.as_ref().unwrap(), &vec!["given".to_string()]);
    }

    #[test]
    fn jsonl_malformed_line() {
        let err = parse_jsonl("{\"query\":\"a\",\"response\":\"b\"}\n{\"query\":1}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn idf_range_over_response_vocabulary() {
        let c = corpus(&[("q", "a b", None), ("q", "a c", None)]).unwrap();
        let (lo, hi) = c.idf_range();
        assert_eq!(lo, 0.0);
        assert!((hi - 2f64.ln()).abs() < 1e-15);
    }
}
