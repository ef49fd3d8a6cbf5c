//! Automatic response-quality metrics and the validation deviation.
//!
//! Thirteen metrics make up a [`MetricVector`]: corpus BLEU-4, Dist-{1,2,3},
//! Intra-{1,2,3}, the embedding Average/Extrema/Greedy scores, Coherence and
//! Ent-{1,2}. All logarithms are natural.

use std::collections::{HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::attributes::sentence_similarity;
use crate::corpus::Corpus;
use crate::embeddings::{cosine, EmbeddingTable};
use crate::error::{Error, Result};

pub const METRIC_COUNT: usize = 13;

/// Floor applied to zero n-gram match counts in BLEU.
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub bleu: f64,
    pub dist1: f64,
    pub dist2: f64,
    pub dist3: f64,
    pub intra1: f64,
    pub intra2: f64,
    pub intra3: f64,
    pub emb_average: f64,
    pub emb_extrema: f64,
    pub emb_greedy: f64,
    pub coherence: f64,
    pub ent1: f64,
    pub ent2: f64,
}

impl MetricVector {
    pub const NAMES: [&'static str; METRIC_COUNT] = [
        "bleu",
        "dist1",
        "dist2",
        "dist3",
        "intra1",
        "intra2",
        "intra3",
        "emb_average",
        "emb_extrema",
        "emb_greedy",
        "coherence",
        "ent1",
        "ent2",
    ];

    pub fn to_array(&self) -> [f64; METRIC_COUNT] {
        [
            self.bleu,
            self.dist1,
            self.dist2,
            self.dist3,
            self.intra1,
            self.intra2,
            self.intra3,
            self.emb_average,
            self.emb_extrema,
            self.emb_greedy,
            self.coherence,
            self.ent1,
            self.ent2,
        ]
    }

    pub fn from_array(v: [f64; METRIC_COUNT]) -> Self {
        MetricVector {
            bleu: v[0],
            dist1: v[1],
            dist2: v[2],
            dist3: v[3],
            intra1: v[4],
            intra2: v[5],
            intra3: v[6],
            emb_average: v[7],
            emb_extrema: v[8],
            emb_greedy: v[9],
            coherence: v[10],
            ent1: v[11],
            ent2: v[12],
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = &[String]> {
    tokens.windows(n.max(1)).filter(move |_| n > 0)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for g in ngrams(tokens, n) {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU with brevity penalty.
///
/// Uses n-gram orders `1..=min(4, longest hypothesis)`; an order with zero
/// clipped matches contributes `BLEU_EPSILON` matches instead.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::DimensionMismatch {
            expected: hypotheses.len(),
            got: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(Error::invalid("bleu needs at least one pair"));
    }
    let max_order = hypotheses.iter().map(Vec::len).max().unwrap_or(0).min(4);
    if max_order == 0 {
        return Ok(0.0);
    }
    let mut log_precision = 0.0;
    for n in 1..=max_order {
        let (mut matches, mut total) = (0usize, 0usize);
        for (h, r) in hypotheses.iter().zip(references) {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                matches += c.min(rc.get(g).copied().unwrap_or(0));
                total += c;
            }
        }
        let matched = if matches == 0 { BLEU_EPSILON } else { matches as f64 };
        log_precision += (matched / total as f64).ln();
    }
    let hyp_len: usize = hypotheses.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    let brevity = if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(brevity * (log_precision / max_order as f64).exp())
}

/// Unique n-grams over total n-grams across all responses.
pub fn distinct_n(responses: &[Vec<String>], n: usize) -> Result<f64> {
    let mut unique = HashSet::new();
    let mut total = 0usize;
    for r in responses {
        for g in ngrams(r, n) {
            unique.insert(g);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid(format!("no {n}-grams in responses")));
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Mean per-response distinct-n; responses shorter than `n` are skipped.
pub fn intra_distinct_n(responses: &[Vec<String>], n: usize) -> Result<f64> {
    let ratios: Vec<f64> = responses
        .iter()
        .filter(|r| n > 0 && r.len() >= n)
        .map(|r| {
            let counts = ngram_counts(r, n);
            counts.len() as f64 / (r.len() + 1 - n) as f64
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::invalid(format!("every response is shorter than {n}")));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Entropy of the empirical n-gram distribution over all responses.
pub fn entropy_n(responses: &[Vec<String>], n: usize) -> Result<f64> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    let mut total = 0usize;
    for r in responses {
        for g in ngrams(r, n) {
            *counts.entry(g).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid(format!("no {n}-grams in responses")));
    }
    let mut values: Vec<usize> = counts.into_values().collect();
    values.sort_unstable();
    let h = values
        .into_iter()
        .map(|c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMetric {
    Average,
    Extrema,
    Greedy,
}

fn known_vectors(table: &EmbeddingTable, tokens: &[String]) -> Vec<Vec<f64>> {
    tokens
        .iter()
        .filter_map(|w| table.get(w).map(|v| v.into_owned()))
        .collect()
}

fn mean_vector(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    if !vectors.is_empty() {
        let n = vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

/// Per dimension, the value with the largest magnitude (sign kept).
fn extrema_vector(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let hi = vectors.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
            let lo = vectors.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
            if vectors.is_empty() {
                0.0
            } else if hi.abs() >= lo.abs() {
                hi
            } else {
                lo
            }
        })
        .collect()
}

fn greedy_direction(from: &[Vec<f64>], to: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for a in from {
        let mut best = f64::NEG_INFINITY;
        for b in to {
            best = best.max(cosine(a, b)?);
        }
        total += best;
    }
    Ok(total / from.len() as f64)
}

/// Embedding similarity between a hypothesis and a reference.
/// Out-of-vocabulary tokens are ignored; a side with no known tokens scores 0.
pub fn embedding_metric(
    kind: EmbeddingMetric,
    table: &EmbeddingTable,
    hypothesis: &[String],
    reference: &[String],
) -> Result<f64> {
    if hypothesis.is_empty() || reference.is_empty() {
        return Err(Error::invalid("embedding metric on an empty sentence"));
    }
    let h = known_vectors(table, hypothesis);
    let r = known_vectors(table, reference);
    if h.is_empty() || r.is_empty() {
        return Ok(0.0);
    }
    let dim = table.dim();
    match kind {
        EmbeddingMetric::Average => cosine(&mean_vector(&h, dim), &mean_vector(&r, dim)),
        EmbeddingMetric::Extrema => cosine(&extrema_vector(&h, dim), &extrema_vector(&r, dim)),
        EmbeddingMetric::Greedy => Ok((greedy_direction(&h, &r)? + greedy_direction(&r, &h)?) / 2.0),
    }
}

/// Cosine of the SIF embeddings of the query and the generated response.
pub fn coherence(table: &EmbeddingTable, corpus: &Corpus, query: &[String], hypothesis: &[String]) -> Result<f64> {
    sentence_similarity(table, corpus, query, hypothesis)
}

fn mean_over_pairs<F>(len: usize, mut f: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<Option<f64>>,
{
    let mut total = 0.0;
    for i in 0..len {
        total += f(i)?.unwrap_or(0.0);
    }
    Ok(total / len as f64)
}

/// Compute all thirteen metrics for one validation turn.
///
/// Pairs with an empty side contribute 0 to the per-pair metrics, and a
/// diversity metric with no n-grams of the requested order is 0.
pub fn evaluate(
    table: &EmbeddingTable,
    corpus: &Corpus,
    queries: &[Vec<String>],
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<MetricVector> {
    let n = hypotheses.len();
    if n == 0 || references.len() != n || queries.len() != n {
        return Err(Error::invalid(format!(
            "evaluation needs equally many queries, hypotheses and references (got {}, {n}, {})",
            queries.len(),
            references.len()
        )));
    }
    let or_zero = |r: Result<f64>| match r {
        Ok(v) => Ok(v),
        Err(Error::InvalidInput(_)) => Ok(0.0),
        Err(e) => Err(e),
    };
    let emb = |kind| {
        mean_over_pairs(n, |i| {
            if hypotheses[i].is_empty() || references[i].is_empty() {
                return Ok(None);
            }
            embedding_metric(kind, table, &hypotheses[i], &references[i]).map(Some)
        })
    };
    Ok(MetricVector {
        bleu: bleu(hypotheses, references)?,
        dist1: or_zero(distinct_n(hypotheses, 1))?,
        dist2: or_zero(distinct_n(hypotheses, 2))?,
        dist3: or_zero(distinct_n(hypotheses, 3))?,
        intra1: or_zero(intra_distinct_n(hypotheses, 1))?,
        intra2: or_zero(intra_distinct_n(hypotheses, 2))?,
        intra3: or_zero(intra_distinct_n(hypotheses, 3))?,
        emb_average: emb(EmbeddingMetric::Average)?,
        emb_extrema: emb(EmbeddingMetric::Extrema)?,
        emb_greedy: emb(EmbeddingMetric::Greedy)?,
        coherence: mean_over_pairs(n, |i| {
            if queries[i].is_empty() || hypotheses[i].is_empty() {
                return Ok(None);
            }
            coherence(table, corpus, &queries[i], &hypotheses[i]).map(Some)
        })?,
        ent1: or_zero(entropy_n(hypotheses, 1))?,
        ent2: or_zero(entropy_n(hypotheses, 2))?,
    })
}

/// Running per-metric minimum and maximum over the validation history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizationState {
    min: [f64; METRIC_COUNT],
    max: [f64; METRIC_COUNT],
    observations: usize,
}

impl Default for NormalizationState {
    fn default() -> Self {
        Self {
            min: [f64::INFINITY; METRIC_COUNT],
            max: [f64::NEG_INFINITY; METRIC_COUNT],
            observations: 0,
        }
    }
}

impl NormalizationState {
    pub fn observe(&mut self, m: &MetricVector) {
        for (i, v) in m.to_array().into_iter().enumerate() {
            self.min[i] = self.min[i].min(v);
            self.max[i] = self.max[i].max(v);
        }
        self.observations += 1;
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn bounds(&self, metric: usize) -> (f64, f64) {
        (self.min[metric], self.max[metric])
    }

    /// Rescale into [0, 1] against the running range; a degenerate range maps to 0.5.
    pub fn normalize(&self, m: &MetricVector) -> [f64; METRIC_COUNT] {
        let mut out = [0.5; METRIC_COUNT];
        for (i, v) in m.to_array().into_iter().enumerate() {
            let (lo, hi) = (self.min[i], self.max[i]);
            if hi > lo {
                out[i] = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
            }
        }
        out
    }
}

/// Sum over all metrics of the normalized change from `previous` to `current`.
pub fn deviation(current: &MetricVector, previous: &MetricVector, norm: &NormalizationState) -> f64 {
    let cur = norm.normalize(current);
    let prev = norm.normalize(previous);
    cur.iter().zip(&prev).map(|(c, p)| c - p).sum()
}

pub fn write_metrics_jsonl<W: Write>(rows: &[MetricVector], mut writer: W) -> Result<()> {
    for m in rows {
        let line = serde_json::to_string(m).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<metrics>", e))?;
    }
    Ok(())
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricVector], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for m in rows {
        w.serialize(m).map_err(|e| Error::invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ProbabilitySource, RawRecord};
    use crate::embeddings::parse_embeddings;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn ts(v: &[&str]) -> Vec<Vec<String>> {
        v.iter().map(|s| t(s)).collect()
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let h = ts(&["the cat sat on the mat", "hello there", "yes"]);
        assert!((bleu(&h, &h).unwrap() - 1.0).abs() < 1e-12);
        let r = ts(&["a b c d e f", "g h", "i"]);
        assert!(bleu(&h, &r).unwrap() <= 1e-6);
        assert!(bleu(&h, &r[..2]).is_err());
    }

    #[test]
    fn bleu_single_pair_by_hand() {
        // orders 1..3; p1 = 2/3, p2 = 1/2, p3 = eps/1; equal lengths so BP = 1
        let got = bleu(&ts(&["the cat sat"]), &ts(&["the cat ran"])).unwrap();
        let want = ((2.0f64 / 3.0).ln() + 0.5f64.ln() + BLEU_EPSILON.ln()) / 3.0;
        assert!((got - want.exp()).abs() < 1e-15);
    }

    #[test]
    fn bleu_brevity_penalty() {
        let got = bleu(&ts(&["a b"]), &ts(&["a b c d"])).unwrap();
        assert!((got - (1.0f64 - 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn distinct_examples() {
        assert_eq!(distinct_n(&ts(&["a b", "a c"]), 1).unwrap(), 0.75);
        assert_eq!(distinct_n(&ts(&["x", "x", "x", "x"]), 1).unwrap(), 0.25);
        assert_eq!(distinct_n(&ts(&["a b c d"]), 1).unwrap(), 1.0);
        assert!(distinct_n(&ts(&["a b"]), 3).is_err());
    }

    #[test]
    fn intra_examples() {
        assert_eq!(intra_distinct_n(&ts(&["a a", "a b"]), 1).unwrap(), 0.75);
        assert_eq!(intra_distinct_n(&ts(&["a b", "c d e"]), 1).unwrap(), 1.0);
        assert!(intra_distinct_n(&ts(&["a b", "c d"]), 3).is_err());
        // short responses are skipped
        assert_eq!(intra_distinct_n(&ts(&["a", "b b b"]), 2).unwrap(), 0.5);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_n(&ts(&["a a", "a"]), 1).unwrap(), 0.0);
        assert!((entropy_n(&ts(&["a b"]), 1).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((entropy_n(&ts(&["a b c d e"]), 1).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!(entropy_n(&ts(&["a"]), 2).is_err());
    }

    #[test]
    fn embedding_metrics_identity_and_orthogonal() {
        let table = parse_embeddings("x 1 0\ny 0 1\nz 0.5 0.5").unwrap();
        for kind in [
            EmbeddingMetric::Average,
            EmbeddingMetric::Extrema,
            EmbeddingMetric::Greedy,
        ] {
            assert!((embedding_metric(kind, &table, &t("x z"), &t("x z")).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(embedding_metric(kind, &table, &t("x"), &t("y")).unwrap(), 0.0);
            assert_eq!(embedding_metric(kind, &table, &t("oov"), &t("y")).unwrap(), 0.0);
        }
    }

    #[test]
    fn greedy_two_words_by_hand() {
        // hyp {x=(1,0), y=(0,1)}, ref {z=(1,1)}: every cosine is 1/√2 both ways
        let table = parse_embeddings("x 1 0\ny 0 1\nz 1 1").unwrap();
        let g = embedding_metric(EmbeddingMetric::Greedy, &table, &t("x y"), &t("z")).unwrap();
        assert!((g - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn extrema_keeps_sign() {
        let table = parse_embeddings("a -3 1\nb 2 1\nc -1 0\nd 1 0").unwrap();
        // extrema(a b) = (-3, 1); extrema(c) = (-1, 0)
        let e = embedding_metric(EmbeddingMetric::Extrema, &table, &t("a b"), &t("c")).unwrap();
        assert!((e - 3.0 / 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coherence_matches_relatedness() {
        let rec = RawRecord {
            query: "a b".into(),
            response: "c".into(),
            ..Default::default()
        };
        let c = Corpus::from_records(vec![rec], ProbabilitySource::default()).unwrap();
        let table = EmbeddingTable::hashed(8, 2).unwrap();
        let q = t("a b");
        assert!((coherence(&table, &c, &q, &q).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            coherence(&table, &c, &q, &t("c")).unwrap(),
            crate::attributes::query_relatedness(&table, &c, &q, &t("c")).unwrap()
        );
    }

    #[test]
    fn deviation_examples() {
        let mut norm = NormalizationState::default();
        let low = MetricVector::default();
        let mut high = low;
        high.dist2 = 0.4;
        norm.observe(&low);
        norm.observe(&high);
        assert_eq!(deviation(&high, &high, &norm), 0.0);
        assert_eq!(deviation(&high, &low, &norm), 1.0);
        assert_eq!(deviation(&low, &high, &norm), -1.0);
    }

    #[test]
    fn deviation_by_hand() {
        let mut norm = NormalizationState::default();
        let a = MetricVector::from_array([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 5.0, 8.0]);
        let b = MetricVector::from_array([0.3, 0.2, 0.1, 0.4, 0.6, 0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 6.0, 9.0]);
        let c = MetricVector::from_array([0.2, 0.2, 0.2, 0.4, 0.4, 0.6, 0.7, 0.8, 0.9, 0.1, 0.2, 7.0, 7.0]);
        for m in [&a, &b, &c] {
            norm.observe(m);
        }
        // ranges: bleu [0.1,0.3], dist2 [0.1,0.3], intra1 [0.4,0.6], ent1 [5,7], ent2 [7,9]; the rest
        // are constant and cancel. b relative to c:
        //   bleu (1 - 0.5) + dist2 (0 - 0.5) + intra1 (1 - 0) + ent1 (0.5 - 1) + ent2 (1 - 0) = 1.5
        assert!((deviation(&b, &c, &norm) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_range_is_half() {
        let mut norm = NormalizationState::default();
        let m = MetricVector::from_array([0.3; METRIC_COUNT]);
        norm.observe(&m);
        assert_eq!(norm.normalize(&m), [0.5; METRIC_COUNT]);
    }

    #[test]
    fn evaluate_identity() {
        let refs = ts(&["i am fine thanks", "see you soon"]);
        let queries = ts(&["how are you", "bye"]);
        let c = Corpus::from_records(
            vec![RawRecord {
                query: "how are you".into(),
                response: "i am fine thanks".into(),
                ..Default::default()
            }],
            ProbabilitySource::default(),
        )
        .unwrap();
        let table = EmbeddingTable::hashed(16, 4).unwrap();
        let m = evaluate(&table, &c, &queries, &refs, &refs).unwrap();
        assert!((m.bleu - 1.0).abs() < 1e-12);
        assert!((m.emb_average - 1.0).abs() < 1e-12);
        assert!((m.emb_extrema - 1.0).abs() < 1e-12);
        assert!((m.emb_greedy - 1.0).abs() < 1e-12);
        assert_eq!(m.dist1, 1.0);
        assert!(evaluate(&table, &c, &queries[..1], &refs, &refs).is_err());
    }
}
