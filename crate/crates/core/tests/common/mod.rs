//! Brute-force reference implementations and fixtures shared by the integration tests.
//!
//! The oracles deliberately avoid the library's helpers: n-grams are collected
//! into plain vectors and compared by linear search, document frequencies are
//! recounted per query, and Kendall's tau counts every pair.

#![allow(dead_code)]

use std::collections::HashMap;

use dialogue_curricula::attributes::{Attribute, AttributeScores};
use dialogue_curricula::corpus::{Corpus, DialogueSample, ProbabilitySource};
use dialogue_curricula::curriculum::{build_curriculum, Direction};
use dialogue_curricula::embeddings::EmbeddingTable;
use dialogue_curricula::learner::{easiness_from_scores, SimConfig, SimulatedLearner};
use dialogue_curricula::scheduler::{train_loop, Mode, RunReport, TrainConfig};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Sentence = Vec<String>;

pub fn words(s: &str) -> Sentence {
    s.split_whitespace().map(str::to_string).collect()
}

// ---------------------------------------------------------------------------
// attribute oracles
// ---------------------------------------------------------------------------

fn doc_freq(responses: &[Sentence], w: &str) -> usize {
    responses.iter().filter(|r| r.iter().any(|t| t == w)).count()
}

pub fn oracle_specificity(responses: &[Sentence], response: &[String]) -> f64 {
    let n = responses.len() as f64;
    let mut idfs = Vec::new();
    for r in responses {
        for w in r {
            idfs.push((n / doc_freq(responses, w) as f64).ln());
        }
    }
    let lo = idfs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = idfs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in response {
        let df = doc_freq(responses, w);
        total += if df == 0 {
            1.0
        } else if hi <= lo {
            0.0
        } else {
            ((n / df as f64).ln() - lo) / (hi - lo)
        };
    }
    total / response.len() as f64
}

pub fn oracle_repetitiveness(response: &[String]) -> f64 {
    let mut repeats = 0;
    for i in 0..response.len() {
        if (0..i).any(|j| response[j] == response[i]) {
            repeats += 1;
        }
    }
    repeats as f64 / response.len() as f64
}

// ---------------------------------------------------------------------------
// metric oracles
// ---------------------------------------------------------------------------

fn all_ngrams(s: &[String], n: usize) -> Vec<Sentence> {
    let mut out = Vec::new();
    if n == 0 || s.len() < n {
        return out;
    }
    for i in 0..=s.len() - n {
        out.push(s[i..i + n].to_vec());
    }
    out
}

fn count_in(list: &[Sentence], g: &Sentence) -> usize {
    list.iter().filter(|x| *x == g).count()
}

fn unique(list: &[Sentence]) -> Vec<Sentence> {
    let mut u: Vec<Sentence> = Vec::new();
    for g in list {
        if !u.contains(g) {
            u.push(g.clone());
        }
    }
    u
}

pub fn oracle_distinct(responses: &[Sentence], n: usize) -> f64 {
    let grams: Vec<Sentence> = responses.iter().flat_map(|r| all_ngrams(r, n)).collect();
    unique(&grams).len() as f64 / grams.len() as f64
}

pub fn oracle_intra(responses: &[Sentence], n: usize) -> f64 {
    let mut ratios = Vec::new();
    for r in responses {
        let g = all_ngrams(r, n);
        if !g.is_empty() {
            ratios.push(unique(&g).len() as f64 / g.len() as f64);
        }
    }
    ratios.iter().sum::<f64>() / ratios.len() as f64
}

pub fn oracle_entropy(responses: &[Sentence], n: usize) -> f64 {
    let grams: Vec<Sentence> = responses.iter().flat_map(|r| all_ngrams(r, n)).collect();
    let total = grams.len() as f64;
    unique(&grams)
        .iter()
        .map(|g| {
            let p = count_in(&grams, g) as f64 / total;
            -p * p.ln()
        })
        .sum()
}

pub fn oracle_bleu(hyps: &[Sentence], refs: &[Sentence]) -> f64 {
    let longest = hyps.iter().map(|h| h.len()).max().unwrap_or(0);
    let orders = longest.min(4);
    if orders == 0 {
        return 0.0;
    }
    let mut sum_log = 0.0;
    for n in 1..=orders {
        let mut clipped = 0usize;
        let mut total = 0usize;
        for (h, r) in hyps.iter().zip(refs) {
            let hg = all_ngrams(h, n);
            let rg = all_ngrams(r, n);
            for g in unique(&hg) {
                clipped += count_in(&hg, &g).min(count_in(&rg, &g));
            }
            total += hg.len();
        }
        let p = if clipped == 0 { 1e-9 } else { clipped as f64 } / total as f64;
        sum_log += p.ln();
    }
    let c: usize = hyps.iter().map(|h| h.len()).sum();
    let r: usize = refs.iter().map(|x| x.len()).sum();
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (sum_log / orders as f64).exp()
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = (0..a.len()).map(|i| a[i] * b[i]).sum();
    let na: f64 = (0..a.len()).map(|i| a[i] * a[i]).sum::<f64>().sqrt();
    let nb: f64 = (0..b.len()).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub type Vectors = HashMap<String, Vec<f64>>;

fn known(vectors: &Vectors, s: &[String]) -> Vec<Vec<f64>> {
    s.iter().filter_map(|w| vectors.get(w).cloned()).collect()
}

pub fn oracle_average(vectors: &Vectors, dim: usize, h: &[String], r: &[String]) -> f64 {
    let (hv, rv) = (known(vectors, h), known(vectors, r));
    if hv.is_empty() || rv.is_empty() {
        return 0.0;
    }
    let mean = |vs: &[Vec<f64>]| -> Vec<f64> {
        (0..dim)
            .map(|d| vs.iter().map(|v| v[d]).sum::<f64>() / vs.len() as f64)
            .collect()
    };
    oracle_cosine(&mean(&hv), &mean(&rv))
}

pub fn oracle_extrema(vectors: &Vectors, dim: usize, h: &[String], r: &[String]) -> f64 {
    let (hv, rv) = (known(vectors, h), known(vectors, r));
    if hv.is_empty() || rv.is_empty() {
        return 0.0;
    }
    let ext = |vs: &[Vec<f64>]| -> Vec<f64> {
        (0..dim)
            .map(|d| {
                let mut best = vs[0][d];
                for v in vs {
                    if v[d].abs() > best.abs() || (v[d].abs() == best.abs() && v[d] > best) {
                        best = v[d];
                    }
                }
                best
            })
            .collect()
    };
    oracle_cosine(&ext(&hv), &ext(&rv))
}

pub fn oracle_greedy(vectors: &Vectors, h: &[String], r: &[String]) -> f64 {
    let (hv, rv) = (known(vectors, h), known(vectors, r));
    if hv.is_empty() || rv.is_empty() {
        return 0.0;
    }
    let one_way = |a: &[Vec<f64>], b: &[Vec<f64>]| -> f64 {
        a.iter()
            .map(|x| b.iter().map(|y| oracle_cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / a.len() as f64
    };
    (one_way(&hv, &rv) + one_way(&rv, &hv)) / 2.0
}

/// SIF cosine between two sentences, with word probabilities counted over the
/// queries and responses of `pairs`.
pub fn oracle_sif_cosine(
    vectors: &Vectors,
    dim: usize,
    pairs: &[(Sentence, Sentence)],
    a: &[String],
    b: &[String],
) -> f64 {
    let all: Vec<&String> = pairs.iter().flat_map(|(q, r)| q.iter().chain(r)).collect();
    let p = |w: &String| all.iter().filter(|x| **x == w).count() as f64 / all.len() as f64;
    let embed = |s: &[String]| -> Vec<f64> {
        let mut e = vec![0.0; dim];
        for w in s {
            if let Some(v) = vectors.get(w) {
                let weight = 0.001 / (0.001 + p(w));
                for d in 0..dim {
                    e[d] += weight * v[d];
                }
            }
        }
        e.iter().map(|x| x / s.len() as f64).collect()
    };
    oracle_cosine(&embed(a), &embed(b))
}

// ---------------------------------------------------------------------------
// Kendall tau-b by pair enumeration
// ---------------------------------------------------------------------------

pub fn oracle_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut concordant, mut discordant, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1;
            } else if dy == 0.0 {
                ty += 1;
            } else if (dx > 0.0) == (dy > 0.0) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let c_d = (concordant + discordant) as f64;
    (concordant - discordant) as f64 / ((c_d + tx as f64) * (c_d + ty as f64)).sqrt()
}

// ---------------------------------------------------------------------------
// random hand-sized instances
// ---------------------------------------------------------------------------

pub fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Sentence {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
}

/// Random vectors for roughly three quarters of a `vocab`-word vocabulary.
pub fn random_vectors(rng: &mut ChaCha8Rng, vocab: usize, dim: usize) -> Vectors {
    let mut vectors = Vectors::new();
    for i in 0..vocab {
        if rng.random_bool(0.75) {
            let v = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            vectors.insert(format!("w{i}"), v);
        }
    }
    vectors
}

pub fn table_from(vectors: &Vectors) -> EmbeddingTable {
    EmbeddingTable::from_vectors(vectors.clone()).expect("non-empty table")
}

pub fn corpus_from_pairs(pairs: &[(Sentence, Sentence)]) -> Corpus {
    let samples = pairs
        .iter()
        .enumerate()
        .map(|(id, (q, r))| DialogueSample {
            id,
            query: q.clone(),
            response: r.clone(),
            next_utterance: None,
            raw_query: q.join(" "),
            raw_response: r.join(" "),
        })
        .collect();
    Corpus::from_samples(samples, ProbabilitySource::QueriesAndResponses).expect("non-empty corpus")
}

// ---------------------------------------------------------------------------
// synthetic corpus with independent attribute drivers
// ---------------------------------------------------------------------------

pub struct IndependentCorpus {
    pub corpus: Corpus,
    /// External per-sample losses driving model confidence.
    pub losses: std::collections::BTreeMap<usize, f64>,
}

/// Every sample draws five independent latent fields:
///
/// * a rarity level choosing the word pool of the response (specificity),
/// * the number of distinct words among six response tokens (repetitiveness),
/// * `k_q` and `k_n`, how much unrelated filler is mixed into the query and the
///   next utterance around a copy of the response (relatedness, continuity),
/// * a training loss (confidence).
///
/// Filler comes from the response's own pool and scales with the squared token
/// counts of the response, so the expected cosine is `1/sqrt(1 + k)` whatever
/// the pool or the amount of repetition.
pub fn independent_corpus(n: usize, seed: u64) -> IndependentCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const LEVELS: usize = 8;
    const LEN: usize = 6;
    let pool_size = |level: usize| 64usize << level;
    let mut samples = Vec::with_capacity(n);
    let mut losses = std::collections::BTreeMap::new();
    for id in 0..n {
        let level = rng.random_range(0..LEVELS);
        let distinct = rng.random_range(2..=LEN);
        let k_q: f64 = rng.random_range(0.0..1.5);
        let k_n: f64 = rng.random_range(0.0..1.5);
        losses.insert(id, rng.random_range(0.5..6.0));

        let pool: Vec<usize> = (0..pool_size(level)).collect();
        let mut picked: Vec<usize> = pool.choose_multiple(&mut rng, distinct).cloned().collect();
        let mut counts = vec![1usize; distinct];
        for _ in distinct..LEN {
            counts[rng.random_range(0..distinct)] += 1;
        }
        let word = |i: usize| format!("l{level}w{i}");
        let mut response: Vec<String> = Vec::with_capacity(LEN);
        for (w, &c) in picked.iter().zip(&counts) {
            response.extend(std::iter::repeat_n(word(*w), c));
        }
        response.shuffle(&mut rng);
        let sq: usize = counts.iter().map(|c| c * c).sum();

        let rest: Vec<usize> = pool.iter().copied().filter(|w| !picked.contains(w)).collect();
        let filler = |k: f64, rng: &mut ChaCha8Rng| -> Vec<String> {
            let f = (k * sq as f64).round() as usize;
            rest.choose_multiple(rng, f).map(|&w| word(w)).collect()
        };
        let mut query = response.clone();
        query.extend(filler(k_q, &mut rng));
        query.shuffle(&mut rng);
        let mut next = response.clone();
        next.extend(filler(k_n, &mut rng));
        next.shuffle(&mut rng);
        picked.clear();

        samples.push(DialogueSample {
            id,
            raw_query: query.join(" "),
            raw_response: response.join(" "),
            query,
            response,
            next_utterance: Some(next),
        });
    }
    let corpus = Corpus::from_samples(samples, ProbabilitySource::QueriesAndResponses).expect("corpus");
    IndependentCorpus { corpus, losses }
}

// ---------------------------------------------------------------------------
// scheduler ablation harness
// ---------------------------------------------------------------------------

/// Score table with independent uniform attributes; one sample in five has no continuity.
pub fn synthetic_scores(n: usize, seed: u64) -> Vec<AttributeScores> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| AttributeScores {
            id,
            specificity: rng.random(),
            repetitiveness: rng.random(),
            query_relatedness: rng.random(),
            continuity: rng.random_bool(0.8).then(|| rng.random()),
            model_confidence: -rng.random_range(0.0..5.0),
        })
        .collect()
}

pub struct Bench {
    pub scores: Vec<AttributeScores>,
    pub easiness: Vec<[f64; 5]>,
}

impl Bench {
    pub fn new(n: usize, seed: u64) -> Self {
        let scores = synthetic_scores(n, seed);
        let easiness = easiness_from_scores(&scores);
        Self { scores, easiness }
    }

    pub fn run(&self, mode: Mode, seed: u64, steps: usize) -> RunReport {
        let curricula = Attribute::ALL
            .iter()
            .map(|&a| build_curriculum(&self.scores, a, Direction::EasyFirst).expect("curriculum"))
            .collect();
        let cfg = TrainConfig {
            mode,
            steps,
            seed,
            ..TrainConfig::default()
        };
        let sim_cfg = SimConfig {
            seed: dialogue_curricula::cli::sim_seed(seed),
            ..SimConfig::default()
        };
        let mut sim = SimulatedLearner::new(sim_cfg, self.easiness.clone());
        train_loop(&mut sim, curricula, self.scores.len(), &cfg).expect("training run")
    }

    /// Final noise-free score of one run.
    pub fn final_score(&self, mode: Mode, seed: u64, steps: usize) -> f64 {
        self.run(mode, seed, steps)
            .final_score
            .expect("simulated learner reports a score")
    }
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// One-sided exact sign test: P(X >= wins) for X ~ Binomial(trials, 1/2).
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=trials {
        p += binomial(trials, k) * 0.5f64.powi(trials as i32);
    }
    p
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
