//! The learner contract.
//!
//! The scheduler only needs two things from a dialogue model: train on a batch
//! of sample ids, and produce validation metrics. [`SimulatedLearner`] is a
//! deterministic stand-in whose skill grows faster on easier batches;
//! [`ExternalLearner`] talks to a child process over a line-delimited JSON
//! protocol on its standard input and output.
//!
//! Every request carries a sequence number that the reply must echo:
//!
//! ```text
//! > {"seq":1,"kind":"init","config":{"seed":7}}
//! < {"seq":1,"kind":"ready"}
//! > {"seq":2,"kind":"train_batch","samples":[{"id":0,"query":["hi"],"response":["hello"]}]}
//! < {"seq":2,"kind":"trained","loss":2.31,"margin":0.12}
//! > {"seq":3,"kind":"generate","queries":[["hi"]]}
//! < {"seq":3,"kind":"generated","responses":[["hello"]]}
//! > {"seq":4,"kind":"shutdown"}
//! < {"seq":4,"kind":"bye"}
//! ```
//!
//! A learner that cannot handle a request answers `{"seq":N,"kind":"error","message":"..."}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::attributes::{Attribute, AttributeScores};
use crate::corpus::Corpus;
use crate::curriculum::{build_curriculum, Direction};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricVector, METRIC_COUNT};
use crate::scheduler::NUM_ACTIONS;

/// Outcome of one training batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub loss: f64,
    /// Mean top-1 minus top-2 predicted probability; 0 when unknown.
    pub margin: f64,
}

pub trait Learner {
    fn train_batch(&mut self, ids: &[usize]) -> Result<BatchStats>;

    fn validate(&mut self) -> Result<MetricVector>;

    /// Noise-free quality summary in [0, 1], for learners that have one.
    fn score(&self) -> Option<f64> {
        None
    }
}

// ---------------------------------------------------------------------------
// Wire protocol
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSample {
    pub id: usize,
    pub query: Vec<String>,
    pub response: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestBody {
    Init { config: serde_json::Value },
    TrainBatch { samples: Vec<WireSample> },
    Generate { queries: Vec<Vec<String>> },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub seq: u64,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReplyBody {
    Ready,
    Trained { loss: f64, margin: f64 },
    Generated { responses: Vec<Vec<String>> },
    Bye,
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub seq: u64,
    #[serde(flatten)]
    pub body: ReplyBody,
}

impl Request {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    pub fn parse(line: &str) -> std::result::Result<Request, String> {
        serde_json::from_str(line).map_err(|e| e.to_string())
    }
}

impl Reply {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("reply serializes")
    }

    /// Parse one reply line and check the payload contract.
    pub fn parse(line: &str) -> std::result::Result<Reply, String> {
        let reply: Reply = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if let ReplyBody::Trained { loss, margin } = reply.body {
            if !loss.is_finite() || loss < 0.0 {
                return Err(format!("loss {loss} is not a finite non-negative number"));
            }
            if !(0.0..=1.0).contains(&margin) {
                return Err(format!("margin {margin} outside [0, 1]"));
            }
        }
        Ok(reply)
    }
}

/// A child process speaking the learner protocol.
pub struct LearnerProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_seq: u64,
    timeout: Duration,
}

impl LearnerProcess {
    /// Launch `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::Config("empty learner command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::io(program, e))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            next_seq: 1,
            timeout,
        })
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn exit_status(&mut self) -> String {
        let deadline = Instant::now() + Duration::from_secs(1);
        loop {
            match self.child.try_wait() {
                Ok(Some(status)) => return status.to_string(),
                Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                Ok(None) => return "closed its output".into(),
                Err(e) => return e.to_string(),
            }
        }
    }

    /// Send one request and wait for its reply.
    pub fn roundtrip(&mut self, body: RequestBody) -> Result<ReplyBody> {
        let seq = self.next_seq;
        self.next_seq += 1;
        let line = Request { seq, body }.to_line();
        let written = match self.stdin.as_mut() {
            Some(stdin) => writeln!(stdin, "{line}").and_then(|_| stdin.flush()),
            None => Err(std::io::Error::from(std::io::ErrorKind::BrokenPipe)),
        };
        if written.is_err() {
            let status = self.exit_status();
            return Err(Error::LearnerExited { seq, status });
        }
        let reply_line = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => l,
            Ok(Err(e)) => {
                return Err(Error::MalformedReply {
                    seq,
                    message: e.to_string(),
                })
            }
            Err(RecvTimeoutError::Timeout) => return Err(Error::LearnerTimeout { seq }),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.exit_status();
                return Err(Error::LearnerExited { seq, status });
            }
        };
        let reply = Reply::parse(&reply_line).map_err(|message| Error::MalformedReply { seq, message })?;
        if reply.seq != seq {
            return Err(Error::MalformedReply {
                seq,
                message: format!("reply carries sequence number {}", reply.seq),
            });
        }
        match reply.body {
            ReplyBody::Error { message } => Err(Error::LearnerFailure { seq, message }),
            body => Ok(body),
        }
    }

    /// Send `shutdown`, close stdin and wait for the process to exit.
    pub fn shutdown(mut self) -> Result<ExitStatus> {
        let seq = self.next_seq;
        match self.roundtrip(RequestBody::Shutdown)? {
            ReplyBody::Bye => {}
            other => {
                return Err(Error::MalformedReply {
                    seq,
                    message: format!("expected bye, got {other:?}"),
                })
            }
        }
        drop(self.stdin.take());
        self.child.wait().map_err(|e| Error::io("<learner>", e))
    }

    /// Kill the child without the shutdown handshake.
    pub fn kill(&mut self) -> Result<()> {
        self.child.kill().map_err(|e| Error::io("<learner>", e))
    }
}

impl Drop for LearnerProcess {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Adapts a [`LearnerProcess`] to the [`Learner`] trait: ids become wire
/// samples, validation generates responses for held-out queries and scores
/// them locally.
pub struct ExternalLearner<'a> {
    process: LearnerProcess,
    corpus: &'a Corpus,
    table: &'a EmbeddingTable,
    valid_queries: Vec<Vec<String>>,
    valid_references: Vec<Vec<String>>,
}

impl<'a> ExternalLearner<'a> {
    pub fn new(
        mut process: LearnerProcess,
        config: serde_json::Value,
        corpus: &'a Corpus,
        table: &'a EmbeddingTable,
        validation: &Corpus,
    ) -> Result<Self> {
        let seq = process.next_seq;
        match process.roundtrip(RequestBody::Init { config })? {
            ReplyBody::Ready => {}
            other => {
                return Err(Error::MalformedReply {
                    seq,
                    message: format!("expected ready, got {other:?}"),
                })
            }
        }
        let (valid_queries, valid_references) = validation
            .samples()
            .iter()
            .filter(|s| !s.query.is_empty())
            .map(|s| (s.query.clone(), s.response.clone()))
            .unzip();
        Ok(Self {
            process,
            corpus,
            table,
            valid_queries,
            valid_references,
        })
    }

    pub fn into_process(self) -> LearnerProcess {
        self.process
    }
}

impl Learner for ExternalLearner<'_> {
    fn train_batch(&mut self, ids: &[usize]) -> Result<BatchStats> {
        let samples = ids
            .iter()
            .map(|&id| {
                let s = &self.corpus.samples()[id];
                WireSample {
                    id,
                    query: s.query.clone(),
                    response: s.response.clone(),
                }
            })
            .collect();
        let seq = self.process.next_seq;
        match self.process.roundtrip(RequestBody::TrainBatch { samples })? {
            ReplyBody::Trained { loss, margin } => Ok(BatchStats { loss, margin }),
            other => Err(Error::MalformedReply {
                seq,
                message: format!("expected trained, got {other:?}"),
            }),
        }
    }

    fn validate(&mut self) -> Result<MetricVector> {
        let seq = self.process.next_seq;
        let queries = self.valid_queries.clone();
        let responses = match self.process.roundtrip(RequestBody::Generate { queries })? {
            ReplyBody::Generated { responses } => responses,
            other => {
                return Err(Error::MalformedReply {
                    seq,
                    message: format!("expected generated, got {other:?}"),
                })
            }
        };
        if responses.len() != self.valid_queries.len() {
            return Err(Error::MalformedReply {
                seq,
                message: format!("{} responses for {} queries", responses.len(), self.valid_queries.len()),
            });
        }
        evaluate(
            self.table,
            self.corpus,
            &self.valid_queries,
            &responses,
            &self.valid_references,
        )
    }
}

// ---------------------------------------------------------------------------
// Simulated learner
// ---------------------------------------------------------------------------

/// Parameters of the synthetic learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Per-attribute skill learning rate.
    pub learning_rates: [f64; NUM_ACTIONS],
    /// Standard deviation of the additive loss noise.
    pub loss_noise: f64,
    /// Standard deviation of metric noise, as a fraction of each metric's range.
    pub metric_noise: f64,
    pub metric_floor: [f64; METRIC_COUNT],
    pub metric_ceiling: [f64; METRIC_COUNT],
    /// Row `j` mixes the five skills into metric `j`; rows are non-negative and sum to 1.
    pub metric_weights: [[f64; NUM_ACTIONS]; METRIC_COUNT],
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        // columns: specificity, repetitiveness, query relatedness, continuity, confidence
        let bleu = [0.2, 0.1, 0.3, 0.1, 0.3];
        let dist = [0.4, 0.4, 0.1, 0.05, 0.05];
        let intra = [0.2, 0.6, 0.1, 0.05, 0.05];
        let emb = [0.2, 0.1, 0.4, 0.2, 0.1];
        let coh = [0.1, 0.05, 0.6, 0.2, 0.05];
        let ent = [0.5, 0.3, 0.1, 0.05, 0.05];
        Self {
            learning_rates: [0.0016, 0.0008, 0.0012, 0.0006, 0.001],
            loss_noise: 0.01,
            metric_noise: 0.005,
            metric_floor: [0.0, 0.002, 0.01, 0.02, 0.8, 0.85, 0.9, 0.4, 0.3, 0.45, 0.4, 5.0, 8.0],
            metric_ceiling: [0.01, 0.02, 0.12, 0.3, 0.95, 0.99, 1.0, 0.7, 0.5, 0.7, 0.7, 7.5, 11.5],
            metric_weights: [
                bleu, dist, dist, dist, intra, intra, intra, emb, emb, emb, coh, ent, ent,
            ],
            seed: 0,
        }
    }
}

/// Per-sample easiness in [0, 1] for every attribute: 1 for the first sample of the
/// attribute's easy-first curriculum, 0 for the last. Samples outside a curriculum get 0.5.
pub fn easiness_from_scores(scores: &[AttributeScores]) -> Vec<[f64; NUM_ACTIONS]> {
    let mut out = vec![[0.5; NUM_ACTIONS]; scores.len()];
    let index: std::collections::HashMap<usize, usize> = scores.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    for attribute in Attribute::ALL {
        let Ok(c) = build_curriculum(scores, attribute, Direction::EasyFirst) else {
            continue;
        };
        let denom = (c.len().max(2) - 1) as f64;
        for (rank, id) in c.order.iter().enumerate() {
            out[index[id]][attribute.index()] = if c.len() == 1 { 1.0 } else { 1.0 - rank as f64 / denom };
        }
    }
    out
}

/// Deterministic synthetic learner whose per-attribute skill grows with the
/// easiness of the batches it sees.
#[derive(Debug, Clone)]
pub struct SimulatedLearner {
    config: SimConfig,
    skill: [f64; NUM_ACTIONS],
    rng: ChaCha8Rng,
    easiness: Vec<[f64; NUM_ACTIONS]>,
}

impl SimulatedLearner {
    pub fn new(config: SimConfig, easiness: Vec<[f64; NUM_ACTIONS]>) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self {
            config,
            skill: [0.0; NUM_ACTIONS],
            rng,
            easiness,
        }
    }

    pub fn skill(&self) -> [f64; NUM_ACTIONS] {
        self.skill
    }

    pub fn set_skill(&mut self, skill: [f64; NUM_ACTIONS]) {
        self.skill = skill.map(|s| s.clamp(0.0, 1.0));
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn gaussian(&mut self, sd: f64) -> f64 {
        if sd <= 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sd).expect("positive sd").sample(&mut self.rng)
    }

    /// Train on a batch given as per-sample easiness vectors.
    ///
    /// Each skill moves by `lr · mean easiness · (1 − skill)`.
    pub fn sim_train_batch(&mut self, batch: &[[f64; NUM_ACTIONS]]) -> BatchStats {
        if !batch.is_empty() {
            for a in 0..NUM_ACTIONS {
                let mean = batch.iter().map(|e| e[a]).sum::<f64>() / batch.len() as f64;
                let gain = self.config.learning_rates[a] * mean.clamp(0.0, 1.0) * (1.0 - self.skill[a]);
                self.skill[a] = (self.skill[a] + gain).clamp(0.0, 1.0);
            }
        }
        let mean_skill = self.skill.iter().sum::<f64>() / NUM_ACTIONS as f64;
        let noise = self.gaussian(self.config.loss_noise);
        BatchStats {
            loss: (1.0 - mean_skill + noise).max(0.0),
            margin: mean_skill.clamp(0.0, 1.0),
        }
    }

    /// Metric values without noise.
    pub fn expected_metrics(&self) -> MetricVector {
        let mut v = [0.0; METRIC_COUNT];
        for (j, out) in v.iter_mut().enumerate() {
            let mix: f64 = self.config.metric_weights[j]
                .iter()
                .zip(&self.skill)
                .map(|(w, s)| w * s)
                .sum();
            *out = self.config.metric_floor[j] + (self.config.metric_ceiling[j] - self.config.metric_floor[j]) * mix;
        }
        MetricVector::from_array(v)
    }

    pub fn sim_validate(&mut self) -> MetricVector {
        let mut v = self.expected_metrics().to_array();
        for (j, out) in v.iter_mut().enumerate() {
            let range = self.config.metric_ceiling[j] - self.config.metric_floor[j];
            *out += range * self.gaussian(self.config.metric_noise);
        }
        MetricVector::from_array(v)
    }

    /// Mean normalized expected metric, in [0, 1].
    pub fn quality(&self) -> f64 {
        let m = self.expected_metrics().to_array();
        (0..METRIC_COUNT)
            .map(|j| {
                let range = self.config.metric_ceiling[j] - self.config.metric_floor[j];
                (m[j] - self.config.metric_floor[j]) / range
            })
            .sum::<f64>()
            / METRIC_COUNT as f64
    }
}

impl Learner for SimulatedLearner {
    fn train_batch(&mut self, ids: &[usize]) -> Result<BatchStats> {
        let batch = ids
            .iter()
            .map(|&id| {
                self.easiness
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("sample id {id} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.sim_train_batch(&batch))
    }

    fn validate(&mut self) -> Result<MetricVector> {
        Ok(self.sim_validate())
    }

    fn score(&self) -> Option<f64> {
        Some(self.quality())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_learner() {
        let cfg = SimConfig {
            learning_rates: [0.0; 5],
            ..Default::default()
        };
        let mut sim = SimulatedLearner::new(cfg, vec![[1.0; 5]; 4]);
        let losses: Vec<f64> = (0..50).map(|_| sim.train_batch(&[0, 1, 2, 3]).unwrap().loss).collect();
        assert_eq!(sim.skill(), [0.0; 5]);
        for l in losses {
            assert!((l - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let run = || {
            let mut sim = SimulatedLearner::new(
                SimConfig {
                    seed: 9,
                    ..Default::default()
                },
                vec![[0.7; 5]; 3],
            );
            (0..100)
                .map(|i| sim.train_batch(&[i % 3]).unwrap().loss)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn metric_boundaries() {
        let cfg = SimConfig {
            metric_noise: 0.0,
            ..Default::default()
        };
        let mut sim = SimulatedLearner::new(cfg.clone(), vec![]);
        assert_eq!(sim.validate().unwrap().to_array(), cfg.metric_floor);
        sim.set_skill([1.0; 5]);
        let top = sim.validate().unwrap().to_array();
        for (got, want) in top.iter().zip(&cfg.metric_ceiling) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((sim.quality() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_monotone_in_skill() {
        let cfg = SimConfig {
            metric_noise: 0.0,
            ..Default::default()
        };
        let mut sim = SimulatedLearner::new(cfg, vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        use rand::Rng;
        for _ in 0..100 {
            let base: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>() * 0.9);
            sim.set_skill(base);
            let before = sim.expected_metrics().to_array();
            for a in 0..5 {
                let mut raised = base;
                raised[a] += 0.1;
                sim.set_skill(raised);
                let after = sim.expected_metrics().to_array();
                for (x, y) in before.iter().zip(&after) {
                    assert!(y >= x);
                }
            }
        }
    }

    #[test]
    fn weights_rows_sum_to_one() {
        for row in SimConfig::default().metric_weights {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn easiness_follows_curriculum_rank() {
        let scores: Vec<AttributeScores> = (0..5)
            .map(|id| AttributeScores {
                id,
                specificity: id as f64,
                repetitiveness: id as f64,
                query_relatedness: id as f64,
                continuity: (id < 3).then_some(id as f64),
                model_confidence: id as f64,
            })
            .collect();
        let e = easiness_from_scores(&scores);
        // specificity ascending: id 0 easiest
        assert_eq!(e[0][0], 1.0);
        assert_eq!(e[4][0], 0.0);
        // repetitiveness descending: id 4 easiest
        assert_eq!(e[4][1], 1.0);
        assert_eq!(e[1][1], 0.25);
        // continuity only over ids 0..3
        assert_eq!(e[2][3], 1.0);
        assert_eq!(e[0][3], 0.0);
        assert_eq!(e[4][3], 0.5);
    }

    #[test]
    fn reply_contract() {
        assert!(Reply::parse(r#"{"seq":1,"kind":"trained","loss":0.5,"margin":0.2}"#).is_ok());
        assert!(Reply::parse(r#"{"seq":1,"kind":"trained","loss":-1,"margin":0.2}"#).is_err());
        assert!(Reply::parse(r#"{"seq":1,"kind":"trained","loss":1,"margin":1.5}"#).is_err());
        assert!(Reply::parse(r#"{"seq":1,"kind":"mystery"}"#).is_err());
        assert!(Reply::parse("not json").is_err());
        let r = Reply::parse(r#"{"seq":4,"kind":"bye"}"#).unwrap();
        assert_eq!(
            r,
            Reply {
                seq: 4,
                body: ReplyBody::Bye
            }
        );
    }

    #[test]
    fn request_wire_format() {
        let req = Request {
            seq: 3,
            body: RequestBody::Generate {
                queries: vec![vec!["hi".into()]],
            },
        };
        assert_eq!(req.to_line(), r#"{"seq":3,"kind":"generate","queries":[["hi"]]}"#);
        assert_eq!(Request::parse(&req.to_line()).unwrap(), req);
        assert_eq!(
            Request {
                seq: 9,
                body: RequestBody::Shutdown
            }
            .to_line(),
            r#"{"seq":9,"kind":"shutdown"}"#
        );
    }
}
