//! Per-attribute curricula and progress-gated batch sampling.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{Attribute, AttributeScores};
use crate::error::{Error, Result};

/// Default initial competence `c0`.
pub const DEFAULT_C0: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    EasyFirst,
    Anti,
}

/// Which end of an attribute's score range is the easy one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// Low scores are easy.
    Ascending,
    /// High scores are easy.
    Descending,
}

impl Polarity {
    /// Generic (low-NIDF) responses are easy; repetitive, relevant, continuous and
    /// confidently modelled responses are easy.
    pub fn default_for(attribute: Attribute) -> Polarity {
        match attribute {
            Attribute::Specificity => Polarity::Ascending,
            Attribute::Repetitiveness
            | Attribute::QueryRelatedness
            | Attribute::Continuity
            | Attribute::ModelConfidence => Polarity::Descending,
        }
    }
}

/// Pacing parameters of the progressing function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressConfig {
    pub c0: f64,
    /// Curriculum duration in steps.
    pub duration: u64,
}

impl ProgressConfig {
    pub fn new(c0: f64, duration: u64) -> Result<Self> {
        if !(c0 > 0.0 && c0 <= 1.0) {
            return Err(Error::Config(format!("c0 must lie in (0, 1], got {c0}")));
        }
        if duration == 0 {
            return Err(Error::Config("curriculum duration T must be at least 1".into()));
        }
        Ok(Self { c0, duration })
    }
}

/// `min(1, sqrt(t (1 - c0²) / T + c0²))`.
pub fn progressing_function(cfg: &ProgressConfig, t: u64) -> f64 {
    if t >= cfg.duration {
        // the closed form can land one ulp short of 1 at t = T
        return 1.0;
    }
    let c0_sq = cfg.c0 * cfg.c0;
    let v = (t as f64 * (1.0 - c0_sq) / cfg.duration as f64 + c0_sq).sqrt();
    v.min(1.0)
}

/// Number of leading curriculum entries available at competence `f` over `n` samples.
pub fn prefix_len(f: f64, n: usize) -> usize {
    ((f * n as f64).ceil() as usize).clamp(1, n.max(1))
}

/// One attribute's easy-to-hard ordering plus its learning progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curriculum {
    pub attribute: Attribute,
    pub direction: Direction,
    pub order: Vec<usize>,
    /// Batches drawn from this curriculum so far.
    pub rho: u64,
}

/// Sort eligible samples by `attribute` with the default polarity.
pub fn build_curriculum(scores: &[AttributeScores], attribute: Attribute, direction: Direction) -> Result<Curriculum> {
    build_curriculum_with(scores, attribute, direction, Polarity::default_for(attribute))
}

/// Stable sort with sample-id tiebreak; `Anti` reverses the easy-first order.
pub fn build_curriculum_with(
    scores: &[AttributeScores],
    attribute: Attribute,
    direction: Direction,
    polarity: Polarity,
) -> Result<Curriculum> {
    let mut keyed: Vec<(f64, usize)> = scores
        .iter()
        .filter_map(|s| s.get(attribute).map(|v| (v, s.id)))
        .collect();
    if keyed.is_empty() {
        return Err(Error::invalid(format!(
            "no samples eligible for the {attribute} curriculum"
        )));
    }
    keyed.sort_by(|a, b| {
        let by_score = match polarity {
            Polarity::Ascending => a.0.total_cmp(&b.0),
            Polarity::Descending => b.0.total_cmp(&a.0),
        };
        by_score.then(a.1.cmp(&b.1))
    });
    let mut order: Vec<usize> = keyed.into_iter().map(|(_, id)| id).collect();
    if direction == Direction::Anti {
        order.reverse();
    }
    Ok(Curriculum {
        attribute,
        direction,
        order,
        rho: 0,
    })
}

impl Curriculum {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Competence at the current progress.
    pub fn competence(&self, cfg: &ProgressConfig) -> f64 {
        progressing_function(cfg, self.rho)
    }

    /// Size of the sampling pool at the current progress.
    pub fn available(&self, cfg: &ProgressConfig) -> usize {
        prefix_len(self.competence(cfg), self.len())
    }

    /// Draw `batch_size` ids uniformly with replacement from the available prefix,
    /// then advance progress by one batch.
    pub fn sample_batch<R: Rng + ?Sized>(
        &mut self,
        cfg: &ProgressConfig,
        batch_size: usize,
        rng: &mut R,
    ) -> Vec<usize> {
        let pool = self.available(cfg);
        let batch = (0..batch_size).map(|_| self.order[rng.random_range(0..pool)]).collect();
        self.rho += 1;
        batch
    }
}

/// One JSON record per curriculum: attribute, direction and full ordering.
pub fn write_curricula_jsonl<W: Write>(curricula: &[Curriculum], mut writer: W) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        attribute: Attribute,
        direction: Direction,
        order: &'a [usize],
    }
    for c in curricula {
        let rec = Record {
            attribute: c.attribute,
            direction: c.direction,
            order: &c.order,
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<curricula>", e))?;
    }
    Ok(())
}
