//! Corpus diagnostics: attribute distributions and pairwise Kendall τ-b.

use std::io::Write;

use serde::Serialize;

use crate::attributes::{Attribute, AttributeScores};
use crate::error::{Error, Result};

/// Kendall τ-b between two equally long samples in O(n log n).
///
/// Ties are handled with the τ-b correction. Errors when the lengths differ,
/// when fewer than two observations are given, when a value is not finite, or
/// when either sample is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("kendall tau needs at least 2 observations"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kendall tau on non-finite values"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    // pairs tied in x, and pairs tied in both
    let mut x_ties = 0u64;
    let mut joint_ties = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                joint_ties += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            x_ties += pairs(run_x);
            joint_ties += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    x_ties += pairs(run_x);
    joint_ties += pairs(run_xy);

    let mut ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
    let mut scratch = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut scratch);

    let mut y_ties = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            y_ties += pairs(run_y);
            run_y = 1;
        }
    }
    y_ties += pairs(run_y);

    let total = pairs(n as u64);
    if x_ties == total || y_ties == total {
        return Err(Error::invalid("kendall tau undefined for a constant sample"));
    }
    let numerator = total as i64 - x_ties as i64 - y_ties as i64 + joint_ties as i64 - 2 * swaps as i64;
    let denominator = ((total - x_ties) as f64 * (total - y_ties) as f64).sqrt();
    Ok(numerator as f64 / denominator)
}

fn pairs(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Stable merge sort returning the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], scratch: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut scratch[..mid]);
    swaps += merge_count(&mut v[mid..], &mut scratch[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            scratch[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            scratch[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    scratch[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    scratch[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&scratch[..n]);
    swaps
}

/// Attribute pairs in the row order of the published correlation table.
pub const ATTRIBUTE_PAIRS: [(Attribute, Attribute); 10] = [
    (Attribute::Specificity, Attribute::Repetitiveness),
    (Attribute::Specificity, Attribute::QueryRelatedness),
    (Attribute::Specificity, Attribute::ModelConfidence),
    (Attribute::Specificity, Attribute::Continuity),
    (Attribute::Repetitiveness, Attribute::QueryRelatedness),
    (Attribute::Repetitiveness, Attribute::ModelConfidence),
    (Attribute::Repetitiveness, Attribute::Continuity),
    (Attribute::QueryRelatedness, Attribute::ModelConfidence),
    (Attribute::QueryRelatedness, Attribute::Continuity),
    (Attribute::ModelConfidence, Attribute::Continuity),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCorrelation {
    pub first: Attribute,
    pub second: Attribute,
    /// Number of samples that carry both attributes.
    pub n: usize,
    /// `None` when τ is undefined (fewer than two samples or a constant attribute).
    pub tau: Option<f64>,
}

/// τ-b for every unordered attribute pair. Pairs involving continuity use only
/// samples that have a next utterance.
pub fn correlation_table(scores: &[AttributeScores]) -> Result<Vec<PairCorrelation>> {
    if scores.len() < 2 {
        return Err(Error::invalid("correlation table needs at least 2 samples"));
    }
    ATTRIBUTE_PAIRS
        .iter()
        .map(|&(first, second)| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = scores
                .iter()
                .filter_map(|s| Some((s.get(first)?, s.get(second)?)))
                .unzip();
            let n = xs.len();
            let tau = match kendall_tau(&xs, &ys) {
                Ok(t) => Some(t),
                Err(Error::InvalidInput(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(PairCorrelation { first, second, n, tau })
        })
        .collect()
}

/// Min-max rescale to [0, 1]. Errors on empty or constant input.
pub fn normalize_confidence_minmax(values: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    if values.is_empty() {
        return Err(Error::invalid("empty list"));
    }
    if hi <= lo {
        return Err(Error::invalid("constant list"));
    }
    Ok(values.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Box-and-whisker numbers for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub attribute: Attribute,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    /// Values outside `[q1 - 1.5 IQR, q3 + 1.5 IQR]`.
    pub outlier_count: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(attribute: Attribute, values: &[f64]) -> Result<DistributionSummary> {
    if values.is_empty() {
        return Err(Error::invalid(format!("no values for {attribute}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Ok(DistributionSummary {
        attribute,
        count: sorted.len(),
        min: sorted[0],
        q1,
        median: quantile(&sorted, 0.5),
        q3,
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        outlier_count: sorted.iter().filter(|&&v| v < lo || v > hi).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub attribute: Attribute,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width histogram over `[min, max]`; the last bin is closed.
pub fn histogram(attribute: Attribute, values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            attribute,
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            count,
        })
        .collect()
}

/// Distribution data for every attribute. Model confidence is min-max normalized
/// when it is not constant.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub summaries: Vec<DistributionSummary>,
    pub histograms: Vec<HistogramBin>,
    pub correlations: Vec<PairCorrelation>,
}

pub fn analyze(scores: &[AttributeScores], bins: usize) -> Result<AnalysisReport> {
    let correlations = correlation_table(scores)?;
    let mut summaries = Vec::new();
    let mut histograms = Vec::new();
    for attribute in Attribute::ALL {
        let mut values: Vec<f64> = scores.iter().filter_map(|s| s.get(attribute)).collect();
        if values.is_empty() {
            continue;
        }
        if attribute == Attribute::ModelConfidence {
            if let Ok(norm) = normalize_confidence_minmax(&values) {
                values = norm;
            }
        }
        summaries.push(summarize(attribute, &values)?);
        histograms.extend(histogram(attribute, &values, bins));
    }
    Ok(AnalysisReport {
        summaries,
        histograms,
        correlations,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(e.to_string())
}

pub fn write_summary_csv<W: Write>(summaries: &[DistributionSummary], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in summaries {
        w.serialize(s).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))
}

pub fn write_histogram_csv<W: Write>(bins: &[HistogramBin], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<histogram>", e))
}

/// One row per attribute pair: `first,second,n,tau` (empty tau when undefined).
pub fn write_correlation_csv<W: Write>(rows: &[PairCorrelation], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<correlations>", e))
}
