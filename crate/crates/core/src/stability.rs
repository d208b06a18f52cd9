//! Boundary stability scoring.
//!
//! A keyword-detected boundary is only trustworthy if the model actually
//! tends to produce behavior there: resampling continuations from the
//! boundary prefix and counting how many contain a behavior paragraph gives
//! the empirical trigger probability ŝ(b). This module scores boundaries
//! from continuation records, summarizes the score distribution, filters by
//! threshold, and computes the per-problem soft weights used by the
//! soft-weighted vector builder.
//!
//! Continuation sampling itself is delegated to an external harness (or the
//! synthetic oracle in tests); the toolkit only consumes its output.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::KeywordLexicon;
use crate::segment::split_paragraph_spans;
use crate::types::BoundaryRecord;

/// Default sampling settings the reference harness uses; recorded here so
/// reports can flag records produced under different settings.
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TOP_P: f64 = 0.95;
pub const DEFAULT_MAX_NEW_TOKENS: u32 = 128;
/// Default number of continuations per boundary.
pub const DEFAULT_NUM_SAMPLES: usize = 10;
/// Default hard-filtering threshold.
pub const DEFAULT_TAU: f64 = 0.8;

/// Continuations sampled from one boundary prefix, as produced by the
/// generation harness. Sampling settings are recorded verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContinuationRecord {
    pub boundary_id: String,
    pub samples: Vec<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
}

/// Survivor count and mean score at one threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdStat {
    pub tau: f64,
    pub count: usize,
    /// Mean ŝ over survivors; absent when nothing survives.
    pub mean: Option<f64>,
}

/// Distribution summary over all scored boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Continuations per boundary; uniform across the dataset.
    pub num_samples: u32,
    /// Lexicon fingerprint, so scores from different cue sets never mix.
    pub lexicon_hash: String,
    /// Paragraph delimiter the continuations were re-segmented with.
    pub delimiter: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    /// ŝ per boundary, keyed by boundary id (lexicographic order).
    pub scores: BTreeMap<String, f64>,
    /// Boundaries that had no continuation record; excluded from vectors
    /// but kept visible in diagnostics.
    pub unscored: Vec<String>,
    /// Mean ŝ over scored boundaries (0.0 when nothing is scored).
    pub mean: f64,
    /// Boundaries with ŝ exactly zero; not double-counted in `histogram`.
    pub zero_count: usize,
    /// Counts of nonzero scores in bins [i/10, (i+1)/10), 1.0 in the top bin.
    pub histogram: [usize; 10],
    /// Survivor count and mean for τ ∈ {0.0, 0.1, …, 0.9}.
    pub thresholds: Vec<ThresholdStat>,
}

impl StabilityReport {
    /// Fraction of scored boundaries with ŝ below `tau`.
    pub fn unstable_fraction(&self, tau: f64) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        let below = self
            .scores
            .values()
            .filter(|s| **s + GRID_EPS < tau)
            .count();
        below as f64 / self.scores.len() as f64
    }
}

/// Tolerance for comparing scores that live on the {k/M} grid.
const GRID_EPS: f64 = 1e-9;

/// Fraction of continuations containing at least one behavior-labeled
/// paragraph anywhere in the sample, after re-segmentation with the same
/// delimiter and lexicon used for full traces.
pub fn score_boundary(
    record: &ContinuationRecord,
    lexicon: &KeywordLexicon,
    delimiter: &Regex,
) -> Result<f64> {
    if record.samples.is_empty() {
        return Err(Error::EmptySet(format!(
            "continuation record {} has no samples",
            record.boundary_id
        )));
    }
    let hits = record
        .samples
        .iter()
        .filter(|s| {
            split_paragraph_spans(s, 0, delimiter)
                .iter()
                .any(|(a, b)| lexicon.classify(&s[*a..*b]).is_behavior())
        })
        .count();
    Ok(hits as f64 / record.samples.len() as f64)
}

/// Scores every boundary that has a continuation record and summarizes the
/// distribution. Records must pair one-to-one with known boundaries (a
/// duplicate or unknown id is an error) and must share a uniform sample
/// count and sampling settings, otherwise scores would not be comparable.
pub fn score_all(
    boundaries: &[BoundaryRecord],
    records: &[ContinuationRecord],
    lexicon: &KeywordLexicon,
    delimiter: &Regex,
) -> Result<StabilityReport> {
    let mut known = BTreeSet::new();
    for b in boundaries {
        if !known.insert(b.boundary_id.as_str()) {
            return Err(Error::DuplicateRecord(format!(
                "boundary {} listed twice",
                b.boundary_id
            )));
        }
    }

    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    let mut num_samples: Option<usize> = None;
    let mut meta: Option<(f64, f64, u32)> = None;
    for rec in records {
        if !known.contains(rec.boundary_id.as_str()) {
            return Err(Error::Ingest(format!(
                "continuation record for unknown boundary {}",
                rec.boundary_id
            )));
        }
        match num_samples {
            None => num_samples = Some(rec.samples.len()),
            Some(m) if m != rec.samples.len() => {
                return Err(Error::Ingest(format!(
                    "boundary {} has {} samples, expected {m} (sample count must be uniform)",
                    rec.boundary_id,
                    rec.samples.len()
                )))
            }
            _ => {}
        }
        let rec_meta = (rec.temperature, rec.top_p, rec.max_new_tokens);
        match meta {
            None => meta = Some(rec_meta),
            Some(m) if m != rec_meta => {
                return Err(Error::Ingest(format!(
                    "boundary {} was sampled under different settings than earlier records",
                    rec.boundary_id
                )))
            }
            _ => {}
        }
        let s = score_boundary(rec, lexicon, delimiter)?;
        if scores.insert(rec.boundary_id.clone(), s).is_some() {
            return Err(Error::DuplicateRecord(format!(
                "multiple continuation records for boundary {}",
                rec.boundary_id
            )));
        }
    }

    let unscored: Vec<String> = known
        .iter()
        .filter(|id| !scores.contains_key(**id))
        .map(|id| id.to_string())
        .collect();

    let mean = if scores.is_empty() {
        0.0
    } else {
        scores.values().sum::<f64>() / scores.len() as f64
    };

    let mut zero_count = 0usize;
    let mut histogram = [0usize; 10];
    for &s in scores.values() {
        if s == 0.0 {
            zero_count += 1;
        } else {
            let bin = ((s * 10.0).floor() as usize).min(9);
            histogram[bin] += 1;
        }
    }

    let thresholds = (0..10)
        .map(|i| {
            let tau = i as f64 / 10.0;
            let survivors: Vec<f64> = scores
                .values()
                .copied()
                .filter(|s| *s + GRID_EPS >= tau)
                .collect();
            ThresholdStat {
                tau,
                count: survivors.len(),
                mean: if survivors.is_empty() {
                    None
                } else {
                    Some(survivors.iter().sum::<f64>() / survivors.len() as f64)
                },
            }
        })
        .collect();

    let (temperature, top_p, max_new_tokens) =
        meta.unwrap_or((DEFAULT_TEMPERATURE, DEFAULT_TOP_P, DEFAULT_MAX_NEW_TOKENS));
    Ok(StabilityReport {
        num_samples: num_samples.unwrap_or(0) as u32,
        lexicon_hash: lexicon.hash(),
        delimiter: delimiter.as_str().to_string(),
        temperature,
        top_p,
        max_new_tokens,
        scores,
        unscored,
        mean,
        zero_count,
        histogram,
        thresholds,
    })
}

/// Keeps the ids whose score meets the threshold. Unscored boundaries are
/// dropped: a boundary nobody resampled must not sneak into a filtered
/// vector. τ = 0 therefore keeps exactly the scored boundaries.
pub fn filter_boundaries(
    ids: &[String],
    scores: &BTreeMap<String, f64>,
    tau: f64,
) -> Result<Vec<String>> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("tau must be in [0,1], got {tau}")));
    }
    Ok(ids
        .iter()
        .filter(|id| scores.get(*id).is_some_and(|s| *s + GRID_EPS >= tau))
        .cloned()
        .collect())
}

/// Normalizes one problem's scores into weights summing to 1. A problem
/// whose boundaries all score zero carries no usable signal and is dropped
/// by the caller (error here).
pub fn soft_weights(
    ids: &[String],
    scores: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>> {
    let mut total = 0.0;
    let mut pairs = Vec::with_capacity(ids.len());
    for id in ids {
        let s = *scores.get(id).ok_or_else(|| {
            Error::Ingest(format!("no stability score for boundary {id}"))
        })?;
        total += s;
        pairs.push((id.clone(), s));
    }
    if total <= 0.0 {
        return Err(Error::EmptySet(
            "all stability scores are zero; problem carries no signal".into(),
        ));
    }
    Ok(pairs.into_iter().map(|(id, s)| (id, s / total)).collect())
}

/// Worst-case binomial standard error of ŝ at p = 0.5: √(0.25/M).
/// With the default M = 10 this is ≈ 0.158, comfortably under 0.16.
pub fn max_standard_error(num_samples: u32) -> f64 {
    assert!(num_samples >= 1, "need at least one sample");
    (0.25 / f64::from(num_samples)).sqrt()
}

/// Signal amplification from hard filtering: mean score of survivors over
/// mean score of all scored boundaries (p̄_τ / p̄).
pub fn amplification_ratio(report: &StabilityReport, tau: f64) -> Result<f64> {
    if report.mean <= 0.0 {
        return Err(Error::EmptySet(
            "mean stability is zero; amplification undefined".into(),
        ));
    }
    let survivors: Vec<f64> = report
        .scores
        .values()
        .copied()
        .filter(|s| *s + GRID_EPS >= tau)
        .collect();
    if survivors.is_empty() {
        return Err(Error::EmptySet(format!(
            "no boundaries survive tau = {tau}"
        )));
    }
    let mean_tau = survivors.iter().sum::<f64>() / survivors.len() as f64;
    Ok(mean_tau / report.mean)
}
