//! Steering-vector construction.
//!
//! Every variant starts from per-problem contrasts d_k = mean(boundary rows)
//! − mean(execution rows) and differs only in which boundary rows enter and
//! whether the content subspace is projected out:
//!
//! * seal       — every keyword-detected boundary
//! * stable     — boundaries with stability ≥ τ
//! * soft       — boundaries weighted proportionally to their stability
//! * projected  — seal contrasts with the content component removed
//! * combined   — stability filter, then content projection
//! * prompt     — pooled difference of prompted vs plain question states
//! * control    — uniformly sampled boundary subsets of a matched size
//!
//! Problems are weighted equally in the outer mean regardless of boundary
//! count, problems missing either side of the contrast are excluded, and
//! aggregation runs in ascending question-id order so results never depend
//! on input file order.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::stability::{filter_boundaries, soft_weights, StabilityReport};
use crate::subspace::{project_out, ContentSubspace};
use crate::types::{HiddenStateSet, HiddenVector, Method, SteeringVector, TraceRecord};
use crate::vecmath;

/// Default layer at which hidden states are extracted and steering applied.
pub const DEFAULT_LAYER: u32 = 20;
/// Default steering coefficient recorded as metadata (never baked into the
/// unit-norm direction).
pub const DEFAULT_ALPHA: f64 = -100.0;
/// Default number of matched controls.
pub const DEFAULT_N_CONTROLS: usize = 5;

/// One problem's rows, grouped and id-tagged for building.
#[derive(Debug, Clone)]
pub struct ProblemStates {
    pub question_id: String,
    /// (boundary_id, hidden row) for each behavior paragraph.
    pub boundary_rows: Vec<(String, HiddenVector)>,
    pub execution_rows: Vec<HiddenVector>,
}

/// Assembled dataset: problems in ascending question-id order, uniform
/// dimension and layer.
#[derive(Debug, Clone)]
pub struct BuildDataset {
    pub layer: u32,
    pub dim: usize,
    pub problems: Vec<ProblemStates>,
    pub lexicon_hash: String,
}

impl BuildDataset {
    /// Pairs traces with their hidden-state sets. Every trace must have a
    /// matching state matrix with one row per paragraph; layer and dimension
    /// must agree dataset-wide.
    pub fn assemble(
        traces: &[TraceRecord],
        states: &[HiddenStateSet],
        lexicon_hash: &str,
    ) -> Result<BuildDataset> {
        let mut state_map: BTreeMap<&str, &HiddenStateSet> = BTreeMap::new();
        for s in states {
            if state_map.insert(s.question_id.as_str(), s).is_some() {
                return Err(Error::DuplicateRecord(format!(
                    "hidden states listed twice for {}",
                    s.question_id
                )));
            }
        }
        let mut trace_map: BTreeMap<&str, &TraceRecord> = BTreeMap::new();
        for t in traces {
            if trace_map.insert(t.question_id.as_str(), t).is_some() {
                return Err(Error::DuplicateRecord(format!(
                    "trace listed twice for {}",
                    t.question_id
                )));
            }
        }
        for qid in state_map.keys() {
            if !trace_map.contains_key(*qid) {
                return Err(Error::Ingest(format!(
                    "hidden states for unknown trace {qid}"
                )));
            }
        }

        let mut layer: Option<u32> = None;
        let mut dim: Option<usize> = None;
        let mut problems = Vec::with_capacity(trace_map.len());
        for (qid, trace) in &trace_map {
            let set = state_map.get(qid).ok_or_else(|| {
                Error::Ingest(format!("no hidden states for trace {qid}"))
            })?;
            set.validate()?;
            if set.states.rows != trace.paragraphs.len() {
                return Err(Error::Dimension {
                    expected: trace.paragraphs.len(),
                    got: set.states.rows,
                    context: format!("hidden rows vs paragraphs for {qid}"),
                });
            }
            match layer {
                None => layer = Some(set.layer),
                Some(l) if l != set.layer => {
                    return Err(Error::Ingest(format!(
                        "{qid} extracted at layer {}, expected {l}",
                        set.layer
                    )))
                }
                _ => {}
            }
            match dim {
                None => dim = Some(set.states.cols),
                Some(d) if d != set.states.cols => {
                    return Err(Error::Dimension {
                        expected: d,
                        got: set.states.cols,
                        context: format!("hidden dimension for {qid}"),
                    })
                }
                _ => {}
            }
            let mut boundary_rows = Vec::new();
            let mut execution_rows = Vec::new();
            for p in &trace.paragraphs {
                let row = set.states.row(p.index).to_vec();
                if p.label.is_behavior() {
                    boundary_rows.push((
                        crate::types::BoundaryRecord::make_id(qid, p.index),
                        row,
                    ));
                } else {
                    execution_rows.push(row);
                }
            }
            problems.push(ProblemStates {
                question_id: qid.to_string(),
                boundary_rows,
                execution_rows,
            });
        }
        if problems.is_empty() {
            return Err(Error::EmptySet("no problems to build from".into()));
        }
        Ok(BuildDataset {
            layer: layer.unwrap_or(DEFAULT_LAYER),
            dim: dim.unwrap_or(0),
            problems,
            lexicon_hash: lexicon_hash.to_string(),
        })
    }
}

/// Per-problem contrast: mean of boundary rows minus mean of execution rows.
pub fn per_example_vector<'a, B, E>(boundary_rows: B, execution_rows: E) -> Result<HiddenVector>
where
    B: IntoIterator<Item = &'a [f64]>,
    E: IntoIterator<Item = &'a [f64]>,
{
    let b_mean = vecmath::mean_rows(boundary_rows)
        .map_err(|_| Error::EmptySet("problem has no boundary rows".into()))?;
    let e_mean = vecmath::mean_rows(execution_rows)
        .map_err(|_| Error::EmptySet("problem has no execution rows".into()))?;
    if b_mean.len() != e_mean.len() {
        return Err(Error::Dimension {
            expected: b_mean.len(),
            got: e_mean.len(),
            context: "boundary vs execution rows".into(),
        });
    }
    Ok(vecmath::sub(&b_mean, &e_mean))
}

/// Weighted contrast: Σ w_b·h_b − mean(execution rows), weights summing to 1.
fn weighted_vector(
    rows: &[(String, HiddenVector)],
    weights: &BTreeMap<String, f64>,
    execution_rows: &[HiddenVector],
) -> Result<HiddenVector> {
    let e_mean = vecmath::mean_rows(execution_rows.iter().map(|r| r.as_slice()))
        .map_err(|_| Error::EmptySet("problem has no execution rows".into()))?;
    let mut acc = vec![0.0; e_mean.len()];
    for (id, row) in rows {
        if let Some(w) = weights.get(id) {
            vecmath::add_scaled(&mut acc, *w, row);
        }
    }
    Ok(vecmath::sub(&acc, &e_mean))
}

fn finish(
    method: Method,
    ds: &BuildDataset,
    tau: Option<f64>,
    k: Option<u32>,
    seed: Option<u64>,
    diffs: &[HiddenVector],
    n_boundaries: u32,
) -> Result<SteeringVector> {
    if diffs.is_empty() {
        return Err(Error::EmptySet(format!(
            "no problem survives exclusion for the {method} vector"
        )));
    }
    let mean = vecmath::mean_rows(diffs.iter().map(|d| d.as_slice()))?;
    let direction = vecmath::l2_normalize(&mean).map_err(|_| Error::Normalization {
        norm: vecmath::l2_norm(&mean),
        context: format!("{method} contrasts cancel to the zero vector"),
    })?;
    let v = SteeringVector {
        method,
        layer: ds.layer,
        tau,
        k,
        seed,
        n_problems: diffs.len() as u32,
        n_boundaries,
        lexicon_hash: ds.lexicon_hash.clone(),
        direction,
    };
    v.validate()?;
    Ok(v)
}

/// Baseline vector: every keyword boundary counts, stability is ignored.
/// Problems missing boundary or execution rows are excluded.
pub fn build_seal(ds: &BuildDataset) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.boundary_rows.is_empty() || p.execution_rows.is_empty() {
            continue;
        }
        diffs.push(per_example_vector(
            p.boundary_rows.iter().map(|(_, r)| r.as_slice()),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?);
        n_boundaries += p.boundary_rows.len() as u32;
    }
    finish(Method::Seal, ds, None, None, None, &diffs, n_boundaries)
}

/// Stability-filtered vector: per problem, only boundaries with ŝ ≥ τ
/// enter the contrast; problems with no survivor are dropped.
pub fn build_stable(
    ds: &BuildDataset,
    report: &StabilityReport,
    tau: f64,
) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.execution_rows.is_empty() {
            continue;
        }
        let ids: Vec<String> = p.boundary_rows.iter().map(|(id, _)| id.clone()).collect();
        let keep = filter_boundaries(&ids, &report.scores, tau)?;
        if keep.is_empty() {
            continue;
        }
        let rows: Vec<&[f64]> = p
            .boundary_rows
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(_, r)| r.as_slice())
            .collect();
        diffs.push(per_example_vector(
            rows.iter().copied(),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?);
        n_boundaries += keep.len() as u32;
    }
    finish(
        Method::Stable,
        ds,
        Some(tau),
        None,
        None,
        &diffs,
        n_boundaries,
    )
}

/// Soft-weighted vector: each scored boundary contributes proportionally to
/// its stability. Problems whose scores are all zero (or all unscored) are
/// dropped.
pub fn build_soft(ds: &BuildDataset, report: &StabilityReport) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.execution_rows.is_empty() {
            continue;
        }
        let scored: Vec<(String, HiddenVector)> = p
            .boundary_rows
            .iter()
            .filter(|(id, _)| report.scores.contains_key(id))
            .cloned()
            .collect();
        if scored.is_empty() {
            continue;
        }
        let ids: Vec<String> = scored.iter().map(|(id, _)| id.clone()).collect();
        let weights = match soft_weights(&ids, &report.scores) {
            Ok(w) => w,
            Err(Error::EmptySet(_)) => continue, // all-zero problem carries no signal
            Err(e) => return Err(e),
        };
        diffs.push(weighted_vector(&scored, &weights, &p.execution_rows)?);
        n_boundaries += weights.values().filter(|w| **w > 0.0).count() as u32;
    }
    finish(Method::Soft, ds, None, None, None, &diffs, n_boundaries)
}

/// Content-deflated vector: seal contrasts with their component inside the
/// question-content subspace removed before averaging.
pub fn build_projected(ds: &BuildDataset, s: &ContentSubspace) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.boundary_rows.is_empty() || p.execution_rows.is_empty() {
            continue;
        }
        let d = per_example_vector(
            p.boundary_rows.iter().map(|(_, r)| r.as_slice()),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?;
        diffs.push(project_out(&d, s)?);
        n_boundaries += p.boundary_rows.len() as u32;
    }
    let mut v = finish(Method::Projected, ds, None, None, None, &diffs, n_boundaries)?;
    v.k = Some(s.rank() as u32);
    Ok(v)
}

/// Stability filter, then content projection, applied per difference.
pub fn build_combined(
    ds: &BuildDataset,
    report: &StabilityReport,
    tau: f64,
    s: &ContentSubspace,
) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.execution_rows.is_empty() {
            continue;
        }
        let ids: Vec<String> = p.boundary_rows.iter().map(|(id, _)| id.clone()).collect();
        let keep = filter_boundaries(&ids, &report.scores, tau)?;
        if keep.is_empty() {
            continue;
        }
        let rows: Vec<&[f64]> = p
            .boundary_rows
            .iter()
            .filter(|(id, _)| keep.contains(id))
            .map(|(_, r)| r.as_slice())
            .collect();
        let d = per_example_vector(
            rows.iter().copied(),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?;
        diffs.push(project_out(&d, s)?);
        n_boundaries += keep.len() as u32;
    }
    let mut v = finish(
        Method::Combined,
        ds,
        Some(tau),
        None,
        None,
        &diffs,
        n_boundaries,
    )?;
    v.k = Some(s.rank() as u32);
    Ok(v)
}

/// Same contrast as [`build_combined`] but with the projection applied to
/// every hidden row before differencing. Projection is linear, so the two
/// paths agree to floating-point tolerance; this variant exists to make
/// that equality directly testable.
pub fn build_combined_per_state(
    ds: &BuildDataset,
    report: &StabilityReport,
    tau: f64,
    s: &ContentSubspace,
) -> Result<SteeringVector> {
    let mut diffs = Vec::new();
    let mut n_boundaries = 0u32;
    for p in &ds.problems {
        if p.execution_rows.is_empty() {
            continue;
        }
        let ids: Vec<String> = p.boundary_rows.iter().map(|(id, _)| id.clone()).collect();
        let keep = filter_boundaries(&ids, &report.scores, tau)?;
        if keep.is_empty() {
            continue;
        }
        let mut b_proj = Vec::new();
        for (id, row) in &p.boundary_rows {
            if keep.contains(id) {
                b_proj.push(project_out(row, s)?);
            }
        }
        let mut e_proj = Vec::new();
        for row in &p.execution_rows {
            e_proj.push(project_out(row, s)?);
        }
        diffs.push(per_example_vector(
            b_proj.iter().map(|r| r.as_slice()),
            e_proj.iter().map(|r| r.as_slice()),
        )?);
        n_boundaries += keep.len() as u32;
    }
    let mut v = finish(
        Method::Combined,
        ds,
        Some(tau),
        None,
        None,
        &diffs,
        n_boundaries,
    )?;
    v.k = Some(s.rank() as u32);
    Ok(v)
}

/// Prompt-contrast baseline: for each question, pool the prompted and plain
/// question states and average the differences. Questions must pair exactly.
pub fn build_prompt_vector(
    prompted: &[(String, Vec<HiddenVector>)],
    plain: &[(String, Vec<HiddenVector>)],
    layer: u32,
    lexicon_hash: &str,
) -> Result<SteeringVector> {
    let plain_map: BTreeMap<&str, &Vec<HiddenVector>> = plain
        .iter()
        .map(|(qid, rows)| (qid.as_str(), rows))
        .collect();
    if plain_map.len() != plain.len() {
        return Err(Error::DuplicateRecord(
            "duplicate question in plain states".into(),
        ));
    }
    let prompted_map: BTreeMap<&str, &Vec<HiddenVector>> = prompted
        .iter()
        .map(|(qid, rows)| (qid.as_str(), rows))
        .collect();
    if prompted_map.len() != prompted.len() {
        return Err(Error::DuplicateRecord(
            "duplicate question in prompted states".into(),
        ));
    }
    for qid in prompted_map.keys() {
        if !plain_map.contains_key(qid) {
            return Err(Error::Pairing(format!("{qid} has no plain counterpart")));
        }
    }
    for qid in plain_map.keys() {
        if !prompted_map.contains_key(qid) {
            return Err(Error::Pairing(format!("{qid} has no prompted counterpart")));
        }
    }
    if prompted_map.is_empty() {
        return Err(Error::EmptySet("no question pairs".into()));
    }

    let mut diffs = Vec::new();
    for (qid, p_rows) in &prompted_map {
        let q_rows = plain_map[qid];
        let p_mean = vecmath::mean_rows(p_rows.iter().map(|r| r.as_slice()))?;
        let q_mean = vecmath::mean_rows(q_rows.iter().map(|r| r.as_slice()))?;
        if p_mean.len() != q_mean.len() {
            return Err(Error::Dimension {
                expected: q_mean.len(),
                got: p_mean.len(),
                context: format!("prompted vs plain rows for {qid}"),
            });
        }
        diffs.push(vecmath::sub(&p_mean, &q_mean));
    }
    let mean = vecmath::mean_rows(diffs.iter().map(|d| d.as_slice()))?;
    let direction = vecmath::l2_normalize(&mean).map_err(|_| Error::Normalization {
        norm: 0.0,
        context: "prompted and plain states are identical".into(),
    })?;
    Ok(SteeringVector {
        method: Method::Prompt,
        layer,
        tau: None,
        k: None,
        seed: None,
        n_problems: diffs.len() as u32,
        n_boundaries: 0,
        lexicon_hash: lexicon_hash.to_string(),
        direction,
    })
}

/// Matched controls: each control samples `count` boundaries uniformly
/// without replacement from the full keyword pool (stability scores are
/// deliberately never consulted) and builds the same per-problem contrast
/// from them. Returns each vector with the sorted manifest of sampled ids.
pub fn build_random_controls(
    ds: &BuildDataset,
    count: usize,
    n_controls: usize,
    seed: u64,
) -> Result<Vec<(SteeringVector, Vec<String>)>> {
    if n_controls < 1 {
        return Err(Error::Config("need at least one control".into()));
    }
    // Pool entries: (problem index, boundary index).
    let mut pool = Vec::new();
    for (pi, p) in ds.problems.iter().enumerate() {
        if p.execution_rows.is_empty() {
            continue;
        }
        for bi in 0..p.boundary_rows.len() {
            pool.push((pi, bi));
        }
    }
    if count > pool.len() {
        return Err(Error::Sampling(format!(
            "cannot sample {count} boundaries from a pool of {}",
            pool.len()
        )));
    }
    if count == 0 {
        return Err(Error::Sampling("control sample size is zero".into()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_controls);
    for _ in 0..n_controls {
        let picks = rand::seq::index::sample(&mut rng, pool.len(), count).into_vec();
        let mut per_problem: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for pick in picks {
            let (pi, bi) = pool[pick];
            per_problem.entry(pi).or_default().push(bi);
        }
        let mut diffs = Vec::new();
        let mut manifest = Vec::with_capacity(count);
        for (pi, bis) in &per_problem {
            let p = &ds.problems[*pi];
            let rows: Vec<&[f64]> = bis
                .iter()
                .map(|bi| p.boundary_rows[*bi].1.as_slice())
                .collect();
            manifest.extend(bis.iter().map(|bi| p.boundary_rows[*bi].0.clone()));
            diffs.push(per_example_vector(
                rows.iter().copied(),
                p.execution_rows.iter().map(|r| r.as_slice()),
            )?);
        }
        manifest.sort_unstable();
        let v = finish(
            Method::Control,
            ds,
            None,
            None,
            Some(seed),
            &diffs,
            count as u32,
        )?;
        out.push((v, manifest));
    }
    Ok(out)
}

/// Splits an assembled dataset into probe candidates: scored boundary rows
/// as positives (rows without a score are dropped) and execution rows as
/// negatives.
pub fn probe_rows(
    ds: &BuildDataset,
    report: &StabilityReport,
) -> (Vec<crate::probe::ProbeRow>, Vec<crate::probe::ProbeRow>) {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for p in &ds.problems {
        for (id, row) in &p.boundary_rows {
            if let Some(score) = report.scores.get(id) {
                positives.push(crate::probe::ProbeRow {
                    question_id: p.question_id.clone(),
                    features: row.clone(),
                    score: Some(*score),
                });
            }
        }
        for row in &p.execution_rows {
            negatives.push(crate::probe::ProbeRow {
                question_id: p.question_id.clone(),
                features: row.clone(),
                score: None,
            });
        }
    }
    (positives, negatives)
}

/// Applies the intervention h ← h + α·v. The direction must be unit norm
/// (α carries all magnitude) and dimensions must match.
pub fn apply_steering(h: &[f64], alpha: f64, v: &SteeringVector) -> Result<HiddenVector> {
    v.validate()?;
    if h.len() != v.direction.len() {
        return Err(Error::Dimension {
            expected: v.direction.len(),
            got: h.len(),
            context: "apply_steering input".into(),
        });
    }
    let mut out = h.to_vec();
    vecmath::add_scaled(&mut out, alpha, &v.direction);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Matrix;

    fn problem(
        qid: &str,
        boundary: &[(usize, Vec<f64>)],
        execution: &[Vec<f64>],
    ) -> ProblemStates {
        ProblemStates {
            question_id: qid.to_string(),
            boundary_rows: boundary
                .iter()
                .map(|(i, r)| (format!("{qid}#p{i}"), r.clone()))
                .collect(),
            execution_rows: execution.to_vec(),
        }
    }

    fn dataset(problems: Vec<ProblemStates>) -> BuildDataset {
        let dim = problems
            .iter()
            .flat_map(|p| p.boundary_rows.iter().map(|(_, r)| r.len()))
            .next()
            .unwrap_or(0);
        BuildDataset {
            layer: 20,
            dim,
            problems,
            lexicon_hash: "test".into(),
        }
    }

    /// Two hand-computed problems used across builder tests.
    ///
    /// Problem a: boundary rows (0,2,0) and (4,2,0), execution rows (1,0,0)
    /// and (0,0,2) → d_a = (2,2,0) − (0.5,0,1) = (1.5,2,−1).
    /// Problem b: boundary row (1,1,3), execution row (0,1,1) → d_b = (1,0,2).
    /// Mean = (1.25,1,0.5), norm = 1.6770509831248424.
    fn fixture_dataset() -> BuildDataset {
        dataset(vec![
            problem(
                "a",
                &[(1, vec![0.0, 2.0, 0.0]), (3, vec![4.0, 2.0, 0.0])],
                &[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 2.0]],
            ),
            problem(
                "b",
                &[(0, vec![1.0, 1.0, 3.0])],
                &[vec![0.0, 1.0, 1.0]],
            ),
        ])
    }

    fn full_report(scores: &[(&str, f64)]) -> StabilityReport {
        StabilityReport {
            num_samples: 10,
            lexicon_hash: "test".into(),
            delimiter: r"\n(?:[ \t\r]*\n)+".into(),
            temperature: 0.7,
            top_p: 0.95,
            max_new_tokens: 128,
            scores: scores
                .iter()
                .map(|(id, s)| (id.to_string(), *s))
                .collect(),
            unscored: vec![],
            mean: scores.iter().map(|(_, s)| s).sum::<f64>() / scores.len() as f64,
            zero_count: scores.iter().filter(|(_, s)| *s == 0.0).count(),
            histogram: [0; 10],
            thresholds: vec![],
        }
    }

    #[test]
    fn per_example_examples() {
        let b = [vec![1.0, 0.0], vec![0.0, 1.0]];
        let e = [vec![0.0, 0.0]];
        let d = per_example_vector(
            b.iter().map(|r| r.as_slice()),
            e.iter().map(|r| r.as_slice()),
        )
        .unwrap();
        assert_eq!(d, vec![0.5, 0.5]);

        let same = [vec![2.0, 3.0]];
        let z = per_example_vector(
            same.iter().map(|r| r.as_slice()),
            same.iter().map(|r| r.as_slice()),
        )
        .unwrap();
        assert_eq!(z, vec![0.0, 0.0]);

        assert!(per_example_vector(
            std::iter::empty::<&[f64]>(),
            e.iter().map(|r| r.as_slice())
        )
        .is_err());
    }

    #[test]
    fn seal_on_fixture_matches_hand_computation() {
        let v = build_seal(&fixture_dataset()).unwrap();
        let norm = 1.6770509831248424f64;
        let expected = [1.25 / norm, 1.0 / norm, 0.5 / norm];
        for i in 0..3 {
            assert!((v.direction[i] - expected[i]).abs() < 1e-15);
        }
        assert_eq!(v.n_problems, 2);
        assert_eq!(v.n_boundaries, 3);
        assert_eq!(v.method, Method::Seal);
    }

    #[test]
    fn seal_single_problem_normalizes() {
        let ds = dataset(vec![problem(
            "a",
            &[(0, vec![3.0, 4.0])],
            &[vec![0.0, 0.0]],
        )]);
        let v = build_seal(&ds).unwrap();
        assert!((v.direction[0] - 0.6).abs() < 1e-15);
        assert!((v.direction[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn seal_exact_cancellation_fails() {
        let ds = dataset(vec![
            problem("a", &[(0, vec![1.0, 0.0])], &[vec![0.0, 0.0]]),
            problem("b", &[(0, vec![-1.0, 0.0])], &[vec![0.0, 0.0]]),
        ]);
        assert!(matches!(build_seal(&ds), Err(Error::Normalization { .. })));
    }

    #[test]
    fn seal_excludes_one_sided_problems() {
        let ds = dataset(vec![
            problem("a", &[(0, vec![0.0, 2.0])], &[vec![0.0, 0.0]]),
            problem("b", &[], &[vec![5.0, 5.0]]),
            problem("c", &[(0, vec![9.0, 9.0])], &[]),
        ]);
        let v = build_seal(&ds).unwrap();
        assert_eq!(v.n_problems, 1);
        assert!((v.direction[1] - 1.0).abs() < 1e-15);

        let empty = dataset(vec![problem("a", &[], &[vec![1.0, 1.0]])]);
        assert!(matches!(build_seal(&empty), Err(Error::EmptySet(_))));
    }

    #[test]
    fn stable_tau_zero_equals_seal_when_fully_scored() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.3), ("a#p3", 0.9), ("b#p0", 0.6)]);
        let seal = build_seal(&ds).unwrap();
        let stable = build_stable(&ds, &report, 0.0).unwrap();
        let cos = vecmath::cosine(&seal.direction, &stable.direction).unwrap();
        assert!(cos >= 1.0 - 1e-9);
        assert_eq!(stable.n_boundaries, 3);
    }

    #[test]
    fn stable_filters_and_drops_problems() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.1), ("a#p3", 0.9), ("b#p0", 0.2)]);
        let v = build_stable(&ds, &report, 0.8).unwrap();
        // Only a#p3 survives: d = (4,2,0) − (0.5,0,1) = (3.5,2,−1).
        assert_eq!(v.n_problems, 1);
        assert_eq!(v.n_boundaries, 1);
        let expected = vecmath::l2_normalize(&[3.5, 2.0, -1.0]).unwrap();
        for i in 0..3 {
            assert!((v.direction[i] - expected[i]).abs() < 1e-15);
        }

        // tau above every score: nothing survives.
        assert!(matches!(
            build_stable(&ds, &report, 1.0),
            Err(Error::EmptySet(_))
        ));
    }

    #[test]
    fn stable_boundary_usage_monotone_in_tau() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.2), ("a#p3", 0.6), ("b#p0", 1.0)]);
        let mut prev = u32::MAX;
        for tau in [0.0, 0.3, 0.7, 1.0] {
            let n = build_stable(&ds, &report, tau).unwrap().n_boundaries;
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn soft_zero_one_scores_use_single_boundary() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.0), ("a#p3", 1.0), ("b#p0", 0.0)]);
        // Problem b drops (all-zero); problem a reduces to a#p3 alone.
        let v = build_soft(&ds, &report).unwrap();
        assert_eq!(v.n_problems, 1);
        assert_eq!(v.n_boundaries, 1);
        let expected = vecmath::l2_normalize(&[3.5, 2.0, -1.0]).unwrap();
        for i in 0..3 {
            assert!((v.direction[i] - expected[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_uniform_scores_equal_seal() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.4), ("a#p3", 0.4), ("b#p0", 0.4)]);
        let seal = build_seal(&ds).unwrap();
        let soft = build_soft(&ds, &report).unwrap();
        let cos = vecmath::cosine(&seal.direction, &soft.direction).unwrap();
        assert!(cos >= 1.0 - 1e-9);
    }

    fn orthogonal_subspace() -> ContentSubspace {
        // Fixture differences live in coordinates 0..3; plant the basis there
        // anyway but orthogonal to both d_a = (1.5,2,−1) and d_b = (1,0,2).
        // (2,−2,−1) is orthogonal to both: 3−4+1=0, 2+0−2=0. Normalize: /3.
        ContentSubspace {
            basis: Matrix::from_rows(&[vec![2.0 / 3.0, -2.0 / 3.0, -1.0 / 3.0]]).unwrap(),
            centroid: vec![0.0; 3],
            singular_values: vec![1.0],
        }
    }

    #[test]
    fn projected_with_orthogonal_subspace_equals_seal() {
        let ds = fixture_dataset();
        let seal = build_seal(&ds).unwrap();
        let proj = build_projected(&ds, &orthogonal_subspace()).unwrap();
        let cos = vecmath::cosine(&seal.direction, &proj.direction).unwrap();
        assert!(cos >= 1.0 - 1e-9);
        assert_eq!(proj.k, Some(1));
    }

    #[test]
    fn projected_spanning_subspace_cancels() {
        // Basis spans e1..e3 entirely: everything is projected away.
        let s = ContentSubspace {
            basis: Matrix::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ])
            .unwrap(),
            centroid: vec![0.0; 3],
            singular_values: vec![1.0, 1.0, 1.0],
        };
        assert!(matches!(
            build_projected(&fixture_dataset(), &s),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn combined_paths_agree() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.9), ("a#p3", 0.8), ("b#p0", 0.9)]);
        let s = orthogonal_subspace();
        let per_diff = build_combined(&ds, &report, 0.8, &s).unwrap();
        let per_state = build_combined_per_state(&ds, &report, 0.8, &s).unwrap();
        for i in 0..3 {
            assert!((per_diff.direction[i] - per_state.direction[i]).abs() < 1e-8);
        }
        assert_eq!(per_diff.n_boundaries, per_state.n_boundaries);
    }

    #[test]
    fn combined_inert_fixes_equal_seal() {
        let ds = fixture_dataset();
        let report = full_report(&[("a#p1", 0.3), ("a#p3", 0.9), ("b#p0", 0.6)]);
        let v = build_combined(&ds, &report, 0.0, &orthogonal_subspace()).unwrap();
        let seal = build_seal(&ds).unwrap();
        let cos = vecmath::cosine(&seal.direction, &v.direction).unwrap();
        assert!(cos >= 1.0 - 1e-9);
    }

    #[test]
    fn prompt_vector_examples() {
        let prompted = vec![(
            "q0".to_string(),
            vec![vec![1.0, 3.0], vec![1.0, 5.0]], // pool = (1,4)
        )];
        let plain = vec![("q0".to_string(), vec![vec![1.0, 2.0]])];
        let v = build_prompt_vector(&prompted, &plain, 20, "test").unwrap();
        assert!((v.direction[0]).abs() < 1e-15);
        assert!((v.direction[1] - 1.0).abs() < 1e-15);

        // Identical inputs produce a zero difference.
        let same = vec![("q0".to_string(), vec![vec![1.0, 2.0]])];
        assert!(matches!(
            build_prompt_vector(&same, &same.clone(), 20, "test"),
            Err(Error::Normalization { .. })
        ));

        // Unpaired question.
        let extra = vec![
            ("q0".to_string(), vec![vec![1.0, 2.0]]),
            ("q1".to_string(), vec![vec![0.0, 0.0]]),
        ];
        assert!(matches!(
            build_prompt_vector(&extra, &plain, 20, "test"),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn controls_full_pool_equals_seal_and_are_deterministic() {
        let ds = fixture_dataset();
        let seal = build_seal(&ds).unwrap();
        let controls = build_random_controls(&ds, 3, 1, 42).unwrap();
        assert_eq!(controls.len(), 1);
        let (v, manifest) = &controls[0];
        let cos = vecmath::cosine(&seal.direction, &v.direction).unwrap();
        assert!(cos >= 1.0 - 1e-9);
        assert_eq!(
            manifest,
            &vec!["a#p1".to_string(), "a#p3".to_string(), "b#p0".to_string()]
        );

        let again = build_random_controls(&ds, 2, 3, 7).unwrap();
        let again2 = build_random_controls(&ds, 2, 3, 7).unwrap();
        for i in 0..3 {
            assert_eq!(again[i].1, again2[i].1);
            assert_eq!(again[i].0.direction, again2[i].0.direction);
        }

        assert!(build_random_controls(&ds, 4, 1, 0).is_err());
    }

    #[test]
    fn scale_invariance_of_directions() {
        let ds = fixture_dataset();
        let mut scaled = ds.clone();
        for p in &mut scaled.problems {
            for (_, r) in &mut p.boundary_rows {
                for x in r.iter_mut() {
                    *x *= 3.7;
                }
            }
            for r in &mut p.execution_rows {
                for x in r.iter_mut() {
                    *x *= 3.7;
                }
            }
        }
        let a = build_seal(&ds).unwrap();
        let b = build_seal(&scaled).unwrap();
        for i in 0..3 {
            assert!((a.direction[i] - b.direction[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn steering_application() {
        let ds = dataset(vec![problem(
            "a",
            &[(0, vec![0.0, 2.0])],
            &[vec![0.0, 0.0]],
        )]);
        let v = build_seal(&ds).unwrap(); // direction (0,1)
        assert_eq!(apply_steering(&[1.0, 2.0], -1.0, &v).unwrap(), vec![1.0, 1.0]);
        assert_eq!(apply_steering(&[1.0, 2.0], 0.0, &v).unwrap(), vec![1.0, 2.0]);
        assert!(apply_steering(&[1.0, 2.0, 3.0], 1.0, &v).is_err());

        let mut bad = v.clone();
        bad.direction = vec![0.0, 0.01];
        assert!(matches!(
            apply_steering(&[1.0, 2.0], 1.0, &bad),
            Err(Error::Normalization { .. })
        ));
    }
}
