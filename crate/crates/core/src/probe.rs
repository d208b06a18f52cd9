//! Linear probing of hidden states.
//!
//! Two probe families: a balanced binary probe that asks whether behavior
//! boundaries are linearly separable from execution rows (with per-stability-
//! bin held-out confidence), and a multi-class subject probe run separately
//! on the content and residual components of question embeddings. Training
//! is L2-regularized logistic regression fit by the deterministic convex
//! minimizer in [`crate::optim`], initialized at zero, so identical inputs
//! always produce identical results.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim;
use crate::subspace::{split_components, ContentSubspace};
use crate::types::{HiddenVector, Matrix};
use crate::QuestionEmbedding;

/// Default inverse regularization strength.
pub const DEFAULT_C: f64 = 1.0;
/// Default fold count for cross-validation.
pub const DEFAULT_FOLDS: usize = 5;
/// Gradient-norm tolerance for probe training.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Iteration cap for probe training.
pub const DEFAULT_MAX_ITER: usize = 2000;
/// Number of stability bins ([0,0.2), …, [0.8,1.0]).
pub const STABILITY_BINS: usize = 5;
/// Default positives sampled per stability bin.
pub const DEFAULT_PER_BIN: usize = 22;

/// One candidate row for probe construction.
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub question_id: String,
    pub features: HiddenVector,
    /// Stability score for boundary rows; `None` for execution rows.
    pub score: Option<f64>,
}

/// Assembled probe dataset with group and bin bookkeeping.
#[derive(Debug, Clone)]
pub struct ProbeDataset {
    pub x: Matrix,
    /// Class index per row (binary probes use 0 = execution, 1 = boundary).
    pub y: Vec<usize>,
    pub groups: Vec<String>,
    /// Stability bin per positive row, `None` on negatives.
    pub bins: Vec<Option<usize>>,
    /// Stability score per positive row, `None` on negatives.
    pub scores: Vec<Option<f64>>,
    pub n_classes: usize,
}

/// Cross-validated probe outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub fold_accuracies: Vec<f64>,
    /// Pooled accuracy over all held-out rows.
    pub overall_accuracy: f64,
    /// Mean held-out positive-class probability per stability bin.
    pub per_bin_confidence: BTreeMap<usize, f64>,
    /// Spearman correlation between stability score and held-out confidence
    /// over positive rows; 0 with `rank_correlation_defined = false` when
    /// degenerate (constant input or no scored positives).
    pub rank_correlation: f64,
    pub rank_correlation_defined: bool,
    /// False if any fold hit the iteration cap before reaching tolerance.
    pub converged: bool,
}

/// Training options; defaults mirror the reference probe setup.
#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub c: f64,
    pub folds: usize,
    /// Group-aware folds (no question straddles folds) vs stratified folds.
    pub grouped: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            c: DEFAULT_C,
            folds: DEFAULT_FOLDS,
            grouped: true,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

/// Stability bin index on the fixed 5-bin layout; 1.0 in the top bin.
pub fn stability_bin(score: f64) -> usize {
    ((score / 0.2).floor() as usize).min(STABILITY_BINS - 1)
}

/// Samples `per_bin` boundary rows from each stability bin plus an equal
/// number of execution rows, both uniformly without replacement under the
/// seed. The result is balanced by construction: `bins·per_bin` positives
/// and as many negatives.
pub fn balanced_bin_sample(
    positives: &[ProbeRow],
    negatives: &[ProbeRow],
    bins: usize,
    per_bin: usize,
    seed: u64,
) -> Result<ProbeDataset> {
    if bins < 1 || bins > STABILITY_BINS {
        return Err(Error::Config(format!(
            "bins must be in [1, {STABILITY_BINS}], got {bins}"
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut by_bin: Vec<Vec<usize>> = vec![Vec::new(); bins];
    for (i, row) in positives.iter().enumerate() {
        let score = row.score.ok_or_else(|| {
            Error::Ingest(format!(
                "boundary row for {} has no stability score",
                row.question_id
            ))
        })?;
        let b = stability_bin(score).min(bins - 1);
        by_bin[b].push(i);
    }

    let mut chosen_pos: Vec<(usize, usize)> = Vec::new(); // (bin, row index)
    for (b, members) in by_bin.iter().enumerate() {
        if members.len() < per_bin {
            return Err(Error::Sampling(format!(
                "stability bin {b} has {} boundaries, need {per_bin}",
                members.len()
            )));
        }
        let mut picks = rand::seq::index::sample(&mut rng, members.len(), per_bin).into_vec();
        picks.sort_unstable();
        chosen_pos.extend(picks.into_iter().map(|p| (b, members[p])));
    }

    let n_pos = bins * per_bin;
    if negatives.len() < n_pos {
        return Err(Error::Sampling(format!(
            "need {n_pos} execution rows, have {}",
            negatives.len()
        )));
    }
    let mut neg_picks = rand::seq::index::sample(&mut rng, negatives.len(), n_pos).into_vec();
    neg_picks.sort_unstable();

    let mut rows = Vec::with_capacity(2 * n_pos);
    let mut y = Vec::with_capacity(2 * n_pos);
    let mut groups = Vec::with_capacity(2 * n_pos);
    let mut bin_tags = Vec::with_capacity(2 * n_pos);
    let mut scores = Vec::with_capacity(2 * n_pos);
    for (b, i) in chosen_pos {
        let r = &positives[i];
        rows.push(r.features.clone());
        y.push(1);
        groups.push(r.question_id.clone());
        bin_tags.push(Some(b));
        scores.push(r.score);
    }
    for i in neg_picks {
        let r = &negatives[i];
        rows.push(r.features.clone());
        y.push(0);
        groups.push(r.question_id.clone());
        bin_tags.push(None);
        scores.push(None);
    }

    Ok(ProbeDataset {
        x: Matrix::from_rows(&rows)?,
        y,
        groups,
        bins: bin_tags,
        scores,
        n_classes: 2,
    })
}

/// Assigns every row of a group to one fold, with per-fold group counts
/// balanced within ±1 (groups sorted, then dealt round-robin).
pub fn grouped_folds(groups: &[String], folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {folds}")));
    }
    let distinct: BTreeSet<&String> = groups.iter().collect();
    if distinct.len() < folds {
        return Err(Error::Fold(format!(
            "{} distinct groups cannot fill {folds} folds",
            distinct.len()
        )));
    }
    let fold_of: BTreeMap<&String, usize> = distinct
        .into_iter()
        .enumerate()
        .map(|(i, g)| (g, i % folds))
        .collect();
    Ok(groups.iter().map(|g| fold_of[g]).collect())
}

/// Stratified folds: each class is dealt round-robin across folds, keeping
/// per-fold class counts within ±1 of proportional.
pub fn stratified_folds(labels: &[usize], folds: usize) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Fold(format!("need at least 2 folds, got {folds}")));
    }
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    for &c in &classes {
        let count = labels.iter().filter(|l| **l == c).count();
        if count < folds {
            return Err(Error::Fold(format!(
                "class {c} has {count} samples, fewer than {folds} folds"
            )));
        }
    }
    let mut assignment = vec![0usize; labels.len()];
    for &c in &classes {
        for (k, idx) in labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == c)
            .map(|(i, _)| i)
            .enumerate()
        {
            assignment[idx] = k % folds;
        }
    }
    Ok(assignment)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^(-m)) without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m > 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

struct BinaryModel {
    w: Vec<f64>,
    b: f64,
    converged: bool,
}

/// L2-regularized binary logistic fit: sum of log-losses plus ‖w‖²/(2C),
/// intercept unpenalized, zero initialization.
fn fit_binary(rows: &[&[f64]], y: &[usize], opts: &ProbeOptions) -> BinaryModel {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let n = rows.len();
    let inv_c = 1.0 / opts.c;
    let objective = |params: &[f64]| {
        let (w, b) = (&params[..d], params[d]);
        let mut value = 0.0;
        let mut grad = vec![0.0; d + 1];
        for i in 0..n {
            let z = crate::vecmath::dot(w, rows[i]) + b;
            let label = if y[i] == 1 { 1.0 } else { -1.0 };
            value += log1p_exp_neg(label * z);
            // d/dz of log(1+e^{-label·z}) = sigmoid(z) − 1[label=+1]
            let coeff = sigmoid(z) - if y[i] == 1 { 1.0 } else { 0.0 };
            for j in 0..d {
                grad[j] += coeff * rows[i][j];
            }
            grad[d] += coeff;
        }
        for j in 0..d {
            value += 0.5 * inv_c * params[j] * params[j];
            grad[j] += inv_c * params[j];
        }
        (value, grad)
    };
    let r = optim::minimize(objective, vec![0.0; d + 1], opts.tol, opts.max_iter);
    BinaryModel {
        w: r.x[..d].to_vec(),
        b: r.x[d],
        converged: r.converged,
    }
}

struct SoftmaxModel {
    w: Vec<f64>, // n_classes × d, row-major
    b: Vec<f64>,
    n_classes: usize,
    converged: bool,
}

impl SoftmaxModel {
    fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut logits: Vec<f64> = (0..self.n_classes)
            .map(|k| crate::vecmath::dot(&self.w[k * d..(k + 1) * d], x) + self.b[k])
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in &mut logits {
            *l = (*l - max).exp();
            total += *l;
        }
        for l in &mut logits {
            *l /= total;
        }
        logits
    }

    fn predict(&self, x: &[f64]) -> usize {
        let p = self.probabilities(x);
        let mut best = 0;
        for k in 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        best
    }
}

/// Multinomial softmax fit with the same regularization convention.
fn fit_softmax(rows: &[&[f64]], y: &[usize], n_classes: usize, opts: &ProbeOptions) -> SoftmaxModel {
    let d = rows.first().map(|r| r.len()).unwrap_or(0);
    let n = rows.len();
    let inv_c = 1.0 / opts.c;
    let n_w = n_classes * d;
    let objective = |params: &[f64]| {
        let mut value = 0.0;
        let mut grad = vec![0.0; n_w + n_classes];
        let mut logits = vec![0.0; n_classes];
        for i in 0..n {
            for k in 0..n_classes {
                logits[k] = crate::vecmath::dot(&params[k * d..(k + 1) * d], rows[i])
                    + params[n_w + k];
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            value += total.ln() + max
                - (crate::vecmath::dot(&params[y[i] * d..(y[i] + 1) * d], rows[i])
                    + params[n_w + y[i]]);
            for k in 0..n_classes {
                let p = logits[k] / total;
                let coeff = p - if k == y[i] { 1.0 } else { 0.0 };
                for j in 0..d {
                    grad[k * d + j] += coeff * rows[i][j];
                }
                grad[n_w + k] += coeff;
            }
        }
        for j in 0..n_w {
            value += 0.5 * inv_c * params[j] * params[j];
            grad[j] += inv_c * params[j];
        }
        (value, grad)
    };
    let r = optim::minimize(objective, vec![0.0; n_w + n_classes], opts.tol, opts.max_iter);
    SoftmaxModel {
        w: r.x[..n_w].to_vec(),
        b: r.x[n_w..].to_vec(),
        n_classes,
        converged: r.converged,
    }
}

/// Cross-validated logistic probe. Folds are grouped by question id (so no
/// question leaks across the train/test split) or stratified by label,
/// per `opts.grouped`. All confidences and accuracies come from held-out
/// rows only.
pub fn train_logistic(ds: &ProbeDataset, opts: &ProbeOptions) -> Result<ProbeResult> {
    if ds.y.len() != ds.x.rows {
        return Err(Error::Dimension {
            expected: ds.x.rows,
            got: ds.y.len(),
            context: "probe labels vs feature rows".into(),
        });
    }
    let assignment = if opts.grouped {
        grouped_folds(&ds.groups, opts.folds)?
    } else {
        stratified_folds(&ds.y, opts.folds)?
    };

    let mut fold_accuracies = Vec::with_capacity(opts.folds);
    let mut correct_total = 0usize;
    let mut seen_total = 0usize;
    let mut bin_probs: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut score_conf_pairs: Vec<(f64, f64)> = Vec::new();
    let mut converged = true;

    for fold in 0..opts.folds {
        let train_idx: Vec<usize> = (0..ds.x.rows).filter(|i| assignment[*i] != fold).collect();
        let test_idx: Vec<usize> = (0..ds.x.rows).filter(|i| assignment[*i] == fold).collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(Error::Fold(format!("fold {fold} is empty")));
        }
        let train_rows: Vec<&[f64]> = train_idx.iter().map(|&i| ds.x.row(i)).collect();
        let train_y: Vec<usize> = train_idx.iter().map(|&i| ds.y[i]).collect();

        let mut correct = 0usize;
        if ds.n_classes <= 2 {
            let model = fit_binary(&train_rows, &train_y, opts);
            converged &= model.converged;
            for &i in &test_idx {
                let p = sigmoid(crate::vecmath::dot(&model.w, ds.x.row(i)) + model.b);
                let pred = usize::from(p >= 0.5);
                if pred == ds.y[i] {
                    correct += 1;
                }
                if ds.y[i] == 1 {
                    if let Some(b) = ds.bins[i] {
                        bin_probs.entry(b).or_default().push(p);
                    }
                    if let Some(s) = ds.scores[i] {
                        score_conf_pairs.push((s, p));
                    }
                }
            }
        } else {
            let model = fit_softmax(&train_rows, &train_y, ds.n_classes, opts);
            converged &= model.converged;
            for &i in &test_idx {
                if model.predict(ds.x.row(i)) == ds.y[i] {
                    correct += 1;
                }
            }
        }
        fold_accuracies.push(correct as f64 / test_idx.len() as f64);
        correct_total += correct;
        seen_total += test_idx.len();
    }

    let per_bin_confidence: BTreeMap<usize, f64> = bin_probs
        .into_iter()
        .map(|(b, ps)| (b, ps.iter().sum::<f64>() / ps.len() as f64))
        .collect();

    let (rho, defined) = if score_conf_pairs.len() >= 2 {
        let (s, c): (Vec<f64>, Vec<f64>) = score_conf_pairs.into_iter().unzip();
        match rank_correlation(&s, &c) {
            Ok(sp) => (sp.rho, !sp.degenerate),
            Err(_) => (0.0, false),
        }
    } else {
        (0.0, false)
    };

    Ok(ProbeResult {
        fold_accuracies,
        overall_accuracy: correct_total as f64 / seen_total as f64,
        per_bin_confidence,
        rank_correlation: rho,
        rank_correlation_defined: defined,
        converged,
    })
}

/// One row of the subject-probe table.
#[derive(Debug, Clone, Serialize)]
pub struct SubjectProbeRow {
    pub k: usize,
    pub acc_parallel: f64,
    pub acc_perp: f64,
    /// 100 · (acc_parallel − acc_perp).
    pub separation: f64,
}

/// For each rank in `k_grid`, splits every embedding into content and
/// residual components at that rank and trains a subject classifier on each
/// side with stratified cross-validation. Positive separation means the
/// content component predicts the subject better than the residual.
pub fn subject_probe(
    embeddings: &[QuestionEmbedding],
    s: &ContentSubspace,
    k_grid: &[usize],
    opts: &ProbeOptions,
) -> Result<Vec<SubjectProbeRow>> {
    if embeddings.is_empty() {
        return Err(Error::EmptySet("no question embeddings".into()));
    }
    let mut class_names = BTreeSet::new();
    for e in embeddings {
        let subject = e.subject.as_deref().ok_or_else(|| {
            Error::Ingest(format!("question {} has no subject label", e.question_id))
        })?;
        class_names.insert(subject.to_string());
    }
    let class_index: BTreeMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let labels: Vec<usize> = embeddings
        .iter()
        .map(|e| class_index[e.subject.as_deref().unwrap()])
        .collect();
    let n_classes = class_names.len();

    let mut table = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let sk = s.truncate(k)?;
        let mut par_rows = Vec::with_capacity(embeddings.len());
        let mut perp_rows = Vec::with_capacity(embeddings.len());
        for e in embeddings {
            let (par, perp) = split_components(&e.q, &sk)?;
            par_rows.push(par);
            perp_rows.push(perp);
        }
        let acc = |rows: &[HiddenVector]| -> Result<f64> {
            if n_classes < 2 {
                // A single class is trivially predicted everywhere.
                return Ok(1.0);
            }
            let ds = ProbeDataset {
                x: Matrix::from_rows(rows)?,
                y: labels.clone(),
                groups: embeddings.iter().map(|e| e.question_id.clone()).collect(),
                bins: vec![None; rows.len()],
                scores: vec![None; rows.len()],
                n_classes,
            };
            let stratified = ProbeOptions {
                grouped: false,
                ..opts.clone()
            };
            Ok(train_logistic(&ds, &stratified)?.overall_accuracy)
        };
        let acc_parallel = acc(&par_rows)?;
        let acc_perp = acc(&perp_rows)?;
        table.push(SubjectProbeRow {
            k,
            acc_parallel,
            acc_perp,
            separation: 100.0 * (acc_parallel - acc_perp),
        });
    }
    Ok(table)
}

/// Spearman correlation outcome; `degenerate` marks constant input, where
/// the coefficient is undefined and reported as 0.
#[derive(Debug, Clone, Copy)]
pub struct SpearmanResult {
    pub rho: f64,
    pub degenerate: bool,
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ties share the average of the 1-based ranks they span.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(scores: &[f64], confidences: &[f64]) -> Result<SpearmanResult> {
    if scores.len() != confidences.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: confidences.len(),
            context: "rank correlation inputs".into(),
        });
    }
    if scores.len() < 2 {
        return Err(Error::EmptySet("need at least 2 pairs".into()));
    }
    let ra = average_ranks(scores);
    let rb = average_ranks(confidences);
    let n = ra.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for i in 0..ra.len() {
        let da = ra[i] - mean;
        let db = rb[i] - mean;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(SpearmanResult {
            rho: 0.0,
            degenerate: true,
        });
    }
    Ok(SpearmanResult {
        rho: cov / (var_a.sqrt() * var_b.sqrt()),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xorshift_stream(mut state: u64) -> impl FnMut() -> f64 {
        move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        }
    }

    fn row(qid: &str, features: Vec<f64>, score: Option<f64>) -> ProbeRow {
        ProbeRow {
            question_id: qid.to_string(),
            features,
            score,
        }
    }

    #[test]
    fn bin_layout() {
        assert_eq!(stability_bin(0.0), 0);
        assert_eq!(stability_bin(0.19), 0);
        assert_eq!(stability_bin(0.2), 1);
        assert_eq!(stability_bin(0.79), 3);
        assert_eq!(stability_bin(0.8), 4);
        assert_eq!(stability_bin(1.0), 4);
    }

    fn shaped_inputs(per_bin_avail: usize) -> (Vec<ProbeRow>, Vec<ProbeRow>) {
        let mut rnd = xorshift_stream(7);
        let mut pos = Vec::new();
        for b in 0..STABILITY_BINS {
            for i in 0..per_bin_avail {
                let s = b as f64 * 0.2 + 0.1;
                pos.push(row(
                    &format!("q{b}{i:03}"),
                    vec![rnd(), rnd(), rnd()],
                    Some(s.min(1.0)),
                ));
            }
        }
        let neg: Vec<ProbeRow> = (0..400)
            .map(|i| row(&format!("n{i:03}"), vec![rnd(), rnd(), rnd()], None))
            .collect();
        (pos, neg)
    }

    #[test]
    fn balanced_sample_shape_and_determinism() {
        let (pos, neg) = shaped_inputs(30);
        let ds = balanced_bin_sample(&pos, &neg, 5, 22, 11).unwrap();
        assert_eq!(ds.x.rows, 220);
        assert_eq!(ds.y.iter().filter(|l| **l == 1).count(), 110);
        assert_eq!(ds.y.iter().filter(|l| **l == 0).count(), 110);
        for b in 0..5 {
            assert_eq!(ds.bins.iter().filter(|x| **x == Some(b)).count(), 22);
        }

        let ds2 = balanced_bin_sample(&pos, &neg, 5, 22, 11).unwrap();
        assert_eq!(ds.groups, ds2.groups);
        assert_eq!(ds.x.data, ds2.x.data);

        let tiny = balanced_bin_sample(&pos, &neg, 1, 1, 3).unwrap();
        assert_eq!(tiny.x.rows, 2);
    }

    #[test]
    fn underfull_bin_is_named() {
        let (mut pos, neg) = shaped_inputs(30);
        // Remove everything from bin 2.
        pos.retain(|r| stability_bin(r.score.unwrap()) != 2);
        let err = balanced_bin_sample(&pos, &neg, 5, 22, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bin 2"), "unexpected message: {msg}");
    }

    #[test]
    fn grouped_fold_examples() {
        let five: Vec<String> = (0..5).map(|i| format!("g{i}")).collect();
        let assignment = grouped_folds(&five, 5).unwrap();
        let mut seen: Vec<usize> = assignment.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);

        // 88 groups over 5 folds: group counts in {17, 18}.
        let groups: Vec<String> = (0..88).flat_map(|g| {
            std::iter::repeat_with(move || format!("g{g:02}")).take(3)
        }).collect();
        let assignment = grouped_folds(&groups, 5).unwrap();
        let mut group_fold: BTreeMap<&String, usize> = BTreeMap::new();
        for (i, g) in groups.iter().enumerate() {
            if let Some(&f) = group_fold.get(g) {
                assert_eq!(f, assignment[i], "group {g} straddles folds");
            } else {
                group_fold.insert(g, assignment[i]);
            }
        }
        let mut counts = vec![0usize; 5];
        for (_, f) in group_fold {
            counts[f] += 1;
        }
        for c in counts {
            assert!(c == 17 || c == 18, "got {c}");
        }

        assert!(grouped_folds(&five[..3].to_vec(), 5).is_err());
    }

    #[test]
    fn stratified_fold_examples() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let assignment = stratified_folds(&labels, 5).unwrap();
        for fold in 0..5 {
            let members: Vec<usize> = (0..10).filter(|i| assignment[*i] == fold).collect();
            assert_eq!(members.len(), 2);
            let ones = members.iter().filter(|i| labels[**i] == 1).count();
            assert_eq!(ones, 1);
        }

        // Single class degenerates to plain round-robin folds.
        let mono = vec![0usize; 10];
        let a = stratified_folds(&mono, 5).unwrap();
        for fold in 0..5 {
            assert_eq!(a.iter().filter(|f| **f == fold).count(), 2);
        }

        assert!(stratified_folds(&[0, 0, 0, 1], 4).is_err());
    }

    fn separable_dataset(n_per_class: usize, gap: f64) -> ProbeDataset {
        let mut rnd = xorshift_stream(99);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut groups = Vec::new();
        for i in 0..n_per_class {
            rows.push(vec![-gap + 0.1 * rnd(), rnd()]);
            y.push(0);
            groups.push(format!("a{i:03}"));
            rows.push(vec![gap + 0.1 * rnd(), rnd()]);
            y.push(1);
            groups.push(format!("b{i:03}"));
        }
        ProbeDataset {
            x: Matrix::from_rows(&rows).unwrap(),
            bins: vec![None; y.len()],
            scores: y.iter().map(|l| (*l == 1).then_some(1.0)).collect(),
            n_classes: 2,
            y,
            groups,
        }
    }

    #[test]
    fn separable_clouds_reach_full_accuracy() {
        let ds = separable_dataset(30, 5.0);
        let result = train_logistic(&ds, &ProbeOptions::default()).unwrap();
        assert_eq!(result.overall_accuracy, 1.0);
        assert!(result.converged);
    }

    #[test]
    fn chance_level_on_label_noise() {
        let mut rnd = xorshift_stream(1234);
        let n = 120;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rnd()).collect())
            .collect();
        let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let ds = ProbeDataset {
            x: Matrix::from_rows(&rows).unwrap(),
            y: y.clone(),
            groups: (0..n).map(|i| format!("g{i:03}")).collect(),
            bins: vec![None; n],
            scores: vec![None; n],
            n_classes: 2,
        };
        let result = train_logistic(&ds, &ProbeOptions::default()).unwrap();
        assert!(
            (result.overall_accuracy - 0.5).abs() <= 0.15,
            "accuracy {}",
            result.overall_accuracy
        );
    }

    #[test]
    fn probe_results_are_deterministic() {
        let ds = separable_dataset(20, 2.0);
        let a = train_logistic(&ds, &ProbeOptions::default()).unwrap();
        let b = train_logistic(&ds, &ProbeOptions::default()).unwrap();
        assert_eq!(a.fold_accuracies, b.fold_accuracies);
        assert_eq!(a.overall_accuracy, b.overall_accuracy);
        assert_eq!(a.per_bin_confidence, b.per_bin_confidence);
        assert_eq!(a.rank_correlation.to_bits(), b.rank_correlation.to_bits());
    }

    #[test]
    fn spearman_examples() {
        let up = rank_correlation(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((up.rho - 1.0).abs() < 1e-12);
        let down = rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((down.rho + 1.0).abs() < 1e-12);
        let mixed = rank_correlation(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap();
        assert!((mixed.rho - 0.5).abs() < 1e-12);
        let flat = rank_correlation(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(flat.rho, 0.0);
        assert!(flat.degenerate);
        assert!(rank_correlation(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        // scores (1,1,2) vs conf (10,20,30): ranks (1.5,1.5,3) vs (1,2,3)
        // → ρ = cov/(σσ) = ((-1)(-1)+(-1)(0)+... compute: a=(−0.5,−0.5,1)·? ranks mean 2:
        // da=(−0.5,−0.5,1), db=(−1,0,1) → cov=0.5+0+1=1.5, va=1.5, vb=2 → ρ=1.5/√3 ≈ 0.866.
        let r = rank_correlation(&[1.0, 1.0, 2.0], &[10.0, 20.0, 30.0]).unwrap();
        assert!((r.rho - 1.5 / 3.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn subject_probe_constant_labels() {
        let mut rnd = xorshift_stream(5);
        let q = Matrix::from_rows(
            &(0..12)
                .map(|_| (0..4).map(|_| rnd()).collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let s = crate::subspace::fit_content_subspace(&q, 2).unwrap();
        let embeddings: Vec<QuestionEmbedding> = q
            .iter_rows()
            .enumerate()
            .map(|(i, r)| QuestionEmbedding {
                question_id: format!("q{i}"),
                q: r.to_vec(),
                subject: Some("algebra".to_string()),
            })
            .collect();
        let table = subject_probe(&embeddings, &s, &[1, 2], &ProbeOptions::default()).unwrap();
        for row in table {
            assert_eq!(row.acc_parallel, 1.0);
            assert_eq!(row.acc_perp, 1.0);
            assert_eq!(row.separation, 0.0);
        }
    }

    #[test]
    fn subject_probe_requires_labels() {
        let q = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let s = crate::subspace::fit_content_subspace(&q, 1).unwrap();
        let embeddings = vec![QuestionEmbedding {
            question_id: "q0".into(),
            q: vec![1.0, 0.0],
            subject: None,
        }];
        assert!(subject_probe(&embeddings, &s, &[1], &ProbeOptions::default()).is_err());
    }
}
