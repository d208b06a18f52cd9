//! Synthetic oracle: datasets with known ground truth.
//!
//! Rows follow the additive model h_b = z_b·δ + μ(c_b) + ε_b with
//! z_b ~ Bernoulli(p_b), execution rows h_e = μ + ε (no behavioral term),
//! and μ drawn per problem from content clusters planted inside a low-rank
//! subspace. The observable output (trace text, hidden rows, continuation
//! records, question rows) is format-identical to real ingested data; the
//! generating parameters ride along in a ground-truth sidecar that the
//! pipeline never reads.
//!
//! On top of generation, this module runs the theory-validation experiments:
//! signal dilution, threshold sweeps, hard-vs-soft weighting, the soft-
//! coefficient identity, and projection attenuation under controlled overlap
//! between δ and the content subspace.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::builder::{
    build_seal, build_soft, build_stable, BuildDataset, DEFAULT_LAYER,
};
use crate::error::{Error, Result};
use crate::lexicon::KeywordLexicon;
use crate::segment::{boundary_records, default_delimiter, segment_trace};
use crate::stability::{score_all, ContinuationRecord, StabilityReport};
use crate::subspace::{pool_question_states, QuestionEmbedding};
use crate::types::{
    BoundaryRecord, HiddenStateSet, HiddenVector, Matrix, RawTrace, SteeringVector, TraceRecord,
};
use crate::vecmath;

/// Subject labels cycled over content clusters.
pub const SUBJECTS: [&str; 7] = [
    "algebra",
    "geometry",
    "number_theory",
    "calculus",
    "combinatorics",
    "probability",
    "precalculus",
];

/// Distribution of per-boundary trigger probabilities.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TriggerDist {
    /// Every boundary has the same trigger probability.
    Constant { p: f64 },
    /// Point mass at zero, a Beta(α, β) body, and a uniform top cluster on
    /// [0.8, 1.0] — the minimal family matching a heavily zero-inflated,
    /// long-right-tailed score distribution with a small stable cluster.
    ZeroInflatedBeta {
        zero_mass: f64,
        alpha: f64,
        beta: f64,
        top_mass: f64,
    },
}

impl TriggerDist {
    pub fn validate(&self) -> Result<()> {
        match self {
            TriggerDist::Constant { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Config(format!("trigger p = {p} outside [0,1]")));
                }
            }
            TriggerDist::ZeroInflatedBeta {
                zero_mass,
                alpha,
                beta,
                top_mass,
            } => {
                if !(0.0..=1.0).contains(zero_mass) || !(0.0..=1.0).contains(top_mass) {
                    return Err(Error::Config("trigger masses must lie in [0,1]".into()));
                }
                if zero_mass + top_mass > 1.0 + 1e-12 {
                    return Err(Error::Config(format!(
                        "zero_mass + top_mass = {} exceeds 1",
                        zero_mass + top_mass
                    )));
                }
                if *alpha <= 0.0 || *beta <= 0.0 {
                    return Err(Error::Config(format!(
                        "Beta parameters must be positive, got ({alpha}, {beta})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// E[p].
    pub fn mean(&self) -> f64 {
        match self {
            TriggerDist::Constant { p } => *p,
            TriggerDist::ZeroInflatedBeta {
                zero_mass,
                alpha,
                beta,
                top_mass,
            } => {
                let body = 1.0 - zero_mass - top_mass;
                body * alpha / (alpha + beta) + top_mass * 0.9
            }
        }
    }

    /// E[p²].
    pub fn second_moment(&self) -> f64 {
        match self {
            TriggerDist::Constant { p } => p * p,
            TriggerDist::ZeroInflatedBeta {
                zero_mass,
                alpha,
                beta,
                top_mass,
            } => {
                let body = 1.0 - zero_mass - top_mass;
                let s = alpha + beta;
                let beta_m2 = alpha * (alpha + 1.0) / (s * (s + 1.0));
                // E[X²] for U(0.8, 1.0) = (1³ − 0.8³) / (3 · 0.2)
                let top_m2 = (1.0 - 0.512) / 0.6;
                body * beta_m2 + top_mass * top_m2
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.second_moment() - self.mean().powi(2)
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> Result<f64> {
        match self {
            TriggerDist::Constant { p } => Ok(*p),
            TriggerDist::ZeroInflatedBeta {
                zero_mass,
                alpha,
                beta,
                top_mass,
            } => {
                let u: f64 = rng.random();
                if u < *zero_mass {
                    Ok(0.0)
                } else if u < zero_mass + top_mass {
                    Ok(0.8 + 0.2 * rng.random::<f64>())
                } else {
                    let dist = rand_distr::Beta::new(*alpha, *beta)
                        .map_err(|e| Error::Config(format!("Beta({alpha},{beta}): {e}")))?;
                    Ok(rng.sample(dist))
                }
            }
        }
    }
}

/// Planted content structure: cluster centers inside a rank-`rank` subspace.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ContentConfig {
    pub n_clusters: usize,
    pub rank: usize,
    /// Scale of cluster centers within the subspace.
    pub cluster_scale: f64,
    /// Within-cluster spread of per-problem contexts, also in-subspace.
    pub spread: f64,
}

impl Default for ContentConfig {
    fn default() -> Self {
        ContentConfig {
            n_clusters: 7,
            rank: 4,
            cluster_scale: 2.0,
            spread: 0.5,
        }
    }
}

/// Full generator configuration. Defaults are calibrated so the score
/// distribution matches the observed shape: mean trigger probability
/// ≈ 0.167 with ≈ 54% exact zeros and a small stable cluster at ≥ 0.8.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub delta_norm: f64,
    pub noise_sigma: f64,
    pub trigger: TriggerDist,
    pub content: ContentConfig,
    pub n_problems: usize,
    pub boundaries_per_problem: usize,
    pub executions_per_problem: usize,
    /// Continuations per boundary (M).
    pub num_samples: usize,
    /// Question-only rows emitted per problem (pooled into embeddings).
    pub question_rows: usize,
    /// Isotropic noise on question rows; 0 keeps them exactly in-subspace.
    pub question_noise: f64,
    /// Cosine ω between δ and the content subspace (0 = orthogonal).
    pub delta_overlap: f64,
    /// Magnitude of an in-subspace offset added to boundary contexts only,
    /// violating context cancellation when positive.
    pub mu_offset: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            dim: 256,
            delta_norm: 1.0,
            noise_sigma: 1.0,
            trigger: TriggerDist::ZeroInflatedBeta {
                zero_mass: 0.54,
                alpha: 2.0,
                beta: 8.0,
                top_mass: 0.1071,
            },
            content: ContentConfig::default(),
            n_problems: 400,
            boundaries_per_problem: 10,
            executions_per_problem: 2,
            num_samples: 10,
            question_rows: 4,
            question_noise: 0.1,
            delta_overlap: 0.0,
            mu_offset: 0.0,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        self.trigger.validate()?;
        if self.dim < 2 {
            return Err(Error::Config(format!("dim must be ≥ 2, got {}", self.dim)));
        }
        if self.content.rank < 1 || self.content.rank > self.dim {
            return Err(Error::Config(format!(
                "content rank {} outside [1, {}]",
                self.content.rank, self.dim
            )));
        }
        if self.content.n_clusters < 1 {
            return Err(Error::Config("need at least one content cluster".into()));
        }
        if self.n_problems < 1
            || self.boundaries_per_problem < 1
            || self.executions_per_problem < 1
            || self.num_samples < 1
            || self.question_rows < 1
        {
            return Err(Error::Config("all counts must be ≥ 1".into()));
        }
        if self.noise_sigma < 0.0
            || self.question_noise < 0.0
            || self.content.cluster_scale < 0.0
            || self.content.spread < 0.0
            || self.mu_offset < 0.0
        {
            return Err(Error::Config("scales must be nonnegative".into()));
        }
        if self.delta_norm <= 0.0 {
            return Err(Error::Config("delta_norm must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.delta_overlap) {
            return Err(Error::Config(format!(
                "delta_overlap {} outside [0,1]",
                self.delta_overlap
            )));
        }
        Ok(())
    }
}

/// Hidden generating parameters; never exposed through ingestion interfaces.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub delta: HiddenVector,
    /// True trigger probability per boundary id.
    pub trigger_probs: BTreeMap<String, f64>,
    /// Realized commitment indicator per boundary id.
    pub z_draws: BTreeMap<String, bool>,
    /// Orthonormal rows spanning the planted content subspace.
    pub content_basis: Matrix,
    /// Cluster index per problem (in question-id order).
    pub cluster_of_problem: Vec<usize>,
}

/// Generated bundle: observables exactly as a real extraction harness would
/// produce them, plus the ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub raw_traces: Vec<RawTrace>,
    pub states: Vec<HiddenStateSet>,
    /// Question-only hidden rows per question, pre-pooling.
    pub question_states: Vec<(String, Matrix)>,
    pub truth: GroundTruth,
}

fn draw_normal_vec(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Σ cⱼ·bⱼ with c ~ N(0, I) over the basis rows, scaled.
fn in_span_vector(rng: &mut ChaCha12Rng, basis: &Matrix, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; basis.cols];
    for j in 0..basis.rows {
        let c: f64 = rng.sample(StandardNormal);
        vecmath::add_scaled(&mut v, scale * c, basis.row(j));
    }
    v
}

fn orthonormal_basis(rng: &mut ChaCha12Rng, rank: usize, dim: usize) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut v = draw_normal_vec(rng, dim);
        for prev in &rows {
            let c = vecmath::dot(&v, prev);
            vecmath::add_scaled(&mut v, -c, prev);
        }
        let normalized = vecmath::l2_normalize(&v)
            .map_err(|_| Error::Rank("degenerate draw while building content basis".into()))?;
        rows.push(normalized);
    }
    Matrix::from_rows(&rows)
}

/// δ with a controlled cosine ω to the content subspace.
fn draw_delta(rng: &mut ChaCha12Rng, basis: &Matrix, omega: f64, norm: f64) -> Result<HiddenVector> {
    let g = draw_normal_vec(rng, basis.cols);
    let mut perp = g.clone();
    for j in 0..basis.rows {
        let c = vecmath::dot(&g, basis.row(j));
        vecmath::add_scaled(&mut perp, -c, basis.row(j));
    }
    let perp_hat = vecmath::l2_normalize(&perp)
        .map_err(|_| Error::Rank("behavioral direction degenerate".into()))?;
    let mut delta = if omega == 0.0 {
        perp_hat
    } else {
        let g2 = draw_normal_vec(rng, basis.cols);
        let mut in_span = vec![0.0; basis.cols];
        for j in 0..basis.rows {
            let c = vecmath::dot(&g2, basis.row(j));
            vecmath::add_scaled(&mut in_span, c, basis.row(j));
        }
        let u = vecmath::l2_normalize(&in_span)
            .map_err(|_| Error::Rank("in-span direction degenerate".into()))?;
        let mut d = vecmath::scale(&u, omega);
        vecmath::add_scaled(&mut d, (1.0 - omega * omega).sqrt(), &perp_hat);
        d
    };
    for x in &mut delta {
        *x *= norm;
    }
    Ok(delta)
}

fn boundary_text(i: usize) -> String {
    match i % 4 {
        0 => format!("Wait, I should double-check step {i} before moving on."),
        1 => format!("Hmm, verify the bound used in step {i}."),
        2 => format!("Alternatively, try a substitution for step {i}."),
        _ => format!("That looks like a mistake in step {i}; re-check the sign."),
    }
}

fn execution_text(i: usize) -> String {
    match i % 2 {
        0 => format!("Compute the partial result for term {i}."),
        _ => format!("Expand and simplify term {i}."),
    }
}

/// Draws trigger probabilities only, one per boundary slot.
pub fn sample_trigger_probs(config: &SyntheticConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let n = config.n_problems * config.boundaries_per_problem;
    (0..n).map(|_| config.trigger.sample(&mut rng)).collect()
}

/// Generates the full dataset. Identical config (including seed) produces a
/// bit-identical dataset; output passes the same segmentation and ingestion
/// validation as real data.
pub fn gen_dataset(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let dim = config.dim;

    let content_basis = orthonormal_basis(&mut rng, config.content.rank, dim)?;
    let delta = draw_delta(&mut rng, &content_basis, config.delta_overlap, config.delta_norm)?;
    let centers: Vec<HiddenVector> = (0..config.content.n_clusters)
        .map(|_| in_span_vector(&mut rng, &content_basis, config.content.cluster_scale))
        .collect();

    let n_b = config.boundaries_per_problem;
    let n_e = config.executions_per_problem;
    let n_paragraphs = n_b + n_e;
    // Execution and boundary paragraphs interleave until one kind runs out.
    let mut layout = Vec::with_capacity(n_paragraphs);
    {
        let (mut b_left, mut e_left) = (n_b, n_e);
        let mut next_is_execution = true;
        while b_left + e_left > 0 {
            let take_execution =
                (next_is_execution && e_left > 0) || b_left == 0;
            if take_execution {
                layout.push(false);
                e_left -= 1;
            } else {
                layout.push(true);
                b_left -= 1;
            }
            next_is_execution = !next_is_execution;
        }
    }

    let lexicon = KeywordLexicon::default();
    let delimiter = default_delimiter();

    let mut raw_traces = Vec::with_capacity(config.n_problems);
    let mut states = Vec::with_capacity(config.n_problems);
    let mut question_states = Vec::with_capacity(config.n_problems);
    let mut trigger_probs = BTreeMap::new();
    let mut z_draws = BTreeMap::new();
    let mut cluster_of_problem = Vec::with_capacity(config.n_problems);

    for k in 0..config.n_problems {
        let qid = format!("syn{k:05}");
        let cluster = k % config.content.n_clusters;
        cluster_of_problem.push(cluster);
        let mut mu = centers[cluster].clone();
        let within = in_span_vector(&mut rng, &content_basis, config.content.spread);
        vecmath::add_scaled(&mut mu, 1.0, &within);
        let boundary_offset = if config.mu_offset > 0.0 {
            let raw = in_span_vector(&mut rng, &content_basis, 1.0);
            let unit = vecmath::l2_normalize(&raw)
                .map_err(|_| Error::Rank("context offset degenerate".into()))?;
            Some(vecmath::scale(&unit, config.mu_offset))
        } else {
            None
        };

        let mut paragraphs = Vec::with_capacity(n_paragraphs);
        let mut rows = Matrix::zeros(n_paragraphs, dim);
        for (index, &is_boundary) in layout.iter().enumerate() {
            let mut row = if is_boundary {
                let p_b = config.trigger.sample(&mut rng)?;
                let z = rng.random_bool(p_b);
                let id = BoundaryRecord::make_id(&qid, index);
                trigger_probs.insert(id.clone(), p_b);
                z_draws.insert(id, z);
                let mut r = mu.clone();
                if let Some(offset) = &boundary_offset {
                    vecmath::add_scaled(&mut r, 1.0, offset);
                }
                if z {
                    vecmath::add_scaled(&mut r, 1.0, &delta);
                }
                paragraphs.push(boundary_text(index));
                r
            } else {
                paragraphs.push(execution_text(index));
                mu.clone()
            };
            if config.noise_sigma > 0.0 {
                let noise = draw_normal_vec(&mut rng, dim);
                vecmath::add_scaled(&mut row, config.noise_sigma, &noise);
            }
            rows.row_mut(index).copy_from_slice(&row);
        }

        let text = format!(
            "<think>{}</think>\nThe answer is \\boxed{{42}}.",
            paragraphs.join("\n\n")
        );
        let raw = RawTrace {
            question_id: qid.clone(),
            text,
            subject: Some(SUBJECTS[cluster % SUBJECTS.len()].to_string()),
            gold_answer: Some("42".to_string()),
        };
        // The generated text must round-trip through the real segmentation
        // path with exactly the intended labels.
        let record = segment_trace(&raw, &lexicon, &delimiter)?;
        if record.paragraphs.len() != n_paragraphs {
            return Err(Error::Parse(format!(
                "{qid}: generated {} paragraphs, segmented {}",
                n_paragraphs,
                record.paragraphs.len()
            )));
        }
        for (p, &is_boundary) in record.paragraphs.iter().zip(&layout) {
            if p.label.is_behavior() != is_boundary {
                return Err(Error::Parse(format!(
                    "{qid}: paragraph {} label drifted from the intended layout",
                    p.index
                )));
            }
        }

        let mut q_rows = Matrix::zeros(config.question_rows, dim);
        for r in 0..config.question_rows {
            let mut row = mu.clone();
            if config.question_noise > 0.0 {
                let noise = draw_normal_vec(&mut rng, dim);
                vecmath::add_scaled(&mut row, config.question_noise, &noise);
            }
            q_rows.row_mut(r).copy_from_slice(&row);
        }

        raw_traces.push(raw);
        states.push(HiddenStateSet {
            question_id: qid.clone(),
            layer: DEFAULT_LAYER,
            states: rows,
        });
        question_states.push((qid, q_rows));
    }

    Ok(SyntheticDataset {
        config: config.clone(),
        raw_traces,
        states,
        question_states,
        truth: GroundTruth {
            delta,
            trigger_probs,
            z_draws,
            content_basis,
            cluster_of_problem,
        },
    })
}

/// Renders M Bernoulli(p_b) continuation outcomes per boundary as minimal
/// keyword-bearing or plain texts, so scoring exercises the real
/// segmentation path end-to-end.
pub fn gen_continuation_outcomes(
    dataset: &SyntheticDataset,
    seed: u64,
) -> Result<Vec<ContinuationRecord>> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = dataset.config.num_samples;
    let mut records = Vec::with_capacity(dataset.truth.trigger_probs.len());
    for (id, p_b) in &dataset.truth.trigger_probs {
        let samples: Vec<String> = (0..m)
            .map(|i| {
                if rng.random_bool(*p_b) {
                    format!("Wait, that needs a re-check.\n\nThen continue with term {i}.")
                } else {
                    format!("Proceed with the computation of term {i}.")
                }
            })
            .collect();
        records.push(ContinuationRecord {
            boundary_id: id.clone(),
            samples,
            temperature: crate::stability::DEFAULT_TEMPERATURE,
            top_p: crate::stability::DEFAULT_TOP_P,
            max_new_tokens: crate::stability::DEFAULT_MAX_NEW_TOKENS,
        });
    }
    Ok(records)
}

/// Dataset pushed through the real pipeline: segmented traces, assembled
/// problems, generated continuations, and the resulting stability report.
pub struct PreparedExperiment {
    pub dataset: SyntheticDataset,
    pub traces: Vec<TraceRecord>,
    pub boundaries: Vec<BoundaryRecord>,
    pub build: BuildDataset,
    pub report: StabilityReport,
}

/// Fixed offset between the dataset seed and the continuation-sampling seed.
pub const CONTINUATION_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

/// Runs generation plus the full real-path preprocessing needed by the
/// validation experiments.
pub fn prepare_scored(config: &SyntheticConfig) -> Result<PreparedExperiment> {
    let dataset = gen_dataset(config)?;
    let lexicon = KeywordLexicon::default();
    let delimiter = default_delimiter();
    let mut traces = Vec::with_capacity(dataset.raw_traces.len());
    let mut boundaries = Vec::new();
    for raw in &dataset.raw_traces {
        let record = segment_trace(raw, &lexicon, &delimiter)?;
        boundaries.extend(boundary_records(&record));
        traces.push(record);
    }
    let build = BuildDataset::assemble(&traces, &dataset.states, &lexicon.hash())?;
    let continuations =
        gen_continuation_outcomes(&dataset, config.seed ^ CONTINUATION_SEED_SALT)?;
    let report = score_all(&boundaries, &continuations, &lexicon, &delimiter)?;
    Ok(PreparedExperiment {
        dataset,
        traces,
        boundaries,
        build,
        report,
    })
}

/// Cosine between a built direction and the planted behavioral direction.
pub fn delta_alignment(v: &SteeringVector, truth: &GroundTruth) -> Result<f64> {
    vecmath::cosine(&v.direction, &truth.delta)
}

/// Pools each question's rows into one embedding, carrying subject labels.
pub fn question_embeddings(dataset: &SyntheticDataset) -> Result<Vec<QuestionEmbedding>> {
    let subject_of: BTreeMap<&str, Option<String>> = dataset
        .raw_traces
        .iter()
        .map(|t| (t.question_id.as_str(), t.subject.clone()))
        .collect();
    dataset
        .question_states
        .iter()
        .map(|(qid, rows)| {
            Ok(QuestionEmbedding {
                question_id: qid.clone(),
                q: pool_question_states(rows.iter_rows())?,
                subject: subject_of.get(qid.as_str()).cloned().flatten(),
            })
        })
        .collect()
}

/// Ground-truth amplification p̄_τ/p̄ from the sampled trigger probabilities.
pub fn true_amplification(dataset: &SyntheticDataset, tau: f64) -> Result<f64> {
    let all: Vec<f64> = dataset.truth.trigger_probs.values().copied().collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    if mean <= 0.0 {
        return Err(Error::EmptySet("mean trigger probability is zero".into()));
    }
    let survivors: Vec<f64> = all.iter().copied().filter(|p| *p >= tau).collect();
    if survivors.is_empty() {
        return Err(Error::EmptySet(format!("no trigger probability ≥ {tau}")));
    }
    Ok(survivors.iter().sum::<f64>() / survivors.len() as f64 / mean)
}

/// Signal-dilution check: the mean per-problem contrast should carry a
/// δ-coefficient close to the mean trigger probability.
#[derive(Debug, Clone, Serialize)]
pub struct DilutionReport {
    pub predicted_mean: f64,
    pub empirical_coeff: f64,
    pub relative_error: f64,
    pub cos_seal_delta: f64,
}

pub fn verify_dilution(config: &SyntheticConfig) -> Result<DilutionReport> {
    let prepared = prepare_scored_without_continuations(config)?;
    let (build, truth) = (&prepared.0, &prepared.1);
    let mut diffs = Vec::new();
    for p in &build.problems {
        if p.boundary_rows.is_empty() || p.execution_rows.is_empty() {
            continue;
        }
        diffs.push(crate::builder::per_example_vector(
            p.boundary_rows.iter().map(|(_, r)| r.as_slice()),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?);
    }
    if diffs.is_empty() {
        return Err(Error::EmptySet("no usable problems".into()));
    }
    let mean_d = vecmath::mean_rows(diffs.iter().map(|d| d.as_slice()))?;
    let delta_norm_sq = vecmath::dot(&truth.delta, &truth.delta);
    let empirical_coeff = vecmath::dot(&mean_d, &truth.delta) / delta_norm_sq;
    let predicted_mean = config.trigger.mean();
    let relative_error = if predicted_mean > 0.0 {
        (empirical_coeff - predicted_mean).abs() / predicted_mean
    } else {
        empirical_coeff.abs()
    };
    let seal = build_seal(build)?;
    let cos_seal_delta = vecmath::cosine(&seal.direction, &truth.delta)?;
    Ok(DilutionReport {
        predicted_mean,
        empirical_coeff,
        relative_error,
        cos_seal_delta,
    })
}

/// Generation + assembly only — dilution does not need continuations.
fn prepare_scored_without_continuations(
    config: &SyntheticConfig,
) -> Result<(BuildDataset, GroundTruth)> {
    let dataset = gen_dataset(config)?;
    let lexicon = KeywordLexicon::default();
    let delimiter = default_delimiter();
    let mut traces = Vec::with_capacity(dataset.raw_traces.len());
    for raw in &dataset.raw_traces {
        traces.push(segment_trace(raw, &lexicon, &delimiter)?);
    }
    let build = BuildDataset::assemble(&traces, &dataset.states, &lexicon.hash())?;
    Ok((build, dataset.truth))
}

/// One point of the threshold-sweep curve. `alignment` is absent where no
/// problem survives the threshold (curve gap).
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    pub alignment: Option<f64>,
    pub n_problems: u32,
    pub n_boundaries: u32,
}

pub fn default_tau_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// Alignment of the stability-filtered vector across thresholds on one
/// shared dataset.
pub fn run_threshold_sweep(config: &SyntheticConfig, tau_grid: &[f64]) -> Result<Vec<SweepPoint>> {
    let prepared = prepare_scored(config)?;
    let mut curve = Vec::with_capacity(tau_grid.len());
    for &tau in tau_grid {
        match build_stable(&prepared.build, &prepared.report, tau) {
            Ok(v) => curve.push(SweepPoint {
                tau,
                alignment: Some(delta_alignment(&v, &prepared.dataset.truth)?),
                n_problems: v.n_problems,
                n_boundaries: v.n_boundaries,
            }),
            Err(Error::EmptySet(_)) | Err(Error::Normalization { .. }) => curve.push(SweepPoint {
                tau,
                alignment: None,
                n_problems: 0,
                n_boundaries: 0,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}

/// Alignments of the three weighting schemes on one shared dataset.
#[derive(Debug, Clone, Serialize)]
pub struct HardSoftReport {
    pub tau: f64,
    pub align_seal: f64,
    pub align_soft: f64,
    pub align_hard: f64,
}

pub fn compare_hard_soft(config: &SyntheticConfig, tau: f64) -> Result<HardSoftReport> {
    let prepared = prepare_scored(config)?;
    let truth = &prepared.dataset.truth;
    let seal = build_seal(&prepared.build)?;
    let soft = build_soft(&prepared.build, &prepared.report)?;
    let hard = build_stable(&prepared.build, &prepared.report, tau)?;
    Ok(HardSoftReport {
        tau,
        align_seal: delta_alignment(&seal, truth)?,
        align_soft: delta_alignment(&soft, truth)?,
        align_hard: delta_alignment(&hard, truth)?,
    })
}

/// Monte-Carlo check of the soft-weighting signal coefficient
/// Σ wᵦ·pᵦ = E[p²]/E[p] = E[p] + Var(p)/E[p].
#[derive(Debug, Clone, Serialize)]
pub struct SoftCoeffReport {
    pub n: usize,
    pub empirical: f64,
    pub theoretical: f64,
    pub mc_se: f64,
}

pub fn soft_coefficient_identity(
    trigger: &TriggerDist,
    n: usize,
    seed: u64,
) -> Result<SoftCoeffReport> {
    trigger.validate()?;
    if n < 2 {
        return Err(Error::Config("need at least 2 draws".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut ps = Vec::with_capacity(n);
    for _ in 0..n {
        ps.push(trigger.sample(&mut rng)?);
    }
    let sum_p: f64 = ps.iter().sum();
    if sum_p <= 0.0 {
        return Err(Error::EmptySet("all sampled trigger probabilities are zero".into()));
    }
    let sum_p2: f64 = ps.iter().map(|p| p * p).sum();
    let empirical = sum_p2 / sum_p;

    let mean_p = sum_p / n as f64;
    // Delta-method standard error of the ratio estimator R = Σp²/Σp:
    // Var(R) ≈ Var(p² − R·p) / (n · E[p]²).
    let var_resid = ps
        .iter()
        .map(|p| {
            let r = p * p - empirical * p;
            r * r
        })
        .sum::<f64>()
        / n as f64;
    let mc_se = (var_resid / n as f64).sqrt() / mean_p;

    let e = trigger.mean();
    let theoretical = e + trigger.variance() / e;
    Ok(SoftCoeffReport {
        n,
        empirical,
        theoretical,
        mc_se,
    })
}

/// Signal attenuation under controlled overlap: how much of the planted
/// direction's coefficient survives projection, against the predicted
/// √(1 − ω²).
#[derive(Debug, Clone, Serialize)]
pub struct AttenuationReport {
    pub omega: f64,
    pub pre_coeff: f64,
    pub post_coeff: f64,
    pub empirical_fraction: f64,
    pub predicted_fraction: f64,
}

pub fn verify_projection_attenuation(config: &SyntheticConfig) -> Result<AttenuationReport> {
    let dataset = gen_dataset(config)?;
    let lexicon = KeywordLexicon::default();
    let delimiter = default_delimiter();
    let mut traces = Vec::with_capacity(dataset.raw_traces.len());
    for raw in &dataset.raw_traces {
        traces.push(segment_trace(raw, &lexicon, &delimiter)?);
    }
    let build = BuildDataset::assemble(&traces, &dataset.states, &lexicon.hash())?;

    // Fit the subspace through the real path: pooled question embeddings.
    let embeddings = question_embeddings(&dataset)?;
    let q = Matrix::from_rows(&embeddings.iter().map(|e| e.q.clone()).collect::<Vec<_>>())?;
    let s = crate::subspace::fit_content_subspace(&q, config.content.rank)?;

    let mut diffs = Vec::new();
    for p in &build.problems {
        if p.boundary_rows.is_empty() || p.execution_rows.is_empty() {
            continue;
        }
        diffs.push(crate::builder::per_example_vector(
            p.boundary_rows.iter().map(|(_, r)| r.as_slice()),
            p.execution_rows.iter().map(|r| r.as_slice()),
        )?);
    }
    let v_pre = vecmath::mean_rows(diffs.iter().map(|d| d.as_slice()))?;
    let v_post = crate::subspace::project_out(&v_pre, &s)?;

    let truth = &dataset.truth;
    let delta_hat = vecmath::l2_normalize(&truth.delta)?;
    let delta_proj = crate::subspace::project_out(&truth.delta, &s)?;
    let pre_coeff = vecmath::dot(&v_pre, &delta_hat);
    let post_coeff = if vecmath::l2_norm(&delta_proj) < 1e-12 {
        // δ lies entirely inside the subspace: nothing survives.
        0.0
    } else {
        let surviving_dir = vecmath::l2_normalize(&delta_proj)?;
        vecmath::dot(&v_post, &surviving_dir)
    };
    let empirical_fraction = if pre_coeff.abs() < 1e-300 {
        0.0
    } else {
        post_coeff / pre_coeff
    };
    Ok(AttenuationReport {
        omega: config.delta_overlap,
        pre_coeff,
        post_coeff,
        empirical_fraction,
        predicted_fraction: (1.0 - config.delta_overlap.powi(2)).sqrt(),
    })
}
