//! Implementations behind the CLI subcommands: resolve settings (flag over
//! file over default), run the corresponding library calls, and write
//! deterministic artifacts with provenance fingerprints.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use steerkit_core::builder::{self, BuildDataset, DEFAULT_ALPHA, DEFAULT_N_CONTROLS};
use steerkit_core::io;
use steerkit_core::lexicon::fingerprint64;
use steerkit_core::probe::{self, ProbeOptions};
use steerkit_core::segment;
use steerkit_core::stability::{self, DEFAULT_TAU};
use steerkit_core::subspace::{self, QuestionEmbedding, DEFAULT_RANK};
use steerkit_core::synthetic::{self, SyntheticConfig, CONTINUATION_SEED_SALT};
use steerkit_core::types::{
    HiddenStateSet, HiddenVector, Matrix, Method, RawTrace, SteeringVector, TraceRecord,
};
use steerkit_core::{ContinuationRecord, Error, KeywordLexicon, StabilityReport};

use crate::config::FileConfig;
use crate::{
    BuildArgs, ExperimentArg, FitSubspaceArgs, MethodArg, MetricsArgs, ProbeArgs, ProbeMode,
    ScoreStabilityArgs, SegmentArgs, SimulateArgs,
};

/// Wrapper around every JSON report: the fingerprints tie the numbers back
/// to the exact settings and cue set that produced them.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportEnvelope<T> {
    pub config_hash: String,
    pub lexicon_hash: String,
    pub report: T,
}

/// Fingerprint of the resolved settings that governed a run, taken over
/// their canonical JSON form.
fn params_hash<T: Serialize>(params: &T) -> Result<String> {
    let json = io::to_json_string(params)?;
    Ok(format!("{:016x}", fingerprint64(json.as_bytes())))
}

fn load_lexicon(flag: Option<&Path>, cfg: &FileConfig) -> Result<KeywordLexicon> {
    match flag.or(cfg.lexicon.as_deref()) {
        Some(p) => Ok(KeywordLexicon::from_toml_file(p)?),
        None => Ok(KeywordLexicon::default()),
    }
}

fn require<T>(opt: Option<T>, what: &str) -> Result<T> {
    opt.ok_or_else(|| Error::Config(format!("{what} is required")).into())
}

/// Checks an ingested layer against the expected one, when configured.
fn check_layer(expected: Option<u32>, got: u32, what: &str) -> Result<()> {
    if let Some(want) = expected {
        if want != got {
            return Err(Error::Ingest(format!(
                "{what} extracted at layer {got}, configuration expects {want}"
            ))
            .into());
        }
    }
    Ok(())
}

fn write_report<T: Serialize>(
    path: &Path,
    config_hash: String,
    lexicon_hash: String,
    report: T,
) -> Result<()> {
    let envelope = ReportEnvelope {
        config_hash,
        lexicon_hash,
        report,
    };
    io::write_json_file(path, &envelope)?;
    io::write_meta_sidecar(path)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// segment
// ---------------------------------------------------------------------------

pub fn cmd_segment(cfg: &FileConfig, a: &SegmentArgs) -> Result<()> {
    let lexicon = load_lexicon(a.lexicon.as_deref(), cfg)?;
    let delimiter = segment::default_delimiter();
    let traces: Vec<RawTrace> = io::read_jsonl(&a.traces)?;
    let mut records = Vec::with_capacity(traces.len());
    for t in &traces {
        let rec = segment::segment_trace(t, &lexicon, &delimiter)
            .with_context(|| format!("segmenting trace {}", t.question_id))?;
        records.push(rec);
    }
    io::write_jsonl(&a.out, &records)?;
    log::info!(
        "segmented {} traces into {}",
        records.len(),
        a.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// score-stability
// ---------------------------------------------------------------------------

pub fn cmd_score_stability(cfg: &FileConfig, a: &ScoreStabilityArgs) -> Result<()> {
    let lexicon = load_lexicon(a.lexicon.as_deref(), cfg)?;
    let delimiter = segment::default_delimiter();
    let traces: Vec<TraceRecord> = io::read_jsonl(&a.segments)?;
    let mut boundaries = Vec::new();
    for t in &traces {
        t.validate()?;
        boundaries.extend(segment::boundary_records(t));
    }
    let records: Vec<ContinuationRecord> = io::read_jsonl(&a.continuations)?;
    let report = stability::score_all(&boundaries, &records, &lexicon, &delimiter)?;
    if let Some(want) = cfg.num_samples {
        if want != report.num_samples {
            return Err(Error::Config(format!(
                "configuration expects {want} continuations per boundary, records carry {}",
                report.num_samples
            ))
            .into());
        }
    }

    #[derive(Serialize)]
    struct Params<'a> {
        command: &'a str,
        num_samples: u32,
        delimiter: &'a str,
        lexicon_hash: &'a str,
    }
    let hash = params_hash(&Params {
        command: "score-stability",
        num_samples: report.num_samples,
        delimiter: &report.delimiter,
        lexicon_hash: &report.lexicon_hash,
    })?;
    log::info!(
        "scored {} boundaries ({} unscored), mean stability {:.4}",
        report.scores.len(),
        report.unscored.len(),
        report.mean
    );
    write_report(&a.out, hash, lexicon.hash(), report)
}

// ---------------------------------------------------------------------------
// build
// ---------------------------------------------------------------------------

fn method_of(arg: MethodArg) -> Method {
    match arg {
        MethodArg::Seal => Method::Seal,
        MethodArg::Stable => Method::Stable,
        MethodArg::Soft => Method::Soft,
        MethodArg::Projected => Method::Projected,
        MethodArg::Combined => Method::Combined,
        MethodArg::Prompt => Method::Prompt,
        MethodArg::Control => Method::Control,
    }
}

fn parse_method(s: &str) -> Result<Method> {
    match s {
        "seal" => Ok(Method::Seal),
        "stable" => Ok(Method::Stable),
        "soft" => Ok(Method::Soft),
        "projected" => Ok(Method::Projected),
        "combined" => Ok(Method::Combined),
        "prompt" => Ok(Method::Prompt),
        "control" => Ok(Method::Control),
        other => Err(Error::Config(format!("unknown method `{other}`")).into()),
    }
}

/// Reads a stability report and refuses one scored under a different cue
/// set than the current run.
fn load_report(path: &Path, lexicon: &KeywordLexicon) -> Result<StabilityReport> {
    let envelope: ReportEnvelope<StabilityReport> = io::read_json_file(path)?;
    let report = envelope.report;
    if report.lexicon_hash != lexicon.hash() {
        return Err(Error::Config(format!(
            "stability report {} was scored with lexicon {}, current lexicon is {}",
            path.display(),
            report.lexicon_hash,
            lexicon.hash()
        ))
        .into());
    }
    Ok(report)
}

/// Turns hidden-state sets into (question id, rows) pairs, enforcing one
/// uniform layer across the lot.
fn paired_rows(
    sets: &[HiddenStateSet],
    layer: &mut Option<u32>,
) -> Result<Vec<(String, Vec<HiddenVector>)>> {
    let mut pairs = Vec::with_capacity(sets.len());
    for set in sets {
        set.validate()?;
        match *layer {
            None => *layer = Some(set.layer),
            Some(l) if l != set.layer => {
                return Err(Error::Ingest(format!(
                    "{} extracted at layer {}, expected {l}",
                    set.question_id, set.layer
                ))
                .into())
            }
            _ => {}
        }
        let rows: Vec<HiddenVector> = set.states.iter_rows().map(<[f64]>::to_vec).collect();
        pairs.push((set.question_id.clone(), rows));
    }
    Ok(pairs)
}

#[derive(Serialize)]
struct BuildSummary<'a> {
    method: Method,
    layer: u32,
    alpha: f64,
    n_problems: u32,
    n_boundaries: u32,
    out: &'a str,
}

fn emit_vector(path: &Path, v: &SteeringVector, alpha: f64, note: Option<&str>) -> Result<()> {
    io::write_vector_file(path, v)?;
    io::write_meta_sidecar_with_note(path, note)?;
    let summary = BuildSummary {
        method: v.method,
        layer: v.layer,
        alpha,
        n_problems: v.n_problems,
        n_boundaries: v.n_boundaries,
        out: &path.display().to_string(),
    };
    println!("{}", io::to_json_string(&summary)?);
    Ok(())
}

/// One control vector's entry in the manifest written next to the set.
#[derive(Debug, Serialize, Deserialize)]
struct ControlEntry {
    file: String,
    n_boundaries: u32,
    boundary_ids: Vec<String>,
}

pub fn cmd_build(cfg: &FileConfig, a: &BuildArgs) -> Result<()> {
    let method = match (a.method, cfg.method.as_deref()) {
        (Some(m), _) => method_of(m),
        (None, Some(s)) => parse_method(s)?,
        (None, None) => return Err(Error::Config("--method is required".into()).into()),
    };
    let lexicon = load_lexicon(None, cfg)?;
    let tau = a.tau.or(cfg.tau).unwrap_or(DEFAULT_TAU);
    let alpha = cfg.alpha.unwrap_or(DEFAULT_ALPHA);

    if method == Method::Prompt {
        let prompted_dir = require(a.prompted_states.as_deref(), "--prompted-states")?;
        let mut layer = None;
        let prompted = paired_rows(&io::read_hidden_states_dir(prompted_dir)?, &mut layer)?;
        let plain = paired_rows(&io::read_hidden_states_dir(&a.states)?, &mut layer)?;
        let layer = layer.ok_or_else(|| Error::EmptySet("no hidden states".into()))?;
        check_layer(cfg.layer, layer, "hidden states")?;
        let v = builder::build_prompt_vector(&prompted, &plain, layer, &lexicon.hash())?;
        let note = a.prompt_text.as_deref().map(|t| format!("prompt_text={t}"));
        return emit_vector(&a.out, &v, alpha, note.as_deref());
    }

    let segments = require(a.segments.as_deref(), "--segments")?;
    let traces: Vec<TraceRecord> = io::read_jsonl(segments)?;
    for t in &traces {
        t.validate()?;
    }
    let states = io::read_hidden_states_dir(&a.states)?;
    let ds = BuildDataset::assemble(&traces, &states, &lexicon.hash())?;
    check_layer(cfg.layer, ds.layer, "hidden states")?;

    let report = match a.report.as_deref() {
        Some(p) => Some(load_report(p, &lexicon)?),
        None => None,
    };

    if method == Method::Control {
        let n_controls = a
            .n_controls
            .or(cfg.n_controls)
            .unwrap_or(DEFAULT_N_CONTROLS);
        let seed = a.seed.or(cfg.seed).unwrap_or(0);
        let count = match (a.count, &report) {
            (Some(c), _) => c,
            (None, Some(r)) => {
                let ids: Vec<String> = ds
                    .problems
                    .iter()
                    .flat_map(|p| p.boundary_rows.iter().map(|(id, _)| id.clone()))
                    .collect();
                stability::filter_boundaries(&ids, &r.scores, tau)?.len()
            }
            (None, None) => {
                return Err(Error::Config(
                    "method `control` needs --count, or --report to size-match the survivors"
                        .into(),
                )
                .into())
            }
        };
        let controls = builder::build_random_controls(&ds, count, n_controls, seed)?;
        std::fs::create_dir_all(&a.out)
            .with_context(|| format!("creating {}", a.out.display()))?;
        let mut entries = Vec::with_capacity(controls.len());
        for (i, (v, ids)) in controls.iter().enumerate() {
            let file = format!("control.{i}.svec");
            io::write_vector_file(&a.out.join(&file), v)?;
            entries.push(ControlEntry {
                file,
                n_boundaries: v.n_boundaries,
                boundary_ids: ids.clone(),
            });
        }

        #[derive(Serialize)]
        struct Params<'a> {
            command: &'a str,
            method: Method,
            count: usize,
            n_controls: usize,
            seed: u64,
            lexicon_hash: &'a str,
        }
        let hash = params_hash(&Params {
            command: "build",
            method,
            count,
            n_controls,
            seed,
            lexicon_hash: &ds.lexicon_hash,
        })?;
        let manifest = a.out.join("manifest.json");
        write_report(&manifest, hash, lexicon.hash(), entries)?;
        println!(
            "wrote {} control vectors of {} boundaries each to {}",
            controls.len(),
            count,
            a.out.display()
        );
        return Ok(());
    }

    let subspace_file = match a.subspace.as_deref() {
        Some(p) => Some(io::read_subspace_file(p)?),
        None => None,
    };
    let v = match method {
        Method::Seal => builder::build_seal(&ds)?,
        Method::Stable => {
            let r = require(report.as_ref(), "--report")?;
            builder::build_stable(&ds, r, tau)?
        }
        Method::Soft => {
            let r = require(report.as_ref(), "--report")?;
            builder::build_soft(&ds, r)?
        }
        Method::Projected => {
            let s = require(subspace_file.as_ref(), "--subspace")?;
            builder::build_projected(&ds, s)?
        }
        Method::Combined => {
            let r = require(report.as_ref(), "--report")?;
            let s = require(subspace_file.as_ref(), "--subspace")?;
            builder::build_combined(&ds, r, tau, s)?
        }
        Method::Prompt | Method::Control => unreachable!("handled above"),
    };
    emit_vector(&a.out, &v, alpha, None)
}

// ---------------------------------------------------------------------------
// fit-subspace
// ---------------------------------------------------------------------------

/// Pools each question's rows into one embedding; sets arrive sorted by
/// question id, so row order is reproducible.
fn pooled_embeddings(sets: &[HiddenStateSet]) -> Result<Vec<(String, u32, HiddenVector)>> {
    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        set.validate()?;
        let pooled = subspace::pool_question_states(set.states.iter_rows())
            .with_context(|| format!("pooling question states for {}", set.question_id))?;
        rows.push((set.question_id.clone(), set.layer, pooled));
    }
    Ok(rows)
}

pub fn cmd_fit_subspace(cfg: &FileConfig, a: &FitSubspaceArgs) -> Result<()> {
    let k = a.k.or(cfg.k).unwrap_or(DEFAULT_RANK);
    let sets = io::read_hidden_states_dir(&a.question_states)?;
    let pooled = pooled_embeddings(&sets)?;
    for (qid, layer, _) in &pooled {
        check_layer(cfg.layer, *layer, &format!("question states for {qid}"))?;
    }
    let rows: Vec<HiddenVector> = pooled.into_iter().map(|(_, _, q)| q).collect();
    let matrix = Matrix::from_rows(&rows)?;
    let s = subspace::fit_content_subspace(&matrix, k)?;

    #[derive(Serialize)]
    struct Params<'a> {
        command: &'a str,
        k: usize,
        n_questions: usize,
    }
    let hash = params_hash(&Params {
        command: "fit-subspace",
        k,
        n_questions: matrix.rows,
    })?;
    io::write_subspace_file(&a.out, &s)?;
    io::write_meta_sidecar_with_note(&a.out, Some(&format!("config_hash={hash}")))?;
    log::info!(
        "fitted rank-{k} subspace from {} question embeddings",
        matrix.rows
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

fn probe_options(cfg: &FileConfig, a: &ProbeArgs) -> ProbeOptions {
    let defaults = ProbeOptions::default();
    ProbeOptions {
        c: a.c.or(cfg.c).unwrap_or(defaults.c),
        folds: a.folds.or(cfg.folds).unwrap_or(defaults.folds),
        grouped: !a.ungrouped,
        tol: a.tol.or(cfg.tol).unwrap_or(defaults.tol),
        max_iter: a.max_iter.or(cfg.max_iter).unwrap_or(defaults.max_iter),
    }
}

pub fn cmd_probe(cfg: &FileConfig, a: &ProbeArgs) -> Result<()> {
    let opts = probe_options(cfg, a);
    match a.mode {
        ProbeMode::Behavior => {
            let lexicon = load_lexicon(None, cfg)?;
            let segments = require(a.segments.as_deref(), "--segments")?;
            let states_dir = require(a.states.as_deref(), "--states")?;
            let report_path = require(a.report.as_deref(), "--report")?;
            let per_bin = a.per_bin.or(cfg.per_bin).unwrap_or(probe::DEFAULT_PER_BIN);
            let seed = a.seed.or(cfg.seed).unwrap_or(0);

            let traces: Vec<TraceRecord> = io::read_jsonl(segments)?;
            for t in &traces {
                t.validate()?;
            }
            let states = io::read_hidden_states_dir(states_dir)?;
            let ds = BuildDataset::assemble(&traces, &states, &lexicon.hash())?;
            check_layer(cfg.layer, ds.layer, "hidden states")?;
            let report = load_report(report_path, &lexicon)?;
            let (positives, negatives) = builder::probe_rows(&ds, &report);
            let sampled = probe::balanced_bin_sample(
                &positives,
                &negatives,
                probe::STABILITY_BINS,
                per_bin,
                seed,
            )?;
            let result = probe::train_logistic(&sampled, &opts)?;

            #[derive(Serialize)]
            struct Params<'a> {
                command: &'a str,
                mode: &'a str,
                per_bin: usize,
                bins: usize,
                seed: u64,
                c: f64,
                folds: usize,
                grouped: bool,
                tol: f64,
                max_iter: usize,
                lexicon_hash: &'a str,
            }
            let hash = params_hash(&Params {
                command: "probe",
                mode: "behavior",
                per_bin,
                bins: probe::STABILITY_BINS,
                seed,
                c: opts.c,
                folds: opts.folds,
                grouped: opts.grouped,
                tol: opts.tol,
                max_iter: opts.max_iter,
                lexicon_hash: &ds.lexicon_hash,
            })?;
            log::info!(
                "behavior probe accuracy {:.4} over {} folds",
                result.overall_accuracy,
                opts.folds
            );
            write_report(&a.out, hash, lexicon.hash(), result)
        }
        ProbeMode::Subject => {
            let lexicon = load_lexicon(None, cfg)?;
            let traces_path = require(a.traces.as_deref(), "--traces")?;
            let qstates_dir = require(a.question_states.as_deref(), "--question-states")?;
            let subspace_path = require(a.subspace.as_deref(), "--subspace")?;
            let k_grid = a
                .k_grid
                .clone()
                .or_else(|| cfg.k_grid.clone())
                .unwrap_or_else(|| vec![1, 2, 4, 8]);

            let traces: Vec<RawTrace> = io::read_jsonl(traces_path)?;
            let mut subjects: BTreeMap<String, Option<String>> = BTreeMap::new();
            for t in &traces {
                if subjects
                    .insert(t.question_id.clone(), t.subject.clone())
                    .is_some()
                {
                    return Err(
                        Error::DuplicateRecord(format!("trace listed twice: {}", t.question_id))
                            .into(),
                    );
                }
            }
            let sets = io::read_hidden_states_dir(qstates_dir)?;
            let pooled = pooled_embeddings(&sets)?;
            let mut embeddings = Vec::with_capacity(pooled.len());
            for (qid, layer, q) in pooled {
                check_layer(cfg.layer, layer, &format!("question states for {qid}"))?;
                let subject = subjects
                    .get(&qid)
                    .ok_or_else(|| Error::Ingest(format!("question states for unknown trace {qid}")))?
                    .clone();
                embeddings.push(QuestionEmbedding {
                    question_id: qid,
                    q,
                    subject,
                });
            }
            let s = io::read_subspace_file(subspace_path)?;
            let rows = probe::subject_probe(&embeddings, &s, &k_grid, &opts)?;

            #[derive(Serialize)]
            struct Params<'a> {
                command: &'a str,
                mode: &'a str,
                k_grid: &'a [usize],
                c: f64,
                folds: usize,
                tol: f64,
                max_iter: usize,
            }
            let hash = params_hash(&Params {
                command: "probe",
                mode: "subject",
                k_grid: &k_grid,
                c: opts.c,
                folds: opts.folds,
                tol: opts.tol,
                max_iter: opts.max_iter,
            })?;
            log::info!("subject probe evaluated {} ranks", rows.len());
            write_report(&a.out, hash, lexicon.hash(), rows)
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Ground truth serialized for downstream scoring of a simulated run.
#[derive(Serialize)]
struct TruthOut<'a> {
    delta: &'a [f64],
    trigger_probs: &'a BTreeMap<String, f64>,
    z_draws: &'a BTreeMap<String, bool>,
    cluster_of_problem: &'a [usize],
    content_basis: Vec<&'a [f64]>,
}

fn write_dataset(dir: &Path, ds: &synthetic::SyntheticDataset) -> Result<()> {
    let states_dir = dir.join("states");
    let qstates_dir = dir.join("question_states");
    std::fs::create_dir_all(&states_dir)
        .with_context(|| format!("creating {}", states_dir.display()))?;
    std::fs::create_dir_all(&qstates_dir)
        .with_context(|| format!("creating {}", qstates_dir.display()))?;

    io::write_jsonl(&dir.join("traces.jsonl"), &ds.raw_traces)?;
    let layer = ds.states.first().map(|s| s.layer).unwrap_or_default();
    for set in &ds.states {
        io::write_hidden_states(&states_dir, set)?;
    }
    for (qid, m) in &ds.question_states {
        let set = HiddenStateSet {
            question_id: qid.clone(),
            layer,
            states: m.clone(),
        };
        io::write_hidden_states(&qstates_dir, &set)?;
    }
    let continuations =
        synthetic::gen_continuation_outcomes(ds, ds.config.seed ^ CONTINUATION_SEED_SALT)?;
    io::write_jsonl(&dir.join("continuations.jsonl"), &continuations)?;

    let truth_path = dir.join("truth.json");
    let truth = TruthOut {
        delta: &ds.truth.delta,
        trigger_probs: &ds.truth.trigger_probs,
        z_draws: &ds.truth.z_draws,
        cluster_of_problem: &ds.truth.cluster_of_problem,
        content_basis: ds.truth.content_basis.iter_rows().collect(),
    };
    io::write_json_file(&truth_path, &truth)?;
    io::write_meta_sidecar(&truth_path)?;
    Ok(())
}

pub fn cmd_simulate(cfg: &FileConfig, a: &SimulateArgs) -> Result<()> {
    let mut sim: SyntheticConfig = match a.sim_config.as_deref() {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("generator settings {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("generator settings {}: {e}", p.display())))?
        }
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = a.seed.or(cfg.seed) {
        sim.seed = seed;
    }
    sim.validate()?;
    let tau = a.tau.or(cfg.tau).unwrap_or(DEFAULT_TAU);

    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;

    #[derive(Serialize)]
    struct Params<'a> {
        command: &'a str,
        generator: &'a SyntheticConfig,
        tau: f64,
    }
    let hash = params_hash(&Params {
        command: "simulate",
        generator: &sim,
        tau,
    })?;
    // The generator labels its own traces, so its cue set is the built-in
    // one by construction.
    let lexicon_hash = KeywordLexicon::default().hash();

    let dataset = synthetic::gen_dataset(&sim)?;
    write_dataset(&a.out_dir, &dataset)?;
    log::info!(
        "generated {} problems into {}",
        dataset.raw_traces.len(),
        a.out_dir.display()
    );

    let run_dilution = matches!(a.experiment, ExperimentArg::Dilution | ExperimentArg::All);
    let run_sweep = matches!(a.experiment, ExperimentArg::Sweep | ExperimentArg::All);
    let run_hard_soft = matches!(a.experiment, ExperimentArg::HardSoft | ExperimentArg::All);
    let run_soft_coeff = matches!(a.experiment, ExperimentArg::SoftCoeff | ExperimentArg::All);
    let run_attenuation = matches!(
        a.experiment,
        ExperimentArg::Attenuation | ExperimentArg::All
    );

    if run_dilution {
        let report = synthetic::verify_dilution(&sim)?;
        write_report(
            &a.out_dir.join("dilution.json"),
            hash.clone(),
            lexicon_hash.clone(),
            report,
        )?;
    }
    if run_sweep {
        let report = synthetic::run_threshold_sweep(&sim, &synthetic::default_tau_grid())?;
        write_report(
            &a.out_dir.join("sweep.json"),
            hash.clone(),
            lexicon_hash.clone(),
            report,
        )?;
    }
    if run_hard_soft {
        let report = synthetic::compare_hard_soft(&sim, tau)?;
        write_report(
            &a.out_dir.join("hard_soft.json"),
            hash.clone(),
            lexicon_hash.clone(),
            report,
        )?;
    }
    if run_soft_coeff {
        let report = synthetic::soft_coefficient_identity(&sim.trigger, 10_000, sim.seed)?;
        write_report(
            &a.out_dir.join("soft_coeff.json"),
            hash.clone(),
            lexicon_hash.clone(),
            report,
        )?;
    }
    if run_attenuation {
        let report = synthetic::verify_projection_attenuation(&sim)?;
        write_report(
            &a.out_dir.join("attenuation.json"),
            hash.clone(),
            lexicon_hash.clone(),
            report,
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Gold answer override rows for `--answers`.
#[derive(Debug, Deserialize)]
struct AnswerRecord {
    question_id: String,
    gold_answer: String,
}

pub fn cmd_metrics(cfg: &FileConfig, a: &MetricsArgs) -> Result<()> {
    let lexicon = load_lexicon(a.lexicon.as_deref(), cfg)?;
    let traces: Vec<RawTrace> = io::read_jsonl(&a.traces)?;
    let mut answers: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = a.answers.as_deref() {
        for rec in io::read_jsonl::<AnswerRecord>(path)? {
            if answers
                .insert(rec.question_id.clone(), rec.gold_answer)
                .is_some()
            {
                return Err(Error::DuplicateRecord(format!(
                    "gold answer listed twice: {}",
                    rec.question_id
                ))
                .into());
            }
        }
    }

    let mut w = csv::Writer::from_path(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    w.write_record([
        "question_id",
        "word_count",
        "reflection_count",
        "boxed_answer",
        "gold_answer",
        "exact_match",
    ])
    .context("writing CSV header")?;
    for t in &traces {
        let words = segment::word_count(&t.text);
        let reflections = segment::count_reflection_keywords(&t.text, &lexicon);
        let boxed = segment::extract_boxed_answer(&t.text)
            .with_context(|| format!("extracting answer for {}", t.question_id))?;
        let gold = answers
            .get(&t.question_id)
            .cloned()
            .or_else(|| t.gold_answer.clone());
        let matched = match (&boxed, &gold) {
            (Some(b), Some(g)) => segment::exact_match(b, g).to_string(),
            _ => String::new(),
        };
        w.write_record([
            t.question_id.as_str(),
            &words.to_string(),
            &reflections.to_string(),
            boxed.as_deref().unwrap_or(""),
            gold.as_deref().unwrap_or(""),
            &matched,
        ])
        .with_context(|| format!("writing row for {}", t.question_id))?;
    }
    w.flush().context("flushing CSV")?;

    #[derive(Serialize)]
    struct Params<'a> {
        command: &'a str,
        lexicon_hash: &'a str,
    }
    let hash = params_hash(&Params {
        command: "metrics",
        lexicon_hash: &lexicon.hash(),
    })?;
    io::write_meta_sidecar_with_note(
        &a.out,
        Some(&format!(
            "config_hash={hash} lexicon_hash={}",
            lexicon.hash()
        )),
    )?;
    log::info!("wrote metrics for {} traces", traces.len());
    Ok(())
}
