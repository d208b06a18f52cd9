//! End-to-end benchmarks for the steering-vector pipeline hot paths:
//! paragraph segmentation, stability scoring, vector construction, and
//! content-subspace fitting. All inputs come from the synthetic generator
//! with a fixed seed so runs are comparable across machines and commits.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use steerkit_core::builder::{build_combined, build_seal, build_stable};
use steerkit_core::segment::{boundary_records, default_delimiter, segment_trace};
use steerkit_core::stability::{score_all, DEFAULT_TAU};
use steerkit_core::subspace::{fit_content_subspace, DEFAULT_RANK};
use steerkit_core::synthetic::{
    gen_continuation_outcomes, prepare_scored, question_embeddings, SyntheticConfig,
    CONTINUATION_SEED_SALT,
};
use steerkit_core::types::Matrix;
use steerkit_core::KeywordLexicon;

/// Scaled-down generator settings: large enough to exercise the real code
/// paths, small enough that a full criterion run stays in the seconds range.
fn bench_config() -> SyntheticConfig {
    SyntheticConfig {
        dim: 64,
        n_problems: 60,
        boundaries_per_problem: 4,
        executions_per_problem: 2,
        seed: 7,
        ..SyntheticConfig::default()
    }
}

fn pipeline_benches(c: &mut Criterion) {
    let config = bench_config();
    let prep = prepare_scored(&config).expect("synthetic pipeline");
    let lexicon = KeywordLexicon::default();
    let delimiter = default_delimiter();
    let continuations =
        gen_continuation_outcomes(&prep.dataset, config.seed ^ CONTINUATION_SEED_SALT)
            .expect("continuation outcomes");
    let pooled = question_embeddings(&prep.dataset).expect("question embeddings");
    let rows: Vec<_> = pooled.into_iter().map(|e| e.q).collect();
    let questions = Matrix::from_rows(&rows).expect("question matrix");
    let subspace = fit_content_subspace(&questions, DEFAULT_RANK).expect("content subspace");

    c.bench_function("segment_traces", |b| {
        b.iter(|| {
            for raw in &prep.dataset.raw_traces {
                let record = segment_trace(black_box(raw), &lexicon, &delimiter).unwrap();
                black_box(boundary_records(&record));
            }
        })
    });

    c.bench_function("score_stability", |b| {
        b.iter(|| {
            black_box(
                score_all(
                    black_box(&prep.boundaries),
                    black_box(&continuations),
                    &lexicon,
                    &delimiter,
                )
                .unwrap(),
            )
        })
    });

    c.bench_function("build_seal", |b| {
        b.iter(|| black_box(build_seal(black_box(&prep.build)).unwrap()))
    });

    c.bench_function("build_stable", |b| {
        b.iter(|| {
            black_box(build_stable(black_box(&prep.build), &prep.report, DEFAULT_TAU).unwrap())
        })
    });

    c.bench_function("build_combined", |b| {
        b.iter(|| {
            black_box(
                build_combined(black_box(&prep.build), &prep.report, DEFAULT_TAU, &subspace)
                    .unwrap(),
            )
        })
    });

    c.bench_function("fit_content_subspace", |b| {
        b.iter(|| black_box(fit_content_subspace(black_box(&questions), DEFAULT_RANK).unwrap()))
    });
}

criterion_group!(benches, pipeline_benches);
criterion_main!(benches);
