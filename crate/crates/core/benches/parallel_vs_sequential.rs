use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use strata_core::consolidation::HeuristicExtractor;
use strata_core::eval::{run_benchmark, BenchOptions, Benchmark, OracleReader};
use strata_core::exec::{self, Execution};
use strata_core::learning::{train, QaEnv, RewardMode, TrainConfig, WeightPolicy};
use strata_core::lexical::{tokenize, Bm25Index};
use strata_core::retrieval::RetrievalConfig;
use strata_core::synthetic::qa_corpus_scaled;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn bm25_batch(c: &mut Criterion) {
    let ds = qa_corpus_scaled(10, 1);
    let docs: Vec<(String, String)> = ds
        .unique_sessions()
        .iter()
        .flat_map(|s| s.to_entries("bench"))
        .map(|e| (e.id, e.content))
        .collect();
    let index = Bm25Index::build(docs.iter().map(|(id, t)| (id.clone(), t.as_str()))).unwrap();
    let queries: Vec<Vec<String>> = ds.questions.iter().map(|q| tokenize(&q.question)).collect();
    let mut g = c.benchmark_group("bm25_score_all");
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| exec::map(e, &queries, |q| black_box(index.score_all(q))))
        });
    }
    g.finish();
}

fn benchmark_run(c: &mut Criterion) {
    let ds = qa_corpus_scaled(5, 1);
    let reader = OracleReader::from_dataset(&ds);
    let bench = Benchmark::prepare(ds, &HeuristicExtractor, None, Execution::Parallel).unwrap();
    let mut g = c.benchmark_group("run_benchmark");
    g.sample_size(20);
    for e in MODES {
        let opts = BenchOptions {
            execution: e,
            ..BenchOptions::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &opts, |b, opts| {
            b.iter(|| run_benchmark(&bench, &reader, opts).unwrap())
        });
    }
    g.finish();
}

fn training_rollouts(c: &mut Criterion) {
    let ds = qa_corpus_scaled(5, 1);
    let reader = OracleReader::from_dataset(&ds);
    let bench = Benchmark::prepare(ds, &HeuristicExtractor, None, Execution::Parallel).unwrap();
    let env = QaEnv {
        bench: &bench,
        reader: &reader,
        retrieval: RetrievalConfig::default(),
        mode: RewardMode::TaskSuccess,
    };
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let mut g = c.benchmark_group("train_epoch");
    g.sample_size(10);
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| train(&env, WeightPolicy::default(), &cfg, 7, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bm25_batch, benchmark_run, training_rollouts);
criterion_main!(benches);
