use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use ehrtwin::evaluation::evaluate_corpus;
use ehrtwin::synthesizer::{load_tables, synthesize, SyntheticCase, TemplateSet};
use ehrtwin::{ExecMode, Pipeline, TerminologyIndex};

/// The fixture corpus, replicated under fresh patient ids.
fn corpus(copies: usize) -> Vec<SyntheticCase> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/tables");
    let index = TerminologyIndex::bundled();
    let templates = TemplateSet::default();
    let records = load_tables(dir).expect("fixture tables").records;
    let mut out = Vec::new();
    for copy in 0..copies {
        for r in &records {
            let mut r = r.clone();
            r.patient_id = format!("{}-{copy}", r.patient_id);
            out.push(synthesize(&r, &templates, &index).expect("fixture synthesizes").case);
        }
    }
    out
}

fn bench_modes(c: &mut Criterion) {
    let pipeline = Pipeline::bundled();
    let modes = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

    let mut group = c.benchmark_group("analyze");
    for copies in [1, 8, 32] {
        let cases = corpus(copies);
        let notes: Vec<_> = cases.iter().map(|c| c.note.clone()).collect();
        group.throughput(Throughput::Elements(notes.len() as u64));
        for (name, mode) in modes {
            group.bench_with_input(BenchmarkId::new(name, notes.len()), &notes, |b, notes| {
                b.iter(|| pipeline.analyze_all(notes, mode))
            });
        }
    }
    group.finish();

    let mut group = c.benchmark_group("twins");
    let cases = corpus(8);
    let notes: Vec<_> = cases.iter().map(|c| c.note.clone()).collect();
    group.throughput(Throughput::Elements(notes.len() as u64));
    for (name, mode) in modes {
        group.bench_with_input(BenchmarkId::new(name, notes.len()), &notes, |b, notes| {
            b.iter(|| pipeline.twins(notes, mode))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("evaluate");
    group.sample_size(20);
    for (name, mode) in modes {
        group.bench_with_input(BenchmarkId::new(name, cases.len()), &cases, |b, cases| {
            b.iter(|| evaluate_corpus(cases, &pipeline, mode).expect("evaluates"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_modes);
criterion_main!(benches);
