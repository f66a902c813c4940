use std::hint::black_box;
use std::sync::Arc;

use cfc_core::caption_curation::{tokenize, vocab_stats, LexiconTagger};
use cfc_core::catalog::ClipStatus;
use cfc_core::providers::{Providers, ReferenceBackend};
use cfc_core::scene_split::{split_videos, SplitParams};
use cfc_core::scoring::{score_clips, CategoryModel};
use cfc_core::synthetic::{SyntheticCorpus, SyntheticFrames};
use cfc_core::Executor;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn executors() -> [(&'static str, Executor); 2] {
    [("sequential", Executor::sequential()), ("parallel", Executor::parallel(None))]
}

fn bench_split(c: &mut Criterion) {
    let corpus = SyntheticCorpus::generate(7);
    let videos = corpus.metrics(&Executor::default());
    let params = SplitParams::default();
    let mut group = c.benchmark_group("split");
    for (name, exec) in executors() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| split_videos(black_box(&videos), &params, &exec))
        });
    }
    group.finish();
}

fn bench_scoring(c: &mut Criterion) {
    let corpus = Arc::new(SyntheticCorpus::generate(7));
    let videos = corpus.metrics(&Executor::default());
    let clips: Vec<_> = split_videos(&videos, &SplitParams::default(), &Executor::default())
        .into_iter()
        .filter(|r| r.status == ClipStatus::Split)
        .collect();
    let backend = ReferenceBackend::new(Arc::new(SyntheticFrames(corpus.clone())), corpus.ocr_sidecar(), 512);
    let providers = Providers::new(Arc::new(backend), 512);
    let model = CategoryModel::build(&providers).unwrap();
    let mut group = c.benchmark_group("score");
    group.sample_size(10);
    for (name, exec) in executors() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| score_clips(black_box(&clips), &providers, &model, &exec))
        });
    }
    group.finish();
}

fn bench_vocab(c: &mut Criterion) {
    let words = ["a", "dog", "runs", "across", "the", "green", "field", "while", "children", "play", "nearby"];
    let corpus: Vec<_> = (0..20_000)
        .map(|i| {
            let n = 8 + i % 17;
            let caption: Vec<&str> = (0..n).map(|j| words[(i * 7 + j * 3) % words.len()]).collect();
            tokenize(&caption.join(" "))
        })
        .collect();
    let tagger = LexiconTagger::reference();
    let mut group = c.benchmark_group("vocab");
    for (name, exec) in executors() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| vocab_stats(black_box(&corpus), &tagger, &exec))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_split, bench_scoring, bench_vocab);
criterion_main!(benches);
