use std::hint::black_box;

use ats_core::ats::image_triples;
use ats_core::learner::svm::train_gsvm;
use ats_core::learner::{grid_search, Grid, SmoParams};
use ats_core::{extract_spam, lsbm_embed, synth_cover, EmbedConfig, SpamParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn embedding(c: &mut Criterion) {
    let mut g = c.benchmark_group("lsbm_embed");
    for size in [256usize, 512] {
        let img = synth_cover(1, size, size, 4.0).unwrap();
        let cfg = EmbedConfig::lsbm(0.25, 7).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(size), &img, |b, img| {
            b.iter(|| lsbm_embed(black_box(img), &cfg))
        });
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let mut g = c.benchmark_group("extract_spam");
    let params = SpamParams::default();
    for size in [256usize, 512] {
        let img = synth_cover(2, size, size, 4.0).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(size), &img, |b, img| {
            b.iter(|| extract_spam(black_box(img), &params).unwrap())
        });
    }
    g.finish();
}

/// Standardized A/C training rows from `n` synthetic covers.
fn training_rows(n: usize, dims: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let covers: Vec<_> = (0..n)
        .map(|i| {
            synth_cover(100 + i as u64, 128, 128, 6.0)
                .unwrap()
                .with_id(format!("b{i}"))
        })
        .collect();
    let triples = image_triples(
        &covers,
        &EmbedConfig::lsbm(0.25, 3).unwrap(),
        &SpamParams::default(),
    )
    .unwrap();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (t, label) in triples.iter().flat_map(|t| [(&t.a, -1.0), (&t.c, 1.0)]) {
        rows.push(t.values[..dims].to_vec());
        y.push(label);
    }
    for j in 0..dims {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / rows.len() as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in &mut rows {
            r[j] = (r[j] - mean) / sd;
        }
    }
    (rows, y)
}

fn svm(c: &mut Criterion) {
    let mut g = c.benchmark_group("train_gsvm");
    g.sample_size(10);
    for n in [50usize, 125] {
        let (rows, y) = training_rows(n, 500);
        g.bench_with_input(
            BenchmarkId::from_parameter(2 * n),
            &(rows, y),
            |b, (rows, y)| b.iter(|| train_gsvm(black_box(rows), y, 2.0, 1.0 / 500.0).unwrap()),
        );
    }
    g.finish();

    let mut g = c.benchmark_group("grid_search");
    g.sample_size(10);
    let (rows, y) = training_rows(50, 500);
    g.bench_function("100x500", |b| {
        b.iter(|| {
            grid_search(
                black_box(&rows),
                &y,
                &Grid::default(),
                5,
                0,
                &SmoParams::default(),
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, embedding, features, svm);
criterion_main!(benches);
