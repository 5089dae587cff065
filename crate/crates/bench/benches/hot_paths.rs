use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rai_impact::conventionality::permute_null;
use rai_impact::linkage::normalized_levenshtein;
use rai_impact::metrics::kaplan_meier;
use rai_impact::{MockEmbedder, VenuePairObservation};

const WORDS: [&str; 16] = [
    "fair", "private", "model", "learning", "graph", "robust", "carbon", "audit", "explain", "neural", "data",
    "federated", "bias", "energy", "attack", "policy",
];

fn phrase(rng: &mut ChaCha8Rng) -> String {
    (0..rng.gen_range(4..10)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn top_match(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("top_match");
    for n in [1_000usize, 10_000] {
        let texts: Vec<String> = (0..=n).map(|_| phrase(&mut rng)).collect();
        let store = MockEmbedder::default()
            .embed_all(texts.iter().enumerate().map(|(i, t)| (format!("k{i}"), t.as_str())))
            .unwrap();
        let cands: Vec<String> = (1..=n).map(|i| format!("k{i}")).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &cands, |b, cands| {
            b.iter(|| store.top_match(black_box("k0"), cands).unwrap())
        });
    }
    g.finish();
}

fn null_model(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let obs: Vec<VenuePairObservation> = (0..10_000)
        .map(|k| {
            let (a, b) = (rng.gen_range(0..30), rng.gen_range(0..30));
            VenuePairObservation::new(&format!("V{a:02}"), &format!("V{b:02}"), 2015 + (k % 8), 1)
        })
        .collect();
    let mut g = c.benchmark_group("permute_null");
    g.sample_size(10);
    g.bench_function("10k_rows_100_iterations", |b| b.iter(|| permute_null(black_box(&obs), 100, 7).unwrap()));
    g.finish();
}

fn survival(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows: Vec<(f64, bool)> = (0..10_000).map(|_| (rng.gen_range(0..20) as f64, rng.gen_bool(0.6))).collect();
    c.bench_function("kaplan_meier_10k", |b| b.iter(|| kaplan_meier(black_box(&rows)).unwrap()));
}

fn levenshtein(c: &mut Criterion) {
    c.bench_function("normalized_levenshtein_names", |b| {
        b.iter(|| normalized_levenshtein(black_box("Margaret E. Hamilton"), black_box("Margret Hamiltn")))
    });
}

criterion_group!(benches, top_match, null_model, survival, levenshtein);
criterion_main!(benches);
