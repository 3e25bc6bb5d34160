use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triformer_core::attention::{canonical_self_attention, CanonicalProjections};
use triformer_core::scaling::bench_config;
use triformer_core::{Graph, ParamStore, Tensor, TriformerModel};

const D: usize = 32;

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward");
    group.sample_size(10);
    for h in [256usize, 512, 1024, 2048] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let embeds = Tensor::randn(&[1, h, D], 1.0, &mut rng);
        let model = TriformerModel::new(bench_config(h, 1, D).unwrap()).unwrap();
        group.bench_with_input(BenchmarkId::new("patch", h), &embeds, |b, x| {
            b.iter(|| {
                let mut g = Graph::new();
                let e = g.constant(x.clone()).unwrap();
                model.forward_embedded(&mut g, e, 1).unwrap()
            })
        });

        let mut store = ParamStore::new();
        let proj = CanonicalProjections::init(&mut store, "canonical", D, &mut rng);
        group.bench_with_input(BenchmarkId::new("canonical", h), &embeds, |b, x| {
            b.iter(|| {
                let mut g = Graph::new();
                let e = g.constant(x.clone()).unwrap();
                let wq = g.param(&store, proj.query).unwrap();
                let wk = g.param(&store, proj.key).unwrap();
                let wv = g.param(&store, proj.value).unwrap();
                canonical_self_attention(&mut g, e, wq, wk, wv).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, attention);
criterion_main!(benches);
