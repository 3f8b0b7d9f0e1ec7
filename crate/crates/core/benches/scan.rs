use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tripmem_core::embedding::{EmbeddingProvider, ReferenceEmbedder};
use tripmem_core::retrieval::index::{ExactScanIndex, VectorIndex};
use tripmem_core::retrieval::{execute_many, execute_query, MemoryQuery, RetrievalThresholds};
use tripmem_core::store::{BulkRecord, MemoryStore};

fn names(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    (0..n)
        .map(|i| format!("entity {i} {}", rng.gen::<u32>()))
        .collect()
}

fn range_search(c: &mut Criterion) {
    let embedder = ReferenceEmbedder::new(256, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("range_search");
    for n in [10_000usize, 100_000] {
        let mut index = ExactScanIndex::new(256);
        for (i, name) in names(n, &mut rng).iter().enumerate() {
            index.insert(i as u64, embedder.embed(name).unwrap().values());
        }
        let query = embedder.embed("entity 42").unwrap();
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| index.range_search_sequential(query.values(), 0.7))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| index.range_search_parallel(query.values(), 0.7))
        });
    }
    group.finish();
}

fn records(n: usize) -> Vec<BulkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vocab = names(n / 5, &mut rng);
    (0..n)
        .map(|i| BulkRecord {
            subject: vocab[rng.gen_range(0..vocab.len())].clone(),
            relation: format!("relation {}", i % 25),
            object: vocab[rng.gen_range(0..vocab.len())].clone(),
            provenance: None,
        })
        .collect()
}

fn insertion(c: &mut Criterion) {
    let recs = records(20_000);
    let mut group = c.benchmark_group("insert");
    group.sample_size(10);
    group.bench_function("one_by_one", |b| {
        b.iter(|| {
            let mut store = MemoryStore::with_reference_embedder(256, 0);
            for r in &recs {
                store
                    .insert_triple(&r.subject, &r.relation, &r.object, None)
                    .unwrap();
            }
            store
        })
    });
    group.bench_function("batch", |b| {
        b.iter(|| {
            let mut store = MemoryStore::with_reference_embedder(256, 0);
            store.insert_batch(&recs).unwrap();
            store
        })
    });
    group.finish();
}

fn queries(c: &mut Criterion) {
    let recs = records(50_000);
    let mut store = MemoryStore::with_reference_embedder(256, 0);
    store.insert_batch(&recs).unwrap();
    let qs: Vec<MemoryQuery> = recs
        .iter()
        .take(64)
        .map(|r| MemoryQuery::object(r.subject.clone(), r.relation.clone()))
        .collect();
    let t = RetrievalThresholds::default();
    let mut group = c.benchmark_group("queries");
    group.bench_function("loop", |b| {
        b.iter(|| {
            qs.iter()
                .map(|q| execute_query(&store, q, &t).unwrap().raw_count)
                .sum::<usize>()
        })
    });
    group.bench_function("execute_many", |b| {
        b.iter(|| execute_many(&store, &qs, &t).unwrap().len())
    });
    group.finish();
}

criterion_group!(benches, range_search, insertion, queries);
criterion_main!(benches);
