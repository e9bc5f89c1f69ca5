use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use psearch::bfv::{encrypt_values, keygen, Evaluator, Plaintext, SheParams};
use psearch::cluster::{kmeans, scale_signed, synthetic_corpus};
use psearch::encsearch::{server_compute, Client, ServerOptions};
use psearch::packing::{server_init, DbConfig};
use psearch::par::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

const STRATEGIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn primitives(c: &mut Criterion) {
    let p = SheParams::search();
    let (sk, ek) = keygen(&p, &[p.rotation_element(1)], true, 1).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let v: Vec<u64> = (0..p.n()).map(|_| rng.random_range(0..p.t())).collect();
    let a = encrypt_values(&p, &sk, &v, &mut rng).unwrap();
    let b = encrypt_values(&p, &sk, &v, &mut rng).unwrap();
    let pt = Plaintext::encode(&p, &v).unwrap().prepare(&p, a.level());
    let ev = Evaluator::new(&p);
    let mut g = c.benchmark_group("she");
    g.sample_size(20);
    g.bench_function("ct_ct_add", |bn| bn.iter(|| ev.add(black_box(&a), &b).unwrap()));
    g.bench_function("pt_ct_mult", |bn| bn.iter(|| ev.mul_plain(black_box(&a), &pt).unwrap()));
    g.bench_function("ct_rotate", |bn| bn.iter(|| ev.rotate(black_box(&a), 1, &ek).unwrap()));
    g.bench_function("ct_ct_mult", |bn| bn.iter(|| ev.mul(black_box(&a), &b, &ek).unwrap()));
    g.finish();
}

fn data_parallel(c: &mut Criterion) {
    let cfg = DbConfig { k: 8, ..DbConfig::default() };
    let corpus = synthetic_corpus(2000, cfg.d, 16, 0.6, 4, 0.1, 3).unwrap();
    let meta: Vec<Vec<u8>> = (0..2000).map(|i| format!("doc {i}").into_bytes()).collect();

    let mut g = c.benchmark_group("kmeans");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bn, &exec| {
            bn.iter(|| kmeans(&corpus.embeddings, cfg.k, 10, 3, exec).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("server_init");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |bn, &exec| {
            bn.iter(|| server_init(&corpus.embeddings, meta.clone(), &cfg, exec).unwrap())
        });
    }
    g.finish();

    let db = Arc::new(server_init(&corpus.embeddings, meta, &cfg, Exec::default()).unwrap());
    let client = Client::new(&cfg).unwrap();
    let q = scale_signed(corpus.queries.row(0), client.fixed_point()).unwrap();
    let (query, _) = client.real_query(&q, 0, 0, 5).unwrap();
    let mut g = c.benchmark_group("server_compute");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        let opts = ServerOptions { exec, ..ServerOptions::default() };
        g.bench_with_input(BenchmarkId::from_parameter(name), &opts, |bn, opts| {
            bn.iter(|| server_compute(&db, &query, opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, primitives, data_parallel);
criterion_main!(benches);
