use proptest::prelude::*;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;

const T: u64 = 17;

fn toy(n: usize) -> Arc<SheParams> {
    pir_params(n, T).unwrap()
}

/// Independent brute force: walk d₁ instead of d₂.
fn brute_dims(c: usize, gamma: f64) -> f64 {
    (1..=c).map(|d1| dims_cost(d1, c.div_ceil(d1), gamma)).fold(f64::INFINITY, f64::min)
}

fn indicator_values(params: &SheParams, sk: &SecretKey, cts: &[Ciphertext]) -> Vec<Vec<u64>> {
    cts.iter().map(|c| decrypt(params, sk, c).unwrap().coeffs().to_vec()).collect()
}

fn one_hot(n: usize, on: bool) -> Vec<u64> {
    let mut v = vec![0; n];
    v[0] = on as u64;
    v
}

fn random_entries(count: usize, len: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut e = vec![0u8; len];
            rng.fill_bytes(&mut e);
            e
        })
        .collect()
}

#[test]
fn dims_match_exhaustive_search() {
    let mut c = 64;
    while c <= 8192 {
        let (d1, d2) = choose_dims(c, DEFAULT_GAMMA).unwrap();
        assert!(d1 * d2 >= c);
        assert_eq!(dims_cost(d1, d2, DEFAULT_GAMMA), brute_dims(c, DEFAULT_GAMMA), "C = {c}");
        c *= 2;
    }
    assert_eq!(choose_dims(4096, 5.0).unwrap(), (36, 114));
}

#[test]
fn dims_formula() {
    assert_eq!(choose_dims_formula(4096, 5.0), (35, 120));
    // rounding loses a little against the integer optimum
    assert!(dims_cost(35, 120, 5.0) > dims_cost(36, 114, 5.0));
    let (d1, d2) = choose_dims_formula(10_000, 1e-9);
    assert_eq!((d1, d2), (100, 100));
    let ratio = choose_dims_formula(1 << 20, 5.0).1 as f64 / 1024.0;
    assert!((ratio - 3.5f64.sqrt()).abs() < 1e-3);
    assert!(choose_dims(0, 5.0).is_err());
    assert!(choose_dims(10, 0.0).is_err());
}

#[test]
fn expansion_exhaustive_small() {
    let params = toy(64);
    for linearize in [true, false] {
        let plan = ExpansionPlan::new(64, 4, 4, linearize).unwrap();
        let ev = Evaluator::new(&params);
        for row in 0..4 {
            for col in 0..4 {
                let (q, sk) = encode_pir_query(&params, &plan, row, col, &KeySet::PerLevel, (row * 4 + col) as u64).unwrap();
                let out = oblivious_expand(&ev, &plan, &q).unwrap();
                assert_eq!(out.len(), 8);
                let vals = indicator_values(&params, &sk, &out);
                for (i, v) in vals.iter().enumerate() {
                    let on = if i < 4 { i == row } else { i - 4 == col };
                    assert_eq!(v, &one_hot(64, on), "row {row} col {col} output {i} linearize {linearize}");
                }
            }
        }
    }
}

#[test]
fn first_position_indicators() {
    let params = toy(64);
    let plan = ExpansionPlan::new(64, 3, 5, true).unwrap();
    let (q, sk) = encode_pir_query(&params, &plan, 0, 0, &KeySet::Reduced, 1).unwrap();
    let out = oblivious_expand(&Evaluator::new(&params), &plan, &q).unwrap();
    let vals = indicator_values(&params, &sk, &out);
    for (i, v) in vals.iter().enumerate() {
        assert_eq!(v, &one_hot(64, i == 0 || i == 3));
    }
}

#[test]
fn linearization_skips_substitutions() {
    let plan = ExpansionPlan::new(4096, 36, 114, true).unwrap();
    let naive = ExpansionPlan { linearize: false, ..plan };
    let (nodes, depth) = plan.shape();
    let (naive_nodes, naive_depth) = naive.shape();
    assert_eq!(naive_nodes, vec![1, 2, 4, 8, 16, 32, 64, 128][..plan.levels()].to_vec());
    assert!(naive_depth.iter().all(|&d| d == 8));
    assert!(nodes.iter().sum::<usize>() < naive_nodes.iter().sum::<usize>());
    assert!(depth.iter().all(|&d| d <= 8));
    let full = naive.substitution_cost(&naive.per_level_elements()).unwrap();
    let reduced = plan.substitution_cost(&plan.reduced_elements()).unwrap();
    assert_eq!(full, 255);
    assert!(reduced <= full);
    assert!(plan.reduced_elements().len() < naive.per_level_elements().len());
}

#[test]
fn reduced_keys_match_naive_outputs() {
    let params = toy(64);
    // with every level fully used there is nothing for derived keys to save
    let full = ExpansionPlan::new(64, 4, 4, true).unwrap();
    assert_eq!(full.reduced_elements(), full.per_level_elements());
    let plan = ExpansionPlan::new(64, 2, 3, true).unwrap();
    let naive = ExpansionPlan { linearize: false, ..plan };
    let reduced = plan.reduced_elements();
    assert!(reduced.len() < naive.per_level_elements().len(), "{reduced:?}");
    for (row, col) in [(0, 0), (1, 2), (0, 1), (1, 0)] {
        let (qn, skn) = encode_pir_query(&params, &naive, row, col, &KeySet::PerLevel, 5).unwrap();
        let (qr, skr) = encode_pir_query(&params, &plan, row, col, &KeySet::Reduced, 5).unwrap();
        let (evn, evr) = (Evaluator::new(&params), Evaluator::new(&params));
        let on = oblivious_expand(&evn, &naive, &qn).unwrap();
        let or = oblivious_expand(&evr, &plan, &qr).unwrap();
        assert_eq!(indicator_values(&params, &skn, &on), indicator_values(&params, &skr, &or));
        let (sn, sr) = (evn.counts().substitutions as usize, evr.counts().substitutions as usize);
        assert!(sr <= sn);
        assert_eq!(sn, naive.substitution_cost(&naive.per_level_elements()).unwrap());
        assert_eq!(sr, plan.substitution_cost(&reduced).unwrap());
    }
}

#[test]
fn missing_expansion_key() {
    let params = toy(64);
    let plan = ExpansionPlan::new(64, 4, 4, false).unwrap();
    let (q, _) = encode_pir_query(&params, &plan, 1, 1, &KeySet::Custom(vec![plan.element(0)]), 2).unwrap();
    assert!(matches!(oblivious_expand(&Evaluator::new(&params), &plan, &q), Err(Error::MissingKey(_))));
}

#[test]
fn query_errors() {
    let params = toy(64);
    let plan = ExpansionPlan::new(64, 4, 4, true).unwrap();
    assert!(encode_pir_query(&params, &plan, 4, 0, &KeySet::PerLevel, 0).is_err());
    assert!(encode_pir_query(&params, &plan, 0, 4, &KeySet::PerLevel, 0).is_err());
    assert!(ExpansionPlan::new(64, 40, 40, true).is_err());
    assert!(ExpansionPlan::new(64, 0, 4, true).is_err());
}

#[test]
fn respond_matches_lookup_all_positions() {
    let params = toy(64);
    let entries = random_entries(16, 40, 9);
    let db = PirDatabase::with_dims(&params, &entries, 4, 4).unwrap();
    assert_eq!(db.chunks, 2);
    for idx in 0..16 {
        let (row, col) = db.position(idx);
        let (q, sk) = encode_pir_query(&params, &db.plan(true), row, col, &KeySet::Reduced, idx as u64).unwrap();
        let resp = pir_answer(&db, &q, true, Rescale::Lazy).unwrap();
        assert!(!resp.budget_exhausted);
        assert_eq!(decode_response(&params, &sk, &resp, 40).unwrap(), entries[idx], "index {idx}");
    }
}

#[test]
fn identical_buckets() {
    let params = toy(64);
    let entries = vec![b"same bucket".to_vec(); 7];
    let db = PirDatabase::new(&params, &entries, DEFAULT_GAMMA).unwrap();
    for idx in [0, 3, 6] {
        let (row, col) = db.position(idx);
        let (q, sk) = encode_pir_query(&params, &db.plan(true), row, col, &KeySet::PerLevel, 3).unwrap();
        let resp = pir_answer(&db, &q, true, Rescale::Lazy).unwrap();
        assert_eq!(decode_response(&params, &sk, &resp, 11).unwrap(), b"same bucket");
    }
}

#[test]
fn lazy_and_eager_rescaling_agree() {
    let params = toy(64);
    let entries = random_entries(12, 20, 4);
    let db = PirDatabase::with_dims(&params, &entries, 3, 4).unwrap();
    let (q, sk) = encode_pir_query(&params, &db.plan(true), 2, 1, &KeySet::Reduced, 8).unwrap();
    let expanded = oblivious_expand(&Evaluator::new(&params), &db.plan(true), &q).unwrap();
    let lazy = pir_respond(&db, &expanded, &q.evk, Rescale::Lazy).unwrap();
    let eager = pir_respond(&db, &expanded, &q.evk, Rescale::Eager).unwrap();
    assert_eq!(lazy.counts.rescales, 1);
    assert_eq!(eager.counts.rescales, 3);
    assert_eq!(lazy.counts.relins, 1);
    let a = decode_response(&params, &sk, &lazy, 20).unwrap();
    assert_eq!(a, decode_response(&params, &sk, &eager, 20).unwrap());
    assert_eq!(a, entries[9]);
}

#[test]
fn large_entry_path() {
    let params = toy(64);
    // eight plaintexts per entry
    let entries = random_entries(6, 256, 21);
    let db = PirDatabase::with_dims(&params, &entries, 2, 3).unwrap();
    assert_eq!(db.chunks, 8);
    for idx in 0..6 {
        let (row, col) = db.position(idx);
        let (q, sk) = encode_pir_query(&params, &db.plan(true), row, col, &KeySet::Reduced, 40 + idx as u64).unwrap();
        let expanded = oblivious_expand(&Evaluator::new(&params), &db.plan(true), &q).unwrap();
        let std = pir_respond(&db, &expanded, &q.evk, Rescale::Lazy).unwrap();
        let large = pir_respond_large(&db, &expanded, &q.evk).unwrap();
        assert_eq!(std.counts.ct_mult, 2 * 8);
        assert_eq!(large.counts.ct_mult, 2 * 3);
        let a = decode_response(&params, &sk, &large, 256).unwrap();
        assert_eq!(a, decode_response(&params, &sk, &std, 256).unwrap());
        assert_eq!(a, entries[idx]);
    }
}

#[test]
fn large_path_single_chunk() {
    let params = toy(64);
    let entries = random_entries(9, 30, 2);
    let db = PirDatabase::with_dims(&params, &entries, 3, 3).unwrap();
    assert_eq!(db.chunks, 1);
    let (q, sk) = encode_pir_query(&params, &db.plan(true), 1, 2, &KeySet::PerLevel, 1).unwrap();
    let expanded = oblivious_expand(&Evaluator::new(&params), &db.plan(true), &q).unwrap();
    let a = pir_respond(&db, &expanded, &q.evk, Rescale::Lazy).unwrap();
    let b = pir_respond_large(&db, &expanded, &q.evk).unwrap();
    assert_eq!(decode_response(&params, &sk, &a, 30).unwrap(), decode_response(&params, &sk, &b, 30).unwrap());
}

#[test]
fn wire_round_trip() {
    let params = toy(64);
    let db = PirDatabase::with_dims(&params, &random_entries(4, 10, 1), 2, 2).unwrap();
    let (q, _) = encode_pir_query(&params, &db.plan(true), 1, 0, &KeySet::Reduced, 3).unwrap();
    assert_eq!(PirQuery::from_bytes(&params, &q.to_bytes()).unwrap(), q);
    let resp = pir_answer(&db, &q, true, Rescale::Lazy).unwrap();
    let back = PirResponse::from_bytes(&params, &resp.to_bytes()).unwrap();
    assert_eq!(back.cts, resp.cts);
    assert!(PirQuery::from_bytes(&params, &q.to_bytes()[..20]).is_err());
}

fn keywords(count: usize, seed: u64) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let k: [u8; 8] = rng.random();
            let m = format!("meta-{i}-{}", rng.random::<u32>()).into_bytes();
            (k.to_vec(), m)
        })
        .collect()
}

/// Scan every bucket of both tables.
fn scan(table: &CuckooTable, keyword: &[u8]) -> Option<(usize, usize)> {
    let sizes = table.sizes();
    (0..2).flat_map(|t| (0..sizes[t]).map(move |p| (t, p))).find(|&(t, p)| table.bucket(t, p).contains(&keyword))
}

#[test]
fn cuckoo_empty_and_single() {
    let cfg = CuckooConfig::default();
    let t = build_cuckoo(&[], &cfg, 1).unwrap();
    assert!(t.is_empty());
    assert_eq!(t.sizes(), [0, 0]);
    for variant in [CuckooVariant::TwoTable, CuckooVariant::OneHashSplit] {
        let cfg = CuckooConfig { variant, ..cfg };
        let e = keywords(1, 3);
        let t = build_cuckoo(&e, &cfg, 7).unwrap();
        let h1 = position(t.seed, 0, &e[0].0, t.sizes()[0]);
        assert_eq!(t.locate(&e[0].0), Some((0, h1)));
        assert_eq!(t.get(&e[0].0), Some(e[0].1.as_slice()));
    }
}

#[test]
fn cuckoo_build_rate_and_scan_oracle() {
    for variant in [CuckooVariant::OneHashSplit, CuckooVariant::TwoTable] {
        let cfg = CuckooConfig { variant, ..CuckooConfig::default() };
        let seeds = 100u64;
        let mut ok = 0;
        for s in 0..seeds {
            let e = keywords(4096, 1000 + s);
            if let Some(t) = try_build_cuckoo(&e, &cfg, s).unwrap() {
                ok += 1;
                if s < 3 {
                    for (k, m) in &e {
                        let at = scan(&t, k).expect("placed");
                        assert!(at == (0, t.position(0, k)) || at == (1, t.position(1, k)));
                        assert_eq!(t.locate(k), Some(at));
                        assert_eq!(t.get(k), Some(m.as_slice()));
                    }
                }
            }
        }
        assert!(ok as f64 >= 0.99 * seeds as f64, "{variant:?}: {ok}/{seeds}");
    }
}

#[test]
fn cuckoo_failure_and_validation() {
    let e = keywords(200, 5);
    let cfg = CuckooConfig { variant: CuckooVariant::TwoTable, max_kicks: 0, ..CuckooConfig::default() };
    let err = build_cuckoo(&e, &cfg, 1).unwrap_err().to_string();
    assert!(err.contains("200 entries") && err.contains("9 attempts"), "{err}");
    let low = CuckooConfig { expansion: 1.2, ..CuckooConfig::default() };
    assert!(build_cuckoo(&e, &low, 1).is_err());
    let mut dup = e.clone();
    dup.push(e[0].clone());
    assert!(build_cuckoo(&dup, &CuckooConfig::default(), 1).is_err());
}

#[test]
fn cuckoo_persistence() {
    let e = keywords(300, 8);
    for variant in [CuckooVariant::OneHashSplit, CuckooVariant::TwoTable] {
        let t = build_cuckoo(&e, &CuckooConfig { variant, ..CuckooConfig::default() }, 12).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(CuckooTable::from_bytes(&bytes).unwrap(), t);
        let dir = std::env::temp_dir().join(format!("cuckoo-{}-{variant:?}", std::process::id()));
        t.save(&dir).unwrap();
        assert_eq!(CuckooTable::load(&dir).unwrap(), t);
        std::fs::remove_file(&dir).unwrap();
        let mut bad = bytes.clone();
        bad[5] ^= 1;
        bad[6] ^= 0x55;
        assert!(CuckooTable::from_bytes(&bad).is_err());
    }
}

#[test]
fn bucket_encoding_round_trip() {
    let e = keywords(50, 2);
    let t = build_cuckoo(&e, &CuckooConfig::default(), 3).unwrap();
    for table in 0..2 {
        for (p, b) in t.bucket_entries(table).iter().enumerate() {
            assert_eq!(b.len(), t.bucket_bytes());
            let parsed = CuckooTable::parse_bucket(b).unwrap();
            let keys: Vec<&[u8]> = parsed.iter().map(|(k, _)| k.as_slice()).collect();
            assert_eq!(keys, t.bucket(table, p));
        }
    }
}

#[test]
fn split_halves_query_positions() {
    let e = keywords(500, 4);
    let params = toy(256);
    let two = KeywordServer::new(
        build_cuckoo(&e, &CuckooConfig { variant: CuckooVariant::TwoTable, ..CuckooConfig::default() }, 1).unwrap(),
        &params,
        DEFAULT_GAMMA,
    )
    .unwrap();
    let split = KeywordServer::new(build_cuckoo(&e, &CuckooConfig::default(), 1).unwrap(), &params, DEFAULT_GAMMA).unwrap();
    assert_eq!(two.directory().query_positions(), 2 * split.directory().query_positions());
    assert_eq!(two.dbs.len(), 1);
    assert_eq!(split.dbs.len(), 2);
}

#[test]
fn keyword_fetch_present_and_absent() {
    let params = toy(256);
    let e = keywords(1024, 77);
    for variant in [CuckooVariant::OneHashSplit, CuckooVariant::TwoTable] {
        let table = build_cuckoo(&e, &CuckooConfig { variant, ..CuckooConfig::default() }, 5).unwrap();
        let server = KeywordServer::new(table, &params, DEFAULT_GAMMA).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let probes = if variant == CuckooVariant::OneHashSplit { 100 } else { 10 };
        for i in 0..probes {
            let (k, m) = &e[rng.random_range(0..e.len())];
            assert_eq!(keyword_fetch(&server, &params, k, &KeySet::Reduced, i).unwrap().as_ref(), Some(m));
            let absent: [u8; 9] = rng.random();
            assert_eq!(keyword_fetch(&server, &params, &absent, &KeySet::Reduced, i).unwrap(), None);
        }
    }
    let empty = KeywordServer::new(build_cuckoo(&[], &CuckooConfig::default(), 1).unwrap(), &params, DEFAULT_GAMMA).unwrap();
    assert_eq!(keyword_fetch(&empty, &params, b"x", &KeySet::Reduced, 0).unwrap(), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn prop_dims_optimal(c in 1usize..3000, gamma in 0.1f64..20.0) {
        let (d1, d2) = choose_dims(c, gamma).unwrap();
        prop_assert!(d1 * d2 >= c);
        prop_assert!((dims_cost(d1, d2, gamma) - brute_dims(c, gamma)).abs() < 1e-9);
    }

    #[test]
    fn prop_shape_covers_outputs(d1 in 1usize..40, d2 in 1usize..40, lin in any::<bool>()) {
        let plan = ExpansionPlan::new(128, d1, d2, lin).unwrap();
        let (nodes, depth) = plan.shape();
        prop_assert_eq!(depth.len(), d1 + d2);
        prop_assert!(depth.iter().all(|&d| d <= plan.levels()));
        // a binary tree with m leaves has m − 1 internal nodes when every split is used
        prop_assert!(nodes.iter().sum::<usize>() <= d1 + d2 - 1 || !lin);
        let reduced = plan.reduced_elements();
        let naive = ExpansionPlan { linearize: false, ..plan };
        prop_assert!(plan.substitution_cost(&reduced).unwrap() <= naive.substitution_cost(&naive.per_level_elements()).unwrap());
    }

    #[test]
    fn prop_pir_random_position(seed in any::<u64>(), d1 in 1usize..5, d2 in 1usize..5) {
        let params = toy(64);
        let entries = random_entries(d1 * d2, 17, seed);
        let db = PirDatabase::with_dims(&params, &entries, d1, d2).unwrap();
        let idx = (seed % (d1 * d2) as u64) as usize;
        let (row, col) = db.position(idx);
        let (q, sk) = encode_pir_query(&params, &db.plan(true), row, col, &KeySet::Reduced, seed).unwrap();
        let resp = pir_answer(&db, &q, true, Rescale::Lazy).unwrap();
        prop_assert_eq!(decode_response(&params, &sk, &resp, 17).unwrap(), entries[idx].clone());
    }
}
