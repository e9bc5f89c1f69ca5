use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use psearch::bfv::{encrypt_values, keygen, Evaluator, Plaintext, SheParams};
use psearch::cluster::{nearest_centroids, scale_signed, synthetic_corpus, Embeddings, SyntheticCorpus};
use psearch::dp;
use psearch::encsearch::{decrypt_and_rank, server_compute, Client, SearchQuery, SearchResponse, ServerOptions};
use psearch::packing::{server_init, EncodedDatabase};
use psearch::par::{derive_seed, Exec};
use psearch::pir::{build_cuckoo, keyword_fetch_sized, pir_params, CuckooTable, KeySet, KeywordServer};
use psearch::simnet::{run_epoch, CryptoInputs, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{Cli, CliError, Command, Format};

const MANIFEST: &str = "run.json";
const CUCKOO: &str = "cuckoo.bin";

type Res<T> = Result<T, CliError>;

pub fn run(cli: &Cli) -> Res<()> {
    match &cli.command {
        Command::Synth { out, config, entries } => synth(cli, out, config.as_deref(), *entries),
        Command::Init { out, embeddings, metadata, config, k } => {
            init(cli, out, embeddings.as_deref(), metadata.as_deref(), config.as_deref(), *k)
        }
        Command::Query { index, vector, row, delta, out, wire } => {
            query(cli, index, vector, *row, *delta, out.as_deref(), wire.as_deref())
        }
        Command::Epoch { config, out, csv } => epoch(cli, config.as_deref(), out.as_deref(), csv.as_deref()),
        Command::Audit { config, out } => audit(cli, config.as_deref(), out.as_deref()),
        Command::Bench { config, iters, out } => bench(cli, config.as_deref(), *iters, out.as_deref()),
    }
}

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn config(cli: &Cli, path: Option<&Path>) -> Res<RunConfig> {
    let cfg = RunConfig::load(path)?.resolve(cli.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn to_json<T: Serialize>(v: &T) -> Res<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes the artifact when asked, then prints it or the text summary.
fn emit(cli: &Cli, out: Option<&Path>, artifact: &Value, text: &str) -> Res<()> {
    let doc = to_json(artifact)?;
    if let Some(p) = out {
        fs::write(p, &doc).map_err(|e| runtime(p, e))?;
    }
    match cli.format {
        Format::Json => print!("{doc}"),
        Format::Text => print!("{text}"),
    }
    Ok(())
}

fn hex(b: &[u8]) -> String {
    b.iter().fold(String::with_capacity(2 * b.len()), |mut s, x| {
        let _ = write!(s, "{x:02x}");
        s
    })
}

fn read_wemb(path: &Path) -> Res<Embeddings> {
    let bytes = fs::read(path).map_err(|e| runtime(path, e))?;
    Embeddings::from_bytes(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(path, bytes).map_err(|e| runtime(path, e))
}

fn corpus(cfg: &RunConfig, entries: usize) -> Res<SyntheticCorpus> {
    let s = &cfg.synthetic;
    Ok(synthetic_corpus(
        entries,
        cfg.database.d,
        s.blobs,
        s.spread,
        s.queries,
        s.query_noise,
        derive_seed(cfg.seed, 20, 0),
    )?)
}

/// Printable records of random length for synthetic entries.
fn synthetic_metadata(cfg: &RunConfig, entries: usize) -> Vec<Vec<u8>> {
    let s = &cfg.synthetic;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 21, 0));
    (0..entries)
        .map(|i| {
            let len = rng.random_range(s.metadata_min..=s.metadata_max);
            let mut m = format!("doc {i}:").into_bytes();
            m.resize(len.max(m.len()), 0);
            for b in m.iter_mut().filter(|b| **b == 0) {
                *b = b'a' + rng.random_range(0..26u8);
            }
            m.truncate(len.max(1));
            m
        })
        .collect()
}

fn write_corpus(dir: &Path, c: &SyntheticCorpus) -> Res<()> {
    write_file(&dir.join("embeddings.wemb"), &c.embeddings.to_bytes())?;
    write_file(&dir.join("queries.wemb"), &c.queries.to_bytes())?;
    write_file(&dir.join("truth.json"), to_json(&c.truth)?.as_bytes())
}

fn synth(cli: &Cli, out: &Path, path: Option<&Path>, entries: Option<usize>) -> Res<()> {
    let mut cfg = RunConfig::load(path)?.resolve(cli.seed);
    if let Some(e) = entries {
        cfg.synthetic.entries = e;
    }
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|e| runtime(out, e))?;
    let c = corpus(&cfg, cfg.synthetic.entries)?;
    write_corpus(out, &c)?;
    let meta = synthetic_metadata(&cfg, cfg.synthetic.entries);
    let mut lines = Vec::new();
    for m in &meta {
        lines.extend_from_slice(m);
        lines.push(b'\n');
    }
    write_file(&out.join("metadata.txt"), &lines)?;
    let artifact = json!({ "command": "synth", "seed": cfg.seed, "config": cfg, "entries": c.embeddings.len(), "queries": c.queries.len() });
    write_file(&out.join(MANIFEST), to_json(&artifact)?.as_bytes())?;
    let text = format!(
        "wrote {} embeddings and {} queries (d = {}) to {}\n",
        c.embeddings.len(),
        c.queries.len(),
        cfg.database.d,
        out.display()
    );
    emit(cli, None, &artifact, &text)
}

/// Every file of `dir` except the manifest, sorted, with size and digest.
fn inventory(dir: &Path) -> Res<Vec<Value>> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| runtime(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST))
        .collect();
    names.sort();
    names
        .iter()
        .map(|p| {
            let b = fs::read(p).map_err(|e| runtime(p, e))?;
            Ok(json!({
                "name": p.file_name().unwrap().to_string_lossy(),
                "bytes": b.len(),
                "sha256": hex(&Sha256::digest(&b)),
            }))
        })
        .collect()
}

fn init(
    cli: &Cli,
    out: &Path,
    embeddings: Option<&Path>,
    metadata: Option<&Path>,
    path: Option<&Path>,
    k: Option<usize>,
) -> Res<()> {
    let mut cfg = RunConfig::load(path)?.resolve(cli.seed);
    if let Some(k) = k {
        cfg.database.k = k;
        cfg.search.delta = cfg.search.delta.min(k);
    }
    cfg.validate()?;
    let (mut emb, synthetic) = match embeddings {
        Some(p) => (read_wemb(p)?, None),
        None => {
            let c = corpus(&cfg, cfg.synthetic.entries)?;
            (c.embeddings.clone(), Some(c))
        }
    };
    if emb.dim() != cfg.database.d {
        return Err(CliError::Validation(format!(
            "embedding dimension {} does not match d = {}",
            emb.dim(),
            cfg.database.d
        )));
    }
    if !emb.is_normalized() {
        emb.normalize();
    }
    let meta = match metadata {
        Some(p) => {
            let text = fs::read(p).map_err(|e| runtime(p, e))?;
            let lines: Vec<Vec<u8>> = text.split(|&b| b == b'\n').map(<[u8]>::to_vec).take(emb.len()).collect();
            if lines.len() < emb.len() {
                return Err(CliError::Validation(format!(
                    "{}: {} metadata lines for {} embeddings",
                    p.display(),
                    lines.len(),
                    emb.len()
                )));
            }
            lines
        }
        None if synthetic.is_some() => synthetic_metadata(&cfg, emb.len()),
        None => (0..emb.len()).map(|i| format!("doc {i}").into_bytes()).collect(),
    };
    let db = server_init(&emb, meta.clone(), &cfg.database, Exec::default())?;
    fs::create_dir_all(out).map_err(|e| runtime(out, e))?;
    db.save(out)?;
    let kv: Vec<(Vec<u8>, Vec<u8>)> = meta
        .iter()
        .enumerate()
        .map(|(i, m)| ((i as u32).to_le_bytes().to_vec(), m.clone()))
        .collect();
    let table = build_cuckoo(&kv, &cfg.pir.cuckoo(), derive_seed(cfg.seed, 22, 0))?;
    table.save(&out.join(CUCKOO))?;
    if let Some(c) = &synthetic {
        write_corpus(out, c)?;
    }
    let files = inventory(out)?;
    let cubes = files.iter().filter(|f| f["name"].as_str().is_some_and(|n| n.starts_with("cube_"))).count();
    let sizes: Vec<usize> = db.codebook.members().iter().map(Vec::len).collect();
    let artifact = json!({
        "command": "init",
        "seed": cfg.seed,
        "config": cfg,
        "entries": emb.len(),
        "cluster_sizes": sizes,
        "cube_files": cubes,
        "cuckoo": { "seed": table.seed, "sizes": table.sizes(), "bucket_bytes": table.bucket_bytes() },
        "files": files,
    });
    write_file(&out.join(MANIFEST), to_json(&artifact)?.as_bytes())?;
    let text = format!(
        "encoded {} entries into {} clusters ({} cube files) at {}\ncluster sizes: {:?}\n",
        emb.len(),
        db.k(),
        cubes,
        out.display(),
        sizes
    );
    emit(cli, None, &artifact, &text)
}

fn load_manifest(index: &Path) -> Res<RunConfig> {
    let p = index.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(|e| runtime(&p, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| runtime(&p, e))?;
    serde_json::from_value(v["config"].clone()).map_err(|e| runtime(&p, e))
}

#[derive(Serialize)]
struct RequestSize {
    cluster: u32,
    ciphertext_bytes: usize,
    evk_bytes: usize,
    total_bytes: usize,
}

#[derive(Serialize)]
struct ResponseSize {
    cluster: u32,
    ciphertexts: usize,
    ciphertext_bytes: usize,
    metadata_bytes: usize,
    total_bytes: usize,
}

#[derive(Serialize)]
struct Fetched {
    entry: usize,
    source: &'static str,
    metadata: String,
    request_bytes: usize,
    response_bytes: usize,
}

fn query(
    cli: &Cli,
    index: &Path,
    vector: &Path,
    row: usize,
    delta: Option<usize>,
    out: Option<&Path>,
    wire: Option<&Path>,
) -> Res<()> {
    let mut cfg = load_manifest(index)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let delta = delta.unwrap_or(cfg.search.delta);
    if delta == 0 || delta > cfg.database.k {
        return Err(CliError::Validation(format!("Δ = {delta} must lie in [1, K = {}]", cfg.database.k)));
    }
    cfg.search.delta = delta;
    let db = EncodedDatabase::load(index).map_err(|e| runtime(index, e))?;
    let queries = read_wemb(vector)?;
    if row >= queries.len() {
        return Err(CliError::Validation(format!("row {row} out of range ({} vectors)", queries.len())));
    }
    let mut q = Embeddings::new(queries.dim(), queries.row(row).to_vec())?;
    q.normalize();
    let q = q.row(0);

    let client = Client::new(&db.config)?;
    let dir = db.directory();
    let scaled = scale_signed(q, client.fixed_point())?;
    let clusters = nearest_centroids(q, &db.codebook, delta)?;
    let opts = ServerOptions {
        drop: (cfg.search.drop_l0, cfg.search.drop_l1),
        metadata_threshold: cfg.search.metadata_threshold,
        exec: Exec::default(),
    };
    if let Some(w) = wire {
        fs::create_dir_all(w).map_err(|e| runtime(w, e))?;
    }
    let (mut requests, mut responses_sz, mut responses, mut secrets) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let started = Instant::now();
    for (i, &c) in clusters.iter().enumerate() {
        let (sq, secret) = client.real_query(&scaled, c as u32, i as u64, derive_seed(cfg.seed, 30, i as u64))?;
        let bytes = sq.to_bytes();
        requests.push(RequestSize {
            cluster: c as u32,
            ciphertext_bytes: sq.cts.iter().map(|ct| ct.to_bytes().len()).sum(),
            evk_bytes: sq.evk.to_bytes().len(),
            total_bytes: bytes.len(),
        });
        let received = SearchQuery::from_bytes(db.she(), &bytes)?;
        let resp = server_compute(&db, &received, &opts)?;
        let rb = resp.to_bytes();
        if let Some(w) = wire {
            write_file(&w.join(format!("request_{i}.bin")), &bytes)?;
            write_file(&w.join(format!("response_{i}.bin")), &rb)?;
        }
        let resp = SearchResponse::from_bytes(&rb)?;
        responses_sz.push(ResponseSize {
            cluster: c as u32,
            ciphertexts: resp.cts.iter().map(Vec::len).sum(),
            ciphertext_bytes: resp.ciphertext_bytes(),
            metadata_bytes: resp.metadata.as_ref().map_or(0, Vec::len),
            total_bytes: rb.len(),
        });
        responses.push(resp);
        secrets.push(secret);
    }
    let ranked = decrypt_and_rank(&client, &dir, &responses, &secrets, cfg.search.topk)?;
    let elapsed = started.elapsed();

    let inline: std::collections::HashMap<usize, Vec<u8>> = responses
        .iter()
        .filter_map(|r| r.metadata.as_deref())
        .map(EncodedDatabase::parse_cluster_metadata)
        .collect::<psearch::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut fetched = Vec::new();
    let mut pir: Option<(KeywordServer, Arc<SheParams>)> = None;
    for (j, &(entry, _)) in ranked.iter().take(cfg.search.fetch).enumerate() {
        if let Some(m) = inline.get(&entry) {
            fetched.push(Fetched {
                entry,
                source: "inline",
                metadata: String::from_utf8_lossy(m).into_owned(),
                request_bytes: 0,
                response_bytes: 0,
            });
            continue;
        }
        if pir.is_none() {
            let table = CuckooTable::load(&index.join(CUCKOO)).map_err(|e| runtime(&index.join(CUCKOO), e))?;
            let params = pir_params(cfg.pir.n, cfg.pir.t)?;
            pir = Some((KeywordServer::new(table, &params, cfg.pir.gamma)?, params));
        }
        let (server, params) = pir.as_ref().unwrap();
        let f = keyword_fetch_sized(
            server,
            params,
            &(entry as u32).to_le_bytes(),
            &KeySet::Reduced,
            derive_seed(cfg.seed, 31, j as u64),
        )?;
        let m = f.metadata.ok_or_else(|| CliError::Runtime(format!("entry {entry} missing from the keyword table")))?;
        fetched.push(Fetched {
            entry,
            source: "pir",
            metadata: String::from_utf8_lossy(&m).into_owned(),
            request_bytes: f.request_bytes,
            response_bytes: f.response_bytes,
        });
    }

    let scale = (client.fixed_point().p as f64).powi(2);
    let results: Vec<Value> = ranked
        .iter()
        .map(|&(e, s)| json!({ "entry": e, "score": s, "similarity": s as f64 / scale }))
        .collect();
    let request_total: usize = requests.iter().map(|r| r.total_bytes).sum();
    let response_total: usize = responses_sz.iter().map(|r| r.total_bytes).sum();
    let artifact = json!({
        "command": "query",
        "seed": cfg.seed,
        "config": cfg,
        "query": { "file": vector.display().to_string(), "row": row },
        "clusters": clusters,
        "results": results,
        "request": { "per_cluster": requests, "total_bytes": request_total },
        "response": { "per_cluster": responses_sz, "total_bytes": response_total },
        "metadata": fetched,
    });

    let mut text = format!("probed clusters {clusters:?} in {:.1} ms\n", elapsed.as_secs_f64() * 1e3);
    for r in &requests {
        let _ = writeln!(
            text,
            "request  cluster {:>4}: {:>8} B ciphertexts + {:>8} B evaluation key = {:>8} B",
            r.cluster, r.ciphertext_bytes, r.evk_bytes, r.total_bytes
        );
    }
    for r in &responses_sz {
        let _ = writeln!(
            text,
            "response cluster {:>4}: {:>8} B ciphertexts + {:>8} B metadata = {:>8} B",
            r.cluster, r.ciphertext_bytes, r.metadata_bytes, r.total_bytes
        );
    }
    let _ = writeln!(text, "total: {request_total} B up, {response_total} B down");
    for (rank, &(e, s)) in ranked.iter().take(10).enumerate() {
        let _ = writeln!(text, "{:>3}. entry {:>7}  score {:>9}  ({:.4})", rank + 1, e, s, s as f64 / scale);
    }
    for f in &fetched {
        let _ = writeln!(text, "metadata of {} via {}: {}", f.entry, f.source, f.metadata);
    }
    emit(cli, out, &artifact, &text)
}

fn epoch(cli: &Cli, path: Option<&Path>, out: Option<&Path>, csv: Option<&Path>) -> Res<()> {
    let mut cfg = config(cli, path)?;
    if cfg.epoch.noise.is_none() && cfg.epoch.privacy.is_none() {
        cfg.epoch.privacy = Some(cfg.privacy.clone());
    }
    let crypto = match cfg.epoch.mode {
        Mode::HistogramOnly => None,
        Mode::Crypto => {
            let mut db_cfg = cfg.database.clone();
            db_cfg.k = cfg.epoch.clusters;
            let c = corpus(&cfg, cfg.synthetic.entries)?;
            let meta = synthetic_metadata(&cfg, c.embeddings.len());
            let db = server_init(&c.embeddings, meta, &db_cfg, Exec::default())?;
            Some(CryptoInputs {
                db: Arc::new(db),
                queries: c.queries,
                truth: c.truth,
                options: ServerOptions {
                    drop: (cfg.search.drop_l0, cfg.search.drop_l1),
                    metadata_threshold: cfg.search.metadata_threshold,
                    exec: Exec::default(),
                },
            })
        }
    };
    let report = run_epoch(&cfg.epoch, cfg.seed, crypto.as_ref())?;
    if let Some(p) = csv {
        let h = &report.histogram;
        let mut s = String::from("slot,cluster,count\n");
        for slot in 0..h.slots {
            for c in 0..h.clusters {
                let _ = writeln!(s, "{slot},{c},{}", h.get(slot, c));
            }
        }
        write_file(p, s.as_bytes())?;
    }
    let artifact = json!({ "command": "epoch", "seed": cfg.seed, "config": cfg, "report": report });
    let t = &report.totals;
    let mut text = format!(
        "epoch seed {}: {} real, {} fake, {} malicious queries over {} slots and {} clusters\nnoise NB(r = {:.4}, p = {:.6})\nper-cluster totals: {:?}\n",
        cfg.seed,
        t.real,
        t.fake,
        t.malicious,
        cfg.epoch.slots,
        cfg.epoch.clusters,
        report.nb.r,
        report.nb.p,
        report.histogram.totals()
    );
    if let Some(b) = &report.bandwidth {
        let _ = writeln!(
            text,
            "bandwidth: {} B per request, {} B per response, {} B up, {} B down",
            b.request_bytes, b.response_bytes, b.total_request_bytes, b.total_response_bytes
        );
    }
    if let Some(c) = &report.correctness {
        let _ = writeln!(
            text,
            "correctness: {} clients, mean MRR@100 {:.4}, top-1 {}",
            c.clients, c.mean_mrr_at_100, c.top1
        );
    }
    if let Some(w) = report.wall_per_query {
        let _ = writeln!(text, "server time per query: {:.2} ms", w.as_secs_f64() * 1e3);
    }
    for w in &report.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    emit(cli, out, &artifact, &text)
}

fn audit(cli: &Cli, path: Option<&Path>, out: Option<&Path>) -> Res<()> {
    let cfg = config(cli, path)?;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 40, 0));
    let report = dp::audit(&cfg.privacy, cfg.audit.claimed_total_delta, cfg.audit.draws, &mut rng)?;
    let artifact = json!({ "command": "audit", "seed": cfg.seed, "config": cfg, "report": report });
    let mut text = format!(
        "NB(r = {:.4}, p = {:.8}), per-client shard r = {:.6}\nexpected fakes per client: {:.4}\nper epoch: ε = {:.6}, δ = {:.3e}\nover {} epochs: ε = {:.6}, δ = {:.3e}\n",
        report.nb.r,
        report.nb.p,
        report.shard.r,
        report.expected_fakes_per_client,
        report.epoch_epsilon,
        report.epoch_delta,
        cfg.privacy.epochs,
        report.total_epsilon,
        report.total_delta
    );
    if let Some(c) = report.claimed_total_delta {
        let verdict = if report.claim_discrepancy { "exceeds" } else { "within" };
        let _ = writeln!(text, "composed δ {verdict} the claimed {c:.3e}");
    }
    if let Some(s) = &report.sampler {
        let _ = writeln!(
            text,
            "sampler over {} draws: mean {:.4} (expected {:.4}), variance {:.4} (expected {:.4}), KS {:.4} vs {:.4}",
            s.draws, s.mean, s.expected_mean, s.variance, s.expected_variance, s.ks_statistic, s.ks_critical
        );
    }
    emit(cli, out, &artifact, &text)
}

#[derive(Serialize)]
struct OpLatency {
    op: &'static str,
    mean_us: f64,
}

fn time<F: FnMut() -> psearch::Result<()>>(iters: usize, mut f: F) -> Res<f64> {
    f()?;
    let t = Instant::now();
    for _ in 0..iters {
        f()?;
    }
    Ok(t.elapsed().as_secs_f64() * 1e6 / iters as f64)
}

fn bench(cli: &Cli, path: Option<&Path>, iters: Option<usize>, out: Option<&Path>) -> Res<()> {
    let mut cfg = config(cli, path)?;
    if let Some(i) = iters {
        cfg.bench.iters = i.max(1);
    }
    let params = SheParams::new(psearch::bfv::ParamSpec::with_t(
        cfg.database.n,
        cfg.database.moduli[0],
        psearch::bfv::Encoding::Batch,
    ))?;
    let (sk, ek) = keygen(&params, &[params.rotation_element(1)], true, derive_seed(cfg.seed, 50, 0))?;
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 51, 0));
    let t = params.t();
    let mut values = || (0..params.n()).map(|_| rng.random_range(0..t)).collect::<Vec<u64>>();
    let (va, vb, vp) = (values(), values(), values());
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(cfg.seed, 52, 0));
    let a = encrypt_values(&params, &sk, &va, &mut rng)?;
    let b = encrypt_values(&params, &sk, &vb, &mut rng)?;
    let pt = Plaintext::encode(&params, &vp)?.prepare(&params, a.level());
    let ev = Evaluator::new(&params);
    let n = cfg.bench.iters;
    let ops = vec![
        OpLatency { op: "ct_ct_add", mean_us: time(n, || ev.add(&a, &b).map(drop))? },
        OpLatency { op: "pt_ct_mult", mean_us: time(n, || ev.mul_plain(&a, &pt).map(drop))? },
        OpLatency { op: "ct_rotate", mean_us: time(n, || ev.rotate(&a, 1, &ek).map(drop))? },
        OpLatency { op: "ct_ct_mult", mean_us: time(n, || ev.mul(&a, &b, &ek).map(drop))? },
    ];
    let ordered = ops.windows(2).all(|w| w[0].mean_us < w[1].mean_us);
    let artifact = json!({
        "command": "bench",
        "seed": cfg.seed,
        "config": cfg,
        "iters": n,
        "ops": ops,
        "ordering_holds": ordered,
    });
    let mut text = format!("n = {}, t = {}, {} iterations\n", params.n(), t, n);
    for o in &ops {
        let _ = writeln!(text, "{:<11} {:>12.2} µs", o.op, o.mean_us);
    }
    let _ = writeln!(
        text,
        "ordering add < pt-mult < rotate < ct-mult: {}",
        if ordered { "holds" } else { "VIOLATED" }
    );
    emit(cli, out, &artifact, &text)?;
    if ordered {
        Ok(())
    } else {
        Err(CliError::Runtime("latency ordering violated".into()))
    }
}
