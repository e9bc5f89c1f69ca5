//! Epoch simulator: clients build query plans, an anonymizer strips
//! identities and shuffles each slot, the server answers every query, and
//! responses travel back by routing token.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::bfv::OpCounts;
use crate::cluster::{mrr_at_100, nearest_centroids, scale_signed, Embeddings};
use crate::dp::{
    build_query_plan, central_curator, compose_privacy, expected_fakes, nb_params, rand_schedule, total_variation,
    EpochHistogram, FakeAssignment, NbParams, PlanConfig, PrivacyParams,
};
use crate::encsearch::{decrypt_and_rank, server_compute, Client, QueryKind, QuerySecret, SearchQuery, SearchResponse, ServerOptions};
use crate::error::{Error, Result};
use crate::packing::EncodedDatabase;
use crate::par::derive_seed;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Cluster ids and slots only.
    #[default]
    HistogramOnly,
    /// Real encrypted queries against an encoded database.
    Crypto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpochConfig {
    /// T.
    pub slots: usize,
    /// U, clients that add fake queries.
    pub honest_clients: u64,
    /// M, clients that send only real queries.
    pub malicious_clients: u64,
    pub clusters: usize,
    /// Δ.
    pub max_queries: usize,
    /// Source of (r, p) unless `noise` is given.
    pub privacy: Option<PrivacyParams>,
    pub noise: Option<NbParams>,
    pub assignment: FakeAssignment,
    /// Seed of the clients' real cluster choices, kept apart from the epoch seed.
    pub real_seed: u64,
    /// Explicit real clusters: honest clients first, then malicious ones.
    pub real_clusters: Option<Vec<Vec<u32>>>,
    pub mode: Mode,
    pub topk: usize,
}

impl Default for EpochConfig {
    fn default() -> Self {
        EpochConfig {
            slots: 60,
            honest_clients: 100,
            malicious_clients: 0,
            clusters: 8,
            max_queries: 1,
            privacy: None,
            noise: Some(NbParams { r: 2.0, p: 0.5 }),
            assignment: FakeAssignment::PerCluster,
            real_seed: 0,
            real_clusters: None,
            mode: Mode::HistogramOnly,
            topk: 100,
        }
    }
}

impl EpochConfig {
    pub fn clients(&self) -> usize {
        (self.honest_clients + self.malicious_clients) as usize
    }

    /// Hard errors fail; soft inconsistencies come back as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.slots == 0 {
            return Err(Error::InvalidParams("an epoch needs at least one slot".into()));
        }
        if self.clusters == 0 || self.max_queries == 0 {
            return Err(Error::InvalidParams("K and Δ must be ≥ 1".into()));
        }
        if self.noise.is_none() && self.privacy.is_none() {
            return Err(Error::InvalidParams("either noise or privacy must be set".into()));
        }
        if let Some(n) = &self.noise {
            NbParams::new(n.r, n.p)?;
        }
        if let Some(rc) = &self.real_clusters {
            if rc.len() != self.clients() {
                return Err(Error::InvalidParams(format!("{} real-cluster lists for {} clients", rc.len(), self.clients())));
            }
            if rc.iter().flatten().any(|&c| c as usize >= self.clusters) {
                return Err(Error::InvalidParams("real cluster out of range".into()));
            }
        }
        let mut warnings = Vec::new();
        if self.max_queries > self.clusters && self.real_clusters.is_none() {
            warnings.push(format!("Δ = {} exceeds K = {}; clients repeat clusters", self.max_queries, self.clusters));
        }
        if let Some(p) = &self.privacy {
            p.validate()?;
            if p.honest_clients != self.honest_clients {
                warnings.push(format!("accountant U = {} but {} honest clients simulated", p.honest_clients, self.honest_clients));
            }
            if p.clusters != self.clusters || p.max_queries != self.max_queries {
                warnings.push("accountant K or Δ differs from the simulated epoch".into());
            }
            if self.noise.is_some() {
                warnings.push("explicit noise overrides the privacy parameters".into());
            }
        }
        if let Some(rc) = &self.real_clusters {
            if rc.iter().any(|c| c.len() > self.max_queries) {
                warnings.push("some client sends more than Δ real queries".into());
            }
        }
        Ok(warnings)
    }

    pub fn nb(&self) -> Result<NbParams> {
        match (&self.noise, &self.privacy) {
            (Some(n), _) => NbParams::new(n.r, n.p),
            (None, Some(p)) => nb_params(p),
            (None, None) => Err(Error::InvalidParams("either noise or privacy must be set".into())),
        }
    }

    /// Real clusters of every client: explicit, or Δ distinct uniform ones
    /// drawn from `real_seed` (with repeats when Δ > K).
    pub fn real_queries(&self) -> Vec<Vec<u32>> {
        if let Some(rc) = &self.real_clusters {
            return rc.clone();
        }
        (0..self.clients())
            .map(|i| {
                let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(self.real_seed, 7, i as u64));
                if self.max_queries <= self.clusters {
                    rand::seq::index::sample(&mut rng, self.clusters, self.max_queries)
                        .into_iter()
                        .map(|c| c as u32)
                        .collect()
                } else {
                    (0..self.max_queries).map(|_| rng.random_range(0..self.clusters) as u32).collect()
                }
            })
            .collect()
    }
}

/// Encrypted-mode inputs: the database and one query vector per client.
#[derive(Clone, Debug)]
pub struct CryptoInputs {
    pub db: Arc<EncodedDatabase>,
    /// Client i uses row i mod len.
    pub queries: Embeddings,
    /// Exact nearest entry of each query row.
    pub truth: Vec<usize>,
    pub options: ServerOptions,
}

/// What a client hands the anonymizer.
#[derive(Clone, Debug)]
struct Envelope {
    client: usize,
    item: usize,
    slot: usize,
    cluster: u32,
    query: Option<SearchQuery>,
}

/// What the server receives. It carries no client identity and no query kind.
#[derive(Clone, Debug)]
pub struct ServerRecord {
    pub cluster: u32,
    /// Anonymizer token for routing the response back.
    pub token: u64,
    pub query: Option<SearchQuery>,
}

/// Per-slot batches in delivery order plus the anonymizer's private routes.
#[derive(Debug)]
pub struct Anonymized {
    pub batches: Vec<Vec<ServerRecord>>,
    routes: HashMap<u64, (usize, usize)>,
}

fn anonymize(envelopes: Vec<Envelope>, slots: usize, seed: u64) -> Anonymized {
    let mut by_slot: Vec<Vec<Envelope>> = vec![Vec::new(); slots];
    for e in envelopes {
        by_slot[e.slot].push(e);
    }
    let mut routes = HashMap::new();
    let mut token = 0u64;
    let batches = by_slot
        .into_iter()
        .enumerate()
        .map(|(s, mut batch)| {
            batch.shuffle(&mut ChaCha20Rng::seed_from_u64(derive_seed(seed, 2, s as u64)));
            batch
                .into_iter()
                .map(|e| {
                    token += 1;
                    routes.insert(token, (e.client, e.item));
                    ServerRecord { cluster: e.cluster, token, query: e.query }
                })
                .collect()
        })
        .collect();
    Anonymized { batches, routes }
}

/// Per-slot, per-cluster query counts: all the server observes.
pub fn server_view(batches: &[Vec<ServerRecord>], clusters: usize) -> EpochHistogram {
    let mut h = EpochHistogram::new(batches.len(), clusters);
    for (s, b) in batches.iter().enumerate() {
        for r in b {
            h.add(s, r.cluster as usize);
        }
    }
    h
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTotals {
    pub real: u64,
    pub fake: u64,
    /// Real queries of malicious clients, also counted in `real`.
    pub malicious: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bandwidth {
    /// Serialized bytes of one query; every query has the same length.
    pub request_bytes: usize,
    pub response_bytes: usize,
    pub total_request_bytes: u64,
    pub total_response_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Correctness {
    pub clients: usize,
    pub mean_mrr_at_100: f64,
    /// Clients whose top result is the exact nearest neighbour.
    pub top1: usize,
    pub responses_routed: usize,
    pub fake_responses_discarded: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacySnapshot {
    pub epoch_epsilon: f64,
    pub epoch_delta: f64,
    pub expected_fakes_per_client: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub config: EpochConfig,
    pub seed: u64,
    pub nb: NbParams,
    pub shard: Option<NbParams>,
    pub histogram: EpochHistogram,
    pub totals: QueryTotals,
    pub bandwidth: Option<Bandwidth>,
    pub counts: OpCounts,
    pub correctness: Option<Correctness>,
    pub privacy: Option<PrivacySnapshot>,
    pub warnings: Vec<String>,
    /// Mean server time per query; machine-dependent, so never serialized.
    #[serde(skip)]
    pub wall_per_query: Option<Duration>,
}

/// One epoch, deterministic under `seed` (apart from `wall_per_query`).
pub fn run_epoch(cfg: &EpochConfig, seed: u64, crypto: Option<&CryptoInputs>) -> Result<EpochReport> {
    let warnings = cfg.validate()?;
    let nb = cfg.nb()?;
    let shard = (cfg.honest_clients > 0).then(|| nb.shard(cfg.honest_clients));
    let reals = cfg.real_queries();
    let crypto = match (cfg.mode, crypto) {
        (Mode::HistogramOnly, _) => None,
        (Mode::Crypto, Some(c)) => Some(c),
        (Mode::Crypto, None) => return Err(Error::Usage("crypto mode needs a database and queries".into())),
    };
    let client = crypto.map(|c| Client::new(&c.db.config)).transpose()?;
    let plan_cfg = PlanConfig {
        clusters: cfg.clusters,
        slots: cfg.slots,
        max_queries: cfg.max_queries.max(reals.iter().map(Vec::len).max().unwrap_or(0)),
        assignment: cfg.assignment,
    };

    let mut totals = QueryTotals::default();
    let mut envelopes = Vec::new();
    let mut secrets: Vec<Vec<QuerySecret>> = vec![Vec::new(); cfg.clients()];
    for (i, real) in reals.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 1, i as u64));
        let honest = (i as u64) < cfg.honest_clients;
        // crypto clients route to the clusters nearest their query
        let (real, scaled) = match (crypto, &client) {
            (Some(c), Some(cl)) => {
                let q = c.queries.row(i % c.queries.len());
                let near = nearest_centroids(q, &c.db.codebook, cfg.max_queries.min(c.db.k()))?;
                (near.into_iter().map(|x| x as u32).collect(), Some(scale_signed(q, cl.fixed_point())?))
            }
            _ => (real.clone(), None),
        };
        let (items, slots) = if honest {
            let plan = build_query_plan(&real, shard.as_ref().expect("U ≥ 1"), &plan_cfg, i as u64, &mut rng)?;
            let slots = plan.slot_of();
            (plan.items, slots)
        } else {
            let items: Vec<_> = real
                .iter()
                .enumerate()
                .map(|(j, &cluster)| crate::dp::QueryDescriptor { cluster, kind: QueryKind::Real, real_index: Some(j) })
                .collect();
            let sched = rand_schedule(items.len(), cfg.slots, &mut rng)?;
            let mut slots = vec![0; items.len()];
            for (s, v) in sched.iter().enumerate() {
                for &k in v {
                    slots[k] = s;
                }
            }
            (items, slots)
        };
        for (item, (d, slot)) in items.iter().zip(slots).enumerate() {
            match d.kind {
                QueryKind::Real => totals.real += 1,
                QueryKind::Fake => totals.fake += 1,
            }
            if !honest {
                totals.malicious += 1;
            }
            let query = match &client {
                Some(cl) => {
                    let id: u64 = rng.random();
                    let qseed = derive_seed(seed, 3, i as u64);
                    let (q, s) = match d.kind {
                        QueryKind::Real => cl.real_query(scaled.as_ref().expect("crypto query"), d.cluster, id, qseed)?,
                        QueryKind::Fake => cl.fake_query(d.cluster, id, qseed)?,
                    };
                    secrets[i].push(s);
                    Some(q)
                }
                None => None,
            };
            envelopes.push(Envelope { client: i, item, slot, cluster: d.cluster, query });
        }
    }

    let anon = anonymize(envelopes, cfg.slots, seed);
    let histogram = server_view(&anon.batches, cfg.clusters);

    let mut bandwidth = None;
    let mut correctness = None;
    let mut counts = OpCounts::default();
    let mut wall_per_query = None;
    if let (Some(c), Some(cl)) = (crypto, &client) {
        let mut bw = Bandwidth::default();
        let mut inbox: Vec<Vec<(usize, SearchResponse)>> = vec![Vec::new(); cfg.clients()];
        let start = Instant::now();
        let mut served = 0u32;
        for batch in &anon.batches {
            let responses = c.options.exec.map(batch, |r| {
                let q = r.query.as_ref().expect("crypto record");
                server_compute(&c.db, q, &c.options).map(|resp| (r.token, q.to_bytes().len(), resp))
            });
            for res in responses {
                let (token, req_len, resp) = res?;
                let resp_len = resp.to_bytes().len();
                bw.request_bytes = req_len;
                bw.response_bytes = bw.response_bytes.max(resp_len);
                bw.total_request_bytes += req_len as u64;
                bw.total_response_bytes += resp_len as u64;
                counts = resp.counts.iter().fold(counts, |a, &b| a + b);
                let (client_id, item) = anon.routes[&token];
                inbox[client_id].push((item, resp));
                served += 1;
            }
        }
        if served > 0 {
            wall_per_query = Some(start.elapsed() / served);
        }
        let dir = c.db.directory();
        let mut stats = Correctness { clients: cfg.honest_clients as usize, ..Correctness::default() };
        let mut mrr = 0.0;
        for (i, mut mail) in inbox.into_iter().enumerate() {
            mail.sort_by_key(|(item, _)| *item);
            stats.responses_routed += mail.len();
            let responses: Vec<SearchResponse> = mail.into_iter().map(|(_, r)| r).collect();
            if (i as u64) >= cfg.honest_clients {
                continue;
            }
            stats.fake_responses_discarded += secrets[i].iter().filter(|s| s.kind == QueryKind::Fake).count();
            let ranked = decrypt_and_rank(cl, &dir, &responses, &secrets[i], cfg.topk)?;
            let truth = c.truth[i % c.truth.len()];
            mrr += mrr_at_100(&[ranked.clone()], truth);
            stats.top1 += ranked.first().is_some_and(|r| r.0 == truth) as usize;
        }
        stats.mean_mrr_at_100 = if stats.clients > 0 { mrr / stats.clients as f64 } else { 0.0 };
        bandwidth = Some(bw);
        correctness = Some(stats);
    }

    let privacy = match &cfg.privacy {
        Some(p) => {
            let (epoch_epsilon, epoch_delta) = compose_privacy(p.epsilon, p.delta, p.max_queries, 1);
            Some(PrivacySnapshot {
                epoch_epsilon,
                epoch_delta,
                expected_fakes_per_client: expected_fakes(&nb, cfg.clusters, cfg.honest_clients.max(1)),
            })
        }
        None => None,
    };
    Ok(EpochReport {
        config: cfg.clone(),
        seed,
        nb,
        shard,
        histogram,
        totals,
        bandwidth,
        counts,
        correctness,
        privacy,
        warnings,
        wall_per_query,
    })
}

/// Distributed protocol against the trusted-curator reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    /// Two-sample estimate between simulated views and curator draws.
    pub tv_two_sample: f64,
    /// Simulated views against the exact curator distribution.
    pub tv_exact: f64,
    pub distinct_outcomes: usize,
}

/// ln P[curator totals = h] for fixed real counts.
pub fn curator_ln_pmf(h: &[u64], real: &[u64], nb: &NbParams) -> f64 {
    h.iter()
        .zip(real)
        .map(|(&n, &r)| if n < r { f64::NEG_INFINITY } else { nb.ln_pmf(n - r) })
        .sum()
}

/// Per-cluster totals of the server view over `trials` epochs versus the
/// central curator. Slots are assigned uniformly and independently in both
/// worlds, so per-cluster totals carry the whole difference.
pub fn simulation_equivalence(cfg: &EpochConfig, trials: usize, seed: u64) -> Result<EquivalenceReport> {
    let cfg = EpochConfig { mode: Mode::HistogramOnly, ..cfg.clone() };
    let nb = cfg.nb()?;
    let reals = cfg.real_queries();
    let mut real_counts = vec![0u64; cfg.clusters];
    for &c in reals.iter().flatten() {
        real_counts[c as usize] += 1;
    }
    let max_q = cfg.max_queries.max(reals.iter().map(Vec::len).max().unwrap_or(0));
    let mut dist = Vec::with_capacity(trials);
    let mut cur = Vec::with_capacity(trials);
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 11, 0));
    for t in 0..trials {
        dist.push(run_epoch(&cfg, derive_seed(seed, 10, t as u64), None)?.histogram.totals());
        cur.push(central_curator(&reals, &nb, cfg.clusters, max_q, &mut rng)?.1);
    }
    let mut freq: HashMap<&Vec<u64>, f64> = HashMap::new();
    for h in &dist {
        *freq.entry(h).or_default() += 1.0 / trials as f64;
    }
    let mut covered = 0.0;
    let mut diff = 0.0;
    for (h, f) in &freq {
        let p = curator_ln_pmf(h, &real_counts, &nb).exp();
        covered += p;
        diff += (f - p).abs();
    }
    Ok(EquivalenceReport {
        trials,
        tv_two_sample: total_variation(&dist, &cur),
        tv_exact: 0.5 * (diff + (1.0 - covered).max(0.0)),
        distinct_outcomes: freq.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguisherReport {
    pub trials: usize,
    pub from_cluster: u32,
    pub to_cluster: u32,
    /// 2ε for the ε implied by p = e^(−0.2ε/Δ).
    pub epsilon_bound: f64,
    /// Largest |ln P̂(o)/P̂′(o)| over outcomes seen ≥ `min_count` times in both runs.
    pub empirical_epsilon: f64,
    /// Share of trials whose outcome never occurs for the neighbour.
    pub disjoint_mass: f64,
    pub min_count: usize,
    /// Statistical resolution of a log ratio at `min_count`.
    pub slack: f64,
    /// False when the bound is below the resolution at this trial budget.
    pub testable: bool,
    pub within_bound: bool,
}

/// Paired epochs where client 0's real queries sit in cluster `b` or `b2`.
/// Both runs share seeds, so identical neighbours give identical samples.
pub fn dp_distinguisher_test(cfg: &EpochConfig, b: u32, b2: u32, trials: usize, seed: u64) -> Result<DistinguisherReport> {
    if cfg.clients() == 0 || b as usize >= cfg.clusters || b2 as usize >= cfg.clusters {
        return Err(Error::Usage("distinguisher needs a client and two valid clusters".into()));
    }
    let nb = cfg.nb()?;
    let with = |c: u32| {
        let mut reals = cfg.real_queries();
        reals[0] = vec![c; cfg.max_queries];
        EpochConfig { mode: Mode::HistogramOnly, real_clusters: Some(reals), ..cfg.clone() }
    };
    let (x, y) = (with(b), with(b2));
    let mut cx: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut cy: HashMap<Vec<u64>, usize> = HashMap::new();
    for t in 0..trials {
        let s = derive_seed(seed, 12, t as u64);
        *cx.entry(run_epoch(&x, s, None)?.histogram.totals()).or_default() += 1;
        *cy.entry(run_epoch(&y, s, None)?.histogram.totals()).or_default() += 1;
    }
    let min_count = 100;
    let slack = 3.0 * (2.0 / min_count as f64).sqrt();
    let mut emp = 0f64;
    let mut disjoint = 0usize;
    for (o, &a) in &cx {
        match cy.get(o) {
            None => disjoint += a,
            Some(&c) if a >= min_count && c >= min_count => emp = emp.max((a as f64 / c as f64).ln().abs()),
            _ => {}
        }
    }
    let epsilon = if nb.p > 0.0 { -5.0 * cfg.max_queries as f64 * nb.p.ln() } else { f64::INFINITY };
    let bound = 2.0 * epsilon;
    Ok(DistinguisherReport {
        trials,
        from_cluster: b,
        to_cluster: b2,
        epsilon_bound: bound,
        empirical_epsilon: emp,
        disjoint_mass: disjoint as f64 / trials.max(1) as f64,
        min_count,
        slack,
        testable: bound > slack,
        within_bound: emp <= bound + slack,
    })
}
