//! Negative-binomial fake-query noise split across clients, random slot
//! schedules, the privacy accountant and the central-curator reference.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::encsearch::QueryKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Natural,
    #[default]
    Base2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Δ, the most real queries a client sends per epoch.
    pub max_queries: usize,
    /// U, honest clients sharing the noise.
    pub honest_clients: u64,
    pub clusters: usize,
    pub epochs: u64,
    pub honest_fraction: f64,
    pub log_base: LogBase,
}

impl Default for PrivacyParams {
    /// ε = 1/800, δ = 2^−30, Δ = 1, U = 250,000, K = 256, 400 epochs.
    fn default() -> Self {
        PrivacyParams {
            epsilon: 1.0 / 800.0,
            delta: 2f64.powi(-30),
            max_queries: 1,
            honest_clients: 250_000,
            clusters: 256,
            epochs: 400,
            honest_fraction: 0.5,
            log_base: LogBase::Base2,
        }
    }
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "ε = {} must lie in (0, 1] and δ = {} in (0, 1)",
                self.epsilon, self.delta
            )));
        }
        if self.max_queries == 0 {
            return Err(Error::InvalidParams("Δ must be ≥ 1".into()));
        }
        if self.honest_clients < 2 {
            return Err(Error::InvalidParams("at least two honest clients are required".into()));
        }
        if self.clusters == 0 {
            return Err(Error::InvalidParams("K must be ≥ 1".into()));
        }
        if !(self.honest_fraction > 0.0 && self.honest_fraction <= 1.0) {
            return Err(Error::InvalidParams("honest fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Total population implied by the honest count and fraction.
    pub fn total_clients(&self) -> u64 {
        (self.honest_clients as f64 / self.honest_fraction).round() as u64
    }
}

/// NB(r, p) with pmf C(k+r−1, k)·p^k·(1−p)^r.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub r: f64,
    pub p: f64,
}

impl NbParams {
    pub fn new(r: f64, p: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) || !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidParams(format!("NB({r}, {p}) is not a valid distribution")));
        }
        Ok(NbParams { r, p })
    }

    pub fn mean(&self) -> f64 {
        self.r * self.p / (1.0 - self.p)
    }

    pub fn variance(&self) -> f64 {
        self.r * self.p / ((1.0 - self.p) * (1.0 - self.p))
    }

    /// One of `u` i.i.d. shards summing to this distribution.
    pub fn shard(&self, u: u64) -> NbParams {
        NbParams { r: self.r / u as f64, p: self.p }
    }

    /// ln P[X = k].
    pub fn ln_pmf(&self, k: u64) -> f64 {
        if self.p == 0.0 {
            return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let k = k as f64;
        ln_gamma(k + self.r) - ln_gamma(k + 1.0) - ln_gamma(self.r) + k * self.p.ln() + self.r * (1.0 - self.p).ln()
    }
}

/// p = e^(−0.2ε/Δ), r = 3(1 + log(1/δ)).
pub fn nb_params(privacy: &PrivacyParams) -> Result<NbParams> {
    privacy.validate()?;
    let p = (-0.2 * privacy.epsilon / privacy.max_queries as f64).exp();
    let log = match privacy.log_base {
        LogBase::Natural => (1.0 / privacy.delta).ln(),
        LogBase::Base2 => (1.0 / privacy.delta).log2(),
    };
    NbParams::new(3.0 * (1.0 + log), p)
}

/// Gamma(r, p/(1−p)) mixed Poisson; works for fractional r.
pub fn sample_nb<R: Rng + ?Sized>(nb: &NbParams, rng: &mut R) -> u64 {
    if nb.p <= 0.0 {
        return 0;
    }
    let gamma = Gamma::new(nb.r, nb.p / (1.0 - nb.p)).expect("validated shape and scale");
    let lambda: f64 = gamma.sample(rng);
    if !(lambda > 0.0) {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) => lambda.round() as u64,
    }
}

/// E[fakes per client] = r·p·K / ((1−p)·U).
pub fn expected_fake_queries(privacy: &PrivacyParams) -> Result<f64> {
    let nb = nb_params(privacy)?;
    Ok(expected_fakes(&nb, privacy.clusters, privacy.honest_clients))
}

pub fn expected_fakes(nb: &NbParams, clusters: usize, honest_clients: u64) -> f64 {
    nb.mean() * clusters as f64 / honest_clients as f64
}

/// Per epoch (2ε, 2Δδ); over l epochs (2lε, 2lΔδ).
pub fn compose_privacy(epsilon: f64, delta: f64, max_queries: usize, epochs: u64) -> (f64, f64) {
    let l = epochs as f64;
    (2.0 * l * epsilon, 2.0 * l * max_queries as f64 * delta)
}

/// Where a client's fake queries go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FakeAssignment {
    /// The F_i fakes drawn for cluster i query cluster i, so every cluster
    /// receives exactly NB(r, p) noise summed over clients.
    #[default]
    PerCluster,
    /// Every fake picks an independent uniform cluster.
    UniformRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryDescriptor {
    pub cluster: u32,
    pub kind: QueryKind,
    /// Position in the client's real query list.
    pub real_index: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub plan_id: u64,
    /// Permuted descriptors.
    pub items: Vec<QueryDescriptor>,
    /// schedule[slot] = positions in `items`.
    pub schedule: Vec<Vec<usize>>,
}

impl QueryPlan {
    pub fn slot_of(&self) -> Vec<usize> {
        let mut s = vec![0; self.items.len()];
        for (slot, items) in self.schedule.iter().enumerate() {
            for &i in items {
                s[i] = slot;
            }
        }
        s
    }

    pub fn fakes(&self) -> usize {
        self.items.iter().filter(|d| d.kind == QueryKind::Fake).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub clusters: usize,
    pub slots: usize,
    pub max_queries: usize,
    pub assignment: FakeAssignment,
}

/// Independent uniform slot in [T] per item.
pub fn rand_schedule<R: Rng + ?Sized>(items: usize, slots: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if slots == 0 {
        return Err(Error::InvalidParams("epoch needs at least one slot".into()));
    }
    let mut s = vec![Vec::new(); slots];
    for i in 0..items {
        s[rng.random_range(0..slots)].push(i);
    }
    Ok(s)
}

/// Real queries plus NB-shard fakes for every cluster, permuted and scheduled.
pub fn build_query_plan<R: Rng + ?Sized>(
    real: &[u32],
    shard: &NbParams,
    cfg: &PlanConfig,
    plan_id: u64,
    rng: &mut R,
) -> Result<QueryPlan> {
    if real.len() > cfg.max_queries {
        return Err(Error::Usage(format!("{} real queries exceed Δ = {}", real.len(), cfg.max_queries)));
    }
    if cfg.clusters == 0 {
        return Err(Error::InvalidParams("K must be ≥ 1".into()));
    }
    if let Some(&c) = real.iter().find(|&&c| c as usize >= cfg.clusters) {
        return Err(Error::Usage(format!("cluster {c} out of range")));
    }
    let mut items: Vec<QueryDescriptor> = real
        .iter()
        .enumerate()
        .map(|(i, &cluster)| QueryDescriptor { cluster, kind: QueryKind::Real, real_index: Some(i) })
        .collect();
    for i in 0..cfg.clusters {
        let f = sample_nb(shard, rng);
        for _ in 0..f {
            let cluster = match cfg.assignment {
                FakeAssignment::PerCluster => i as u32,
                FakeAssignment::UniformRandom => rng.random_range(0..cfg.clusters) as u32,
            };
            items.push(QueryDescriptor { cluster, kind: QueryKind::Fake, real_index: None });
        }
    }
    items.shuffle(rng);
    let schedule = rand_schedule(items.len(), cfg.slots, rng)?;
    Ok(QueryPlan { plan_id, items, schedule })
}

/// Queries the server sees per (slot, cluster).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpochHistogram {
    pub slots: usize,
    pub clusters: usize,
    counts: Vec<u64>,
}

impl EpochHistogram {
    pub fn new(slots: usize, clusters: usize) -> Self {
        EpochHistogram { slots, clusters, counts: vec![0; slots * clusters] }
    }

    pub fn add(&mut self, slot: usize, cluster: usize) {
        self.counts[slot * self.clusters + cluster] += 1;
    }

    pub fn get(&self, slot: usize, cluster: usize) -> u64 {
        self.counts[slot * self.clusters + cluster]
    }

    pub fn totals(&self) -> Vec<u64> {
        (0..self.clusters)
            .map(|c| (0..self.slots).map(|s| self.get(s, c)).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }
}

/// The trusted-curator reference: one NB(r, p) draw per cluster, merged
/// with all real queries and uniformly permuted.
pub fn central_curator<R: Rng + ?Sized>(
    clients: &[Vec<u32>],
    nb: &NbParams,
    clusters: usize,
    max_queries: usize,
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<u64>)> {
    let mut list = Vec::new();
    for (i, c) in clients.iter().enumerate() {
        if c.len() > max_queries {
            return Err(Error::Usage(format!("client {i} exceeds Δ = {max_queries}")));
        }
        if c.iter().any(|&x| x as usize >= clusters) {
            return Err(Error::Usage(format!("client {i} names an unknown cluster")));
        }
        list.extend_from_slice(c);
    }
    for k in 0..clusters {
        let f = sample_nb(nb, rng);
        list.extend(std::iter::repeat_n(k as u32, f as usize));
    }
    list.shuffle(rng);
    let mut hist = vec![0u64; clusters];
    for &c in &list {
        hist[c as usize] += 1;
    }
    Ok((list, hist))
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[u64], b: &[u64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable();
    b.sort_unstable();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS rejection threshold at level `alpha`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Total-variation distance between two empirical distributions.
pub fn total_variation<K: std::hash::Hash + Eq>(a: &[K], b: &[K]) -> f64 {
    use std::collections::HashMap;
    let mut m: HashMap<&K, (f64, f64)> = HashMap::new();
    for x in a {
        m.entry(x).or_default().0 += 1.0 / a.len() as f64;
    }
    for x in b {
        m.entry(x).or_default().1 += 1.0 / b.len() as f64;
    }
    0.5 * m.values().map(|(p, q)| (p - q).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerCheck {
    pub draws: usize,
    pub mean: f64,
    pub expected_mean: f64,
    pub variance: f64,
    pub expected_variance: f64,
    pub shards: u64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub inputs: PrivacyParams,
    pub nb: NbParams,
    pub shard: NbParams,
    pub expected_fakes_per_client: f64,
    pub epoch_epsilon: f64,
    pub epoch_delta: f64,
    pub total_epsilon: f64,
    pub total_delta: f64,
    /// A claimed total δ and whether the composed value exceeds it.
    pub claimed_total_delta: Option<f64>,
    pub claim_discrepancy: bool,
    pub sampler: Option<SamplerCheck>,
}

/// Accountant summary; `draws > 0` adds Monte-Carlo sampler statistics.
pub fn audit<R: Rng + ?Sized>(
    privacy: &PrivacyParams,
    claimed_total_delta: Option<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let nb = nb_params(privacy)?;
    let shard = nb.shard(privacy.honest_clients);
    let (epoch_epsilon, epoch_delta) = compose_privacy(privacy.epsilon, privacy.delta, privacy.max_queries, 1);
    let (total_epsilon, total_delta) = compose_privacy(privacy.epsilon, privacy.delta, privacy.max_queries, privacy.epochs);
    let sampler = (draws > 0).then(|| {
        let direct: Vec<u64> = (0..draws).map(|_| sample_nb(&nb, rng)).collect();
        let shards = privacy.honest_clients.min(100);
        let part = nb.shard(shards);
        let summed: Vec<u64> = (0..draws)
            .map(|_| (0..shards).map(|_| sample_nb(&part, rng)).sum())
            .collect();
        let mean = direct.iter().map(|&x| x as f64).sum::<f64>() / draws as f64;
        let variance = direct.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0).max(1.0);
        SamplerCheck {
            draws,
            mean,
            expected_mean: nb.mean(),
            variance,
            expected_variance: nb.variance(),
            shards,
            ks_statistic: ks_statistic(&direct, &summed),
            ks_critical: ks_critical(0.01, draws, draws),
        }
    });
    Ok(AuditReport {
        inputs: privacy.clone(),
        nb,
        shard,
        expected_fakes_per_client: expected_fake_queries(privacy)?,
        epoch_epsilon,
        epoch_delta,
        total_epsilon,
        total_delta,
        claimed_total_delta,
        claim_discrepancy: claimed_total_delta.is_some_and(|c| total_delta > c * (1.0 + 1e-9)),
        sampler,
    })
}

#[cfg(test)]
mod tests;
