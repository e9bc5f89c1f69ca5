//! Encrypted scoring of one cluster per query and client-side ranking.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bfv::{
    decrypt, drop_lsbs, encrypt_values, keygen, Ciphertext, CompressedCiphertext, EvaluationKey, Evaluator, OpCounts,
    SecretKey, SheParams,
};
use crate::cluster::{Embeddings, FixedPointParams};
use crate::error::{Error, Result};
use crate::packing::{baby_steps, pack_query, signed_mod, DbConfig, EncodedDatabase, ScoreModuli};
use crate::par::{derive_seed, Exec};
use crate::ring::Reader;

/// Default LSB drop applied to response ciphertexts.
pub const DEFAULT_DROP: (u32, u32) = (9, 0);
/// Largest per-entry metadata shipped inline with a response.
pub const DEFAULT_METADATA_THRESHOLD: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum QueryKind {
    Real,
    Fake,
}

/// What the server receives. The query kind never leaves the client.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchQuery {
    pub cluster: u32,
    pub plan_id: u64,
    /// One ciphertext per plaintext modulus.
    pub cts: Vec<Ciphertext>,
    pub evk: EvaluationKey,
}

/// Client-side state needed to open the response to one query.
#[derive(Clone, Debug)]
pub struct QuerySecret {
    pub cluster: u32,
    pub plan_id: u64,
    pub kind: QueryKind,
    sk: SecretKey,
}

/// Public routing data: parameters, centroids and per-cube slot maps.
#[derive(Clone, Debug)]
pub struct Directory {
    pub config: DbConfig,
    pub centroids: Embeddings,
    /// slot_maps[cluster][cube] = (slot, entry) pairs.
    pub slot_maps: Vec<Vec<Vec<(u32, u32)>>>,
}

impl EncodedDatabase {
    pub fn directory(&self) -> Directory {
        Directory {
            config: self.config.clone(),
            centroids: self.codebook.centroids.clone(),
            slot_maps: self.cubes.iter().map(|c| c.iter().map(|k| k.slots.clone()).collect()).collect(),
        }
    }
}

fn put_block(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

fn get_block<'a>(r: &mut Reader<'a>) -> Result<&'a [u8]> {
    let len = r.u32()? as usize;
    r.take(len)
}

impl SearchQuery {
    /// cluster u32, plan id u64, residue count u8, then length-prefixed
    /// ciphertexts and evaluation key.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.cluster.to_le_bytes());
        out.extend_from_slice(&self.plan_id.to_le_bytes());
        out.push(self.cts.len() as u8);
        for ct in &self.cts {
            put_block(&mut out, &ct.to_bytes());
        }
        put_block(&mut out, &self.evk.to_bytes());
        out
    }

    pub fn from_bytes(she: &[Arc<SheParams>], b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let cluster = r.u32()?;
        let plan_id = r.u64()?;
        let count = r.u8()? as usize;
        if count != she.len() {
            return Err(Error::Malformed("query residue count"));
        }
        let cts = she
            .iter()
            .map(|p| Ciphertext::from_bytes(p, get_block(&mut r)?))
            .collect::<Result<Vec<_>>>()?;
        let evk = EvaluationKey::from_bytes(&she[0], get_block(&mut r)?)?;
        if !r.done() {
            return Err(Error::Malformed("trailing bytes in query"));
        }
        Ok(SearchQuery { cluster, plan_id, cts, evk })
    }
}

/// Scores of one cluster, one compressed ciphertext per cube and residue.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchResponse {
    pub plan_id: u64,
    pub cluster: u32,
    /// cts[cube][residue].
    pub cts: Vec<Vec<CompressedCiphertext>>,
    /// Metadata records of the cluster when small enough to inline.
    pub metadata: Option<Vec<u8>>,
    /// Static estimate says the budget ran out (diagnostic).
    pub budget_exhausted: bool,
    /// Per-residue operation counts of this computation; not serialized.
    pub counts: Vec<OpCounts>,
}

impl SearchResponse {
    /// Bytes of score ciphertexts.
    pub fn ciphertext_bytes(&self) -> usize {
        self.cts.iter().flatten().map(|c| c.serialized_len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.cluster.to_le_bytes());
        out.extend_from_slice(&self.plan_id.to_le_bytes());
        out.push(self.budget_exhausted as u8);
        out.extend_from_slice(&(self.cts.len() as u32).to_le_bytes());
        out.push(self.cts.first().map_or(0, |c| c.len()) as u8);
        for c in self.cts.iter().flatten() {
            put_block(&mut out, &c.to_bytes());
        }
        match &self.metadata {
            Some(m) => {
                out.push(1);
                put_block(&mut out, m);
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let cluster = r.u32()?;
        let plan_id = r.u64()?;
        let budget_exhausted = r.u8()? != 0;
        let cubes = r.u32()? as usize;
        let residues = r.u8()? as usize;
        let mut cts = Vec::with_capacity(cubes.min(1024));
        for _ in 0..cubes {
            cts.push(
                (0..residues)
                    .map(|_| CompressedCiphertext::from_bytes(get_block(&mut r)?))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let metadata = match r.u8()? {
            0 => None,
            1 => Some(get_block(&mut r)?.to_vec()),
            _ => return Err(Error::Malformed("metadata flag")),
        };
        if !r.done() {
            return Err(Error::Malformed("trailing bytes in response"));
        }
        Ok(SearchResponse { plan_id, cluster, cts, metadata, budget_exhausted, counts: Vec::new() })
    }
}

/// Builds queries with fresh keys.
#[derive(Clone, Debug)]
pub struct Client {
    she: Vec<Arc<SheParams>>,
    moduli: ScoreModuli,
    fixed: FixedPointParams,
    n: usize,
    d: usize,
}

impl Client {
    pub fn new(cfg: &DbConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Client {
            she: cfg.she_params()?,
            moduli: cfg.score_moduli()?,
            fixed: cfg.fixed_point()?,
            n: cfg.n,
            d: cfg.d,
        })
    }

    pub fn she(&self) -> &[Arc<SheParams>] {
        &self.she
    }

    pub fn fixed_point(&self) -> &FixedPointParams {
        &self.fixed
    }

    /// Galois elements for the rotation steps 1 and g.
    pub fn galois_elements(&self) -> Vec<usize> {
        let p = &self.she[0];
        vec![p.rotation_element(1), p.rotation_element(baby_steps(self.d) as i64)]
    }

    /// Encrypts a scaled query vector (or zeros for a fake) under a fresh key.
    pub fn build(
        &self,
        scaled: Option<&[i64]>,
        cluster: u32,
        plan_id: u64,
        seed: u64,
    ) -> Result<(SearchQuery, QuerySecret)> {
        let zeros = vec![0i64; self.d];
        let (kind, q) = match scaled {
            Some(q) => (QueryKind::Real, q),
            None => (QueryKind::Fake, zeros.as_slice()),
        };
        if q.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: q.len() });
        }
        let (sk, evk) = keygen(&self.she[0], &self.galois_elements(), false, derive_seed(seed, 0, plan_id))?;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 1, plan_id));
        let cts = self
            .she
            .iter()
            .map(|p| {
                let slots = pack_query(&signed_mod(q, p.t()), self.n, self.d)?;
                encrypt_values(p, &sk, &slots, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((SearchQuery { cluster, plan_id, cts, evk }, QuerySecret { cluster, plan_id, kind, sk }))
    }

    pub fn real_query(&self, scaled: &[i64], cluster: u32, plan_id: u64, seed: u64) -> Result<(SearchQuery, QuerySecret)> {
        self.build(Some(scaled), cluster, plan_id, seed)
    }

    pub fn fake_query(&self, cluster: u32, plan_id: u64, seed: u64) -> Result<(SearchQuery, QuerySecret)> {
        self.build(None, cluster, plan_id, seed)
    }

    /// Signed scores of every entry covered by the response.
    pub fn decrypt_scores(&self, dir: &Directory, resp: &SearchResponse, secret: &QuerySecret) -> Result<Vec<(usize, i64)>> {
        if resp.plan_id != secret.plan_id || resp.cluster != secret.cluster {
            return Err(Error::Usage(format!(
                "response ({}, {}) does not belong to query ({}, {})",
                resp.plan_id, resp.cluster, secret.plan_id, secret.cluster
            )));
        }
        let maps = dir
            .slot_maps
            .get(resp.cluster as usize)
            .ok_or_else(|| Error::Usage(format!("unknown cluster {}", resp.cluster)))?;
        if maps.len() != resp.cts.len() {
            return Err(Error::Malformed("response cube count"));
        }
        let mut out = Vec::new();
        for (cts, map) in resp.cts.iter().zip(maps) {
            if cts.len() != self.she.len() {
                return Err(Error::Malformed("response residue count"));
            }
            let residues = cts
                .iter()
                .zip(&self.she)
                .map(|(c, p)| {
                    let ct = c.decompress(p)?;
                    Ok(decrypt(p, &secret.sk, &ct)?.decode(p))
                })
                .collect::<Result<Vec<_>>>()?;
            let wanted: Vec<Vec<u64>> = residues
                .iter()
                .map(|v| map.iter().map(|&(s, _)| v[s as usize]).collect())
                .collect();
            let scores = self.moduli.combine(&wanted)?;
            out.extend(map.iter().zip(scores).map(|(&(_, e), s)| (e as usize, s)));
        }
        Ok(out)
    }
}

/// Merges responses of real queries into one ranking: descending score, ties
/// to the lower entry index, at most `topk` entries. Fake responses are
/// discarded unopened.
pub fn decrypt_and_rank(
    client: &Client,
    dir: &Directory,
    responses: &[SearchResponse],
    secrets: &[QuerySecret],
    topk: usize,
) -> Result<Vec<(usize, i64)>> {
    if responses.len() != secrets.len() {
        return Err(Error::Dimension { expected: secrets.len(), got: responses.len() });
    }
    let mut all = Vec::new();
    for (r, s) in responses.iter().zip(secrets) {
        if s.kind == QueryKind::Fake {
            continue;
        }
        all.extend(client.decrypt_scores(dir, r, s)?);
    }
    Ok(rank(all, topk))
}

/// Sort by descending score then ascending entry, keep first occurrence.
pub fn rank(mut scores: Vec<(usize, i64)>, topk: usize) -> Vec<(usize, i64)> {
    scores.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut seen = std::collections::HashSet::new();
    scores.retain(|&(e, _)| seen.insert(e));
    scores.truncate(topk);
    scores
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServerOptions {
    pub drop: (u32, u32),
    pub metadata_threshold: usize,
    pub exec: Exec,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            drop: DEFAULT_DROP,
            metadata_threshold: DEFAULT_METADATA_THRESHOLD,
            exec: Exec::default(),
        }
    }
}

/// Stateless scoring over a shared database.
#[derive(Clone, Debug)]
pub struct Server {
    db: Arc<EncodedDatabase>,
    pub options: ServerOptions,
}

impl Server {
    pub fn new(db: Arc<EncodedDatabase>, options: ServerOptions) -> Self {
        Server { db, options }
    }

    pub fn db(&self) -> &Arc<EncodedDatabase> {
        &self.db
    }

    pub fn compute(&self, q: &SearchQuery) -> Result<SearchResponse> {
        server_compute(&self.db, q, &self.options)
    }
}

/// Baby steps, per-giant-step diagonal sums, Horner over the giant steps,
/// then mod switch to one limb and LSB drop.
pub fn server_compute(db: &EncodedDatabase, q: &SearchQuery, opt: &ServerOptions) -> Result<SearchResponse> {
    let cubes = db
        .cubes
        .get(q.cluster as usize)
        .ok_or_else(|| Error::Usage(format!("unknown cluster {}", q.cluster)))?;
    let she = db.she();
    if q.cts.len() != she.len() {
        return Err(Error::Dimension { expected: she.len(), got: q.cts.len() });
    }
    let g = cubes[0].shape.g;
    for step in [1, g as i64] {
        let e = she[0].rotation_element(step);
        if !q.evk.has_galois(e) {
            return Err(Error::MissingKey(format!("rotation by {step}")));
        }
    }
    let per_residue = opt.exec.map_range(she.len(), |r| -> Result<(Vec<CompressedCiphertext>, OpCounts)> {
        let params = &she[r];
        let ev = Evaluator::new(params);
        let mut baby = Vec::with_capacity(g);
        baby.push(q.cts[r].clone());
        for j in 1..g {
            let next = ev.rotate(&baby[j - 1], 1, &q.evk)?;
            baby.push(next);
        }
        let top = params.max_level();
        let mut out = Vec::with_capacity(cubes.len());
        for cube in cubes {
            let diags = cube.prepared(r, params)?;
            let giant = |k: usize| -> Result<Ciphertext> {
                let mut s = Ciphertext::zero(params, top);
                for (j, b) in baby.iter().enumerate() {
                    if let Some(Some(pt)) = diags.get(j + g * k) {
                        ev.mul_plain_acc(&mut s, b, pt)?;
                    }
                }
                Ok(s)
            };
            let h = cube.shape.h;
            let mut acc = giant(h - 1)?;
            for k in (0..h - 1).rev() {
                acc = ev.rotate(&acc, g as i64, &q.evk)?;
                ev.add_assign(&mut acc, &giant(k)?)?;
            }
            let low = ev.mod_switch_to(&acc, 1)?;
            out.push(drop_lsbs(params, &low, opt.drop.0, opt.drop.1)?);
        }
        Ok((out, ev.counts()))
    });
    let mut by_residue = Vec::with_capacity(she.len());
    let mut counts = Vec::with_capacity(she.len());
    for r in per_residue {
        let (c, k) = r?;
        by_residue.push(c);
        counts.push(k);
    }
    let cts: Vec<Vec<CompressedCiphertext>> = (0..cubes.len())
        .map(|c| by_residue.iter().map(|v| v[c].clone()).collect())
        .collect();
    let budget_exhausted = cts.iter().flatten().zip(she.iter().cycle()).any(|(c, p)| {
        p.log2_q(1) - (2.0 * p.t() as f64).log2() - c.noise_bits() <= 0.0
    });
    let c = q.cluster as usize;
    let small = db.cluster_entries(c).iter().all(|&e| db.metadata[e].len() <= opt.metadata_threshold);
    Ok(SearchResponse {
        plan_id: q.plan_id,
        cluster: q.cluster,
        cts,
        metadata: small.then(|| db.cluster_metadata(c)),
        budget_exhausted,
        counts,
    })
}
