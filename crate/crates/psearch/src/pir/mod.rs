//! Keyword PIR over cuckoo tables: one-ciphertext queries expanded into row
//! and column indicators, a plaintext matrix product, and a final
//! ciphertext inner product.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::bfv::{
    decrypt, encrypt, keygen, Ciphertext, Encoding, EvaluationKey, Evaluator, OpCounts, ParamSpec, Plaintext,
    PreparedPlaintext, SecretKey, SheParams, Tensor,
};
use crate::bfv::derive_chain;
use crate::error::{Error, Result};
use crate::par::derive_seed;
use crate::ring::Reader;

mod cuckoo;
pub use cuckoo::{
    build_cuckoo, position, try_build_cuckoo, CuckooConfig, CuckooStats, CuckooTable, CuckooVariant, DEFAULT_EXPANSION,
    DEFAULT_MAX_KICKS, MAX_RETRIES, SPLIT_CAPACITY,
};

/// Ratio of ciphertext-multiplication to rotation cost used for dimensions.
pub const DEFAULT_GAMMA: f64 = 5.0;

/// Rotation-equivalent server cost (γ+2)·d₁ + 2·d₂.
pub fn dims_cost(d1: usize, d2: usize, gamma: f64) -> f64 {
    (gamma + 2.0) * d1 as f64 + 2.0 * d2 as f64
}

/// d₂ = round(√(1+γ/2)·√C), d₁ = ⌈C/d₂⌉.
pub fn choose_dims_formula(c: usize, gamma: f64) -> (usize, usize) {
    let d2 = (((1.0 + gamma / 2.0) * c as f64).sqrt().round() as usize).clamp(1, c.max(1));
    (c.max(1).div_ceil(d2), d2)
}

/// The integer split d₁·d₂ ≥ C of least cost; ties go to the smaller d₂.
pub fn choose_dims(c: usize, gamma: f64) -> Result<(usize, usize)> {
    if c == 0 || !(gamma > 0.0) {
        return Err(Error::InvalidParams(format!("choose_dims needs C ≥ 1 and γ > 0 (C = {c}, γ = {gamma})")));
    }
    let mut best = (c, 1, dims_cost(c, 1, gamma));
    for d2 in 1..=c {
        let d1 = c.div_ceil(d2);
        let cost = dims_cost(d1, d2, gamma);
        if cost < best.2 {
            best = (d1, d2, cost);
        }
    }
    Ok((best.0, best.1))
}

/// PIR ring parameters: coefficient encoding with a small t.
pub fn pir_params(n: usize, t: u64) -> Result<Arc<SheParams>> {
    SheParams::new(ParamSpec::with_t(n, t, Encoding::Coeff))
}

/// Shape of the expansion tree for d₁ + d₂ indicator outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExpansionPlan {
    pub n: usize,
    pub d1: usize,
    pub d2: usize,
    /// Stop substituting once a subtree holds a single live index.
    pub linearize: bool,
}

impl ExpansionPlan {
    pub fn new(n: usize, d1: usize, d2: usize, linearize: bool) -> Result<Self> {
        if d1 == 0 || d2 == 0 || d1 + d2 > n {
            return Err(Error::InvalidParams(format!("need 1 ≤ d₁, d₂ and d₁ + d₂ ≤ n (d₁ = {d1}, d₂ = {d2}, n = {n})")));
        }
        Ok(ExpansionPlan { n, d1, d2, linearize })
    }

    pub fn outputs(&self) -> usize {
        self.d1 + self.d2
    }

    /// ⌈log₂(d₁ + d₂)⌉.
    pub fn levels(&self) -> usize {
        self.outputs().next_power_of_two().trailing_zeros() as usize
    }

    /// Galois element of level j: n/2^j + 1.
    pub fn element(&self, j: usize) -> usize {
        self.n / (1 << j) + 1
    }

    fn walk(&self, j: usize, live: &[usize], nodes: &mut [usize], depth: &mut [usize]) {
        if live.len() == 1 && (self.linearize || j == self.levels()) {
            depth[live[0]] = j;
            return;
        }
        nodes[j] += 1;
        let (l, r): (Vec<usize>, Vec<usize>) = live.iter().partition(|&&i| (i >> j) & 1 == 0);
        if !l.is_empty() {
            self.walk(j + 1, &l, nodes, depth);
        }
        if !r.is_empty() {
            self.walk(j + 1, &r, nodes, depth);
        }
    }

    /// Substituting nodes per level and the depth at which each output leaves the tree.
    pub fn shape(&self) -> (Vec<usize>, Vec<usize>) {
        let mut nodes = vec![0; self.levels() + 1];
        let mut depth = vec![0; self.outputs()];
        let live: Vec<usize> = (0..self.outputs()).collect();
        self.walk(0, &live, &mut nodes, &mut depth);
        nodes.truncate(self.levels());
        (nodes, depth)
    }

    /// One key per substituting level.
    pub fn per_level_elements(&self) -> Vec<usize> {
        let (nodes, _) = self.shape();
        (0..self.levels()).filter(|&j| nodes[j] > 0).map(|j| self.element(j)).collect()
    }

    /// Key switches the expansion performs when holding `held`, or None if
    /// some level cannot be derived.
    pub fn substitution_cost(&self, held: &[usize]) -> Option<usize> {
        let (nodes, _) = self.shape();
        let two_n = 2 * self.n;
        let mut total = 0;
        for (j, &k) in nodes.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let e = if held.contains(&self.element(j)) { 1 } else { derive_chain(two_n, self.element(j), held)?.1 };
            total += k * e;
        }
        Some(total)
    }

    /// Keys only for levels ≥ h₀, with the largest h₀ ≤ ⌈ℓ/2⌉ whose derived
    /// cost stays within that of the non-linearized per-level scheme.
    pub fn reduced_elements(&self) -> Vec<usize> {
        let naive = ExpansionPlan { linearize: false, ..*self };
        let budget = naive.substitution_cost(&naive.per_level_elements()).unwrap_or(usize::MAX);
        let (nodes, _) = self.shape();
        let levels = self.levels();
        for h0 in (1..=levels.div_ceil(2)).rev() {
            let held: Vec<usize> = (h0..levels).filter(|&j| nodes[j] > 0).map(|j| self.element(j)).collect();
            if held.is_empty() {
                continue;
            }
            if let Some(c) = self.substitution_cost(&held) {
                if c <= budget {
                    return held;
                }
            }
        }
        self.per_level_elements()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeySet {
    PerLevel,
    Reduced,
    /// Explicit Galois elements; levels without a held or derivable key fail at expansion.
    Custom(Vec<usize>),
}

impl KeySet {
    pub fn elements(&self, plan: &ExpansionPlan) -> Vec<usize> {
        match self {
            KeySet::PerLevel => plan.per_level_elements(),
            KeySet::Reduced => plan.reduced_elements(),
            KeySet::Custom(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PirQuery {
    pub ct: Ciphertext,
    pub evk: EvaluationKey,
}

impl PirQuery {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for b in [self.ct.to_bytes(), self.evk.to_bytes()] {
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        out
    }

    pub fn from_bytes(params: &SheParams, b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let n = r.u32()? as usize;
        let ct = Ciphertext::from_bytes(params, r.take(n)?)?;
        let n = r.u32()? as usize;
        let evk = EvaluationKey::from_bytes(params, r.take(n)?)?;
        if !r.done() {
            return Err(Error::Malformed("trailing bytes in PIR query"));
        }
        Ok(PirQuery { ct, evk })
    }
}

/// Encrypts X^row + X^(d₁+col), each term pre-scaled by 2^−depth mod t.
pub fn encode_pir_query(
    params: &SheParams,
    plan: &ExpansionPlan,
    row: usize,
    col: usize,
    keys: &KeySet,
    seed: u64,
) -> Result<(PirQuery, SecretKey)> {
    if row >= plan.d1 || col >= plan.d2 {
        return Err(Error::Usage(format!("position ({row}, {col}) outside {}×{}", plan.d1, plan.d2)));
    }
    if plan.n != params.n() || params.encoding() != Encoding::Coeff {
        return Err(Error::InvalidParams("PIR needs coefficient-encoded parameters of the plan's degree".into()));
    }
    let (sk, evk) = keygen(params, &keys.elements(plan), true, derive_seed(seed, 0, 0))?;
    let (_, depth) = plan.shape();
    let tm = params.t_modulus();
    let inv2 = tm.inv(2).ok_or_else(|| Error::InvalidParams("PIR t must be odd".into()))?;
    let mut m = vec![0u64; params.n()];
    for i in [row, plan.d1 + col] {
        m[i] = tm.pow(inv2, depth[i] as u64);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 1, 0));
    let ct = encrypt(params, &sk, &Plaintext::encode(params, &m)?, &mut rng)?;
    Ok((PirQuery { ct, evk }, sk))
}

/// Expands the query into d₁ row and d₂ column indicator ciphertexts.
pub fn oblivious_expand(ev: &Evaluator, plan: &ExpansionPlan, q: &PirQuery) -> Result<Vec<Ciphertext>> {
    let mut out: Vec<Option<Ciphertext>> = vec![None; plan.outputs()];
    let live: Vec<usize> = (0..plan.outputs()).collect();
    expand_node(ev, plan, &q.evk, q.ct.clone(), 0, 0, &live, &mut out)?;
    Ok(out.into_iter().map(|c| c.expect("every output is reached")).collect())
}

#[allow(clippy::too_many_arguments)]
fn expand_node(
    ev: &Evaluator,
    plan: &ExpansionPlan,
    evk: &EvaluationKey,
    ct: Ciphertext,
    j: usize,
    a: usize,
    live: &[usize],
    out: &mut [Option<Ciphertext>],
) -> Result<()> {
    let two_n = 2 * plan.n;
    if live.len() == 1 && (plan.linearize || j == plan.levels()) {
        let i = live[0];
        let shift = i - a;
        out[i] = Some(if shift == 0 { ct } else { ev.mul_monomial(&ct, two_n - shift) });
        return Ok(());
    }
    let s = ev.substitute(&ct, plan.element(j), evk)?;
    let (l, r): (Vec<usize>, Vec<usize>) = live.iter().partition(|&&i| (i >> j) & 1 == 0);
    if !r.is_empty() {
        let d = ev.sub(&ct, &s)?;
        let c1 = ev.mul_monomial(&d, two_n - (1 << j));
        expand_node(ev, plan, evk, c1, j + 1, a + (1 << j), &r, out)?;
    }
    if !l.is_empty() {
        let c0 = ev.add(&ct, &s)?;
        expand_node(ev, plan, evk, c0, j + 1, a, &l, out)?;
    }
    Ok(())
}

/// Entries packed as 4-bit digits into coefficient plaintexts: d₁ × d₂
/// positions, `chunks` plaintexts each.
#[derive(Debug)]
pub struct PirDatabase {
    params: Arc<SheParams>,
    pub d1: usize,
    pub d2: usize,
    pub chunks: usize,
    pub entry_bytes: usize,
    entries: usize,
    plaintexts: Vec<Vec<Plaintext>>,
    prepared: OnceLock<Vec<Vec<PreparedPlaintext>>>,
}

impl Clone for PirDatabase {
    fn clone(&self) -> Self {
        PirDatabase {
            params: self.params.clone(),
            d1: self.d1,
            d2: self.d2,
            chunks: self.chunks,
            entry_bytes: self.entry_bytes,
            entries: self.entries,
            plaintexts: self.plaintexts.clone(),
            prepared: OnceLock::new(),
        }
    }
}

/// Plaintexts needed for `bytes` bytes at two digits per byte.
pub fn chunks_for(bytes: usize, n: usize) -> usize {
    (2 * bytes).div_ceil(n).max(1)
}

fn to_digits(bytes: &[u8], n: usize, chunks: usize) -> Vec<Vec<u64>> {
    let mut d = Vec::with_capacity(2 * bytes.len());
    for &b in bytes {
        d.push((b & 15) as u64);
        d.push((b >> 4) as u64);
    }
    d.resize(chunks * n, 0);
    d.chunks(n).map(<[u64]>::to_vec).collect()
}

fn from_digits(chunks: &[Vec<u64>], bytes: usize) -> Result<Vec<u8>> {
    let flat: Vec<u64> = chunks.iter().flatten().copied().collect();
    if flat.len() < 2 * bytes {
        return Err(Error::Malformed("PIR response too short"));
    }
    flat[..2 * bytes]
        .chunks(2)
        .map(|p| {
            if p[0] > 15 || p[1] > 15 {
                Err(Error::Malformed("PIR digit out of range"))
            } else {
                Ok((p[0] | (p[1] << 4)) as u8)
            }
        })
        .collect()
}

impl PirDatabase {
    /// Equal-length entries in row-major order over a d₁ × d₂ grid.
    pub fn with_dims(params: &Arc<SheParams>, entries: &[Vec<u8>], d1: usize, d2: usize) -> Result<Self> {
        if params.encoding() != Encoding::Coeff || params.t() <= 16 {
            return Err(Error::InvalidParams("PIR needs coefficient encoding with t > 16".into()));
        }
        if d1 * d2 < entries.len() || d1 == 0 || d2 == 0 {
            return Err(Error::InvalidParams(format!("{d1}×{d2} grid cannot hold {} entries", entries.len())));
        }
        ExpansionPlan::new(params.n(), d1, d2, true)?;
        let entry_bytes = entries.first().map_or(0, Vec::len);
        if entries.iter().any(|e| e.len() != entry_bytes) {
            return Err(Error::Usage("PIR entries must share one length".into()));
        }
        let n = params.n();
        let chunks = chunks_for(entry_bytes, n);
        let plaintexts = entries
            .iter()
            .map(|e| to_digits(e, n, chunks).into_iter().map(|d| Plaintext::encode(params, &d)).collect())
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(PirDatabase {
            params: params.clone(),
            d1,
            d2,
            chunks,
            entry_bytes,
            entries: entries.len(),
            plaintexts,
            prepared: OnceLock::new(),
        })
    }

    /// Dimensions from `choose_dims`.
    pub fn new(params: &Arc<SheParams>, entries: &[Vec<u8>], gamma: f64) -> Result<Self> {
        let (d1, d2) = choose_dims(entries.len().max(1), gamma)?;
        Self::with_dims(params, entries, d1, d2)
    }

    pub fn params(&self) -> &Arc<SheParams> {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.d2, index % self.d2)
    }

    pub fn plan(&self, linearize: bool) -> ExpansionPlan {
        ExpansionPlan { n: self.params.n(), d1: self.d1, d2: self.d2, linearize }
    }

    fn prepared(&self) -> &[Vec<PreparedPlaintext>] {
        self.prepared.get_or_init(|| {
            let top = self.params.max_level();
            self.plaintexts
                .iter()
                .map(|e| e.iter().map(|p| p.prepare(&self.params, top)).collect())
                .collect()
        })
    }

    fn check_expanded(&self, expanded: &[Ciphertext]) -> Result<()> {
        if expanded.len() != self.d1 + self.d2 {
            return Err(Error::Dimension { expected: self.d1 + self.d2, got: expanded.len() });
        }
        Ok(())
    }

    /// a_r = Σ_c D[r][c]·col_c for one chunk.
    fn row_product(&self, ev: &Evaluator, cols: &[Ciphertext], r: usize, chunk: usize) -> Result<Ciphertext> {
        let prep = self.prepared();
        let mut a = Ciphertext::zero(&self.params, cols[0].level());
        for (c, col) in cols.iter().enumerate() {
            if let Some(e) = prep.get(r * self.d2 + c) {
                ev.mul_plain_acc(&mut a, col, &e[chunk])?;
            }
        }
        Ok(a)
    }

    fn finish(&self, ev: &Evaluator, cts: Vec<Ciphertext>) -> Result<PirResponse> {
        let cts = cts.iter().map(|c| ev.mod_switch_to(c, 1)).collect::<Result<Vec<_>>>()?;
        let budget_exhausted = cts.iter().any(|c| c.budget_estimate(&self.params) <= 0.0);
        Ok(PirResponse { cts, budget_exhausted, counts: ev.counts() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rescale {
    /// Accumulate tensors and rescale once.
    Lazy,
    /// Rescale and relinearize after every product.
    Eager,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PirResponse {
    /// One ciphertext per chunk.
    pub cts: Vec<Ciphertext>,
    pub budget_exhausted: bool,
    pub counts: OpCounts,
}

impl PirResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.budget_exhausted as u8];
        out.extend_from_slice(&(self.cts.len() as u32).to_le_bytes());
        for c in &self.cts {
            let b = c.to_bytes();
            out.extend_from_slice(&(b.len() as u32).to_le_bytes());
            out.extend_from_slice(&b);
        }
        out
    }

    pub fn from_bytes(params: &SheParams, b: &[u8]) -> Result<Self> {
        let mut r = Reader::new(b);
        let budget_exhausted = r.u8()? != 0;
        let k = r.u32()? as usize;
        let mut cts = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            let n = r.u32()? as usize;
            cts.push(Ciphertext::from_bytes(params, r.take(n)?)?);
        }
        if !r.done() {
            return Err(Error::Malformed("trailing bytes in PIR response"));
        }
        Ok(PirResponse { cts, budget_exhausted, counts: OpCounts::default() })
    }
}

/// rᵀ(D·c): d₂ plaintext products per row, then d₁ ciphertext products per chunk.
pub fn pir_respond(db: &PirDatabase, expanded: &[Ciphertext], evk: &EvaluationKey, mode: Rescale) -> Result<PirResponse> {
    db.check_expanded(expanded)?;
    let ev = Evaluator::new(&db.params);
    let (rows, cols) = expanded.split_at(db.d1);
    let mut out = Vec::with_capacity(db.chunks);
    for chunk in 0..db.chunks {
        let mut lazy: Option<Tensor> = None;
        let mut eager: Option<Ciphertext> = None;
        for (r, row) in rows.iter().enumerate() {
            let a = db.row_product(&ev, cols, r, chunk)?;
            match mode {
                Rescale::Lazy => match lazy.as_mut() {
                    None => lazy = Some(ev.tensor(row, &a)?),
                    Some(t) => ev.tensor_acc(t, row, &a)?,
                },
                Rescale::Eager => {
                    let p = ev.mul(row, &a, evk)?;
                    match eager.as_mut() {
                        None => eager = Some(p),
                        Some(s) => ev.add_assign(s, &p)?,
                    }
                }
            }
        }
        out.push(match mode {
            Rescale::Lazy => ev.rescale_relin(lazy.expect("d₁ ≥ 1"), evk)?,
            Rescale::Eager => eager.expect("d₁ ≥ 1"),
        });
    }
    db.finish(&ev, out)
}

/// Outer product of the indicators first (d₁·d₂ ciphertext products,
/// independent of the chunk count), then one plaintext product per
/// position and chunk.
pub fn pir_respond_large(db: &PirDatabase, expanded: &[Ciphertext], evk: &EvaluationKey) -> Result<PirResponse> {
    db.check_expanded(expanded)?;
    let ev = Evaluator::new(&db.params);
    let (rows, cols) = expanded.split_at(db.d1);
    let mut outer = Vec::with_capacity(db.d1 * db.d2);
    for row in rows {
        for col in cols {
            outer.push(ev.mul(row, col, evk)?);
        }
    }
    let prep = db.prepared();
    let mut out = Vec::with_capacity(db.chunks);
    for chunk in 0..db.chunks {
        let mut acc = Ciphertext::zero(&db.params, outer[0].level());
        for (pos, e) in prep.iter().enumerate() {
            ev.mul_plain_acc(&mut acc, &outer[pos], &e[chunk])?;
        }
        out.push(acc);
    }
    db.finish(&ev, out)
}

/// Expands and answers in one step.
pub fn pir_answer(db: &PirDatabase, q: &PirQuery, linearize: bool, mode: Rescale) -> Result<PirResponse> {
    let ev = Evaluator::new(&db.params);
    let expanded = oblivious_expand(&ev, &db.plan(linearize), q)?;
    let mut resp = pir_respond(db, &expanded, &q.evk, mode)?;
    resp.counts = resp.counts + ev.counts();
    Ok(resp)
}

/// Entry bytes recovered from a response.
pub fn decode_response(params: &SheParams, sk: &SecretKey, resp: &PirResponse, entry_bytes: usize) -> Result<Vec<u8>> {
    let digits = resp
        .cts
        .iter()
        .map(|c| Ok(decrypt(params, sk, c)?.coeffs().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    from_digits(&digits, entry_bytes)
}

/// Public description of a keyword PIR server.
#[derive(Clone, Debug, PartialEq)]
pub struct KeywordDirectory {
    pub variant: CuckooVariant,
    pub seed: u64,
    pub sizes: [usize; 2],
    pub bucket_bytes: usize,
    /// (d₁, d₂) of each PIR database.
    pub dims: Vec<(usize, usize)>,
    pub linearize: bool,
}

impl KeywordDirectory {
    /// PIR database and index holding bucket `pos` of cuckoo table `t`.
    pub fn locate(&self, t: usize, pos: usize) -> (usize, usize) {
        match self.variant {
            CuckooVariant::TwoTable => (0, t * self.sizes[0] + pos),
            CuckooVariant::OneHashSplit => (t, pos),
        }
    }

    /// Positions a single query selects among.
    pub fn query_positions(&self) -> usize {
        match self.variant {
            CuckooVariant::TwoTable => self.sizes[0] + self.sizes[1],
            CuckooVariant::OneHashSplit => self.sizes[0],
        }
    }
}

/// The two-hash table is served as one database over both tables; the
/// split table as one database per table.
#[derive(Clone, Debug)]
pub struct KeywordServer {
    pub table: CuckooTable,
    pub dbs: Vec<PirDatabase>,
    pub linearize: bool,
}

impl KeywordServer {
    pub fn new(table: CuckooTable, params: &Arc<SheParams>, gamma: f64) -> Result<Self> {
        let dbs = match table.variant {
            CuckooVariant::TwoTable => {
                let mut all = table.bucket_entries(0);
                all.extend(table.bucket_entries(1));
                vec![PirDatabase::new(params, &all, gamma)?]
            }
            CuckooVariant::OneHashSplit => vec![
                PirDatabase::new(params, &table.bucket_entries(0), gamma)?,
                PirDatabase::new(params, &table.bucket_entries(1), gamma)?,
            ],
        };
        Ok(KeywordServer { table, dbs, linearize: true })
    }

    pub fn directory(&self) -> KeywordDirectory {
        KeywordDirectory {
            variant: self.table.variant,
            seed: self.table.seed,
            sizes: self.table.sizes(),
            bucket_bytes: self.table.bucket_bytes(),
            dims: self.dbs.iter().map(|d| (d.d1, d.d2)).collect(),
            linearize: self.linearize,
        }
    }

    pub fn respond(&self, db: usize, q: &PirQuery) -> Result<PirResponse> {
        let db = self.dbs.get(db).ok_or_else(|| Error::Usage(format!("no PIR database {db}")))?;
        pir_answer(db, q, self.linearize, Rescale::Lazy)
    }
}

/// Result of one keyword lookup with its serialized traffic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeywordFetch {
    pub metadata: Option<Vec<u8>>,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

/// Queries both candidate buckets and returns the keyword's metadata, or
/// None when neither bucket holds it.
pub fn keyword_fetch(
    server: &KeywordServer,
    params: &Arc<SheParams>,
    keyword: &[u8],
    keys: &KeySet,
    seed: u64,
) -> Result<Option<Vec<u8>>> {
    Ok(keyword_fetch_sized(server, params, keyword, keys, seed)?.metadata)
}

pub fn keyword_fetch_sized(
    server: &KeywordServer,
    params: &Arc<SheParams>,
    keyword: &[u8],
    keys: &KeySet,
    seed: u64,
) -> Result<KeywordFetch> {
    let dir = server.directory();
    let mut out = KeywordFetch::default();
    if dir.sizes[0] == 0 {
        return Ok(out);
    }
    for t in 0..2 {
        let (db, index) = dir.locate(t, position(dir.seed, t, keyword, dir.sizes[t]));
        let (d1, d2) = dir.dims[db];
        let plan = ExpansionPlan::new(params.n(), d1, d2, dir.linearize)?;
        let (q, sk) = encode_pir_query(params, &plan, index / d2, index % d2, keys, derive_seed(seed, t as u64, 0))?;
        let req = q.to_bytes();
        let resp = server.respond(db, &PirQuery::from_bytes(params, &req)?)?.to_bytes();
        out.request_bytes += req.len();
        out.response_bytes += resp.len();
        let bucket = decode_response(params, &sk, &PirResponse::from_bytes(params, &resp)?, dir.bucket_bytes)?;
        if out.metadata.is_none() {
            out.metadata = CuckooTable::parse_bucket(&bucket)?.into_iter().find(|(k, _)| k == keyword).map(|(_, m)| m);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
