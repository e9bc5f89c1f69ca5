//! Two-table cuckoo hashing for keyword lookup.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::par::derive_seed;
use crate::ring::Reader;

pub const DEFAULT_EXPANSION: f64 = 1.5;
/// Rebuilds with a fresh seed after a failed placement.
pub const MAX_RETRIES: u64 = 8;
pub const DEFAULT_MAX_KICKS: usize = 500;
pub const SPLIT_CAPACITY: usize = 3;

const MAGIC: &[u8; 4] = b"WCUK";
const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CuckooVariant {
    /// Two hashes, one item per bucket, random-walk eviction. Both tables
    /// form one PIR database.
    TwoTable,
    /// One hash per table, buckets of three, no eviction. Each table is its
    /// own PIR database.
    #[default]
    OneHashSplit,
}

impl CuckooVariant {
    pub fn capacity(self) -> usize {
        match self {
            CuckooVariant::TwoTable => 1,
            CuckooVariant::OneHashSplit => SPLIT_CAPACITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CuckooConfig {
    pub variant: CuckooVariant,
    /// Buckets per table as a multiple of the entry count.
    pub expansion: f64,
    pub max_kicks: usize,
}

impl Default for CuckooConfig {
    fn default() -> Self {
        CuckooConfig { variant: CuckooVariant::default(), expansion: DEFAULT_EXPANSION, max_kicks: DEFAULT_MAX_KICKS }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuckooStats {
    pub entries: usize,
    pub sizes: [usize; 2],
    pub attempts: u64,
    pub first_seed: u64,
}

impl fmt::Display for CuckooStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cuckoo placement failed for {} entries in tables of {}+{} buckets after {} attempts from seed {}",
            self.entries, self.sizes[0], self.sizes[1], self.attempts, self.first_seed
        )
    }
}

/// h_t(keyword) = SHA-256(seed ‖ t ‖ keyword) mod size.
pub fn position(seed: u64, table: usize, keyword: &[u8], size: usize) -> usize {
    if size == 0 {
        return 0;
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update([table as u8]);
    h.update(keyword);
    let d = h.finalize();
    (u64::from_le_bytes(d[..8].try_into().unwrap()) % size as u64) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct CuckooTable {
    pub variant: CuckooVariant,
    /// The seed the successful build used.
    pub seed: u64,
    sizes: [usize; 2],
    tables: [Vec<Vec<u32>>; 2],
    entries: Vec<(Vec<u8>, Vec<u8>)>,
    bucket_bytes: usize,
}

fn entry_len(k: &[u8], m: &[u8]) -> usize {
    6 + k.len() + m.len()
}

fn table_size(n: usize, expansion: f64) -> usize {
    (expansion * n as f64).ceil() as usize
}

fn check_entries(entries: &[(Vec<u8>, Vec<u8>)], cfg: &CuckooConfig) -> Result<()> {
    if !(cfg.expansion >= DEFAULT_EXPANSION) {
        return Err(Error::InvalidParams(format!("cuckoo expansion must be ≥ {DEFAULT_EXPANSION}, got {}", cfg.expansion)));
    }
    let mut seen = HashSet::new();
    for (k, m) in entries {
        if k.len() > u16::MAX as usize || m.len() > u32::MAX as usize {
            return Err(Error::Usage("keyword or metadata too long".into()));
        }
        if !seen.insert(k.as_slice()) {
            return Err(Error::Usage(format!("duplicate keyword {k:?}")));
        }
    }
    Ok(())
}

/// One placement attempt with the given seed.
pub fn try_build_cuckoo(entries: &[(Vec<u8>, Vec<u8>)], cfg: &CuckooConfig, seed: u64) -> Result<Option<CuckooTable>> {
    check_entries(entries, cfg)?;
    let s = table_size(entries.len(), cfg.expansion);
    let sizes = [s, s];
    let cap = cfg.variant.capacity();
    let mut tables: [Vec<Vec<u32>>; 2] = [vec![Vec::new(); s], vec![Vec::new(); s]];
    let pos = |t: usize, i: u32| position(seed, t, &entries[i as usize].0, s);
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, 0xc0c0, 0));
    for i in 0..entries.len() as u32 {
        let (p0, p1) = (pos(0, i), pos(1, i));
        let placed = match cfg.variant {
            CuckooVariant::OneHashSplit => {
                let (l0, l1) = (tables[0][p0].len(), tables[1][p1].len());
                if l0 <= l1 && l0 < cap {
                    tables[0][p0].push(i);
                    true
                } else if l1 < cap {
                    tables[1][p1].push(i);
                    true
                } else {
                    false
                }
            }
            CuckooVariant::TwoTable => {
                if tables[0][p0].is_empty() {
                    tables[0][p0].push(i);
                    true
                } else if tables[1][p1].is_empty() {
                    tables[1][p1].push(i);
                    true
                } else {
                    let mut cur = i;
                    let mut t = rng.random_range(0..2usize);
                    let mut ok = false;
                    for _ in 0..cfg.max_kicks {
                        let p = pos(t, cur);
                        cur = std::mem::replace(&mut tables[t][p][0], cur);
                        t = 1 - t;
                        let q = pos(t, cur);
                        if tables[t][q].is_empty() {
                            tables[t][q].push(cur);
                            ok = true;
                            break;
                        }
                    }
                    ok
                }
            }
        };
        if !placed {
            return Ok(None);
        }
    }
    let max_entry = entries.iter().map(|(k, m)| entry_len(k, m)).max().unwrap_or(0);
    Ok(Some(CuckooTable {
        variant: cfg.variant,
        seed,
        sizes,
        tables,
        entries: entries.to_vec(),
        bucket_bytes: 1 + cap * max_entry,
    }))
}

/// Builds with `seed`, retrying with seed+1, seed+2, … up to `MAX_RETRIES` times.
pub fn build_cuckoo(entries: &[(Vec<u8>, Vec<u8>)], cfg: &CuckooConfig, seed: u64) -> Result<CuckooTable> {
    for a in 0..=MAX_RETRIES {
        if let Some(t) = try_build_cuckoo(entries, cfg, seed.wrapping_add(a))? {
            return Ok(t);
        }
    }
    let s = table_size(entries.len(), cfg.expansion);
    let stats = CuckooStats { entries: entries.len(), sizes: [s, s], attempts: MAX_RETRIES + 1, first_seed: seed };
    Err(Error::InvalidParams(stats.to_string()))
}

impl CuckooTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sizes(&self) -> [usize; 2] {
        self.sizes
    }

    pub fn capacity(&self) -> usize {
        self.variant.capacity()
    }

    /// Fixed encoded size of every bucket.
    pub fn bucket_bytes(&self) -> usize {
        self.bucket_bytes
    }

    pub fn position(&self, table: usize, keyword: &[u8]) -> usize {
        position(self.seed, table, keyword, self.sizes[table])
    }

    /// Keywords stored in bucket `pos` of `table`.
    pub fn bucket(&self, table: usize, pos: usize) -> Vec<&[u8]> {
        self.tables[table][pos].iter().map(|&i| self.entries[i as usize].0.as_slice()).collect()
    }

    /// (table, bucket) holding the keyword, found by hashing.
    pub fn locate(&self, keyword: &[u8]) -> Option<(usize, usize)> {
        (0..2).map(|t| (t, self.position(t, keyword))).find(|&(t, p)| {
            self.tables[t]
                .get(p)
                .is_some_and(|b| b.iter().any(|&i| self.entries[i as usize].0 == keyword))
        })
    }

    pub fn get(&self, keyword: &[u8]) -> Option<&[u8]> {
        let (t, p) = self.locate(keyword)?;
        self.tables[t][p]
            .iter()
            .map(|&i| &self.entries[i as usize])
            .find(|(k, _)| k == keyword)
            .map(|(_, m)| m.as_slice())
    }

    fn encode_bucket(&self, b: &[u32]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bucket_bytes);
        out.push(b.len() as u8);
        for &i in b {
            let (k, m) = &self.entries[i as usize];
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k);
            out.extend_from_slice(&(m.len() as u32).to_le_bytes());
            out.extend_from_slice(m);
        }
        out.resize(self.bucket_bytes, 0);
        out
    }

    /// Encoded buckets of one table, each `bucket_bytes` long.
    pub fn bucket_entries(&self, table: usize) -> Vec<Vec<u8>> {
        self.tables[table].iter().map(|b| self.encode_bucket(b)).collect()
    }

    pub fn parse_bucket(bytes: &[u8]) -> Result<Vec<(Vec<u8>, Vec<u8>)>> {
        if bytes.is_empty() {
            return Ok(Vec::new());
        }
        let mut r = Reader::new(bytes);
        let count = r.u8()?;
        (0..count)
            .map(|_| {
                let kl = r.u16()? as usize;
                let k = r.take(kl)?.to_vec();
                let ml = r.u32()? as usize;
                Ok((k, r.take(ml)?.to_vec()))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.push(VERSION);
        out.push(match self.variant {
            CuckooVariant::TwoTable => 0,
            CuckooVariant::OneHashSplit => 1,
        });
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.sizes[0] as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (k, m) in &self.entries {
            out.extend_from_slice(&(k.len() as u16).to_le_bytes());
            out.extend_from_slice(k);
            out.extend_from_slice(&(m.len() as u32).to_le_bytes());
            out.extend_from_slice(m);
        }
        for t in &self.tables {
            for b in t {
                out.push(b.len() as u8);
                for &i in b {
                    out.extend_from_slice(&i.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses and checks that every entry sits at one of its hash positions.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC || r.u8()? != VERSION {
            return Err(Error::Malformed("not a cuckoo table"));
        }
        let variant = match r.u8()? {
            0 => CuckooVariant::TwoTable,
            1 => CuckooVariant::OneHashSplit,
            _ => return Err(Error::Malformed("unknown cuckoo variant")),
        };
        let seed = r.u64()?;
        let s = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let kl = r.u16()? as usize;
            let k = r.take(kl)?.to_vec();
            let ml = r.u32()? as usize;
            entries.push((k, r.take(ml)?.to_vec()));
        }
        let mut tables: [Vec<Vec<u32>>; 2] = [Vec::new(), Vec::new()];
        let mut placed = vec![false; count];
        for (t, table) in tables.iter_mut().enumerate() {
            for p in 0..s {
                let c = r.u8()? as usize;
                if c > variant.capacity() {
                    return Err(Error::Malformed("overfull cuckoo bucket"));
                }
                let mut b = Vec::with_capacity(c);
                for _ in 0..c {
                    let i = r.u32()? as usize;
                    if i >= count || placed[i] || position(seed, t, &entries[i].0, s) != p {
                        return Err(Error::Malformed("misplaced cuckoo entry"));
                    }
                    placed[i] = true;
                    b.push(i as u32);
                }
                table.push(b);
            }
        }
        if !r.done() || placed.iter().any(|&p| !p) {
            return Err(Error::Malformed("inconsistent cuckoo table"));
        }
        let cap = variant.capacity();
        let max_entry = entries.iter().map(|(k, m)| entry_len(k, m)).max().unwrap_or(0);
        Ok(CuckooTable { variant, seed, sizes: [s, s], tables, entries, bucket_bytes: 1 + cap * max_entry })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
