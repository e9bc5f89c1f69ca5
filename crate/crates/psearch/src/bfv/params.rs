use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::{bit_reverse, BaseConverter, Modulus, NttTable, RnsBasis};

/// Ciphertext limbs used by default: 27, 28 and 28 bits, ≡ 1 mod 8192.
pub const DEFAULT_Q: [u64; 3] = [134176769, 268369921, 268361729];
/// Auxiliary key-switching limb (30 bits).
pub const DEFAULT_P: u64 = 1073692673;
/// Extension limbs for the ciphertext tensor product.
pub const DEFAULT_MULT: [u64; 2] = [2305843009213554689, 2305843009213489153];
/// Search plaintext modulus (16 bits) and its plaintext-CRT partner (17 bits).
pub const SEARCH_T: u64 = 40961;
pub const SEARCH_T_ALT: u64 = 65537;
/// Small plaintext modulus for PIR (5 bits).
pub const PIR_T: u64 = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// SIMD slots via the plaintext NTT; requires t ≡ 1 mod 2n.
    Batch,
    /// Plaintext vector is the coefficient vector.
    Coeff,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub n: usize,
    pub q: Vec<u64>,
    pub p: u64,
    pub t: u64,
    pub encoding: Encoding,
    pub mult: Vec<u64>,
}

impl ParamSpec {
    pub fn search() -> Self {
        Self::with_t(4096, SEARCH_T, Encoding::Batch)
    }

    pub fn pir() -> Self {
        Self::with_t(4096, PIR_T, Encoding::Coeff)
    }

    pub fn with_t(n: usize, t: u64, encoding: Encoding) -> Self {
        ParamSpec {
            n,
            q: DEFAULT_Q.to_vec(),
            p: DEFAULT_P,
            t,
            encoding,
            mult: DEFAULT_MULT.to_vec(),
        }
    }
}

pub(crate) struct LevelData {
    pub basis: Arc<RnsBasis>,
    pub ext: Arc<RnsBasis>,
    pub q_to_b: BaseConverter,
    pub b_to_q: BaseConverter,
    // (Q-1)/2 per Q limb and per B limb
    pub half_q: Vec<u64>,
    pub half_b: Vec<u64>,
    pub q_inv_b: Vec<u64>,
    pub t_inv_q: Vec<u64>,
    pub q_mod_t: u64,
    pub p_inv_q: Vec<u64>,
    // (Q/q_i)^-1 mod q_i
    pub qhat_inv: Vec<u64>,
    // q_last^-1 mod q_i for i < last
    pub last_inv: Vec<u64>,
    pub log2_q: f64,
}

/// Validated SHE parameter set with precomputed tables.
pub struct SheParams {
    spec: ParamSpec,
    t: Modulus,
    t_table: Option<NttTable>,
    slot_to_ntt: Vec<usize>,
    p: Modulus,
    top_ext: Arc<RnsBasis>,
    mult: Arc<RnsBasis>,
    levels: Vec<LevelData>,
}

impl std::fmt::Debug for SheParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SheParams").field("spec", &self.spec).finish()
    }
}

impl SheParams {
    pub fn new(spec: ParamSpec) -> Result<Arc<Self>> {
        let n = spec.n;
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::InvalidParams(format!("n = {n} must be a power of two ≥ 4")));
        }
        if spec.q.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let qb = RnsBasis::new(n, &spec.q)?;
        let pb = RnsBasis::new(n, &[spec.p])?;
        let mult = RnsBasis::new(n, &spec.mult)?;
        let p = *pb.modulus(0);
        if spec.q.iter().any(|&q| q > spec.p) {
            return Err(Error::InvalidParams("auxiliary limb must exceed every ciphertext limb".into()));
        }
        let t = Modulus::new(spec.t)?;
        let all: Vec<u64> = spec.q.iter().chain([&spec.p]).chain(&spec.mult).copied().collect();
        if all.contains(&spec.t) {
            return Err(Error::InvalidParams("t must differ from every limb".into()));
        }
        for (i, a) in all.iter().enumerate() {
            if all[..i].contains(a) {
                return Err(Error::InvalidParams("limbs must be distinct".into()));
            }
        }
        let log2_q = qb.log2_product();
        if log2_q - (2.0 * spec.t as f64).log2() <= 0.0 {
            return Err(Error::InvalidParams("log2(Q) - log2(2t) must be positive".into()));
        }
        let (t_table, slot_to_ntt) = match spec.encoding {
            Encoding::Batch => {
                if (spec.t - 1) % (2 * n as u64) != 0 {
                    return Err(Error::InvalidParams(format!(
                        "batching needs t ≡ 1 mod 2n (t = {}, n = {n})",
                        spec.t
                    )));
                }
                let tab = NttTable::new(t, n)?;
                (Some(tab), slot_map(n))
            }
            Encoding::Coeff => (None, Vec::new()),
        };
        let mult_bits = mult.log2_product();
        if mult_bits < log2_q + (n as f64).log2() + (spec.t as f64).log2() + 8.0 {
            return Err(Error::InvalidParams("extension basis too small for tensoring".into()));
        }
        let top_ext = qb.concat(&pb)?;
        let mut levels = Vec::new();
        for l in 1..=spec.q.len() {
            let basis = qb.prefix(l)?;
            let ext = basis.concat(&pb)?;
            levels.push(LevelData::new(&basis, ext, &mult, &t, &p)?);
        }
        Ok(Arc::new(SheParams {
            spec,
            t,
            t_table,
            slot_to_ntt,
            p,
            top_ext,
            mult,
            levels,
        }))
    }

    pub fn search() -> Arc<Self> {
        Self::new(ParamSpec::search()).expect("default parameters are valid")
    }

    pub fn pir() -> Arc<Self> {
        Self::new(ParamSpec::pir()).expect("default parameters are valid")
    }

    pub fn spec(&self) -> &ParamSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn t(&self) -> u64 {
        self.spec.t
    }

    pub fn t_modulus(&self) -> &Modulus {
        &self.t
    }

    pub fn encoding(&self) -> Encoding {
        self.spec.encoding
    }

    pub fn max_level(&self) -> usize {
        self.spec.q.len()
    }

    pub fn basis(&self, level: usize) -> &Arc<RnsBasis> {
        &self.levels[level - 1].basis
    }

    pub fn top_basis(&self) -> &Arc<RnsBasis> {
        self.basis(self.max_level())
    }

    /// Q ∪ {P} at the top level; key material lives here.
    pub fn key_basis(&self) -> &Arc<RnsBasis> {
        &self.top_ext
    }

    pub fn p_modulus(&self) -> &Modulus {
        &self.p
    }

    pub fn mult_basis(&self) -> &Arc<RnsBasis> {
        &self.mult
    }

    pub(crate) fn level(&self, level: usize) -> &LevelData {
        &self.levels[level - 1]
    }

    pub fn log2_q(&self, level: usize) -> f64 {
        self.levels[level - 1].log2_q
    }

    pub(crate) fn t_table(&self) -> Option<&NttTable> {
        self.t_table.as_ref()
    }

    pub(crate) fn slot_to_ntt(&self) -> &[usize] {
        &self.slot_to_ntt
    }

    /// Number of SIMD slots per row (n/2).
    pub fn row_size(&self) -> usize {
        self.spec.n / 2
    }

    /// Galois element rotating both rows left by `step`.
    pub fn rotation_element(&self, step: i64) -> usize {
        let two_n = 2 * self.spec.n as u64;
        let half = self.spec.n as i64 / 2;
        let s = step.rem_euclid(half) as u64;
        let mut r = 1u64;
        let mut b = 3u64;
        let mut e = s;
        while e > 0 {
            if e & 1 == 1 {
                r = r * b % two_n;
            }
            b = b * b % two_n;
            e >>= 1;
        }
        r as usize
    }

    /// Galois element swapping the two rows.
    pub fn conjugation_element(&self) -> usize {
        2 * self.spec.n - 1
    }
}

impl LevelData {
    fn new(
        basis: &Arc<RnsBasis>,
        ext: Arc<RnsBasis>,
        mult: &Arc<RnsBasis>,
        t: &Modulus,
        p: &Modulus,
    ) -> Result<Self> {
        use num_bigint::BigUint;
        let small = |b: BigUint| b.iter_u64_digits().next().unwrap_or(0);
        let q = basis.product();
        let half = (&q - 1u8) / 2u8;
        let l = basis.len();
        let half_q = (0..l).map(|i| small(&half % basis.modulus(i).value())).collect();
        let half_b = (0..mult.len()).map(|j| small(&half % mult.modulus(j).value())).collect();
        let q_inv_b = (0..mult.len())
            .map(|j| {
                let m = mult.modulus(j);
                m.inv(small(&q % m.value())).expect("coprime")
            })
            .collect();
        let t_inv_q = (0..l)
            .map(|i| basis.modulus(i).inv(t.value()).expect("t coprime to Q"))
            .collect();
        let p_inv_q = (0..l)
            .map(|i| basis.modulus(i).inv(p.value()).expect("P coprime to Q"))
            .collect();
        let qhat_inv = (0..l)
            .map(|i| {
                let m = basis.modulus(i);
                m.inv(small((&q / m.value()) % m.value())).expect("coprime")
            })
            .collect();
        let last = basis.modulus(l - 1).value();
        let last_inv = (0..l - 1)
            .map(|i| basis.modulus(i).inv(last).expect("coprime"))
            .collect();
        Ok(LevelData {
            q_to_b: BaseConverter::new(basis, mult)?,
            b_to_q: BaseConverter::new(mult, basis)?,
            half_q,
            half_b,
            q_inv_b,
            t_inv_q,
            q_mod_t: small(&q % t.value()),
            p_inv_q,
            qhat_inv,
            last_inv,
            log2_q: basis.log2_product(),
            basis: basis.clone(),
            ext,
        })
    }
}

/// slot s (row s / (n/2), column s mod n/2) ↦ index in the plaintext NTT vector.
fn slot_map(n: usize) -> Vec<usize> {
    let two_n = 2 * n;
    let half = n / 2;
    let log_n = n.trailing_zeros();
    let mut out = vec![0; n];
    let mut g = 1usize;
    for col in 0..half {
        for row in 0..2 {
            let e = if row == 0 { g } else { two_n - g };
            out[row * half + col] = bit_reverse((e - 1) / 2, log_n);
        }
        g = g * 3 % two_n;
    }
    out
}
