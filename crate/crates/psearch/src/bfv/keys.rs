use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::params::SheParams;
use crate::error::{Error, Result};
use crate::ring::{Form, Reader, RingPoly, RnsBasis};

/// Centered binomial width; standard deviation sqrt(21/2) ≈ 3.24.
pub const CBD_K: u32 = 21;

pub(crate) fn sample_cbd(rng: &mut impl RngCore, n: usize) -> Vec<i64> {
    let mask = (1u64 << CBD_K) - 1;
    (0..n)
        .map(|_| {
            let x = rng.next_u64();
            (x & mask).count_ones() as i64 - ((x >> CBD_K) & mask).count_ones() as i64
        })
        .collect()
}

pub(crate) fn sample_ternary(rng: &mut impl RngCore, n: usize) -> Vec<i64> {
    (0..n).map(|_| rng.random_range(-1i64..=1)).collect()
}

pub(crate) fn sample_uniform(rng: &mut impl RngCore, basis: &Arc<RnsBasis>, form: Form) -> RingPoly {
    let mut p = RingPoly::zero(basis, form);
    for i in 0..basis.len() {
        let q = basis.modulus(i).value();
        for x in p.limb_mut(i) {
            *x = rng.random_range(0..q);
        }
    }
    p
}

/// Copies the listed limbs of `p` into a poly over `basis`.
pub(crate) fn select_limbs(p: &RingPoly, basis: &Arc<RnsBasis>, limbs: &[usize]) -> RingPoly {
    let n = p.degree();
    let mut data = Vec::with_capacity(n * limbs.len());
    for &i in limbs {
        data.extend_from_slice(p.limb(i));
    }
    RingPoly::from_limbs(basis, data, p.form()).expect("limbs already reduced")
}

/// Ternary secret.
#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    // evaluation form over Q ∪ {P}
    pub(crate) s_ext: RingPoly,
}

impl SecretKey {
    pub fn generate(params: &SheParams, rng: &mut impl RngCore) -> Self {
        Self::from_coeffs(params, sample_ternary(rng, params.n()))
    }

    pub fn from_coeffs(params: &SheParams, coeffs: Vec<i64>) -> Self {
        let mut s_ext = RingPoly::from_signed(params.key_basis(), &coeffs);
        s_ext.to_eval();
        SecretKey { coeffs, s_ext }
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    /// s restricted to the first `level` ciphertext limbs, evaluation form.
    pub(crate) fn at_level(&self, params: &SheParams, level: usize) -> RingPoly {
        let limbs: Vec<usize> = (0..level).collect();
        select_limbs(&self.s_ext, params.basis(level), &limbs)
    }

    /// s(X^k), evaluation form over Q ∪ {P}.
    pub(crate) fn automorphism(&self, k: usize) -> Result<RingPoly> {
        self.s_ext.automorphism(k)
    }
}

/// Hybrid key-switching key: one (b_j, a_j) pair per ciphertext limb,
/// over Q ∪ {P} in evaluation form, with b_j = −a_j·s + e_j + P·g_j·s'.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeySwitchKey {
    pub(crate) b: Vec<RingPoly>,
    pub(crate) a: Vec<RingPoly>,
}

impl KeySwitchKey {
    /// Key switching from `target` (evaluation form over Q ∪ {P}) to `sk`.
    pub fn generate(params: &SheParams, sk: &SecretKey, target: &RingPoly, rng: &mut impl RngCore) -> Self {
        let basis = params.key_basis();
        let l = params.max_level();
        let p_val = params.p_modulus().value();
        let mut b = Vec::with_capacity(l);
        let mut a = Vec::with_capacity(l);
        for j in 0..l {
            let aj = sample_uniform(rng, basis, Form::Eval);
            let mut bj = RingPoly::from_signed(basis, &sample_cbd(rng, params.n()));
            bj.to_eval();
            bj.sub_assign(&aj.mul(&sk.s_ext));
            let q = *basis.modulus(j);
            let pm = p_val % q.value();
            let tgt = target.limb(j).to_vec();
            for (x, &s) in bj.limb_mut(j).iter_mut().zip(&tgt) {
                *x = q.add(*x, q.mul(pm, s));
            }
            b.push(bj);
            a.push(aj);
        }
        KeySwitchKey { b, a }
    }

    pub fn serialized_len(&self) -> usize {
        4 + self
            .b
            .iter()
            .chain(&self.a)
            .map(|p| p.serialized_len())
            .sum::<usize>()
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.b.len() as u32).to_le_bytes());
        for (b, a) in self.b.iter().zip(&self.a) {
            b.write_bytes(out);
            a.write_bytes(out);
        }
    }

    fn read(basis: &Arc<RnsBasis>, r: &mut Reader) -> Result<Self> {
        let d = r.u32()? as usize;
        if d > 64 {
            return Err(Error::Malformed("digit count"));
        }
        let mut b = Vec::new();
        let mut a = Vec::new();
        for _ in 0..d {
            let (x, used) = RingPoly::from_bytes_with(basis, r.rest())?;
            r.take(used)?;
            let (y, used) = RingPoly::from_bytes_with(basis, r.rest())?;
            r.take(used)?;
            b.push(x);
            a.push(y);
        }
        Ok(KeySwitchKey { b, a })
    }
}

/// Key material sent with a query: Galois keys and an optional relinearization key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationKey {
    pub id: u64,
    pub(crate) galois: BTreeMap<usize, KeySwitchKey>,
    pub(crate) relin: Option<KeySwitchKey>,
}

impl EvaluationKey {
    pub fn empty(id: u64) -> Self {
        EvaluationKey {
            id,
            galois: BTreeMap::new(),
            relin: None,
        }
    }

    pub fn generate(
        params: &SheParams,
        sk: &SecretKey,
        galois_elements: &[usize],
        relin: bool,
        id: u64,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        let two_n = 2 * params.n();
        let mut ek = Self::empty(id);
        for &g in galois_elements {
            if g % 2 == 0 || g >= two_n {
                return Err(Error::InvalidGaloisElement(g));
            }
            if g == 1 || ek.galois.contains_key(&g) {
                continue;
            }
            let target = sk.automorphism(g)?;
            ek.galois.insert(g, KeySwitchKey::generate(params, sk, &target, rng));
        }
        if relin {
            let s2 = sk.s_ext.mul(&sk.s_ext);
            ek.relin = Some(KeySwitchKey::generate(params, sk, &s2, rng));
        }
        Ok(ek)
    }

    pub fn galois_elements(&self) -> Vec<usize> {
        self.galois.keys().copied().collect()
    }

    pub fn has_galois(&self, g: usize) -> bool {
        g == 1 || self.galois.contains_key(&g)
    }

    pub fn has_relin(&self) -> bool {
        self.relin.is_some()
    }

    pub fn serialized_len(&self) -> usize {
        8 + 4
            + self.galois.values().map(|k| 8 + k.serialized_len()).sum::<usize>()
            + 1
            + self.relin.as_ref().map_or(0, |k| k.serialized_len())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&self.id.to_le_bytes());
        out.extend_from_slice(&(self.galois.len() as u32).to_le_bytes());
        for (g, k) in &self.galois {
            out.extend_from_slice(&(*g as u64).to_le_bytes());
            k.write(&mut out);
        }
        match &self.relin {
            Some(k) => {
                out.push(1);
                k.write(&mut out);
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(params: &SheParams, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let id = r.u64()?;
        let count = r.u32()? as usize;
        let basis = params.key_basis();
        let mut ek = Self::empty(id);
        for _ in 0..count {
            let g = r.u64()? as usize;
            ek.galois.insert(g, KeySwitchKey::read(basis, &mut r)?);
        }
        if r.u8()? == 1 {
            ek.relin = Some(KeySwitchKey::read(basis, &mut r)?);
        }
        if !r.done() {
            return Err(Error::Malformed("trailing bytes"));
        }
        Ok(ek)
    }
}

/// Secret key and evaluation key from one seed; deterministic.
pub fn keygen(
    params: &SheParams,
    galois_elements: &[usize],
    relin: bool,
    seed: u64,
) -> Result<(SecretKey, EvaluationKey)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let sk = SecretKey::generate(params, &mut rng);
    let ek = EvaluationKey::generate(params, &sk, galois_elements, relin, seed, &mut rng)?;
    Ok((sk, ek))
}
