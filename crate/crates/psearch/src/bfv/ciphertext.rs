use std::sync::Arc;

use super::noise;
use super::params::{Encoding, SheParams};
use crate::error::{Error, Result};
use crate::ring::{Form, Reader, RingPoly, RnsBasis};

/// A vector in Z_t^n together with its polynomial form (coefficients mod t).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plaintext {
    pub(crate) coeffs: Vec<u64>,
    pub(crate) t: u64,
}

impl Plaintext {
    /// Encodes `values` (each < t, zero padded to n) under the params' encoding.
    pub fn encode(params: &SheParams, values: &[u64]) -> Result<Self> {
        let n = params.n();
        let t = params.t();
        if values.len() > n {
            return Err(Error::Dimension { expected: n, got: values.len() });
        }
        if values.iter().any(|&v| v >= t) {
            return Err(Error::Usage(format!("plaintext entries must be < {t}")));
        }
        let coeffs = match params.encoding() {
            Encoding::Coeff => {
                let mut c = values.to_vec();
                c.resize(n, 0);
                c
            }
            Encoding::Batch => {
                let tab = params.t_table().expect("batch params carry a plaintext NTT");
                let map = params.slot_to_ntt();
                let mut v = vec![0u64; n];
                for (s, &x) in values.iter().enumerate() {
                    v[map[s]] = x;
                }
                tab.inverse(&mut v);
                v
            }
        };
        Ok(Plaintext { coeffs, t })
    }

    /// Signed values mapped into Z_t first.
    pub fn encode_signed(params: &SheParams, values: &[i64]) -> Result<Self> {
        let tm = params.t_modulus();
        let v: Vec<u64> = values.iter().map(|&x| tm.from_i64(x)).collect();
        Self::encode(params, &v)
    }

    pub fn decode(&self, params: &SheParams) -> Vec<u64> {
        match params.encoding() {
            Encoding::Coeff => self.coeffs.clone(),
            Encoding::Batch => {
                let tab = params.t_table().expect("batch params carry a plaintext NTT");
                let mut v = self.coeffs.clone();
                tab.forward(&mut v);
                params.slot_to_ntt().iter().map(|&j| v[j]).collect()
            }
        }
    }

    pub fn from_coeffs(params: &SheParams, coeffs: Vec<u64>) -> Result<Self> {
        if coeffs.len() != params.n() {
            return Err(Error::Dimension { expected: params.n(), got: coeffs.len() });
        }
        let t = params.t();
        if coeffs.iter().any(|&c| c >= t) {
            return Err(Error::Usage("coefficient not reduced mod t".into()));
        }
        Ok(Plaintext { coeffs, t })
    }

    pub fn zero(params: &SheParams) -> Self {
        Plaintext { coeffs: vec![0; params.n()], t: params.t() }
    }

    pub fn coeffs(&self) -> &[u64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Lifts to Q at `level` in evaluation form for pt-ct multiplication.
    pub fn prepare(&self, params: &SheParams, level: usize) -> PreparedPlaintext {
        let tm = params.t_modulus();
        let signed: Vec<i64> = self.coeffs.iter().map(|&c| tm.center(c)).collect();
        let mut poly = RingPoly::from_signed(params.basis(level), &signed);
        poly.to_eval();
        PreparedPlaintext { poly, level, zero: self.is_zero() }
    }

    /// Poly over the single limb t, for persistence (batching params only).
    pub fn to_ring_poly(&self, basis: &Arc<RnsBasis>) -> Result<RingPoly> {
        RingPoly::from_limbs(basis, self.coeffs.clone(), Form::Coeff)
    }

    pub fn from_ring_poly(p: &RingPoly) -> Result<Self> {
        if p.num_limbs() != 1 || p.form() != Form::Coeff {
            return Err(Error::Malformed("plaintext poly must be one coefficient limb"));
        }
        Ok(Plaintext { coeffs: p.limb(0).to_vec(), t: p.basis().modulus(0).value() })
    }
}

/// A plaintext lifted to the ciphertext modulus.
#[derive(Clone, Debug)]
pub struct PreparedPlaintext {
    pub(crate) poly: RingPoly,
    pub(crate) level: usize,
    pub(crate) zero: bool,
}

impl PreparedPlaintext {
    pub fn level(&self) -> usize {
        self.level
    }
}

/// BFV ciphertext (c0, c1) in evaluation form with a static noise estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Ciphertext {
    pub(crate) c0: RingPoly,
    pub(crate) c1: RingPoly,
    pub(crate) level: usize,
    pub(crate) noise_bits: f64,
    pub(crate) t: u64,
}

const TAG_FULL: u8 = 0;
const TAG_COMPRESSED: u8 = 1;

impl Ciphertext {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn noise_bits(&self) -> f64 {
        self.noise_bits
    }

    /// Estimated remaining budget in bits; decryption is trusted while positive.
    pub fn budget_estimate(&self, params: &SheParams) -> f64 {
        params.log2_q(self.level) - (2.0 * self.t as f64).log2() - self.noise_bits
    }

    /// Transparent encryption of zero (both components zero).
    pub fn zero(params: &SheParams, level: usize) -> Self {
        let b = params.basis(level);
        Ciphertext {
            c0: RingPoly::zero(b, Form::Eval),
            c1: RingPoly::zero(b, Form::Eval),
            level,
            noise_bits: f64::NEG_INFINITY,
            t: params.t(),
        }
    }

    pub fn serialized_len(&self) -> usize {
        1 + 1 + 8 + 8 + self.c0.serialized_len() + self.c1.serialized_len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.push(TAG_FULL);
        out.push(self.level as u8);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.noise_bits.to_le_bytes());
        self.c0.write_bytes(&mut out);
        self.c1.write_bytes(&mut out);
        out
    }

    pub fn from_bytes(params: &SheParams, bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.u8()? != TAG_FULL {
            return Err(Error::Malformed("ciphertext tag"));
        }
        let level = r.u8()? as usize;
        if level == 0 || level > params.max_level() {
            return Err(Error::Malformed("level"));
        }
        let t = r.u64()?;
        if t != params.t() {
            return Err(Error::Malformed("plaintext modulus"));
        }
        let noise_bits = r.f64()?;
        let basis = params.basis(level);
        let (c0, u) = RingPoly::from_bytes_with(basis, r.rest())?;
        r.take(u)?;
        let (c1, u) = RingPoly::from_bytes_with(basis, r.rest())?;
        r.take(u)?;
        if !r.done() || c0.form() != Form::Eval || c1.form() != Form::Eval {
            return Err(Error::Malformed("ciphertext body"));
        }
        Ok(Ciphertext { c0, c1, level, noise_bits, t })
    }
}

/// Single-limb ciphertext with low-order bits removed from each component.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedCiphertext {
    pub(crate) n: usize,
    pub(crate) q: u64,
    pub(crate) t: u64,
    pub(crate) l0: u32,
    pub(crate) l1: u32,
    pub(crate) c0: Vec<u64>,
    pub(crate) c1: Vec<u64>,
    pub(crate) noise_bits: f64,
}

fn q_bits(q: u64) -> u32 {
    64 - q.leading_zeros()
}

impl CompressedCiphertext {
    pub fn drop_bits(&self) -> (u32, u32) {
        (self.l0, self.l1)
    }

    pub fn noise_bits(&self) -> f64 {
        self.noise_bits
    }

    /// Bytes of `to_bytes`, computable from the parameters alone.
    pub fn size_for(n: usize, q: u64, l0: u32, l1: u32) -> usize {
        let bits = q_bits(q);
        Self::HEADER + (n * (bits - l0) as usize).div_ceil(8) + (n * (bits - l1) as usize).div_ceil(8)
    }

    pub const HEADER: usize = 1 + 8 + 1 + 1 + 8 + 4 + 8;

    pub fn serialized_len(&self) -> usize {
        Self::size_for(self.n, self.q, self.l0, self.l1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let bits = q_bits(self.q);
        let mut out = Vec::with_capacity(self.serialized_len());
        out.push(TAG_COMPRESSED);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.push(self.l0 as u8);
        out.push(self.l1 as u8);
        out.extend_from_slice(&self.q.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&self.noise_bits.to_le_bytes());
        pack_bits(&self.c0, bits - self.l0, &mut out);
        pack_bits(&self.c1, bits - self.l1, &mut out);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.u8()? != TAG_COMPRESSED {
            return Err(Error::Malformed("compressed ciphertext tag"));
        }
        let t = r.u64()?;
        let l0 = r.u8()? as u32;
        let l1 = r.u8()? as u32;
        let q = r.u64()?;
        let n = r.u32()? as usize;
        let noise_bits = r.f64()?;
        let bits = q_bits(q);
        if l0 >= bits || l1 >= bits || n == 0 || n > 1 << 17 {
            return Err(Error::Malformed("compressed header"));
        }
        let w0 = bits - l0;
        let b0 = (n * w0 as usize).div_ceil(8);
        let c0 = unpack_bits(r.take(b0)?, w0, n);
        let w1 = bits - l1;
        let b1 = (n * w1 as usize).div_ceil(8);
        let c1 = unpack_bits(r.take(b1)?, w1, n);
        if !r.done() {
            return Err(Error::Malformed("trailing bytes"));
        }
        Ok(CompressedCiphertext { n, q, t, l0, l1, c0, c1, noise_bits })
    }

    /// Restores a level-1 ciphertext (low bits zero).
    pub fn decompress(&self, params: &SheParams) -> Result<Ciphertext> {
        let basis = params.basis(1);
        if basis.modulus(0).value() != self.q || params.n() != self.n || params.t() != self.t {
            return Err(Error::LimbMismatch);
        }
        let q = *basis.modulus(0);
        let expand = |v: &[u64], l: u32| -> Result<RingPoly> {
            let data = v.iter().map(|&x| q.reduce(x << l)).collect();
            let mut p = RingPoly::from_limbs(basis, data, Form::Coeff)?;
            p.to_eval();
            Ok(p)
        };
        Ok(Ciphertext {
            c0: expand(&self.c0, self.l0)?,
            c1: expand(&self.c1, self.l1)?,
            level: 1,
            noise_bits: self.noise_bits,
            t: self.t,
        })
    }
}

/// Checks z·sqrt(2n/9)·2^l1 + 2^l0 < q/t for the single remaining limb.
pub fn check_drop_bound(params: &SheParams, l0: u32, l1: u32) -> Result<()> {
    let q = params.basis(1).modulus(0).value();
    let bits = q_bits(q);
    if l0 >= bits || l1 >= bits {
        return Err(Error::DropBound(l0, l1));
    }
    let n = params.n() as f64;
    let lhs = noise::Z * (2.0 * n / 9.0).sqrt() * 2f64.powi(l1 as i32) + 2f64.powi(l0 as i32);
    if lhs >= q as f64 / params.t() as f64 {
        return Err(Error::DropBound(l0, l1));
    }
    // rounded values must fit the packed width
    if l0 > 0 && q + (1u64 << (l0 - 1)) > 1u64 << bits {
        return Err(Error::DropBound(l0, l1));
    }
    if l1 > 0 && q + (1u64 << (l1 - 1)) > 1u64 << bits {
        return Err(Error::DropBound(l0, l1));
    }
    Ok(())
}

/// Rounds away `l0` low bits of c0 and `l1` of c1 from a level-1 ciphertext.
pub fn drop_lsbs(params: &SheParams, ct: &Ciphertext, l0: u32, l1: u32) -> Result<CompressedCiphertext> {
    if ct.level != 1 {
        return Err(Error::Usage("drop_lsbs needs a single-limb ciphertext".into()));
    }
    check_drop_bound(params, l0, l1)?;
    let q = params.basis(1).modulus(0).value();
    let shrink = |p: &RingPoly, l: u32| -> Vec<u64> {
        let mut c = p.clone();
        c.to_coeff();
        if l == 0 {
            return c.limb(0).to_vec();
        }
        let half = 1u64 << (l - 1);
        c.limb(0).iter().map(|&x| (x + half) >> l).collect()
    };
    Ok(CompressedCiphertext {
        n: params.n(),
        q,
        t: ct.t,
        l0,
        l1,
        c0: shrink(&ct.c0, l0),
        c1: shrink(&ct.c1, l1),
        noise_bits: noise::log2_add(ct.noise_bits, noise::drop_bits(params, l0, l1)),
    })
}

fn pack_bits(vals: &[u64], width: u32, out: &mut Vec<u8>) {
    let mut acc: u128 = 0;
    let mut have = 0u32;
    for &v in vals {
        debug_assert!(width == 64 || v < 1u64 << width);
        acc |= (v as u128) << have;
        have += width;
        while have >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            have -= 8;
        }
    }
    if have > 0 {
        out.push(acc as u8);
    }
}

fn unpack_bits(bytes: &[u8], width: u32, count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut acc: u128 = 0;
    let mut have = 0u32;
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    let mut it = bytes.iter();
    while out.len() < count {
        while have < width {
            acc |= (*it.next().unwrap_or(&0) as u128) << have;
            have += 8;
        }
        out.push(acc as u64 & mask);
        acc >>= width;
        have -= width;
    }
    out
}
