use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::modulus::Modulus;
use super::ntt::{bit_reverse, NttTable};
use crate::error::{Error, Result};

/// Ordered list of NTT-ready limbs sharing a ring degree.
#[derive(Debug)]
pub struct RnsBasis {
    n: usize,
    tables: Vec<Arc<NttTable>>,
}

impl RnsBasis {
    pub fn new(n: usize, moduli: &[u64]) -> Result<Arc<Self>> {
        let tables = moduli
            .iter()
            .map(|&q| Ok(Arc::new(NttTable::new(Modulus::ntt_friendly(q, n)?, n)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tables(tables)
    }

    pub fn from_tables(tables: Vec<Arc<NttTable>>) -> Result<Arc<Self>> {
        let n = tables.first().map(|t| t.degree()).ok_or(Error::EmptyBasis)?;
        if tables.iter().any(|t| t.degree() != n) {
            return Err(Error::InvalidParams("limbs disagree on ring degree".into()));
        }
        for (i, a) in tables.iter().enumerate() {
            if tables[..i].iter().any(|b| b.modulus() == a.modulus()) {
                return Err(Error::InvalidParams("repeated limb".into()));
            }
        }
        Ok(Arc::new(RnsBasis { n, tables }))
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.tables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn modulus(&self, i: usize) -> &Modulus {
        self.tables[i].modulus()
    }

    pub fn table(&self, i: usize) -> &NttTable {
        &self.tables[i]
    }

    pub fn tables(&self) -> &[Arc<NttTable>] {
        &self.tables
    }

    pub fn moduli(&self) -> Vec<u64> {
        self.tables.iter().map(|t| t.modulus().value()).collect()
    }

    pub fn product(&self) -> BigUint {
        self.tables
            .iter()
            .fold(BigUint::one(), |acc, t| acc * t.modulus().value())
    }

    pub fn log2_product(&self) -> f64 {
        self.tables
            .iter()
            .map(|t| (t.modulus().value() as f64).log2())
            .sum()
    }

    /// The first `k` limbs.
    pub fn prefix(&self, k: usize) -> Result<Arc<Self>> {
        if k == 0 || k > self.len() {
            return Err(Error::EmptyBasis);
        }
        Self::from_tables(self.tables[..k].to_vec())
    }

    pub fn concat(&self, other: &RnsBasis) -> Result<Arc<Self>> {
        let mut t = self.tables.clone();
        t.extend(other.tables.iter().cloned());
        Self::from_tables(t)
    }

    pub fn same_limbs(&self, other: &RnsBasis) -> bool {
        self.n == other.n
            && self.len() == other.len()
            && self
                .tables
                .iter()
                .zip(&other.tables)
                .all(|(a, b)| a.modulus() == b.modulus())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Form {
    Coeff,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolyOp {
    Add,
    Sub,
    Mul,
}

/// Element of Z_Q[X]/(X^n+1), stored limb-major.
#[derive(Clone, Debug)]
pub struct RingPoly {
    basis: Arc<RnsBasis>,
    data: Vec<u64>,
    form: Form,
}

impl PartialEq for RingPoly {
    fn eq(&self, other: &Self) -> bool {
        self.form == other.form && self.basis.same_limbs(&other.basis) && self.data == other.data
    }
}
impl Eq for RingPoly {}

impl RingPoly {
    pub fn zero(basis: &Arc<RnsBasis>, form: Form) -> Self {
        RingPoly {
            data: vec![0; basis.n * basis.len()],
            basis: basis.clone(),
            form,
        }
    }

    /// Coefficient-form poly from signed integer coefficients.
    pub fn from_signed(basis: &Arc<RnsBasis>, coeffs: &[i64]) -> Self {
        let mut p = Self::zero(basis, Form::Coeff);
        let n = basis.n;
        for i in 0..basis.len() {
            let q = *basis.modulus(i);
            for (d, &c) in p.data[i * n..(i + 1) * n].iter_mut().zip(coeffs) {
                *d = q.from_i64(c);
            }
        }
        p
    }

    /// Coefficient-form poly from big-integer coefficients.
    pub fn from_biguint(basis: &Arc<RnsBasis>, coeffs: &[BigUint]) -> Self {
        let mut p = Self::zero(basis, Form::Coeff);
        let n = basis.n;
        for i in 0..basis.len() {
            let q = basis.modulus(i).value();
            for (d, c) in p.data[i * n..(i + 1) * n].iter_mut().zip(coeffs) {
                *d = (c % q).iter_u64_digits().next().unwrap_or(0);
            }
        }
        p
    }

    pub fn from_limbs(basis: &Arc<RnsBasis>, data: Vec<u64>, form: Form) -> Result<Self> {
        if data.len() != basis.n * basis.len() {
            return Err(Error::Malformed("residue count"));
        }
        for i in 0..basis.len() {
            let q = basis.modulus(i).value();
            if data[i * basis.n..(i + 1) * basis.n].iter().any(|&x| x >= q) {
                return Err(Error::Malformed("residue not reduced"));
            }
        }
        Ok(RingPoly {
            basis: basis.clone(),
            data,
            form,
        })
    }

    pub fn basis(&self) -> &Arc<RnsBasis> {
        &self.basis
    }

    pub fn form(&self) -> Form {
        self.form
    }

    pub fn degree(&self) -> usize {
        self.basis.n
    }

    pub fn num_limbs(&self) -> usize {
        self.basis.len()
    }

    pub fn limb(&self, i: usize) -> &[u64] {
        let n = self.basis.n;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn limb_mut(&mut self, i: usize) -> &mut [u64] {
        let n = self.basis.n;
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    pub fn to_eval(&mut self) {
        if self.form == Form::Coeff {
            let n = self.basis.n;
            for (i, chunk) in self.data.chunks_mut(n).enumerate() {
                self.basis.table(i).forward(chunk);
            }
            self.form = Form::Eval;
        }
    }

    pub fn to_coeff(&mut self) {
        if self.form == Form::Eval {
            let n = self.basis.n;
            for (i, chunk) in self.data.chunks_mut(n).enumerate() {
                self.basis.table(i).inverse(chunk);
            }
            self.form = Form::Coeff;
        }
    }

    /// Forward transform; fails on evaluation-form input.
    pub fn ntt_forward(&self) -> Result<Self> {
        if self.form != Form::Coeff {
            return Err(Error::FormMismatch);
        }
        let mut p = self.clone();
        p.to_eval();
        Ok(p)
    }

    pub fn ntt_inverse(&self) -> Result<Self> {
        if self.form != Form::Eval {
            return Err(Error::FormMismatch);
        }
        let mut p = self.clone();
        p.to_coeff();
        Ok(p)
    }

    fn compatible(&self, other: &RingPoly) -> Result<()> {
        if !self.basis.same_limbs(&other.basis) {
            return Err(Error::LimbMismatch);
        }
        if self.form != other.form {
            return Err(Error::FormMismatch);
        }
        Ok(())
    }

    fn zip_assign(&mut self, other: &RingPoly, f: impl Fn(&Modulus, u64, u64) -> u64) {
        self.compatible(other).expect("operand mismatch");
        let n = self.basis.n;
        for (i, (a, b)) in self
            .data
            .chunks_mut(n)
            .zip(other.data.chunks(n))
            .enumerate()
        {
            let q = self.basis.modulus(i);
            for (x, &y) in a.iter_mut().zip(b) {
                *x = f(q, *x, y);
            }
        }
    }

    /// Checked binary operation.
    pub fn poly_op(&self, other: &RingPoly, op: PolyOp) -> Result<RingPoly> {
        self.compatible(other)?;
        if op == PolyOp::Mul && self.form != Form::Eval {
            return Err(Error::FormMismatch);
        }
        let mut r = self.clone();
        match op {
            PolyOp::Add => r.add_assign(other),
            PolyOp::Sub => r.sub_assign(other),
            PolyOp::Mul => r.mul_assign(other),
        }
        Ok(r)
    }

    /// Panics on operand mismatch; use `poly_op` for a checked variant.
    pub fn add_assign(&mut self, other: &RingPoly) {
        self.zip_assign(other, |q, a, b| q.add(a, b));
    }

    pub fn sub_assign(&mut self, other: &RingPoly) {
        self.zip_assign(other, |q, a, b| q.sub(a, b));
    }

    pub fn mul_assign(&mut self, other: &RingPoly) {
        debug_assert_eq!(self.form, Form::Eval);
        self.zip_assign(other, |q, a, b| q.mul(a, b));
    }

    /// self += a ⊙ b (evaluation form).
    pub fn fma_assign(&mut self, a: &RingPoly, b: &RingPoly) {
        a.compatible(b).expect("operand mismatch");
        self.compatible(a).expect("operand mismatch");
        let n = self.basis.n;
        for i in 0..self.basis.len() {
            let q = *self.basis.modulus(i);
            let (x, y) = (a.limb(i), b.limb(i));
            for (j, d) in self.data[i * n..(i + 1) * n].iter_mut().enumerate() {
                *d = q.add(*d, q.mul(x[j], y[j]));
            }
        }
    }

    pub fn add(&self, other: &RingPoly) -> RingPoly {
        let mut r = self.clone();
        r.add_assign(other);
        r
    }

    pub fn sub(&self, other: &RingPoly) -> RingPoly {
        let mut r = self.clone();
        r.sub_assign(other);
        r
    }

    pub fn mul(&self, other: &RingPoly) -> RingPoly {
        let mut r = self.clone();
        r.mul_assign(other);
        r
    }

    pub fn neg_assign(&mut self) {
        let n = self.basis.n;
        for (i, a) in self.data.chunks_mut(n).enumerate() {
            let q = self.basis.modulus(i);
            for x in a.iter_mut() {
                *x = q.neg(*x);
            }
        }
    }

    pub fn neg(&self) -> RingPoly {
        let mut r = self.clone();
        r.neg_assign();
        r
    }

    /// Multiply limb i by `scalars[i]`.
    pub fn mul_scalar_limbwise(&mut self, scalars: &[u64]) {
        let n = self.basis.n;
        for (i, a) in self.data.chunks_mut(n).enumerate() {
            let q = self.basis.modulus(i);
            let w = scalars[i] % q.value();
            let ws = q.shoup(w);
            for x in a.iter_mut() {
                *x = q.mul_shoup(*x, w, ws);
            }
        }
    }

    pub fn mul_scalar(&mut self, s: u64) {
        let sc: Vec<u64> = (0..self.basis.len())
            .map(|i| s % self.basis.modulus(i).value())
            .collect();
        self.mul_scalar_limbwise(&sc);
    }

    /// Multiply by the monomial X^k (coefficient form, k taken mod 2n).
    pub fn mul_monomial(&self, k: usize) -> RingPoly {
        assert_eq!(self.form, Form::Coeff);
        let n = self.basis.n;
        let k = k % (2 * n);
        let mut r = Self::zero(&self.basis, Form::Coeff);
        for i in 0..self.basis.len() {
            let q = *self.basis.modulus(i);
            let src = self.limb(i).to_vec();
            let dst = r.limb_mut(i);
            for (j, &c) in src.iter().enumerate() {
                let e = (j + k) % (2 * n);
                if e < n {
                    dst[e] = c;
                } else {
                    dst[e - n] = q.neg(c);
                }
            }
        }
        r
    }

    /// X ↦ X^k for odd k, in either form.
    pub fn automorphism(&self, k: usize) -> Result<RingPoly> {
        let n = self.basis.n;
        let two_n = 2 * n;
        let k = k % two_n;
        if k % 2 == 0 {
            return Err(Error::InvalidGaloisElement(k));
        }
        let mut r = Self::zero(&self.basis, self.form);
        match self.form {
            Form::Coeff => {
                for i in 0..self.basis.len() {
                    let q = *self.basis.modulus(i);
                    let src = self.limb(i);
                    let dst = &mut r.data[i * n..(i + 1) * n];
                    for (j, &c) in src.iter().enumerate() {
                        let e = j * k % two_n;
                        if e < n {
                            dst[e] = c;
                        } else {
                            dst[e - n] = q.neg(c);
                        }
                    }
                }
            }
            Form::Eval => {
                let perm = eval_automorphism_perm(n, k);
                for i in 0..self.basis.len() {
                    let src = &self.data[i * n..(i + 1) * n];
                    let dst = &mut r.data[i * n..(i + 1) * n];
                    for (d, &p) in dst.iter_mut().zip(&perm) {
                        *d = src[p];
                    }
                }
            }
        }
        Ok(r)
    }

    /// Drop the last limb without rescaling.
    pub fn truncate_limbs(&self, k: usize) -> Result<RingPoly> {
        let basis = self.basis.prefix(k)?;
        Ok(RingPoly {
            data: self.data[..k * self.basis.n].to_vec(),
            basis,
            form: self.form,
        })
    }

    /// Coefficients as unique representatives in [0, Q).
    pub fn crt_reconstruct(&self) -> Result<Vec<BigUint>> {
        if self.form != Form::Coeff {
            return Err(Error::FormMismatch);
        }
        let qprod = self.basis.product();
        let n = self.basis.n;
        let mut weights = Vec::with_capacity(self.basis.len());
        for i in 0..self.basis.len() {
            let q = self.basis.modulus(i);
            let qhat = &qprod / q.value();
            let qhat_mod = (&qhat % q.value()).iter_u64_digits().next().unwrap_or(0);
            let inv = q.inv(qhat_mod).expect("pairwise coprime limbs");
            weights.push((qhat, inv));
        }
        let mut out = vec![BigUint::zero(); n];
        for (i, (qhat, inv)) in weights.iter().enumerate() {
            let q = self.basis.modulus(i);
            for (o, &x) in out.iter_mut().zip(self.limb(i)) {
                let y = q.mul(x, *inv);
                if y != 0 {
                    *o += qhat * y;
                }
            }
        }
        for o in out.iter_mut() {
            if *o >= qprod {
                *o %= &qprod;
            }
        }
        Ok(out)
    }

    pub fn serialized_len(&self) -> usize {
        4 + 1 + 8 * self.basis.len() + 1 + 8 * self.data.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        self.write_bytes(&mut out);
        out
    }

    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.basis.n as u32).to_le_bytes());
        out.push(self.basis.len() as u8);
        for q in self.basis.moduli() {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out.push(match self.form {
            Form::Coeff => 0,
            Form::Eval => 1,
        });
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }

    /// Parses one poly, returning it and the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(RingPoly, usize)> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        let l = r.u8()? as usize;
        let moduli = (0..l).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let form = match r.u8()? {
            0 => Form::Coeff,
            1 => Form::Eval,
            _ => return Err(Error::Malformed("form flag")),
        };
        if !n.is_power_of_two() || n > 1 << 17 {
            return Err(Error::Malformed("degree"));
        }
        let basis = RnsBasis::new(n, &moduli)?;
        let data = (0..n * l).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let p = RingPoly::from_limbs(&basis, data, form)?;
        Ok((p, r.pos))
    }

    /// Parses a poly whose limbs must match `basis` (reuses its tables).
    pub fn from_bytes_with(basis: &Arc<RnsBasis>, bytes: &[u8]) -> Result<(RingPoly, usize)> {
        let mut r = Reader::new(bytes);
        let n = r.u32()? as usize;
        let l = r.u8()? as usize;
        let moduli = (0..l).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if n != basis.degree() || moduli != basis.moduli() {
            return Err(Error::LimbMismatch);
        }
        let form = match r.u8()? {
            0 => Form::Coeff,
            1 => Form::Eval,
            _ => return Err(Error::Malformed("form flag")),
        };
        let data = (0..n * l).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let p = RingPoly::from_limbs(basis, data, form)?;
        Ok((p, r.pos))
    }
}

/// Index map for X ↦ X^k on the evaluation vector: out[j] = in[perm[j]].
pub fn eval_automorphism_perm(n: usize, k: usize) -> Vec<usize> {
    let log_n = n.trailing_zeros();
    let two_n = 2 * n;
    (0..n)
        .map(|j| {
            let e = (2 * bit_reverse(j, log_n) + 1) * k % two_n;
            bit_reverse((e - 1) / 2, log_n)
        })
        .collect()
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        if self.pos + k > self.buf.len() {
            return Err(Error::Malformed("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    pub fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}
