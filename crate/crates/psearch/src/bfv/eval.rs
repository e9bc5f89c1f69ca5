use std::sync::atomic::{AtomicU64, Ordering::Relaxed};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ciphertext::{Ciphertext, Plaintext, PreparedPlaintext};
use super::encrypt::scaled_message;
use super::keys::{EvaluationKey, KeySwitchKey};
use super::noise;
use super::params::{LevelData, SheParams};
use crate::error::{Error, Result};
use crate::ring::{Form, Modulus, RingPoly};

/// Plain snapshot of operation counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub ct_add: u64,
    pub pt_mult: u64,
    pub ct_mult: u64,
    pub rotations: u64,
    pub substitutions: u64,
    pub key_switches: u64,
    pub rescales: u64,
    pub relins: u64,
    pub mod_switches: u64,
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            ct_add: self.ct_add - o.ct_add,
            pt_mult: self.pt_mult - o.pt_mult,
            ct_mult: self.ct_mult - o.ct_mult,
            rotations: self.rotations - o.rotations,
            substitutions: self.substitutions - o.substitutions,
            key_switches: self.key_switches - o.key_switches,
            rescales: self.rescales - o.rescales,
            relins: self.relins - o.relins,
            mod_switches: self.mod_switches - o.mod_switches,
        }
    }
}

impl std::ops::Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            ct_add: self.ct_add + o.ct_add,
            pt_mult: self.pt_mult + o.pt_mult,
            ct_mult: self.ct_mult + o.ct_mult,
            rotations: self.rotations + o.rotations,
            substitutions: self.substitutions + o.substitutions,
            key_switches: self.key_switches + o.key_switches,
            rescales: self.rescales + o.rescales,
            relins: self.relins + o.relins,
            mod_switches: self.mod_switches + o.mod_switches,
        }
    }
}

#[derive(Debug, Default)]
struct OpStats {
    ct_add: AtomicU64,
    pt_mult: AtomicU64,
    ct_mult: AtomicU64,
    rotations: AtomicU64,
    substitutions: AtomicU64,
    key_switches: AtomicU64,
    rescales: AtomicU64,
    relins: AtomicU64,
    mod_switches: AtomicU64,
}

/// Accumulated ciphertext tensor over Q and the extension basis, not yet rescaled.
#[derive(Clone, Debug)]
pub struct Tensor {
    level: usize,
    q: [RingPoly; 3],
    b: [RingPoly; 3],
    noise_bits: f64,
    terms: usize,
}

impl Tensor {
    pub fn terms(&self) -> usize {
        self.terms
    }
}

/// Homomorphic operations with instrumentation.
#[derive(Debug)]
pub struct Evaluator {
    params: Arc<SheParams>,
    stats: OpStats,
}

#[inline]
fn lift_centered(v: u64, from: u64, to: &Modulus) -> u64 {
    if v <= from / 2 {
        to.reduce(v)
    } else {
        to.neg(to.reduce(from - v))
    }
}

impl Evaluator {
    pub fn new(params: &Arc<SheParams>) -> Self {
        Evaluator {
            params: params.clone(),
            stats: OpStats::default(),
        }
    }

    pub fn params(&self) -> &Arc<SheParams> {
        &self.params
    }

    pub fn counts(&self) -> OpCounts {
        let s = &self.stats;
        OpCounts {
            ct_add: s.ct_add.load(Relaxed),
            pt_mult: s.pt_mult.load(Relaxed),
            ct_mult: s.ct_mult.load(Relaxed),
            rotations: s.rotations.load(Relaxed),
            substitutions: s.substitutions.load(Relaxed),
            key_switches: s.key_switches.load(Relaxed),
            rescales: s.rescales.load(Relaxed),
            relins: s.relins.load(Relaxed),
            mod_switches: s.mod_switches.load(Relaxed),
        }
    }

    fn check_ct(&self, ct: &Ciphertext) -> Result<()> {
        if ct.t != self.params.t() || ct.level == 0 || ct.level > self.params.max_level() {
            return Err(Error::Usage("ciphertext does not match evaluator parameters".into()));
        }
        Ok(())
    }

    fn check_pair(&self, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        self.check_ct(a)?;
        self.check_ct(b)?;
        if a.level != b.level {
            return Err(Error::Usage(format!("level mismatch: {} vs {}", a.level, b.level)));
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let mut r = a.clone();
        self.add_assign(&mut r, b)?;
        Ok(r)
    }

    pub fn add_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        self.check_pair(a, b)?;
        a.c0.add_assign(&b.c0);
        a.c1.add_assign(&b.c1);
        a.noise_bits = noise::log2_add(a.noise_bits, b.noise_bits);
        self.stats.ct_add.fetch_add(1, Relaxed);
        Ok(())
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        let mut r = a.clone();
        r.c0.sub_assign(&b.c0);
        r.c1.sub_assign(&b.c1);
        r.noise_bits = noise::log2_add(a.noise_bits, b.noise_bits);
        self.stats.ct_add.fetch_add(1, Relaxed);
        Ok(r)
    }

    pub fn negate(&self, a: &Ciphertext) -> Ciphertext {
        let mut r = a.clone();
        r.c0.neg_assign();
        r.c1.neg_assign();
        r
    }

    pub fn add_plain(&self, ct: &Ciphertext, pt: &Plaintext) -> Result<Ciphertext> {
        self.check_ct(ct)?;
        if pt.t != ct.t {
            return Err(Error::Usage("plaintext modulus mismatch".into()));
        }
        let mut m = scaled_message(&self.params, ct.level, &pt.coeffs);
        m.to_eval();
        let mut r = ct.clone();
        r.c0.add_assign(&m);
        r.noise_bits = noise::log2_add(r.noise_bits, 0.0);
        self.stats.ct_add.fetch_add(1, Relaxed);
        Ok(r)
    }

    pub fn mul_plain(&self, ct: &Ciphertext, pt: &PreparedPlaintext) -> Result<Ciphertext> {
        self.check_ct(ct)?;
        if pt.level != ct.level {
            return Err(Error::Usage("plaintext prepared at another level".into()));
        }
        self.stats.pt_mult.fetch_add(1, Relaxed);
        if pt.zero {
            let mut z = Ciphertext::zero(&self.params, ct.level);
            z.noise_bits = f64::NEG_INFINITY;
            return Ok(z);
        }
        Ok(Ciphertext {
            c0: ct.c0.mul(&pt.poly),
            c1: ct.c1.mul(&pt.poly),
            level: ct.level,
            noise_bits: ct.noise_bits + noise::pt_mult_cost(&self.params),
            t: ct.t,
        })
    }

    /// acc += ct ⊙ pt.
    pub fn mul_plain_acc(&self, acc: &mut Ciphertext, ct: &Ciphertext, pt: &PreparedPlaintext) -> Result<()> {
        self.check_pair(acc, ct)?;
        if pt.level != ct.level {
            return Err(Error::Usage("plaintext prepared at another level".into()));
        }
        self.stats.pt_mult.fetch_add(1, Relaxed);
        self.stats.ct_add.fetch_add(1, Relaxed);
        if pt.zero {
            return Ok(());
        }
        acc.c0.fma_assign(&ct.c0, &pt.poly);
        acc.c1.fma_assign(&ct.c1, &pt.poly);
        acc.noise_bits = noise::log2_add(acc.noise_bits, ct.noise_bits + noise::pt_mult_cost(&self.params));
        Ok(())
    }

    /// Multiply by an integer scalar (taken mod t).
    pub fn mul_scalar(&self, ct: &Ciphertext, s: u64) -> Ciphertext {
        let tm = self.params.t_modulus();
        let sc = tm.center(s % tm.value());
        let mut r = ct.clone();
        let b = self.params.basis(ct.level);
        let limbs: Vec<u64> = (0..b.len()).map(|i| b.modulus(i).from_i64(sc)).collect();
        r.c0.mul_scalar_limbwise(&limbs);
        r.c1.mul_scalar_limbwise(&limbs);
        let mag = (sc.unsigned_abs().max(1)) as f64;
        r.noise_bits = noise::log2_add(ct.noise_bits + mag.log2(), (mag / 2.0).max(1.0).log2());
        r
    }

    /// Multiply by the monomial X^k (k taken mod 2n).
    pub fn mul_monomial(&self, ct: &Ciphertext, k: usize) -> Ciphertext {
        let b = self.params.basis(ct.level);
        let n = self.params.n();
        let k = k % (2 * n);
        let mut mono = RingPoly::zero(b, Form::Eval);
        for i in 0..b.len() {
            let tab = b.table(i);
            let q = *b.modulus(i);
            let psi = tab.psi();
            // psi^e for e in [0, 2n)
            let mut pw = Vec::with_capacity(2 * n);
            let mut x = 1u64;
            for _ in 0..2 * n {
                pw.push(x);
                x = q.mul(x, psi);
            }
            let log_n = tab.log_n();
            for (j, d) in mono.limb_mut(i).iter_mut().enumerate() {
                let e = (2 * crate::ring::bit_reverse(j, log_n) + 1) * k % (2 * n);
                *d = pw[e];
            }
        }
        let mut r = ct.clone();
        r.c0.mul_assign(&mono);
        r.c1.mul_assign(&mono);
        r
    }

    /// Left rotation of both slot rows by `step` (0 is a no-op without key switching).
    pub fn rotate(&self, ct: &Ciphertext, step: i64, ek: &EvaluationKey) -> Result<Ciphertext> {
        let g = self.params.rotation_element(step);
        if g == 1 {
            return Ok(ct.clone());
        }
        let r = self.apply_galois(ct, g, ek)?;
        self.stats.rotations.fetch_add(1, Relaxed);
        Ok(r)
    }

    /// Swaps the two slot rows.
    pub fn conjugate(&self, ct: &Ciphertext, ek: &EvaluationKey) -> Result<Ciphertext> {
        let r = self.apply_galois(ct, self.params.conjugation_element(), ek)?;
        self.stats.rotations.fetch_add(1, Relaxed);
        Ok(r)
    }

    /// X ↦ X^k on the underlying plaintext polynomial. A missing key is
    /// derived by repeatedly applying a held key h with h^e ≡ k (mod 2n).
    pub fn substitute(&self, ct: &Ciphertext, k: usize, ek: &EvaluationKey) -> Result<Ciphertext> {
        let two_n = 2 * self.params.n();
        if k % 2 == 0 {
            return Err(Error::InvalidGaloisElement(k));
        }
        let k = k % two_n;
        if k == 1 {
            return Ok(ct.clone());
        }
        if ek.has_galois(k) {
            self.stats.substitutions.fetch_add(1, Relaxed);
            return self.apply_galois(ct, k, ek);
        }
        let (h, e) = derive_chain(two_n, k, &ek.galois_elements())
            .ok_or_else(|| Error::MissingKey(format!("substitution X -> X^{k}")))?;
        let mut r = ct.clone();
        for _ in 0..e {
            r = self.apply_galois(&r, h, ek)?;
            self.stats.substitutions.fetch_add(1, Relaxed);
        }
        Ok(r)
    }

    pub(crate) fn apply_galois(&self, ct: &Ciphertext, g: usize, ek: &EvaluationKey) -> Result<Ciphertext> {
        self.check_ct(ct)?;
        if g == 1 {
            return Ok(ct.clone());
        }
        let key = ek
            .galois
            .get(&g)
            .ok_or_else(|| Error::MissingKey(format!("Galois element {g}")))?;
        let c0 = ct.c0.automorphism(g)?;
        let c1 = ct.c1.automorphism(g)?;
        let mut c1c = c1.clone();
        c1c.to_coeff();
        let (u0, u1) = self.key_switch(ct.level, &c1, &c1c, key);
        let mut c0 = c0;
        c0.add_assign(&u0);
        self.stats.key_switches.fetch_add(1, Relaxed);
        Ok(Ciphertext {
            c0,
            c1: u1,
            level: ct.level,
            noise_bits: noise::log2_add(ct.noise_bits, noise::key_switch_bits(&self.params, ct.level)),
            t: ct.t,
        })
    }

    /// Hybrid key switch of `c` (given in both forms over the level basis).
    fn key_switch(&self, level: usize, c_eval: &RingPoly, c_coeff: &RingPoly, key: &KeySwitchKey) -> (RingPoly, RingPoly) {
        let p = &self.params;
        let ld = p.level(level);
        let ext = &ld.ext;
        let n = p.n();
        let l = level;
        let top = p.max_level();
        let key_idx = |m: usize| if m < l { m } else { top };
        // raw products summed without reduction when l·(q−1)² fits a word
        let lazy = (0..=l).all(|m| {
            let q = ext.modulus(m).value() as u128 - 1;
            q * q * l as u128 <= u64::MAX as u128
        });
        let mut acc0 = vec![0u64; n * (l + 1)];
        let mut acc1 = vec![0u64; n * (l + 1)];
        let mut tmp = vec![0u64; n];
        for j in 0..l {
            let qj = ext.modulus(j).value();
            let dj = c_coeff.limb(j);
            for m in 0..=l {
                let pm = *ext.modulus(m);
                let dv: &[u64] = if m == j {
                    c_eval.limb(j)
                } else {
                    for (d, &v) in tmp.iter_mut().zip(dj) {
                        *d = lift_centered(v, qj, &pm);
                    }
                    ext.table(m).forward(&mut tmp);
                    &tmp
                };
                let kb = &key.b[j].limb(key_idx(m))[..n];
                let ka = &key.a[j].limb(key_idx(m))[..n];
                let a0 = &mut acc0[m * n..(m + 1) * n];
                let a1 = &mut acc1[m * n..(m + 1) * n];
                if lazy {
                    for k in 0..n {
                        a0[k] += dv[k] * kb[k];
                        a1[k] += dv[k] * ka[k];
                    }
                } else {
                    for k in 0..n {
                        a0[k] = pm.add(a0[k], pm.mul(dv[k], kb[k]));
                        a1[k] = pm.add(a1[k], pm.mul(dv[k], ka[k]));
                    }
                }
            }
        }
        if lazy {
            for m in 0..=l {
                let pm = *ext.modulus(m);
                for x in acc0[m * n..(m + 1) * n].iter_mut().chain(acc1[m * n..(m + 1) * n].iter_mut()) {
                    *x = pm.reduce(*x);
                }
            }
        }
        (self.mod_down(ld, acc0), self.mod_down(ld, acc1))
    }

    /// Divides an evaluation-form value over Q ∪ {P} by P with rounding.
    fn mod_down(&self, ld: &LevelData, mut acc: Vec<u64>) -> RingPoly {
        let n = self.params.n();
        let ext = &ld.ext;
        let l = ld.basis.len();
        let pmod = ext.modulus(l).value();
        let (head, tail) = acc.split_at_mut(l * n);
        ext.table(l).inverse(tail);
        let mut tmp = vec![0u64; n];
        for i in 0..l {
            let q = *ext.modulus(i);
            for (d, &v) in tmp.iter_mut().zip(tail.iter()) {
                *d = lift_centered(v, pmod, &q);
            }
            ext.table(i).forward(&mut tmp);
            let w = ld.p_inv_q[i];
            let ws = q.shoup(w);
            for (x, &y) in head[i * n..(i + 1) * n].iter_mut().zip(&tmp) {
                *x = q.mul_shoup(q.sub(*x, y), w, ws);
            }
        }
        acc.truncate(l * n);
        RingPoly::from_limbs(&ld.basis, acc, Form::Eval).expect("reduced residues")
    }

    fn lift_to_ext(&self, ld: &LevelData, x: &RingPoly) -> RingPoly {
        let mut c = x.clone();
        c.to_coeff();
        let mut y = ld.q_to_b.fast(&c).expect("level basis");
        y.to_eval();
        y
    }

    /// Tensor product over Q and the extension basis (no rescale yet).
    pub fn tensor(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Tensor> {
        self.check_pair(a, b)?;
        let ld = self.params.level(a.level);
        let (a0, a1) = (self.lift_to_ext(ld, &a.c0), self.lift_to_ext(ld, &a.c1));
        let (b0, b1) = (self.lift_to_ext(ld, &b.c0), self.lift_to_ext(ld, &b.c1));
        let mut q1 = a.c0.mul(&b.c1);
        q1.fma_assign(&a.c1, &b.c0);
        let mut e1 = a0.mul(&b1);
        e1.fma_assign(&a1, &b0);
        self.stats.ct_mult.fetch_add(1, Relaxed);
        Ok(Tensor {
            level: a.level,
            q: [a.c0.mul(&b.c0), q1, a.c1.mul(&b.c1)],
            b: [a0.mul(&b0), e1, a1.mul(&b1)],
            noise_bits: self.tensor_noise(a.noise_bits, b.noise_bits),
            terms: 1,
        })
    }

    fn tensor_noise(&self, a: f64, b: f64) -> f64 {
        let p = &self.params;
        noise::log2_add(a, b) + (p.t() as f64).log2() + (p.n() as f64).log2() + 2.0
    }

    /// acc += a ⊗ b, deferring the rescale.
    pub fn tensor_acc(&self, acc: &mut Tensor, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        let t = self.tensor(a, b)?;
        if t.level != acc.level {
            return Err(Error::Usage("tensor level mismatch".into()));
        }
        for i in 0..3 {
            acc.q[i].add_assign(&t.q[i]);
            acc.b[i].add_assign(&t.b[i]);
        }
        acc.noise_bits = noise::log2_add(acc.noise_bits, t.noise_bits);
        acc.terms += 1;
        Ok(())
    }

    /// Scale by t/Q with rounding, then relinearize.
    pub fn rescale_relin(&self, acc: Tensor, ek: &EvaluationKey) -> Result<Ciphertext> {
        let key = ek
            .relin
            .as_ref()
            .ok_or_else(|| Error::MissingKey("relinearization".into()))?;
        let ld = self.params.level(acc.level);
        let Tensor { q, b, level, noise_bits, .. } = acc;
        let mut out = Vec::with_capacity(3);
        for (zq, zb) in q.into_iter().zip(b) {
            out.push(self.scale_round(ld, zq, zb));
        }
        self.stats.rescales.fetch_add(1, Relaxed);
        let mut e2 = out.pop().expect("three parts");
        let mut e1 = out.pop().expect("three parts");
        let mut e0 = out.pop().expect("three parts");
        let e2c = e2.clone();
        e2.to_eval();
        let (u0, u1) = self.key_switch(level, &e2, &e2c, key);
        self.stats.relins.fetch_add(1, Relaxed);
        self.stats.key_switches.fetch_add(1, Relaxed);
        e0.to_eval();
        e1.to_eval();
        e0.add_assign(&u0);
        e1.add_assign(&u1);
        Ok(Ciphertext {
            c0: e0,
            c1: e1,
            level,
            noise_bits: noise::log2_add(noise_bits, noise::key_switch_bits(&self.params, level)),
            t: self.params.t(),
        })
    }

    /// round(t·z/Q) for z given over Q and B; returns coefficient form over Q.
    fn scale_round(&self, ld: &LevelData, mut zq: RingPoly, mut zb: RingPoly) -> RingPoly {
        let t = self.params.t();
        zq.to_coeff();
        zb.to_coeff();
        // r = (t·z + (Q-1)/2) mod Q
        for i in 0..zq.num_limbs() {
            let q = *ld.basis.modulus(i);
            let tq = t % q.value();
            let tqs = q.shoup(tq);
            let h = ld.half_q[i];
            for x in zq.limb_mut(i) {
                *x = q.add(q.mul_shoup(*x, tq, tqs), h);
            }
        }
        let rb = ld.q_to_b.exact(&zq).expect("level basis");
        let bb = ld.q_to_b.to_basis().clone();
        for j in 0..bb.len() {
            let m = *bb.modulus(j);
            let tm = t % m.value();
            let h = ld.half_b[j];
            let qi = ld.q_inv_b[j];
            let qis = m.shoup(qi);
            let r = rb.limb(j);
            for (x, &rv) in zb.limb_mut(j).iter_mut().zip(r) {
                let v = m.sub(m.add(m.mul(*x, tm), h), rv);
                *x = m.mul_shoup(v, qi, qis);
            }
        }
        ld.b_to_q.exact(&zb).expect("extension basis")
    }

    /// Relinearized product.
    pub fn mul(&self, a: &Ciphertext, b: &Ciphertext, ek: &EvaluationKey) -> Result<Ciphertext> {
        if !ek.has_relin() {
            return Err(Error::MissingKey("relinearization".into()));
        }
        let t = self.tensor(a, b)?;
        self.rescale_relin(t, ek)
    }

    /// Drops the last limb with rounding.
    pub fn mod_switch(&self, ct: &Ciphertext) -> Result<Ciphertext> {
        self.check_ct(ct)?;
        if ct.level == 1 {
            return Err(Error::LastLevel);
        }
        let p = &self.params;
        let ld = p.level(ct.level);
        let nb = p.basis(ct.level - 1);
        let last = ct.level - 1;
        let qlast = ld.basis.modulus(last).value();
        let n = p.n();
        let down = |c: &RingPoly| -> RingPoly {
            let mut xl = c.limb(last).to_vec();
            ld.basis.table(last).inverse(&mut xl);
            let mut data = Vec::with_capacity(n * last);
            let mut tmp = vec![0u64; n];
            for i in 0..last {
                let q = *ld.basis.modulus(i);
                for (d, &v) in tmp.iter_mut().zip(&xl) {
                    *d = lift_centered(v, qlast, &q);
                }
                ld.basis.table(i).forward(&mut tmp);
                let w = ld.last_inv[i];
                let ws = q.shoup(w);
                data.extend(
                    c.limb(i)
                        .iter()
                        .zip(&tmp)
                        .map(|(&x, &y)| q.mul_shoup(q.sub(x, y), w, ws)),
                );
            }
            RingPoly::from_limbs(nb, data, Form::Eval).expect("reduced residues")
        };
        let drop = p.log2_q(ct.level) - p.log2_q(ct.level - 1);
        let est = noise::log2_add(ct.noise_bits - drop, noise::rounding_abs(p).log2());
        // budget never increases
        let cap = p.log2_q(ct.level - 1) - p.log2_q(ct.level) + ct.noise_bits;
        self.stats.mod_switches.fetch_add(1, Relaxed);
        Ok(Ciphertext {
            c0: down(&ct.c0),
            c1: down(&ct.c1),
            level: ct.level - 1,
            noise_bits: est.max(cap),
            t: ct.t,
        })
    }

    pub fn mod_switch_to(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level == 0 || level > ct.level {
            return Err(Error::Usage(format!("cannot switch level {} to {level}", ct.level)));
        }
        let mut r = ct.clone();
        while r.level > level {
            r = self.mod_switch(&r)?;
        }
        Ok(r)
    }
}

/// Finds a held element h and the least e with h^e ≡ k (mod 2n).
pub fn derive_chain(two_n: usize, k: usize, held: &[usize]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for &h in held {
        let mut x = h % two_n;
        for e in 1..two_n {
            if x == k {
                if best.is_none_or(|(_, be)| e < be) {
                    best = Some((h, e));
                }
                break;
            }
            if x == 1 {
                break;
            }
            x = x * h % two_n;
        }
    }
    best
}
