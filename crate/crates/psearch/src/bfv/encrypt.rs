use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive, Zero};
use rand::RngCore;

use super::ciphertext::{Ciphertext, Plaintext};
use super::keys::{sample_cbd, sample_uniform, SecretKey};
use super::noise;
use super::params::SheParams;
use crate::error::{Error, Result};
use crate::ring::{Form, RingPoly};

/// round(Q·m/t) per coefficient, as residues over the level basis (coefficient form).
pub(crate) fn scaled_message(params: &SheParams, level: usize, m: &[u64]) -> RingPoly {
    let ld = params.level(level);
    let basis = &ld.basis;
    let t = params.t_modulus();
    let mut out = RingPoly::zero(basis, Form::Coeff);
    let rs: Vec<(u64, bool)> = m
        .iter()
        .map(|&x| {
            let r = t.mul(ld.q_mod_t, x);
            (r, 2 * r >= t.value())
        })
        .collect();
    for i in 0..basis.len() {
        let q = *basis.modulus(i);
        let ti = ld.t_inv_q[i];
        let tis = q.shoup(ti);
        for (d, &(r, up)) in out.limb_mut(i).iter_mut().zip(&rs) {
            let v = q.neg(q.mul_shoup(r, ti, tis));
            *d = if up { q.add(v, 1) } else { v };
        }
    }
    out
}

/// Symmetric encryption at the top level.
pub fn encrypt(params: &SheParams, sk: &SecretKey, pt: &Plaintext, rng: &mut impl RngCore) -> Result<Ciphertext> {
    if pt.t != params.t() || pt.coeffs.len() != params.n() {
        return Err(Error::Usage("plaintext does not match parameters".into()));
    }
    let level = params.max_level();
    let basis = params.basis(level);
    let a = sample_uniform(rng, basis, Form::Eval);
    let e = sample_cbd(rng, params.n());
    let mut c0 = RingPoly::from_signed(basis, &e);
    c0.add_assign(&scaled_message(params, level, &pt.coeffs));
    c0.to_eval();
    c0.sub_assign(&a.mul(&sk.at_level(params, level)));
    Ok(Ciphertext {
        c0,
        c1: a,
        level,
        noise_bits: noise::fresh(),
        t: params.t(),
    })
}

/// Encrypts a slot (or coefficient) vector.
pub fn encrypt_values(params: &SheParams, sk: &SecretKey, values: &[u64], rng: &mut impl RngCore) -> Result<Ciphertext> {
    encrypt(params, sk, &Plaintext::encode(params, values)?, rng)
}

/// c0 + c1·s in coefficient form.
fn phase(params: &SheParams, sk: &SecretKey, ct: &Ciphertext) -> RingPoly {
    let s = sk.at_level(params, ct.level);
    let mut x = ct.c1.mul(&s);
    x.add_assign(&ct.c0);
    x.to_coeff();
    x
}

/// Decrypts regardless of the noise estimate.
pub fn decrypt_unchecked(params: &SheParams, sk: &SecretKey, ct: &Ciphertext) -> Plaintext {
    let x = phase(params, sk, ct);
    let ld = params.level(ct.level);
    let basis = &ld.basis;
    let t = params.t();
    let n = params.n();
    let mut int_part = vec![0u64; n];
    let mut frac = vec![0f64; n];
    for i in 0..basis.len() {
        let q = *basis.modulus(i);
        let w = ld.qhat_inv[i];
        let ws = q.shoup(w);
        let qf = q.value() as f64;
        for (k, &xi) in x.limb(i).iter().enumerate() {
            let y = q.mul_shoup(xi, w, ws);
            let prod = t as u128 * y as u128;
            let a = (prod / q.value() as u128) as u64;
            let b = (prod % q.value() as u128) as u64;
            int_part[k] = (int_part[k] + a % t) % t;
            frac[k] += b as f64 / qf;
        }
    }
    let coeffs = int_part
        .iter()
        .zip(&frac)
        .map(|(&a, &f)| (a + f.round() as u64 % t) % t)
        .collect();
    Plaintext { coeffs, t }
}

/// Decrypts, refusing when the static noise estimate is exhausted.
pub fn decrypt(params: &SheParams, sk: &SecretKey, ct: &Ciphertext) -> Result<Plaintext> {
    let b = ct.budget_estimate(params);
    if b <= 0.0 {
        return Err(Error::NoiseBudgetExhausted(b));
    }
    Ok(decrypt_unchecked(params, sk, ct))
}

pub fn decrypt_values(params: &SheParams, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u64>> {
    Ok(decrypt(params, sk, ct)?.decode(params))
}

/// Measured budget: log2(Q/2t) − log2‖c0 + c1·s − round(Q·m/t)‖∞ (diagnostic).
pub fn noise_budget(params: &SheParams, sk: &SecretKey, ct: &Ciphertext) -> f64 {
    let x = phase(params, sk, ct).crt_reconstruct().expect("coefficient form");
    let m = decrypt_unchecked(params, sk, ct);
    let q = params.basis(ct.level).product();
    let qi = BigInt::from(q.clone());
    let t = BigUint::from(params.t());
    let mut max = BigInt::zero();
    for (xk, &mk) in x.iter().zip(&m.coeffs) {
        // round(Q·m/t) = floor((2Qm + t) / 2t)
        let enc = (BigUint::from(2u8) * &q * mk + &t) / (BigUint::from(2u8) * &t);
        let mut e = (BigInt::from(xk.clone()) - BigInt::from(enc)) % &qi;
        if e.is_negative() {
            e += &qi;
        }
        if &e * 2 > qi {
            e -= &qi;
        }
        let a = e.abs();
        if a > max {
            max = a;
        }
    }
    let cap = params.log2_q(ct.level) - (2.0 * params.t() as f64).log2();
    if max.is_zero() {
        return cap;
    }
    cap - bigint_log2(&max)
}

fn bigint_log2(x: &BigInt) -> f64 {
    x.to_f64().map_or(f64::INFINITY, f64::log2)
}
