use std::sync::Arc;

use num_bigint::BigUint;

use super::modulus::Modulus;
use super::poly::{Form, RingPoly, RnsBasis};
use crate::error::{Error, Result};

/// Precomputed constants for converting residues from basis Q to basis P.
///
/// `fast` is the Bajard et al. conversion: for input x in [0, Q) it returns
/// x + k·Q with 0 ≤ k < |Q| (the number of source limbs). `exact` removes the
/// offset with a floating-point estimate of k and returns the centered
/// representative in (-Q/2, Q/2].
#[derive(Debug)]
pub struct BaseConverter {
    from: Arc<RnsBasis>,
    to: Arc<RnsBasis>,
    // (Q/q_i)^-1 mod q_i with Shoup constants
    qhat_inv: Vec<(u64, u64)>,
    // [j][i] = Q/q_i mod p_j
    qhat_mod_p: Vec<Vec<u64>>,
    // Q mod p_j
    q_mod_p: Vec<u64>,
    inv_q: Vec<f64>,
}

impl BaseConverter {
    pub fn new(from: &Arc<RnsBasis>, to: &Arc<RnsBasis>) -> Result<Self> {
        if to.is_empty() || from.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let qprod = from.product();
        let small = |b: BigUint| b.iter_u64_digits().next().unwrap_or(0);
        let mut qhat_inv = Vec::new();
        let mut inv_q = Vec::new();
        for i in 0..from.len() {
            let q = from.modulus(i);
            let qhat = &qprod / q.value();
            let v = q
                .inv(small(&qhat % q.value()))
                .ok_or(Error::InvalidParams("source limbs not coprime".into()))?;
            qhat_inv.push((v, q.shoup(v)));
            inv_q.push(1.0 / q.value() as f64);
        }
        let mut qhat_mod_p = Vec::new();
        let mut q_mod_p = Vec::new();
        for j in 0..to.len() {
            let p = to.modulus(j).value();
            qhat_mod_p.push(
                (0..from.len())
                    .map(|i| small((&qprod / from.modulus(i).value()) % p))
                    .collect(),
            );
            q_mod_p.push(small(&qprod % p));
        }
        Ok(BaseConverter {
            from: from.clone(),
            to: to.clone(),
            qhat_inv,
            qhat_mod_p,
            q_mod_p,
            inv_q,
        })
    }

    pub fn from_basis(&self) -> &Arc<RnsBasis> {
        &self.from
    }

    pub fn to_basis(&self) -> &Arc<RnsBasis> {
        &self.to
    }

    fn check(&self, p: &RingPoly) -> Result<()> {
        if p.form() != Form::Coeff {
            return Err(Error::FormMismatch);
        }
        if !p.basis().same_limbs(&self.from) {
            return Err(Error::LimbMismatch);
        }
        Ok(())
    }

    fn scaled_residues(&self, p: &RingPoly, y: &mut [Vec<u64>]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let q = self.from.modulus(i);
            let (w, ws) = self.qhat_inv[i];
            for (d, &x) in yi.iter_mut().zip(p.limb(i)) {
                *d = q.mul_shoup(x, w, ws);
            }
        }
    }

    /// Bajard fast conversion. Output ≡ x + k·Q, 0 ≤ k < |Q|.
    pub fn fast(&self, p: &RingPoly) -> Result<RingPoly> {
        self.check(p)?;
        let n = p.degree();
        let mut y = vec![vec![0u64; n]; self.from.len()];
        self.scaled_residues(p, &mut y);
        let mut out = RingPoly::zero(&self.to, Form::Coeff);
        for j in 0..self.to.len() {
            let pm = *self.to.modulus(j);
            let dst = out.limb_mut(j);
            for (i, yi) in y.iter().enumerate() {
                let c = self.qhat_mod_p[j][i];
                let cs = pm.shoup(c);
                for (d, &v) in dst.iter_mut().zip(yi) {
                    *d = pm.add(*d, pm.mul_shoup(v, c, cs));
                }
            }
        }
        Ok(out)
    }

    /// Exact conversion of the centered representative.
    pub fn exact(&self, p: &RingPoly) -> Result<RingPoly> {
        self.check(p)?;
        let n = p.degree();
        let mut y = vec![vec![0u64; n]; self.from.len()];
        self.scaled_residues(p, &mut y);
        // v[c] = round(Σ y_i / q_i)
        let mut v = vec![0u64; n];
        for (c, vc) in v.iter_mut().enumerate() {
            let s: f64 = y.iter().zip(&self.inv_q).map(|(yi, iq)| yi[c] as f64 * iq).sum();
            *vc = s.round() as u64;
        }
        let mut out = RingPoly::zero(&self.to, Form::Coeff);
        for j in 0..self.to.len() {
            let pm: Modulus = *self.to.modulus(j);
            let dst = out.limb_mut(j);
            for (i, yi) in y.iter().enumerate() {
                let c = self.qhat_mod_p[j][i];
                let cs = pm.shoup(c);
                for (d, &val) in dst.iter_mut().zip(yi) {
                    *d = pm.add(*d, pm.mul_shoup(val, c, cs));
                }
            }
            let qm = self.q_mod_p[j];
            let qms = pm.shoup(qm);
            for (d, &vc) in dst.iter_mut().zip(&v) {
                *d = pm.sub(*d, pm.mul_shoup(vc, qm, qms));
            }
        }
        Ok(out)
    }
}

/// Free-function form of the Bajard conversion.
pub fn fast_base_convert(p: &RingPoly, target: &Arc<RnsBasis>) -> Result<RingPoly> {
    BaseConverter::new(p.basis(), target)?.fast(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::{Signed, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const Q3: [u64; 3] = [134176769, 268369921, 268361729];
    const P2: [u64; 2] = [1073692673, 2305843009213554689];

    fn random_poly(basis: &Arc<RnsBasis>, rng: &mut ChaCha8Rng) -> RingPoly {
        let mut p = RingPoly::zero(basis, Form::Coeff);
        for i in 0..basis.len() {
            let q = basis.modulus(i).value();
            for x in p.limb_mut(i) {
                *x = rng.random_range(0..q);
            }
        }
        p
    }

    #[test]
    fn fast_offset_bounded_by_limb_count() {
        let n = 64;
        let q = RnsBasis::new(n, &Q3).unwrap();
        let p = RnsBasis::new(n, &P2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let qq = BigInt::from(q.product());
        let pp = p.product();
        for _ in 0..20 {
            let x = random_poly(&q, &mut rng);
            let y = fast_base_convert(&x, &p).unwrap();
            let xs = x.crt_reconstruct().unwrap();
            let ys = y.crt_reconstruct().unwrap();
            for (a, b) in xs.iter().zip(&ys) {
                // P > 3Q so the lifted value is recovered exactly
                assert!(pp > BigUint::from(3u8) * q.product());
                let diff = BigInt::from(b.clone()) - BigInt::from(a.clone());
                assert!((&diff % &qq).is_zero());
                let k = &diff / &qq;
                assert!(k.abs() <= BigInt::from(3));
            }
        }
    }

    #[test]
    fn exact_is_centered_representative() {
        let n = 64;
        let q = RnsBasis::new(n, &Q3).unwrap();
        let p = RnsBasis::new(n, &P2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let qq = BigInt::from(q.product());
        let pp = BigInt::from(p.product());
        let x = random_poly(&q, &mut rng);
        let y = BaseConverter::new(&q, &p).unwrap().exact(&x).unwrap();
        for (a, b) in x.crt_reconstruct().unwrap().iter().zip(y.crt_reconstruct().unwrap()) {
            let mut a = BigInt::from(a.clone());
            if &a * 2 > qq {
                a -= &qq;
            }
            let mut b = BigInt::from(b);
            if &b * 2 > pp {
                b -= &pp;
            }
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_and_small_values() {
        let n = 64;
        let q = RnsBasis::new(n, &Q3[..1]).unwrap();
        let p = RnsBasis::new(n, &P2).unwrap();
        let z = RingPoly::zero(&q, Form::Coeff);
        assert!(fast_base_convert(&z, &p).unwrap().is_zero());
        let coeffs: Vec<i64> = (0..64).map(|i| i * 1000 + 5).collect();
        let x = RingPoly::from_signed(&q, &coeffs);
        let y = fast_base_convert(&x, &p).unwrap();
        assert_eq!(y, RingPoly::from_signed(&p, &coeffs));
    }

    #[test]
    fn empty_target_rejected() {
        assert!(RnsBasis::new(64, &[]).is_err());
    }
}
