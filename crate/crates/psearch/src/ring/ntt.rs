use super::modulus::Modulus;
use crate::error::{Error, Result};

/// Precomputed twiddles for the negacyclic transform of one limb.
///
/// Output convention: `out[j] = p(ψ^(2·brv(j)+1))`, ψ the smallest primitive
/// 2n-th root of unity.
#[derive(Debug)]
pub struct NttTable {
    q: Modulus,
    n: usize,
    log_n: u32,
    psi: u64,
    psi_brv: Vec<u64>,
    psi_brv_shoup: Vec<u64>,
    ipsi_brv: Vec<u64>,
    ipsi_brv_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

pub fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(q: Modulus, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::InvalidParams(format!("ring degree {n} not a power of two")));
        }
        let psi = q
            .min_primitive_root(2 * n as u64)
            .ok_or(Error::InvalidModulus(q.value(), "not congruent to 1 mod 2n"))?;
        let ipsi = q.inv(psi).expect("root is a unit");
        let log_n = n.trailing_zeros();
        let mut psi_brv = vec![0u64; n];
        let mut ipsi_brv = vec![0u64; n];
        let (mut p, mut ip) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, log_n);
            psi_brv[r] = p;
            ipsi_brv[r] = ip;
            p = q.mul(p, psi);
            ip = q.mul(ip, ipsi);
        }
        let psi_brv_shoup = psi_brv.iter().map(|&w| q.shoup(w)).collect();
        let ipsi_brv_shoup = ipsi_brv.iter().map(|&w| q.shoup(w)).collect();
        let n_inv = q.inv(n as u64 % q.value()).expect("n invertible");
        Ok(NttTable {
            q,
            n,
            log_n,
            psi,
            psi_brv,
            psi_brv_shoup,
            ipsi_brv,
            ipsi_brv_shoup,
            n_inv,
            n_inv_shoup: q.shoup(n_inv),
        })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.q
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn psi(&self) -> u64 {
        self.psi
    }

    pub fn log_n(&self) -> u32 {
        self.log_n
    }

    /// In-place forward transform, Harvey butterflies with values kept in [0, 4q).
    pub fn forward(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.q.value();
        let two_q = 2 * q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            let (ws, wss) = (&self.psi_brv[m..2 * m], &self.psi_brv_shoup[m..2 * m]);
            for (blk, (&w, &wsh)) in a.chunks_exact_mut(2 * t).zip(ws.iter().zip(wss)) {
                let (lo, hi) = blk.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let u = if u >= two_q { u - two_q } else { u };
                    let v = self.q.mul_shoup_lazy(*y, w, wsh);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            m <<= 1;
        }
        for x in a.iter_mut() {
            let mut v = *x;
            if v >= two_q {
                v -= two_q;
            }
            if v >= q {
                v -= q;
            }
            *x = v;
        }
    }

    /// In-place inverse transform, Gentleman-Sande with values kept in [0, 2q).
    pub fn inverse(&self, a: &mut [u64]) {
        assert_eq!(a.len(), self.n);
        let q = self.q.value();
        let two_q = 2 * q;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            let (ws, wss) = (&self.ipsi_brv[h..m], &self.ipsi_brv_shoup[h..m]);
            for (blk, (&w, &wsh)) in a.chunks_exact_mut(2 * t).zip(ws.iter().zip(wss)) {
                let (lo, hi) = blk.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let s = u + v;
                    *x = if s >= two_q { s - two_q } else { s };
                    *y = self.q.mul_shoup_lazy(u + two_q - v, w, wsh);
                }
            }
            t <<= 1;
            m = h;
        }
        let (ni, nis) = (self.n_inv, self.n_inv_shoup);
        for x in a.iter_mut() {
            *x = self.q.mul_shoup(*x, ni, nis);
        }
    }

    /// Fully reduced textbook transform; reference for the lazy one.
    pub fn forward_reference(&self, a: &mut [u64]) {
        let q = &self.q;
        let mut t = self.n;
        let mut m = 1;
        while m < self.n {
            t >>= 1;
            for i in 0..m {
                let w = self.psi_brv[m + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = q.mul(a[j + t], w);
                    a[j] = q.add(u, v);
                    a[j + t] = q.sub(u, v);
                }
            }
            m <<= 1;
        }
    }

    /// The evaluation point of output index j.
    pub fn eval_point(&self, j: usize) -> u64 {
        self.q
            .pow(self.psi, 2 * bit_reverse(j, self.log_n) as u64 + 1)
    }
}
