use crate::error::{Error, Result};

/// A word-sized prime modulus with Barrett constants.
#[derive(Clone, Copy, Debug)]
pub struct Modulus {
    value: u64,
    bits: u32,
    // floor(2^(2k) / q), k = bits
    mu: u64,
}

impl PartialEq for Modulus {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}
impl Eq for Modulus {}

impl Modulus {
    /// Builds a modulus without requiring NTT-friendliness.
    pub fn new(value: u64) -> Result<Self> {
        if value < 2 || value >= 1 << 62 {
            return Err(Error::InvalidModulus(value, "must lie in [2, 2^62)"));
        }
        if !is_prime(value) {
            return Err(Error::InvalidModulus(value, "not prime"));
        }
        let bits = 64 - value.leading_zeros();
        let mu = ((1u128 << (2 * bits)) / value as u128) as u64;
        Ok(Modulus { value, bits, mu })
    }

    /// Builds a modulus and checks `value ≡ 1 (mod 2n)`.
    pub fn ntt_friendly(value: u64, n: usize) -> Result<Self> {
        let m = Self::new(value)?;
        if (value - 1) % (2 * n as u64) != 0 {
            return Err(Error::InvalidModulus(value, "not congruent to 1 mod 2n"));
        }
        Ok(m)
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.value
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.value {
            s - self.value
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.value - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    /// Barrett reduction of a product below q^2.
    #[inline]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let k = self.bits;
        if x >> (2 * k) != 0 {
            return (x % self.value as u128) as u64;
        }
        let est = ((((x >> (k - 1)) as u64) as u128 * self.mu as u128) >> (k + 1)) as u64;
        let mut r = (x as u64).wrapping_sub(est.wrapping_mul(self.value));
        if r >= self.value {
            r -= self.value;
        }
        if r >= self.value {
            r -= self.value;
        }
        r
    }

    #[inline]
    pub fn reduce(&self, x: u64) -> u64 {
        self.reduce_u128(x as u128)
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Reduces a signed value into [0, q).
    #[inline]
    pub fn from_i64(&self, x: i64) -> u64 {
        let r = x.rem_euclid(self.value as i64);
        r as u64
    }

    /// Centered representative in (-q/2, q/2].
    #[inline]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }

    pub fn pow(&self, mut b: u64, mut e: u64) -> u64 {
        let mut r = 1 % self.value;
        b %= self.value;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul(r, b);
            }
            b = self.mul(b, b);
            e >>= 1;
        }
        r
    }

    pub fn inv(&self, a: u64) -> Option<u64> {
        if a % self.value == 0 {
            None
        } else {
            Some(self.pow(a, self.value - 2))
        }
    }

    /// Shoup precomputation floor(w·2^64/q) for a fixed multiplicand w < q.
    #[inline]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// a·w mod q in [0, 2q), with `ws = shoup(w)`.
    #[inline]
    pub fn mul_shoup_lazy(&self, a: u64, w: u64, ws: u64) -> u64 {
        let qhat = ((a as u128 * ws as u128) >> 64) as u64;
        a.wrapping_mul(w).wrapping_sub(qhat.wrapping_mul(self.value))
    }

    #[inline]
    pub fn mul_shoup(&self, a: u64, w: u64, ws: u64) -> u64 {
        let r = self.mul_shoup_lazy(a, w, ws);
        if r >= self.value {
            r - self.value
        } else {
            r
        }
    }

    /// Smallest primitive 2n-th root of unity.
    pub fn min_primitive_root(&self, two_n: u64) -> Option<u64> {
        if (self.value - 1) % two_n != 0 {
            return None;
        }
        let g = self.generator();
        let w = self.pow(g, (self.value - 1) / two_n);
        // primitive 2n-th roots are w^k with k odd
        let w2 = self.mul(w, w);
        let mut cur = w;
        let mut best = w;
        for _ in 0..two_n / 2 {
            best = best.min(cur);
            cur = self.mul(cur, w2);
        }
        Some(best)
    }

    /// Smallest generator of the multiplicative group.
    pub fn generator(&self) -> u64 {
        let q = self.value;
        let factors = prime_factors(q - 1);
        (2..q)
            .find(|&g| factors.iter().all(|&f| self.pow(g, (q - 1) / f) != 1))
            .unwrap_or(1)
    }
}

fn prime_factors(mut m: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= m {
        if m % p == 0 {
            out.push(p);
            while m % p == 0 {
                m /= p;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        out.push(m);
    }
    out
}

fn mulmod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn powmod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mulmod(r, b, m);
        }
        b = mulmod(b, b, m);
        e >>= 1;
    }
    r
}

/// Miller-Rabin with the first twelve prime bases (exact below 3.3e24).
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'outer: for &a in &BASES {
        let mut x = powmod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Largest primes below 2^bits that are ≡ 1 mod `step`, in decreasing order.
pub fn primes_below(bits: u32, step: u64, count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let top = 1u64 << bits;
    let mut c = (top - 1) / step * step + 1;
    while out.len() < count && c > step {
        if c < top && is_prime(c) {
            out.push(c);
        }
        c -= step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_primes() {
        assert!(is_prime(134176769));
        assert!(is_prime(2305843009213554689));
        assert!(!is_prime(134176769 * 3));
        assert!(!is_prime(1));
        assert!(is_prime(2));
    }

    #[test]
    fn primes_below_matches_sieve() {
        // oracle: trial division
        let naive = |x: u64| x >= 2 && (2..).take_while(|d| d * d <= x).all(|d| x % d != 0);
        let got = primes_below(20, 64, 5);
        let mut expect = vec![];
        let mut c = (1u64 << 20) - 1;
        while expect.len() < 5 {
            if c % 64 == 1 && naive(c) {
                expect.push(c);
            }
            c -= 1;
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(Modulus::new(1 << 62).is_err());
        assert!(Modulus::new(15).is_err());
        assert!(Modulus::ntt_friendly(65537, 1 << 16).is_err());
        assert!(Modulus::ntt_friendly(65537, 1 << 15).is_ok());
    }

    #[test]
    fn root_is_primitive_and_minimal() {
        let q = Modulus::new(7681).unwrap();
        let n2 = 512u64;
        let w = q.min_primitive_root(n2).unwrap();
        assert_eq!(q.pow(w, n2 / 2), q.value() - 1);
        let brute = (2..q.value())
            .find(|&x| q.pow(x, n2) == 1 && q.pow(x, n2 / 2) != 1)
            .unwrap();
        assert_eq!(w, brute);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128(a in 0u64..(1<<61), b in 0u64..(1<<61)) {
            let q = Modulus::new(2305843009213554689).unwrap();
            let (a, b) = (a % q.value(), b % q.value());
            prop_assert_eq!(q.mul(a, b), (a as u128 * b as u128 % q.value() as u128) as u64);
        }

        #[test]
        fn shoup_matches_u128(a in 0u64..(1<<28), w in 0u64..(1<<28)) {
            let q = Modulus::new(268369921).unwrap();
            let (a, w) = (a % q.value(), w % q.value());
            let ws = q.shoup(w);
            prop_assert_eq!(q.mul_shoup(a, w, ws), q.mul(a, w));
        }
    }
}
