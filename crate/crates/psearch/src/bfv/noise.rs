//! Static noise accounting. `noise_bits` is log2 of a high-probability bound
//! on the decryption residual ‖c0 + c1·s − round(Q·m/t)‖∞.

use super::keys::CBD_K;
use super::params::SheParams;

/// Tail multiplier for Gaussian-like sums.
pub const Z: f64 = 8.0;

pub fn log2_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (1.0 + (lo - hi).exp2()).log2()
}

pub fn fresh() -> f64 {
    (CBD_K as f64 + 0.5).log2()
}

/// Growth from multiplying by an arbitrary plaintext with coefficients in (−t/2, t/2].
pub fn pt_mult_cost(p: &SheParams) -> f64 {
    (p.t() as f64).log2() + 0.5 * (p.n() as f64).log2() + 2.0
}

/// Additive noise of one hybrid key switch at `level` (absolute value).
pub fn key_switch(p: &SheParams, level: usize) -> f64 {
    let n = p.n() as f64;
    let qmax = p.spec().q[..level].iter().copied().max().unwrap_or(1) as f64;
    let sigma = (CBD_K as f64 / 2.0).sqrt();
    let digits = Z * (level as f64 * n / 12.0).sqrt() * qmax * sigma / p.p_modulus().value() as f64;
    digits + rounding_abs(p)
}

/// Bound on r0 + r1·s for r_i uniform in [−1/2, 1/2], plus one unit of slack.
pub fn rounding_abs(p: &SheParams) -> f64 {
    Z * (p.n() as f64 / 18.0).sqrt() + 2.0
}

/// Growth of a relinearized tensor product of two ciphertexts.
pub fn ct_mult(p: &SheParams, a: f64, b: f64, level: usize) -> f64 {
    let base = log2_add(a, b) + (p.t() as f64).log2() + (p.n() as f64).log2() + 2.0;
    log2_add(base, key_switch_bits(p, level))
}

pub fn key_switch_bits(p: &SheParams, level: usize) -> f64 {
    key_switch(p, level).log2()
}

/// Residual bound contributed by dropping (l0, l1) bits.
pub fn drop_bits(p: &SheParams, l0: u32, l1: u32) -> f64 {
    let n = p.n() as f64;
    let v = (2f64.powi(l0 as i32) + Z * (2.0 * n / 9.0).sqrt() * 2f64.powi(l1 as i32)) / 2.0;
    v.log2()
}
