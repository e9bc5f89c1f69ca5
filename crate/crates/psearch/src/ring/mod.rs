//! Modular polynomial arithmetic in Z_Q[X]/(X^n+1) under an RNS decomposition.

mod convert;
mod modulus;
mod ntt;
mod poly;

pub use convert::{fast_base_convert, BaseConverter};
pub use modulus::{is_prime, primes_below, Modulus};
pub use ntt::{bit_reverse, NttTable};
pub use poly::{eval_automorphism_perm, Form, PolyOp, RingPoly, RnsBasis};
pub(crate) use poly::Reader;
