//! BFV somewhat homomorphic encryption over the RNS ring.

mod ciphertext;
mod encrypt;
mod eval;
mod keys;
pub mod noise;
mod params;

pub use ciphertext::{check_drop_bound, drop_lsbs, Ciphertext, CompressedCiphertext, Plaintext, PreparedPlaintext};
pub use encrypt::{decrypt, decrypt_unchecked, decrypt_values, encrypt, encrypt_values, noise_budget};
pub use eval::{derive_chain, Evaluator, OpCounts, Tensor};
pub use keys::{keygen, EvaluationKey, KeySwitchKey, SecretKey, CBD_K};
pub use params::{
    Encoding, ParamSpec, SheParams, DEFAULT_MULT, DEFAULT_P, DEFAULT_Q, PIR_T, SEARCH_T, SEARCH_T_ALT,
};
