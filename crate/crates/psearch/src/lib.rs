//! Private nearest-neighbor search: RNS-BFV, cluster-packed encrypted scoring,
//! distributed differential privacy with fake queries, keyword PIR, and an
//! epoch simulator.

pub mod bfv;
pub mod cluster;
pub mod dp;
pub mod encsearch;
pub mod error;
pub mod packing;
pub mod pir;
pub mod par;
pub mod ring;
pub mod simnet;

pub use error::{Error, Result};
