//! The run configuration file.

use std::path::Path;

use psearch::bfv::{check_drop_bound, PIR_T};
use psearch::dp::PrivacyParams;
use psearch::packing::DbConfig;
use psearch::pir::{pir_params, CuckooConfig, CuckooVariant, DEFAULT_EXPANSION, DEFAULT_GAMMA, DEFAULT_MAX_KICKS};
use psearch::simnet::EpochConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    /// Δ, clusters probed per query.
    pub delta: usize,
    pub topk: usize,
    pub drop_l0: u32,
    pub drop_l1: u32,
    /// Largest per-entry metadata returned inline.
    pub metadata_threshold: usize,
    /// Top results whose metadata the client fetches.
    pub fetch: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { delta: 1, topk: 100, drop_l0: 9, drop_l1: 0, metadata_threshold: 64, fetch: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PirSection {
    pub n: usize,
    pub t: u64,
    pub gamma: f64,
    pub expansion: f64,
    pub variant: CuckooVariant,
    pub max_kicks: usize,
}

impl Default for PirSection {
    fn default() -> Self {
        PirSection {
            n: 4096,
            t: PIR_T,
            gamma: DEFAULT_GAMMA,
            expansion: DEFAULT_EXPANSION,
            variant: CuckooVariant::OneHashSplit,
            max_kicks: DEFAULT_MAX_KICKS,
        }
    }
}

impl PirSection {
    pub fn cuckoo(&self) -> CuckooConfig {
        CuckooConfig { variant: self.variant, expansion: self.expansion, max_kicks: self.max_kicks }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub entries: usize,
    pub blobs: usize,
    pub spread: f64,
    pub queries: usize,
    pub query_noise: f64,
    /// Metadata lengths are uniform in [min, max] bytes.
    pub metadata_min: usize,
    pub metadata_max: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            entries: 1000,
            blobs: 16,
            spread: 0.6,
            queries: 20,
            query_noise: 0.1,
            metadata_min: 16,
            metadata_max: 160,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    /// Monte-Carlo draws for the sampler check; 0 skips it.
    pub draws: usize,
    /// A published total δ to compare the composed value against.
    pub claimed_total_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub iters: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { iters: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub database: DbConfig,
    pub search: SearchConfig,
    pub privacy: PrivacyParams,
    pub epoch: EpochConfig,
    pub pir: PirSection,
    pub synthetic: SyntheticConfig,
    pub audit: AuditSection,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            database: DbConfig::default(),
            search: SearchConfig::default(),
            privacy: PrivacyParams::default(),
            epoch: EpochConfig::default(),
            pir: PirSection::default(),
            synthetic: SyntheticConfig::default(),
            audit: AuditSection { draws: 0, claimed_total_delta: Some(2f64.powi(-26)) },
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
            }
        }
    }

    /// Applies the command-line seed; the database seed follows the run seed.
    pub fn resolve(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.database.seed = self.seed;
        self
    }

    /// Every cross-field problem at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errs = Vec::new();
        if let Err(e) = self.database.validate() {
            errs.push(format!("database: {e}"));
        }
        if let Ok(params) = self.database.she_params() {
            for p in &params {
                if let Err(e) = check_drop_bound(p, self.search.drop_l0, self.search.drop_l1) {
                    errs.push(format!("search: {e} at t = {}", p.t()));
                }
            }
        }
        if self.search.delta == 0 || self.search.delta > self.database.k {
            errs.push(format!("search: Δ = {} must lie in [1, K = {}]", self.search.delta, self.database.k));
        }
        if let Err(e) = self.privacy.validate() {
            errs.push(format!("privacy: {e}"));
        }
        if let Err(e) = self.epoch.validate() {
            errs.push(format!("epoch: {e}"));
        }
        if let Err(e) = pir_params(self.pir.n, self.pir.t) {
            errs.push(format!("pir: {e}"));
        }
        if self.pir.gamma.is_nan() || self.pir.gamma <= 0.0 || self.pir.expansion.is_nan() || self.pir.expansion < DEFAULT_EXPANSION {
            errs.push(format!("pir: need γ > 0 and expansion ≥ {DEFAULT_EXPANSION}"));
        }
        let s = &self.synthetic;
        if s.entries == 0 || s.blobs == 0 || s.metadata_min > s.metadata_max {
            errs.push("synthetic: need entries ≥ 1, blobs ≥ 1 and metadata_min ≤ metadata_max".into());
        }
        if self.bench.iters == 0 {
            errs.push("bench: iters must be ≥ 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(errs.join("\n")))
        }
    }
}
