use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{pack_cluster, ClusterCube, CubeShape, ScoreModuli};
use crate::bfv::{Encoding, ParamSpec, Plaintext, SheParams};
use crate::cluster::{kmeans, scale_signed, Codebook, Embeddings, FixedPointParams};
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::ring::{RingPoly, RnsBasis};

const CUBE_MAGIC: &[u8; 4] = b"WCUB";
const META_MAGIC: &[u8; 4] = b"WMET";

/// Server-side build parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DbConfig {
    pub n: usize,
    pub d: usize,
    /// One plaintext modulus, or two for the plaintext CRT.
    pub moduli: Vec<u64>,
    /// Fixed-point scale; 0 picks the largest admissible power of two.
    pub scale: u64,
    pub k: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl Default for DbConfig {
    fn default() -> Self {
        DbConfig {
            n: 4096,
            d: 192,
            moduli: vec![crate::bfv::SEARCH_T, crate::bfv::SEARCH_T_ALT],
            scale: 0,
            k: 8,
            kmeans_iters: 25,
            seed: 1,
        }
    }
}

impl DbConfig {
    pub fn score_moduli(&self) -> Result<ScoreModuli> {
        ScoreModuli::new(self.moduli.clone())
    }

    pub fn fixed_point(&self) -> Result<FixedPointParams> {
        let t = self.score_moduli()?.product();
        let t = u64::try_from(t).map_err(|_| Error::InvalidParams("plaintext modulus product exceeds 64 bits".into()))?;
        if self.scale == 0 {
            FixedPointParams::max_for(t, self.d)
        } else {
            FixedPointParams::new(self.scale, t, self.d)
        }
    }

    /// One batching parameter set per plaintext modulus; all share Q and P.
    pub fn she_params(&self) -> Result<Vec<Arc<SheParams>>> {
        self.moduli
            .iter()
            .map(|&t| SheParams::new(ParamSpec::with_t(self.n, t, Encoding::Batch)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        CubeShape::standard(self.n, self.d)?;
        self.fixed_point()?;
        self.she_params()?;
        if self.k == 0 {
            return Err(Error::InvalidParams("K must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// The server's encoded clusters, codebook and per-entry metadata.
#[derive(Clone, Debug)]
pub struct EncodedDatabase {
    pub config: DbConfig,
    pub fixed: FixedPointParams,
    pub codebook: Codebook,
    /// Cubes of each cluster (usually one).
    pub cubes: Vec<Vec<ClusterCube>>,
    pub metadata: Vec<Vec<u8>>,
    she: Vec<Arc<SheParams>>,
}

impl PartialEq for EncodedDatabase {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.fixed == o.fixed
            && self.codebook.centroids == o.codebook.centroids
            && self.codebook.assignment == o.codebook.assignment
            && self.cubes == o.cubes
            && self.metadata == o.metadata
    }
}

/// Clusters `emb`, scales every entry and packs each cluster.
pub fn server_init(emb: &Embeddings, metadata: Vec<Vec<u8>>, cfg: &DbConfig, exec: Exec) -> Result<EncodedDatabase> {
    cfg.validate()?;
    if emb.dim() != cfg.d {
        return Err(Error::Dimension { expected: cfg.d, got: emb.dim() });
    }
    if metadata.len() != emb.len() {
        return Err(Error::Dimension { expected: emb.len(), got: metadata.len() });
    }
    let fixed = cfg.fixed_point()?;
    let codebook = kmeans(emb, cfg.k, cfg.kmeans_iters, cfg.seed, exec)?;
    let members = codebook.members();
    let built: Vec<Result<Vec<ClusterCube>>> = exec.map_range(cfg.k, |c| {
        let entries = members[c]
            .iter()
            .map(|&i| Ok((i as u32, scale_signed(emb.row(i), &fixed)?)))
            .collect::<Result<Vec<_>>>()?;
        pack_cluster(c as u32, cfg.n, cfg.d, &entries)
    });
    let cubes = built.into_iter().collect::<Result<Vec<_>>>()?;
    EncodedDatabase::assemble(cfg.clone(), fixed, codebook, cubes, metadata)
}

impl EncodedDatabase {
    fn assemble(
        config: DbConfig,
        fixed: FixedPointParams,
        codebook: Codebook,
        mut cubes: Vec<Vec<ClusterCube>>,
        metadata: Vec<Vec<u8>>,
    ) -> Result<Self> {
        let she = config.she_params()?;
        for c in cubes.iter_mut().flatten() {
            c.enable_cache(she.len());
        }
        Ok(EncodedDatabase { config, fixed, codebook, cubes, metadata, she })
    }

    pub fn k(&self) -> usize {
        self.cubes.len()
    }

    pub fn she(&self) -> &[Arc<SheParams>] {
        &self.she
    }

    pub fn score_moduli(&self) -> ScoreModuli {
        self.config.score_moduli().expect("validated at build")
    }

    /// Rotation steps a query key must hold: 1 and g.
    pub fn rotation_steps(&self) -> [i64; 2] {
        let s = CubeShape::standard(self.config.n, self.config.d).expect("validated at build");
        [1, s.g as i64]
    }

    pub fn cluster_entries(&self, c: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.cubes[c].iter().flat_map(|k| k.slots.iter().map(|&(_, e)| e as usize)).collect();
        v.sort_unstable();
        v
    }

    /// Members' metadata as (entry u32, len u32, bytes)*.
    pub fn cluster_metadata(&self, c: usize) -> Vec<u8> {
        let mut out = Vec::new();
        for e in self.cluster_entries(c) {
            out.extend_from_slice(&(e as u32).to_le_bytes());
            out.extend_from_slice(&(self.metadata[e].len() as u32).to_le_bytes());
            out.extend_from_slice(&self.metadata[e]);
        }
        out
    }

    pub fn parse_cluster_metadata(mut b: &[u8]) -> Result<Vec<(usize, Vec<u8>)>> {
        let mut out = Vec::new();
        while !b.is_empty() {
            if b.len() < 8 {
                return Err(Error::Malformed("truncated metadata record"));
            }
            let e = u32::from_le_bytes(b[..4].try_into().unwrap()) as usize;
            let len = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
            if b.len() < 8 + len {
                return Err(Error::Malformed("truncated metadata body"));
            }
            out.push((e, b[8..8 + len].to_vec()));
            b = &b[8 + len..];
        }
        Ok(out)
    }

    /// Writes params.json, codebook.bin, one cube file per cube and one
    /// metadata file per cluster.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let params = serde_json::to_vec_pretty(&self.config).map_err(|e| Error::Usage(e.to_string()))?;
        fs::write(dir.join("params.json"), params)?;
        fs::write(dir.join("codebook.bin"), self.codebook.to_bytes())?;
        for (c, cubes) in self.cubes.iter().enumerate() {
            for cube in cubes {
                fs::write(dir.join(format!("cube_{c:05}_{}.bin", cube.part)), self.cube_bytes(cube)?)?;
            }
            let mut meta = META_MAGIC.to_vec();
            meta.extend_from_slice(&self.cluster_metadata(c));
            fs::write(dir.join(format!("meta_{c:05}.bin")), meta)?;
        }
        Ok(())
    }

    fn cube_bytes(&self, cube: &ClusterCube) -> Result<Vec<u8>> {
        let mut v = CUBE_MAGIC.to_vec();
        v.extend_from_slice(&1u16.to_le_bytes());
        for x in [cube.cluster, cube.part, cube.shape.n as u32, cube.shape.d as u32, cube.shape.g as u32, cube.shape.h as u32] {
            v.extend_from_slice(&x.to_le_bytes());
        }
        v.extend_from_slice(&(cube.slots.len() as u32).to_le_bytes());
        for &(s, e) in &cube.slots {
            v.extend_from_slice(&s.to_le_bytes());
            v.extend_from_slice(&e.to_le_bytes());
        }
        v.push(self.she.len() as u8);
        for p in &self.she {
            let basis = RnsBasis::new(p.n(), &[p.t()])?;
            for pt in cube.plaintexts(p)? {
                match pt {
                    None => v.push(0),
                    Some(pt) => {
                        v.push(1);
                        pt.to_ring_poly(&basis)?.write_bytes(&mut v);
                    }
                }
            }
        }
        Ok(v)
    }

    fn cube_from_bytes(&self, b: &[u8]) -> Result<ClusterCube> {
        let mut r = crate::ring::Reader::new(b);
        if r.take(4)? != CUBE_MAGIC || r.u16()? != 1 {
            return Err(Error::Malformed("bad cube header"));
        }
        let mut h = [0u32; 6];
        for x in h.iter_mut() {
            *x = r.u32()?;
        }
        let shape = CubeShape::new(h[2] as usize, h[3] as usize, h[4] as usize, h[5] as usize)?;
        let count = r.u32()? as usize;
        let mut slots = Vec::with_capacity(count);
        for _ in 0..count {
            slots.push((r.u32()?, r.u32()?));
        }
        let residues = r.u8()? as usize;
        if residues != self.she.len() {
            return Err(Error::Malformed("cube residue count"));
        }
        let mut per: Vec<Vec<Option<Vec<u64>>>> = Vec::with_capacity(residues);
        for p in &self.she {
            let basis = RnsBasis::new(p.n(), &[p.t()])?;
            let mut diags = Vec::with_capacity(shape.offsets());
            for _ in 0..shape.offsets() {
                match r.u8()? {
                    0 => diags.push(None),
                    1 => {
                        let (poly, used) = RingPoly::from_bytes_with(&basis, r.rest())?;
                        r.take(used)?;
                        diags.push(Some(Plaintext::from_ring_poly(&poly)?.decode(p)));
                    }
                    _ => return Err(Error::Malformed("cube diagonal flag")),
                }
            }
            per.push(diags);
        }
        if !r.done() {
            return Err(Error::Malformed("trailing bytes in cube file"));
        }
        let sm = self.score_moduli();
        let mut diagonals = Vec::with_capacity(shape.offsets());
        for i in 0..shape.offsets() {
            if per.iter().all(|d| d[i].is_none()) {
                diagonals.push(Vec::new());
            } else {
                let res: Vec<Vec<u64>> = per
                    .iter()
                    .map(|d| d[i].clone().unwrap_or_else(|| vec![0; shape.n]))
                    .collect();
                diagonals.push(sm.combine(&res)?);
            }
        }
        ClusterCube::from_parts(h[0], h[1], shape, slots, diagonals)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cfg: DbConfig = serde_json::from_slice(&fs::read(dir.join("params.json"))?)
            .map_err(|e| Error::Usage(format!("params.json: {e}")))?;
        cfg.validate()?;
        let codebook = Codebook::from_bytes(&fs::read(dir.join("codebook.bin"))?)?;
        if codebook.k() != cfg.k {
            return Err(Error::Malformed("codebook size differs from K"));
        }
        let fixed = cfg.fixed_point()?;
        let n_entries = codebook.assignment.len();
        let mut db = EncodedDatabase::assemble(cfg.clone(), fixed, codebook, Vec::new(), vec![Vec::new(); n_entries])?;
        let mut cubes = Vec::with_capacity(cfg.k);
        for c in 0..cfg.k {
            let mut parts = Vec::new();
            for part in 0.. {
                let path = dir.join(format!("cube_{c:05}_{part}.bin"));
                if !path.exists() {
                    break;
                }
                let mut cube = db.cube_from_bytes(&fs::read(path)?)?;
                cube.enable_cache(db.she.len());
                parts.push(cube);
            }
            if parts.is_empty() {
                return Err(Error::Malformed("cluster without cube file"));
            }
            let meta = fs::read(dir.join(format!("meta_{c:05}.bin")))?;
            if meta.get(..4) != Some(META_MAGIC.as_slice()) {
                return Err(Error::Malformed("bad metadata magic"));
            }
            for (e, m) in Self::parse_cluster_metadata(&meta[4..])? {
                *db.metadata.get_mut(e).ok_or(Error::Malformed("metadata entry out of range"))? = m;
            }
            cubes.push(parts);
        }
        db.cubes = cubes;
        Ok(db)
    }
}
