//! Diagonal packing of clusters into plaintext slot vectors with baby-step /
//! giant-step pre-rotation, query packing, and plaintext-CRT residues.
//!
//! Slots form two rows of n/2; a rotation by k moves every row left by k.
//! The query occupies the flat slot vector as ⌊n/d⌋ back-to-back copies, so
//! the copy pattern breaks where a row wraps. An entry placed at slot x gets
//! its score from offsets i ∈ [0, g·h): for each query symbol m the first
//! offset whose rotated query shows m at x carries coordinate m of the entry.
//! Slots that cannot see all d symbols within g·h offsets stay unused; the
//! giant-step count h is raised per cluster when that buys a single cube.

use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::bfv::{Plaintext, PreparedPlaintext, SheParams};
use crate::error::{Error, Result};

mod database;
pub use database::{server_init, DbConfig, EncodedDatabase};

/// Baby-step count ⌈√d⌉.
pub fn baby_steps(d: usize) -> usize {
    let mut g = (d as f64).sqrt() as usize;
    while g * g < d {
        g += 1;
    }
    while g > 1 && (g - 1) * (g - 1) >= d {
        g -= 1;
    }
    g.max(1)
}

/// Geometry of one cube: ring degree, dimension and the BSGS split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CubeShape {
    pub n: usize,
    pub d: usize,
    pub g: usize,
    pub h: usize,
}

impl CubeShape {
    pub fn new(n: usize, d: usize, g: usize, h: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::InvalidParams(format!("ring degree {n} must be a power of two ≥ 4")));
        }
        if d == 0 || d > n / 2 {
            return Err(Error::InvalidParams(format!("d = {d} exceeds a slot row of {}", n / 2)));
        }
        if g == 0 || g * h < d {
            return Err(Error::InvalidParams(format!("g·h = {} must cover d = {d}", g * h)));
        }
        Ok(CubeShape { n, d, g, h })
    }

    /// The standard split g = ⌈√d⌉, h = ⌈d/g⌉.
    pub fn standard(n: usize, d: usize) -> Result<Self> {
        let g = baby_steps(d.max(1));
        Self::new(n, d, g, d.div_ceil(g))
    }

    pub fn row(&self) -> usize {
        self.n / 2
    }

    pub fn offsets(&self) -> usize {
        self.g * self.h
    }

    /// Key-switched rotations for `cubes` cubes sharing the baby steps.
    pub fn rotations(&self, cubes: usize) -> usize {
        (self.g - 1) + cubes * (self.h - 1)
    }

    /// Query symbol visible at flat slot `s`, if any.
    pub fn query_symbol(&self, s: usize) -> Option<usize> {
        (s < (self.n / self.d) * self.d).then_some(s % self.d)
    }
}

/// A usable slot and, per query symbol, the offset that carries it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Position {
    pub slot: usize,
    pub offsets: Vec<u16>,
}

/// All usable slots of a cube shape in increasing slot order.
pub fn positions(shape: &CubeShape) -> Vec<Position> {
    let row = shape.row();
    let span = shape.offsets();
    let mut out = Vec::new();
    let mut first = vec![u16::MAX; shape.d];
    for r in 0..2 {
        for c in 0..row {
            first.iter_mut().for_each(|f| *f = u16::MAX);
            let mut seen = 0;
            for i in 0..span.min(row) {
                if let Some(m) = shape.query_symbol(r * row + (c + i) % row) {
                    if first[m] == u16::MAX {
                        first[m] = i as u16;
                        seen += 1;
                        if seen == shape.d {
                            break;
                        }
                    }
                }
            }
            if seen == shape.d {
                out.push(Position { slot: r * row + c, offsets: first.clone() });
            }
        }
    }
    out
}

pub fn capacity(shape: &CubeShape) -> usize {
    positions(shape).len()
}

/// Picks h ≥ ⌈d/g⌉ and a cube count for a cluster of `size` entries,
/// minimizing key-switched rotations (ties to fewer cubes, then smaller h).
pub fn plan_cluster(n: usize, d: usize, size: usize) -> Result<(CubeShape, usize)> {
    let base = CubeShape::standard(n, d)?;
    if size == 0 {
        return Ok((base, 1));
    }
    let h_max = base.row().div_ceil(base.g).max(base.h);
    let mut best: Option<(usize, usize, CubeShape)> = None;
    let mut last_cap = 0;
    for h in base.h..=h_max {
        let shape = CubeShape { h, ..base };
        let cap = capacity(&shape);
        if cap == 0 || (cap == last_cap && best.is_some()) {
            continue;
        }
        last_cap = cap;
        let cubes = size.div_ceil(cap);
        let cost = shape.rotations(cubes);
        if best.as_ref().is_none_or(|&(bc, bn, _)| (cost, cubes) < (bc, bn)) {
            best = Some((cost, cubes, shape));
        }
        if cap >= size {
            break;
        }
    }
    let (_, cubes, shape) = best.ok_or_else(|| Error::InvalidParams("no usable slot layout".into()))?;
    Ok((shape, cubes))
}

/// Left rotation of each slot row by `k` (negative = right).
pub fn rotate_slots<T: Copy + Default>(v: &[T], k: i64) -> Vec<T> {
    let row = v.len() / 2;
    let k = k.rem_euclid(row as i64) as usize;
    let mut out = vec![T::default(); v.len()];
    for r in 0..2 {
        for c in 0..row {
            out[r * row + c] = v[r * row + (c + k) % row];
        }
    }
    out
}

/// ⌊n/d⌋ copies of `q` followed by zeros.
pub fn pack_query(q: &[u64], n: usize, d: usize) -> Result<Vec<u64>> {
    if q.len() != d || d == 0 || d > n {
        return Err(Error::Dimension { expected: d, got: q.len() });
    }
    let mut v = vec![0u64; n];
    for (s, x) in v.iter_mut().enumerate().take((n / d) * d) {
        *x = q[s % d];
    }
    Ok(v)
}

/// Slot-wise signed values mapped into Z_t.
pub fn signed_mod(v: &[i64], t: u64) -> Vec<u64> {
    v.iter().map(|&x| x.rem_euclid(t as i64) as u64).collect()
}

/// Residues of a value vector under each plaintext modulus, and the signed
/// CRT lift back to (−T/2, T/2] with T the product.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ScoreModuli {
    moduli: Vec<u64>,
}

impl ScoreModuli {
    pub fn new(moduli: Vec<u64>) -> Result<Self> {
        if moduli.is_empty() || moduli.iter().any(|&m| m < 2) {
            return Err(Error::InvalidParams("plaintext moduli must be ≥ 2".into()));
        }
        for i in 0..moduli.len() {
            for j in 0..i {
                if moduli[i].gcd(&moduli[j]) != 1 {
                    return Err(Error::InvalidParams(format!(
                        "plaintext moduli {} and {} are not coprime",
                        moduli[j], moduli[i]
                    )));
                }
            }
        }
        Ok(ScoreModuli { moduli })
    }

    pub fn single(t: u64) -> Self {
        ScoreModuli { moduli: vec![t] }
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    pub fn product(&self) -> u128 {
        self.moduli.iter().map(|&m| m as u128).product()
    }

    pub fn split(&self, v: &[i64]) -> Vec<Vec<u64>> {
        self.moduli.iter().map(|&t| signed_mod(v, t)).collect()
    }

    /// Signed CRT reconstruction of slot-aligned residue vectors.
    pub fn combine(&self, residues: &[Vec<u64>]) -> Result<Vec<i64>> {
        if residues.len() != self.moduli.len() {
            return Err(Error::Dimension { expected: self.moduli.len(), got: residues.len() });
        }
        let len = residues[0].len();
        if residues.iter().any(|r| r.len() != len) {
            return Err(Error::Usage("residue vectors differ in length".into()));
        }
        let big_t = BigInt::from(self.product());
        // CRT basis e_i ≡ 1 mod t_i, ≡ 0 mod t_j
        let basis: Vec<BigInt> = self
            .moduli
            .iter()
            .map(|&ti| {
                let ti = BigInt::from(ti);
                let rest = &big_t / &ti;
                let inv = mod_inverse(&(&rest % &ti), &ti);
                rest * inv
            })
            .collect();
        let half = &big_t / 2;
        Ok((0..len)
            .map(|k| {
                let mut x = BigInt::zero();
                for (r, e) in residues.iter().zip(&basis) {
                    x += BigInt::from(r[k]) * e;
                }
                x = x.mod_floor(&big_t);
                if x > half {
                    x -= &big_t;
                }
                x.to_i64().expect("product below 2^63")
            })
            .collect())
    }

    /// Signed lift of a single residue vector (no CRT).
    pub fn lift(t: u64, v: &[u64]) -> Vec<i64> {
        v.iter()
            .map(|&x| if x > t / 2 { x as i64 - t as i64 } else { x as i64 })
            .collect()
    }
}

fn mod_inverse(a: &BigInt, m: &BigInt) -> BigInt {
    let e = a.extended_gcd(m);
    debug_assert!(e.gcd.is_one());
    e.x.mod_floor(m)
}

/// One cube of a cluster: the slot assignment and the g·h pre-rotated
/// diagonal slot vectors (empty vector = all zero).
#[derive(Debug)]
pub struct ClusterCube {
    pub cluster: u32,
    pub part: u32,
    pub shape: CubeShape,
    /// (slot, global entry index) in slot order.
    pub slots: Vec<(u32, u32)>,
    diagonals: Vec<Vec<i64>>,
    prepared: Vec<OnceLock<Arc<Vec<Option<PreparedPlaintext>>>>>,
}

impl Clone for ClusterCube {
    fn clone(&self) -> Self {
        ClusterCube {
            cluster: self.cluster,
            part: self.part,
            shape: self.shape,
            slots: self.slots.clone(),
            diagonals: self.diagonals.clone(),
            prepared: Vec::new(),
        }
    }
}

impl PartialEq for ClusterCube {
    fn eq(&self, o: &Self) -> bool {
        self.cluster == o.cluster
            && self.part == o.part
            && self.shape == o.shape
            && self.slots == o.slots
            && self.diagonals == o.diagonals
    }
}

impl ClusterCube {
    /// Lays out `entries` (global index, scaled embedding) on the first usable slots.
    pub fn build(cluster: u32, part: u32, shape: CubeShape, pos: &[Position], entries: &[(u32, Vec<i64>)]) -> Result<Self> {
        if entries.len() > pos.len() {
            return Err(Error::InvalidParams(format!(
                "{} entries exceed cube capacity {}",
                entries.len(),
                pos.len()
            )));
        }
        let n = shape.n;
        let mut diag = vec![vec![0i64; n]; shape.offsets()];
        let mut slots = Vec::with_capacity(entries.len());
        for ((idx, e), p) in entries.iter().zip(pos) {
            if e.len() != shape.d {
                return Err(Error::Dimension { expected: shape.d, got: e.len() });
            }
            for (m, &i) in p.offsets.iter().enumerate() {
                diag[i as usize][p.slot] = e[m];
            }
            slots.push((p.slot as u32, *idx));
        }
        // giant index k = i / g is pre-rotated right by g·k
        let diagonals = diag
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                if v.iter().all(|&x| x == 0) {
                    Vec::new()
                } else {
                    rotate_slots(&v, -((i / shape.g * shape.g) as i64))
                }
            })
            .collect();
        Ok(ClusterCube { cluster, part, shape, slots, diagonals, prepared: Vec::new() })
    }

    pub fn diagonal(&self, i: usize) -> Option<&[i64]> {
        let v = &self.diagonals[i];
        (!v.is_empty()).then_some(v.as_slice())
    }

    pub fn nonzero_diagonals(&self) -> usize {
        self.diagonals.iter().filter(|v| !v.is_empty()).count()
    }

    pub(crate) fn from_parts(
        cluster: u32,
        part: u32,
        shape: CubeShape,
        slots: Vec<(u32, u32)>,
        diagonals: Vec<Vec<i64>>,
    ) -> Result<Self> {
        if diagonals.len() != shape.offsets() || diagonals.iter().any(|v| !v.is_empty() && v.len() != shape.n) {
            return Err(Error::Malformed("cube diagonal shape"));
        }
        Ok(ClusterCube { cluster, part, shape, slots, diagonals, prepared: Vec::new() })
    }

    /// Diagonal plaintexts under one plaintext modulus (None = zero).
    pub fn plaintexts(&self, params: &SheParams) -> Result<Vec<Option<Plaintext>>> {
        self.diagonals
            .iter()
            .map(|v| {
                if v.is_empty() {
                    Ok(None)
                } else {
                    Plaintext::encode(params, &signed_mod(v, params.t())).map(Some)
                }
            })
            .collect()
    }

    /// Cached evaluation-form diagonals for residue `r` at the top level.
    pub fn prepared(&self, r: usize, params: &SheParams) -> Result<Arc<Vec<Option<PreparedPlaintext>>>> {
        if r >= self.prepared.len() {
            return self.prepare_uncached(params).map(Arc::new);
        }
        if let Some(p) = self.prepared[r].get() {
            return Ok(p.clone());
        }
        let p = Arc::new(self.prepare_uncached(params)?);
        Ok(self.prepared[r].get_or_init(|| p).clone())
    }

    fn prepare_uncached(&self, params: &SheParams) -> Result<Vec<Option<PreparedPlaintext>>> {
        let top = params.max_level();
        Ok(self
            .plaintexts(params)?
            .into_iter()
            .map(|p| p.map(|p| p.prepare(params, top)))
            .collect())
    }

    /// Enables caching for `residues` plaintext moduli.
    pub fn enable_cache(&mut self, residues: usize) {
        self.prepared = (0..residues).map(|_| OnceLock::new()).collect();
    }

    /// The BSGS pipeline on cleartext slot vectors mod t.
    pub fn simulate(&self, query_slots: &[u64], t: u64) -> Vec<u64> {
        let (g, h) = (self.shape.g, self.shape.h);
        let baby: Vec<Vec<u64>> = (0..g).map(|j| rotate_slots(query_slots, j as i64)).collect();
        let giant = |k: usize| -> Vec<u64> {
            let mut s = vec![0u64; query_slots.len()];
            for (j, b) in baby.iter().enumerate() {
                if let Some(dv) = self.diagonal(j + g * k) {
                    for ((acc, &x), &y) in s.iter_mut().zip(b).zip(dv) {
                        *acc = ((*acc as u128 + x as u128 * y.rem_euclid(t as i64) as u128) % t as u128) as u64;
                    }
                }
            }
            s
        };
        let mut r = giant(h - 1);
        for k in (0..h - 1).rev() {
            let s = giant(k);
            r = rotate_slots(&r, g as i64)
                .iter()
                .zip(&s)
                .map(|(a, b)| (a + b) % t)
                .collect();
        }
        r
    }

    /// (entry, value) pairs read from a decoded score slot vector.
    pub fn read_scores<T: Copy>(&self, slots: &[T]) -> Vec<(usize, T)> {
        self.slots.iter().map(|&(s, e)| (e as usize, slots[s as usize])).collect()
    }
}

/// Splits a cluster's entries over cubes per `plan_cluster`.
pub fn pack_cluster(cluster: u32, n: usize, d: usize, entries: &[(u32, Vec<i64>)]) -> Result<Vec<ClusterCube>> {
    let (shape, cubes) = plan_cluster(n, d, entries.len())?;
    let pos = positions(&shape);
    let per = pos.len();
    if entries.is_empty() {
        return Ok(vec![ClusterCube::build(cluster, 0, shape, &pos, &[])?]);
    }
    (0..cubes)
        .map(|c| {
            let chunk = &entries[c * per..((c + 1) * per).min(entries.len())];
            ClusterCube::build(cluster, c as u32, shape, &pos, chunk)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_entries(rng: &mut impl Rng, count: usize, d: usize, amp: i64) -> Vec<(u32, Vec<i64>)> {
        (0..count)
            .map(|i| (i as u32 * 3 + 1, (0..d).map(|_| rng.random_range(-amp..=amp)).collect()))
            .collect()
    }

    fn check_cube(cube: &ClusterCube, entries: &[(u32, Vec<i64>)], q: &[i64], t: u64) {
        let qs = pack_query(&signed_mod(q, t), cube.shape.n, cube.shape.d).unwrap();
        let out = cube.simulate(&qs, t);
        let got = ScoreModuli::lift(t, &out);
        let scores = cube.read_scores(&got);
        assert_eq!(scores.len(), entries.len().min(scores.len()));
        for (e, s) in scores {
            let (_, emb) = entries.iter().find(|(i, _)| *i as usize == e).unwrap();
            let want: i64 = emb.iter().zip(q).map(|(a, b)| a * b).sum();
            assert_eq!(s, want, "entry {e}");
        }
    }

    #[test]
    fn baby_step_values() {
        assert_eq!(baby_steps(192), 14);
        assert_eq!(baby_steps(196), 14);
        assert_eq!(baby_steps(197), 15);
        assert_eq!(baby_steps(4), 2);
        assert_eq!(baby_steps(1), 1);
        let s = CubeShape::standard(4096, 192).unwrap();
        assert_eq!((s.g, s.h), (14, 14));
    }

    #[test]
    fn shape_errors() {
        assert!(CubeShape::standard(100, 4).is_err());
        assert!(CubeShape::standard(16, 16).is_err());
        assert!(CubeShape::standard(16, 0).is_err());
        assert!(CubeShape::new(16, 4, 2, 1).is_err());
    }

    #[test]
    fn full_slice_layout_is_the_diagonal() {
        // n = 8 slots in two rows of 4, d = 4: one slice per row
        let shape = CubeShape::new(8, 4, 4, 1).unwrap();
        let pos = positions(&shape);
        assert_eq!(pos.len(), 8);
        let entries: Vec<(u32, Vec<i64>)> = (0..8).map(|i| (i, (0..4).map(|m| (10 * i + m) as i64).collect())).collect();
        let cube = ClusterCube::build(0, 0, shape, &pos, &entries).unwrap();
        // diagonal j, slot x carries coordinate (x + j) mod d of the entry at x
        for j in 0..4 {
            let dj = cube.diagonal(j).unwrap();
            for x in 0..8 {
                assert_eq!(dj[x], (10 * x + (x + j) % 4) as i64);
            }
        }
    }

    #[test]
    fn toy_two_slice_layout_by_hand() {
        // n = 16 (rows of 8), d = 4, one cluster of 8 entries: slots 0..8 hold
        // both slices of row 0; diagonal j holds entry x's coordinate (x+j) mod 4
        let shape = CubeShape::new(16, 4, 2, 2).unwrap();
        let pos = positions(&shape);
        assert_eq!(pos.len(), 16);
        let entries: Vec<(u32, Vec<i64>)> = (0..8).map(|i| (i, vec![i as i64 * 4, i as i64 * 4 + 1, i as i64 * 4 + 2, i as i64 * 4 + 3])).collect();
        let cube = ClusterCube::build(0, 0, shape, &pos, &entries).unwrap();
        assert_eq!(cube.slots, (0..8).map(|i| (i, i)).collect::<Vec<_>>());
        for j in 0..4 {
            // undo the giant-step pre-rotation
            let raw = rotate_slots(cube.diagonal(j).unwrap(), (j / 2 * 2) as i64);
            for x in 0..8 {
                assert_eq!(raw[x], (4 * x + (x + j) % 4) as i64, "diag {j} slot {x}");
            }
            assert!(raw[8..].iter().all(|&v| v == 0));
        }
        let q = [1i64, -2, 3, 5];
        check_cube(&cube, &entries, &q, 65537);
    }

    #[test]
    fn deployed_shape_capacity() {
        let s = CubeShape::standard(4096, 192).unwrap();
        assert_eq!(4096 / 192 * 192, 4032);
        // a single 14×14 cube cannot reach the 4032-entry flat bound
        assert_eq!(capacity(&s), 3658);
        let (shape, cubes) = plan_cluster(4096, 192, 4032).unwrap();
        assert_eq!(cubes, 1);
        assert_eq!(shape.h, 23);
        assert_eq!(shape.rotations(1), 35);
        let (shape, cubes) = plan_cluster(4096, 192, 3000).unwrap();
        assert_eq!((shape.h, cubes, shape.rotations(1)), (14, 1, 26));
        let (_, cubes) = plan_cluster(4096, 192, 9000).unwrap();
        assert!(cubes >= 3);
    }

    #[test]
    fn pack_query_layout() {
        assert_eq!(pack_query(&[0; 4], 16, 4).unwrap(), vec![0; 16]);
        let v = pack_query(&[1, 2, 3, 4], 16, 4).unwrap();
        assert_eq!(v, [1, 2, 3, 4].repeat(4));
        let q: Vec<u64> = (0..192).map(|i| i * 7 % 101).collect();
        let v = pack_query(&q, 4096, 192).unwrap();
        for (i, &x) in v.iter().enumerate() {
            assert_eq!(x, if i < 4032 { q[i % 192] } else { 0 });
        }
        assert!(pack_query(&[1, 2], 16, 4).is_err());
    }

    #[test]
    fn exhaustive_small_layouts() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for n in [8usize, 16, 32, 64] {
            let mut d = 1;
            while d <= n / 2 {
                let base = CubeShape::standard(n, d).unwrap();
                for h in base.h..=base.h + 3 {
                    let shape = CubeShape { h, ..base };
                    let pos = positions(&shape);
                    let entries = random_entries(&mut rng, pos.len(), d, 5);
                    let cube = ClusterCube::build(0, 0, shape, &pos, &entries).unwrap();
                    let q: Vec<i64> = (0..d).map(|_| rng.random_range(-5..=5)).collect();
                    check_cube(&cube, &entries, &q, 65537);
                }
                d += 1;
            }
        }
    }

    #[test]
    fn deployed_shape_spot_check() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let entries = random_entries(&mut rng, 4032, 192, 128);
        let cubes = pack_cluster(0, 4096, 192, &entries).unwrap();
        assert_eq!(cubes.len(), 1);
        assert_eq!(cubes[0].slots.len(), 4032);
        let q: Vec<i64> = (0..192).map(|_| rng.random_range(-128..=128)).collect();
        let t = 40961u64 * 65537;
        check_cube(&cubes[0], &entries, &q, t);
    }

    #[test]
    fn crt_split_combine() {
        let sm = ScoreModuli::new(vec![40961, 65537]).unwrap();
        assert_eq!(sm.combine(&sm.split(&[0])).unwrap(), vec![0]);
        assert!(ScoreModuli::new(vec![6, 9]).is_err());
        // 16 + 17 bit residues give about 31 bits of signed range
        assert_eq!(128 - sm.product().leading_zeros(), 32);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let a: Vec<i64> = (0..192).map(|_| rng.random_range(-(1i64 << 15)..(1 << 15))).collect();
        let b: Vec<i64> = (0..192).map(|_| rng.random_range(-(1i64 << 15)..(1 << 15))).collect();
        let exact: i64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let per_residue: Vec<Vec<u64>> = sm
            .moduli()
            .iter()
            .map(|&t| {
                let (ra, rb) = (signed_mod(&a, t), signed_mod(&b, t));
                vec![ra.iter().zip(&rb).fold(0u64, |acc, (x, y)| (acc + x * y % t) % t)]
            })
            .collect();
        assert_eq!(sm.combine(&per_residue).unwrap()[0], exact);
        let single = ScoreModuli::lift(40961, &per_residue[0])[0];
        if exact.abs() > 20480 {
            assert_ne!(single, exact);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn layout_sound_for_random_cubes(seed in any::<u64>(), log_n in 3u32..8, d_frac in 0.0f64..1.0, extra in 0usize..3, fill in 0.0f64..1.0) {
            let n = 1usize << log_n;
            let d = 1 + ((n / 2 - 1) as f64 * d_frac) as usize;
            let base = CubeShape::standard(n, d).unwrap();
            let shape = CubeShape { h: base.h + extra, ..base };
            let pos = positions(&shape);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let count = ((pos.len() as f64) * fill) as usize;
            let entries = random_entries(&mut rng, count, d, 20);
            let cube = ClusterCube::build(0, 0, shape, &pos, &entries).unwrap();
            let q: Vec<i64> = (0..d).map(|_| rng.random_range(-20..=20)).collect();
            check_cube(&cube, &entries, &q, 65537);
        }

        #[test]
        fn crt_roundtrip(v in proptest::collection::vec(-(1i64 << 30)..(1i64 << 30), 1..20)) {
            let sm = ScoreModuli::new(vec![40961, 65537]).unwrap();
            prop_assert_eq!(sm.combine(&sm.split(&v)).unwrap(), v);
        }
    }
}
