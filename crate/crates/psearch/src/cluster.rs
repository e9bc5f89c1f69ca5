//! K-means clustering, nearest-centroid routing, fixed-point scaling and MRR@100.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

const MAGIC: &[u8; 4] = b"WEMB";
const VERSION: u16 = 1;

/// A dense row-major matrix of `len()` embeddings of dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f32>,
}

impl Embeddings {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Dimension { expected: dim, got: data.len() });
        }
        Ok(Embeddings { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::Dimension { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn select(&self, idx: &[usize]) -> Embeddings {
        let mut data = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Embeddings { dim: self.dim, data }
    }

    /// Scales every nonzero row to unit L2 norm.
    pub fn normalize(&mut self) {
        for r in self.data.chunks_exact_mut(self.dim) {
            let norm = r.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
            }
        }
    }

    pub fn is_normalized(&self) -> bool {
        self.rows().all(|r| (norm(r) - 1.0).abs() <= 1e-5)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 14];
        r.read_exact(&mut head).map_err(|_| Error::Malformed("truncated embedding header"))?;
        if &head[..4] != MAGIC {
            return Err(Error::Malformed("bad embedding magic"));
        }
        if u16::from_le_bytes([head[4], head[5]]) != VERSION {
            return Err(Error::Malformed("unsupported embedding version"));
        }
        let count = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(head[10..14].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::Malformed("zero embedding dimension"));
        }
        let mut buf = vec![0u8; count * dim * 4];
        r.read_exact(&mut buf).map_err(|_| Error::Malformed("truncated embedding body"))?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Embeddings { dim, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("in-memory write");
        v
    }

    pub fn from_bytes(mut b: &[u8]) -> Result<Self> {
        let e = Self::read_from(&mut b)?;
        if !b.is_empty() {
            return Err(Error::Malformed("trailing bytes after embeddings"));
        }
        Ok(e)
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub fn norm(a: &[f32]) -> f64 {
    dot(a, a).sqrt()
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Centroids plus the partition of the database they induce.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub centroids: Embeddings,
    pub assignment: Vec<u32>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k()];
        for (i, &c) in self.assignment.iter().enumerate() {
            m[c as usize].push(i);
        }
        m
    }

    /// Centroids in the embedding format followed by `count u32` and the assignment.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.centroids.to_bytes();
        v.extend_from_slice(&(self.assignment.len() as u32).to_le_bytes());
        for a in &self.assignment {
            v.extend_from_slice(&a.to_le_bytes());
        }
        v
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let mut r = b;
        let centroids = Embeddings::read_from(&mut r)?;
        if r.len() < 4 {
            return Err(Error::Malformed("truncated assignment count"));
        }
        let count = u32::from_le_bytes(r[..4].try_into().unwrap()) as usize;
        let body = &r[4..];
        if body.len() != count * 4 {
            return Err(Error::Malformed("assignment length mismatch"));
        }
        let assignment: Vec<u32> = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if assignment.iter().any(|&a| a as usize >= centroids.len()) {
            return Err(Error::Malformed("assignment refers to a missing centroid"));
        }
        Ok(Codebook { centroids, assignment, objective: Vec::new() })
    }
}

fn assign(emb: &Embeddings, cents: &Embeddings, exec: Exec) -> (Vec<u32>, Vec<f64>) {
    let best = exec.map_range(emb.len(), |i| {
        let x = emb.row(i);
        let mut bi = 0u32;
        let mut bd = f64::INFINITY;
        for (c, cr) in cents.rows().enumerate() {
            let d = sq_dist(x, cr);
            if d < bd {
                bd = d;
                bi = c as u32;
            }
        }
        (bi, bd)
    });
    best.into_iter().unzip()
}

fn kmeanspp(emb: &Embeddings, k: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let n = emb.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = emb.rows().map(|r| sq_dist(r, emb.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid; take any unused index
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        chosen.push(next);
        for (i, r) in emb.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, emb.row(next)));
        }
    }
    chosen
}

/// Lloyd iterations from a k-means++ seeding. Empty clusters are repaired by
/// moving their centroid onto the farthest member of the largest cluster.
pub fn kmeans(emb: &Embeddings, k: usize, max_iters: usize, seed: u64, exec: Exec) -> Result<Codebook> {
    let n = emb.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParams(format!("K = {k} must lie in [1, N = {n}]")));
    }
    let dim = emb.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let init = kmeanspp(emb, k, &mut rng);
    let mut cents = emb.select(&init);
    let mut objective = Vec::new();
    let (mut asg, mut dist) = assign(emb, &cents, exec);
    objective.push(dist.iter().sum());
    for _ in 0..max_iters {
        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &c) in asg.iter().enumerate() {
            counts[c as usize] += 1;
            for (s, &x) in sums[c as usize * dim..(c as usize + 1) * dim].iter_mut().zip(emb.row(i)) {
                *s += x as f64;
            }
        }
        let mut data = cents.data.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..dim {
                    data[c * dim + j] = (sums[c * dim + j] / counts[c] as f64) as f32;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let big = (0..k).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).expect("k >= 1");
                let far = (0..n)
                    .filter(|&i| asg[i] as usize == big)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("largest cluster is nonempty");
                data[c * dim..(c + 1) * dim].copy_from_slice(emb.row(far));
                counts[big] -= 1;
                counts[c] = 1;
                asg[far] = c as u32;
                dist[far] = 0.0;
            }
        }
        cents = Embeddings { dim, data };
        let (na, nd) = assign(emb, &cents, exec);
        let obj: f64 = nd.iter().sum();
        let converged = na == asg;
        asg = na;
        dist = nd;
        objective.push(obj);
        if converged {
            break;
        }
    }
    Ok(Codebook { centroids: cents, assignment: asg, objective })
}

/// The `delta` clusters with largest inner product, ties to the lower id.
pub fn nearest_centroids(query: &[f32], cb: &Codebook, delta: usize) -> Result<Vec<usize>> {
    if query.len() != cb.centroids.dim() {
        return Err(Error::Dimension { expected: cb.centroids.dim(), got: query.len() });
    }
    if delta > cb.k() {
        return Err(Error::InvalidParams(format!("Δ = {delta} exceeds K = {}", cb.k())));
    }
    let mut s: Vec<(usize, f64)> = cb.centroids.rows().map(|c| dot(query, c)).enumerate().collect();
    s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(s.into_iter().take(delta).map(|(i, _)| i).collect())
}

/// Fixed-point scale p and plaintext modulus t (or t0·t1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointParams {
    pub p: u64,
    pub t: u64,
    pub dim: usize,
}

impl FixedPointParams {
    /// Requires p a power of two with p < √((t−1)/2) − √d/2.
    pub fn new(p: u64, t: u64, dim: usize) -> Result<Self> {
        if !p.is_power_of_two() {
            return Err(Error::InvalidParams(format!("scale {p} is not a power of two")));
        }
        let bound = Self::bound(t, dim);
        if p as f64 >= bound {
            return Err(Error::InvalidParams(format!(
                "scale {p} violates the wrap-around bound {bound:.2} for t = {t}, d = {dim}"
            )));
        }
        Ok(FixedPointParams { p, t, dim })
    }

    pub fn bound(t: u64, dim: usize) -> f64 {
        ((t as f64 - 1.0) / 2.0).sqrt() - (dim as f64).sqrt() / 2.0
    }

    /// Largest admissible power-of-two scale.
    pub fn max_for(t: u64, dim: usize) -> Result<Self> {
        let b = Self::bound(t, dim);
        if b <= 1.0 {
            return Err(Error::InvalidParams(format!("no admissible scale for t = {t}")));
        }
        let mut p = 1u64;
        while ((2 * p) as f64) < b {
            p *= 2;
        }
        Self::new(p, t, dim)
    }

    pub fn precision_bits(&self) -> u32 {
        self.p.trailing_zeros()
    }
}

/// round(p·e_i) as signed integers.
pub fn scale_signed(e: &[f32], fp: &FixedPointParams) -> Result<Vec<i64>> {
    if e.len() != fp.dim {
        return Err(Error::Dimension { expected: fp.dim, got: e.len() });
    }
    Ok(e.iter().map(|&x| (fp.p as f64 * x as f64).round() as i64).collect())
}

/// round(p·e_i) represented in Z_t.
pub fn scale_embedding(e: &[f32], fp: &FixedPointParams) -> Result<Vec<u64>> {
    let t = fp.t as i64;
    Ok(scale_signed(e, fp)?.into_iter().map(|x| x.rem_euclid(t) as u64).collect())
}

/// Reciprocal rank of `truth` among the merged candidate lists, cut at 100.
/// Candidates are (global entry index, score); ties go to the lower index.
pub fn mrr_at_100<S: PartialOrd + Copy>(lists: &[Vec<(usize, S)>], truth: usize) -> f64 {
    let mut all: Vec<(usize, S)> = lists.iter().flatten().copied().collect();
    all.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    all.dedup_by_key(|x| x.0);
    match all.iter().take(100).position(|x| x.0 == truth) {
        Some(r) => 1.0 / (r + 1) as f64,
        None => 0.0,
    }
}

/// Gaussian blobs on the unit sphere with planted near-duplicate queries.
#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub embeddings: Embeddings,
    pub labels: Vec<usize>,
    pub queries: Embeddings,
    /// Exact nearest neighbor (largest inner product) of each query.
    pub truth: Vec<usize>,
}

pub fn synthetic_corpus(
    n: usize,
    dim: usize,
    blobs: usize,
    spread: f64,
    queries: usize,
    query_noise: f64,
    seed: u64,
) -> Result<SyntheticCorpus> {
    if n == 0 || dim == 0 || blobs == 0 {
        return Err(Error::InvalidParams("empty synthetic corpus".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let gauss = |rng: &mut ChaCha20Rng, s: f64| -> f32 {
        let z: f64 = StandardNormal.sample(rng);
        (z * s) as f32
    };
    let centers: Vec<Vec<f32>> = (0..blobs)
        .map(|_| (0..dim).map(|_| gauss(&mut rng, 1.0)).collect())
        .collect();
    let mut labels = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * dim);
    let s = spread / (dim as f64).sqrt();
    for _ in 0..n {
        let b = rng.random_range(0..blobs);
        labels.push(b);
        let c = &centers[b];
        let cn = norm(c);
        for &x in c {
            data.push((x as f64 / cn) as f32 + gauss(&mut rng, s));
        }
    }
    let mut embeddings = Embeddings::new(dim, data)?;
    embeddings.normalize();
    let mut truth = Vec::with_capacity(queries);
    let mut qd = Vec::with_capacity(queries * dim);
    let qs = query_noise / (dim as f64).sqrt();
    for _ in 0..queries {
        let i = rng.random_range(0..n);
        truth.push(i);
        for &x in embeddings.row(i) {
            qd.push(x + gauss(&mut rng, qs));
        }
    }
    let mut queries = Embeddings::new(dim, qd)?;
    queries.normalize();
    // the planted neighbor is usually, but not always, the exact one
    for (t, q) in truth.iter_mut().zip(queries.rows()) {
        let mut best = (*t, dot(q, embeddings.row(*t)));
        for (i, r) in embeddings.rows().enumerate() {
            let s = dot(q, r);
            if s > best.1 || (s == best.1 && i < best.0) {
                best = (i, s);
            }
        }
        *t = best.0;
    }
    Ok(SyntheticCorpus { embeddings, labels, queries, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_rank(db: &Embeddings, q: &[f32]) -> Vec<(usize, f64)> {
        db.rows().map(|r| dot(q, r)).enumerate().collect()
    }

    #[test]
    fn k_equals_n_gives_zero_objective() {
        let c = synthetic_corpus(20, 8, 3, 0.5, 0, 0.0, 1).unwrap();
        let cb = kmeans(&c.embeddings, 20, 10, 1, Exec::Sequential).unwrap();
        assert!(*cb.objective.last().unwrap() < 1e-9);
        let mut seen = cb.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 20);
    }

    #[test]
    fn k_one_is_the_mean() {
        let c = synthetic_corpus(50, 4, 2, 0.5, 0, 0.0, 2).unwrap();
        let cb = kmeans(&c.embeddings, 1, 5, 2, Exec::Sequential).unwrap();
        for j in 0..4 {
            let m: f64 = c.embeddings.rows().map(|r| r[j] as f64).sum::<f64>() / 50.0;
            assert!((cb.centroids.row(0)[j] as f64 - m).abs() < 1e-5);
        }
    }

    #[test]
    fn separated_blobs_recovered() {
        let c = synthetic_corpus(1000, 16, 2, 0.2, 0, 0.0, 3).unwrap();
        let cb = kmeans(&c.embeddings, 2, 50, 3, Exec::Sequential).unwrap();
        let agree = cb.assignment.iter().zip(&c.labels).filter(|(a, l)| **a as usize == **l).count();
        let acc = agree.max(1000 - agree) as f64 / 1000.0;
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn k_greater_than_n_rejected() {
        let c = synthetic_corpus(5, 4, 1, 0.5, 0, 0.0, 4).unwrap();
        assert!(kmeans(&c.embeddings, 6, 5, 0, Exec::Sequential).is_err());
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let c = synthetic_corpus(300, 8, 5, 0.6, 0, 0.0, 5).unwrap();
        let a = kmeans(&c.embeddings, 5, 20, 9, Exec::Sequential).unwrap();
        let b = kmeans(&c.embeddings, 5, 20, 9, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nearest_centroids_cases() {
        let c = synthetic_corpus(200, 8, 4, 0.5, 50, 0.3, 6).unwrap();
        let cb = kmeans(&c.embeddings, 6, 20, 6, Exec::Sequential).unwrap();
        for j in 0..6 {
            assert_eq!(nearest_centroids(cb.centroids.row(j), &cb, 1).unwrap()[0], j);
        }
        let mut all = nearest_centroids(c.queries.row(0), &cb, 6).unwrap();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
        for q in c.queries.rows() {
            let best = (0..6)
                .max_by(|&a, &b| dot(q, cb.centroids.row(a)).total_cmp(&dot(q, cb.centroids.row(b))).then(b.cmp(&a)))
                .unwrap();
            assert_eq!(nearest_centroids(q, &cb, 1).unwrap()[0], best);
        }
        assert!(nearest_centroids(c.queries.row(0), &cb, 7).is_err());
    }

    #[test]
    fn fixed_point_bounds() {
        // 16+17-bit plaintext CRT admits 15 bits of precision but not 16
        let t = 40961u64 * 65537;
        assert!(FixedPointParams::new(1 << 15, t, 192).is_ok());
        assert!(FixedPointParams::new(1 << 16, t, 192).is_err());
        assert_eq!(FixedPointParams::max_for(t, 192).unwrap().precision_bits(), 15);
        assert_eq!(FixedPointParams::max_for(40961, 192).unwrap().p, 128);
        assert!(FixedPointParams::new(100, t, 192).is_err());
        let fp = FixedPointParams::new(128, 40961, 4).unwrap();
        assert_eq!(scale_embedding(&[0.0; 4], &fp).unwrap(), vec![0; 4]);
        assert_eq!(scale_embedding(&[-0.5, 0.5, 1.0, 0.0], &fp).unwrap(), vec![40961 - 64, 64, 128, 0]);
    }

    #[test]
    fn scaled_inner_products_stay_in_range() {
        let fp = FixedPointParams::max_for(40961, 192).unwrap();
        let c = synthetic_corpus(200, 192, 10, 1.0, 0, 0.0, 7).unwrap();
        let p = fp.p as f64;
        let bound = p * (192f64).sqrt() + 192.0 / 4.0;
        for i in 0..100 {
            let (u, v) = (c.embeddings.row(i), c.embeddings.row(199 - i));
            let su = scale_signed(u, &fp).unwrap();
            let sv = scale_signed(v, &fp).unwrap();
            let ip: i64 = su.iter().zip(&sv).map(|(a, b)| a * b).sum();
            assert!((ip as f64 - p * p * dot(u, v)).abs() <= bound);
            assert!(2 * ip.abs() < 40961);
        }
    }

    #[test]
    fn mrr_cases() {
        assert_eq!(mrr_at_100(&[vec![(3, 9i64), (1, 2)]], 3), 1.0);
        assert_eq!(mrr_at_100(&[vec![(3, 9i64)], vec![(5, 10)]], 3), 0.5);
        assert_eq!(mrr_at_100(&[vec![(3, 9i64)]], 4), 0.0);
        // tie goes to the lower entry index
        assert_eq!(mrr_at_100(&[vec![(7, 1i64), (2, 1)]], 7), 0.5);
        let far: Vec<(usize, i64)> = (0..150).map(|i| (i, 1000 - i as i64)).collect();
        assert_eq!(mrr_at_100(&[far.clone()], 99), 0.01);
        assert_eq!(mrr_at_100(&[far], 100), 0.0);
    }

    #[test]
    fn exhaustive_probe_matches_brute_force() {
        let c = synthetic_corpus(1000, 16, 8, 0.8, 30, 0.4, 8).unwrap();
        let cb = kmeans(&c.embeddings, 8, 30, 8, Exec::Sequential).unwrap();
        let members = cb.members();
        for (qi, q) in c.queries.rows().enumerate() {
            let probes = nearest_centroids(q, &cb, 8).unwrap();
            let lists: Vec<Vec<(usize, f64)>> = probes
                .iter()
                .map(|&k| members[k].iter().map(|&i| (i, dot(q, c.embeddings.row(i)))).collect())
                .collect();
            let brute = brute_rank(&c.embeddings, q);
            assert_eq!(mrr_at_100(&lists, c.truth[qi]), mrr_at_100(&[brute], c.truth[qi]));
        }
    }

    #[test]
    fn embedding_file_roundtrip_and_errors() {
        let c = synthetic_corpus(10, 6, 2, 0.5, 0, 0.0, 9).unwrap();
        assert!(c.embeddings.is_normalized());
        let b = c.embeddings.to_bytes();
        assert_eq!(b.len(), 14 + 10 * 6 * 4);
        assert_eq!(Embeddings::from_bytes(&b).unwrap(), c.embeddings);
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Embeddings::from_bytes(&bad).is_err());
        assert!(Embeddings::from_bytes(&b[..b.len() - 1]).is_err());
        let cb = kmeans(&c.embeddings, 3, 5, 1, Exec::Sequential).unwrap();
        let back = Codebook::from_bytes(&cb.to_bytes()).unwrap();
        assert_eq!(back.centroids, cb.centroids);
        assert_eq!(back.assignment, cb.assignment);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn objective_non_increasing(seed in any::<u64>(), k in 1usize..8) {
            let c = synthetic_corpus(120, 6, 4, 0.9, 0, 0.0, seed).unwrap();
            let cb = kmeans(&c.embeddings, k, 25, seed, Exec::Sequential).unwrap();
            for w in cb.objective.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
        }

        #[test]
        fn mrr_non_decreasing_in_probes(seed in any::<u64>()) {
            let c = synthetic_corpus(300, 8, 6, 1.0, 5, 0.6, seed).unwrap();
            let cb = kmeans(&c.embeddings, 6, 20, seed, Exec::Sequential).unwrap();
            let members = cb.members();
            for (qi, q) in c.queries.rows().enumerate() {
                let mut last = 0.0;
                for delta in 1..=6 {
                    let lists: Vec<Vec<(usize, f64)>> = nearest_centroids(q, &cb, delta).unwrap()
                        .iter()
                        .map(|&k| members[k].iter().map(|&i| (i, dot(q, c.embeddings.row(i)))).collect())
                        .collect();
                    let m = mrr_at_100(&lists, c.truth[qi]);
                    prop_assert!(m >= last);
                    last = m;
                }
            }
        }

        #[test]
        fn dequantized_inner_product_error_bounded(seed in any::<u64>()) {
            let fp = FixedPointParams::max_for(40961 * 65537, 192).unwrap();
            let c = synthetic_corpus(2, 192, 2, 1.0, 0, 0.0, seed).unwrap();
            let (u, v) = (c.embeddings.row(0), c.embeddings.row(1));
            let su = scale_signed(u, &fp).unwrap();
            let sv = scale_signed(v, &fp).unwrap();
            let ip: i64 = su.iter().zip(&sv).map(|(a, b)| a * b).sum();
            let p = fp.p as f64;
            prop_assert!((ip as f64 - p * p * dot(u, v)).abs() <= p * (192f64).sqrt() + 48.0);
        }
    }
}
