use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Discrete, NegativeBinomial};

use super::*;

fn privacy() -> PrivacyParams {
    PrivacyParams {
        epsilon: 1.0,
        delta: 2f64.powi(-30),
        max_queries: 1,
        honest_clients: 250_000,
        clusters: 256,
        epochs: 1,
        honest_fraction: 0.5,
        log_base: LogBase::Base2,
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[test]
fn nb_params_formula() {
    let nb = nb_params(&privacy()).unwrap();
    assert!((nb.p - 0.818_730_753_077_981_9).abs() < 1e-12);
    assert!((nb.r - 93.0).abs() < 1e-9);
    let e = PrivacyParams { delta: (-1f64).exp(), log_base: LogBase::Natural, ..privacy() };
    assert!((nb_params(&e).unwrap().r - 6.0).abs() < 1e-12);
    let two = PrivacyParams { max_queries: 2, ..privacy() };
    assert!((nb_params(&two).unwrap().p - (-0.1f64).exp()).abs() < 1e-15);
}

#[test]
fn invalid_privacy_rejected() {
    for bad in [
        PrivacyParams { epsilon: 0.0, ..privacy() },
        PrivacyParams { epsilon: 1.5, ..privacy() },
        PrivacyParams { epsilon: f64::NAN, ..privacy() },
        PrivacyParams { delta: 1.0, ..privacy() },
        PrivacyParams { max_queries: 0, ..privacy() },
        PrivacyParams { honest_clients: 1, ..privacy() },
    ] {
        assert!(nb_params(&bad).is_err());
    }
}

#[test]
fn pmf_matches_independent_forms() {
    let nb = NbParams::new(4.0, 0.3).unwrap();
    // statrs counts failures before r successes with success probability 1 − p
    let reference = NegativeBinomial::new(4.0, 0.7).unwrap();
    let mut total = 0.0;
    let mut mean = 0.0;
    for k in 0..200u64 {
        let a = nb.ln_pmf(k).exp();
        // C(k+3, k)·0.3^k·0.7^4 by hand
        let c = ((k + 1) * (k + 2) * (k + 3)) as f64 / 6.0;
        let b = c * 0.3f64.powi(k as i32) * 0.7f64.powi(4);
        assert!((a - b).abs() < 1e-12 * b.max(1e-300) + 1e-300, "k = {k}");
        assert!((a - reference.pmf(k)).abs() < 1e-12);
        total += a;
        mean += k as f64 * a;
    }
    assert!((total - 1.0).abs() < 1e-12);
    assert!((mean - nb.mean()).abs() < 1e-9);
}

#[test]
fn sampler_moments_at_deployed_scale() {
    let nb = NbParams::new(93.0, (-0.0005f64).exp()).unwrap();
    assert!((nb.mean() - 1.86e5).abs() / 1.86e5 < 0.01);
    let mut r = rng(1);
    let n = 100_000;
    let xs: Vec<f64> = (0..n).map(|_| sample_nb(&nb, &mut r) as f64).collect();
    let m = xs.iter().sum::<f64>() / n as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((m / nb.mean() - 1.0).abs() < 0.01, "mean {m}");
    assert!((v / nb.variance() - 1.0).abs() < 0.02, "variance {v}");
}

#[test]
fn sampler_frequencies_match_pmf() {
    let nb = NbParams::new(2.5, 0.6).unwrap();
    let mut r = rng(2);
    let n = 200_000;
    let mut counts = vec![0u64; 40];
    for _ in 0..n {
        let k = sample_nb(&nb, &mut r) as usize;
        if k < counts.len() {
            counts[k] += 1;
        }
    }
    let mut chi = 0.0;
    let mut cells = 0;
    for (k, &c) in counts.iter().enumerate() {
        let e = nb.ln_pmf(k as u64).exp() * n as f64;
        if e > 20.0 {
            chi += (c as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    // 99.9% chi-square quantile is below cells + 4·sqrt(2·cells)
    assert!(chi < cells as f64 + 4.0 * (2.0 * cells as f64).sqrt(), "chi2 {chi} over {cells}");
}

#[test]
fn degenerate_p_gives_zero() {
    let nb = NbParams::new(93.0, 1e-12).unwrap();
    let mut r = rng(3);
    assert!((0..10_000).all(|_| sample_nb(&nb, &mut r) == 0));
    assert_eq!(sample_nb(&NbParams { r: 3.0, p: 0.0 }, &mut r), 0);
}

#[test]
fn shards_sum_to_whole() {
    let nb = NbParams::new(12.0, 0.8).unwrap();
    let shard = nb.shard(100);
    let mut r = rng(4);
    let n = 10_000;
    let direct: Vec<u64> = (0..n).map(|_| sample_nb(&nb, &mut r)).collect();
    let summed: Vec<u64> = (0..n).map(|_| (0..100).map(|_| sample_nb(&shard, &mut r)).sum()).collect();
    let d = ks_statistic(&direct, &summed);
    assert!(d < ks_critical(0.01, n, n), "KS {d}");
}

#[test]
fn ks_and_tv_by_hand() {
    assert_eq!(ks_statistic(&[1, 2, 3, 4], &[1, 2, 3, 4]), 0.0);
    assert!((ks_statistic(&[0, 0], &[1, 1]) - 1.0).abs() < 1e-12);
    assert!((ks_statistic(&[0, 1, 2, 3], &[2, 3]) - 0.5).abs() < 1e-12);
    assert!((total_variation(&[0, 0, 1, 1], &[0, 1, 1, 1]) - 0.25).abs() < 1e-12);
    assert!((ks_critical(0.05, 100, 100) - 1.3581 * 0.1414).abs() < 1e-3);
}

#[test]
fn expected_fakes_closed_form() {
    let e = expected_fake_queries(&privacy()).unwrap();
    let p = (-0.2f64).exp();
    assert!((e - 93.0 * p / (1.0 - p) * 256.0 / 250_000.0).abs() < 1e-9);
    let low = PrivacyParams { epsilon: 1.0 / 400.0, ..privacy() };
    assert!((expected_fake_queries(&low).unwrap() - 190.4).abs() < 0.1);
    let doubled = PrivacyParams { honest_clients: 500_000, ..low.clone() };
    let ratio = expected_fake_queries(&low).unwrap() / expected_fake_queries(&doubled).unwrap();
    assert!((ratio - 2.0).abs() < 1e-12);
    assert!((expected_fakes(&NbParams::new(1.0, 0.5).unwrap(), 7, 7) - 1.0).abs() < 1e-15);
}

#[test]
fn composition() {
    let (e, d) = compose_privacy(0.5, 1e-9, 3, 1);
    assert_eq!(e, 1.0);
    assert!((d - 6e-9).abs() < 1e-24);
    let (e, _) = compose_privacy(1.0 / 800.0, 1e-9, 1, 400);
    assert!((e - 1.0).abs() < 1e-12);
    assert_eq!(compose_privacy(0.5, 0.1, 2, 0), (0.0, 0.0));
}

#[test]
fn plan_edge_cases() {
    let cfg = PlanConfig { clusters: 4, slots: 3, max_queries: 2, assignment: FakeAssignment::PerCluster };
    let none = NbParams::new(1.0, 1e-15).unwrap();
    let mut r = rng(5);
    let p = build_query_plan(&[1, 3], &none, &cfg, 7, &mut r).unwrap();
    assert_eq!(p.items.len(), 2);
    assert_eq!(p.fakes(), 0);
    assert!(build_query_plan(&[1, 2, 3], &none, &cfg, 0, &mut r).is_err());
    assert!(build_query_plan(&[4], &none, &cfg, 0, &mut r).is_err());
    let some = NbParams::new(8.0, 0.5).unwrap();
    let only_fakes = build_query_plan(&[], &some, &cfg, 1, &mut r).unwrap();
    assert_eq!(only_fakes.fakes(), only_fakes.items.len());
    let flat: usize = only_fakes.schedule.iter().map(Vec::len).sum();
    assert_eq!(flat, only_fakes.items.len());
}

/// Fakes per cluster from a Bernoulli-trial NB(r, p) sampler plus uniform reassignment.
fn brute_force_fakes(r_int: u32, p: f64, k: usize, rng: &mut ChaCha20Rng) -> Vec<u64> {
    let mut out = vec![0u64; k];
    for _ in 0..k {
        let mut failures = 0;
        let mut count = 0;
        while failures < r_int {
            if rng.random::<f64>() < p {
                count += 1;
            } else {
                failures += 1;
            }
        }
        for _ in 0..count {
            out[rng.random_range(0..k)] += 1;
        }
    }
    out
}

#[test]
fn uniform_assignment_matches_brute_force() {
    let cfg = PlanConfig { clusters: 4, slots: 2, max_queries: 1, assignment: FakeAssignment::UniformRandom };
    let shard = NbParams::new(8.0, 0.5).unwrap().shard(2);
    let mut r = rng(6);
    let mut oracle = rng(7);
    let trials = 100_000;
    let mut a = Vec::with_capacity(trials);
    let mut b = Vec::with_capacity(trials);
    for i in 0..trials {
        let plan = build_query_plan(&[], &shard, &cfg, i as u64, &mut r).unwrap();
        a.push(plan.items.iter().filter(|d| d.cluster == 0).count() as u64);
        b.push(brute_force_fakes(4, 0.5, 4, &mut oracle)[0]);
    }
    assert!(total_variation(&a, &b) < 0.02, "TV {}", total_variation(&a, &b));
    let mean = a.iter().sum::<u64>() as f64 / trials as f64;
    assert!((mean - 4.0).abs() < 0.05);
}

#[test]
fn per_cluster_assignment_counts() {
    let cfg = PlanConfig { clusters: 3, slots: 2, max_queries: 1, assignment: FakeAssignment::PerCluster };
    let nb = NbParams::new(6.0, 0.4).unwrap();
    let mut r = rng(8);
    let trials = 50_000;
    let mut c1 = Vec::new();
    let mut direct = Vec::new();
    for _ in 0..trials {
        let mut h = [0u64; 3];
        for u in 0..3 {
            let plan = build_query_plan(&[], &nb.shard(3), &cfg, u, &mut r).unwrap();
            for d in &plan.items {
                h[d.cluster as usize] += 1;
            }
        }
        c1.push(h[1]);
        direct.push(sample_nb(&nb, &mut r));
    }
    assert!(ks_statistic(&c1, &direct) < ks_critical(0.01, trials, trials));
}

#[test]
fn schedule_uniform_and_independent() {
    let mut r = rng(9);
    assert!(rand_schedule(5, 0, &mut r).is_err());
    let s = rand_schedule(5, 1, &mut r).unwrap();
    assert_eq!(s[0], vec![0, 1, 2, 3, 4]);
    let n = 1_000_000;
    let mut freq = [0u64; 10];
    for _ in 0..n {
        let s = rand_schedule(1, 10, &mut r).unwrap();
        freq[s.iter().position(|v| !v.is_empty()).unwrap()] += 1;
    }
    for f in freq {
        assert!((f as f64 / n as f64 - 0.1).abs() < 0.003);
    }
    // pairwise correlation of two items' slots
    let m = 100_000;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..m {
        let s = rand_schedule(2, 7, &mut r).unwrap();
        let slot = |i: usize| s.iter().position(|v| v.contains(&i)).unwrap() as f64;
        let (x, y) = (slot(0), slot(1));
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let m = m as f64;
    let cov = sxy / m - sx * sy / (m * m);
    let corr = cov / ((sxx / m - (sx / m).powi(2)) * (syy / m - (sy / m).powi(2))).sqrt();
    assert!(corr.abs() < 0.01, "corr {corr}");
}

#[test]
fn slot_independent_of_kind() {
    let cfg = PlanConfig { clusters: 2, slots: 4, max_queries: 1, assignment: FakeAssignment::PerCluster };
    let nb = NbParams::new(2.0, 0.5).unwrap();
    let mut r = rng(10);
    let mut joint = [[0f64; 4]; 2];
    for i in 0..20_000 {
        let plan = build_query_plan(&[1], &nb, &cfg, i, &mut r).unwrap();
        for (d, s) in plan.items.iter().zip(plan.slot_of()) {
            joint[(d.kind == QueryKind::Fake) as usize][s] += 1.0;
        }
    }
    let total: f64 = joint.iter().flatten().sum();
    let mut mi = 0.0;
    for k in 0..2 {
        let pk: f64 = joint[k].iter().sum::<f64>() / total;
        for s in 0..4 {
            let ps: f64 = (joint[0][s] + joint[1][s]) / total;
            let p = joint[k][s] / total;
            if p > 0.0 {
                mi += p * (p / (pk * ps)).ln();
            }
        }
    }
    assert!(mi < 1e-3, "MI {mi}");
}

#[test]
fn curator_behaviour() {
    let mut r = rng(11);
    let none = NbParams::new(1.0, 1e-15).unwrap();
    let (list, hist) = central_curator(&[], &none, 3, 1, &mut r).unwrap();
    assert!(list.is_empty());
    assert_eq!(hist, vec![0, 0, 0]);
    assert!(central_curator(&[vec![0, 1]], &none, 3, 1, &mut r).is_err());
    let nb = NbParams::new(3.0, 0.5).unwrap();
    let trials = 40_000;
    let mut sum = [0f64; 2];
    for _ in 0..trials {
        let (_, h) = central_curator(&[vec![0], vec![0], vec![1]], &nb, 2, 1, &mut r).unwrap();
        sum[0] += h[0] as f64;
        sum[1] += h[1] as f64;
    }
    assert!((sum[0] / trials as f64 - 5.0).abs() < 0.05);
    assert!((sum[1] / trials as f64 - 4.0).abs() < 0.05);
}

#[test]
fn audit_report_fields() {
    let p = PrivacyParams { epsilon: 1.0 / 400.0, epochs: 400, ..privacy() };
    let rep = audit(&p, Some(2f64.powi(-26)), 2_000, &mut rng(12)).unwrap();
    assert!((rep.total_epsilon - 2.0).abs() < 1e-12);
    assert!((rep.total_delta - 800.0 * 2f64.powi(-30)).abs() < 1e-20);
    assert!(rep.claim_discrepancy);
    let s = rep.sampler.unwrap();
    assert!((s.mean / s.expected_mean - 1.0).abs() < 0.05);
    assert!(s.ks_statistic < s.ks_critical);
    let json = serde_json::to_string(&rep.inputs).unwrap();
    assert_eq!(serde_json::from_str::<PrivacyParams>(&json).unwrap(), p);
}

proptest! {
    #[test]
    fn composition_is_linear(e in 0.001f64..1.0, d in 1e-12f64..1e-3, dm in 1usize..10, l in 0u64..1000) {
        let (a, b) = compose_privacy(e, d, dm, l);
        let (a1, b1) = compose_privacy(e, d, dm, 1);
        prop_assert!((a - a1 * l as f64).abs() <= 1e-9 * a.max(1.0));
        prop_assert!((b - b1 * l as f64).abs() <= 1e-9 * b.max(1e-30));
    }

    #[test]
    fn plans_are_well_formed(real in prop::collection::vec(0u32..5, 0..4), slots in 1usize..6, seed: u64, uniform: bool) {
        let cfg = PlanConfig {
            clusters: 5,
            slots,
            max_queries: 3,
            assignment: if uniform { FakeAssignment::UniformRandom } else { FakeAssignment::PerCluster },
        };
        let res = build_query_plan(&real, &NbParams::new(1.5, 0.5).unwrap(), &cfg, 0, &mut rng(seed));
        if real.len() > 3 {
            prop_assert!(res.is_err());
        } else {
            let plan = res.unwrap();
            let mut seen = vec![0; plan.items.len()];
            for s in &plan.schedule {
                for &i in s {
                    seen[i] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let mut got: Vec<u32> = plan.items.iter().filter(|d| d.kind == QueryKind::Real).map(|d| d.cluster).collect();
            let mut want = real.clone();
            got.sort();
            want.sort();
            prop_assert_eq!(got, want);
            prop_assert!(plan.items.iter().all(|d| d.cluster < 5));
        }
    }
}
