//! Implementation-vs-oracle checks for the statistics and search routines.

use dupaudit_core::metrics::{dataset_similarity, p_value_from_r, pearson_with_pvalue, self_similarity_baseline};
use dupaudit_core::rng;
use dupaudit_core::simgraph::blocked_topk;
use dupaudit_core::EmbeddingMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn random_unit(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut r = rng::from_seed(seed);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| (x / norm) as f32));
    }
    EmbeddingMatrix::new((0..n).map(|i| format!("id{i}")).collect(), data, dim).unwrap()
}

fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

fn textbook_pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let df = n - 2.0;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
    (r, p)
}

#[test]
fn pearson_matches_frozen_reference_values() {
    // values from scipy.stats.pearsonr on the same series
    let x: Vec<f64> = (0..20)
        .map(|i| (f64::from(i) * 0.37) % 1.7 + f64::from(i) * 0.1)
        .collect();
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v * 0.8 + ((i * 7) % 5) as f64 * 0.3 - 1.0)
        .collect();
    let c = pearson_with_pvalue(&x, &y).unwrap();
    assert!((c.r - 0.8832500374316555).abs() < 1e-9);
    assert!(((c.p_value - 2.487344402742543e-07) / 2.487344402742543e-07).abs() < 1e-6);

    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<f64> = (0..20).map(|i| f64::from((i * 13) % 20)).collect();
    let c = pearson_with_pvalue(&x, &y).unwrap();
    assert!((c.r + 0.08270676691729323).abs() < 1e-9);
    assert!(((c.p_value - 0.7288508763559797) / 0.7288508763559797).abs() < 1e-6);
}

#[test]
fn p_values_in_the_far_tail() {
    // scipy: 2 * t.sf(|t|, 3998) for r = -0.32 and r = -0.29 at n = 4000
    let p = p_value_from_r(-0.32, 4000);
    assert!(
        ((p - 6.419481496149068e-96) / 6.419481496149068e-96).abs() < 1e-6,
        "{p}"
    );
    let p = p_value_from_r(-0.29, 4000);
    assert!(
        ((p - 2.3533633974157765e-78) / 2.3533633974157765e-78).abs() < 1e-6,
        "{p}"
    );
    assert_eq!(p_value_from_r(-0.99, 100_000), 1e-300);
}

#[test]
fn pearson_matches_textbook_formula_on_random_series() {
    let mut r = rng::from_seed(11);
    for trial in 0..200 {
        let n = r.random_range(5..60);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let slope = r.random_range(-1.0..1.0);
        let y: Vec<f64> = x.iter().map(|v| slope * v + r.random_range(-1.0..1.0)).collect();
        let got = pearson_with_pvalue(&x, &y).unwrap();
        let (er, ep) = textbook_pearson(&x, &y);
        assert!((got.r - er).abs() < 1e-9, "trial {trial}");
        if ep > 1e-10 {
            assert!(
                ((got.p_value - ep) / ep).abs() < 1e-6,
                "trial {trial}: {} vs {ep}",
                got.p_value
            );
        }
    }
}

#[test]
fn percentile_matches_sort_and_interpolate() {
    let mut r = rng::from_seed(5);
    for _ in 0..200 {
        let n = r.random_range(1..40);
        let scores: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let p = r.random_range(0.0..=100.0);
        let mut s = scores.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = p / 100.0 * (n - 1) as f64;
        let (lo, hi) = (rank.floor() as usize, rank.ceil() as usize);
        let expected = s[lo] * (1.0 - (rank - lo as f64)) + s[hi] * (rank - lo as f64);
        assert!((dataset_similarity(&scores, p).unwrap() - expected).abs() < 1e-9);
    }
}

#[test]
fn self_similarity_matches_pairwise_scan() {
    let m = random_unit(100, 12, 8);
    let mut best = Vec::new();
    for i in 0..m.len() {
        let top = (0..m.len())
            .filter(|&j| j != i)
            .map(|j| dot64(m.row(i), m.row(j)))
            .fold(f64::MIN, f64::max);
        best.push(top);
    }
    let expected = dataset_similarity(&best, 95.0).unwrap();
    let got = self_similarity_baseline(&m, 95.0, 17).unwrap();
    assert!((got - expected).abs() < 1e-6);
}

#[test]
fn topk_matches_brute_force_across_blocks_and_threads() {
    let q = random_unit(120, 16, 1);
    let r = random_unit(150, 16, 2);
    let mut expected = Vec::new();
    for i in 0..q.len() {
        let mut scored: Vec<(f64, usize)> = (0..r.len()).map(|j| (dot64(q.row(i), r.row(j)), j)).collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        expected.push(scored[..5].to_vec());
    }
    for threads in [1, 4] {
        for block in [1, 7, 150] {
            let got = dupaudit_core::with_threads(threads, || blocked_topk(&q, &r, 5, false, block))
                .unwrap()
                .unwrap();
            for (rep, exp) in got.iter().zip(&expected) {
                let idx: Vec<usize> = rep.matches.iter().map(|m| m.ref_index).collect();
                assert_eq!(idx, exp.iter().map(|e| e.1).collect::<Vec<_>>());
                for (m, e) in rep.matches.iter().zip(exp) {
                    assert!((f64::from(m.score) - e.0).abs() < 1e-5);
                }
            }
        }
    }
}
