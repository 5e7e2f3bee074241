#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dupaudit_core::rng;
use dupaudit_core::EmbeddingMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_dupaudit"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("DUPAUDIT_THREADS")
        .output()
        .expect("spawn dupaudit")
}

pub fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "dupaudit {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn f64_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut r = rng::from_seed(seed);
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        data.extend(unit(&v).iter().map(|&x| x as f32));
    }
    EmbeddingMatrix::new((0..n).map(|i| format!("id{i}")).collect(), data, dim).unwrap()
}

pub struct Planted {
    pub matrix: EmbeddingMatrix,
    /// Sorted member ids of each planted cluster.
    pub clusters: Vec<Vec<String>>,
}

/// `n` rows in `dim` dimensions with `n_clusters` planted clusters.
///
/// Cluster `c` has center `e_c`; each member is `sqrt(0.92) e_c + sqrt(0.08) u`
/// with `u` a random unit vector on the coordinates no center uses, so members
/// of one cluster have cosine >= 0.84 and members of different clusters
/// cosine <= 0.08. Background rows are random unit vectors rejected until
/// their cosine with every earlier row is below 0.5.
pub fn planted_clusters(n: usize, dim: usize, n_clusters: usize, sizes: (usize, usize), seed: u64) -> Planted {
    let mut r = rng::from_seed(seed);
    let sizes: Vec<usize> = (0..n_clusters).map(|_| r.random_range(sizes.0..=sizes.1)).collect();
    let planted_total: usize = sizes.iter().sum();
    assert!(planted_total <= n);

    let (a, b) = (0.92f64.sqrt(), 0.08f64.sqrt());
    let mut rows: Vec<(Option<usize>, Vec<f32>)> = Vec::with_capacity(n);
    for (c, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            let tail: Vec<f64> = (n_clusters..dim).map(|_| r.sample(StandardNormal)).collect();
            let tail = unit(&tail);
            let mut v = vec![0f64; dim];
            v[c] = a;
            for (k, t) in tail.iter().enumerate() {
                v[n_clusters + k] = b * t;
            }
            rows.push((Some(c), unit(&v).iter().map(|&x| x as f32).collect()));
        }
    }
    while rows.len() < n {
        let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
        let v: Vec<f32> = unit(&v).iter().map(|&x| x as f32).collect();
        if rows.iter().all(|(_, w)| f64_dot(&v, w) < 0.49) {
            rows.push((None, v));
        }
    }
    rows.shuffle(&mut r);

    let ids: Vec<String> = (0..n).map(|i| format!("img{i:05}")).collect();
    let mut clusters = vec![Vec::new(); n_clusters];
    let mut data = Vec::with_capacity(n * dim);
    for (i, (label, v)) in rows.iter().enumerate() {
        if let Some(c) = label {
            clusters[*c].push(ids[i].clone());
        }
        data.extend_from_slice(v);
    }
    for c in &mut clusters {
        c.sort();
    }
    Planted {
        matrix: EmbeddingMatrix::new(ids, data, dim).unwrap(),
        clusters,
    }
}

/// Checks the fixture's construction bounds by scanning every pair.
pub fn verify_planted(p: &Planted) -> (f64, f64) {
    let m = &p.matrix;
    let mut label = vec![usize::MAX; m.len()];
    let index = m.index();
    for (c, members) in p.clusters.iter().enumerate() {
        for id in members {
            label[index[id.as_str()]] = c;
        }
    }
    let mut min_intra = f64::MAX;
    let mut max_other = f64::MIN;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            let s = f64_dot(m.row(i), m.row(j));
            if label[i] != usize::MAX && label[i] == label[j] {
                min_intra = min_intra.min(s);
            } else {
                max_other = max_other.max(s);
            }
        }
    }
    (min_intra, max_other)
}
