//! Exact blocked similarity search and duplicate-cluster discovery.
//!
//! All scores are dot products of unit-norm rows, i.e. cosine similarities.
//! Rows are processed in blocks of `block_rows` so the full N x N score
//! matrix is never materialized.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingMatrix;

pub const DEFAULT_EDGE_THRESHOLD: f32 = 0.7;
pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 250;
pub const DEFAULT_BLOCK_ROWS: usize = 4096;

/// Dot product with eight independent f32 accumulators.
///
/// Every caller goes through this function so a given pair always scores to
/// the same bits no matter how rows are blocked.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub ref_index: usize,
    pub ref_id: String,
    pub score: f32,
}

/// Top-k matches for one query row, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub query_id: String,
    pub matches: Vec<Match>,
}

impl MatchReport {
    pub fn top1(&self) -> Option<&Match> {
        self.matches.first()
    }
}

/// Descending score, then ascending reference index.
fn rank(a: (f32, usize), b: (f32, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

struct TopK {
    k: usize,
    items: Vec<(f32, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn push(&mut self, score: f32, idx: usize) {
        if self.items.len() == self.k {
            let worst = *self.items.last().unwrap();
            if rank((score, idx), worst) != Ordering::Less {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&it| rank(it, (score, idx)) == Ordering::Less);
        self.items.insert(pos, (score, idx));
        self.items.truncate(self.k);
    }
}

/// Exact top-k cosine matches of every query row against `reference`.
///
/// With `exclude_self`, a reference row whose id equals the query id is skipped.
/// Output is identical for any `block_rows` and any rayon pool size.
pub fn blocked_topk(
    query: &EmbeddingMatrix,
    reference: &EmbeddingMatrix,
    k: usize,
    exclude_self: bool,
    block_rows: usize,
) -> Result<Vec<MatchReport>> {
    if query.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            left: query.dim(),
            right: reference.dim(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if block_rows == 0 {
        return Err(Error::InvalidConfig("block_rows must be at least 1".into()));
    }
    query.require_normalized()?;
    reference.require_normalized()?;

    let ref_index = reference.index();
    let excluded: Vec<Option<usize>> = query
        .ids()
        .iter()
        .map(|id| {
            if exclude_self {
                ref_index.get(id.as_str()).copied()
            } else {
                None
            }
        })
        .collect();
    if !query.is_empty() {
        let available = reference.len() - usize::from(excluded.iter().any(Option::is_some));
        if k > available {
            return Err(Error::KTooLarge { k, available });
        }
    }

    let n_query = query.len();
    let n_ref = reference.len();
    let query_blocks: Vec<usize> = (0..n_query).step_by(block_rows).collect();
    let per_block: Vec<Vec<TopK>> = query_blocks
        .par_iter()
        .map(|&q0| {
            let q1 = (q0 + block_rows).min(n_query);
            let mut heaps: Vec<TopK> = (q0..q1).map(|_| TopK::new(k)).collect();
            for r0 in (0..n_ref).step_by(block_rows) {
                let r1 = (r0 + block_rows).min(n_ref);
                for (qi, heap) in (q0..q1).zip(heaps.iter_mut()) {
                    let q = query.row(qi);
                    for ri in r0..r1 {
                        if excluded[qi] == Some(ri) {
                            continue;
                        }
                        heap.push(dot(q, reference.row(ri)), ri);
                    }
                }
            }
            heaps
        })
        .collect();

    Ok(per_block
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(qi, heap)| MatchReport {
            query_id: query.id(qi).to_owned(),
            matches: heap
                .items
                .into_iter()
                .map(|(score, ri)| Match {
                    ref_index: ri,
                    ref_id: reference.id(ri).to_owned(),
                    score,
                })
                .collect(),
        })
        .collect())
}

/// An undirected similarity edge with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub score: f32,
}

/// Streams every pair `(i, j)`, `i < j`, with `dot(i, j) >= threshold` into `sink`.
///
/// Row blocks are visited in order; the column blocks of one row block are
/// scanned in parallel and their edges handed to `sink` in block order, so
/// the emitted sequence depends on `block_rows` but not on the thread count.
pub fn threshold_edges<F: FnMut(Edge)>(
    m: &EmbeddingMatrix,
    threshold: f32,
    block_rows: usize,
    mut sink: F,
) -> Result<()> {
    if block_rows == 0 {
        return Err(Error::InvalidConfig("block_rows must be at least 1".into()));
    }
    m.require_normalized()?;
    let n = m.len();
    let starts: Vec<usize> = (0..n).step_by(block_rows).collect();
    for (bi, &i0) in starts.iter().enumerate() {
        let i1 = (i0 + block_rows).min(n);
        let tiles: Vec<Vec<Edge>> = starts[bi..]
            .par_iter()
            .map(|&j0| {
                let j1 = (j0 + block_rows).min(n);
                let mut edges = Vec::new();
                for i in i0..i1 {
                    let a = m.row(i);
                    for j in j0.max(i + 1)..j1 {
                        let score = dot(a, m.row(j));
                        if score >= threshold {
                            edges.push(Edge { u: i, v: j, score });
                        }
                    }
                }
                edges
            })
            .collect();
        for e in tiles.into_iter().flatten() {
            sink(e);
        }
    }
    Ok(())
}

pub fn collect_edges(m: &EmbeddingMatrix, threshold: f32, block_rows: usize) -> Result<Vec<Edge>> {
    let mut out = Vec::new();
    threshold_edges(m, threshold, block_rows, |e| out.push(e))?;
    Ok(out)
}

/// Writes an edge as `(u32, u32, f32)` little-endian.
pub fn write_edge(w: &mut impl Write, e: &Edge) -> std::io::Result<()> {
    w.write_all(&(e.u as u32).to_le_bytes())?;
    w.write_all(&(e.v as u32).to_le_bytes())?;
    w.write_all(&e.score.to_le_bytes())
}

pub fn decode_edges(bytes: &[u8]) -> Vec<Edge> {
    bytes
        .chunks_exact(12)
        .map(|c| Edge {
            u: u32::from_le_bytes(c[0..4].try_into().unwrap()) as usize,
            v: u32::from_le_bytes(c[4..8].try_into().unwrap()) as usize,
            score: f32::from_le_bytes(c[8..12].try_into().unwrap()),
        })
        .collect()
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false if `a` and `b` were already connected.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    /// Component label per element: the smallest index in its component.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.len();
        let mut min_of_root = vec![usize::MAX; n];
        (0..n)
            .map(|i| {
                let r = self.find(i);
                if min_of_root[r] == usize::MAX {
                    min_of_root[r] = i;
                }
                min_of_root[r]
            })
            .collect()
    }
}

/// Labels each of `n` rows with its component's minimum member index.
pub fn connected_components<I>(edges: I, n: usize) -> Result<Vec<usize>>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut uf = UnionFind::new(n);
    for (a, b) in edges {
        for endpoint in [a, b] {
            if endpoint >= n {
                return Err(Error::EndpointOutOfRange { endpoint, n });
            }
        }
        uf.union(a, b);
    }
    Ok(uf.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateCluster {
    /// Smallest row index in the cluster.
    pub cluster_id: usize,
    pub size: usize,
    pub member_ids: Vec<String>,
    #[serde(skip)]
    pub member_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_caption_similarity: Option<f64>,
}

/// Groups rows by label and keeps components with at least `min_size` members,
/// largest first, ties by ascending cluster id.
pub fn filter_clusters(labels: &[usize], ids: &[String], min_size: usize) -> Result<Vec<DuplicateCluster>> {
    if labels.len() != ids.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: ids.len(),
        });
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut clusters: Vec<DuplicateCluster> = groups
        .into_iter()
        .filter(|(_, members)| members.len() >= min_size)
        .map(|(label, members)| DuplicateCluster {
            cluster_id: label,
            size: members.len(),
            member_ids: members.iter().map(|&i| ids[i].clone()).collect(),
            member_indices: members,
            median_caption_similarity: None,
        })
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.cluster_id.cmp(&b.cluster_id)));
    Ok(clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub edge_threshold: f32,
    pub min_cluster_size: usize,
    pub block_rows: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            block_rows: DEFAULT_BLOCK_ROWS,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.edge_threshold > 0.0 && self.edge_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "edge_threshold must lie in (0, 1], got {}",
                self.edge_threshold
            )));
        }
        if self.min_cluster_size == 0 {
            return Err(Error::InvalidConfig("min_cluster_size must be at least 1".into()));
        }
        if self.block_rows == 0 {
            return Err(Error::InvalidConfig("block_rows must be at least 1".into()));
        }
        Ok(())
    }
}

/// Thresholded edges, union-find components and the size filter in one pass.
/// `on_edge` sees every edge as it is produced.
pub fn find_clusters_with(
    m: &EmbeddingMatrix,
    config: &ClusterConfig,
    mut on_edge: impl FnMut(&Edge),
) -> Result<Vec<DuplicateCluster>> {
    config.validate()?;
    let mut uf = UnionFind::new(m.len());
    threshold_edges(m, config.edge_threshold, config.block_rows, |e| {
        on_edge(&e);
        uf.union(e.u, e.v);
    })?;
    filter_clusters(&uf.labels(), m.ids(), config.min_cluster_size)
}

pub fn find_clusters(m: &EmbeddingMatrix, config: &ClusterConfig) -> Result<Vec<DuplicateCluster>> {
    find_clusters_with(m, config, |_| {})
}

pub fn write_clusters(w: &mut impl Write, clusters: &[DuplicateCluster]) -> std::io::Result<()> {
    for c in clusters {
        serde_json::to_writer(&mut *w, c)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_clusters(r: impl BufRead) -> Result<Vec<DuplicateCluster>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::MalformedLine {
            line: n + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn matrix(rows: Vec<Vec<f32>>) -> EmbeddingMatrix {
        let ids = (0..rows.len()).map(|i| format!("e{i}")).collect();
        EmbeddingMatrix::from_rows(ids, rows).unwrap()
    }

    fn random_unit(n: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
        let mut r = rng::from_seed(seed);
        let rows = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| r.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| (x / norm) as f32).collect()
            })
            .collect();
        matrix(rows)
    }

    #[test]
    fn tie_breaks_by_lower_index() {
        let h = std::f32::consts::FRAC_1_SQRT_2;
        let q = matrix(vec![vec![h, h]]);
        let r = matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let out = blocked_topk(&q, &r, 1, false, 4096).unwrap();
        assert_eq!(out[0].matches[0].ref_id, "e0");
        assert!((out[0].matches[0].score - std::f32::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        let both = blocked_topk(&q, &r, 2, false, 1).unwrap();
        assert_eq!(
            both[0].matches.iter().map(|m| m.ref_index).collect::<Vec<_>>(),
            vec![0, 1]
        );
    }

    #[test]
    fn exclude_self_never_matches_itself() {
        let m = random_unit(30, 8, 1);
        for rep in blocked_topk(&m, &m, 1, true, 7).unwrap() {
            assert_ne!(rep.query_id, rep.matches[0].ref_id);
        }
        let with_self = blocked_topk(&m, &m, 1, false, 7).unwrap();
        assert!(with_self.iter().all(|r| r.query_id == r.matches[0].ref_id));
    }

    #[test]
    fn topk_errors() {
        let a = random_unit(3, 4, 2);
        let b = random_unit(3, 5, 3);
        assert!(matches!(
            blocked_topk(&a, &b, 1, false, 8),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            blocked_topk(&a, &a, 4, false, 8),
            Err(Error::KTooLarge { k: 4, available: 3 })
        ));
        assert!(matches!(
            blocked_topk(&a, &a, 3, true, 8),
            Err(Error::KTooLarge { k: 3, available: 2 })
        ));
        let raw = matrix(vec![vec![3.0, 4.0]]);
        assert!(matches!(
            blocked_topk(&raw, &raw, 1, false, 8),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn block_size_invariance() {
        let q = random_unit(23, 6, 4);
        let r = random_unit(40, 6, 5);
        let reference = blocked_topk(&q, &r, 5, false, 10_000).unwrap();
        for block in [1, 7, 23, 40] {
            assert_eq!(blocked_topk(&q, &r, 5, false, block).unwrap(), reference);
        }
    }

    #[test]
    fn identical_and_orthogonal_edges() {
        let same = matrix(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(
            collect_edges(&same, 0.7, 4096).unwrap(),
            vec![Edge { u: 0, v: 1, score: 1.0 }]
        );
        let ortho = matrix(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(collect_edges(&ortho, 0.7, 4096).unwrap().is_empty());
    }

    #[test]
    fn edges_match_pairwise_scan() {
        let m = random_unit(200, 3, 6);
        let mut brute = Vec::new();
        for i in 0..200 {
            for j in i + 1..200 {
                let s: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(j))
                    .map(|(a, b)| f64::from(*a) * f64::from(*b))
                    .sum();
                if s >= 0.7 {
                    brute.push((i, j));
                }
            }
        }
        for block in [1, 13, 200] {
            let mut got: Vec<(usize, usize)> = collect_edges(&m, 0.7, block)
                .unwrap()
                .iter()
                .map(|e| (e.u, e.v))
                .collect();
            got.sort();
            assert_eq!(got, brute);
        }
    }

    #[test]
    fn edge_dump_layout() {
        let mut buf = Vec::new();
        write_edge(
            &mut buf,
            &Edge {
                u: 1,
                v: 258,
                score: 0.75,
            },
        )
        .unwrap();
        assert_eq!(&buf[..8], &[1, 0, 0, 0, 2, 1, 0, 0]);
        assert_eq!(&buf[8..], &0.75f32.to_le_bytes());
        assert_eq!(
            decode_edges(&buf),
            vec![Edge {
                u: 1,
                v: 258,
                score: 0.75
            }]
        );
    }

    #[test]
    fn components_small_cases() {
        let labels = connected_components([(0, 1), (1, 2)], 4).unwrap();
        assert_eq!(labels, vec![0, 0, 0, 3]);
        assert_eq!(connected_components([], 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            connected_components([(0, 5)], 5),
            Err(Error::EndpointOutOfRange { endpoint: 5, n: 5 })
        ));
        // label is the minimum member even when unions happen in the other direction
        assert_eq!(connected_components([(3, 2), (2, 1)], 4).unwrap(), vec![0, 1, 1, 1]);
    }

    fn bfs_partition(edges: &[(usize, usize)], n: usize) -> Vec<usize> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut label = vec![usize::MAX; n];
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let mut queue = std::collections::VecDeque::from([s]);
            label[s] = s;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x] {
                    if label[y] == usize::MAX {
                        label[y] = s;
                        queue.push_back(y);
                    }
                }
            }
        }
        label
    }

    proptest! {
        #[test]
        fn components_match_bfs(n in 1usize..200, raw in proptest::collection::vec((0usize..200, 0usize..200), 0..300)) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            prop_assert_eq!(connected_components(edges.iter().copied(), n).unwrap(), bfs_partition(&edges, n));
        }

        #[test]
        fn components_ignore_order_and_duplicates(n in 1usize..60, raw in proptest::collection::vec((0usize..60, 0usize..60), 0..80)) {
            let edges: Vec<_> = raw.into_iter().map(|(a, b)| (a % n, b % n)).collect();
            let base = connected_components(edges.iter().copied(), n).unwrap();
            let mut shuffled: Vec<_> = edges.iter().rev().map(|&(a, b)| (b, a)).collect();
            shuffled.extend(edges.iter().copied());
            prop_assert_eq!(connected_components(shuffled, n).unwrap(), base);
        }

        #[test]
        fn threshold_monotone(seed in 0u64..1000, t1 in -1.0f32..1.0, dt in 0.0f32..1.0) {
            let m = random_unit(40, 3, seed);
            let lo: std::collections::HashSet<_> = collect_edges(&m, t1, 9).unwrap().iter().map(|e| (e.u, e.v)).collect();
            let hi = collect_edges(&m, t1 + dt, 9).unwrap();
            prop_assert!(hi.iter().all(|e| lo.contains(&(e.u, e.v))));
        }
    }

    #[test]
    fn filter_boundary_is_inclusive() {
        let mut labels = vec![0; 3];
        labels.extend(std::iter::repeat_n(3, 250));
        labels.extend(std::iter::repeat_n(253, 251));
        let ids: Vec<String> = (0..labels.len()).map(|i| i.to_string()).collect();
        let clusters = filter_clusters(&labels, &ids, 250).unwrap();
        assert_eq!(
            clusters.iter().map(|c| (c.cluster_id, c.size)).collect::<Vec<_>>(),
            vec![(253, 251), (3, 250)]
        );
        assert_eq!(filter_clusters(&labels, &ids, 1).unwrap().len(), 3);
    }

    #[test]
    fn cluster_members_are_spanned_by_edges() {
        // three tight groups plus noise
        let mut r = rng::from_seed(9);
        let mut rows = Vec::new();
        for g in 0..3 {
            for _ in 0..12 {
                let mut v = vec![0f32; 8];
                v[g] = 1.0;
                for x in v.iter_mut().skip(3) {
                    *x = 0.1 * r.sample::<f32, _>(StandardNormal);
                }
                rows.push(v);
            }
        }
        let m = crate::store::normalize_rows(&matrix(rows)).unwrap();
        let cfg = ClusterConfig {
            edge_threshold: 0.7,
            min_cluster_size: 5,
            block_rows: 5,
        };
        let clusters = find_clusters(&m, &cfg).unwrap();
        assert_eq!(clusters.len(), 3);
        for c in &clusters {
            let pairs = c
                .member_indices
                .iter()
                .flat_map(|&a| c.member_indices.iter().map(move |&b| (a, b)));
            let edges: Vec<_> = pairs
                .filter(|&(a, b)| a < b && dot(m.row(a), m.row(b)) >= 0.7)
                .collect();
            let labels = connected_components(edges, m.len()).unwrap();
            assert!(c
                .member_indices
                .iter()
                .all(|&i| labels[i] == labels[c.member_indices[0]]));
        }
    }

    #[test]
    fn config_validation() {
        assert!(ClusterConfig::default().validate().is_ok());
        assert!(ClusterConfig {
            edge_threshold: 1.01,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ClusterConfig {
            edge_threshold: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ClusterConfig {
            min_cluster_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn cluster_jsonl_round_trip() {
        let c = DuplicateCluster {
            cluster_id: 4,
            size: 2,
            member_ids: vec!["a".into(), "b".into()],
            member_indices: vec![4, 9],
            median_caption_similarity: Some(0.25),
        };
        let mut buf = Vec::new();
        write_clusters(&mut buf, std::slice::from_ref(&c)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "{\"cluster_id\":4,\"size\":2,\"member_ids\":[\"a\",\"b\"],\"median_caption_similarity\":0.25}\n"
        );
        let back = read_clusters(buf.as_slice()).unwrap();
        assert_eq!(back[0].member_ids, c.member_ids);
    }
}
