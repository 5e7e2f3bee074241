//! Memorization and caption-similarity metrics.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::simgraph::{blocked_topk, dot, DuplicateCluster, MatchReport};
use crate::special::student_t_two_sided;
use crate::store::{CaptionRecord, EmbeddingMatrix};

pub const DEFAULT_PERCENTILE: f64 = 95.0;
pub const DEFAULT_REPLICATION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PAIR_BUDGET: usize = 2000;
/// Smallest p-value reported as a number; anything below is shown as `< 1e-300`.
pub const P_VALUE_FLOOR: f64 = 1e-300;

/// Linear-interpolation percentile: rank `p / 100 * (n - 1)` on the ascending scores.
pub fn dataset_similarity(scores: &[f64], percentile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(Error::InvalidConfig(format!(
            "percentile must lie in [0, 100], got {percentile}"
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = percentile / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryScore {
    pub query_id: String,
    pub top1_ref_id: String,
    pub top1_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flagged {
    pub ids: Vec<String>,
    pub rate: f64,
}

/// Queries whose top-1 score is at least `threshold`.
pub fn flag_replications(per_query: &[QueryScore], threshold: f64) -> Flagged {
    let ids: Vec<String> = per_query
        .iter()
        .filter(|q| q.top1_score >= threshold)
        .map(|q| q.query_id.clone())
        .collect();
    let rate = if per_query.is_empty() {
        0.0
    } else {
        ids.len() as f64 / per_query.len() as f64
    };
    Flagged { ids, rate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub dataset_similarity: f64,
    pub percentile: f64,
    pub replication_threshold: f64,
    pub flagged_count: usize,
    pub flagged_rate: f64,
    pub flagged: Vec<String>,
    pub per_query: Vec<QueryScore>,
}

impl SimilarityReport {
    pub fn from_matches(matches: &[MatchReport], percentile: f64, replication_threshold: f64) -> Result<Self> {
        let per_query: Vec<QueryScore> = matches
            .iter()
            .map(|m| {
                let top = m.top1().ok_or_else(|| Error::Missing {
                    what: "top-1 match",
                    id: m.query_id.clone(),
                })?;
                Ok(QueryScore {
                    query_id: m.query_id.clone(),
                    top1_ref_id: top.ref_id.clone(),
                    top1_score: f64::from(top.score),
                })
            })
            .collect::<Result<_>>()?;
        Self::from_scores(per_query, percentile, replication_threshold)
    }

    pub fn from_scores(per_query: Vec<QueryScore>, percentile: f64, replication_threshold: f64) -> Result<Self> {
        let scores: Vec<f64> = per_query.iter().map(|q| q.top1_score).collect();
        let dataset_similarity = dataset_similarity(&scores, percentile)?;
        let flagged = flag_replications(&per_query, replication_threshold);
        Ok(Self {
            dataset_similarity,
            percentile,
            replication_threshold,
            flagged_count: flagged.ids.len(),
            flagged_rate: flagged.rate,
            flagged: flagged.ids,
            per_query,
        })
    }
}

/// Generated-vs-training similarity: top-1 search, percentile and flags.
pub fn similarity_report(
    generated: &EmbeddingMatrix,
    train: &EmbeddingMatrix,
    exclude_self: bool,
    percentile: f64,
    replication_threshold: f64,
    block_rows: usize,
) -> Result<SimilarityReport> {
    let matches = blocked_topk(generated, train, 1, exclude_self, block_rows)?;
    SimilarityReport::from_matches(&matches, percentile, replication_threshold)
}

/// Percentile of each training row's best match among the other training rows.
pub fn self_similarity_baseline(train: &EmbeddingMatrix, percentile: f64, block_rows: usize) -> Result<f64> {
    if train.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "self-similarity needs at least 2 rows, got {}",
            train.len()
        )));
    }
    let matches = blocked_topk(train, train, 1, true, block_rows)?;
    let scores: Vec<f64> = matches.iter().map(|m| f64::from(m.matches[0].score)).collect();
    dataset_similarity(&scores, percentile)
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Intersection over union of the two unigram sets; 1.0 when both are empty.
pub fn unigram_jaccard(a: &CaptionRecord, b: &CaptionRecord) -> f64 {
    jaccard(&a.unigrams, &b.unigrams)
}

/// Midpoint of the two central values for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Maps a linear index in `0..n*(n-1)/2` to the pair `(i, j)`, `i < j`, in row-major order.
fn unrank_pair(mut idx: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    let mut row = n - 1;
    while idx >= row {
        idx -= row;
        i += 1;
        row -= 1;
    }
    (i, i + 1 + idx)
}

/// Median over member pairs of `dot(text_i, text_j) * jaccard(i, j)`.
///
/// Members are visited in sorted id order. When there are more than
/// `pair_budget` pairs, `pair_budget` distinct pairs are drawn uniformly with `seed`.
pub fn caption_cluster_similarity(
    cluster: &DuplicateCluster,
    text_emb: &EmbeddingMatrix,
    captions: &HashMap<&str, &CaptionRecord>,
    pair_budget: usize,
    seed: u64,
) -> Result<f64> {
    text_emb.require_normalized()?;
    let emb_index = text_emb.index();
    let mut members: Vec<&str> = cluster.member_ids.iter().map(String::as_str).collect();
    members.sort_unstable();
    let mut resolved = Vec::with_capacity(members.len());
    for id in members {
        let row = *emb_index.get(id).ok_or_else(|| Error::Missing {
            what: "text embedding",
            id: id.to_owned(),
        })?;
        let cap = *captions.get(id).ok_or_else(|| Error::Missing {
            what: "caption",
            id: id.to_owned(),
        })?;
        resolved.push((text_emb.row(row), cap));
    }
    let n = resolved.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "cluster {} needs at least two members",
            cluster.cluster_id
        )));
    }
    let total = n * (n - 1) / 2;
    let pair_value = |(i, j): (usize, usize)| {
        let (ea, ca) = resolved[i];
        let (eb, cb) = resolved[j];
        f64::from(dot(ea, eb)) * unigram_jaccard(ca, cb)
    };
    let mut values: Vec<f64> = if pair_budget == 0 || total <= pair_budget {
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(pair_value)
            .collect()
    } else {
        let mut r = rng::from_seed(seed);
        let mut picked = index::sample(&mut r, total, pair_budget).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|k| pair_value(unrank_pair(k, n))).collect()
    };
    Ok(median(&mut values).expect("at least one pair"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value, floored at [`P_VALUE_FLOOR`].
    pub p_value: f64,
    pub n: usize,
}

impl Correlation {
    pub fn p_underflow(&self) -> bool {
        self.p_value <= P_VALUE_FLOOR
    }

    pub fn p_display(&self) -> String {
        if self.p_underflow() {
            "< 1e-300".to_owned()
        } else {
            format!("{:e}", self.p_value)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    #[default]
    Pearson,
    Spearman,
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(Error::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation `r` over `n` points, floored at [`P_VALUE_FLOOR`].
pub fn p_value_from_r(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        student_t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    p.max(P_VALUE_FLOOR)
}

fn check_series(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidConfig(format!(
            "correlation needs n >= 3, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// Pearson r with a two-sided p from `t = r * sqrt((n - 2) / (1 - r^2))` on n - 2 degrees of freedom.
pub fn pearson_with_pvalue(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_series(x, y)?;
    let r = pearson_r(x, y)?;
    Ok(Correlation {
        r,
        p_value: p_value_from_r(r, x.len()),
        n: x.len(),
    })
}

/// Ranks with ties assigned their average rank (1-based).
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson on average ranks, with the same t approximation for p.
pub fn spearman_with_pvalue(x: &[f64], y: &[f64]) -> Result<Correlation> {
    check_series(x, y)?;
    pearson_with_pvalue(&average_ranks(x), &average_ranks(y))
}

pub fn correlate(x: &[f64], y: &[f64], method: CorrelationMethod) -> Result<Correlation> {
    match method {
        CorrelationMethod::Pearson => pearson_with_pvalue(x, y),
        CorrelationMethod::Spearman => spearman_with_pvalue(x, y),
    }
}
