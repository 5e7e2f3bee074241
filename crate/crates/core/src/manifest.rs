//! Duplication-aware training manifests.
//!
//! Duplicated images are not copied; they carry a sampling weight equal to
//! the data duplication factor (ddf), so they are `ddf` times more likely to
//! be drawn than an ordinary image. In partial mode a duplicated image also
//! carries a caption pool, and successive draws of it cycle through the pool.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::store::CaptionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DuplicationMode {
    #[default]
    None,
    /// Image and caption duplicated together.
    Full,
    /// Image duplicated with a different caption per occurrence.
    Partial,
}

/// How a partial-mode draw picks from the caption pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionAssignment {
    /// Cycle through the pool from a seeded offset.
    #[default]
    RoundRobin,
    /// Independent uniform choice per draw.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub caption: String,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_pool: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub rows: Vec<ManifestRow>,
    pub mode: DuplicationMode,
    pub ddf: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Draw {
    pub image_id: String,
    pub caption: String,
}

/// Builds one row per record; rows for `dup_ids` get weight `ddf`, the rest weight 1.
pub fn build_manifest(
    records: &[CaptionRecord],
    dup_ids: &HashSet<String>,
    ddf: f64,
    mode: DuplicationMode,
    caption_pools: &HashMap<String, Vec<String>>,
) -> Result<TrainingManifest> {
    if !(ddf >= 1.0 && ddf.is_finite()) {
        return Err(Error::InvalidConfig(format!("ddf must be finite and >= 1, got {ddf}")));
    }
    let known: HashSet<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut unknown: Vec<&String> = dup_ids.iter().filter(|id| !known.contains(id.as_str())).collect();
    unknown.sort();
    if let Some(id) = unknown.first() {
        return Err(Error::UnknownId((*id).clone()));
    }

    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let is_dup = mode != DuplicationMode::None && dup_ids.contains(&rec.id);
        let caption_pool = if is_dup && mode == DuplicationMode::Partial {
            let pool = caption_pools
                .get(&rec.id)
                .ok_or_else(|| Error::SingletonPool(rec.id.clone()))?;
            let distinct: HashSet<&String> = pool.iter().collect();
            if distinct.len() < 2 {
                return Err(Error::SingletonPool(rec.id.clone()));
            }
            Some(pool.clone())
        } else {
            None
        };
        rows.push(ManifestRow {
            image_id: rec.id.clone(),
            caption: rec.text.clone(),
            weight: if is_dup { ddf } else { 1.0 },
            caption_pool,
        });
    }
    Ok(TrainingManifest { rows, mode, ddf })
}

impl TrainingManifest {
    /// Flattens weights into repeated rows; partial rows cycle through their pool.
    /// Every weight must be a whole number.
    pub fn expand(&self) -> Result<Vec<Draw>> {
        let mut out = Vec::new();
        for row in &self.rows {
            if row.weight.fract() != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "cannot expand non-integer weight {} for {:?}",
                    row.weight, row.image_id
                )));
            }
            for k in 0..row.weight as usize {
                let caption = match &row.caption_pool {
                    Some(pool) => pool[k % pool.len()].clone(),
                    None => row.caption.clone(),
                };
                out.push(Draw {
                    image_id: row.image_id.clone(),
                    caption,
                });
            }
        }
        Ok(out)
    }
}

/// `n_draws` weighted draws with replacement.
pub fn sample_epoch(
    m: &TrainingManifest,
    n_draws: usize,
    seed: u64,
    assignment: CaptionAssignment,
) -> Result<Vec<Draw>> {
    if m.rows.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    if n_draws == 0 {
        return Err(Error::InvalidConfig("n_draws must be at least 1".into()));
    }
    let dist = WeightedIndex::new(m.rows.iter().map(|r| r.weight))
        .map_err(|e| Error::InvalidConfig(format!("manifest weights: {e}")))?;
    // round-robin cursors start at a per-row seeded offset
    let mut cursor: Vec<usize> = m
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| match &row.caption_pool {
            Some(pool) => rng::from_seed(rng::derive_seed(seed, i as u64)).random_range(0..pool.len()),
            None => 0,
        })
        .collect();
    let mut r = rng::from_seed(seed);
    let mut out = Vec::with_capacity(n_draws);
    for _ in 0..n_draws {
        let i = dist.sample(&mut r);
        let row = &m.rows[i];
        let caption = match (&row.caption_pool, assignment) {
            (None, _) => row.caption.clone(),
            (Some(pool), CaptionAssignment::RoundRobin) => {
                let c = pool[cursor[i]].clone();
                cursor[i] = (cursor[i] + 1) % pool.len();
                c
            }
            (Some(pool), CaptionAssignment::Iid) => pool.choose(&mut r).expect("pool has >= 2 captions").clone(),
        };
        out.push(Draw {
            image_id: row.image_id.clone(),
            caption,
        });
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(w: &mut impl Write, rows: &[T]) -> std::io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *w, row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_manifest_rows(r: impl BufRead) -> Result<Vec<ManifestRow>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let bad = |message: String| Error::MalformedLine { line: n + 1, message };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

impl TrainingManifest {
    /// Rebuilds a manifest from its rows; the mode is inferred from the weights and pools.
    pub fn from_rows(rows: Vec<ManifestRow>) -> Result<Self> {
        if let Some(bad) = rows.iter().find(|r| !(r.weight > 0.0 && r.weight.is_finite())) {
            return Err(Error::InvalidConfig(format!(
                "weight for {:?} must be positive",
                bad.image_id
            )));
        }
        let ddf = rows.iter().map(|r| r.weight).fold(1.0, f64::max);
        let mode = if rows.iter().any(|r| r.caption_pool.is_some()) {
            DuplicationMode::Partial
        } else if ddf > 1.0 {
            DuplicationMode::Full
        } else {
            DuplicationMode::None
        };
        Ok(Self { rows, mode, ddf })
    }
}
