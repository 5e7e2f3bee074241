//! Python bindings: `import dupaudit`.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dupaudit_core::complexity::{self, EntropyMode};
use dupaudit_core::manifest::{self as core_manifest, CaptionAssignment, DuplicationMode, TrainingManifest};
use dupaudit_core::metrics;
use dupaudit_core::mitigate::{self, Phase, Strategy, TokenMode, TransformSpec, Vocab};
use dupaudit_core::simgraph::{self, ClusterConfig};
use dupaudit_core::store;
use dupaudit_core::{CaptionRecord, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn bad_value(msg: impl Into<String>) -> PyErr {
    PyValueError::new_err(msg.into())
}

/// Row-major float32 embedding matrix with string ids.
#[pyclass(name = "EmbeddingMatrix", module = "dupaudit", frozen)]
struct PyEmbeddingMatrix {
    inner: store::EmbeddingMatrix,
}

#[pymethods]
impl PyEmbeddingMatrix {
    #[new]
    fn new(ids: Vec<String>, rows: Vec<Vec<f32>>) -> PyResult<Self> {
        let inner = store::EmbeddingMatrix::from_rows(ids, rows).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Reads an EMB1 file and its `.ids` sidecar.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: store::read_embeddings(&path).map_err(py_err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        store::write_embeddings(&self.inner, &path).map_err(py_err)
    }

    /// Copy with every row scaled to unit L2 norm.
    fn normalized(&self) -> PyResult<Self> {
        Ok(Self {
            inner: store::normalize_rows(&self.inner).map_err(py_err)?,
        })
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner.ids().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn is_normalized(&self) -> bool {
        self.inner.is_normalized()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.inner.len() {
            return Err(bad_value(format!("row {i} out of range for {} rows", self.inner.len())));
        }
        Ok(self.inner.row(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingMatrix(rows={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

type TopK = Vec<(String, Vec<(String, usize, f32)>)>;

/// Exact top-k cosine search: one `(query_id, [(ref_id, ref_index, score), ...])` per query.
#[pyfunction]
#[pyo3(signature = (query, reference, k, exclude_self=false, block_rows=simgraph::DEFAULT_BLOCK_ROWS))]
fn blocked_topk(
    py: Python<'_>,
    query: &PyEmbeddingMatrix,
    reference: &PyEmbeddingMatrix,
    k: usize,
    exclude_self: bool,
    block_rows: usize,
) -> PyResult<TopK> {
    let reports = py
        .detach(|| simgraph::blocked_topk(&query.inner, &reference.inner, k, exclude_self, block_rows))
        .map_err(py_err)?;
    Ok(reports
        .into_iter()
        .map(|r| {
            let matches = r
                .matches
                .into_iter()
                .map(|m| (m.ref_id, m.ref_index, m.score))
                .collect();
            (r.query_id, matches)
        })
        .collect())
}

/// Duplicate clusters as dicts `{cluster_id, size, member_ids}`, largest first.
#[pyfunction]
#[pyo3(signature = (matrix, threshold=simgraph::DEFAULT_EDGE_THRESHOLD, min_size=simgraph::DEFAULT_MIN_CLUSTER_SIZE, block_rows=simgraph::DEFAULT_BLOCK_ROWS))]
fn find_clusters<'py>(
    py: Python<'py>,
    matrix: &PyEmbeddingMatrix,
    threshold: f32,
    min_size: usize,
    block_rows: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let config = ClusterConfig {
        edge_threshold: threshold,
        min_cluster_size: min_size,
        block_rows,
    };
    let clusters = py
        .detach(|| simgraph::find_clusters(&matrix.inner, &config))
        .map_err(py_err)?;
    clusters
        .into_iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("cluster_id", c.cluster_id)?;
            d.set_item("size", c.size)?;
            d.set_item("member_ids", c.member_ids)?;
            Ok(d)
        })
        .collect()
}

/// Connected-component labels (smallest member index) for an edge list over `n` nodes.
#[pyfunction]
fn connected_components(edges: Vec<(usize, usize)>, n: usize) -> PyResult<Vec<usize>> {
    simgraph::connected_components(edges, n).map_err(py_err)
}

/// Percentile (linear interpolation) of top-1 scores.
#[pyfunction]
#[pyo3(signature = (scores, percentile=metrics::DEFAULT_PERCENTILE))]
fn dataset_similarity(scores: Vec<f64>, percentile: f64) -> PyResult<f64> {
    metrics::dataset_similarity(&scores, percentile).map_err(py_err)
}

/// `(dataset_similarity, flagged_rate, [(query_id, top1_ref_id, top1_score), ...])`.
#[pyfunction]
#[pyo3(signature = (generated, train, exclude_self=false, percentile=metrics::DEFAULT_PERCENTILE, replication_threshold=metrics::DEFAULT_REPLICATION_THRESHOLD, block_rows=simgraph::DEFAULT_BLOCK_ROWS))]
#[allow(clippy::type_complexity)]
fn similarity_report(
    py: Python<'_>,
    generated: &PyEmbeddingMatrix,
    train: &PyEmbeddingMatrix,
    exclude_self: bool,
    percentile: f64,
    replication_threshold: f64,
    block_rows: usize,
) -> PyResult<(f64, f64, Vec<(String, String, f64)>)> {
    let report = py
        .detach(|| {
            metrics::similarity_report(
                &generated.inner,
                &train.inner,
                exclude_self,
                percentile,
                replication_threshold,
                block_rows,
            )
        })
        .map_err(py_err)?;
    let per_query = report
        .per_query
        .into_iter()
        .map(|q| (q.query_id, q.top1_ref_id, q.top1_score))
        .collect();
    Ok((report.dataset_similarity, report.flagged_rate, per_query))
}

/// Jaccard similarity of the two captions' unigram sets.
#[pyfunction]
fn unigram_jaccard(a: &str, b: &str) -> f64 {
    metrics::unigram_jaccard(&CaptionRecord::new("a", a), &CaptionRecord::new("b", b))
}

/// Pearson `(r, two-sided p)`.
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let c = metrics::pearson_with_pvalue(&x, &y).map_err(py_err)?;
    Ok((c.r, c.p_value))
}

/// Spearman `(rho, two-sided p)` with average ranks for ties.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let c = metrics::spearman_with_pvalue(&x, &y).map_err(py_err)?;
    Ok((c.r, c.p_value))
}

/// Entropy (bits) and JPEG size of an image file after standardization.
#[pyfunction]
#[pyo3(signature = (path, quality=complexity::DEFAULT_JPEG_QUALITY, entropy_mode="luma"))]
fn image_complexity<'py>(
    py: Python<'py>,
    path: PathBuf,
    quality: u8,
    entropy_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match entropy_mode {
        "luma" => EntropyMode::Luma,
        "channel-mean" => EntropyMode::ChannelMean,
        other => return Err(bad_value(format!("unknown entropy mode {other:?}"))),
    };
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_owned();
    let score = py
        .detach(|| complexity::load_image(&path).and_then(|img| complexity::score_image(&id, &img, mode, quality)))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("id", score.id)?;
    d.set_item("entropy_bits", score.entropy_bits)?;
    d.set_item("jpeg_bytes", score.jpeg_bytes)?;
    d.set_item("bits_per_pixel", score.bits_per_pixel)?;
    Ok(d)
}

/// Applies a caption strategy (`mc`, `rc`, `rt`, `cwr`, `rna`) to one caption.
#[pyfunction]
#[pyo3(signature = (strategy, caption, seed=0, prob=None, repeats=None, phase="train", pool=None, vocab=None, number_range=mitigate::DEFAULT_NUMBER_RANGE, token_mode="per-step"))]
#[allow(clippy::too_many_arguments)]
fn mitigate_caption(
    strategy: &str,
    caption: &str,
    seed: u64,
    prob: Option<f64>,
    repeats: Option<usize>,
    phase: &str,
    pool: Option<Vec<String>>,
    vocab: Option<Vec<String>>,
    number_range: u64,
    token_mode: &str,
) -> PyResult<String> {
    let strategy: Strategy = strategy.parse().map_err(py_err)?;
    let phase = match phase {
        "train" => Phase::Train,
        "inference" => Phase::Inference,
        other => return Err(bad_value(format!("unknown phase {other:?}"))),
    };
    let mut spec = TransformSpec::new(strategy, phase, seed);
    if let Some(p) = prob {
        spec.probability = p;
    }
    if let Some(r) = repeats {
        spec.repeats = r;
    }
    spec.number_range = number_range;
    spec.token_mode = match token_mode {
        "per-step" => TokenMode::PerStep,
        "per-token" => TokenMode::PerToken,
        other => return Err(bad_value(format!("unknown token mode {other:?}"))),
    };
    spec.validate().map_err(py_err)?;
    let vocab = match vocab {
        Some(v) => Vocab::new(v).map_err(py_err)?,
        None => Vocab::english(),
    };
    spec.apply_caption(caption, pool.as_deref(), Some(&vocab), seed)
        .map_err(py_err)
}

/// `emb + noise_scale * N(0, 1)` per coordinate.
#[pyfunction]
#[pyo3(signature = (embedding, noise_scale=mitigate::DEFAULT_NOISE_SCALE, seed=0))]
fn gaussian_noise(embedding: Vec<f32>, noise_scale: f64, seed: u64) -> Vec<f32> {
    mitigate::gaussian_noise(&embedding, noise_scale, seed)
}

/// Weighted training manifest; duplicated images carry weight `ddf`.
#[pyclass(name = "Manifest", module = "dupaudit", frozen)]
struct PyManifest {
    inner: TrainingManifest,
}

#[pymethods]
impl PyManifest {
    /// `captions` is a list of `(image_id, caption)`; `mode` is `none`, `full` or `partial`.
    #[new]
    #[pyo3(signature = (captions, dup_ids, ddf=1.0, mode="full", pools=None))]
    fn new(
        captions: Vec<(String, String)>,
        dup_ids: Vec<String>,
        ddf: f64,
        mode: &str,
        pools: Option<HashMap<String, Vec<String>>>,
    ) -> PyResult<Self> {
        let mode = match mode {
            "none" => DuplicationMode::None,
            "full" => DuplicationMode::Full,
            "partial" => DuplicationMode::Partial,
            other => return Err(bad_value(format!("unknown duplication mode {other:?}"))),
        };
        let records: Vec<CaptionRecord> = captions.into_iter().map(|(id, c)| CaptionRecord::new(id, c)).collect();
        let dups: HashSet<String> = dup_ids.into_iter().collect();
        let inner =
            core_manifest::build_manifest(&records, &dups, ddf, mode, &pools.unwrap_or_default()).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// `(image_id, caption, weight)` per row.
    #[getter]
    fn rows(&self) -> Vec<(String, String, f64)> {
        self.inner
            .rows
            .iter()
            .map(|r| (r.image_id.clone(), r.caption.clone(), r.weight))
            .collect()
    }

    /// `n_draws` weighted draws with replacement as `(image_id, caption)`.
    #[pyo3(signature = (n_draws, seed=0, assignment="round-robin"))]
    fn sample(&self, n_draws: usize, seed: u64, assignment: &str) -> PyResult<Vec<(String, String)>> {
        let assignment = match assignment {
            "round-robin" => CaptionAssignment::RoundRobin,
            "iid" => CaptionAssignment::Iid,
            other => return Err(bad_value(format!("unknown caption assignment {other:?}"))),
        };
        let draws = core_manifest::sample_epoch(&self.inner, n_draws, seed, assignment).map_err(py_err)?;
        Ok(draws.into_iter().map(|d| (d.image_id, d.caption)).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }
}

#[pymodule]
fn dupaudit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyEmbeddingMatrix>()?;
    m.add_class::<PyManifest>()?;
    m.add_function(wrap_pyfunction!(blocked_topk, m)?)?;
    m.add_function(wrap_pyfunction!(find_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(connected_components, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(similarity_report, m)?)?;
    m.add_function(wrap_pyfunction!(unigram_jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(image_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(mitigate_caption, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_noise, m)?)?;
    Ok(())
}
