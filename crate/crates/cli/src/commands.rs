use std::collections::{HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dupaudit_core::complexity::{self, ComplexityMetric, ComplexityScore, EntropyMode};
use dupaudit_core::manifest::{self, CaptionAssignment, DuplicationMode, TrainingManifest};
use dupaudit_core::metrics::{self, Correlation, CorrelationMethod, SimilarityReport};
use dupaudit_core::mitigate::{self, CaptionScheme, Phase, Strategy, TokenMode, TransformSpec, Vocab};
use dupaudit_core::rng::derive_seed;
use dupaudit_core::simgraph::{self, ClusterConfig};
use dupaudit_core::store::{self, CaptionRecord, EmbeddingMatrix};
use dupaudit_core::with_threads;

use crate::provenance::Provenance;
use crate::*;

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    if g.block_rows == 0 {
        bail!("--block-rows must be at least 1");
    }
    let threads = g.threads;
    with_threads(threads, move || match cli.command {
        Command::Cluster(a) => cluster(&g, a),
        Command::Simscore(a) => simscore(&g, a),
        Command::Selfsim(a) => selfsim(&g, a),
        Command::Complexity(a) => complexity_cmd(&g, a),
        Command::Mitigate(a) => mitigate_cmd(&g, a),
        Command::Manifest(a) => manifest_cmd(&g, a),
        Command::Sample(a) => sample(&g, a),
    })?
}

#[derive(Serialize)]
struct Config<'a, T: Serialize> {
    global: &'a GlobalArgs,
    #[serde(flatten)]
    args: &'a T,
}

fn provenance<T: Serialize>(command: &'static str, g: &GlobalArgs, args: &T) -> Result<Provenance> {
    Provenance::new(command, &Config { global: g, args })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    store::read_embeddings(path).with_context(|| format!("reading embeddings {}", path.display()))
}

fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>> {
    store::read_captions(path).with_context(|| format!("reading captions {}", path.display()))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), n + 1))?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct PoolLine {
    id: String,
    captions: Vec<String>,
}

fn read_pools(path: &Path) -> Result<HashMap<String, Vec<String>>> {
    let mut pools = HashMap::new();
    for p in read_jsonl::<PoolLine>(path)? {
        if pools.insert(p.id.clone(), p.captions).is_some() {
            bail!("{}: duplicate pool id {:?}", path.display(), p.id);
        }
    }
    Ok(pools)
}

fn load_vocab(path: Option<&PathBuf>) -> Result<Vocab> {
    match path {
        Some(p) => Vocab::load(p).with_context(|| format!("reading vocabulary {}", p.display())),
        None => Ok(Vocab::english()),
    }
}

fn cluster(g: &GlobalArgs, a: ClusterArgs) -> Result<()> {
    let config = ClusterConfig {
        edge_threshold: a.threshold,
        min_cluster_size: a.min_size,
        block_rows: g.block_rows,
    };
    config.validate()?;
    let mut prov = provenance("cluster", g, &a)?;
    prov.embedding_input(&a.embeddings)?;
    let emb = read_embeddings(&a.embeddings)?;

    let mut dump = a.edge_dump.as_deref().map(create).transpose()?;
    let mut dump_err = None;
    let mut clusters = simgraph::find_clusters_with(&emb, &config, |e| {
        if let (Some(w), None) = (dump.as_mut(), dump_err.as_ref()) {
            if let Err(err) = simgraph::write_edge(w, e) {
                dump_err = Some(err);
            }
        }
    })?;
    if let Some(err) = dump_err {
        return Err(err).context("writing edge dump");
    }
    if let Some(mut w) = dump {
        w.flush()?;
    }

    if let (Some(cap_path), Some(text_path)) = (&a.captions, &a.text_embeddings) {
        prov.input(cap_path)?;
        prov.embedding_input(text_path)?;
        let captions = read_captions(cap_path)?;
        let text = read_embeddings(text_path)?;
        let by_id: HashMap<&str, &CaptionRecord> = captions.iter().map(|c| (c.id.as_str(), c)).collect();
        let values: Vec<f64> = clusters
            .par_iter()
            .map(|c| {
                let seed = derive_seed(g.seed, c.cluster_id as u64);
                metrics::caption_cluster_similarity(c, &text, &by_id, a.pair_budget, seed)
            })
            .collect::<Result<_, _>>()?;
        for (c, v) in clusters.iter_mut().zip(values) {
            c.median_caption_similarity = Some(v);
        }
    }

    let mut w = create(&a.out)?;
    simgraph::write_clusters(&mut w, &clusters)?;
    w.flush()?;
    prov.write_sidecar(&a.out)?;
    eprintln!("{} clusters from {} rows", clusters.len(), emb.len());
    Ok(())
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Reads the `SimilarityReport` part of a simscore JSON file.
pub fn read_report(path: &Path) -> Result<SimilarityReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))
}

fn simscore(g: &GlobalArgs, a: SimscoreArgs) -> Result<()> {
    let mut prov = provenance("simscore", g, &a)?;
    prov.embedding_input(&a.generated)?;
    prov.embedding_input(&a.train)?;
    let generated = read_embeddings(&a.generated)?;
    let train = read_embeddings(&a.train)?;
    let report = metrics::similarity_report(
        &generated,
        &train,
        a.exclude_self,
        a.percentile,
        a.replication_threshold,
        g.block_rows,
    )?;
    write_json(
        &a.out,
        &Report {
            provenance: &prov,
            body: &report,
        },
    )?;
    if let Some(csv) = &a.csv {
        let mut w = create(csv)?;
        writeln!(w, "query_id,top1_ref_id,top1_score")?;
        for q in &report.per_query {
            writeln!(
                w,
                "{},{},{}",
                csv_field(&q.query_id),
                csv_field(&q.top1_ref_id),
                q.top1_score
            )?;
        }
        w.flush()?;
    }
    eprintln!(
        "dataset similarity {:.4}; {} of {} flagged",
        report.dataset_similarity,
        report.flagged_count,
        report.per_query.len()
    );
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[derive(Serialize)]
struct SelfsimReport {
    self_similarity: f64,
    percentile: f64,
    rows: usize,
}

fn selfsim(g: &GlobalArgs, a: SelfsimArgs) -> Result<()> {
    let mut prov = provenance("selfsim", g, &a)?;
    prov.embedding_input(&a.train)?;
    let train = read_embeddings(&a.train)?;
    let value = metrics::self_similarity_baseline(&train, a.percentile, g.block_rows)?;
    let body = SelfsimReport {
        self_similarity: value,
        percentile: a.percentile,
        rows: train.len(),
    };
    write_json(
        &a.out,
        &Report {
            provenance: &prov,
            body: &body,
        },
    )
}

#[derive(Deserialize)]
struct ImageLine {
    id: String,
    path: PathBuf,
}

fn image_inputs(a: &ComplexityArgs) -> Result<Vec<(String, PathBuf)>> {
    if let Some(m) = &a.manifest {
        let base = m.parent().unwrap_or(Path::new("."));
        return Ok(read_jsonl::<ImageLine>(m)?
            .into_iter()
            .map(|l| {
                let p = if l.path.is_absolute() {
                    l.path
                } else {
                    base.join(l.path)
                };
                (l.id, p)
            })
            .collect());
    }
    let dir = a
        .images
        .as_ref()
        .ok_or_else(|| anyhow!("--images or --manifest is required"))?;
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_owned(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Serialize)]
struct CorrelationEntry {
    r: f64,
    p_value: f64,
    p_display: String,
    n: usize,
}

impl From<Correlation> for CorrelationEntry {
    fn from(c: Correlation) -> Self {
        Self {
            r: c.r,
            p_value: c.p_value,
            p_display: c.p_display(),
            n: c.n,
        }
    }
}

#[derive(Serialize)]
struct CorrelationReport {
    method: MethodArg,
    entropy: CorrelationEntry,
    jpeg: CorrelationEntry,
}

fn complexity_cmd(g: &GlobalArgs, a: ComplexityArgs) -> Result<()> {
    let mut prov = provenance("complexity", g, &a)?;
    if let Some(m) = &a.manifest {
        prov.input(m)?;
    }
    let inputs = image_inputs(&a)?;
    let mode = match a.entropy_mode {
        EntropyModeArg::Luma => EntropyMode::Luma,
        EntropyModeArg::ChannelMean => EntropyMode::ChannelMean,
    };
    let quality = a.quality;
    let results: Vec<Result<ComplexityScore, String>> = inputs
        .par_iter()
        .map(|(id, path)| {
            complexity::load_image(path)
                .and_then(|img| complexity::score_image(id, &img, mode, quality))
                .map_err(|e| format!("{}: {e}", path.display()))
        })
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    for ((_, path), r) in inputs.iter().zip(results) {
        match r {
            Ok(s) => {
                prov.input(path)?;
                scores.push(s);
            }
            Err(msg) => {
                eprintln!("warning: skipping {msg}");
                prov.skipped.push(path.display().to_string());
            }
        }
    }
    if inputs.is_empty() {
        eprintln!("warning: no images found");
    }
    complexity::write_complexity_csv(create(&a.out)?, &scores)?;

    if let (Some(report_path), Some(out)) = (&a.report, &a.correlation_out) {
        prov.input(report_path)?;
        let report = read_report(report_path)?;
        let method = match a.method {
            MethodArg::Pearson => CorrelationMethod::Pearson,
            MethodArg::Spearman => CorrelationMethod::Spearman,
        };
        let entropy = complexity::complexity_correlation(&report, &scores, ComplexityMetric::Entropy, method)?;
        let jpeg = complexity::complexity_correlation(&report, &scores, ComplexityMetric::Jpeg, method)?;
        let body = CorrelationReport {
            method: a.method,
            entropy: entropy.into(),
            jpeg: jpeg.into(),
        };
        write_json(
            out,
            &Report {
                provenance: &prov,
                body: &body,
            },
        )?;
    }
    eprintln!("scored {} images, skipped {}", scores.len(), prov.skipped.len());
    prov.write_sidecar(&a.out)
}

fn is_emb1(path: &Path) -> Result<bool> {
    let mut magic = [0u8; 4];
    let mut f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let n = f.read(&mut magic)?;
    Ok(n == 4 && &magic == store::MAGIC)
}

#[derive(Serialize)]
struct MitigatedLine<'a> {
    id: &'a str,
    caption: &'a str,
    strategy: &'static str,
    seed: u64,
}

fn mitigate_cmd(g: &GlobalArgs, a: MitigateArgs) -> Result<()> {
    let strategy = match a.strategy {
        StrategyArg::Mc => Strategy::Mc,
        StrategyArg::Gn => Strategy::Gn,
        StrategyArg::Rc => Strategy::Rc,
        StrategyArg::Rt => Strategy::Rt,
        StrategyArg::Cwr => Strategy::Cwr,
        StrategyArg::Rna => Strategy::Rna,
    };
    let phase = match a.phase {
        PhaseArg::Train => Phase::Train,
        PhaseArg::Inference => Phase::Inference,
    };
    let mut spec = TransformSpec::new(strategy, phase, g.seed);
    if let Some(p) = a.prob {
        spec.probability = p;
    }
    if let Some(r) = a.repeats {
        spec.repeats = r;
    }
    spec.noise_scale = a.noise_scale;
    spec.number_range = a.number_range;
    spec.token_mode = match a.rt_mode {
        TokenModeArg::PerStep => TokenMode::PerStep,
        TokenModeArg::PerToken => TokenMode::PerToken,
    };
    spec.validate()?;

    let mut prov = provenance("mitigate", g, &a)?;
    let emb_input = is_emb1(&a.input)?;
    if strategy.is_embedding() != emb_input {
        bail!(
            "strategy {strategy} expects {} input, but {} is {}",
            if strategy.is_embedding() {
                "EMB1 embedding"
            } else {
                "caption JSONL"
            },
            a.input.display(),
            if emb_input { "an EMB1 file" } else { "not an EMB1 file" }
        );
    }

    if emb_input {
        prov.embedding_input(&a.input)?;
        let m = read_embeddings(&a.input)?;
        let rows: Vec<Vec<f32>> = m
            .rows()
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, row)| mitigate::gaussian_noise(row, spec.noise_scale, derive_seed(g.seed, i as u64)))
            .collect();
        let data = rows.concat();
        let out = EmbeddingMatrix::new(m.ids().to_vec(), data, m.dim())?;
        store::write_embeddings(&out, &a.out)?;
        return prov.write_sidecar(&a.out);
    }

    prov.input(&a.input)?;
    let records = read_captions(&a.input)?;
    let vocab = match strategy {
        Strategy::Rc | Strategy::Rt => Some(load_vocab(a.vocab.as_ref())?),
        _ => None,
    };
    let pools = match (&a.pools, strategy) {
        (Some(p), _) => {
            prov.input(p)?;
            Some(read_pools(p)?)
        }
        (None, Strategy::Mc) => bail!("--pools is required for mc"),
        (None, _) => None,
    };
    let outputs: Vec<(u64, String)> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let seed = derive_seed(g.seed, i as u64);
            let pool = match &pools {
                Some(p) if strategy == Strategy::Mc => {
                    // records without a pool entry keep their own caption
                    let extra = p.get(&rec.id).map(Vec::as_slice).unwrap_or_default();
                    let mut all = Vec::with_capacity(extra.len() + 1);
                    all.push(rec.text.clone());
                    all.extend(extra.iter().cloned());
                    Some(all)
                }
                _ => None,
            };
            let caption = spec.apply_caption(&rec.text, pool.as_deref(), vocab.as_ref(), seed)?;
            Ok((seed, caption))
        })
        .collect::<Result<_>>()?;

    let mut w = create(&a.out)?;
    for (rec, (seed, caption)) in records.iter().zip(&outputs) {
        serde_json::to_writer(
            &mut w,
            &MitigatedLine {
                id: &rec.id,
                caption,
                strategy: strategy.code(),
                seed: *seed,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    prov.write_sidecar(&a.out)
}

#[derive(Deserialize)]
struct ClassLine {
    id: String,
    class: String,
}

fn manifest_cmd(g: &GlobalArgs, a: ManifestArgs) -> Result<()> {
    let mut prov = provenance("manifest", g, &a)?;
    prov.input(&a.captions)?;
    let mut records = read_captions(&a.captions)?;

    let scheme = match a.caption_scheme {
        SchemeArg::Original => None,
        SchemeArg::Fixed => Some(CaptionScheme::Fixed),
        SchemeArg::Class => Some(CaptionScheme::Class),
        SchemeArg::Random => Some(CaptionScheme::Random),
    };
    if let Some(scheme) = scheme {
        let classes: HashMap<String, String> = match &a.classes {
            Some(p) => {
                prov.input(p)?;
                read_jsonl::<ClassLine>(p)?
                    .into_iter()
                    .map(|c| (c.id, c.class))
                    .collect()
            }
            None if scheme == CaptionScheme::Class => bail!("--classes is required for the class scheme"),
            None => HashMap::new(),
        };
        let vocab = match scheme {
            CaptionScheme::Random => Some(load_vocab(a.vocab.as_ref())?),
            _ => None,
        };
        for (i, rec) in records.iter_mut().enumerate() {
            let class = match scheme {
                CaptionScheme::Class => Some(
                    classes
                        .get(&rec.id)
                        .ok_or_else(|| anyhow!("no class for {:?}", rec.id))?
                        .as_str(),
                ),
                _ => None,
            };
            let text = mitigate::caption_scheme(&scheme, class, vocab.as_ref(), derive_seed(g.seed, i as u64))?;
            *rec = CaptionRecord::new(rec.id.clone(), text);
        }
    }

    let dup_ids: HashSet<String> = match &a.dups {
        Some(p) => {
            prov.input(p)?;
            store::read_token_list(p)?.into_iter().collect()
        }
        None => HashSet::new(),
    };
    let pools = match &a.pools {
        Some(p) => {
            prov.input(p)?;
            read_pools(p)?
        }
        None => HashMap::new(),
    };
    let mode = match a.mode {
        ModeArg::None => DuplicationMode::None,
        ModeArg::Full => DuplicationMode::Full,
        ModeArg::Partial => DuplicationMode::Partial,
    };
    let m = manifest::build_manifest(&records, &dup_ids, a.ddf, mode, &pools)?;
    let mut w = create(&a.out)?;
    if a.expand {
        manifest::write_jsonl(&mut w, &m.expand()?)?;
    } else {
        manifest::write_jsonl(&mut w, &m.rows)?;
    }
    w.flush()?;
    prov.write_sidecar(&a.out)
}

fn sample(g: &GlobalArgs, a: SampleArgs) -> Result<()> {
    let mut prov = provenance("sample", g, &a)?;
    prov.input(&a.manifest)?;
    let f = File::open(&a.manifest).with_context(|| format!("opening {}", a.manifest.display()))?;
    let m = TrainingManifest::from_rows(manifest::read_manifest_rows(BufReader::new(f))?)?;
    let assignment = match a.caption_assignment {
        AssignmentArg::RoundRobin => CaptionAssignment::RoundRobin,
        AssignmentArg::Iid => CaptionAssignment::Iid,
    };
    let draws = manifest::sample_epoch(&m, a.draws, g.seed, assignment)?;
    let mut w = create(&a.out)?;
    manifest::write_jsonl(&mut w, &draws)?;
    w.flush()?;
    prov.write_sidecar(&a.out)
}
