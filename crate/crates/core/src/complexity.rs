//! Image complexity: grayscale histogram entropy and JPEG size.
//!
//! Images are first standardized to 256 x 256 (shortest side resized
//! bilinearly to 256, then center-cropped).

use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;
use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{correlate, Correlation, CorrelationMethod, SimilarityReport};

pub const RESOLUTION: u32 = 256;
pub const DEFAULT_JPEG_QUALITY: u8 = 90;

/// Resizes the shortest side to 256 with bilinear sampling and center-crops to 256 x 256.
pub fn preprocess_image(img: &RgbImage) -> Result<RgbImage> {
    let (w, h) = img.dimensions();
    if w == 0 || h == 0 {
        return Err(Error::Image("has zero width or height".into()));
    }
    let scale = f64::from(RESOLUTION) / f64::from(w.min(h));
    let (rw, rh) = if w <= h {
        (RESOLUTION, ((f64::from(h) * scale).round() as u32).max(RESOLUTION))
    } else {
        (((f64::from(w) * scale).round() as u32).max(RESOLUTION), RESOLUTION)
    };
    let x0 = (rw - RESOLUTION) / 2;
    let y0 = (rh - RESOLUTION) / 2;
    let sx = f64::from(w) / f64::from(rw);
    let sy = f64::from(h) / f64::from(rh);

    let mut out = RgbImage::new(RESOLUTION, RESOLUTION);
    for oy in 0..RESOLUTION {
        let (ya, yb, fy) = sample_axis(f64::from(oy + y0), sy, h);
        for ox in 0..RESOLUTION {
            let (xa, xb, fx) = sample_axis(f64::from(ox + x0), sx, w);
            let p00 = img.get_pixel(xa, ya).0;
            let p10 = img.get_pixel(xb, ya).0;
            let p01 = img.get_pixel(xa, yb).0;
            let p11 = img.get_pixel(xb, yb).0;
            let mut px = [0u8; 3];
            for c in 0..3 {
                let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
                let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
                px[c] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
            }
            out.put_pixel(ox, oy, image::Rgb(px));
        }
    }
    Ok(out)
}

/// Pixel-center aligned source coordinate for output index `o`.
fn sample_axis(o: f64, scale: f64, len: u32) -> (u32, u32, f64) {
    let src = ((o + 0.5) * scale - 0.5).clamp(0.0, f64::from(len - 1));
    let a = src.floor() as u32;
    let b = (a + 1).min(len - 1);
    (a, b, src - f64::from(a))
}

/// Integer-rounded luma `0.299 R + 0.587 G + 0.114 B`.
pub fn luma(px: [u8; 3]) -> u8 {
    let [r, g, b] = px.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Shannon entropy in bits of a 256-bin histogram.
pub fn entropy_bits(hist: &[u64; 256]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EntropyMode {
    /// Histogram of integer luma values.
    #[default]
    Luma,
    /// Mean of the three per-channel histogram entropies.
    ChannelMean,
}

pub fn histogram_entropy(img: &RgbImage) -> f64 {
    histogram_entropy_with(img, EntropyMode::Luma)
}

pub fn histogram_entropy_with(img: &RgbImage, mode: EntropyMode) -> f64 {
    match mode {
        EntropyMode::Luma => {
            let mut hist = [0u64; 256];
            for p in img.pixels() {
                hist[luma(p.0) as usize] += 1;
            }
            entropy_bits(&hist)
        }
        EntropyMode::ChannelMean => {
            let mut hists = [[0u64; 256]; 3];
            for p in img.pixels() {
                for c in 0..3 {
                    hists[c][p.0[c] as usize] += 1;
                }
            }
            hists.iter().map(entropy_bits).sum::<f64>() / 3.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JpegSize {
    pub bytes: usize,
    pub bits_per_pixel: f64,
}

/// Encoded size with a baseline 4:2:0 JPEG encoder at `quality`.
pub fn jpeg_compressibility(img: &RgbImage, quality: u8) -> Result<JpegSize> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidConfig(format!(
            "jpeg quality must lie in 1..=100, got {quality}"
        )));
    }
    let (w, h) = img.dimensions();
    let (w16, h16) = match (u16::try_from(w), u16::try_from(h)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(Error::Jpeg(format!("{w}x{h} exceeds the JPEG size limit"))),
    };
    let mut buf = Vec::new();
    let mut enc = Encoder::new(&mut buf, quality);
    enc.set_sampling_factor(SamplingFactor::R_4_2_0);
    enc.set_progressive(false);
    enc.set_optimized_huffman_tables(false);
    enc.encode(img.as_raw(), w16, h16, ColorType::Rgb)
        .map_err(|e| Error::Jpeg(e.to_string()))?;
    Ok(JpegSize {
        bytes: buf.len(),
        bits_per_pixel: 8.0 * buf.len() as f64 / (f64::from(w) * f64::from(h)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub id: String,
    pub entropy_bits: f64,
    pub jpeg_bytes: usize,
    pub bits_per_pixel: f64,
}

pub fn score_image(id: &str, raw: &RgbImage, mode: EntropyMode, quality: u8) -> Result<ComplexityScore> {
    let img = preprocess_image(raw)?;
    let jpeg = jpeg_compressibility(&img, quality)?;
    Ok(ComplexityScore {
        id: id.to_owned(),
        entropy_bits: histogram_entropy_with(&img, mode),
        jpeg_bytes: jpeg.bytes,
        bits_per_pixel: jpeg.bits_per_pixel,
    })
}

pub fn load_image(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(img.to_rgb8())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityMetric {
    Entropy,
    Jpeg,
}

impl ComplexityMetric {
    fn value(self, s: &ComplexityScore) -> f64 {
        match self {
            ComplexityMetric::Entropy => s.entropy_bits,
            ComplexityMetric::Jpeg => s.jpeg_bytes as f64,
        }
    }
}

/// Correlates each query's top-1 score with the complexity of its matched training image.
pub fn complexity_correlation(
    report: &SimilarityReport,
    scores: &[ComplexityScore],
    metric: ComplexityMetric,
    method: CorrelationMethod,
) -> Result<Correlation> {
    let by_id: HashMap<&str, &ComplexityScore> = scores.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut x = Vec::with_capacity(report.per_query.len());
    let mut y = Vec::with_capacity(report.per_query.len());
    for q in &report.per_query {
        let s = by_id.get(q.top1_ref_id.as_str()).ok_or_else(|| Error::Missing {
            what: "complexity score",
            id: q.top1_ref_id.clone(),
        })?;
        x.push(q.top1_score);
        y.push(metric.value(s));
    }
    correlate(&x, &y, method)
}

pub fn write_complexity_csv<W: std::io::Write>(w: W, scores: &[ComplexityScore]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::io("complexity csv", std::io::Error::other(e));
    for s in scores {
        out.serialize(s).map_err(csv_err)?;
    }
    if scores.is_empty() {
        out.write_record(["id", "entropy_bits", "jpeg_bytes", "bits_per_pixel"])
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("complexity csv", e))
}

pub fn read_complexity_csv<R: std::io::Read>(r: R) -> Result<Vec<ComplexityScore>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::MalformedLine {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}
