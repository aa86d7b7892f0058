//! Corpus ingestion: WAV loading, manifests, additive noise at a target SNR,
//! fold splitting and multi-rater agreement weighting.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// An emotion category name. Ordering of labels is carried by the label set
/// a classifier was declared with, not by the label itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmotionLabel(String);

impl EmotionLabel {
    pub fn new(name: impl Into<String>) -> Self {
        EmotionLabel(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EmotionLabel {
    fn from(s: &str) -> Self {
        EmotionLabel(s.to_string())
    }
}

/// Per-clip metadata carried alongside the samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClipMeta {
    pub id: String,
    pub emotion: Option<EmotionLabel>,
    pub speaker: Option<String>,
    /// Recording sequence index; consecutive values mark adjacent utterances.
    pub order: Option<i64>,
}

/// Mono PCM audio normalized to [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub meta: ClipMeta,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        AudioClip {
            samples,
            sample_rate,
            meta: ClipMeta::default(),
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole clip.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

fn read_u32le(b: &[u8], at: usize) -> Option<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

fn read_u16le(b: &[u8], at: usize) -> Option<u16> {
    b.get(at..at + 2).map(|s| u16::from_le_bytes([s[0], s[1]]))
}

/// Loads a RIFF/WAVE file containing 16-bit signed PCM, single channel.
/// Samples are scaled by 1/32768 so every amplitude lies in [-1, 1).
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    let clip = parse_wav(&bytes)?;
    Ok(AudioClip {
        meta: ClipMeta {
            id: path
                .as_ref()
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            ..ClipMeta::default()
        },
        ..clip
    })
}

/// Parses WAV bytes; see [`load_wav`].
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("not a RIFF/WAVE file".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (audio_format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32le(bytes, pos + 4)
            .ok_or_else(|| Error::Format("truncated chunk header".into()))? as usize;
        let body = bytes
            .get(pos + 8..pos + 8 + size)
            .ok_or_else(|| Error::Format("chunk extends past end of file".into()))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::Format("fmt chunk too short".into()));
                }
                fmt = Some((
                    read_u16le(body, 0).unwrap(),
                    read_u16le(body, 2).unwrap(),
                    read_u32le(body, 4).unwrap(),
                    read_u16le(body, 14).unwrap(),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos += 8 + size + (size & 1);
    }
    let (audio_format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::Format("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("missing data chunk".into()))?;
    if audio_format != 1 {
        return Err(Error::Unsupported(format!(
            "audio format {audio_format}, only PCM (1) supported"
        )));
    }
    if channels != 1 {
        return Err(Error::Unsupported(format!(
            "{channels} channels, only mono supported"
        )));
    }
    if bits != 16 {
        return Err(Error::Unsupported(format!(
            "{bits}-bit samples, only 16-bit supported"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    if data.len() % 2 != 0 {
        return Err(Error::Format("data chunk length must be even".into()));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    if samples.is_empty() {
        return Err(Error::Format("empty data chunk".into()));
    }
    Ok(AudioClip::new(samples, sample_rate))
}

/// Writes a clip back out as 16-bit mono PCM, clamping to [-1, 1).
pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let n = clip.samples.len() as u32;
    let data_len = n * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Noise kinds available for injection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    WhiteGaussian,
}

/// Adds seeded white Gaussian noise scaled so the clip-level SNR equals
/// `snr_db`. Passing `f64::INFINITY` returns the input unchanged.
pub fn inject_noise(clip: &AudioClip, snr_db: f64, _kind: NoiseKind, seed: u64) -> Result<AudioClip> {
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    let signal_power = clip.power();
    if signal_power <= 0.0 {
        return Err(Error::Argument(
            "SNR undefined for zero-power input".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..clip.samples.len())
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let raw_power = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
    let target_power = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (target_power / raw_power).sqrt();
    let samples = clip
        .samples
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + scale * n)
        .collect();
    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        meta: clip.meta.clone(),
    })
}

/// M raters x N samples x K per-emotion intensity ratings on the nine-point
/// scale {1,3,5,7,9}.
#[derive(Clone, Debug)]
pub struct RatingMatrix {
    /// `entries[rater][sample]` is a K-vector of intensities.
    pub entries: Vec<Vec<Vec<f64>>>,
}

impl RatingMatrix {
    pub fn validate(&self) -> Result<()> {
        let m = self.entries.len();
        if m == 0 {
            return Err(Error::Argument("no raters".into()));
        }
        let n = self.entries[0].len();
        let k = self.entries[0].first().map(|v| v.len()).unwrap_or(0);
        if n == 0 || k == 0 {
            return Err(Error::Argument("empty rating matrix".into()));
        }
        for row in &self.entries {
            if row.len() != n {
                return Err(Error::Argument("ragged sample counts across raters".into()));
            }
            for e in row {
                if e.len() != k {
                    return Err(Error::Argument("ragged emotion dimension".into()));
                }
                for &v in e {
                    if !matches!(v as i64, 1 | 3 | 5 | 7 | 9) || v.fract() != 0.0 {
                        return Err(Error::Argument(format!(
                            "intensity {v} not on the nine-point scale {{1,3,5,7,9}}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Output of [`rater_weights`].
#[derive(Clone, Debug)]
pub struct RaterFusion {
    /// One normalized weight per rater, summing to 1.
    pub weights: Vec<f64>,
    /// Symmetric rater-consistency matrix with unit diagonal.
    pub consistency: Vec<Vec<f64>>,
    /// Fused per-sample intensity vectors.
    pub fused: Vec<Vec<f64>>,
    /// Dominant-emotion index per sample (argmax of the fused vector,
    /// ties broken by the lowest emotion index).
    pub labels: Vec<usize>,
    /// Sample indices where the argmax was tied.
    pub ties: Vec<usize>,
}

/// Similarity of two intensity vectors: the product over emotion components
/// of min/max.
pub fn rating_similarity(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (lo, hi) = if x < y { (x, y) } else { (y, x) };
            lo / hi
        })
        .product()
}

/// Computes per-rater fusion weights from pairwise rating consistency and the
/// weighted fused intensity vector per sample.
pub fn rater_weights(ratings: &RatingMatrix) -> Result<RaterFusion> {
    let m = ratings.entries.len();
    if m < 2 {
        return Err(Error::Argument(
            "degenerate panel: at least two raters are required".into(),
        ));
    }
    let n = ratings.entries[0].len();
    for row in &ratings.entries {
        if row.len() != n {
            return Err(Error::Argument("ragged sample counts across raters".into()));
        }
        for e in row {
            for &v in e {
                if v < 1.0 {
                    return Err(Error::Argument(
                        "intensities must be >= 1 for the min/max similarity".into(),
                    ));
                }
            }
        }
    }

    // Consistency matrix: mean over samples of the per-sample similarity.
    let mut rho = vec![vec![1.0; m]; m];
    for p in 0..m {
        for q in (p + 1)..m {
            let avg = (0..n)
                .map(|j| rating_similarity(&ratings.entries[p][j], &ratings.entries[q][j]))
                .sum::<f64>()
                / n as f64;
            rho[p][q] = avg;
            rho[q][p] = avg;
        }
    }

    // Mean agreement of each rater with the rest, then normalize.
    let mean_rho: Vec<f64> = (0..m)
        .map(|i| {
            (0..m).filter(|&j| j != i).map(|j| rho[i][j]).sum::<f64>() / (m - 1) as f64
        })
        .collect();
    let total: f64 = mean_rho.iter().sum();
    let weights: Vec<f64> = mean_rho.iter().map(|r| r / total).collect();

    let k = ratings.entries[0][0].len();
    let mut fused = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut ties = Vec::new();
    for j in 0..n {
        let mut e = vec![0.0; k];
        for (i, w) in weights.iter().enumerate() {
            for (c, slot) in e.iter_mut().enumerate() {
                *slot += w * ratings.entries[i][j][c];
            }
        }
        let mut best = 0;
        let mut tied = false;
        for c in 1..k {
            if e[c] > e[best] {
                best = c;
                tied = false;
            } else if e[c] == e[best] {
                tied = true;
            }
        }
        if tied {
            ties.push(j);
        }
        fused.push(e);
        labels.push(best);
    }

    Ok(RaterFusion {
        weights,
        consistency: rho,
        fused,
        labels,
        ties,
    })
}

/// Splits `ids` into `k` disjoint folds whose sizes differ by at most one,
/// deterministically under `seed`.
pub fn split_folds(ids: &[String], k: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if k < 2 || k > ids.len() {
        return Err(Error::Argument(format!(
            "fold count {k} must satisfy 2 <= k <= {}",
            ids.len()
        )));
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates.
    for i in (1..shuffled.len()).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        shuffled.swap(i, j);
    }
    let base = shuffled.len() / k;
    let rem = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for f in 0..k {
        let take = base + usize::from(f < rem);
        folds.push(shuffled[at..at + take].to_vec());
        at += take;
    }
    Ok(folds)
}

/// One manifest record.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: String,
    pub emotion: Option<EmotionLabel>,
    pub speaker: Option<String>,
    pub session: Option<String>,
    pub order: Option<i64>,
}

/// Parses the tab-separated manifest format:
/// `id  relative_path  emotion  speaker  session  order`, one record per
/// line, `#`-prefixed lines ignored, empty trailing fields allowed.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!(
                "manifest line {}: need at least id and path",
                lineno + 1
            )));
        }
        let get = |i: usize| fields.get(i).map(|s| s.trim()).filter(|s| !s.is_empty());
        let order = match get(5) {
            Some(s) => Some(s.parse::<i64>().map_err(|_| {
                Error::Format(format!("manifest line {}: bad order index '{s}'", lineno + 1))
            })?),
            None => None,
        };
        out.push(ManifestEntry {
            id: fields[0].trim().to_string(),
            path: fields[1].trim().to_string(),
            emotion: get(2).map(EmotionLabel::from),
            speaker: get(3).map(str::to_string),
            session: get(4).map(str::to_string),
            order,
        });
    }
    Ok(out)
}

/// Parses the rating file format: `sample_id  rater_id  k intensity ints`.
/// Returns (sample ids, rater ids, matrix indexed `[rater][sample]`).
pub fn parse_ratings(text: &str) -> Result<(Vec<String>, Vec<String>, RatingMatrix)> {
    let mut samples: Vec<String> = Vec::new();
    let mut raters: Vec<String> = Vec::new();
    let mut records: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    let mut k_dim: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::Format(format!(
                "rating line {}: need sample, rater and intensities",
                lineno + 1
            )));
        }
        let vals: Vec<f64> = fields[2..]
            .iter()
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::Format(format!("rating line {}: bad intensity '{s}'", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        match k_dim {
            None => k_dim = Some(vals.len()),
            Some(k) if k != vals.len() => {
                return Err(Error::Format(format!(
                    "rating line {}: expected {k} intensities, got {}",
                    lineno + 1,
                    vals.len()
                )))
            }
            _ => {}
        }
        let sid = fields[0].trim().to_string();
        let rid = fields[1].trim().to_string();
        let si = samples.iter().position(|s| *s == sid).unwrap_or_else(|| {
            samples.push(sid);
            samples.len() - 1
        });
        let ri = raters.iter().position(|r| *r == rid).unwrap_or_else(|| {
            raters.push(rid);
            raters.len() - 1
        });
        records.push((ri, si, vals));
    }
    let k = k_dim.ok_or_else(|| Error::Format("empty rating file".into()))?;
    let mut entries = vec![vec![Vec::new(); samples.len()]; raters.len()];
    for (ri, si, vals) in records {
        entries[ri][si] = vals;
    }
    for (ri, row) in entries.iter().enumerate() {
        for (si, e) in row.iter().enumerate() {
            if e.len() != k {
                return Err(Error::Format(format!(
                    "rater '{}' has no rating for sample '{}'",
                    raters[ri], samples[si]
                )));
            }
        }
    }
    let matrix = RatingMatrix { entries };
    matrix.validate()?;
    Ok((samples, raters, matrix))
}
