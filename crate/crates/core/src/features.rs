//! Global statistical feature vector: 481 utterance-level statistics built
//! from the per-frame tracks, with a named index registry, a whisper mask
//! that drops pitch-derived entries, and a text matrix format.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::AudioClip;
use crate::dsp::TrackSet;
use crate::error::{Error, Result};
use crate::io;

pub const FEATURE_DIM: usize = 481;
pub const REGISTRY_VERSION: &str = "emokit-registry-1";

/// Fixed-layout utterance feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub registry_version: String,
}

/// Per-index inclusion mask.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMask {
    pub included: Vec<bool>,
}

impl FeatureMask {
    pub fn all() -> Self {
        FeatureMask {
            included: vec![true; FEATURE_DIM],
        }
    }

    /// Drops every pitch-derived entry: the pitch statistics block, both
    /// pitch jitters, and all harmonicity entries (they need a pitch track).
    pub fn whisper() -> Self {
        let mut m = Self::all();
        for i in 19..=36 {
            m.included[i - 1] = false;
        }
        for i in 56..=57 {
            m.included[i - 1] = false;
        }
        for i in 72..=95 {
            m.included[i - 1] = false;
        }
        m
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.included)
            .filter_map(|(&x, &keep)| keep.then_some(x))
            .collect()
    }

    pub fn kept(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }
}

const STAT_NAMES: [&str; 6] = ["mean", "max", "min", "median", "range", "variance"];

fn push_track_stats(names: &mut Vec<String>, base: &str) {
    for variant in ["", " delta", " delta2"] {
        for s in STAT_NAMES {
            names.push(format!("{base}{variant} {s}"));
        }
    }
}

/// The 481 feature names, in index order.
pub fn registry() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_DIM);
    push_track_stats(&mut names, "energy"); // 1-18
    push_track_stats(&mut names, "pitch"); // 19-36
    push_track_stats(&mut names, "zcr"); // 37-54
    names.push("speech rate".into()); // 55
    names.push("pitch jitter order1".into()); // 56
    names.push("pitch jitter order2".into()); // 57
    names.push("energy ratio 0-250Hz".into()); // 58
    names.push("energy ratio 0-650Hz".into()); // 59
    names.push("energy ratio above 4kHz".into()); // 60
    names.push("energy jitter".into()); // 61
    for n in [
        "voiced frame count",
        "unvoiced frame count",
        "voiced frame ratio",
        "unvoiced frame ratio",
        "longest voiced run",
        "longest unvoiced run",
        "voiced region count",
        "unvoiced region count",
        "voiced region ratio",
        "unvoiced region ratio",
    ] {
        names.push(n.into()); // 62-71
    }
    for band in ["full", "band0", "band1", "band2"] {
        for s in STAT_NAMES {
            names.push(format!("hnr {band} {s}")); // 72-95
        }
    }
    for i in 1..=4 {
        push_track_stats(&mut names, &format!("formant F{i}")); // 96-167
    }
    for i in 1..=4 {
        names.push(format!("formant F{i} jitter order1")); // 168-175 (interleaved)
        names.push(format!("formant F{i} jitter order2"));
    }
    for i in 1..=4 {
        push_track_stats(&mut names, &format!("bandwidth B{i}")); // 176-247
    }
    for c in 0..13 {
        push_track_stats(&mut names, &format!("mfcc c{c}")); // 248-481
    }
    debug_assert_eq!(names.len(), FEATURE_DIM);
    names
}

/// Mean, max, min, median, range and population variance of a sequence.
/// Returns None for an empty input so callers can impute.
pub fn stats6(track: &[f64]) -> Option<[f64; 6]> {
    if track.is_empty() {
        return None;
    }
    let n = track.len() as f64;
    let mean = track.iter().sum::<f64>() / n;
    let mut sorted = track.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = *sorted.last().unwrap();
    let min = sorted[0];
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    let variance = track.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Some([mean, max, min, median, max - min, variance])
}

/// First-order (order 1) or second-order (order 2) relative perturbation of
/// a track, in percent.
pub fn jitter(track: &[f64], order: u8) -> Result<f64> {
    let n = track.len();
    let need = match order {
        1 => 2,
        2 => 3,
        _ => return Err(Error::Argument(format!("jitter order {order} not in {{1,2}}"))),
    };
    if n < need {
        return Err(Error::Argument(format!(
            "jitter order {order} needs at least {need} points, got {n}"
        )));
    }
    let mean = track.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(Error::Numerical("jitter undefined for non-positive mean".into()));
    }
    let num = match order {
        1 => {
            track
                .windows(2)
                .map(|w| (w[0] - w[1]).abs())
                .sum::<f64>()
                / (n - 1) as f64
        }
        _ => {
            (1..n - 1)
                .map(|i| (2.0 * track[i] - track[i - 1] - track[i + 1]).abs())
                .sum::<f64>()
                / (n - 2) as f64
        }
    };
    Ok(num / mean * 100.0)
}

/// Fraction of whole-clip spectral energy in [0,250] Hz, [0,650] Hz and
/// above 4 kHz. A silent clip reports all zeros.
pub fn band_energy_ratios(clip: &AudioClip) -> (f64, f64, f64) {
    let n = clip.samples.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = clip.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let sr = clip.sample_rate as f64;
    let mut total = 0.0;
    let (mut lo250, mut lo650, mut hi4k) = (0.0, 0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * sr / n as f64;
        let p = c.norm_sqr();
        total += p;
        if f <= 250.0 {
            lo250 += p;
        }
        if f <= 650.0 {
            lo650 += p;
        }
        if f > 4000.0 {
            hi4k += p;
        }
    }
    if total <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (lo250 / total, lo650 / total, hi4k / total)
}

/// Run-length statistics over per-frame voiced flags, in registry order:
/// voiced/unvoiced frame counts and ratios, longest runs, region counts and
/// region ratios. Zero denominators give 0.
pub fn voicing_stats(voiced: &[bool]) -> [f64; 10] {
    let t = voiced.len();
    let v = voiced.iter().filter(|&&b| b).count();
    let u = t - v;
    let mut regions = Vec::new(); // (flag, run length)
    for &b in voiced {
        match regions.last_mut() {
            Some((flag, len)) if *flag == b => *len += 1usize,
            _ => regions.push((b, 1usize)),
        }
    }
    let longest = |flag: bool| {
        regions
            .iter()
            .filter(|(f, _)| *f == flag)
            .map(|(_, l)| *l)
            .max()
            .unwrap_or(0)
    };
    let count = |flag: bool| regions.iter().filter(|(f, _)| *f == flag).count();
    let (vr, ur) = (count(true), count(false));
    let total_regions = vr + ur;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    [
        v as f64,
        u as f64,
        ratio(v, t),
        ratio(u, t),
        longest(true) as f64,
        longest(false) as f64,
        vr as f64,
        ur as f64,
        ratio(vr, total_regions),
        ratio(ur, total_regions),
    ]
}

fn diff(track: &[f64]) -> Vec<f64> {
    track.windows(2).map(|w| w[1] - w[0]).collect()
}

/// stats6 over a track, its first difference and its second difference;
/// empty inputs impute 0 and record the indices.
fn stats18(track: &[f64], out: &mut Vec<f64>, imputed: &mut Vec<usize>) {
    let d1 = diff(track);
    let d2 = diff(&d1);
    for seq in [track, d1.as_slice(), d2.as_slice()] {
        match stats6(seq) {
            Some(s) => out.extend_from_slice(&s),
            None => {
                for _ in 0..6 {
                    imputed.push(out.len());
                    out.push(0.0);
                }
            }
        }
    }
}

fn jitter_or_impute(track: &[f64], order: u8, out: &mut Vec<f64>, imputed: &mut Vec<usize>) {
    match jitter(track, order) {
        Ok(j) => out.push(j),
        Err(_) => {
            imputed.push(out.len());
            out.push(0.0);
        }
    }
}

/// Builds the full 481-value vector from the extracted tracks. Statistics
/// over empty sets (no voiced frames, missing formants) impute 0; the
/// returned index list records which entries were imputed.
pub fn assemble(tracks: &TrackSet, clip: &AudioClip) -> (FeatureVector, Vec<usize>) {
    let mut out = Vec::with_capacity(FEATURE_DIM);
    let mut imputed = Vec::new();

    stats18(&tracks.energy, &mut out, &mut imputed); // 1-18

    let voiced_pitch: Vec<f64> = tracks.pitch.iter().cloned().filter(|&p| p > 0.0).collect();
    stats18(&voiced_pitch, &mut out, &mut imputed); // 19-36
    stats18(&tracks.zcr, &mut out, &mut imputed); // 37-54

    // Speech rate: voiced regions per second of audio.
    let flags = tracks.voiced();
    let vstats = voicing_stats(&flags);
    out.push(vstats[6] / clip.duration_secs()); // 55

    jitter_or_impute(&voiced_pitch, 1, &mut out, &mut imputed); // 56
    jitter_or_impute(&voiced_pitch, 2, &mut out, &mut imputed); // 57

    let (r250, r650, r4k) = band_energy_ratios(clip);
    out.extend_from_slice(&[r250, r650, r4k]); // 58-60
    jitter_or_impute(&tracks.energy, 1, &mut out, &mut imputed); // 61

    out.extend_from_slice(&vstats); // 62-71

    // Harmonicity: full band then the three sub-bands. 72-95
    let full: Vec<f64> = tracks.hnr.iter().flatten().cloned().collect();
    for band_track in std::iter::once(full).chain((0..3).map(|b| {
        tracks
            .band_hnr
            .iter()
            .filter_map(|row| row[b])
            .collect::<Vec<f64>>()
    })) {
        match stats6(&band_track) {
            Some(s) => out.extend_from_slice(&s),
            None => {
                for _ in 0..6 {
                    imputed.push(out.len());
                    out.push(0.0);
                }
            }
        }
    }

    let formant_track = |slot: usize, want_bw: bool| -> Vec<f64> {
        tracks
            .formants
            .iter()
            .filter_map(|row| row[slot].map(|(f, b)| if want_bw { b } else { f }))
            .collect()
    };
    for slot in 0..4 {
        stats18(&formant_track(slot, false), &mut out, &mut imputed); // 96-167
    }
    for slot in 0..4 {
        let t = formant_track(slot, false);
        jitter_or_impute(&t, 1, &mut out, &mut imputed); // 168-175
        jitter_or_impute(&t, 2, &mut out, &mut imputed);
    }
    for slot in 0..4 {
        stats18(&formant_track(slot, true), &mut out, &mut imputed); // 176-247
    }

    for c in 0..13 {
        let t: Vec<f64> = tracks.mfcc.iter().map(|row| row[c]).collect();
        stats18(&t, &mut out, &mut imputed); // 248-481
    }

    debug_assert_eq!(out.len(), FEATURE_DIM);
    for v in &mut out {
        if !v.is_finite() {
            *v = 0.0;
        }
    }
    (
        FeatureVector {
            values: out,
            registry_version: REGISTRY_VERSION.into(),
        },
        imputed,
    )
}

/// Serializes per-clip feature rows: `#registry <version>` header, then
/// tab-separated `id` + 481 values per line.
pub fn write_feature_matrix(rows: &[(String, FeatureVector)]) -> String {
    let mut out = format!("#registry {REGISTRY_VERSION}\n");
    for (id, v) in rows {
        out.push_str(id);
        for x in &v.values {
            out.push('\t');
            out.push_str(&io::fmt_f64(*x));
        }
        out.push('\n');
    }
    out
}

/// Parses the format written by [`write_feature_matrix`].
pub fn read_feature_matrix(text: &str) -> Result<Vec<(String, FeatureVector)>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty feature matrix".into()))?;
    let version = header
        .strip_prefix("#registry ")
        .ok_or_else(|| Error::Format("missing '#registry' header".into()))?
        .trim()
        .to_string();
    let mut rows = Vec::new();
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields
            .next()
            .ok_or_else(|| Error::Format("missing id field".into()))?
            .to_string();
        let values: Vec<f64> = fields.map(io::parse_f64).collect::<Result<_>>()?;
        if values.len() != FEATURE_DIM {
            return Err(Error::Format(format!(
                "row '{id}' has {} values, expected {FEATURE_DIM}",
                values.len()
            )));
        }
        rows.push((
            id,
            FeatureVector {
                values,
                registry_version: version.clone(),
            },
        ));
    }
    Ok(rows)
}
