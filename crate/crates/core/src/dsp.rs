//! Frame-level descriptors: framing/windowing, short-time energy and
//! zero-crossing rate, autocorrelation pitch, LPC formants, MFCC and
//! harmonic-to-noise ratio (full band and per band).

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

/// Framing and pitch-search parameters.
#[derive(Clone, Copy, Debug)]
pub struct ExtractionParams {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub pitch_floor: f64,
    pub pitch_ceil: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        ExtractionParams {
            frame_ms: 25.0,
            hop_ms: 10.0,
            pitch_floor: 60.0,
            pitch_ceil: 500.0,
        }
    }
}

/// Frequency bands (Hz) used for per-band harmonicity.
pub const DEFAULT_BANDS: [(f64, f64); 3] = [(0.0, 400.0), (400.0, 2000.0), (2000.0, 5000.0)];

/// Overlapping frames cut from a clip. `frames` holds the raw samples; the
/// named taper is applied by the spectral operations that need it.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate: u32,
    pub window: &'static str,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frame `t` with the Hamming taper applied.
    pub fn windowed(&self, t: usize) -> Vec<f64> {
        let w = hamming(self.frame_len);
        self.frames[t]
            .iter()
            .zip(&w)
            .map(|(x, h)| x * h)
            .collect()
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Cuts a clip into frames of `frame_ms` every `hop_ms`, dropping any
/// trailing partial frame.
pub fn frame_signal(clip: &AudioClip, frame_ms: f64, hop_ms: f64) -> Result<FrameSequence> {
    if !(hop_ms > 0.0 && frame_ms >= hop_ms) {
        return Err(Error::Argument(format!(
            "need frame_ms >= hop_ms > 0, got {frame_ms}/{hop_ms}"
        )));
    }
    let sr = clip.sample_rate as f64;
    let frame_len = (frame_ms * sr / 1000.0).round() as usize;
    let hop = (hop_ms * sr / 1000.0).round() as usize;
    if frame_len == 0 || hop == 0 {
        return Err(Error::Argument("frame or hop rounds to zero samples".into()));
    }
    if clip.samples.len() < frame_len {
        return Err(Error::Argument(format!(
            "clip of {} samples shorter than one {frame_len}-sample frame",
            clip.samples.len()
        )));
    }
    let t = (clip.samples.len() - frame_len) / hop + 1;
    let frames = (0..t)
        .map(|i| clip.samples[i * hop..i * hop + frame_len].to_vec())
        .collect();
    Ok(FrameSequence {
        frames,
        frame_len,
        hop,
        sample_rate: clip.sample_rate,
        window: "hamming",
    })
}

/// Per-frame short-time energy (sum of squares, untapered) and zero-crossing
/// rate (sign changes over frame_len - 1).
pub fn energy_zcr(frames: &FrameSequence) -> (Vec<f64>, Vec<f64>) {
    let mut energy = Vec::with_capacity(frames.len());
    let mut zcr = Vec::with_capacity(frames.len());
    for f in &frames.frames {
        energy.push(f.iter().map(|x| x * x).sum());
        let crossings = f.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
        zcr.push(crossings as f64 / (f.len() - 1).max(1) as f64);
    }
    (energy, zcr)
}

fn autocorr(frame: &[f64], max_lag: usize) -> Vec<f64> {
    let n = frame.len();
    (0..=max_lag.min(n - 1))
        .map(|k| (0..n - k).map(|i| frame[i] * frame[i + k]).sum())
        .collect()
}

/// Autocorrelation pitch tracker. Peak search over the lag range implied by
/// the floor/ceil, a 0.3 normalized-peak voicing threshold, an energy gate
/// 60 dB below the loudest frame, parabolic peak refinement and width-3
/// median smoothing. Unvoiced frames report 0.
pub fn pitch_track(frames: &FrameSequence, params: &ExtractionParams) -> Vec<f64> {
    let sr = frames.sample_rate as f64;
    let lag_min = (sr / params.pitch_ceil).floor().max(2.0) as usize;
    let lag_max = (sr / params.pitch_floor).ceil() as usize;
    let (energy, _) = energy_zcr(frames);
    let max_energy = energy.iter().cloned().fold(0.0, f64::max);
    let gate = max_energy * 1e-6; // 60 dB down

    let mut raw = Vec::with_capacity(frames.len());
    for (t, frame) in frames.frames.iter().enumerate() {
        if energy[t] <= gate || energy[t] == 0.0 || lag_max >= frame.len() {
            raw.push(0.0);
            continue;
        }
        let r = autocorr(frame, lag_max);
        let r0 = r[0];
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for k in lag_min..=lag_max.min(r.len() - 1) {
            if r[k] > best_v {
                best_v = r[k];
                best = k;
            }
        }
        if best == 0 || best_v / r0 < 0.3 {
            raw.push(0.0);
            continue;
        }
        // Parabolic refinement around the integer peak.
        let mut lag = best as f64;
        if best + 1 < r.len() && best >= 1 {
            let (a, b, c) = (r[best - 1], r[best], r[best + 1]);
            let denom = a - 2.0 * b + c;
            if denom.abs() > 1e-30 {
                let delta = 0.5 * (a - c) / denom;
                if delta.abs() < 1.0 {
                    lag += delta;
                }
            }
        }
        raw.push(sr / lag);
    }

    // Width-3 median, clamping at the edges.
    let t = raw.len();
    (0..t)
        .map(|i| {
            let mut trio = [
                raw[i.saturating_sub(1)],
                raw[i],
                raw[(i + 1).min(t - 1)],
            ];
            trio.sort_by(|a, b| a.partial_cmp(b).unwrap());
            trio[1]
        })
        .collect()
}

fn levinson(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut e = r[0];
    for i in 1..=order {
        let mut acc = r[i];
        for j in 1..i {
            acc += a[j] * r[i - j];
        }
        let k = -acc / e;
        let mut na = a.clone();
        for j in 1..=i {
            na[j] = a[j] + k * a[i - j];
        }
        na[i] = k;
        a = na;
        e *= 1.0 - k * k;
        if e <= 0.0 {
            return None;
        }
    }
    Some(a)
}

fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    // coeffs: a0 z^p + a1 z^(p-1) + ... + ap with a0 != 0.
    let p = coeffs.len() - 1;
    if p == 0 {
        return Vec::new();
    }
    let a0 = coeffs[0];
    let mut m = DMatrix::<f64>::zeros(p, p);
    for i in 1..p {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..p {
        m[(0, i)] = -coeffs[i + 1] / a0;
    }
    m.complex_eigenvalues().iter().cloned().collect()
}

/// Per-frame formant frequencies and bandwidths (Hz), lowest four LPC
/// resonances with bandwidth under 700 Hz, ascending. Empty slots stay None.
pub fn formants(frames: &FrameSequence) -> Vec<[Option<(f64, f64)>; 4]> {
    let sr = frames.sample_rate as f64;
    let order = (2.0 + sr / 1000.0).round() as usize;
    let w = hamming(frames.frame_len);
    frames
        .frames
        .iter()
        .map(|frame| {
            // Pre-emphasis then taper.
            let mut x: Vec<f64> = frame
                .iter()
                .enumerate()
                .map(|(i, &s)| if i == 0 { s } else { s - 0.97 * frame[i - 1] })
                .collect();
            for (v, h) in x.iter_mut().zip(&w) {
                *v *= h;
            }
            let r = autocorr(&x, order);
            let Some(a) = levinson(&r, order) else {
                return [None; 4];
            };
            let roots = poly_roots(&a);
            let mut found: Vec<(f64, f64)> = roots
                .iter()
                .filter_map(|z| {
                    let ang = z.im.atan2(z.re);
                    if ang <= 0.0 || ang >= std::f64::consts::PI {
                        return None;
                    }
                    let mag = z.norm();
                    if mag <= 0.0 || mag >= 1.0 {
                        return None;
                    }
                    let freq = ang * sr / (2.0 * std::f64::consts::PI);
                    let bw = -(sr / std::f64::consts::PI) * mag.ln();
                    (bw < 700.0 && freq > 0.0).then_some((freq, bw))
                })
                .collect();
            found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut out = [None; 4];
            for (slot, f) in out.iter_mut().zip(found) {
                *slot = Some(f);
            }
            out
        })
        .collect()
}

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

const MFCC_LOG_FLOOR: f64 = 1e-12;
const N_MEL_FILTERS: usize = 26;

/// Mel-frequency cepstral coefficients c0..c(n-1): tapered frame, power
/// spectrum, 26 triangular mel filters over [0, sr/2], floored log, DCT-II.
pub fn mfcc(frames: &FrameSequence, n_coeffs: usize) -> Result<Vec<Vec<f64>>> {
    if frames.frame_len < 64 {
        return Err(Error::Argument(format!(
            "frame length {} too short for spectral analysis",
            frames.frame_len
        )));
    }
    let sr = frames.sample_rate as f64;
    let nfft = frames.frame_len.next_power_of_two();
    let n_bins = nfft / 2 + 1;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);

    // Filter edge frequencies: 28 points equally spaced on the mel scale.
    let edges: Vec<f64> = (0..N_MEL_FILTERS + 2)
        .map(|i| mel_inv(mel(sr / 2.0) * i as f64 / (N_MEL_FILTERS + 1) as f64))
        .collect();
    let bin_freq: Vec<f64> = (0..n_bins).map(|k| k as f64 * sr / nfft as f64).collect();
    let mut weights = vec![vec![0.0; n_bins]; N_MEL_FILTERS];
    for m in 0..N_MEL_FILTERS {
        let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = bin_freq[k];
            weights[m][k] = if f > lo && f < mid {
                (f - lo) / (mid - lo)
            } else if (f - mid).abs() < 1e-12 {
                1.0
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
        }
    }

    let mut out = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        let mut buf: Vec<Complex<f64>> = frames
            .windowed(t)
            .into_iter()
            .map(|x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(nfft)
            .collect();
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_bins].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = weights
            .iter()
            .map(|w| {
                let e: f64 = w.iter().zip(&power).map(|(a, b)| a * b).sum();
                e.max(MFCC_LOG_FLOOR).ln()
            })
            .collect();
        // DCT-II.
        let coeffs: Vec<f64> = (0..n_coeffs)
            .map(|k| {
                log_mel
                    .iter()
                    .enumerate()
                    .map(|(m, &v)| {
                        v * (std::f64::consts::PI * k as f64 * (m as f64 + 0.5)
                            / N_MEL_FILTERS as f64)
                            .cos()
                    })
                    .sum()
            })
            .collect();
        out.push(coeffs);
    }
    Ok(out)
}

/// Harmonic-to-noise ratio per frame in dB. The frame is split into complete
/// pitch periods; the period-averaged waveform carries the harmonic energy
/// and per-period deviations the noise energy. Frames that are unvoiced or
/// hold fewer than two complete periods report None.
pub fn hnr(frames: &FrameSequence, pitch: &[f64]) -> Vec<Option<f64>> {
    let sr = frames.sample_rate as f64;
    frames
        .frames
        .iter()
        .zip(pitch)
        .map(|(frame, &f0)| {
            if f0 <= 0.0 {
                return None;
            }
            let period = (sr / f0).round() as usize;
            if period == 0 {
                return None;
            }
            let n = frame.len() / period;
            if n < 2 {
                return None;
            }
            let mut avg = vec![0.0; period];
            for i in 0..n {
                for t in 0..period {
                    avg[t] += frame[i * period + t];
                }
            }
            for v in &mut avg {
                *v /= n as f64;
            }
            let h: f64 = n as f64 * avg.iter().map(|v| v * v).sum::<f64>();
            let mut noise = 0.0;
            for i in 0..n {
                for t in 0..period {
                    let d = frame[i * period + t] - avg[t];
                    noise += d * d;
                }
            }
            if h <= 0.0 {
                return None;
            }
            Some(10.0 * (h / (noise + 1e-12 * h)).log10())
        })
        .collect()
}

/// Zero-phase band-pass via FFT bin masking over the whole clip.
pub fn band_pass(clip: &AudioClip, lo: f64, hi: f64) -> AudioClip {
    let n = clip.samples.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = clip.samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    let sr = clip.sample_rate as f64;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k <= n / 2 {
            k as f64 * sr / n as f64
        } else {
            (n - k) as f64 * sr / n as f64
        };
        if f < lo || f > hi {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    AudioClip {
        samples: buf.iter().map(|c| c.re / n as f64).collect(),
        sample_rate: clip.sample_rate,
        meta: clip.meta.clone(),
    }
}

/// Per-frame, per-band HNR: band-pass the clip, re-frame, and run [`hnr`]
/// with the full-band pitch track. Bands reaching above Nyquist come back as
/// all-None.
pub fn band_hnr(
    clip: &AudioClip,
    bands: &[(f64, f64)],
    params: &ExtractionParams,
) -> Result<Vec<Vec<Option<f64>>>> {
    let frames = frame_signal(clip, params.frame_ms, params.hop_ms)?;
    let pitch = pitch_track(&frames, params);
    let nyquist = clip.sample_rate as f64 / 2.0;
    let mut per_band: Vec<Vec<Option<f64>>> = Vec::with_capacity(bands.len());
    for &(lo, hi) in bands {
        if hi > nyquist {
            per_band.push(vec![None; frames.len()]);
            continue;
        }
        let filtered = band_pass(clip, lo, hi);
        let bframes = frame_signal(&filtered, params.frame_ms, params.hop_ms)?;
        per_band.push(hnr(&bframes, &pitch));
    }
    // Transpose to [frame][band].
    let t = frames.len();
    Ok((0..t)
        .map(|i| per_band.iter().map(|b| b[i]).collect())
        .collect())
}

/// All per-frame tracks for one clip.
#[derive(Clone, Debug)]
pub struct TrackSet {
    pub energy: Vec<f64>,
    pub zcr: Vec<f64>,
    /// Hz; 0 means unvoiced.
    pub pitch: Vec<f64>,
    pub formants: Vec<[Option<(f64, f64)>; 4]>,
    pub mfcc: Vec<Vec<f64>>,
    pub hnr: Vec<Option<f64>>,
    /// Indexed `[frame][band]` over [`DEFAULT_BANDS`].
    pub band_hnr: Vec<Vec<Option<f64>>>,
    pub sample_rate: u32,
    pub hop: usize,
}

impl TrackSet {
    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    pub fn voiced(&self) -> Vec<bool> {
        self.pitch.iter().map(|&p| p > 0.0).collect()
    }
}

/// Runs every extractor over one clip.
pub fn extract_tracks(clip: &AudioClip, params: &ExtractionParams) -> Result<TrackSet> {
    let frames = frame_signal(clip, params.frame_ms, params.hop_ms)?;
    let (energy, zcr) = energy_zcr(&frames);
    let pitch = pitch_track(&frames, params);
    let formants = formants(&frames);
    let mfcc = mfcc(&frames, 13)?;
    let hnr = hnr(&frames, &pitch);
    let band_hnr = band_hnr(clip, &DEFAULT_BANDS, params)?;
    Ok(TrackSet {
        energy,
        zcr,
        pitch,
        formants,
        mfcc,
        hnr,
        band_hnr,
        sample_rate: clip.sample_rate,
        hop: frames.hop,
    })
}

/// Debug dump: tab-separated per-frame rows with a named header; absent
/// values rendered as `NA`.
pub fn dump_tracks(tracks: &TrackSet) -> String {
    let mut head: Vec<String> = vec!["frame", "energy", "zcr", "pitch", "hnr"]
        .into_iter()
        .map(String::from)
        .collect();
    for i in 1..=4 {
        head.push(format!("F{i}"));
        head.push(format!("B{i}"));
    }
    for b in 0..DEFAULT_BANDS.len() {
        head.push(format!("hnr_band{b}"));
    }
    for c in 0..13 {
        head.push(format!("mfcc{c}"));
    }
    let mut out = head.join("\t");
    out.push('\n');
    let na = "NA".to_string();
    let fmt = |v: f64| format!("{v:.6}");
    for t in 0..tracks.len() {
        let mut row = vec![
            t.to_string(),
            fmt(tracks.energy[t]),
            fmt(tracks.zcr[t]),
            fmt(tracks.pitch[t]),
            tracks.hnr[t].map(fmt).unwrap_or_else(|| na.clone()),
        ];
        for slot in &tracks.formants[t] {
            match slot {
                Some((f, b)) => {
                    row.push(fmt(*f));
                    row.push(fmt(*b));
                }
                None => {
                    row.push(na.clone());
                    row.push(na.clone());
                }
            }
        }
        for b in &tracks.band_hnr[t] {
            row.push(b.map(fmt).unwrap_or_else(|| na.clone()));
        }
        for c in &tracks.mfcc[t] {
            row.push(fmt(*c));
        }
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sine(freq: f64, secs: f64, rate: u32, amp: f64) -> AudioClip {
        let n = (secs * rate as f64) as usize;
        let w = 2.0 * std::f64::consts::PI * freq / rate as f64;
        AudioClip::new((0..n).map(|i| amp * (w * i as f64).sin()).collect(), rate)
    }

    #[test]
    fn framing_counts() {
        let clip = AudioClip::new(vec![0.1; 400], 16000);
        let f = frame_signal(&clip, 25.0, 10.0).unwrap();
        assert_eq!(f.frame_len, 400);
        assert_eq!(f.len(), 1);

        let clip = AudioClip::new(vec![0.1; 560], 16000);
        let f = frame_signal(&clip, 25.0, 10.0).unwrap();
        assert_eq!(f.len(), 2);
    }

    #[test]
    fn framing_zero_signal() {
        let clip = AudioClip::new(vec![0.0; 1000], 16000);
        let f = frame_signal(&clip, 25.0, 10.0).unwrap();
        assert!(f.frames.iter().all(|fr| fr.iter().all(|&x| x == 0.0)));
        assert!(f.windowed(0).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn framing_too_short() {
        let clip = AudioClip::new(vec![0.1; 100], 16000);
        assert!(frame_signal(&clip, 25.0, 10.0).is_err());
    }

    #[test]
    fn energy_and_zcr_basics() {
        let mk = |samples: Vec<f64>| FrameSequence {
            frame_len: samples.len(),
            hop: samples.len(),
            sample_rate: 16000,
            window: "hamming",
            frames: vec![samples],
        };
        let (e, z) = energy_zcr(&mk(vec![0.0; 400]));
        assert_eq!((e[0], z[0]), (0.0, 0.0));

        let alt: Vec<f64> = (0..400).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let (_, z) = energy_zcr(&mk(alt));
        assert_eq!(z[0], 1.0);

        let (e, _) = energy_zcr(&mk(vec![1.0; 400]));
        assert_eq!(e[0], 400.0);
    }

    #[test]
    fn pitch_pure_sine() {
        let clip = sine(200.0, 0.5, 16000, 0.7);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        let p = pitch_track(&frames, &ExtractionParams::default());
        let interior = &p[2..p.len() - 2];
        for &v in interior {
            assert!((v - 200.0).abs() < 2.0, "pitch {v}");
        }
    }

    #[test]
    fn pitch_recovery_across_rates() {
        for &rate in &[11025u32, 16000, 48000] {
            for &f0 in &[100.0, 200.0, 300.0] {
                let clip = sine(f0, 0.3, rate, 0.7);
                let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
                let p = pitch_track(&frames, &ExtractionParams::default());
                let interior = &p[2..p.len() - 2];
                for &v in interior {
                    assert!(
                        (v - f0).abs() / f0 < 0.01,
                        "f0 {f0} at {rate} Hz gave {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn pitch_noise_is_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut unvoiced = 0;
        let total = 100;
        for _ in 0..total {
            let samples: Vec<f64> = (0..400)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let clip = AudioClip::new(samples, 16000);
            let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
            let p = pitch_track(&frames, &ExtractionParams::default());
            if p[0] == 0.0 {
                unvoiced += 1;
            }
        }
        assert!(unvoiced >= 95, "only {unvoiced}/{total} unvoiced");
    }

    #[test]
    fn pitch_silence() {
        let clip = AudioClip::new(vec![0.0; 4000], 16000);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        let p = pitch_track(&frames, &ExtractionParams::default());
        assert!(p.iter().all(|&v| v == 0.0));
    }

    fn resonator(freq: f64, bw: f64, rate: u32, n: usize) -> AudioClip {
        // Two-pole resonator driven by a 100 Hz pulse train.
        let sr = rate as f64;
        let r = (-std::f64::consts::PI * bw / sr).exp();
        let w = 2.0 * std::f64::consts::PI * freq / sr;
        let a1 = 2.0 * r * w.cos();
        let a2 = -r * r;
        let period = (sr / 100.0) as usize;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let x = if i % period == 0 { 1.0 } else { 0.0 };
            y[i] = x + a1 * (i >= 1).then(|| y[i - 1]).unwrap_or(0.0)
                + a2 * (i >= 2).then(|| y[i - 2]).unwrap_or(0.0);
        }
        let peak = y.iter().cloned().fold(0.0_f64, |m, v| m.max(v.abs()));
        AudioClip::new(y.iter().map(|v| v / peak * 0.8).collect(), rate)
    }

    #[test]
    fn formant_of_resonator() {
        let clip = resonator(700.0, 80.0, 16000, 8000);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        let f = formants(&frames);
        let mut hits = 0;
        let mut total = 0;
        for row in &f[2..f.len() - 2] {
            if let Some((freq, _)) = row[0] {
                total += 1;
                if (freq - 700.0).abs() < 30.0 {
                    hits += 1;
                }
            }
        }
        assert!(total > 0 && hits * 2 > total, "{hits}/{total} frames near 700 Hz");
    }

    #[test]
    fn formant_zero_frame_absent() {
        let clip = AudioClip::new(vec![0.0; 400], 16000);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        assert_eq!(formants(&frames)[0], [None; 4]);
    }

    #[test]
    fn formants_ascending() {
        let clip = resonator(700.0, 80.0, 16000, 8000);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        for row in formants(&frames) {
            let fs: Vec<f64> = row.iter().flatten().map(|(f, _)| *f).collect();
            for w in fs.windows(2) {
                assert!(w[0] < w[1]);
            }
        }
    }

    #[test]
    fn mfcc_silence_high_coeffs_zero() {
        let clip = AudioClip::new(vec![0.0; 400], 16000);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        let c = mfcc(&frames, 13).unwrap();
        for k in 1..13 {
            assert!(c[0][k].abs() < 1e-9, "c{k} = {}", c[0][k]);
        }
    }

    #[test]
    fn mfcc_deterministic_and_scale() {
        let clip = sine(440.0, 0.1, 16000, 0.4);
        let frames = frame_signal(&clip, 25.0, 10.0).unwrap();
        let a = mfcc(&frames, 13).unwrap();
        let b = mfcc(&frames, 13).unwrap();
        assert_eq!(a, b);

        let doubled = AudioClip::new(clip.samples.iter().map(|s| s * 2.0).collect(), 16000);
        let frames2 = frame_signal(&doubled, 25.0, 10.0).unwrap();
        let c = mfcc(&frames2, 13).unwrap();
        assert!(c[1][0] > a[1][0]);
        for k in 1..13 {
            assert!((c[1][k] - a[1][k]).abs() < 1e-6, "c{k} moved");
        }
    }

    #[test]
    fn hnr_periodic_is_high() {
        // Sawtooth with an exact 100-sample period, 4 periods per frame.
        let saw: Vec<f64> = (0..400).map(|i| (i % 100) as f64 / 100.0 - 0.5).collect();
        let frames = FrameSequence {
            frame_len: 400,
            hop: 400,
            sample_rate: 16000,
            window: "hamming",
            frames: vec![saw],
        };
        let out = hnr(&frames, &[160.0]);
        assert!(out[0].unwrap() >= 60.0);
    }

    #[test]
    fn hnr_equal_power_noise_near_zero_db() {
        // 10 exact periods of a sawtooth plus white noise scaled to the
        // harmonic power; measured ratio should sit near 0 dB.
        let period = 100usize;
        let n_periods = 10usize;
        let len = period * n_periods;
        let saw: Vec<f64> = (0..len).map(|i| (i % period) as f64 / period as f64 - 0.5).collect();
        let sig_pow = saw.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise: Vec<f64> = (0..len)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let noise_pow = noise.iter().map(|v| v * v).sum::<f64>() / len as f64;
        let scale = (sig_pow / noise_pow).sqrt();
        let mixed: Vec<f64> = saw.iter().zip(&noise).map(|(s, n)| s + scale * n).collect();
        let frames = FrameSequence {
            frame_len: len,
            hop: len,
            sample_rate: 16000,
            window: "hamming",
            frames: vec![mixed],
        };
        let out = hnr(&frames, &[160.0]);
        let db = out[0].unwrap();
        assert!(db.abs() <= 2.0, "HNR {db} dB");
    }

    #[test]
    fn hnr_unvoiced_absent() {
        let frames = FrameSequence {
            frame_len: 400,
            hop: 400,
            sample_rate: 16000,
            window: "hamming",
            frames: vec![vec![0.3; 400]],
        };
        assert_eq!(hnr(&frames, &[0.0]), vec![None]);
    }

    #[test]
    fn hnr_needs_two_periods() {
        let frames = FrameSequence {
            frame_len: 150,
            hop: 150,
            sample_rate: 16000,
            window: "hamming",
            frames: vec![vec![0.3; 150]],
        };
        // Pitch 160 Hz at 16 kHz gives a 100-sample period; 150 samples hold
        // only one complete period.
        assert_eq!(hnr(&frames, &[160.0]), vec![None]);
    }

    #[test]
    fn hnr_monotone_in_noise() {
        let period = 100usize;
        let len = 1000usize;
        let saw: Vec<f64> = (0..len).map(|i| (i % period) as f64 / period as f64 - 0.5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..len)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let mut prev = f64::INFINITY;
        for &scale in &[0.0, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let mixed: Vec<f64> = saw.iter().zip(&noise).map(|(s, n)| s + scale * n).collect();
            let frames = FrameSequence {
                frame_len: len,
                hop: len,
                sample_rate: 16000,
                window: "hamming",
                frames: vec![mixed],
            };
            let db = hnr(&frames, &[160.0])[0].unwrap();
            assert!(db <= prev + 1e-9, "HNR rose from {prev} to {db}");
            prev = db;
        }
    }

    #[test]
    fn band_hnr_band_limited_signal() {
        // Harmonic energy only at 800 Hz: inside the 400-2000 band.
        let clip = sine(800.0, 0.5, 16000, 0.6);
        let params = ExtractionParams::default();
        let out = band_hnr(&clip, &DEFAULT_BANDS, &params).unwrap();
        let mid = out.len() / 2;
        let row = &out[mid];
        let in_band = row[1].expect("mid band voiced");
        assert!(in_band > 20.0, "in-band HNR {in_band}");
        if let Some(low) = row[0] {
            assert!(low < in_band);
        }
    }

    #[test]
    fn band_hnr_11025_top_band_feasible() {
        let clip = sine(200.0, 0.3, 11025, 0.6);
        let out = band_hnr(&clip, &DEFAULT_BANDS, &ExtractionParams::default()).unwrap();
        // Nyquist is 5512.5 so the 2000-5000 band stays available; entries
        // may still be None only when unvoiced.
        assert_eq!(out[0].len(), 3);
        let voiced_rows = out.iter().filter(|r| r[2].is_some()).count();
        assert!(voiced_rows > 0);
    }

    #[test]
    fn band_hnr_silence_absent() {
        let clip = AudioClip::new(vec![0.0; 4000], 16000);
        let out = band_hnr(&clip, &DEFAULT_BANDS, &ExtractionParams::default()).unwrap();
        assert!(out.iter().all(|row| row.iter().all(|b| b.is_none())));
    }

    #[test]
    fn tracks_align_and_dump() {
        let clip = sine(200.0, 0.2, 16000, 0.5);
        let t = extract_tracks(&clip, &ExtractionParams::default()).unwrap();
        let n = t.len();
        assert!(n > 0);
        assert_eq!(t.zcr.len(), n);
        assert_eq!(t.pitch.len(), n);
        assert_eq!(t.formants.len(), n);
        assert_eq!(t.mfcc.len(), n);
        assert_eq!(t.hnr.len(), n);
        assert_eq!(t.band_hnr.len(), n);
        let dump = dump_tracks(&t);
        assert!(dump.starts_with("frame\tenergy"));
        assert_eq!(dump.lines().count(), n + 1);
    }
}
