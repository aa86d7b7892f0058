//! Front-end noise reduction: plain spectral subtraction and a parametric
//! gain constrained by an auditory masking threshold. Both operate on
//! 32 ms Hann-windowed frames with 50% overlap and resynthesize with
//! weighted overlap-add.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_LEADING_FRAMES: usize = 6;
pub const FRAME_MS: f64 = 32.0;
pub const NOISE_FLOOR: f64 = 1e-12;
pub const SNR_SMOOTHING: f64 = 0.98;
pub const GAIN_MAX: f64 = 1.1;
const SFM_MAX_DB: f64 = -60.0;

/// Critical-band edges in Hz; band k spans edges[k]..edges[k+1].
pub const BARK_EDGES: [f64; 26] = [
    0.0, 100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0, 1270.0, 1480.0, 1720.0,
    2000.0, 2320.0, 2700.0, 3150.0, 3700.0, 4400.0, 5300.0, 6400.0, 7700.0, 9500.0, 12000.0,
    15500.0, 22050.0,
];
pub const N_BANDS: usize = 25;

/// Whether the spreading function sees the signed band offset or its
/// magnitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SpreadMode {
    #[default]
    Signed,
    Absolute,
}

/// Absolute-threshold formula choice; the corrected form is the usual
/// hearing-threshold curve, the literal one diverges above 3.3 kHz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ThresholdFormula {
    #[default]
    Corrected,
    Literal,
}

#[derive(Clone, Copy, Debug)]
pub struct EnhanceConfig {
    pub leading_frames: usize,
    pub spread: SpreadMode,
    pub threshold_formula: ThresholdFormula,
    pub smoothing: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        EnhanceConfig {
            leading_frames: DEFAULT_LEADING_FRAMES,
            spread: SpreadMode::Signed,
            threshold_formula: ThresholdFormula::Corrected,
            smoothing: SNR_SMOOTHING,
        }
    }
}

/// Frequency in Hz to critical-band rate.
pub fn bark_scale(f_hz: f64) -> f64 {
    let f = f_hz / 1000.0;
    13.0 * (0.76 * f).atan() + 3.5 * ((f / 7.5) * (f / 7.5)).atan()
}

/// Complex short-time transform of a clip.
pub struct Stft {
    pub frames: Vec<Vec<Complex<f64>>>,
    pub frame_len: usize,
    pub hop: usize,
    pub input_len: usize,
    pub sample_rate: u32,
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

pub fn stft(clip: &AudioClip) -> Stft {
    let sr = clip.sample_rate;
    let frame_len = ((FRAME_MS / 1000.0 * sr as f64).round() as usize).max(2) & !1;
    let hop = frame_len / 2;
    let n = clip.samples.len();
    // Frame grid starts half a frame early so every sample sits under a
    // nonzero stretch of the window.
    let n_frames = (n.max(1) - 1) / hop + 2;
    let window = hann(frame_len);
    let fft = FftPlanner::new().plan_fft_forward(frame_len);
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f as isize * hop as isize - hop as isize;
        let mut buf: Vec<Complex<f64>> = (0..frame_len)
            .map(|i| {
                let idx = start + i as isize;
                let s = if idx >= 0 {
                    clip.samples.get(idx as usize).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                Complex::new(s * window[i], 0.0)
            })
            .collect();
        fft.process(&mut buf);
        frames.push(buf);
    }
    Stft {
        frames,
        frame_len,
        hop,
        input_len: n,
        sample_rate: sr,
    }
}

/// Weighted overlap-add resynthesis; exact inverse of `stft` when the
/// spectra are untouched.
pub fn istft(t: &Stft) -> Vec<f64> {
    let window = hann(t.frame_len);
    let ifft = FftPlanner::new().plan_fft_inverse(t.frame_len);
    let total = (t.frames.len() - 1) * t.hop + t.frame_len;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    for (f, spec) in t.frames.iter().enumerate() {
        let mut buf = spec.clone();
        ifft.process(&mut buf);
        let start = f * t.hop;
        for i in 0..t.frame_len {
            let s = buf[i].re / t.frame_len as f64;
            acc[start + i] += s * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    // Positions shift by one hop to undo the early frame grid.
    let mut out = Vec::with_capacity(t.input_len);
    for i in 0..t.input_len {
        let p = i + t.hop;
        out.push(if norm[p] > 1e-12 { acc[p] / norm[p] } else { 0.0 });
    }
    out
}

fn one_sided_power(spec: &[Complex<f64>]) -> Vec<f64> {
    (0..=spec.len() / 2).map(|i| spec[i].norm_sqr()).collect()
}

/// Mean per-bin power over the leading frames, floored away from zero.
pub fn estimate_noise(t: &Stft, leading: usize) -> Result<Vec<f64>> {
    if leading == 0 {
        return Err(Error::Argument("need at least one leading noise frame".into()));
    }
    if t.frames.len() < leading + 1 {
        return Err(Error::Argument(format!(
            "{} leading frames requested but clip has {}",
            leading,
            t.frames.len().saturating_sub(1)
        )));
    }
    let bins = t.frame_len / 2 + 1;
    let mut noise = vec![0.0; bins];
    // Frame 0 is half zero padding; the leading count refers to the first
    // fully populated frames.
    for frame in &t.frames[1..=leading] {
        for (i, p) in one_sided_power(frame).into_iter().enumerate() {
            noise[i] += p;
        }
    }
    Ok(noise
        .into_iter()
        .map(|p| (p / leading as f64).max(NOISE_FLOOR))
        .collect())
}

fn apply_one_sided(spec: &mut [Complex<f64>], f: impl Fn(usize, Complex<f64>) -> Complex<f64>) {
    let n = spec.len();
    for i in 0..=n / 2 {
        let v = f(i, spec[i]);
        spec[i] = v;
        if i > 0 && i < n - i {
            spec[n - i] = v.conj();
        }
    }
}

/// Power-domain subtraction of the leading-frame noise estimate, keeping
/// the noisy phase.
pub fn spectral_subtract(clip: &AudioClip, leading: usize) -> Result<AudioClip> {
    let mut t = stft(clip);
    if t.frames.len() < leading + 2 {
        return Err(Error::Argument(format!(
            "clip too short: {} frames for {} leading noise frames",
            t.frames.len(),
            leading
        )));
    }
    let noise = estimate_noise(&t, leading)?;
    for spec in &mut t.frames {
        apply_one_sided(spec, |i, v| {
            let p = (v.norm_sqr() - noise[i]).max(0.0);
            if v.norm_sqr() > 0.0 {
                v * (p.sqrt() / v.norm())
            } else {
                Complex::new(0.0, 0.0)
            }
        });
    }
    Ok(AudioClip {
        samples: istft(&t),
        sample_rate: clip.sample_rate,
        meta: clip.meta.clone(),
    })
}

/// Sum the one-sided power spectrum into critical-band energies.
pub fn bark_transform(power: &[f64], sample_rate: u32) -> Vec<f64> {
    let bins = power.len();
    let df = sample_rate as f64 / (2 * (bins - 1)) as f64;
    let mut bands = vec![0.0; N_BANDS];
    for (i, &p) in power.iter().enumerate() {
        let f = i as f64 * df;
        let band = match BARK_EDGES[1..].iter().position(|&e| f < e) {
            Some(b) => b,
            None => N_BANDS - 1,
        };
        bands[band] += p;
    }
    bands
}

/// Schroeder spreading function in dB at a band offset.
pub fn spreading_db(delta_z: f64) -> f64 {
    let d = delta_z + 0.474;
    15.81 + 7.5 * d - 17.5 * (1.0 + d * d).sqrt()
}

/// Hearing threshold in dB at a frequency.
pub fn absolute_threshold_db(f_hz: f64, formula: ThresholdFormula) -> f64 {
    let f = (f_hz / 1000.0).max(1e-3);
    let bump = match formula {
        ThresholdFormula::Corrected => (-0.6 * (f - 3.3) * (f - 3.3)).exp(),
        ThresholdFormula::Literal => ((f - 3.3) * (f - 3.3)).exp(),
    };
    3.64 * f.powf(-0.8) - 6.5 * bump + 1e-3 * f.powi(4)
}

#[derive(Clone, Debug)]
pub struct BarkAnalysis {
    pub energies: Vec<f64>,
    pub spread: Vec<f64>,
    pub alpha: f64,
    pub offsets: Vec<f64>,
    pub thresholds: Vec<f64>,
}

/// Spread the band energies, derive the tonality-dependent offset, and
/// floor with the absolute hearing threshold at each band center.
pub fn spread_and_threshold(
    energies: &[f64],
    sample_rate: u32,
    spread_mode: SpreadMode,
    formula: ThresholdFormula,
) -> BarkAnalysis {
    let nyquist = sample_rate as f64 / 2.0;
    let active: Vec<usize> = (0..N_BANDS).filter(|&k| BARK_EDGES[k] < nyquist).collect();
    let center = |k: usize| 0.5 * (BARK_EDGES[k] + BARK_EDGES[k + 1].min(nyquist));
    let absolute: Vec<f64> = (0..N_BANDS)
        .map(|k| 10f64.powf(absolute_threshold_db(center(k), formula) / 10.0))
        .collect();

    let total: f64 = energies.iter().sum();
    if total <= 0.0 {
        return BarkAnalysis {
            energies: energies.to_vec(),
            spread: vec![0.0; N_BANDS],
            alpha: 0.0,
            offsets: vec![5.5; N_BANDS],
            thresholds: absolute,
        };
    }

    let sf = |k: usize, j: usize| {
        let dz = match spread_mode {
            SpreadMode::Signed => k as f64 - j as f64,
            SpreadMode::Absolute => (k as f64 - j as f64).abs(),
        };
        10f64.powf(spreading_db(dz) / 10.0)
    };
    let mut spread = vec![0.0; N_BANDS];
    let mut spread_gain = vec![0.0; N_BANDS];
    for &k in &active {
        for &j in &active {
            spread[k] += sf(k, j) * energies[j];
            spread_gain[k] += sf(k, j);
        }
    }

    let n = active.len() as f64;
    let arith: f64 = active.iter().map(|&k| energies[k]).sum::<f64>() / n;
    let ln_geo: f64 = active.iter().map(|&k| energies[k].ln()).sum::<f64>() / n;
    let sfm_db = 10.0 * (ln_geo.exp() / arith).log10();
    let alpha = (sfm_db / SFM_MAX_DB).min(1.0).max(0.0);

    let mut offsets = vec![0.0; N_BANDS];
    let mut thresholds = absolute.clone();
    for &k in &active {
        offsets[k] = alpha * (14.5 + k as f64) + (1.0 - alpha) * 5.5;
        let t = spread[k] * 10f64.powf(-offsets[k] / 10.0) / spread_gain[k];
        thresholds[k] = t.max(absolute[k]);
    }
    BarkAnalysis {
        energies: energies.to_vec(),
        spread,
        alpha,
        offsets,
        thresholds,
    }
}

/// Posterior-update of the prior SNR.
pub fn snr_update(xi_prior: f64, gamma: f64) -> f64 {
    let m = xi_prior / (1.0 + xi_prior);
    m * (1.0 + m * gamma)
}

/// Wiener-family gain at the posterior SNR.
pub fn gain_sp(xi_post: f64, gamma: f64) -> f64 {
    let u = xi_post / (1.0 + xi_post);
    (u * (1.0 / gamma.max(1e-12) + u)).sqrt()
}

/// Parametric gain at prior SNR with aggressiveness mu.
pub fn gain_parametric(xi_prior: f64, gamma: f64, mu: f64) -> f64 {
    let m = xi_prior / (mu + xi_prior);
    (m * (1.0 + m * gamma)).max(0.0).sqrt()
}

/// Per-bin carry-over between frames plus clamp diagnostics.
#[derive(Clone, Debug, Default)]
pub struct SnrState {
    pub prev_amp: Vec<f64>,
    pub empty_intervals: usize,
}

/// Gains for one frame under the masking constraint. Thresholds are per
/// bin (band values broadcast by the caller).
pub fn perceptual_gain(
    power: &[f64],
    noise: &[f64],
    thresholds: &[f64],
    state: &mut SnrState,
    config: &EnhanceConfig,
    frame_index: usize,
) -> Result<Vec<f64>> {
    if power.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite spectrum in frame {frame_index}"
        )));
    }
    if state.prev_amp.is_empty() {
        state.prev_amp = vec![0.0; power.len()];
    }
    let a = config.smoothing;
    let mut gains = Vec::with_capacity(power.len());
    for i in 0..power.len() {
        let lambda_d = noise[i].max(NOISE_FLOOR);
        let gamma = power[i] / lambda_d;
        let xi = a * state.prev_amp[i] * state.prev_amp[i] / lambda_d
            + (1.0 - a) * (gamma - 1.0).max(0.0);
        let sigma_s2 = xi * lambda_d;
        let t = thresholds[i];
        let gain = if sigma_s2 <= t || gamma <= 0.0 {
            gain_sp(snr_update(xi, gamma), gamma)
        } else {
            let denom = sigma_s2 + lambda_d;
            let b = (sigma_s2 - t) / denom;
            let c = (sigma_s2 + t) / denom;
            let root = |v: f64| (4.0 * v * gamma).sqrt() - 1.0;
            let (rb, rc) = (root(b), root(c));
            let hi = if rb > 0.0 { 2.0 * gamma * xi / rb - xi } else { f64::INFINITY };
            let lo = if rc > 0.0 { 2.0 * gamma * xi / rc - xi } else { f64::INFINITY };
            let mu = if lo <= hi {
                1f64.clamp(lo, hi)
            } else {
                state.empty_intervals += 1;
                if (lo - 1.0).abs() < (hi - 1.0).abs() { lo } else { hi }
            };
            let mu = if mu.is_finite() { mu.max(0.0) } else { 1.0 };
            gain_parametric(xi, gamma, mu)
        };
        let gain = gain.clamp(0.0, GAIN_MAX);
        state.prev_amp[i] = gain * power[i].sqrt();
        gains.push(gain);
    }
    Ok(gains)
}

fn bin_thresholds(analysis: &BarkAnalysis, bins: usize, sample_rate: u32) -> Vec<f64> {
    let df = sample_rate as f64 / (2 * (bins - 1)) as f64;
    (0..bins)
        .map(|i| {
            let f = i as f64 * df;
            let band = match BARK_EDGES[1..].iter().position(|&e| f < e) {
                Some(b) => b,
                None => N_BANDS - 1,
            };
            analysis.thresholds[band]
        })
        .collect()
}

/// Masking-constrained enhancement pipeline.
pub fn enhance_masking(clip: &AudioClip, config: &EnhanceConfig) -> Result<AudioClip> {
    let mut t = stft(clip);
    if t.frames.len() < config.leading_frames + 2 {
        return Err(Error::Argument(format!(
            "clip too short: {} frames for {} leading noise frames",
            t.frames.len(),
            config.leading_frames
        )));
    }
    let noise = estimate_noise(&t, config.leading_frames)?;
    let mut state = SnrState::default();
    let sr = t.sample_rate;
    for (fi, spec) in t.frames.iter_mut().enumerate() {
        let power = one_sided_power(spec);
        let bands = bark_transform(&power, sr);
        let analysis = spread_and_threshold(&bands, sr, config.spread, config.threshold_formula);
        let per_bin = bin_thresholds(&analysis, power.len(), sr);
        let gains = perceptual_gain(&power, &noise, &per_bin, &mut state, config, fi)?;
        apply_one_sided(spec, |i, v| v * gains[i]);
    }
    Ok(AudioClip {
        samples: istft(&t),
        sample_rate: clip.sample_rate,
        meta: clip.meta.clone(),
    })
}
