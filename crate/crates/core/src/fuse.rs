//! Bimodal fusion of the speech channel with an externally supplied
//! physiological channel: confidence-weighted decision fusion and
//! feature-level PCA fusion.

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};
use crate::reduce::{minmax_fit, pca_fit, MinMax, MinMaxMode, Pca};

pub const PHYSIO_DIM: usize = 23;
pub const FUSED_PCA_DIM: usize = 10;
const LOG_SUM_GUARD: f64 = 1e-12;

/// Confidence weight of one channel from its per-class densities: summed
/// pairwise log-density gaps over the magnitude of the log-density sum.
pub fn channel_weight(densities: &[f64]) -> Result<f64> {
    if densities.len() < 2 {
        return Err(Error::Argument("need at least two class densities".into()));
    }
    if densities.iter().any(|&p| p <= 0.0) {
        return Err(Error::Argument("densities must be positive".into()));
    }
    let logs: Vec<f64> = densities.iter().map(|p| p.ln()).collect();
    let mut num = 0.0;
    for m in 0..logs.len() {
        for n in m + 1..logs.len() {
            num += (logs[m] - logs[n]).abs();
        }
    }
    let den = logs.iter().sum::<f64>().abs().max(LOG_SUM_GUARD);
    Ok(num / den)
}

/// One channel's contribution: per-class densities plus its weight.
#[derive(Clone, Debug)]
pub struct ChannelScores {
    pub densities: Vec<f64>,
    pub weight: f64,
}

/// Weighted-density argmax across available channels. A lone channel
/// decides by its own argmax; ties break to the lower class index.
pub fn decision_fuse(
    channels: &[Option<ChannelScores>],
    labels: &[EmotionLabel],
    standardize: bool,
) -> Result<(EmotionLabel, Vec<f64>)> {
    let present: Vec<&ChannelScores> = channels.iter().flatten().collect();
    if present.is_empty() {
        return Err(Error::Argument("no channel produced scores".into()));
    }
    for ch in &present {
        if ch.densities.len() != labels.len() {
            return Err(Error::Argument("channel score width != label count".into()));
        }
    }
    let prep = |ch: &ChannelScores| -> Vec<f64> {
        if standardize {
            let s: f64 = ch.densities.iter().sum();
            if s > 0.0 {
                return ch.densities.iter().map(|p| p / s).collect();
            }
        }
        ch.densities.clone()
    };
    let fused: Vec<f64> = if present.len() == 1 {
        prep(present[0])
    } else {
        let mut acc = vec![0.0; labels.len()];
        for ch in &present {
            for (a, p) in acc.iter_mut().zip(prep(ch)) {
                *a += ch.weight * p;
            }
        }
        acc
    };
    let mut best = 0;
    for k in 1..fused.len() {
        if fused[k] > fused[best] {
            best = k;
        }
    }
    Ok((labels[best].clone(), fused))
}

/// Frozen feature-level fusion: concatenation, trained column scaling,
/// trained PCA truncation.
#[derive(Clone, Debug)]
pub struct FusionPipeline {
    pub minmax: MinMax,
    pub pca: Pca,
    pub speech_dim: usize,
    pub physio_dim: usize,
}

impl FusionPipeline {
    pub fn apply(&self, speech: Option<&[f64]>, physio: Option<&[f64]>) -> Result<Vec<f64>> {
        let (s, p) = match (speech, physio) {
            (Some(s), Some(p)) => (s, p),
            _ => {
                return Err(Error::Argument(
                    "feature fusion unavailable: both modalities required".into(),
                ))
            }
        };
        if s.len() != self.speech_dim || p.len() != self.physio_dim {
            return Err(Error::Argument(format!(
                "modal widths {}+{} do not match trained {}+{}",
                s.len(),
                p.len(),
                self.speech_dim,
                self.physio_dim
            )));
        }
        let mut row = s.to_vec();
        row.extend_from_slice(p);
        Ok(self.pca.apply_row(&self.minmax.apply_row(&row)))
    }

    pub fn out_dim(&self) -> usize {
        self.pca.components.len()
    }
}

/// Fit the fusion scaling and PCA on paired training rows.
pub fn fusion_fit(speech: &[Vec<f64>], physio: &[Vec<f64>]) -> Result<FusionPipeline> {
    if speech.len() != physio.len() || speech.is_empty() {
        return Err(Error::Argument("modal row counts differ or empty".into()));
    }
    let speech_dim = speech[0].len();
    let physio_dim = physio[0].len();
    let joint: Vec<Vec<f64>> = speech
        .iter()
        .zip(physio)
        .map(|(s, p)| {
            let mut row = s.clone();
            row.extend_from_slice(p);
            row
        })
        .collect();
    let minmax = minmax_fit(&joint, MinMaxMode::DivideByMax)?;
    let scaled: Vec<Vec<f64>> = joint.iter().map(|r| minmax.apply_row(r)).collect();
    let pca = pca_fit(&scaled, FUSED_PCA_DIM)?;
    Ok(FusionPipeline {
        minmax,
        pca,
        speech_dim,
        physio_dim,
    })
}

pub const PHYSIO_MAGIC: &str = "#physio v1";

/// Physiological feature file: magic header, then `id` + 23 reals per line.
pub fn parse_physio(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == PHYSIO_MAGIC => {}
        _ => return Err(Error::Format(format!("missing '{PHYSIO_MAGIC}' header"))),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != PHYSIO_DIM + 1 {
            return Err(Error::Format(format!(
                "physio line {}: expected id + {} values, got {} fields",
                lineno + 2,
                PHYSIO_DIM,
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(PHYSIO_DIM);
        for f in &fields[1..] {
            values.push(f.trim().parse::<f64>().map_err(|_| {
                Error::Format(format!("physio line {}: bad value '{f}'", lineno + 2))
            })?);
        }
        rows.push((fields[0].to_string(), values));
    }
    Ok(rows)
}

pub fn write_physio(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::from(PHYSIO_MAGIC);
    out.push('\n');
    for (id, values) in rows {
        out.push_str(id);
        for v in values {
            out.push('\t');
            out.push_str(&crate::io::fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}
