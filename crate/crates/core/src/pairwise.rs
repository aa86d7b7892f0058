//! Pairwise decomposition of the n-class problem: one two-class classifier
//! per class pair, each with its own reduction pipeline and two mixture
//! models, combined through confidence-weighted codeword correlation
//! decoding, with set-subtraction decoding as the hard-output baseline.

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};
use crate::gmm::{self, CovarianceMode, GmmModel};
use crate::reduce::{lda_fit, minmax_fit, pca_fit, MinMaxMode, ReductionPipeline};

pub const DEFAULT_PAIR_PCA_DIM: usize = 10;

/// Lexicographically ordered class pairs (i, j) with i < j.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v
}

/// Codeword matrix: one row per pair, +1 at the pair's first class, -1 at
/// its second, 0 elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct CodewordMatrix {
    pub n_classes: usize,
    pub pairs: Vec<(usize, usize)>,
}

impl CodewordMatrix {
    pub fn new(n_classes: usize) -> Self {
        CodewordMatrix {
            n_classes,
            pairs: pair_list(n_classes),
        }
    }

    pub fn entry(&self, row: usize, class: usize) -> i8 {
        let (i, j) = self.pairs[row];
        if class == i {
            1
        } else if class == j {
            -1
        } else {
            0
        }
    }
}

/// Overlap-sensitive confidence of a two-class output:
/// 2 |ln p_i - ln p_j| / |ln p_i + ln p_j|, with a 1e-12 denominator guard.
pub fn pair_confidence(p_i: f64, p_j: f64) -> Result<f64> {
    if p_i <= 0.0 || p_j <= 0.0 {
        return Err(Error::Argument("pair confidence needs positive densities".into()));
    }
    Ok(pair_confidence_log(p_i.ln(), p_j.ln()))
}

/// Same confidence computed from log densities directly.
pub fn pair_confidence_log(lp_i: f64, lp_j: f64) -> f64 {
    let denom = (lp_i + lp_j).abs().max(1e-12);
    2.0 * (lp_i - lp_j).abs() / denom
}

/// Correlation decoding: weighted output w*I per row correlated against each
/// class's codeword column; winner is the argmax, ties to the lower index.
pub fn decode(outputs: &[(f64, i8)], codewords: &CodewordMatrix) -> Result<(usize, Vec<f64>)> {
    if outputs.len() != codewords.pairs.len() {
        return Err(Error::Argument(format!(
            "{} outputs for {} codeword rows",
            outputs.len(),
            codewords.pairs.len()
        )));
    }
    let mut r = vec![0.0; codewords.n_classes];
    for (row, &(w, sign)) in outputs.iter().enumerate() {
        let c = w * sign as f64;
        for (k, slot) in r.iter_mut().enumerate() {
            *slot += c * codewords.entry(row, k) as f64;
        }
    }
    let mut best = 0;
    for (k, &v) in r.iter().enumerate().skip(1) {
        if v > r[best] {
            best = k;
        }
    }
    Ok((best, r))
}

/// Hard-output set-subtraction decoding: every pair's loser is struck from
/// the candidate set; returns the survivor when exactly one class remains.
pub fn set_subtraction(outputs: &[i8], codewords: &CodewordMatrix) -> Option<usize> {
    let mut alive = vec![true; codewords.n_classes];
    for (row, &sign) in outputs.iter().enumerate() {
        let (i, j) = codewords.pairs[row];
        if sign > 0 {
            alive[j] = false;
        } else {
            alive[i] = false;
        }
    }
    let survivors: Vec<usize> = (0..codewords.n_classes).filter(|&k| alive[k]).collect();
    match survivors.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PairwiseConfig {
    pub pca_dim: usize,
    pub mixtures: usize,
    pub covariance: CovarianceMode,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PairwiseConfig {
    fn default() -> Self {
        PairwiseConfig {
            pca_dim: DEFAULT_PAIR_PCA_DIM,
            mixtures: gmm::PAIRWISE_MIXTURES,
            covariance: CovarianceMode::Diagonal,
            seed: 0,
            max_iter: gmm::DEFAULT_MAX_ITER,
            tol: gmm::DEFAULT_TOL,
        }
    }
}

/// One pair's classifier: a reduction pipeline to 1-D fitted on the two
/// classes' data alone, plus one mixture model per class.
#[derive(Clone, Debug)]
pub struct PairClassifier {
    pub pair: (usize, usize),
    pub pipeline: ReductionPipeline,
    pub models: [GmmModel; 2],
}

impl PairClassifier {
    /// Returns (confidence, sign): sign +1 when the pair's first class has
    /// the higher density.
    pub fn score(&self, x: &[f64]) -> Result<(f64, i8)> {
        let z = self.pipeline.apply_row(x);
        let lp_i = gmm::log_density(&self.models[0], &z)?;
        let lp_j = gmm::log_density(&self.models[1], &z)?;
        let w = pair_confidence_log(lp_i, lp_j);
        Ok((w, if lp_i >= lp_j { 1 } else { -1 }))
    }
}

/// The full pairwise decoder over a declared label order.
#[derive(Clone, Debug)]
pub struct PairwiseDecoder {
    pub labels: Vec<EmotionLabel>,
    pub classifiers: Vec<PairClassifier>,
    pub codewords: CodewordMatrix,
}

impl PairwiseDecoder {
    pub fn classify(&self, x: &[f64]) -> Result<(EmotionLabel, Vec<f64>)> {
        let outputs: Vec<(f64, i8)> = self
            .classifiers
            .iter()
            .map(|c| c.score(x))
            .collect::<Result<_>>()?;
        let (best, r) = decode(&outputs, &self.codewords)?;
        Ok((self.labels[best].clone(), r))
    }
}

/// Trains all C(n,2) pair classifiers. Each pair gets normalization, PCA
/// (capped by the pair's sample budget), a 1-D discriminant projection, and
/// one mixture model per class.
pub fn train_pairs(
    by_class: &[Vec<Vec<f64>>],
    labels: &[EmotionLabel],
    config: &PairwiseConfig,
) -> Result<PairwiseDecoder> {
    let n = by_class.len();
    if n < 2 || labels.len() != n {
        return Err(Error::Argument("need at least two labeled classes".into()));
    }
    let need = config.mixtures.max(2);
    let mut classifiers = Vec::new();
    for (i, j) in pair_list(n) {
        let (a, b) = (&by_class[i], &by_class[j]);
        if a.len() < need || b.len() < need {
            return Err(Error::Argument(format!(
                "pair ({}, {}) needs at least {need} samples per class, got {}/{}",
                labels[i], labels[j], a.len(), b.len()
            )));
        }
        let mut x: Vec<Vec<f64>> = a.clone();
        x.extend(b.iter().cloned());
        let y: Vec<usize> = std::iter::repeat_n(0, a.len())
            .chain(std::iter::repeat_n(1, b.len()))
            .collect();

        let minmax = minmax_fit(&x, MinMaxMode::DivideByMax)?;
        let normed: Vec<Vec<f64>> = x.iter().map(|r| minmax.apply_row(r)).collect();
        let d = normed[0].len();
        let pca_dim = config.pca_dim.min(d).min(x.len() - 1);
        let pca = pca_fit(&normed, pca_dim)?;
        let compressed: Vec<Vec<f64>> = normed.iter().map(|r| pca.apply_row(r)).collect();
        let lda = lda_fit(&compressed, &y, Some(1)).map_err(|e| {
            Error::SingularScatter(format!("pair ({}, {}): {e}", labels[i], labels[j]))
        })?;
        let projected: Vec<Vec<f64>> = compressed.iter().map(|r| lda.apply_row(r)).collect();
        let pipeline = ReductionPipeline {
            minmax: Some(minmax),
            selected: None,
            pca: Some(pca),
            lda: Some(lda),
        };

        let (model_a, _) = gmm::train_gmm(
            &projected[..a.len()],
            config.mixtures,
            config.covariance,
            config.seed.wrapping_add((i * n + j) as u64),
            config.max_iter,
            config.tol,
        )?;
        let (model_b, _) = gmm::train_gmm(
            &projected[a.len()..],
            config.mixtures,
            config.covariance,
            config.seed.wrapping_add((j * n + i) as u64),
            config.max_iter,
            config.tol,
        )?;
        classifiers.push(PairClassifier {
            pair: (i, j),
            pipeline,
            models: [model_a, model_b],
        });
    }
    Ok(PairwiseDecoder {
        labels: labels.to_vec(),
        classifiers,
        codewords: CodewordMatrix::new(n),
    })
}
