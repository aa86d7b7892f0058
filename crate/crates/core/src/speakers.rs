//! Speaker handling: a projected speaker space, soft speaker clustering,
//! and per-cluster feature normalization.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::reduce::{lda_fit, pca_fit, Lda, Pca};

pub const DEFAULT_CLUSTERS: usize = 14;
pub const DEFAULT_ALPHA: f64 = 2.0;
pub const MEMBERSHIP_TOL: f64 = 1e-6;
pub const MAX_CLUSTER_ITER: usize = 300;

/// PCA truncation followed by a discriminant projection trained on speaker
/// identities.
#[derive(Clone, Debug)]
pub struct SpeakerSpace {
    pub pca: Pca,
    pub lda: Lda,
}

impl SpeakerSpace {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        self.lda.apply_row(&self.pca.apply_row(row))
    }

    pub fn out_dim(&self) -> usize {
        self.lda.projection.len()
    }
}

pub fn speaker_space(
    x: &[Vec<f64>],
    speakers: &[String],
    pca_dim: usize,
    out_dim: Option<usize>,
) -> Result<SpeakerSpace> {
    if x.len() != speakers.len() || x.is_empty() {
        return Err(Error::Argument("feature/speaker length mismatch".into()));
    }
    let mut names: Vec<&String> = Vec::new();
    let mut y = Vec::with_capacity(speakers.len());
    for s in speakers {
        let idx = match names.iter().position(|n| *n == s) {
            Some(i) => i,
            None => {
                names.push(s);
                names.len() - 1
            }
        };
        y.push(idx);
    }
    if names.len() < 2 {
        return Err(Error::Argument("need at least two speakers".into()));
    }
    for (i, name) in names.iter().enumerate() {
        if y.iter().filter(|&&c| c == i).count() < 2 {
            return Err(Error::Argument(format!(
                "speaker '{name}' needs at least two samples"
            )));
        }
    }
    let pca = pca_fit(x, pca_dim)?;
    let projected: Vec<Vec<f64>> = x.iter().map(|r| pca.apply_row(r)).collect();
    let requested = out_dim.unwrap_or(names.len() - 1).min(names.len() - 1);
    let lda = lda_fit(&projected, &y, Some(requested)).map_err(|e| match e {
        Error::SingularScatter(msg) => Error::SingularScatter(format!(
            "{msg}; retry with a smaller PCA dimension"
        )),
        other => other,
    })?;
    Ok(SpeakerSpace { pca, lda })
}

/// Soft clustering model: frozen centers plus the fuzziness exponent.
#[derive(Clone, Debug)]
pub struct FuzzyKMeans {
    pub centers: Vec<Vec<f64>>,
    pub alpha: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl FuzzyKMeans {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    /// Membership column for one sample; columns sum to 1. A sample sitting
    /// on a center belongs to it outright.
    pub fn membership_row(&self, x: &[f64]) -> Vec<f64> {
        let k = self.centers.len();
        if k == 1 {
            return vec![1.0];
        }
        let d2: Vec<f64> = self.centers.iter().map(|c| sq_dist(c, x)).collect();
        let coincident: Vec<usize> = (0..k).filter(|&i| d2[i] <= 1e-24).collect();
        if !coincident.is_empty() {
            let mut w = vec![0.0; k];
            let share = 1.0 / coincident.len() as f64;
            for i in coincident {
                w[i] = share;
            }
            return w;
        }
        let exp = 1.0 / (self.alpha - 1.0);
        (0..k)
            .map(|i| {
                let denom: f64 = (0..k).map(|m| (d2[i] / d2[m]).powf(exp)).sum();
                1.0 / denom
            })
            .collect()
    }

    /// k x n membership matrix.
    pub fn memberships(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = x.len();
        let mut w = vec![vec![0.0; n]; self.k()];
        for (j, row) in x.iter().enumerate() {
            for (i, v) in self.membership_row(row).into_iter().enumerate() {
                w[i][j] = v;
            }
        }
        w
    }

    /// Weighted within-cluster scatter the iteration descends on.
    pub fn objective(&self, x: &[Vec<f64>], w: &[Vec<f64>]) -> f64 {
        let mut j_alpha = 0.0;
        for (i, c) in self.centers.iter().enumerate() {
            for (j, row) in x.iter().enumerate() {
                j_alpha += w[i][j].powf(self.alpha) * sq_dist(c, row);
            }
        }
        j_alpha
    }
}

/// Alternating soft-assignment clustering. Returns the frozen model, the
/// final memberships, and the objective trace.
pub fn fuzzy_kmeans(
    x: &[Vec<f64>],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<(FuzzyKMeans, Vec<Vec<f64>>, Vec<f64>)> {
    let n = x.len();
    if n == 0 || k == 0 {
        return Err(Error::Argument("empty data or zero clusters".into()));
    }
    if k > n {
        return Err(Error::Argument(format!("{k} clusters for {n} samples")));
    }
    if alpha <= 1.0 {
        return Err(Error::Argument("fuzziness exponent must exceed 1".into()));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Argument("ragged feature matrix".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = (0..n).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let c = *idx.choose(&mut rng).unwrap();
        if !chosen.contains(&c) {
            chosen.push(c);
        }
    }
    let mut model = FuzzyKMeans {
        centers: chosen.iter().map(|&i| x[i].clone()).collect(),
        alpha,
    };

    let mut w = model.memberships(x);
    let mut trace = vec![model.objective(x, &w)];
    for _ in 0..MAX_CLUSTER_ITER {
        for (i, center) in model.centers.iter_mut().enumerate() {
            let mut num = vec![0.0; d];
            let mut den = 0.0;
            for (j, row) in x.iter().enumerate() {
                let wa = w[i][j].powf(alpha);
                den += wa;
                for (t, v) in row.iter().enumerate() {
                    num[t] += wa * v;
                }
            }
            if den > 0.0 {
                for v in &mut num {
                    *v /= den;
                }
                *center = num;
            }
        }
        let next = model.memberships(x);
        let mut delta: f64 = 0.0;
        for i in 0..k {
            for j in 0..n {
                delta = delta.max((next[i][j] - w[i][j]).abs());
            }
        }
        w = next;
        trace.push(model.objective(x, &w));
        if delta < MEMBERSHIP_TOL {
            break;
        }
    }
    Ok((model, w, trace))
}

/// Which divisor the per-cluster mean uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MeanMode {
    #[default]
    SumOverN,
    /// Printed-formula variant dividing the mean by N-1 as well.
    SumOverNMinusOne,
}

/// Per-cluster standardization statistics plus the clustering that routes
/// samples to them.
#[derive(Clone, Debug)]
pub struct SpeakerNormalizer {
    pub kmeans: FuzzyKMeans,
    /// k x d per-cluster means and standard deviations.
    pub means: Vec<Vec<f64>>,
    pub stds: Vec<Vec<f64>>,
    /// Clusters that fell back to global statistics (too few members).
    pub fallbacks: Vec<usize>,
    pub mean_mode: MeanMode,
}

const STD_EPS: f64 = 1e-12;

fn column_stats(rows: &[&Vec<f64>], d: usize, mode: MeanMode) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (t, v) in r.iter().enumerate() {
            mean[t] += v;
        }
    }
    let mean_div = match mode {
        MeanMode::SumOverN => n,
        MeanMode::SumOverNMinusOne => n - 1.0,
    };
    for v in &mut mean {
        *v /= mean_div;
    }
    let mut var = vec![0.0; d];
    for r in rows {
        for (t, v) in r.iter().enumerate() {
            let c = v - mean[t];
            var[t] += c * c;
        }
    }
    let std = var.into_iter().map(|s| (s / (n - 1.0)).sqrt()).collect();
    (mean, std)
}

impl SpeakerNormalizer {
    /// Standardize within the sample's top cluster and append that top
    /// membership value; output is one column wider than the input.
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        let w = self.kmeans.membership_row(row);
        let (best, top) = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, &v)| (i, v))
            .unwrap();
        let mut out: Vec<f64> = row
            .iter()
            .zip(self.means[best].iter().zip(&self.stds[best]))
            .map(|(v, (m, s))| if *s <= STD_EPS { 0.0 } else { (v - m) / s })
            .collect();
        out.push(top);
        out
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.apply_row(r)).collect()
    }
}

/// Train soft clusters on the feature rows, compute per-cluster
/// standardization, and return the transformed matrix alongside the frozen
/// normalizer.
pub fn cluster_normalize(
    x: &[Vec<f64>],
    k: usize,
    alpha: f64,
    seed: u64,
    mean_mode: MeanMode,
) -> Result<(SpeakerNormalizer, Vec<Vec<f64>>)> {
    let (kmeans, w, _) = fuzzy_kmeans(x, k, alpha, seed)?;
    let n = x.len();
    let d = x[0].len();

    let assignments: Vec<usize> = (0..n)
        .map(|j| {
            (0..k)
                .max_by(|&a, &b| w[a][j].partial_cmp(&w[b][j]).unwrap())
                .unwrap()
        })
        .collect();

    let all: Vec<&Vec<f64>> = x.iter().collect();
    let (global_mean, global_std) = column_stats(&all, d, mean_mode);

    let mut means = Vec::with_capacity(k);
    let mut stds = Vec::with_capacity(k);
    let mut fallbacks = Vec::new();
    for i in 0..k {
        let members: Vec<&Vec<f64>> = x
            .iter()
            .zip(&assignments)
            .filter(|(_, &a)| a == i)
            .map(|(r, _)| r)
            .collect();
        if members.len() < 2 {
            fallbacks.push(i);
            means.push(global_mean.clone());
            stds.push(global_std.clone());
        } else {
            let (m, s) = column_stats(&members, d, mean_mode);
            means.push(m);
            stds.push(s);
        }
    }

    let normalizer = SpeakerNormalizer {
        kmeans,
        means,
        stds,
        fallbacks,
        mean_mode,
    };
    let transformed = normalizer.apply(x);
    Ok((normalizer, transformed))
}
