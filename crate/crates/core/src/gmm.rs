//! Gaussian mixture density models per emotion: seeded k-means
//! initialization, EM re-estimation with a covariance floor, log-sum-exp
//! scoring and maximum-likelihood classification.

use rand::prelude::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};

pub const COV_FLOOR: f64 = 1e-6;
pub const DEFAULT_MIXTURES: usize = 32;
pub const PAIRWISE_MIXTURES: usize = 24;
pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CovarianceMode {
    #[default]
    Diagonal,
    Full,
}

/// One mixture component's covariance.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    /// Per-dimension variances.
    Diagonal(Vec<f64>),
    /// Row-major D x D matrix.
    Full(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Covariance>,
    pub label: Option<EmotionLabel>,
    /// Fingerprint of the reduction pipeline the training features came
    /// through; checked at scoring time when both sides declare one.
    pub pipeline_hash: Option<u64>,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map(|m| m.len()).unwrap_or(0)
    }
}

/// Diagnostics from one EM run.
#[derive(Clone, Debug, Default)]
pub struct EmReport {
    /// Mean log-likelihood per iteration.
    pub trace: Vec<f64>,
    /// (iteration, component) pairs where a starved component was respawned.
    pub respawns: Vec<(usize, usize)>,
    pub converged: bool,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded k-means (k-means++ seeding, Lloyd iterations capped at 100 or a
/// 1e-6 relative inertia change). Weights are cluster fractions; variances
/// are per-cluster diagonal variances, floored.
pub fn kmeans_init(
    x: &[Vec<f64>],
    m: usize,
    mode: CovarianceMode,
    seed: u64,
) -> Result<GmmModel> {
    let n = x.len();
    if m == 0 || n < m {
        return Err(Error::Argument(format!(
            "k-means needs n >= M >= 1, got n={n}, M={m}"
        )));
    }
    let d = x[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = vec![x.choose(&mut rng).unwrap().clone()];
    while centers.len() < m {
        let d2: Vec<f64> = x
            .iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All points coincide with existing centers; pick any.
            rng.random_range(0..n)
        } else {
            let mut t = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if t < w {
                    pick = i;
                    break;
                }
                t -= w;
            }
            pick
        };
        centers.push(x[next].clone());
    }

    let mut assign = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..100 {
        let mut inertia = 0.0;
        for (i, p) in x.iter().enumerate() {
            let (best, dist) = centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, sq_dist(p, c)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            assign[i] = best;
            inertia += dist;
        }
        let mut counts = vec![0usize; m];
        let mut sums = vec![vec![0.0; d]; m];
        for (i, p) in x.iter().enumerate() {
            counts[assign[i]] += 1;
            for j in 0..d {
                sums[assign[i]][j] += p[j];
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                for j in 0..d {
                    centers[k][j] = sums[k][j] / counts[k] as f64;
                }
            } else {
                // Empty cluster: restart it at the farthest point.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&x[a], &centers[assign[a]])
                            .partial_cmp(&sq_dist(&x[b], &centers[assign[b]]))
                            .unwrap()
                    })
                    .unwrap();
                centers[k] = x[far].clone();
            }
        }
        if prev_inertia.is_finite()
            && (prev_inertia - inertia).abs() <= 1e-6 * prev_inertia.abs().max(1e-30)
        {
            break;
        }
        prev_inertia = inertia;
    }

    let mut weights = vec![0.0; m];
    let mut vars = vec![vec![0.0; d]; m];
    let mut counts = vec![0usize; m];
    for (i, p) in x.iter().enumerate() {
        counts[assign[i]] += 1;
        for j in 0..d {
            let diff = p[j] - centers[assign[i]][j];
            vars[assign[i]][j] += diff * diff;
        }
    }
    for k in 0..m {
        weights[k] = counts[k] as f64 / n as f64;
        for j in 0..d {
            vars[k][j] = if counts[k] > 0 {
                (vars[k][j] / counts[k] as f64).max(COV_FLOOR)
            } else {
                1.0
            };
        }
    }
    let covariances = vars
        .into_iter()
        .map(|v| match mode {
            CovarianceMode::Diagonal => Covariance::Diagonal(v),
            CovarianceMode::Full => {
                let mut mfull = vec![vec![0.0; d]; d];
                for j in 0..d {
                    mfull[j][j] = v[j];
                }
                Covariance::Full(mfull)
            }
        })
        .collect();
    Ok(GmmModel {
        weights,
        means: centers,
        covariances,
        label: None,
        pipeline_hash: None,
    })
}

const LN_2PI: f64 = 1.8378770664093453;

fn component_log_density(mean: &[f64], cov: &Covariance, x: &[f64]) -> Result<f64> {
    let d = mean.len();
    match cov {
        Covariance::Diagonal(vars) => {
            let mut acc = 0.0;
            for j in 0..d {
                let diff = x[j] - mean[j];
                acc += LN_2PI + vars[j].ln() + diff * diff / vars[j];
            }
            Ok(-0.5 * acc)
        }
        Covariance::Full(rows) => {
            let m = nalgebra::DMatrix::from_fn(d, d, |i, j| rows[i][j]);
            let chol = m
                .cholesky()
                .ok_or_else(|| Error::Numerical("non-positive-definite covariance".into()))?;
            let diff = nalgebra::DVector::from_fn(d, |j, _| x[j] - mean[j]);
            let z = chol.l().solve_lower_triangular(&diff).ok_or_else(|| {
                Error::Numerical("covariance triangular solve failed".into())
            })?;
            let logdet: f64 = 2.0 * (0..d).map(|i| chol.l()[(i, i)].ln()).sum::<f64>();
            Ok(-0.5 * (d as f64 * LN_2PI + logdet + z.norm_squared()))
        }
    }
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log mixture density ln p(x | model).
pub fn log_density(model: &GmmModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::Argument(format!(
            "input dimension {} does not match model dimension {}",
            x.len(),
            model.dim()
        )));
    }
    let terms: Vec<f64> = model
        .weights
        .iter()
        .zip(model.means.iter().zip(&model.covariances))
        .map(|(&w, (mean, cov))| {
            Ok(if w <= 0.0 {
                f64::NEG_INFINITY
            } else {
                w.ln() + component_log_density(mean, cov, x)?
            })
        })
        .collect::<Result<_>>()?;
    Ok(log_sum_exp(&terms))
}

/// EM re-estimation. Each iteration computes responsibilities, refits
/// weights, means and (floored) covariances, and records the mean
/// log-likelihood; the trace never decreases. Components whose total
/// responsibility falls below 1e-8 * n are respawned at the sample with the
/// lowest mixture likelihood.
pub fn em_fit(
    mut model: GmmModel,
    x: &[Vec<f64>],
    max_iter: usize,
    tol: f64,
) -> Result<(GmmModel, EmReport)> {
    let n = x.len();
    let d = model.dim();
    let m = model.n_components();
    if n == 0 || x[0].len() != d {
        return Err(Error::Argument("data/model dimension mismatch".into()));
    }
    let mut report = EmReport::default();
    let mut prev_ll = f64::NEG_INFINITY;

    for iter in 0..max_iter {
        // E-step.
        let mut resp = vec![vec![0.0; m]; n];
        let mut sample_ll = vec![0.0; n];
        for (i, p) in x.iter().enumerate() {
            let logs: Vec<f64> = (0..m)
                .map(|k| {
                    Ok(if model.weights[k] <= 0.0 {
                        f64::NEG_INFINITY
                    } else {
                        model.weights[k].ln()
                            + component_log_density(&model.means[k], &model.covariances[k], p)?
                    })
                })
                .collect::<Result<_>>()?;
            let total = log_sum_exp(&logs);
            if total.is_nan() {
                return Err(Error::Numerical(format!(
                    "likelihood became NaN at iteration {iter}"
                )));
            }
            sample_ll[i] = total;
            for k in 0..m {
                resp[i][k] = (logs[k] - total).exp();
            }
        }
        let ll = sample_ll.iter().sum::<f64>() / n as f64;
        report.trace.push(ll);

        // M-step.
        let masses: Vec<f64> = (0..m).map(|k| x.iter().enumerate().map(|(i, _)| resp[i][k]).sum()).collect();
        for k in 0..m {
            if masses[k] < 1e-8 * n as f64 {
                let worst = (0..n)
                    .min_by(|&a, &b| sample_ll[a].partial_cmp(&sample_ll[b]).unwrap())
                    .unwrap();
                model.means[k] = x[worst].clone();
                let global_var: Vec<f64> = (0..d)
                    .map(|j| {
                        let mu = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
                        (x.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / n as f64)
                            .max(COV_FLOOR)
                    })
                    .collect();
                model.covariances[k] = match model.covariances[k] {
                    Covariance::Diagonal(_) => Covariance::Diagonal(global_var),
                    Covariance::Full(_) => {
                        let mut full = vec![vec![0.0; d]; d];
                        for j in 0..d {
                            full[j][j] = global_var[j];
                        }
                        Covariance::Full(full)
                    }
                };
                model.weights[k] = 1.0 / n as f64;
                report.respawns.push((iter, k));
                continue;
            }
            model.weights[k] = masses[k] / n as f64;
            for j in 0..d {
                model.means[k][j] =
                    x.iter().enumerate().map(|(i, r)| resp[i][k] * r[j]).sum::<f64>() / masses[k];
            }
            match &mut model.covariances[k] {
                Covariance::Diagonal(vars) => {
                    for j in 0..d {
                        let s: f64 = x
                            .iter()
                            .enumerate()
                            .map(|(i, r)| resp[i][k] * (r[j] - model.means[k][j]).powi(2))
                            .sum();
                        vars[j] = (s / masses[k]).max(COV_FLOOR);
                    }
                }
                Covariance::Full(rows) => {
                    for a in 0..d {
                        for b in 0..d {
                            let s: f64 = x
                                .iter()
                                .enumerate()
                                .map(|(i, r)| {
                                    resp[i][k]
                                        * (r[a] - model.means[k][a])
                                        * (r[b] - model.means[k][b])
                                })
                                .sum();
                            rows[a][b] = s / masses[k];
                        }
                    }
                    for j in 0..d {
                        rows[j][j] = rows[j][j].max(COV_FLOOR);
                    }
                }
            }
        }
        // Re-normalize in case respawns disturbed the simplex.
        let wsum: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= wsum;
        }

        if prev_ll.is_finite() && (ll - prev_ll).abs() <= tol * prev_ll.abs().max(1e-30) {
            report.converged = true;
            break;
        }
        prev_ll = ll;
    }
    Ok((model, report))
}

/// One GMM per emotion over a declared label order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionClassifier {
    pub labels: Vec<EmotionLabel>,
    pub models: Vec<GmmModel>,
}

impl EmotionClassifier {
    pub fn new(labels: Vec<EmotionLabel>, models: Vec<GmmModel>) -> Result<Self> {
        if labels.len() != models.len() || labels.is_empty() {
            return Err(Error::Argument("label/model count mismatch".into()));
        }
        let d = models[0].dim();
        let h = models[0].pipeline_hash;
        for m in &models {
            if m.dim() != d {
                return Err(Error::Argument("models disagree on dimension".into()));
            }
            if m.pipeline_hash != h {
                return Err(Error::Provenance(
                    "models trained through different pipelines".into(),
                ));
            }
        }
        Ok(EmotionClassifier { labels, models })
    }

    pub fn pipeline_hash(&self) -> Option<u64> {
        self.models[0].pipeline_hash
    }

    /// Maximum-likelihood label plus per-emotion log-densities. Ties go to
    /// the earlier label in the declared order. When both the classifier and
    /// the caller carry a pipeline fingerprint they must agree.
    pub fn classify(
        &self,
        x: &[f64],
        provenance: Option<u64>,
    ) -> Result<(EmotionLabel, Vec<f64>)> {
        if let (Some(a), Some(b)) = (self.pipeline_hash(), provenance) {
            if a != b {
                return Err(Error::Provenance(format!(
                    "feature pipeline hash {b:016x} does not match model hash {a:016x}"
                )));
            }
        }
        let scores: Vec<f64> = self
            .models
            .iter()
            .map(|m| log_density(m, x))
            .collect::<Result<_>>()?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = i;
            }
        }
        Ok((self.labels[best].clone(), scores))
    }
}

/// Trains one mixture on a class's rows: k-means seed then EM.
pub fn train_gmm(
    x: &[Vec<f64>],
    mixtures: usize,
    mode: CovarianceMode,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(GmmModel, EmReport)> {
    let init = kmeans_init(x, mixtures, mode, seed)?;
    em_fit(init, x, max_iter, tol)
}
