//! Feature reduction: per-dimension normalization, discriminant-ratio
//! scoring and selection, PCA compression and LDA projection, composed into
//! a replayable pipeline fitted on training data only.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How the per-dimension normalization divides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MinMaxMode {
    /// (f - min) / max; dimensions with max = 0 map to 0.
    #[default]
    DivideByMax,
    /// (f - min) / (max - min); constant dimensions map to 0.
    DivideByRange,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MinMax {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub mode: MinMaxMode,
}

impl MinMax {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&f, (&lo, &hi))| {
                let denom = match self.mode {
                    MinMaxMode::DivideByMax => hi,
                    MinMaxMode::DivideByRange => hi - lo,
                };
                if denom == 0.0 {
                    0.0
                } else {
                    (f - lo) / denom
                }
            })
            .collect()
    }
}

/// Fits per-dimension normalization on training rows; values outside the
/// training range pass through unclamped.
pub fn minmax_fit(x: &[Vec<f64>], mode: MinMaxMode) -> Result<MinMax> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Argument("minmax needs at least one row".into()));
    }
    let d = x[0].len();
    let mut mins = vec![f64::INFINITY; d];
    let mut maxs = vec![f64::NEG_INFINITY; d];
    for row in x {
        if row.len() != d {
            return Err(Error::Argument("ragged feature matrix".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            mins[j] = mins[j].min(v);
            maxs[j] = maxs[j].max(v);
        }
    }
    Ok(MinMax { mins, maxs, mode })
}

/// Per-dimension class-separability score: sum over ordered class pairs of
/// (difference of class means)^2 / (sum of class variances). A zero
/// denominator scores +inf when the means differ and contributes 0 when
/// they coincide.
pub fn fdr_scores(x: &[Vec<f64>], y: &[usize]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Argument("feature/label length mismatch".into()));
    }
    let d = x[0].len();
    let classes: Vec<usize> = {
        let mut c: Vec<usize> = y.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let mut scores = vec![0.0; d];
    let mut means = Vec::new();
    let mut vars = Vec::new();
    for &c in &classes {
        let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == c).map(|(r, _)| r).collect();
        if rows.len() < 2 {
            return Err(Error::Argument(format!(
                "class {c} has {} samples, need at least 2 for a variance",
                rows.len()
            )));
        }
        let n = rows.len() as f64;
        let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / n)
            .collect();
        means.push(mu);
        vars.push(var);
    }
    for i in 0..classes.len() {
        for j in 0..classes.len() {
            if i == j {
                continue;
            }
            for k in 0..d {
                let num = (means[i][k] - means[j][k]).powi(2);
                let den = vars[i][k] + vars[j][k];
                if den > 0.0 {
                    scores[k] += num / den;
                } else if num > 0.0 {
                    scores[k] = f64::INFINITY;
                }
            }
        }
    }
    Ok(scores)
}

/// Convex combination of two score vectors: w*a + (1-w)*b.
pub fn fdr_weighted(a: &[f64], b: &[f64], w: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Argument("score length mismatch".into()));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Argument(format!("weight {w} outside [0, 1]")));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| w * x + (1.0 - w) * y).collect())
}

/// Indices of the k largest scores, ties broken toward the lower index.
pub fn select_top(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::Argument(format!(
            "cannot select {k} of {} dimensions",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// d_pca rows, each a unit-norm d-vector.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl Pca {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row.iter().zip(&self.mean)).map(|(&w, (&x, &m))| w * (x - m)).sum())
            .collect()
    }

    pub fn reconstruct(&self, projected: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = self.mean.clone();
        for (coef, comp) in projected.iter().zip(&self.components) {
            for j in 0..d {
                out[j] += coef * comp[j];
            }
        }
        out
    }
}

fn sign_fix(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Principal components of mean-centered data, descending by variance
/// explained; each component's largest-magnitude coordinate is made
/// positive so the basis is deterministic.
pub fn pca_fit(x: &[Vec<f64>], d_pca: usize) -> Result<Pca> {
    let n = x.len();
    if n < 2 {
        return Err(Error::Argument("PCA needs at least two rows".into()));
    }
    let d = x[0].len();
    if d_pca > d.min(n - 1) {
        return Err(Error::Argument(format!(
            "PCA dimension {d_pca} exceeds min(n-1, d) = {}",
            d.min(n - 1)
        )));
    }
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut components = Vec::with_capacity(d_pca);
    let mut eigenvalues = Vec::with_capacity(d_pca);
    for &k in order.iter().take(d_pca) {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().cloned().collect();
        sign_fix(&mut v);
        components.push(v);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(Pca {
        mean,
        components,
        eigenvalues,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lda {
    /// (c-1) rows, each a d-vector.
    pub projection: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
}

impl Lda {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        self.projection
            .iter()
            .map(|u| u.iter().zip(row).map(|(&w, &x)| w * x).sum())
            .collect()
    }
}

/// Fisher discriminant projection to c-1 dimensions. The within-class
/// scatter is whitened through its Cholesky factor, the between-class
/// scatter is eigen-decomposed in the whitened space, and the vectors are
/// mapped back. A singular within-class scatter is reported with a hint to
/// truncate with PCA first.
pub fn lda_fit(x: &[Vec<f64>], y: &[usize], out_dim: Option<usize>) -> Result<Lda> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::Argument("feature/label length mismatch".into()));
    }
    let d = x[0].len();
    let n = x.len();
    let classes: Vec<usize> = {
        let mut c = y.to_vec();
        c.sort_unstable();
        c.dedup();
        c
    };
    let c = classes.len();
    if c < 2 {
        return Err(Error::Argument("LDA needs at least two classes".into()));
    }
    let dim = out_dim.unwrap_or(c - 1).min(c - 1);

    let global_mean = DVector::from_fn(d, |j, _| x.iter().map(|r| r[j]).sum::<f64>() / n as f64);
    let mut s_w = DMatrix::<f64>::zeros(d, d);
    let mut s_b = DMatrix::<f64>::zeros(d, d);
    for &cls in &classes {
        let rows: Vec<&Vec<f64>> = x.iter().zip(y).filter(|(_, &l)| l == cls).map(|(r, _)| r).collect();
        if rows.len() < 2 {
            return Err(Error::Argument(format!(
                "class {cls} has {} samples, need at least 2",
                rows.len()
            )));
        }
        let prior = rows.len() as f64 / n as f64;
        let mu = DVector::from_fn(d, |j, _| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64);
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for r in &rows {
            let diff = DVector::from_fn(d, |j, _| r[j]) - &mu;
            cov += &diff * diff.transpose();
        }
        cov /= rows.len() as f64;
        s_w += prior * cov;
        let dm = &mu - &global_mean;
        s_b += prior * &dm * dm.transpose();
    }

    let chol = s_w.clone().cholesky().ok_or_else(|| {
        Error::SingularScatter(
            "within-class scatter is singular; reduce dimensionality with PCA first".into(),
        )
    })?;
    let l = chol.l();
    // Whitened between-class scatter: L^-1 S_B L^-T, symmetric PSD.
    let li_sb = l.clone().solve_lower_triangular(&s_b).ok_or_else(|| {
        Error::SingularScatter("within-class scatter triangular solve failed".into())
    })?;
    let m = l
        .clone()
        .solve_lower_triangular(&li_sb.transpose())
        .ok_or_else(|| Error::SingularScatter("whitening solve failed".into()))?;
    let m = (&m + m.transpose()) / 2.0;
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

    let lt = l.transpose();
    let mut projection = Vec::with_capacity(dim);
    let mut eigenvalues = Vec::with_capacity(dim);
    for &k in order.iter().take(dim) {
        let v = eig.eigenvectors.column(k).clone_owned();
        // Back-map the whitened direction: u = L^-T v.
        let u = lt
            .solve_upper_triangular(&v)
            .ok_or_else(|| Error::SingularScatter("back-substitution failed".into()))?;
        let mut uv: Vec<f64> = u.iter().cloned().collect();
        let norm = uv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut uv {
                *x /= norm;
            }
        }
        sign_fix(&mut uv);
        projection.push(uv);
        eigenvalues.push(eig.eigenvalues[k]);
    }
    Ok(Lda {
        projection,
        eigenvalues,
    })
}

/// Ordered transforms applied as normalization, then index selection, then
/// PCA, then LDA; every stage optional, parameters fitted on training data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReductionPipeline {
    pub minmax: Option<MinMax>,
    pub selected: Option<Vec<usize>>,
    pub pca: Option<Pca>,
    pub lda: Option<Lda>,
}

impl ReductionPipeline {
    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        let mut v = match &self.minmax {
            Some(m) => m.apply_row(row),
            None => row.to_vec(),
        };
        if let Some(sel) = &self.selected {
            v = sel.iter().map(|&i| v[i]).collect();
        }
        if let Some(p) = &self.pca {
            v = p.apply_row(&v);
        }
        if let Some(l) = &self.lda {
            v = l.apply_row(&v);
        }
        v
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }

    /// Output dimensionality given an input width.
    pub fn out_dim(&self, input_dim: usize) -> usize {
        if let Some(l) = &self.lda {
            return l.projection.len();
        }
        if let Some(p) = &self.pca {
            return p.components.len();
        }
        if let Some(s) = &self.selected {
            return s.len();
        }
        input_dim
    }
}
