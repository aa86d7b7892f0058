//! Context smoothing over utterance chains: emotion labels carry
//! (arousal, valence) coordinates, adjacent short utterances and their
//! concatenated long utterance form spring cliques, and an exact dynamic
//! program minimizes the total network energy.

use std::f64::consts::FRAC_PI_2;

use crate::corpus::EmotionLabel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Metric {
    L1,
    #[default]
    L2,
}

/// How the spring stiffnesses distribute over a clique's three edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CliqueMode {
    /// Stiffness sigma0 on the short-short edge, 1 on both short-long edges.
    #[default]
    PerEdge,
    /// Stiffness sigma0 on all three edges.
    Uniform,
}

pub const DEFAULT_SIGMA0: f64 = 0.5;
pub const MAX_LABELS: usize = 32;
pub const MAX_CHAIN: usize = 100_000;

/// Per-label 2-D (arousal, valence) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionCoords {
    pub labels: Vec<EmotionLabel>,
    pub coords: Vec<(f64, f64)>,
}

impl EmotionCoords {
    pub fn new(entries: &[(&str, f64, f64)]) -> Self {
        EmotionCoords {
            labels: entries.iter().map(|(n, _, _)| EmotionLabel::from(*n)).collect(),
            coords: entries.iter().map(|&(_, a, v)| (a, v)).collect(),
        }
    }

    pub fn default_table() -> Self {
        Self::new(&[
            ("neutral", 0.0, 0.0),
            ("fidgety", 0.8, -0.8),
            ("confident", 0.6, 0.6),
            ("tired", -0.6, -0.5),
            ("joy", 0.9, 0.8),
            ("angry", 0.9, -0.9),
            ("sad", -0.7, -0.7),
            ("surprise", 0.8, 0.2),
            ("fear", 0.7, -0.7),
        ])
    }

    pub fn index_of(&self, label: &EmotionLabel) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Argument(format!("label '{label}' has no coordinates")))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Config file form: `label<TAB>arousal<TAB>valence` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (l, &(a, v)) in self.labels.iter().zip(&self.coords) {
            out.push_str(&format!("{l}\t{a}\t{v}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        let mut coords = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::Format(format!(
                    "coordinate line {}: need label, arousal, valence",
                    lineno + 1
                )));
            }
            let a: f64 = fields[1].trim().parse().map_err(|_| {
                Error::Format(format!("coordinate line {}: bad arousal", lineno + 1))
            })?;
            let v: f64 = fields[2].trim().parse().map_err(|_| {
                Error::Format(format!("coordinate line {}: bad valence", lineno + 1))
            })?;
            labels.push(EmotionLabel::from(fields[0].trim()));
            coords.push((a, v));
        }
        if labels.is_empty() {
            return Err(Error::Format("empty coordinate table".into()));
        }
        Ok(EmotionCoords { labels, coords })
    }
}

fn dist_xy(a: (f64, f64), b: (f64, f64), metric: Metric) -> f64 {
    let (dx, dy) = (a.0 - b.0, a.1 - b.1);
    match metric {
        Metric::L1 => dx.abs() + dy.abs(),
        Metric::L2 => (dx * dx + dy * dy).sqrt(),
    }
}

/// Distance between two labels' coordinates.
pub fn label_distance(
    l1: &EmotionLabel,
    l2: &EmotionLabel,
    coords: &EmotionCoords,
    metric: Metric,
) -> Result<f64> {
    let a = coords.coords[coords.index_of(l1)?];
    let b = coords.coords[coords.index_of(l2)?];
    Ok(dist_xy(a, b, metric))
}

/// First-order node energy from a density: -(ln arctan(p/divisor) - ln(pi/2)).
/// Zero density costs infinitely much.
pub fn unary_energy(p: f64, divisor: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    -((p / divisor).atan().ln() - FRAC_PI_2.ln())
}

fn clique_energy_idx(
    s1: usize,
    s2: usize,
    long: usize,
    d2: &[Vec<f64>],
    sigma0: f64,
    mode: CliqueMode,
) -> f64 {
    let (short_short, short_long) = match mode {
        CliqueMode::PerEdge => (sigma0, 1.0),
        CliqueMode::Uniform => (sigma0, sigma0),
    };
    0.5 * (short_short * d2[s1][s2] + short_long * (d2[s1][long] + d2[s2][long]))
}

/// Spring potential of one triangle (two adjacent short labels and their
/// long label).
pub fn clique_energy(
    l_s1: &EmotionLabel,
    l_s2: &EmotionLabel,
    l_long: &EmotionLabel,
    coords: &EmotionCoords,
    sigma0: f64,
    metric: Metric,
    mode: CliqueMode,
) -> Result<f64> {
    let d = |a: &EmotionLabel, b: &EmotionLabel| -> Result<f64> {
        label_distance(a, b, coords, metric)
    };
    let (d12, d1l, d2l) = (d(l_s1, l_s2)?, d(l_s1, l_long)?, d(l_s2, l_long)?);
    let (ss, sl) = match mode {
        CliqueMode::PerEdge => (sigma0, 1.0),
        CliqueMode::Uniform => (sigma0, sigma0),
    };
    Ok(0.5 * (ss * d12 * d12 + sl * (d1l * d1l + d2l * d2l)))
}

/// A chain of short utterances with per-label unary energies, plus one long
/// node per adjacent pair.
#[derive(Clone, Debug)]
pub struct ChainProblem {
    pub coords: EmotionCoords,
    /// T x |L| short-node unaries.
    pub short_unaries: Vec<Vec<f64>>,
    /// (T-1) x |L| long-node unaries.
    pub long_unaries: Vec<Vec<f64>>,
    pub sigma0: f64,
    pub metric: Metric,
    pub mode: CliqueMode,
}

impl ChainProblem {
    fn validate(&self) -> Result<()> {
        let t = self.short_unaries.len();
        let l = self.coords.len();
        if t < 2 {
            return Err(Error::Argument("chain needs at least two short nodes".into()));
        }
        if t > MAX_CHAIN || l > MAX_LABELS {
            return Err(Error::Argument(format!(
                "chain size {t} x {l} labels exceeds capacity {MAX_CHAIN} x {MAX_LABELS}"
            )));
        }
        if self.long_unaries.len() != t - 1 {
            return Err(Error::Argument("need one long node per adjacent pair".into()));
        }
        if self.sigma0 < 0.0 {
            return Err(Error::Argument("negative stiffness".into()));
        }
        for row in self.short_unaries.iter().chain(&self.long_unaries) {
            if row.len() != l {
                return Err(Error::Argument("unary table width != label count".into()));
            }
        }
        Ok(())
    }

    fn squared_distances(&self) -> Vec<Vec<f64>> {
        let l = self.coords.len();
        (0..l)
            .map(|a| {
                (0..l)
                    .map(|b| {
                        let d = dist_xy(self.coords.coords[a], self.coords.coords[b], self.metric);
                        d * d
                    })
                    .collect()
            })
            .collect()
    }
}

/// One full labeling of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub shorts: Vec<usize>,
    pub longs: Vec<usize>,
}

/// Total network energy: all unaries plus all clique potentials.
pub fn total_energy(assignment: &Assignment, problem: &ChainProblem) -> Result<f64> {
    problem.validate()?;
    let t = problem.short_unaries.len();
    if assignment.shorts.len() != t || assignment.longs.len() != t - 1 {
        return Err(Error::Argument("assignment does not cover every node".into()));
    }
    let d2 = problem.squared_distances();
    let mut v = 0.0;
    for (k, &s) in assignment.shorts.iter().enumerate() {
        v += problem.short_unaries[k][s];
    }
    for (k, &l) in assignment.longs.iter().enumerate() {
        v += problem.long_unaries[k][l];
        v += clique_energy_idx(
            assignment.shorts[k],
            assignment.shorts[k + 1],
            l,
            &d2,
            problem.sigma0,
            problem.mode,
        );
    }
    Ok(v)
}

/// Exact minimizer: dynamic program over the chain with the short-node label
/// as state; each triangle's long label is minimized conditioned on its two
/// short labels. O(T * |L|^3).
pub fn minimize(problem: &ChainProblem) -> Result<(Assignment, f64)> {
    problem.validate()?;
    let t = problem.short_unaries.len();
    let l = problem.coords.len();
    let d2 = problem.squared_distances();

    // best_long[k][a][b]: (cost, label) of the optimal long choice for
    // triangle k given short labels (a, b).
    let mut dp = vec![vec![f64::INFINITY; l]; t];
    let mut parent = vec![vec![0usize; l]; t];
    let mut best_long = vec![vec![vec![(f64::INFINITY, 0usize); l]; l]; t - 1];

    dp[0].clone_from_slice(&problem.short_unaries[0]);
    for k in 0..t - 1 {
        for a in 0..l {
            for b in 0..l {
                let mut best = (f64::INFINITY, 0usize);
                for lab in 0..l {
                    let c = problem.long_unaries[k][lab]
                        + clique_energy_idx(a, b, lab, &d2, problem.sigma0, problem.mode);
                    if c < best.0 {
                        best = (c, lab);
                    }
                }
                best_long[k][a][b] = best;
            }
        }
        for b in 0..l {
            let mut best_cost = f64::INFINITY;
            let mut best_a = 0;
            for a in 0..l {
                let c = dp[k][a] + best_long[k][a][b].0;
                if c < best_cost {
                    best_cost = c;
                    best_a = a;
                }
            }
            dp[k + 1][b] = best_cost + problem.short_unaries[k + 1][b];
            parent[k + 1][b] = best_a;
        }
    }

    let mut last = 0;
    for b in 1..l {
        if dp[t - 1][b] < dp[t - 1][last] {
            last = b;
        }
    }
    let v_star = dp[t - 1][last];

    let mut shorts = vec![0usize; t];
    shorts[t - 1] = last;
    for k in (0..t - 1).rev() {
        shorts[k] = parent[k + 1][shorts[k + 1]];
    }
    let longs: Vec<usize> = (0..t - 1)
        .map(|k| best_long[k][shorts[k]][shorts[k + 1]].1)
        .collect();
    Ok((Assignment { shorts, longs }, v_star))
}
