mod data;
mod model;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emokit::context::{self, ChainProblem, CliqueMode, EmotionCoords, Metric};
use emokit::corpus::{self, EmotionLabel, NoiseKind};
use emokit::dsp::{extract_tracks, ExtractionParams};
use emokit::enhance::{self, EnhanceConfig, SpreadMode, ThresholdFormula};
use emokit::features::{assemble, FeatureMask, REGISTRY_VERSION};
use emokit::fuse::{self, ChannelScores};
use emokit::gmm::{self, CovarianceMode, EmotionClassifier, GmmModel};
use emokit::pairwise::{train_pairs, PairwiseConfig};
use emokit::reduce::{self, MinMaxMode, ReductionPipeline};
use emokit::reject::{self, Decision, RejectionPolicy};
use emokit::speakers::{cluster_normalize, MeanMode};
use emokit::{Error, Result};

use data::{read_dataset, write_dataset, write_impute, Dataset, DatasetRow};
use model::{pipeline_fingerprint, read_model, write_model, ModelFile, TrainedModel};
use report::{write_report, ConfusionReport};

#[derive(Parser)]
#[command(name = "emokit", version, about = "Speech emotion recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CovArg {
    Diagonal,
    Full,
}

impl From<CovArg> for CovarianceMode {
    fn from(c: CovArg) -> Self {
        match c {
            CovArg::Diagonal => CovarianceMode::Diagonal,
            CovArg::Full => CovarianceMode::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    Specsub,
    Masking,
}

#[derive(Clone, Copy, ValueEnum)]
enum FuseMode {
    Decision,
    Feature,
    Both,
}

#[derive(Args, Clone)]
struct TrainOpts {
    /// Mixture components per class model.
    #[arg(long, default_value_t = gmm::DEFAULT_MIXTURES)]
    mixtures: usize,
    #[arg(long, value_enum, default_value = "diagonal")]
    covariance: CovArg,
    /// Keep the top-N columns by discriminant ratio before projection.
    #[arg(long)]
    top: Option<usize>,
    /// Principal-component count (pair projection dimension in pairwise mode).
    #[arg(long)]
    pca: Option<usize>,
    /// Append a supervised discriminant projection.
    #[arg(long)]
    lda: bool,
    /// Train one two-class model per label pair instead of one model per label.
    #[arg(long)]
    pairwise: bool,
    /// Comma-separated closed label set; rows outside it fail fast.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long, default_value_t = gmm::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value_t = gmm::DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args, Clone)]
struct ContextOpts {
    /// Smooth predictions over recording-order chains per speaker.
    #[arg(long)]
    context: bool,
    #[arg(long, default_value_t = context::DEFAULT_SIGMA0)]
    sigma0: f64,
    /// Arousal/valence coordinate table (label<TAB>arousal<TAB>valence).
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Apply the stiffness to every edge instead of the short-short edge only.
    #[arg(long)]
    uniform_clique: bool,
    /// City-block label distance instead of Euclidean.
    #[arg(long)]
    l1: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute feature vectors for every clip in a manifest.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop pitch-derived entries (whispered speech has no pitch).
        #[arg(long)]
        whisper: bool,
        /// Where to write the per-clip imputed-index sidecar.
        #[arg(long)]
        impute: Option<PathBuf>,
        #[arg(long, default_value_t = 25.0)]
        frame_ms: f64,
        #[arg(long, default_value_t = 10.0)]
        hop_ms: f64,
    },
    /// Train a classifier on a labeled feature dataset.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        opts: TrainOpts,
    },
    /// Score a feature dataset against a model, or cross-validate.
    Eval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Frozen model file; mutually exclusive with --folds/--loso.
        #[arg(long, conflicts_with_all = ["folds", "loso"])]
        model: Option<PathBuf>,
        /// K-fold cross validation with per-fold retraining.
        #[arg(long, conflicts_with = "loso")]
        folds: Option<usize>,
        /// Leave-one-speaker-out cross validation.
        #[arg(long)]
        loso: bool,
        /// Training seed for the cross-validation modes.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        opts: TrainOpts,
        /// Withhold a decision when the density pattern is ambiguous.
        #[arg(long)]
        reject: bool,
        #[arg(long, default_value_t = 0.11, allow_negative_numbers = true)]
        threshold: f64,
        #[command(flatten)]
        context: ContextOpts,
    },
    /// Denoise a clip.
    Enhance {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Algorithm,
        /// Leading noise-only frames used for the noise estimate.
        #[arg(long, default_value_t = enhance::DEFAULT_LEADING_FRAMES)]
        leading: usize,
        /// Use the uncorrected quiet-threshold formula.
        #[arg(long)]
        literal_threshold: bool,
        /// Spread with |dz| instead of signed band distance.
        #[arg(long)]
        absolute_spread: bool,
    },
    /// Add seeded white noise at a target SNR.
    InjectNoise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target signal-to-noise ratio in dB.
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Fuse a multi-rater annotation file into per-sample labels.
    RateFuse {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Cluster-wise feature standardization to cancel speaker offsets.
    NormalizeSpeakers {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = emokit::speakers::DEFAULT_CLUSTERS)]
        clusters: usize,
        #[arg(long, default_value_t = emokit::speakers::DEFAULT_ALPHA)]
        alpha: f64,
        /// Divide the cluster mean by N-1 instead of N.
        #[arg(long)]
        mean_literal: bool,
    },
    /// Cross-validate speech + physiological channels fused together.
    FuseBimodal {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        physio: PathBuf,
        #[arg(long)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: FuseMode,
        #[arg(long, default_value_t = 4)]
        mixtures: usize,
        #[arg(long, default_value_t = fuse::FUSED_PCA_DIM)]
        pca: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Extract {
            manifest,
            out,
            whisper,
            impute,
            frame_ms,
            hop_ms,
        } => cmd_extract(&manifest, &out, whisper, impute.as_deref(), frame_ms, hop_ms),
        Command::Train {
            features,
            out,
            seed,
            opts,
        } => {
            let ds = load_dataset(&features)?;
            let trained = train_model(&ds, &(0..ds.rows.len()).collect::<Vec<_>>(), seed, &opts, None)?;
            std::fs::write(&out, write_model(&trained))?;
            Ok(())
        }
        Command::Eval {
            features,
            report,
            model,
            folds,
            loso,
            seed,
            opts,
            reject,
            threshold,
            context,
        } => cmd_eval(
            &features, &report, model.as_deref(), folds, loso, seed, &opts, reject, threshold,
            &context,
        ),
        Command::Enhance {
            input,
            out,
            algorithm,
            leading,
            literal_threshold,
            absolute_spread,
        } => {
            let clip = corpus::load_wav(&input)?;
            let result = match algorithm {
                Algorithm::Specsub => enhance::spectral_subtract(&clip, leading)?,
                Algorithm::Masking => {
                    let config = EnhanceConfig {
                        leading_frames: leading,
                        spread: if absolute_spread {
                            SpreadMode::Absolute
                        } else {
                            SpreadMode::Signed
                        },
                        threshold_formula: if literal_threshold {
                            ThresholdFormula::Literal
                        } else {
                            ThresholdFormula::Corrected
                        },
                        ..EnhanceConfig::default()
                    };
                    enhance::enhance_masking(&clip, &config)?
                }
            };
            corpus::save_wav(&result, &out)
        }
        Command::InjectNoise {
            input,
            out,
            snr,
            seed,
        } => {
            let clip = corpus::load_wav(&input)?;
            let noisy = corpus::inject_noise(&clip, snr, NoiseKind::WhiteGaussian, seed)?;
            corpus::save_wav(&noisy, &out)
        }
        Command::RateFuse { ratings, report } => cmd_rate_fuse(&ratings, &report),
        Command::NormalizeSpeakers {
            features,
            out,
            seed,
            clusters,
            alpha,
            mean_literal,
        } => {
            let ds = load_dataset(&features)?;
            let mode = if mean_literal {
                MeanMode::SumOverNMinusOne
            } else {
                MeanMode::SumOverN
            };
            let (norm, rows) = cluster_normalize(&ds.feature_rows(), clusters, alpha, seed, mode)?;
            for c in &norm.fallbacks {
                eprintln!("note: cluster {c} had too few members, used global statistics");
            }
            let out_ds = Dataset {
                registry: format!("{}+speaker-norm", ds.registry),
                dim: ds.dim + 1,
                masked: ds.masked.clone(),
                rows: ds
                    .rows
                    .iter()
                    .zip(rows)
                    .map(|(r, values)| DatasetRow {
                        values,
                        ..r.clone()
                    })
                    .collect(),
            };
            std::fs::write(&out, write_dataset(&out_ds))?;
            Ok(())
        }
        Command::FuseBimodal {
            features,
            physio,
            folds,
            seed,
            report,
            mode,
            mixtures,
            pca,
        } => cmd_fuse_bimodal(&features, &physio, folds, seed, &report, mode, mixtures, pca),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(&std::fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- extract

fn cmd_extract(
    manifest: &Path,
    out: &Path,
    whisper: bool,
    impute: Option<&Path>,
    frame_ms: f64,
    hop_ms: f64,
) -> Result<()> {
    let entries = corpus::parse_manifest(&std::fs::read_to_string(manifest)?)?;
    if entries.is_empty() {
        return Err(Error::Argument("manifest has no entries".into()));
    }
    let base = manifest.parent().unwrap_or(Path::new("."));
    let params = ExtractionParams {
        frame_ms,
        hop_ms,
        ..ExtractionParams::default()
    };
    let mask = if whisper {
        FeatureMask::whisper()
    } else {
        FeatureMask::all()
    };
    let masked: Vec<usize> = mask
        .included
        .iter()
        .enumerate()
        .filter(|(_, &keep)| !keep)
        .map(|(i, _)| i + 1)
        .collect();

    let mut rows = Vec::new();
    let mut imputed_rows = Vec::new();
    let mut errors = Vec::new();
    for entry in &entries {
        let attempt = (|| -> Result<(DatasetRow, Vec<usize>)> {
            let clip = corpus::load_wav(base.join(&entry.path))?;
            let tracks = extract_tracks(&clip, &params)?;
            let (fv, imputed) = assemble(&tracks, &clip);
            Ok((
                DatasetRow {
                    id: entry.id.clone(),
                    emotion: entry.emotion.clone(),
                    speaker: entry.speaker.clone(),
                    order: entry.order,
                    values: mask.apply(&fv.values),
                },
                imputed,
            ))
        })();
        match attempt {
            Ok((row, imputed)) => {
                imputed_rows.push((entry.id.clone(), imputed));
                rows.push(row);
            }
            Err(e) => errors.push(format!("{}: {e}", entry.id)),
        }
    }
    if !errors.is_empty() {
        for e in &errors {
            eprintln!("extract failed for {e}");
        }
        return Err(Error::Argument(format!(
            "{} of {} clips failed",
            errors.len(),
            entries.len()
        )));
    }
    let ds = Dataset {
        registry: REGISTRY_VERSION.to_string(),
        dim: mask.kept(),
        masked,
        rows,
    };
    std::fs::write(out, write_dataset(&ds))?;
    if let Some(p) = impute {
        std::fs::write(p, write_impute(&imputed_rows))?;
    }
    Ok(())
}

// ------------------------------------------------------------------ train

/// Label order: user-declared, else sorted unique labels in the dataset.
fn resolve_labels(ds: &Dataset, declared: &Option<String>) -> Result<Vec<EmotionLabel>> {
    let present = ds.labels()?;
    match declared {
        Some(csv) => {
            let list: Vec<EmotionLabel> = csv
                .split(',')
                .map(|s| EmotionLabel::from(s.trim()))
                .collect();
            for (row, l) in ds.rows.iter().zip(&present) {
                if !list.contains(l) {
                    return Err(Error::Argument(format!(
                        "row '{}' has label '{l}' outside the declared set",
                        row.id
                    )));
                }
            }
            Ok(list)
        }
        None => {
            let mut uniq: Vec<EmotionLabel> = Vec::new();
            for l in present {
                if !uniq.contains(&l) {
                    uniq.push(l);
                }
            }
            uniq.sort_by(|a, b| a.as_str().cmp(b.as_str()));
            Ok(uniq)
        }
    }
}

fn rows_by_class(
    ds: &Dataset,
    indices: &[usize],
    labels: &[EmotionLabel],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut by_class = vec![Vec::new(); labels.len()];
    for &i in indices {
        let row = &ds.rows[i];
        let l = row
            .emotion
            .as_ref()
            .ok_or_else(|| Error::Argument(format!("row '{}' has no emotion label", row.id)))?;
        let c = labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::Argument(format!("label '{l}' missing from training set")))?;
        by_class[c].push(row.values.clone());
    }
    Ok(by_class)
}

fn train_model(
    ds: &Dataset,
    indices: &[usize],
    seed: u64,
    opts: &TrainOpts,
    fixed_labels: Option<&[EmotionLabel]>,
) -> Result<ModelFile> {
    let labels = match fixed_labels {
        Some(l) => l.to_vec(),
        None => resolve_labels(ds, &opts.labels)?,
    };
    if labels.len() < 2 {
        return Err(Error::Argument("training needs at least two labels".into()));
    }
    let by_class = rows_by_class(ds, indices, &labels)?;
    let config = format!(
        "mixtures={};covariance={};top={};pca={};lda={};pairwise={};seed={}",
        opts.mixtures,
        match opts.covariance {
            CovArg::Diagonal => "diagonal",
            CovArg::Full => "full",
        },
        opts.top.map_or("-".into(), |v| v.to_string()),
        opts.pca.map_or("-".into(), |v| v.to_string()),
        opts.lda,
        opts.pairwise,
        seed
    );

    let model = if opts.pairwise {
        let pw = PairwiseConfig {
            pca_dim: opts.pca.unwrap_or(emokit::pairwise::DEFAULT_PAIR_PCA_DIM),
            mixtures: opts.mixtures,
            covariance: opts.covariance.into(),
            seed,
            max_iter: opts.max_iter,
            tol: opts.tol,
        };
        TrainedModel::Pairwise(train_pairs(&by_class, &labels, &pw)?)
    } else {
        let x: Vec<Vec<f64>> = indices.iter().map(|&i| ds.rows[i].values.clone()).collect();
        let y: Vec<usize> = indices
            .iter()
            .map(|&i| {
                let l = ds.rows[i].emotion.as_ref().unwrap();
                labels.iter().position(|x| x == l).unwrap()
            })
            .collect();
        let minmax = reduce::minmax_fit(&x, MinMaxMode::DivideByMax)?;
        let mut z: Vec<Vec<f64>> = x.iter().map(|r| minmax.apply_row(r)).collect();
        let selected = match opts.top {
            Some(k) => {
                let scores = reduce::fdr_scores(&z, &y)?;
                let sel = reduce::select_top(&scores, k)?;
                z = z
                    .iter()
                    .map(|r| sel.iter().map(|&i| r[i]).collect())
                    .collect();
                Some(sel)
            }
            None => None,
        };
        let pca = match opts.pca {
            Some(d) => {
                let p = reduce::pca_fit(&z, d)?;
                z = z.iter().map(|r| p.apply_row(r)).collect();
                Some(p)
            }
            None => None,
        };
        let lda = if opts.lda {
            let l = reduce::lda_fit(&z, &y, None)?;
            z = z.iter().map(|r| l.apply_row(r)).collect();
            Some(l)
        } else {
            None
        };
        let pipeline = ReductionPipeline {
            minmax: Some(minmax),
            selected,
            pca,
            lda,
        };
        let hash = pipeline_fingerprint(&pipeline);

        let mut models = Vec::new();
        for (c, label) in labels.iter().enumerate() {
            let rows: Vec<Vec<f64>> = z
                .iter()
                .zip(&y)
                .filter(|(_, &yc)| yc == c)
                .map(|(r, _)| r.clone())
                .collect();
            if rows.is_empty() {
                return Err(Error::Argument(format!("no training rows for '{label}'")));
            }
            let (mut m, _) = gmm::train_gmm(
                &rows,
                opts.mixtures,
                opts.covariance.into(),
                seed.wrapping_add(c as u64),
                opts.max_iter,
                opts.tol,
            )?;
            m.label = Some(label.clone());
            m.pipeline_hash = Some(hash);
            models.push(m);
        }
        TrainedModel::Plain {
            pipeline,
            classifier: EmotionClassifier::new(labels, models)?,
        }
    };

    let pipeline_hash = match &model {
        TrainedModel::Plain { pipeline, .. } => pipeline_fingerprint(pipeline),
        TrainedModel::Pairwise(_) => ds.registry_hash(),
    };
    Ok(ModelFile {
        model,
        registry: ds.registry.clone(),
        registry_hash: ds.registry_hash(),
        pipeline_hash,
        config,
    })
}

// ------------------------------------------------------------------- eval

struct EvalOpts {
    reject: bool,
    policy: RejectionPolicy,
    context: ContextOpts,
}

/// Short-node energy from a class log-density, stable against underflow:
/// for tiny densities atan(p/d) ~ p/d, so the energy is computed in the
/// log domain directly.
fn unary_from_log(lp: f64, divisor: f64) -> f64 {
    let p = lp.exp();
    if p / divisor < 1e-8 {
        std::f64::consts::FRAC_PI_2.ln() - lp + divisor.ln()
    } else {
        context::unary_energy(p, divisor)
    }
}

fn coords_for(labels: &[EmotionLabel], opts: &ContextOpts) -> Result<EmotionCoords> {
    let table = match &opts.coords {
        Some(p) => EmotionCoords::parse(&std::fs::read_to_string(p)?)?,
        None => EmotionCoords::default_table(),
    };
    let mut coords = Vec::new();
    for l in labels {
        let i = table.index_of(l).map_err(|_| {
            Error::Argument(format!(
                "label '{l}' has no arousal/valence coordinates; pass --coords"
            ))
        })?;
        coords.push(table.coords[i]);
    }
    Ok(EmotionCoords {
        labels: labels.to_vec(),
        coords,
    })
}

/// Splits rows carrying (speaker, order) metadata into runs of consecutive
/// recording order per speaker. Returns positions into `rows`.
fn chains_of(rows: &[&DatasetRow]) -> Vec<Vec<usize>> {
    let mut by_speaker: BTreeMap<&str, Vec<(i64, usize)>> = BTreeMap::new();
    for (pos, row) in rows.iter().enumerate() {
        if let (Some(s), Some(o)) = (&row.speaker, row.order) {
            by_speaker.entry(s.as_str()).or_default().push((o, pos));
        }
    }
    let mut chains = Vec::new();
    for seq in by_speaker.values_mut() {
        seq.sort();
        let mut current: Vec<usize> = Vec::new();
        let mut prev: Option<i64> = None;
        for &(o, pos) in seq.iter() {
            if prev.is_some_and(|p| o != p + 1) && !current.is_empty() {
                chains.push(std::mem::take(&mut current));
            }
            current.push(pos);
            prev = Some(o);
        }
        if !current.is_empty() {
            chains.push(current);
        }
    }
    chains.retain(|c| c.len() >= 2);
    chains
}

fn eval_rows(
    mf: &ModelFile,
    ds: &Dataset,
    indices: &[usize],
    opts: &EvalOpts,
    rep: &mut ConfusionReport,
) -> Result<()> {
    if ds.registry_hash() != mf.registry_hash {
        return Err(Error::Provenance(format!(
            "dataset registry hash {:016x} does not match model hash {:016x}",
            ds.registry_hash(),
            mf.registry_hash
        )));
    }
    let rows: Vec<&DatasetRow> = indices.iter().map(|&i| &ds.rows[i]).collect();
    match &mf.model {
        TrainedModel::Pairwise(decoder) => {
            if opts.reject || opts.context.context {
                return Err(Error::Argument(
                    "rejection and context smoothing need per-label densities; use a plain model"
                        .into(),
                ));
            }
            for row in &rows {
                let truth = require_label(row)?;
                let (pred, _) = decoder.classify(&row.values)?;
                rep.record(truth, Some(&pred))?;
            }
        }
        TrainedModel::Plain {
            pipeline,
            classifier,
        } => {
            let labels = &classifier.labels;
            let mut predictions: Vec<Option<EmotionLabel>> = Vec::with_capacity(rows.len());
            let mut log_scores: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
            for row in &rows {
                let z = pipeline.apply_row(&row.values);
                let (top, scores) = classifier.classify(&z, None)?;
                if opts.reject {
                    let densities: Vec<f64> = scores.iter().map(|l| l.exp()).collect();
                    match reject::decide(&densities, labels, &opts.policy)? {
                        Decision::Accept(l) => predictions.push(Some(l)),
                        Decision::Reject => predictions.push(None),
                    }
                } else {
                    predictions.push(Some(top));
                }
                log_scores.push(scores);
            }
            if opts.context.context {
                let coords = coords_for(labels, &opts.context)?;
                let metric = if opts.context.l1 { Metric::L1 } else { Metric::L2 };
                let mode = if opts.context.uniform_clique {
                    CliqueMode::Uniform
                } else {
                    CliqueMode::PerEdge
                };
                for chain in chains_of(&rows) {
                    let short: Vec<Vec<f64>> = chain
                        .iter()
                        .map(|&p| {
                            log_scores[p]
                                .iter()
                                .map(|&lp| unary_from_log(lp, opts.policy.divisor))
                                .collect()
                        })
                        .collect();
                    // Long (bridging) nodes have no observation of their own;
                    // their energy is the mean of the two flanking rows.
                    let long: Vec<Vec<f64>> = short
                        .windows(2)
                        .map(|w| {
                            w[0].iter()
                                .zip(&w[1])
                                .map(|(a, b)| 0.5 * (a + b))
                                .collect()
                        })
                        .collect();
                    let problem = ChainProblem {
                        coords: coords.clone(),
                        short_unaries: short,
                        long_unaries: long,
                        sigma0: opts.context.sigma0,
                        metric,
                        mode,
                    };
                    let (assignment, _) = context::minimize(&problem)?;
                    for (k, &p) in chain.iter().enumerate() {
                        predictions[p] = Some(labels[assignment.shorts[k]].clone());
                    }
                }
            }
            for (row, pred) in rows.iter().zip(&predictions) {
                rep.record(require_label(row)?, pred.as_ref())?;
            }
        }
    }
    Ok(())
}

fn require_label(row: &DatasetRow) -> Result<&EmotionLabel> {
    row.emotion
        .as_ref()
        .ok_or_else(|| Error::Argument(format!("row '{}' has no emotion label for scoring", row.id)))
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    features: &Path,
    report: &Path,
    model_path: Option<&Path>,
    folds: Option<usize>,
    loso: bool,
    seed: Option<u64>,
    train_opts: &TrainOpts,
    reject: bool,
    threshold: f64,
    context_opts: &ContextOpts,
) -> Result<()> {
    let ds = load_dataset(features)?;
    let opts = EvalOpts {
        reject,
        policy: RejectionPolicy {
            threshold,
            ..RejectionPolicy::default()
        },
        context: context_opts.clone(),
    };

    let (mut rep, title);
    if let Some(mp) = model_path {
        let mf = read_model(&std::fs::read_to_string(mp)?)?;
        let labels = match &mf.model {
            TrainedModel::Plain { classifier, .. } => classifier.labels.clone(),
            TrainedModel::Pairwise(d) => d.labels.clone(),
        };
        rep = ConfusionReport::new(labels, reject);
        rep.config.push(("model".into(), mp.display().to_string()));
        eval_rows(&mf, &ds, &(0..ds.rows.len()).collect::<Vec<_>>(), &opts, &mut rep)?;
        title = "evaluation against frozen model".to_string();
    } else {
        let seed = seed.ok_or_else(|| {
            Error::Argument("--seed is required for cross-validation retraining".into())
        })?;
        let labels = resolve_labels(&ds, &train_opts.labels)?;
        rep = ConfusionReport::new(labels.clone(), reject);

        let fold_sets: Vec<Vec<usize>> = if loso {
            let mut by_speaker: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, row) in ds.rows.iter().enumerate() {
                let s = row.speaker.clone().ok_or_else(|| {
                    Error::Argument(format!("row '{}' has no speaker for --loso", row.id))
                })?;
                by_speaker.entry(s).or_default().push(i);
            }
            if by_speaker.len() < 2 {
                return Err(Error::Argument("--loso needs at least two speakers".into()));
            }
            by_speaker.into_values().collect()
        } else {
            let k = folds.ok_or_else(|| {
                Error::Argument("pass --model, --folds or --loso".into())
            })?;
            let ids: Vec<String> = ds.rows.iter().map(|r| r.id.clone()).collect();
            let index_of: BTreeMap<&str, usize> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.as_str(), i))
                .collect();
            if index_of.len() != ids.len() {
                return Err(Error::Argument("duplicate row ids".into()));
            }
            corpus::split_folds(&ids, k, seed)?
                .into_iter()
                .map(|fold| fold.iter().map(|id| index_of[id.as_str()]).collect())
                .collect()
        };

        for (f, test) in fold_sets.iter().enumerate() {
            let train: Vec<usize> = (0..ds.rows.len()).filter(|i| !test.contains(i)).collect();
            let mf = train_model(&ds, &train, seed.wrapping_add(f as u64 * 1000), train_opts,
                Some(&labels))?;
            eval_rows(&mf, &ds, test, &opts, &mut rep)?;
        }
        rep.config.push((
            "folds".into(),
            if loso { "loso".into() } else { folds.unwrap().to_string() },
        ));
        rep.config.push(("seed".into(), seed.to_string()));
        title = "cross-validation".to_string();
    }
    if reject {
        rep.config.push(("reject_threshold".into(), threshold.to_string()));
    }
    if context_opts.context {
        rep.config.push(("context_sigma0".into(), context_opts.sigma0.to_string()));
    }
    write_report(report, &rep, &title)
}

// -------------------------------------------------------------- rate-fuse

fn cmd_rate_fuse(ratings: &Path, report: &Path) -> Result<()> {
    let (samples, raters, matrix) =
        corpus::parse_ratings(&std::fs::read_to_string(ratings)?)?;
    matrix.validate()?;
    let fusion = corpus::rater_weights(&matrix)?;

    let mut human = String::from("rater fusion\n\n");
    for (r, w) in raters.iter().zip(&fusion.weights) {
        human.push_str(&format!("weight {r}: {w:.6}\n"));
    }
    human.push_str("\nconsistency:\n");
    for (r, row) in raters.iter().zip(&fusion.consistency) {
        human.push_str(&format!("{r:<12}"));
        for v in row {
            human.push_str(&format!("{v:>9.4}"));
        }
        human.push('\n');
    }
    human.push('\n');
    for (j, id) in samples.iter().enumerate() {
        let tie = if fusion.ties.contains(&j) { " (tie)" } else { "" };
        let vals: Vec<String> = fusion.fused[j].iter().map(|v| format!("{v:.4}")).collect();
        human.push_str(&format!(
            "{id}: emotion {}{tie}  [{}]\n",
            fusion.labels[j] + 1,
            vals.join(", ")
        ));
    }
    std::fs::write(report, human)?;

    let mut tsv = String::new();
    for (r, w) in raters.iter().zip(&fusion.weights) {
        tsv.push_str(&format!("weight\t{r}\t{w}\n"));
    }
    for (p, row) in fusion.consistency.iter().enumerate() {
        for (q, v) in row.iter().enumerate() {
            tsv.push_str(&format!("consistency\t{}\t{}\t{v}\n", raters[p], raters[q]));
        }
    }
    for (j, id) in samples.iter().enumerate() {
        let vals: Vec<String> = fusion.fused[j].iter().map(|v| v.to_string()).collect();
        tsv.push_str(&format!(
            "fused\t{id}\t{}\t{}\t{}\n",
            fusion.labels[j] + 1,
            fusion.ties.contains(&j) as u8,
            vals.join(",")
        ));
    }
    let mut tsv_path = report.as_os_str().to_owned();
    tsv_path.push(".tsv");
    std::fs::write(PathBuf::from(tsv_path), tsv)?;
    Ok(())
}

// ----------------------------------------------------------- fuse-bimodal

struct Channel {
    pipeline: ReductionPipeline,
    models: Vec<GmmModel>,
}

impl Channel {
    fn log_scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        let z = self.pipeline.apply_row(row);
        self.models.iter().map(|m| gmm::log_density(m, &z)).collect()
    }

    /// Densities rescaled so the best class has density 1; the rescaling
    /// cancels in density ratios and keeps the weights finite.
    fn densities(&self, row: &[f64]) -> Result<Vec<f64>> {
        let l = self.log_scores(row)?;
        let top = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(l.iter().map(|&v| (v - top).exp().max(1e-300)).collect())
    }
}

fn train_channel(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    pca_dim: Option<usize>,
    mixtures: usize,
    seed: u64,
) -> Result<Channel> {
    let minmax = reduce::minmax_fit(x, MinMaxMode::DivideByMax)?;
    let z: Vec<Vec<f64>> = x.iter().map(|r| minmax.apply_row(r)).collect();
    let pca = match pca_dim {
        Some(d) => Some(reduce::pca_fit(&z, d.min(z[0].len()))?),
        None => None,
    };
    let pipeline = ReductionPipeline {
        minmax: Some(minmax),
        selected: None,
        pca,
        lda: None,
    };
    let zz: Vec<Vec<f64>> = x.iter().map(|r| pipeline.apply_row(r)).collect();
    let mut models = Vec::new();
    for c in 0..n_classes {
        let rows: Vec<Vec<f64>> = zz
            .iter()
            .zip(y)
            .filter(|(_, &yc)| yc == c)
            .map(|(r, _)| r.clone())
            .collect();
        if rows.is_empty() {
            return Err(Error::Argument(format!("class {c} has no training rows")));
        }
        let (m, _) = gmm::train_gmm(
            &rows,
            mixtures,
            CovarianceMode::Diagonal,
            seed.wrapping_add(c as u64),
            gmm::DEFAULT_MAX_ITER,
            gmm::DEFAULT_TOL,
        )?;
        models.push(m);
    }
    Ok(Channel { pipeline, models })
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuse_bimodal(
    features: &Path,
    physio: &Path,
    folds: usize,
    seed: u64,
    report: &Path,
    mode: FuseMode,
    mixtures: usize,
    pca: usize,
) -> Result<()> {
    let ds = load_dataset(features)?;
    let physio_rows = fuse::parse_physio(&std::fs::read_to_string(physio)?)?;
    let physio_by_id: BTreeMap<&str, &Vec<f64>> =
        physio_rows.iter().map(|(id, v)| (id.as_str(), v)).collect();
    let missing: Vec<&str> = ds
        .rows
        .iter()
        .filter(|r| !physio_by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Argument(format!(
            "{} rows lack physiological data (first missing: '{}')",
            missing.len(),
            missing[0]
        )));
    }
    let labels = resolve_labels(&ds, &None)?;
    let y: Vec<usize> = ds
        .labels()?
        .iter()
        .map(|l| labels.iter().position(|x| x == l).unwrap())
        .collect();
    let speech: Vec<Vec<f64>> = ds.feature_rows();
    let physio_mat: Vec<Vec<f64>> = ds
        .rows
        .iter()
        .map(|r| physio_by_id[r.id.as_str()].clone())
        .collect();

    let ids: Vec<String> = ds.rows.iter().map(|r| r.id.clone()).collect();
    let index_of: BTreeMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let fold_sets: Vec<Vec<usize>> = corpus::split_folds(&ids, folds, seed)?
        .into_iter()
        .map(|f| f.iter().map(|id| index_of[id.as_str()]).collect())
        .collect();

    let decision_on = matches!(mode, FuseMode::Decision | FuseMode::Both);
    let feature_on = matches!(mode, FuseMode::Feature | FuseMode::Both);
    let mut rep_decision = ConfusionReport::new(labels.clone(), false);
    let mut rep_feature = ConfusionReport::new(labels.clone(), false);
    for rep in [&mut rep_decision, &mut rep_feature] {
        rep.config.push(("folds".into(), folds.to_string()));
        rep.config.push(("seed".into(), seed.to_string()));
        rep.config.push(("mixtures".into(), mixtures.to_string()));
    }

    for (f, test) in fold_sets.iter().enumerate() {
        let train: Vec<usize> = (0..ds.rows.len()).filter(|i| !test.contains(i)).collect();
        let tr = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            train.iter().map(|&i| m[i].clone()).collect()
        };
        let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let fold_seed = seed.wrapping_add(f as u64 * 1000);

        if decision_on {
            let sp = train_channel(&tr(&speech), &y_train, labels.len(), Some(pca), mixtures,
                fold_seed)?;
            let ph = train_channel(&tr(&physio_mat), &y_train, labels.len(), None, mixtures,
                fold_seed.wrapping_add(500))?;
            for &i in test {
                let ds_sp = sp.densities(&speech[i])?;
                let ds_ph = ph.densities(&physio_mat[i])?;
                let channels = [
                    Some(ChannelScores {
                        weight: fuse::channel_weight(&ds_sp)?,
                        densities: ds_sp,
                    }),
                    Some(ChannelScores {
                        weight: fuse::channel_weight(&ds_ph)?,
                        densities: ds_ph,
                    }),
                ];
                let (pred, _) = fuse::decision_fuse(&channels, &labels, false)?;
                rep_decision.record(&labels[y[i]], Some(&pred))?;
            }
        }
        if feature_on {
            let fp = fuse::fusion_fit(&tr(&speech), &tr(&physio_mat))?;
            let fused_train: Vec<Vec<f64>> = train
                .iter()
                .map(|&i| fp.apply(Some(&speech[i]), Some(&physio_mat[i])))
                .collect::<Result<_>>()?;
            let mut models = Vec::new();
            for c in 0..labels.len() {
                let rows: Vec<Vec<f64>> = fused_train
                    .iter()
                    .zip(&y_train)
                    .filter(|(_, &yc)| yc == c)
                    .map(|(r, _)| r.clone())
                    .collect();
                let (m, _) = gmm::train_gmm(
                    &rows,
                    mixtures,
                    CovarianceMode::Diagonal,
                    fold_seed.wrapping_add(7000 + c as u64),
                    gmm::DEFAULT_MAX_ITER,
                    gmm::DEFAULT_TOL,
                )?;
                models.push(m);
            }
            for &i in test {
                let z = fp.apply(Some(&speech[i]), Some(&physio_mat[i]))?;
                let scores: Vec<f64> =
                    models.iter().map(|m| gmm::log_density(m, &z)).collect::<Result<_>>()?;
                let best = (0..scores.len())
                    .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap())
                    .unwrap();
                rep_feature.record(&labels[y[i]], Some(&labels[best]))?;
            }
        }
    }

    let suffixed = |suffix: &str| -> PathBuf {
        let mut p = report.as_os_str().to_owned();
        p.push(suffix);
        PathBuf::from(p)
    };
    match mode {
        FuseMode::Decision => write_report(report, &rep_decision, "decision-level fusion")?,
        FuseMode::Feature => write_report(report, &rep_feature, "feature-level fusion")?,
        FuseMode::Both => {
            write_report(&suffixed(".decision"), &rep_decision, "decision-level fusion")?;
            write_report(&suffixed(".feature"), &rep_feature, "feature-level fusion")?;
        }
    }
    Ok(())
}
