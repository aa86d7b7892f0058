//! Versioned text model file. Structured into named sections; floats are
//! written with 17 significant digits so round-trips are exact.

use emokit::corpus::EmotionLabel;
use emokit::gmm::{Covariance, EmotionClassifier, GmmModel};
use emokit::io::{fmt_f64, fnv64, parse_f64};
use emokit::pairwise::{CodewordMatrix, PairClassifier, PairwiseDecoder};
use emokit::reduce::{Lda, MinMax, MinMaxMode, Pca, ReductionPipeline};
use emokit::{Error, Result};

pub const MODEL_MAGIC: &str = "EMOKIT-MODEL v1";

#[derive(Clone, Debug)]
pub enum TrainedModel {
    Plain {
        pipeline: ReductionPipeline,
        classifier: EmotionClassifier,
    },
    Pairwise(PairwiseDecoder),
}

#[derive(Clone, Debug)]
pub struct ModelFile {
    pub model: TrainedModel,
    pub registry: String,
    pub registry_hash: u64,
    pub pipeline_hash: u64,
    pub config: String,
}

fn floats_line(key: &str, values: &[f64]) -> String {
    let mut s = String::from(key);
    for v in values {
        s.push('\t');
        s.push_str(&fmt_f64(*v));
    }
    s.push('\n');
    s
}

fn pipeline_lines(p: &ReductionPipeline) -> String {
    let mut out = String::new();
    if let Some(mm) = &p.minmax {
        let mode = match mm.mode {
            MinMaxMode::DivideByMax => "divide_by_max",
            MinMaxMode::DivideByRange => "divide_by_range",
        };
        out.push_str(&format!("minmax_mode\t{mode}\n"));
        out.push_str(&floats_line("minmax_mins", &mm.mins));
        out.push_str(&floats_line("minmax_maxs", &mm.maxs));
    }
    if let Some(sel) = &p.selected {
        out.push_str("selected");
        for i in sel {
            out.push_str(&format!("\t{i}"));
        }
        out.push('\n');
    }
    if let Some(pca) = &p.pca {
        out.push_str(&floats_line("pca_mean", &pca.mean));
        out.push_str(&floats_line("pca_eigenvalues", &pca.eigenvalues));
        for row in &pca.components {
            out.push_str(&floats_line("pca_component", row));
        }
    }
    if let Some(lda) = &p.lda {
        out.push_str(&floats_line("lda_eigenvalues", &lda.eigenvalues));
        for row in &lda.projection {
            out.push_str(&floats_line("lda_row", row));
        }
    }
    out
}

fn gmm_lines(m: &GmmModel) -> String {
    let mut out = String::new();
    out.push_str(&format!("components\t{}\ndim\t{}\n", m.n_components(), m.dim()));
    out.push_str(&floats_line("weights", &m.weights));
    for (mean, cov) in m.means.iter().zip(&m.covariances) {
        out.push_str(&floats_line("mean", mean));
        match cov {
            Covariance::Diagonal(d) => out.push_str(&floats_line("cov_diag", d)),
            Covariance::Full(rows) => {
                for row in rows {
                    out.push_str(&floats_line("cov_row", row));
                }
            }
        }
    }
    out
}

pub fn pipeline_fingerprint(p: &ReductionPipeline) -> u64 {
    fnv64(pipeline_lines(p).as_bytes())
}

pub fn write_model(m: &ModelFile) -> String {
    let mut out = String::from(MODEL_MAGIC);
    out.push('\n');
    out.push_str("[meta]\n");
    let (kind, labels) = match &m.model {
        TrainedModel::Plain { classifier, .. } => ("plain", &classifier.labels),
        TrainedModel::Pairwise(d) => ("pairwise", &d.labels),
    };
    out.push_str(&format!("kind\t{kind}\n"));
    out.push_str(&format!("registry\t{}\n", m.registry));
    out.push_str(&format!("registry_hash\t{:016x}\n", m.registry_hash));
    out.push_str(&format!("pipeline_hash\t{:016x}\n", m.pipeline_hash));
    out.push_str("labels");
    for l in labels {
        out.push_str(&format!("\t{l}"));
    }
    out.push('\n');
    out.push_str(&format!("config\t{}\n", m.config));
    match &m.model {
        TrainedModel::Plain {
            pipeline,
            classifier,
        } => {
            out.push_str("[pipeline]\n");
            out.push_str(&pipeline_lines(pipeline));
            for (label, model) in classifier.labels.iter().zip(&classifier.models) {
                out.push_str(&format!("[model {label}]\n"));
                out.push_str(&gmm_lines(model));
            }
        }
        TrainedModel::Pairwise(decoder) => {
            for pc in &decoder.classifiers {
                out.push_str(&format!("[pair {} {}]\n", pc.pair.0, pc.pair.1));
                out.push_str(&pipeline_lines(&pc.pipeline));
                out.push_str("submodel\t0\n");
                out.push_str(&gmm_lines(&pc.models[0]));
                out.push_str("submodel\t1\n");
                out.push_str(&gmm_lines(&pc.models[1]));
            }
        }
    }
    out.push_str("[end]\n");
    out
}

struct Section {
    name: String,
    lines: Vec<Vec<String>>,
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == MODEL_MAGIC => {}
        _ => return Err(Error::Format(format!("missing '{MODEL_MAGIC}' header"))),
    }
    let mut sections: Vec<Section> = Vec::new();
    for line in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section {
                name: name.to_string(),
                lines: Vec::new(),
            });
        } else {
            let s = sections
                .last_mut()
                .ok_or_else(|| Error::Format("content before first section".into()))?;
            s.lines.push(line.split('\t').map(|t| t.to_string()).collect());
        }
    }
    Ok(sections)
}

fn parse_floats(fields: &[String]) -> Result<Vec<f64>> {
    fields.iter().map(|f| parse_f64(f)).collect()
}

fn parse_pipeline(lines: &[Vec<String>]) -> Result<(ReductionPipeline, usize)> {
    let mut minmax_mode = None;
    let mut mins = None;
    let mut maxs = None;
    let mut selected = None;
    let mut pca_mean = None;
    let mut pca_eigs = None;
    let mut pca_rows = Vec::new();
    let mut lda_eigs = None;
    let mut lda_rows = Vec::new();
    let mut used = 0;
    for fields in lines {
        match fields[0].as_str() {
            "minmax_mode" => {
                minmax_mode = Some(match fields[1].as_str() {
                    "divide_by_max" => MinMaxMode::DivideByMax,
                    "divide_by_range" => MinMaxMode::DivideByRange,
                    other => return Err(Error::Format(format!("unknown minmax mode '{other}'"))),
                })
            }
            "minmax_mins" => mins = Some(parse_floats(&fields[1..])?),
            "minmax_maxs" => maxs = Some(parse_floats(&fields[1..])?),
            "selected" => {
                selected = Some(
                    fields[1..]
                        .iter()
                        .map(|f| {
                            f.parse::<usize>()
                                .map_err(|_| Error::Format("bad selected index".into()))
                        })
                        .collect::<Result<Vec<usize>>>()?,
                )
            }
            "pca_mean" => pca_mean = Some(parse_floats(&fields[1..])?),
            "pca_eigenvalues" => pca_eigs = Some(parse_floats(&fields[1..])?),
            "pca_component" => pca_rows.push(parse_floats(&fields[1..])?),
            "lda_eigenvalues" => lda_eigs = Some(parse_floats(&fields[1..])?),
            "lda_row" => lda_rows.push(parse_floats(&fields[1..])?),
            _ => break,
        }
        used += 1;
    }
    let minmax = match (minmax_mode, mins, maxs) {
        (Some(mode), Some(mins), Some(maxs)) => Some(MinMax { mins, maxs, mode }),
        (None, None, None) => None,
        _ => return Err(Error::Format("incomplete minmax section".into())),
    };
    let pca = match (pca_mean, pca_eigs) {
        (Some(mean), Some(eigenvalues)) => Some(Pca {
            mean,
            components: pca_rows,
            eigenvalues,
        }),
        (None, None) => None,
        _ => return Err(Error::Format("incomplete pca section".into())),
    };
    let lda = match lda_eigs {
        Some(eigenvalues) => Some(Lda {
            projection: lda_rows,
            eigenvalues,
        }),
        None if lda_rows.is_empty() => None,
        None => return Err(Error::Format("incomplete lda section".into())),
    };
    Ok((
        ReductionPipeline {
            minmax,
            selected,
            pca,
            lda,
        },
        used,
    ))
}

fn parse_gmm(
    lines: &[Vec<String>],
    label: Option<EmotionLabel>,
    pipeline_hash: Option<u64>,
) -> Result<(GmmModel, usize)> {
    let mut it = lines.iter();
    let take = |it: &mut std::slice::Iter<Vec<String>>, key: &str| -> Result<Vec<String>> {
        match it.next() {
            Some(f) if f[0] == key => Ok(f[1..].to_vec()),
            _ => Err(Error::Format(format!("model section: expected '{key}'"))),
        }
    };
    let components: usize = take(&mut it, "components")?[0]
        .parse()
        .map_err(|_| Error::Format("bad component count".into()))?;
    let dim: usize = take(&mut it, "dim")?[0]
        .parse()
        .map_err(|_| Error::Format("bad dimension".into()))?;
    let weights = parse_floats(&take(&mut it, "weights")?)?;
    let mut means = Vec::with_capacity(components);
    let mut covariances = Vec::with_capacity(components);
    let mut used = 3;
    for _ in 0..components {
        means.push(parse_floats(&take(&mut it, "mean")?)?);
        used += 1;
        let next = it
            .next()
            .ok_or_else(|| Error::Format("truncated covariance".into()))?;
        used += 1;
        match next[0].as_str() {
            "cov_diag" => covariances.push(Covariance::Diagonal(parse_floats(&next[1..])?)),
            "cov_row" => {
                let mut rows = vec![parse_floats(&next[1..])?];
                for _ in 1..dim {
                    let r = it
                        .next()
                        .ok_or_else(|| Error::Format("truncated covariance".into()))?;
                    if r[0] != "cov_row" {
                        return Err(Error::Format("expected cov_row".into()));
                    }
                    rows.push(parse_floats(&r[1..])?);
                    used += 1;
                }
                covariances.push(Covariance::Full(rows));
            }
            other => return Err(Error::Format(format!("unexpected key '{other}'"))),
        }
    }
    Ok((
        GmmModel {
            weights,
            means,
            covariances,
            label,
            pipeline_hash,
        },
        used,
    ))
}

pub fn read_model(text: &str) -> Result<ModelFile> {
    let sections = split_sections(text)?;
    let meta = sections
        .iter()
        .find(|s| s.name == "meta")
        .ok_or_else(|| Error::Format("missing [meta] section".into()))?;
    let get = |key: &str| -> Result<&Vec<String>> {
        meta.lines
            .iter()
            .find(|f| f[0] == key)
            .ok_or_else(|| Error::Format(format!("missing meta key '{key}'")))
    };
    let kind = get("kind")?[1].clone();
    let registry = get("registry")?[1].clone();
    let registry_hash = u64::from_str_radix(&get("registry_hash")?[1], 16)
        .map_err(|_| Error::Format("bad registry hash".into()))?;
    let pipeline_hash = u64::from_str_radix(&get("pipeline_hash")?[1], 16)
        .map_err(|_| Error::Format("bad pipeline hash".into()))?;
    let labels: Vec<EmotionLabel> = get("labels")?[1..]
        .iter()
        .map(|s| EmotionLabel::from(s.as_str()))
        .collect();
    let config = get("config")?[1..].join("\t");

    let model = match kind.as_str() {
        "plain" => {
            let psec = sections
                .iter()
                .find(|s| s.name == "pipeline")
                .ok_or_else(|| Error::Format("missing [pipeline] section".into()))?;
            let (pipeline, _) = parse_pipeline(&psec.lines)?;
            let mut models = Vec::new();
            for label in &labels {
                let sec = sections
                    .iter()
                    .find(|s| s.name == format!("model {label}"))
                    .ok_or_else(|| Error::Format(format!("missing [model {label}] section")))?;
                let (m, _) = parse_gmm(&sec.lines, Some(label.clone()), Some(pipeline_hash))?;
                models.push(m);
            }
            TrainedModel::Plain {
                pipeline,
                classifier: EmotionClassifier::new(labels, models)?,
            }
        }
        "pairwise" => {
            let mut classifiers = Vec::new();
            for sec in sections.iter().filter(|s| s.name.starts_with("pair ")) {
                let idx: Vec<usize> = sec.name[5..]
                    .split(' ')
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|_| Error::Format("bad pair index".into()))
                    })
                    .collect::<Result<_>>()?;
                let (pipeline, used) = parse_pipeline(&sec.lines)?;
                let rest = &sec.lines[used..];
                if rest.first().map(|f| f[0].as_str()) != Some("submodel") {
                    return Err(Error::Format("expected submodel marker".into()));
                }
                let (m0, used0) = parse_gmm(&rest[1..], Some(labels[idx[0]].clone()), None)?;
                let rest2 = &rest[1 + used0..];
                if rest2.first().map(|f| f[0].as_str()) != Some("submodel") {
                    return Err(Error::Format("expected second submodel marker".into()));
                }
                let (m1, _) = parse_gmm(&rest2[1..], Some(labels[idx[1]].clone()), None)?;
                classifiers.push(PairClassifier {
                    pair: (idx[0], idx[1]),
                    pipeline,
                    models: [m0, m1],
                });
            }
            TrainedModel::Pairwise(PairwiseDecoder {
                codewords: CodewordMatrix::new(labels.len()),
                labels,
                classifiers,
            })
        }
        other => return Err(Error::Format(format!("unknown model kind '{other}'"))),
    };
    Ok(ModelFile {
        model,
        registry,
        registry_hash,
        pipeline_hash,
        config,
    })
}
