//! Feature dataset file: per-clip metadata plus the feature row, with a
//! registry header so downstream tools can verify provenance.

use emokit::corpus::EmotionLabel;
use emokit::io::{fmt_f64, fnv64, parse_f64};
use emokit::{Error, Result};

pub const DATASET_MAGIC: &str = "#emokit-dataset v1";
pub const IMPUTE_MAGIC: &str = "#emokit-impute v1";

#[derive(Clone, Debug)]
pub struct DatasetRow {
    pub id: String,
    pub emotion: Option<EmotionLabel>,
    pub speaker: Option<String>,
    pub order: Option<i64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub registry: String,
    pub dim: usize,
    /// 1-based indices of columns zeroed by a channel mask.
    pub masked: Vec<usize>,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn registry_hash(&self) -> u64 {
        let mut tag = self.registry.clone();
        tag.push(';');
        tag.push_str(&self.dim.to_string());
        for m in &self.masked {
            tag.push(',');
            tag.push_str(&m.to_string());
        }
        fnv64(tag.as_bytes())
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    /// Rows must all carry an emotion label; returns them in row order.
    pub fn labels(&self) -> Result<Vec<EmotionLabel>> {
        self.rows
            .iter()
            .map(|r| {
                r.emotion
                    .clone()
                    .ok_or_else(|| Error::Argument(format!("row '{}' has no emotion label", r.id)))
            })
            .collect()
    }
}

fn opt_str(s: &Option<String>) -> &str {
    s.as_deref().unwrap_or("-")
}

pub fn write_dataset(d: &Dataset) -> String {
    let mut out = String::from(DATASET_MAGIC);
    out.push('\n');
    out.push_str(&format!("#registry {}\n#dim {}\n", d.registry, d.dim));
    if !d.masked.is_empty() {
        out.push_str("#masked ");
        let idx: Vec<String> = d.masked.iter().map(|i| i.to_string()).collect();
        out.push_str(&idx.join(" "));
        out.push('\n');
    }
    for r in &d.rows {
        out.push_str(&r.id);
        out.push('\t');
        out.push_str(r.emotion.as_ref().map(|e| e.as_str()).unwrap_or("-"));
        out.push('\t');
        out.push_str(opt_str(&r.speaker));
        out.push('\t');
        match r.order {
            Some(o) => out.push_str(&o.to_string()),
            None => out.push('-'),
        }
        for v in &r.values {
            out.push('\t');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn read_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == DATASET_MAGIC => {}
        _ => return Err(Error::Format(format!("missing '{DATASET_MAGIC}' header"))),
    }
    let mut registry = None;
    let mut dim = None;
    let mut masked = Vec::new();
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.strip_prefix("registry ") {
                registry = Some(v.trim().to_string());
            } else if let Some(v) = rest.strip_prefix("dim ") {
                dim = Some(v.trim().parse::<usize>().map_err(|_| {
                    Error::Format(format!("dataset line {}: bad dim", n + 2))
                })?);
            } else if let Some(v) = rest.strip_prefix("masked ") {
                for tok in v.split_whitespace() {
                    masked.push(tok.parse::<usize>().map_err(|_| {
                        Error::Format(format!("dataset line {}: bad mask index", n + 2))
                    })?);
                }
            }
            continue;
        }
        let dim = dim.ok_or_else(|| Error::Format("#dim header must precede rows".into()))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 + dim {
            return Err(Error::Format(format!(
                "dataset line {}: expected {} fields, got {}",
                n + 2,
                4 + dim,
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(dim);
        for f in &fields[4..] {
            values.push(parse_f64(f)?);
        }
        rows.push(DatasetRow {
            id: fields[0].to_string(),
            emotion: match fields[1] {
                "-" => None,
                e => Some(EmotionLabel::from(e)),
            },
            speaker: match fields[2] {
                "-" => None,
                s => Some(s.to_string()),
            },
            order: match fields[3] {
                "-" => None,
                o => Some(o.parse::<i64>().map_err(|_| {
                    Error::Format(format!("dataset line {}: bad order", n + 2))
                })?),
            },
            values,
        });
    }
    Ok(Dataset {
        registry: registry.ok_or_else(|| Error::Format("missing #registry header".into()))?,
        dim: dim.ok_or_else(|| Error::Format("missing #dim header".into()))?,
        masked,
        rows,
    })
}

pub fn write_impute(rows: &[(String, Vec<usize>)]) -> String {
    let mut out = String::from(IMPUTE_MAGIC);
    out.push('\n');
    for (id, idx) in rows {
        out.push_str(id);
        out.push('\t');
        if idx.is_empty() {
            out.push('-');
        } else {
            let s: Vec<String> = idx.iter().map(|i| (i + 1).to_string()).collect();
            out.push_str(&s.join(" "));
        }
        out.push('\n');
    }
    out
}
