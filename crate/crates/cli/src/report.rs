//! Evaluation reports: a row-stochastic confusion matrix in percent (rows
//! are true labels, columns predicted, plus a REJECT column when the
//! rejection rule is active), written both human-readable and as TSV.
//! True labels outside the model's set get their own rows so open-set
//! runs stay visible.

use emokit::corpus::EmotionLabel;
use emokit::{Error, Result};

#[derive(Clone, Debug)]
pub struct ConfusionReport {
    /// Fixed column set: the model's labels.
    pub pred_labels: Vec<EmotionLabel>,
    /// Row set: model labels first, unseen true labels appended as scored.
    pub true_labels: Vec<EmotionLabel>,
    /// counts[true][pred]; the extra trailing column counts rejections.
    pub counts: Vec<Vec<usize>>,
    pub reject_active: bool,
    pub config: Vec<(String, String)>,
}

impl ConfusionReport {
    pub fn new(labels: Vec<EmotionLabel>, reject_active: bool) -> Self {
        let cols = labels.len() + 1;
        ConfusionReport {
            counts: vec![vec![0; cols]; labels.len()],
            true_labels: labels.clone(),
            pred_labels: labels,
            reject_active,
            config: Vec::new(),
        }
    }

    fn true_row(&mut self, label: &EmotionLabel) -> usize {
        if let Some(i) = self.true_labels.iter().position(|l| l == label) {
            return i;
        }
        self.true_labels.push(label.clone());
        self.counts.push(vec![0; self.pred_labels.len() + 1]);
        self.true_labels.len() - 1
    }

    pub fn record(&mut self, truth: &EmotionLabel, predicted: Option<&EmotionLabel>) -> Result<()> {
        let t = self.true_row(truth);
        match predicted {
            Some(p) => {
                let c = self
                    .pred_labels
                    .iter()
                    .position(|l| l == p)
                    .ok_or_else(|| {
                        Error::Argument(format!("predicted label '{p}' not in model set"))
                    })?;
                self.counts[t][c] += 1;
            }
            None => {
                let reject_col = self.pred_labels.len();
                self.counts[t][reject_col] += 1;
            }
        }
        Ok(())
    }

    fn row_total(&self, t: usize) -> usize {
        self.counts[t].iter().sum()
    }

    /// Percent matrix; rows with samples sum to 100 exactly up to rounding.
    pub fn percentages(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| {
                        if total == 0 {
                            0.0
                        } else {
                            100.0 * c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Diagonal percentage for rows whose label the model can predict.
    pub fn recall(&self, t: usize) -> Option<f64> {
        let total = self.row_total(t);
        let c = self.pred_labels.iter().position(|l| l == &self.true_labels[t])?;
        if total == 0 {
            None
        } else {
            Some(100.0 * self.counts[t][c] as f64 / total as f64)
        }
    }

    pub fn average_recall(&self) -> f64 {
        let recalls: Vec<f64> = (0..self.true_labels.len())
            .filter(|&t| self.row_total(t) > 0)
            .filter_map(|t| self.recall(t))
            .collect();
        if recalls.is_empty() {
            0.0
        } else {
            recalls.iter().sum::<f64>() / recalls.len() as f64
        }
    }

    pub fn human(&self, title: &str) -> String {
        let mut out = format!("{title}\n");
        for (k, v) in &self.config {
            out.push_str(&format!("config: {k}={v}\n"));
        }
        out.push('\n');
        let pct = self.percentages();
        let mut header = format!("{:<12}", "true\\pred");
        for l in &self.pred_labels {
            header.push_str(&format!("{:>10}", l.as_str()));
        }
        if self.reject_active {
            header.push_str(&format!("{:>10}", "REJECT"));
        }
        out.push_str(&header);
        out.push('\n');
        for (t, label) in self.true_labels.iter().enumerate() {
            if self.row_total(t) == 0 {
                continue;
            }
            let mut line = format!("{:<12}", label.as_str());
            let cols = if self.reject_active {
                self.pred_labels.len() + 1
            } else {
                self.pred_labels.len()
            };
            for c in 0..cols {
                line.push_str(&format!("{:>10.2}", pct[t][c]));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out.push('\n');
        for (t, label) in self.true_labels.iter().enumerate() {
            if self.row_total(t) == 0 {
                continue;
            }
            if let Some(r) = self.recall(t) {
                out.push_str(&format!("recall {label}: {r:.2}%\n"));
            }
        }
        out.push_str(&format!("average recall: {:.2}%\n", self.average_recall()));
        out
    }

    pub fn tsv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.config {
            out.push_str(&format!("config\t{k}\t{v}\n"));
        }
        let pct = self.percentages();
        for (t, tl) in self.true_labels.iter().enumerate() {
            if self.row_total(t) == 0 {
                continue;
            }
            for (c, cl) in self.pred_labels.iter().enumerate() {
                out.push_str(&format!("matrix\t{tl}\t{cl}\t{}\n", pct[t][c]));
            }
            if self.reject_active {
                out.push_str(&format!(
                    "matrix\t{tl}\tREJECT\t{}\n",
                    pct[t][self.pred_labels.len()]
                ));
            }
        }
        for (t, l) in self.true_labels.iter().enumerate() {
            if self.row_total(t) == 0 {
                continue;
            }
            if let Some(r) = self.recall(t) {
                out.push_str(&format!("recall\t{l}\t{r}\n"));
            }
        }
        out.push_str(&format!("average_recall\t{}\n", self.average_recall()));
        out
    }
}

/// Writes the human report at `base` and the machine report at `base.tsv`.
pub fn write_report(base: &std::path::Path, report: &ConfusionReport, title: &str) -> Result<()> {
    std::fs::write(base, report.human(title))?;
    let mut tsv_path = base.as_os_str().to_owned();
    tsv_path.push(".tsv");
    std::fs::write(std::path::PathBuf::from(tsv_path), report.tsv())?;
    Ok(())
}
