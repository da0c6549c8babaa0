//! Query-set metrics, their aggregation across episodes and batches, and a
//! train-from-scratch comparison point.
//!
//! Per episode, predictions are the argmax logit (ties to the lowest class
//! index). Precision and recall are macro averages of the one-vs-rest
//! scores over the episode's classes, with 0/0 taken as 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::episodes::Episode;
use crate::maml::adapt_and_score;
use crate::nn::{cross_entropy, init_parameters, Logits, MlpArchitecture, MlpParameters};
use crate::{Error, Result};

/// Rows are true local classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} predictions for {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        let mut counts = vec![0; n_classes * n_classes];
        for (&p, &y) in predictions.iter().zip(labels) {
            if y >= n_classes || p >= n_classes {
                return Err(Error::Argument(format!(
                    "class index {} out of range for {n_classes} classes",
                    y.max(p)
                )));
            }
            counts[y * n_classes + p] += 1;
        }
        Ok(Self { n_classes, counts })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n_classes).map(|t| self.get(t, predicted)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.col_sum(class))
    }

    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.get(class, class), self.row_sum(class))
    }

    pub fn macro_precision(&self) -> f64 {
        (0..self.n_classes).map(|c| self.precision(c)).sum::<f64>() / self.n_classes as f64
    }

    pub fn macro_recall(&self) -> f64 {
        (0..self.n_classes).map(|c| self.recall(c)).sum::<f64>() / self.n_classes as f64
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One row of the metrics report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub batch_index: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub loss: f64,
}

pub fn episode_metrics(logits: &Logits, labels: &[usize]) -> Result<MetricsRecord> {
    if labels.len() != logits.n_rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.n_rows()
        )));
    }
    let confusion = ConfusionMatrix::from_predictions(&logits.argmax(), labels, logits.n_classes())?;
    Ok(MetricsRecord {
        batch_index: 0,
        accuracy: confusion.accuracy(),
        precision: confusion.macro_precision(),
        recall: confusion.macro_recall(),
        loss: cross_entropy(logits, labels)?,
    })
}

/// Field-wise arithmetic mean, tagged with `batch_index`.
pub fn aggregate_metrics(records: &[MetricsRecord], batch_index: usize) -> Result<MetricsRecord> {
    if records.is_empty() {
        return Err(Error::Argument("cannot aggregate zero metric records".into()));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(MetricsRecord {
        batch_index,
        accuracy: mean(|r| r.accuracy),
        precision: mean(|r| r.precision),
        recall: mean(|r| r.recall),
        loss: mean(|r| r.loss),
    })
}

/// `Σ values_i · counts_i / Σ counts_i`: per-class scores weighted by each
/// class's share of the instances.
pub fn weighted_average(values: &[f64], counts: &[u64]) -> Result<f64> {
    if values.len() != counts.len() {
        return Err(Error::Argument(format!(
            "{} values but {} counts",
            values.len(),
            counts.len()
        )));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Argument("weighted average with zero total count".into()));
    }
    let weighted: f64 = values.iter().zip(counts).map(|(v, &c)| v * c as f64).sum();
    Ok(weighted / total as f64)
}

/// Trains a fresh network (`init_parameters(arch, seed)`) for `steps`
/// gradient steps on the support set only and scores it on the query set.
pub fn scratch_baseline(
    arch: &MlpArchitecture,
    episode: &Episode,
    steps: usize,
    alpha: f64,
    seed: u64,
) -> Result<MetricsRecord> {
    scratch_baseline_from(&init_parameters(arch, seed), episode, steps, alpha)
}

/// [`scratch_baseline`] from caller-supplied starting weights.
pub fn scratch_baseline_from(
    init: &MlpParameters,
    episode: &Episode,
    steps: usize,
    alpha: f64,
) -> Result<MetricsRecord> {
    adapt_and_score(init, episode, steps, alpha)
}

/// Streams serializable rows to a JSON Lines file, flushing each line.
pub struct JsonLinesWriter<T> {
    out: BufWriter<File>,
    _rows: PhantomData<fn(&T)>,
}

impl<T: Serialize> JsonLinesWriter<T> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            out: BufWriter::new(file),
            _rows: PhantomData,
        })
    }

    pub fn write(&mut self, row: &T) -> Result<()> {
        let line = serde_json::to_string(row).expect("report rows serialize");
        let io = |e| Error::io("<jsonl report>", e);
        writeln!(self.out, "{line}").map_err(io)?;
        self.out.flush().map_err(io)
    }
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = JsonLinesWriter::create(path)?;
    rows.iter().try_for_each(|r| w.write(r))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(rows)
}
