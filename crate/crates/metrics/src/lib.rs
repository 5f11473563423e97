//! Evaluation quantities: confusion matrix, per-class F1, Davies-Bouldin
//! index, and CSV export of embeddings.

use std::path::Path;

use log::warn;
use presence_csi::Case;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("case id {0} outside 1..=4")]
    InvalidCase(u8),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Rows are true cases, columns predicted cases, both in case order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn total(&self) -> u64 {
        (0..4).map(|i| self.row_sum(i)).sum()
    }
}

pub fn confusion(preds: &[Case], labels: &[Case]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(preds.len(), labels.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, l) in preds.iter().zip(labels) {
        cm.counts[l.index()][p.index()] += 1;
    }
    Ok(cm)
}

/// [`confusion`] over raw case ids.
pub fn confusion_ids(preds: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    let cases = |ids: &[u8]| ids.iter().map(|&id| Case::from_id(id).map_err(|_| MetricsError::InvalidCase(id))).collect::<Result<Vec<_>>>();
    confusion(&cases(preds)?, &cases(labels)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub case: u8,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub per_class: Vec<PerClass>,
    pub average_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

/// Precision, recall and F1 per case; every 0/0 is taken as 0.
pub fn f1_scores(cm: &ConfusionMatrix) -> ClassMetrics {
    let per_class: Vec<PerClass> = Case::ALL
        .iter()
        .map(|&case| {
            let c = case.index();
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.column_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            PerClass { case: case.id(), precision, recall, f1 }
        })
        .collect();
    let average_f1 = per_class.iter().map(|p| p.f1).sum::<f64>() / per_class.len() as f64;
    ClassMetrics { per_class, average_f1 }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Davies-Bouldin index of labelled `n x dim` embeddings (Euclidean):
/// `mean_i max_{j != i} (S_i + S_j) / M_ij` over the cases present, with
/// `S_i` the mean distance to the centroid and `M_ij` the centroid distance.
/// Coincident centroids of distinct cases give infinity.
pub fn davies_bouldin(embeddings: &[f64], dim: usize, labels: &[Case]) -> Result<f64> {
    if dim == 0 || embeddings.len() != labels.len() * dim {
        return Err(MetricsError::LengthMismatch(embeddings.len(), labels.len() * dim));
    }
    let present: Vec<Case> = Case::ALL.into_iter().filter(|c| labels.contains(c)).collect();
    if present.len() < 2 {
        return Err(MetricsError::Invalid("Davies-Bouldin needs at least two cases".into()));
    }
    let rows = || embeddings.chunks(dim).zip(labels);
    let centroids: Vec<Vec<f64>> = present
        .iter()
        .map(|&case| {
            let mut c = vec![0.0; dim];
            let mut n = 0.0;
            for (row, _) in rows().filter(|(_, l)| **l == case) {
                c.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                n += 1.0;
            }
            c.iter_mut().for_each(|a| *a /= n);
            c
        })
        .collect();
    let scatter: Vec<f64> = present
        .iter()
        .zip(&centroids)
        .map(|(&case, c)| {
            let d: Vec<f64> = rows().filter(|(_, l)| **l == case).map(|(row, _)| euclid(row, c)).collect();
            d.iter().sum::<f64>() / d.len() as f64
        })
        .collect();
    let k = present.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in (0..k).filter(|&j| j != i) {
            let m = euclid(&centroids[i], &centroids[j]);
            let r = if m == 0.0 {
                warn!("Davies-Bouldin: coincident centroids of {} and {}", present[i], present[j]);
                f64::INFINITY
            } else {
                (scatter[i] + scatter[j]) / m
            };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Writes `id,label,v0..v511[,z0..z127]` rows.
pub fn export_embeddings(
    path: &Path,
    labels: &[Case],
    representations: &[f32],
    rep_dim: usize,
    projections: Option<(&[f32], usize)>,
) -> Result<()> {
    if representations.len() != labels.len() * rep_dim {
        return Err(MetricsError::LengthMismatch(representations.len(), labels.len() * rep_dim));
    }
    if let Some((p, dim)) = projections {
        if p.len() != labels.len() * dim {
            return Err(MetricsError::LengthMismatch(p.len(), labels.len() * dim));
        }
    }
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..rep_dim).map(|i| format!("v{i}")));
    if let Some((_, dim)) = projections {
        header.extend((0..dim).map(|i| format!("z{i}")));
    }
    writer.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut record = vec![i.to_string(), label.id().to_string()];
        record.extend(representations[i * rep_dim..(i + 1) * rep_dim].iter().map(|v| v.to_string()));
        if let Some((p, dim)) = projections {
            record.extend(p[i * dim..(i + 1) * dim].iter().map(|v| v.to_string()));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// How often the switch picked the dynamic branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchStats {
    /// Fraction of case-4 samples with the switch on.
    pub dynamic_on: f64,
    /// Fraction of static samples with the switch off.
    pub static_off: f64,
    /// Switch-on fraction per true case.
    pub on_fraction: [f64; 4],
}

pub fn switch_stats(omegas: &[u8], labels: &[Case]) -> Result<SwitchStats> {
    if omegas.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(omegas.len(), labels.len()));
    }
    let (mut on, mut count) = ([0u64; 4], [0u64; 4]);
    for (&w, l) in omegas.iter().zip(labels) {
        on[l.index()] += u64::from(w == 1);
        count[l.index()] += 1;
    }
    let on_fraction = std::array::from_fn(|i| ratio(on[i], count[i]));
    let static_count: u64 = count[..3].iter().sum();
    let static_on: u64 = on[..3].iter().sum();
    Ok(SwitchStats {
        dynamic_on: on_fraction[3],
        static_off: ratio(static_count - static_on, static_count),
        on_fraction,
    })
}

/// The metrics JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<PerClass>,
    pub average_f1: f64,
    pub db_index: Option<f64>,
    pub switch_stats: Option<SwitchStats>,
}

impl MetricsReport {
    pub fn new(preds: &[Case], labels: &[Case]) -> Result<Self> {
        let confusion = confusion(preds, labels)?;
        let ClassMetrics { per_class, average_f1 } = f1_scores(&confusion);
        Ok(Self { confusion, per_class, average_f1, db_index: None, switch_stats: None })
    }

    pub fn f1(&self, case: Case) -> f64 {
        self.per_class[case.index()].f1
    }
}
