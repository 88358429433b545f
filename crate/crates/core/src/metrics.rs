//! Accuracy, ROC-AUC and run aggregation.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `rows` whose argmax logit equals the matching entry of `labels`.
pub fn accuracy(logits: &DenseMatrix, rows: &[usize], labels: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyMask("accuracy"));
    }
    if rows.len() != labels.len() {
        return Err(Error::dims("accuracy labels", rows.len(), labels.len()));
    }
    let mut correct = 0usize;
    for (&r, &y) in rows.iter().zip(labels) {
        if r >= logits.rows() {
            return Err(Error::dims("accuracy rows", format!("< {}", logits.rows()), r));
        }
        if argmax(logits.row(r)) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

/// Mann–Whitney AUC with average ranks for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::dims("roc_auc", scores.len(), labels.len()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("roc_auc: NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "roc_auc needs both positive and negative labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; a tie group shares the mean of its ranks
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += avg_rank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub runs: usize,
}

pub fn aggregate_runs(name: &str, values: &[f64]) -> Result<MetricReport> {
    if values.is_empty() {
        return Err(Error::EmptyMask("aggregate_runs"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MetricReport {
        name: name.to_string(),
        mean,
        std: var.sqrt(),
        runs: values.len(),
    })
}
