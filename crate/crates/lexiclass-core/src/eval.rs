//! Confusion matrices, classification metrics, and comparison tables.
//!
//! Macro averages run over classes present in gold (nonzero row sum);
//! zero-denominator precision/recall contribute 0 rather than dropping the
//! class, so high-cardinality runs with empty classes stay comparable. Both
//! macro and micro aggregates are always reported; the table displays macro.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelId;
use crate::decision::DocumentDecision;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("no documents evaluated")]
    EmptyMatrix,
    #[error("golds and decisions have different lengths ({golds} vs {decisions})")]
    LengthMismatch { golds: usize, decisions: usize },
    #[error("doc_id mismatch at row {row}: gold '{gold}' vs decision '{decision}'")]
    DocIdMismatch {
        row: usize,
        gold: String,
        decision: String,
    },
    #[error("no gold label for doc_id '{0}'")]
    GoldMissing(String),
    #[error("label {label} out of range for {k} classes (doc '{doc_id}')")]
    LabelOutOfRange {
        label: LabelId,
        k: usize,
        doc_id: String,
    },
    #[error("no runs to compare")]
    NoRuns,
}

/// Rows are gold labels, columns are predictions; abstentions are tallied
/// separately so `counts` covers exactly the decided documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<usize>>,
    pub abstain_count: usize,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![vec![0; k]; k],
            abstain_count: 0,
        }
    }

    pub fn decided_total(&self) -> usize {
        self.counts.iter().map(|row| row.iter().sum::<usize>()).sum()
    }

    pub fn evaluated_total(&self) -> usize {
        self.decided_total() + self.abstain_count
    }

    fn trace(&self) -> usize {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }
}

/// Builds a confusion matrix from gold labels aligned pairwise with decisions.
pub fn confusion(
    k: usize,
    golds: &[(String, LabelId)],
    decisions: &[DocumentDecision],
) -> Result<ConfusionMatrix, EvalError> {
    if golds.len() != decisions.len() {
        return Err(EvalError::LengthMismatch {
            golds: golds.len(),
            decisions: decisions.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(k);
    for (row, ((gold_id, gold), decision)) in golds.iter().zip(decisions).enumerate() {
        if *gold_id != decision.doc_id {
            return Err(EvalError::DocIdMismatch {
                row,
                gold: gold_id.clone(),
                decision: decision.doc_id.clone(),
            });
        }
        if *gold >= k {
            return Err(EvalError::LabelOutOfRange {
                label: *gold,
                k,
                doc_id: gold_id.clone(),
            });
        }
        match (decision.abstained, decision.label) {
            (true, _) | (false, None) => cm.abstain_count += 1,
            (false, Some(pred)) => {
                if pred >= k {
                    return Err(EvalError::LabelOutOfRange {
                        label: pred,
                        k,
                        doc_id: decision.doc_id.clone(),
                    });
                }
                cm.counts[*gold][pred] += 1;
            }
        }
    }
    Ok(cm)
}

/// Pairs each decision with its gold label by doc_id, preserving decision order.
pub fn pair_golds(
    golds: &BTreeMap<String, LabelId>,
    decisions: &[DocumentDecision],
) -> Result<Vec<(String, LabelId)>, EvalError> {
    decisions
        .iter()
        .map(|d| {
            golds
                .get(&d.doc_id)
                .map(|gold| (d.doc_id.clone(), *gold))
                .ok_or_else(|| EvalError::GoldMissing(d.doc_id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainPolicy {
    CountAsError,
    Exclude,
}

impl std::str::FromStr for AbstainPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "count_as_error" | "count-as-error" => Ok(Self::CountAsError),
            "exclude" => Ok(Self::Exclude),
            other => Err(format!("unknown abstain policy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassMetrics {
    pub label: LabelId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub abstain_rate: f64,
    pub per_class: Vec<PerClassMetrics>,
}

/// A report tagged with its run name, as written to report JSON files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedReport {
    pub run: String,
    #[serde(flatten)]
    pub report: MetricsReport,
}

/// Computes accuracy, per-class precision/recall/F1, and macro/micro
/// aggregates from a confusion matrix.
pub fn metrics(cm: &ConfusionMatrix, policy: AbstainPolicy) -> Result<MetricsReport, EvalError> {
    if cm.k < 2 {
        return Err(EvalError::TooFewClasses(cm.k));
    }
    let decided = cm.decided_total();
    let evaluated = cm.evaluated_total();
    if evaluated == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let trace = cm.trace();
    let accuracy_denominator = match policy {
        AbstainPolicy::CountAsError => evaluated,
        AbstainPolicy::Exclude => decided,
    };
    let accuracy = if accuracy_denominator == 0 {
        0.0
    } else {
        trace as f64 / accuracy_denominator as f64
    };
    let micro_f1 = if decided == 0 {
        0.0
    } else {
        trace as f64 / decided as f64
    };

    let mut per_class = Vec::with_capacity(cm.k);
    let mut macro_precision = 0.0;
    let mut macro_recall = 0.0;
    let mut macro_f1 = 0.0;
    let mut gold_classes = 0usize;
    for c in 0..cm.k {
        let row_sum: usize = cm.counts[c].iter().sum();
        let col_sum: usize = (0..cm.k).map(|r| cm.counts[r][c]).sum();
        let diag = cm.counts[c][c] as f64;
        let precision = if col_sum == 0 { 0.0 } else { diag / col_sum as f64 };
        let recall = if row_sum == 0 { 0.0 } else { diag / row_sum as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if row_sum > 0 {
            gold_classes += 1;
            macro_precision += precision;
            macro_recall += recall;
            macro_f1 += f1;
        }
        per_class.push(PerClassMetrics {
            label: c,
            precision,
            recall,
            f1,
            support: row_sum,
        });
    }
    if gold_classes > 0 {
        macro_precision /= gold_classes as f64;
        macro_recall /= gold_classes as f64;
        macro_f1 /= gold_classes as f64;
    }
    Ok(MetricsReport {
        accuracy,
        macro_precision,
        macro_recall,
        macro_f1,
        micro_f1,
        abstain_rate: cm.abstain_count as f64 / evaluated as f64,
        per_class,
    })
}

/// A rendered run comparison: aligned text, comma-separated rows, and a
/// machine-readable JSON value.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub text: String,
    pub csv: String,
    pub json: serde_json::Value,
}

fn split_run_name(name: &str) -> (String, String) {
    match name.split_once('/') {
        Some((model, technique)) => (model.trim().to_string(), technique.trim().to_string()),
        None => (name.trim().to_string(), "-".to_string()),
    }
}

/// Renders Model/Technique/Accuracy/Precision/F1 columns at 3 decimals with
/// the best value per column marked `*`. Displayed precision and F1 are macro
/// averages; recall and micro-F1 stay in the JSON.
pub fn compare_runs(reports: &[(String, MetricsReport)]) -> Result<Comparison, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let columns = ["Accuracy", "Precision", "F1"];
    let values: Vec<[f64; 3]> = reports
        .iter()
        .map(|(_, r)| [r.accuracy, r.macro_precision, r.macro_f1])
        .collect();
    let best: [f64; 3] = (0..3)
        .map(|c| values.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max))
        .collect::<Vec<_>>()
        .try_into()
        .unwrap();

    let mut rows: Vec<[String; 5]> = Vec::new();
    for ((name, _), vals) in reports.iter().zip(&values) {
        let (model, technique) = split_run_name(name);
        let mut cells = [model, technique, String::new(), String::new(), String::new()];
        for c in 0..3 {
            let marker = if vals[c] == best[c] { "*" } else { "" };
            cells[c + 2] = format!("{:.3}{marker}", vals[c]);
        }
        rows.push(cells);
    }

    let header = ["Model", "Technique", columns[0], columns[1], columns[2]];
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let render_row = |cells: &[String]| -> String {
        cells
            .iter()
            .enumerate()
            .map(|(i, cell)| format!("{:<width$}", cell, width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut text = render_row(&header.map(str::to_string)) + "\n";
    text.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    text.push('\n');
    for row in &rows {
        text.push_str(&render_row(row));
        text.push('\n');
    }
    text.push_str("(averages: macro; recall and micro-F1 in the JSON report)\n");

    let mut csv = String::from("model,technique,accuracy,precision,f1\n");
    for ((name, _), vals) in reports.iter().zip(&values) {
        let (model, technique) = split_run_name(name);
        csv.push_str(&format!(
            "{model},{technique},{:.3},{:.3},{:.3}\n",
            vals[0], vals[1], vals[2]
        ));
    }

    let json = serde_json::json!({
        "columns": ["model", "technique", "accuracy", "precision", "f1"],
        "averaging": "macro",
        "runs": reports
            .iter()
            .map(|(name, report)| {
                let (model, technique) = split_run_name(name);
                serde_json::json!({
                    "run": name,
                    "model": model,
                    "technique": technique,
                    "report": report,
                })
            })
            .collect::<Vec<_>>(),
        "best": {
            "accuracy": best[0],
            "precision": best[1],
            "f1": best[2],
        },
    });

    Ok(Comparison { text, csv, json })
}
