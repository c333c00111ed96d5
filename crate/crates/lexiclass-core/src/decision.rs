//! Aggregation of per-chunk predictions into one document label.
//!
//! Abstentions are excluded from votes rather than counted as a pseudo-label:
//! parser failures lower support but never elect a label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelId;

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("empty prediction list")]
    Empty,
    #[error("predictions mix doc ids '{expected}' and '{found}'")]
    MixedDocIds { expected: String, found: String },
    #[error("no prediction carries a confidence; this rule needs a confidence-emitting classifier")]
    NoConfidences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPrediction {
    pub doc_id: String,
    pub chunk_ordinal: usize,
    pub label: Option<LabelId>,
    pub confidence: Option<f64>,
    pub abstained: bool,
}

impl ChunkPrediction {
    pub fn labeled(doc_id: &str, ordinal: usize, label: LabelId, confidence: Option<f64>) -> Self {
        ChunkPrediction {
            doc_id: doc_id.to_string(),
            chunk_ordinal: ordinal,
            label: Some(label),
            confidence,
            abstained: false,
        }
    }

    pub fn abstained(doc_id: &str, ordinal: usize) -> Self {
        ChunkPrediction {
            doc_id: doc_id.to_string(),
            chunk_ordinal: ordinal,
            label: None,
            confidence: None,
            abstained: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    Majority,
    BestConfidence,
    FirstChunk,
}

impl std::str::FromStr for DecisionRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "majority" => Ok(Self::Majority),
            "best_confidence" | "best-confidence" => Ok(Self::BestConfidence),
            "first_chunk" | "first-chunk" => Ok(Self::FirstChunk),
            other => Err(format!("unknown decision rule '{other}'")),
        }
    }
}

impl std::fmt::Display for DecisionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Majority => "majority",
            Self::BestConfidence => "best_confidence",
            Self::FirstChunk => "first_chunk",
        };
        write!(f, "{s}")
    }
}

/// One document's aggregated label. `support` counts the non-abstained
/// predictions backing the decision: winning votes under majority, the
/// candidate pool under best-confidence, and 1 under first-chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentDecision {
    pub doc_id: String,
    pub label: Option<LabelId>,
    pub rule: DecisionRule,
    pub support: usize,
    pub abstained: bool,
}

fn common_doc_id(preds: &[ChunkPrediction]) -> Result<String, DecisionError> {
    let first = preds.first().ok_or(DecisionError::Empty)?;
    for pred in preds {
        if pred.doc_id != first.doc_id {
            return Err(DecisionError::MixedDocIds {
                expected: first.doc_id.clone(),
                found: pred.doc_id.clone(),
            });
        }
    }
    Ok(first.doc_id.clone())
}

fn abstained_decision(doc_id: String, rule: DecisionRule) -> DocumentDecision {
    DocumentDecision {
        doc_id,
        label: None,
        rule,
        support: 0,
        abstained: true,
    }
}

/// Majority vote over non-abstained labels, with per-prediction vote weights.
/// Ties break by higher total confidence among the tied labels, then by
/// ascending label id. Uniform weights reproduce the plain maximum-vote rule.
pub fn weighted_vote<F>(
    preds: &[ChunkPrediction],
    weight_of: F,
) -> Result<DocumentDecision, DecisionError>
where
    F: Fn(&ChunkPrediction) -> f64,
{
    let doc_id = common_doc_id(preds)?;
    let voters: Vec<&ChunkPrediction> = preds.iter().filter(|p| !p.abstained).collect();
    if voters.is_empty() {
        return Ok(abstained_decision(doc_id, DecisionRule::Majority));
    }
    // per-label (weight sum, confidence sum, vote count)
    let mut tally: std::collections::BTreeMap<LabelId, (f64, f64, usize)> =
        std::collections::BTreeMap::new();
    for pred in &voters {
        let label = pred.label.expect("non-abstained prediction carries a label");
        let entry = tally.entry(label).or_insert((0.0, 0.0, 0));
        entry.0 += weight_of(pred);
        entry.1 += pred.confidence.unwrap_or(0.0);
        entry.2 += 1;
    }
    let (label, (_, _, votes)) = tally
        .iter()
        .max_by(|(la, (wa, ca, _)), (lb, (wb, cb, _))| {
            wa.partial_cmp(wb)
                .unwrap()
                .then(ca.partial_cmp(cb).unwrap())
                .then(lb.cmp(la)) // lower id wins a full tie
        })
        .map(|(l, t)| (*l, *t))
        .expect("tally non-empty");
    Ok(DocumentDecision {
        doc_id,
        label: Some(label),
        rule: DecisionRule::Majority,
        support: votes,
        abstained: false,
    })
}

/// Plain maximum-vote rule.
pub fn majority_vote(preds: &[ChunkPrediction]) -> Result<DocumentDecision, DecisionError> {
    weighted_vote(preds, |_| 1.0)
}

/// Label of the maximum-confidence non-abstained prediction; ties go to the
/// earliest chunk ordinal.
pub fn best_confidence(preds: &[ChunkPrediction]) -> Result<DocumentDecision, DecisionError> {
    let doc_id = common_doc_id(preds)?;
    let voters: Vec<&ChunkPrediction> = preds.iter().filter(|p| !p.abstained).collect();
    if voters.is_empty() {
        return Ok(abstained_decision(doc_id, DecisionRule::BestConfidence));
    }
    let with_confidence: Vec<&&ChunkPrediction> =
        voters.iter().filter(|p| p.confidence.is_some()).collect();
    if with_confidence.is_empty() {
        return Err(DecisionError::NoConfidences);
    }
    let best = with_confidence
        .iter()
        .max_by(|a, b| {
            a.confidence
                .unwrap()
                .partial_cmp(&b.confidence.unwrap())
                .unwrap()
                .then(b.chunk_ordinal.cmp(&a.chunk_ordinal)) // earlier ordinal wins ties
        })
        .expect("non-empty");
    Ok(DocumentDecision {
        doc_id,
        label: best.label,
        rule: DecisionRule::BestConfidence,
        support: voters.len(),
        abstained: false,
    })
}

/// Label of chunk ordinal 0; its abstention propagates even when later chunks
/// carry labels.
pub fn first_chunk(preds: &[ChunkPrediction]) -> Result<DocumentDecision, DecisionError> {
    let doc_id = common_doc_id(preds)?;
    let first = preds
        .iter()
        .min_by_key(|p| p.chunk_ordinal)
        .expect("non-empty");
    if first.abstained {
        return Ok(abstained_decision(doc_id, DecisionRule::FirstChunk));
    }
    Ok(DocumentDecision {
        doc_id,
        label: first.label,
        rule: DecisionRule::FirstChunk,
        support: 1,
        abstained: false,
    })
}

/// Applies the named rule.
pub fn decide(rule: DecisionRule, preds: &[ChunkPrediction]) -> Result<DocumentDecision, DecisionError> {
    match rule {
        DecisionRule::Majority => majority_vote(preds),
        DecisionRule::BestConfidence => best_confidence(preds),
        DecisionRule::FirstChunk => first_chunk(preds),
    }
}
