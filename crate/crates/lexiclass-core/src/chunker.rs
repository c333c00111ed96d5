//! Reference tokenization and document slicing strategies.
//!
//! Tokenization rule: Unicode-whitespace split with every non-alphanumeric,
//! non-whitespace character detached as a standalone token. The rule is
//! model-independent so every slicing contract is testable without model
//! weights; an endpoint-matched counter can be substituted through
//! [`TokenCounter`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("document '{0}' is empty")]
    EmptyDocument(String),
    #[error("invalid chunk plan: {0}")]
    BadPlan(String),
    #[error("summarize produces no token spans; use summarize_extractive")]
    SummarizeHasNoSpans,
}

/// Splits text into reference tokens: maximal alphanumeric runs plus
/// standalone punctuation characters.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(idx);
            }
        } else {
            if let Some(start) = word_start.take() {
                tokens.push(&text[start..idx]);
            }
            if !ch.is_whitespace() {
                tokens.push(&text[idx..idx + ch.len_utf8()]);
            }
        }
    }
    if let Some(start) = word_start {
        tokens.push(&text[start..]);
    }
    tokens
}

pub fn token_count(text: &str) -> usize {
    tokenize(text).len()
}

/// Joins tokens with single spaces; retokenizing the result is idempotent.
pub fn detokenize(tokens: &[&str]) -> String {
    tokens.join(" ")
}

/// Truncates text to at most `budget` reference tokens, detokenized.
pub fn truncate_tokens(text: &str, budget: usize) -> String {
    let tokens = tokenize(text);
    let end = tokens.len().min(budget);
    detokenize(&tokens[..end])
}

/// Pluggable token counter, for callers that need budgets enforced against an
/// endpoint-matched tokenizer instead of the reference rule.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// The built-in reference rule.
pub struct ReferenceTokenizer;

impl TokenCounter for ReferenceTokenizer {
    fn count(&self, text: &str) -> usize {
        token_count(text)
    }
}

/// Half-open token index range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub ordinal: usize,
    pub span: TokenSpan,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    Truncate,
    Concat,
    Stride,
    Summarize,
    PromptWindow,
}

impl std::str::FromStr for ChunkStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "truncate" => Ok(Self::Truncate),
            "concat" => Ok(Self::Concat),
            "stride" => Ok(Self::Stride),
            "summarize" => Ok(Self::Summarize),
            "prompt_window" | "prompt-window" => Ok(Self::PromptWindow),
            other => Err(format!("unknown chunk strategy '{other}'")),
        }
    }
}

impl std::fmt::Display for ChunkStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Truncate => "truncate",
            Self::Concat => "concat",
            Self::Stride => "stride",
            Self::Summarize => "summarize",
            Self::PromptWindow => "prompt_window",
        };
        write!(f, "{s}")
    }
}

/// A named slicing strategy with its window/overlap/budget parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub strategy: ChunkStrategy,
    pub window: usize,
    pub overlap: usize,
    pub budget: usize,
}

impl ChunkPlan {
    pub fn new(strategy: ChunkStrategy, window: usize, overlap: usize, budget: usize) -> Self {
        ChunkPlan {
            strategy,
            window,
            overlap,
            budget,
        }
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        if self.window == 0 {
            return Err(ChunkError::BadPlan("window must be > 0".into()));
        }
        if self.overlap >= self.window {
            return Err(ChunkError::BadPlan(format!(
                "overlap {} must be < window {}",
                self.overlap, self.window
            )));
        }
        if self.budget == 0 {
            return Err(ChunkError::BadPlan("budget must be > 0".into()));
        }
        Ok(())
    }

    /// Token budget for a single prompt excerpt under this plan.
    pub fn excerpt_limit(&self) -> usize {
        match self.strategy {
            ChunkStrategy::Truncate | ChunkStrategy::Concat | ChunkStrategy::Stride => self.window,
            ChunkStrategy::Summarize | ChunkStrategy::PromptWindow => self.budget,
        }
    }
}

/// Slices a document into chunks per the plan's strategy contract.
///
/// The summarize strategy has no token spans and is rejected here; call
/// [`summarize_extractive`] instead.
pub fn chunk(document: &Document, plan: &ChunkPlan) -> Result<Vec<Chunk>, ChunkError> {
    plan.validate()?;
    let tokens = tokenize(&document.text);
    let len = tokens.len();
    if len == 0 {
        return Err(ChunkError::EmptyDocument(document.doc_id.clone()));
    }
    let spans = match plan.strategy {
        ChunkStrategy::Truncate => vec![TokenSpan {
            start: 0,
            end: len.min(plan.window),
        }],
        ChunkStrategy::PromptWindow => vec![TokenSpan {
            start: 0,
            end: len.min(plan.budget),
        }],
        ChunkStrategy::Concat => {
            let mut spans = Vec::new();
            let mut start = 0;
            while start < len {
                let end = (start + plan.window).min(len);
                spans.push(TokenSpan { start, end });
                start = end;
            }
            spans
        }
        ChunkStrategy::Stride => {
            let step = plan.window - plan.overlap;
            let mut spans = Vec::new();
            let mut start = 0;
            loop {
                let end = (start + plan.window).min(len);
                spans.push(TokenSpan { start, end });
                if end == len {
                    break;
                }
                start += step;
            }
            spans
        }
        ChunkStrategy::Summarize => return Err(ChunkError::SummarizeHasNoSpans),
    };
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(ordinal, span)| Chunk {
            doc_id: document.doc_id.clone(),
            ordinal,
            span,
            text: detokenize(&tokens[span.start..span.end]),
        })
        .collect())
}

const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

/// Sentence boundary detector: splits after `.`, `!`, or `?` (plus trailing
/// closing quotes/brackets) when followed by whitespace and an uppercase
/// letter, unless the run ending at a period is a known abbreviation.
pub struct SentenceSplitter {
    abbreviations: std::collections::HashSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::from_list(DEFAULT_ABBREVIATIONS)
    }
}

impl SentenceSplitter {
    /// One abbreviation per line; `#` lines are comments.
    pub fn from_list(list: &str) -> Self {
        let abbreviations = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        SentenceSplitter { abbreviations }
    }

    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '\u{00bb}'];
        const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '[', '\u{00ab}'];
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let n = chars.len();
        let mut sentences = Vec::new();
        let mut sent_start = 0usize;
        let mut i = 0usize;
        while i < n {
            let (byte_idx, ch) = chars[i];
            if ch == '.' || ch == '!' || ch == '?' {
                // closing quotes/brackets belong to the current sentence
                let mut j = i + 1;
                while j < n && CLOSERS.contains(&chars[j].1) {
                    j += 1;
                }
                let mut k = j;
                while k < n && chars[k].1.is_whitespace() {
                    k += 1;
                }
                let had_space = k > j;
                // optional opening quotes before the capital of the next sentence
                let mut m = k;
                while m < n && OPENERS.contains(&chars[m].1) {
                    m += 1;
                }
                let next_upper = m < n && chars[m].1.is_uppercase();
                let is_abbrev = ch == '.' && {
                    let mut run_start = i;
                    while run_start > 0 && !chars[run_start - 1].1.is_whitespace() {
                        run_start -= 1;
                    }
                    let run = &text[chars[run_start].0..byte_idx + ch.len_utf8()];
                    self.abbreviations.contains(run)
                };
                if had_space && next_upper && !is_abbrev {
                    let end = if j < n { chars[j].0 } else { text.len() };
                    let sentence = text[sent_start..end].trim();
                    if !sentence.is_empty() {
                        sentences.push(sentence);
                    }
                    sent_start = if k < n { chars[k].0 } else { text.len() };
                    i = k;
                    continue;
                }
            }
            i += 1;
        }
        if sent_start < text.len() {
            let tail = text[sent_start..].trim();
            if !tail.is_empty() {
                sentences.push(tail);
            }
        }
        sentences
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryResult {
    pub text: String,
    /// Set when the document had no sentence boundary and was truncated
    /// instead of summarized.
    pub truncated_fallback: bool,
}

/// Selects whole sentences greedily by descending salience until the token
/// budget is exhausted; output preserves original sentence order.
///
/// Salience of a sentence is the document-level term frequency of its word
/// tokens (case-folded, punctuation excluded), normalized by word count.
/// Ties go to the earlier sentence.
pub fn summarize_extractive(document: &Document, budget: usize) -> Result<SummaryResult, ChunkError> {
    if budget == 0 {
        return Err(ChunkError::BadPlan("budget must be > 0".into()));
    }
    let text = document.text.as_str();
    if text.trim().is_empty() {
        return Ok(SummaryResult {
            text: String::new(),
            truncated_fallback: false,
        });
    }
    if token_count(text) <= budget {
        return Ok(SummaryResult {
            text: text.to_string(),
            truncated_fallback: false,
        });
    }
    let splitter = SentenceSplitter::default();
    let sentences = splitter.split(text);
    if sentences.len() <= 1 {
        return Ok(SummaryResult {
            text: truncate_tokens(text, budget),
            truncated_fallback: true,
        });
    }

    let mut doc_tf: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for token in tokenize(text) {
        if token.chars().next().is_some_and(char::is_alphanumeric) {
            *doc_tf.entry(token.to_lowercase()).or_insert(0) += 1;
        }
    }
    let mut scored: Vec<(usize, f64, usize)> = sentences
        .iter()
        .enumerate()
        .map(|(idx, sentence)| {
            let words: Vec<String> = tokenize(sentence)
                .into_iter()
                .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
                .map(str::to_lowercase)
                .collect();
            let score = if words.is_empty() {
                0.0
            } else {
                let total: usize = words.iter().map(|w| doc_tf.get(w).copied().unwrap_or(0)).sum();
                total as f64 / words.len() as f64
            };
            (idx, score, token_count(sentence))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut remaining = budget;
    let mut selected: Vec<usize> = Vec::new();
    for (idx, _, count) in &scored {
        if *count <= remaining {
            selected.push(*idx);
            remaining -= count;
        }
    }
    if selected.is_empty() {
        // budget smaller than every sentence: truncate rather than emit nothing
        return Ok(SummaryResult {
            text: truncate_tokens(text, budget),
            truncated_fallback: true,
        });
    }
    selected.sort_unstable();
    let text = selected
        .iter()
        .map(|&idx| sentences[idx])
        .collect::<Vec<_>>()
        .join(" ");
    Ok(SummaryResult {
        text,
        truncated_fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document {
            doc_id: "d0".into(),
            text: text.into(),
            broad_label: None,
            fine_label: None,
        }
    }

    fn synthetic_text(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn tokenizes_words_and_detaches_punctuation() {
        assert_eq!(tokenize("The Court affirmed."), vec!["The", "Court", "affirmed", "."]);
        assert_eq!(tokenize(""), Vec::<&str>::new());
        assert_eq!(tokenize("Pp. 364-367"), vec!["Pp", ".", "364", "-", "367"]);
    }

    #[test]
    fn frozen_sentence_token_count() {
        // Token count computed once with an independent implementation of the
        // reference rule and frozen here.
        let sentence = "Petitioner, an Orthodox Jew and ordained rabbi, was ordered not to wear \
                        a yarmulke while on duty and in uniform as a commissioned officer in the \
                        Air Force at March Air Force Base, pursuant to an Air Force regulation \
                        that provides that authorized headgear may be worn out of doors but that \
                        indoors \"[h]eadgear [may] not be worn ... except by armed security \
                        police in the performance of their duties.\"";
        assert_eq!(token_count(sentence), 83);
    }

    #[test]
    fn detokenize_retokenize_is_idempotent() {
        let text = "Held: the Court (per curiam) affirmed, 5-4.";
        let tokens = tokenize(text);
        let joined = detokenize(&tokens);
        assert_eq!(tokenize(&joined), tokens);
    }

    #[test]
    fn short_doc_yields_single_stride_chunk() {
        let d = doc(&synthetic_text(300));
        let plan = ChunkPlan::new(ChunkStrategy::Stride, 512, 64, 5000);
        let chunks = chunk(&d, &plan).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].span, TokenSpan { start: 0, end: 300 });
    }

    #[test]
    fn stride_spans_match_worked_example() {
        let d = doc(&synthetic_text(1000));
        let plan = ChunkPlan::new(ChunkStrategy::Stride, 512, 64, 5000);
        let spans: Vec<(usize, usize)> = chunk(&d, &plan)
            .unwrap()
            .iter()
            .map(|c| (c.span.start, c.span.end))
            .collect();
        assert_eq!(spans, vec![(0, 512), (448, 960), (896, 1000)]);
    }

    #[test]
    fn concat_tiles_disjointly() {
        let d = doc(&synthetic_text(1000));
        let plan = ChunkPlan::new(ChunkStrategy::Concat, 512, 0, 5000);
        let spans: Vec<(usize, usize)> = chunk(&d, &plan)
            .unwrap()
            .iter()
            .map(|c| (c.span.start, c.span.end))
            .collect();
        assert_eq!(spans, vec![(0, 512), (512, 1000)]);
    }

    #[test]
    fn truncate_and_prompt_window_take_prefixes() {
        let d = doc(&synthetic_text(700));
        let plan = ChunkPlan::new(ChunkStrategy::Truncate, 512, 0, 5000);
        let chunks = chunk(&d, &plan).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].span, TokenSpan { start: 0, end: 512 });

        let plan = ChunkPlan::new(ChunkStrategy::PromptWindow, 512, 0, 5000);
        let chunks = chunk(&d, &plan).unwrap();
        assert_eq!(chunks[0].span, TokenSpan { start: 0, end: 700 });
    }

    #[test]
    fn empty_document_is_rejected() {
        let d = doc("   ");
        let plan = ChunkPlan::new(ChunkStrategy::Truncate, 512, 0, 5000);
        assert!(matches!(chunk(&d, &plan), Err(ChunkError::EmptyDocument(_))));
    }

    #[test]
    fn summarize_strategy_has_no_spans() {
        let d = doc("some text");
        let plan = ChunkPlan::new(ChunkStrategy::Summarize, 512, 0, 128);
        assert!(matches!(chunk(&d, &plan), Err(ChunkError::SummarizeHasNoSpans)));
    }

    #[test]
    fn plan_invariants_are_enforced() {
        let plan = ChunkPlan::new(ChunkStrategy::Stride, 512, 512, 5000);
        assert!(plan.validate().is_err());
        let plan = ChunkPlan::new(ChunkStrategy::Stride, 0, 0, 5000);
        assert!(plan.validate().is_err());
        let plan = ChunkPlan::new(ChunkStrategy::PromptWindow, 512, 0, 0);
        assert!(plan.validate().is_err());
    }

    #[test]
    fn sentence_splitter_protects_citations() {
        let splitter = SentenceSplitter::default();
        let text = "The rule from Miranda v. Arizona controls. The U.S. Supreme Court agreed.";
        let sentences = splitter.split(text);
        assert_eq!(
            sentences,
            vec![
                "The rule from Miranda v. Arizona controls.",
                "The U.S. Supreme Court agreed."
            ]
        );
    }

    #[test]
    fn sentence_splitter_handles_closing_quotes() {
        let splitter = SentenceSplitter::default();
        let text = "He refused to remove it while on \"duty.\" Petitioner then brought an action.";
        let sentences = splitter.split(text);
        assert_eq!(sentences.len(), 2);
        assert!(sentences[0].ends_with("\"duty.\""));
        assert!(sentences[1].starts_with("Petitioner"));
    }

    #[test]
    fn summarize_identity_below_budget() {
        let d = doc("Short text only.");
        let result = summarize_extractive(&d, 100).unwrap();
        assert_eq!(result.text, "Short text only.");
        assert!(!result.truncated_fallback);
    }

    #[test]
    fn summarize_selects_by_salience_in_original_order() {
        // Three 6-token sentences (5 words + period), document term
        // frequencies: the=4, judge=1, heard=1, appeal=3, a=2, clerk=1,
        // filed=1, notice=1, cited=1. Length-normalized scores:
        //   s0 = (4+1+1+4+3)/5 = 2.6
        //   s1 = (2+1+1+2+1)/5 = 1.4
        //   s2 = (4+3+1+4+3)/5 = 3.0
        // Budget 12 fits exactly two sentences: s2 then s0, emitted in
        // original order.
        let d = doc("The judge heard the appeal. A clerk filed a notice. The appeal cited the appeal.");
        let result = summarize_extractive(&d, 12).unwrap();
        assert_eq!(result.text, "The judge heard the appeal. The appeal cited the appeal.");
        assert!(!result.truncated_fallback);
        assert!(token_count(&result.text) <= 12);
    }

    #[test]
    fn summarize_empty_document_is_empty() {
        let d = doc("");
        let result = summarize_extractive(&d, 10).unwrap();
        assert_eq!(result.text, "");
    }

    #[test]
    fn summarize_falls_back_to_truncation_without_boundaries() {
        let d = doc(&synthetic_text(50));
        let result = summarize_extractive(&d, 10).unwrap();
        assert!(result.truncated_fallback);
        assert_eq!(token_count(&result.text), 10);
    }

    #[test]
    fn summarize_truncates_when_no_sentence_fits() {
        let d = doc("The first sentence runs long enough to blow the budget. So does the second one here.");
        let result = summarize_extractive(&d, 3).unwrap();
        assert!(result.truncated_fallback);
        assert_eq!(token_count(&result.text), 3);
    }
}
