//! Keyword-lexicon retrieval: lexicon files, structural document
//! segmentation, category scoring, and retrieval-augmented prompt assembly.
//!
//! Default scoring: each matched term contributes its occurrence count times
//! its length in words, counted case-insensitively at word boundaries.
//! Phrases are matched first and consume their tokens, so constituent words
//! are not re-counted. Saturation (BM25-style k1/b) is deliberately absent so
//! scores stay hand-computable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, LabelId, LabelOntology};
use crate::llmclient::{complete, ClientError, EndpointConfig};
use crate::promptkit::{render_prompt, PromptError, PromptTemplate};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("lexicon line {line}: unknown category name '{name}'")]
    UnknownCategory { line: usize, name: String },
    #[error("lexicon category '{0}' has no terms")]
    EmptyCategory(String),
    #[error("lexicon term '{term}' has {words} words; terms are 1..=5 words")]
    BadTerm { term: String, words: usize },
    #[error("duplicate lexicon category '{0}'")]
    DuplicateCategory(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("retrieval k={k} outside 1..={max}")]
    BadK { k: usize, max: usize },
    #[error("lexicon was built for {lexicon} labels but ontology has {ontology}")]
    OntologyMismatch { lexicon: usize, ontology: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// How matched term counts combine into a category score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringRule {
    /// count x words-in-term (default)
    PhraseWeighted,
    /// 1 per term with any match
    BinaryPresence,
    /// count x ln(1 + categories / categories-containing-term)
    TfIdf,
}

impl std::str::FromStr for ScoringRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "phrase_weighted" => Ok(Self::PhraseWeighted),
            "binary_presence" => Ok(Self::BinaryPresence),
            "tf_idf" | "tfidf" => Ok(Self::TfIdf),
            other => Err(format!("unknown scoring rule '{other}'")),
        }
    }
}

/// Case-folded per-category term lists, resolved against an ontology.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordLexicon {
    pub label_count: usize,
    pub entries: BTreeMap<LabelId, Vec<String>>,
}

impl KeywordLexicon {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn term_count(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }
}

/// Parses the `Category Name: term, term, multi word phrase` line format.
pub fn parse_lexicon(text: &str, ontology: &LabelOntology) -> Result<KeywordLexicon, RetrievalError> {
    let mut entries: BTreeMap<LabelId, Vec<String>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, rest) = line.split_once(':').ok_or_else(|| RetrievalError::Parse {
            line: line_no,
            message: "expected 'Category Name: term, term, ...'".into(),
        })?;
        let name = name.trim().trim_matches(|c| c == '\'' || c == '"').trim();
        let label = ontology
            .id_by_name(name)
            .ok_or_else(|| RetrievalError::UnknownCategory {
                line: line_no,
                name: name.to_string(),
            })?;
        if entries.contains_key(&label) {
            return Err(RetrievalError::DuplicateCategory(name.to_string()));
        }
        let mut terms: Vec<String> = Vec::new();
        for piece in rest.split(',') {
            let term = piece.trim().to_lowercase();
            if term.is_empty() {
                continue;
            }
            let words = term.split_whitespace().count();
            if !(1..=5).contains(&words) {
                return Err(RetrievalError::BadTerm { term, words });
            }
            if !terms.contains(&term) {
                terms.push(term);
            }
        }
        if terms.is_empty() {
            return Err(RetrievalError::EmptyCategory(name.to_string()));
        }
        entries.insert(label, terms);
    }
    if entries.is_empty() {
        return Err(RetrievalError::EmptyLexicon);
    }
    Ok(KeywordLexicon {
        label_count: ontology.len(),
        entries,
    })
}

pub fn load_lexicon(path: &Path, ontology: &LabelOntology) -> Result<KeywordLexicon, RetrievalError> {
    let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_lexicon(&text, ontology)
}

/// A structural slice of a document: a run of non-blank lines, optionally
/// opened by a heading line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub ordinal: usize,
    pub heading: Option<String>,
    pub text: String,
}

const DEFAULT_MARKERS: &str = include_str!("../data/structural_markers.txt");

/// Line-start markers that open a new segment.
#[derive(Debug, Clone)]
pub struct StructuralMarkers {
    lowered: Vec<String>,
}

impl Default for StructuralMarkers {
    fn default() -> Self {
        Self::from_list(DEFAULT_MARKERS)
    }
}

impl StructuralMarkers {
    pub fn from_list(list: &str) -> Self {
        let lowered = list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect();
        StructuralMarkers { lowered }
    }

    fn matches(&self, trimmed_line: &str) -> bool {
        let lowered = trimmed_line.to_lowercase();
        self.lowered.iter().any(|m| lowered.starts_with(m))
    }
}

fn is_all_caps_heading(trimmed: &str) -> bool {
    trimmed.len() <= 80
        && trimmed.chars().any(|c| c.is_alphabetic())
        && !trimmed.chars().any(|c| c.is_lowercase())
}

/// Splits a document at structural boundaries: blank-line runs, all-caps
/// heading lines, and the marker list. A document with no boundaries yields
/// one segment. Every non-blank line appears in exactly one segment, in order.
pub fn segment_structure(document: &Document, markers: &StructuralMarkers) -> Vec<Segment> {
    let mut segments: Vec<Segment> = Vec::new();
    let mut lines: Vec<&str> = Vec::new();
    let mut heading: Option<String> = None;

    fn flush(
        doc_id: &str,
        segments: &mut Vec<Segment>,
        lines: &mut Vec<&str>,
        heading: &mut Option<String>,
    ) {
        if lines.is_empty() {
            return;
        }
        segments.push(Segment {
            doc_id: doc_id.to_string(),
            ordinal: segments.len(),
            heading: heading.take(),
            text: lines.join("\n"),
        });
        lines.clear();
    }

    for line in document.text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            flush(&document.doc_id, &mut segments, &mut lines, &mut heading);
            continue;
        }
        let is_heading = is_all_caps_heading(trimmed) || markers.matches(trimmed);
        if is_heading {
            flush(&document.doc_id, &mut segments, &mut lines, &mut heading);
            heading = Some(trimmed.to_string());
        }
        lines.push(line);
    }
    flush(&document.doc_id, &mut segments, &mut lines, &mut heading);
    segments
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub label: LabelId,
    pub score: f64,
    pub matched_terms: Vec<(String, usize)>,
}

fn word_tokens_folded(text: &str) -> Vec<String> {
    crate::chunker::tokenize(text)
        .into_iter()
        .filter(|t| t.chars().next().is_some_and(char::is_alphanumeric))
        .map(|t| t.to_lowercase())
        .collect()
}

/// Greedy left-to-right matcher over the folded word-token sequence.
/// Longer phrases match first and consume their positions.
fn match_terms(tokens: &[String], terms: &[String]) -> Vec<(String, usize)> {
    let mut order: Vec<&String> = terms.iter().collect();
    order.sort_by(|a, b| {
        let wa = a.split_whitespace().count();
        let wb = b.split_whitespace().count();
        wb.cmp(&wa).then_with(|| a.cmp(b))
    });
    let mut consumed = vec![false; tokens.len()];
    let mut counts = Vec::new();
    for term in order {
        let words: Vec<&str> = term.split_whitespace().collect();
        let len = words.len();
        if len == 0 || len > tokens.len() {
            continue;
        }
        let mut count = 0usize;
        let mut i = 0usize;
        while i + len <= tokens.len() {
            let hit = (0..len).all(|q| !consumed[i + q] && tokens[i + q] == words[q]);
            if hit {
                for q in 0..len {
                    consumed[i + q] = true;
                }
                count += 1;
                i += len;
            } else {
                i += 1;
            }
        }
        if count > 0 {
            counts.push((term.clone(), count));
        }
    }
    counts
}

/// Scores every ontology label (zeros for labels without lexicon entries),
/// sorted by descending score with ties broken by ascending label id.
pub fn score_categories(text: &str, lexicon: &KeywordLexicon) -> Vec<CategoryScore> {
    score_categories_with(text, lexicon, ScoringRule::PhraseWeighted)
}

pub fn score_categories_with(
    text: &str,
    lexicon: &KeywordLexicon,
    rule: ScoringRule,
) -> Vec<CategoryScore> {
    let tokens = word_tokens_folded(text);
    let category_count = lexicon.entries.len().max(1);
    let mut scores: Vec<CategoryScore> = (0..lexicon.label_count)
        .map(|label| {
            let matched = match lexicon.entries.get(&label) {
                Some(terms) => match_terms(&tokens, terms),
                None => Vec::new(),
            };
            let score = matched
                .iter()
                .map(|(term, count)| match rule {
                    ScoringRule::PhraseWeighted => {
                        (*count as f64) * term.split_whitespace().count() as f64
                    }
                    ScoringRule::BinaryPresence => 1.0,
                    ScoringRule::TfIdf => {
                        let df = lexicon
                            .entries
                            .values()
                            .filter(|terms| terms.contains(term))
                            .count()
                            .max(1);
                        (*count as f64) * (1.0 + category_count as f64 / df as f64).ln()
                    }
                })
                .sum();
            CategoryScore {
                label,
                score,
                matched_terms: matched,
            }
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.label.cmp(&b.label))
    });
    scores
}

/// Per-segment scores summed per category.
pub fn score_by_segments(
    document: &Document,
    lexicon: &KeywordLexicon,
    rule: ScoringRule,
) -> Vec<CategoryScore> {
    let segments = segment_structure(document, &StructuralMarkers::default());
    let mut totals: Vec<f64> = vec![0.0; lexicon.label_count];
    let mut matched: Vec<BTreeMap<String, usize>> =
        vec![BTreeMap::new(); lexicon.label_count];
    for segment in &segments {
        for cs in score_categories_with(&segment.text, lexicon, rule) {
            totals[cs.label] += cs.score;
            for (term, count) in cs.matched_terms {
                *matched[cs.label].entry(term).or_insert(0) += count;
            }
        }
    }
    let mut scores: Vec<CategoryScore> = totals
        .into_iter()
        .enumerate()
        .map(|(label, score)| CategoryScore {
            label,
            score,
            matched_terms: matched[label].clone().into_iter().collect(),
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.label.cmp(&b.label))
    });
    scores
}

fn render_retrieved_block(scores: &[CategoryScore], ontology: &LabelOntology) -> String {
    scores
        .iter()
        .map(|cs| {
            let name = ontology.name_of(cs.label).unwrap_or_default();
            if cs.matched_terms.is_empty() {
                format!("- {name}")
            } else {
                let terms = cs
                    .matched_terms
                    .iter()
                    .map(|(term, count)| format!("{term} ({count})"))
                    .collect::<Vec<_>>()
                    .join(", ");
                format!("- {name}: {terms}")
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Scores the document per segment, renders the top-k categories with their
/// matched terms into the template's retrieved block, and assembles the
/// (system, user) prompt pair.
pub fn retrieve_and_prompt(
    document: &Document,
    lexicon: &KeywordLexicon,
    k: usize,
    template: &PromptTemplate,
    ontology: &LabelOntology,
) -> Result<(String, String), RetrievalError> {
    if lexicon.is_empty() {
        return Err(RetrievalError::EmptyLexicon);
    }
    if lexicon.label_count != ontology.len() {
        return Err(RetrievalError::OntologyMismatch {
            lexicon: lexicon.label_count,
            ontology: ontology.len(),
        });
    }
    if k == 0 || k > ontology.len() {
        return Err(RetrievalError::BadK {
            k,
            max: ontology.len(),
        });
    }
    let scores = score_by_segments(document, lexicon, ScoringRule::PhraseWeighted);
    let block = render_retrieved_block(&scores[..k], ontology);
    let pair = render_prompt(
        template,
        ontology,
        &document.text,
        template.excerpt_budget,
        Some(&block),
    )?;
    Ok(pair)
}

/// Keyword-only baseline: argmax of whole-document category scores, ties to
/// the lowest label id.
pub fn classify_direct(document: &Document, lexicon: &KeywordLexicon) -> Result<LabelId, RetrievalError> {
    if lexicon.is_empty() {
        return Err(RetrievalError::EmptyLexicon);
    }
    let scores = score_categories(&document.text, lexicon);
    Ok(scores[0].label)
}

/// The lexicon-generation request sent to an endpoint; output parses with
/// [`parse_lexicon`].
pub fn lexicon_generation_prompt(ontology: &LabelOntology) -> String {
    let mut prompt = String::from(
        "Give me a list of words and phrases (atleast 15) which would be present in a case \
         text to classify it into following categories. Do not write any explaination or \
         warnings.\n\n",
    );
    for entry in ontology.entries_in_order() {
        match &entry.gloss {
            Some(gloss) => prompt.push_str(&format!("- {}: {}\n\n", entry.name, gloss)),
            None => prompt.push_str(&format!("- {}\n\n", entry.name)),
        }
    }
    prompt.push_str("Format the output in the following way:\n\n'Category': words, phrase\n");
    prompt
}

/// Asks the configured endpoint for a lexicon. Callers should cache the
/// result to a file so runs stay reproducible.
pub fn generate_lexicon(
    config: &EndpointConfig,
    ontology: &LabelOntology,
) -> Result<KeywordLexicon, RetrievalError> {
    let user = lexicon_generation_prompt(ontology);
    let exchange = complete(config, "", &user)?;
    parse_lexicon(&exchange.response_text, ontology)
}
