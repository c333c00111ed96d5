//! Prompt template loading, classification prompt assembly, few-shot
//! selection, and strict response parsing.
//!
//! Templates are plain-text files with `[meta]`, `[system]`, and `[user]`
//! sections. The user section carries `{placeholders}`: `{label_block}`,
//! `{fewshot_block}`, `{opinion}`, plus `{label_count}` / `{max_label}` for
//! ontology cardinality. Retrieval templates use `{retrieved_block}` and are
//! filled by the retrieval stage, not here.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunker::{tokenize, truncate_tokens, ChunkPlan};
use crate::corpus::{Corpus, LabelId, LabelLevel, LabelOntology};

pub const OPINION_START: &str = "--- Opinion Start ---";
pub const OPINION_END: &str = "--- Opinion End ---";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("template parse error: {0}")]
    TemplateParse(String),
    #[error("template user section is missing required placeholder {0}")]
    MissingPlaceholder(&'static str),
    #[error("template uses {{retrieved_block}}; fill it through the retrieval stage")]
    RetrievedBlockUnavailable,
    #[error("answer format mismatch: {0}")]
    AnswerFormatMismatch(String),
    #[error("document text is empty")]
    EmptyDocument,
    #[error("no label could be parsed from response: {raw:?}")]
    NoParse { raw: String },
    #[error("parsed integer {value} outside ontology range 0..{k}")]
    OutOfRange { value: u64, k: usize },
    #[error("multiple distinct label candidates in response: {raw:?}")]
    MultipleCandidates { raw: String },
    #[error("requested {k} few-shot examples but only {available} satisfy the cap")]
    NotEnoughExamples { k: usize, available: usize },
    #[error("few-shot example label {0} not in ontology")]
    UnknownLabel(LabelId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerFormat {
    CategoryNumber,
    CategoryName,
}

impl std::str::FromStr for AnswerFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "category_number" => Ok(Self::CategoryNumber),
            "category_name" => Ok(Self::CategoryName),
            other => Err(format!("unknown answer format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelBlockStyle {
    NumberedNames,
    NamesWithGlosses,
}

impl std::str::FromStr for LabelBlockStyle {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "numbered_names" => Ok(Self::NumberedNames),
            "names_with_glosses" => Ok(Self::NamesWithGlosses),
            other => Err(format!("unknown label block style '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub excerpt: String,
    pub label: LabelId,
}

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub system_text: String,
    pub instruction_text: String,
    pub label_block_style: LabelBlockStyle,
    pub fewshot: Vec<FewShotExample>,
    pub answer_format: AnswerFormat,
    pub excerpt_budget: usize,
}

impl PromptTemplate {
    pub fn from_file(path: &std::path::Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses the named-section template format. `#` comment lines are only
    /// recognized before the first section header.
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: std::collections::HashMap<String, Vec<&str>> =
            std::collections::HashMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            if current.is_none() && (trimmed.is_empty() || trimmed.starts_with('#')) {
                continue;
            }
            if trimmed.starts_with('[') && trimmed.ends_with(']') {
                let name = trimmed[1..trimmed.len() - 1].trim().to_lowercase();
                if !["meta", "system", "user"].contains(&name.as_str()) {
                    return Err(PromptError::TemplateParse(format!(
                        "unknown section [{name}]"
                    )));
                }
                if sections.contains_key(&name) {
                    return Err(PromptError::TemplateParse(format!(
                        "duplicate section [{name}]"
                    )));
                }
                sections.insert(name.clone(), Vec::new());
                current = Some(name);
                continue;
            }
            match &current {
                Some(name) => sections.get_mut(name).unwrap().push(line),
                None => {
                    return Err(PromptError::TemplateParse(format!(
                        "content before first section: {trimmed:?}"
                    )))
                }
            }
        }
        let body = |name: &str| -> String {
            sections
                .get(name)
                .map(|lines| lines.join("\n").trim().to_string())
                .unwrap_or_default()
        };
        let meta_text = body("meta");
        let mut answer_format = None;
        let mut label_block_style = None;
        let mut excerpt_budget = 5000usize;
        for line in meta_text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                PromptError::TemplateParse(format!("meta line without '=': {line:?}"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "answer_format" => {
                    answer_format =
                        Some(value.parse::<AnswerFormat>().map_err(PromptError::TemplateParse)?)
                }
                "label_block_style" => {
                    label_block_style = Some(
                        value
                            .parse::<LabelBlockStyle>()
                            .map_err(PromptError::TemplateParse)?,
                    )
                }
                "excerpt_budget" => {
                    excerpt_budget = value.parse().map_err(|_| {
                        PromptError::TemplateParse(format!("bad excerpt_budget {value:?}"))
                    })?
                }
                other => {
                    return Err(PromptError::TemplateParse(format!(
                        "unknown meta key '{other}'"
                    )))
                }
            }
        }
        if excerpt_budget == 0 {
            return Err(PromptError::TemplateParse("excerpt_budget must be > 0".into()));
        }
        let instruction_text = body("user");
        if instruction_text.is_empty() {
            return Err(PromptError::TemplateParse("missing [user] section".into()));
        }
        Ok(PromptTemplate {
            system_text: body("system"),
            instruction_text,
            label_block_style: label_block_style
                .ok_or_else(|| PromptError::TemplateParse("missing label_block_style".into()))?,
            fewshot: Vec::new(),
            answer_format: answer_format
                .ok_or_else(|| PromptError::TemplateParse("missing answer_format".into()))?,
            excerpt_budget,
        })
    }

    pub fn with_fewshot(mut self, fewshot: Vec<FewShotExample>) -> Self {
        self.fewshot = fewshot;
        self
    }

    pub fn uses_retrieved_block(&self) -> bool {
        self.instruction_text.contains("{retrieved_block}")
            || self.system_text.contains("{retrieved_block}")
    }
}

/// Renders the ontology's label list in the given style, each name exactly once.
pub fn render_label_block(ontology: &LabelOntology, style: LabelBlockStyle) -> String {
    let entries = ontology.entries_in_order();
    match style {
        LabelBlockStyle::NumberedNames => {
            let last = entries.len().saturating_sub(1);
            entries
                .iter()
                .enumerate()
                .map(|(i, e)| {
                    if i == last {
                        format!("{}: {}", e.id, e.name)
                    } else {
                        format!("{}: {},", e.id, e.name)
                    }
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
        LabelBlockStyle::NamesWithGlosses => entries
            .iter()
            .map(|e| match &e.gloss {
                Some(gloss) => format!("- {}: {}", e.name, gloss),
                None => format!("- {}", e.name),
            })
            .collect::<Vec<_>>()
            .join("\n\n"),
    }
}

/// The canonical answer text for a label under a format; parsing it recovers
/// the label.
pub fn render_answer(label: LabelId, ontology: &LabelOntology, format: AnswerFormat) -> String {
    match format {
        AnswerFormat::CategoryNumber => format!("Category: ({label})"),
        AnswerFormat::CategoryName => ontology
            .name_of(label)
            .unwrap_or_default()
            .to_string(),
    }
}

fn render_fewshot_block(
    fewshot: &[FewShotExample],
    ontology: &LabelOntology,
    format: AnswerFormat,
) -> Result<String, PromptError> {
    if fewshot.is_empty() {
        return Ok(String::new());
    }
    let mut block = String::from("Example Classifications:\n");
    for example in fewshot {
        if ontology.name_of(example.label).is_none() {
            return Err(PromptError::UnknownLabel(example.label));
        }
        block.push('\n');
        block.push_str(&format!(
            "Opinion (truncated): \"{}\"\n{}\n",
            example.excerpt,
            match format {
                AnswerFormat::CategoryNumber => format!("Category: ({})", example.label),
                AnswerFormat::CategoryName => format!(
                    "Category: {}",
                    ontology.name_of(example.label).unwrap_or_default()
                ),
            }
        ));
    }
    Ok(block.trim_end().to_string())
}

/// Shared renderer behind [`build_prompt`] and the retrieval stage's prompt
/// assembly. `{opinion}` is filled last so document text containing brace
/// patterns cannot inject further substitutions.
pub(crate) fn render_prompt(
    template: &PromptTemplate,
    ontology: &LabelOntology,
    document_text: &str,
    excerpt_limit: usize,
    retrieved_block: Option<&str>,
) -> Result<(String, String), PromptError> {
    if document_text.trim().is_empty() {
        return Err(PromptError::EmptyDocument);
    }
    if template.uses_retrieved_block() && retrieved_block.is_none() {
        return Err(PromptError::RetrievedBlockUnavailable);
    }
    if !template.instruction_text.contains("{opinion}") {
        return Err(PromptError::MissingPlaceholder("{opinion}"));
    }
    if template.answer_format == AnswerFormat::CategoryName {
        if let Some(entry) = ontology
            .labels
            .iter()
            .find(|e| e.name.split_whitespace().count() > 2)
        {
            return Err(PromptError::AnswerFormatMismatch(format!(
                "category_name answers are limited to 2 words but label {} is named '{}'",
                entry.id, entry.name
            )));
        }
    }
    let budget = template.excerpt_budget.min(excerpt_limit);
    let excerpt = truncate_tokens(document_text, budget);
    let opinion = format!("{OPINION_START}\n{excerpt}\n{OPINION_END}");
    let label_block = render_label_block(ontology, template.label_block_style);
    let fewshot_block = render_fewshot_block(&template.fewshot, ontology, template.answer_format)?;
    let fill = |s: &str| -> String {
        s.replace("{retrieved_block}", retrieved_block.unwrap_or(""))
            .replace("{label_block}", &label_block)
            .replace("{fewshot_block}", &fewshot_block)
            .replace("{label_count}", &ontology.len().to_string())
            .replace("{max_label}", &(ontology.len() - 1).to_string())
            .replace("{opinion}", &opinion)
    };
    Ok((fill(&template.system_text), fill(&template.instruction_text)))
}

/// Assembles the (system, user) prompt pair: full label block, few-shot
/// examples, and the document excerpt truncated to the plan/template budget
/// between the opinion delimiters.
pub fn build_prompt(
    template: &PromptTemplate,
    ontology: &LabelOntology,
    document_text: &str,
    plan: &ChunkPlan,
) -> Result<(String, String), PromptError> {
    render_prompt(template, ontology, document_text, plan.excerpt_limit(), None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMethod {
    ParenthesizedNumber,
    BareNumber,
    ExactName,
    FuzzyName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabel {
    pub label: LabelId,
    pub method: ParseMethod,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParserOptions {
    /// Permit unique edit-distance-1 name matches. Off by default: silent
    /// near-matches would corrupt metrics.
    pub fuzzy_names: bool,
}

fn parenthesized_integers(raw: &str) -> Vec<u64> {
    let chars: Vec<char> = raw.chars().collect();
    let mut values = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '(' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let digit_start = j;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if j > digit_start {
                let mut k = j;
                while k < chars.len() && chars[k].is_whitespace() {
                    k += 1;
                }
                if k < chars.len() && chars[k] == ')' {
                    let digits: String = chars[digit_start..j].iter().collect();
                    if let Ok(v) = digits.parse::<u64>() {
                        values.push(v);
                    } else {
                        values.push(u64::MAX); // overflow surfaces as out-of-range
                    }
                    i = k + 1;
                    continue;
                }
            }
        }
        i += 1;
    }
    values
}

fn check_range(value: u64, k: usize) -> Result<LabelId, PromptError> {
    if value < k as u64 {
        Ok(value as LabelId)
    } else {
        Err(PromptError::OutOfRange { value, k })
    }
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut row = vec![i + 1];
        for (j, cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            row.push((prev[j] + cost).min(prev[j + 1] + 1).min(row[j] + 1));
        }
        prev = row;
    }
    prev[b.len()]
}

/// Extracts a label from a model response.
///
/// Tries, in order: a parenthesized integer `(N)`, a bare integer token, then
/// an exact case-insensitive ontology-name match of at most two words trimmed
/// of punctuation. The order is the same under both answer formats.
pub fn parse_response(
    raw: &str,
    ontology: &LabelOntology,
    format: AnswerFormat,
) -> Result<ParsedLabel, PromptError> {
    parse_response_with(raw, ontology, format, &ParserOptions::default())
}

pub fn parse_response_with(
    raw: &str,
    ontology: &LabelOntology,
    _format: AnswerFormat,
    options: &ParserOptions,
) -> Result<ParsedLabel, PromptError> {
    let k = ontology.len();

    let mut paren = parenthesized_integers(raw);
    paren.sort_unstable();
    paren.dedup();
    match paren.len() {
        0 => {}
        1 => {
            let label = check_range(paren[0], k)?;
            return Ok(ParsedLabel {
                label,
                method: ParseMethod::ParenthesizedNumber,
                raw: raw.to_string(),
            });
        }
        _ => {
            return Err(PromptError::MultipleCandidates {
                raw: raw.to_string(),
            })
        }
    }

    let mut bare: Vec<u64> = tokenize(raw)
        .into_iter()
        .filter(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_digit()))
        .map(|t| t.parse::<u64>().unwrap_or(u64::MAX))
        .collect();
    bare.sort_unstable();
    bare.dedup();
    match bare.len() {
        0 => {}
        1 => {
            let label = check_range(bare[0], k)?;
            return Ok(ParsedLabel {
                label,
                method: ParseMethod::BareNumber,
                raw: raw.to_string(),
            });
        }
        _ => {
            return Err(PromptError::MultipleCandidates {
                raw: raw.to_string(),
            })
        }
    }

    let trimmed: &str = raw.trim_matches(|c: char| !c.is_alphanumeric());
    let words: Vec<&str> = trimmed.split_whitespace().collect();
    if !words.is_empty() && words.len() <= 2 {
        let candidate = words.join(" ").to_lowercase();
        if let Some(label) = ontology.id_by_name(&candidate) {
            return Ok(ParsedLabel {
                label,
                method: ParseMethod::ExactName,
                raw: raw.to_string(),
            });
        }
        if options.fuzzy_names {
            let matches: Vec<LabelId> = ontology
                .labels
                .iter()
                .filter(|e| levenshtein(&e.name.trim().to_lowercase(), &candidate) <= 1)
                .map(|e| e.id)
                .collect();
            match matches.len() {
                1 => {
                    return Ok(ParsedLabel {
                        label: matches[0],
                        method: ParseMethod::FuzzyName,
                        raw: raw.to_string(),
                    })
                }
                0 => {}
                _ => {
                    return Err(PromptError::MultipleCandidates {
                        raw: raw.to_string(),
                    })
                }
            }
        }
    }

    Err(PromptError::NoParse {
        raw: raw.to_string(),
    })
}

/// Deterministically selects up to `k` labeled documents as few-shot examples,
/// no label exceeding `per_label_cap`, excerpts pre-truncated to
/// `excerpt_budget` tokens.
pub fn select_fewshot(
    corpus: &Corpus,
    level: LabelLevel,
    k: usize,
    seed: u64,
    per_label_cap: usize,
    excerpt_budget: usize,
) -> Result<Vec<FewShotExample>, PromptError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut candidates: Vec<(&str, LabelId)> = corpus
        .docs()
        .iter()
        .filter_map(|d| d.label_at(level).map(|label| (d.doc_id.as_str(), label)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let mut taken_per_label: std::collections::HashMap<LabelId, usize> =
        std::collections::HashMap::new();
    let mut selected = Vec::new();
    for (doc_id, label) in &candidates {
        if selected.len() == k {
            break;
        }
        let taken = taken_per_label.entry(*label).or_insert(0);
        if *taken >= per_label_cap {
            continue;
        }
        *taken += 1;
        let doc = corpus.get(doc_id).expect("candidate id valid");
        selected.push(FewShotExample {
            excerpt: truncate_tokens(&doc.text, excerpt_budget),
            label: *label,
        });
    }
    if selected.len() < k {
        return Err(PromptError::NotEnoughExamples {
            k,
            available: selected.len(),
        });
    }
    Ok(selected)
}
