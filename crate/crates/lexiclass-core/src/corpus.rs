//! Corpus loading, validation, splitting, and label profiling.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense zero-based label identifier.
pub type LabelId = usize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse failure at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate doc_id '{0}'")]
    DuplicateDocId(String),
    #[error("document '{0}' has empty text")]
    EmptyText(String),
    #[error("document '{doc_id}': {level} label {label} out of range (ontology has {k} labels)")]
    LabelOutOfRange {
        doc_id: String,
        level: LabelLevel,
        label: LabelId,
        k: usize,
    },
    #[error("document '{doc_id}' has no {level} label")]
    Unlabeled { doc_id: String, level: LabelLevel },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has {0} documents; at least 3 are required to split")]
    TooSmallToSplit(usize),
    #[error("split ratios must be positive and sum to 1.0 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("invalid ontology: {0}")]
    BadOntology(String),
}

/// One level of the two-level category scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelLevel {
    Broad,
    Fine,
}

impl std::fmt::Display for LabelLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelLevel::Broad => write!(f, "broad"),
            LabelLevel::Fine => write!(f, "fine"),
        }
    }
}

impl std::str::FromStr for LabelLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "broad" => Ok(LabelLevel::Broad),
            "fine" => Ok(LabelLevel::Fine),
            other => Err(format!("unknown label level '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelEntry {
    pub id: LabelId,
    pub name: String,
    /// Optional one-line description rendered in glossed label blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gloss: Option<String>,
}

/// A label scheme: dense zero-based ids with unique names, optionally mapping
/// fine ids onto broad ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelOntology {
    pub level_name: String,
    pub labels: Vec<LabelEntry>,
    #[serde(default)]
    pub fine_to_broad: Option<BTreeMap<String, LabelId>>,
}

impl LabelOntology {
    pub fn from_json_file(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ontology: LabelOntology =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
        ontology.validate()?;
        Ok(ontology)
    }

    /// Checks the ontology invariants: dense zero-based ids, unique non-empty
    /// names after case-folding, and a total fine-to-broad map when present.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let k = self.labels.len();
        if k == 0 {
            return Err(CorpusError::BadOntology("no labels".into()));
        }
        let mut seen_ids = vec![false; k];
        let mut seen_names = HashSet::new();
        for entry in &self.labels {
            if entry.id >= k {
                return Err(CorpusError::BadOntology(format!(
                    "label id {} not dense in 0..{k}",
                    entry.id
                )));
            }
            if seen_ids[entry.id] {
                return Err(CorpusError::BadOntology(format!(
                    "duplicate label id {}",
                    entry.id
                )));
            }
            seen_ids[entry.id] = true;
            let folded = entry.name.trim().to_lowercase();
            if folded.is_empty() {
                return Err(CorpusError::BadOntology(format!(
                    "label {} has an empty name",
                    entry.id
                )));
            }
            if !seen_names.insert(folded) {
                return Err(CorpusError::BadOntology(format!(
                    "duplicate label name '{}'",
                    entry.name
                )));
            }
        }
        if let Some(map) = &self.fine_to_broad {
            for id in 0..k {
                if !map.contains_key(&id.to_string()) {
                    return Err(CorpusError::BadOntology(format!(
                        "fine_to_broad missing fine id {id}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks that every fine_to_broad image is a valid id in the broad
    /// ontology. Totality over fine ids is enforced by [`validate`].
    ///
    /// [`validate`]: LabelOntology::validate
    pub fn validate_fine_to_broad(&self, broad: &LabelOntology) -> Result<(), CorpusError> {
        if let Some(map) = &self.fine_to_broad {
            for (fine, image) in map {
                if *image >= broad.len() {
                    return Err(CorpusError::BadOntology(format!(
                        "fine_to_broad maps fine id {fine} to invalid broad id {image}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name_of(&self, id: LabelId) -> Option<&str> {
        self.labels
            .iter()
            .find(|l| l.id == id)
            .map(|l| l.name.as_str())
    }

    /// Case-insensitive, whitespace-trimmed name lookup.
    pub fn id_by_name(&self, name: &str) -> Option<LabelId> {
        let folded = name.trim().to_lowercase();
        self.labels
            .iter()
            .find(|l| l.name.trim().to_lowercase() == folded)
            .map(|l| l.id)
    }

    /// Labels sorted by id.
    pub fn entries_in_order(&self) -> Vec<&LabelEntry> {
        let mut v: Vec<&LabelEntry> = self.labels.iter().collect();
        v.sort_by_key(|l| l.id);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub broad_label: Option<LabelId>,
    #[serde(default)]
    pub fine_label: Option<LabelId>,
}

impl Document {
    pub fn label_at(&self, level: LabelLevel) -> Option<LabelId> {
        match level {
            LabelLevel::Broad => self.broad_label,
            LabelLevel::Fine => self.fine_label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(format!("unknown corpus format '{other}'")),
        }
    }
}

/// An immutable, order-preserving collection of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus from documents, enforcing id uniqueness and non-empty
    /// text. Row order is preserved.
    pub fn new(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for doc in &docs {
            if doc.text.is_empty() {
                return Err(CorpusError::EmptyText(doc.doc_id.clone()));
            }
            if !seen.insert(doc.doc_id.clone()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Corpus { docs })
    }

    pub fn load(path: &Path, format: CorpusFormat) -> Result<Self, CorpusError> {
        match format {
            CorpusFormat::Jsonl => Self::load_jsonl(path),
            CorpusFormat::Csv => Self::load_csv(path),
        }
    }

    fn load_jsonl(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut docs = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(docs)
    }

    fn load_csv(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(BufReader::new(file));
        let headers = reader
            .headers()
            .map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: 1,
                message: e.to_string(),
            })?
            .clone();
        let expected = ["doc_id", "text", "broad_label", "fine_label"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(CorpusError::Parse {
                path: path.display().to_string(),
                line: 1,
                message: format!("expected header doc_id,text,broad_label,fine_label; got {headers:?}"),
            });
        }
        let mut docs = Vec::new();
        for (idx, record) in reader.deserialize::<Document>().enumerate() {
            let doc = record.map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                line: idx + 2,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        Self::new(docs)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let mut file = File::create(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        for doc in &self.docs {
            let line = serde_json::to_string(doc).expect("document serializes");
            writeln!(file, "{line}").map_err(|source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(())
    }

    /// Checks every present label id at `level` against the ontology.
    pub fn validate_labels(
        &self,
        level: LabelLevel,
        ontology: &LabelOntology,
    ) -> Result<(), CorpusError> {
        let k = ontology.len();
        for doc in &self.docs {
            if let Some(label) = doc.label_at(level) {
                if label >= k {
                    return Err(CorpusError::LabelOutOfRange {
                        doc_id: doc.doc_id.clone(),
                        level,
                        label,
                        k,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }

    /// Per-label document counts at `level` over a `k`-label ontology.
    /// Absent labels report 0. Every document must carry a label.
    pub fn label_histogram(&self, level: LabelLevel, k: usize) -> Result<Vec<usize>, CorpusError> {
        if self.docs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut counts = vec![0usize; k];
        for doc in &self.docs {
            let label = doc.label_at(level).ok_or_else(|| CorpusError::Unlabeled {
                doc_id: doc.doc_id.clone(),
                level,
            })?;
            if label >= k {
                return Err(CorpusError::LabelOutOfRange {
                    doc_id: doc.doc_id.clone(),
                    level,
                    label,
                    k,
                });
            }
            counts[label] += 1;
        }
        Ok(counts)
    }
}

/// A reproducible three-way partition of a corpus by doc_id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

/// Largest-remainder apportionment of `total` into three parts by `ratios`.
fn apportion(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut sizes: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    // descending fractional remainder, ties to the earlier part
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        sizes[order[i % 3]] += 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Splits a corpus into train/validation/test via a seeded shuffle followed by
/// largest-remainder apportionment. Identical inputs reproduce identical sets.
pub fn split_corpus(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<CorpusSplit, CorpusError> {
    if ratios.iter().any(|r| *r <= 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let n = corpus.len();
    if n < 3 {
        return Err(CorpusError::TooSmallToSplit(n));
    }
    let sizes = apportion(n, ratios);
    let mut ids: Vec<&str> = corpus.docs().iter().map(|d| d.doc_id.as_str()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let train: BTreeSet<String> = ids[..sizes[0]].iter().map(|s| s.to_string()).collect();
    let validation: BTreeSet<String> = ids[sizes[0]..sizes[0] + sizes[1]]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let test: BTreeSet<String> = ids[sizes[0] + sizes[1]..]
        .iter()
        .map(|s| s.to_string())
        .collect();
    Ok(CorpusSplit {
        train,
        validation,
        test,
        seed,
        ratios,
    })
}
