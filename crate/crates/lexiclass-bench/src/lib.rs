//! Benchmark support: synthetic corpora and lexicons shared by the
//! criterion benches.

use lexiclass_core::corpus::{Document, LabelEntry, LabelOntology};
use lexiclass_core::retrieval::{parse_lexicon, KeywordLexicon};

/// A document of `len` synthetic word tokens.
pub fn synthetic_document(len: usize) -> Document {
    let text = (0..len)
        .map(|i| format!("word{}", i % 97))
        .collect::<Vec<_>>()
        .join(" ");
    Document {
        doc_id: "bench-doc".into(),
        text,
        broad_label: Some(0),
        fine_label: None,
    }
}

/// A `k`-category lexicon over a small shared vocabulary.
pub fn synthetic_lexicon(k: usize) -> KeywordLexicon {
    let ontology = LabelOntology {
        level_name: "broad".into(),
        labels: (0..k)
            .map(|id| LabelEntry {
                id,
                name: format!("Category{id}"),
                gloss: None,
            })
            .collect(),
        fine_to_broad: None,
    };
    let lines: Vec<String> = (0..k)
        .map(|id| {
            let terms: Vec<String> = (0..12)
                .map(|t| {
                    if t % 3 == 0 {
                        format!("word{} word{}", (id * 7 + t) % 97, (id * 11 + t) % 97)
                    } else {
                        format!("word{}", (id * 13 + t) % 97)
                    }
                })
                .collect();
            format!("Category{id}: {}", terms.join(", "))
        })
        .collect();
    parse_lexicon(&lines.join("\n"), &ontology).expect("synthetic lexicon parses")
}
