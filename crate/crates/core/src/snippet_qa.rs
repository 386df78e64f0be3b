//! Snippet-level answer extraction: slide a two-line window over the
//! document, score each window with the retrieval attention score, and
//! answer with the best window.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::phoc::PhocVector;
use crate::retriever::attention_score;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub start_line: usize,
    pub end_line: usize,
    pub words: RangeInclusive<usize>,
}

/// A predicted answer region. `start_line..=end_line` is always set; the
/// word span is present for word-level models.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerPrediction {
    pub doc_id: String,
    pub start_line: usize,
    pub end_line: usize,
    pub confidence: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_span: Option<(usize, usize)>,
}

pub fn make_snippets(document: &Document) -> Vec<Snippet> {
    let n = document.lines.len();
    if n == 0 {
        return Vec::new();
    }
    let windows = n.saturating_sub(1).max(1);
    (0..windows)
        .map(|start| {
            let end = (start + 1).min(n - 1);
            Snippet {
                start_line: start,
                end_line: end,
                words: document.lines[start].start_word..=document.lines[end].end_word,
            }
        })
        .collect()
}

/// Per-snippet attention scores, in snippet order.
pub fn snippet_scores(document: &Document, query: &[PhocVector]) -> Result<Vec<(Snippet, f64)>> {
    if document.words.is_empty() {
        return Err(Error::EmptyDocument {
            doc_id: document.doc_id.clone(),
        });
    }
    make_snippets(document)
        .into_iter()
        .map(|s| {
            let score = attention_score(&document.words[s.words.clone()], query)?;
            Ok((s, score))
        })
        .collect()
}

/// Best two-line snippet; ties go to the earlier snippet.
pub fn answer_attention(document: &Document, query: &[PhocVector]) -> Result<AnswerPrediction> {
    let scored = snippet_scores(document, query)?;
    let mut best: Option<&(Snippet, f64)> = None;
    for cand in &scored {
        if best.is_none_or(|b| cand.1 > b.1) {
            best = Some(cand);
        }
    }
    let (snippet, confidence) = best.ok_or_else(|| Error::EmptyDocument {
        doc_id: document.doc_id.clone(),
    })?;
    Ok(AnswerPrediction {
        doc_id: document.doc_id.clone(),
        start_line: snippet.start_line,
        end_line: snippet.end_line,
        confidence: *confidence,
        word_span: None,
    })
}
