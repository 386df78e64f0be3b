//! Attention-based document ranking.
//!
//! A document's score for a query is the mean, over query vectors, of the
//! best cosine similarity against any word in the document.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{Collection, Document, Word};
use crate::error::{Error, Result};
use crate::phoc::{phoc_cosine, PhocVector};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    pub doc_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Attention score of a word sequence against a query.
pub fn attention_score(words: &[Word], query: &[PhocVector]) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::EmptyQuery);
    }
    if words.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty word sequence".into()));
    }
    let total: f64 = query
        .iter()
        .map(|q| {
            words
                .iter()
                .map(|w| phoc_cosine(&w.phoc, q))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / query.len() as f64)
}

pub fn doc_score(document: &Document, query: &[PhocVector]) -> Result<f64> {
    if document.words.is_empty() {
        return Err(Error::EmptyDocument {
            doc_id: document.doc_id.clone(),
        });
    }
    attention_score(&document.words, query)
}

/// Descending score, then ascending doc_id.
pub(crate) fn result_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

/// Score every document and return the best `min(k, |collection|)`.
pub fn rank_collection(collection: &Collection, query: &[PhocVector], k: usize) -> Result<Vec<RetrievalResult>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if collection.is_empty() {
        return Err(Error::EmptyCollection);
    }
    let mut scored: Vec<(&str, f64)> = collection
        .documents()
        .par_iter()
        .map(|d| {
            doc_score(d, query)
                .map(|s| (d.doc_id.as_str(), s))
                .map_err(|e| e.context(format!("document {:?}", d.doc_id)))
        })
        .collect::<Result<_>>()?;
    scored.sort_by(|a, b| result_order(*a, *b));
    Ok(scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (doc_id, score))| RetrievalResult {
            doc_id: doc_id.to_owned(),
            score,
            rank: i + 1,
        })
        .collect())
}
