use crate::corpus::stopwords::is_stopword;
use crate::error::{Error, Result};
use crate::phoc::{normalize_token, phoc_encode, PhocVector};

/// A preprocessed question: surviving tokens and their PHOC encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub tokens: Vec<String>,
    pub phocs: Vec<PhocVector>,
}

/// Split on whitespace, normalize, drop empty tokens and stopwords.
///
/// If every token is a stopword the filter is skipped and all normalized
/// tokens are kept.
pub fn preprocess_query(text: &str) -> Result<Query> {
    let normalized: Vec<String> = text
        .split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect();
    if normalized.is_empty() {
        return Err(Error::EmptyQuery);
    }
    let content: Vec<String> = normalized.iter().filter(|t| !is_stopword(t)).cloned().collect();
    let tokens = if content.is_empty() { normalized } else { content };
    let phocs = tokens.iter().map(|t| phoc_encode(t)).collect::<Result<_>>()?;
    Ok(Query { tokens, phocs })
}
