//! Segmented document collections, questions and their JSON formats.

mod corrupt;
mod query;
pub mod stopwords;

use std::collections::HashMap;
use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phoc::{normalize_token, phoc_encode, PhocVector};

pub use corrupt::corrupt_phoc;
pub use query::{preprocess_query, Query};

#[derive(Debug, Clone, PartialEq)]
pub struct Word {
    pub word_index: usize,
    pub line_index: usize,
    /// Normalized transcription (`[a-z0-9]*`).
    pub transcription: String,
    pub phoc: PhocVector,
    /// `[x, y, w, h]` in pixels.
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Line {
    pub line_index: usize,
    pub start_word: usize,
    pub end_word: usize,
}

impl Line {
    pub fn words(&self) -> RangeInclusive<usize> {
        self.start_word..=self.end_word
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub words: Vec<Word>,
    pub lines: Vec<Line>,
}

impl Document {
    /// Build a document from per-line token lists. Tokens are normalized.
    pub fn from_lines<S: AsRef<str>>(doc_id: impl Into<String>, lines: &[Vec<S>]) -> Result<Self> {
        let doc_id = doc_id.into();
        let mut raw = RawDocument {
            doc_id: doc_id.clone(),
            lines: Vec::with_capacity(lines.len()),
            words: Vec::new(),
        };
        for (line_index, tokens) in lines.iter().enumerate() {
            if tokens.is_empty() {
                return Err(Error::InvalidLine {
                    doc_id,
                    line_index,
                    reason: "line has no words".into(),
                });
            }
            let start_word = raw.words.len();
            for t in tokens {
                raw.words.push(RawWord {
                    word_index: raw.words.len(),
                    line_index,
                    text: t.as_ref().to_owned(),
                    bbox: None,
                });
            }
            raw.lines.push(RawLine {
                line_index,
                start_word,
                end_word: raw.words.len() - 1,
            });
        }
        Document::from_raw(raw)
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn line_of_word(&self, word_index: usize) -> Option<usize> {
        self.words.get(word_index).map(|w| w.line_index)
    }

    /// Word index range covered by the inclusive line span.
    pub fn word_range_of_lines(&self, start_line: usize, end_line: usize) -> Result<RangeInclusive<usize>> {
        if start_line > end_line || end_line >= self.lines.len() {
            return Err(Error::InvalidSpan {
                what: "line span",
                start: start_line,
                end: end_line,
                len: self.lines.len(),
            });
        }
        Ok(self.lines[start_line].start_word..=self.lines[end_line].end_word)
    }

    /// Inclusive line span covering the inclusive word span.
    pub fn line_span_of_words(&self, start_word: usize, end_word: usize) -> Result<(usize, usize)> {
        if start_word > end_word || end_word >= self.words.len() {
            return Err(Error::InvalidSpan {
                what: "word span",
                start: start_word,
                end: end_word,
                len: self.words.len(),
            });
        }
        Ok((self.words[start_word].line_index, self.words[end_word].line_index))
    }

    fn from_raw(raw: RawDocument) -> Result<Self> {
        let doc_id = raw.doc_id;
        if raw.words.is_empty() {
            return Err(Error::EmptyDocument { doc_id });
        }
        let line_err = |line_index: usize, reason: String| Error::InvalidLine {
            doc_id: doc_id.clone(),
            line_index,
            reason,
        };
        let mut expected_start = 0;
        for (pos, line) in raw.lines.iter().enumerate() {
            if line.line_index != pos {
                return Err(line_err(
                    line.line_index,
                    format!("line_index out of order (expected {pos})"),
                ));
            }
            if line.start_word > line.end_word {
                return Err(line_err(line.line_index, "start_word > end_word".into()));
            }
            if line.start_word < expected_start {
                return Err(line_err(line.line_index, "overlaps the previous line".into()));
            }
            if line.start_word > expected_start {
                return Err(line_err(
                    line.line_index,
                    format!("gap before line: word {expected_start} is not covered"),
                ));
            }
            expected_start = line.end_word + 1;
        }
        if expected_start != raw.words.len() {
            return Err(line_err(
                raw.lines.len().saturating_sub(1),
                format!(
                    "lines cover {expected_start} words but the document has {}",
                    raw.words.len()
                ),
            ));
        }

        let mut words = Vec::with_capacity(raw.words.len());
        for (pos, w) in raw.words.into_iter().enumerate() {
            let word_err = |reason: String| Error::InvalidWord {
                doc_id: doc_id.clone(),
                word_index: w.word_index,
                reason,
            };
            if w.word_index != pos {
                return Err(word_err(format!("word_index out of order (expected {pos})")));
            }
            let line = raw
                .lines
                .get(w.line_index)
                .ok_or_else(|| word_err(format!("line_index {} is not covered by any line", w.line_index)))?;
            if !(line.start_word..=line.end_word).contains(&pos) {
                return Err(word_err(format!(
                    "line_index {} does not contain this word",
                    w.line_index
                )));
            }
            let transcription = normalize_token(&w.text);
            let phoc = phoc_encode(&transcription)?;
            words.push(Word {
                word_index: pos,
                line_index: w.line_index,
                transcription,
                phoc,
                bbox: w.bbox,
            });
        }
        let lines = raw
            .lines
            .into_iter()
            .map(|l| Line {
                line_index: l.line_index,
                start_word: l.start_word,
                end_word: l.end_word,
            })
            .collect();
        Ok(Document { doc_id, words, lines })
    }

    fn to_raw(&self) -> RawDocument {
        RawDocument {
            doc_id: self.doc_id.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| RawLine {
                    line_index: l.line_index,
                    start_word: l.start_word,
                    end_word: l.end_word,
                })
                .collect(),
            words: self
                .words
                .iter()
                .map(|w| RawWord {
                    word_index: w.word_index,
                    line_index: w.line_index,
                    text: w.transcription.clone(),
                    bbox: w.bbox,
                })
                .collect(),
        }
    }
}

/// Documents addressable by id, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    documents: Vec<Document>,
    index: HashMap<String, usize>,
}

impl Collection {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut index = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            if index.insert(d.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateDocId {
                    doc_id: d.doc_id.clone(),
                });
            }
        }
        Ok(Collection { documents, index })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, CollectionParseError> {
        let raw: RawCollection = serde_json::from_str(s).map_err(CollectionParseError::Json)?;
        let docs = raw
            .documents
            .into_iter()
            .map(Document::from_raw)
            .collect::<Result<Vec<_>>>()
            .map_err(CollectionParseError::Invalid)?;
        Collection::new(docs).map_err(CollectionParseError::Invalid)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawCollection {
            documents: self.documents.iter().map(Document::to_raw).collect(),
        };
        serde_json::to_string_pretty(&raw).expect("collection serialization cannot fail")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Copy of the collection with every word PHOC passed through
    /// [`corrupt_phoc`], drawn in document then word order from one stream.
    pub fn with_corruption(&self, flip_rate: f64, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        if flip_rate == 0.0 {
            corrupt::check_rate(flip_rate)?;
            return Ok(out);
        }
        for doc in &mut out.documents {
            for w in &mut doc.words {
                w.phoc = corrupt_phoc(&w.phoc, flip_rate, &mut rng)?;
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub enum CollectionParseError {
    Json(serde_json::Error),
    Invalid(Error),
}

/// Read and validate a collection file.
pub fn load_collection(path: impl AsRef<Path>) -> Result<Collection> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Collection::from_json_str(&text).map_err(|e| match e {
        CollectionParseError::Json(source) => Error::Json {
            path: path.to_owned(),
            source,
        },
        CollectionParseError::Invalid(err) => err.context(path.display().to_string()),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Question {
    pub question_id: String,
    pub text: String,
    pub query: Query,
    pub gold_doc_id: String,
    pub gold_word_span: (usize, usize),
    pub gold_line_span: (usize, usize),
}

impl Question {
    /// Preprocess `text` and resolve the gold spans against `collection`.
    pub fn new(
        collection: &Collection,
        question_id: impl Into<String>,
        text: impl Into<String>,
        gold_doc_id: impl Into<String>,
        gold_word_span: (usize, usize),
    ) -> Result<Self> {
        let question_id = question_id.into();
        let text = text.into();
        let gold_doc_id = gold_doc_id.into();
        let invalid = |reason: String| Error::InvalidQuestion {
            question_id: question_id.clone(),
            reason,
        };
        let query = preprocess_query(&text).map_err(|e| invalid(e.to_string()))?;
        let doc = collection
            .get(&gold_doc_id)
            .ok_or_else(|| invalid(format!("unknown gold_doc_id {gold_doc_id:?}")))?;
        let gold_line_span = doc
            .line_span_of_words(gold_word_span.0, gold_word_span.1)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(Question {
            question_id,
            text,
            query,
            gold_doc_id,
            gold_word_span,
            gold_line_span,
        })
    }
}

pub fn questions_from_json_str(collection: &Collection, s: &str) -> std::result::Result<Vec<Question>, CollectionParseError> {
    let raw: RawQuestions = serde_json::from_str(s).map_err(CollectionParseError::Json)?;
    let mut seen = HashMap::new();
    raw.questions
        .into_iter()
        .map(|q| {
            if seen.insert(q.question_id.clone(), ()).is_some() {
                return Err(CollectionParseError::Invalid(Error::InvalidQuestion {
                    question_id: q.question_id,
                    reason: "duplicate question_id".into(),
                }));
            }
            Question::new(
                collection,
                q.question_id,
                q.text,
                q.gold_doc_id,
                (q.gold_start_word, q.gold_end_word),
            )
            .map_err(CollectionParseError::Invalid)
        })
        .collect()
}

pub fn questions_to_json_string(questions: &[Question]) -> String {
    let raw = RawQuestions {
        questions: questions
            .iter()
            .map(|q| RawQuestion {
                question_id: q.question_id.clone(),
                text: q.text.clone(),
                gold_doc_id: q.gold_doc_id.clone(),
                gold_start_word: q.gold_word_span.0,
                gold_end_word: q.gold_word_span.1,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("question serialization cannot fail")
}

pub fn load_questions(path: impl AsRef<Path>, collection: &Collection) -> Result<Vec<Question>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    questions_from_json_str(collection, &text).map_err(|e| match e {
        CollectionParseError::Json(source) => Error::Json {
            path: path.to_owned(),
            source,
        },
        CollectionParseError::Invalid(err) => err.context(path.display().to_string()),
    })
}

pub fn write_questions(path: impl AsRef<Path>, questions: &[Question]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, questions_to_json_string(questions)).map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct RawCollection {
    documents: Vec<RawDocument>,
}

#[derive(Serialize, Deserialize)]
struct RawDocument {
    doc_id: String,
    lines: Vec<RawLine>,
    words: Vec<RawWord>,
}

#[derive(Serialize, Deserialize)]
struct RawLine {
    line_index: usize,
    start_word: usize,
    end_word: usize,
}

#[derive(Serialize, Deserialize)]
struct RawWord {
    word_index: usize,
    line_index: usize,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bbox: Option<[f64; 4]>,
}

#[derive(Serialize, Deserialize)]
struct RawQuestions {
    questions: Vec<RawQuestion>,
}

#[derive(Serialize, Deserialize)]
struct RawQuestion {
    question_id: String,
    text: String,
    gold_doc_id: String,
    gold_start_word: usize,
    gold_end_word: usize,
}
