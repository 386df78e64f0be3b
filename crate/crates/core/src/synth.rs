//! Synthetic collections with planted answers and known ground truth.

use std::collections::{HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::stopwords::{is_stopword, ENGLISH_STOPWORDS};
use crate::corpus::{Collection, Document, Question};
use crate::error::{Error, Result};
use crate::phoc::{normalize_token, phoc_encode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_documents: usize,
    pub num_questions: usize,
    /// Inclusive range.
    pub lines_per_document: (usize, usize),
    /// Inclusive range.
    pub words_per_line: (usize, usize),
    /// Total pseudo-word vocabulary, marker partition included.
    pub vocabulary_size: usize,
    /// Inclusive range.
    pub markers_per_question: (usize, usize),
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            num_documents: 100,
            num_questions: 50,
            lines_per_document: (5, 10),
            words_per_line: (5, 10),
            vocabulary_size: 2000,
            markers_per_question: (1, 3),
            seed: 42,
        }
    }
}

impl GeneratorSpec {
    /// Size of the marker partition: every question gets its own markers.
    pub fn marker_pool_size(&self) -> usize {
        self.num_questions * self.markers_per_question.1
    }

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, (lo, hi): (usize, usize)| {
            if lo == 0 || lo > hi {
                Err(Error::InvalidArgument(format!("{name} range ({lo}, {hi}) must satisfy 0 < min <= max")))
            } else {
                Ok(())
            }
        };
        range("lines_per_document", self.lines_per_document)?;
        range("words_per_line", self.words_per_line)?;
        range("markers_per_question", self.markers_per_question)?;
        if self.num_documents == 0 {
            return Err(Error::InvalidArgument("num_documents must be positive".into()));
        }
        if self.vocabulary_size <= self.marker_pool_size() {
            return Err(Error::InvalidArgument(format!(
                "vocabulary of {} words is too small for {} unique markers plus filler",
                self.vocabulary_size,
                self.marker_pool_size()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub collection: Collection,
    pub questions: Vec<Question>,
    /// Per question: every marker's PHOC occurs in the gold document only.
    pub unique: Vec<bool>,
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwxz";
const VOWELS: &[u8] = b"aeiouy";

/// `n` distinct lowercase pseudo-words, none a stopword, with pairwise
/// distinct PHOCs.
pub fn pseudo_words<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    let mut words = Vec::with_capacity(n);
    let mut seen = HashSet::new();
    while words.len() < n {
        let len = rng.random_range(3..=9);
        let mut vowel = rng.random_bool(0.5);
        let word: String = (0..len)
            .map(|_| {
                let set = if vowel { VOWELS } else { CONSONANTS };
                vowel = !vowel || rng.random_bool(0.2);
                *set.choose(rng).expect("non-empty alphabet") as char
            })
            .collect();
        if is_stopword(&word) {
            continue;
        }
        let bits = phoc_key(&word);
        if seen.insert(bits) {
            words.push(word);
        }
    }
    words
}

fn phoc_key(word: &str) -> Vec<bool> {
    let phoc = phoc_encode(word).expect("pseudo-words are valid tokens");
    phoc.as_slice().iter().map(|&v| v > 0.5).collect()
}

fn filler_stopwords() -> Vec<&'static str> {
    ENGLISH_STOPWORDS
        .iter()
        .copied()
        .filter(|w| w.chars().all(|c| c.is_ascii_lowercase()))
        .collect()
}

struct Plant {
    doc: usize,
    start: usize,
    markers: Vec<String>,
}

pub fn generate(spec: &GeneratorSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut vocab = pseudo_words(spec.vocabulary_size, &mut rng);
    let filler = vocab.split_off(spec.marker_pool_size());
    let mut markers = vocab.into_iter();

    let mut docs: Vec<Vec<Vec<String>>> = (0..spec.num_documents)
        .map(|_| {
            let lines = rng.random_range(spec.lines_per_document.0..=spec.lines_per_document.1);
            (0..lines)
                .map(|_| {
                    let words = rng.random_range(spec.words_per_line.0..=spec.words_per_line.1);
                    (0..words).map(|_| filler.choose(&mut rng).expect("filler").clone()).collect()
                })
                .collect()
        })
        .collect();
    let mut used: Vec<Vec<bool>> = docs.iter().map(|d| vec![false; d.iter().map(Vec::len).sum()]).collect();

    let mut plants = Vec::with_capacity(spec.num_questions);
    for q in 0..spec.num_questions {
        let m = rng.random_range(spec.markers_per_question.0..=spec.markers_per_question.1);
        let mut doc_order: Vec<usize> = (0..spec.num_documents).collect();
        doc_order.shuffle(&mut rng);
        let slot = doc_order.into_iter().find_map(|d| {
            let free = &used[d];
            let starts: Vec<usize> = (0..free.len().saturating_sub(m - 1))
                .filter(|&s| free[s..s + m].iter().all(|u| !u))
                .collect();
            starts.choose(&mut rng).map(|&s| (d, s))
        });
        let (doc, start) = slot.ok_or_else(|| {
            Error::InvalidArgument(format!("no room left to plant {m} markers for question {q}"))
        })?;
        used[doc][start..start + m].iter_mut().for_each(|u| *u = true);
        let planted: Vec<String> = markers.by_ref().take(m).collect();
        let mut pos = 0;
        for line in docs[doc].iter_mut() {
            for word in line.iter_mut() {
                if (start..start + m).contains(&pos) {
                    *word = planted[pos - start].clone();
                }
                pos += 1;
            }
        }
        plants.push(Plant { doc, start, markers: planted });
    }

    let documents = docs
        .iter()
        .enumerate()
        .map(|(i, lines)| Document::from_lines(doc_id(i), lines))
        .collect::<Result<Vec<_>>>()?;
    let collection = Collection::new(documents)?;

    let stop = filler_stopwords();
    let questions = plants
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let prefix = rng.random_range(1..=3);
            let suffix = rng.random_range(0..=2);
            let mut tokens: Vec<&str> = (0..prefix).map(|_| *stop.choose(&mut rng).expect("stopwords")).collect();
            tokens.extend(p.markers.iter().map(String::as_str));
            tokens.extend((0..suffix).map(|_| *stop.choose(&mut rng).expect("stopwords")));
            let text = format!("{}?", tokens.join(" "));
            let span = (p.start, p.start + p.markers.len() - 1);
            Question::new(&collection, format!("q{i:04}"), text, doc_id(p.doc), span)
        })
        .collect::<Result<Vec<_>>>()?;
    let unique = markers_unique(&collection, &questions);
    Ok(SyntheticData {
        collection,
        questions,
        unique,
    })
}

fn doc_id(i: usize) -> String {
    format!("doc{i:04}")
}

/// For each question, whether every non-stopword query token occurs, by
/// exact PHOC, in its gold document and in no other.
pub fn markers_unique(collection: &Collection, questions: &[Question]) -> Vec<bool> {
    let mut owners: HashMap<Vec<bool>, HashSet<&str>> = HashMap::new();
    for doc in collection.documents() {
        for word in &doc.words {
            let key = word.phoc.as_slice().iter().map(|&v| v > 0.5).collect();
            owners.entry(key).or_default().insert(doc.doc_id.as_str());
        }
    }
    questions
        .iter()
        .map(|q| {
            q.query.tokens.iter().filter(|t| !is_stopword(&normalize_token(t))).all(|t| {
                owners
                    .get(&phoc_key(t))
                    .is_some_and(|docs| docs.len() == 1 && docs.contains(q.gold_doc_id.as_str()))
            })
        })
        .collect()
}
