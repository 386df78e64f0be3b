//! Answer-box metrics, retrieval accuracy and the end-to-end pipeline:
//! rank the collection, answer inside each of the top `k` documents, keep
//! the most confident answer, score it against the gold span.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bidaf::BidafModel;
use crate::corpus::{Collection, Document, Query, Question};
use crate::error::{Error, Result};
use crate::retriever::{rank_collection, RetrievalResult};
use crate::snippet_qa::{answer_attention, AnswerPrediction};

pub const DEFAULT_THRESHOLD: f64 = 0.8;
pub const DEFAULT_K: usize = 5;

/// Word-id sets of one document: SB holds the gold answer words, LB the
/// gold lines widened by one line on each side, AB the predicted lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerBoxes {
    sb: BTreeSet<usize>,
    lb: BTreeSet<usize>,
    ab: BTreeSet<usize>,
}

impl AnswerBoxes {
    /// Requires `sb ⊆ lb`.
    pub fn new(sb: BTreeSet<usize>, lb: BTreeSet<usize>, ab: BTreeSet<usize>) -> Result<Self> {
        if !sb.is_subset(&lb) {
            return Err(Error::InvalidArgument("small box must be contained in the large box".into()));
        }
        Ok(AnswerBoxes { sb, lb, ab })
    }

    pub fn small(&self) -> &BTreeSet<usize> {
        &self.sb
    }

    pub fn large(&self) -> &BTreeSet<usize> {
        &self.lb
    }

    pub fn answer(&self) -> &BTreeSet<usize> {
        &self.ab
    }
}

pub fn build_boxes(document: &Document, gold_word_span: (usize, usize), predicted_line_span: (usize, usize)) -> Result<AnswerBoxes> {
    let (gs, ge) = gold_word_span;
    let (first, last) = document.line_span_of_words(gs, ge)?;
    let lb_lines = (first.saturating_sub(1), (last + 1).min(document.num_lines() - 1));
    let lb = document.word_range_of_lines(lb_lines.0, lb_lines.1)?.collect();
    let ab = document
        .word_range_of_lines(predicted_line_span.0, predicted_line_span.1)?
        .collect();
    AnswerBoxes::new((gs..=ge).collect(), lb, ab)
}

/// Double inclusion score: `|AB∩SB|/|SB| · |AB∩LB|/|AB|`, zero for an
/// empty answer box.
pub fn dis(boxes: &AnswerBoxes) -> Result<f64> {
    if boxes.sb.is_empty() {
        return Err(Error::InvalidArgument("small box is empty".into()));
    }
    if boxes.ab.is_empty() {
        return Ok(0.0);
    }
    let recall = boxes.ab.intersection(&boxes.sb).count() as f64 / boxes.sb.len() as f64;
    let precision = boxes.ab.intersection(&boxes.lb).count() as f64 / boxes.ab.len() as f64;
    Ok(recall * precision)
}

/// Fraction of questions whose gold document is among the first `k`
/// entries of its result list.
pub fn top_k_accuracy(collection: &Collection, results: &[Vec<RetrievalResult>], questions: &[Question], k: usize) -> Result<f64> {
    if results.len() != questions.len() {
        return Err(Error::Shape {
            context: "result lists per question",
            expected: questions.len(),
            got: results.len(),
        });
    }
    if questions.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (q, list) in questions.iter().zip(results) {
        if collection.get(&q.gold_doc_id).is_none() {
            return Err(Error::UnknownDocument {
                doc_id: q.gold_doc_id.clone(),
            }
            .context(format!("question {:?}", q.question_id)));
        }
        if list.iter().take(k).any(|r| r.doc_id == q.gold_doc_id) {
            hits += 1;
        }
    }
    Ok(hits as f64 / questions.len() as f64)
}

/// Answers a question inside one document.
pub trait QaModel: Sync {
    fn answer(&self, document: &Document, query: &Query) -> Result<AnswerPrediction>;
    fn model_id(&self) -> String;
}

/// Best two-line snippet by attention score.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttentionQa;

impl QaModel for AttentionQa {
    fn answer(&self, document: &Document, query: &Query) -> Result<AnswerPrediction> {
        answer_attention(document, &query.phocs)
    }

    fn model_id(&self) -> String {
        "attention".into()
    }
}

impl QaModel for BidafModel {
    fn answer(&self, document: &Document, query: &Query) -> Result<AnswerPrediction> {
        self.predict(document, query)
    }

    fn model_id(&self) -> String {
        format!("bidaf-{}", self.mode())
    }
}

/// A per-document answer and the retrieval rank of its document.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub rank: usize,
    pub prediction: AnswerPrediction,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.prediction
        .confidence
        .total_cmp(&a.prediction.confidence)
        .then(a.rank.cmp(&b.rank))
        .then(a.prediction.start_line.cmp(&b.prediction.start_line))
}

/// Highest confidence; ties go to the better rank, then the smaller start line.
pub fn select_prediction(candidates: &[Candidate]) -> Option<&Candidate> {
    candidates.iter().min_by(|a, b| candidate_order(a, b))
}

fn answer_ranked<M: QaModel + ?Sized>(collection: &Collection, ranking: &[RetrievalResult], query: &Query, model: &M) -> Result<AnswerPrediction> {
    let candidates = ranking
        .iter()
        .map(|r| {
            let doc = collection.get(&r.doc_id).ok_or_else(|| Error::UnknownDocument {
                doc_id: r.doc_id.clone(),
            })?;
            let prediction = model
                .answer(doc, query)
                .map_err(|e| e.context(format!("document {:?}", r.doc_id)))?;
            Ok(Candidate { rank: r.rank, prediction })
        })
        .collect::<Result<Vec<_>>>()?;
    select_prediction(&candidates)
        .map(|c| c.prediction.clone())
        .ok_or(Error::EmptyCollection)
}

/// Retrieve the top `k` documents and return the most confident answer.
pub fn answer_collection<M: QaModel + ?Sized>(collection: &Collection, query: &Query, model: &M, k: usize) -> Result<AnswerPrediction> {
    let ranking = rank_collection(collection, &query.phocs, k)?;
    answer_ranked(collection, &ranking, query, model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub model: String,
    pub k: usize,
    pub threshold: f64,
    pub seed: u64,
    pub flip_rate: f64,
    pub num_questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    pub dis: f64,
    pub predicted_doc: String,
    /// Predicted line span.
    pub start: usize,
    pub end: usize,
    pub confidence: f64,
    /// 1-based rank of the gold document in the full ranking.
    pub retrieval_rank_of_gold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub mean_dis: f64,
    pub top5: f64,
}

impl Summary {
    pub fn from_outcomes(outcomes: &[QuestionOutcome], threshold: f64) -> Self {
        if outcomes.is_empty() {
            return Summary {
                accuracy: 0.0,
                mean_dis: 0.0,
                top5: 0.0,
            };
        }
        let n = outcomes.len() as f64;
        let correct = outcomes.iter().filter(|o| o.dis > threshold).count();
        let top5 = outcomes
            .iter()
            .filter(|o| o.retrieval_rank_of_gold.is_some_and(|r| r <= 5))
            .count();
        Summary {
            accuracy: correct as f64 / n,
            mean_dis: outcomes.iter().map(|o| o.dis).sum::<f64>() / n,
            top5: top5 as f64 / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: EvalMeta,
    pub per_question: Vec<QuestionOutcome>,
    pub summary: Summary,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub threshold: f64,
    /// Recorded in the report only.
    pub seed: u64,
    /// Recorded in the report only; corruption happens when loading.
    pub flip_rate: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            seed: 42,
            flip_rate: 0.0,
        }
    }
}

fn evaluate_question<M: QaModel + ?Sized>(collection: &Collection, question: &Question, model: &M, k: usize) -> Result<QuestionOutcome> {
    let gold = collection.get(&question.gold_doc_id).ok_or_else(|| Error::UnknownDocument {
        doc_id: question.gold_doc_id.clone(),
    })?;
    let ranking = rank_collection(collection, &question.query.phocs, collection.len())?;
    let rank_of_gold = ranking.iter().find(|r| r.doc_id == question.gold_doc_id).map(|r| r.rank);
    let top = &ranking[..k.min(ranking.len())];
    let prediction = answer_ranked(collection, top, &question.query, model)?;
    let dis = if prediction.doc_id == gold.doc_id {
        let boxes = build_boxes(gold, question.gold_word_span, (prediction.start_line, prediction.end_line))?;
        dis(&boxes)?
    } else {
        0.0
    };
    Ok(QuestionOutcome {
        question_id: question.question_id.clone(),
        dis,
        predicted_doc: prediction.doc_id,
        start: prediction.start_line,
        end: prediction.end_line,
        confidence: prediction.confidence,
        retrieval_rank_of_gold: rank_of_gold,
    })
}

pub fn evaluate<M: QaModel + ?Sized>(collection: &Collection, questions: &[Question], model: &M, options: EvalOptions) -> Result<EvalReport> {
    if options.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let per_question = questions
        .par_iter()
        .map(|q| evaluate_question(collection, q, model, options.k).map_err(|e| e.context(format!("question {:?}", q.question_id))))
        .collect::<Result<Vec<_>>>()?;
    let summary = Summary::from_outcomes(&per_question, options.threshold);
    Ok(EvalReport {
        meta: EvalMeta {
            model: model.model_id(),
            k: options.k,
            threshold: options.threshold,
            seed: options.seed,
            flip_rate: options.flip_rate,
            num_questions: questions.len(),
        },
        per_question,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::preprocess_query;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(r: std::ops::RangeInclusive<usize>) -> BTreeSet<usize> {
        r.collect()
    }

    /// Five lines of three words: line `l` holds words `3l..=3l+2`.
    fn grid() -> Document {
        let lines: Vec<Vec<String>> = (0..5).map(|l| (0..3).map(|w| format!("w{l}x{w}")).collect()).collect();
        Document::from_lines("d", &lines).unwrap()
    }

    #[test]
    fn boxes_middle_line() {
        let b = build_boxes(&grid(), (6, 8), (2, 2)).unwrap();
        assert_eq!(b.small(), &set(6..=8));
        assert_eq!(b.large(), &set(3..=11));
        assert_eq!(b.answer(), &set(6..=8));
        assert_eq!(dis(&b).unwrap(), 1.0);
    }

    #[test]
    fn boxes_clamp_at_edges() {
        let top = build_boxes(&grid(), (1, 1), (0, 0)).unwrap();
        assert_eq!(top.large(), &set(0..=5));
        let bottom = build_boxes(&grid(), (13, 14), (4, 4)).unwrap();
        assert_eq!(bottom.large(), &set(9..=14));
    }

    #[test]
    fn boxes_straddling_lines() {
        let b = build_boxes(&grid(), (8, 9), (0, 0)).unwrap();
        assert_eq!(b.large(), &set(3..=14));
        assert_eq!(dis(&b).unwrap(), 0.0);
    }

    #[test]
    fn boxes_reject_bad_spans() {
        assert!(build_boxes(&grid(), (3, 2), (0, 0)).is_err());
        assert!(build_boxes(&grid(), (0, 15), (0, 0)).is_err());
        assert!(build_boxes(&grid(), (0, 0), (1, 5)).is_err());
        assert!(build_boxes(&grid(), (0, 0), (2, 1)).is_err());
    }

    #[test]
    fn dis_examples() {
        let boxes = |sb: &[usize], lb: &[usize], ab: &[usize]| {
            AnswerBoxes::new(sb.iter().copied().collect(), lb.iter().copied().collect(), ab.iter().copied().collect()).unwrap()
        };
        assert_eq!(dis(&boxes(&[1, 2], &[0, 1, 2, 3, 4, 5], &[2, 3, 4, 5])).unwrap(), 0.5);
        assert_eq!(dis(&boxes(&[1, 2], &[0, 1, 2, 3], &[7, 8])).unwrap(), 0.0);
        assert_eq!(dis(&boxes(&[1, 2], &[0, 1, 2, 3], &[])).unwrap(), 0.0);
        assert!(dis(&boxes(&[], &[0, 1], &[0])).is_err());
        assert!(AnswerBoxes::new(set(0..=3), set(1..=3), set(0..=0)).is_err());
    }

    #[test]
    fn widening_outside_large_box_lowers_dis() {
        let b = build_boxes(&grid(), (6, 7), (1, 2)).unwrap();
        let before = dis(&b).unwrap();
        let wider = build_boxes(&grid(), (6, 7), (1, 4)).unwrap();
        assert!(dis(&wider).unwrap() < before);
    }

    fn result(doc: &str, rank: usize) -> RetrievalResult {
        RetrievalResult {
            doc_id: doc.into(),
            score: 1.0 / rank as f64,
            rank,
        }
    }

    fn small_collection() -> (Collection, Vec<Question>) {
        let docs = ["a", "b", "c", "d"]
            .iter()
            .map(|id| Document::from_lines(*id, &[vec![format!("word{id}")]]).unwrap())
            .collect();
        let c = Collection::new(docs).unwrap();
        let qs = ["a", "b", "c", "d"]
            .iter()
            .map(|id| Question::new(&c, format!("q{id}"), format!("word{id}"), *id, (0, 0)).unwrap())
            .collect();
        (c, qs)
    }

    #[test]
    fn top_k_counts_hits() {
        let (c, qs) = small_collection();
        let lists = vec![
            vec![result("a", 1), result("b", 2)],
            vec![result("a", 1), result("b", 2)],
            vec![result("c", 1)],
            vec![result("a", 1), result("b", 2)],
        ];
        assert_eq!(top_k_accuracy(&c, &lists, &qs, 5).unwrap(), 0.75);
        assert_eq!(top_k_accuracy(&c, &lists, &qs, 1).unwrap(), 0.5);
        assert!(top_k_accuracy(&c, &lists[..2], &qs, 5).is_err());
    }

    #[test]
    fn top_k_rejects_unknown_gold() {
        let (c, mut qs) = small_collection();
        qs[0].gold_doc_id = "zzz".into();
        let lists = vec![vec![]; 4];
        assert!(top_k_accuracy(&c, &lists, &qs, 5).is_err());
    }

    fn prediction(doc: &str, start: usize, confidence: f64) -> AnswerPrediction {
        AnswerPrediction {
            doc_id: doc.into(),
            start_line: start,
            end_line: start,
            confidence,
            word_span: None,
        }
    }

    #[test]
    fn selection_tie_breaks() {
        let c = |rank, start, conf| Candidate {
            rank,
            prediction: prediction("x", start, conf),
        };
        assert_eq!(select_prediction(&[c(1, 0, 0.5), c(2, 0, 0.9)]).unwrap().rank, 2);
        assert_eq!(select_prediction(&[c(3, 0, 0.9), c(2, 0, 0.9)]).unwrap().rank, 2);
        let cands = [c(2, 4, 0.9), c(2, 1, 0.9)];
        assert_eq!(select_prediction(&cands).unwrap().prediction.start_line, 1);
        assert!(select_prediction(&[]).is_none());
    }

    /// Fixed confidence per document.
    struct Table(Vec<(String, f64)>);

    impl QaModel for Table {
        fn answer(&self, document: &Document, _: &Query) -> Result<AnswerPrediction> {
            let conf = self.0.iter().find(|(d, _)| *d == document.doc_id).map(|p| p.1).unwrap_or(0.0);
            Ok(prediction(&document.doc_id, 0, conf))
        }
        fn model_id(&self) -> String {
            "table".into()
        }
    }

    #[test]
    fn single_candidate_is_the_top_document() {
        let (c, qs) = small_collection();
        let table = Table(vec![("b".into(), 9.0)]);
        let p = answer_collection(&c, &qs[0].query, &table, 1).unwrap();
        assert_eq!(p.doc_id, "a");
        let p = answer_collection(&c, &qs[0].query, &table, 4).unwrap();
        assert_eq!(p.doc_id, "b");
    }

    #[test]
    fn selection_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let cands: Vec<Candidate> = (1..=5)
                .map(|rank| Candidate {
                    rank,
                    prediction: prediction("x", rng.random_range(0..3), rng.random_range(0..4) as f64),
                })
                .collect();
            let best = select_prediction(&cands).unwrap();
            for c in &cands {
                let p = &c.prediction;
                assert!(p.confidence <= best.prediction.confidence);
                if p.confidence == best.prediction.confidence {
                    assert!(c.rank >= best.rank);
                }
            }
        }
    }

    #[test]
    fn perfect_and_wrong_documents() {
        let (c, qs) = small_collection();
        let report = evaluate(&c, &qs, &AttentionQa, EvalOptions::default()).unwrap();
        assert_eq!(report.summary.accuracy, 1.0);
        assert_eq!(report.summary.mean_dis, 1.0);
        assert_eq!(report.summary.top5, 1.0);
        assert_eq!(report.meta.model, "attention");

        let wrong = Table(vec![("a".into(), 5.0)]);
        let report = evaluate(&c, &qs[1..], &wrong, EvalOptions::default()).unwrap();
        assert_eq!(report.summary.accuracy, 0.0);
        assert!(report.per_question.iter().all(|o| o.predicted_doc == "a" && o.dis == 0.0));
    }

    #[test]
    fn summary_recomputes_from_outcomes() {
        let outcome = |dis: f64, rank| QuestionOutcome {
            question_id: "q".into(),
            dis,
            predicted_doc: "d".into(),
            start: 0,
            end: 0,
            confidence: 0.0,
            retrieval_rank_of_gold: rank,
        };
        let s = Summary::from_outcomes(&[outcome(0.8, Some(1)), outcome(0.81, Some(6)), outcome(1.0, None), outcome(0.0, Some(5))], 0.8);
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.top5, 0.5);
        assert!((s.mean_dis - 2.61 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn errors_name_the_question() {
        let (c, mut qs) = small_collection();
        qs[2].gold_doc_id = "nope".into();
        let err = evaluate(&c, &qs, &AttentionQa, EvalOptions::default()).unwrap_err();
        assert!(err.to_string().contains("qc"), "{err}");
    }

    #[test]
    fn query_without_match_still_answers() {
        let (c, _) = small_collection();
        let q = preprocess_query("zebra").unwrap();
        assert_eq!(q.phocs.len(), 1);
        let p = answer_collection(&c, &q, &AttentionQa, 5).unwrap();
        assert!(c.get(&p.doc_id).is_some());
    }
}
