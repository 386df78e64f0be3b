use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BidafInput, BidafModel, Mode};
use crate::corpus::{Collection, Question};
use crate::error::{Error, Result};
use crate::nn::Parameterized;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub question_id: String,
    pub input: BidafInput,
    /// Inclusive gold span in lines or words, matching the model mode.
    pub gold: (usize, usize),
}

/// Pair each question with its gold document.
pub fn build_examples(collection: &Collection, questions: &[Question], mode: Mode) -> Result<Vec<TrainingExample>> {
    questions
        .iter()
        .map(|q| {
            let doc = collection.get(&q.gold_doc_id).ok_or_else(|| Error::InvalidQuestion {
                question_id: q.question_id.clone(),
                reason: format!("unknown gold_doc_id {:?}", q.gold_doc_id),
            })?;
            let input = BidafInput::from_document(doc, &q.query)?;
            let gold = match mode {
                Mode::Line => q.gold_line_span,
                Mode::Word => q.gold_word_span,
            };
            Ok(TrainingExample {
                question_id: q.question_id.clone(),
                input,
                gold,
            })
        })
        .collect()
}

impl BidafModel {
    /// Reject any example whose gold span does not fit its input.
    pub fn validate_examples(&self, examples: &[TrainingExample]) -> Result<()> {
        for ex in examples {
            let len = ex.input.output_len(self.mode());
            if ex.gold.0 > ex.gold.1 || ex.gold.1 >= len {
                return Err(Error::InvalidQuestion {
                    question_id: ex.question_id.clone(),
                    reason: format!("gold span {:?} out of range for {len} positions", ex.gold),
                });
            }
        }
        Ok(())
    }

    /// One pass over `examples` in an order shuffled by `rng`, one optimizer
    /// step per example, dropout active. Returns the mean loss.
    pub fn train_epoch(&mut self, examples: &[TrainingExample], rng: &mut ChaCha8Rng) -> Result<f64> {
        self.validate_examples(examples)?;
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for i in order {
            let ex = &examples[i];
            self.zero_grad();
            total += self
                .accumulate_gradients(&ex.input, ex.gold, Some(rng))
                .map_err(|e| e.context(format!("question {:?}", ex.question_id)))?;
            self.apply_gradients()?;
        }
        Ok(total / examples.len() as f64)
    }

    /// Fraction of examples whose predicted span equals the gold span exactly.
    pub fn exact_match(&self, examples: &[TrainingExample]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0;
        for ex in examples {
            let (s, e, _) = self.predict_span(&ex.input)?;
            if (s, e) == ex.gold {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }
}

/// Train for `epochs` passes; returns the mean loss of each epoch.
pub fn train(model: &mut BidafModel, examples: &[TrainingExample], epochs: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate_examples(examples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..epochs).map(|_| model.train_epoch(examples, &mut rng)).collect()
}
