//! BiDAF-style answer span network over PHOC inputs.
//!
//! Line mode (BIDAF-Line):
//!
//! 1. context rows are `PHOC ⧺ positional(line)`, question rows are `PHOC`;
//! 2. separate BLSTM encoders produce `H` (`T x 2h`) and `U` (`J x 2h`);
//! 3. context-to-query attention gives `Ũ`;
//! 4. `[H ; Ũ]` runs through two stacked BLSTMs (the modeling layer);
//! 5. word outputs are summed per line;
//! 6. a dense head scores start lines, and an extra BLSTM + dense head
//!    scores end lines.
//!
//! Word mode (BIDAF-Word) drops the positional encoding and the per-line
//! sum, so logits are produced per word.

mod positional;
mod train;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Query};
use crate::error::{Error, Result};
use crate::nn::adadelta::{AdadeltaConfig, AdadeltaState};
use crate::nn::attention::AttentionCache;
use crate::nn::checkpoint::{Checkpoint, FORMAT_VERSION};
use crate::nn::layers::BlstmCache;
use crate::nn::ops::{cross_entropy, softmax, softmax_cross_entropy_grad};
use crate::nn::{Blstm, C2qAttention, Dense, ParamTensor, Parameterized};
use crate::phoc::PHOC_DIM;
use crate::snippet_qa::AnswerPrediction;

pub use positional::line_positional_encoding;
pub use train::{build_examples, train, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Line,
    Word,
}

impl Mode {
    pub fn default_max_span(self) -> usize {
        match self {
            Mode::Line => 8,
            Mode::Word => 30,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Line => "line",
            Mode::Word => "word",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidafConfig {
    pub mode: Mode,
    pub phoc_dim: usize,
    pub pos_dim: usize,
    pub hidden: usize,
    pub dropout_rate: f64,
    /// Longest predicted span, in lines or words depending on `mode`.
    pub max_span: usize,
    pub optimizer: AdadeltaConfig,
}

impl BidafConfig {
    pub fn new(mode: Mode) -> Self {
        BidafConfig {
            mode,
            phoc_dim: PHOC_DIM,
            pos_dim: 30,
            hidden: 100,
            dropout_rate: 0.2,
            max_span: mode.default_max_span(),
            optimizer: AdadeltaConfig::default(),
        }
    }

    pub fn context_dim(&self) -> usize {
        match self.mode {
            Mode::Line => self.phoc_dim + self.pos_dim,
            Mode::Word => self.phoc_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.phoc_dim == 0 || self.hidden == 0 || self.max_span == 0 {
            return bad(format!("dimensions must be positive: {self:?}"));
        }
        if self.mode == Mode::Line && (self.pos_dim == 0 || !self.pos_dim.is_multiple_of(2)) {
            return bad(format!("pos_dim must be positive and even, got {}", self.pos_dim));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// Network input for one (document, question) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BidafInput {
    /// Word attribute vectors, `T x phoc_dim`.
    pub context: Array2<f64>,
    /// Line index of every word; non-decreasing, starting at 0, no gaps.
    pub word_lines: Vec<usize>,
    pub num_lines: usize,
    /// Question attribute vectors, `J x phoc_dim`.
    pub question: Array2<f64>,
}

impl BidafInput {
    pub fn new(context: Array2<f64>, word_lines: Vec<usize>, question: Array2<f64>) -> Result<Self> {
        if context.nrows() == 0 {
            return Err(Error::InvalidArgument("context has no words".into()));
        }
        if question.nrows() == 0 {
            return Err(Error::EmptyQuery);
        }
        if word_lines.len() != context.nrows() {
            return Err(Error::Shape {
                context: "word line indices",
                expected: context.nrows(),
                got: word_lines.len(),
            });
        }
        let mut expected = 0;
        for (w, &l) in word_lines.iter().enumerate() {
            if l != expected && !(w > 0 && l == expected + 1) {
                return Err(Error::InvalidArgument(format!(
                    "word {w}: line index {l} breaks the line structure"
                )));
            }
            expected = l;
        }
        let num_lines = expected + 1;
        Ok(BidafInput {
            context,
            word_lines,
            num_lines,
            question,
        })
    }

    pub fn from_document(document: &Document, query: &Query) -> Result<Self> {
        let rows = |vs: &mut dyn Iterator<Item = &[f64]>, n: usize| {
            let flat: Vec<f64> = vs.flat_map(|v| v.iter().copied()).collect();
            Array2::from_shape_vec((n, PHOC_DIM), flat).map_err(|e| Error::InvalidArgument(e.to_string()))
        };
        let context = rows(&mut document.words.iter().map(|w| w.phoc.as_slice()), document.words.len())?;
        let question = rows(&mut query.phocs.iter().map(|p| p.as_slice()), query.phocs.len())?;
        let word_lines = document.words.iter().map(|w| w.line_index).collect();
        BidafInput::new(context, word_lines, question)
            .map_err(|e| e.context(format!("document {:?}", document.doc_id)))
    }

    pub fn num_words(&self) -> usize {
        self.context.nrows()
    }

    /// Number of positions the model scores in `mode`.
    pub fn output_len(&self, mode: Mode) -> usize {
        match mode {
            Mode::Line => self.num_lines,
            Mode::Word => self.num_words(),
        }
    }
}

/// Sum word rows into line rows according to `word_lines`.
pub fn aggregate_lines(word_outputs: ArrayView2<f64>, word_lines: &[usize], num_lines: usize) -> Array2<f64> {
    let mut lines = Array2::zeros((num_lines, word_outputs.ncols()));
    for (row, &l) in word_outputs.rows().into_iter().zip(word_lines) {
        let mut target = lines.row_mut(l);
        target += &row;
    }
    lines
}

#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub start: Array1<f64>,
    pub end: Array1<f64>,
}

struct ForwardCache {
    context_encoder: BlstmCache,
    question_encoder: BlstmCache,
    attention: AttentionCache,
    modeling_first: BlstmCache,
    modeling_second: BlstmCache,
    aggregated: Array2<f64>,
    end_encoder: BlstmCache,
    end_states: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BidafModel {
    config: BidafConfig,
    pub context_encoder: Blstm,
    pub question_encoder: Blstm,
    pub attention: C2qAttention,
    pub modeling_first: Blstm,
    pub modeling_second: Blstm,
    pub start_head: Dense,
    pub end_encoder: Blstm,
    pub end_head: Dense,
    pub optimizer: AdadeltaState,
}

/// Select the span maximizing `start[s] + end[e]` subject to
/// `s <= e <= s + max_span - 1`. Ties keep the smallest `s`, then the
/// smallest `e`. Returns `(s, e, start[s] + end[e])`.
pub fn best_span(start: &[f64], end: &[f64], max_span: usize) -> Result<(usize, usize, f64)> {
    if start.is_empty() || start.len() != end.len() {
        return Err(Error::Shape {
            context: "span logits",
            expected: start.len(),
            got: end.len(),
        });
    }
    if max_span == 0 {
        return Err(Error::InvalidArgument("max_span must be positive".into()));
    }
    let n = start.len();
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (s, &ls) in start.iter().enumerate() {
        for (e, &le) in end.iter().enumerate().take((s + max_span).min(n)).skip(s) {
            let score = ls + le;
            if score > best.2 {
                best = (s, e, score);
            }
        }
    }
    Ok(best)
}

type DropoutRng<'a> = Option<&'a mut ChaCha8Rng>;

impl BidafModel {
    pub fn new(config: BidafConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = config.hidden;
        Ok(BidafModel {
            config,
            context_encoder: Blstm::new("context_encoder", config.context_dim(), h, &mut rng),
            question_encoder: Blstm::new("question_encoder", config.phoc_dim, h, &mut rng),
            attention: C2qAttention::new("attention", 2 * h, &mut rng),
            modeling_first: Blstm::new("modeling.0", 4 * h, h, &mut rng),
            modeling_second: Blstm::new("modeling.1", 2 * h, h, &mut rng),
            start_head: Dense::new("start_head", 2 * h, 1, &mut rng),
            end_encoder: Blstm::new("end_encoder", 2 * h, h, &mut rng),
            end_head: Dense::new("end_head", 2 * h, 1, &mut rng),
            optimizer: AdadeltaState::new(config.optimizer),
        })
    }

    pub fn config(&self) -> &BidafConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    fn context_rows(&self, input: &BidafInput) -> Result<Array2<f64>> {
        let c = &self.config;
        if input.context.ncols() != c.phoc_dim || input.question.ncols() != c.phoc_dim {
            return Err(Error::Shape {
                context: "input attribute dimension",
                expected: c.phoc_dim,
                got: if input.context.ncols() != c.phoc_dim {
                    input.context.ncols()
                } else {
                    input.question.ncols()
                },
            });
        }
        match c.mode {
            Mode::Word => Ok(input.context.clone()),
            Mode::Line => {
                let mut pe = Array2::zeros((input.num_words(), c.pos_dim));
                let mut cached: Option<(usize, Array1<f64>)> = None;
                for (mut row, &l) in pe.rows_mut().into_iter().zip(&input.word_lines) {
                    if cached.as_ref().is_none_or(|(cl, _)| *cl != l) {
                        cached = Some((l, line_positional_encoding(l, c.pos_dim)?));
                    }
                    row.assign(&cached.as_ref().expect("set above").1);
                }
                Ok(concatenate![Axis(1), input.context, pe])
            }
        }
    }

    fn run(&self, input: &BidafInput, mut rng: DropoutRng<'_>) -> Result<(Logits, ForwardCache)> {
        let rate = self.config.dropout_rate;
        macro_rules! drop {
            () => {
                rng.as_deref_mut().map(|r| (rate, r))
            };
        }
        let h2 = 2 * self.config.hidden;

        let context = self.context_rows(input)?;
        let (h, context_encoder) = self.context_encoder.forward(context.view(), drop!())?;
        let (u, question_encoder) = self.question_encoder.forward(input.question.view(), drop!())?;
        let (attended, attention) = self.attention.forward(h.view(), u.view())?;
        let merged = concatenate![Axis(1), h, attended];
        let (m1, modeling_first) = self.modeling_first.forward(merged.view(), drop!())?;
        let (m2, modeling_second) = self.modeling_second.forward(m1.view(), drop!())?;
        let aggregated = match self.config.mode {
            Mode::Line => aggregate_lines(m2.view(), &input.word_lines, input.num_lines),
            Mode::Word => m2,
        };
        debug_assert_eq!(aggregated.ncols(), h2);
        let start = self.start_head.forward(aggregated.view())?.column(0).to_owned();
        let (end_states, end_encoder) = self.end_encoder.forward(aggregated.view(), drop!())?;
        let end = self.end_head.forward(end_states.view())?.column(0).to_owned();
        Ok((
            Logits { start, end },
            ForwardCache {
                context_encoder,
                question_encoder,
                attention,
                modeling_first,
                modeling_second,
                aggregated,
                end_encoder,
                end_states,
            },
        ))
    }

    /// Inference-mode logits (no dropout).
    pub fn forward(&self, input: &BidafInput) -> Result<Logits> {
        self.run(input, None).map(|(l, _)| l)
    }

    /// Aggregated per-position representations fed to the start head.
    pub fn position_representations(&self, input: &BidafInput) -> Result<Array2<f64>> {
        self.run(input, None).map(|(_, c)| c.aggregated)
    }

    fn check_gold(&self, input: &BidafInput, gold: (usize, usize)) -> Result<()> {
        let len = input.output_len(self.config.mode);
        if gold.0 > gold.1 || gold.1 >= len {
            return Err(Error::InvalidSpan {
                what: match self.config.mode {
                    Mode::Line => "gold line span",
                    Mode::Word => "gold word span",
                },
                start: gold.0,
                end: gold.1,
                len,
            });
        }
        Ok(())
    }

    /// Sum of start and end cross-entropies for `gold`, without gradients.
    pub fn loss(&self, input: &BidafInput, gold: (usize, usize), rng: DropoutRng<'_>) -> Result<f64> {
        self.check_gold(input, gold)?;
        let (logits, _) = self.run(input, rng)?;
        Ok(cross_entropy(softmax(logits.start.view()).view(), gold.0)?
            + cross_entropy(softmax(logits.end.view()).view(), gold.1)?)
    }

    /// Forward + backward for one example. Gradients are added to the
    /// parameter accumulators; returns the loss.
    pub fn accumulate_gradients(&mut self, input: &BidafInput, gold: (usize, usize), rng: DropoutRng<'_>) -> Result<f64> {
        self.check_gold(input, gold)?;
        let (logits, cache) = self.run(input, rng)?;
        let p_start = softmax(logits.start.view());
        let p_end = softmax(logits.end.view());
        let loss = cross_entropy(p_start.view(), gold.0)? + cross_entropy(p_end.view(), gold.1)?;

        let col = |v: Array1<f64>| v.insert_axis(Axis(1));
        let d_start = col(softmax_cross_entropy_grad(p_start.view(), gold.0));
        let d_end = col(softmax_cross_entropy_grad(p_end.view(), gold.1));

        let mut d_agg = self.start_head.backward(cache.aggregated.view(), d_start.view());
        let d_end_states = self.end_head.backward(cache.end_states.view(), d_end.view());
        d_agg += &self.end_encoder.backward_pass(&cache.end_encoder, d_end_states.view());

        let d_m2 = match self.config.mode {
            Mode::Line => {
                let mut d = Array2::zeros((input.num_words(), d_agg.ncols()));
                for (mut row, &l) in d.rows_mut().into_iter().zip(&input.word_lines) {
                    row.assign(&d_agg.row(l));
                }
                d
            }
            Mode::Word => d_agg,
        };
        let d_m1 = self.modeling_second.backward_pass(&cache.modeling_second, d_m2.view());
        let d_merged = self.modeling_first.backward_pass(&cache.modeling_first, d_m1.view());
        let h2 = 2 * self.config.hidden;
        let (d_h_att, d_u) = self.attention.backward(&cache.attention, d_merged.slice(s![.., h2..]));
        let d_h = &d_merged.slice(s![.., ..h2]) + &d_h_att;
        self.context_encoder.backward_pass(&cache.context_encoder, d_h.view());
        self.question_encoder.backward_pass(&cache.question_encoder, d_u.view());
        Ok(loss)
    }

    /// One ADADELTA update from the accumulated gradients.
    pub fn apply_gradients(&mut self) -> Result<()> {
        let mut optimizer = std::mem::replace(&mut self.optimizer, AdadeltaState::new(self.config.optimizer));
        let result = optimizer.step(&mut self.params_mut());
        self.optimizer = optimizer;
        result
    }

    pub fn predict_span(&self, input: &BidafInput) -> Result<(usize, usize, f64)> {
        let logits = self.forward(input)?;
        best_span(
            logits.start.as_slice().expect("contiguous"),
            logits.end.as_slice().expect("contiguous"),
            self.config.max_span,
        )
    }

    /// Predict an answer in `document`. In word mode the word span is also
    /// reported and the line span covers it.
    pub fn predict(&self, document: &Document, query: &Query) -> Result<AnswerPrediction> {
        let input = BidafInput::from_document(document, query)?;
        let (s, e, confidence) = self.predict_span(&input)?;
        let (start_line, end_line, word_span) = match self.config.mode {
            Mode::Line => (s, e, None),
            Mode::Word => {
                let (a, b) = document.line_span_of_words(s, e)?;
                (a, b, Some((s, e)))
            }
        };
        Ok(AnswerPrediction {
            doc_id: document.doc_id.clone(),
            start_line,
            end_line,
            confidence,
            word_span,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Array2<f64>)> = self
            .params()
            .iter()
            .map(|p| (p.name().to_owned(), p.value.clone()))
            .collect();
        let names: Vec<String> = self.params().iter().map(|p| p.name().to_owned()).collect();
        for (name, acc) in names.iter().zip(&self.optimizer.accumulators) {
            tensors.push((format!("adadelta.sq_grad:{name}"), acc.sq_grad.clone()));
            tensors.push((format!("adadelta.sq_update:{name}"), acc.sq_update.clone()));
        }
        Checkpoint {
            version: FORMAT_VERSION,
            config: serde_json::to_string(&self.config).expect("config serializes"),
            tensors,
        }
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let config: BidafConfig = serde_json::from_str(&checkpoint.config)
            .map_err(|e| Error::Checkpoint(format!("invalid config block: {e}")))?;
        let mut model = BidafModel::new(config, 0)?;
        let mut by_name: std::collections::HashMap<&str, &Array2<f64>> =
            checkpoint.tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let take = |by_name: &mut std::collections::HashMap<&str, &Array2<f64>>, p: &ParamTensor, name: &str| {
            let t = by_name
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.dim() != p.value.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.dim(),
                    p.value.dim()
                )));
            }
            Ok(t.clone())
        };
        let mut accumulators = Vec::new();
        let mut has_state = None;
        for p in model.params_mut() {
            let name = p.name().to_owned();
            p.value = take(&mut by_name, p, &name)?;
            let sg = format!("adadelta.sq_grad:{name}");
            let su = format!("adadelta.sq_update:{name}");
            let present = by_name.contains_key(sg.as_str());
            if *has_state.get_or_insert(present) != present {
                return Err(Error::Checkpoint(format!("optimizer state incomplete at {name}")));
            }
            if present {
                accumulators.push(crate::nn::adadelta::Accumulators {
                    sq_grad: take(&mut by_name, p, &sg)?,
                    sq_update: take(&mut by_name, p, &su)?,
                });
            }
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        model.optimizer.accumulators = accumulators;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        BidafModel::from_checkpoint(&Checkpoint::read(path)?)
    }
}

impl Parameterized for BidafModel {
    fn params(&self) -> Vec<&ParamTensor> {
        let mut v = self.context_encoder.params();
        v.extend(self.question_encoder.params());
        v.extend(self.attention.params());
        v.extend(self.modeling_first.params());
        v.extend(self.modeling_second.params());
        v.extend(self.start_head.params());
        v.extend(self.end_encoder.params());
        v.extend(self.end_head.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut v = self.context_encoder.params_mut();
        v.extend(self.question_encoder.params_mut());
        v.extend(self.attention.params_mut());
        v.extend(self.modeling_first.params_mut());
        v.extend(self.modeling_second.params_mut());
        v.extend(self.start_head.params_mut());
        v.extend(self.end_encoder.params_mut());
        v.extend(self.end_head.params_mut());
        v
    }
}

/// Random input with `lines[i]` words on line `i` and `question_len` rows.
pub fn random_input<R: Rng + ?Sized>(rng: &mut R, dim: usize, lines: &[usize], question_len: usize) -> Result<BidafInput> {
    let word_lines: Vec<usize> = lines.iter().enumerate().flat_map(|(l, &n)| std::iter::repeat_n(l, n)).collect();
    let context = Array2::from_shape_simple_fn((word_lines.len(), dim), || rng.random_range(0.0..1.0));
    let question = Array2::from_shape_simple_fn((question_len, dim), || rng.random_range(0.0..1.0));
    BidafInput::new(context, word_lines, question)
}
