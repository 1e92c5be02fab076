//! End-to-end memory network over table triples.
//!
//! Each triple becomes one memory slot. With `K` hops the model keeps `K + 1`
//! embedding matrices `E_0 .. E_K`, each `|V| x d`, tied adjacently:
//!
//! * question embedding `B = E_0`,
//! * hop `k` (1-based) reads keys through `A_k = E_{k-1}` and values through
//!   `C_k = E_k`,
//! * answer projection `W = E_K^T`.
//!
//! For a question bag `q` and slot bags `x_i`:
//!
//! ```text
//! u_1     = E_0^T q
//! s_i     = u_k . (A_k^T x_i)
//! p       = softmax(s)          (p = s during linear start)
//! o_k     = sum_i p_i C_k^T x_i
//! u_{k+1} = u_k + o_k
//! a       = softmax(W u_{K+1})
//! ```
//!
//! There is no positional or temporal encoding: slots and question words are
//! bags, so permuting either leaves the answer distribution unchanged.

mod checkpoint;
mod grad;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_model, save_model, CheckpointError, TrainingMeta, CHECKPOINT_VERSION,
};
pub use grad::{gradients, sgd_step, Gradients, StepError, StepInfo};
pub use train::{train, EpochRecord, Phase, TrainError, TrainReport};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::table::{Example, Triple, Vocabulary};

/// Probabilities are floored here before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("answer `{0}` is not in the model vocabulary")]
    UnknownAnswer(String),
    #[error("distribution has {found} entries, vocabulary has {expected}")]
    DistributionSize { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hops: usize,
    pub embed_dim: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_initial: f64,
    pub lr_halving_period_epochs: usize,
    pub linear_start: bool,
    pub linear_start_lr: f64,
    pub grad_clip_norm: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub init_std: f64,
    /// Training stops once validation accuracy reaches this (softmax phase only).
    pub target_accuracy: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hops: 3,
            embed_dim: 20,
            batch_size: 32,
            max_epochs: 100,
            lr_initial: 0.01,
            lr_halving_period_epochs: 25,
            linear_start: true,
            linear_start_lr: 0.005,
            grad_clip_norm: 40.0,
            seed: 1,
            validation_fraction: 0.1,
            init_std: 0.1,
            target_accuracy: 0.99,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.hops == 0 {
            return bad("hops must be at least 1");
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.lr_halving_period_epochs == 0 {
            return bad("lr_halving_period_epochs must be at least 1");
        }
        for (name, v) in [
            ("lr_initial", self.lr_initial),
            ("linear_start_lr", self.linear_start_lr),
            ("grad_clip_norm", self.grad_clip_norm),
            ("init_std", self.init_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// Sparse bag of words: `(vocabulary index, count)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseBow(pub(crate) Vec<(usize, f64)>);

impl SparseBow {
    fn encode<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>, vocab: &Vocabulary) -> Self {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for t in tokens {
            if let Some(i) = vocab.index(t.as_ref()) {
                match entries.iter_mut().find(|(j, _)| *j == i) {
                    Some(e) => e.1 += 1.0,
                    None => entries.push((i, 1.0)),
                }
            }
        }
        entries.sort_unstable_by_key(|e| e.0);
        Self(entries)
    }
}

/// An example mapped onto a vocabulary. Out-of-vocabulary tokens are dropped.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncodedExample {
    pub(crate) slots: Vec<SparseBow>,
    pub(crate) question: SparseBow,
    pub(crate) answer: Option<usize>,
}

impl EncodedExample {
    pub(crate) fn new(example: &Example, vocab: &Vocabulary) -> Self {
        Self::from_parts(&example.triples, &example.question, Some(&example.answer), vocab)
    }

    pub(crate) fn from_parts<S: AsRef<str>>(
        triples: &[Triple],
        question: &[S],
        answer: Option<&str>,
        vocab: &Vocabulary,
    ) -> Self {
        Self {
            slots: triples
                .iter()
                .map(|t| SparseBow::encode(t.tokens(), vocab))
                .collect(),
            question: SparseBow::encode(question, vocab),
            answer: answer.and_then(|a| vocab.index(a)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub answer_token: String,
    pub answer_index: usize,
    /// Probability of every vocabulary token, in vocabulary order.
    pub distribution: Vec<f64>,
    /// `hops x slots`. Rows sum to one when the memory softmax is enabled;
    /// during linear start they hold the raw scores.
    pub attention: Vec<Vec<f64>>,
    pub memory_slots: Vec<Triple>,
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.distribution[self.answer_index]
    }

    /// Highest-probability tokens, descending; ties keep vocabulary order.
    pub fn top_k<'v>(&self, vocab: &'v Vocabulary, k: usize) -> Vec<(&'v str, f64)> {
        let mut order: Vec<usize> = (0..self.distribution.len()).collect();
        order.sort_by(|&a, &b| self.distribution[b].total_cmp(&self.distribution[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(k)
            .map(|i| (vocab.token(i).expect("distribution matches vocabulary"), self.distribution[i]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    vocab: Vocabulary,
    config: ModelConfig,
    /// `E_0 .. E_K`, see the module docs for how hops share them.
    embeddings: Vec<Array2<f64>>,
    softmax_enabled: bool,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub(crate) struct Trace {
    /// `slot_emb[j]` is the `n x d` slot embedding under `E_j`, flattened.
    pub(crate) slot_emb: Vec<Vec<f64>>,
    /// Controller states `u_1 .. u_{K+1}`.
    pub(crate) u: Vec<Vec<f64>>,
    /// Attention (or raw scores) per hop.
    pub(crate) p: Vec<Vec<f64>>,
    pub(crate) probs: Vec<f64>,
}

pub(crate) fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let n = xs.len() as f64;
        xs.iter_mut().for_each(|x| *x = 1.0 / n);
        return;
    }
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    xs.iter_mut().for_each(|x| *x /= sum);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// First index of the maximum.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Fills every matrix i.i.d. from `N(0, init_std)` using the config seed.
    pub fn init(config: ModelConfig, vocab: Vocabulary) -> Result<Self, ModelError> {
        config.validate()?;
        if vocab.is_empty() {
            return Err(ModelError::InvalidConfig("vocabulary is empty".into()));
        }
        let mut rng = SeededRng::derive(config.seed, 0);
        let (v, d) = (vocab.len(), config.embed_dim);
        let embeddings = (0..=config.hops)
            .map(|_| Array2::from_shape_simple_fn((v, d), || rng.normal(0.0, config.init_std)))
            .collect();
        Ok(Self {
            softmax_enabled: !config.linear_start,
            vocab,
            config,
            embeddings,
        })
    }

    pub(crate) fn from_parts(
        config: ModelConfig,
        vocab: Vocabulary,
        embeddings: Vec<Array2<f64>>,
        softmax_enabled: bool,
    ) -> Self {
        Self {
            vocab,
            config,
            embeddings,
            softmax_enabled,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn hops(&self) -> usize {
        self.config.hops
    }

    pub fn softmax_enabled(&self) -> bool {
        self.softmax_enabled
    }

    pub fn set_softmax_enabled(&mut self, enabled: bool) {
        self.softmax_enabled = enabled;
    }

    /// The tied parameter matrices `E_0 .. E_K`.
    pub fn embeddings(&self) -> &[Array2<f64>] {
        &self.embeddings
    }

    pub(crate) fn embeddings_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.embeddings
    }

    /// `A_k` for hop `k` in `0..hops`.
    pub fn memory_in(&self, hop: usize) -> ArrayView2<'_, f64> {
        self.embeddings[hop].view()
    }

    /// `C_k` for hop `k` in `0..hops`.
    pub fn memory_out(&self, hop: usize) -> ArrayView2<'_, f64> {
        self.embeddings[hop + 1].view()
    }

    pub fn question_embedding(&self) -> ArrayView2<'_, f64> {
        self.embeddings[0].view()
    }

    /// `W`, shape `d x |V|`.
    pub fn answer_projection(&self) -> ArrayView2<'_, f64> {
        self.embeddings[self.config.hops].t()
    }

    fn embed(&self, matrix: usize, bow: &SparseBow, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let m = &self.embeddings[matrix];
        for &(t, c) in &bow.0 {
            for (o, w) in out.iter_mut().zip(m.row(t)) {
                *o += c * w;
            }
        }
    }

    pub(crate) fn forward_encoded(&self, enc: &EncodedExample) -> Trace {
        let d = self.config.embed_dim;
        let hops = self.config.hops;
        let n = enc.slots.len();

        let mut slot_emb = Vec::with_capacity(hops + 1);
        for j in 0..=hops {
            let mut flat = vec![0.0; n * d];
            for (i, slot) in enc.slots.iter().enumerate() {
                self.embed(j, slot, &mut flat[i * d..(i + 1) * d]);
            }
            slot_emb.push(flat);
        }

        let mut u = Vec::with_capacity(hops + 1);
        let mut u0 = vec![0.0; d];
        self.embed(0, &enc.question, &mut u0);
        u.push(u0);

        let mut p = Vec::with_capacity(hops);
        for k in 0..hops {
            let keys = &slot_emb[k];
            let vals = &slot_emb[k + 1];
            let uk = &u[k];
            let mut scores: Vec<f64> = (0..n).map(|i| dot(uk, &keys[i * d..(i + 1) * d])).collect();
            if self.softmax_enabled {
                softmax_in_place(&mut scores);
            }
            let mut next = uk.clone();
            for (i, &w) in scores.iter().enumerate() {
                for (x, v) in next.iter_mut().zip(&vals[i * d..(i + 1) * d]) {
                    *x += w * v;
                }
            }
            p.push(scores);
            u.push(next);
        }

        let out = &self.embeddings[hops];
        let last = &u[hops];
        let mut probs: Vec<f64> = out.rows().into_iter().map(|row| {
            row.iter().zip(last).map(|(a, b)| a * b).sum()
        }).collect();
        softmax_in_place(&mut probs);
        Trace { slot_emb, u, p, probs }
    }

    /// Runs the network over raw triples and question tokens. Tokens outside
    /// the vocabulary contribute nothing.
    pub fn predict<S: AsRef<str>>(&self, triples: &[Triple], question: &[S]) -> Prediction {
        let enc = EncodedExample::from_parts(triples, question, None, &self.vocab);
        let trace = self.forward_encoded(&enc);
        let answer_index = argmax(&trace.probs);
        Prediction {
            answer_token: self.vocab.token(answer_index).expect("index in range").to_string(),
            answer_index,
            distribution: trace.probs,
            attention: trace.p,
            memory_slots: triples.to_vec(),
        }
    }

    pub fn forward(&self, example: &Example) -> Prediction {
        self.predict(&example.triples, &example.question)
    }

    pub fn loss(&self, prediction: &Prediction, answer: &str) -> Result<f64, ModelError> {
        loss(prediction, answer, &self.vocab)
    }
}

/// Cross-entropy `-ln p(answer)` with the probability floored at [`PROB_FLOOR`].
pub fn loss(prediction: &Prediction, answer: &str, vocab: &Vocabulary) -> Result<f64, ModelError> {
    if prediction.distribution.len() != vocab.len() {
        return Err(ModelError::DistributionSize {
            expected: vocab.len(),
            found: prediction.distribution.len(),
        });
    }
    let i = vocab
        .index(answer)
        .ok_or_else(|| ModelError::UnknownAnswer(answer.to_string()))?;
    Ok(-prediction.distribution[i].max(PROB_FLOOR).ln())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::table::{build_vocabulary, Table};

    pub(crate) fn austria_example() -> Example {
        let t = Table::new(
            vec!["city", "immigration", "emigration_total"],
            vec![vec!["klagenfurt", "110", "140"], vec!["salzburg", "170", "100"]],
        )
        .unwrap();
        Example::from_table(&t, "what is the immigration in salzburg", "170")
    }

    fn prediction_with(distribution: Vec<f64>) -> Prediction {
        Prediction {
            answer_token: String::new(),
            answer_index: argmax(&distribution),
            distribution,
            attention: vec![],
            memory_slots: vec![],
        }
    }

    #[test]
    fn init_is_deterministic_with_expected_shapes() {
        let vocab = Vocabulary::from_tokens((0..65).map(|i| format!("t{i}")));
        let a = Model::init(ModelConfig::default(), vocab.clone()).unwrap();
        let b = Model::init(ModelConfig::default(), vocab).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.embeddings().len(), 4);
        for k in 0..3 {
            assert_eq!(a.memory_in(k).dim(), (65, 20));
            assert_eq!(a.memory_out(k).dim(), (65, 20));
        }
        assert_eq!(a.question_embedding().dim(), (65, 20));
        assert_eq!(a.answer_projection().dim(), (20, 65));
        assert!(!a.softmax_enabled());
    }

    #[test]
    fn init_rejects_bad_config() {
        let vocab = Vocabulary::from_tokens(["a"]);
        for cfg in [
            ModelConfig { hops: 0, ..Default::default() },
            ModelConfig { embed_dim: 0, ..Default::default() },
            ModelConfig { batch_size: 0, ..Default::default() },
            ModelConfig { lr_initial: 0.0, ..Default::default() },
            ModelConfig { validation_fraction: 1.0, ..Default::default() },
        ] {
            assert!(Model::init(cfg, vocab.clone()).is_err());
        }
    }

    #[test]
    fn single_slot_gets_full_attention() {
        let e = Example::new(vec![Triple::new("row1", "x", "a")], vec!["x".into()], "a");
        let mut m = Model::init(ModelConfig::default(), build_vocabulary(std::slice::from_ref(&e))).unwrap();
        m.set_softmax_enabled(true);
        let p = m.forward(&e);
        for row in &p.attention {
            assert_eq!(row, &[1.0]);
        }
    }

    #[test]
    fn untrained_distribution_normalized() {
        let e = austria_example();
        let m = Model::init(ModelConfig::default(), build_vocabulary(std::slice::from_ref(&e))).unwrap();
        let p = m.forward(&e);
        assert!((p.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p.attention.len(), 3);
        assert_eq!(p.attention[0].len(), 6);
    }

    #[test]
    fn loss_examples() {
        let vocab = Vocabulary::from_tokens((0..65).map(|i| format!("t{i:02}")));
        let mut one_hot = vec![0.0; 65];
        one_hot[3] = 1.0;
        assert_eq!(loss(&prediction_with(one_hot.clone()), "t03", &vocab).unwrap(), 0.0);

        let uniform = prediction_with(vec![1.0 / 65.0; 65]);
        let l = loss(&uniform, "t10", &vocab).unwrap();
        assert!((l - 65f64.ln()).abs() < 1e-12);
        assert!((l - 4.174).abs() < 1e-3);

        let floored = loss(&prediction_with(one_hot), "t04", &vocab).unwrap();
        assert!((floored - 27.631).abs() < 1e-3);
        assert!(floored.is_finite());

        assert_eq!(
            loss(&uniform, "nope", &vocab),
            Err(ModelError::UnknownAnswer("nope".into()))
        );
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }

    #[test]
    fn top_k_descending() {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let p = prediction_with(vec![0.2, 0.5, 0.3]);
        assert_eq!(p.top_k(&vocab, 2), vec![("b", 0.5), ("c", 0.3)]);
    }
}
