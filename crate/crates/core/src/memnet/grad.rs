//! Manual backpropagation through the memory hops, and the SGD update.

use ndarray::{Array2, Zip};

use super::{argmax, dot, EncodedExample, Model, ModelError, Trace, PROB_FLOOR};
use crate::table::Example;

/// Gradients for `E_0 .. E_K`, same shapes as [`Model::embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: Vec<Array2<f64>>,
    /// Mean loss of the batch the gradients were computed on.
    pub loss: f64,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            embeddings: model
                .embeddings()
                .iter()
                .map(|m| Array2::zeros(m.raw_dim()))
                .collect(),
            loss: 0.0,
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.embeddings
            .iter()
            .flat_map(|m| m.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for m in &mut self.embeddings {
            m.mapv_inplace(|g| g * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.iter().all(|m| m.iter().all(|g| g.is_finite()))
    }
}

pub(crate) struct BatchStats {
    pub(crate) loss_sum: f64,
    pub(crate) correct: usize,
}

/// Accumulates the (unnormalized) gradient of one example's loss.
fn backward(model: &Model, enc: &EncodedExample, trace: &Trace, answer: usize, grads: &mut Gradients) {
    let d = model.config().embed_dim;
    let hops = model.hops();
    let emb = model.embeddings();

    // d loss / d logits for softmax + cross-entropy
    let mut g_logits = trace.probs.clone();
    g_logits[answer] -= 1.0;

    // logits = E_K u_{K+1}
    let u_last = &trace.u[hops];
    let mut g_u = vec![0.0; d];
    {
        let out = &emb[hops];
        let g_out = &mut grads.embeddings[hops];
        for (v, &gz) in g_logits.iter().enumerate() {
            if gz == 0.0 {
                continue;
            }
            for ((g, &uj), (gu, &w)) in g_out
                .row_mut(v)
                .iter_mut()
                .zip(u_last)
                .zip(g_u.iter_mut().zip(out.row(v)))
            {
                *g += gz * uj;
                *gu += gz * w;
            }
        }
    }

    for k in (0..hops).rev() {
        let keys = &trace.slot_emb[k];
        let vals = &trace.slot_emb[k + 1];
        let p = &trace.p[k];
        let u_k = &trace.u[k];
        let n = p.len();

        // o_k = sum_i p_i c_i, and u_{k+1} = u_k + o_k, so g_o = g_u.
        let g_p: Vec<f64> = (0..n).map(|i| dot(&vals[i * d..(i + 1) * d], &g_u)).collect();
        for (i, slot) in enc.slots.iter().enumerate() {
            for &(t, c) in &slot.0 {
                let scale = c * p[i];
                for (g, &go) in grads.embeddings[k + 1].row_mut(t).iter_mut().zip(&g_u) {
                    *g += scale * go;
                }
            }
        }

        let g_s: Vec<f64> = if model.softmax_enabled() {
            let mean = dot(p, &g_p);
            p.iter().zip(&g_p).map(|(pi, gpi)| pi * (gpi - mean)).collect()
        } else {
            g_p
        };

        // s_i = u_k . m_i
        for (i, slot) in enc.slots.iter().enumerate() {
            if g_s[i] == 0.0 {
                continue;
            }
            for &(t, c) in &slot.0 {
                let scale = c * g_s[i];
                for (g, &uj) in grads.embeddings[k].row_mut(t).iter_mut().zip(u_k) {
                    *g += scale * uj;
                }
            }
            for (gu, &m) in g_u.iter_mut().zip(&keys[i * d..(i + 1) * d]) {
                *gu += g_s[i] * m;
            }
        }
    }

    // u_1 = E_0^T q
    for &(t, c) in &enc.question.0 {
        for (g, &gu) in grads.embeddings[0].row_mut(t).iter_mut().zip(&g_u) {
            *g += c * gu;
        }
    }
}

/// Mean-loss gradients over already encoded examples. Every example must
/// carry an in-vocabulary answer.
pub(crate) fn batch_gradients(model: &Model, batch: &[&EncodedExample]) -> (Gradients, BatchStats) {
    let mut grads = Gradients::zeros_like(model);
    let mut stats = BatchStats {
        loss_sum: 0.0,
        correct: 0,
    };
    for enc in batch {
        let answer = enc.answer.expect("training examples have in-vocabulary answers");
        let trace = model.forward_encoded(enc);
        stats.loss_sum += -trace.probs[answer].max(PROB_FLOOR).ln();
        stats.correct += usize::from(argmax(&trace.probs) == answer);
        backward(model, enc, &trace, answer, &mut grads);
    }
    let n = batch.len().max(1) as f64;
    grads.scale(1.0 / n);
    grads.loss = stats.loss_sum / n;
    (grads, stats)
}

/// Exact gradients of the mean batch cross-entropy with respect to every
/// parameter matrix, honoring the tying and the current softmax mode.
pub fn gradients(model: &Model, batch: &[Example]) -> Result<Gradients, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::InvalidConfig("gradient of an empty batch".into()));
    }
    let encoded: Vec<EncodedExample> = batch
        .iter()
        .map(|e| {
            let enc = EncodedExample::new(e, model.vocab());
            match enc.answer {
                Some(_) => Ok(enc),
                None => Err(ModelError::UnknownAnswer(e.answer.clone())),
            }
        })
        .collect::<Result<_, _>>()?;
    let refs: Vec<&EncodedExample> = encoded.iter().collect();
    Ok(batch_gradients(model, &refs).0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Factor the gradient was multiplied by (1 when not clipped).
    pub clip_scale: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StepError {
    #[error("non-finite gradient (norm {norm}) in parameter matrix E_{matrix}")]
    NonFinite { matrix: usize, norm: f64 },
    #[error("gradient shapes do not match the model")]
    ShapeMismatch,
}

/// Clips the global gradient norm to `grad_clip_norm`, then `theta -= lr * g`.
pub fn sgd_step(model: &mut Model, grads: &Gradients, lr: f64) -> Result<StepInfo, StepError> {
    if grads.embeddings.len() != model.embeddings().len()
        || grads
            .embeddings
            .iter()
            .zip(model.embeddings())
            .any(|(g, m)| g.raw_dim() != m.raw_dim())
    {
        return Err(StepError::ShapeMismatch);
    }
    if let Some(matrix) = grads
        .embeddings
        .iter()
        .position(|m| !m.iter().all(|g| g.is_finite()))
    {
        return Err(StepError::NonFinite {
            matrix,
            norm: grads.global_norm(),
        });
    }
    let norm = grads.global_norm();
    let clip = model.config().grad_clip_norm;
    let clip_scale = if norm > clip { clip / norm } else { 1.0 };
    let step = lr * clip_scale;
    if step != 0.0 {
        for (param, g) in model.embeddings_mut().iter_mut().zip(&grads.embeddings) {
            Zip::from(param).and(g).for_each(|p, &g| *p -= step * g);
        }
    }
    Ok(StepInfo {
        grad_norm: norm,
        clip_scale,
    })
}
