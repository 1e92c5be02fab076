//! Mini-batch SGD with linear start and a halving learning-rate schedule.
//!
//! Training begins with the memory softmaxes removed (when `linear_start` is
//! set) at `linear_start_lr`. The first epoch whose validation loss does not
//! improve on the best so far ends that phase: softmaxes are switched on and
//! the learning rate restarts at `lr_initial`, halving every
//! `lr_halving_period_epochs` epochs. Training stops at `max_epochs` or once
//! validation accuracy reaches `target_accuracy` with softmaxes on.
//!
//! Updates follow the summed-loss convention of the classic memory-network
//! recipe: the mean batch gradient is multiplied by the batch length before
//! clipping, so the learning rates and clip norm keep their usual meaning.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::grad::{batch_gradients, sgd_step, StepError};
use super::{argmax, EncodedExample, Model, PROB_FLOOR};
use crate::rng::SeededRng;
use crate::table::Example;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("example {index}: answer `{answer}` is not in the model vocabulary")]
    UnknownAnswer { index: usize, answer: String },
    #[error("epoch {epoch}: {source}")]
    Numeric {
        epoch: usize,
        #[source]
        source: StepError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    LinearStart,
    Softmax,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::LinearStart => "linear_start",
            Phase::Softmax => "softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} phase={} lr={} train_loss={:.6} train_acc={:.4} val_loss={:.6} val_acc={:.4}",
            self.epoch, self.phase, self.lr, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Last epoch run without memory softmaxes, if linear start was used.
    pub linear_start_end_epoch: Option<usize>,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub stopped_early: bool,
}

impl TrainReport {
    /// First epoch whose validation accuracy reached `threshold`.
    pub fn epochs_to_accuracy(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|r| r.val_acc >= threshold).map(|r| r.epoch)
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

fn evaluate(model: &Model, data: &[&EncodedExample]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for enc in data {
        let answer = enc.answer.expect("checked before training");
        let probs = model.forward_encoded(enc).probs;
        loss += -probs[answer].max(PROB_FLOOR).ln();
        correct += usize::from(argmax(&probs) == answer);
    }
    let n = data.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Trains `model` in place. `progress` sees every epoch record as it is produced.
///
/// The validation split is drawn with the config seed; if it would be empty
/// (tiny datasets) the training set doubles as validation set.
pub fn train(
    model: &mut Model,
    dataset: &[Example],
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainReport, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cfg = model.config().clone();
    let encoded: Vec<EncodedExample> = dataset
        .iter()
        .enumerate()
        .map(|(index, e)| {
            let enc = EncodedExample::new(e, model.vocab());
            match enc.answer {
                Some(_) => Ok(enc),
                None => Err(TrainError::UnknownAnswer {
                    index,
                    answer: e.answer.clone(),
                }),
            }
        })
        .collect::<Result<_, _>>()?;

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    SeededRng::derive(cfg.seed, 1).shuffle(&mut order);
    let n_val = ((encoded.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(encoded.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_set: Vec<&EncodedExample> = train_idx.iter().map(|&i| &encoded[i]).collect();
    let val_set: Vec<&EncodedExample> = if val_idx.is_empty() {
        train_set.clone()
    } else {
        val_idx.iter().map(|&i| &encoded[i]).collect()
    };

    let mut shuffler = SeededRng::derive(cfg.seed, 2);
    let mut phase = if model.softmax_enabled() {
        Phase::Softmax
    } else {
        Phase::LinearStart
    };
    let mut softmax_epochs = 0usize;
    let mut best_val_loss = f64::INFINITY;
    let mut report = TrainReport {
        epochs: Vec::new(),
        linear_start_end_epoch: None,
        train_examples: train_set.len(),
        validation_examples: if val_idx.is_empty() { 0 } else { val_set.len() },
        stopped_early: false,
    };

    for epoch in 1..=cfg.max_epochs {
        let lr = match phase {
            Phase::LinearStart => cfg.linear_start_lr,
            Phase::Softmax => {
                cfg.lr_initial * 0.5f64.powi((softmax_epochs / cfg.lr_halving_period_epochs) as i32)
            }
        };
        shuffler.shuffle(&mut train_set);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in train_set.chunks(cfg.batch_size) {
            let (mut grads, stats) = batch_gradients(model, batch);
            grads.scale(batch.len() as f64);
            sgd_step(model, &grads, lr).map_err(|source| TrainError::Numeric { epoch, source })?;
            loss_sum += stats.loss_sum;
            correct += stats.correct;
        }
        let n_train = train_set.len() as f64;
        let (val_loss, val_acc) = evaluate(model, &val_set);
        let record = EpochRecord {
            epoch,
            phase,
            lr,
            train_loss: loss_sum / n_train,
            train_acc: correct as f64 / n_train,
            val_loss,
            val_acc,
        };
        progress(&record);
        report.epochs.push(record);

        match phase {
            Phase::LinearStart => {
                if val_loss < best_val_loss {
                    best_val_loss = val_loss;
                } else {
                    model.set_softmax_enabled(true);
                    phase = Phase::Softmax;
                    report.linear_start_end_epoch = Some(epoch);
                }
            }
            Phase::Softmax => {
                softmax_epochs += 1;
                if val_acc >= cfg.target_accuracy {
                    report.stopped_early = epoch < cfg.max_epochs;
                    break;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenerationSpec, Task};
    use crate::memnet::tests::austria_example;
    use crate::memnet::ModelConfig;
    use crate::table::build_vocabulary;

    #[test]
    fn empty_dataset_rejected() {
        let e = austria_example();
        let mut model = Model::init(ModelConfig::default(), build_vocabulary(&[e])).unwrap();
        assert_eq!(train(&mut model, &[], |_| {}), Err(TrainError::EmptyDataset));
    }

    #[test]
    fn memorizes_a_single_example() {
        let e = austria_example();
        let cfg = ModelConfig {
            max_epochs: 300,
            target_accuracy: 1.1,
            ..Default::default()
        };
        let mut model = Model::init(cfg, build_vocabulary(std::slice::from_ref(&e))).unwrap();
        let report = train(&mut model, std::slice::from_ref(&e), |_| {}).unwrap();
        let loss = model.loss(&model.forward(&e), &e.answer).unwrap();
        assert!(loss < 0.01, "loss {loss}");
        assert_eq!(report.validation_examples, 0);
    }

    #[test]
    fn schedule_and_phases_are_logged() {
        let spec = GenerationSpec::default_for(Task::SimpleKey).with_examples(400, 5);
        let data = generate_dataset(&spec).unwrap();
        let cfg = ModelConfig {
            max_epochs: 40,
            lr_halving_period_epochs: 5,
            target_accuracy: 1.1,
            ..Default::default()
        };
        let mut model = Model::init(cfg, build_vocabulary(&data)).unwrap();
        let mut seen = 0;
        let report = train(&mut model, &data, |_| seen += 1).unwrap();
        assert_eq!(seen, 40);
        assert_eq!(report.train_examples + report.validation_examples, 400);
        assert_eq!(report.validation_examples, 40);
        let end = report.linear_start_end_epoch.unwrap();
        for r in &report.epochs {
            if r.epoch <= end {
                assert_eq!(r.phase, Phase::LinearStart);
                assert_eq!(r.lr, 0.005);
            } else {
                assert_eq!(r.phase, Phase::Softmax);
                let halvings = (r.epoch - end - 1) / 5;
                assert_eq!(r.lr, 0.01 * 0.5f64.powi(halvings as i32));
            }
        }
        assert!(model.softmax_enabled());
        let line = report.epochs[0].to_string();
        assert!(line.starts_with("epoch=1 phase=linear_start lr=0.005 train_loss="));
    }
}
