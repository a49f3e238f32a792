//! Pairwise margin training, error-rate evaluation and embedding drift
//! analysis.

mod eval;
mod moved;
mod optim;

pub use eval::{format_comparison, pairwise_error_rate, ErrorRateReport, VariantResult};
pub use moved::{moved_word_pairs, tenths_grid, MoveBin, MovedPairs, PairMove};
pub use optim::{Adam, Plateau};

use std::fmt;

use rand::seq::SliceRandom;

use crate::click_sim::Catalog;
use crate::error::{Error, Result};
use crate::extraction::TrainingTriple;
use crate::models::{Input, NeuralModel};
use crate::numeric::{Gradients, Graph, Var};
use crate::parallel;
use crate::rng::substream;

pub const MARGIN: f64 = 1.0;

/// `max(0, f_irrel − f_rel + 1)`. NaN inputs give NaN rather than 0.
pub fn margin_loss(f_rel: f64, f_irrel: f64) -> f64 {
    let x = f_irrel - f_rel + MARGIN;
    if x <= 0.0 {
        0.0
    } else {
        x
    }
}

/// A training or evaluation example in token form.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub query: Vec<String>,
    pub rel: Vec<String>,
    pub irrel: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Self {
        Dataset { examples }
    }

    /// Resolves SKU ids to their catalog text.
    pub fn from_triples(triples: &[TrainingTriple], catalog: &Catalog) -> Result<Self> {
        let text = |id: &str| {
            catalog
                .get(id)
                .map(|s| s.text())
                .ok_or_else(|| Error::invalid(format!("sku {id:?} is not in the catalog")))
        };
        let examples = triples
            .iter()
            .map(|t| {
                Ok(Example {
                    query: t.query.split_whitespace().map(str::to_string).collect(),
                    rel: text(&t.rel)?,
                    irrel: text(&t.irrel)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub decay: f64,
    pub min_learning_rate: f64,
    /// Stop after this many epochs without a better validation error.
    pub early_stop: usize,
    pub frozen_embeddings: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 512,
            max_epochs: 20,
            patience: 2,
            decay: 0.1,
            min_learning_rate: 1e-6,
            early_stop: 5,
            frozen_embeddings: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::invalid("decay factor must lie in (0, 1)"));
        }
        if !(self.min_learning_rate > 0.0 && self.min_learning_rate <= self.learning_rate) {
            return Err(Error::invalid(
                "minimum learning rate must be positive and at most the initial rate",
            ));
        }
        if self.early_stop == 0 {
            return Err(Error::invalid("early_stop must be at least 1"));
        }
        Ok(())
    }
}

/// One line of the training log. Epoch 0 describes the initial model.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub validation_error: f64,
    pub learning_rate: f64,
}

impl fmt::Display for EpochReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} train_loss={:.6} validation_loss={:.6} validation_error={:.6} lr={:e}",
            self.epoch,
            self.train_loss,
            self.validation_loss,
            self.validation_error,
            self.learning_rate
        )
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    /// Parameters of the best validation epoch.
    pub model: NeuralModel,
    pub best_epoch: usize,
    pub epochs: Vec<EpochReport>,
}

/// An example mapped onto a model's padded inputs.
#[derive(Debug, Clone)]
pub struct Encoded {
    q: Input,
    rel: Input,
    irrel: Input,
}

pub fn encode(model: &NeuralModel, data: &Dataset) -> Vec<Encoded> {
    data.examples
        .iter()
        .map(|e| Encoded {
            q: model.query_input(&e.query),
            rel: model.doc_input(&e.rel),
            irrel: model.doc_input(&e.irrel),
        })
        .collect()
}

/// Builds `f_irrel − f_rel` for one example, sharing the query side.
fn margin_graph<'p>(model: &'p NeuralModel, e: &Encoded) -> Result<(Graph<'p>, Var, f64, f64)> {
    let mut g = Graph::new(model.params());
    let q = model.prepare_input(&mut g, &e.q)?;
    let rel = model.prepare_input(&mut g, &e.rel)?;
    let irrel = model.prepare_input(&mut g, &e.irrel)?;
    let s_rel = model.score_prepared(&mut g, q, rel)?;
    let s_irrel = model.score_prepared(&mut g, q, irrel)?;
    let diff = g.sub(s_irrel, s_rel)?;
    let (fr, fi) = (g.value(s_rel).item(), g.value(s_irrel).item());
    Ok((g, diff, fr, fi))
}

/// Scores of `(rel, irrel)` for every example.
pub fn score_pairs(model: &NeuralModel, data: &[Encoded]) -> Result<Vec<(f64, f64)>> {
    parallel::map(data, |_, e| {
        let (_, _, fr, fi) = margin_graph(model, e)?;
        Ok((fr, fi))
    })
    .into_iter()
    .collect()
}

/// Mean margin loss and pairwise error rate (ties count) of `model`.
pub fn evaluate(model: &NeuralModel, data: &[Encoded]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let scores = score_pairs(model, data)?;
    let loss: f64 = scores.iter().map(|&(r, i)| margin_loss(r, i)).sum();
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let errors = scores.iter().filter(|(r, i)| !(r > i)).count();
    Ok((loss / data.len() as f64, errors as f64 / data.len() as f64))
}

/// Work is split into this many contiguous chunks whatever the thread
/// count, and chunk gradients are summed in chunk order, so the result is
/// identical on any number of workers.
const GRADIENT_CHUNKS: usize = 16;

/// Summed margin loss and its gradient over `batch`. The hinge contributes
/// no gradient at exactly zero loss.
pub fn batch_gradient(model: &NeuralModel, batch: &[&Encoded]) -> Result<(f64, Gradients)> {
    let size = batch.len().div_ceil(GRADIENT_CHUNKS).max(1);
    let chunks: Vec<&[&Encoded]> = batch.chunks(size).collect();
    let partial = parallel::map(&chunks, |_, chunk| -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(model.params());
        let mut loss = 0.0;
        for e in chunk.iter() {
            let (g, diff, fr, fi) = margin_graph(model, e)?;
            let l = margin_loss(fr, fi);
            loss += l;
            if l > 0.0 {
                grads.accumulate(&g.backward(diff)?);
            }
        }
        Ok((loss, grads))
    });
    let mut total = Gradients::zeros_like(model.params());
    let mut loss = 0.0;
    for p in partial {
        let (l, g) = p?;
        loss += l;
        total.accumulate(&g);
    }
    Ok((loss, total))
}

/// Trains with mini-batch Adam on the margin loss, decaying the learning
/// rate on validation-loss plateaus, and returns the parameters with the
/// lowest validation error seen (the initial ones included).
pub fn train(
    model: &NeuralModel,
    train_set: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
) -> Result<Trained> {
    train_with_progress(model, train_set, validation, config, |_| {})
}

/// [`train`] with a callback invoked after each epoch report.
pub fn train_with_progress(
    model: &NeuralModel,
    train_set: &Dataset,
    validation: &Dataset,
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochReport),
) -> Result<Trained> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if validation.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let caller_flag = model.params().is_trainable(model.embedding_id());
    let mut model = model.clone();
    model.set_embedding_trainable(!config.frozen_embeddings);
    let train_data = encode(&model, train_set);
    let val_data = encode(&model, validation);

    let mut lr = config.learning_rate;
    let mut adam = Adam::new(model.params());
    let mut plateau = Plateau::new(config.patience, config.decay, config.min_learning_rate);
    let (val_loss, val_error) = evaluate(&model, &val_data)?;
    let (train_loss, _) = evaluate(&model, &train_data)?;
    let first = EpochReport {
        epoch: 0,
        train_loss,
        validation_loss: val_loss,
        validation_error: val_error,
        learning_rate: lr,
    };
    progress(&first);
    let mut epochs = vec![first];
    let mut best = (val_error, 0, model.clone());
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = substream(config.seed, "train-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Encoded> = idx.iter().map(|&i| &train_data[i]).collect();
            let (loss, mut grads) = batch_gradient(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    lr,
                });
            }
            epoch_loss += loss;
            grads.scale(1.0 / batch.len() as f64);
            adam.step(model.params_mut(), &grads, lr);
        }
        let (val_loss, val_error) = evaluate(&model, &val_data)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: 0,
                lr,
            });
        }
        let report = EpochReport {
            epoch,
            train_loss: epoch_loss / train_data.len() as f64,
            validation_loss: val_loss,
            validation_error: val_error,
            learning_rate: lr,
        };
        progress(&report);
        epochs.push(report);
        if val_error < best.0 {
            best = (val_error, epoch, model.clone());
        }
        lr = plateau.observe(val_loss, lr);
        if epoch - best.1 >= config.early_stop {
            break;
        }
    }
    let (_, best_epoch, mut best_model) = best;
    best_model.set_embedding_trainable(caller_flag);
    Ok(Trained {
        model: best_model,
        best_epoch,
        epochs,
    })
}

#[cfg(test)]
mod tests;
