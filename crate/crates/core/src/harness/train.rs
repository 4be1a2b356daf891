//! The training loop: seeded shuffling, gradient accumulation over a
//! slot-counted window, global-norm clipping, Adam, and best-dev model
//! selection.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EmbeddingTable};
use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::harness::metrics::{evaluate, Metrics};
use crate::model::Model;
use crate::numeric::{Rng, Tape, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

/// Independent random streams derived from the run seed.
const STREAM_INIT: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_OOV: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Accumulated training loss divided by the number of slots seen.
    pub train_loss: f64,
    pub dev_implicit_macro_f1: f64,
    pub dev_implicit_accuracy: f64,
    pub dev_explicit_macro_f1: f64,
    pub dev_explicit_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config: TrainConfig,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose snapshot the returned model carries; maximizes dev
    /// implicit macro-F1.
    pub selected_epoch: usize,
    pub dev: Metrics,
    pub test: Option<Metrics>,
    pub wall_secs: f64,
}

/// Load the embedding file, or build an all-OOV table when none is
/// given, then pre-draw every vector the corpus needs so later lookups
/// are read-only. OOV draws derive from the run seed.
pub fn prepare_embeddings(
    word_dim: usize,
    path: Option<&Path>,
    seed: u64,
    corpus: &Corpus,
) -> Result<EmbeddingTable> {
    let rng = Rng::new(seed).fork(STREAM_OOV);
    let table = match path {
        Some(p) => EmbeddingTable::load(p, word_dim, rng)?,
        None => EmbeddingTable::empty(word_dim, rng),
    };
    table.warm(&[&corpus.train, &corpus.dev, &corpus.test]);
    Ok(table)
}

fn apply_window(model: &mut Model, slots: usize, config: &TrainConfig) -> Result<()> {
    if slots == 0 {
        return Ok(());
    }
    model.store.scale_grads(1.0 / slots as f64);
    model.store.clip_global_norm(config.clip_threshold);
    model.store.adam_step(config.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
}

/// Train a model on the corpus. Paragraph order is reshuffled per epoch;
/// gradients accumulate over consecutive paragraphs until the window
/// holds at least `window_slots` relation slots, are normalized by that
/// slot count, clipped, and applied. The returned model carries the
/// parameters of the best dev epoch.
pub fn train(config: &TrainConfig, corpus: &Corpus, table: &EmbeddingTable) -> Result<(Model, RunReport)> {
    config.validate()?;
    if corpus.train.is_empty() || corpus.dev.is_empty() {
        return Err(Error::Data("training needs non-empty train and dev splits".into()));
    }
    let started = Instant::now();
    let master = Rng::new(config.seed);
    let mut init_rng = master.fork(STREAM_INIT);
    let mut train_rng = master.fork(STREAM_TRAIN);

    let mut model = Model::new(config.to_model_config(&corpus.inventories), &mut init_rng)?;

    let mut epochs: Vec<EpochRecord> = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(usize, f64, Vec<crate::numeric::Matrix>)> = None;

    for epoch in 1..=config.max_epochs {
        let mut order: Vec<usize> = (0..corpus.train.len()).collect();
        train_rng.shuffle(&mut order);

        model.store.zero_grads();
        let mut window_slots = 0usize;
        let mut epoch_loss = 0.0;
        let mut epoch_slots = 0usize;

        for (step, idx) in order.iter().enumerate() {
            let paragraph = &corpus.train[*idx];
            let mut tape = Tape::new();
            if let Some(loss) =
                model.paragraph_loss(&mut tape, paragraph, table, &mut train_rng, true)?
            {
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, step {step}"
                    )));
                }
                epoch_loss += value;
                tape.backward(loss, &mut model.store)?;
            }
            window_slots += paragraph.num_slots();
            epoch_slots += paragraph.num_slots();
            if window_slots >= config.window_slots {
                apply_window(&mut model, window_slots, config)
                    .map_err(|e| Error::Training(format!("epoch {epoch}, step {step}: {e}")))?;
                window_slots = 0;
            }
        }
        apply_window(&mut model, window_slots, config)
            .map_err(|e| Error::Training(format!("epoch {epoch} (final window): {e}")))?;

        let dev = evaluate(&model, &corpus.dev, table, false)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: if epoch_slots == 0 { 0.0 } else { epoch_loss / epoch_slots as f64 },
            dev_implicit_macro_f1: dev.implicit.macro_f1,
            dev_implicit_accuracy: dev.implicit.accuracy,
            dev_explicit_macro_f1: dev.explicit.macro_f1,
            dev_explicit_accuracy: dev.explicit.accuracy,
        });
        if best.as_ref().map_or(true, |(_, f1, _)| dev.implicit.macro_f1 > *f1) {
            best = Some((epoch, dev.implicit.macro_f1, model.store.snapshot_values()));
        }
    }

    let (selected_epoch, _, snapshot) = best.expect("max_epochs >= 1 guarantees a snapshot");
    model.store.restore_values(&snapshot)?;

    let dev = evaluate(&model, &corpus.dev, table, true)?;
    let test = if corpus.test.is_empty() {
        None
    } else {
        Some(evaluate(&model, &corpus.test, table, true)?)
    };
    let report = RunReport {
        config: config.clone(),
        seed: config.seed,
        epochs,
        selected_epoch,
        dev,
        test,
        wall_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

/// One-vs-all training for a target label: golds are relabeled positive
/// iff the target is in the gold set, heads shrink to two classes, and
/// the headline number is the positive-class F1 over implicit slots.
pub fn binary_mode_train(config: &TrainConfig, corpus: &Corpus, table: &EmbeddingTable) -> Result<(Model, RunReport)> {
    if config.binary.is_none() {
        return Err(Error::Config("binary_mode_train needs a target label".into()));
    }
    train(config, corpus, table)
}

/// Positive-class F1 over implicit slots of a binary-mode evaluation.
pub fn binary_positive_f1(metrics: &Metrics) -> f64 {
    metrics.implicit.classes.get(1).map(|c| c.f1).unwrap_or(0.0)
}
