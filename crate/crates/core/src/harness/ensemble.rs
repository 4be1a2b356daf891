//! Majority-voting ensembles over multi-seed runs.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::harness::metrics::{metrics_from_labels, predict_split, Metrics};
use crate::harness::train::{prepare_embeddings, train, RunReport};
use crate::model::SlotPrediction;

/// Majority vote per slot over aligned runs. Ties break toward the
/// largest sum of predicted probabilities for the tied labels, then the
/// lowest label index.
pub fn ensemble_vote(runs: &[Vec<Vec<SlotPrediction>>]) -> Result<Vec<Vec<usize>>> {
    let first = runs.first().ok_or_else(|| Error::Data("ensemble of zero runs".into()))?;
    for run in runs {
        if run.len() != first.len() {
            return Err(Error::Data(format!(
                "ensemble runs disagree on paragraph count: {} vs {}",
                run.len(),
                first.len()
            )));
        }
    }
    let mut voted = Vec::with_capacity(first.len());
    for p in 0..first.len() {
        let slots = first[p].len();
        for run in runs {
            if run[p].len() != slots {
                return Err(Error::Data(format!(
                    "ensemble runs disagree on slot count in paragraph {p}: {} vs {slots}",
                    run[p].len()
                )));
            }
        }
        let mut labels = Vec::with_capacity(slots);
        for s in 0..slots {
            let classes = first[p][s].probs.len();
            let mut votes = vec![0usize; classes];
            let mut prob_sums = vec![0.0f64; classes];
            for run in runs {
                let pred = &run[p][s];
                votes[pred.label] += 1;
                for (acc, pr) in prob_sums.iter_mut().zip(pred.probs.iter()) {
                    *acc += pr;
                }
            }
            let top = *votes.iter().max().unwrap();
            let mut winner = usize::MAX;
            let mut winner_mass = f64::NEG_INFINITY;
            for c in 0..classes {
                if votes[c] == top && prob_sums[c] > winner_mass {
                    winner = c;
                    winner_mass = prob_sums[c];
                }
            }
            labels.push(winner);
        }
        voted.push(labels);
    }
    Ok(voted)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub seeds: Vec<u64>,
    /// Test metrics of each single run, in seed order.
    pub single_runs: Vec<Metrics>,
    pub mean_single_implicit_macro_f1: f64,
    pub ensemble: Metrics,
    pub run_reports: Vec<RunReport>,
}

/// Train one model per seed and majority-vote their test predictions.
pub fn run_ensemble(
    config: &TrainConfig,
    corpus: &Corpus,
    embeddings: Option<&std::path::Path>,
    seeds: &[u64],
) -> Result<EnsembleReport> {
    if seeds.is_empty() {
        return Err(Error::Config("ensemble needs at least one seed".into()));
    }
    if corpus.test.is_empty() {
        return Err(Error::Data("ensemble evaluation needs a non-empty test split".into()));
    }
    let mut single_runs = Vec::with_capacity(seeds.len());
    let mut run_reports = Vec::with_capacity(seeds.len());
    let mut all_predictions = Vec::with_capacity(seeds.len());
    let mut class_names = None;
    let mut gold_mapper: Option<Box<dyn Fn(&crate::corpus::RelationSlot) -> Vec<usize>>> = None;

    for seed in seeds {
        let mut seeded = config.clone();
        seeded.seed = *seed;
        let table = prepare_embeddings(seeded.word_dim, embeddings, *seed, corpus)?;
        let (model, report) = train(&seeded, corpus, &table)?;
        let predictions = predict_split(&model, &corpus.test, &table)?;
        single_runs.push(report.test.clone().expect("test split is non-empty"));
        run_reports.push(report);
        all_predictions.push(predictions);
        if class_names.is_none() {
            class_names = Some(model.config.class_names());
            let binary = model.config.binary_target;
            gold_mapper = Some(Box::new(move |slot: &crate::corpus::RelationSlot| match binary {
                Some(target) => {
                    if slot.gold_contains(target) {
                        vec![1]
                    } else {
                        vec![0]
                    }
                }
                None => slot.gold.iter().map(|l| l.index()).collect(),
            }));
        }
    }

    let voted = ensemble_vote(&all_predictions)?;
    let ensemble = metrics_from_labels(
        &corpus.test,
        &voted,
        class_names.as_ref().unwrap(),
        gold_mapper.as_ref().unwrap(),
        true,
    )?;
    let mean = single_runs.iter().map(|m| m.implicit.macro_f1).sum::<f64>() / single_runs.len() as f64;
    Ok(EnsembleReport {
        seeds: seeds.to_vec(),
        single_runs,
        mean_single_implicit_macro_f1: mean,
        ensemble,
        run_reports,
    })
}
