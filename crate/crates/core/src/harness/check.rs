//! The built-in verification suite behind the `check` CLI command:
//! dynamic-programming oracles and gradient checks over the shipped
//! forward/backward code.

use crate::corpus::{gen_synthetic, GenConfig, Regime};
use crate::crf::{oracle, viterbi, CrfLayer, CrfStateSpace, EmissionTable};
use crate::error::{Error, Result};
use crate::harness::train::prepare_embeddings;
use crate::model::{CrfMode, Model, ModelConfig, Variant};
use crate::numeric::{logsumexp, softmax, FdSettings, Matrix, ParamStore, Rng, Tape, Var};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// Compare Viterbi, forward, and constrained forward against exhaustive
/// enumeration on random instances.
pub fn check_crf_against_enumeration(instances: usize, tol: f64, seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    let mut max_err = 0.0f64;
    for case in 0..instances {
        let slots = 1 + rng.below(6);
        let states = if case % 2 == 0 { 4 } else { 8 };
        let mut scores = Matrix::zeros(slots, states);
        for i in 0..slots {
            for j in 0..states {
                scores.set(i, j, rng.uniform(-4.0, 4.0));
            }
        }
        let e = EmissionTable::new(scores);
        let mut transitions = Matrix::zeros(states, states);
        for i in 0..states {
            for j in 0..states {
                transitions.set(i, j, rng.uniform(-2.0, 2.0));
            }
        }
        let start_v: Vec<f64> = (0..states).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let end_v: Vec<f64> = (0..states).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let start = Matrix::column(&start_v);
        let end = Matrix::column(&end_v);

        let (path, score) = match viterbi(&e, &transitions, &start, &end) {
            Ok(v) => v,
            Err(err) => return outcome("crf-enumeration", false, err.to_string()),
        };
        let (want_path, want_score) = oracle::best_path(&e, &transitions, &start, &end);
        if path != want_path {
            return outcome(
                "crf-enumeration",
                false,
                format!("case {case}: viterbi path {path:?} != enumeration {want_path:?}"),
            );
        }
        max_err = max_err.max((score - want_score).abs());

        // Forward and constrained forward on the training path (the tape).
        let mut store = ParamStore::new();
        let layer = CrfLayer {
            space: if states == 4 { CrfStateSpace::Plain4 } else { CrfStateSpace::Typed8 },
            transitions: store.add("t", transitions.clone(), true),
            start: store.add("s", start.clone(), true),
            end: store.add("e", end.clone(), true),
        };
        let mut tape = Tape::new();
        let vars = layer.bind(&mut tape, &store);
        let nodes: Vec<Var> =
            (0..slots).map(|t| tape.constant(Matrix::column(e.scores.row(t)))).collect();
        let logz = match layer.forward_logz(&mut tape, &vars, &nodes) {
            Ok(z) => tape.value(z).data()[0],
            Err(err) => return outcome("crf-enumeration", false, err.to_string()),
        };
        max_err = max_err.max((logz - oracle::logz(&e, &transitions, &start, &end)).abs());

        let allowed: Vec<Vec<usize>> = (0..slots)
            .map(|_| {
                let mut set: Vec<usize> = (0..states).filter(|_| rng.bernoulli(0.4)).collect();
                if set.is_empty() {
                    set.push(rng.below(states));
                }
                set
            })
            .collect();
        let constrained = match layer.constrained_logz(&mut tape, &vars, &nodes, &allowed) {
            Ok(z) => tape.value(z).data()[0],
            Err(err) => return outcome("crf-enumeration", false, err.to_string()),
        };
        let want = oracle::constrained_logz(&e, &transitions, &start, &end, &allowed);
        max_err = max_err.max((constrained - want).abs());
    }
    outcome(
        "crf-enumeration",
        max_err < tol,
        format!("{instances} random instances, max |dp - enumeration| = {max_err:.3e}"),
    )
}

/// Finite-difference check of the full model on synthetic paragraphs.
pub fn check_model_gradients(hidden: usize, paragraphs: usize, seed: u64) -> CheckOutcome {
    let run = || -> Result<crate::numeric::FdReport> {
        let mut gen = GenConfig::new(Regime::Markov, 64.max(paragraphs));
        gen.double_label_prob = 0.15;
        let corpus = gen_synthetic(&gen, seed);
        let chosen: Vec<_> = corpus.train.iter().take(paragraphs).cloned().collect();

        let config = ModelConfig {
            variant: Variant::UntiedCrf,
            hidden_dim: hidden,
            word_dim: 5,
            pos_count: corpus.inventories.pos.len(),
            ner_count: corpus.inventories.ner.len(),
            alpha: 1.0,
            dropout: 0.0,
            dropout_after_pool: true,
            crf: CrfMode::Typed8,
            binary_target: None,
            embedding_seed: seed,
        };
        let table = prepare_embeddings(5, None, seed, &corpus)?;
        let mut model = Model::new(config, &mut Rng::new(seed))?;
        let settings = FdSettings { step: 1e-4, tol: 1e-3, coords_per_block: 12, seed };
        model.check_gradients(&chosen, &table, &settings)
    };
    match run() {
        Ok(report) => outcome(
            "model-gradients",
            true,
            format!(
                "{} coordinates over {} blocks, max rel err = {:.3e}",
                report.coords_checked, report.blocks_checked, report.max_rel_err
            ),
        ),
        Err(err) => outcome("model-gradients", false, err.to_string()),
    }
}

/// Basic numeric invariants under random draws.
pub fn check_numeric_invariants(seed: u64) -> CheckOutcome {
    let mut rng = Rng::new(seed);
    for _ in 0..200 {
        let n = 1 + rng.below(9);
        let values: Vec<f64> = (0..n).map(|_| rng.uniform(-30.0, 30.0)).collect();
        let s = softmax(&Matrix::column(&values));
        let total: f64 = s.data().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return outcome("numeric-invariants", false, format!("softmax sums to {total}"));
        }
        let shift = rng.uniform(-100.0, 100.0);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let a = logsumexp(&values).unwrap();
        let b = logsumexp(&shifted).unwrap();
        if (b - (a + shift)).abs() > 1e-9 {
            return outcome("numeric-invariants", false, format!("logsumexp shift drift {:.3e}", b - a - shift));
        }
    }
    outcome("numeric-invariants", true, "softmax normalization and logsumexp shift invariance hold".into())
}

/// Run the whole verification suite.
pub fn run_verification_suite() -> Vec<CheckOutcome> {
    vec![
        check_numeric_invariants(2024),
        check_crf_against_enumeration(200, 1e-8, 7),
        check_model_gradients(8, 3, 11),
    ]
}

/// First failure as a verification error, if any check failed.
pub fn verification_error(outcomes: &[CheckOutcome]) -> Result<()> {
    match outcomes.iter().find(|o| !o.passed) {
        Some(fail) => Err(Error::Verification(format!("{}: {}", fail.name, fail.detail))),
        None => Ok(()),
    }
}
