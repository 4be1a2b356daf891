//! Relation prediction heads over concatenated adjacent discourse-unit
//! representations, with tied or untied (implicit/explicit) parameters,
//! per-slot loss with double-label handling, and the weighted joint loss.

use crate::corpus::SlotKind;
use crate::error::{Error, Result};
use crate::numeric::{Matrix, ParamId, ParamStore, Rng, Tape, Var};

/// One affine + softmax classifier: `W (labels x 2*unit_dim)`, `b`.
#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl HeadParams {
    pub fn new(store: &mut ParamStore, name: &str, num_labels: usize, input_dim: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / (num_labels + input_dim) as f64).sqrt();
        let data: Vec<f64> = (0..num_labels * input_dim).map(|_| rng.uniform(-bound, bound)).collect();
        let weight = store.add(format!("{name}.weight"), Matrix::from_vec(num_labels, input_dim, data).unwrap(), true);
        let bias = store.add(format!("{name}.bias"), Matrix::zeros(num_labels, 1), true);
        HeadParams { weight, bias }
    }
}

/// Tied: one classifier for every slot. Untied: disjoint parameter sets
/// for implicit and explicit slots.
#[derive(Clone, Copy, Debug)]
pub enum HeadSet {
    Tied(HeadParams),
    Untied { implicit: HeadParams, explicit: HeadParams },
}

impl HeadSet {
    pub fn tied(store: &mut ParamStore, num_labels: usize, input_dim: usize, rng: &mut Rng) -> Self {
        HeadSet::Tied(HeadParams::new(store, "head", num_labels, input_dim, rng))
    }

    pub fn untied(store: &mut ParamStore, num_labels: usize, input_dim: usize, rng: &mut Rng) -> Self {
        HeadSet::Untied {
            implicit: HeadParams::new(store, "head.imp", num_labels, input_dim, rng),
            explicit: HeadParams::new(store, "head.exp", num_labels, input_dim, rng),
        }
    }

    /// The classifier responsible for a slot of the given kind.
    pub fn for_kind(&self, kind: SlotKind) -> &HeadParams {
        match self {
            HeadSet::Tied(head) => head,
            HeadSet::Untied { implicit, explicit } => match kind {
                SlotKind::Implicit => implicit,
                SlotKind::Explicit => explicit,
            },
        }
    }
}

/// Pre-softmax scores for one slot: the kind-matched head applied to the
/// concatenation of the two adjacent unit representations.
pub fn slot_logits(
    tape: &mut Tape,
    store: &ParamStore,
    heads: &HeadSet,
    unit_prev: Var,
    unit_cur: Var,
    kind: SlotKind,
) -> Result<Var> {
    let head = heads.for_kind(kind);
    let joined = tape.concat(&[unit_prev, unit_cur])?;
    let w = tape.param(store, head.weight);
    let b = tape.param(store, head.bias);
    let wm = store.value(head.weight);
    if wm.cols() != tape.value(joined).rows() {
        return Err(Error::Dimension(format!(
            "head weight {}x{} against {}-dim pair input",
            wm.rows(),
            wm.cols(),
            tape.value(joined).rows()
        )));
    }
    tape.affine(w, joined, b)
}

/// Marginal negative log-likelihood over the gold set:
/// `-log sum_{g in gold} softmax(logits)[g]`. Reduces to cross-entropy
/// for singleton gold sets.
pub fn slot_loss(tape: &mut Tape, logits: Var, gold: &[usize]) -> Result<Var> {
    if gold.is_empty() {
        return Err(Error::Data("slot has an empty gold set".into()));
    }
    let all = tape.logsumexp(logits)?;
    let picked = tape.gather_rows(logits, gold)?;
    let gold_mass = tape.logsumexp(picked)?;
    tape.sub(all, gold_mass)
}

/// `sum(implicit losses) + alpha * sum(explicit losses)`. Normalization
/// by slot count happens at the accumulation window, not here.
pub fn combined_loss(tape: &mut Tape, implicit: &[Var], explicit: &[Var], alpha: f64) -> Result<Option<Var>> {
    let mut terms: Vec<Var> = implicit.to_vec();
    if alpha != 0.0 && !explicit.is_empty() {
        let exp_sum = tape.sum_all(explicit)?;
        terms.push(tape.scale(exp_sum, alpha));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(tape.sum_all(&terms)?))
}
