//! Full models: the hierarchical paragraph encoder with tied or untied
//! heads and an optional CRF, plus the context-blind pair baseline.
//! One forward implementation serves training, evaluation, and decoding.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, FeaturizerConfig, Label, Paragraph, SlotKind, Token, NUM_LABELS};
use crate::crf::{emission_values, emissions, viterbi, CrfLayer, CrfStateSpace};
use crate::encoder::{bilstm_run, du_maxpool, BiLstmLayer, DropoutPlan, EncoderStack};
use crate::error::{Error, Result};
use crate::heads::{combined_loss, slot_logits, slot_loss, HeadParams, HeadSet};
use crate::numeric::{softmax, Matrix, ParamStore, Rng, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Per-slot model over only the two relevant units; no unit-level layer.
    BaselinePair,
    /// Hierarchical encoder, one softmax head for both slot kinds.
    BasicTied,
    /// Hierarchical encoder, separate implicit/explicit heads.
    Untied,
    /// Untied heads with a CRF over the slot sequence.
    UntiedCrf,
}

impl Variant {
    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "baseline-pair" => Some(Variant::BaselinePair),
            "basic-tied" => Some(Variant::BasicTied),
            "untied" => Some(Variant::Untied),
            "untied-crf" => Some(Variant::UntiedCrf),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaselinePair => "baseline-pair",
            Variant::BasicTied => "basic-tied",
            Variant::Untied => "untied",
            Variant::UntiedCrf => "untied-crf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrfMode {
    Off,
    Plain4,
    Typed8,
}

impl CrfMode {
    pub fn parse(s: &str) -> Option<CrfMode> {
        match s {
            "off" => Some(CrfMode::Off),
            "plain4" => Some(CrfMode::Plain4),
            "typed8" => Some(CrfMode::Typed8),
            _ => None,
        }
    }

    pub fn state_space(self) -> Option<CrfStateSpace> {
        match self {
            CrfMode::Off => None,
            CrfMode::Plain4 => Some(CrfStateSpace::Plain4),
            CrfMode::Typed8 => Some(CrfStateSpace::Typed8),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden_dim: usize,
    pub word_dim: usize,
    pub pos_count: usize,
    pub ner_count: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub dropout_after_pool: bool,
    pub crf: CrfMode,
    /// One-vs-all target; relabels gold sets and shrinks heads to 2 classes.
    pub binary_target: Option<Label>,
    /// Seed of the out-of-vocabulary embedding draws the model was
    /// trained with; evaluation must rebuild the same frozen vectors.
    pub embedding_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.word_dim == 0 {
            return Err(Error::Config("hidden_dim and word_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        match (self.variant, self.crf) {
            (Variant::UntiedCrf, CrfMode::Off) => {
                return Err(Error::Config("variant untied-crf requires a CRF mode (plain4 or typed8)".into()))
            }
            (Variant::UntiedCrf, _) => {}
            (_, CrfMode::Off) => {}
            (v, _) => {
                return Err(Error::Config(format!(
                    "the CRF layer requires untied heads (variant untied-crf), got {}",
                    v.name()
                )))
            }
        }
        if self.binary_target.is_some() && self.crf != CrfMode::Off {
            return Err(Error::Config("the CRF layer is not suitable for binary classification".into()));
        }
        Ok(())
    }

    pub fn num_labels(&self) -> usize {
        if self.binary_target.is_some() {
            2
        } else {
            NUM_LABELS
        }
    }

    pub fn feature_config(&self) -> FeaturizerConfig {
        FeaturizerConfig { word_dim: self.word_dim, pos_count: self.pos_count, ner_count: self.ner_count }
    }

    fn dropout_plan(&self) -> DropoutPlan {
        DropoutPlan { p: self.dropout, after_pool: self.dropout_after_pool }
    }

    /// Class names in prediction-index order.
    pub fn class_names(&self) -> Vec<String> {
        match self.binary_target {
            Some(target) => vec!["neg".into(), format!("pos-{}", target.name())],
            None => crate::corpus::ALL_LABELS.iter().map(|l| l.name().to_string()).collect(),
        }
    }
}

enum Architecture {
    Hierarchical { encoder: EncoderStack, heads: HeadSet, crf: Option<CrfLayer> },
    PairBaseline { word_layer: BiLstmLayer, dropout: DropoutPlan, head: HeadParams },
}

/// A model plus the store owning its parameters.
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    arch: Architecture,
}

/// Decoded label index with the kind-matched head's probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub label: usize,
    pub probs: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Model> {
        config.validate()?;
        let mut store = ParamStore::new();
        let feature_dim = config.feature_config().feature_dim();
        let num_labels = config.num_labels();
        let arch = match config.variant {
            Variant::BaselinePair => {
                let word_layer = BiLstmLayer::new(&mut store, "encoder.word", feature_dim, config.hidden_dim, rng);
                let head = HeadParams::new(&mut store, "head", num_labels, 2 * word_layer.output_dim(), rng);
                Architecture::PairBaseline { word_layer, dropout: config.dropout_plan(), head }
            }
            variant => {
                let encoder = EncoderStack::new(&mut store, feature_dim, config.hidden_dim, config.dropout_plan(), rng);
                let pair_dim = 2 * encoder.unit_dim();
                let heads = match variant {
                    Variant::BasicTied => HeadSet::tied(&mut store, num_labels, pair_dim, rng),
                    _ => HeadSet::untied(&mut store, num_labels, pair_dim, rng),
                };
                let crf = config.crf.state_space().map(|space| CrfLayer::new(&mut store, space));
                Architecture::Hierarchical { encoder, heads, crf }
            }
        };
        Ok(Model { config, store, arch })
    }

    /// Gold label indices of a slot in this model's label space.
    pub fn gold_ids(&self, slot: &crate::corpus::RelationSlot) -> Vec<usize> {
        match self.config.binary_target {
            Some(target) => {
                if slot.gold_contains(target) {
                    vec![1]
                } else {
                    vec![0]
                }
            }
            None => slot.gold.iter().map(|l| l.index()).collect(),
        }
    }

    /// Per-slot logit nodes (kind-matched head), shared by loss and decode.
    fn slot_logit_nodes(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        paragraph: &Paragraph,
        table: &EmbeddingTable,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Vec<Var>> {
        let features = self.config.feature_config();
        match &self.arch {
            Architecture::Hierarchical { encoder, heads, .. } => {
                let units = encoder.encode_paragraph(tape, store, paragraph, table, &features, rng, training)?;
                let mut logits = Vec::with_capacity(paragraph.num_slots());
                for (t, slot) in paragraph.slots.iter().enumerate() {
                    logits.push(slot_logits(tape, store, heads, units[t], units[t + 1], slot.kind)?);
                }
                Ok(logits)
            }
            Architecture::PairBaseline { word_layer, dropout, head } => {
                let mut logits = Vec::with_capacity(paragraph.num_slots());
                for (t, slot) in paragraph.slots.iter().enumerate() {
                    let pooled = encode_pair(
                        tape,
                        store,
                        word_layer,
                        *dropout,
                        paragraph.unit_tokens(t),
                        paragraph.unit_tokens(t + 1),
                        table,
                        &features,
                        rng,
                        training,
                    )?;
                    let heads = HeadSet::Tied(*head);
                    logits.push(slot_logits(tape, store, &heads, pooled.0, pooled.1, slot.kind)?);
                }
                Ok(logits)
            }
        }
    }

    fn paragraph_loss_with(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        paragraph: &Paragraph,
        table: &EmbeddingTable,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Option<Var>> {
        let logits = self.slot_logit_nodes(store, tape, paragraph, table, rng, training)?;
        if let Architecture::Hierarchical { crf: Some(crf), .. } = &self.arch {
            let kinds: Vec<SlotKind> = paragraph.slots.iter().map(|s| s.kind).collect();
            let nodes = emissions(tape, &logits, &kinds, crf.space)?;
            let allowed: Vec<Vec<usize>> = paragraph
                .slots
                .iter()
                .map(|s| crf.space.allowed_states(s.kind, &self.gold_ids(s)))
                .collect();
            let vars = crf.bind(tape, store);
            return Ok(Some(crf.nll(tape, &vars, &nodes, &allowed)?));
        }

        let mut implicit = Vec::new();
        let mut explicit = Vec::new();
        for (slot, lv) in paragraph.slots.iter().zip(logits.iter()) {
            match slot.kind {
                SlotKind::Implicit => implicit.push(slot_loss(tape, *lv, &self.gold_ids(slot))?),
                SlotKind::Explicit => {
                    // alpha = 0 builds no explicit loss at all, so no
                    // gradient can reach the explicit head.
                    if self.config.alpha != 0.0 {
                        explicit.push(slot_loss(tape, *lv, &self.gold_ids(slot))?);
                    }
                }
            }
        }
        combined_loss(tape, &implicit, &explicit, self.config.alpha)
    }

    /// Training loss of one paragraph: the weighted sum of per-slot
    /// losses, or the CRF sequence NLL when the CRF is enabled. `None`
    /// when nothing contributes (no implicit slots and `alpha = 0`).
    pub fn paragraph_loss(
        &self,
        tape: &mut Tape,
        paragraph: &Paragraph,
        table: &EmbeddingTable,
        rng: &mut Rng,
        training: bool,
    ) -> Result<Option<Var>> {
        self.paragraph_loss_with(&self.store, tape, paragraph, table, rng, training)
    }

    /// Verify analytic gradients of the deterministic loss (dropout off)
    /// over the given paragraphs against central finite differences.
    pub fn check_gradients(
        &mut self,
        paragraphs: &[Paragraph],
        table: &EmbeddingTable,
        settings: &crate::numeric::FdSettings,
    ) -> Result<crate::numeric::FdReport> {
        let mut store = std::mem::take(&mut self.store);
        let result = crate::numeric::finite_diff_check(
            &mut store,
            |s, with_grad| {
                let mut total = 0.0;
                for paragraph in paragraphs {
                    let mut tape = Tape::new();
                    let mut rng = Rng::new(0);
                    if let Some(loss) = self.paragraph_loss_with(s, &mut tape, paragraph, table, &mut rng, false)? {
                        if with_grad {
                            tape.backward(loss, s)?;
                        }
                        total += tape.value(loss).data()[0];
                    }
                }
                Ok(total)
            },
            settings,
        );
        self.store = store;
        result
    }

    /// Decode one paragraph: Viterbi over masked emissions when the CRF
    /// is enabled, otherwise the per-slot argmax of the kind-matched
    /// head's probabilities. Probabilities always come from the
    /// kind-matched softmax.
    pub fn decode_paragraph(&self, paragraph: &Paragraph, table: &EmbeddingTable) -> Result<Vec<SlotPrediction>> {
        let mut tape = Tape::new();
        let mut rng = Rng::new(0); // unused: inference draws nothing
        let logits = self.slot_logit_nodes(&self.store, &mut tape, paragraph, table, &mut rng, false)?;
        let probs: Vec<Vec<f64>> =
            logits.iter().map(|lv| softmax(tape.value(*lv)).data().to_vec()).collect();

        if let Architecture::Hierarchical { crf: Some(crf), .. } = &self.arch {
            let kinds: Vec<SlotKind> = paragraph.slots.iter().map(|s| s.kind).collect();
            let nodes = emissions(&mut tape, &logits, &kinds, crf.space)?;
            let table_e = emission_values(&tape, &nodes);
            let (path, _) = viterbi(
                &table_e,
                self.store.value(crf.transitions),
                self.store.value(crf.start),
                self.store.value(crf.end),
            )?;
            return Ok(path
                .iter()
                .zip(probs)
                .map(|(state, probs)| SlotPrediction { label: crf.space.state_label(*state), probs })
                .collect());
        }

        Ok(probs
            .into_iter()
            .map(|probs| {
                let label = argmax(&probs);
                SlotPrediction { label, probs }
            })
            .collect())
    }

    /// Write a versioned JSON snapshot of the configuration and every
    /// parameter block.
    pub fn save(&self, path: &Path) -> Result<()> {
        let blocks: Vec<SnapshotBlock> = self
            .store
            .blocks()
            .map(|b| SnapshotBlock {
                name: b.name.clone(),
                rows: b.value.rows(),
                cols: b.value.cols(),
                trainable: b.trainable,
                data: b.value.data().to_vec(),
            })
            .collect();
        let snapshot = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            config: self.config.clone(),
            blocks,
        };
        fs::write(path, serde_json::to_string(&snapshot)?)?;
        Ok(())
    }

    /// Load a snapshot written by [`Model::save`].
    pub fn load(path: &Path) -> Result<Model> {
        let text = fs::read_to_string(path)?;
        let snapshot: Snapshot = serde_json::from_str(&text)?;
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(Error::Format(format!("not a model snapshot: format '{}'", snapshot.format)));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!(
                "unsupported snapshot version {} (expected {})",
                snapshot.version, SNAPSHOT_VERSION
            )));
        }
        let mut rng = Rng::new(0);
        let mut model = Model::new(snapshot.config, &mut rng)?;
        if snapshot.blocks.len() != model.store.len() {
            return Err(Error::Format(format!(
                "snapshot has {} blocks, architecture expects {}",
                snapshot.blocks.len(),
                model.store.len()
            )));
        }
        for (id, sb) in model.store.ids().collect::<Vec<_>>().into_iter().zip(snapshot.blocks) {
            let block = model.store.block_mut(id);
            if block.name != sb.name || block.value.rows() != sb.rows || block.value.cols() != sb.cols {
                return Err(Error::Format(format!(
                    "snapshot block '{}' ({}x{}) does not match architecture block '{}' ({}x{})",
                    sb.name,
                    sb.rows,
                    sb.cols,
                    block.name,
                    block.value.rows(),
                    block.value.cols()
                )));
            }
            block.value = Matrix::from_vec(sb.rows, sb.cols, sb.data)?;
            block.trainable = sb.trainable;
        }
        Ok(model)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Encode just the two units of one slot: word Bi-LSTM over their
/// concatenated tokens, max-pool per unit. No unit-level layer.
#[allow(clippy::too_many_arguments)]
fn encode_pair(
    tape: &mut Tape,
    store: &ParamStore,
    word_layer: &BiLstmLayer,
    dropout: DropoutPlan,
    left: &[Token],
    right: &[Token],
    table: &EmbeddingTable,
    features: &FeaturizerConfig,
    rng: &mut Rng,
    training: bool,
) -> Result<(Var, Var)> {
    let p = dropout.p;
    let mut inputs = Vec::with_capacity(left.len() + right.len());
    for token in left.iter().chain(right.iter()) {
        let feat = tape.constant(crate::corpus::featurize(token, table, features));
        inputs.push(tape.dropout(feat, p, rng, training)?);
    }
    let states = bilstm_run(tape, store, word_layer, &inputs)?;
    let mut dropped = Vec::with_capacity(states.len());
    for h in states {
        dropped.push(tape.dropout(h, p, rng, training)?);
    }
    let split = left.len();
    let mut pool_left = du_maxpool(tape, &dropped, (0, split - 1))?;
    let mut pool_right = du_maxpool(tape, &dropped, (split, dropped.len() - 1))?;
    if dropout.after_pool {
        pool_left = tape.dropout(pool_left, p, rng, training)?;
        pool_right = tape.dropout(pool_right, p, rng, training)?;
    }
    Ok((pool_left, pool_right))
}

const SNAPSHOT_FORMAT: &str = "discoseq-model";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotBlock {
    name: String,
    rows: usize,
    cols: usize,
    trainable: bool,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    config: ModelConfig,
    blocks: Vec<SnapshotBlock>,
}
