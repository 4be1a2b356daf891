//! Data model, file formats, vocabulary/embedding ingestion, token
//! featurization, and the planted-pattern synthetic corpus generator.

pub mod embed;
pub mod format;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embed::{featurize, EmbeddingTable, FeaturizerConfig};
pub use format::{parse_corpus, parse_split, serialize_split, write_corpus};
pub use synth::{gen_synthetic, GenConfig, Regime};

/// The four top-level relation classes, in fixed order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Comp,
    Cont,
    Exp,
    Temp,
}

pub const NUM_LABELS: usize = 4;
pub const ALL_LABELS: [Label; NUM_LABELS] = [Label::Comp, Label::Cont, Label::Exp, Label::Temp];

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Comp => 0,
            Label::Cont => 1,
            Label::Exp => 2,
            Label::Temp => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Label> {
        ALL_LABELS.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Comp => "Comp",
            Label::Cont => "Cont",
            Label::Exp => "Exp",
            Label::Temp => "Temp",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "Comp" => Some(Label::Comp),
            "Cont" => Some(Label::Cont),
            "Exp" => Some(Label::Exp),
            "Temp" => Some(Label::Temp),
            _ => None,
        }
    }
}

/// Whether the relation slot carries an overt connective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotKind {
    Implicit,
    Explicit,
}

impl SlotKind {
    pub fn tag(self) -> &'static str {
        match self {
            SlotKind::Implicit => "IMP",
            SlotKind::Explicit => "EXP",
        }
    }
}

/// Sentinel for tags outside the inventory.
pub const UNKNOWN_TAG: usize = usize::MAX;

/// One token with resolved vocabulary and tag-inventory indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos_id: usize,
    pub ner_id: usize,
}

/// The position between two adjacent discourse units, with its kind and
/// one or two distinct gold labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSlot {
    pub kind: SlotKind,
    pub gold: Vec<Label>,
}

impl RelationSlot {
    pub fn new(kind: SlotKind, gold: Vec<Label>) -> Result<Self> {
        if gold.is_empty() || gold.len() > 2 {
            return Err(Error::Data(format!("slot must carry 1 or 2 gold labels, got {}", gold.len())));
        }
        if gold.len() == 2 && gold[0] == gold[1] {
            return Err(Error::Data("double-annotated slot labels must be distinct".into()));
        }
        Ok(RelationSlot { kind, gold })
    }

    pub fn gold_contains(&self, label: Label) -> bool {
        self.gold.contains(&label)
    }
}

/// A paragraph: a token sequence, its contiguous discourse-unit spans,
/// and the relation slot between each pair of adjacent units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub tokens: Vec<Token>,
    /// Inclusive `(start, end)` token index pairs, in order.
    pub du_spans: Vec<(usize, usize)>,
    pub slots: Vec<RelationSlot>,
}

impl Paragraph {
    pub fn new(tokens: Vec<Token>, du_spans: Vec<(usize, usize)>, slots: Vec<RelationSlot>) -> Result<Self> {
        let p = Paragraph { tokens, du_spans, slots };
        p.validate()?;
        Ok(p)
    }

    /// Enforce the structural invariants: spans contiguous, in order,
    /// covering all tokens; at least two units; one slot per adjacency.
    pub fn validate(&self) -> Result<()> {
        if self.du_spans.len() < 2 {
            return Err(Error::Data(format!("paragraph needs >= 2 discourse units, got {}", self.du_spans.len())));
        }
        if self.slots.len() + 1 != self.du_spans.len() {
            return Err(Error::Data(format!(
                "{} units require {} slots, got {}",
                self.du_spans.len(),
                self.du_spans.len() - 1,
                self.slots.len()
            )));
        }
        let mut expected_start = 0usize;
        for (i, (start, end)) in self.du_spans.iter().enumerate() {
            if *start != expected_start {
                return Err(Error::Data(format!("unit {} starts at token {}, expected {}", i, start, expected_start)));
            }
            if end < start {
                return Err(Error::Data(format!("unit {} has end {} before start {}", i, end, start)));
            }
            expected_start = end + 1;
        }
        if expected_start != self.tokens.len() {
            return Err(Error::Data(format!(
                "units cover {} tokens but paragraph has {}",
                expected_start,
                self.tokens.len()
            )));
        }
        for slot in &self.slots {
            if slot.gold.is_empty() || slot.gold.len() > 2 {
                return Err(Error::Data("slot must carry 1 or 2 gold labels".into()));
            }
        }
        Ok(())
    }

    pub fn num_units(&self) -> usize {
        self.du_spans.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Tokens of one discourse unit.
    pub fn unit_tokens(&self, unit: usize) -> &[Token] {
        let (start, end) = self.du_spans[unit];
        &self.tokens[start..=end]
    }

    /// Bucket key for length breakdowns: "2", "3", "4", "5", or ">5".
    pub fn length_bucket(&self) -> &'static str {
        match self.num_units() {
            2 => "2",
            3 => "3",
            4 => "4",
            5 => "5",
            _ => ">5",
        }
    }
}

/// Named tag inventories shared by every split of a corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagInventories {
    pub pos: Vec<String>,
    pub ner: Vec<String>,
}

impl TagInventories {
    /// Placeholder inventories matching the default feature layout:
    /// 36 part-of-speech slots and 7 named-entity slots.
    pub fn default_sizes() -> Self {
        TagInventories {
            pos: (0..36).map(|i| format!("POS{i}")).collect(),
            ner: (0..7).map(|i| format!("NER{i}")).collect(),
        }
    }

    pub fn pos_index(&self, tag: &str) -> usize {
        self.pos.iter().position(|t| t == tag).unwrap_or(UNKNOWN_TAG)
    }

    pub fn ner_index(&self, tag: &str) -> usize {
        self.ner.iter().position(|t| t == tag).unwrap_or(UNKNOWN_TAG)
    }
}

/// One split of paragraphs.
pub type Split = Vec<Paragraph>;

/// Train/dev/test splits plus the tag inventories they share.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub train: Split,
    pub dev: Split,
    pub test: Split,
    pub inventories: TagInventories,
}

impl Corpus {
    pub fn splits(&self) -> [(&'static str, &Split); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }

    pub fn total_slots(split: &Split) -> usize {
        split.iter().map(|p| p.num_slots()).sum()
    }
}
