//! Planted-pattern synthetic corpus generator.
//!
//! Three regimes plant recoverable signals:
//! - `ConnectiveOnly`: every explicit slot opens its right-hand unit with
//!   a connective tied to the gold label; implicit slots plant a
//!   label-indicative content word in the right-hand unit.
//! - `ContextDependent`: implicit labels are determined by a theme word
//!   that appears only in the first unit of the paragraph, so a model
//!   that sees just the two units of a slot cannot recover labels beyond
//!   the first slot.
//! - `Markov`: slot labels follow a first-order Markov chain; explicit
//!   slots are anchored by connectives while implicit slots carry only a
//!   weak local signal, so joint decoding over the label sequence pays.

use crate::corpus::{Corpus, Label, Paragraph, RelationSlot, SlotKind, TagInventories, Token, ALL_LABELS, NUM_LABELS};
use crate::numeric::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    ConnectiveOnly,
    ContextDependent,
    Markov,
}

impl Regime {
    pub fn parse(s: &str) -> Option<Regime> {
        match s {
            "connective" | "connective-only" => Some(Regime::ConnectiveOnly),
            "context" | "context-dependent" => Some(Regime::ContextDependent),
            "markov" => Some(Regime::Markov),
            _ => None,
        }
    }
}

/// Paragraph-count shares for 2, 3, 4, 5, and >5 discourse units.
pub const DU_COUNT_DISTRIBUTION: [f64; 5] = [0.44, 0.25, 0.15, 0.073, 0.087];

/// Connective surface per label; the mapping explicit slots are built from.
pub const CONNECTIVES: [(&str, Label); 4] = [
    ("but", Label::Comp),
    ("because", Label::Cont),
    ("and", Label::Exp),
    ("then", Label::Temp),
];

pub fn connective_label(surface: &str) -> Option<Label> {
    CONNECTIVES.iter().find(|(s, _)| *s == surface).map(|(_, l)| *l)
}

const SIGNALS_PER_LABEL: usize = 3;

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub paragraphs: usize,
    pub regime: Regime,
    /// Size of the filler vocabulary.
    pub vocab_size: usize,
    /// Probability that a slot is explicit.
    pub explicit_prob: f64,
    /// Filler tokens per discourse unit, uniform in `[min, max]`.
    pub du_len_min: usize,
    pub du_len_max: usize,
    /// Row-stochastic transition matrix `P(next | prev)` over the label
    /// sequence (Markov regime; the others override label drawing).
    pub transition: [[f64; NUM_LABELS]; NUM_LABELS],
    /// Probability an implicit slot plants a label-indicative content
    /// word in its right-hand unit.
    pub implicit_signal_prob: f64,
    /// Probability a slot carries a second gold label.
    pub double_label_prob: f64,
    /// Fractions of paragraphs assigned to train and dev; the rest is test.
    pub train_frac: f64,
    pub dev_frac: f64,
}

fn uniform_transition() -> [[f64; NUM_LABELS]; NUM_LABELS] {
    [[0.25; NUM_LABELS]; NUM_LABELS]
}

/// Diagonal-heavy transition: `P(next = prev) = stay`, rest uniform.
pub fn sticky_transition(stay: f64) -> [[f64; NUM_LABELS]; NUM_LABELS] {
    let off = (1.0 - stay) / (NUM_LABELS - 1) as f64;
    let mut t = [[off; NUM_LABELS]; NUM_LABELS];
    for (i, row) in t.iter_mut().enumerate() {
        row[i] = stay;
    }
    t
}

impl GenConfig {
    pub fn new(regime: Regime, paragraphs: usize) -> Self {
        let base = GenConfig {
            paragraphs,
            regime,
            vocab_size: 120,
            explicit_prob: 0.45,
            du_len_min: 3,
            du_len_max: 7,
            transition: uniform_transition(),
            implicit_signal_prob: 1.0,
            double_label_prob: 0.04,
            train_frac: 0.8,
            dev_frac: 0.1,
        };
        match regime {
            Regime::ConnectiveOnly => base,
            Regime::ContextDependent => GenConfig { implicit_signal_prob: 0.0, ..base },
            Regime::Markov => GenConfig {
                explicit_prob: 0.5,
                transition: sticky_transition(0.8),
                implicit_signal_prob: 0.25,
                ..base
            },
        }
    }
}

fn signal_word(label: Label, k: usize) -> String {
    format!("sig-{}-{}", label.name().to_lowercase(), k)
}

fn theme_word(label: Label) -> String {
    format!("theme-{}", label.name().to_lowercase())
}

fn inventories() -> TagInventories {
    TagInventories {
        pos: ["N", "V", "ADJ", "ADV", "CC", "DET"].iter().map(|s| s.to_string()).collect(),
        ner: ["O", "ENT", "NUM"].iter().map(|s| s.to_string()).collect(),
    }
}

fn filler_token(id: usize) -> Token {
    // Word-consistent tags: category derived from the id.
    Token { surface: format!("w{id}"), pos_id: id % 4, ner_id: if id % 11 == 0 { 1 } else { 0 } }
}

fn connective_token(label: Label) -> Token {
    let surface = CONNECTIVES[label.index()].0.to_string();
    Token { surface, pos_id: 4, ner_id: 0 }
}

fn content_token(surface: String) -> Token {
    Token { surface, pos_id: 0, ner_id: 0 }
}

fn draw_unit_count(rng: &mut Rng) -> usize {
    match rng.categorical(&DU_COUNT_DISTRIBUTION) {
        0 => 2,
        1 => 3,
        2 => 4,
        3 => 5,
        _ => 6 + rng.below(3),
    }
}

fn draw_label_sequence(config: &GenConfig, slots: usize, rng: &mut Rng) -> (Vec<Label>, Option<Label>) {
    match config.regime {
        Regime::ConnectiveOnly => {
            let labels = (0..slots).map(|_| ALL_LABELS[rng.below(NUM_LABELS)]).collect();
            (labels, None)
        }
        Regime::ContextDependent => {
            let theme = ALL_LABELS[rng.below(NUM_LABELS)];
            // Implicit slots take the theme; explicit slots are re-drawn
            // uniformly after kinds are known (see `gen_paragraph`).
            (vec![theme; slots], Some(theme))
        }
        Regime::Markov => {
            let mut labels = Vec::with_capacity(slots);
            let mut prev = ALL_LABELS[rng.below(NUM_LABELS)];
            labels.push(prev);
            for _ in 1..slots {
                let next = ALL_LABELS[rng.categorical(&config.transition[prev.index()])];
                labels.push(next);
                prev = next;
            }
            (labels, None)
        }
    }
}

fn gen_paragraph(config: &GenConfig, rng: &mut Rng) -> Paragraph {
    let units = draw_unit_count(rng);
    let slot_count = units - 1;

    let kinds: Vec<SlotKind> = (0..slot_count)
        .map(|_| if rng.bernoulli(config.explicit_prob) { SlotKind::Explicit } else { SlotKind::Implicit })
        .collect();

    let (mut primary, theme) = draw_label_sequence(config, slot_count, rng);
    if config.regime == Regime::ContextDependent {
        for (label, kind) in primary.iter_mut().zip(kinds.iter()) {
            if *kind == SlotKind::Explicit {
                *label = ALL_LABELS[rng.below(NUM_LABELS)];
            }
        }
    }

    let slots: Vec<RelationSlot> = primary
        .iter()
        .zip(kinds.iter())
        .map(|(label, kind)| {
            let mut gold = vec![*label];
            if rng.bernoulli(config.double_label_prob) {
                let mut second = ALL_LABELS[rng.below(NUM_LABELS)];
                while second == *label {
                    second = ALL_LABELS[rng.below(NUM_LABELS)];
                }
                gold.push(second);
            }
            RelationSlot::new(*kind, gold).unwrap()
        })
        .collect();

    let mut tokens: Vec<Token> = Vec::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for unit in 0..units {
        let start = tokens.len();
        let mut body: Vec<Token> = Vec::new();
        let fillers = config.du_len_min + rng.below(config.du_len_max - config.du_len_min + 1);
        for _ in 0..fillers {
            body.push(filler_token(rng.below(config.vocab_size)));
        }
        if unit == 0 {
            if let Some(theme) = theme {
                let at = rng.below(body.len() + 1);
                body.insert(at, content_token(theme_word(theme)));
            }
        } else {
            let slot = unit - 1;
            match kinds[slot] {
                SlotKind::Explicit => {
                    // Connectives open the right-hand unit of their slot.
                    body.insert(0, connective_token(primary[slot]));
                }
                SlotKind::Implicit => {
                    if rng.bernoulli(config.implicit_signal_prob) {
                        let word = signal_word(primary[slot], rng.below(SIGNALS_PER_LABEL));
                        let at = rng.below(body.len() + 1);
                        body.insert(at, content_token(word));
                    }
                }
            }
        }
        tokens.extend(body);
        spans.push((start, tokens.len() - 1));
    }

    Paragraph::new(tokens, spans, slots).expect("generated paragraph must satisfy invariants")
}

/// Generate a synthetic corpus. Identical `(config, seed)` pairs produce
/// byte-identical corpora.
pub fn gen_synthetic(config: &GenConfig, seed: u64) -> Corpus {
    let mut rng = Rng::new(seed);
    let all: Vec<Paragraph> = (0..config.paragraphs).map(|_| gen_paragraph(config, &mut rng)).collect();
    let n_train = ((config.paragraphs as f64) * config.train_frac).round() as usize;
    let n_dev = ((config.paragraphs as f64) * config.dev_frac).round() as usize;
    let mut iter = all.into_iter();
    let train: Vec<Paragraph> = iter.by_ref().take(n_train).collect();
    let dev: Vec<Paragraph> = iter.by_ref().take(n_dev).collect();
    let test: Vec<Paragraph> = iter.collect();
    Corpus { train, dev, test, inventories: inventories() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::format::serialize_split;

    #[test]
    fn every_generated_paragraph_is_valid() {
        let corpus = gen_synthetic(&GenConfig::new(Regime::Markov, 300), 7);
        for (_, split) in corpus.splits() {
            for p in split {
                p.validate().unwrap();
            }
        }
        assert_eq!(corpus.train.len(), 240);
        assert_eq!(corpus.dev.len(), 30);
        assert_eq!(corpus.test.len(), 30);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let config = GenConfig::new(Regime::ConnectiveOnly, 150);
        let a = gen_synthetic(&config, 11);
        let b = gen_synthetic(&config, 11);
        assert_eq!(
            serialize_split(&a.train, &a.inventories),
            serialize_split(&b.train, &b.inventories)
        );
        let c = gen_synthetic(&config, 12);
        assert_ne!(
            serialize_split(&a.train, &a.inventories),
            serialize_split(&c.train, &c.inventories)
        );
    }

    #[test]
    fn explicit_slots_are_determined_by_their_connective() {
        let corpus = gen_synthetic(&GenConfig::new(Regime::ConnectiveOnly, 200), 3);
        let mut seen = 0;
        for (_, split) in corpus.splits() {
            for p in split {
                for (t, slot) in p.slots.iter().enumerate() {
                    if slot.kind == SlotKind::Explicit {
                        let first = &p.unit_tokens(t + 1)[0];
                        assert_eq!(connective_label(&first.surface), Some(slot.gold[0]));
                        seen += 1;
                    }
                }
            }
        }
        assert!(seen > 50);
    }

    #[test]
    fn markov_bigram_frequencies_match_transition() {
        // P(next = Temp | prev = Temp) = 0.8 recovered within +-0.03.
        let mut config = GenConfig::new(Regime::Markov, 10_000);
        config.transition = sticky_transition(0.8);
        let corpus = gen_synthetic(&config, 5);
        let (mut same, mut total) = (0usize, 0usize);
        for (_, split) in corpus.splits() {
            for p in split {
                for pair in p.slots.windows(2) {
                    if pair[0].gold[0] == Label::Temp {
                        total += 1;
                        if pair[1].gold[0] == Label::Temp {
                            same += 1;
                        }
                    }
                }
            }
        }
        let freq = same as f64 / total as f64;
        assert!((freq - 0.8).abs() < 0.03, "P(Temp|Temp) = {freq} over {total} bigrams");
    }

    #[test]
    fn du_count_distribution_matches_target() {
        let corpus = gen_synthetic(&GenConfig::new(Regime::ConnectiveOnly, 10_000), 1);
        let mut counts = [0usize; 5];
        for (_, split) in corpus.splits() {
            for p in split {
                let idx = match p.num_units() {
                    2 => 0,
                    3 => 1,
                    4 => 2,
                    5 => 3,
                    _ => 4,
                };
                counts[idx] += 1;
            }
        }
        for (got, want) in counts.iter().zip(DU_COUNT_DISTRIBUTION.iter()) {
            let frac = *got as f64 / 10_000.0;
            assert!((frac - want).abs() < 0.02, "bucket fraction {frac} vs target {want}");
        }
    }

    #[test]
    fn context_regime_plants_theme_only_in_first_unit() {
        let corpus = gen_synthetic(&GenConfig::new(Regime::ContextDependent, 200), 9);
        for (_, split) in corpus.splits() {
            for p in split {
                let theme_units: Vec<usize> = (0..p.num_units())
                    .filter(|u| p.unit_tokens(*u).iter().any(|t| t.surface.starts_with("theme-")))
                    .collect();
                assert_eq!(theme_units, vec![0], "theme words must sit in the first unit only");
                let theme = p
                    .unit_tokens(0)
                    .iter()
                    .find_map(|t| t.surface.strip_prefix("theme-").map(String::from))
                    .expect("first unit carries a theme word");
                for slot in &p.slots {
                    if slot.kind == SlotKind::Implicit {
                        assert_eq!(slot.gold[0].name().to_lowercase(), theme);
                    }
                }
            }
        }
    }
}
