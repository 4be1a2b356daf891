//! Paragraph corpus text format.
//!
//! A split file is UTF-8 text. Optional header lines `#POS tag1 tag2 ...`
//! and `#NER tag1 ...` declare the tag inventories. Paragraphs are
//! separated by blank lines. Within a paragraph, token lines are
//! `surface<TAB>pos<TAB>ner<TAB>du_index` with `du_index` non-decreasing
//! from 0, followed by slot lines `REL<TAB>slot_index<TAB>IMP|EXP<TAB>Label[|Label]`.

use std::fs;
use std::path::Path;

use crate::corpus::{Label, Paragraph, RelationSlot, SlotKind, Split, TagInventories, Token};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

struct ParagraphAccumulator {
    tokens: Vec<Token>,
    du_of_token: Vec<usize>,
    slots: Vec<(usize, RelationSlot, usize)>, // (slot_index, slot, line_no)
    first_line: usize,
}

impl ParagraphAccumulator {
    fn new(first_line: usize) -> Self {
        ParagraphAccumulator { tokens: Vec::new(), du_of_token: Vec::new(), slots: Vec::new(), first_line }
    }

    fn finish(self) -> Result<Paragraph> {
        if self.tokens.is_empty() {
            return Err(parse_err(self.first_line, "paragraph has no token lines"));
        }
        // Rebuild inclusive spans from the per-token unit ids.
        let mut spans: Vec<(usize, usize)> = Vec::new();
        for (idx, du) in self.du_of_token.iter().enumerate() {
            match spans.len().checked_sub(1) {
                Some(last) if *du == last => spans[last].1 = idx,
                _ if *du == spans.len() => spans.push((idx, idx)),
                _ => {
                    return Err(parse_err(
                        self.first_line,
                        format!("du_index jumps to {} at token {} (expected {} or {})", du, idx, spans.len().saturating_sub(1), spans.len()),
                    ))
                }
            }
        }
        let expected_slots = spans.len().saturating_sub(1);
        if self.slots.len() != expected_slots {
            return Err(parse_err(
                self.first_line,
                format!("paragraph with {} units needs {} slot lines, got {}", spans.len(), expected_slots, self.slots.len()),
            ));
        }
        let mut ordered: Vec<Option<RelationSlot>> = vec![None; expected_slots];
        for (index, slot, line_no) in self.slots {
            if index >= expected_slots {
                return Err(parse_err(line_no, format!("slot index {} out of range (paragraph has {} slots)", index, expected_slots)));
            }
            if ordered[index].is_some() {
                return Err(parse_err(line_no, format!("duplicate slot index {index}")));
            }
            ordered[index] = Some(slot);
        }
        let slots = ordered.into_iter().map(|s| s.unwrap()).collect();
        Paragraph::new(self.tokens, spans, slots)
            .map_err(|e| parse_err(self.first_line, e.to_string()))
    }
}

/// Parse one split file. When `inventories` is `None`, inventories come
/// from the file's header lines (or the default 36/7 placeholders).
pub fn parse_split(path: &Path, inventories: Option<&TagInventories>) -> Result<(Split, TagInventories)> {
    let text = fs::read_to_string(path)?;
    parse_split_str(&text, inventories)
}

pub fn parse_split_str(text: &str, inventories: Option<&TagInventories>) -> Result<(Split, TagInventories)> {
    let mut header_pos: Option<Vec<String>> = None;
    let mut header_ner: Option<Vec<String>> = None;
    let mut paragraphs: Vec<Paragraph> = Vec::new();
    let mut current: Option<ParagraphAccumulator> = None;

    // Resolve the inventories lazily so header lines can appear before
    // the first paragraph.
    let mut resolved: Option<TagInventories> = inventories.cloned();

    for (line_no, raw) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let line = raw.trim_end_matches(['\r', '\n']);

        if line.trim().is_empty() {
            if let Some(acc) = current.take() {
                paragraphs.push(acc.finish()?);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("#POS") {
            if current.is_some() {
                return Err(parse_err(line_no, "#POS header inside a paragraph"));
            }
            header_pos = Some(rest.split_whitespace().map(String::from).collect());
            continue;
        }
        if let Some(rest) = line.strip_prefix("#NER") {
            if current.is_some() {
                return Err(parse_err(line_no, "#NER header inside a paragraph"));
            }
            header_ner = Some(rest.split_whitespace().map(String::from).collect());
            continue;
        }
        if line.starts_with('#') {
            continue; // comment
        }

        if resolved.is_none() {
            let defaults = TagInventories::default_sizes();
            resolved = Some(TagInventories {
                pos: header_pos.clone().unwrap_or(defaults.pos),
                ner: header_ner.clone().unwrap_or(defaults.ner),
            });
        }
        let inv = resolved.as_ref().unwrap();

        let fields: Vec<&str> = line.split('\t').collect();
        let acc = current.get_or_insert_with(|| ParagraphAccumulator::new(line_no));

        if fields[0] == "REL" {
            if fields.len() != 4 {
                return Err(parse_err(line_no, format!("slot line needs 4 tab-separated fields, got {}", fields.len())));
            }
            let index: usize = fields[1]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad slot index '{}'", fields[1])))?;
            let kind = match fields[2] {
                "IMP" => SlotKind::Implicit,
                "EXP" => SlotKind::Explicit,
                other => return Err(parse_err(line_no, format!("bad slot kind '{other}' (want IMP or EXP)"))),
            };
            let mut gold = Vec::new();
            for name in fields[3].split('|') {
                let label = Label::parse(name)
                    .ok_or_else(|| parse_err(line_no, format!("unknown label '{name}'")))?;
                gold.push(label);
            }
            let slot = RelationSlot::new(kind, gold).map_err(|e| parse_err(line_no, e.to_string()))?;
            acc.slots.push((index, slot, line_no));
        } else {
            if fields.len() != 4 {
                return Err(parse_err(line_no, format!("token line needs 4 tab-separated fields, got {}", fields.len())));
            }
            let du: usize = fields[3]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad du_index '{}'", fields[3])))?;
            acc.tokens.push(Token {
                surface: fields[0].to_string(),
                pos_id: inv.pos_index(fields[1]),
                ner_id: inv.ner_index(fields[2]),
            });
            acc.du_of_token.push(du);
        }
    }
    if let Some(acc) = current.take() {
        paragraphs.push(acc.finish()?);
    }

    let inventories = resolved.unwrap_or_else(|| {
        let defaults = TagInventories::default_sizes();
        TagInventories {
            pos: header_pos.unwrap_or(defaults.pos),
            ner: header_ner.unwrap_or(defaults.ner),
        }
    });
    Ok((paragraphs, inventories))
}

/// Parse a corpus directory containing `train.txt`, `dev.txt`, `test.txt`.
pub fn parse_corpus(dir: &Path) -> Result<crate::corpus::Corpus> {
    let (train, inventories) = parse_split(&dir.join("train.txt"), None)?;
    let (dev, _) = parse_split(&dir.join("dev.txt"), Some(&inventories))?;
    let (test, _) = parse_split(&dir.join("test.txt"), Some(&inventories))?;
    Ok(crate::corpus::Corpus { train, dev, test, inventories })
}

fn tag_name(inventory: &[String], id: usize) -> &str {
    inventory.get(id).map(|s| s.as_str()).unwrap_or("UNK")
}

/// Serialize one split in the paragraph file format; `parse_split` of the
/// output reproduces the input exactly.
pub fn serialize_split(split: &Split, inventories: &TagInventories) -> String {
    let mut out = String::new();
    out.push_str(&format!("#POS {}\n", inventories.pos.join(" ")));
    out.push_str(&format!("#NER {}\n", inventories.ner.join(" ")));
    out.push('\n');
    for paragraph in split {
        for (du, (start, end)) in paragraph.du_spans.iter().enumerate() {
            for token in &paragraph.tokens[*start..=*end] {
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\n",
                    token.surface,
                    tag_name(&inventories.pos, token.pos_id),
                    tag_name(&inventories.ner, token.ner_id),
                    du
                ));
            }
        }
        for (i, slot) in paragraph.slots.iter().enumerate() {
            let labels: Vec<&str> = slot.gold.iter().map(|l| l.name()).collect();
            out.push_str(&format!("REL\t{}\t{}\t{}\n", i, slot.kind.tag(), labels.join("|")));
        }
        out.push('\n');
    }
    out
}

/// Write all three splits into a directory.
pub fn write_corpus(corpus: &crate::corpus::Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, split) in corpus.splits() {
        fs::write(dir.join(format!("{name}.txt")), serialize_split(split, &corpus.inventories))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UNKNOWN_TAG;

    const MINIMAL: &str = "#POS NN VB\n#NER O PER\n\nthe\tNN\tO\t0\ncat\tNN\tO\t0\nsat\tVB\tO\t1\nREL\t0\tIMP\tExp\n";

    #[test]
    fn parses_minimal_paragraph() {
        let (split, inv) = parse_split_str(MINIMAL, None).unwrap();
        assert_eq!(split.len(), 1);
        let p = &split[0];
        assert_eq!(p.num_units(), 2);
        assert_eq!(p.slots[0].kind, SlotKind::Implicit);
        assert_eq!(p.slots[0].gold, vec![Label::Exp]);
        assert_eq!(inv.pos, vec!["NN", "VB"]);
        assert_eq!(p.tokens[2].pos_id, 1);
    }

    #[test]
    fn parses_double_label() {
        let text = "a\tX\tY\t0\nb\tX\tY\t1\nREL\t0\tEXP\tComp|Exp\n";
        let (split, _) = parse_split_str(text, None).unwrap();
        assert_eq!(split[0].slots[0].gold, vec![Label::Comp, Label::Exp]);
    }

    #[test]
    fn du_index_gap_is_parse_error() {
        let text = "a\tX\tY\t0\nb\tX\tY\t2\nREL\t0\tIMP\tExp\n";
        let err = parse_split_str(text, None).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn unknown_label_is_parse_error_with_line() {
        let text = "a\tX\tY\t0\nb\tX\tY\t1\nREL\t0\tIMP\tBogus\n";
        match parse_split_str(text, None).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("Bogus"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn slot_count_mismatch_is_parse_error() {
        let text = "a\tX\tY\t0\nb\tX\tY\t1\n";
        assert!(parse_split_str(text, None).is_err());
    }

    #[test]
    fn unknown_tags_map_to_unknown() {
        let text = "#POS NN\n#NER O\n\na\tZZ\tQQ\t0\nb\tNN\tO\t1\nREL\t0\tIMP\tComp\n";
        let (split, _) = parse_split_str(text, None).unwrap();
        assert_eq!(split[0].tokens[0].pos_id, UNKNOWN_TAG);
        assert_eq!(split[0].tokens[0].ner_id, UNKNOWN_TAG);
        assert_eq!(split[0].tokens[1].pos_id, 0);
    }

    #[test]
    fn round_trip_is_fixed_point() {
        let (split, inv) = parse_split_str(MINIMAL, None).unwrap();
        let text = serialize_split(&split, &inv);
        let (again, inv2) = parse_split_str(&text, None).unwrap();
        assert_eq!(split, again);
        assert_eq!(inv, inv2);
        let text2 = serialize_split(&again, &inv2);
        assert_eq!(text, text2);
    }
}
