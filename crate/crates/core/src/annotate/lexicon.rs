//! Label lexicons: surface form → label with a priority.

use std::collections::BTreeMap;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use super::AnnotateError;
use crate::text::{canonicalize, fold, lowercase_for_match};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub surface: String,
    pub label: String,
    pub priority: i32,
}

/// Entries plus a multi-pattern automaton over their folded surfaces.
#[derive(Debug, Clone)]
pub struct Lexicon {
    name: String,
    entries: Vec<LexEntry>,
    /// Folded surface lengths in chars, per entry.
    lengths: Vec<usize>,
    automaton: AhoCorasick,
    /// Entry indices per automaton pattern.
    pattern_entries: Vec<Vec<usize>>,
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.entries == other.entries
    }
}

impl Lexicon {
    /// Tab-separated `surface, label, priority` with a header row; `#`
    /// starts a comment.
    pub fn from_tsv(name: &str, text: &str) -> Result<Self, AnnotateError> {
        let err = |line: u64, reason: String| AnnotateError::Lexicon {
            name: name.to_string(),
            line,
            reason,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| err(0, e.to_string()))?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 3 {
                return Err(err(line, format!("expected 3 columns, found {}", row.len())));
            }
            let priority = row[2]
                .trim()
                .parse()
                .map_err(|_| err(line, format!("bad priority {:?}", &row[2])))?;
            entries.push(LexEntry {
                surface: row[0].trim().to_string(),
                label: row[1].trim().to_string(),
                priority,
            });
        }
        Self::from_entries(name, entries)
    }

    /// Rejects empty fields and entries that share a folded surface and a
    /// priority but disagree on the label.
    pub fn from_entries(name: &str, entries: Vec<LexEntry>) -> Result<Self, AnnotateError> {
        let err = |reason: String| AnnotateError::Lexicon {
            name: name.to_string(),
            line: 0,
            reason,
        };
        let mut by_pattern: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            if e.surface.is_empty() || e.label.is_empty() {
                return Err(err(format!("entry {i}: empty surface or label")));
            }
            let folded = fold(&e.surface);
            if let Some(prev) = by_pattern.get(&folded) {
                for &j in prev {
                    let p = &entries[j];
                    if p.priority == e.priority && p.label != e.label {
                        return Err(err(format!(
                            "surface {:?} maps to both {:?} and {:?} at priority {}",
                            e.surface, p.label, e.label, e.priority
                        )));
                    }
                }
            }
            by_pattern.entry(folded).or_default().push(i);
        }
        let lengths = entries.iter().map(|e| fold(&e.surface).chars().count()).collect();
        let (patterns, pattern_entries): (Vec<String>, Vec<Vec<usize>>) = by_pattern.into_iter().unzip();
        let automaton = AhoCorasickBuilder::new()
            .ascii_case_insensitive(true)
            .match_kind(MatchKind::Standard)
            .build(&patterns)
            .map_err(|e| err(e.to_string()))?;
        Ok(Lexicon {
            name: name.to_string(),
            entries,
            lengths,
            automaton,
            pattern_entries,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn entries(&self) -> &[LexEntry] {
        &self.entries
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.label.as_str())
    }

    /// Indices of entries whose surface occurs in `text`, ascending.
    pub fn matches(&self, text: &str) -> Vec<usize> {
        let canonical = canonicalize(text);
        let hay = lowercase_for_match(&canonical);
        let mut hits: Vec<usize> = self
            .automaton
            .find_overlapping_iter(hay.as_ref())
            .flat_map(|m| self.pattern_entries[m.pattern().as_usize()].iter().copied())
            .collect();
        hits.sort_unstable();
        hits.dedup();
        hits
    }

    pub fn entry(&self, i: usize) -> &LexEntry {
        &self.entries[i]
    }

    /// Folded surface length of entry `i`, in chars.
    pub fn surface_len(&self, i: usize) -> usize {
        self.lengths[i]
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("surface\tlabel\tpriority\n");
        for e in &self.entries {
            s.push_str(&format!("{}\t{}\t{}\n", e.surface, e.label, e.priority));
        }
        s
    }

    /// Adds an entry, rebuilding the automaton.
    pub fn with_entry(&self, entry: LexEntry) -> Result<Self, AnnotateError> {
        let mut entries = self.entries.clone();
        entries.push(entry);
        Self::from_entries(&self.name, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(rows: &[(&str, &str, i32)]) -> Result<Lexicon, AnnotateError> {
        Lexicon::from_entries(
            "t",
            rows.iter()
                .map(|(s, l, p)| LexEntry {
                    surface: s.to_string(),
                    label: l.to_string(),
                    priority: *p,
                })
                .collect(),
        )
    }

    #[test]
    fn conflicting_labels_at_equal_priority_are_rejected() {
        assert!(lex(&[("lung", "A", 1), ("LUNG", "B", 1)]).is_err());
        assert!(lex(&[("lung", "A", 1), ("lung", "B", 2)]).is_ok());
        assert!(lex(&[("lung", "A", 1), ("lung", "A", 1)]).is_ok());
    }

    #[test]
    fn matching_is_case_and_width_insensitive() {
        let l = lex(&[("deep learning", "DL", 1), ("深度学习", "DL", 1), ("CNN", "DL", 1)]).unwrap();
        assert_eq!(l.matches("Uses ＤＥＥＰ Learning"), vec![0]);
        assert_eq!(l.matches("基于深度学习的cnn"), vec![1, 2]);
        assert!(l.matches("plain").is_empty());
    }

    #[test]
    fn tsv_round_trip() {
        let l = lex(&[("a b", "X", 3), ("c", "Y", -1)]).unwrap();
        let back = Lexicon::from_tsv("t", &l.to_tsv()).unwrap();
        assert_eq!(back, l);
        assert!(Lexicon::from_tsv("t", "surface\tlabel\tpriority\nx\tY\tnope\n").is_err());
    }
}
