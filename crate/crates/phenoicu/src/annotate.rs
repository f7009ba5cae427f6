//! Phenotype annotation sources: a deterministic lexicon matcher over note
//! text, and loaders for annotation files produced by external phenotypers.
//!
//! The matcher is a stand-in, not an NLP system: case-insensitive,
//! whitespace-normalized, longest-match-first, non-overlapping, left to right,
//! with matches anchored at token boundaries. Anything smarter (negation,
//! contextual synonyms) is expected to arrive as a pre-computed annotation
//! file instead.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::TermId;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: hour {hour} is negative")]
    NegativeHour { line: usize, hour: i64 },
    #[error("empty lexicon surface form")]
    EmptySurface,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One phenotype mention: a term observed at an hour offset from admission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub term: TermId,
    pub hour: u32,
    pub note_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<(usize, usize)>,
}

/// Surface-form → term lookup with normalized keys.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, TermId>,
    max_tokens: usize,
    pub source: String,
}

fn normalize(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl Lexicon {
    pub fn new(source: &str) -> Self {
        Lexicon {
            entries: BTreeMap::new(),
            max_tokens: 0,
            source: source.to_string(),
        }
    }

    pub fn insert(&mut self, surface: &str, term: TermId) -> Result<(), AnnotateError> {
        let key = normalize(surface);
        if key.is_empty() {
            return Err(AnnotateError::EmptySurface);
        }
        self.max_tokens = self.max_tokens.max(key.split(' ').count());
        self.entries.insert(key, term);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load a `surface<TAB>HP:NNNNNNN` file. Blank lines and `#` comments are
    /// skipped.
    pub fn from_tsv(reader: impl BufRead, source: &str) -> Result<Self, AnnotateError> {
        let mut lex = Lexicon::new(source);
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, id) = line.split_once('\t').ok_or_else(|| AnnotateError::Parse {
                line: line_no,
                message: "expected `surface<TAB>term`".into(),
            })?;
            let term = TermId::new(id.trim()).map_err(|e| AnnotateError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            lex.insert(surface, term)?;
        }
        Ok(lex)
    }

    /// Match a note against the lexicon. Matches start and end at token
    /// boundaries, prefer the longest surface form at each position, never
    /// overlap, and scan left to right. Multi-token surfaces never cross a
    /// line break, so concatenating documents with a newline concatenates
    /// their annotations. Spans index bytes of the original text.
    pub fn match_text(&self, note_text: &str, hour: u32, note_id: &str) -> Vec<Annotation> {
        let tokens = tokenize(note_text);
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = None;
            let upper = self.max_tokens.min(tokens.len() - i);
            for k in (1..=upper).rev() {
                if tokens[i + k - 1].line != tokens[i].line {
                    continue;
                }
                let candidate = tokens[i..i + k]
                    .iter()
                    .map(|t| t.lower.as_str())
                    .collect::<Vec<_>>()
                    .join(" ");
                if let Some(term) = self.entries.get(&candidate) {
                    matched = Some((k, term.clone()));
                    break;
                }
            }
            if let Some((k, term)) = matched {
                out.push(Annotation {
                    term,
                    hour,
                    note_id: note_id.to_string(),
                    span: Some((tokens[i].start, tokens[i + k - 1].end)),
                });
                i += k;
            } else {
                i += 1;
            }
        }
        out
    }
}

struct Token {
    lower: String,
    start: usize,
    end: usize,
    line: usize,
}

/// Maximal alphanumeric runs; everything else separates tokens.
fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    let mut line = 0usize;
    let mut token_line = 0usize;
    for (pos, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(pos);
                token_line = line;
            }
        } else {
            if let Some(s) = start.take() {
                out.push(Token {
                    lower: text[s..pos].to_lowercase(),
                    start: s,
                    end: pos,
                    line: token_line,
                });
            }
            if ch == '\n' {
                line += 1;
            }
        }
    }
    if let Some(s) = start {
        out.push(Token {
            lower: text[s..].to_lowercase(),
            start: s,
            end: text.len(),
            line: token_line,
        });
    }
    out
}

/// Clinical expectation of how long a phenotype lasts once observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Persistence {
    Persistent,
    Transient,
}

/// Term → persistence map. Terms absent from the map default to transient,
/// the majority class and the shorter influence window.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistencyMap {
    map: BTreeMap<TermId, Persistence>,
}

impl PersistencyMap {
    pub fn insert(&mut self, term: TermId, p: Persistence) {
        self.map.insert(term, p);
    }

    pub fn classify(&self, term: &TermId) -> Persistence {
        self.map
            .get(term)
            .copied()
            .unwrap_or(Persistence::Transient)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Load a `HP:NNNNNNN<TAB>persistent|transient` file.
    pub fn from_tsv(reader: impl BufRead) -> Result<Self, AnnotateError> {
        let mut out = PersistencyMap::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, kind) = line.split_once('\t').ok_or_else(|| AnnotateError::Parse {
                line: line_no,
                message: "expected `term<TAB>persistent|transient`".into(),
            })?;
            let term = TermId::new(id.trim()).map_err(|e| AnnotateError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let p = match kind.trim() {
                "persistent" => Persistence::Persistent,
                "transient" => Persistence::Transient,
                other => {
                    return Err(AnnotateError::Parse {
                        line: line_no,
                        message: format!("unknown persistence `{other}`"),
                    })
                }
            };
            out.insert(term, p);
        }
        Ok(out)
    }
}

#[derive(Deserialize)]
struct AnnotationRecord {
    term: String,
    hour: i64,
    note_id: String,
    #[serde(default)]
    span: Option<(usize, usize)>,
}

/// Load annotations from JSONL: one `{"term","hour","note_id"}` object per
/// line. Errors carry the offending line number.
pub fn load_annotations(reader: impl BufRead) -> Result<Vec<Annotation>, AnnotateError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| AnnotateError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        let term = TermId::new(&record.term).map_err(|e| AnnotateError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.hour < 0 {
            return Err(AnnotateError::NegativeHour {
                line: line_no,
                hour: record.hour,
            });
        }
        out.push(Annotation {
            term,
            hour: record.hour as u32,
            note_id: record.note_id,
            span: record.span,
        });
    }
    Ok(out)
}

pub fn write_annotations(
    mut writer: impl std::io::Write,
    annotations: &[Annotation],
) -> Result<(), AnnotateError> {
    for a in annotations {
        serde_json::to_writer(&mut writer, a).map_err(|e| AnnotateError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn tid(n: u32) -> TermId {
        TermId::new(&format!("HP:{n:07}")).unwrap()
    }

    fn demo_lexicon() -> Lexicon {
        let mut lex = Lexicon::new("test");
        lex.insert("hypotension", tid(2615)).unwrap();
        lex.insert("pain", tid(12531)).unwrap();
        lex.insert("chest pain", tid(100749)).unwrap();
        lex
    }

    #[test]
    fn direct_hit() {
        let lex = demo_lexicon();
        let got = lex.match_text("persistent hypotension noted", 12, "n1");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].term, tid(2615));
        assert_eq!(got[0].hour, 12);
        let (s, e) = got[0].span.unwrap();
        assert_eq!(&"persistent hypotension noted"[s..e], "hypotension");
    }

    #[test]
    fn case_insensitive() {
        let lex = demo_lexicon();
        let got = lex.match_text("HYPOTENSION", 0, "n1");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].term, tid(2615));
    }

    #[test]
    fn longest_match_wins() {
        let lex = demo_lexicon();
        // oracle: enumerate every (start, len) substring match and confirm the
        // greedy longest-first scan picks exactly the maximal one here
        let text = "reports chest pain";
        let all_matches: Vec<&str> = ["pain", "chest pain"]
            .iter()
            .filter(|s| text.contains(**s))
            .copied()
            .collect();
        assert_eq!(all_matches, vec!["pain", "chest pain"]);
        let got = lex.match_text(text, 3, "n2");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].term, tid(100749));
    }

    #[test]
    fn token_boundaries_prevent_substring_hits() {
        let lex = demo_lexicon();
        assert!(lex.match_text("patient from Spain", 0, "n1").is_empty());
        assert!(lex.match_text("painful", 0, "n1").is_empty());
    }

    #[test]
    fn whitespace_is_normalized() {
        let lex = demo_lexicon();
        let got = lex.match_text("chest\t  pain", 0, "n1");
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].term, tid(100749));
    }

    #[test]
    fn insertion_order_does_not_change_output() {
        let mut rng = crate::seeds::stream_rng(5, "annotate-prop", 0);
        let mut entries = vec![
            ("pain", tid(12531)),
            ("chest pain", tid(100749)),
            ("hypotension", tid(2615)),
            ("drop in blood pressure", tid(2615)),
            ("fever", tid(1945)),
        ];
        let text = "fever and chest pain with drop in blood pressure";
        let mut reference: Option<Vec<Annotation>> = None;
        for _ in 0..10 {
            entries.shuffle(&mut rng);
            let mut lex = Lexicon::new("shuffled");
            for (s, t) in &entries {
                lex.insert(s, t.clone()).unwrap();
            }
            let got = lex.match_text(text, 1, "n");
            match &reference {
                None => reference = Some(got),
                Some(r) => assert_eq!(r, &got),
            }
        }
    }

    #[test]
    fn spans_never_overlap_and_concatenation_is_stable() {
        let mut rng = crate::seeds::stream_rng(6, "annotate-prop", 1);
        let lex = demo_lexicon();
        let words = ["pain", "chest", "hypotension", "stable", "noted", "hr"];
        for _ in 0..100 {
            let make = |rng: &mut rand_chacha::ChaCha8Rng| {
                (0..rng.random_range(1..8))
                    .map(|_| words[rng.random_range(0..words.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let a = make(&mut rng);
            let b = make(&mut rng);
            let ann_a = lex.match_text(&a, 0, "n");
            let ann_b = lex.match_text(&b, 0, "n");
            // no overlaps within one document
            for w in ann_a.windows(2) {
                assert!(w[0].span.unwrap().1 <= w[1].span.unwrap().0);
            }
            // matching does not cross the document boundary
            let joined = format!("{a}\n{b}");
            let got: Vec<TermId> = lex.match_text(&joined, 0, "n").into_iter().map(|x| x.term).collect();
            let expected: Vec<TermId> = ann_a
                .iter()
                .chain(ann_b.iter())
                .map(|x| x.term.clone())
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn loads_annotation_jsonl() {
        let data = "{\"term\":\"HP:0002615\",\"hour\":12,\"note_id\":\"n1\"}\n";
        let got = load_annotations(data.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].term, tid(2615));
        assert_eq!(got[0].hour, 12);
    }

    #[test]
    fn rejects_malformed_term_with_line_number() {
        let data = "{\"term\":\"HP:12\",\"hour\":1,\"note_id\":\"n\"}\n";
        match load_annotations(data.as_bytes()) {
            Err(AnnotateError::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error at line 1, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_hour() {
        let data = "{\"term\":\"HP:0002615\",\"hour\":-3,\"note_id\":\"n\"}\n";
        assert!(matches!(
            load_annotations(data.as_bytes()),
            Err(AnnotateError::NegativeHour { line: 1, hour: -3 })
        ));
    }

    #[test]
    fn empty_file_gives_empty_list() {
        assert!(load_annotations("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn annotation_round_trip() {
        let anns = vec![
            Annotation {
                term: tid(2615),
                hour: 4,
                note_id: "a".into(),
                span: Some((3, 14)),
            },
            Annotation {
                term: tid(12531),
                hour: 9,
                note_id: "b".into(),
                span: None,
            },
        ];
        let mut buf = Vec::new();
        write_annotations(&mut buf, &anns).unwrap();
        assert_eq!(load_annotations(buf.as_slice()).unwrap(), anns);
    }

    #[test]
    fn persistency_defaults_to_transient() {
        let tsv = "HP:0000819\tpersistent\nHP:0012531\ttransient\n";
        let pmap = PersistencyMap::from_tsv(tsv.as_bytes()).unwrap();
        assert_eq!(pmap.classify(&tid(819)), Persistence::Persistent);
        assert_eq!(pmap.classify(&tid(12531)), Persistence::Transient);
        assert_eq!(pmap.classify(&tid(999)), Persistence::Transient);
    }

    #[test]
    fn lexicon_tsv_loads() {
        let tsv = "# comment\nhypotension\tHP:0002615\nchest pain\tHP:0100749\n";
        let lex = Lexicon::from_tsv(tsv.as_bytes(), "tsv").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.match_text("Chest  Pain", 0, "n")[0].term, tid(100749));
    }
}
