//! Dependency-parsed documents, temporal annotations, vocabularies and the
//! synthetic corpus generator.

mod annotations;
mod conllu;
mod stats;
mod synth;
mod vocab;

pub use annotations::{load_annotations, parse_annotations, write_annotations, AnnotationReport};
pub use conllu::{load_conllu, parse_conllu, write_conllu};
pub use stats::{label_stats, CorpusStats, LabelRow, LabelStats};
pub use synth::{generate_synthetic, SynthConfig, Template};
pub use vocab::{Vocabularies, CROSS_SENTENCE, UNKNOWN_TOKEN};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: multiword and empty-node lines are not supported ({id})")]
    UnsupportedId { line: usize, id: String },
    #[error("line {line}: {detail}")]
    Malformed { line: usize, detail: String },
    #[error("document {doc}, sentence {sentence}: {detail}")]
    InvalidTree {
        doc: String,
        sentence: usize,
        detail: String,
    },
    #[error("unknown label {found:?}; expected one of {expected}")]
    UnknownLabel { found: String, expected: String },
    #[error("unknown label scheme {0:?}; expected matres or tbdense")]
    UnknownScheme(String),
    #[error("document {doc}: {detail}")]
    Annotation { doc: String, detail: String },
    #[error("vocabulary: {0}")]
    Vocab(String),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub upos: String,
    /// Index of the governing token; 0 marks the sentence root.
    pub head: usize,
    pub deprel: String,
}

pub type Sentence = Vec<Token>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventMention {
    pub id: String,
    /// 0-based sentence index within the document.
    pub sentence: usize,
    /// 1-based inclusive token span.
    pub first: usize,
    pub last: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    /// Indices into [`Document::events`].
    pub source: usize,
    pub target: usize,
    pub label: Relation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub events: Vec<EventMention>,
    pub pairs: Vec<LabeledPair>,
}

impl Document {
    pub fn event_index(&self, id: &str) -> Option<usize> {
        self.events.iter().position(|e| e.id == id)
    }
}

/// Checks that head links of one sentence form a single rooted tree.
pub fn validate_tree(sentence: &[Token]) -> Result<(), String> {
    let n = sentence.len();
    if n == 0 {
        return Err("empty sentence".into());
    }
    for (i, tok) in sentence.iter().enumerate() {
        if tok.index != i + 1 {
            return Err(format!(
                "token ids must run 1..{n}, found {} at position {}",
                tok.index,
                i + 1
            ));
        }
        if tok.head > n {
            return Err(format!(
                "token {} has head {} beyond sentence length {n}",
                tok.index, tok.head
            ));
        }
    }
    let roots: Vec<usize> = sentence.iter().filter(|t| t.head == 0).map(|t| t.index).collect();
    if roots.len() != 1 {
        return Err(format!(
            "expected exactly one root, found {} ({:?})",
            roots.len(),
            roots
        ));
    }
    // every token must reach the root within n steps
    for tok in sentence {
        let mut cur = tok.index;
        let mut steps = 0;
        while cur != 0 {
            cur = sentence[cur - 1].head;
            steps += 1;
            if steps > n {
                return Err(format!("cycle through token {}", tok.index));
            }
        }
    }
    Ok(())
}

/// Temporal relation between an ordered (source, target) event pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Before,
    After,
    Includes,
    IsIncluded,
    Simultaneous,
    Vague,
}

impl Relation {
    pub fn name(self) -> &'static str {
        match self {
            Relation::Before => "Before",
            Relation::After => "After",
            Relation::Includes => "Includes",
            Relation::IsIncluded => "Is_Included",
            Relation::Simultaneous => "Simultaneous",
            Relation::Vague => "Vague",
        }
    }

    /// Label of the reversed pair.
    pub fn converse(self) -> Relation {
        match self {
            Relation::Before => Relation::After,
            Relation::After => Relation::Before,
            Relation::Includes => Relation::IsIncluded,
            Relation::IsIncluded => Relation::Includes,
            r => r,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelScheme {
    pub name: &'static str,
    pub labels: Vec<Relation>,
    pub vague: usize,
}

impl LabelScheme {
    pub fn matres() -> Self {
        use Relation::*;
        LabelScheme {
            name: "matres",
            labels: vec![Before, After, Simultaneous, Vague],
            vague: 3,
        }
    }

    pub fn tbdense() -> Self {
        use Relation::*;
        LabelScheme {
            name: "tbdense",
            labels: vec![Before, After, Includes, IsIncluded, Simultaneous, Vague],
            vague: 5,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, rel: Relation) -> Option<usize> {
        self.labels.iter().position(|&r| r == rel)
    }

    pub fn label(&self, idx: usize) -> Relation {
        self.labels[idx]
    }

    /// Case-insensitive; `_`, `-` and spaces are ignored.
    pub fn parse_label(&self, s: &str) -> Result<Relation, CorpusError> {
        let norm = |x: &str| {
            x.chars()
                .filter(|c| !matches!(c, '_' | '-' | ' '))
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let key = norm(s);
        self.labels
            .iter()
            .copied()
            .find(|r| norm(r.name()) == key)
            .ok_or_else(|| CorpusError::UnknownLabel {
                found: s.to_string(),
                expected: self.labels.iter().map(|r| r.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

impl FromStr for LabelScheme {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "matres" => Ok(LabelScheme::matres()),
            "tbdense" => Ok(LabelScheme::tbdense()),
            _ => Err(CorpusError::UnknownScheme(s.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(index: usize, head: usize) -> Token {
        Token {
            index,
            form: format!("w{index}"),
            upos: "X".into(),
            head,
            deprel: "dep".into(),
        }
    }

    #[test]
    fn scheme_label_sets() {
        use Relation::*;
        let tb = LabelScheme::tbdense();
        assert_eq!(
            tb.labels,
            vec![Before, After, Includes, IsIncluded, Simultaneous, Vague]
        );
        assert_eq!(tb.label(tb.vague), Vague);
        let m = LabelScheme::matres();
        assert_eq!(m.labels, vec![Before, After, Simultaneous, Vague]);
        assert_eq!(m.label(m.vague), Vague);
    }

    #[test]
    fn label_parsing_is_case_insensitive() {
        let m = LabelScheme::matres();
        assert_eq!(m.parse_label("BEFORE").unwrap(), Relation::Before);
        assert_eq!(m.parse_label("simultaneous").unwrap(), Relation::Simultaneous);
        let err = m.parse_label("Includes").unwrap_err();
        assert!(err.to_string().contains("Before, After, Simultaneous, Vague"));
        assert_eq!(
            LabelScheme::tbdense().parse_label("IS_INCLUDED").unwrap(),
            Relation::IsIncluded
        );
    }

    #[test]
    fn tree_validation() {
        assert!(validate_tree(&[tok(1, 2), tok(2, 0)]).is_ok());
        assert!(validate_tree(&[tok(1, 0), tok(2, 0)]).unwrap_err().contains("one root"));
        let err = validate_tree(&[tok(1, 0), tok(2, 3), tok(3, 2)]).unwrap_err();
        assert!(err.contains("cycle"));
        assert!(validate_tree(&[tok(1, 0), tok(2, 1), tok(3, 3)])
            .unwrap_err()
            .contains("cycle"));
    }
}
