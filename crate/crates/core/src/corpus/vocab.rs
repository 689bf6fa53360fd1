use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{CorpusError, Document};

/// Relation id 0 is reserved for the edge joining two sentence roots.
pub const CROSS_SENTENCE: &str = "<cross-sentence>";
/// Token id 0 is shared by every form not seen in training.
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq)]
struct Index {
    items: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Index {
    fn new(items: Vec<String>) -> Self {
        let ids = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Index { items, ids }
    }
}

/// Dense id maps for token forms, UPOS tags and dependency relations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabularies {
    tokens: Index,
    upos: Index,
    deprels: Index,
}

impl Vocabularies {
    /// Builds vocabularies from training documents. Items are sorted so ids
    /// depend only on the set of items seen, not on document order.
    pub fn build(docs: &[Document]) -> Self {
        let mut forms = BTreeSet::new();
        let mut upos = BTreeSet::new();
        let mut deprels = BTreeSet::new();
        for tok in docs.iter().flat_map(|d| d.sentences.iter().flatten()) {
            forms.insert(tok.form.clone());
            upos.insert(tok.upos.clone());
            deprels.insert(tok.deprel.clone());
        }
        let tokens = std::iter::once(UNKNOWN_TOKEN.to_string()).chain(forms).collect();
        let deprels = std::iter::once(CROSS_SENTENCE.to_string()).chain(deprels).collect();
        Vocabularies {
            tokens: Index::new(tokens),
            upos: Index::new(upos.into_iter().collect()),
            deprels: Index::new(deprels),
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.items.len()
    }

    /// Width of the POS one-hot block.
    pub fn upos_count(&self) -> usize {
        self.upos.items.len()
    }

    /// Includes the reserved cross-sentence relation.
    pub fn deprel_count(&self) -> usize {
        self.deprels.items.len()
    }

    pub fn unknown_token_id(&self) -> usize {
        0
    }

    pub fn cross_sentence_id(&self) -> usize {
        0
    }

    pub fn token_id(&self, form: &str) -> usize {
        self.tokens.ids.get(form).copied().unwrap_or(0)
    }

    pub fn upos_id(&self, upos: &str) -> Option<usize> {
        self.upos.ids.get(upos).copied()
    }

    /// Unseen subtyped relations (`nmod:poss`) fall back to their base type.
    pub fn deprel_id(&self, deprel: &str) -> Option<usize> {
        self.deprels
            .ids
            .get(deprel)
            .or_else(|| deprel.split(':').next().and_then(|base| self.deprels.ids.get(base)))
            .copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens.items[id]
    }

    pub fn upos(&self, id: usize) -> &str {
        &self.upos.items[id]
    }

    pub fn deprel(&self, id: usize) -> &str {
        &self.deprels.items[id]
    }

    /// Text form: one section header per map followed by one item per line,
    /// ids implied by order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, idx) in [
            ("tokens", &self.tokens),
            ("upos", &self.upos),
            ("deprels", &self.deprels),
        ] {
            let _ = writeln!(out, "[{name}] {}", idx.items.len());
            for item in &idx.items {
                let _ = writeln!(out, "{item}");
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CorpusError> {
        let mut lines = text.lines();
        let mut section = |name: &str| -> Result<Index, CorpusError> {
            let header = lines
                .next()
                .ok_or_else(|| CorpusError::Vocab(format!("missing [{name}] section")))?;
            let count = header
                .strip_prefix(&format!("[{name}] "))
                .and_then(|c| c.trim().parse::<usize>().ok())
                .ok_or_else(|| CorpusError::Vocab(format!("bad section header {header:?}")))?;
            let items: Vec<String> = lines.by_ref().take(count).map(str::to_string).collect();
            if items.len() != count {
                return Err(CorpusError::Vocab(format!("[{name}] truncated")));
            }
            Ok(Index::new(items))
        };
        Ok(Vocabularies {
            tokens: section("tokens")?,
            upos: section("upos")?,
            deprels: section("deprels")?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_conllu;

    fn docs() -> Vec<Document> {
        parse_conllu(
            "1\tdogs\t_\tNOUN\t_\t_\t2\tnsubj\t_\t_\n2\tchase\t_\tVERB\t_\t_\t0\troot\t_\t_\n3\tcats\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n",
        )
        .unwrap()
    }

    #[test]
    fn pos_width_and_deprel_count() {
        let v = Vocabularies::build(&docs());
        assert_eq!(v.upos_count(), 2);
        // nsubj, obj, root + reserved cross-sentence
        assert_eq!(v.deprel_count(), 4);
        assert_eq!(v.deprel(v.cross_sentence_id()), CROSS_SENTENCE);
    }

    #[test]
    fn deprel_set_without_root_has_three_ids() {
        let mut d = docs();
        // drop the root relation name from the corpus view
        d[0].sentences[0][1].deprel = "nsubj".into();
        let v = Vocabularies::build(&d);
        assert_eq!(v.deprel_count(), 3);
    }

    #[test]
    fn unseen_token_maps_to_unknown() {
        let v = Vocabularies::build(&docs());
        assert_eq!(v.token_id("zebras"), v.unknown_token_id());
        assert_ne!(v.token_id("dogs"), v.unknown_token_id());
        assert_eq!(v.deprel_id("obj:lvc"), v.deprel_id("obj"));
        assert_eq!(v.upos_id("ADJ"), None);
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabularies::build(&docs());
        assert_eq!(Vocabularies::from_text(&v.to_text()).unwrap(), v);
    }
}
