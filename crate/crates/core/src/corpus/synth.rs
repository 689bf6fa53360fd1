//! Templated corpus whose temporal labels are a fixed function of a cue word
//! and the dependency template it appears in.
//!
//! Every window holds exactly two events (the verbs) and one labeled pair.
//! Three templates are generated:
//!
//! - `Trailing`: `S1 E1 O1 CUE S2 E2 O2 .`, the cue marks the clause of E2,
//!   which attaches to E1 as `advcl`. Source E1, target E2.
//! - `Fronted`: `CUE S2 E2 O2 , S1 E1 O1 .`, same attachment, but the source
//!   is the fronted E2 and the label is the converse of the trailing reading.
//! - `Cross`: `S1 E1 O1 .` followed by `CUE , S2 E2 O2 .`, joined only by the
//!   cross-sentence edge; the cue is an adverb of E2.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Document, EventMention, LabelScheme, LabeledPair, Relation, Token};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Template {
    Trailing,
    Fronted,
    Cross,
}

impl Template {
    /// Cue word that yields `label` under this template.
    pub fn cue(self, label: Relation) -> &'static str {
        let subordinate = |l: Relation| match l {
            Relation::Before => "before",
            Relation::After => "after",
            Relation::Simultaneous => "while",
            Relation::Includes => "throughout",
            Relation::IsIncluded => "during",
            Relation::Vague => "if",
        };
        match self {
            Template::Trailing => subordinate(label),
            Template::Fronted => subordinate(label.converse()),
            Template::Cross => match label {
                Relation::Before => "afterwards",
                Relation::After => "beforehand",
                Relation::Simultaneous => "meanwhile",
                Relation::Includes => "overall",
                Relation::IsIncluded => "within",
                Relation::Vague => "perhaps",
            },
        }
    }

    /// Label implied by `cue` under this template, if the cue belongs to it.
    pub fn label_for(self, cue: &str, scheme: &LabelScheme) -> Option<Relation> {
        scheme.labels.iter().copied().find(|&l| self.cue(l) == cue)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub windows: usize,
    /// Distinct forms per open word class (nouns, verbs, adjectives).
    pub vocab_size: usize,
    /// Adjectives inserted before each noun, drawn uniformly from this range.
    pub min_fillers: usize,
    pub max_fillers: usize,
    pub scheme: LabelScheme,
    /// Label proportions aligned with `scheme.labels`; normalized internally.
    pub mixture: Vec<f64>,
    /// Fraction of windows built from two sentences.
    pub cross_fraction: f64,
}

impl SynthConfig {
    pub fn new(scheme: LabelScheme) -> Self {
        let mixture = match scheme.len() {
            4 => vec![0.45, 0.30, 0.10, 0.15],
            n => vec![1.0 / n as f64; n],
        };
        SynthConfig {
            windows: 500,
            vocab_size: 40,
            min_fillers: 0,
            max_fillers: 2,
            scheme,
            mixture,
            cross_fraction: 0.3,
        }
    }

    /// Exact per-label window counts by largest remainder.
    pub fn quotas(&self) -> Vec<usize> {
        let total: f64 = self.mixture.iter().sum();
        let raw: Vec<f64> = self.mixture.iter().map(|w| w / total * self.windows as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let missing = self.windows - counts.iter().sum::<usize>();
        for &i in order.iter().take(missing) {
            counts[i] += 1;
        }
        counts
    }
}

struct Builder<'a> {
    tokens: Vec<Token>,
    rng: &'a mut ChaCha8Rng,
    cfg: &'a SynthConfig,
}

impl Builder<'_> {
    fn push(&mut self, form: String, upos: &str, deprel: &str) -> usize {
        let index = self.tokens.len() + 1;
        self.tokens.push(Token {
            index,
            form,
            upos: upos.into(),
            head: 0,
            deprel: deprel.into(),
        });
        index
    }

    fn word(&mut self, prefix: &str) -> String {
        format!("{prefix}{}", self.rng.gen_range(0..self.cfg.vocab_size))
    }

    /// Adjectives followed by a noun; returns the noun index and the
    /// adjective indices still to be attached.
    fn noun_phrase(&mut self, deprel: &str) -> (usize, Vec<usize>) {
        let k = self.rng.gen_range(self.cfg.min_fillers..=self.cfg.max_fillers);
        let adjs: Vec<usize> = (0..k)
            .map(|_| {
                let w = self.word("a");
                self.push(w, "ADJ", "amod")
            })
            .collect();
        let w = self.word("n");
        let noun = self.push(w, "NOUN", deprel);
        for &a in &adjs {
            self.tokens[a - 1].head = noun;
        }
        (noun, adjs)
    }

    fn attach(&mut self, dependent: usize, head: usize) {
        self.tokens[dependent - 1].head = head;
    }

    fn verb(&mut self, deprel: &str) -> usize {
        let w = self.word("v");
        self.push(w, "VERB", deprel)
    }

    fn finish(self) -> Vec<Token> {
        self.tokens
    }
}

/// Builds `config.windows` single-window documents, each carrying two verb
/// events and one labeled pair. Deterministic in `seed`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Relation> = config
        .quotas()
        .into_iter()
        .zip(&config.scheme.labels)
        .flat_map(|(n, &l)| std::iter::repeat_n(l, n))
        .collect();
    labels.shuffle(&mut rng);

    let mut docs = Vec::with_capacity(config.windows);
    for (i, label) in labels.into_iter().enumerate() {
        let template = if rng.gen_bool(config.cross_fraction.clamp(0.0, 1.0)) {
            Template::Cross
        } else if rng.gen_bool(0.5) {
            Template::Trailing
        } else {
            Template::Fronted
        };
        let cue = template.cue(label).to_string();
        let (sentences, e1, e2) = build_window(template, cue, config, &mut rng);
        // e1 is the main-clause verb of the first template sentence
        let (source, target) = match template {
            Template::Fronted => (e2, e1),
            _ => (e1, e2),
        };
        let mention = |id: &str, (sent, tok): (usize, usize)| EventMention {
            id: id.to_string(),
            sentence: sent,
            first: tok,
            last: tok,
        };
        docs.push(Document {
            id: format!("syn{i:05}"),
            sentences,
            events: vec![mention("e1", source), mention("e2", target)],
            pairs: vec![LabeledPair {
                source: 0,
                target: 1,
                label,
            }],
        });
    }
    docs
}

type Pos = (usize, usize);

fn build_window(
    template: Template,
    cue: String,
    cfg: &SynthConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<Token>>, Pos, Pos) {
    match template {
        Template::Trailing => {
            let mut b = Builder {
                tokens: vec![],
                rng,
                cfg,
            };
            let (s1, _) = b.noun_phrase("nsubj");
            let e1 = b.verb("root");
            let (o1, _) = b.noun_phrase("obj");
            let c = b.push(cue, "SCONJ", "mark");
            let (s2, _) = b.noun_phrase("nsubj");
            let e2 = b.verb("advcl");
            let (o2, _) = b.noun_phrase("obj");
            let p = b.push(".".into(), "PUNCT", "punct");
            for (d, h) in [(s1, e1), (o1, e1), (c, e2), (s2, e2), (o2, e2), (e2, e1), (p, e1)] {
                b.attach(d, h);
            }
            (vec![b.finish()], (0, e1), (0, e2))
        }
        Template::Fronted => {
            let mut b = Builder {
                tokens: vec![],
                rng,
                cfg,
            };
            let c = b.push(cue, "SCONJ", "mark");
            let (s2, _) = b.noun_phrase("nsubj");
            let e2 = b.verb("advcl");
            let (o2, _) = b.noun_phrase("obj");
            let comma = b.push(",".into(), "PUNCT", "punct");
            let (s1, _) = b.noun_phrase("nsubj");
            let e1 = b.verb("root");
            let (o1, _) = b.noun_phrase("obj");
            let p = b.push(".".into(), "PUNCT", "punct");
            for (d, h) in [
                (c, e2),
                (s2, e2),
                (o2, e2),
                (comma, e2),
                (e2, e1),
                (s1, e1),
                (o1, e1),
                (p, e1),
            ] {
                b.attach(d, h);
            }
            (vec![b.finish()], (0, e1), (0, e2))
        }
        Template::Cross => {
            let mut b = Builder {
                tokens: vec![],
                rng,
                cfg,
            };
            let (s1, _) = b.noun_phrase("nsubj");
            let e1 = b.verb("root");
            let (o1, _) = b.noun_phrase("obj");
            let p1 = b.push(".".into(), "PUNCT", "punct");
            for (d, h) in [(s1, e1), (o1, e1), (p1, e1)] {
                b.attach(d, h);
            }
            let first = b.finish();

            let mut b = Builder {
                tokens: vec![],
                rng,
                cfg,
            };
            let c = b.push(cue, "ADV", "advmod");
            let comma = b.push(",".into(), "PUNCT", "punct");
            let (s2, _) = b.noun_phrase("nsubj");
            let e2 = b.verb("root");
            let (o2, _) = b.noun_phrase("obj");
            let p2 = b.push(".".into(), "PUNCT", "punct");
            for (d, h) in [(c, e2), (comma, e2), (s2, e2), (o2, e2), (p2, e2)] {
                b.attach(d, h);
            }
            (vec![first, b.finish()], (0, e1), (1, e2))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_tree;

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            windows: 50,
            ..SynthConfig::new(LabelScheme::matres())
        };
        assert_eq!(generate_synthetic(&cfg, 7), generate_synthetic(&cfg, 7));
        assert_ne!(generate_synthetic(&cfg, 7), generate_synthetic(&cfg, 8));
    }

    #[test]
    fn trailing_before_cue_means_before() {
        assert_eq!(Template::Trailing.cue(Relation::Before), "before");
        assert_eq!(
            Template::Trailing.label_for("before", &LabelScheme::matres()),
            Some(Relation::Before)
        );
        assert_eq!(
            Template::Fronted.label_for("before", &LabelScheme::matres()),
            Some(Relation::After)
        );
    }

    #[test]
    fn every_window_is_well_formed_and_labeled_by_its_cue() {
        let cfg = SynthConfig::new(LabelScheme::tbdense());
        for doc in generate_synthetic(&cfg, 3) {
            for s in &doc.sentences {
                validate_tree(s).unwrap();
            }
            assert_eq!(doc.events.len(), 2);
            let pair = &doc.pairs[0];
            let (first_sent, cue_tok) = if doc.sentences.len() == 2 {
                (&doc.sentences[1], &doc.sentences[1][0])
            } else {
                let s = &doc.sentences[0];
                (s, s.iter().find(|t| t.deprel == "mark").unwrap())
            };
            let template = if doc.sentences.len() == 2 {
                Template::Cross
            } else if first_sent[0].deprel == "mark" {
                Template::Fronted
            } else {
                Template::Trailing
            };
            assert_eq!(template.label_for(&cue_tok.form, &cfg.scheme), Some(pair.label));
            for e in &doc.events {
                assert_eq!(doc.sentences[e.sentence][e.first - 1].upos, "VERB");
            }
        }
    }

    #[test]
    fn histogram_matches_mixture() {
        let cfg = SynthConfig::new(LabelScheme::matres());
        let docs = generate_synthetic(&cfg, 1);
        assert_eq!(docs.len(), 500);
        let total: f64 = cfg.mixture.iter().sum();
        for (i, &l) in cfg.scheme.labels.iter().enumerate() {
            let n = docs.iter().filter(|d| d.pairs[0].label == l).count();
            let share = n as f64 / 500.0;
            assert!((share - cfg.mixture[i] / total).abs() <= 0.03, "{l}: {share}");
        }
    }
}
