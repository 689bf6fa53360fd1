use std::collections::BTreeMap;

use super::{EventKey, GoldPair, Result};
use crate::corpus::{Document, EventMention, LabelScheme, Relation, Vocabularies};
use crate::graph::{build_graph, SentenceGraph, SyntaxContext};
use crate::train::TrainError;

/// One sentence with per-token gold event tags (1 inside a gold span).
#[derive(Clone, Debug)]
pub struct SentenceInstance {
    pub doc: usize,
    pub sentence: usize,
    pub gold: Vec<usize>,
    pub graph: SentenceGraph,
}

/// A gold event pair inside its one- or two-sentence window.
#[derive(Clone, Debug)]
pub struct PairInstance {
    pub doc: usize,
    /// Index into the document's pair list.
    pub pair: usize,
    pub source_event: usize,
    pub target_event: usize,
    pub window: Vec<usize>,
    /// Index into [`Dataset::graphs`].
    pub graph: usize,
    pub context: SyntaxContext,
    pub label: Relation,
    /// Label index in the scheme.
    pub gold: usize,
}

impl PairInstance {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.doc, self.source_event, self.target_event)
    }

    /// Tokens strictly between the two event nodes in surface order.
    pub fn width(&self) -> usize {
        self.context.source.abs_diff(self.context.target).saturating_sub(1)
    }
}

/// Documents with their sentence and pair instances precomputed.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub docs: Vec<Document>,
    pub vocabs: Vocabularies,
    pub scheme: LabelScheme,
    pub sentences: Vec<SentenceInstance>,
    pub graphs: Vec<SentenceGraph>,
    pub pairs: Vec<PairInstance>,
    /// Pairs whose events share one node or sit in a one-token window.
    pub skipped_pairs: usize,
    /// Gold event head per document event.
    pub event_heads: Vec<Vec<EventKey>>,
}

impl Dataset {
    pub fn build(docs: Vec<Document>, vocabs: &Vocabularies, scheme: &LabelScheme) -> Result<Self> {
        let mut sentences = Vec::new();
        let mut event_heads = Vec::with_capacity(docs.len());
        for (di, doc) in docs.iter().enumerate() {
            let mut graphs = Vec::with_capacity(doc.sentences.len());
            for (si, sent) in doc.sentences.iter().enumerate() {
                let mut gold = vec![0; sent.len()];
                for ev in doc.events.iter().filter(|e| e.sentence == si) {
                    for tag in &mut gold[ev.first - 1..ev.last] {
                        *tag = 1;
                    }
                }
                let graph = build_graph(doc, &[si], vocabs)?;
                graphs.push(graph.clone());
                sentences.push(SentenceInstance {
                    doc: di,
                    sentence: si,
                    gold,
                    graph,
                });
            }
            let mut heads = Vec::with_capacity(doc.events.len());
            for ev in &doc.events {
                let node = graphs[ev.sentence].event_node(ev)?;
                heads.push((di, ev.sentence, node + 1));
            }
            event_heads.push(heads);
        }

        let mut graphs = Vec::new();
        let mut graph_index: BTreeMap<(usize, Vec<usize>), usize> = BTreeMap::new();
        let mut pairs = Vec::new();
        let mut skipped = 0;
        for (di, doc) in docs.iter().enumerate() {
            for (pi, pair) in doc.pairs.iter().enumerate() {
                let gold = scheme
                    .index(pair.label)
                    .ok_or_else(|| TrainError::LabelOutsideScheme(pair.label.name().to_string()))?;
                let (src, tgt) = (&doc.events[pair.source], &doc.events[pair.target]);
                let lo = src.sentence.min(tgt.sentence);
                let hi = src.sentence.max(tgt.sentence);
                let window: Vec<usize> = (lo..=hi).collect();
                let gi = match graph_index.get(&(di, window.clone())) {
                    Some(&g) => g,
                    None => {
                        graphs.push(build_graph(doc, &window, vocabs)?);
                        graph_index.insert((di, window.clone()), graphs.len() - 1);
                        graphs.len() - 1
                    }
                };
                let graph = &graphs[gi];
                let (s, t) = (graph.event_node(src)?, graph.event_node(tgt)?);
                if s == t || graph.node_count() < 2 {
                    skipped += 1;
                    continue;
                }
                pairs.push(PairInstance {
                    doc: di,
                    pair: pi,
                    source_event: pair.source,
                    target_event: pair.target,
                    window,
                    graph: gi,
                    context: graph.syntax_context(s, t)?,
                    label: pair.label,
                    gold,
                });
            }
        }
        Ok(Dataset {
            docs,
            vocabs: vocabs.clone(),
            scheme: scheme.clone(),
            sentences,
            graphs,
            pairs,
            skipped_pairs: skipped,
            event_heads,
        })
    }

    pub fn gold_pairs(&self) -> Vec<GoldPair> {
        self.pairs
            .iter()
            .map(|p| GoldPair {
                key: p.key(),
                label: p.label,
            })
            .collect()
    }

    /// Head token of the span `first..=last` in `sentence` of `doc`.
    pub fn span_head(&self, doc: usize, sentence: usize, first: usize, last: usize) -> Result<EventKey> {
        let inst = self
            .sentences
            .iter()
            .find(|s| s.doc == doc && s.sentence == sentence)
            .expect("sentence instance exists for every sentence");
        let node = inst.graph.event_node(&EventMention {
            id: String::new(),
            sentence,
            first,
            last,
        })?;
        Ok((doc, sentence, node + 1))
    }
}

/// Inverse-frequency class weights from a training split: event weights
/// over token tags normalized to sum 1, relation weights over pair labels
/// normalized to mean 1. Unseen classes count as seen once.
pub fn class_weights(data: &Dataset) -> ([f64; 2], Vec<f64>) {
    let mut tags = [0usize; 2];
    for s in &data.sentences {
        for &g in &s.gold {
            tags[g] += 1;
        }
    }
    let inv = |c: usize| 1.0 / c.max(1) as f64;
    let (a0, a1) = (inv(tags[0]), inv(tags[1]));
    let alpha = [a0 / (a0 + a1), a1 / (a0 + a1)];
    let mut counts = vec![0usize; data.scheme.len()];
    for p in &data.pairs {
        counts[p.gold] += 1;
    }
    let raw: Vec<f64> = counts.iter().map(|&c| inv(c)).collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let beta = raw.iter().map(|r| r / mean).collect();
    (alpha, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SynthConfig};

    fn synth(n: usize) -> Dataset {
        let mut cfg = SynthConfig::new(LabelScheme::matres());
        cfg.windows = n;
        let docs = generate_synthetic(&cfg, 3);
        let vocabs = Vocabularies::build(&docs);
        Dataset::build(docs, &vocabs, &cfg.scheme).unwrap()
    }

    #[test]
    fn one_pair_instance_per_window() {
        let d = synth(40);
        assert_eq!(d.pairs.len(), 40);
        assert_eq!(d.skipped_pairs, 0);
        assert_eq!(d.event_heads.iter().map(Vec::len).sum::<usize>(), 80);
        for p in &d.pairs {
            let g = &d.graphs[p.graph];
            assert_eq!(g.window(), p.window.as_slice());
            assert!(!p.context.phi.is_empty());
        }
        let tagged: usize = d.sentences.iter().map(|s| s.gold.iter().sum::<usize>()).sum();
        assert_eq!(tagged, 80);
    }

    #[test]
    fn weights_are_normalized() {
        let d = synth(60);
        let (alpha, beta) = class_weights(&d);
        assert!((alpha[0] + alpha[1] - 1.0).abs() < 1e-12);
        assert!(alpha[1] > alpha[0]);
        assert!((beta.iter().sum::<f64>() / beta.len() as f64 - 1.0).abs() < 1e-12);
        assert!(beta.iter().all(|b| *b > 0.0));
    }
}
