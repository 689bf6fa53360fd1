//! Dependency graphs over a one- or two-sentence window and the triple sets
//! derived from them.
//!
//! Nodes are numbered in surface order across the window. Every non-root
//! token contributes one `(head, relation, dependent)` triple; with two
//! sentences the root of the first sentence additionally governs the root of
//! the second through the reserved cross-sentence relation, so the window is
//! always a single tree with `nodes - 1` edges.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Document, EventMention, Vocabularies};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("window must cover one or two sentences, got {0:?}")]
    WindowSize(Vec<usize>),
    #[error("window sentences {0} and {1} are not adjacent")]
    NotAdjacent(usize, usize),
    #[error("sentence {0} does not exist")]
    NoSuchSentence(usize),
    #[error("unknown dependency relation {0:?}")]
    UnknownRelation(String),
    #[error("node {0} is not in the graph")]
    UnknownNode(usize),
    #[error("edges do not form a tree: {0}")]
    NotATree(String),
    #[error("event {0} lies outside the window")]
    EventOutsideWindow(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Triple {
    pub head: usize,
    pub rel: usize,
    pub dep: usize,
}

/// Position of a node in its document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeRef {
    pub sentence: usize,
    /// 1-based token index.
    pub token: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentenceGraph {
    nodes: Vec<NodeRef>,
    triples: Vec<Triple>,
    roots: Vec<usize>,
    window: Vec<usize>,
    incoming: Vec<Option<usize>>,
    outgoing: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

/// Pair-specific triple sets for syntax-guided attention.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntaxContext {
    pub source: usize,
    pub target: usize,
    /// Nodes on the path, from source to target, endpoints included.
    pub theta: Vec<usize>,
    /// Edge ids along the path, ordered from source to target.
    pub path_edges: Vec<usize>,
    /// Edge ids of the union of all neighbor triples of `theta` and the
    /// path, deduplicated and sorted by edge id.
    pub phi_edges: Vec<usize>,
    pub path: Vec<Triple>,
    pub phi: Vec<Triple>,
}

/// Builds the graph for `window` (one sentence, or two adjacent sentences) of `doc`.
pub fn build_graph(doc: &Document, window: &[usize], vocabs: &Vocabularies) -> Result<SentenceGraph, GraphError> {
    match window {
        [_] => {}
        [a, b] if *b == a + 1 => {}
        [a, b] => return Err(GraphError::NotAdjacent(*a, *b)),
        _ => return Err(GraphError::WindowSize(window.to_vec())),
    }
    let mut nodes = Vec::new();
    let mut triples = Vec::new();
    let mut roots = Vec::new();
    for &s in window {
        let sentence = doc.sentences.get(s).ok_or(GraphError::NoSuchSentence(s))?;
        let offset = nodes.len();
        for tok in sentence {
            nodes.push(NodeRef {
                sentence: s,
                token: tok.index,
            });
        }
        for tok in sentence {
            let dep = offset + tok.index - 1;
            if tok.head == 0 {
                if let Some(&prev_root) = roots.last() {
                    triples.push(Triple {
                        head: prev_root,
                        rel: vocabs.cross_sentence_id(),
                        dep,
                    });
                }
                roots.push(dep);
            } else {
                let rel = vocabs
                    .deprel_id(&tok.deprel)
                    .ok_or_else(|| GraphError::UnknownRelation(tok.deprel.clone()))?;
                triples.push(Triple {
                    head: offset + tok.head - 1,
                    rel,
                    dep,
                });
            }
        }
    }
    let mut g = SentenceGraph::from_triples(nodes.len(), triples)?;
    g.nodes = nodes;
    g.roots = roots;
    g.window = window.to_vec();
    Ok(g)
}

impl SentenceGraph {
    /// Builds a graph from raw triples, checking they form one tree over
    /// `node_count` nodes. Node refs default to sentence 0, token `id + 1`.
    pub fn from_triples(node_count: usize, triples: Vec<Triple>) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::NotATree("no nodes".into()));
        }
        if triples.len() + 1 != node_count {
            return Err(GraphError::NotATree(format!(
                "{} edges for {node_count} nodes",
                triples.len()
            )));
        }
        let mut incoming = vec![None; node_count];
        let mut outgoing = vec![Vec::new(); node_count];
        for (e, t) in triples.iter().enumerate() {
            if t.head >= node_count || t.dep >= node_count {
                return Err(GraphError::UnknownNode(t.head.max(t.dep)));
            }
            if t.head == t.dep {
                return Err(GraphError::NotATree(format!("self loop on node {}", t.head)));
            }
            if incoming[t.dep].replace(e).is_some() {
                return Err(GraphError::NotATree(format!("node {} has two heads", t.dep)));
            }
            outgoing[t.head].push(e);
        }
        let root = match incoming.iter().position(Option::is_none) {
            Some(r) => r,
            None => return Err(GraphError::NotATree("no root".into())),
        };
        let mut depth = vec![usize::MAX; node_count];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &e in &outgoing[u] {
                let v = triples[e].dep;
                depth[v] = depth[u] + 1;
                queue.push_back(v);
            }
        }
        if let Some(unreached) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(GraphError::NotATree(format!(
                "node {unreached} is not reachable from the root"
            )));
        }
        Ok(SentenceGraph {
            nodes: (0..node_count)
                .map(|i| NodeRef {
                    sentence: 0,
                    token: i + 1,
                })
                .collect(),
            triples,
            roots: vec![root],
            window: vec![0],
            incoming,
            outgoing,
            depth,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, edge: usize) -> Triple {
        self.triples[edge]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn window(&self) -> &[usize] {
        &self.window
    }

    pub fn node(&self, id: usize) -> NodeRef {
        self.nodes[id]
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn node_of(&self, sentence: usize, token: usize) -> Option<usize> {
        self.nodes
            .iter()
            .position(|n| n.sentence == sentence && n.token == token)
    }

    pub fn depth(&self, node: usize) -> usize {
        self.depth[node]
    }

    fn check(&self, node: usize) -> Result<(), GraphError> {
        if node < self.nodes.len() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(node))
        }
    }

    /// Edge ids of triples where `node` is the dependent or the head, sorted.
    pub fn incident_edges(&self, node: usize) -> Result<Vec<usize>, GraphError> {
        self.check(node)?;
        let mut edges: Vec<usize> = self.incoming[node]
            .into_iter()
            .chain(self.outgoing[node].iter().copied())
            .collect();
        edges.sort_unstable();
        Ok(edges)
    }

    /// `(N_in, N_out)`: triples with `node` as dependent and as head.
    pub fn neighbor_triples(&self, node: usize) -> Result<(Vec<Triple>, Vec<Triple>), GraphError> {
        self.check(node)?;
        let n_in = self.incoming[node].iter().map(|&e| self.triples[e]).collect();
        let n_out = self.outgoing[node].iter().map(|&e| self.triples[e]).collect();
        Ok((n_in, n_out))
    }

    /// Edge ids on the tree path from `s` to `t`, in traversal order.
    pub fn path_edges(&self, s: usize, t: usize) -> Result<Vec<usize>, GraphError> {
        self.check(s)?;
        self.check(t)?;
        let (mut a, mut b) = (s, t);
        let mut up = Vec::new();
        let mut down = Vec::new();
        while self.depth[a] > self.depth[b] {
            let e = self.incoming[a].expect("non-root has a head");
            up.push(e);
            a = self.triples[e].head;
        }
        while self.depth[b] > self.depth[a] {
            let e = self.incoming[b].expect("non-root has a head");
            down.push(e);
            b = self.triples[e].head;
        }
        while a != b {
            let ea = self.incoming[a].expect("non-root has a head");
            let eb = self.incoming[b].expect("non-root has a head");
            up.push(ea);
            down.push(eb);
            a = self.triples[ea].head;
            b = self.triples[eb].head;
        }
        down.reverse();
        up.extend(down);
        Ok(up)
    }

    /// Triples on the path from `s` to `t`, each kept in its stored
    /// head-to-dependent direction. Empty when `s == t`.
    pub fn path_triples(&self, s: usize, t: usize) -> Result<Vec<Triple>, GraphError> {
        Ok(self.path_edges(s, t)?.into_iter().map(|e| self.triples[e]).collect())
    }

    pub fn syntax_context(&self, s: usize, t: usize) -> Result<SyntaxContext, GraphError> {
        let path_edges = self.path_edges(s, t)?;
        let mut theta = vec![s];
        let mut cur = s;
        for &e in &path_edges {
            let tr = self.triples[e];
            cur = if tr.head == cur { tr.dep } else { tr.head };
            theta.push(cur);
        }
        let mut phi: BTreeSet<usize> = path_edges.iter().copied().collect();
        for &v in &theta {
            phi.extend(self.incident_edges(v)?);
        }
        let phi_edges: Vec<usize> = phi.into_iter().collect();
        Ok(SyntaxContext {
            source: s,
            target: t,
            theta,
            path: path_edges.iter().map(|&e| self.triples[e]).collect(),
            phi: phi_edges.iter().map(|&e| self.triples[e]).collect(),
            path_edges,
            phi_edges,
        })
    }

    /// Graph node standing for an event mention: the span token closest to
    /// the root, leftmost on ties.
    pub fn event_node(&self, event: &EventMention) -> Result<usize, GraphError> {
        (event.first..=event.last)
            .filter_map(|tok| self.node_of(event.sentence, tok))
            .min_by_key(|&n| (self.depth[n], n))
            .ok_or_else(|| GraphError::EventOutsideWindow(event.id.clone()))
    }

    /// One `head deprel dependent` line per triple, nodes as `id:form`.
    pub fn dump(&self, doc: &Document, vocabs: &Vocabularies) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let _ = writeln!(
                out,
                "{} {} {}",
                self.node_label(doc, t.head),
                vocabs.deprel(t.rel),
                self.node_label(doc, t.dep)
            );
        }
        out
    }

    fn node_label(&self, doc: &Document, id: usize) -> String {
        let n = self.nodes[id];
        let form = doc
            .sentences
            .get(n.sentence)
            .and_then(|s| s.get(n.token - 1))
            .map_or("?", |t| t.form.as_str());
        format!("{id}:{form}")
    }
}

impl SyntaxContext {
    pub fn dump(&self, graph: &SentenceGraph, doc: &Document, vocabs: &Vocabularies) -> String {
        let mut out = String::new();
        let line = |t: &Triple| {
            format!(
                "{} {} {}",
                graph.node_label(doc, t.head),
                vocabs.deprel(t.rel),
                graph.node_label(doc, t.dep)
            )
        };
        let _ = writeln!(out, "source {}", graph.node_label(doc, self.source));
        let _ = writeln!(out, "target {}", graph.node_label(doc, self.target));
        let theta: Vec<String> = self.theta.iter().map(|&v| graph.node_label(doc, v)).collect();
        let _ = writeln!(out, "theta {}", theta.join(" "));
        let _ = writeln!(out, "path {}", self.path.len());
        for t in &self.path {
            let _ = writeln!(out, "{}", line(t));
        }
        let _ = writeln!(out, "phi {}", self.phi.len());
        for t in &self.phi {
            let _ = writeln!(out, "{}", line(t));
        }
        out
    }
}
